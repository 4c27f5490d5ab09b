use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fcpinn_core::dataset::{build_splits, Splits};
use fcpinn_core::evaluation::{export_snapshot, quadrant_mse, run_ablations, AblationTable, QuadrantReport};
use fcpinn_core::model::{ffm_forward, Mode, SurrogateParams};
use fcpinn_core::physics::{shedding_frequency, FluidConstants};
use fcpinn_core::training::{train, validation_mse, write_history, TrainOutcome};
use fcpinn_core::{CoreError, DesignPoint, FlowTable};
use fcpinn_datagen::spectrum::{dominant_frequency, probe_series, WAKE_PROBE};
use fcpinn_datagen::taylor_green::observed_order;
use fcpinn_datagen::{simulate, taylor_green_validation, ChannelGeometry, RoiGrid, TaylorGreenConfig};

use crate::{CliError, RunConfig};

pub const INDEX_FILE: &str = "index.txt";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const HISTORY_FILE: &str = "history.txt";

pub fn design_file(d: &DesignPoint) -> String {
    format!("design_{}.fcds", d.label())
}

fn echo_config(cfg: &RunConfig, dir: &Path, name: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), cfg.to_text())?;
    Ok(())
}

/// One row of the dataset index.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexRow {
    pub design: DesignPoint,
    pub records: usize,
    pub file: String,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

fn index_text(rows: &[IndexRow]) -> String {
    let mut s = String::from("# u_inlet d_y records file status\n");
    for r in rows {
        let _ = writeln!(s, "{} {} {} {} {}", r.design.u_inlet, r.design.d_y, r.records, r.file, r.status);
    }
    s
}

pub fn read_index(data_dir: &Path) -> Result<Vec<IndexRow>, CliError> {
    let path = data_dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Runtime(format!("cannot read dataset index {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let parts: Vec<&str> = line.splitn(5, ' ').collect();
        let bad = || CliError::Runtime(format!("malformed index line `{line}`"));
        if parts.len() != 5 {
            return Err(bad());
        }
        rows.push(IndexRow {
            design: DesignPoint::new(parts[0].parse().map_err(|_| bad())?, parts[1].parse().map_err(|_| bad())?),
            records: parts[2].parse().map_err(|_| bad())?,
            file: parts[3].to_string(),
            status: parts[4].to_string(),
        });
    }
    Ok(rows)
}

/// Simulates every configured design and writes one dataset file per design
/// plus the index. Failed designs are flagged in the index and reported
/// after the remaining designs finish.
pub fn generate(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<Vec<IndexRow>, CliError> {
    cfg.validate()?;
    echo_config(cfg, &cfg.data_dir, "generate.cfg")?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for d in &cfg.split.designs {
        let geom = ChannelGeometry::new(d.d_y);
        let roi = RoiGrid::new(cfg.solver.roi_nx, cfg.solver.roi_ny, &geom);
        let file = design_file(d);
        let result = simulate(*d, &geom, &cfg.solver)
            .and_then(|snaps| FlowTable::from_snapshots(&[(*d, snaps)], &roi))
            .and_then(|table| table.write_binary(&cfg.data_dir.join(&file)).map(|_| table.len()));
        let row = match result {
            Ok(n) => IndexRow { design: *d, records: n, file, status: "ok".into() },
            Err(e) => {
                failures.push(format!("{}: {e}", d.label()));
                IndexRow { design: *d, records: 0, file, status: format!("failed: {e}") }
            }
        };
        progress(&format!("{} {} records {}", d.label(), row.records, row.status));
        rows.push(row);
    }
    fs::write(cfg.data_dir.join(INDEX_FILE), index_text(&rows))?;
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!("simulation failed for {}", failures.join("; "))));
    }
    Ok(rows)
}

/// Loads the records of every configured design, listing missing ones.
pub fn load_dataset(cfg: &RunConfig) -> Result<FlowTable, CliError> {
    let index = read_index(&cfg.data_dir)?;
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for d in &cfg.split.designs {
        match index.iter().find(|r| r.design.same_as(d) && r.status == "ok") {
            Some(row) => match FlowTable::read_binary(&cfg.data_dir.join(&row.file)) {
                Ok(t) => records.extend(t.records),
                Err(_) => missing.push(d.label()),
            },
            None => missing.push(d.label()),
        }
    }
    if !missing.is_empty() {
        return Err(CoreError::IncompleteDataset(missing.join(", ")).into());
    }
    Ok(FlowTable::new(records))
}

pub fn load_splits(cfg: &RunConfig) -> Result<Splits, CliError> {
    Ok(build_splits(&load_dataset(cfg)?, &cfg.split)?)
}

pub fn train_run(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    echo_config(cfg, &cfg.run_dir, "train.cfg")?;
    fs::write(cfg.run_dir.join("manifest.txt"), splits.manifest.to_text())?;
    let out = train(&cfg.train, &splits.train, &splits.validation, Some(&cfg.run_dir.join(CHECKPOINT_FILE)))?;
    write_history(&cfg.run_dir.join(HISTORY_FILE), &out.history)?;
    let summary = format!(
        "best_epoch = {}\nbest_val_mse = {:e}\nepochs_run = {}\nstopped_early = {}\n",
        out.best_epoch,
        out.best_val,
        out.history.len(),
        out.stopped_early
    );
    fs::write(cfg.run_dir.join("train_summary.txt"), summary)?;
    Ok(out)
}

/// Learned FFM frequencies next to the angular shedding frequency, per
/// training design.
pub fn frequency_table(params: &SurrogateParams, designs: &[DesignPoint], nu: f64) -> Result<Vec<(DesignPoint, f64, [f64; 5])>, CliError> {
    let c = FluidConstants::new(nu)?;
    designs
        .iter()
        .map(|d| {
            let target = 2.0 * std::f64::consts::PI * shedding_frequency(*d, &c)?;
            let f = ffm_forward(params, *d, Mode::Inference)?;
            Ok((*d, target, f.frequencies))
        })
        .collect()
}

pub struct Evaluation {
    pub report: QuadrantReport,
    pub validation_mse: f64,
    pub snapshots: Vec<PathBuf>,
}

pub fn evaluate(cfg: &RunConfig, snapshots: &[(f64, f64, f64)], mut warn: impl FnMut(&str)) -> Result<Evaluation, CliError> {
    cfg.validate()?;
    let ck = cfg.run_dir.join(CHECKPOINT_FILE);
    let params = SurrogateParams::load(&ck)
        .map_err(|e| CliError::Runtime(format!("cannot load checkpoint {}: {e}", ck.display())))?;
    params.check_compatible(&cfg.train.arch)?;
    let splits = load_splits(cfg)?;
    let report = quadrant_mse(&params, &splits.test, &cfg.split)?;
    let val = validation_mse(&params, &splits.validation)?;
    fs::create_dir_all(&cfg.run_dir)?;
    echo_config(cfg, &cfg.run_dir, "evaluate.cfg")?;
    fs::write(cfg.run_dir.join("report.txt"), report.to_text())?;
    let mut kv = report.to_key_value();
    let _ = writeln!(kv, "validation.mse = {val:e}");
    if cfg.train.arch.variant == fcpinn_core::Variant::Full {
        for (d, target, f) in frequency_table(&params, &cfg.split.train, cfg.train.nu)? {
            let list: Vec<String> = f.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(kv, "ffm.{}.target = {target:.6}", d.label());
            let _ = writeln!(kv, "ffm.{}.frequencies = {}", d.label(), list.join(","));
        }
    }
    fs::write(cfg.run_dir.join("report.kv"), kv)?;

    let mut files = Vec::new();
    let all = FlowTable::new(
        splits
            .train
            .records
            .iter()
            .chain(&splits.validation.records)
            .chain(&splits.test.records)
            .copied()
            .collect(),
    );
    for &(u, d, t) in snapshots {
        let snap = export_snapshot(&params, &all, DesignPoint::new(u, d), t, &cfg.run_dir.join("snapshots"))?;
        if (snap.t - t).abs() > 1e-9 {
            warn(&format!("t = {t} is not a stored stamp; using nearest stamp {}", snap.t));
        }
        files.extend(snap.files);
    }
    Ok(Evaluation {
        report,
        validation_mse: val,
        snapshots: files,
    })
}

/// Runs the four variants for `cfg.seeds` consecutive seeds starting at
/// `train.seed`.
pub fn ablate(cfg: &RunConfig) -> Result<AblationTable, CliError> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| cfg.train.seed + k).collect();
    let table = run_ablations(
        &cfg.train,
        cfg.strong_lambda,
        &seeds,
        &splits.train,
        &splits.validation,
        &splits.test,
        &cfg.split,
    )?;
    echo_config(cfg, &cfg.run_dir, "ablate.cfg")?;
    fs::write(cfg.run_dir.join("ablation.txt"), table.to_text())?;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverValidation {
    pub coarse_error: f64,
    pub fine_error: f64,
    pub order: f64,
    pub max_divergence: f64,
    /// `(measured, correlation)` for design (1.0, 0.1).
    pub shedding: Option<(f64, f64)>,
}

impl SolverValidation {
    pub fn passed(&self) -> bool {
        let tg = self.coarse_error < 0.02 && self.order >= 1.5;
        let shed = self.shedding.map_or(true, |(m, f)| ((m - f) / f).abs() <= 0.25);
        tg && shed
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "taylor_green.64.max_rel_error = {:e}", self.coarse_error);
        let _ = writeln!(s, "taylor_green.128.max_rel_error = {:e}", self.fine_error);
        let _ = writeln!(s, "taylor_green.order = {:.4}", self.order);
        let _ = writeln!(s, "taylor_green.max_divergence = {:e}", self.max_divergence);
        if let Some((m, f)) = self.shedding {
            let _ = writeln!(s, "shedding.measured = {m:.4}");
            let _ = writeln!(s, "shedding.correlation = {f:.4}");
        }
        let _ = writeln!(s, "passed = {}", self.passed());
        s
    }
}

/// Taylor-Green convergence at 64 and 128 cells, and optionally the wake
/// frequency of design (1.0, 0.1) under the configured solver.
pub fn validate_solver(cfg: &RunConfig, shedding: bool) -> Result<SolverValidation, CliError> {
    let base = TaylorGreenConfig::default();
    let coarse = taylor_green_validation(&base);
    let fine = taylor_green_validation(&TaylorGreenConfig { n: 128, ..base });
    let shed = if shedding {
        let d = DesignPoint::new(1.0, 0.1);
        let geom = ChannelGeometry::new(d.d_y);
        let roi = RoiGrid::new(cfg.solver.roi_nx, cfg.solver.roi_ny, &geom);
        let snaps = simulate(d, &geom, &cfg.solver)?;
        let sig = probe_series(&snaps, &roi, WAKE_PROBE.0, WAKE_PROBE.1);
        let m = dominant_frequency(&sig, cfg.solver.output_cadence).ok_or(CoreError::NoDominantFrequency)?;
        Some((m, shedding_frequency(d, &FluidConstants::new(cfg.solver.nu)?)?))
    } else {
        None
    };
    let v = SolverValidation {
        coarse_error: coarse.max_rel_error,
        fine_error: fine.max_rel_error,
        order: observed_order(&coarse, &fine),
        max_divergence: coarse.max_divergence.max(fine.max_divergence),
        shedding: shed,
    };
    echo_config(cfg, &cfg.run_dir, "validate-solver.cfg")?;
    fs::write(cfg.run_dir.join("solver_validation.txt"), v.to_text())?;
    Ok(v)
}
