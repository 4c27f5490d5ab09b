//! Flat `key = value` run configuration.
//!
//! Resolution order: preset defaults, then the config file, then command
//! line overrides. Unknown keys are rejected. [`RunConfig::to_text`] emits
//! every key, so the echoed file reproduces the run on its own.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fcpinn_core::dataset::SplitSpec;
use fcpinn_core::{Architecture, TrainConfig, Variant};
use fcpinn_datagen::geometry::fmt_short;
use fcpinn_datagen::solver::{InitialCondition, InletProfile, WallCondition};
use fcpinn_datagen::{all_designs, DesignPoint, SolverConfig};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "paper" | "paper-scale" => Ok(Preset::Paper),
            "desk" | "desk-scale" => Ok(Preset::Desk),
            other => Err(CliError::Config(format!("unknown preset `{other}` (expected paper or desk)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
    pub solver: SolverConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub strong_lambda: f64,
    pub seeds: usize,
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "paper | desk"),
    ("data_dir", "directory holding per-design dataset files and index.txt"),
    ("run_dir", "directory for checkpoints, histories and reports"),
    ("solver.nx", "cells along the channel"),
    ("solver.ny", "cells across the channel"),
    ("solver.dt", "time step"),
    ("solver.end_time", "simulated time span"),
    ("solver.output_cadence", "time between stored snapshots"),
    ("solver.inlet", "parabolic | uniform"),
    ("solver.walls", "no-slip | free-slip"),
    ("solver.initial", "rest | uniform"),
    ("solver.cylinder", "true | false"),
    ("solver.nu", "kinematic viscosity used by the solver"),
    ("solver.kick", "symmetry-breaking pulse amplitude (units of u_inlet^2/d_y)"),
    ("solver.kick_duration", "pulse duration"),
    ("solver.roi_nx", "ROI sample points along x"),
    ("solver.roi_ny", "ROI sample points along y"),
    ("split.designs", "all designs, `u:d` pairs separated by commas"),
    ("split.train", "training designs"),
    ("split.validation", "fully held-out validation designs"),
    ("split.validation_time", "training designs whose off-grid and late stamps go to validation"),
    ("split.covered_end", "end of the training time window"),
    ("split.train_step", "spacing of training time stamps"),
    ("train.variant", "full | no-ffm"),
    ("train.lambda", "PDE loss weight"),
    ("train.learning_rate", "Adam step size"),
    ("train.epochs", "epoch cap"),
    ("train.batch_size", "labeled samples per step"),
    ("train.collocation", "collocation points per step"),
    ("train.pde_on_labeled", "also penalise the residual at labeled points"),
    ("train.patience", "early-stopping patience in epochs"),
    ("train.seed", "initialisation, batching, dropout and collocation seed"),
    ("train.nu", "viscosity in the PDE residual"),
    ("train.mask_cylinder", "reject collocation points inside the cylinder"),
    ("model.ffm_layers", "FFM hidden layers"),
    ("model.ffm_width", "FFM hidden width"),
    ("model.trunk_layers", "trunk hidden layers"),
    ("model.trunk_width", "trunk hidden width"),
    ("model.dropout", "FFM dropout rate"),
    ("model.freq_bias_init", "seed frequency biases at the box-midpoint shedding frequency"),
    ("ablate.strong_lambda", "PDE weight of the Strong-Reg variant"),
    ("ablate.seeds", "seeds per ablation variant"),
];

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Paper => Self {
                preset,
                data_dir: PathBuf::from("data"),
                run_dir: PathBuf::from("run"),
                solver: SolverConfig::production(),
                split: SplitSpec::paper(),
                train: TrainConfig::paper(),
                strong_lambda: 0.1,
                seeds: 1,
            },
            Preset::Desk => Self {
                preset,
                solver: SolverConfig::desk(),
                split: SplitSpec::desk(),
                train: TrainConfig::desk(),
                seeds: 3,
                ..Self::preset(Preset::Paper)
            },
        }
    }

    /// Applies file text and then `overrides` on top of the preset they
    /// select (the last `preset` key wins; default desk).
    pub fn resolve(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut pairs = match file {
            Some(text) => parse_text(text)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        let preset = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| Preset::parse(v))
            .transpose()?
            .unwrap_or(Preset::Desk);
        let mut map = Self::preset(preset).to_map();
        for (k, v) in pairs {
            if !map.contains_key(&k) {
                return Err(CliError::Config(format!("unknown key `{k}`")));
            }
            map.insert(k, v);
        }
        let cfg = Self::from_map(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for d in &self.split.designs {
            if !d.in_design_box() {
                return Err(CliError::Config(format!(
                    "design ({}, {}) lies outside u_inlet in [0.8, 1.0], d_y in [0.08, 0.11]",
                    d.u_inlet, d.d_y
                )));
            }
        }
        for d in &self.split.designs {
            self.solver
                .validate(&fcpinn_datagen::ChannelGeometry::new(d.d_y))
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.seeds == 0 {
            return Err(CliError::Config("ablate.seeds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let s = &self.solver;
        let t = &self.train;
        let a = &t.arch;
        let entries: Vec<(&str, String)> = vec![
            ("preset", self.preset.name().into()),
            ("data_dir", self.data_dir.display().to_string()),
            ("run_dir", self.run_dir.display().to_string()),
            ("solver.nx", s.nx.to_string()),
            ("solver.ny", s.ny.to_string()),
            ("solver.dt", s.dt.to_string()),
            ("solver.end_time", s.end_time.to_string()),
            ("solver.output_cadence", s.output_cadence.to_string()),
            (
                "solver.inlet",
                match s.inlet {
                    InletProfile::Parabolic => "parabolic",
                    InletProfile::Uniform => "uniform",
                }
                .into(),
            ),
            (
                "solver.walls",
                match s.walls {
                    WallCondition::NoSlip => "no-slip",
                    WallCondition::FreeSlip => "free-slip",
                }
                .into(),
            ),
            (
                "solver.initial",
                match s.initial {
                    InitialCondition::Rest => "rest",
                    InitialCondition::Uniform => "uniform",
                }
                .into(),
            ),
            ("solver.cylinder", s.with_cylinder.to_string()),
            ("solver.nu", s.nu.to_string()),
            ("solver.kick", s.kick.to_string()),
            ("solver.kick_duration", s.kick_duration.to_string()),
            ("solver.roi_nx", s.roi_nx.to_string()),
            ("solver.roi_ny", s.roi_ny.to_string()),
            ("split.designs", designs_to_text(&self.split.designs)),
            ("split.train", designs_to_text(&self.split.train)),
            ("split.validation", designs_to_text(&self.split.validation_full)),
            ("split.validation_time", designs_to_text(&self.split.validation_time)),
            ("split.covered_end", self.split.covered_end.to_string()),
            ("split.train_step", self.split.train_step.to_string()),
            ("train.variant", a.variant.name().into()),
            ("train.lambda", t.lambda.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.collocation", t.collocation_per_step.to_string()),
            ("train.pde_on_labeled", t.pde_on_labeled.to_string()),
            ("train.patience", t.patience.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.nu", t.nu.to_string()),
            ("train.mask_cylinder", t.collocation.mask_cylinder.to_string()),
            ("model.ffm_layers", a.ffm_layers.to_string()),
            ("model.ffm_width", a.ffm_width.to_string()),
            ("model.trunk_layers", a.trunk_layers.to_string()),
            ("model.trunk_width", a.trunk_width.to_string()),
            ("model.dropout", a.dropout.to_string()),
            ("model.freq_bias_init", a.freq_bias_init.to_string()),
            ("ablate.strong_lambda", self.strong_lambda.to_string()),
            ("ablate.seeds", self.seeds.to_string()),
        ];
        debug_assert_eq!(entries.len(), KEYS.len());
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn from_map(m: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let g = |k: &str| -> Result<&str, CliError> {
            m.get(k)
                .map(String::as_str)
                .ok_or_else(|| CliError::Config(format!("missing key `{k}`")))
        };
        let preset = Preset::parse(g("preset")?)?;
        let solver = SolverConfig {
            nx: num(g("solver.nx")?, "solver.nx")?,
            ny: num(g("solver.ny")?, "solver.ny")?,
            dt: num(g("solver.dt")?, "solver.dt")?,
            end_time: num(g("solver.end_time")?, "solver.end_time")?,
            output_cadence: num(g("solver.output_cadence")?, "solver.output_cadence")?,
            inlet: match g("solver.inlet")? {
                "parabolic" => InletProfile::Parabolic,
                "uniform" => InletProfile::Uniform,
                v => return Err(bad_value("solver.inlet", v)),
            },
            walls: match g("solver.walls")? {
                "no-slip" => WallCondition::NoSlip,
                "free-slip" => WallCondition::FreeSlip,
                v => return Err(bad_value("solver.walls", v)),
            },
            initial: match g("solver.initial")? {
                "rest" => InitialCondition::Rest,
                "uniform" => InitialCondition::Uniform,
                v => return Err(bad_value("solver.initial", v)),
            },
            with_cylinder: num(g("solver.cylinder")?, "solver.cylinder")?,
            nu: num(g("solver.nu")?, "solver.nu")?,
            kick: num(g("solver.kick")?, "solver.kick")?,
            kick_duration: num(g("solver.kick_duration")?, "solver.kick_duration")?,
            roi_nx: num(g("solver.roi_nx")?, "solver.roi_nx")?,
            roi_ny: num(g("solver.roi_ny")?, "solver.roi_ny")?,
        };
        let split = SplitSpec {
            designs: designs_from_text(g("split.designs")?)?,
            train: designs_from_text(g("split.train")?)?,
            validation_full: designs_from_text(g("split.validation")?)?,
            validation_time: designs_from_text(g("split.validation_time")?)?,
            covered_end: num(g("split.covered_end")?, "split.covered_end")?,
            train_step: num(g("split.train_step")?, "split.train_step")?,
        };
        let arch = Architecture {
            variant: Variant::parse(g("train.variant")?).ok_or_else(|| bad_value("train.variant", g("train.variant").unwrap()))?,
            ffm_layers: num(g("model.ffm_layers")?, "model.ffm_layers")?,
            ffm_width: num(g("model.ffm_width")?, "model.ffm_width")?,
            trunk_layers: num(g("model.trunk_layers")?, "model.trunk_layers")?,
            trunk_width: num(g("model.trunk_width")?, "model.trunk_width")?,
            dropout: num(g("model.dropout")?, "model.dropout")?,
            freq_bias_init: num(g("model.freq_bias_init")?, "model.freq_bias_init")?,
        };
        let mut train = TrainConfig {
            arch,
            lambda: num(g("train.lambda")?, "train.lambda")?,
            learning_rate: num(g("train.learning_rate")?, "train.learning_rate")?,
            epochs: num(g("train.epochs")?, "train.epochs")?,
            batch_size: num(g("train.batch_size")?, "train.batch_size")?,
            collocation_per_step: num(g("train.collocation")?, "train.collocation")?,
            pde_on_labeled: num(g("train.pde_on_labeled")?, "train.pde_on_labeled")?,
            patience: num(g("train.patience")?, "train.patience")?,
            seed: num(g("train.seed")?, "train.seed")?,
            nu: num(g("train.nu")?, "train.nu")?,
            ..TrainConfig::desk()
        };
        train.collocation.mask_cylinder = num(g("train.mask_cylinder")?, "train.mask_cylinder")?;
        Ok(Self {
            preset,
            data_dir: PathBuf::from(g("data_dir")?),
            run_dir: PathBuf::from(g("run_dir")?),
            solver,
            split,
            train,
            strong_lambda: num(g("ablate.strong_lambda")?, "ablate.strong_lambda")?,
            seeds: num(g("ablate.seeds")?, "ablate.seeds")?,
        })
    }

    /// The resolved configuration, one documented key per line.
    pub fn to_text(&self) -> String {
        let map = self.to_map();
        let mut s = String::from("# resolved configuration\n");
        for (k, doc) in KEYS {
            s.push_str(&format!("# {doc}\n{k} = {}\n", map[*k]));
        }
        s
    }
}

fn bad_value(key: &str, v: &str) -> CliError {
    CliError::Config(format!("invalid value `{v}` for `{key}`"))
}

fn num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| bad_value(key, v))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_pair(line).map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn parse_pair(s: &str) -> Result<(String, String), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected key=value, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn designs_to_text(ds: &[DesignPoint]) -> String {
    ds.iter()
        .map(|d| format!("{}:{}", fmt_short(d.u_inlet), fmt_short(d.d_y)))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn designs_from_text(s: &str) -> Result<Vec<DesignPoint>, CliError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if s == "all" {
        return Ok(all_designs());
    }
    s.split(',')
        .map(|item| {
            let (u, d) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("design `{item}` is not `u:d`")))?;
            Ok(DesignPoint::new(num(u, "design")?, num(d, "design")?))
        })
        .collect()
}
