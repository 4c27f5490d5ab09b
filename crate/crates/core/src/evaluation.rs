//! Quadrant error report, snapshot export, spectral probing and ablations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fcpinn_datagen::geometry::fmt_short;
use fcpinn_datagen::{DesignPoint, FlowRecord, FlowTable};
use image::{Rgb, RgbImage};

use crate::dataset::{inputs_of, SplitSpec};
use crate::model::{predict_rows, SurrogateParams, Variant};
use crate::training::{train, TrainConfig};
use crate::{CoreError, Result};

/// The four cells, in report column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrant {
    SeenCovered,
    UnseenCovered,
    SeenUncovered,
    UnseenUncovered,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::SeenCovered,
        Quadrant::UnseenCovered,
        Quadrant::SeenUncovered,
        Quadrant::UnseenUncovered,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Quadrant::SeenCovered => "Seen/Covered",
            Quadrant::UnseenCovered => "Unseen/Covered",
            Quadrant::SeenUncovered => "Seen/Uncovered",
            Quadrant::UnseenUncovered => "Unseen/Uncovered",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Quadrant::SeenCovered => "seen_covered",
            Quadrant::UnseenCovered => "unseen_covered",
            Quadrant::SeenUncovered => "seen_uncovered",
            Quadrant::UnseenUncovered => "unseen_uncovered",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn of(spec: &SplitSpec, r: &FlowRecord) -> Self {
        match (spec.is_seen(&r.design()), spec.is_covered(r.t)) {
            (true, true) => Quadrant::SeenCovered,
            (false, true) => Quadrant::UnseenCovered,
            (true, false) => Quadrant::SeenUncovered,
            (false, false) => Quadrant::UnseenUncovered,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignBreakdown {
    pub design: DesignPoint,
    pub counts: [usize; 4],
    pub mse: [Option<f64>; 4],
}

/// MSE per quadrant; `None` marks an empty cell.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadrantReport {
    pub mse: [Option<f64>; 4],
    pub counts: [usize; 4],
    pub per_design: Vec<DesignBreakdown>,
}

impl QuadrantReport {
    pub fn get(&self, q: Quadrant) -> Option<f64> {
        self.mse[q.index()]
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18}{:>14}{:>10}", "cell", "MSE", "records");
        for q in Quadrant::ALL {
            let _ = writeln!(s, "{:<18}{:>14}{:>10}", q.label(), fmt_cell(self.get(q)), self.counts[q.index()]);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<16}{:>14}{:>14}{:>14}{:>14}", "design", "S/C", "U/C", "S/U", "U/U");
        for d in &self.per_design {
            let key = format!("{{{}, {}}}", fmt_short(d.design.u_inlet), fmt_short(d.design.d_y));
            let _ = write!(s, "{key:<16}");
            for m in d.mse {
                let _ = write!(s, "{:>14}", fmt_cell(m));
            }
            let _ = writeln!(s);
        }
        s
    }

    /// `key = value` lines for machine consumption.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for q in Quadrant::ALL {
            let _ = writeln!(s, "{}.mse = {}", q.key(), fmt_cell(self.get(q)));
            let _ = writeln!(s, "{}.count = {}", q.key(), self.counts[q.index()]);
        }
        for d in &self.per_design {
            for q in Quadrant::ALL {
                if d.counts[q.index()] > 0 {
                    let _ = writeln!(s, "design.{}.{}.mse = {}", d.design.label(), q.key(), fmt_cell(d.mse[q.index()]));
                }
            }
        }
        s
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6e}"),
        None => "absent".to_string(),
    }
}

/// Summed squared error per record (the prediction-loss summand).
pub fn record_errors(params: &SurrogateParams, records: &[FlowRecord]) -> Result<Vec<f64>> {
    let pred = predict_rows(params, inputs_of(records).view())?;
    Ok(records
        .iter()
        .zip(pred.rows())
        .map(|(r, p)| (r.u - p[0]).powi(2) + (r.v - p[1]).powi(2) + (r.p - p[2]).powi(2))
        .collect())
}

pub fn quadrant_mse(params: &SurrogateParams, test: &FlowTable, spec: &SplitSpec) -> Result<QuadrantReport> {
    let errs = record_errors(params, &test.records)?;
    Ok(quadrant_report(&test.records, &errs, spec))
}

/// Aggregates per-record errors into the four cells.
pub fn quadrant_report(records: &[FlowRecord], errors: &[f64], spec: &SplitSpec) -> QuadrantReport {
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    let mut designs: Vec<(DesignPoint, [f64; 4], [usize; 4])> = Vec::new();
    for (r, &e) in records.iter().zip(errors) {
        let q = Quadrant::of(spec, r).index();
        sums[q] += e;
        counts[q] += 1;
        let d = r.design();
        let slot = match designs.iter().position(|(x, _, _)| x.same_as(&d)) {
            Some(i) => i,
            None => {
                designs.push((d, [0.0; 4], [0; 4]));
                designs.len() - 1
            }
        };
        designs[slot].1[q] += e;
        designs[slot].2[q] += 1;
    }
    let mean = |s: [f64; 4], c: [usize; 4]| -> [Option<f64>; 4] {
        std::array::from_fn(|k| (c[k] > 0).then(|| s[k] / c[k] as f64))
    };
    designs.sort_by(|a, b| {
        (a.0.u_inlet, a.0.d_y)
            .partial_cmp(&(b.0.u_inlet, b.0.d_y))
            .expect("finite designs")
    });
    QuadrantReport {
        mse: mean(sums, counts),
        counts,
        per_design: designs
            .into_iter()
            .map(|(design, s, c)| DesignBreakdown {
                design,
                counts: c,
                mse: mean(s, c),
            })
            .collect(),
    }
}

/// Ground truth, prediction and error grids for one design and time.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotTriptych {
    pub design: DesignPoint,
    pub requested_t: f64,
    pub t: f64,
    pub nx: usize,
    pub ny: usize,
    /// Indexed `[field][layer]` with fields `u, v, p` and layers
    /// truth, prediction, error; each grid row-major with rows along `x`.
    pub grids: [[Vec<f64>; 3]; 3],
    pub files: Vec<PathBuf>,
}

pub const FIELDS: [&str; 3] = ["u", "v", "p"];
pub const LAYERS: [&str; 3] = ["truth", "pred", "error"];

/// Writes the nine CSV grids, one PNG per field (truth, prediction and
/// error stacked top to bottom, symmetric limits from the truth) and a
/// metadata file. Off-grid times snap to the nearest stored stamp.
pub fn export_snapshot(
    params: &SurrogateParams,
    data: &FlowTable,
    design: DesignPoint,
    t: f64,
    out_dir: &Path,
) -> Result<SnapshotTriptych> {
    let of_design: Vec<&FlowRecord> = data.records.iter().filter(|r| r.design().same_as(&design)).collect();
    if of_design.is_empty() {
        return Err(CoreError::IncompleteDataset(design.label()));
    }
    let used = of_design
        .iter()
        .map(|r| r.t)
        .min_by(|a, b| (a - t).abs().partial_cmp(&(b - t).abs()).expect("finite stamps"))
        .expect("non-empty");
    let mut recs: Vec<FlowRecord> = of_design.into_iter().filter(|r| (r.t - used).abs() < 1e-9).copied().collect();
    recs.sort_by(|a, b| (a.y, a.x).partial_cmp(&(b.y, b.x)).expect("finite coordinates"));
    let mut xs: Vec<f64> = recs.iter().map(|r| r.x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let nx = xs.len();
    let ny = recs.len() / nx;
    if nx * ny != recs.len() {
        return Err(CoreError::Shape("snapshot records do not form a grid".into()));
    }
    let pred = predict_rows(params, inputs_of(&recs).view())?;
    let truth: [Vec<f64>; 3] = [
        recs.iter().map(|r| r.u).collect(),
        recs.iter().map(|r| r.v).collect(),
        recs.iter().map(|r| r.p).collect(),
    ];
    let grids: [[Vec<f64>; 3]; 3] = std::array::from_fn(|f| {
        let pr: Vec<f64> = pred.column(f).to_vec();
        let er: Vec<f64> = truth[f].iter().zip(&pr).map(|(a, b)| a - b).collect();
        [truth[f].clone(), pr, er]
    });

    fs::create_dir_all(out_dir)?;
    let stem = format!("snap_{}_{}_{}", fmt_short(design.u_inlet), fmt_short(design.d_y), fmt_short(used));
    let mut files = Vec::new();
    for (f, field) in FIELDS.iter().enumerate() {
        for (l, layer) in LAYERS.iter().enumerate() {
            let path = out_dir.join(format!("{stem}_{field}_{layer}.csv"));
            fs::write(&path, grid_csv(&grids[f][l], nx, ny))?;
            files.push(path);
        }
        let path = out_dir.join(format!("{stem}_{field}.png"));
        render_field(&grids[f], nx, ny).save(&path)?;
        files.push(path);
    }
    let meta = out_dir.join(format!("{stem}_meta.txt"));
    let mut m = String::new();
    let _ = writeln!(m, "u_inlet = {}", design.u_inlet);
    let _ = writeln!(m, "d_y = {}", design.d_y);
    let _ = writeln!(m, "requested_t = {t}");
    let _ = writeln!(m, "t = {used}");
    let _ = writeln!(m, "snapped = {}", (used - t).abs() > 1e-9);
    let _ = writeln!(m, "grid = {nx} x {ny}");
    fs::write(&meta, m)?;
    files.push(meta);
    Ok(SnapshotTriptych {
        design,
        requested_t: t,
        t: used,
        nx,
        ny,
        grids,
        files,
    })
}

/// One CSV line per ROI row (increasing `y`), one column per `x`.
fn grid_csv(g: &[f64], nx: usize, ny: usize) -> String {
    let mut s = String::new();
    for j in 0..ny {
        let row: Vec<String> = (0..nx).map(|i| g[j * nx + i].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Blue (negative) through white to red (positive) on `[-1, 1]`.
pub fn diverging_color(v: f64) -> [u8; 3] {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let c = |x: f64| (255.0 * x).round() as u8;
    if v < 0.0 {
        let a = 1.0 + v;
        [c(a), c(a), 255]
    } else {
        let a = 1.0 - v;
        [255, c(a), c(a)]
    }
}

const PX: u32 = 3;
const GAP: u32 = 4;

fn render_field(layers: &[Vec<f64>; 3], nx: usize, ny: usize) -> RgbImage {
    let lim = layers[0].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let (w, h) = (nx as u32 * PX, ny as u32 * PX);
    let mut img = RgbImage::from_pixel(w, 3 * h + 2 * GAP, Rgb([0, 0, 0]));
    for (l, g) in layers.iter().enumerate() {
        let top = l as u32 * (h + GAP);
        for j in 0..ny {
            for i in 0..nx {
                let px = Rgb(diverging_color(g[j * nx + i] / lim));
                // y grows upwards in the image
                let py = top + (ny - 1 - j) as u32 * PX;
                for dy in 0..PX {
                    for dx in 0..PX {
                        img.put_pixel(i as u32 * PX + dx, py + dy, px);
                    }
                }
            }
        }
    }
    img
}

/// Largest non-DC spectral peak of a uniformly sampled signal.
pub fn dominant_frequency(signal: &[f64], dt: f64) -> Result<f64> {
    fcpinn_datagen::spectrum::dominant_frequency(signal, dt).ok_or(CoreError::NoDominantFrequency)
}

/// One ablation variant.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationVariant {
    pub name: &'static str,
    pub variant: Variant,
    pub lambda: f64,
}

/// Full, No-FFM, Strong-Reg and No-Reg, derived from `base`.
pub fn ablation_variants(base: &TrainConfig, strong_lambda: f64) -> Result<Vec<AblationVariant>> {
    let full = base.lambda;
    if !(strong_lambda > full && full > 0.0) {
        return Err(CoreError::Config(format!(
            "ablation weights must satisfy strong ({strong_lambda}) > full ({full}) > 0"
        )));
    }
    Ok(vec![
        AblationVariant { name: "Full", variant: Variant::Full, lambda: full },
        AblationVariant { name: "No-FFM", variant: Variant::NoFfm, lambda: full },
        AblationVariant { name: "Strong-Reg", variant: Variant::Full, lambda: strong_lambda },
        AblationVariant { name: "No-Reg", variant: Variant::Full, lambda: 0.0 },
    ])
}

#[derive(Debug)]
pub struct AblationRow {
    pub name: &'static str,
    pub seed: u64,
    pub result: std::result::Result<QuadrantReport, String>,
}

#[derive(Debug, Default)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<14}{:>6}", "variant", "seed");
        for q in Quadrant::ALL {
            let _ = write!(s, "{:>18}", q.label());
        }
        let _ = writeln!(s);
        for r in &self.rows {
            let _ = write!(s, "{:<14}{:>6}", r.name, r.seed);
            match &r.result {
                Ok(rep) => {
                    for q in Quadrant::ALL {
                        let _ = write!(s, "{:>18}", fmt_cell(rep.get(q)));
                    }
                    let _ = writeln!(s);
                }
                Err(e) => {
                    let _ = writeln!(s, "  FAILED: {e}");
                }
            }
        }
        s
    }

    pub fn cell(&self, name: &str, seed: u64, q: Quadrant) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.name == name && r.seed == seed)
            .and_then(|r| r.result.as_ref().ok())
            .and_then(|rep| rep.get(q))
    }
}

/// Trains every variant for every seed and reports the quadrant MSE on
/// `test`. A failed run becomes a marked row.
pub fn run_ablations(
    base: &TrainConfig,
    strong_lambda: f64,
    seeds: &[u64],
    train_split: &FlowTable,
    validation: &FlowTable,
    test: &FlowTable,
    spec: &SplitSpec,
) -> Result<AblationTable> {
    let variants = ablation_variants(base, strong_lambda)?;
    let mut table = AblationTable::default();
    for v in &variants {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.arch.variant = v.variant;
            cfg.lambda = v.lambda;
            cfg.seed = seed;
            let result = train(&cfg, train_split, validation, None)
                .and_then(|out| quadrant_mse(&out.params, test, spec))
                .map_err(|e| e.to_string());
            table.rows.push(AblationRow { name: v.name, seed, result });
        }
    }
    Ok(table)
}
