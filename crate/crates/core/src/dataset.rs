//! Train/validation/test splits, minibatches and collocation sampling.

use std::collections::HashSet;
use std::fmt::Write as _;

use fcpinn_datagen::geometry::{all_designs, fmt_short, ChannelGeometry};
use fcpinn_datagen::{DesignPoint, FlowRecord, FlowTable};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::INPUT_BOUNDS;
use crate::{CoreError, Result};

/// Tolerance for matching time stamps to grids.
pub const TIME_TOL: f64 = 1e-9;

/// Which designs go where.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    /// Every design the dataset must contain.
    pub designs: Vec<DesignPoint>,
    /// Designs contributing covered, on-grid stamps to training.
    pub train: Vec<DesignPoint>,
    /// Designs whose records all go to validation.
    pub validation_full: Vec<DesignPoint>,
    /// Training designs whose non-training stamps go to validation instead
    /// of test.
    pub validation_time: Vec<DesignPoint>,
    /// End of the covered time span.
    pub covered_end: f64,
    /// Spacing of the training time grid.
    pub train_step: f64,
}

impl SplitSpec {
    /// Nine training designs plus the time-complement design, one fully
    /// held-out validation design, test everything else.
    pub fn paper() -> Self {
        let d = DesignPoint::new;
        Self {
            designs: all_designs(),
            train: vec![
                d(0.8, 0.08),
                d(0.8, 0.09),
                d(0.8, 0.10),
                d(0.9, 0.08),
                d(0.9, 0.10),
                d(0.9, 0.11),
                d(1.0, 0.08),
                d(1.0, 0.09),
                d(1.0, 0.11),
            ],
            validation_full: vec![d(0.9, 0.09)],
            validation_time: vec![d(0.9, 0.10)],
            covered_end: 5.0,
            train_step: 0.1,
        }
    }

    /// Four corner-ish training designs, validation on `(0.9, 0.09)`.
    pub fn desk() -> Self {
        let d = DesignPoint::new;
        Self {
            train: vec![d(0.8, 0.08), d(0.8, 0.10), d(1.0, 0.08), d(1.0, 0.11)],
            validation_time: Vec::new(),
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let has = |set: &[DesignPoint], d: &DesignPoint| set.iter().any(|e| e.same_as(d));
        for d in self.train.iter().chain(&self.validation_full).chain(&self.validation_time) {
            if !has(&self.designs, d) {
                return Err(CoreError::Config(format!("design {} is not in the design list", d.label())));
            }
        }
        for d in &self.validation_full {
            if has(&self.train, d) {
                return Err(CoreError::SplitIntegrity(format!(
                    "design {} is both a training and a full validation design",
                    d.label()
                )));
            }
        }
        for d in &self.validation_time {
            if !has(&self.train, d) {
                return Err(CoreError::Config(format!(
                    "time-complement design {} must also be a training design",
                    d.label()
                )));
            }
        }
        if !(self.train_step > 0.0) || !(self.covered_end > 0.0) {
            return Err(CoreError::Config("time grid parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn is_seen(&self, d: &DesignPoint) -> bool {
        self.train.iter().any(|e| e.same_as(d))
    }

    pub fn is_covered(&self, t: f64) -> bool {
        t <= self.covered_end + TIME_TOL
    }

    pub fn on_train_grid(&self, t: f64) -> bool {
        let k = (t / self.train_step).round();
        (t - k * self.train_step).abs() < TIME_TOL
    }

    pub fn assign(&self, r: &FlowRecord) -> SplitKind {
        let d = r.design();
        let has = |set: &[DesignPoint]| set.iter().any(|e| e.same_as(&d));
        if has(&self.validation_full) {
            return SplitKind::Validation;
        }
        if has(&self.train) {
            if self.is_covered(r.t) && self.on_train_grid(r.t) {
                return SplitKind::Train;
            }
            if has(&self.validation_time) {
                return SplitKind::Validation;
            }
        }
        SplitKind::Test
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub design: DesignPoint,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

/// Per-design record counts of each split.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn totals(&self) -> (usize, usize, usize) {
        self.rows.iter().fold((0, 0, 0), |(a, b, c), r| (a + r.train, b + r.validation, c + r.test))
    }

    pub fn row(&self, d: &DesignPoint) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.design.same_as(d))
    }

    /// Plain-text table; zero cells print as `/`.
    pub fn to_text(&self) -> String {
        let cell = |n: usize| if n == 0 { "/".to_string() } else { n.to_string() };
        let mut s = String::new();
        let _ = writeln!(s, "{:<16}{:>12}{:>12}{:>12}", "{u_inlet, d_y}", "Train", "Validation", "Test");
        for r in &self.rows {
            let key = format!("{{{}, {}}}", fmt_short(r.design.u_inlet), fmt_short(r.design.d_y));
            let _ = writeln!(s, "{:<16}{:>12}{:>12}{:>12}", key, cell(r.train), cell(r.validation), cell(r.test));
        }
        let (a, b, c) = self.totals();
        let _ = writeln!(s, "{:<16}{:>12}{:>12}{:>12}", "Sum", a, b, c);
        let _ = writeln!(
            s,
            "# validation designs contribute every stamp, including the uncovered span"
        );
        s
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: FlowTable,
    pub validation: FlowTable,
    pub test: FlowTable,
    pub manifest: Manifest,
}

fn record_key(r: &FlowRecord) -> [i64; 5] {
    let q = |v: f64| (v * 1e6).round() as i64;
    [q(r.x), q(r.y), q(r.t), q(r.u_inlet), q(r.d_y)]
}

/// Assigns every record of `table` to one split.
pub fn build_splits(table: &FlowTable, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let missing: Vec<String> = spec
        .designs
        .iter()
        .filter(|d| !table.records.iter().any(|r| r.design().same_as(d)))
        .map(|d| d.label())
        .collect();
    if !missing.is_empty() {
        return Err(CoreError::IncompleteDataset(missing.join(", ")));
    }
    let mut rows: Vec<ManifestRow> = spec
        .designs
        .iter()
        .map(|&design| ManifestRow {
            design,
            train: 0,
            validation: 0,
            test: 0,
        })
        .collect();
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for r in &table.records {
        let row = rows
            .iter_mut()
            .find(|m| m.design.same_as(&r.design()))
            .ok_or_else(|| {
                CoreError::SplitIntegrity(format!("record of unlisted design {}", r.design().label()))
            })?;
        match spec.assign(r) {
            SplitKind::Train => {
                row.train += 1;
                train.push(*r);
            }
            SplitKind::Validation => {
                row.validation += 1;
                validation.push(*r);
            }
            SplitKind::Test => {
                row.test += 1;
                test.push(*r);
            }
        }
    }
    let splits = Splits {
        train: FlowTable::new(train),
        validation: FlowTable::new(validation),
        test: FlowTable::new(test),
        manifest: Manifest { rows },
    };
    check_disjoint(&splits)?;
    Ok(splits)
}

/// Errors if any `(x, y, t, design)` key occurs in two splits.
pub fn check_disjoint(s: &Splits) -> Result<()> {
    let keys = |t: &FlowTable| t.records.iter().map(record_key).collect::<HashSet<_>>();
    let (a, b, c) = (keys(&s.train), keys(&s.validation), keys(&s.test));
    for (name, x, y) in [("train/validation", &a, &b), ("train/test", &a, &c), ("validation/test", &b, &c)] {
        if let Some(k) = x.intersection(y).next() {
            return Err(CoreError::SplitIntegrity(format!(
                "{name} share the record key {k:?} (coordinates scaled by 1e6)"
            )));
        }
    }
    Ok(())
}

/// `n x 5` matrix of `(x, y, t, u_inlet, d_y)`.
pub fn inputs_of(records: &[FlowRecord]) -> Array2<f64> {
    Array2::from_shape_fn((records.len(), 5), |(i, k)| {
        let r = &records[i];
        [r.x, r.y, r.t, r.u_inlet, r.d_y][k]
    })
}

/// `n x 3` matrix of `(u, v, p)`.
pub fn labels_of(records: &[FlowRecord]) -> Array2<f64> {
    Array2::from_shape_fn((records.len(), 3), |(i, k)| {
        let r = &records[i];
        [r.u, r.v, r.p][k]
    })
}

/// One labeled minibatch.
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Array2<f64>,
}

/// One epoch over a split in a seeded random order.
pub struct Minibatches<'a> {
    records: &'a [FlowRecord],
    order: Vec<usize>,
    pos: usize,
    size: usize,
}

impl<'a> Iterator for Minibatches<'a> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.size).min(self.order.len());
        let picked: Vec<FlowRecord> = self.order[self.pos..end].iter().map(|&i| self.records[i]).collect();
        self.pos = end;
        Some(Batch {
            inputs: inputs_of(&picked),
            labels: labels_of(&picked),
        })
    }
}

pub fn minibatches(split: &FlowTable, batch_size: usize, seed: u64) -> Result<Minibatches<'_>> {
    if batch_size == 0 {
        return Err(CoreError::Config("batch size must be at least 1".into()));
    }
    if split.is_empty() {
        return Err(CoreError::EmptySplit("cannot iterate over an empty split".into()));
    }
    let mut order: Vec<usize> = (0..split.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Minibatches {
        records: &split.records,
        order,
        pos: 0,
        size: batch_size,
    })
}

/// Box for unlabeled residual points, in the same coordinates as the
/// records.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationDomain {
    pub bounds: [(f64, f64); 5],
    /// Reject points that fall inside the cylinder of their `d_y`.
    pub mask_cylinder: bool,
}

impl Default for CollocationDomain {
    fn default() -> Self {
        Self {
            bounds: INPUT_BOUNDS,
            mask_cylinder: false,
        }
    }
}

impl CollocationDomain {
    fn inside_cylinder(&self, p: &[f64; 5]) -> bool {
        let g = ChannelGeometry::new(p[4]);
        let (ox, oy) = g.roi_origin();
        g.inside_cylinder(p[0] + ox, p[1] + oy)
    }
}

/// `n` points drawn uniformly from the box (`n x 5`).
pub fn sample_collocation_with(n: usize, domain: &CollocationDomain, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::zeros((n, 5));
    for mut row in out.rows_mut() {
        loop {
            let p: [f64; 5] = std::array::from_fn(|k| {
                let (lo, hi) = domain.bounds[k];
                lo + (hi - lo) * rng.gen::<f64>()
            });
            if domain.mask_cylinder && domain.inside_cylinder(&p) {
                continue;
            }
            for k in 0..5 {
                row[k] = p[k];
            }
            break;
        }
    }
    out
}

pub fn sample_collocation(n: usize, domain: &CollocationDomain, seed: u64) -> Array2<f64> {
    sample_collocation_with(n, domain, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: f64, d: f64, t: f64) -> FlowRecord {
        FlowRecord {
            x: 0.0,
            y: 0.0,
            t,
            u_inlet: u,
            d_y: d,
            u: 0.0,
            v: 0.0,
            p: 0.0,
        }
    }

    #[test]
    fn assignment_follows_the_table() {
        let s = SplitSpec::paper();
        assert_eq!(s.assign(&rec(0.9, 0.09, 1.0)), SplitKind::Validation);
        assert_eq!(s.assign(&rec(0.9, 0.09, 5.5)), SplitKind::Validation);
        assert_eq!(s.assign(&rec(0.8, 0.11, 1.0)), SplitKind::Test);
        assert_eq!(s.assign(&rec(0.9, 0.10, 2.3)), SplitKind::Train);
        assert_eq!(s.assign(&rec(0.9, 0.10, 2.35)), SplitKind::Validation);
        assert_eq!(s.assign(&rec(0.8, 0.08, 5.5)), SplitKind::Test);
        assert_eq!(s.assign(&rec(0.8, 0.08, 5.0)), SplitKind::Train);
        assert_eq!(s.assign(&rec(0.8, 0.08, 4.95)), SplitKind::Test);
    }

    #[test]
    fn partial_batch_is_emitted() {
        let t = FlowTable::new((0..10).map(|k| rec(0.8, 0.08, k as f64)).collect());
        let sizes: Vec<usize> = minibatches(&t, 4, 1).unwrap().map(|b| b.inputs.nrows()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert!(minibatches(&FlowTable::default(), 4, 1).is_err());
    }

    #[test]
    fn masking_rejects_nothing_in_the_roi() {
        // The ROI starts one half-diameter behind the cylinder, so masking
        // never triggers with the default geometry.
        let dom = CollocationDomain {
            mask_cylinder: true,
            ..Default::default()
        };
        let a = sample_collocation(500, &dom, 3);
        let b = sample_collocation(500, &CollocationDomain::default(), 3);
        assert_eq!(a, b);
    }
}
