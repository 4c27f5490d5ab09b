use std::collections::HashMap;

use fcpinn_core::dataset::{
    build_splits, inputs_of, minibatches, sample_collocation, sample_collocation_with, CollocationDomain, SplitSpec,
};
use fcpinn_core::evaluation::{
    dominant_frequency, export_snapshot, quadrant_mse, quadrant_report, record_errors, Quadrant,
};
use fcpinn_core::model::{Architecture, SurrogateParams};
use fcpinn_core::{CoreError, DesignPoint, FlowRecord, FlowTable};
use fcpinn_datagen::all_designs;
use fcpinn_datagen::solver::stamp;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const NX: usize = 3;
const NY: usize = 2;
const STAMPS: usize = 121;

fn full_table() -> FlowTable {
    let mut recs = Vec::new();
    for d in all_designs() {
        for k in 0..STAMPS {
            let t = stamp(k, 0.05);
            for j in 0..NY {
                for i in 0..NX {
                    let (x, y) = (0.75 * i as f64, 0.3 * j as f64);
                    recs.push(FlowRecord {
                        x,
                        y,
                        t,
                        u_inlet: d.u_inlet,
                        d_y: d.d_y,
                        u: d.u_inlet + 0.1 * (3.0 * t + x).sin(),
                        v: 0.05 * (2.0 * t).cos() * y,
                        p: -x * d.d_y,
                    });
                }
            }
        }
    }
    FlowTable::new(recs)
}

/// Which split columns are non-empty for each design, `T`/`V`/`E` for
/// train, validation and test.
fn pattern(spec: &SplitSpec) -> HashMap<String, String> {
    let s = build_splits(&full_table(), spec).unwrap();
    s.manifest
        .rows
        .iter()
        .map(|r| {
            let mut p = String::new();
            for (n, c) in [(r.train, 'T'), (r.validation, 'V'), (r.test, 'E')] {
                if n > 0 {
                    p.push(c);
                }
            }
            (r.design.label(), p)
        })
        .collect()
}

#[test]
fn paper_split_matches_the_published_pattern() {
    let p = pattern(&SplitSpec::paper());
    let expected = [
        ("0.8_0.08", "TE"),
        ("0.8_0.09", "TE"),
        ("0.8_0.1", "TE"),
        ("0.8_0.11", "E"),
        ("0.9_0.08", "TE"),
        ("0.9_0.09", "V"),
        ("0.9_0.1", "TV"),
        ("0.9_0.11", "TE"),
        ("1_0.08", "TE"),
        ("1_0.09", "TE"),
        ("1_0.1", "E"),
        ("1_0.11", "TE"),
    ];
    for (d, e) in expected {
        assert_eq!(p[d], e, "design {d}");
    }
}

#[test]
fn grid_determined_counts() {
    let per_stamp = NX * NY;
    // 51 stamps on the training grid in [0, 5], 70 others
    let (tr, off) = (51 * per_stamp, 70 * per_stamp);
    let all = STAMPS * per_stamp;

    let s = build_splits(&full_table(), &SplitSpec::paper()).unwrap();
    assert_eq!(s.manifest.totals(), (9 * tr, all + off, 8 * off + 2 * all));
    let s = build_splits(&full_table(), &SplitSpec::desk()).unwrap();
    assert_eq!(s.manifest.totals(), (4 * tr, all, 4 * off + 7 * all));
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), s.manifest.totals());
    let text = s.manifest.to_text();
    assert!(text.contains("Sum"));
    assert!(text.lines().any(|l| l.starts_with("{0.9, 0.09}") && l.contains('/')));
}

#[test]
fn splits_are_disjoint_and_training_stamps_are_on_grid() {
    for spec in [SplitSpec::paper(), SplitSpec::desk()] {
        let s = build_splits(&full_table(), &spec).unwrap();
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), full_table().len());
        for r in &s.train.records {
            assert!(r.t <= 5.0 + 1e-9);
            let k = (r.t / 0.1).round();
            assert!((r.t - 0.1 * k).abs() < 1e-9);
            assert!(spec.is_seen(&r.design()));
        }
        fcpinn_core::dataset::check_disjoint(&s).unwrap();
    }
}

#[test]
fn duplicated_record_is_a_split_integrity_error() {
    let mut t = full_table();
    let mut dup = t.records[0];
    dup.u += 1.0;
    t.records.push(dup);
    // same key lands in the same split, so this stays legal ...
    build_splits(&t, &SplitSpec::paper()).unwrap();
    // ... but a missing design is reported by name
    let only: Vec<FlowRecord> = t.records.into_iter().filter(|r| r.u_inlet < 0.95).collect();
    match build_splits(&FlowTable::new(only), &SplitSpec::paper()) {
        Err(CoreError::IncompleteDataset(m)) => assert!(m.contains("1_0.08")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn minibatches_cover_the_split_exactly_once() {
    let t = full_table();
    let mut seen: Vec<(i64, i64, i64, i64, i64)> = minibatches(&t, 97, 5)
        .unwrap()
        .flat_map(|b| {
            b.inputs
                .rows()
                .into_iter()
                .map(|r| {
                    let q = |v: f64| (v * 1e6).round() as i64;
                    (q(r[0]), q(r[1]), q(r[2]), q(r[3]), q(r[4]))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut all: Vec<_> = inputs_of(&t.records)
        .rows()
        .into_iter()
        .map(|r| {
            let q = |v: f64| (v * 1e6).round() as i64;
            (q(r[0]), q(r[1]), q(r[2]), q(r[3]), q(r[4]))
        })
        .collect();
    seen.sort();
    all.sort();
    assert_eq!(seen, all);
    let a: Vec<_> = minibatches(&t, 97, 5).unwrap().map(|b| b.labels).collect();
    let b: Vec<_> = minibatches(&t, 97, 5).unwrap().map(|b| b.labels).collect();
    assert_eq!(a, b);
}

#[test]
fn collocation_is_uniform_over_the_box() {
    let dom = CollocationDomain::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 1_000_000;
    let pts = sample_collocation_with(n, &dom, &mut rng);
    let mean_x = pts.column(0).sum() / n as f64;
    assert!((mean_x - 0.75).abs() < 0.002, "{mean_x}");
    for (k, (lo, hi)) in dom.bounds.iter().enumerate() {
        assert!(pts.column(k).iter().all(|v| v >= lo && v <= hi));
    }
    assert_eq!(sample_collocation(10, &dom, 1), sample_collocation(10, &dom, 1));
}

fn perfect_errors(t: &FlowTable) -> Vec<f64> {
    vec![0.0; t.len()]
}

#[test]
fn perfect_predictor_scores_zero_and_cells_partition_the_test_set() {
    let spec = SplitSpec::desk();
    let s = build_splits(&full_table(), &spec).unwrap();
    let rep = quadrant_report(&s.test.records, &perfect_errors(&s.test), &spec);
    assert_eq!(rep.total_count(), s.test.len());
    // off-grid stamps of training designs fill the Seen/Covered cell
    for q in Quadrant::ALL {
        assert_eq!(rep.get(q), Some(0.0), "{}", q.label());
    }
    let r = FlowRecord { x: 0.1, y: 0.1, t: 5.5, u_inlet: 0.8, d_y: 0.08, u: 0.0, v: 0.0, p: 0.0 };
    assert_eq!(Quadrant::of(&spec, &r), Quadrant::SeenUncovered);
}

#[test]
fn empty_cells_are_absent_not_zero() {
    let spec = SplitSpec::paper();
    let r = FlowRecord { x: 0.1, y: 0.1, t: 1.05, u_inlet: 0.8, d_y: 0.11, u: 1.0, v: 0.0, p: 0.0 };
    let rep = quadrant_report(&[r], &[2.5], &spec);
    assert_eq!(rep.get(Quadrant::UnseenCovered), Some(2.5));
    assert_eq!(rep.get(Quadrant::SeenCovered), None);
    assert!(rep.to_text().contains("absent"));
    assert!(rep.to_key_value().contains("seen_covered.mse = absent"));
}

#[test]
fn zero_network_report_matches_label_energy() {
    let spec = SplitSpec::desk();
    let s = build_splits(&full_table(), &spec).unwrap();
    let p = SurrogateParams::zeros(Architecture::desk()).unwrap();
    let rep = quadrant_mse(&p, &s.test, &spec).unwrap();
    let errs = record_errors(&p, &s.test.records).unwrap();
    for (r, e) in s.test.records.iter().zip(&errs) {
        assert_eq!(*e, r.u * r.u + r.v * r.v + r.p * r.p);
    }
    assert_eq!(rep, quadrant_report(&s.test.records, &errs, &spec));
}

#[test]
fn snapshot_export_zero_network_and_determinism() {
    let t = full_table();
    let p = SurrogateParams::zeros(Architecture::desk()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let d = DesignPoint::new(1.0, 0.11);
    let snap = export_snapshot(&p, &t, d, 4.65, dir.path()).unwrap();
    assert_eq!((snap.nx, snap.ny), (NX, NY));
    assert_eq!(snap.t, 4.65);
    for f in 0..3 {
        assert!(snap.grids[f][1].iter().all(|&v| v == 0.0));
        assert_eq!(snap.grids[f][2], snap.grids[f][0]);
    }
    let csv = dir.path().join("snap_1_0.11_4.65_u_error.csv");
    let first = std::fs::read(&csv).unwrap();
    let img = image::open(dir.path().join("snap_1_0.11_4.65_u.png")).unwrap();
    assert_eq!(img.width(), NX as u32 * 3);

    let again = export_snapshot(&p, &t, d, 4.65, dir.path()).unwrap();
    assert_eq!(std::fs::read(&csv).unwrap(), first);
    assert_eq!(again.grids, snap.grids);

    let off = export_snapshot(&p, &t, d, 4.66, dir.path()).unwrap();
    assert_eq!(off.t, 4.65);
    let meta = std::fs::read_to_string(dir.path().join("snap_1_0.11_4.65_meta.txt")).unwrap();
    assert!(meta.contains("requested_t = 4.66") && meta.contains("snapped = true"));
}

#[test]
fn snapshot_error_grid_is_truth_minus_prediction() {
    let t = full_table();
    let p = SurrogateParams::init(Architecture::desk(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let snap = export_snapshot(&p, &t, DesignPoint::new(0.8, 0.09), 2.5, dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        use rand::Rng;
        let f = rng.gen_range(0..3);
        let k = rng.gen_range(0..NX * NY);
        assert_eq!(snap.grids[f][2][k], snap.grids[f][0][k] - snap.grids[f][1][k]);
    }
}

#[test]
fn dominant_frequency_examples() {
    let tone = |f: f64, a: f64| -> Vec<f64> {
        (0..120).map(|k| a * (2.0 * std::f64::consts::PI * f * k as f64 * 0.05).sin()).collect()
    };
    assert_eq!(dominant_frequency(&tone(1.5, 1.0), 0.05).unwrap(), 1.5);
    let mix: Vec<f64> = tone(1.0, 2.0).iter().zip(tone(3.0, 1.0)).map(|(a, b)| a + b).collect();
    assert_eq!(dominant_frequency(&mix, 0.05).unwrap(), 1.0);
    assert!(matches!(dominant_frequency(&[0.3; 64], 0.05), Err(CoreError::NoDominantFrequency)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dominant_frequency_is_scale_invariant(
        f in 0.3..4.0f64,
        phase in 0.0..6.0f64,
        noise_seed in 0u64..1000,
        scale in 1e-3..1e3f64,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let s: Vec<f64> = (0..120)
            .map(|k| (2.0 * std::f64::consts::PI * f * k as f64 * 0.05 + phase).sin() + 0.1 * rng.gen_range(-1.0..1.0))
            .collect();
        let scaled: Vec<f64> = s.iter().map(|v| v * scale).collect();
        prop_assert_eq!(dominant_frequency(&s, 0.05).ok(), dominant_frequency(&scaled, 0.05).ok());
    }

    #[test]
    fn quadrant_counts_partition(ts in proptest::collection::vec(0.0..6.0f64, 1..60), di in proptest::collection::vec(0usize..12, 1..60)) {
        let spec = SplitSpec::paper();
        let designs = all_designs();
        let recs: Vec<FlowRecord> = ts.iter().zip(di.iter().cycle()).map(|(&t, &k)| FlowRecord {
            x: 0.1, y: 0.1, t, u_inlet: designs[k].u_inlet, d_y: designs[k].d_y, u: 0.0, v: 0.0, p: 0.0,
        }).collect();
        let errs = vec![1.0; recs.len()];
        let rep = quadrant_report(&recs, &errs, &spec);
        prop_assert_eq!(rep.total_count(), recs.len());
        for q in Quadrant::ALL {
            let c = rep.counts.iter().zip(Quadrant::ALL).find(|(_, x)| *x == q).map(|(c, _)| *c).unwrap();
            prop_assert_eq!(rep.get(q).is_some(), c > 0);
        }
    }
}
