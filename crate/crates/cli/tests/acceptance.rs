//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Training criteria run under a reduced profile (see `acceptance_config`):
//! the desk preset with a 31 x 7 ROI sampling grid, 256 collocation points
//! per step and a lower epoch cap. Thresholds are unchanged. Generated data
//! is cached under the cargo target directory and reused when the resolved
//! configuration matches.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fcpinn_autodiff::{GradientRequest, Graph};
use fcpinn_cli::commands;
use fcpinn_cli::RunConfig;
use fcpinn_core::dataset::{build_splits, check_disjoint, sample_collocation, CollocationDomain, SplitSpec};
use fcpinn_core::evaluation::{quadrant_mse, Quadrant};
use fcpinn_core::model::{ffm_forward, predict, prediction_graph, Architecture, Mode, SurrogateParams, Variant};
use fcpinn_core::physics::{mean_squared_residual, residual_at, residual_of_fields, shedding_frequency, FluidConstants};
use fcpinn_core::training::{loss_and_grad, pde_loss, prediction_loss, total_loss, train, TrainConfig};
use fcpinn_core::{DesignPoint, FlowTable, Splits, TrainOutcome};
use fcpinn_datagen::spectrum::{dominant_frequency, probe_series, WAKE_PROBE};
use fcpinn_datagen::taylor_green::observed_order;
use fcpinn_datagen::{simulate, taylor_green_validation, ChannelGeometry, RoiGrid, SolverConfig, TaylorGreenConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROI: (usize, usize) = (31, 7);
const EPOCHS: usize = 500;
const COLLOCATION: usize = 256;
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];

type Check = Result<String, String>;

fn report(id: usize, name: &str, start: Instant, r: &Check) -> bool {
    let (tag, detail) = match r {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!(
        "[{tag}] criterion {id:>2}: {name}: {detail} ({:.1} s)\n",
        start.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    r.is_ok()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn small_arch(variant: Variant) -> Architecture {
    Architecture {
        variant,
        ffm_layers: 2,
        ffm_width: 6,
        trunk_layers: 3,
        trunk_width: 8,
        dropout: 0.0,
        ..Architecture::paper()
    }
}

fn random_params(seed: u64) -> SurrogateParams {
    let variant = if seed % 2 == 0 { Variant::Full } else { Variant::NoFfm };
    let mut p = SurrogateParams::init(small_arch(variant), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in p.tensors_mut() {
        t.mapv_inplace(|v| v + rng.gen_range(-0.2..0.2));
    }
    p
}

/// Input derivatives of random tanh surrogates against central differences
/// of the batched forward pass.
fn autodiff_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut first_worst, mut second_worst, mut probes) = (0.0f64, 0.0f64, 0);
    for net in 0..8u64 {
        let p = random_params(net);
        for _ in 0..3 {
            let (x, y, t) = (rng.gen_range(0.0..1.5), rng.gen_range(0.0..0.3), rng.gen_range(0.0..5.0));
            let d = DesignPoint::new(rng.gen_range(0.8..1.0), rng.gen_range(0.08..0.11));
            let (mut g, out) = prediction_graph(&p, x, y, t, d).map_err(|e| e.to_string())?;
            let f = |x: f64, y: f64, t: f64, k: usize| {
                let r = predict(&p, x, y, t, d, Mode::Inference).unwrap();
                [r.u, r.v, r.p][k]
            };
            for k in 0..3 {
                let grad = g.derivative(&GradientRequest::first(out[k], &["x", "y", "t"])).map_err(|e| e.to_string())?;
                let h = 1e-5;
                let fd = [
                    (f(x + h, y, t, k) - f(x - h, y, t, k)) / (2.0 * h),
                    (f(x, y + h, t, k) - f(x, y - h, t, k)) / (2.0 * h),
                    (f(x, y, t + h, k) - f(x, y, t - h, k)) / (2.0 * h),
                ];
                for j in 0..3 {
                    first_worst = first_worst.max(rel(grad[j], fd[j]));
                    probes += 1;
                }
                let hess = g.derivative(&GradientRequest::second(out[k], &["x", "y"])).map_err(|e| e.to_string())?;
                let h = 1e-4;
                let c = f(x, y, t, k);
                let fxx = (f(x + h, y, t, k) - 2.0 * c + f(x - h, y, t, k)) / (h * h);
                let fyy = (f(x, y + h, t, k) - 2.0 * c + f(x, y - h, t, k)) / (h * h);
                let fxy = (f(x + h, y + h, t, k) - f(x + h, y - h, t, k) - f(x - h, y + h, t, k) + f(x - h, y - h, t, k))
                    / (4.0 * h * h);
                for (a, b) in [(hess[0], fxx), (hess[1], fxy), (hess[2], fxy), (hess[3], fyy)] {
                    second_worst = second_worst.max(rel(a, b));
                    probes += 1;
                }
            }
        }
    }
    ensure(probes >= 100, format!("only {probes} probes"))?;
    ensure(first_worst < 1e-6, format!("first-order deviation {first_worst:.2e}"))?;
    ensure(second_worst < 1e-4, format!("second-order deviation {second_worst:.2e}"))?;
    Ok(format!(
        "{probes} probes, worst first-order {first_worst:.1e}, second-order {second_worst:.1e}"
    ))
}

/// Residual of the analytic Taylor-Green vortex built symbolically.
fn residual_oracle() -> Check {
    let c = FluidConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (xv, yv, tv) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..5.0));
        let mut g = Graph::new();
        let x = g.input("x", xv).map_err(|e| e.to_string())?;
        let y = g.input("y", yv).map_err(|e| e.to_string())?;
        let t = g.input("t", tv).map_err(|e| e.to_string())?;
        let e1 = g.scale(t, -2.0 * c.nu);
        let decay = g.exp(e1);
        let e2 = g.scale(t, -4.0 * c.nu);
        let decay2 = g.exp(e2);
        let (cx, sx, cy, sy) = (g.cos(x), g.sin(x), g.cos(y), g.sin(y));
        let u0 = g.mul(cx, sy);
        let u1 = g.mul(u0, decay);
        let u = g.neg(u1);
        let v0 = g.mul(sx, cy);
        let v = g.mul(v0, decay);
        let x2 = g.scale(x, 2.0);
        let y2 = g.scale(y, 2.0);
        let c2x = g.cos(x2);
        let c2y = g.cos(y2);
        let s = g.add(c2x, c2y);
        let p0 = g.scale(s, -0.25);
        let p = g.mul(p0, decay2);
        let r = residual_of_fields(&mut g, [u, v, p], &c).map_err(|e| e.to_string())?;
        worst = worst
            .max(r.r_momentum_x.abs())
            .max(r.r_momentum_y.abs())
            .max(r.r_continuity.abs());
    }
    ensure(worst < 1e-8, format!("max residual {worst:.2e}"))?;
    Ok(format!("max |residual| {worst:.1e} over 50 points"))
}

fn solver_validation() -> Check {
    let coarse = taylor_green_validation(&TaylorGreenConfig::default());
    let fine = taylor_green_validation(&TaylorGreenConfig {
        n: 128,
        ..Default::default()
    });
    let order = observed_order(&coarse, &fine);
    ensure(coarse.max_rel_error < 0.02, format!("64^2 error {:.3e}", coarse.max_rel_error))?;
    ensure(order >= 1.5, format!("observed order {order:.3}"))?;
    Ok(format!(
        "64^2 error {:.2e}, 128^2 error {:.2e}, order {order:.2}",
        coarse.max_rel_error, fine.max_rel_error
    ))
}

fn shedding_physics() -> Check {
    let d = DesignPoint::new(1.0, 0.1);
    let g = ChannelGeometry::new(d.d_y);
    let cfg = SolverConfig::desk();
    let snaps = simulate(d, &g, &cfg).map_err(|e| e.to_string())?;
    let roi = RoiGrid::new(cfg.roi_nx, cfg.roi_ny, &g);
    let sig = probe_series(&snaps, &roi, WAKE_PROBE.0, WAKE_PROBE.1);
    let f = dominant_frequency(&sig, cfg.output_cadence).ok_or("no dominant frequency")?;
    let expected = shedding_frequency(d, &FluidConstants::default()).map_err(|e| e.to_string())?;
    let dev = (f - expected) / expected;
    ensure(dev.abs() <= 0.25, format!("measured {f:.3} vs {expected:.3} ({:+.0}%)", 100.0 * dev))?;
    Ok(format!("measured {f:.3} vs correlation {expected:.3} ({:+.1}%)", 100.0 * dev))
}

fn loss_semantics() -> Check {
    let zero = SurrogateParams::zeros(small_arch(Variant::Full)).map_err(|e| e.to_string())?;
    let x1 = Array2::from_shape_vec((1, 5), vec![0.5, 0.1, 1.0, 0.9, 0.1]).unwrap();
    let y1 = Array2::from_shape_vec((1, 3), vec![1.0, 0.0, 0.0]).unwrap();
    let l = prediction_loss(x1.view(), y1.view(), &zero).map_err(|e| e.to_string())?;
    ensure(l == 1.0, format!("one-sample loss {l}"))?;
    let z = Array2::zeros((1, 3));
    let l = prediction_loss(x1.view(), z.view(), &zero).map_err(|e| e.to_string())?;
    ensure(l == 0.0, format!("perfect-fit loss {l}"))?;
    let x2 = Array2::from_shape_vec((2, 5), vec![0.5, 0.1, 1.0, 0.9, 0.1, 0.2, 0.2, 2.0, 0.8, 0.08]).unwrap();
    let y2 = Array2::from_shape_vec((2, 3), vec![0.2f64.sqrt(), 0.0, 0.0, 0.0, 0.6f64.sqrt(), 0.0]).unwrap();
    let l = prediction_loss(x2.view(), y2.view(), &zero).map_err(|e| e.to_string())?;
    ensure((l - 0.4).abs() < 1e-15, format!("two-sample mean {l}"))?;
    let c = FluidConstants::default();
    let pts = sample_collocation(8, &CollocationDomain::default(), 1);
    let l = pde_loss(pts.view(), &zero, &c).map_err(|e| e.to_string())?;
    ensure(l == 0.0, format!("zero-network PDE loss {l}"))?;
    let r = fcpinn_core::ResidualTriple {
        r_momentum_x: 1.0,
        r_momentum_y: 2.0,
        r_continuity: 2.0,
    };
    ensure(mean_squared_residual(&[r]).unwrap() == 9.0, "residual (1, 2, 2) norm".into())?;
    ensure((total_loss(0.5, 2.0, 0.001) - 0.502).abs() < 1e-15, "total (0.5, 2, 0.001)".into())?;
    ensure(total_loss(0.5, 2.0, 0.0) == 0.5 && total_loss(0.5, 0.0, 0.3) == 0.5, "total identities".into())?;

    // gradient of the total loss against central differences of a loss
    // assembled from the scalar graph path
    let p = random_params(2);
    let xs = sample_collocation(4, &CollocationDomain::default(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ys = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
    let colloc = sample_collocation(4, &CollocationDomain::default(), 5);
    let lambda = 0.05;
    let reference = |q: &SurrogateParams| {
        let lp = prediction_loss(xs.view(), ys.view(), q).unwrap();
        let rs: Vec<_> = colloc
            .rows()
            .into_iter()
            .map(|r| residual_at(q, r[0], r[1], r[2], DesignPoint::new(r[3], r[4]), &c).unwrap())
            .collect();
        total_loss(lp, mean_squared_residual(&rs).unwrap(), lambda)
    };
    let step = loss_and_grad(&p, xs.view(), ys.view(), colloc.view(), lambda, &c, None).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut n = 0;
    for k in 0..step.grads.len() {
        let (r, cdim) = step.grads[k].dim();
        for i in 0..r {
            for j in 0..cdim {
                let mut a = p.clone();
                a.tensors_mut()[k][[i, j]] += h;
                let mut b = p.clone();
                b.tensors_mut()[k][[i, j]] -= h;
                let fd = (reference(&a) - reference(&b)) / (2.0 * h);
                worst = worst.max(rel(fd, step.grads[k][[i, j]]));
                n += 1;
            }
        }
    }
    ensure(worst < 1e-4, format!("gradient deviation {worst:.2e}"))?;
    Ok(format!("worked examples exact; {n} gradient entries within {worst:.1e}"))
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn acceptance_config() -> RunConfig {
    let root = cache_dir();
    let pairs: Vec<(String, String)> = [
        ("preset", "desk".to_string()),
        ("data_dir", root.join("data").display().to_string()),
        ("run_dir", root.join("run").display().to_string()),
        ("solver.roi_nx", ROI.0.to_string()),
        ("solver.roi_ny", ROI.1.to_string()),
        ("train.epochs", EPOCHS.to_string()),
        ("train.collocation", COLLOCATION.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    RunConfig::resolve(None, &pairs).expect("acceptance profile is valid")
}

/// Generates the desk data unless an identical run is cached.
fn dataset(cfg: &RunConfig) -> Result<FlowTable, String> {
    let echoed = cfg.data_dir.join("generate.cfg");
    let fresh = fs::read_to_string(&echoed).map(|t| t == cfg.to_text()).unwrap_or(false)
        && commands::load_dataset(cfg).is_ok();
    if !fresh {
        commands::generate(cfg, |_| {}).map_err(|e| e.to_string())?;
    }
    commands::load_dataset(cfg).map_err(|e| e.to_string())
}

fn split_integrity(table: &FlowTable) -> Check {
    let per_stamp = ROI.0 * ROI.1;
    let stamps = 121;
    let (on, off) = (51 * per_stamp, (stamps - 51) * per_stamp);
    let all = stamps * per_stamp;
    let mut details = Vec::new();
    for (name, spec, expected) in [
        ("paper", SplitSpec::paper(), (9 * on, all + off, 8 * off + 2 * all)),
        ("desk", SplitSpec::desk(), (4 * on, all, 4 * off + 7 * all)),
    ] {
        let s = build_splits(table, &spec).map_err(|e| e.to_string())?;
        check_disjoint(&s).map_err(|e| e.to_string())?;
        let sizes = (s.train.len(), s.validation.len(), s.test.len());
        ensure(sizes == s.manifest.totals(), format!("{name}: manifest totals disagree with the splits"))?;
        ensure(sizes == expected, format!("{name}: counts {sizes:?}, expected {expected:?}"))?;
        for r in &s.train.records {
            ensure(
                spec.is_seen(&r.design()) && r.t <= 5.0 + 1e-9 && spec.on_train_grid(r.t),
                format!("{name}: training record at t = {} of {}", r.t, r.design().label()),
            )?;
        }
        if name == "paper" {
            // Non-empty columns (train, validation, test) per design.
            let pattern = [
                ((0.8, 0.08), "TE"),
                ((0.8, 0.09), "TE"),
                ((0.8, 0.10), "TE"),
                ((0.8, 0.11), "E"),
                ((0.9, 0.08), "TE"),
                ((0.9, 0.09), "V"),
                ((0.9, 0.10), "TV"),
                ((0.9, 0.11), "TE"),
                ((1.0, 0.08), "TE"),
                ((1.0, 0.09), "TE"),
                ((1.0, 0.10), "E"),
                ((1.0, 0.11), "TE"),
            ];
            for ((u, d), want) in pattern {
                let row = s.manifest.row(&DesignPoint::new(u, d)).ok_or("design missing from manifest")?;
                let got: String = [(row.train, 'T'), (row.validation, 'V'), (row.test, 'E')]
                    .iter()
                    .filter(|(n, _)| *n > 0)
                    .map(|(_, c)| *c)
                    .collect();
                ensure(got == want, format!("design ({u}, {d}) has pattern {got}, expected {want}"))?;
            }
        }
        details.push(format!("{name} {sizes:?}"));
    }
    Ok(details.join(", "))
}

fn train_variant(cfg: &RunConfig, splits: &Splits, variant: Variant, lambda: f64, seed: u64) -> Result<TrainOutcome, String> {
    let tc = TrainConfig {
        arch: Architecture {
            variant,
            ..cfg.train.arch.clone()
        },
        lambda,
        seed,
        ..cfg.train.clone()
    };
    train(&tc, &splits.train, &splits.validation, None).map_err(|e| e.to_string())
}

fn desk_learning(full: &SurrogateParams, splits: &Splits, spec: &SplitSpec) -> Check {
    let rep = quadrant_mse(full, &splits.test, spec).map_err(|e| e.to_string())?;
    let sc = rep.get(Quadrant::SeenCovered).ok_or("Seen/Covered cell is empty")?;
    ensure(sc < 5e-3, format!("Seen/Covered MSE {sc:.3e}"))?;
    Ok(format!("Seen/Covered MSE {sc:.2e} after {EPOCHS} epochs"))
}

fn ffm_sanity(full: &SurrogateParams, spec: &SplitSpec) -> Check {
    let c = FluidConstants::default();
    let mut worst = Vec::new();
    for d in &spec.train {
        let target = 2.0 * std::f64::consts::PI * shedding_frequency(*d, &c).map_err(|e| e.to_string())?;
        let f = ffm_forward(full, *d, Mode::Inference).map_err(|e| e.to_string())?;
        let best = f
            .frequencies
            .iter()
            .map(|v| ((v - target) / target).abs())
            .fold(f64::INFINITY, f64::min);
        ensure(best <= 0.5, format!("design {} closest frequency off by {:.0}%", d.label(), 100.0 * best))?;
        worst.push(best);
    }
    let w = worst.iter().cloned().fold(0.0, f64::max);
    Ok(format!("closest learned frequency within {:.0}% for every training design", 100.0 * w))
}

fn ablation_orderings(cfg: &RunConfig, splits: &Splits, spec: &SplitSpec, full_seed0: &SurrogateParams) -> Check {
    let uc = |p: &SurrogateParams| -> Result<f64, String> {
        quadrant_mse(p, &splits.test, spec)
            .map_err(|e| e.to_string())?
            .get(Quadrant::UnseenCovered)
            .ok_or_else(|| "Unseen/Covered cell is empty".to_string())
    };
    let (mut ffm_wins, mut reg_wins) = (0, 0);
    let mut rows = Vec::new();
    for &seed in &ABLATION_SEEDS {
        let full = if seed == ABLATION_SEEDS[0] {
            uc(full_seed0)?
        } else {
            uc(&train_variant(cfg, splits, Variant::Full, cfg.train.lambda, seed)?.params)?
        };
        let no_ffm = uc(&train_variant(cfg, splits, Variant::NoFfm, cfg.train.lambda, seed)?.params)?;
        let no_reg = uc(&train_variant(cfg, splits, Variant::Full, 0.0, seed)?.params)?;
        ffm_wins += usize::from(full < no_ffm);
        reg_wins += usize::from(no_reg > full);
        rows.push(format!("seed {seed}: full {full:.2e} no-ffm {no_ffm:.2e} no-reg {no_reg:.2e}"));
    }
    let summary = format!(
        "Full < No-FFM in {ffm_wins}/3, No-Reg > Full in {reg_wins}/3 [{}]",
        rows.join("; ")
    );
    ensure(ffm_wins >= 2 && reg_wins >= 2, summary.clone())?;
    Ok(summary)
}

fn tiny_pairs(dir: &Path) -> Vec<(String, String)> {
    [
        ("data_dir", dir.join("data").display().to_string()),
        ("run_dir", dir.join("run").display().to_string()),
        ("solver.nx", "36".into()),
        ("solver.ny", "8".into()),
        ("solver.dt", "0.005".into()),
        ("solver.end_time", "0.6".into()),
        ("solver.roi_nx", "6".into()),
        ("solver.roi_ny", "3".into()),
        ("train.epochs", "3".into()),
        ("train.batch_size", "64".into()),
        ("train.collocation", "16".into()),
        ("train.seed", "7".into()),
        ("model.ffm_layers", "1".into()),
        ("model.ffm_width", "4".into()),
        ("model.trunk_layers", "2".into()),
        ("model.trunk_width", "6".into()),
        ("ablate.seeds", "2".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<PathBuf, String> {
        let root = tmp.path().join(name);
        let cfg = RunConfig::resolve(None, &tiny_pairs(&root)).map_err(|e| e.to_string())?;
        commands::generate(&cfg, |_| {}).map_err(|e| e.to_string())?;
        commands::train_run(&cfg).map_err(|e| e.to_string())?;
        commands::evaluate(&cfg, &[(1.0, 0.11, 0.45)], |_| {}).map_err(|e| e.to_string())?;
        commands::ablate(&cfg).map_err(|e| e.to_string())?;
        Ok(root)
    };
    let (a, b) = (run("a")?, run("b")?);
    let (fa, fb) = (files_under(&a), files_under(&b));
    ensure(fa == fb, "the two runs wrote different file sets".into())?;
    let mut compared = 0;
    for f in &fa {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        if f.extension().is_some_and(|e| e == "cfg") {
            // the echoed configs differ only in their directory names
            let norm = |s: &[u8], root: &Path| String::from_utf8_lossy(s).replace(&root.display().to_string(), "ROOT");
            ensure(norm(&x, &a) == norm(&y, &b), format!("{} differs", f.display()))?;
        } else {
            ensure(x == y, format!("{} differs between reruns", f.display()))?;
        }
        compared += 1;
    }
    Ok(format!("{compared} dataset, history, checkpoint and report files identical across reruns"))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and filters from other targets must not start
    // the long run.
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let mut passed = Vec::new();
    // FCPINN_ACCEPTANCE_ONLY=1,5,9 runs a subset while iterating locally.
    let only: Option<Vec<usize>> = std::env::var("FCPINN_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().map_or(true, |o| o.contains(&id));
    let mut run = |id: usize, name: &str, f: &mut dyn FnMut() -> Check| {
        if !wanted(id) {
            return;
        }
        let start = Instant::now();
        let r = f();
        passed.push(report(id, name, start, &r));
    };
    run(1, "autodiff correctness", &mut autodiff_correctness);
    run(2, "residual oracle", &mut residual_oracle);
    run(3, "solver validation", &mut solver_validation);
    run(4, "shedding physics", &mut shedding_physics);
    run(5, "loss semantics", &mut loss_semantics);

    let cfg = acceptance_config();
    let start = Instant::now();
    let table = if [6, 7, 8, 10].into_iter().any(wanted) {
        dataset(&cfg)
    } else {
        Err("skipped".to_string())
    };
    if table.is_ok() {
        println!("        acceptance data ready in {:.1} s", start.elapsed().as_secs_f64());
    }
    run(6, "split integrity", &mut || split_integrity(table.as_ref().map_err(Clone::clone)?));

    let spec = cfg.split.clone();
    let splits = table
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|t| build_splits(t, &spec).map_err(|e| e.to_string()));
    let start = Instant::now();
    let full = splits
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|s| if [7, 8, 10].into_iter().any(wanted) { Ok(s) } else { Err("skipped".to_string()) })
        .and_then(|s| train_variant(&cfg, s, Variant::Full, cfg.train.lambda, ABLATION_SEEDS[0]));
    if full.is_ok() {
        println!("        full-variant training took {:.1} s", start.elapsed().as_secs_f64());
    }
    run(7, "desk-scale learning", &mut || {
        desk_learning(&full.as_ref().map_err(Clone::clone)?.params, splits.as_ref().map_err(Clone::clone)?, &spec)
    });
    run(8, "ablation orderings", &mut || {
        ablation_orderings(
            &cfg,
            splits.as_ref().map_err(Clone::clone)?,
            &spec,
            &full.as_ref().map_err(Clone::clone)?.params,
        )
    });
    run(9, "determinism", &mut determinism);
    run(10, "FFM frequency sanity", &mut || ffm_sanity(&full.as_ref().map_err(Clone::clone)?.params, &spec));

    let n = passed.iter().filter(|p| **p).count();
    println!("acceptance: {n}/{} criteria passed", passed.len());
    if n != passed.len() {
        std::process::exit(1);
    }
}
