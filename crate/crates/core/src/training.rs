//! Losses, Adam, and the training loop with early stopping.

use std::fs;
use std::io::Write;
use std::path::Path;

use fcpinn_autodiff::Tape;
use fcpinn_datagen::FlowTable;
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{inputs_of, labels_of, minibatches, sample_collocation_with, CollocationDomain};
use crate::jet::{self, ffm_masks, ParamVars};
use crate::model::{predict_rows, Architecture, SurrogateParams};
use crate::physics::FluidConstants;
use crate::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    /// Weight of the PDE term.
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub collocation_per_step: usize,
    /// Also penalise the residual at the labeled minibatch points.
    pub pde_on_labeled: bool,
    pub patience: usize,
    pub seed: u64,
    pub nu: f64,
    pub collocation: CollocationDomain,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            arch: Architecture::paper(),
            lambda: 0.001,
            learning_rate: 0.001,
            epochs: 20_000,
            batch_size: 32_768,
            collocation_per_step: 32_768,
            pde_on_labeled: false,
            patience: 50,
            seed: 0,
            nu: 0.001,
            collocation: CollocationDomain::default(),
        }
    }

    pub fn desk() -> Self {
        Self {
            arch: Architecture::desk(),
            epochs: 2_000,
            batch_size: 4_096,
            collocation_per_step: 4_096,
            patience: 200,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(CoreError::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(CoreError::Config("batch size and epoch cap must be at least 1".into()));
        }
        if self.lambda > 0.0 && self.collocation_per_step == 0 && !self.pde_on_labeled {
            return Err(CoreError::Config("the PDE term needs collocation points".into()));
        }
        FluidConstants::new(self.nu)?;
        Ok(())
    }
}

pub fn total_loss(pred: f64, pde: f64, lambda: f64) -> f64 {
    pred + lambda * pde
}

/// Mean over rows of `(u - u_hat)^2 + (v - v_hat)^2 + (p - p_hat)^2`.
pub fn mse_of(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<f64> {
    if pred.nrows() == 0 {
        return Err(CoreError::EmptyBatch);
    }
    let mut sum = 0.0;
    for (a, b) in pred.rows().into_iter().zip(labels.rows()) {
        sum += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
    }
    Ok(sum / pred.nrows() as f64)
}

/// Prediction loss of a labeled batch in inference mode.
pub fn prediction_loss(inputs: ArrayView2<f64>, labels: ArrayView2<f64>, params: &SurrogateParams) -> Result<f64> {
    if inputs.nrows() == 0 {
        return Err(CoreError::EmptyBatch);
    }
    let pred = predict_rows(params, inputs)?;
    mse_of(pred.view(), labels)
}

/// Mean squared residual norm at `points` (`n x 5`) in inference mode.
pub fn pde_loss(points: ArrayView2<f64>, params: &SurrogateParams, c: &FluidConstants) -> Result<f64> {
    if points.nrows() == 0 {
        return Err(CoreError::EmptyBatch);
    }
    params.check_finite()?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let j = jet::jets_tape(&mut tape, &pv, params, points, &[])?;
    let r = jet::residual_tape(&mut tape, &j, c.nu)?;
    let l = jet::pde_loss_tape(&mut tape, r)?;
    let v = tape.scalar(l);
    if !v.is_finite() {
        return Err(CoreError::PoisonedParameters("non-finite residual".into()));
    }
    Ok(v)
}

/// Loss values and parameter gradients for one step.
pub struct StepLoss {
    pub prediction: f64,
    /// `NaN` when the PDE term is switched off.
    pub pde: f64,
    pub total: f64,
    pub grads: Vec<Array2<f64>>,
}

/// Evaluates the combined loss on a labeled batch and a collocation set and
/// differentiates it with respect to every parameter. `dropout` draws FFM
/// masks when given.
pub fn loss_and_grad(
    params: &SurrogateParams,
    inputs: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    collocation: ArrayView2<f64>,
    lambda: f64,
    c: &FluidConstants,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<StepLoss> {
    if inputs.nrows() == 0 {
        return Err(CoreError::EmptyBatch);
    }
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let masks = ffm_masks(params, inputs.nrows(), dropout.as_deref_mut());
    let pred = jet::predict_tape(&mut tape, &pv, params, inputs, &masks)?;
    let lp = jet::prediction_loss_tape(&mut tape, pred, labels.to_owned())?;
    let (loss, pde) = if lambda > 0.0 && collocation.nrows() > 0 {
        let masks = ffm_masks(params, collocation.nrows(), dropout.as_deref_mut());
        let j = jet::jets_tape(&mut tape, &pv, params, collocation, &masks)?;
        let r = jet::residual_tape(&mut tape, &j, c.nu)?;
        let lr = jet::pde_loss_tape(&mut tape, r)?;
        let weighted = tape.scale(lr, lambda);
        (tape.add(lp, weighted)?, tape.scalar(lr))
    } else {
        (lp, f64::NAN)
    };
    let prediction = tape.scalar(lp);
    let total = tape.scalar(loss);
    let mut g = tape.backward(loss)?;
    let grads = pv.collect(&tape, &mut g);
    Ok(StepLoss {
        prediction,
        pde,
        total,
        grads,
    })
}

/// Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &SurrogateParams) -> Self {
        let zeros: Vec<Array2<f64>> = params.tensors().iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut SurrogateParams, state: &mut AdamState, grads: &[Array2<f64>], lr: f64) -> Result<()> {
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() || grads.iter().zip(&tensors).any(|(g, t)| g.dim() != t.dim()) {
        return Err(CoreError::Shape("gradient shapes do not match the parameters".into()));
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(CoreError::DivergedTraining {
            epoch: 0,
            reason: format!("non-finite gradient at Adam step {}", state.step + 1),
        });
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (k, theta) in tensors.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[k], &mut state.v[k], &grads[k]);
        ndarray::Zip::from(&mut **theta)
            .and(m)
            .and(v)
            .and(g)
            .for_each(|th, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *th -= lr * mh / (vh.sqrt() + eps);
            });
    }
    Ok(())
}

/// One line of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub prediction: f64,
    pub pde: f64,
    pub total: f64,
    pub val_mse: f64,
}

/// Writes `epoch L_prediction L_pde L val_mse` per line.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "# epoch L_prediction L_pde L val_mse")?;
    for r in history {
        writeln!(f, "{} {:e} {:e} {:e} {:e}", r.epoch, r.prediction, r.pde, r.total, r.val_mse)?;
    }
    f.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    /// Parameters with the best validation MSE.
    pub params: SurrogateParams,
    pub history: Vec<EpochRecord>,
    pub best_val: f64,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Validation metric: prediction MSE in inference mode.
pub fn validation_mse(params: &SurrogateParams, split: &FlowTable) -> Result<f64> {
    let x = inputs_of(&split.records);
    let y = labels_of(&split.records);
    prediction_loss(x.view(), y.view(), params)
}

/// Trains from a fresh initialisation. The best-validation parameters are
/// written to `checkpoint` whenever they improve.
pub fn train(
    cfg: &TrainConfig,
    train_split: &FlowTable,
    validation: &FlowTable,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    let params = SurrogateParams::init(cfg.arch.clone(), cfg.seed)?;
    train_from(cfg, params, train_split, validation, checkpoint)
}

pub fn train_from(
    cfg: &TrainConfig,
    mut params: SurrogateParams,
    train_split: &FlowTable,
    validation: &FlowTable,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_split.is_empty() {
        return Err(CoreError::EmptySplit("training split is empty".into()));
    }
    if validation.is_empty() {
        return Err(CoreError::EmptySplit("validation split is empty".into()));
    }
    let consts = FluidConstants::new(cfg.nu)?;
    let mut adam = AdamState::new(&params);
    let mut colloc_rng = stream_rng(cfg.seed, 1);
    let mut dropout_rng = stream_rng(cfg.seed, 2);
    let use_pde = cfg.lambda > 0.0;

    let mut best = params.clone();
    let mut best_val = validation_mse(&params, validation)?;
    let mut best_epoch = 0;
    if let Some(path) = checkpoint {
        best.save(path)?;
    }
    let mut since = 0usize;
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let (mut sp, mut sd, mut st, mut steps) = (0.0, 0.0, 0.0, 0usize);
        let batch_seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64);
        for batch in minibatches(train_split, cfg.batch_size, batch_seed)? {
            let colloc = if use_pde {
                let pts = sample_collocation_with(cfg.collocation_per_step, &cfg.collocation, &mut colloc_rng);
                if cfg.pde_on_labeled {
                    concatenate(Axis(0), &[pts.view(), batch.inputs.view()]).expect("both have 5 columns")
                } else {
                    pts
                }
            } else {
                Array2::zeros((0, 5))
            };
            let step = loss_and_grad(
                &params,
                batch.inputs.view(),
                batch.labels.view(),
                colloc.view(),
                cfg.lambda,
                &consts,
                Some(&mut dropout_rng),
            )?;
            if !step.total.is_finite() {
                return Err(CoreError::DivergedTraining {
                    epoch,
                    reason: "non-finite loss".into(),
                });
            }
            adam_step(&mut params, &mut adam, &step.grads, cfg.learning_rate).map_err(|e| match e {
                CoreError::DivergedTraining { reason, .. } => CoreError::DivergedTraining { epoch, reason },
                other => other,
            })?;
            sp += step.prediction;
            sd += step.pde;
            st += step.total;
            steps += 1;
        }
        let n = steps as f64;
        let val = match validation_mse(&params, validation) {
            Ok(v) if v.is_finite() => v,
            _ => {
                return Err(CoreError::DivergedTraining {
                    epoch,
                    reason: "non-finite validation loss".into(),
                })
            }
        };
        history.push(EpochRecord {
            epoch,
            prediction: sp / n,
            pde: sd / n,
            total: st / n,
            val_mse: val,
        });
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best = params.clone();
            since = 0;
            if let Some(path) = checkpoint {
                best.save(path)?;
            }
        } else {
            since += 1;
            if since > cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_val,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_loss_examples() {
        assert!((total_loss(0.5, 2.0, 0.001) - 0.502).abs() < 1e-15);
        assert_eq!(total_loss(0.5, 2.0, 0.0), 0.5);
        assert_eq!(total_loss(0.5, 0.0, 0.3), 0.5);
    }

    #[test]
    fn mse_examples() {
        let p = Array2::zeros((1, 3));
        let l = Array2::from_shape_vec((1, 3), vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(mse_of(p.view(), l.view()).unwrap(), 1.0);
        let p = Array2::zeros((2, 3));
        let l = Array2::from_shape_vec((2, 3), vec![0.2f64.sqrt(), 0.0, 0.0, 0.0, 0.6f64.sqrt(), 0.0]).unwrap();
        assert!((mse_of(p.view(), l.view()).unwrap() - 0.4).abs() < 1e-15);
        let e = Array2::zeros((0, 3));
        assert!(matches!(mse_of(e.view(), e.view()), Err(CoreError::EmptyBatch)));
    }
}
