//! Minibatch training: Adam with coupled weight decay, per-epoch
//! reshuffled unlabeled batches, with-replacement anomaly batches, and
//! validation-based early stopping that returns the best-epoch weights.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, ParameterSet, Tensor};
use crate::data::TrainData;
use crate::error::{Error, Result};
use crate::losses::{objective_for, LossKind};
use crate::models::Model;
use crate::seeding::{rng_stream, stream};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub weight_decay: f64,
    pub patience: usize,
    /// AE pretraining budget for the SVDD family.
    pub pretrain_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::Ae,
            learning_rate: 1e-4,
            batch_size: 128,
            max_epochs: 200,
            weight_decay: 1e-3,
            patience: 20,
            pretrain_epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moments aligned with the parameter insertion order.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros_like(t)).collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Weight decay is added to the raw
/// gradient before the moment updates (coupled form).
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &[Tensor],
    state: &mut OptimizerState,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for g in grads {
        if !g.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (pi, (_, tensor)) in params.iter_mut().enumerate() {
        if grads[pi].shape() != tensor.shape() {
            return Err(Error::Shape(format!(
                "gradient {pi} has shape {:?}, parameter has {:?}",
                grads[pi].shape(),
                tensor.shape()
            )));
        }
        let p = tensor.data_mut();
        let m = state.m[pi].data_mut();
        let v = state.v[pi].data_mut();
        let g = grads[pi].data();
        for i in 0..p.len() {
            let grad = g[i] + weight_decay * p[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad * grad;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// One epoch of minibatches: unlabeled rows shuffled once and consumed
/// without replacement (final partial batch allowed); anomaly rows drawn
/// with replacement at full batch size every step.
pub struct MinibatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    n_anomalies: Option<usize>,
}

impl MinibatchSampler {
    pub fn new_epoch(
        n_unlabeled: usize,
        n_anomalies: Option<usize>,
        batch_size: usize,
        rng_u: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if n_unlabeled == 0 {
            return Err(Error::Contract(
                "cannot sample from an empty unlabeled set".into(),
            ));
        }
        if batch_size == 0 {
            return Err(Error::Contract("batch_size must be positive".into()));
        }
        if n_anomalies == Some(0) {
            return Err(Error::Contract(
                "loss kind requires anomalies but the anomaly set is empty".into(),
            ));
        }
        let mut order: Vec<usize> = (0..n_unlabeled).collect();
        order.shuffle(rng_u);
        Ok(MinibatchSampler {
            order,
            cursor: 0,
            batch_size,
            n_anomalies,
        })
    }

    pub fn next_batch(
        &mut self,
        rng_a: &mut ChaCha8Rng,
    ) -> Option<(Vec<usize>, Option<Vec<usize>>)> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch_u = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let batch_a = self.n_anomalies.map(|m| {
            (0..self.batch_size)
                .map(|_| rng_a.gen_range(0..m))
                .collect()
        });
        Some((batch_u, batch_a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience rule: stop once validation has not improved for `patience`
/// consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, val: f64) -> StopDecision {
        match self.best {
            Some(best) if val >= best => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some(val);
                self.since_best = 0;
                StopDecision::Improved
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_objective: Vec<f64>,
    pub val_objective: Vec<f64>,
    pub best_epoch: Option<usize>,
    /// Number of epochs actually run.
    pub stopped_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_obj,val_obj\n");
        for (i, (t, v)) in self
            .train_objective
            .iter()
            .zip(&self.val_objective)
            .enumerate()
        {
            out.push_str(&format!("{i},{t},{v}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Full-batch objective value (no noise, no gradients). Used for the
/// per-epoch validation measurement and by sweeps.
pub fn objective_value(
    model: &Model,
    kind: &LossKind,
    batch_u: &[Tensor],
    batch_a: Option<&[Tensor]>,
) -> Result<f64> {
    let mut g = Graph::new();
    let bound = model.params().bind(&mut g);
    let root = objective_for(
        &mut g, kind, model, &bound, batch_u, batch_a, None, None, None,
    )?;
    Ok(g.value(root).item())
}

fn with_step_context(err: Error, epoch: usize, step: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, step {step}: {msg}")),
        other => other,
    }
}

fn sample_noise(rng: &mut ChaCha8Rng, n: usize, dim: usize, sigma: f64) -> Vec<Tensor> {
    (0..n)
        .map(|_| {
            let data: Vec<f64> = (0..dim)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Tensor::vector(data).expect("dim > 0")
        })
        .collect()
}

/// Train `model` in place, returning the history. The model ends at the
/// parameters of the best validation epoch (or the final epoch when no
/// validation split exists, in which case early stopping is disabled).
pub fn train(model: &mut Model, data: &TrainData, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    let kind = cfg.loss_kind;
    let needs_a = kind.needs_anomalies();
    if needs_a && data.anomalies.rows() == 0 {
        return Err(Error::Contract(format!(
            "loss kind {} requires labeled anomalies but the anomaly set is empty",
            kind.name()
        )));
    }
    if data.unlabeled.rows() == 0 {
        return Err(Error::Contract("unlabeled training set is empty".into()));
    }

    let mut rng_u = rng_stream(cfg.seed, stream::SHUFFLE_U);
    let mut rng_a = rng_stream(cfg.seed, stream::SAMPLE_A);
    let mut rng_noise = rng_stream(cfg.seed, stream::NOISE);
    let noise_sigma = match model {
        Model::Ae(m) => m.noise_sigma,
        _ => 0.0,
    };

    let mut state = OptimizerState::new(model.params());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = TrainHistory::default();
    let mut best: Option<(ParameterSet, usize)> = None;

    let have_val = data.val_unlabeled.rows() > 0 && (!needs_a || data.val_anomalies.rows() > 0);
    let val_u = data.val_unlabeled.row_tensors();
    let val_a = data.val_anomalies.row_tensors();

    'epochs: for epoch in 0..cfg.max_epochs {
        let mut sampler = MinibatchSampler::new_epoch(
            data.unlabeled.rows(),
            needs_a.then(|| data.anomalies.rows()),
            cfg.batch_size,
            &mut rng_u,
        )?;
        let mut loss_sum = 0.0;
        let mut n_steps = 0usize;
        while let Some((u_idx, a_idx)) = sampler.next_batch(&mut rng_a) {
            let batch_u: Vec<Tensor> = u_idx
                .iter()
                .map(|&i| data.unlabeled.row_tensor(i))
                .collect();
            let batch_a: Option<Vec<Tensor>> =
                a_idx.map(|idx| idx.iter().map(|&i| data.anomalies.row_tensor(i)).collect());
            let (noise_u, noise_a) = if noise_sigma > 0.0 {
                let d = data.unlabeled.cols();
                let nu = sample_noise(&mut rng_noise, batch_u.len(), d, noise_sigma);
                let na = batch_a
                    .as_ref()
                    .map(|a| sample_noise(&mut rng_noise, a.len(), d, noise_sigma));
                (Some(nu), na)
            } else {
                (None, None)
            };

            let mut g = Graph::new();
            let bound = model.params().bind(&mut g);
            let root = objective_for(
                &mut g,
                &kind,
                model,
                &bound,
                &batch_u,
                batch_a.as_deref(),
                noise_u.as_deref(),
                noise_a.as_deref(),
                Some((data.unlabeled.rows(), data.anomalies.rows())),
            )
            .map_err(|e| with_step_context(e, epoch, n_steps))?;
            let loss = g.value(root).item();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "objective became {loss} at epoch {epoch}, step {n_steps}"
                )));
            }
            g.backward(root)?;
            let grads = bound.gradients(&g);
            adam_step(
                model.params_mut(),
                &grads,
                &mut state,
                cfg.learning_rate,
                cfg.weight_decay,
            )
            .map_err(|e| with_step_context(e, epoch, n_steps))?;
            loss_sum += loss;
            n_steps += 1;
        }
        history.train_objective.push(loss_sum / n_steps as f64);

        let val_obj = if have_val {
            let v = objective_value(model, &kind, &val_u, needs_a.then_some(val_a.as_slice()))?;
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "validation objective became {v} after epoch {epoch}"
                )));
            }
            v
        } else {
            f64::NAN
        };
        history.val_objective.push(val_obj);
        history.stopped_epoch = epoch + 1;

        if have_val {
            match stopper.observe(val_obj) {
                StopDecision::Improved => best = Some((model.params().clone(), epoch)),
                StopDecision::Continue => {}
                StopDecision::Stop => break 'epochs,
            }
        }
    }

    if let Some((params, epoch)) = best {
        *model.params_mut() = params;
        history.best_epoch = Some(epoch);
    }
    Ok(history)
}
