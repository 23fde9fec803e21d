//! Unsupervised training: pseudo-Huber loss on the squared output norm
//! with a collapse-prevention penalty, reverse-mode gradients, Adam, and
//! early stopping on validation loss. Scoring is the absolute deviation
//! of the squared norm from the background median.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::embedding::{embed, EventRecord};
use crate::error::{Result, TnError};
use crate::model::TnModel;
use crate::reference::chain_norm_sq;
use crate::tensor::DenseTensor;

/// Floor applied to the norm inside the collapse penalty's logarithm so
/// the loss stays finite at zero; the penalty gradient vanishes below it.
const COLLAPSE_CLAMP: f64 = 1e-30;

/// Loss hyperparameters: target squared norm and Huber smoothing scale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossParams {
    pub mu: f64,
    pub delta: f64,
}

impl LossParams {
    pub fn new(mu: f64, delta: f64) -> Result<Self> {
        if !(mu > 0.0 && delta > 0.0) {
            return Err(TnError::Config("mu and delta must be positive".into()));
        }
        Ok(LossParams { mu, delta })
    }

    /// Reference settings: (50, 25) for single-layer models, (50, 15)
    /// for cascades.
    pub fn reference_for(cascade: bool) -> Self {
        if cascade {
            LossParams { mu: 50.0, delta: 15.0 }
        } else {
            LossParams { mu: 50.0, delta: 25.0 }
        }
    }
}

/// Pseudo-Huber distance of the squared norm from the target, plus the
/// collapse penalty `ln^2(n / mu)` active below squared norm 1. Natural
/// logarithm throughout.
pub fn loss(norm_sq: f64, params: &LossParams) -> f64 {
    let t = (norm_sq - params.mu) / params.delta;
    let huber = params.delta * params.delta * ((1.0 + t * t).sqrt() - 1.0);
    let collapse = if norm_sq < 1.0 {
        let n = norm_sq.max(COLLAPSE_CLAMP);
        let l = (n / params.mu).ln();
        l * l
    } else {
        0.0
    };
    huber + collapse
}

/// dLoss/dNorm at `norm_sq`.
pub fn loss_grad_wrt_norm(norm_sq: f64, params: &LossParams) -> f64 {
    let t = (norm_sq - params.mu) / params.delta;
    let huber = (norm_sq - params.mu) / (1.0 + t * t).sqrt();
    let collapse = if norm_sq < 1.0 && norm_sq > COLLAPSE_CLAMP {
        2.0 * (norm_sq / params.mu).ln() / norm_sq
    } else {
        0.0
    };
    huber + collapse
}

/// Chain-contraction forward pass recorded on a tape. Returns the tape,
/// the leaf ids of every weight tensor (per layer, per site), and the
/// scalar node holding the squared output norm.
fn build_forward(
    model: &TnModel,
    site_inputs: &[Vec<f64>],
) -> Result<(Tape, Vec<Vec<NodeId>>, NodeId)> {
    let mut tape = Tape::new();
    let weight_ids: Vec<Vec<NodeId>> = model
        .layers
        .iter()
        .map(|layer| {
            layer
                .sites()
                .iter()
                .map(|t| tape.leaf(t.clone()))
                .collect()
        })
        .collect();

    let l1 = &model.layers[0];
    if site_inputs.len() != l1.n_sites() {
        return Err(TnError::dimension(
            "input site count",
            &[site_inputs.len()],
            &[l1.n_sites()],
        ));
    }
    let mut acc: Option<NodeId> = None;
    for (i, x) in site_inputs.iter().enumerate() {
        let xv = tape.leaf(DenseTensor::from_data(&[l1.phys_in()], x.clone())?);
        let v = tape.contract(xv, &[0], weight_ids[0][i], &[0])?; // (q, l, r)
        acc = Some(match acc {
            None => {
                let s = tape.value(v).shape().to_vec();
                tape.reshape(v, &[s[0], s[2]])?
            }
            Some(prev) => {
                let rank = tape.value(prev).rank();
                tape.contract(prev, &[rank - 1], v, &[1])?
            }
        });
    }
    let out_shape: Vec<usize> = l1.output_sites().iter().map(|_| l1.phys_out()).collect();
    let mut out = tape.reshape(acc.expect("nonempty layer"), &out_shape)?;

    if model.layers.len() == 2 {
        let l2 = &model.layers[1];
        let w0 = weight_ids[1][0];
        let s0 = tape.value(w0).shape().to_vec();
        let w0s = tape.reshape(w0, &[s0[0], s0[1], s0[3]])?;
        let mut acc2 = tape.contract(out, &[0], w0s, &[0])?;
        for &wid in &weight_ids[1][1..] {
            let rank = tape.value(acc2).rank();
            acc2 = tape.contract(acc2, &[0, rank - 1], wid, &[0, 2])?;
        }
        let out_shape: Vec<usize> = l2.output_sites().iter().map(|_| l2.phys_out()).collect();
        out = tape.reshape(acc2, &out_shape)?;
    }

    let len = tape.value(out).len();
    let flat = tape.reshape(out, &[len])?;
    let nrm = tape.contract(flat, &[0], flat, &[0])?;
    Ok((tape, weight_ids, nrm))
}

/// Loss value, squared norm and per-weight gradients for one input.
#[derive(Debug)]
pub struct GradResult {
    pub norm_sq: f64,
    pub loss: f64,
    pub grads: Vec<Vec<DenseTensor>>,
}

/// Reverse-mode gradient of the loss with respect to every weight entry.
pub fn grad(model: &TnModel, site_inputs: &[Vec<f64>], params: &LossParams) -> Result<GradResult> {
    let (tape, weight_ids, nrm) = build_forward(model, site_inputs)?;
    let n = tape.value(nrm).data()[0];
    if !n.is_finite() {
        return Err(TnError::Numeric(
            "squared norm became non-finite in the forward pass".into(),
        ));
    }
    let seed = DenseTensor::scalar(loss_grad_wrt_norm(n, params));
    let all = tape.backward(nrm, seed)?;
    let mut grads = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        let mut per_site = Vec::with_capacity(layer.n_sites());
        for (s, site) in layer.sites().iter().enumerate() {
            let g = match &all[weight_ids[l][s].index()] {
                Some(g) => g.clone(),
                None => DenseTensor::zeros(site.shape()),
            };
            per_site.push(g);
        }
        grads.push(per_site);
    }
    Ok(GradResult {
        norm_sq: n,
        loss: loss(n, params),
        grads,
    })
}

/// Gradient of the loss for an embedded event.
pub fn grad_for_event(
    model: &TnModel,
    event: &EventRecord,
    params: &LossParams,
) -> Result<GradResult> {
    let mps = embed(event, &model.ordering)?;
    let inputs: Vec<Vec<f64>> = mps.sites.iter().map(|s| s.values.to_vec()).collect();
    grad(model, &inputs, params)
}

/// Training configuration. Splits are (train, valid, test) fractions of
/// the full background sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub splits: (f64, f64, f64),
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2048,
            learning_rate: 4e-3,
            max_epochs: 200,
            patience: 50,
            min_delta: 1e-4,
            seed: 0,
            splits: (0.70, 0.05, 0.25),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Reference settings: learning rate 4e-3 for single-layer models,
    /// 1e-2 for cascades; batch 2048, patience 50, improvement threshold
    /// 1e-4, at most 200 epochs.
    pub fn reference_for(cascade: bool) -> Self {
        TrainConfig {
            learning_rate: if cascade { 1e-2 } else { 4e-3 },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TnError::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(TnError::Config("learning_rate must be positive".into()));
        }
        if self.patience > self.max_epochs && self.max_epochs > 0 {
            return Err(TnError::Config(
                "patience must not exceed max_epochs".into(),
            ));
        }
        let (a, b, c) = self.splits;
        if a < 0.0 || b < 0.0 || c < 0.0 || a + b + c > 1.0 + 1e-9 {
            return Err(TnError::Config(
                "split fractions must be nonnegative and sum to at most 1".into(),
            ));
        }
        Ok(())
    }
}

/// Adam optimizer state; moment buffers mirror the model weight shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(model: &TnModel, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = |model: &TnModel| {
            model
                .layers
                .iter()
                .map(|l| l.sites().iter().map(|t| vec![0.0; t.len()]).collect())
                .collect()
        };
        AdamState {
            m: zeros(model),
            v: zeros(model),
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn apply(&mut self, model: &mut TnModel, grads: &[Vec<DenseTensor>], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (l, layer_grads) in grads.iter().enumerate() {
            for (s, g) in layer_grads.iter().enumerate() {
                let w = model.layers[l].site_mut(s);
                let m = &mut self.m[l][s];
                let v = &mut self.v[l][s];
                for (k, &gk) in g.data().iter().enumerate() {
                    m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                    v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    w.data_mut()[k] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub stopped_epoch: usize,
    pub aborted: Option<String>,
}

#[derive(Debug)]
pub struct TrainReport {
    pub model: TnModel,
    pub history: TrainHistory,
}

/// Mean loss of a model over embedded inputs, forward only.
pub fn mean_loss(model: &TnModel, inputs: &[Vec<Vec<f64>>], params: &LossParams) -> Result<f64> {
    if inputs.is_empty() {
        return Err(TnError::Config("loss over an empty sample".into()));
    }
    let mut total = 0.0;
    for x in inputs {
        total += loss(chain_norm_sq(model, x)?, params);
    }
    Ok(total / inputs.len() as f64)
}

/// Minibatch Adam with early stopping, over pre-embedded site inputs.
/// Returns the best-validation checkpoint and the per-epoch history.
pub fn train_embedded(
    model: &TnModel,
    train_inputs: &[Vec<Vec<f64>>],
    valid_inputs: &[Vec<Vec<f64>>],
    cfg: &TrainConfig,
    params: &LossParams,
) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.max_epochs == 0 {
        return Ok(TrainReport {
            model: model.clone(),
            history: TrainHistory {
                epochs: vec![],
                best_epoch: None,
                stopped_epoch: 0,
                aborted: None,
            },
        });
    }
    if train_inputs.is_empty() || valid_inputs.is_empty() {
        return Err(TnError::Config(
            "training and validation samples must be nonempty".into(),
        ));
    }

    let mut work = model.clone();
    let mut adam = AdamState::new(&work, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = TrainHistory {
        epochs: vec![],
        best_epoch: None,
        stopped_epoch: 0,
        aborted: None,
    };
    let mut best_valid = f64::INFINITY;
    let mut best_model = work.clone();
    let mut best_for_patience = f64::INFINITY;
    let mut since_improvement = 0usize;

    let mut order: Vec<usize> = (0..train_inputs.len()).collect();
    'epochs: for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut accum: Vec<Vec<DenseTensor>> = work
                .layers
                .iter()
                .map(|l| l.sites().iter().map(|t| DenseTensor::zeros(t.shape())).collect())
                .collect();
            let mut batch_ok = true;
            for &idx in batch {
                let result = grad(&work, &train_inputs[idx], params)?;
                if !result.loss.is_finite() {
                    history.aborted = Some(format!(
                        "loss became non-finite at epoch {epoch} (norm_sq {})",
                        result.norm_sq
                    ));
                    batch_ok = false;
                    break;
                }
                train_loss_sum += result.loss;
                for (l, per_layer) in result.grads.iter().enumerate() {
                    for (s, g) in per_layer.iter().enumerate() {
                        for (a, &b) in accum[l][s].data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                }
            }
            if !batch_ok {
                history.stopped_epoch = epoch;
                break 'epochs;
            }
            let scale = 1.0 / batch.len() as f64;
            for per_layer in &mut accum {
                for g in per_layer {
                    for x in g.data_mut() {
                        *x *= scale;
                    }
                }
            }
            adam.apply(&mut work, &accum, cfg.learning_rate);
        }

        let train_loss = train_loss_sum / train_inputs.len() as f64;
        let valid_loss = mean_loss(&work, valid_inputs, params)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
        });
        history.stopped_epoch = epoch;

        if valid_loss < best_valid {
            best_valid = valid_loss;
            best_model = work.clone();
            history.best_epoch = Some(epoch);
        }
        if best_for_patience - valid_loss > cfg.min_delta {
            best_for_patience = valid_loss;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainReport {
        model: best_model,
        history,
    })
}

fn embed_all(model: &TnModel, events: &[EventRecord]) -> Result<Vec<Vec<Vec<f64>>>> {
    events
        .iter()
        .map(|e| {
            let mps = embed(e, &model.ordering)?;
            Ok(mps.sites.iter().map(|s| s.values.to_vec()).collect())
        })
        .collect()
}

/// Train on raw events: embeds them with the model's site ordering, then
/// runs [`train_embedded`].
pub fn train(
    model: &TnModel,
    train_events: &[EventRecord],
    valid_events: &[EventRecord],
    cfg: &TrainConfig,
    params: &LossParams,
) -> Result<TrainReport> {
    let train_inputs = embed_all(model, train_events)?;
    let valid_inputs = embed_all(model, valid_events)?;
    train_embedded(model, &train_inputs, &valid_inputs, cfg, params)
}

/// Anomaly-score calibration: the median squared norm of the background
/// test sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoreCalibration {
    pub median_bkg: f64,
}

impl ScoreCalibration {
    pub fn from_norms(norms: &[f64]) -> Result<Self> {
        if norms.is_empty() {
            return Err(TnError::Config(
                "calibration needs a nonempty background sample".into(),
            ));
        }
        if norms.iter().any(|x| !x.is_finite()) {
            return Err(TnError::Numeric("non-finite norm in calibration".into()));
        }
        let mut sorted = norms.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Ok(ScoreCalibration { median_bkg: median })
    }
}

/// Absolute deviation of the squared norm from the background median.
pub fn anomaly_score(norm_sq: f64, cal: &ScoreCalibration) -> f64 {
    (norm_sq - cal.median_bkg).abs()
}
