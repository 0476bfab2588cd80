use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{GinModel, GraphBatch};
use super::tape::Tape;
use super::tensor::Tensor;
use super::GinError;
use crate::fingerprints::FoldedFingerprint;
use crate::hash::derive_indexed;
use crate::vocab::TokenizedGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub lr_half_life_epochs: f64,
    pub lr_start_factor: f64,
    /// Multiplier `c` in `lr = c · d_model^-0.5`.
    pub lr_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            warmup_epochs: 2,
            lr_half_life_epochs: 5.0,
            lr_start_factor: 0.5,
            lr_scale: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GinError> {
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(GinError::Config(format!(
                "warm-up ({}) must be shorter than the run ({} epochs)",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.lr_half_life_epochs > 0.0) {
            return Err(GinError::Config("learning-rate half-life must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(GinError::Config("batch_size must be positive".into()));
        }
        if !(self.lr_scale > 0.0) {
            return Err(GinError::Config("lr_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn base_lr(&self, d_model: usize) -> f64 {
        self.lr_scale / (d_model as f64).sqrt()
    }

    /// Learning rate used throughout `epoch` (0-based).
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            let frac = epoch as f64 / self.warmup_epochs as f64;
            base * self.lr_start_factor + base * (1.0 - self.lr_start_factor) * frac
        } else {
            let t = (epoch - self.warmup_epochs) as f64;
            base * 2f64.powf(-t / self.lr_half_life_epochs)
        }
    }
}

/// Balanced per-bit weights `n_neg / n_pos` and a mask that drops bits which
/// are constant over the corpus.
pub fn bit_weights(targets: &[FoldedFingerprint]) -> Result<(Vec<f64>, Vec<f64>), GinError> {
    let nbits = targets.first().map_or(0, FoldedFingerprint::nbits);
    let mut pos = vec![0usize; nbits];
    for t in targets {
        for b in t.ones() {
            pos[b] += 1;
        }
    }
    let n = targets.len();
    if pos.iter().all(|&p| p == 0) {
        return Err(GinError::DegenerateTarget);
    }
    let mut weight = vec![0.0; nbits];
    let mut mask = vec![0.0; nbits];
    for b in 0..nbits {
        if pos[b] > 0 && pos[b] < n {
            weight[b] = (n - pos[b]) as f64 / pos[b] as f64;
            mask[b] = 1.0;
        }
    }
    Ok((weight, mask))
}

struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: i32,
}

impl Adam {
    fn new(model: &GinModel) -> Self {
        let zeros = || {
            model
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Adam {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut GinModel, grads: &[Option<Tensor>], lr: f64, tc: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - tc.beta1.powi(self.step);
        let c2 = 1.0 - tc.beta2.powi(self.step);
        for (i, p) in model.params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let Some(g) = &grads[i] else { continue };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                let gj = g.data()[j];
                m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * gj;
                v[j] = tc.beta2 * v[j] + (1.0 - tc.beta2) * gj * gj;
                *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + tc.adam_eps);
            }
        }
    }
}

/// Result of a pre-training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub d_model: usize,
    pub base_lr: f64,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    pub lr_history: Vec<f64>,
}

/// Multi-label fingerprint-bit pre-training with weighted BCE and Adam.
pub fn pretrain(
    model: &mut GinModel,
    corpus: &[TokenizedGraph],
    targets: &[FoldedFingerprint],
    tc: &TrainConfig,
) -> Result<TrainReport, GinError> {
    tc.validate()?;
    if corpus.len() != targets.len() {
        return Err(GinError::Shape(format!(
            "{} molecules but {} targets",
            corpus.len(),
            targets.len()
        )));
    }
    let out = model.config.output_dim;
    if let Some(t) = targets.iter().find(|t| t.nbits() != out) {
        return Err(GinError::TargetWidth {
            expected: out,
            found: t.nbits(),
        });
    }
    let d_model = model.parameter_count();
    let base = tc.base_lr(d_model);
    let mut report = TrainReport {
        d_model,
        base_lr: base,
        loss_history: Vec::new(),
        lr_history: Vec::new(),
    };
    if tc.epochs == 0 {
        return Ok(report);
    }
    let (weight, mask) = bit_weights(targets)?;
    let active = mask.iter().filter(|&&m| m > 0.0).count();
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..tc.epochs {
        let lr = tc.lr_at(base, epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(tc.seed, "pretrain-epoch", &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(tc.batch_size).enumerate() {
            let graphs: Vec<&TokenizedGraph> = chunk.iter().map(|&i| &corpus[i]).collect();
            let batch = GraphBatch::new(&graphs);
            let y = Tensor::from_rows(&chunk.iter().map(|&i| targets[i].to_dense()).collect::<Vec<_>>());
            let mut drop_rng =
                ChaCha8Rng::seed_from_u64(derive_indexed(tc.seed, "pretrain-dropout", &[epoch as u64, bi as u64]));
            let mut tape = Tape::new();
            let f = model.forward(&mut tape, &batch, None, Some(&mut drop_rng))?;
            let norm = (chunk.len() * active.max(1)) as f64;
            let loss = tape.bce_with_logits(f.logits, y, weight.clone(), mask.clone(), norm);
            total += tape.value(loss).item();
            batches += 1;
            let grads = tape.backward(loss)?;
            let per_param: Vec<Option<Tensor>> = (0..model.params.len()).map(|i| grads.param(i).cloned()).collect();
            adam.update(model, &per_param, lr, tc);
            model.params[0].value.row_mut(0).fill(0.0);
        }
        report.loss_history.push(total / batches.max(1) as f64);
        report.lr_history.push(lr);
    }
    Ok(report)
}
