//! Training losses with analytic gradients.
//!
//! Classification uses focal loss, box regression Huber loss and the
//! embedding branch a plain squared-error loss against (truncated) teacher
//! embeddings. [`total_loss`] combines them with [`LossWeights`].

pub mod toy;

use thiserror::Error;

use crate::distill::StudentEmbedding;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("{preds} predictions but {targets} targets")]
    CountMismatch { preds: usize, targets: usize },
    #[error("pair {index}: prediction has dimension {pred}, target {target}")]
    DimensionMismatch {
        index: usize,
        pred: usize,
        target: usize,
    },
    #[error("invalid loss parameter: {0}")]
    Param(String),
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },
    #[error("invalid toy configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_c: f64,
    pub alpha_b: f64,
    pub alpha_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_c: 1.0,
            alpha_b: 50.0,
            alpha_e: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if [self.alpha_c, self.alpha_b, self.alpha_e]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(LossError::Param(
                "loss weights must be finite and >= 0".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 1.5,
        }
    }
}

impl FocalParams {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..=1.0).contains(&self.alpha) || !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(LossError::Param(
                "focal alpha in [0,1] and gamma >= 0 required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberParams {
    pub delta: f64,
}

impl Default for HuberParams {
    fn default() -> Self {
        Self { delta: 0.1 }
    }
}

impl HuberParams {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.delta.is_finite() && self.delta > 0.0 {
            Ok(())
        } else {
            Err(LossError::Param("huber delta must be > 0".into()))
        }
    }
}

/// Focal loss of predicted foreground probability `p` against label
/// `positive`, and its derivative with respect to `p`.
///
/// `p_t = p` for positives and `1 - p` for negatives; `alpha_t` is `alpha`
/// for positives and `1 - alpha` for negatives.
pub fn focal_loss(p: f64, positive: bool, params: &FocalParams) -> (f64, f64) {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let (pt, alpha_t, sign) = if positive {
        (p, params.alpha, 1.0)
    } else {
        (1.0 - p, 1.0 - params.alpha, -1.0)
    };
    let gamma = params.gamma;
    let q = 1.0 - pt;
    let ln_pt = pt.ln();
    let loss = -alpha_t * q.powf(gamma) * ln_pt;
    let dq = if gamma == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * ln_pt
    };
    let dloss_dpt = alpha_t * (dq - q.powf(gamma) / pt);
    (loss, sign * dloss_dpt)
}

/// Huber loss on the residual `pred - target` and its derivative w.r.t. `pred`.
pub fn huber_loss(pred: f64, target: f64, params: &HuberParams) -> (f64, f64) {
    let r = pred - target;
    let d = params.delta;
    if r.abs() <= d {
        (0.5 * r * r, r)
    } else {
        (d * (r.abs() - 0.5 * d), d * r.signum())
    }
}

/// Mean over pairs of the squared L2 distance, with gradients w.r.t. each
/// prediction. An empty batch has loss 0.
pub fn embedding_loss(
    preds: &[StudentEmbedding],
    targets: &[StudentEmbedding],
) -> Result<(f64, Vec<Vec<f64>>), LossError> {
    if preds.len() != targets.len() {
        return Err(LossError::CountMismatch {
            preds: preds.len(),
            targets: targets.len(),
        });
    }
    if preds.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = preds.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (index, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.dim() != t.dim() {
            return Err(LossError::DimensionMismatch {
                index,
                pred: p.dim(),
                target: t.dim(),
            });
        }
        let mut g = Vec::with_capacity(p.dim());
        for (pv, tv) in p.values().iter().zip(t.values()) {
            let r = pv - tv;
            total += r * r;
            g.push(2.0 * r / n);
        }
        grads.push(g);
    }
    Ok((total / n, grads))
}

pub fn total_loss(l_c: f64, l_b: f64, l_e: f64, w: &LossWeights) -> f64 {
    w.alpha_c * l_c + w.alpha_b * l_b + w.alpha_e * l_e
}

/// Compares an analytic gradient with central finite differences.
///
/// `f` returns the loss and its gradient at a point. The result is the
/// maximum over samples and coordinates of `|analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, samples: &[Vec<f64>], epsilon: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut worst: f64 = 0.0;
    for x in samples {
        let (_, analytic) = f(x);
        let mut probe = x.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe[i];
            probe[i] = orig + epsilon;
            let up = f(&probe).0;
            probe[i] = orig - epsilon;
            let down = f(&probe).0;
            probe[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}
