//! Binary linear base learner: L2-regularized logistic (or squared-hinge)
//! models fit by deterministic full-batch gradient descent with a
//! backtracking line search, so the training loss never increases across
//! epochs and identical inputs give identical models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Logistic,
    /// Squared hinge, the margin-based alternative for closer SVM-style
    /// behavior. Scores still pass through the sigmoid.
    Hinge,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "hinge" => Ok(LossKind::Hinge),
            other => Err(Error::InvalidParam(format!("unknown loss `{other}`"))),
        }
    }
}

/// Base-learner hyperparameters, shared by every node model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    /// L2 regularization strength λ.
    pub l2: f64,
    /// Fixed optimizer epoch budget.
    pub epochs: usize,
    pub loss: LossKind,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams { l2: 1e-4, epochs: 100, loss: LossKind::Logistic }
    }
}

/// A trained binary linear model for one (meta-)label.
///
/// Degenerate training sets collapse to constant deciders: no positive
/// examples give a model that scores 0 everywhere, no negatives score 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LinearModel {
    Constant { positive: bool, target: u32 },
    Fitted {
        /// Sorted sparse weights, exactly the non-zero entries.
        weights: Vec<(u32, f64)>,
        bias: f64,
        target: u32,
    },
}

impl LinearModel {
    pub fn target(&self) -> u32 {
        match self {
            LinearModel::Constant { target, .. } | LinearModel::Fitted { target, .. } => *target,
        }
    }

    /// Calibrated score in [0, 1]: sigmoid of the margin, or exactly 0/1
    /// for constant models.
    pub fn score(&self, x: &[(u32, f64)]) -> f64 {
        match self {
            LinearModel::Constant { positive: true, .. } => 1.0,
            LinearModel::Constant { positive: false, .. } => 0.0,
            LinearModel::Fitted { weights, bias, .. } => sigmoid(margin(weights, *bias, x)),
        }
    }

    /// Hard bipartition decision: score ≥ 0.5 (margin ≥ 0).
    pub fn decide(&self, x: &[(u32, f64)]) -> bool {
        self.score(x) >= 0.5
    }
}

fn margin(weights: &[(u32, f64)], bias: f64, x: &[(u32, f64)]) -> f64 {
    let mut m = bias;
    let (mut i, mut j) = (0, 0);
    while i < weights.len() && j < x.len() {
        match weights[i].0.cmp(&x[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                m += weights[i].1 * x[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    m
}

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The regularized empirical risk of one binary problem:
/// mean loss over instances plus (λ/2)·‖w‖² (bias unregularized).
pub struct Objective<'a> {
    /// (sparse features, ±1 target)
    pub data: Vec<(&'a [(u32, f64)], f64)>,
    pub num_features: usize,
    pub l2: f64,
    pub loss: LossKind,
}

impl<'a> Objective<'a> {
    pub fn new(
        positives: &[&'a [(u32, f64)]],
        negatives: &[&'a [(u32, f64)]],
        num_features: usize,
        l2: f64,
        loss: LossKind,
    ) -> Self {
        let mut data = Vec::with_capacity(positives.len() + negatives.len());
        data.extend(positives.iter().map(|&x| (x, 1.0)));
        data.extend(negatives.iter().map(|&x| (x, -1.0)));
        Objective { data, num_features, l2, loss }
    }

    pub fn loss(&self, w: &[f64], b: f64) -> f64 {
        let n = self.data.len() as f64;
        let mut total = 0.0;
        for &(x, t) in &self.data {
            let m = dense_margin(w, b, x);
            total += match self.loss {
                LossKind::Logistic => softplus(-t * m),
                LossKind::Hinge => {
                    let gap = (1.0 - t * m).max(0.0);
                    gap * gap
                }
            };
        }
        total / n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Loss plus its gradient; `grad_w` is overwritten. Returns
    /// `(loss, grad_bias)`.
    pub fn loss_and_grad(&self, w: &[f64], b: f64, grad_w: &mut [f64]) -> (f64, f64) {
        debug_assert_eq!(w.len(), grad_w.len());
        let n = self.data.len() as f64;
        for (g, &wv) in grad_w.iter_mut().zip(w) {
            *g = self.l2 * wv;
        }
        let mut grad_b = 0.0;
        let mut total = 0.0;
        for &(x, t) in &self.data {
            let m = dense_margin(w, b, x);
            let (loss_i, dm) = match self.loss {
                // d/dm ln(1+e^{-tm}) = −t·σ(−t·m)
                LossKind::Logistic => (softplus(-t * m), -t * sigmoid(-t * m)),
                LossKind::Hinge => {
                    let gap = (1.0 - t * m).max(0.0);
                    (gap * gap, -2.0 * t * gap)
                }
            };
            total += loss_i;
            let scale = dm / n;
            for &(id, v) in x {
                grad_w[id as usize] += scale * v;
            }
            grad_b += scale;
        }
        (total / n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>(), grad_b)
    }
}

fn dense_margin(w: &[f64], b: f64, x: &[(u32, f64)]) -> f64 {
    let mut m = b;
    for &(id, v) in x {
        m += w[id as usize] * v;
    }
    m
}

/// Result of one gradient-descent run, with the per-epoch loss trace.
pub struct FitResult {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Loss after each accepted epoch, starting with the initial loss.
    /// Non-increasing by construction (Armijo backtracking).
    pub epoch_losses: Vec<f64>,
}

/// Full-batch gradient descent with backtracking line search. Runs at most
/// `epochs` accepted steps; stops early at a stationary point or when no
/// step length makes progress.
pub fn fit(objective: &Objective<'_>, epochs: usize) -> FitResult {
    let n = objective.num_features;
    let mut w = vec![0.0; n];
    let mut b = 0.0;
    let mut grad = vec![0.0; n];
    let mut trial_w = vec![0.0; n];

    let (mut loss, mut grad_b) = objective.loss_and_grad(&w, b, &mut grad);
    let mut losses = Vec::with_capacity(epochs + 1);
    losses.push(loss);
    let mut step = 1.0f64;

    for _ in 0..epochs {
        let gnorm2 = grad.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
        if gnorm2 <= 1e-24 {
            break;
        }
        // optimistic growth, then halve until sufficient decrease
        step = (step * 2.0).min(1e8);
        let mut accepted = false;
        while step >= 1e-18 {
            for ((tw, &wv), &g) in trial_w.iter_mut().zip(&w).zip(&grad) {
                *tw = wv - step * g;
            }
            let trial_b = b - step * grad_b;
            let trial_loss = objective.loss(&trial_w, trial_b);
            if trial_loss <= loss - 1e-4 * step * gnorm2 {
                std::mem::swap(&mut w, &mut trial_w);
                b = trial_b;
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        losses.push(loss);
        let (l, gb) = objective.loss_and_grad(&w, b, &mut grad);
        debug_assert!((l - loss).abs() <= 1e-9 * (1.0 + loss.abs()));
        loss = l;
        grad_b = gb;
    }

    FitResult { weights: w, bias: b, epoch_losses: losses }
}

/// Trains one binary model. Degenerate inputs (no positives or no
/// negatives) produce constant models without running the optimizer.
pub fn train_linear(
    positives: &[&[(u32, f64)]],
    negatives: &[&[(u32, f64)]],
    num_features: usize,
    target: u32,
    params: &LearnerParams,
) -> Result<LinearModel> {
    if positives.is_empty() && negatives.is_empty() {
        return Err(Error::NoInstances);
    }
    if positives.is_empty() {
        return Ok(LinearModel::Constant { positive: false, target });
    }
    if negatives.is_empty() {
        return Ok(LinearModel::Constant { positive: true, target });
    }
    let objective = Objective::new(positives, negatives, num_features, params.l2, params.loss);
    let result = fit(&objective, params.epochs);
    let weights: Vec<(u32, f64)> = result
        .weights
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v != 0.0)
        .map(|(i, &v)| (i as u32, v))
        .collect();
    Ok(LinearModel::Fitted { weights, bias: result.bias, target })
}
