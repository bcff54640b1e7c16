//! Maximum-likelihood training with L2 regularization.
//!
//! The objective is `sum_s (log Z(x_s) - score(x_s, y_s)) + l2/2 * |w|^2`,
//! minimized from zero weights by L-BFGS with an Armijo backtracking line
//! search, so every accepted step lowers the objective.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lattice::lattice;
use super::{CrfModel, Layout, Params};
use crate::conll::LabelSchema;
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, FeatureTemplateConfig, FeatureVector};

/// One training sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iterations: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tolerance: f64,
    /// Unused by the default zero-initialized path; kept so every run is
    /// fully described by its config.
    pub seed: u64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iterations: 200,
            tolerance: 1e-5,
            seed: 0,
            memory: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be finite and >= 0, got {}", self.l2)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if self.memory == 0 {
            return Err(Error::Config("memory must be >= 1".into()));
        }
        Ok(())
    }
}

/// Objective after an accepted iteration (iteration 0 is the start point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CrfModel,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

struct SentenceExpectations {
    log_z: f64,
    gold_score: f64,
    /// `n x L` marginals.
    marginals: Vec<f64>,
    /// Expected transition counts summed over positions, `L x L`.
    pairs: Vec<f64>,
}

fn expectations(params: &Params<'_>, inst: &Instance) -> SentenceExpectations {
    let l = params.layout.n_labels;
    let lat = lattice(params, &inst.features);
    let n = lat.n;
    let mut marginals = vec![0.0; n * l];
    for t in 0..n {
        for y in 0..l {
            marginals[t * l + y] = lat.marginal(t, y);
        }
    }
    let mut pairs = vec![0.0; l * l];
    for t in 1..n {
        for a in 0..l {
            for b in 0..l {
                pairs[a * l + b] += lat.pair_marginal(params, t, a, b);
            }
        }
    }
    SentenceExpectations {
        log_z: lat.log_z,
        gold_score: params
            .sequence_score(&inst.features, &inst.labels)
            .expect("instance labels are validated"),
        marginals,
        pairs,
    }
}

/// Regularized negative log-likelihood and its exact gradient.
///
/// Sentences are processed in parallel; their contributions are summed in
/// corpus order, so the result does not depend on the thread count.
pub(crate) fn objective(layout: Layout, weights: &[f64], batch: &[Instance], l2: f64) -> (f64, Vec<f64>) {
    let params = Params::new(layout, weights);
    let l = layout.n_labels;
    let per_sentence: Vec<SentenceExpectations> =
        batch.par_iter().map(|inst| expectations(&params, inst)).collect();

    let mut value = 0.0;
    let mut grad = vec![0.0; layout.len()];
    for (inst, ex) in batch.iter().zip(&per_sentence) {
        value += ex.log_z - ex.gold_score;
        let n = inst.features.len();
        for (t, fv) in inst.features.iter().enumerate() {
            let marg = &ex.marginals[t * l..(t + 1) * l];
            for &f in fv.ids() {
                let base = layout.emit(f as usize, 0);
                for (g, m) in grad[base..base + l].iter_mut().zip(marg) {
                    *g += m;
                }
                grad[base + inst.labels[t]] -= 1.0;
            }
        }
        let tbase = layout.trans(0, 0);
        for (g, p) in grad[tbase..tbase + l * l].iter_mut().zip(&ex.pairs) {
            *g += p;
        }
        for t in 1..n {
            grad[layout.trans(inst.labels[t - 1], inst.labels[t])] -= 1.0;
        }
        for y in 0..l {
            grad[layout.start(y)] += ex.marginals[y];
            grad[layout.end(y)] += ex.marginals[(n - 1) * l + y];
        }
        grad[layout.start(inst.labels[0])] -= 1.0;
        grad[layout.end(inst.labels[n - 1])] -= 1.0;
    }
    if l2 > 0.0 {
        let mut sq = 0.0;
        for (g, w) in grad.iter_mut().zip(weights) {
            *g += l2 * w;
            sq += w * w;
        }
        value += 0.5 * l2 * sq;
    }
    (value, grad)
}

fn check_batch(model_layout: Layout, batch: &[Instance]) -> Result<()> {
    for (s, inst) in batch.iter().enumerate() {
        if inst.features.is_empty() || inst.features.len() != inst.labels.len() {
            return Err(Error::Invalid(format!(
                "sentence {s}: {} positions, {} labels",
                inst.features.len(),
                inst.labels.len()
            )));
        }
        if inst.labels.iter().any(|&y| y >= model_layout.n_labels) {
            return Err(Error::Invalid(format!("sentence {s}: label id out of range")));
        }
        if inst
            .features
            .iter()
            .flat_map(|fv| fv.ids())
            .any(|&f| f as usize >= model_layout.n_features)
        {
            return Err(Error::Invalid(format!("sentence {s}: feature id out of range")));
        }
    }
    Ok(())
}

/// Objective and gradient at the model's current weights.
pub fn nll_and_gradient(model: &CrfModel, batch: &[Instance], l2: f64) -> Result<(f64, Vec<f64>)> {
    check_batch(model.layout(), batch)?;
    Ok(objective(model.layout(), model.weights(), batch, l2))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// L-BFGS two-loop recursion: returns `-H g`.
fn lbfgs_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Trains a CRF from zero weights.
pub fn train(
    schema: LabelSchema,
    index: FeatureIndex,
    template: FeatureTemplateConfig,
    corpus: &[Instance],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(schema, index, template, corpus, config, |_| {})
}

/// [`train`], calling `observer` with every accepted iteration as it
/// happens.
pub fn train_observed(
    schema: LabelSchema,
    index: FeatureIndex,
    template: FeatureTemplateConfig,
    corpus: &[Instance],
    config: &TrainConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Invalid("training corpus is empty".into()));
    }
    if !index.is_frozen() {
        return Err(Error::Invalid("feature index must be frozen before training".into()));
    }
    let mut model = CrfModel::new(schema, index, template);
    let layout = model.layout();
    check_batch(layout, corpus)?;

    let eval = |w: &[f64]| objective(layout, w, corpus, config.l2);
    let mut x = model.weights().to_vec();
    let (mut fx, mut gx) = eval(&x);
    if !fx.is_finite() {
        return Err(Error::Training {
            iteration: 0,
            message: format!("objective is {fx}"),
        });
    }
    let mut log = vec![IterationRecord {
        iteration: 0,
        objective: fx,
        gradient_norm: norm(&gx),
        step: 0.0,
    }];
    observer(&log[0]);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let gnorm = norm(&gx);
        if gnorm <= 1e-12 {
            converged = true;
            break;
        }
        let mut dir = lbfgs_direction(&gx, &history);
        let mut slope = dot(&gx, &dir);
        if slope >= 0.0 || !slope.is_finite() {
            history.clear();
            dir = gx.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if history.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = eval(&candidate);
            if !fc.is_finite() {
                return Err(Error::Training {
                    iteration,
                    message: format!("objective is {fc}"),
                });
            }
            if fc <= fx + ARMIJO_C1 * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // no decrease representable along the search direction
            converged = true;
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let decrease = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        fx = f_new;
        gx = g_new;
        log.push(IterationRecord {
            iteration,
            objective: fx,
            gradient_norm: norm(&gx),
            step,
        });
        observer(&log[log.len() - 1]);
        if decrease < config.tolerance {
            converged = true;
            break;
        }
    }

    model.weights_mut().copy_from_slice(&x);
    Ok(TrainOutcome {
        model,
        log,
        converged,
    })
}
