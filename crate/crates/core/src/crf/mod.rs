//! Linear-chain conditional random field.
//!
//! The score of a labeling `y` for feature vectors `x` decomposes as
//!
//! ```text
//! score(x, y) = start[y_0] + sum_t emit(t, y_t) + sum_{t>0} trans[y_{t-1}][y_t] + end[y_{n-1}]
//! emit(t, l)  = sum_{f in x_t} w_emit[f][l]
//! ```
//!
//! and `P(y | x) = exp(score(x, y)) / Z(x)`.

mod io;
mod lattice;
mod train;

pub use io::{MAGIC, load_model, save_model};
pub use lattice::{Lattice, forward_backward, logsumexp, viterbi, viterbi_constrained};
pub use train::{
    Instance, IterationRecord, TrainConfig, TrainOutcome, nll_and_gradient, train, train_observed,
};

use crate::conll::LabelSchema;
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, FeatureTemplateConfig, FeatureVector};

/// Offsets of the weight blocks inside the flat parameter vector:
/// emissions (F x L, row-major by feature), transitions (L x L, row =
/// source label), start (L), end (L).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_features: usize,
    pub n_labels: usize,
}

impl Layout {
    pub fn new(n_features: usize, n_labels: usize) -> Self {
        Self {
            n_features,
            n_labels,
        }
    }

    pub fn len(&self) -> usize {
        self.n_features * self.n_labels + self.n_labels * self.n_labels + 2 * self.n_labels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn emit(&self, feature: usize, label: usize) -> usize {
        feature * self.n_labels + label
    }

    #[inline]
    pub fn trans(&self, from: usize, to: usize) -> usize {
        self.n_features * self.n_labels + from * self.n_labels + to
    }

    #[inline]
    pub fn start(&self, label: usize) -> usize {
        self.n_features * self.n_labels + self.n_labels * self.n_labels + label
    }

    #[inline]
    pub fn end(&self, label: usize) -> usize {
        self.start(label) + self.n_labels
    }
}

/// Borrowed weights with their layout.
#[derive(Debug, Clone, Copy)]
pub struct Params<'a> {
    pub layout: Layout,
    pub weights: &'a [f64],
}

impl<'a> Params<'a> {
    pub fn new(layout: Layout, weights: &'a [f64]) -> Self {
        debug_assert_eq!(layout.len(), weights.len());
        Self { layout, weights }
    }

    #[inline]
    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.weights[self.layout.trans(from, to)]
    }

    #[inline]
    pub fn start(&self, label: usize) -> f64 {
        self.weights[self.layout.start(label)]
    }

    #[inline]
    pub fn end(&self, label: usize) -> f64 {
        self.weights[self.layout.end(label)]
    }

    /// Emission scores, `n x L` row-major.
    pub fn emissions(&self, features: &[FeatureVector]) -> Vec<f64> {
        let l = self.layout.n_labels;
        let mut out = vec![0.0; features.len() * l];
        for (row, fv) in out.chunks_exact_mut(l).zip(features) {
            for &f in fv.ids() {
                let base = self.layout.emit(f as usize, 0);
                for (o, w) in row.iter_mut().zip(&self.weights[base..base + l]) {
                    *o += w;
                }
            }
        }
        out
    }

    /// Forward-backward tables for any label count.
    pub fn lattice(&self, features: &[FeatureVector]) -> Lattice {
        lattice::lattice(self, features)
    }

    /// Unconstrained best path, same tie-break as [`viterbi`].
    pub fn viterbi(&self, features: &[FeatureVector]) -> Vec<usize> {
        lattice::viterbi_params(self, features, None)
    }

    pub fn sequence_score(&self, features: &[FeatureVector], labels: &[usize]) -> Result<f64> {
        if labels.len() != features.len() || labels.is_empty() {
            return Err(Error::Invalid(format!(
                "{} labels for {} positions",
                labels.len(),
                features.len()
            )));
        }
        let l = self.layout.n_labels;
        if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
            return Err(Error::Invalid(format!("label id {bad} out of range (L = {l})")));
        }
        let mut score = self.start(labels[0]) + self.end(labels[labels.len() - 1]);
        for (t, (fv, &y)) in features.iter().zip(labels).enumerate() {
            for &f in fv.ids() {
                score += self.weights[self.layout.emit(f as usize, y)];
            }
            if t > 0 {
                score += self.trans(labels[t - 1], y);
            }
        }
        Ok(score)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    schema: LabelSchema,
    index: FeatureIndex,
    template: FeatureTemplateConfig,
    weights: Vec<f64>,
    /// Forbid `I-X` transitions that do not continue an `X` entity when
    /// decoding.
    pub constrain_bio: bool,
}

impl CrfModel {
    /// A model with all weights zero.
    pub fn new(schema: LabelSchema, index: FeatureIndex, template: FeatureTemplateConfig) -> Self {
        let layout = Layout::new(index.len(), schema.len());
        Self {
            schema,
            index,
            template,
            weights: vec![0.0; layout.len()],
            constrain_bio: false,
        }
    }

    pub fn with_weights(
        schema: LabelSchema,
        index: FeatureIndex,
        template: FeatureTemplateConfig,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let layout = Layout::new(index.len(), schema.len());
        if weights.len() != layout.len() {
            return Err(Error::Invalid(format!(
                "{} weights for layout of size {}",
                weights.len(),
                layout.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("weights must be finite".into()));
        }
        Ok(Self {
            schema,
            index,
            template,
            weights,
            constrain_bio: false,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.index.len(), self.schema.len())
    }

    pub fn params(&self) -> Params<'_> {
        Params::new(self.layout(), &self.weights)
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn feature_index(&self) -> &FeatureIndex {
        &self.index
    }

    pub fn template(&self) -> &FeatureTemplateConfig {
        &self.template
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn n_labels(&self) -> usize {
        self.schema.len()
    }

    pub fn n_features(&self) -> usize {
        self.index.len()
    }

    pub fn emit(&self, feature: usize, label: usize) -> f64 {
        self.weights[self.layout().emit(feature, label)]
    }

    pub fn set_emit(&mut self, feature: usize, label: usize, value: f64) {
        let i = self.layout().emit(feature, label);
        self.weights[i] = value;
    }

    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.weights[self.layout().trans(from, to)]
    }

    pub fn set_trans(&mut self, from: usize, to: usize, value: f64) {
        let i = self.layout().trans(from, to);
        self.weights[i] = value;
    }

    pub fn start(&self, label: usize) -> f64 {
        self.weights[self.layout().start(label)]
    }

    pub fn set_start(&mut self, label: usize, value: f64) {
        let i = self.layout().start(label);
        self.weights[i] = value;
    }

    pub fn end(&self, label: usize) -> f64 {
        self.weights[self.layout().end(label)]
    }

    pub fn set_end(&mut self, label: usize, value: f64) {
        let i = self.layout().end(label);
        self.weights[i] = value;
    }

    /// `w . Phi(x, y)` for one labeling.
    pub fn sequence_score(&self, features: &[FeatureVector], labels: &[usize]) -> Result<f64> {
        self.params().sequence_score(features, labels)
    }

    /// Best labeling under the model's decoding settings.
    pub fn decode(&self, features: &[FeatureVector]) -> Vec<usize> {
        if features.is_empty() {
            return Vec::new();
        }
        if self.constrain_bio {
            viterbi_constrained(self, features).0
        } else {
            viterbi(self, features).0
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}
