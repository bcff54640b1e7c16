use super::{CrfModel, Params};
use crate::conll::LabelSchema;
use crate::features::FeatureVector;

/// `log(sum_i exp(x_i))`, stable for large magnitudes.
pub fn logsumexp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Forward/backward tables for one sentence, all in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub n: usize,
    pub n_labels: usize,
    /// `n x L` emission scores.
    pub emissions: Vec<f64>,
    /// `log_alpha[t][l]`: log total score of prefixes ending in `l` at `t`,
    /// including the start weight and emission at `t`.
    pub log_alpha: Vec<f64>,
    /// `log_beta[t][l]`: log total score of suffixes after `t` given `l`,
    /// including the end weight.
    pub log_beta: Vec<f64>,
    pub log_z: f64,
}

impl Lattice {
    #[inline]
    pub fn alpha(&self, t: usize, l: usize) -> f64 {
        self.log_alpha[t * self.n_labels + l]
    }

    #[inline]
    pub fn beta(&self, t: usize, l: usize) -> f64 {
        self.log_beta[t * self.n_labels + l]
    }

    #[inline]
    pub fn emission(&self, t: usize, l: usize) -> f64 {
        self.emissions[t * self.n_labels + l]
    }

    /// `P(y_t = l | x)`.
    pub fn marginal(&self, t: usize, l: usize) -> f64 {
        (self.alpha(t, l) + self.beta(t, l) - self.log_z).exp()
    }

    /// `P(y_{t-1} = a, y_t = b | x)` for `t >= 1`.
    pub(crate) fn pair_marginal(&self, params: &Params<'_>, t: usize, a: usize, b: usize) -> f64 {
        (self.alpha(t - 1, a) + params.trans(a, b) + self.emission(t, b) + self.beta(t, b)
            - self.log_z)
            .exp()
    }
}

pub(crate) fn lattice(params: &Params<'_>, features: &[FeatureVector]) -> Lattice {
    let n = features.len();
    let l = params.layout.n_labels;
    assert!(n > 0, "empty sentence");
    let emissions = params.emissions(features);
    let mut log_alpha = vec![0.0; n * l];
    let mut log_beta = vec![0.0; n * l];

    for y in 0..l {
        log_alpha[y] = params.start(y) + emissions[y];
    }
    for t in 1..n {
        for b in 0..l {
            let prev = &log_alpha[(t - 1) * l..t * l];
            let acc = logsumexp((0..l).map(|a| prev[a] + params.trans(a, b)));
            log_alpha[t * l + b] = acc + emissions[t * l + b];
        }
    }

    for y in 0..l {
        log_beta[(n - 1) * l + y] = params.end(y);
    }
    for t in (0..n - 1).rev() {
        for a in 0..l {
            let next_beta = &log_beta[(t + 1) * l..(t + 2) * l];
            let next_emit = &emissions[(t + 1) * l..(t + 2) * l];
            log_beta[t * l + a] =
                logsumexp((0..l).map(|b| params.trans(a, b) + next_emit[b] + next_beta[b]));
        }
    }

    let last = &log_alpha[(n - 1) * l..];
    let log_z = logsumexp((0..l).map(|y| last[y] + params.end(y)));
    Lattice {
        n,
        n_labels: l,
        emissions,
        log_alpha,
        log_beta,
        log_z,
    }
}

/// Log partition function and marginal tables for one sentence.
pub fn forward_backward(model: &CrfModel, features: &[FeatureVector]) -> Lattice {
    lattice(&model.params(), features)
}

pub(crate) fn viterbi_params(
    params: &Params<'_>,
    features: &[FeatureVector],
    schema: Option<&LabelSchema>,
) -> Vec<usize> {
    let n = features.len();
    let l = params.layout.n_labels;
    assert!(n > 0, "empty sentence");
    let emissions = params.emissions(features);
    let allowed = |from: Option<usize>, to: usize| schema.is_none_or(|s| s.transition_allowed(from, to));
    let masked = |ok: bool, score: f64| if ok { score } else { f64::NEG_INFINITY };

    let mut delta: Vec<f64> = (0..l)
        .map(|y| masked(allowed(None, y), params.start(y) + emissions[y]))
        .collect();
    let mut back = vec![0usize; n * l];
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; l];
        for b in 0..l {
            let mut best = (0, f64::NEG_INFINITY);
            for (a, &d) in delta.iter().enumerate() {
                let s = masked(allowed(Some(a), b), d + params.trans(a, b));
                // strict comparison keeps the smallest label among ties
                if s > best.1 {
                    best = (a, s);
                }
            }
            back[t * l + b] = best.0;
            next[b] = best.1 + emissions[t * l + b];
        }
        delta = next;
    }
    let mut last = (0, f64::NEG_INFINITY);
    for (y, &d) in delta.iter().enumerate() {
        let s = d + params.end(y);
        if s > last.1 {
            last = (y, s);
        }
    }
    let mut path = vec![last.0; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t * l + path[t]];
    }
    path
}

/// Highest-scoring labeling and its score. Among equal-scoring paths the
/// backtrace picks the smallest label id at every step, starting from the
/// last position.
pub fn viterbi(model: &CrfModel, features: &[FeatureVector]) -> (Vec<usize>, f64) {
    let params = model.params();
    let path = viterbi_params(&params, features, None);
    let score = params.sequence_score(features, &path).expect("valid path");
    (path, score)
}

/// Like [`viterbi`] but illegal BIO transitions score `-inf`.
pub fn viterbi_constrained(model: &CrfModel, features: &[FeatureVector]) -> (Vec<usize>, f64) {
    let params = model.params();
    let path = viterbi_params(&params, features, Some(model.schema()));
    let score = params.sequence_score(features, &path).expect("valid path");
    (path, score)
}
