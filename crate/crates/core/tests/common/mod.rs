#![allow(dead_code)]

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crfner::conll::{Sentence, Token};
use crfner::features::FeatureVector;

pub const TOY_TYPES: [&str; 3] = ["LOC", "PER", "ORG"];

/// Sentences whose labels are determined by the word alone: entity words
/// come from per-type vocabularies split into begin and continuation
/// words, everything else from a filler vocabulary.
pub fn toy_corpus(n_sentences: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sentences)
        .map(|_| {
            let mut tokens = Vec::new();
            let len = rng.gen_range(3..=10);
            while tokens.len() < len {
                if rng.gen_bool(0.35) {
                    let ty = TOY_TYPES[rng.gen_range(0..TOY_TYPES.len())];
                    let lower = ty.to_ascii_lowercase();
                    tokens.push(
                        Token::new(format!("{lower}b{}", rng.gen_range(0..8)))
                            .with_label(format!("B-{ty}")),
                    );
                    for _ in 0..rng.gen_range(0..=2) {
                        tokens.push(
                            Token::new(format!("{lower}i{}", rng.gen_range(0..8)))
                                .with_label(format!("I-{ty}")),
                        );
                    }
                } else {
                    tokens.push(Token::new(format!("w{}", rng.gen_range(0..30))).with_label("O"));
                }
            }
            Sentence::new(tokens)
        })
        .collect()
}

pub fn to_conll(sentences: &[Sentence]) -> String {
    let mut text = String::new();
    for s in sentences {
        for t in &s.tokens {
            let _ = writeln!(text, "{} {}", t.surface, t.label.as_deref().unwrap_or("O"));
        }
        text.push('\n');
    }
    text
}

pub fn gold_labels(sentences: &[Sentence]) -> Vec<Vec<String>> {
    sentences
        .iter()
        .map(|s| s.labels().unwrap().into_iter().map(str::to_string).collect())
        .collect()
}

/// Random sparse feature vectors over `n_features` ids.
pub fn random_features(rng: &mut impl Rng, n: usize, n_features: usize) -> Vec<FeatureVector> {
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=n_features.min(3));
            FeatureVector::from_ids((0..k).map(|_| rng.gen_range(0..n_features as u32)).collect())
        })
        .collect()
}

/// Every labeling of length `n` over `l` labels, in lexicographic order.
pub fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Log-sum-exp written independently of the library.
pub fn naive_logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
