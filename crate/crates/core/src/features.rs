//! Feature templates and the feature index.
//!
//! Every template instantiates indicator features as strings of the form
//! `name[offset]=value` (or `name=value` for position-only templates). The
//! [`FeatureIndex`] interns those strings into dense ids.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::clustering::{ClusterModel, EmbeddingTable};
use crate::conll::Sentence;
use crate::error::{Error, Result};
use crate::gazetteer::Gazetteer;

/// Which template families are active and with which parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureTemplateConfig {
    pub use_pos: bool,
    pub pos_window: usize,
    pub use_suffix: bool,
    pub suffix_lengths: Vec<usize>,
    pub use_prefix: bool,
    pub prefix_lengths: Vec<usize>,
    pub use_neighbors: bool,
    pub neighbor_window: usize,
    pub use_digit: bool,
    pub use_cluster: bool,
    pub use_gazetteer: bool,
    /// Lowercase ASCII letters in word, suffix and prefix features.
    pub lowercase: bool,
    /// Literal emitted for positions beyond the sentence edges. Must start
    /// with `<`, which is always escaped inside word values.
    pub boundary_pad: String,
}

impl Default for FeatureTemplateConfig {
    fn default() -> Self {
        Self {
            use_pos: false,
            pos_window: 2,
            use_suffix: true,
            suffix_lengths: vec![1, 2, 3, 4],
            use_prefix: true,
            prefix_lengths: vec![1, 2, 3],
            use_neighbors: true,
            neighbor_window: 2,
            use_digit: false,
            use_cluster: false,
            use_gazetteer: false,
            lowercase: true,
            boundary_pad: "<PAD>".to_string(),
        }
    }
}

impl FeatureTemplateConfig {
    /// Only the bias feature.
    pub fn bias_only() -> Self {
        Self {
            use_suffix: false,
            use_prefix: false,
            use_neighbors: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.use_suffix && self.suffix_lengths.contains(&0) {
            return Err(Error::Config("suffix lengths must be >= 1".into()));
        }
        if self.use_prefix && self.prefix_lengths.contains(&0) {
            return Err(Error::Config("prefix lengths must be >= 1".into()));
        }
        if !self.boundary_pad.starts_with('<') || self.boundary_pad.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!(
                "boundary_pad {:?} must start with '<' and contain no whitespace",
                self.boundary_pad
            )));
        }
        Ok(())
    }
}

/// Last `n` extended grapheme clusters of `word`.
pub fn suffix(word: &str, n: usize) -> &str {
    match word.grapheme_indices(true).rev().nth(n.saturating_sub(1)) {
        Some((start, _)) if n > 0 => &word[start..],
        _ if n == 0 => "",
        _ => word,
    }
}

/// First `n` extended grapheme clusters of `word`.
pub fn prefix(word: &str, n: usize) -> &str {
    match word.grapheme_indices(true).nth(n) {
        Some((end, _)) => &word[..end],
        None => word,
    }
}

/// True iff the word is non-empty and made only of ASCII or Bangla digits.
pub fn is_digit_token(word: &str) -> bool {
    !word.is_empty()
        && word
            .chars()
            .all(|c| c.is_ascii_digit() || ('\u{09E6}'..='\u{09EF}').contains(&c))
}

/// Escapes `\`, `=` and `<` so that values never collide with separators or
/// the boundary pad.
fn escape(value: &str) -> Cow<'_, str> {
    if !value.contains(['\\', '=', '<']) {
        return Cow::Borrowed(value);
    }
    let mut out = String::with_capacity(value.len() + 2);
    for c in value.chars() {
        if matches!(c, '\\' | '=' | '<') {
            out.push('\\');
        }
        out.push(c);
    }
    Cow::Owned(out)
}

fn offset_tag(offset: isize) -> String {
    if offset > 0 {
        format!("+{offset}")
    } else {
        offset.to_string()
    }
}

fn fold_case<'a>(word: &'a str, config: &FeatureTemplateConfig) -> Cow<'a, str> {
    if config.lowercase && word.bytes().any(|b| b.is_ascii_uppercase()) {
        Cow::Owned(word.to_ascii_lowercase())
    } else {
        Cow::Borrowed(word)
    }
}

/// Feature strings active at `position`.
pub fn extract_features(
    sentence: &Sentence,
    position: usize,
    config: &FeatureTemplateConfig,
    cluster_lookup: Option<&dyn Fn(&str) -> usize>,
    gazetteer_hits: Option<&[BTreeSet<String>]>,
) -> Result<Vec<String>> {
    let tokens = &sentence.tokens;
    let n = tokens.len();
    assert!(position < n, "position {position} out of range for length {n}");
    let pad = config.boundary_pad.as_str();
    let at = |offset: isize| -> Option<usize> {
        let i = position as isize + offset;
        (0..n as isize).contains(&i).then_some(i as usize)
    };

    let mut out = vec!["bias".to_string()];

    if config.use_neighbors {
        let k = config.neighbor_window as isize;
        for o in -k..=k {
            let value = match at(o) {
                Some(i) => escape(&fold_case(&tokens[i].surface, config)).into_owned(),
                None => pad.to_string(),
            };
            out.push(format!("w[{}]={value}", offset_tag(o)));
        }
    }

    if config.use_pos {
        let k = config.pos_window as isize;
        for o in -k..=k {
            let value = match at(o) {
                Some(i) => {
                    let pos = tokens[i].pos.as_deref().ok_or_else(|| {
                        Error::Config(format!(
                            "POS features enabled but token {i} ({:?}) has no POS tag",
                            tokens[i].surface
                        ))
                    })?;
                    escape(pos).into_owned()
                }
                None => pad.to_string(),
            };
            out.push(format!("pos[{}]={value}", offset_tag(o)));
        }
    }

    let word = fold_case(&tokens[position].surface, config);
    if config.use_suffix {
        for &len in &config.suffix_lengths {
            out.push(format!("suf{len}={}", escape(suffix(&word, len))));
        }
    }
    if config.use_prefix {
        for &len in &config.prefix_lengths {
            out.push(format!("pre{len}={}", escape(prefix(&word, len))));
        }
    }

    if config.use_digit {
        out.push(format!("digit={}", is_digit_token(&tokens[position].surface)));
    }

    if config.use_cluster {
        let lookup = cluster_lookup
            .ok_or_else(|| Error::Config("cluster features enabled but no clusters supplied".into()))?;
        for o in -1..=1 {
            let value = match at(o) {
                Some(i) => lookup(&tokens[i].surface).to_string(),
                None => pad.to_string(),
            };
            out.push(format!("cluster[{}]={value}", offset_tag(o)));
        }
    }

    if config.use_gazetteer {
        let hits = gazetteer_hits
            .ok_or_else(|| Error::Config("gazetteer features enabled but no gazetteer supplied".into()))?;
        for ty in &hits[position] {
            out.push(format!("gaz={}", escape(ty)));
        }
    }

    Ok(out)
}

/// Word to POS tag lexicon, one `word<TAB>tag` per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PosLexicon {
    tags: HashMap<String, String>,
}

impl PosLexicon {
    /// Tag given to words missing from the lexicon.
    pub const UNKNOWN: &'static str = "UNK";

    pub fn parse(text: &str) -> Result<Self> {
        let mut tags = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected word<TAB>tag"))?;
            let tag = tag.trim();
            if word.is_empty() || tag.is_empty() {
                return Err(Error::parse(i + 1, "empty word or tag"));
            }
            tags.insert(crate::conll::normalize(word), tag.to_string());
        }
        Ok(Self { tags })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn tag(&self, word: &str) -> &str {
        self.tags.get(word).map_or(Self::UNKNOWN, String::as_str)
    }
}

/// External resources the templates may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lookups<'a> {
    pub clusters: Option<&'a ClusterModel>,
    /// Vectors for words the cluster model has not seen.
    pub embeddings: Option<&'a EmbeddingTable>,
    pub gazetteer: Option<&'a Gazetteer>,
    /// Fills in POS tags for tokens that carry none.
    pub pos_lexicon: Option<&'a PosLexicon>,
}

impl Lookups<'_> {
    /// Names the resources `config` needs but `self` lacks.
    pub fn missing(&self, config: &FeatureTemplateConfig) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if config.use_cluster && self.clusters.is_none() {
            missing.push("clusters");
        }
        if config.use_gazetteer && self.gazetteer.is_none() {
            missing.push("gazetteers");
        }
        missing
    }
}

/// Feature strings for every position of a sentence.
pub fn sentence_features(
    sentence: &Sentence,
    config: &FeatureTemplateConfig,
    lookups: &Lookups<'_>,
) -> Result<Vec<Vec<String>>> {
    let needs_pos = config.use_pos && sentence.tokens.iter().any(|t| t.pos.is_none());
    let filled;
    let sentence = match (needs_pos, lookups.pos_lexicon) {
        (true, Some(lexicon)) => {
            let mut s = sentence.clone();
            for t in s.tokens.iter_mut().filter(|t| t.pos.is_none()) {
                t.pos = Some(lexicon.tag(&t.surface).to_string());
            }
            filled = s;
            &filled
        }
        _ => sentence,
    };
    let hits = match (config.use_gazetteer, lookups.gazetteer) {
        (true, Some(g)) => Some(g.match_positions(&sentence.surfaces().collect::<Vec<_>>())),
        _ => None,
    };
    let cluster_fn = lookups
        .clusters
        .map(|c| move |w: &str| c.assign(w, lookups.embeddings));
    let cluster_ref = cluster_fn.as_ref().map(|f| f as &dyn Fn(&str) -> usize);
    (0..sentence.len())
        .map(|i| extract_features(sentence, i, config, cluster_ref, hits.as_deref()))
        .collect()
}

/// Sorted, distinct feature ids active at one position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector(Vec<u32>);

impl FeatureVector {
    pub fn from_ids(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Bidirectional map between feature strings and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureIndex {
    ids: HashMap<String, u32>,
    names: Vec<String>,
    frozen: bool,
}

impl FeatureIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// A frozen index over `names`, ids in order.
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if ids.insert(name.clone(), i as u32).is_some() {
                return Err(Error::Invalid(format!("duplicate feature {name:?}")));
            }
        }
        Ok(Self {
            ids,
            names,
            frozen: true,
        })
    }

    /// Id of `feature`, assigning the next id if unseen and not frozen.
    pub fn intern(&mut self, feature: &str) -> Option<u32> {
        if let Some(&id) = self.ids.get(feature) {
            return Some(id);
        }
        if self.frozen {
            return None;
        }
        let id = u32::try_from(self.names.len()).expect("feature index overflow");
        self.ids.insert(feature.to_string(), id);
        self.names.push(feature.to_string());
        Some(id)
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.ids.get(feature).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Vector over known features only; unseen strings are dropped.
    pub fn lookup<S: AsRef<str>>(&self, features: &[S]) -> FeatureVector {
        FeatureVector::from_ids(features.iter().filter_map(|f| self.get(f.as_ref())).collect())
    }
}

const BLOCK: usize = 512;

/// Builds and freezes an index over every feature string in the corpus and
/// returns the per-position vectors. Strings are extracted in parallel per
/// block and interned in corpus order, so ids do not depend on threading.
pub fn index_corpus(
    sentences: &[Sentence],
    config: &FeatureTemplateConfig,
    lookups: &Lookups<'_>,
) -> Result<(FeatureIndex, Vec<Vec<FeatureVector>>)> {
    let mut index = FeatureIndex::new();
    let mut vectors = Vec::with_capacity(sentences.len());
    for block in sentences.chunks(BLOCK) {
        let strings = block
            .par_iter()
            .map(|s| sentence_features(s, config, lookups))
            .collect::<Result<Vec<_>>>()?;
        for sentence in strings {
            vectors.push(
                sentence
                    .iter()
                    .map(|position| {
                        FeatureVector::from_ids(
                            position.iter().filter_map(|f| index.intern(f)).collect(),
                        )
                    })
                    .collect(),
            );
        }
    }
    index.freeze();
    Ok((index, vectors))
}

/// Vectors for a corpus against an existing (frozen) index.
pub fn vectorize_corpus(
    index: &FeatureIndex,
    sentences: &[Sentence],
    config: &FeatureTemplateConfig,
    lookups: &Lookups<'_>,
) -> Result<Vec<Vec<FeatureVector>>> {
    sentences
        .par_iter()
        .map(|s| {
            Ok(sentence_features(s, config, lookups)?
                .iter()
                .map(|p| index.lookup(p))
                .collect())
        })
        .collect()
}
