//! CoNLL corpus ingestion and serialization, BIO label discipline and
//! corpus statistics.
//!
//! A corpus is a sequence of sentences separated by blank lines. Each
//! non-blank row holds whitespace-separated columns whose meaning is given
//! by a [`ColumnSpec`].

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use unicode_normalization::{is_nfc, UnicodeNormalization};

use crate::error::{Error, Result};

/// Default entity types: location, group, product, creative work,
/// corporation, person.
pub const DEFAULT_ENTITY_TYPES: [&str; 6] = ["LOC", "GRP", "PROD", "CW", "CORP", "PER"];

pub const OUTSIDE: &str = "O";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub pos: Option<String>,
    pub label: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            pos: None,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_pos(mut self, pos: impl Into<String>) -> Self {
        self.pos = Some(pos.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self { tokens }
    }

    /// Builds a labeled sentence from `(surface, label)` pairs.
    pub fn from_pairs<S: AsRef<str>, L: AsRef<str>>(pairs: &[(S, L)]) -> Self {
        Self::new(
            pairs
                .iter()
                .map(|(s, l)| Token::new(s.as_ref()).with_label(l.as_ref()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    /// All labels, or `None` if any token is unlabeled.
    pub fn labels(&self) -> Option<Vec<&str>> {
        self.tokens.iter().map(|t| t.label.as_deref()).collect()
    }
}

/// A parsed BIO label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Bio<'a> {
    pub fn parse(label: &'a str) -> Option<Self> {
        if label == OUTSIDE {
            return Some(Self::Outside);
        }
        let (prefix, ty) = label.split_once('-')?;
        if ty.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(Self::Begin(ty)),
            "I" => Some(Self::Inside(ty)),
            _ => None,
        }
    }

    pub fn entity_type(self) -> Option<&'a str> {
        match self {
            Self::Outside => None,
            Self::Begin(t) | Self::Inside(t) => Some(t),
        }
    }
}

/// Ordered label alphabet: `O`, then `B-X`, `I-X` for each entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    entity_types: Vec<String>,
    labels: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabelSchema {
    pub fn new<S: AsRef<str>>(entity_types: &[S]) -> Result<Self> {
        let mut types: Vec<String> = Vec::with_capacity(entity_types.len());
        for t in entity_types {
            let t = t.as_ref();
            if t.is_empty() || t == OUTSIDE || t.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid entity type {t:?}")));
            }
            if types.iter().any(|x| x == t) {
                return Err(Error::Config(format!("duplicate entity type {t:?}")));
            }
            types.push(t.to_string());
        }
        let mut labels = vec![OUTSIDE.to_string()];
        for t in &types {
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        let ids = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(Self {
            entity_types: types,
            labels,
            ids,
        })
    }

    /// Builds a schema from a full label list as stored in a model file.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut types = Vec::new();
        for l in labels.iter().skip(1).step_by(2) {
            match Bio::parse(l.as_ref()) {
                Some(Bio::Begin(t)) => types.push(t),
                _ => return Err(Error::Config(format!("bad label list entry {:?}", l.as_ref()))),
            }
        }
        let schema = Self::new(&types)?;
        let same = schema.labels.len() == labels.len()
            && schema.labels.iter().zip(labels).all(|(a, b)| a == b.as_ref());
        if !same {
            return Err(Error::Config("label list is not in canonical order".into()));
        }
        Ok(schema)
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    /// Whether label `to` may follow label `from` (`None` = sentence start).
    pub fn transition_allowed(&self, from: Option<usize>, to: usize) -> bool {
        match Bio::parse(&self.labels[to]) {
            Some(Bio::Inside(t)) => from
                .and_then(|f| Bio::parse(&self.labels[f]))
                .and_then(Bio::entity_type)
                .is_some_and(|prev| prev == t),
            _ => true,
        }
    }

    /// Maps every token's label to its id.
    pub fn encode(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        sentence
            .tokens
            .iter()
            .enumerate()
            .map(|(position, t)| {
                let label = t
                    .label
                    .as_deref()
                    .ok_or_else(|| Error::Invalid(format!("token {position} has no label")))?;
                self.id(label).ok_or_else(|| Error::UnknownLabel {
                    position,
                    label: label.to_string(),
                })
            })
            .collect()
    }
}

impl Default for LabelSchema {
    fn default() -> Self {
        Self::new(&DEFAULT_ENTITY_TYPES).expect("default entity types are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Surface,
    Pos,
    Label,
    /// Column present in the file but ignored; written as `_`.
    Skip,
}

/// Which column of a row holds which field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    roles: Vec<ColumnRole>,
    label_required: bool,
}

impl ColumnSpec {
    pub fn new(roles: Vec<ColumnRole>) -> Result<Self> {
        let count = |r| roles.iter().filter(|&&x| x == r).count();
        if count(ColumnRole::Surface) != 1 {
            return Err(Error::Config("column spec needs exactly one surface column".into()));
        }
        if count(ColumnRole::Pos) > 1 || count(ColumnRole::Label) > 1 {
            return Err(Error::Config("column spec repeats pos or label".into()));
        }
        Ok(Self {
            roles,
            label_required: true,
        })
    }

    /// Makes the label column optional (tagging input).
    pub fn label_optional(mut self) -> Self {
        self.label_required = false;
        self
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn has(&self, role: ColumnRole) -> bool {
        self.roles.contains(&role)
    }

    fn position(&self, role: ColumnRole) -> Option<usize> {
        self.roles.iter().position(|&r| r == role)
    }

    fn required_columns(&self) -> usize {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != ColumnRole::Label || self.label_required)
            .filter(|(_, &r)| r != ColumnRole::Skip)
            .map(|(i, _)| i + 1)
            .max()
            .unwrap_or(0)
    }
}

impl FromStr for ColumnSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let roles = s
            .split(',')
            .map(|part| match part.trim() {
                "surface" | "word" => Ok(ColumnRole::Surface),
                "pos" => Ok(ColumnRole::Pos),
                "label" | "tag" => Ok(ColumnRole::Label),
                "skip" | "_" => Ok(ColumnRole::Skip),
                other => Err(Error::Config(format!("unknown column role {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(roles)
    }
}

impl fmt::Display for ColumnSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .roles
            .iter()
            .map(|r| match r {
                ColumnRole::Surface => "surface",
                ColumnRole::Pos => "pos",
                ColumnRole::Label => "label",
                ColumnRole::Skip => "skip",
            })
            .collect();
        f.write_str(&names.join(","))
    }
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self::new(vec![ColumnRole::Surface, ColumnRole::Label]).unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub columns: ColumnSpec,
    /// Apply NFC normalization to surface forms.
    pub normalize: bool,
    /// Labels without a `B-`/`I-` prefix are bare entity families and are
    /// rewritten to BIO2 by adjacency.
    pub bare_tags: bool,
}

impl ParseOptions {
    pub fn new(columns: ColumnSpec) -> Self {
        Self {
            columns,
            normalize: true,
            bare_tags: false,
        }
    }
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self::new(ColumnSpec::default())
    }
}

/// One non-blank row: its 1-based line number and its fields.
pub type Row<'a> = (usize, Vec<&'a str>);

/// Splits text into sentences of raw rows. Comment lines starting with `#`
/// before the first token row are skipped.
pub fn parse_rows(text: &str) -> Vec<Vec<Row<'_>>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    let mut seen_row = false;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line
            .split([' ', '\t'])
            .filter(|f| !f.is_empty())
            .collect();
        if fields.is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if !seen_row && line.trim_start().starts_with('#') {
            continue;
        }
        seen_row = true;
        current.push((i + 1, fields));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

pub(crate) fn normalize(s: &str) -> String {
    if is_nfc(s) {
        s.to_string()
    } else {
        s.nfc().collect()
    }
}

pub fn parse_conll(text: &str, options: &ParseOptions) -> Result<Vec<Sentence>> {
    let spec = &options.columns;
    let required = spec.required_columns();
    let surface_col = spec.position(ColumnRole::Surface).unwrap();
    let pos_col = spec.position(ColumnRole::Pos);
    let label_col = spec.position(ColumnRole::Label);

    parse_rows(text)
        .into_iter()
        .map(|rows| {
            let tokens = rows
                .into_iter()
                .map(|(line, fields)| {
                    if fields.len() < required {
                        return Err(Error::parse(
                            line,
                            format!("expected {required} columns, found {}", fields.len()),
                        ));
                    }
                    let raw = fields[surface_col];
                    let surface = if options.normalize {
                        normalize(raw)
                    } else {
                        raw.to_string()
                    };
                    Ok(Token {
                        surface,
                        pos: pos_col.map(|c| fields[c].to_string()),
                        label: label_col.and_then(|c| fields.get(c)).map(|s| s.to_string()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut sentence = Sentence::new(tokens);
            if options.bare_tags {
                expand_bare_tags(&mut sentence);
            }
            Ok(sentence)
        })
        .collect()
}

pub fn read_conll(path: &Path, options: &ParseOptions) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, options)
}

/// Rewrites bare family labels (`LOC`) to `B-LOC`/`I-LOC`: a bare label
/// equal to the previous raw label continues the entity.
fn expand_bare_tags(sentence: &mut Sentence) {
    let mut prev_raw: Option<String> = None;
    for token in &mut sentence.tokens {
        let Some(label) = token.label.take() else {
            prev_raw = None;
            continue;
        };
        let rewritten = if Bio::parse(&label).is_some() {
            label.clone()
        } else if prev_raw.as_deref() == Some(label.as_str()) {
            format!("I-{label}")
        } else {
            format!("B-{label}")
        };
        token.label = Some(rewritten);
        prev_raw = Some(label);
    }
}

pub fn write_conll(sentences: &[Sentence], columns: &ColumnSpec) -> Result<String> {
    let mut out = String::new();
    for (s, sentence) in sentences.iter().enumerate() {
        for (t, token) in sentence.tokens.iter().enumerate() {
            for (c, role) in columns.roles().iter().enumerate() {
                if c > 0 {
                    out.push('\t');
                }
                let missing = |field: &str| {
                    Error::Serialize(format!("sentence {s}, token {t}: missing {field}"))
                };
                match role {
                    ColumnRole::Surface => out.push_str(&token.surface),
                    ColumnRole::Pos => out.push_str(token.pos.as_deref().ok_or_else(|| missing("pos"))?),
                    ColumnRole::Label => {
                        out.push_str(token.label.as_deref().ok_or_else(|| missing("label"))?)
                    }
                    ColumnRole::Skip => out.push('_'),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BioMode {
    Strict,
    Repair,
}

/// Checks BIO2 well-formedness against `schema`. In repair mode an `I-X`
/// that does not continue an `X` entity becomes `B-X`.
pub fn validate_bio(sentence: &Sentence, schema: &LabelSchema, mode: BioMode) -> Result<Sentence> {
    let mut out = sentence.clone();
    let mut prev_type: Option<String> = None;
    for (position, token) in out.tokens.iter_mut().enumerate() {
        let label = token
            .label
            .clone()
            .ok_or_else(|| Error::Invalid(format!("token {position} has no label")))?;
        let label = label.as_str();
        if schema.id(label).is_none() {
            return Err(Error::UnknownLabel {
                position,
                label: label.to_string(),
            });
        }
        let bio = Bio::parse(label).expect("schema labels are BIO");
        if let Bio::Inside(ty) = bio {
            if prev_type.as_deref() != Some(ty) {
                match mode {
                    BioMode::Strict => {
                        return Err(Error::Bio {
                            position,
                            label: label.to_string(),
                        })
                    }
                    BioMode::Repair => token.label = Some(format!("B-{ty}")),
                }
            }
        }
        prev_type = bio.entity_type().map(str::to_string);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    pub sentence_count: usize,
    pub token_count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
    /// Token counts per entity family (`B-X` and `I-X` both count as `X`)
    /// plus `O`.
    pub tag_counts: BTreeMap<String, u64>,
}

/// Entity family of a label: `B-X`/`I-X` give `X`, anything else is
/// returned unchanged.
pub fn label_family(label: &str) -> &str {
    Bio::parse(label)
        .and_then(Bio::entity_type)
        .unwrap_or(label)
}

pub fn corpus_stats(sentences: &[Sentence]) -> CorpusStats {
    let mut stats = CorpusStats {
        sentence_count: sentences.len(),
        ..Default::default()
    };
    if sentences.is_empty() {
        return stats;
    }
    stats.min_len = usize::MAX;
    for sentence in sentences {
        let n = sentence.len();
        stats.token_count += n;
        stats.min_len = stats.min_len.min(n);
        stats.max_len = stats.max_len.max(n);
        for label in sentence.tokens.iter().filter_map(|t| t.label.as_deref()) {
            *stats
                .tag_counts
                .entry(label_family(label).to_string())
                .or_default() += 1;
        }
    }
    stats.mean_len = stats.token_count as f64 / stats.sentence_count as f64;
    stats
}

impl CorpusStats {
    /// Machine-readable form: one `name<TAB>value` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sentences\t{}", self.sentence_count);
        let _ = writeln!(out, "tokens\t{}", self.token_count);
        let _ = writeln!(out, "min_len\t{}", self.min_len);
        let _ = writeln!(out, "max_len\t{}", self.max_len);
        let _ = writeln!(out, "mean_len\t{}", self.mean_len);
        for (tag, count) in &self.tag_counts {
            let _ = writeln!(out, "tag.{tag}\t{count}");
        }
        out
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sentences: {}", self.sentence_count)?;
        writeln!(f, "tokens:    {}", self.token_count)?;
        writeln!(
            f,
            "length:    min {} / mean {:.2} / max {}",
            self.min_len, self.mean_len, self.max_len
        )?;
        writeln!(f, "tag counts:")?;
        for (tag, count) in &self.tag_counts {
            writeln!(f, "  {tag:<8} {count}")?;
        }
        Ok(())
    }
}

/// Inverse-frequency class weights `w_i = 1 - n_i / sum_j n_j`.
pub fn class_weights(tag_counts: &BTreeMap<String, u64>) -> Result<BTreeMap<String, f64>> {
    let total: u64 = tag_counts.values().sum();
    if total == 0 {
        return Err(Error::Invalid("class weights need at least one positive count".into()));
    }
    Ok(tag_counts
        .iter()
        .map(|(tag, &n)| (tag.clone(), 1.0 - n as f64 / total as f64))
        .collect())
}
