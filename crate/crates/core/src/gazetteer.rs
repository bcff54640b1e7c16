//! Per-type gazetteer lists with longest-match lookup over sentences.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use crate::conll::normalize;
use crate::error::{Error, Result};

/// Entries are stored as their words joined by a single space.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: BTreeMap<String, HashSet<String>>,
    max_entry_len: usize,
    empty_types: Vec<String>,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one entry (words separated by whitespace). Returns `false` for
    /// blank lines and duplicates.
    pub fn insert(&mut self, entity_type: &str, entry: &str) -> bool {
        let words: Vec<String> = entry.split_whitespace().map(normalize).collect();
        let set = self.entries.entry(entity_type.to_string()).or_default();
        if words.is_empty() {
            return false;
        }
        self.max_entry_len = self.max_entry_len.max(words.len());
        set.insert(words.join(" "))
    }

    /// Parses one list: one entry per line.
    pub fn add_list(&mut self, entity_type: &str, text: &str) {
        self.entries.entry(entity_type.to_string()).or_default();
        for line in text.lines() {
            self.insert(entity_type, line);
        }
        if self.entries[entity_type].is_empty() {
            self.empty_types.push(entity_type.to_string());
        }
    }

    pub fn load(paths: &BTreeMap<String, PathBuf>) -> Result<Self> {
        let mut gazetteer = Self::new();
        for (entity_type, path) in paths {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Invalid(format!(
                    "gazetteer for {entity_type}: {}: {e}",
                    path.display()
                ))
            })?;
            gazetteer.add_list(entity_type, &text);
        }
        Ok(gazetteer)
    }

    pub fn entity_types(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self, entity_type: &str) -> usize {
        self.entries.get(entity_type).map_or(0, HashSet::len)
    }

    pub fn max_entry_len(&self) -> usize {
        self.max_entry_len
    }

    /// Types whose list file held no entries.
    pub fn empty_types(&self) -> &[String] {
        &self.empty_types
    }

    pub fn contains(&self, entity_type: &str, words: &[&str]) -> bool {
        self.entries
            .get(entity_type)
            .is_some_and(|set| set.contains(&words.join(" ")))
    }

    /// For every position, the set of entity types whose longest entry
    /// starting at some position covers it. Types are matched independently.
    pub fn match_positions<S: AsRef<str>>(&self, surfaces: &[S]) -> Vec<BTreeSet<String>> {
        let words: Vec<&str> = surfaces.iter().map(AsRef::as_ref).collect();
        let n = words.len();
        let mut hits = vec![BTreeSet::new(); n];
        for (entity_type, set) in &self.entries {
            if set.is_empty() {
                continue;
            }
            for start in 0..n {
                let longest = (1..=self.max_entry_len.min(n - start))
                    .rev()
                    .find(|&len| set.contains(&words[start..start + len].join(" ")));
                if let Some(len) = longest {
                    for hit in &mut hits[start..start + len] {
                        hit.insert(entity_type.clone());
                    }
                }
            }
        }
        hits
    }
}
