//! Word embedding ingestion and k-means word clustering.
//!
//! Cluster ids become CRF features: a word unseen in training still shares
//! a cluster with semantically close words that were.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    ids: HashMap<String, usize>,
    duplicates: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be at least 1".into()));
        }
        Ok(Self {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            ids: HashMap::new(),
            duplicates: 0,
        })
    }

    /// Inserts a vector; a repeated word replaces the earlier vector.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Invalid(format!(
                "vector has dimension {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        let word = word.into();
        match self.ids.get(&word) {
            Some(&id) => {
                self.vectors[id] = vector;
                self.duplicates += 1;
            }
            None => {
                self.ids.insert(word.clone(), self.words.len());
                self.words.push(word);
                self.vectors.push(vector);
            }
        }
        Ok(())
    }

    /// Parses the word2vec text format. An optional first line
    /// `<vocab_count> <dim>` is skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if table.is_none()
                && fields.len() == 2
                && fields.iter().all(|f| f.parse::<usize>().is_ok())
            {
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(line_no, format!("bad vector component: {e}")))?;
            if values.is_empty() {
                return Err(Error::parse(line_no, "word without vector"));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(line_no, "non-finite vector component"));
            }
            let table = match &mut table {
                Some(t) => t,
                None => table.insert(Self::new(values.len())?),
            };
            table
                .insert(fields[0], values)
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
        }
        table.ok_or_else(|| Error::Invalid("embedding file holds no vectors".into()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of rows that overrode an earlier vector for the same word.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.ids.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Words in canonical (byte-lexicographic) order with their vectors.
    fn sorted(&self) -> Vec<(&str, &[f64])> {
        let mut rows: Vec<(&str, &[f64])> = self
            .words
            .iter()
            .zip(&self.vectors)
            .map(|(w, v)| (w.as_str(), v.as_slice()))
            .collect();
        rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
        rows
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 64,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    centroids: Vec<Vec<f64>>,
    assignments: BTreeMap<String, usize>,
    inertia: f64,
    /// Inertia after each assignment step, when built by [`kmeans`].
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn new(
        centroids: Vec<Vec<f64>>,
        assignments: BTreeMap<String, usize>,
        inertia: f64,
    ) -> Result<Self> {
        let k = centroids.len();
        if k == 0 {
            return Err(Error::Invalid("cluster model needs k >= 1".into()));
        }
        let dim = centroids[0].len();
        if dim == 0 || centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::Invalid("centroids have inconsistent dimensions".into()));
        }
        if let Some((w, &id)) = assignments.iter().find(|(_, &id)| id >= k) {
            return Err(Error::Invalid(format!("word {w:?} has cluster id {id} >= k = {k}")));
        }
        Ok(Self {
            centroids,
            assignments,
            inertia,
            inertia_history: Vec::new(),
            iterations: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn assignments(&self) -> &BTreeMap<String, usize> {
        &self.assignments
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// The id given to words with neither an assignment nor a vector.
    pub fn oov_id(&self) -> usize {
        self.k()
    }

    /// Stored assignment, else nearest centroid of the word's vector in
    /// `table`, else the OOV id `k`.
    pub fn assign(&self, word: &str, table: Option<&EmbeddingTable>) -> usize {
        if let Some(&id) = self.assignments.get(word) {
            return id;
        }
        match table.and_then(|t| t.get(word)) {
            Some(v) if v.len() == self.dim() => nearest(v, &self.centroids).0,
            _ => self.oov_id(),
        }
    }

    /// Recomputes the sum of squared distances of `table`'s words to their
    /// assigned centroids.
    pub fn recompute_inertia(&self, table: &EmbeddingTable) -> f64 {
        table
            .sorted()
            .iter()
            .filter_map(|(w, v)| {
                self.assignments
                    .get(*w)
                    .map(|&id| squared_distance(v, &self.centroids[id]))
            })
            .sum()
    }

    /// Text form: a header `CLUSTERS<TAB>k<TAB>dim<TAB>inertia`, `k`
    /// centroid rows of space-separated reals, a blank line, then one
    /// `word<TAB>cluster_id` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "CLUSTERS\t{}\t{}\t{}", self.k(), self.dim(), self.inertia);
        for c in &self.centroids {
            let row: Vec<String> = c.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out.push('\n');
        for (word, id) in &self.assignments {
            let _ = writeln!(out, "{word}\t{id}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty cluster file"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 4 || fields[0] != "CLUSTERS" {
            return Err(Error::parse(1, "expected header CLUSTERS<TAB>k<TAB>dim<TAB>inertia"));
        }
        let bad_header = |what: &str| Error::parse(1, format!("bad {what} in header"));
        let k: usize = fields[1].parse().map_err(|_| bad_header("k"))?;
        let dim: usize = fields[2].parse().map_err(|_| bad_header("dim"))?;
        let inertia: f64 = fields[3].parse().map_err(|_| bad_header("inertia"))?;
        if k == 0 {
            return Err(Error::parse(1, "k must be at least 1"));
        }
        let mut centroids = Vec::with_capacity(k);
        for _ in 0..k {
            let (line_no, line) = lines
                .next()
                .ok_or_else(|| Error::Invalid("truncated centroid block".into()))?;
            let c = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(line_no, e.to_string()))?;
            if c.len() != dim {
                return Err(Error::parse(line_no, format!("centroid has {} values, expected {dim}", c.len())));
            }
            centroids.push(c);
        }
        let mut assignments = BTreeMap::new();
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (word, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(line_no, "expected word<TAB>cluster_id"))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad cluster id {id:?}")))?;
            if id >= k {
                return Err(Error::parse(line_no, format!("cluster id {id} >= k = {k}")));
            }
            assignments.insert(word.to_string(), id);
        }
        Self::new(centroids, assignments, inertia)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// k-means++ seeding over the canonically ordered points.
fn seed_centroids(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, points[first]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with chosen centroids
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.push(points[pick].to_vec());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, points[pick]));
        }
    }
    centroids
}

/// Lloyd's algorithm from seeded k-means++ initialization.
pub fn kmeans(table: &EmbeddingTable, config: &KMeansConfig) -> Result<ClusterModel> {
    let k = config.k;
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if k > table.len() {
        return Err(Error::Invalid(format!(
            "k = {k} exceeds vocabulary size {}",
            table.len()
        )));
    }
    let rows = table.sorted();
    let points: Vec<&[f64]> = rows.iter().map(|(_, v)| *v).collect();
    let n = points.len();
    let dim = table.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = seed_centroids(&points, k, &mut rng);

    let assign_all = |centroids: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let nearest: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, centroids)).collect();
        let inertia = nearest.iter().map(|&(_, d)| d).sum();
        (nearest.into_iter().map(|(j, _)| j).collect(), inertia)
    };

    let mut assignment = vec![usize::MAX; n];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        let (next, inertia) = assign_all(&centroids);
        if let Some(&prev) = history.last() {
            debug_assert!(
                inertia <= prev + 1e-9 * prev.max(1.0),
                "inertia increased: {prev} -> {inertia}"
            );
        }
        history.push(inertia);
        let changed = next != assignment;
        assignment = next;
        if !changed || iterations >= config.max_iter {
            break;
        }

        // reseed empty clusters with the point farthest from its centroid
        let mut counts = vec![0usize; k];
        for &j in &assignment {
            counts[j] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignment[i]] > 1)
                .map(|i| (i, squared_distance(points[i], &centroids[assignment[i]])))
                .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                counts[assignment[i]] -= 1;
                assignment[i] = empty;
                counts[empty] = 1;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &j) in points.iter().zip(&assignment) {
            for (s, x) in sums[j].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut movement: f64 = 0.0;
        for (j, sum) in sums.into_iter().enumerate() {
            if counts[j] == 0 {
                continue;
            }
            let mean: Vec<f64> = sum.into_iter().map(|s| s / counts[j] as f64).collect();
            movement = movement.max(squared_distance(&mean, &centroids[j]).sqrt());
            centroids[j] = mean;
        }
        iterations += 1;
        if movement < config.tol {
            let (last, inertia) = assign_all(&centroids);
            history.push(inertia);
            assignment = last;
            break;
        }
    }

    let assignments = rows
        .iter()
        .zip(&assignment)
        .map(|((w, _), &j)| (w.to_string(), j))
        .collect();
    let inertia = *history.last().expect("at least one assignment step");
    let mut model = ClusterModel::new(centroids, assignments, inertia)?;
    model.inertia_history = history;
    model.iterations = iterations;
    Ok(model)
}
