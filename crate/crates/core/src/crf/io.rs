//! Model file format.
//!
//! A UTF-8 text container; every real is written in shortest round-trip
//! exponent form, so save/load is bit exact.
//!
//! ```text
//! CRFSEQ1
//! labels<TAB>L            then L lines, one label each
//! template<TAB>N          then N lines of TOML (feature template config)
//! decode<TAB>constrain_bio=<true|false>
//! features<TAB>F          then F lines, one feature string each
//! emit<TAB>F<TAB>L        then F lines of L tab-separated reals
//! trans<TAB>L<TAB>L       then L lines of L tab-separated reals (row = source)
//! start<TAB>L             then one line of L reals
//! end<TAB>L               then one line of L reals
//! END
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::CrfModel;
use crate::conll::LabelSchema;
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, FeatureTemplateConfig};

pub const MAGIC: &str = "CRFSEQ1";

fn write_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push('\t');
        }
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

pub fn model_to_string(model: &CrfModel) -> Result<String> {
    let l = model.n_labels();
    let f = model.n_features();
    let template = toml::to_string(model.template())
        .map_err(|e| Error::Serialize(format!("feature template: {e}")))?;
    let template_lines: Vec<&str> = template.lines().collect();

    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "labels\t{l}");
    for label in model.schema().labels() {
        let _ = writeln!(out, "{label}");
    }
    let _ = writeln!(out, "template\t{}", template_lines.len());
    for line in &template_lines {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "decode\tconstrain_bio={}", model.constrain_bio);
    let _ = writeln!(out, "features\t{f}");
    for name in model.feature_index().names() {
        if name.contains(['\n', '\r', '\t']) {
            return Err(Error::Serialize(format!("feature {name:?} contains a tab or newline")));
        }
        let _ = writeln!(out, "{name}");
    }
    let w = model.weights();
    let layout = model.layout();
    let _ = writeln!(out, "emit\t{f}\t{l}");
    for row in w[..f * l].chunks(l.max(1)) {
        write_row(&mut out, row);
    }
    let _ = writeln!(out, "trans\t{l}\t{l}");
    let tbase = layout.trans(0, 0);
    for row in w[tbase..tbase + l * l].chunks(l.max(1)) {
        write_row(&mut out, row);
    }
    let _ = writeln!(out, "start\t{l}");
    write_row(&mut out, &w[layout.start(0)..layout.start(0) + l]);
    let _ = writeln!(out, "end\t{l}");
    write_row(&mut out, &w[layout.end(0)..layout.end(0) + l]);
    let _ = writeln!(out, "END");
    Ok(out)
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let (i, line) = self
            .lines
            .next()
            .ok_or_else(|| Error::Model(format!("truncated file after line {}", self.line_no)))?;
        self.line_no = i + 1;
        Ok(line)
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Model(format!("line {}: {msg}", self.line_no))
    }

    /// Reads a `name<TAB>n...` section header and returns the counts.
    fn header(&mut self, name: &str, arity: usize) -> Result<Vec<usize>> {
        let line = self.next()?;
        let mut fields = line.split('\t');
        if fields.next() != Some(name) {
            return Err(self.err(format!("expected section {name:?}, found {line:?}")));
        }
        let counts = fields
            .map(|c| c.parse::<usize>().map_err(|_| self.err(format!("bad count {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if counts.len() != arity {
            return Err(self.err(format!("section {name:?} needs {arity} counts")));
        }
        Ok(counts)
    }

    fn reals(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next()?;
        let values = line
            .split('\t')
            .filter(|s| !s.is_empty())
            .map(|v| v.parse::<f64>().map_err(|_| self.err(format!("bad real {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }
}

pub fn model_from_str(text: &str) -> Result<CrfModel> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        line_no: 0,
    };
    let magic = r.next().map_err(|_| Error::Model(format!("empty file, expected magic string {MAGIC}")))?;
    if magic != MAGIC {
        return Err(Error::Model(format!(
            "bad header {magic:?}, expected magic string {MAGIC}"
        )));
    }

    let l = r.header("labels", 1)?[0];
    let labels = (0..l).map(|_| r.next()).collect::<Result<Vec<_>>>()?;
    let schema = LabelSchema::from_labels(&labels).map_err(|e| r.err(e))?;

    let n = r.header("template", 1)?[0];
    let toml_text = (0..n).map(|_| r.next()).collect::<Result<Vec<_>>>()?.join("\n");
    let template: FeatureTemplateConfig = toml::from_str(&toml_text).map_err(|e| r.err(e))?;

    let decode = r.next()?;
    let constrain_bio = match decode {
        "decode\tconstrain_bio=true" => true,
        "decode\tconstrain_bio=false" => false,
        other => return Err(r.err(format!("bad decode line {other:?}"))),
    };

    let f = r.header("features", 1)?[0];
    let names = (0..f)
        .map(|_| r.next().map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    let index = FeatureIndex::from_names(names).map_err(|e| r.err(e))?;

    let mut weights = Vec::new();
    let dims = r.header("emit", 2)?;
    if dims != [f, l] {
        return Err(r.err(format!("emission block is {dims:?}, expected [{f}, {l}]")));
    }
    for _ in 0..f {
        weights.extend(r.reals(l)?);
    }
    let dims = r.header("trans", 2)?;
    if dims != [l, l] {
        return Err(r.err(format!("transition block is {dims:?}, expected [{l}, {l}]")));
    }
    for _ in 0..l {
        weights.extend(r.reals(l)?);
    }
    for name in ["start", "end"] {
        if r.header(name, 1)? != [l] {
            return Err(r.err(format!("{name} block has wrong length")));
        }
        weights.extend(r.reals(l)?);
    }
    if r.next()? != "END" {
        return Err(r.err("expected END"));
    }

    let mut model = CrfModel::with_weights(schema, index, template, weights).map_err(|e| r.err(e))?;
    model.constrain_bio = constrain_bio;
    Ok(model)
}

pub fn save_model(model: &CrfModel, path: &Path) -> Result<()> {
    let text = model_to_string(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CrfModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}
