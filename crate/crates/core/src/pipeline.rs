//! Glue between corpora, feature extraction and the CRF.

use crate::clustering::{ClusterModel, EmbeddingTable};
use crate::conll::{validate_bio, BioMode, LabelSchema, Sentence};
use crate::crf::{CrfModel, Instance};
use crate::error::{Error, Result};
use crate::features::{
    index_corpus, vectorize_corpus, FeatureIndex, FeatureTemplateConfig, Lookups, PosLexicon,
};
use crate::gazetteer::Gazetteer;

/// Owned external resources for feature extraction.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub clusters: Option<ClusterModel>,
    pub embeddings: Option<EmbeddingTable>,
    pub gazetteer: Option<Gazetteer>,
    pub pos_lexicon: Option<PosLexicon>,
}

impl Resources {
    pub fn lookups(&self) -> Lookups<'_> {
        Lookups {
            clusters: self.clusters.as_ref(),
            embeddings: self.embeddings.as_ref(),
            gazetteer: self.gazetteer.as_ref(),
            pos_lexicon: self.pos_lexicon.as_ref(),
        }
    }
}

fn require_resources(config: &FeatureTemplateConfig, lookups: &Lookups<'_>) -> Result<()> {
    let missing = lookups.missing(config);
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("missing resources: {}", missing.join(", "))))
    }
}

/// Repairs BIO labels, builds the feature index and encodes gold labels.
pub fn build_training_set(
    sentences: &[Sentence],
    schema: &LabelSchema,
    config: &FeatureTemplateConfig,
    lookups: &Lookups<'_>,
) -> Result<(FeatureIndex, Vec<Instance>)> {
    config.validate()?;
    require_resources(config, lookups)?;
    let repaired = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            validate_bio(s, schema, BioMode::Repair)
                .map_err(|e| Error::Invalid(format!("sentence {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (index, vectors) = index_corpus(&repaired, config, lookups)?;
    let instances = repaired
        .iter()
        .zip(vectors)
        .map(|(s, features)| {
            Ok(Instance {
                features,
                labels: schema.encode(s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((index, instances))
}

/// Predicted label strings for every sentence.
pub fn tag_sentences(
    model: &CrfModel,
    sentences: &[Sentence],
    lookups: &Lookups<'_>,
) -> Result<Vec<Vec<String>>> {
    require_resources(model.template(), lookups)?;
    let vectors = vectorize_corpus(model.feature_index(), sentences, model.template(), lookups)?;
    Ok(vectors
        .iter()
        .map(|fv| {
            model
                .decode(fv)
                .into_iter()
                .map(|y| model.schema().label(y).to_string())
                .collect()
        })
        .collect())
}
