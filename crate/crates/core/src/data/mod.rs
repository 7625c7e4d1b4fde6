//! Embedding tables, set manifests, ensemble sampling, FITB questions and the
//! planted-style synthetic generator.

pub mod files;
pub mod sampling;
pub mod split;
pub mod synthetic;
pub mod table;

pub use files::{
    load_corpus, load_fitb, load_manifest, save_corpus, save_fitb, save_manifest, EnsembleSample, FitbQuestion,
    ItemSet, Provenance,
};
pub use sampling::{make_fitb_questions, sample_collection_ensembles, sample_style_ensembles, style_groups, LengthRange};
pub use split::{check_corpora_disjoint, check_disjoint, split_sets, split_style_items, Split, SplitRatios};
pub use synthetic::{generate_synthetic, style_anchors, synthetic_corpus, SynthCorpus, SynthSpec, CATEGORIES};
pub use table::{EmbeddingTable, Item};

use crate::error::Result;
use crate::model::SetGraph;

/// Labelled graphs for every sample, named by position.
pub fn sample_graphs(table: &EmbeddingTable, samples: &[EnsembleSample]) -> Result<Vec<SetGraph>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| table.graph(&format!("sample{i}"), &s.item_ids, Some(s.label)))
        .collect()
}

/// Positive samples as item sets, for FITB question generation.
pub fn positive_sets(samples: &[EnsembleSample]) -> Vec<ItemSet> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == 1)
        .map(|(i, s)| ItemSet {
            id: format!("positive{i}"),
            items: s.item_ids.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests;
