use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::files::{EnsembleSample, FitbQuestion, ItemSet};
use crate::data::sampling::{make_fitb_questions, sample_style_ensembles, LengthRange};
use crate::data::split::{check_corpora_disjoint, split_style_items, Split, SplitRatios};
use crate::data::table::{EmbeddingTable, Item};
use crate::data::positive_sets;
use crate::error::{Error, Result};

/// Categories assigned round-robin within every style.
pub const CATEGORIES: [&str; 5] = ["bed", "cabinet", "chair", "couch", "table"];

/// Mutually orthonormal anchors, one per style, by Gram-Schmidt on Gaussian
/// draws.
pub fn style_anchors(num_styles: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if dim < num_styles {
        return Err(Error::Domain(format!(
            "cannot build {num_styles} orthogonal anchors in dimension {dim}"
        )));
    }
    let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(num_styles);
    while anchors.len() < num_styles {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        // Two passes keep the result orthogonal to rounding error.
        for _ in 0..2 {
            for a in &anchors {
                let dot: f64 = v.iter().zip(a).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(a).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        anchors.push(v);
    }
    Ok(anchors)
}

pub fn style_name(s: usize) -> String {
    format!("style{s}")
}

pub fn item_name(style: usize, index: usize) -> String {
    format!("s{style}_{index:03}")
}

/// Planted-style embeddings: item `j` of style `s` is the style's unit anchor
/// plus isotropic Gaussian noise of standard deviation `noise_sigma`. Style
/// and category labels are stored on the table.
pub fn generate_synthetic(
    num_styles: usize,
    items_per_style: usize,
    dim: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<EmbeddingTable> {
    if num_styles < 2 {
        return Err(Error::Domain(format!("need at least 2 styles, got {num_styles}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Domain(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors = style_anchors(num_styles, dim, &mut rng)?;
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Domain(e.to_string()))?;

    let mut table = EmbeddingTable::new(dim);
    for (s, anchor) in anchors.iter().enumerate() {
        for j in 0..items_per_style {
            let vector = anchor.iter().map(|a| a + noise.sample(&mut rng)).collect();
            table.insert(Item {
                id: item_name(s, j),
                category: Some(CATEGORIES[j % CATEGORIES.len()].to_string()),
                style: Some(style_name(s)),
                vector,
            })?;
        }
    }
    Ok(table)
}

/// Settings for a complete planted-style corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub styles: usize,
    pub per_style: usize,
    pub dim: usize,
    pub sigma: f64,
    pub lengths: LengthRange,
    /// Positives per split; every split gets as many negatives.
    pub train_positives: usize,
    pub val_positives: usize,
    pub test_positives: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            styles: 4,
            per_style: 50,
            dim: 16,
            sigma: 0.05,
            lengths: LengthRange::default(),
            train_positives: 1000,
            val_positives: 200,
            test_positives: 200,
            seed: 0,
        }
    }
}

/// Embeddings, item-disjoint train/val/test corpora and FITB questions built
/// from the test positives.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub table: EmbeddingTable,
    pub items: Split<String>,
    pub train: Vec<EnsembleSample>,
    pub val: Vec<EnsembleSample>,
    pub test: Vec<EnsembleSample>,
    pub test_sets: Vec<ItemSet>,
    pub fitb: Vec<FitbQuestion>,
}

pub fn synthetic_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    let table = generate_synthetic(spec.styles, spec.per_style, spec.dim, spec.sigma, spec.seed)?;
    let items = split_style_items(&table, SplitRatios::STYLE, spec.seed.wrapping_add(1))?;
    let sample = |ids: &[String], count: usize, offset: u64| {
        sample_style_ensembles(&table.subset(ids)?, count, spec.lengths, spec.seed.wrapping_add(offset))
    };
    let train = sample(&items.train, spec.train_positives, 2)?;
    let val = sample(&items.val, spec.val_positives, 3)?;
    let test = sample(&items.test, spec.test_positives, 4)?;
    check_corpora_disjoint(&[("train", &train), ("val", &val), ("test", &test)])?;
    let test_sets = positive_sets(&test);
    let fitb = make_fitb_questions(&test_sets, &table.subset(&items.test)?, spec.seed.wrapping_add(5))?;
    Ok(SynthCorpus {
        table,
        items,
        train,
        val,
        test,
        test_sets,
        fitb,
    })
}
