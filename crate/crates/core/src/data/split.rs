use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::files::{EnsembleSample, ItemSet};
use crate::data::sampling::style_groups;
use crate::data::table::EmbeddingTable;
use crate::error::{Error, Result};

/// Train / validation / test proportions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    /// Ratios for style-labelled item data.
    pub const STYLE: SplitRatios = SplitRatios {
        train: 0.68,
        val: 0.12,
        test: 0.20,
    };
    /// Ratios for curated collections, split along sets.
    pub const COLLECTION: SplitRatios = SplitRatios {
        train: 0.75,
        val: 0.10,
        test: 0.15,
    };

    /// Sizes of the three parts for `n` elements; the test part takes the
    /// remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total = self.train + self.val + self.test;
        let part = |r: f64| ((n as f64) * r / total).round() as usize;
        let train = part(self.train).min(n);
        let val = part(self.val).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Split<T> {
    pub fn parts(&self) -> [(&'static str, &[T]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

fn partition<T: Clone>(items: &[T], ratios: SplitRatios, out: &mut Split<T>) {
    let (a, b, _) = ratios.sizes(items.len());
    out.train.extend_from_slice(&items[..a]);
    out.val.extend_from_slice(&items[a..a + b]);
    out.test.extend_from_slice(&items[a + b..]);
}

/// Splits item ids per style so every part keeps the style mix. Items
/// without a style label are ignored.
pub fn split_style_items(table: &EmbeddingTable, ratios: SplitRatios, seed: u64) -> Result<Split<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (_, mut items) in style_groups(table) {
        items.shuffle(&mut rng);
        partition(&items, ratios, &mut out);
    }
    check_disjoint("item", &out.parts())?;
    Ok(out)
}

/// Splits curated sets as whole units.
pub fn split_sets(sets: &[ItemSet], ratios: SplitRatios, seed: u64) -> Result<Split<ItemSet>> {
    let mut shuffled = sets.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    partition(&shuffled, ratios, &mut out);
    let ids: Vec<(&str, Vec<String>)> = out
        .parts()
        .into_iter()
        .map(|(name, part)| (name, part.iter().map(|s| s.id.clone()).collect()))
        .collect();
    let views: Vec<(&str, &[String])> = ids.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    check_disjoint("set", &views)?;
    Ok(out)
}

/// Fails if any id occurs in more than one named part.
pub fn check_disjoint<S: AsRef<str>>(kind: &str, parts: &[(&str, &[S])]) -> Result<()> {
    for (i, (a, xs)) in parts.iter().enumerate() {
        let seen: HashSet<&str> = xs.iter().map(AsRef::as_ref).collect();
        for (b, ys) in &parts[i + 1..] {
            if let Some(shared) = ys.iter().map(AsRef::as_ref).find(|y| seen.contains(y)) {
                return Err(Error::Data(format!("{kind} {shared} appears in both {a} and {b} splits")));
            }
        }
    }
    Ok(())
}

/// Fails if two corpora share any item id.
pub fn check_corpora_disjoint(parts: &[(&str, &[EnsembleSample])]) -> Result<()> {
    let ids: Vec<(&str, Vec<String>)> = parts
        .iter()
        .map(|(name, samples)| {
            let unique: HashSet<&String> = samples.iter().flat_map(|s| &s.item_ids).collect();
            (*name, unique.into_iter().cloned().collect())
        })
        .collect();
    let views: Vec<(&str, &[String])> = ids.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    check_disjoint("item", &views)
}
