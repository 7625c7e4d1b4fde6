use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::files::{EnsembleSample, FitbQuestion, ItemSet, Provenance};
use crate::data::table::EmbeddingTable;
use crate::error::{Error, Result};

/// Inclusive range of ensemble lengths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

impl LengthRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min < 2 || min > max {
            return Err(Error::Contract(format!("invalid length range [{min}, {max}]; need 2 <= min <= max")));
        }
        Ok(LengthRange { min, max })
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

impl Default for LengthRange {
    fn default() -> Self {
        LengthRange { min: 3, max: 6 }
    }
}

/// Item ids grouped by style label, in table order. Items without a style
/// are left out.
pub fn style_groups(table: &EmbeddingTable) -> BTreeMap<String, Vec<String>> {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for it in table.items() {
        if let Some(style) = &it.style {
            groups.entry(style.clone()).or_default().push(it.id.clone());
        }
    }
    groups
}

/// `count` positives drawn from a single style each and `count` negatives
/// mixing at least two styles, alternating positive and negative.
pub fn sample_style_ensembles(
    table: &EmbeddingTable,
    count: usize,
    lengths: LengthRange,
    seed: u64,
) -> Result<Vec<EnsembleSample>> {
    let groups = style_groups(table);
    if groups.len() < 2 {
        return Err(Error::Data(format!("need at least 2 styles, found {}", groups.len())));
    }
    if let Some((style, items)) = groups.iter().find(|(_, v)| v.len() < lengths.max) {
        return Err(Error::Data(format!(
            "style {style} has {} items, fewer than the maximum ensemble length {}",
            items.len(),
            lengths.max
        )));
    }
    let styles: Vec<&String> = groups.keys().collect();
    let all: Vec<&String> = groups.values().flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * count);

    for _ in 0..count {
        let n = lengths.sample(&mut rng);
        let style = *styles.choose(&mut rng).expect("at least two styles");
        let item_ids = groups[style].choose_multiple(&mut rng, n).cloned().collect();
        out.push(EnsembleSample {
            item_ids,
            label: 1,
            provenance: Provenance::Positive(style.clone()),
        });

        let n = lengths.sample(&mut rng);
        let pair: Vec<&&String> = styles.choose_multiple(&mut rng, 2).collect();
        let mut chosen: Vec<String> = pair
            .iter()
            .map(|s| groups[**s].choose(&mut rng).expect("non-empty style").clone())
            .collect();
        fill_distinct(&mut chosen, &all, n, &mut rng);
        chosen.shuffle(&mut rng);
        out.push(EnsembleSample {
            item_ids: chosen,
            label: 0,
            provenance: Provenance::NegativeRandom,
        });
    }
    Ok(out)
}

fn fill_distinct(chosen: &mut Vec<String>, pool: &[&String], n: usize, rng: &mut impl Rng) {
    let mut used: HashSet<String> = chosen.iter().cloned().collect();
    let rest: Vec<&&String> = pool.iter().filter(|id| !used.contains(id.as_str())).collect();
    for id in rest.choose_multiple(rng, n.saturating_sub(chosen.len())) {
        if used.insert((**id).clone()) {
            chosen.push((**id).clone());
        }
    }
}

/// Curated sets as positives (singletons dropped) plus one negative per
/// positive, of the same length, mixing items from at least two sets.
/// `count` caps the number of positives kept.
pub fn sample_collection_ensembles(sets: &[ItemSet], count: Option<usize>, seed: u64) -> Result<Vec<EnsembleSample>> {
    let usable: Vec<&ItemSet> = sets
        .iter()
        .filter(|s| {
            if s.items.len() < 2 {
                log::warn!("dropping singleton set {}", s.id);
            }
            s.items.len() >= 2
        })
        .collect();
    if usable.len() < 2 {
        return Err(Error::Data(format!("need at least 2 sets, found {}", usable.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<&String> = Vec::new();
    let mut seen = HashSet::new();
    for s in &usable {
        for id in &s.items {
            if seen.insert(id) {
                pool.push(id);
            }
        }
    }

    let take = count.unwrap_or(usable.len()).min(usable.len());
    let mut out = Vec::with_capacity(2 * take);
    for set in usable.iter().take(take) {
        out.push(EnsembleSample {
            item_ids: set.items.clone(),
            label: 1,
            provenance: Provenance::Positive(set.id.clone()),
        });
        let n = set.items.len();
        let mut chosen = loop {
            let pair: Vec<&&ItemSet> = usable.choose_multiple(&mut rng, 2).collect();
            let a = pair[0].items.choose(&mut rng).expect("non-empty set");
            let b = pair[1].items.choose(&mut rng).expect("non-empty set");
            if a != b {
                break vec![a.clone(), b.clone()];
            }
        };
        fill_distinct(&mut chosen, &pool, n, &mut rng);
        chosen.shuffle(&mut rng);
        out.push(EnsembleSample {
            item_ids: chosen,
            label: 0,
            provenance: Provenance::NegativeRandom,
        });
    }
    Ok(out)
}

/// One question per set of at least 3 items. The blank is a random item;
/// distractors share its category, differ in style when its style is known,
/// and are not already in the set. Sets without enough distractors are
/// skipped with a warning.
pub fn make_fitb_questions(sets: &[ItemSet], table: &EmbeddingTable, seed: u64) -> Result<Vec<FitbQuestion>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for set in sets {
        if set.items.len() < 3 {
            log::warn!("set {}: fewer than 3 items, no FITB question", set.id);
            continue;
        }
        let blank = rng.random_range(0..set.items.len());
        let answer = &set.items[blank];
        let item = table
            .get(answer)
            .ok_or_else(|| Error::Data(format!("set {}: unknown item id {answer}", set.id)))?;
        let Some(category) = item.category.as_deref() else {
            log::warn!("set {}: item {answer} has no category, no FITB question", set.id);
            continue;
        };
        let candidates: Vec<&String> = table
            .items()
            .iter()
            .filter(|c| {
                c.category.as_deref() == Some(category)
                    && !set.items.contains(&c.id)
                    && match (&item.style, &c.style) {
                        (Some(a), Some(b)) => a != b,
                        (Some(_), None) => false,
                        (None, _) => true,
                    }
            })
            .map(|c| &c.id)
            .collect();
        if candidates.len() < 3 {
            log::warn!(
                "set {}: only {} distractors for category {category}, no FITB question",
                set.id,
                candidates.len()
            );
            continue;
        }
        let mut choices: Vec<String> = candidates.choose_multiple(&mut rng, 3).map(|s| (*s).clone()).collect();
        let answer_index = rng.random_range(0..4);
        choices.insert(answer_index, answer.clone());
        let mut partial_set = set.items.clone();
        partial_set.remove(blank);
        out.push(FitbQuestion {
            partial_set,
            choices: choices.try_into().expect("four choices"),
            answer_index,
        });
    }
    Ok(out)
}
