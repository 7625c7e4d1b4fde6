//! Set manifests, ensemble corpora and FITB question files.
//!
//! ```text
//! manifest   set_id<TAB>item,item,...
//! corpus     label<TAB>item,item,...
//! fitb       partial,...<TAB>choice0,choice1,choice2,choice3<TAB>answer_index
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A curated set of items, such as one furniture collection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemSet {
    pub id: String,
    pub items: Vec<String>,
}

/// Where an ensemble came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Copied or drawn from a named positive set or style.
    Positive(String),
    /// Random mixture of items across styles or sets.
    NegativeRandom,
    /// Read back from a corpus file, which does not record provenance.
    Loaded,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Positive(id) => f.write_str(id),
            Provenance::NegativeRandom => f.write_str("negative-random"),
            Provenance::Loaded => f.write_str("loaded"),
        }
    }
}

/// A labelled list of items used for training or evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnsembleSample {
    pub item_ids: Vec<String>,
    pub label: u8,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FitbQuestion {
    pub partial_set: Vec<String>,
    pub choices: [String; 4],
    pub answer_index: usize,
}

impl FitbQuestion {
    pub fn answer(&self) -> &str {
        &self.choices[self.answer_index]
    }

    /// Partial set completed with choice `k`.
    pub fn completed(&self, k: usize) -> Vec<String> {
        let mut ids = self.partial_set.clone();
        ids.push(self.choices[k].clone());
        ids
    }
}

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn id_list(field: &str, source: &str, line: usize) -> Result<Vec<String>> {
    let ids: Vec<String> = field.split(',').map(|s| s.trim().to_string()).collect();
    if ids.iter().any(String::is_empty) {
        return Err(parse_err(source, line, format!("empty item id in {field:?}")));
    }
    Ok(ids)
}

fn records<'a>(text: &'a str) -> impl Iterator<Item = (usize, Vec<&'a str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').collect()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_manifest(text: &str, source: &str) -> Result<Vec<ItemSet>> {
    let mut sets = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line, fields) in records(text) {
        if fields.len() != 2 {
            return Err(parse_err(source, line, format!("expected 2 fields, found {}", fields.len())));
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(parse_err(source, line, format!("duplicate set id {}", fields[0])));
        }
        sets.push(ItemSet {
            id: fields[0].to_string(),
            items: id_list(fields[1], source, line)?,
        });
    }
    Ok(sets)
}

pub fn manifest_to_text(sets: &[ItemSet]) -> String {
    sets.iter().map(|s| format!("{}\t{}\n", s.id, s.items.join(","))).collect()
}

pub fn load_manifest(path: &Path) -> Result<Vec<ItemSet>> {
    parse_manifest(&read(path)?, &path.display().to_string())
}

pub fn save_manifest(sets: &[ItemSet], path: &Path) -> Result<()> {
    write(path, manifest_to_text(sets))
}

/// Parses a corpus file. Singleton samples cannot form a graph and are
/// dropped with a warning.
pub fn parse_corpus(text: &str, source: &str) -> Result<Vec<EnsembleSample>> {
    let mut out = Vec::new();
    for (line, fields) in records(text) {
        if fields.len() != 2 {
            return Err(parse_err(source, line, format!("expected 2 fields, found {}", fields.len())));
        }
        let label = match fields[0] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(source, line, format!("label must be 0 or 1, found {other:?}"))),
        };
        let item_ids = id_list(fields[1], source, line)?;
        if item_ids.len() < 2 {
            log::warn!("{source}:{line}: dropping singleton sample");
            continue;
        }
        out.push(EnsembleSample {
            item_ids,
            label,
            provenance: Provenance::Loaded,
        });
    }
    Ok(out)
}

pub fn corpus_to_text(samples: &[EnsembleSample]) -> String {
    samples
        .iter()
        .map(|s| format!("{}\t{}\n", s.label, s.item_ids.join(",")))
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<EnsembleSample>> {
    parse_corpus(&read(path)?, &path.display().to_string())
}

pub fn save_corpus(samples: &[EnsembleSample], path: &Path) -> Result<()> {
    write(path, corpus_to_text(samples))
}

pub fn parse_fitb(text: &str, source: &str) -> Result<Vec<FitbQuestion>> {
    let mut out = Vec::new();
    for (line, fields) in records(text) {
        if fields.len() != 3 {
            return Err(parse_err(source, line, format!("expected 3 fields, found {}", fields.len())));
        }
        let partial_set = id_list(fields[0], source, line)?;
        let choices: [String; 4] = id_list(fields[1], source, line)?
            .try_into()
            .map_err(|v: Vec<String>| parse_err(source, line, format!("expected 4 choices, found {}", v.len())))?;
        let answer_index: usize = fields[2]
            .trim()
            .parse()
            .ok()
            .filter(|&a| a < 4)
            .ok_or_else(|| parse_err(source, line, format!("answer index must be 0..=3, found {:?}", fields[2])))?;
        out.push(FitbQuestion {
            partial_set,
            choices,
            answer_index,
        });
    }
    Ok(out)
}

pub fn fitb_to_text(questions: &[FitbQuestion]) -> String {
    questions
        .iter()
        .map(|q| format!("{}\t{}\t{}\n", q.partial_set.join(","), q.choices.join(","), q.answer_index))
        .collect()
}

pub fn load_fitb(path: &Path) -> Result<Vec<FitbQuestion>> {
    parse_fitb(&read(path)?, &path.display().to_string())
}

pub fn save_fitb(questions: &[FitbQuestion], path: &Path) -> Result<()> {
    write(path, fitb_to_text(questions))
}
