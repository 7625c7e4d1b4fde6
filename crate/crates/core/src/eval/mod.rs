//! Ranking metrics and run reports.

mod report;

pub use report::{emit_report, Report};

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::data::{EmbeddingTable, FitbQuestion};
use crate::error::{Error, Result};
use crate::model::{CompatModel, SetGraph, SetScore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredExample {
    pub score: f64,
    pub label: u8,
}

impl ScoredExample {
    pub fn new(score: f64, label: u8) -> Self {
        ScoredExample { score, label }
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs in which the positive scores higher, with ties
/// counted as one half.
pub fn auc(examples: &[ScoredExample]) -> Result<f64> {
    if let Some(bad) = examples.iter().find(|e| !e.score.is_finite()) {
        return Err(Error::Domain(format!("non-finite score {}", bad.score)));
    }
    if let Some(bad) = examples.iter().find(|e| e.label > 1) {
        return Err(Error::Domain(format!("label must be 0 or 1, got {}", bad.label)));
    }
    let positives = examples.iter().filter(|e| e.label == 1).count() as u64;
    let negatives = examples.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {positives} positives and {negatives} negatives"
        )));
    }
    let mut sorted: Vec<ScoredExample> = examples.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Twice the Mann-Whitney U, kept integral so the result is exact.
    let mut twice_u = 0u64;
    let mut negatives_below = 0u64;
    let mut start = 0;
    while start < sorted.len() {
        let end = start + sorted[start..].iter().take_while(|e| e.score == sorted[start].score).count();
        let pos = sorted[start..end].iter().filter(|e| e.label == 1).count() as u64;
        let neg = (end - start) as u64 - pos;
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        start = end;
    }
    Ok(twice_u as f64 / (2 * positives * negatives) as f64)
}

/// Index of the highest score; ties go to the lowest index.
pub fn argmax_lowest(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        match best {
            Some(b) if s.total_cmp(&scores[b]) != Ordering::Greater => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitbOutcome {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Questions whose top score was shared by several choices.
    pub ties: usize,
    pub predictions: Vec<usize>,
}

/// FITB accuracy from the four completed-set scores of every question.
pub fn fitb_accuracy_from_scores(questions: &[FitbQuestion], scores: &[[f64; 4]]) -> Result<FitbOutcome> {
    if questions.is_empty() {
        return Err(Error::UndefinedMetric("FITB accuracy of zero questions".into()));
    }
    if questions.len() != scores.len() {
        return Err(Error::dim("fitb_accuracy", &[questions.len()], &[scores.len()]));
    }
    let mut correct = 0;
    let mut ties = 0;
    let mut predictions = Vec::with_capacity(questions.len());
    for (i, (q, s)) in questions.iter().zip(scores).enumerate() {
        let pick = argmax_lowest(s).expect("four scores");
        if s.iter().filter(|&&v| v == s[pick]).count() > 1 {
            ties += 1;
            log::debug!("FITB question {i}: tied top score {}, picking choice {pick}", s[pick]);
        }
        correct += usize::from(pick == q.answer_index);
        predictions.push(pick);
    }
    if ties > 0 {
        log::info!("{ties} of {} FITB questions had tied top scores", questions.len());
    }
    Ok(FitbOutcome {
        accuracy: correct as f64 / questions.len() as f64,
        correct,
        total: questions.len(),
        ties,
        predictions,
    })
}

/// Scores every completion with `scorer` (higher means more compatible) and
/// picks the best choice per question.
pub fn fitb_accuracy<F>(questions: &[FitbQuestion], mut scorer: F) -> Result<FitbOutcome>
where
    F: FnMut(&[String]) -> Result<f64>,
{
    let scores = questions
        .iter()
        .map(|q| {
            let mut row = [0.0; 4];
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = scorer(&q.completed(k))?;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    fitb_accuracy_from_scores(questions, &scores)
}

/// How a set is presented to the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoringMode {
    /// The whole set as one graph.
    Full,
    /// Mean over all two-item subsets.
    Pairwise,
}

/// Scores of `graphs` in input order, in parallel on `pool` when given.
pub fn score_graphs(
    model: &CompatModel,
    graphs: &[SetGraph],
    mode: ScoringMode,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<SetScore>> {
    let one = |g: &SetGraph| match mode {
        ScoringMode::Full => model.score(g),
        ScoringMode::Pairwise => model.score_pairwise_average(g),
    };
    match pool {
        Some(pool) => pool.install(|| graphs.par_iter().map(one).collect()),
        None => graphs.iter().map(one).collect(),
    }
}

/// AUC of the model's ranking statistic over labelled graphs.
pub fn model_auc(
    model: &CompatModel,
    graphs: &[SetGraph],
    mode: ScoringMode,
    pool: Option<&rayon::ThreadPool>,
) -> Result<f64> {
    let labels = graphs
        .iter()
        .map(|g| g.label.ok_or_else(|| Error::Contract(format!("graph {} has no label", g.set_id))))
        .collect::<Result<Vec<u8>>>()?;
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let scores = score_graphs(model, graphs, mode, pool)?;
    let examples: Vec<ScoredExample> = scores
        .iter()
        .zip(labels)
        .map(|(s, label)| ScoredExample::new(s.rank, label))
        .collect();
    auc(&examples)
}

/// FITB accuracy of the model's ranking statistic.
pub fn model_fitb(
    model: &CompatModel,
    table: &EmbeddingTable,
    questions: &[FitbQuestion],
    mode: ScoringMode,
    pool: Option<&rayon::ThreadPool>,
) -> Result<FitbOutcome> {
    let graphs = questions
        .iter()
        .enumerate()
        .flat_map(|(i, q)| (0..4).map(move |k| (i, k, q.completed(k))))
        .map(|(i, k, ids)| table.graph(&format!("q{i}c{k}"), &ids, None))
        .collect::<Result<Vec<_>>>()?;
    let scores = score_graphs(model, &graphs, mode, pool)?;
    let rows: Vec<[f64; 4]> = scores
        .chunks(4)
        .map(|c| [c[0].rank, c[1].rank, c[2].rank, c[3].rank])
        .collect();
    fitb_accuracy_from_scores(questions, &rows)
}

#[cfg(test)]
mod tests;
