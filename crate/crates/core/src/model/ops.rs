//! Message passing, scoring and loss building blocks.
//!
//! Batched functions take node states stacked as `[T, L]` plus a
//! [`BatchLayout`]; the single-graph helpers are the one-graph special case.

use crate::autodiff::{logistic, Tape, Var};
use crate::error::{Error, Result};
use crate::model::graph::BatchLayout;

/// Edge feature function applied to (sender, receiver) state rows.
#[derive(Clone, Copy, Debug)]
pub enum EdgeFn {
    /// `|h_q - h_i|`, symmetric and parameter-free.
    AbsDiff,
    /// `relu([h_q, h_i] W_e + b_e)`, directed.
    Learned { w: Var, b: Var },
}

fn as_rows(tape: &mut Tape, x: Var) -> Result<(Var, bool)> {
    match tape.shape(x).len() {
        1 => {
            let n = tape.shape(x)[0];
            Ok((tape.reshape(x, &[1, n])?, true))
        }
        2 => Ok((x, false)),
        _ => Err(Error::dim("edge", tape.shape(x), &[])),
    }
}

fn restore(tape: &mut Tape, x: Var, was_vector: bool) -> Result<Var> {
    if was_vector {
        let n = tape.shape(x)[1];
        tape.reshape(x, &[n])
    } else {
        Ok(x)
    }
}

/// Elementwise `|h_q - h_i|`.
pub fn edge_absdiff(tape: &mut Tape, h_q: Var, h_i: Var) -> Result<Var> {
    if tape.shape(h_q) != tape.shape(h_i) {
        return Err(Error::dim("edge_absdiff", tape.shape(h_q), tape.shape(h_i)));
    }
    let d = tape.sub(h_q, h_i)?;
    Ok(tape.abs(d))
}

/// `relu([h_i, h_j] W_e + b_e)` for vectors or row-aligned matrices, with
/// `W_e` stored `[2L, J]`.
pub fn edge_learned(tape: &mut Tape, h_i: Var, h_j: Var, w_e: Var, b_e: Var) -> Result<Var> {
    let (a, vector) = as_rows(tape, h_i)?;
    let (b, _) = as_rows(tape, h_j)?;
    let cat = tape.concat(a, b)?;
    let lin = tape.matmul(cat, w_e)?;
    let pre = tape.add_row(lin, b_e)?;
    let out = tape.relu(pre);
    restore(tape, out, vector)
}

fn edge_features(tape: &mut Tape, edge: EdgeFn, senders: Var, receivers: Var) -> Result<Var> {
    match edge {
        EdgeFn::AbsDiff => edge_absdiff(tape, senders, receivers),
        EdgeFn::Learned { w, b } => edge_learned(tape, senders, receivers, w, b),
    }
}

fn transformed_neighbors(
    tape: &mut Tape,
    states: Var,
    src: &[usize],
    dst: &[usize],
    edge: EdgeFn,
    w_m: Var,
    b_m: Var,
) -> Result<Var> {
    let senders = tape.gather_rows(states, src)?;
    let receivers = tape.gather_rows(states, dst)?;
    let e = edge_features(tape, edge, senders, receivers)?;
    let cat = tape.concat(senders, e)?;
    let lin = tape.matmul(cat, w_m)?;
    let pre = tape.add_row(lin, b_m)?;
    Ok(tape.relu(pre))
}

/// Message received by every node: the mean over its `N - 1` neighbours of
/// `relu([h_q, e_qi] W_m + b_m)` with `e_qi = edge(h_q, h_i)`. Returns `[T, M]`.
pub fn aggregate_messages(
    tape: &mut Tape,
    states: Var,
    layout: &BatchLayout,
    edge: EdgeFn,
    w_m: Var,
    b_m: Var,
) -> Result<Var> {
    let terms = transformed_neighbors(tape, states, &layout.pair_src, &layout.pair_dst, edge, w_m, b_m)?;
    tape.segment_mean(terms, &layout.pair_dst, layout.num_nodes())
}

/// Message received by node `i` of a single graph (`states` is `[N, L]`).
pub fn aggregate_message(
    tape: &mut Tape,
    i: usize,
    states: Var,
    edge: EdgeFn,
    w_m: Var,
    b_m: Var,
) -> Result<Var> {
    let n = tape.shape(states).first().copied().unwrap_or(0);
    if n < 2 || i >= n {
        return Err(Error::Domain(format!(
            "aggregate_message needs node {i} of a graph with at least 2 nodes, got {n}"
        )));
    }
    let src: Vec<usize> = (0..n).filter(|&q| q != i).collect();
    let dst = vec![i; n - 1];
    let terms = transformed_neighbors(tape, states, &src, &dst, edge, w_m, b_m)?;
    tape.mean_axis(terms, 0)
}

/// Squared distance of every node to its graph's centroid (`[T, 1]`) and the
/// per-graph mean of those distances (`[G, 1]`).
pub fn centroid_spread(tape: &mut Tape, states: Var, layout: &BatchLayout) -> Result<(Var, Var)> {
    let g = layout.num_graphs();
    let centroids = tape.segment_mean(states, &layout.node_graph, g)?;
    let expanded = tape.gather_rows(centroids, &layout.node_graph)?;
    let diff = tape.sub(states, expanded)?;
    let d2 = tape.row_sq_norms(diff)?;
    let d2 = tape.reshape(d2, &[layout.num_nodes(), 1])?;
    let spread = tape.segment_mean(d2, &layout.node_graph, g)?;
    Ok((d2, spread))
}

fn check_labels(labels: &[f64], layout: &BatchLayout) -> Result<()> {
    if labels.len() != layout.num_graphs() {
        return Err(Error::dim("labels", &[labels.len()], &[layout.num_graphs()]));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Contract(format!("label must be 0 or 1, got {y}")));
    }
    Ok(())
}

/// Mean over graphs of
/// `1/N sum_i (y d_i^2 + (1 - y) max(0, m^2 - d_i^2))`.
pub fn contrastive_loss(
    tape: &mut Tape,
    states: Var,
    layout: &BatchLayout,
    labels: &[f64],
    margin: f64,
) -> Result<Var> {
    check_labels(labels, layout)?;
    if !(margin > 0.0) {
        return Err(Error::Contract(format!("margin must be positive, got {margin}")));
    }
    let g = layout.num_graphs();
    let (d2, spread) = centroid_spread(tape, states, layout)?;
    let neg = tape.scale(d2, -1.0);
    let gap = tape.add_scalar(neg, margin * margin);
    let hinge = tape.relu(gap);
    let hinge_mean = tape.segment_mean(hinge, &layout.node_graph, g)?;

    let pos_w = tape.constant(crate::Tensor::matrix(g, 1, labels.to_vec())?);
    let neg_w = tape.constant(crate::Tensor::matrix(g, 1, labels.iter().map(|y| 1.0 - y).collect())?);
    let pos = tape.mul(spread, pos_w)?;
    let neg = tape.mul(hinge_mean, neg_w)?;
    let per_graph = tape.add(pos, neg)?;
    tape.mean(per_graph)
}

/// Generalized contrastive loss of a single graph's final states (`[N, L]`).
pub fn loss_generalized_contrastive(tape: &mut Tape, states: Var, y: u8, margin: f64) -> Result<Var> {
    let n = tape.shape(states).first().copied().unwrap_or(0);
    let layout = BatchLayout::new(&[n])?;
    contrastive_loss(tape, states, &layout, &[y as f64], margin)
}

/// Mean node state of every graph (`[G, L]`).
pub fn mean_states(tape: &mut Tape, states: Var, layout: &BatchLayout) -> Result<Var> {
    tape.segment_mean(states, &layout.node_graph, layout.num_graphs())
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `labels`.
pub fn loss_bce(tape: &mut Tape, logits: Var, labels: &[f64]) -> Result<Var> {
    let per = tape.bce_with_logits(logits, labels)?;
    tape.mean(per)
}

/// Presentation score for a centroid spread `r`: `(1 - sigmoid(r), sigmoid(r))`.
/// Tighter sets (smaller `r`) get the higher first component.
pub fn spread_score(r: f64) -> (f64, f64) {
    let s = logistic(r);
    (1.0 - s, s)
}
