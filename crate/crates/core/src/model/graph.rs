use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// A set of items as a complete graph over their node states.
#[derive(Clone, Debug, PartialEq)]
pub struct SetGraph {
    pub set_id: String,
    pub item_ids: Vec<String>,
    /// Initial node states, one row per item (`[N, L]`).
    pub states: Tensor,
    /// 1 for a compatible set, 0 for an incompatible one.
    pub label: Option<u8>,
}

impl SetGraph {
    pub fn new(set_id: impl Into<String>, item_ids: Vec<String>, states: Tensor, label: Option<u8>) -> Result<Self> {
        if states.rank() != 2 || states.rows() != item_ids.len() {
            return Err(Error::dim("set_graph", states.shape(), &[item_ids.len()]));
        }
        if item_ids.len() < 2 {
            return Err(Error::Domain(format!(
                "a set graph needs at least 2 items, got {}",
                item_ids.len()
            )));
        }
        if let Some(y) = label {
            if y > 1 {
                return Err(Error::Contract(format!("label must be 0 or 1, got {y}")));
            }
        }
        Ok(SetGraph {
            set_id: set_id.into(),
            item_ids,
            states,
            label,
        })
    }

    /// Builds an unlabeled graph from raw state rows, naming items by index.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let states = Tensor::from_rows(rows)?;
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        SetGraph::new("", ids, states, None)
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    /// The same set with its nodes reordered: node `k` of the result is node
    /// `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let rows: Vec<&[f64]> = order.iter().map(|&i| self.states.row(i)).collect();
        let ids = order.iter().map(|&i| self.item_ids[i].clone()).collect();
        SetGraph::new(self.set_id.clone(), ids, Tensor::from_rows(&rows)?, self.label)
    }

    /// The 2-node graph made of items `a` and `b`.
    pub fn pair(&self, a: usize, b: usize) -> Result<Self> {
        let mut g = self.permuted(&[a, b])?;
        g.set_id = format!("{}[{a},{b}]", self.set_id);
        Ok(g)
    }
}

/// Index bookkeeping for a batch of graphs stacked into one state matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchLayout {
    sizes: Vec<usize>,
    /// Graph index of every stacked node.
    pub node_graph: Vec<usize>,
    /// Sender of every directed message.
    pub pair_src: Vec<usize>,
    /// Receiver of every directed message.
    pub pair_dst: Vec<usize>,
}

impl BatchLayout {
    /// Directed pairs are ordered by graph, then receiver, then sender.
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let total: usize = sizes.iter().sum();
        let pairs: usize = sizes.iter().map(|n| n * n.saturating_sub(1)).sum();
        let mut node_graph = Vec::with_capacity(total);
        let mut pair_src = Vec::with_capacity(pairs);
        let mut pair_dst = Vec::with_capacity(pairs);
        let mut offset = 0;
        for (g, &n) in sizes.iter().enumerate() {
            if n < 2 {
                return Err(Error::Domain(format!("graph {g} has {n} node(s); at least 2 are required")));
            }
            node_graph.extend(std::iter::repeat_n(g, n));
            for i in 0..n {
                for q in (0..n).filter(|&q| q != i) {
                    pair_src.push(offset + q);
                    pair_dst.push(offset + i);
                }
            }
            offset += n;
        }
        Ok(BatchLayout {
            sizes: sizes.to_vec(),
            node_graph,
            pair_src,
            pair_dst,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_graphs(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_graph.len()
    }
}

/// Stacks the initial states of `graphs` and builds the matching layout.
pub fn stack_graphs(graphs: &[&SetGraph]) -> Result<(Tensor, BatchLayout)> {
    let dim = graphs
        .first()
        .ok_or_else(|| Error::Domain("empty batch".into()))?
        .dim();
    let mut data = Vec::new();
    for g in graphs {
        if g.dim() != dim {
            return Err(Error::dim("stack_graphs", &[dim], &[g.dim()]));
        }
        data.extend_from_slice(g.states.data());
    }
    let sizes: Vec<usize> = graphs.iter().map(|g| g.len()).collect();
    let layout = BatchLayout::new(&sizes)?;
    let states = Tensor::matrix(layout.num_nodes(), dim, data)?;
    Ok((states, layout))
}
