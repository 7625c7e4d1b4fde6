use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::SetGraph;

/// Placeholder written for a missing category or style.
pub const UNKNOWN: &str = "-";

/// One row of an [`EmbeddingTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub id: String,
    pub category: Option<String>,
    pub style: Option<String>,
    pub vector: Vec<f64>,
}

/// Item embeddings keyed by id, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    items: Vec<Item>,
    index: HashMap<String, usize>,
}

fn optional(field: &str) -> Option<String> {
    (field != UNKNOWN && !field.is_empty()).then(|| field.to_string())
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            items: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, item: Item) -> Result<()> {
        if item.vector.len() != self.dim {
            return Err(Error::Data(format!(
                "item {} has {} values, table dim is {}",
                item.id,
                item.vector.len(),
                self.dim
            )));
        }
        if item.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("item {} has a non-finite value", item.id)));
        }
        if item.id.is_empty() || item.id.contains(['\t', ',', '\n']) {
            return Err(Error::Data(format!("invalid item id {:?}", item.id)));
        }
        if self.index.contains_key(&item.id) {
            return Err(Error::Data(format!("duplicate item id {}", item.id)));
        }
        self.index.insert(item.id.clone(), self.items.len());
        self.items.push(item);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    fn require(&self, id: &str) -> Result<&Item> {
        self.get(id).ok_or_else(|| Error::Data(format!("unknown item id {id}")))
    }

    pub fn category(&self, id: &str) -> Option<&str> {
        self.get(id).and_then(|it| it.category.as_deref())
    }

    pub fn style(&self, id: &str) -> Option<&str> {
        self.get(id).and_then(|it| it.style.as_deref())
    }

    /// Table restricted to `ids`, in the order given.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let mut out = EmbeddingTable::new(self.dim);
        for id in ids {
            out.insert(self.require(id.as_ref())?.clone())?;
        }
        Ok(out)
    }

    /// Graph whose initial node states are the embeddings of `ids`.
    pub fn graph<S: AsRef<str>>(&self, set_id: &str, ids: &[S], label: Option<u8>) -> Result<SetGraph> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            data.extend_from_slice(&self.require(id.as_ref())?.vector);
        }
        let states = Tensor::matrix(ids.len(), self.dim, data)?;
        let item_ids = ids.iter().map(|s| s.as_ref().to_string()).collect();
        SetGraph::new(set_id, item_ids, states, label)
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing `#dim <L>` header".into()))?;
        let dim = header
            .strip_prefix("#dim")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| err(1, format!("expected `#dim <L>`, found {header:?}")))?;

        let mut table = EmbeddingTable::new(dim);
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(no, format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            let vector = fields[3]
                .split_whitespace()
                .map(|tok| {
                    let v: f64 = tok.parse().map_err(|_| err(no, format!("bad number {tok:?}")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(err(no, format!("non-finite value {tok:?}")))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            if vector.len() != dim {
                return Err(err(no, format!("ragged row: {} values, expected {dim}", vector.len())));
            }
            table
                .insert(Item {
                    id: fields[0].to_string(),
                    category: optional(fields[1]),
                    style: optional(fields[2]),
                    vector,
                })
                .map_err(|e| err(no, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serialized form; floats use the shortest representation that
    /// round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!("#dim {}\n", self.dim);
        for it in &self.items {
            let values: Vec<String> = it.vector.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                it.id,
                it.category.as_deref().unwrap_or(UNKNOWN),
                it.style.as_deref().unwrap_or(UNKNOWN),
                values.join(" ")
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
