//! One graph per line:
//! `{"n": 3, "edges": [[0,1]], "x": [[..], ..], "y": [0, 1, 1], "labeled": [true, ..]}`.
//! `y` is either one category per node or a 0/1 vector per node;
//! `labeled` defaults to all nodes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::graphdata::{Graph, GraphCollection, NodeLabel};
use crate::scalar::Scalar;

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum Targets {
    Single(Vec<i64>),
    Multi(Vec<Vec<u8>>),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Record {
    n: usize,
    edges: Vec<[usize; 2]>,
    x: Vec<Vec<f64>>,
    y: Targets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labeled: Option<Vec<bool>>,
}

pub fn load_jsonl<T: Scalar>(path: &Path) -> Result<GraphCollection<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Load { path: path.to_path_buf(), msg: e.to_string() })?;
    let name = path.file_stem().map_or("jsonl".into(), |s| s.to_string_lossy().into_owned());
    parse_jsonl(&name, &text)
}

pub fn parse_jsonl<T: Scalar>(name: &str, text: &str) -> Result<GraphCollection<T>> {
    let mut graphs = Vec::new();
    let mut dim: Option<usize> = None;
    let mut multi: Option<bool> = None;
    let mut categories = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line, msg };
        let rec: Record = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        if rec.x.len() != rec.n {
            return Err(err(format!("{} feature rows for n = {}", rec.x.len(), rec.n)));
        }
        let d = rec.x.first().map_or(0, Vec::len);
        if rec.x.iter().any(|r| r.len() != d) {
            return Err(err("ragged feature rows".into()));
        }
        if *dim.get_or_insert(d) != d {
            return Err(err(format!("feature dimension {d} differs from earlier records")));
        }
        if let Some(&[u, v]) = rec.edges.iter().find(|&&[u, v]| u >= rec.n || v >= rec.n) {
            return Err(err(format!("edge ({u}, {v}) has an endpoint ≥ n = {}", rec.n)));
        }
        let labeled = rec.labeled.clone().unwrap_or_else(|| vec![true; rec.n]);
        if labeled.len() != rec.n {
            return Err(err("labeled mask length differs from n".into()));
        }
        let is_multi = matches!(rec.y, Targets::Multi(_));
        if *multi.get_or_insert(is_multi) != is_multi {
            return Err(err("mixes single- and multi-label records".into()));
        }
        let labels: Vec<Option<NodeLabel>> = match &rec.y {
            Targets::Single(y) => {
                if y.len() != rec.n {
                    return Err(err("y length differs from n".into()));
                }
                let mut out = Vec::with_capacity(rec.n);
                for (&c, &l) in y.iter().zip(&labeled) {
                    if !l {
                        out.push(None);
                    } else if c < 0 {
                        return Err(err(format!("negative category {c} on a labeled node")));
                    } else {
                        categories = categories.max(c as usize + 1);
                        out.push(Some(NodeLabel::Class(c as usize)));
                    }
                }
                out
            }
            Targets::Multi(y) => {
                if y.len() != rec.n {
                    return Err(err("y length differs from n".into()));
                }
                let width = y.first().map_or(0, Vec::len);
                if categories != 0 && width != categories {
                    return Err(err("label vector width differs from earlier records".into()));
                }
                categories = width;
                let mut out = Vec::with_capacity(rec.n);
                for (bits, &l) in y.iter().zip(&labeled) {
                    if bits.len() != width || bits.iter().any(|&b| b > 1) {
                        return Err(err("label vectors must be 0/1 with a common width".into()));
                    }
                    out.push(l.then(|| NodeLabel::Multi(bits.iter().map(|&b| b == 1).collect())));
                }
                out
            }
        };
        let data: Vec<f64> = rec.x.iter().flatten().copied().collect();
        let x = Tensor::from_f64(&[rec.n, d], &data).map_err(|e| err(e.to_string()))?;
        let g = Graph::new(x, rec.edges.iter().map(|&[u, v]| (u, v)), labels)
            .map_err(|e| err(e.to_string()))?;
        graphs.push(g);
    }
    if graphs.is_empty() {
        return Err(Error::EmptyInput("graph collection has no records".into()));
    }
    GraphCollection::new(name, graphs, dim.unwrap_or(0), categories, multi.unwrap_or(false))
}

/// Writes a collection in the same line format.
pub fn write_jsonl<T: Scalar>(c: &GraphCollection<T>, mut out: impl Write) -> Result<()> {
    for g in &c.graphs {
        let n = g.node_count();
        let y = if c.multi_label {
            Targets::Multi(
                g.labels()
                    .iter()
                    .map(|l| match l {
                        Some(NodeLabel::Multi(b)) => b.iter().map(|&v| v as u8).collect(),
                        _ => vec![0; c.num_categories],
                    })
                    .collect(),
            )
        } else {
            Targets::Single(
                g.labels().iter().map(|l| l.as_ref().and_then(NodeLabel::class).map_or(-1, |c| c as i64)).collect(),
            )
        };
        let rec = Record {
            n,
            edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
            x: (0..n).map(|r| g.features().row(r).iter().map(|v| v.as_f64()).collect()).collect(),
            y,
            labeled: Some(g.labeled_mask()),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(out)?;
    }
    Ok(())
}
