//! Multi-file graph-collection format: `<name>_A.txt`,
//! `<name>_graph_indicator.txt`, `<name>_node_labels.txt` and an optional
//! `<name>_node_attributes.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::graphdata::{Graph, GraphCollection, NodeLabel};
use crate::scalar::Scalar;

/// How node labels and features are derived from the raw files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TudOptions {
    /// Label column used as the single-label target.
    pub target_channel: usize,
    /// Every label column becomes a group of binary categories.
    pub multi_label: bool,
    /// Label column one-hot encoded as features when attributes are absent.
    /// Must differ from `target_channel`.
    pub feature_channel: Option<usize>,
    /// Fail unless the resulting feature dimension equals this.
    pub expected_feature_dim: Option<usize>,
    pub row_normalize: bool,
}

impl TudOptions {
    /// Presets for the three attribute collections: COX2 and DHFR classify
    /// atom type from 3-d attributes; Cuneiform is multi-label over all label
    /// columns with 3-d attributes.
    pub fn for_dataset(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "cox2" | "dhfr" => {
                TudOptions { expected_feature_dim: Some(3), ..Default::default() }
            }
            "cuneiform" => TudOptions {
                multi_label: true,
                expected_feature_dim: Some(3),
                ..Default::default()
            },
            _ => Default::default(),
        }
    }
}

fn read(dir: &Path, name: &str, suffix: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(format!("{name}_{suffix}.txt"));
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Load { path: path.clone(), msg: e.to_string() })?;
    Ok((path, text))
}

fn rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn parse_fields<V: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<Vec<V>> {
    s.split(',')
        .map(|f| {
            f.trim().parse::<V>().map_err(|_| Error::Load {
                path: path.to_path_buf(),
                msg: format!("line {line}: cannot parse {f:?}"),
            })
        })
        .collect()
}

/// Loads `name` from `dir`. Graph-local node ids are 0-based; raw label
/// values are remapped to dense category ids in ascending order.
pub fn load_tudataset<T: Scalar>(dir: &Path, name: &str, opts: &TudOptions) -> Result<GraphCollection<T>> {
    let (ind_path, ind_text) = read(dir, name, "graph_indicator")?;
    let (adj_path, adj_text) = read(dir, name, "A")?;
    let (lab_path, lab_text) = read(dir, name, "node_labels")?;
    let attr_path = dir.join(format!("{name}_node_attributes.txt"));
    let attributes = if attr_path.exists() { Some(read(dir, name, "node_attributes")?) } else { None };

    let mut indicator = Vec::new();
    for (line, s) in rows(&ind_text) {
        let g: usize = parse_fields(&ind_path, line, s)?[0];
        indicator.push(g);
    }
    let n = indicator.len();
    if n == 0 {
        return Err(Error::Validation(format!("{}: no nodes", ind_path.display())));
    }
    // graph ids must be 1..=G, non-decreasing, without gaps
    let mut offsets = vec![0usize];
    let mut prev = 1;
    if indicator[0] != 1 {
        return Err(Error::Validation("graph indicator must start at graph 1".into()));
    }
    for (v, &g) in indicator.iter().enumerate() {
        if g == prev + 1 {
            offsets.push(v);
            prev = g;
        } else if g != prev {
            return Err(Error::Validation(format!(
                "graph indicator jumps from {prev} to {g} at node {}",
                v + 1
            )));
        }
    }
    offsets.push(n);
    let num_graphs = offsets.len() - 1;

    let mut raw_labels: Vec<Vec<i64>> = Vec::with_capacity(n);
    for (line, s) in rows(&lab_text) {
        raw_labels.push(parse_fields(&lab_path, line, s)?);
    }
    if raw_labels.len() != n {
        return Err(Error::Validation(format!(
            "{} node labels for {n} nodes",
            raw_labels.len()
        )));
    }
    let channels = raw_labels[0].len();
    if raw_labels.iter().any(|r| r.len() != channels) {
        return Err(Error::Validation("node label rows differ in width".into()));
    }
    if !opts.multi_label && opts.target_channel >= channels {
        return Err(Error::Validation(format!(
            "target channel {} but labels have {channels} columns",
            opts.target_channel
        )));
    }
    // dense category ids per channel
    let vocab: Vec<BTreeMap<i64, usize>> = (0..channels)
        .map(|c| {
            let mut m = BTreeMap::new();
            for r in &raw_labels {
                m.entry(r[c]).or_insert(0);
            }
            m.values_mut().enumerate().for_each(|(i, v)| *v = i);
            m
        })
        .collect();

    let (labels, num_categories): (Vec<NodeLabel>, usize) = if opts.multi_label {
        let mut base = Vec::with_capacity(channels);
        let mut total = 0;
        for v in &vocab {
            base.push(total);
            total += v.len();
        }
        let labels = raw_labels
            .iter()
            .map(|r| {
                let mut bits = vec![false; total];
                for c in 0..channels {
                    bits[base[c] + vocab[c][&r[c]]] = true;
                }
                NodeLabel::Multi(bits)
            })
            .collect();
        (labels, total)
    } else {
        let c = opts.target_channel;
        let labels = raw_labels.iter().map(|r| NodeLabel::Class(vocab[c][&r[c]])).collect();
        (labels, vocab[c].len())
    };

    let (features, dim): (Vec<Vec<f64>>, usize) = match (&attributes, opts.feature_channel) {
        (Some((path, text)), _) => {
            let mut feats = Vec::with_capacity(n);
            for (line, s) in rows(text) {
                feats.push(parse_fields::<f64>(path, line, s)?);
            }
            if feats.len() != n {
                return Err(Error::Validation(format!("{} attribute rows for {n} nodes", feats.len())));
            }
            let d = feats[0].len();
            if feats.iter().any(|r| r.len() != d) {
                return Err(Error::Validation("attribute rows differ in width".into()));
            }
            (feats, d)
        }
        (None, Some(fc)) => {
            if fc >= channels || (!opts.multi_label && fc == opts.target_channel) || opts.multi_label {
                return Err(Error::Validation(format!(
                    "feature channel {fc} unusable: it must be a non-target label column"
                )));
            }
            let d = vocab[fc].len();
            let feats = raw_labels
                .iter()
                .map(|r| {
                    let mut row = vec![0.0; d];
                    row[vocab[fc][&r[fc]]] = 1.0;
                    row
                })
                .collect();
            (feats, d)
        }
        (None, None) => {
            return Err(Error::Load {
                path: attr_path,
                msg: "no node attributes and no feature channel configured".into(),
            })
        }
    };
    if let Some(expected) = opts.expected_feature_dim {
        if dim != expected {
            return Err(Error::Validation(format!(
                "{name}: feature dimension {dim}, expected {expected}"
            )));
        }
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, s) in rows(&adj_text) {
        let pair: Vec<usize> = parse_fields(&adj_path, line, s)?;
        if pair.len() != 2 || pair[0] == 0 || pair[1] == 0 || pair[0] > n || pair[1] > n {
            return Err(Error::Validation(format!(
                "{}: line {line}: bad edge {s:?}",
                adj_path.display()
            )));
        }
        let (u, v) = (pair[0] - 1, pair[1] - 1);
        let g = indicator[u];
        if indicator[v] != g {
            return Err(Error::Validation(format!(
                "edge ({}, {}) crosses graphs {g} and {}",
                pair[0], pair[1], indicator[v]
            )));
        }
        let off = offsets[g - 1];
        edges[g - 1].push((u - off, v - off));
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for gi in 0..num_graphs {
        let (lo, hi) = (offsets[gi], offsets[gi + 1]);
        let data: Vec<f64> = features[lo..hi].iter().flatten().copied().collect();
        let x = Tensor::from_f64(&[hi - lo, dim], &data)?;
        let labels = labels[lo..hi].iter().cloned().map(Some).collect();
        graphs.push(Graph::new(x, std::mem::take(&mut edges[gi]), labels)?);
    }
    let c = GraphCollection::new(name, graphs, dim, num_categories, opts.multi_label)?;
    Ok(if opts.row_normalize { c.row_normalized() } else { c })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(dir.join(format!("{name}_{suffix}.txt")), body).unwrap();
    }

    fn toy(dir: &Path) {
        // graph 1: nodes 1-3 path; graph 2: nodes 4-5 one edge
        write(dir, "T", "graph_indicator", "1\n1\n1\n2\n2\n");
        write(dir, "T", "A", "1, 2\n2, 1\n2, 3\n3, 2\n4, 5\n5, 4\n");
        write(dir, "T", "node_labels", "3,0\n5,1\n3,1\n7,0\n5,0\n");
        write(dir, "T", "node_attributes", "0.1,0.2,0.3\n1,2,3\n4,5,6\n7,8,9\n-1,-2,-3\n");
    }

    #[test]
    fn loads_attributes_and_remaps() {
        let tmp = tempfile::tempdir().unwrap();
        toy(tmp.path());
        let opts = TudOptions { expected_feature_dim: Some(3), ..Default::default() };
        let c = load_tudataset::<f64>(tmp.path(), "T", &opts).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.feature_dim, 3);
        assert_eq!(c.num_categories, 3);
        assert_eq!(c.graphs[0].edges(), &[(0, 1), (1, 2)]);
        assert_eq!(c.graphs[1].edges(), &[(0, 1)]);
        assert_eq!(c.graphs[1].label(0), Some(&NodeLabel::Class(2)));
        assert_eq!(c.graphs[1].features().row(1), &[-1.0, -2.0, -3.0]);
    }

    #[test]
    fn multi_label_concatenates_channels() {
        let tmp = tempfile::tempdir().unwrap();
        toy(tmp.path());
        let opts = TudOptions { multi_label: true, ..Default::default() };
        let c = load_tudataset::<f64>(tmp.path(), "T", &opts).unwrap();
        assert_eq!(c.num_categories, 5);
        assert_eq!(
            c.graphs[0].label(1),
            Some(&NodeLabel::Multi(vec![false, true, false, false, true]))
        );
    }

    #[test]
    fn one_hot_fallback_excludes_target() {
        let tmp = tempfile::tempdir().unwrap();
        toy(tmp.path());
        fs::remove_file(tmp.path().join("T_node_attributes.txt")).unwrap();
        let opts = TudOptions { feature_channel: Some(1), ..Default::default() };
        let c = load_tudataset::<f64>(tmp.path(), "T", &opts).unwrap();
        assert_eq!(c.feature_dim, 2);
        assert_eq!(c.graphs[0].features().row(1), &[0.0, 1.0]);
        let leak = TudOptions { feature_channel: Some(0), ..Default::default() };
        assert!(load_tudataset::<f64>(tmp.path(), "T", &leak).is_err());
    }

    #[test]
    fn wrong_dimension_fails_loudly() {
        let tmp = tempfile::tempdir().unwrap();
        toy(tmp.path());
        let opts = TudOptions { expected_feature_dim: Some(4), ..Default::default() };
        assert!(matches!(load_tudataset::<f64>(tmp.path(), "T", &opts), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_file_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        toy(tmp.path());
        fs::remove_file(tmp.path().join("T_A.txt")).unwrap();
        match load_tudataset::<f64>(tmp.path(), "T", &TudOptions::default()) {
            Err(Error::Load { path, .. }) => assert!(path.ends_with("T_A.txt")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_indicator_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        toy(tmp.path());
        write(tmp.path(), "T", "graph_indicator", "1\n1\n3\n3\n3\n");
        assert!(matches!(
            load_tudataset::<f64>(tmp.path(), "T", &TudOptions::default()),
            Err(Error::Validation(_))
        ));
        write(tmp.path(), "T", "graph_indicator", "1\n1\n2\n2\n2\n");
        // edge 2-3 now crosses graphs
        assert!(load_tudataset::<f64>(tmp.path(), "T", &TudOptions::default()).is_err());
    }

    #[test]
    fn loading_twice_is_identical() {
        let tmp = tempfile::tempdir().unwrap();
        toy(tmp.path());
        let a = load_tudataset::<f64>(tmp.path(), "T", &TudOptions::default()).unwrap();
        let b = load_tudataset::<f64>(tmp.path(), "T", &TudOptions::default()).unwrap();
        for (x, y) in a.graphs.iter().zip(&b.graphs) {
            assert_eq!(x.edges(), y.edges());
            assert_eq!(x.features(), y.features());
            assert_eq!(x.labels(), y.labels());
        }
    }
}
