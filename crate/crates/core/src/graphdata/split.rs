use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::graphdata::{label_matrix, Graph, GraphCollection, NodeLabel};
use crate::scalar::Scalar;

/// One simulated semi-supervised task on a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSplit {
    pub support: Vec<(usize, NodeLabel)>,
    pub query: Vec<usize>,
    /// Known on training and validation graphs, absent at prediction time.
    pub query_labels: Option<Vec<NodeLabel>>,
}

impl EpisodeSplit {
    /// Builds a split and checks disjointness and a nonempty support.
    pub fn new(
        support: Vec<(usize, NodeLabel)>,
        query: Vec<usize>,
        query_labels: Option<Vec<NodeLabel>>,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Episode("support set is empty".into()));
        }
        if let Some(l) = &query_labels {
            if l.len() != query.len() {
                return Err(Error::Episode("query labels and query nodes differ in count".into()));
            }
        }
        let mut seen: Vec<usize> = support.iter().map(|s| s.0).chain(query.iter().copied()).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Episode("support and query overlap".into()));
        }
        Ok(EpisodeSplit { support, query, query_labels })
    }

    pub fn support_nodes(&self) -> Vec<usize> {
        self.support.iter().map(|s| s.0).collect()
    }

    pub fn support_targets<T: Scalar>(&self, num_categories: usize) -> Tensor<T> {
        let labels: Vec<&NodeLabel> = self.support.iter().map(|s| &s.1).collect();
        label_matrix(&labels, num_categories)
    }

    pub fn query_targets<T: Scalar>(&self, num_categories: usize) -> Option<Tensor<T>> {
        self.query_labels
            .as_ref()
            .map(|l| label_matrix(&l.iter().collect::<Vec<_>>(), num_categories))
    }

    /// Support plus labeled query, i.e. every labeled node in the episode.
    pub fn all_labeled(&self) -> Vec<(usize, NodeLabel)> {
        let mut all = self.support.clone();
        if let Some(l) = &self.query_labels {
            all.extend(self.query.iter().copied().zip(l.iter().cloned()));
        }
        all
    }
}

/// Shuffles the labeled nodes; the first `⌈fraction·L⌉` form the support and
/// the rest the query.
pub fn sample_episode<T: Scalar, R: Rng + ?Sized>(
    g: &Graph<T>,
    support_fraction: f64,
    rng: &mut R,
) -> Result<EpisodeSplit> {
    if !(support_fraction > 0.0 && support_fraction <= 1.0) {
        return Err(Error::Episode(format!("support fraction {support_fraction} outside (0, 1]")));
    }
    let mut labeled = g.labeled_nodes();
    let l = labeled.len();
    if l < 2 {
        return Err(Error::Episode(format!("graph has {l} labeled nodes, need at least 2")));
    }
    labeled.shuffle(rng);
    let m = (support_fraction * l as f64).ceil() as usize;
    if m >= l {
        return Err(Error::Episode("query set would be empty".into()));
    }
    let label = |v: usize| g.label(v).cloned().expect("labeled node");
    let support = labeled[..m].iter().map(|&v| (v, label(v))).collect();
    let query = labeled[m..].to_vec();
    let query_labels = query.iter().map(|&v| label(v)).collect();
    EpisodeSplit::new(support, query, Some(query_labels))
}

/// Split fractions for train / validation / test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.6, val: 0.2, test: 0.2 }
    }
}

/// Disjoint train / validation / test collections. Validation and test get
/// `floor(n·ratio)` graphs; the remainder goes to training.
pub fn partition_graphs<T: Scalar>(
    c: &GraphCollection<T>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(GraphCollection<T>, GraphCollection<T>, GraphCollection<T>)> {
    let SplitRatios { train, val, test } = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Partition(format!(
            "ratios ({train}, {val}, {test}) must be positive and sum to 1"
        )));
    }
    let n = c.len();
    if n < 3 {
        return Err(Error::Partition(format!("{n} graphs cannot be split three ways")));
    }
    let n_val = (n as f64 * val).floor() as usize;
    let n_test = (n as f64 * test).floor() as usize;
    let n_train = n - n_val - n_test;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ids: &[usize]| c.with_graphs(ids.iter().map(|&i| c.graphs[i].clone()).collect());
    Ok((
        pick(&perm[..n_train]),
        pick(&perm[n_train..n_train + n_val]),
        pick(&perm[n_train + n_val..]),
    ))
}

/// Partition sizes only, for callers that need the arithmetic.
pub fn partition_sizes(n: usize, ratios: SplitRatios) -> (usize, usize, usize) {
    let v = (n as f64 * ratios.val).floor() as usize;
    let t = (n as f64 * ratios.test).floor() as usize;
    (n - v - t, v, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{synth_collection, SynthConfig};
    use proptest::prelude::*;

    fn labeled_graph(n: usize) -> Graph<f64> {
        Graph::new(
            Tensor::zeros(&[n, 1]),
            [],
            (0..n).map(|v| Some(NodeLabel::Class(v % 2))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn equal_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = sample_episode(&labeled_graph(10), 0.5, &mut rng).unwrap();
        assert_eq!((e.support.len(), e.query.len()), (5, 5));
    }

    #[test]
    fn ceiling_rule_and_degenerate_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = sample_episode(&labeled_graph(3), 0.5, &mut rng).unwrap();
        assert_eq!((e.support.len(), e.query.len()), (2, 1));
        assert!(matches!(sample_episode(&labeled_graph(3), 1.0, &mut rng), Err(Error::Episode(_))));
        assert!(matches!(sample_episode(&labeled_graph(1), 0.5, &mut rng), Err(Error::Episode(_))));
    }

    #[test]
    fn partition_examples() {
        let r = SplitRatios::default();
        assert_eq!(partition_sizes(10, r), (6, 2, 2));
        assert_eq!(partition_sizes(467, r), (281, 93, 93));
        let c = synth_collection::<f64>(10, (4, 6), 2, 2, 0.8, 3);
        let (a, b, t) = partition_graphs(&c, r, 9).unwrap();
        assert_eq!((a.len(), b.len(), t.len()), (6, 2, 2));
        let (a2, _, _) = partition_graphs(&c, r, 9).unwrap();
        for (x, y) in a.graphs.iter().zip(&a2.graphs) {
            assert_eq!(x.features(), y.features());
        }
        let tiny = c.with_graphs(c.graphs[..2].to_vec());
        assert!(matches!(partition_graphs(&tiny, r, 0), Err(Error::Partition(_))));
        let bad = SplitRatios { train: 0.5, val: 0.2, test: 0.2 };
        assert!(partition_graphs(&c, bad, 0).is_err());
    }

    proptest! {
        #[test]
        fn episode_covers_labeled_set(seed in any::<u64>(), frac in 0.01f64..0.99, n in 2usize..40) {
            let g = labeled_graph(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match sample_episode(&g, frac, &mut rng) {
                Ok(e) => {
                    let mut all: Vec<usize> = e.support_nodes();
                    all.extend(&e.query);
                    all.sort_unstable();
                    prop_assert_eq!(all, g.labeled_nodes());
                }
                // only when ⌈frac·n⌉ = n
                Err(_) => prop_assert!((frac * n as f64).ceil() as usize >= n),
            }
        }

        #[test]
        fn partition_is_disjoint_cover(seed in any::<u64>(), n in 3usize..30) {
            let cfg = SynthConfig { n_graphs: n, nodes: (2, 3), ..SynthConfig::default() };
            let c = cfg.generate::<f64>();
            // tag each graph by its first feature value
            let tags = |col: &GraphCollection<f64>| col.graphs.iter().map(|g| g.features().data()[0].to_bits()).collect::<Vec<_>>();
            let (a, b, t) = partition_graphs(&c, SplitRatios::default(), seed).unwrap();
            let mut all = [tags(&a), tags(&b), tags(&t)].concat();
            all.sort_unstable();
            let mut orig = tags(&c);
            orig.sort_unstable();
            prop_assert_eq!(all, orig);
        }
    }
}
