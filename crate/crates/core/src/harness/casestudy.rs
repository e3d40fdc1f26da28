use std::collections::BTreeMap;

use crate::error::{contract, Result};
use crate::graphdata::{GraphCollection, SynthConfig};
use crate::harness::methods::{evaluate_with, test_episodes, Method};
use crate::harness::metrics::{Metrics, SeedScore};
use crate::harness::report::ResultBlock;
use crate::harness::run::{MethodRun, Splits};
use crate::meta::{embed, GraphPrior};
use crate::scalar::Scalar;

pub const GROUPS: [&str; 3] = ["high", "medium", "low"];

/// Mean over training graphs of `−‖g_test − g_train‖₂`, with graph
/// embeddings from the prior's attention pooling.
pub fn similarity<T: Scalar>(
    g: &crate::graphdata::Graph<T>,
    train_embeddings: &[Vec<f64>],
    prior: &GraphPrior<T>,
) -> Result<f64> {
    if train_embeddings.is_empty() {
        return Err(contract("similarity needs at least one training graph"));
    }
    let e = embed(g, prior)?.to_f64_vec();
    let total: f64 = train_embeddings
        .iter()
        .map(|t| -t.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(total / train_embeddings.len() as f64)
}

/// Indices sorted by decreasing similarity (stable) and cut into thirds;
/// the remainder goes to the middle group.
pub fn similarity_groups(sims: &[f64]) -> Result<[Vec<usize>; 3]> {
    let n = sims.len();
    if n < 3 {
        return Err(contract(format!("{n} test graphs cannot form three groups")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
    let third = n / 3;
    let (high, rest) = order.split_at(third);
    let (mid, low) = rest.split_at(n - 2 * third);
    Ok([high.to_vec(), mid.to_vec(), low.to_vec()])
}

/// Per-group scores of every run. Groups are formed per seed from that
/// seed's MI-GNN prior, which `runs` must therefore contain.
pub fn similarity_case_study<T: Scalar>(
    train: &GraphCollection<T>,
    test: &GraphCollection<T>,
    runs: &[MethodRun<T>],
    support_fraction: f64,
) -> Result<Vec<ResultBlock>> {
    let mignn = runs
        .iter()
        .find(|r| r.method == Method::Mignn)
        .ok_or_else(|| contract("case study needs a trained mignn run"))?;
    let mut scores: BTreeMap<(usize, usize), Vec<SeedScore>> = BTreeMap::new();
    for (k, reference) in mignn.seeds.iter().enumerate() {
        let prior = &reference.model.state.prior;
        let seed = reference.score.seed;
        let train_emb = train
            .graphs
            .iter()
            .map(|g| embed(g, prior).map(|e| e.to_f64_vec()))
            .collect::<Result<Vec<_>>>()?;
        let sims = test.graphs.iter().map(|g| similarity(g, &train_emb, prior)).collect::<Result<Vec<_>>>()?;
        let groups = similarity_groups(&sims)?;
        let episodes = test_episodes(test, support_fraction, seed)?;
        for (ri, run) in runs.iter().enumerate() {
            let model = &run.seeds.get(k).ok_or_else(|| contract("runs disagree on seeds"))?.model;
            for (gi, members) in groups.iter().enumerate() {
                let graphs: Vec<_> = members.iter().map(|&i| test.graphs[i].clone()).collect();
                let eps: Vec<_> = members.iter().map(|&i| episodes[i].clone()).collect();
                let c = evaluate_with(&graphs, &eps, |g, ep| model.predict(g, ep))?;
                scores.entry((gi, ri)).or_default().push(SeedScore {
                    seed,
                    accuracy: c.accuracy(),
                    micro_f1: c.micro_f1(),
                });
            }
        }
    }
    scores
        .into_iter()
        .map(|((gi, ri), per_seed)| {
            let mut b = ResultBlock::new(runs[ri].method.name(), &Metrics::from_seeds(per_seed, 0.0)?);
            b.group = Some(GROUPS[gi].into());
            Ok(b)
        })
        .collect()
}

/// Synthetic collection for the case study: training and validation graphs
/// are unshifted, test graphs come in three equal parts whose features are
/// displaced by `shifts`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftedCollection {
    pub base: SynthConfig,
    pub n_train: usize,
    pub n_val: usize,
    /// Test graphs per shift.
    pub n_test_each: usize,
    pub shifts: [f64; 3],
}

impl Default for ShiftedCollection {
    fn default() -> Self {
        ShiftedCollection {
            base: SynthConfig {
                nodes: (20, 30),
                feature_dim: 6,
                num_categories: 3,
                homophily: 0.8,
                mean_scale: 1.0,
                noise: 0.8,
                ..SynthConfig::default()
            },
            n_train: 40,
            n_val: 10,
            n_test_each: 6,
            shifts: [0.0, 0.75, 1.5],
        }
    }
}

impl ShiftedCollection {
    pub fn generate<T: Scalar>(&self) -> Splits<T> {
        let part = |n: usize, seed: u64, shift: f64| -> GraphCollection<T> {
            SynthConfig { n_graphs: n, seed, shift, ..self.base.clone() }.generate()
        };
        let s = self.base.seed.wrapping_mul(4);
        let train = part(self.n_train, s, 0.0);
        let val = part(self.n_val, s + 1, 0.0);
        let mut test = Vec::new();
        for (i, &shift) in self.shifts.iter().enumerate() {
            test.extend(part(self.n_test_each, s + 2 + i as u64 * 1000, shift).graphs);
        }
        let test = train.with_graphs(test);
        Splits { train, val, test }
    }
}
