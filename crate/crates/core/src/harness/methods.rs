use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::{forward, forward_var, hidden, ParamVector};
use crate::error::{contract, Error, Result};
use crate::gradcore::{Tape, Tensor};
use crate::graphdata::{label_matrix, sample_episode, EpisodeSplit, Graph, GraphCollection, NodeLabel};
use crate::harness::metrics::{score, Counts};
use crate::meta::{
    decide, node_loss, optimize, predict, train_logged, Adam, EpochLog, GraphPrior, ItemGrad,
    LoopSettings, MetaConfig, MetaState,
};
use crate::scalar::Scalar;

/// Test episodes are drawn from `seed ^ TEST_SALT`.
pub const TEST_SALT: u64 = 0x7e57_0000_5a17_0002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Mignn,
    Induct,
    Transduct,
    FinetuneAgf,
    Knn,
    MetaGnn,
    GraphOnly,
    TaskOnly,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Mignn,
        Method::Induct,
        Method::Transduct,
        Method::FinetuneAgf,
        Method::Knn,
        Method::MetaGnn,
        Method::GraphOnly,
        Method::TaskOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mignn => "mignn",
            Method::Induct => "induct",
            Method::Transduct => "transduct",
            Method::FinetuneAgf => "finetune_agf",
            Method::Knn => "knn",
            Method::MetaGnn => "meta_gnn",
            Method::GraphOnly => "graph_only",
            Method::TaskOnly => "task_only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Settings that only some methods read.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodOptions {
    /// Neighbours consulted by `knn`.
    pub knn_k: usize,
    /// Adam steps per test graph for `transduct`.
    pub transduct_steps: usize,
}

impl Default for MethodOptions {
    fn default() -> Self {
        MethodOptions { knn_k: 1, transduct_steps: 100 }
    }
}

impl MethodOptions {
    pub fn validate(&self, method: Method) -> Result<()> {
        if method == Method::Knn && self.knn_k == 0 {
            return Err(Error::Config("knn requires k >= 1".into()));
        }
        if method == Method::Transduct && self.transduct_steps == 0 {
            return Err(Error::Config("transduct requires at least one training step".into()));
        }
        Ok(())
    }
}

/// A fitted method. Every method is carried by a [`MetaState`]: supervised
/// encoders use `φ = 0` with graph adaptation off, and `transduct` keeps the
/// seed's initial θ as the starting point for each test graph.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub method: Method,
    pub state: MetaState<T>,
    pub options: MethodOptions,
}

impl<T: Scalar> Model<T> {
    pub fn predict(&self, g: &Graph<T>, split: &EpisodeSplit) -> Result<Vec<NodeLabel>> {
        match self.method {
            Method::Knn => knn_predict(g, split, &self.state, self.options.knn_k),
            Method::Transduct => transduct_predict(g, split, &self.state, self.options.transduct_steps),
            _ => predict(g, &split.support, &split.query, &self.state),
        }
    }
}

/// Configuration a method trains with, derived from the MI-GNN one.
pub fn method_config(method: Method, cfg: &MetaConfig) -> MetaConfig {
    let mut c = cfg.clone();
    match method {
        Method::MetaGnn | Method::TaskOnly => c.hp.graph_adaptation = false,
        Method::GraphOnly => c.hp.inner_steps = 0,
        Method::Induct | Method::Knn => {
            c.hp.graph_adaptation = false;
            c.hp.inner_steps = 0;
        }
        Method::FinetuneAgf => c.hp.graph_adaptation = false,
        Method::Mignn | Method::Transduct => {}
    }
    c
}

pub fn fit<T: Scalar>(
    method: Method,
    train: &GraphCollection<T>,
    val: &GraphCollection<T>,
    cfg: &MetaConfig,
    options: &MethodOptions,
    seed: u64,
) -> Result<(Model<T>, Vec<EpochLog>)> {
    options.validate(method)?;
    let mcfg = method_config(method, cfg);
    let (state, log) = match method {
        Method::Mignn | Method::MetaGnn | Method::TaskOnly | Method::GraphOnly => {
            train_logged(train, val, &mcfg, seed)?
        }
        Method::Induct | Method::Knn | Method::FinetuneAgf => {
            let (mut state, log) = train_induct(train, val, &mcfg, seed)?;
            state.config = mcfg;
            (state, log)
        }
        Method::Transduct => {
            mcfg.validate()?;
            (MetaState::init(&mcfg, seed), Vec::new())
        }
    };
    Ok((Model { method, state, options: options.clone() }, log))
}

fn all_labeled<T: Scalar>(g: &Graph<T>, c: usize) -> (Vec<usize>, Tensor<T>) {
    let nodes = g.labeled_nodes();
    let labels: Vec<&NodeLabel> = nodes.iter().map(|&v| g.label(v).expect("labeled")).collect();
    (nodes, label_matrix(&labels, c))
}

/// Supervised training of θ on every labeled node of the training graphs,
/// with the same optimizer, batching and early stopping as meta-training.
/// The returned state has `φ = 0`, no graph adaptation and no inner steps.
pub fn train_induct<T: Scalar>(
    train: &GraphCollection<T>,
    val: &GraphCollection<T>,
    cfg: &MetaConfig,
    seed: u64,
) -> Result<(MetaState<T>, Vec<EpochLog>)> {
    let mut cfg = cfg.clone();
    cfg.hp.graph_adaptation = false;
    cfg.hp.inner_steps = 0;
    cfg.validate()?;
    let init = MetaState::<T>::init(&cfg, seed);
    let zero_phi = GraphPrior::zeros(init.prior.layout);
    if cfg.hp.max_epochs == 0 {
        return Ok((MetaState::from_parts(init.theta, zero_phi, cfg, seed, init.rng), Vec::new()));
    }
    let c = train.num_categories;
    let targets: Vec<_> = train.graphs.iter().map(|g| all_labeled(g, c)).collect();
    let val_targets: Vec<_> = val.graphs.iter().map(|g| all_labeled(g, c)).collect();
    if let Some(i) = targets.iter().position(|t| t.0.is_empty()) {
        return Err(Error::Episode(format!("training graph {i} has no labeled nodes")));
    }
    let (spec, multi) = (&cfg.spec, cfg.multi_label);
    let loss_at = |g: &Graph<T>, (nodes, y): &(Vec<usize>, Tensor<T>), theta: &Tensor<T>, grad: bool| {
        let tape = Tape::new();
        let t = tape.var(theta.clone());
        let l = node_loss(forward_var(spec, g, t)?, nodes, y, multi)?;
        let grads = if grad { tape.grad(l, &[t])? } else { Vec::new() };
        Ok::<_, Error>((l.item().as_f64(), grads))
    };
    let settings = LoopSettings {
        lr: cfg.hp.outer_lr,
        batch_size: cfg.hp.batch_size,
        max_epochs: cfg.hp.max_epochs,
        patience: cfg.hp.patience,
    };
    let out = optimize(
        vec![init.theta.data.clone()],
        &settings,
        train.len(),
        init.rng.clone(),
        |_, _| Ok(()),
        |p, i, _| {
            let (objective, grads) = loss_at(&train.graphs[i], &targets[i], &p[0], true)?;
            Ok(ItemGrad { objective, extra: 0.0, grads })
        },
        |p| {
            val.graphs
                .iter()
                .zip(&val_targets)
                .filter(|(_, t)| !t.0.is_empty())
                .map(|(g, t)| loss_at(g, t, &p[0], false).map(|(l, _)| (l, l)))
                .collect()
        },
    )?;
    let theta = ParamVector { data: out.params[0].clone(), ..init.theta };
    let mut state = MetaState::from_parts(theta, zero_phi, cfg, seed, out.rng);
    state.adam.step = out.adam.step;
    state.adam.m[0] = out.adam.m[0].clone();
    state.adam.v[0] = out.adam.v[0].clone();
    state.epoch = out.best_epoch;
    Ok((state, out.history))
}

/// Trains the state's θ from scratch on the support of `split` alone.
fn transduct_predict<T: Scalar>(
    g: &Graph<T>,
    split: &EpisodeSplit,
    state: &MetaState<T>,
    steps: usize,
) -> Result<Vec<NodeLabel>> {
    let cfg = &state.config;
    if split.support.is_empty() {
        return Err(contract("prediction needs a nonempty support set"));
    }
    let nodes = split.support_nodes();
    let y = split.support_targets(cfg.spec.output_dim);
    let mut theta = state.theta.data.clone();
    let mut adam = Adam::new(cfg.hp.outer_lr, &[&theta]);
    for _ in 0..steps {
        let tape = Tape::new();
        let t = tape.var(theta.clone());
        let l = node_loss(forward_var(&cfg.spec, g, t)?, &nodes, &y, cfg.multi_label)?;
        let grad = tape.grad(l, &[t])?;
        adam.update(&mut [&mut theta], &grad)?;
    }
    let params = ParamVector { data: theta, ..state.theta.clone() };
    let logits = forward(&cfg.spec, g, &params)?.gather_rows(&split.query)?;
    Ok(decide(&logits, cfg.multi_label))
}

/// Labels each query by its `k` nearest support nodes in the hidden
/// representation (Euclidean). Single-label: majority vote, ties to the
/// class of the nearest tied neighbour. Multi-label: per-category majority,
/// ties count as positive.
fn knn_predict<T: Scalar>(
    g: &Graph<T>,
    split: &EpisodeSplit,
    state: &MetaState<T>,
    k: usize,
) -> Result<Vec<NodeLabel>> {
    if split.support.is_empty() {
        return Err(contract("prediction needs a nonempty support set"));
    }
    let h = hidden(&state.config.spec, g, &state.theta)?;
    let dist = |a: usize, b: usize| -> f64 {
        h.row(a).iter().zip(h.row(b)).map(|(&x, &y)| (x - y).as_f64().powi(2)).sum::<f64>().sqrt()
    };
    let k = k.min(split.support.len());
    Ok(split
        .query
        .iter()
        .map(|&q| {
            let mut near: Vec<(f64, &NodeLabel)> =
                split.support.iter().map(|(s, l)| (dist(q, *s), l)).collect();
            near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
            let near = &near[..k];
            match near[0].1 {
                NodeLabel::Class(_) => {
                    let votes = |c: usize| near.iter().filter(|n| n.1.class() == Some(c)).count();
                    let best = near.iter().map(|n| votes(n.1.class().expect("single"))).max().unwrap_or(0);
                    near.iter()
                        .find(|n| votes(n.1.class().expect("single")) == best)
                        .map(|n| n.1.clone())
                        .expect("k >= 1")
                }
                NodeLabel::Multi(first) => NodeLabel::Multi(
                    (0..first.len())
                        .map(|c| {
                            let pos = near
                                .iter()
                                .filter(|n| matches!(n.1, NodeLabel::Multi(b) if b[c]))
                                .count();
                            2 * pos >= near.len()
                        })
                        .collect(),
                ),
            }
        })
        .collect())
}

/// One labeled episode per test graph, drawn from `seed ^ TEST_SALT`.
pub fn test_episodes<T: Scalar>(
    test: &GraphCollection<T>,
    support_fraction: f64,
    seed: u64,
) -> Result<Vec<EpisodeSplit>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TEST_SALT);
    test.graphs.iter().map(|g| sample_episode(g, support_fraction, &mut rng)).collect()
}

/// Pooled decision counts of `predictor` over `(graph, episode)` pairs.
pub fn evaluate_with<T, P>(graphs: &[Graph<T>], episodes: &[EpisodeSplit], predictor: P) -> Result<Counts>
where
    T: Scalar,
    P: Fn(&Graph<T>, &EpisodeSplit) -> Result<Vec<NodeLabel>>,
{
    if graphs.len() != episodes.len() {
        return Err(contract(format!("{} graphs but {} episodes", graphs.len(), episodes.len())));
    }
    let mut total = Counts::default();
    for (g, ep) in graphs.iter().zip(episodes) {
        let truth = ep.query_labels.as_ref().ok_or_else(|| contract("test episode has no query labels"))?;
        total.merge(&score(&predictor(g, ep)?, truth)?);
    }
    Ok(total)
}

pub fn evaluate_model<T: Scalar>(model: &Model<T>, test: &GraphCollection<T>, episodes: &[EpisodeSplit]) -> Result<Counts> {
    evaluate_with(&test.graphs, episodes, |g, ep| model.predict(g, ep))
}

/// `(accuracy, micro_f1)` of a MI-GNN state on the test episodes.
pub fn evaluate<T: Scalar>(
    state: &MetaState<T>,
    test: &GraphCollection<T>,
    episodes: &[EpisodeSplit],
) -> Result<(f64, f64)> {
    let c = evaluate_with(&test.graphs, episodes, |g, ep| predict(g, &ep.support, &ep.query, state))?;
    Ok((c.accuracy(), c.micro_f1()))
}
