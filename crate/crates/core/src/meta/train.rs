use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoders::{forward, init_params, ParamVector};
use crate::error::{contract, Error, Result};
use crate::gradcore::Tensor;
use crate::graphdata::{sample_episode, Graph, GraphCollection, NodeLabel};
use crate::meta::{
    adapted_params, decide, episode_gradient, episode_value, Adam, Episode, GraphPrior,
    MetaConfig, PriorLayout,
};
use crate::scalar::Scalar;

/// Validation episodes are drawn from `seed ^ VALIDATION_SALT`.
pub const VALIDATION_SALT: u64 = 0x7a11_da7e_0000_0001;

/// Trained (or freshly initialized) model.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaState<T> {
    pub theta: ParamVector<T>,
    pub prior: GraphPrior<T>,
    /// Moments for `[theta, prior]`.
    pub adam: Adam<T>,
    pub config: MetaConfig,
    pub seed: u64,
    pub rng: ChaCha8Rng,
    /// Epoch (1-based) whose parameters were kept; 0 means untrained.
    pub epoch: usize,
}

impl<T: Scalar> MetaState<T> {
    pub fn layout(cfg: &MetaConfig) -> PriorLayout {
        PriorLayout::new(cfg.spec.input_dim, cfg.hp.film_hidden, cfg.spec.param_len())
    }

    /// θ then φ drawn from `seed`.
    pub fn init(cfg: &MetaConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = init_params(&cfg.spec, &mut rng);
        let prior = GraphPrior::init(Self::layout(cfg), &mut rng);
        Self::from_parts(theta, prior, cfg.clone(), seed, rng)
    }

    pub fn from_parts(
        theta: ParamVector<T>,
        prior: GraphPrior<T>,
        config: MetaConfig,
        seed: u64,
        rng: ChaCha8Rng,
    ) -> Self {
        let adam = Adam::new(config.hp.outer_lr, &[&theta.data, &prior.data]);
        MetaState { theta, prior, adam, config, seed, rng, epoch: 0 }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training objective over the epoch's episodes.
    pub train_objective: f64,
    pub val_objective: f64,
    pub val_query_loss: f64,
    /// Mean `‖γ‖₂ + ‖β‖₂` over the epoch's training episodes.
    pub film_norm: f64,
}

/// Per-item result of a batch gradient evaluation.
pub(crate) struct ItemGrad<T> {
    pub objective: f64,
    pub extra: f64,
    pub grads: Vec<Tensor<T>>,
}

pub(crate) struct LoopSettings {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

pub(crate) struct LoopOutcome<T> {
    pub params: Vec<Tensor<T>>,
    pub adam: Adam<T>,
    pub rng: ChaCha8Rng,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

/// Mini-batch Adam with early stopping.
///
/// Each epoch shuffles `0..n_items`, draws one task per item with `sample`
/// (sequentially, so the draw order is fixed), evaluates `grad` for the
/// batch in parallel and sums the results in item order. After the epoch,
/// `validate` returns `(objective, query loss)` per validation item; the
/// parameters with the lowest mean objective are kept.
pub(crate) fn optimize<T, E, S, G, V>(
    init: Vec<Tensor<T>>,
    settings: &LoopSettings,
    n_items: usize,
    mut rng: ChaCha8Rng,
    mut sample: S,
    grad: G,
    validate: V,
) -> Result<LoopOutcome<T>>
where
    T: Scalar,
    E: Sync,
    S: FnMut(usize, &mut ChaCha8Rng) -> Result<E>,
    G: Fn(&[Tensor<T>], usize, &E) -> Result<ItemGrad<T>> + Sync,
    V: Fn(&[Tensor<T>]) -> Result<Vec<(f64, f64)>>,
{
    if n_items == 0 {
        return Err(contract("training needs at least one graph"));
    }
    let mut params = init;
    let mut adam = Adam::new(settings.lr, &params.iter().collect::<Vec<_>>());
    let mut best = LoopOutcome {
        params: params.clone(),
        adam: adam.clone(),
        rng: rng.clone(),
        best_epoch: 0,
        history: Vec::new(),
    };
    let mut best_val = f64::INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..n_items).collect();
    for epoch in 1..=settings.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut extra) = (0.0, 0.0);
        for batch in order.chunks(settings.batch_size) {
            let tasks = batch.iter().map(|&i| sample(i, &mut rng)).collect::<Result<Vec<E>>>()?;
            let snapshot = &params;
            let results: Vec<Result<ItemGrad<T>>> = batch
                .par_iter()
                .zip(tasks.par_iter())
                .map(|(&i, task)| grad(snapshot, i, task))
                .collect();
            let mut sum: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            for (&i, r) in batch.iter().zip(results) {
                let r = r?;
                if !r.objective.is_finite() || r.grads.iter().any(|g| !g.all_finite()) {
                    return Err(Error::Training { epoch, graph: i });
                }
                total += r.objective;
                extra += r.extra;
                for (s, g) in sum.iter_mut().zip(&r.grads) {
                    *s = s.add(g)?;
                }
            }
            adam.update(&mut params.iter_mut().collect::<Vec<_>>(), &sum)?;
        }
        let train_objective = total / n_items as f64;
        let vals = validate(&params)?;
        if let Some(bad) = vals.iter().position(|v| !v.0.is_finite()) {
            return Err(Error::Training { epoch, graph: bad });
        }
        let (val_objective, val_query_loss) = if vals.is_empty() {
            (train_objective, f64::NAN)
        } else {
            let n = vals.len() as f64;
            (vals.iter().map(|v| v.0).sum::<f64>() / n, vals.iter().map(|v| v.1).sum::<f64>() / n)
        };
        best.history.push(EpochLog {
            epoch,
            train_objective,
            val_objective,
            val_query_loss,
            film_norm: extra / n_items as f64,
        });
        if val_objective < best_val {
            best_val = val_objective;
            best.params = params.clone();
            best.adam = adam.clone();
            best.rng = rng.clone();
            best.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= settings.patience {
                break;
            }
        }
    }
    Ok(best)
}

/// Episodes sampled once per graph from a dedicated stream.
pub fn validation_episodes<T: Scalar>(
    graphs: &GraphCollection<T>,
    support_fraction: f64,
    seed: u64,
) -> Result<Vec<Episode<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ VALIDATION_SALT);
    graphs
        .graphs
        .iter()
        .map(|g| {
            let split = sample_episode(g, support_fraction, &mut rng)?;
            Ok(Episode::from_split(&split, graphs.num_categories))
        })
        .collect()
}

fn check_compatible<T: Scalar>(c: &GraphCollection<T>, cfg: &MetaConfig) -> Result<()> {
    if c.feature_dim != cfg.spec.input_dim || c.num_categories != cfg.spec.output_dim {
        return Err(contract(format!(
            "collection `{}` has {} features and {} categories, model expects {} and {}",
            c.name, c.feature_dim, c.num_categories, cfg.spec.input_dim, cfg.spec.output_dim
        )));
    }
    if c.multi_label != cfg.multi_label {
        return Err(contract("collection and model disagree on multi-label targets"));
    }
    Ok(())
}

/// Meta-training of θ and φ. Returns the best-validation state.
pub fn train<T: Scalar>(
    train_graphs: &GraphCollection<T>,
    val_graphs: &GraphCollection<T>,
    cfg: &MetaConfig,
    seed: u64,
) -> Result<MetaState<T>> {
    Ok(train_logged(train_graphs, val_graphs, cfg, seed)?.0)
}

pub fn train_logged<T: Scalar>(
    train_graphs: &GraphCollection<T>,
    val_graphs: &GraphCollection<T>,
    cfg: &MetaConfig,
    seed: u64,
) -> Result<(MetaState<T>, Vec<EpochLog>)> {
    cfg.validate()?;
    check_compatible(train_graphs, cfg)?;
    check_compatible(val_graphs, cfg)?;
    let init = MetaState::<T>::init(cfg, seed);
    if cfg.hp.max_epochs == 0 {
        return Ok((init, Vec::new()));
    }
    let layout = init.prior.layout;
    let val_eps = validation_episodes(val_graphs, cfg.hp.support_fraction, seed)?;
    let c = train_graphs.num_categories;
    let unpack = |p: &[Tensor<T>]| -> (ParamVector<T>, GraphPrior<T>) {
        (
            ParamVector { data: p[0].clone(), shapes: init.theta.shapes.clone(), arch: init.theta.arch },
            GraphPrior { layout, data: p[1].clone() },
        )
    };
    let settings = LoopSettings {
        lr: cfg.hp.outer_lr,
        batch_size: cfg.hp.batch_size,
        max_epochs: cfg.hp.max_epochs,
        patience: cfg.hp.patience,
    };
    let out = optimize(
        vec![init.theta.data.clone(), init.prior.data.clone()],
        &settings,
        train_graphs.len(),
        init.rng.clone(),
        |i, rng| {
            let split = sample_episode(&train_graphs.graphs[i], cfg.hp.support_fraction, rng)?;
            Ok(Episode::from_split(&split, c))
        },
        |p, i, ep| {
            let (theta, prior) = unpack(p);
            let r = episode_gradient(&train_graphs.graphs[i], ep, &theta, &prior, cfg)?;
            Ok(ItemGrad { objective: r.objective, extra: r.film_norm, grads: vec![r.theta, r.phi] })
        },
        |p| {
            let (theta, prior) = unpack(p);
            val_graphs
                .graphs
                .iter()
                .zip(&val_eps)
                .map(|(g, ep)| episode_value(g, ep, &theta, &prior, cfg).map(|v| (v.0, v.1)))
                .collect()
        },
    )?;
    let (theta, prior) = unpack(&out.params);
    let state = MetaState {
        theta,
        prior,
        adam: out.adam,
        config: cfg.clone(),
        seed,
        rng: out.rng,
        epoch: out.best_epoch,
    };
    Ok((state, out.history))
}

/// Labels for `query` after dual adaptation on `support`.
pub fn predict<T: Scalar>(
    g: &Graph<T>,
    support: &[(usize, NodeLabel)],
    query: &[usize],
    state: &MetaState<T>,
) -> Result<Vec<NodeLabel>> {
    let cfg = &state.config;
    let ep = Episode::for_prediction(support, query, cfg.spec.output_dim);
    let adapted = adapted_params(g, &ep, &state.theta, &state.prior, cfg)?;
    let logits = forward(&cfg.spec, g, &adapted)?.gather_rows(query)?;
    Ok(decide(&logits, cfg.multi_label))
}

/// Mean `‖γ‖₂ + ‖β‖₂` of the state's FiLM factors over `graphs`.
pub fn mean_film_norm<T: Scalar>(graphs: &GraphCollection<T>, state: &MetaState<T>) -> Result<f64> {
    if graphs.is_empty() || !state.config.hp.graph_adaptation {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for g in &graphs.graphs {
        let (gamma, beta) = crate::meta::film_factors(g, &state.prior)?;
        total += gamma.l2_norm().as_f64() + beta.l2_norm().as_f64();
    }
    Ok(total / graphs.len() as f64)
}
