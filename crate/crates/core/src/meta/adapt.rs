use crate::encoders::{forward_var, ParamVector};
use crate::error::{contract, Result};
use crate::gradcore::{Tape, Tensor, Var};
use crate::graphdata::{EpisodeSplit, Graph, NodeLabel};
use crate::meta::{film, graph_adapt, graph_embedding, GraphPrior, MetaConfig, PriorLayout};
use crate::scalar::Scalar;

/// Node indices and dense targets of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode<T> {
    pub support: Vec<usize>,
    pub support_targets: Tensor<T>,
    pub query: Vec<usize>,
    pub query_targets: Option<Tensor<T>>,
}

impl<T: Scalar> Episode<T> {
    pub fn from_split(split: &EpisodeSplit, num_categories: usize) -> Self {
        Episode {
            support: split.support_nodes(),
            support_targets: split.support_targets(num_categories),
            query: split.query.clone(),
            query_targets: split.query_targets(num_categories),
        }
    }

    pub fn cast<S: Scalar>(&self) -> Episode<S> {
        Episode {
            support: self.support.clone(),
            support_targets: self.support_targets.cast(),
            query: self.query.clone(),
            query_targets: self.query_targets.as_ref().map(Tensor::cast),
        }
    }

    /// Support-only episode for prediction; `query` nodes are unlabeled.
    pub fn for_prediction(support: &[(usize, NodeLabel)], query: &[usize], num_categories: usize) -> Self {
        let labels: Vec<&NodeLabel> = support.iter().map(|s| &s.1).collect();
        Episode {
            support: support.iter().map(|s| s.0).collect(),
            support_targets: crate::graphdata::label_matrix(&labels, num_categories),
            query: query.to_vec(),
            query_targets: None,
        }
    }
}

/// Summed loss of the rows `nodes` of `logits`: softmax cross-entropy, or
/// per-category binary cross-entropy when `multi_label`.
pub fn node_loss<'t, T: Scalar>(
    logits: Var<'t, T>,
    nodes: &[usize],
    targets: &Tensor<T>,
    multi_label: bool,
) -> Result<Var<'t, T>> {
    if nodes.is_empty() {
        return Err(contract("loss over an empty node set"));
    }
    let rows = logits.gather_rows(nodes)?;
    if multi_label {
        if targets.shape() != rows.shape().as_slice() {
            return Err(contract("multi-label targets do not match logits"));
        }
        rows.sigmoid_bce(targets)
    } else {
        rows.softmax_cross_entropy(targets)
    }
}

pub fn support_loss<'t, T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta: Var<'t, T>,
    cfg: &MetaConfig,
) -> Result<Var<'t, T>> {
    let logits = forward_var(&cfg.spec, g, theta)?;
    node_loss(logits, &ep.support, &ep.support_targets, cfg.multi_label)
}

pub fn query_loss<'t, T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta: Var<'t, T>,
    cfg: &MetaConfig,
) -> Result<Var<'t, T>> {
    let targets = ep.query_targets.as_ref().ok_or_else(|| contract("query labels are missing"))?;
    let logits = forward_var(&cfg.spec, g, theta)?;
    node_loss(logits, &ep.query, targets, cfg.multi_label)
}

/// `steps` plain gradient steps `θ ← θ − α∇loss(θ)`. With `second_order`
/// the gradients stay differentiable; otherwise they enter as constants.
pub fn descend<'t, T, F>(
    theta: Var<'t, T>,
    alpha: f64,
    steps: usize,
    second_order: bool,
    loss: F,
) -> Result<Var<'t, T>>
where
    T: Scalar,
    F: Fn(Var<'t, T>) -> Result<Var<'t, T>>,
{
    let tape = theta.tape();
    let mut theta = theta;
    for _ in 0..steps {
        let l = loss(theta)?;
        let grad = tape.backward(l, &[theta], second_order)?[0];
        theta = theta.sub(grad.scale(T::of(alpha)))?;
    }
    Ok(theta)
}

/// Task-level adaptation on the support set.
pub fn task_adapt<'t, T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta_i: Var<'t, T>,
    cfg: &MetaConfig,
) -> Result<Var<'t, T>> {
    let hp = &cfg.hp;
    descend(theta_i, hp.alpha, hp.inner_steps, hp.second_order, |t| support_loss(g, ep, t, cfg))
}

/// Graph-level then task-level adaptation of `theta`. Returns the adapted
/// parameters and, with graph adaptation on, the FiLM factors.
pub fn dual_adapt<'t, T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta: Var<'t, T>,
    phi: Var<'t, T>,
    layout: &PriorLayout,
    cfg: &MetaConfig,
) -> Result<(Var<'t, T>, Option<(Var<'t, T>, Var<'t, T>)>)> {
    let (theta_i, factors) = if cfg.hp.graph_adaptation {
        let (gamma, beta) = film(graph_embedding(g, phi, layout)?, phi, layout)?;
        (graph_adapt(theta, gamma, beta)?, Some((gamma, beta)))
    } else {
        (theta, None)
    };
    Ok((task_adapt(g, ep, theta_i, cfg)?, factors))
}

pub struct Objective<'t, T> {
    pub value: Var<'t, T>,
    pub query_loss: f64,
    /// `‖γ‖₂ + ‖β‖₂` (zero without graph adaptation).
    pub film_norm: f64,
}

/// Query loss after dual adaptation plus `λ(‖γ‖₂ + ‖β‖₂)`.
pub fn episode_objective<'t, T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta: Var<'t, T>,
    phi: Var<'t, T>,
    layout: &PriorLayout,
    cfg: &MetaConfig,
) -> Result<Objective<'t, T>> {
    if ep.query_targets.is_none() {
        return Err(contract("episode objective needs query labels"));
    }
    let (adapted, factors) = dual_adapt(g, ep, theta, phi, layout, cfg)?;
    let q = query_loss(g, ep, adapted, cfg)?;
    match factors {
        Some((gamma, beta)) => {
            let norm = gamma.l2_norm().add(beta.l2_norm())?;
            Ok(Objective {
                value: q.add(norm.scale(T::of(cfg.hp.lambda)))?,
                query_loss: q.item().as_f64(),
                film_norm: norm.item().as_f64(),
            })
        }
        None => Ok(Objective { value: q, query_loss: q.item().as_f64(), film_norm: 0.0 }),
    }
}

/// Objective value and its gradients with respect to θ and φ.
pub struct EpisodeGrad<T> {
    pub objective: f64,
    pub query_loss: f64,
    pub film_norm: f64,
    pub theta: Tensor<T>,
    pub phi: Tensor<T>,
}

pub fn episode_gradient<T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta: &ParamVector<T>,
    prior: &GraphPrior<T>,
    cfg: &MetaConfig,
) -> Result<EpisodeGrad<T>> {
    let tape = Tape::new();
    let t = tape.var(theta.data.clone());
    let p = tape.var(prior.data.clone());
    let obj = episode_objective(g, ep, t, p, &prior.layout, cfg)?;
    let mut grads = tape.grad(obj.value, &[t, p])?.into_iter();
    Ok(EpisodeGrad {
        objective: obj.value.item().as_f64(),
        query_loss: obj.query_loss,
        film_norm: obj.film_norm,
        theta: grads.next().expect("two gradients"),
        phi: grads.next().expect("two gradients"),
    })
}

/// Objective value only; inner gradients are not kept differentiable.
pub fn episode_value<T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta: &ParamVector<T>,
    prior: &GraphPrior<T>,
    cfg: &MetaConfig,
) -> Result<(f64, f64, f64)> {
    let mut first = cfg.clone();
    first.hp.second_order = false;
    let tape = Tape::new();
    let t = tape.var(theta.data.clone());
    let p = tape.constant(prior.data.clone());
    let obj = episode_objective(g, ep, t, p, &prior.layout, &first)?;
    Ok((obj.value.item().as_f64(), obj.query_loss, obj.film_norm))
}

/// Parameters after dual adaptation on the support of `ep`.
pub fn adapted_params<T: Scalar>(
    g: &Graph<T>,
    ep: &Episode<T>,
    theta: &ParamVector<T>,
    prior: &GraphPrior<T>,
    cfg: &MetaConfig,
) -> Result<ParamVector<T>> {
    if ep.support.is_empty() {
        return Err(contract("prediction needs a nonempty support set"));
    }
    let mut first = cfg.clone();
    first.hp.second_order = false;
    let tape = Tape::new();
    let t = tape.var(theta.data.clone());
    let p = tape.constant(prior.data.clone());
    let (adapted, _) = dual_adapt(g, ep, t, p, &prior.layout, &first)?;
    Ok(ParamVector { data: adapted.value(), shapes: theta.shapes.clone(), arch: theta.arch })
}

/// Category decisions for each row: argmax with ties to the lowest index,
/// or `σ(z) ≥ 0.5` per category.
pub fn decide<T: Scalar>(logits: &Tensor<T>, multi_label: bool) -> Vec<NodeLabel> {
    if multi_label {
        let half = T::of(0.5);
        (0..logits.rows())
            .map(|r| {
                NodeLabel::Multi(logits.row(r).iter().map(|&z| crate::gradcore::sigmoid(z) >= half).collect())
            })
            .collect()
    } else {
        logits.argmax_rows().into_iter().map(NodeLabel::Class).collect()
    }
}
