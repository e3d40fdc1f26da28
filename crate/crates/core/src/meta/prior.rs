use rand::Rng;

use crate::encoders::{glorot, LEAKY_SLOPE};
use crate::error::{contract, Result};
use crate::gradcore::{Tape, Tensor, Var};
use crate::graphdata::Graph;
use crate::scalar::Scalar;

/// Where each graph-prior array lives inside the flat vector φ.
///
/// Order: `W_a` (d×d), then the γ MLP (`W1` d×H, `b1` H, `W2` H×dθ, `b2` dθ),
/// then the β MLP with the same shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PriorLayout {
    pub feature_dim: usize,
    pub hidden: usize,
    pub param_len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Mlp {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl PriorLayout {
    pub fn new(feature_dim: usize, hidden: usize, param_len: usize) -> Self {
        PriorLayout { feature_dim, hidden, param_len }
    }

    fn mlp_len(&self) -> usize {
        let (d, h, p) = (self.feature_dim, self.hidden, self.param_len);
        d * h + h + h * p + p
    }

    fn mlp(&self, which: usize) -> Mlp {
        let (d, h, p) = (self.feature_dim, self.hidden, self.param_len);
        let w1 = d * d + which * self.mlp_len();
        Mlp { w1, b1: w1 + d * h, w2: w1 + d * h + h, b2: w1 + d * h + h + h * p }
    }

    pub fn len(&self) -> usize {
        let d = self.feature_dim;
        d * d + 2 * self.mlp_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named segments `(name, offset, shape)` in storage order.
    pub fn segments(&self) -> Vec<(String, usize, Vec<usize>)> {
        let (d, h, p) = (self.feature_dim, self.hidden, self.param_len);
        let mut out = vec![("phi.att".to_string(), 0, vec![d, d])];
        for (k, name) in ["gamma", "beta"].iter().enumerate() {
            let m = self.mlp(k);
            out.push((format!("phi.{name}.w1"), m.w1, vec![d, h]));
            out.push((format!("phi.{name}.b1"), m.b1, vec![h]));
            out.push((format!("phi.{name}.w2"), m.w2, vec![h, p]));
            out.push((format!("phi.{name}.b2"), m.b2, vec![p]));
        }
        out
    }
}

/// The graph prior φ: attention pooling plus the γ and β hypernetworks.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPrior<T> {
    pub layout: PriorLayout,
    pub data: Tensor<T>,
}

impl<T: Scalar> GraphPrior<T> {
    pub fn zeros(layout: PriorLayout) -> Self {
        GraphPrior { layout, data: Tensor::zeros(&[layout.len()]) }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(layout: PriorLayout, rng: &mut R) -> Self {
        let mut data = Vec::with_capacity(layout.len());
        for (name, _, shape) in layout.segments() {
            if name.ends_with(".b1") || name.ends_with(".b2") {
                data.extend(std::iter::repeat_n(T::zero(), shape[0]));
            } else {
                data.extend(glorot::<T, R>(shape[0], shape[1], rng));
            }
        }
        GraphPrior { layout, data: Tensor::vector(data) }
    }

    pub fn from_data(layout: PriorLayout, data: Tensor<T>) -> Result<Self> {
        if data.shape() != [layout.len()] {
            return Err(contract(format!(
                "graph prior of shape {:?}, layout needs [{}]",
                data.shape(),
                layout.len()
            )));
        }
        Ok(GraphPrior { layout, data })
    }

    /// A named segment as a tensor.
    pub fn segment(&self, name: &str) -> Option<Tensor<T>> {
        self.layout
            .segments()
            .into_iter()
            .find(|s| s.0 == name)
            .map(|(_, off, shape)| self.data.slice_flat(off, &shape).expect("layout is consistent"))
    }
}

fn check_prior<T: Scalar>(layout: &PriorLayout, phi: &Var<'_, T>) -> Result<()> {
    if phi.shape() != [layout.len()] {
        return Err(contract(format!(
            "graph prior of shape {:?}, layout needs [{}]",
            phi.shape(),
            layout.len()
        )));
    }
    Ok(())
}

/// Attention-pooled graph representation `g` as a `1 × d` row:
/// `P = X W_aᵀ` (row v is `W_a x_v`), `c = tanh(mean_v P_v)`,
/// `a_v = σ(x_v · W_a c)`, `g = Σ_v a_v P_v`.
pub fn graph_embedding<'t, T: Scalar>(
    g: &Graph<T>,
    phi: Var<'t, T>,
    layout: &PriorLayout,
) -> Result<Var<'t, T>> {
    check_prior(layout, &phi)?;
    let n = g.node_count();
    if n == 0 {
        return Err(contract("graph embedding of an empty graph"));
    }
    let d = layout.feature_dim;
    if g.feature_dim() != d {
        return Err(contract(format!(
            "graph features have dimension {}, prior expects {d}",
            g.feature_dim()
        )));
    }
    let tape = phi.tape();
    let x = tape.constant(g.features().clone());
    let wat = phi.slice(0, &[d, d])?.transpose()?;
    let p = x.matmul(wat)?;
    let mean = tape.constant(Tensor::full(&[1, n], T::one() / T::of(n as f64)));
    let c = mean.matmul(p)?.tanh();
    let scores = x.matmul(c.matmul(wat)?.transpose()?)?;
    scores.sigmoid().transpose()?.matmul(p)
}

/// The FiLM factors `(γ, β)`, each a vector of the encoder's parameter length.
pub fn film<'t, T: Scalar>(
    embedding: Var<'t, T>,
    phi: Var<'t, T>,
    layout: &PriorLayout,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    check_prior(layout, &phi)?;
    let (d, h, p) = (layout.feature_dim, layout.hidden, layout.param_len);
    if embedding.shape() != [1, d] {
        return Err(contract(format!(
            "graph embedding of shape {:?}, prior expects [1, {d}]",
            embedding.shape()
        )));
    }
    let run = |m: Mlp| -> Result<Var<'t, T>> {
        let hid = embedding
            .matmul(phi.slice(m.w1, &[d, h])?)?
            .add(phi.slice(m.b1, &[1, h])?)?
            .leaky_relu(T::of(LEAKY_SLOPE));
        hid.matmul(phi.slice(m.w2, &[h, p])?)?.add(phi.slice(m.b2, &[1, p])?)?.reshape(&[p])
    };
    Ok((run(layout.mlp(0))?, run(layout.mlp(1))?))
}

/// `(γ + 1) ⊙ θ + β`.
pub fn graph_adapt<'t, T: Scalar>(
    theta: Var<'t, T>,
    gamma: Var<'t, T>,
    beta: Var<'t, T>,
) -> Result<Var<'t, T>> {
    if gamma.shape() != theta.shape() || beta.shape() != theta.shape() {
        return Err(contract(format!(
            "FiLM factors {:?}/{:?} do not match parameters {:?}",
            gamma.shape(),
            beta.shape(),
            theta.shape()
        )));
    }
    theta.mul(gamma.add_scalar(T::one()))?.add(beta)
}

/// Graph embedding for fixed φ.
pub fn embed<T: Scalar>(g: &Graph<T>, prior: &GraphPrior<T>) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let e = graph_embedding(g, tape.constant(prior.data.clone()), &prior.layout)?;
    e.value().reshape(&[prior.layout.feature_dim])
}

/// FiLM factors for fixed φ.
pub fn film_factors<T: Scalar>(g: &Graph<T>, prior: &GraphPrior<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let tape = Tape::new();
    let phi = tape.constant(prior.data.clone());
    let (gamma, beta) = film(graph_embedding(g, phi, &prior.layout)?, phi, &prior.layout)?;
    Ok((gamma.value(), beta.value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, x: &[f64]) -> Graph<f64> {
        let d = x.len() / n;
        Graph::new(Tensor::from_f64(&[n, d], x).unwrap(), [], vec![None; n]).unwrap()
    }

    fn with_att(layout: PriorLayout, wa: &[f64]) -> GraphPrior<f64> {
        let mut p = GraphPrior::zeros(layout);
        p.data.data_mut()[..wa.len()].copy_from_slice(wa);
        p
    }

    #[test]
    fn layout_lengths() {
        let l = PriorLayout::new(3, 32, 80);
        assert_eq!(l.len(), 9 + 2 * (96 + 32 + 32 * 80 + 80));
        let segs = l.segments();
        let last = segs.last().unwrap();
        assert_eq!(last.1 + last.2.iter().product::<usize>(), l.len());
    }

    #[test]
    fn zero_attention_gives_zero_embedding() {
        let l = PriorLayout::new(2, 4, 5);
        let e = embed(&graph(3, &[1., 2., -1., 0.5, 3., 3.]), &GraphPrior::zeros(l)).unwrap();
        assert_eq!(e.data(), &[0.0, 0.0]);
        let id = with_att(l, &[1., 0., 0., 1.]);
        assert_eq!(embed(&graph(1, &[0., 0.]), &id).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn embedding_matches_direct_evaluation() {
        let l = PriorLayout::new(2, 4, 5);
        let wa = [0.3, -0.7, 1.1, 0.4];
        let x = [1.0, 2.0, -0.5, 0.25, 2.0, -1.0];
        let e = embed(&graph(3, &x), &with_att(l, &wa)).unwrap();
        let wx = |v: &[f64]| [wa[0] * v[0] + wa[1] * v[1], wa[2] * v[0] + wa[3] * v[1]];
        let p: Vec<[f64; 2]> = x.chunks(2).map(wx).collect();
        let c = [0, 1].map(|j| (p.iter().map(|r| r[j]).sum::<f64>() / 3.0).tanh());
        let wc = wx(&c);
        let mut g = [0.0; 2];
        for (xv, pv) in x.chunks(2).zip(&p) {
            let a = 1.0 / (1.0 + (-(xv[0] * wc[0] + xv[1] * wc[1])).exp());
            g[0] += a * pv[0];
            g[1] += a * pv[1];
        }
        for j in 0..2 {
            assert!((e.data()[j] - g[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn duplicated_node_doubles_embedding() {
        let l = PriorLayout::new(3, 4, 5);
        let prior = GraphPrior::<f64>::init(l, &mut ChaCha8Rng::seed_from_u64(3));
        let one = embed(&graph(1, &[0.5, -1.0, 2.0]), &prior).unwrap();
        let two = embed(&graph(2, &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]), &prior).unwrap();
        assert_eq!(two, one.scale(2.0));
    }

    #[test]
    fn film_zero_and_bias_only() {
        let l = PriorLayout::new(2, 3, 4);
        let g = graph(2, &[1., 2., 3., 4.]);
        let (gamma, beta) = film_factors(&g, &GraphPrior::zeros(l)).unwrap();
        assert!(gamma.data().iter().chain(beta.data()).all(|&v| v == 0.0));

        let mut p = GraphPrior::<f64>::zeros(l);
        let seg = l.segments();
        let b2 = seg.iter().find(|s| s.0 == "phi.gamma.b2").unwrap().1;
        p.data.data_mut()[..4].copy_from_slice(&[1., 1., 1., 1.]);
        p.data.data_mut()[b2..b2 + 4].copy_from_slice(&[0.5, -1., 2., 0.]);
        let (gamma, _) = film_factors(&g, &p).unwrap();
        assert_eq!(gamma.data(), &[0.5, -1., 2., 0.]);
    }

    #[test]
    fn film_matches_hand_rolled_mlp() {
        let l = PriorLayout::new(2, 3, 4);
        let prior = GraphPrior::<f64>::init(l, &mut ChaCha8Rng::seed_from_u64(8));
        let mut prior = prior;
        for (i, v) in prior.data.data_mut().iter_mut().enumerate() {
            if i % 7 == 0 {
                *v += 0.1;
            }
        }
        let g = graph(2, &[1., -2., 0.5, 1.5]);
        let e = embed(&g, &prior).unwrap();
        let (gamma, beta) = film_factors(&g, &prior).unwrap();
        for (name, got) in [("gamma", gamma), ("beta", beta)] {
            let seg = |s: &str| prior.segment(&format!("phi.{name}.{s}")).unwrap();
            let (w1, b1, w2, b2) = (seg("w1"), seg("b1"), seg("w2"), seg("b2"));
            let hid: Vec<f64> = (0..3)
                .map(|j| {
                    let z = e.data()[0] * w1.at(0, j) + e.data()[1] * w1.at(1, j) + b1.data()[j];
                    if z > 0.0 { z } else { 0.01 * z }
                })
                .collect();
            for k in 0..4 {
                let want = (0..3).map(|j| hid[j] * w2.at(j, k)).sum::<f64>() + b2.data()[k];
                assert!((got.data()[k] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn adapt_identities() {
        let tape = Tape::<f64>::new();
        let theta = tape.var(Tensor::vector(vec![2.0, -1.0, 0.3]));
        let zero = tape.constant(Tensor::zeros(&[3]));
        assert_eq!(graph_adapt(theta, zero, zero).unwrap().value(), theta.value());
        let minus = tape.constant(Tensor::full(&[3], -1.0));
        let b = tape.constant(Tensor::vector(vec![4.0, 5.0, 6.0]));
        assert_eq!(graph_adapt(theta, minus, b).unwrap().value().data(), &[4.0, 5.0, 6.0]);

        let theta = tape.var(Tensor::vector(vec![2.0, -1.0]));
        let gamma = tape.constant(Tensor::vector(vec![0.5, 0.0]));
        let beta = tape.constant(Tensor::vector(vec![0.0, 3.0]));
        assert_eq!(graph_adapt(theta, gamma, beta).unwrap().value().data(), &[3.0, 2.0]);
        let short = tape.constant(Tensor::zeros(&[1]));
        assert!(graph_adapt(theta, short, beta).is_err());
    }
}
