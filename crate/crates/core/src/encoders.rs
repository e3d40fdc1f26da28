//! GNN encoders as pure maps from a graph and a flat parameter vector to
//! node logits. Keeping the parameters flat lets them be scaled, shifted and
//! gradient-stepped as a single vector.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{contract, Error, Result};
use crate::gradcore::{Tape, Tensor, Var};
use crate::graphdata::Graph;
use crate::scalar::Scalar;

/// Slope of every hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arch {
    Sgc,
    Gcn,
    Sage,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Sgc => "sgc",
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgc" => Ok(Arch::Sgc),
            "gcn" => Ok(Arch::Gcn),
            "sage" | "graphsage" | "sage-mean" => Ok(Arch::Sage),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Powers of the normalized adjacency applied by SGC.
    pub propagation_steps: usize,
    /// SGC with a single `d × |C|` matrix instead of two stacked linear maps.
    pub sgc_collapsed: bool,
}

impl EncoderSpec {
    /// Two layers of width 16; SGC propagates twice.
    pub fn new(arch: Arch, input_dim: usize, output_dim: usize) -> Self {
        EncoderSpec {
            arch,
            input_dim,
            hidden_dim: 16,
            output_dim,
            propagation_steps: 2,
            sgc_collapsed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.output_dim == 0 || self.input_dim == 0 {
            return Err(Error::Config(format!(
                "encoder dimensions must be positive: in {} hidden {} out {}",
                self.input_dim, self.hidden_dim, self.output_dim
            )));
        }
        Ok(())
    }

    /// Layer matrix shapes in flattening order.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.output_dim);
        match self.arch {
            Arch::Sgc if self.sgc_collapsed => vec![(d, c)],
            Arch::Sgc | Arch::Gcn => vec![(d, h), (h, c)],
            Arch::Sage => vec![(2 * d, h), (2 * h, c)],
        }
    }

    pub fn param_len(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }
}

/// Encoder parameters flattened layer by layer, row-major within a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T> {
    pub data: Tensor<T>,
    pub shapes: Vec<(usize, usize)>,
    pub arch: Arch,
}

impl<T: Scalar> ParamVector<T> {
    pub fn flatten(arch: Arch, matrices: &[Tensor<T>]) -> Result<Self> {
        let mut data = Vec::new();
        let mut shapes = Vec::with_capacity(matrices.len());
        for m in matrices {
            if m.shape().len() != 2 {
                return Err(contract(format!("layer {:?} is not a matrix", m.shape())));
            }
            shapes.push((m.rows(), m.cols()));
            data.extend_from_slice(m.data());
        }
        Ok(ParamVector { data: Tensor::vector(data), shapes, arch })
    }

    /// Wraps a flat vector after checking it against `spec`.
    pub fn from_data(spec: &EncoderSpec, data: Tensor<T>) -> Result<Self> {
        if data.shape() != [spec.param_len()] {
            return Err(contract(format!(
                "parameter vector has shape {:?}, spec needs [{}]",
                data.shape(),
                spec.param_len()
            )));
        }
        Ok(ParamVector { data, shapes: spec.shapes(), arch: spec.arch })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn unflatten(&self) -> Result<Vec<Tensor<T>>> {
        let total: usize = self.shapes.iter().map(|(r, c)| r * c).sum();
        if total != self.data.len() {
            return Err(contract(format!(
                "{} parameters for shapes totalling {total}",
                self.data.len()
            )));
        }
        let mut off = 0;
        self.shapes
            .iter()
            .map(|&(r, c)| {
                let m = self.data.slice_flat(off, &[r, c]);
                off += r * c;
                m
            })
            .collect()
    }
}

/// Glorot-uniform initialization of every layer matrix.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(spec: &EncoderSpec, rng: &mut R) -> ParamVector<T> {
    let shapes = spec.shapes();
    let mut data = Vec::with_capacity(spec.param_len());
    for &(r, c) in &shapes {
        data.extend(glorot::<T, R>(r, c, rng));
    }
    ParamVector { data: Tensor::vector(data), shapes, arch: spec.arch }
}

/// `rows·cols` draws from `U(-a, a)` with `a = sqrt(6/(rows+cols))`.
pub fn glorot<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<T> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| T::of(rng.random_range(-a..a))).collect()
}

/// `Ŝᴷ X`, the fixed part of SGC.
pub fn propagated_features<T: Scalar>(g: &Graph<T>, steps: usize) -> Result<Tensor<T>> {
    let s = &g.normalized_adjacency().matrix;
    let mut x = g.features().clone();
    for _ in 0..steps {
        x = s.spmm(&x)?;
    }
    Ok(x)
}

/// Node representations and logits recorded on `theta`'s tape.
#[derive(Clone, Copy)]
pub struct Encoded<'t, T> {
    /// Hidden-layer output (the input to the last linear map).
    pub hidden: Var<'t, T>,
    pub logits: Var<'t, T>,
}

fn check_input<T: Scalar>(spec: &EncoderSpec, g: &Graph<T>, theta: &Var<'_, T>) -> Result<()> {
    if theta.shape() != [spec.param_len()] {
        return Err(contract(format!(
            "{:?} parameters for a {} encoder of size {}",
            theta.shape(),
            spec.arch,
            spec.param_len()
        )));
    }
    if g.feature_dim() != spec.input_dim {
        return Err(contract(format!(
            "graph features have dimension {}, encoder expects {}",
            g.feature_dim(),
            spec.input_dim
        )));
    }
    Ok(())
}

/// Runs the encoder with parameters `theta`, a flat variable of length
/// `spec.param_len()`.
pub fn encode<'t, T: Scalar>(
    spec: &EncoderSpec,
    g: &Graph<T>,
    theta: Var<'t, T>,
) -> Result<Encoded<'t, T>> {
    check_input(spec, g, &theta)?;
    let tape = theta.tape();
    let (d, h, c) = (spec.input_dim, spec.hidden_dim, spec.output_dim);
    let slope = T::of(LEAKY_SLOPE);
    match spec.arch {
        Arch::Sgc => {
            let x = tape.constant(propagated_features(g, spec.propagation_steps)?);
            if spec.sgc_collapsed {
                let logits = x.matmul(theta.slice(0, &[d, c])?)?;
                return Ok(Encoded { hidden: x, logits });
            }
            let hidden = x.matmul(theta.slice(0, &[d, h])?)?;
            let logits = hidden.matmul(theta.slice(d * h, &[h, c])?)?;
            Ok(Encoded { hidden, logits })
        }
        Arch::Gcn => {
            let p = g.normalized_adjacency();
            let x = tape.constant(g.features().clone());
            let hidden = x
                .spmm_with_transpose(&p.matrix, &p.transpose)?
                .matmul(theta.slice(0, &[d, h])?)?
                .leaky_relu(slope);
            let logits = hidden
                .matmul(theta.slice(d * h, &[h, c])?)?
                .spmm_with_transpose(&p.matrix, &p.transpose)?;
            Ok(Encoded { hidden, logits })
        }
        Arch::Sage => {
            let m = g.mean_adjacency();
            let x = tape.constant(g.features().clone());
            // [h ‖ mean] · W splits into h·W_self + mean·W_neigh
            let layer = |h_in: Var<'t, T>, off: usize, din: usize, dout: usize| -> Result<Var<'t, T>> {
                let own = h_in.matmul(theta.slice(off, &[din, dout])?)?;
                let neigh = h_in
                    .spmm_with_transpose(&m.matrix, &m.transpose)?
                    .matmul(theta.slice(off + din * dout, &[din, dout])?)?;
                own.add(neigh)
            };
            let hidden = layer(x, 0, d, h)?.leaky_relu(slope);
            let logits = layer(hidden, 2 * d * h, h, c)?;
            Ok(Encoded { hidden, logits })
        }
    }
}

/// Node logits, `node_count × output_dim`.
pub fn forward_var<'t, T: Scalar>(
    spec: &EncoderSpec,
    g: &Graph<T>,
    theta: Var<'t, T>,
) -> Result<Var<'t, T>> {
    Ok(encode(spec, g, theta)?.logits)
}

/// Logits for fixed parameters.
pub fn forward<T: Scalar>(spec: &EncoderSpec, g: &Graph<T>, theta: &ParamVector<T>) -> Result<Tensor<T>> {
    let tape = Tape::new();
    Ok(forward_var(spec, g, tape.constant(theta.data.clone()))?.value())
}

/// Hidden representations for fixed parameters.
pub fn hidden<T: Scalar>(spec: &EncoderSpec, g: &Graph<T>, theta: &ParamVector<T>) -> Result<Tensor<T>> {
    let tape = Tape::new();
    Ok(encode(spec, g, tape.constant(theta.data.clone()))?.hidden.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::fd_check;
    use crate::graphdata::{synth_collection, NodeLabel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)], x: &[f64], d: usize) -> Graph<f64> {
        Graph::new(Tensor::from_f64(&[n, d], x).unwrap(), edges.iter().copied(), vec![None; n]).unwrap()
    }

    fn all_specs(d: usize, c: usize) -> Vec<EncoderSpec> {
        let mut collapsed = EncoderSpec::new(Arch::Sgc, d, c);
        collapsed.sgc_collapsed = true;
        vec![
            EncoderSpec::new(Arch::Sgc, d, c),
            collapsed,
            EncoderSpec::new(Arch::Gcn, d, c),
            EncoderSpec::new(Arch::Sage, d, c),
        ]
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(EncoderSpec::new(Arch::Sgc, 3, 8).param_len(), 176);
        assert_eq!(EncoderSpec::new(Arch::Gcn, 500, 7).param_len(), 8112);
        assert_eq!(EncoderSpec::new(Arch::Sage, 3, 2).param_len(), 6 * 16 + 32 * 2);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = EncoderSpec::new(Arch::Gcn, 5, 3);
        let a: ParamVector<f64> = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(4));
        let b: ParamVector<f64> = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        let bound = (6.0f64 / 21.0).sqrt();
        assert!(a.data.data()[..80].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn flatten_order_and_round_trip() {
        let a = Tensor::from_f64(&[1, 1], &[2.0]).unwrap();
        let b = Tensor::from_f64(&[1, 1], &[-3.0]).unwrap();
        let p = ParamVector::<f64>::flatten(Arch::Sgc, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(p.data.data(), &[2.0, -3.0]);
        assert_eq!(p.unflatten().unwrap(), vec![a, b]);

        let spec = EncoderSpec::new(Arch::Sage, 4, 3);
        let r: ParamVector<f64> = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(1));
        let back = ParamVector::flatten(spec.arch, &r.unflatten().unwrap()).unwrap();
        let bits = |p: &ParamVector<f64>| p.data.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&r));

        let wrong = Tensor::<f64>::zeros(&[spec.param_len() - 1]);
        assert!(matches!(ParamVector::from_data(&spec, wrong), Err(Error::Contract(_))));
        let mut broken = r.clone();
        broken.data = Tensor::zeros(&[3]);
        assert!(matches!(broken.unflatten(), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_parameters_give_zero_logits() {
        let g = graph(3, &[(0, 1), (1, 2)], &[1., 2., 3., 4., 5., 6.], 2);
        for spec in all_specs(2, 3) {
            let theta = ParamVector::from_data(&spec, Tensor::zeros(&[spec.param_len()])).unwrap();
            let z = forward(&spec, &g, &theta).unwrap();
            assert_eq!(z.shape(), &[3, 3]);
            assert!(z.data().iter().all(|&v| v == 0.0), "{:?}", spec.arch);
        }
    }

    #[test]
    fn isolated_node_sgc_is_plain_linear_map() {
        let g = graph(1, &[], &[1.5, -2.0], 2);
        let mut spec = EncoderSpec::new(Arch::Sgc, 2, 1);
        spec.hidden_dim = 2;
        let w1 = Tensor::from_f64(&[2, 2], &[1., 2., 3., 4.]).unwrap();
        let w2 = Tensor::from_f64(&[2, 1], &[0.5, -1.0]).unwrap();
        let theta = ParamVector::flatten(Arch::Sgc, &[w1.clone(), w2.clone()]).unwrap();
        let expect = g.features().matmul(&w1).unwrap().matmul(&w2).unwrap();
        assert_eq!(forward(&spec, &g, &theta).unwrap(), expect);
    }

    #[test]
    fn two_node_hand_computation() {
        // Ŝ = [[.5,.5],[.5,.5]], X = [2, 4]ᵀ, W¹ = 3, W² = -1 → both logits -9
        let g = graph(2, &[(0, 1)], &[2.0, 4.0], 1);
        let spec = EncoderSpec { hidden_dim: 1, propagation_steps: 1, ..EncoderSpec::new(Arch::Sgc, 1, 1) };
        let theta = ParamVector::from_data(&spec, Tensor::vector(vec![3.0, -1.0])).unwrap();
        assert_eq!(forward(&spec, &g, &theta).unwrap().data(), &[-9.0, -9.0]);
    }

    #[test]
    fn sgc_is_linear_in_features() {
        let c = synth_collection::<f64>(1, (6, 6), 3, 2, 0.8, 7);
        let g = &c.graphs[0];
        let g2 = g.with_features(g.features().scale(2.0)).unwrap();
        let spec = EncoderSpec::new(Arch::Sgc, 3, 2);
        let theta = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(0));
        let a = forward(&spec, g, &theta).unwrap();
        let b = forward(&spec, &g2, &theta).unwrap();
        assert_eq!(a.scale(2.0), b);
    }

    #[test]
    fn permutation_equivariance() {
        let c = synth_collection::<f64>(1, (7, 7), 3, 3, 0.6, 3);
        let g = &c.graphs[0];
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let gp = g.permuted(&perm).unwrap();
        for spec in all_specs(3, 3) {
            let theta = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(9));
            let a = forward(&spec, g, &theta).unwrap();
            let b = forward(&spec, &gp, &theta).unwrap();
            for v in 0..7 {
                for (x, y) in a.row(v).iter().zip(b.row(perm[v])) {
                    assert!((x - y).abs() <= 1e-12, "{:?}", spec.arch);
                }
            }
        }
    }

    #[test]
    fn sage_without_edges_is_a_node_mlp() {
        let g = graph(3, &[], &[1., -2., 0.5, 3., -1., 2.], 2);
        let spec = EncoderSpec { hidden_dim: 4, ..EncoderSpec::new(Arch::Sage, 2, 3) };
        let theta = init_params::<f64, _>(&spec, &mut ChaCha8Rng::seed_from_u64(2));
        let w = theta.unflatten().unwrap();
        let cat_zero = |m: &Tensor<f64>| {
            let (n, k) = (m.rows(), m.cols());
            let mut out = vec![0.0; n * 2 * k];
            for r in 0..n {
                out[r * 2 * k..r * 2 * k + k].copy_from_slice(m.row(r));
            }
            Tensor::matrix(n, 2 * k, out).unwrap()
        };
        let h = cat_zero(g.features()).matmul(&w[0]).unwrap().leaky_relu(LEAKY_SLOPE);
        let expect = cat_zero(&h).matmul(&w[1]).unwrap();
        assert_eq!(forward(&spec, &g, &theta).unwrap(), expect);
    }

    #[test]
    fn feature_dimension_mismatch_is_a_contract_error() {
        let g = graph(2, &[(0, 1)], &[1., 2.], 1);
        let spec = EncoderSpec::new(Arch::Gcn, 3, 2);
        let theta = ParamVector::from_data(&spec, Tensor::zeros(&[spec.param_len()])).unwrap();
        assert!(matches!(forward(&spec, &g, &theta), Err(Error::Contract(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut c = synth_collection::<f64>(1, (5, 5), 3, 3, 0.6, 12);
        let g = c.graphs.remove(0);
        let nodes = [0usize, 2, 4];
        let targets = crate::graphdata::label_matrix::<f64>(
            &nodes.iter().map(|&v| g.label(v).unwrap()).collect::<Vec<&NodeLabel>>(),
            3,
        );
        for spec in all_specs(3, 3) {
            let spec = EncoderSpec { hidden_dim: 4, ..spec };
            let theta = init_params::<f64, _>(&spec, &mut ChaCha8Rng::seed_from_u64(5));
            let err = fd_check(
                |t| forward_var(&spec, &g, t)?.gather_rows(&nodes)?.softmax_cross_entropy(&targets),
                &theta.data,
            )
            .unwrap();
            assert!(err <= 1e-5, "{:?} {err}", spec.arch);
        }
    }
}
