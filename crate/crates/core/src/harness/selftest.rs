//! Gradient-check suites: every tape primitive, every encoder and the full
//! episode objective against central finite differences.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::{forward_var, init_params, Arch, EncoderSpec, LEAKY_SLOPE};
use crate::error::Result;
use crate::gradcore::{fd_check_extended, ScalarFn, SparseMatrix, Tensor, Var};
use crate::graphdata::{sample_episode, synth_collection, Graph};
use crate::meta::{episode_objective, Episode, GraphPrior, HyperParams, MetaConfig, PriorLayout};
use crate::scalar::Scalar;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-5;
pub const OBJECTIVE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    /// Largest relative error over all instances and coordinates.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    // keep clear of the leaky-relu kink
    let data: Vec<f64> = (0..n)
        .map(|_| loop {
            let v = rng.random_range(lo..hi);
            if v.abs() > 1e-3 {
                break v;
            }
        })
        .collect();
    Tensor::from_f64(shape, &data).expect("consistent shape")
}

fn one_hot_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let mut t = vec![0.0; rows * cols];
    for r in 0..rows {
        t[r * cols + rng.random_range(0..cols)] = 1.0;
    }
    Tensor::from_f64(&[rows, cols], &t).expect("consistent shape")
}

fn binary(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let t: Vec<f64> = (0..rows * cols).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    Tensor::from_f64(&[rows, cols], &t).expect("consistent shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    ScaleBy,
    MatMul,
    Transpose,
    SpMM,
    Sum,
    Expand,
    RowSum,
    BroadcastCols,
    GatherRows,
    ScatterRows,
    Slice,
    Pad,
    Reshape,
    Sigmoid,
    Tanh,
    LeakyRelu,
    MulConst,
    SoftmaxRows,
    SoftmaxCe,
    SigmoidBce,
    L2Norm,
}

impl Primitive {
    pub const ALL: [Primitive; 27] = [
        Primitive::Add,
        Primitive::Sub,
        Primitive::Mul,
        Primitive::Div,
        Primitive::Scale,
        Primitive::AddScalar,
        Primitive::ScaleBy,
        Primitive::MatMul,
        Primitive::Transpose,
        Primitive::SpMM,
        Primitive::Sum,
        Primitive::Expand,
        Primitive::RowSum,
        Primitive::BroadcastCols,
        Primitive::GatherRows,
        Primitive::ScatterRows,
        Primitive::Slice,
        Primitive::Pad,
        Primitive::Reshape,
        Primitive::Sigmoid,
        Primitive::Tanh,
        Primitive::LeakyRelu,
        Primitive::MulConst,
        Primitive::SoftmaxRows,
        Primitive::SoftmaxCe,
        Primitive::SigmoidBce,
        Primitive::L2Norm,
    ];
}

/// A random instance of one primitive: input `x` (`rows × cols`, two such
/// blocks for binary ops) reduced to a scalar by a random weighting.
struct PrimitiveCase {
    op: Primitive,
    rows: usize,
    cols: usize,
    x: Tensor<f64>,
    weights: Tensor<f64>,
    aux: Tensor<f64>,
    sparse: Arc<SparseMatrix<f64>>,
    index: Vec<usize>,
}

impl PrimitiveCase {
    fn random(op: Primitive, rng: &mut ChaCha8Rng) -> Self {
        let rows = rng.random_range(2..5);
        let cols = rng.random_range(2..5);
        let n = rows * cols;
        let x = uniform(rng, &[2 * n + 1], -1.5, 1.5);
        let (out_rows, out_cols) = match op {
            Primitive::MatMul => (rows, rows),
            Primitive::Transpose => (cols, rows),
            Primitive::Expand | Primitive::BroadcastCols => (rows, cols),
            Primitive::RowSum => (rows, 1),
            Primitive::GatherRows => (rows + 1, cols),
            Primitive::ScatterRows => (rows + 2, cols),
            Primitive::Pad => (1, n + 3),
            _ => (rows, cols),
        };
        let weights = uniform(rng, &[out_rows, out_cols], -1.5, 1.5);
        let aux = match op {
            Primitive::SoftmaxCe => one_hot_rows(rng, rows, cols),
            Primitive::SigmoidBce => binary(rng, rows, cols),
            _ => uniform(rng, &[rows, cols], -1.5, 1.5),
        };
        let mut entries = Vec::new();
        for r in 0..rows {
            for c in 0..rows {
                if r == c || rng.random_bool(0.4) {
                    entries.push((r, c, rng.random_range(0.1..1.0)));
                }
            }
        }
        let sparse = Arc::new(SparseMatrix::new(rows, rows, entries).expect("entries in range"));
        let index = match op {
            Primitive::GatherRows => {
                let mut idx: Vec<usize> = (0..rows + 1).map(|_| rng.random_range(0..rows)).collect();
                idx[0] = idx[1]; // a repeated row
                idx
            }
            _ => {
                let mut idx: Vec<usize> = (0..rows + 2).collect();
                for i in (1..idx.len()).rev() {
                    idx.swap(i, rng.random_range(0..=i));
                }
                idx.truncate(rows);
                idx
            }
        };
        PrimitiveCase { op, rows, cols, x, weights, aux, sparse, index }
    }
}

impl ScalarFn for PrimitiveCase {
    fn eval<'t, S: Scalar>(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let (r, c) = (self.rows, self.cols);
        let n = r * c;
        let a = x.slice(0, &[r, c])?;
        let b = x.slice(n, &[r, c])?;
        let s = x.slice(2 * n, &[1])?;
        let out = match self.op {
            Primitive::Add => a.add(b)?,
            Primitive::Sub => a.sub(b)?,
            Primitive::Mul => a.mul(b)?,
            Primitive::Div => a.div(b.mul(b)?.add_scalar(S::of(0.5)))?,
            Primitive::Scale => a.scale(S::of(-1.7)),
            Primitive::AddScalar => a.add_scalar(S::of(0.3)).mul(a)?,
            Primitive::ScaleBy => a.scale_by(s)?,
            Primitive::MatMul => a.matmul(b.transpose()?)?,
            Primitive::Transpose => a.transpose()?,
            Primitive::SpMM => {
                let m = Arc::new(sparse_cast::<S>(&self.sparse));
                a.spmm(&m)?
            }
            Primitive::Sum => a.mul(b)?.sum().expand(&[r, c])?,
            Primitive::Expand => s.expand(&[r, c])?.mul(a)?,
            Primitive::RowSum => a.mul(b)?.row_sum()?,
            Primitive::BroadcastCols => a.mul(b)?.row_sum()?.broadcast_cols(c)?,
            Primitive::GatherRows => a.gather_rows(&self.index)?,
            Primitive::ScatterRows => a.scatter_rows(&self.index, r + 2)?,
            Primitive::Slice => x.slice(1, &[r, c])?,
            Primitive::Pad => a.reshape(&[n])?.pad(2, n + 3)?.reshape(&[1, n + 3])?,
            Primitive::Reshape => b.reshape(&[n])?.reshape(&[r, c])?.mul(a)?,
            Primitive::Sigmoid => a.sigmoid(),
            Primitive::Tanh => a.tanh(),
            Primitive::LeakyRelu => a.leaky_relu(S::of(LEAKY_SLOPE)),
            Primitive::MulConst => a.mul_const(self.aux.cast())?,
            Primitive::SoftmaxRows => a.softmax_rows()?,
            Primitive::SoftmaxCe => a.softmax_cross_entropy(&self.aux.cast())?.expand(&[r, c])?,
            Primitive::SigmoidBce => a.sigmoid_bce(&self.aux.cast())?.expand(&[r, c])?,
            Primitive::L2Norm => a.add(b)?.l2_norm().expand(&[r, c])?,
        };
        Ok(out.mul_const(self.weights.cast())?.sum())
    }
}

fn sparse_cast<S: Scalar>(m: &SparseMatrix<f64>) -> SparseMatrix<S> {
    let e = m.entries().iter().map(|&(r, c, v)| (r, c, S::of(v))).collect();
    SparseMatrix::new(m.rows(), m.cols(), e).expect("same pattern")
}

struct EncoderCase {
    spec: EncoderSpec,
    graph: Graph<f64>,
    weights: Tensor<f64>,
}

impl ScalarFn for EncoderCase {
    fn eval<'t, S: Scalar>(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let g = self.graph.cast::<S>();
        Ok(forward_var(&self.spec, &g, x)?.mul_const(self.weights.cast())?.sum())
    }
}

/// The episode objective as a function of the concatenation `[θ, φ]`.
pub struct ObjectiveCase {
    pub cfg: MetaConfig,
    pub layout: PriorLayout,
    pub graph: Graph<f64>,
    pub episode: Episode<f64>,
}

impl ObjectiveCase {
    /// A random 6-node instance with `steps` inner steps, second order on.
    pub fn random(steps: usize, rng: &mut ChaCha8Rng) -> (Self, Tensor<f64>) {
        let arch = [Arch::Sgc, Arch::Gcn, Arch::Sage][rng.random_range(0..3)];
        let (d, c) = (3, 2);
        let mut spec = EncoderSpec::new(arch, d, c);
        spec.hidden_dim = 4;
        let hp = HyperParams {
            alpha: 0.5,
            inner_steps: steps,
            lambda: 0.1,
            film_hidden: 4,
            second_order: true,
            ..HyperParams::default()
        };
        let cfg = MetaConfig::new(spec, hp, false);
        let graph = synth_collection::<f64>(1, (6, 6), d, c, 0.7, rng.random()).graphs.remove(0);
        let split = sample_episode(&graph, 0.5, rng).expect("six labeled nodes");
        let episode = Episode::from_split(&split, c);
        let layout = PriorLayout::new(d, cfg.hp.film_hidden, cfg.spec.param_len());
        let theta = init_params::<f64, _>(&cfg.spec, rng);
        let prior = GraphPrior::<f64>::init(layout, rng);
        // nonzero biases so no hidden unit sits at the kink
        let phi = prior.data.add(&uniform(rng, &[layout.len()], -0.3, 0.3)).expect("same shape");
        let mut x = theta.data.into_data();
        x.extend_from_slice(phi.data());
        (ObjectiveCase { cfg, layout, graph, episode }, Tensor::vector(x))
    }
}

impl ScalarFn for ObjectiveCase {
    fn eval<'t, S: Scalar>(&self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let p = self.cfg.spec.param_len();
        let theta = x.slice(0, &[p])?;
        let phi = x.slice(p, &[self.layout.len()])?;
        let g = self.graph.cast::<S>();
        let ep = self.episode.cast::<S>();
        Ok(episode_objective(&g, &ep, theta, phi, &self.layout, &self.cfg)?.value)
    }
}

fn worst_of<F: ScalarFn>(cases: impl Iterator<Item = Result<(F, Tensor<f64>)>>) -> Result<(usize, f64)> {
    let mut n = 0;
    let mut worst: f64 = 0.0;
    for case in cases {
        let (f, x) = case?;
        worst = worst.max(fd_check_extended(&f, &x)?);
        n += 1;
    }
    Ok((n, worst))
}

pub fn check_primitive(op: Primitive, instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ op as u64);
    let (n, worst) = worst_of((0..instances).map(|_| {
        let case = PrimitiveCase::random(op, &mut rng);
        let x = case.x.clone();
        Ok((case, x))
    }))?;
    Ok(CheckResult { name: format!("primitive {op:?}"), instances: n, worst, tolerance: PRIMITIVE_TOLERANCE })
}

pub fn check_encoder(arch: Arch, instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xe0 + arch as u64));
    let (n, worst) = worst_of((0..instances).map(|_| {
        let (d, c) = (rng.random_range(2..5), rng.random_range(2..4));
        let mut spec = EncoderSpec::new(arch, d, c);
        spec.hidden_dim = rng.random_range(2..6);
        let graph = synth_collection::<f64>(1, (4, 8), d, c, 0.6, rng.random()).graphs.remove(0);
        let weights = uniform(&mut rng, &[graph.node_count(), c], -1.5, 1.5);
        let theta = init_params::<f64, _>(&spec, &mut rng);
        Ok((EncoderCase { spec, graph, weights }, theta.data))
    }))?;
    Ok(CheckResult { name: format!("encoder {arch}"), instances: n, worst, tolerance: PRIMITIVE_TOLERANCE })
}

pub fn check_objective(steps: usize, instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x0b_0000 + steps as u64));
    let (n, worst) = worst_of((0..instances).map(|_| Ok(ObjectiveCase::random(steps, &mut rng))))?;
    Ok(CheckResult {
        name: format!("episode objective, {steps} inner steps"),
        instances: n,
        worst,
        tolerance: OBJECTIVE_TOLERANCE,
    })
}

/// The full suite: all primitives, all encoders, the objective at 0, 1 and
/// 2 inner steps. Returns the results and the elapsed seconds.
pub fn gradient_suite(instances: usize, seed: u64) -> Result<(Vec<CheckResult>, f64)> {
    let start = Instant::now();
    let mut out = Vec::new();
    for op in Primitive::ALL {
        out.push(check_primitive(op, instances, seed)?);
    }
    for arch in [Arch::Sgc, Arch::Gcn, Arch::Sage] {
        out.push(check_encoder(arch, instances, seed)?);
    }
    for steps in 0..=2 {
        out.push(check_objective(steps, instances, seed)?);
    }
    Ok((out, start.elapsed().as_secs_f64()))
}
