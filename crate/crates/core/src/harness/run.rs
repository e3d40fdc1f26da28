use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphdata::{
    load_jsonl, load_tudataset, partition_graphs, GraphCollection, SplitRatios, TudOptions,
};
use crate::harness::config::{DataFormat, RunConfig};
use crate::harness::methods::{evaluate_model, fit, test_episodes, Method, MethodOptions, Model};
use crate::harness::metrics::{Metrics, SeedScore};
use crate::meta::{EpochLog, MetaConfig};
use crate::scalar::Scalar;

/// Loads the collection named by `rc` (the synthetic generator for `synth`).
pub fn load_collection<T: Scalar>(rc: &RunConfig) -> Result<GraphCollection<T>> {
    let need_path = || {
        rc.data.clone().ok_or_else(|| Error::Config(format!("--data is required for format {}", rc.format)))
    };
    let c = match rc.format {
        DataFormat::Synth => rc.synth.generate(),
        DataFormat::Jsonl => load_jsonl(&need_path()?)?,
        DataFormat::Tud => {
            let dir = need_path()?;
            let name = rc.dataset_name();
            let mut opts = TudOptions::for_dataset(&name);
            opts.row_normalize = rc.row_normalize;
            return load_tudataset(&dir, &name, &opts);
        }
    };
    Ok(if rc.row_normalize { c.row_normalized() } else { c })
}

#[derive(Clone, Debug)]
pub struct Splits<T> {
    pub train: GraphCollection<T>,
    pub val: GraphCollection<T>,
    pub test: GraphCollection<T>,
}

impl<T: Scalar> Splits<T> {
    /// 60/20/20 partition by `partition_seed`.
    pub fn partition(data: &GraphCollection<T>, partition_seed: u64) -> Result<Self> {
        let (train, val, test) = partition_graphs(data, SplitRatios::default(), partition_seed)?;
        Ok(Splits { train, val, test })
    }
}

pub struct SeedOutcome<T> {
    pub score: SeedScore,
    pub model: Model<T>,
    pub history: Vec<EpochLog>,
}

pub struct MethodRun<T> {
    pub method: Method,
    pub metrics: Metrics,
    pub seeds: Vec<SeedOutcome<T>>,
}

/// Fits and evaluates one seed. The test episodes depend only on the seed,
/// so every method sees the same supports and queries.
pub fn run_seed<T: Scalar>(
    method: Method,
    splits: &Splits<T>,
    cfg: &MetaConfig,
    options: &MethodOptions,
    seed: u64,
) -> Result<SeedOutcome<T>> {
    let (model, history) = fit(method, &splits.train, &splits.val, cfg, options, seed)?;
    let episodes = test_episodes(&splits.test, cfg.hp.support_fraction, seed)?;
    let c = evaluate_model(&model, &splits.test, &episodes)?;
    Ok(SeedOutcome { score: SeedScore { seed, accuracy: c.accuracy(), micro_f1: c.micro_f1() }, model, history })
}

/// All seeds of one method; seeds run in parallel, results in seed order.
pub fn run_method<T: Scalar>(
    method: Method,
    splits: &Splits<T>,
    cfg: &MetaConfig,
    options: &MethodOptions,
    seeds: &[u64],
) -> Result<MethodRun<T>> {
    let start = Instant::now();
    let seeds = seeds
        .par_iter()
        .map(|&s| run_seed(method, splits, cfg, options, s))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let metrics = Metrics::from_seeds(seeds.iter().map(|s| s.score.clone()).collect(), start.elapsed().as_secs_f64())?;
    Ok(MethodRun { method, metrics, seeds })
}
