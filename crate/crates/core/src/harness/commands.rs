//! The work behind each CLI subcommand. Every command writes
//! `metrics.csv`, `summary.json` and checkpoints under `rc.out`, and returns
//! the result blocks it reported.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::graphdata::GraphCollection;
use crate::harness::casestudy::{similarity_case_study, ShiftedCollection};
use crate::harness::config::{DataFormat, RunConfig};
use crate::harness::methods::{evaluate, test_episodes, Method};
use crate::harness::metrics::{Metrics, SeedScore};
use crate::harness::report::{config_hash, config_map, write_run, ResultBlock, Summary};
use crate::harness::run::{load_collection, run_method, MethodRun, Splits};
use crate::harness::selftest::{gradient_suite, CheckResult};
use crate::harness::sweep::{sweep, SweepParam};
use crate::meta::{checkpoint, MetaConfig, MetaState};

pub struct Report {
    pub blocks: Vec<ResultBlock>,
    pub files: Vec<PathBuf>,
}

pub const BASELINES: [Method; 5] =
    [Method::Induct, Method::Transduct, Method::FinetuneAgf, Method::Knn, Method::MetaGnn];

pub const ABLATIONS: [Method; 4] =
    [Method::Mignn, Method::TaskOnly, Method::GraphOnly, Method::FinetuneAgf];

fn prepare(rc: &RunConfig) -> Result<(Splits<f64>, MetaConfig)> {
    let data: GraphCollection<f64> = load_collection(rc)?;
    let splits = Splits::partition(&data, rc.partition_seed)?;
    let cfg = rc.meta_config(&data)?;
    Ok((splits, cfg))
}

fn summarize(command: &str, rc: &RunConfig, cfg: &MetaConfig, extra: &str, results: Vec<ResultBlock>) -> Result<Summary> {
    let canonical = format!("{}{}{extra}", rc.to_kv(), cfg.to_kv());
    Ok(Summary {
        command: command.into(),
        dataset: rc.dataset_name(),
        config_hash: config_hash(&canonical),
        seeds: rc.seeds.clone(),
        config: config_map(&canonical)?,
        results,
    })
}

fn states(run: &MethodRun<f64>) -> Vec<&MetaState<f64>> {
    run.seeds.iter().map(|s| &s.model.state).collect()
}

/// Runs `methods` in order; checkpoints come from the first.
pub fn run_methods(command: &str, rc: &RunConfig, methods: &[Method]) -> Result<Report> {
    let (splits, cfg) = prepare(rc)?;
    let runs = methods
        .iter()
        .map(|&m| run_method(m, &splits, &cfg, &rc.options, &rc.seeds))
        .collect::<Result<Vec<_>>>()?;
    let blocks: Vec<ResultBlock> = runs.iter().map(|r| ResultBlock::new(r.method.name(), &r.metrics)).collect();
    let summary = summarize(command, rc, &cfg, "", blocks.clone())?;
    let files = write_run(&rc.out, &summary, &states(&runs[0]))?;
    Ok(Report { blocks, files })
}

pub fn train(rc: &RunConfig) -> Result<Report> {
    run_methods("train", rc, &[rc.method])
}

/// The chosen method, or every baseline when `method` is MI-GNN.
pub fn baseline(rc: &RunConfig) -> Result<Report> {
    if rc.method == Method::Mignn {
        let mut all = vec![Method::Mignn];
        all.extend(BASELINES);
        run_methods("baseline", rc, &all)
    } else {
        run_methods("baseline", rc, &[rc.method])
    }
}

pub fn ablate(rc: &RunConfig) -> Result<Report> {
    run_methods("ablate", rc, &ABLATIONS)
}

/// Scores a saved state on the test partition, one episode draw per seed.
pub fn eval(rc: &RunConfig, ckpt: &Path) -> Result<Report> {
    let state: MetaState<f64> = checkpoint::load(ckpt)?;
    let data: GraphCollection<f64> = load_collection(rc)?;
    let splits = Splits::partition(&data, rc.partition_seed)?;
    if data.feature_dim != state.config.spec.input_dim || data.num_categories != state.config.spec.output_dim {
        return Err(Error::Config(format!(
            "checkpoint expects {} features and {} categories, data has {} and {}",
            state.config.spec.input_dim, state.config.spec.output_dim, data.feature_dim, data.num_categories
        )));
    }
    let start = Instant::now();
    let per_seed = rc
        .seeds
        .iter()
        .map(|&seed| {
            let eps = test_episodes(&splits.test, state.config.hp.support_fraction, seed)?;
            let (accuracy, micro_f1) = evaluate(&state, &splits.test, &eps)?;
            Ok(SeedScore { seed, accuracy, micro_f1 })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics = Metrics::from_seeds(per_seed, start.elapsed().as_secs_f64())?;
    let blocks = vec![ResultBlock::new("mignn", &metrics)];
    let extra = format!("checkpoint = {}\n", ckpt.display());
    let summary = summarize("eval", rc, &state.config, &extra, blocks.clone())?;
    let files = write_run(&rc.out, &summary, &[&state])?;
    Ok(Report { blocks, files })
}

/// One MI-GNN run per value. Checkpoints of each value go to
/// `<out>/<param>-<value>/`.
pub fn sweep_cmd(rc: &RunConfig, param: SweepParam, values: &[String]) -> Result<Report> {
    let (splits, cfg) = prepare(rc)?;
    let rows = sweep(param, values, &splits, &cfg, &rc.options, &rc.seeds)?;
    let blocks: Vec<ResultBlock> = rows.iter().map(|r| r.block.clone()).collect();
    let extra = format!("sweep.param = {param}\nsweep.values = {}\n", values.join(","));
    let summary = summarize("sweep", rc, &cfg, &extra, blocks.clone())?;
    let mut files = write_run::<f64>(&rc.out, &summary, &[])?;
    for r in &rows {
        let dir = rc.out.join(format!("{param}-{}", r.block.value.as_deref().unwrap_or("")));
        std::fs::create_dir_all(&dir)?;
        for (i, s) in states(&r.run).into_iter().enumerate() {
            let path = dir.join(crate::harness::report::checkpoint_name(i, s.seed));
            checkpoint::save(s, &path)?;
            files.push(path);
        }
    }
    Ok(Report { blocks, files })
}

/// Similarity-grouped scores of transduct, induct and MI-GNN. With the
/// synthetic format the shifted collection is generated; otherwise the
/// loaded data is partitioned as usual.
pub fn casestudy(rc: &RunConfig) -> Result<Report> {
    let splits = if rc.format == DataFormat::Synth {
        let mut sc = ShiftedCollection::default();
        sc.base.seed = rc.synth.seed;
        sc.base.class_seed = rc.synth.class_seed;
        sc.generate::<f64>()
    } else {
        let data: GraphCollection<f64> = load_collection(rc)?;
        Splits::partition(&data, rc.partition_seed)?
    };
    let cfg = rc.meta_config(&splits.train)?;
    let runs = [Method::Transduct, Method::Induct, Method::Mignn]
        .iter()
        .map(|&m| run_method(m, &splits, &cfg, &rc.options, &rc.seeds))
        .collect::<Result<Vec<_>>>()?;
    let blocks = similarity_case_study(&splits.train, &splits.test, &runs, cfg.hp.support_fraction)?;
    let summary = summarize("casestudy", rc, &cfg, "", blocks.clone())?;
    let files = write_run(&rc.out, &summary, &states(&runs[2]))?;
    Ok(Report { blocks, files })
}

pub fn selftest(instances: usize, seed: u64) -> Result<(Vec<CheckResult>, f64)> {
    gradient_suite(instances, seed)
}
