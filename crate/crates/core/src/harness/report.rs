use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::harness::metrics::{Interval, Metrics, SeedScore};
use crate::meta::{checkpoint, MetaState};
use crate::scalar::Scalar;

/// One result block: a method, optionally at one value of a swept key.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultBlock {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub accuracy: Interval,
    pub micro_f1: Interval,
    pub per_seed: Vec<SeedScore>,
    pub runtime_secs: f64,
    /// Mean `‖γ‖₂ + ‖β‖₂` over the training graphs (sweeps only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub film_norm: Option<f64>,
}

impl ResultBlock {
    pub fn new(method: impl Into<String>, metrics: &Metrics) -> Self {
        ResultBlock {
            method: method.into(),
            param: None,
            value: None,
            group: None,
            accuracy: metrics.accuracy,
            micro_f1: metrics.micro_f1,
            per_seed: metrics.per_seed.clone(),
            runtime_secs: metrics.runtime_secs,
            film_norm: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub dataset: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: BTreeMap<String, String>,
    pub results: Vec<ResultBlock>,
}

/// SHA-256 (hex) of the canonical configuration text.
pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes()).iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").expect("write to string");
        s
    })
}

/// `key = value` lines as a map.
pub fn config_map(canonical: &str) -> Result<BTreeMap<String, String>> {
    Ok(crate::kv::parse(canonical)?.into_iter().collect())
}

/// One row per (block, seed), in block order then seed order. Runtimes are
/// left out so the file depends only on configuration and seeds.
pub fn metrics_csv(blocks: &[ResultBlock]) -> String {
    let swept = blocks.iter().any(|b| b.param.is_some());
    let grouped = blocks.iter().any(|b| b.group.is_some());
    let mut out = String::new();
    if swept {
        out.push_str("param,value,");
    }
    if grouped {
        out.push_str("group,");
    }
    out.push_str("method,seed,accuracy,micro_f1\n");
    for b in blocks {
        for s in &b.per_seed {
            if swept {
                let _ = write!(out, "{},{},", b.param.as_deref().unwrap_or(""), b.value.as_deref().unwrap_or(""));
            }
            if grouped {
                let _ = write!(out, "{},", b.group.as_deref().unwrap_or(""));
            }
            let _ = writeln!(out, "{},{},{:?},{:?}", b.method, s.seed, s.accuracy, s.micro_f1);
        }
    }
    out
}

/// `checkpoint.bin` for the first seed, `checkpoint-<seed>.bin` for the rest.
pub fn checkpoint_name(index: usize, seed: u64) -> String {
    if index == 0 {
        "checkpoint.bin".into()
    } else {
        format!("checkpoint-{seed}.bin")
    }
}

/// Writes `metrics.csv`, `summary.json` and one checkpoint per state.
pub fn write_run<T: Scalar>(
    out: &Path,
    summary: &Summary,
    states: &[&MetaState<T>],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut written = vec![out.join("metrics.csv"), out.join("summary.json")];
    fs::write(&written[0], metrics_csv(&summary.results))?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(&written[1], json + "\n")?;
    for (i, s) in states.iter().enumerate() {
        let path = out.join(checkpoint_name(i, s.seed));
        checkpoint::save(*s, &path)?;
        written.push(path);
    }
    Ok(written)
}
