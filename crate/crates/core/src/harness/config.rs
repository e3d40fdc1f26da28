use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::encoders::{Arch, EncoderSpec};
use crate::error::{Error, Result};
use crate::graphdata::{GraphCollection, SynthConfig};
use crate::harness::methods::{Method, MethodOptions};
use crate::kv::{parse_flag, parse_value};
use crate::meta::{HyperParams, MetaConfig};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Tud,
    Jsonl,
    Synth,
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::Tud => "tud",
            DataFormat::Jsonl => "jsonl",
            DataFormat::Synth => "synth",
        })
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tud" => Ok(DataFormat::Tud),
            "jsonl" => Ok(DataFormat::Jsonl),
            "synth" => Ok(DataFormat::Synth),
            _ => Err(Error::Config(format!("unknown data format `{s}`"))),
        }
    }
}

/// Everything a CLI run needs. Keys not owned here are model keys
/// ([`MetaConfig::apply`]) and are replayed, in order, over the dataset
/// defaults once the data is loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: DataFormat,
    /// Collection name; for `tud` the file prefix (defaults to the
    /// directory name).
    pub name: Option<String>,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub options: MethodOptions,
    /// Seed of the train/validation/test partition, shared by all run seeds.
    pub partition_seed: u64,
    pub row_normalize: bool,
    pub synth: SynthConfig,
    pub arch: Arch,
    pub model: Vec<(String, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            format: DataFormat::Synth,
            name: None,
            method: Method::Mignn,
            seeds: (0..10).collect(),
            out: PathBuf::from("out"),
            options: MethodOptions::default(),
            partition_seed: 0,
            row_normalize: false,
            synth: SynthConfig::default(),
            arch: Arch::Sgc,
            model: Vec::new(),
        }
    }
}

/// `0..10`, `3`, or `1,4,9`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("invalid seed list `{s}`"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..b).collect()
    } else {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "name" | "dataset" => self.name = Some(value.to_string()),
            "method" => self.method = value.parse()?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "out" => self.out = PathBuf::from(value),
            "knn_k" | "k" => self.options.knn_k = parse_value(key, value)?,
            "transduct_steps" => self.options.transduct_steps = parse_value(key, value)?,
            "partition_seed" => self.partition_seed = parse_value(key, value)?,
            "row_normalize" => self.row_normalize = parse_flag(key, value)?,
            "arch" => self.arch = value.parse()?,
            "synth.graphs" => s.n_graphs = parse_value(key, value)?,
            "synth.min_nodes" => s.nodes.0 = parse_value(key, value)?,
            "synth.max_nodes" => s.nodes.1 = parse_value(key, value)?,
            "synth.features" => s.feature_dim = parse_value(key, value)?,
            "synth.categories" => s.num_categories = parse_value(key, value)?,
            "synth.homophily" => s.homophily = parse_value(key, value)?,
            "synth.seed" => s.seed = parse_value(key, value)?,
            "synth.class_seed" => s.class_seed = parse_value(key, value)?,
            "synth.mean_scale" => s.mean_scale = parse_value(key, value)?,
            "synth.noise" => s.noise = parse_value(key, value)?,
            "synth.shift" => s.shift = parse_value(key, value)?,
            "synth.edges_per_node" => s.edges_per_node = parse_value(key, value)?,
            _ => {
                let mut probe = MetaConfig::new(EncoderSpec::new(Arch::Sgc, 1, 1), HyperParams::default(), false);
                if !probe.apply(key, value)? {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
                self.model.push((key.to_string(), value.to_string()));
            }
        }
        Ok(())
    }

    pub fn apply_all(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.apply(k, v))
    }

    /// Dataset name used for presets and reports.
    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (&self.data, self.format) {
            (_, DataFormat::Synth) => "synthetic".into(),
            (Some(p), _) => p
                .file_stem()
                .or(p.file_name())
                .map_or("data".into(), |s| s.to_string_lossy().into_owned()),
            (None, _) => "data".into(),
        }
    }

    /// Model configuration for `data`: dataset defaults, then the recorded
    /// model keys in order.
    pub fn meta_config<T: Scalar>(&self, data: &GraphCollection<T>) -> Result<MetaConfig> {
        let spec = EncoderSpec::new(self.arch, data.feature_dim, data.num_categories);
        let mut cfg = MetaConfig::new(spec, HyperParams::for_dataset(&self.dataset_name()), data.multi_label);
        for (k, v) in &self.model {
            cfg.apply(k, v)?;
        }
        if cfg.spec.input_dim != data.feature_dim || cfg.spec.output_dim != data.num_categories {
            return Err(Error::Config("input_dim and output_dim are fixed by the data".into()));
        }
        cfg.multi_label = data.multi_label;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical rendering of the run-level keys (model keys are rendered
    /// by [`MetaConfig::to_kv`]).
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        put("data", self.data.as_ref().map_or(String::new(), |p| p.display().to_string()));
        put("format", self.format.to_string());
        put("name", self.dataset_name());
        put("method", self.method.to_string());
        put("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        put("knn_k", self.options.knn_k.to_string());
        put("transduct_steps", self.options.transduct_steps.to_string());
        put("partition_seed", self.partition_seed.to_string());
        put("row_normalize", self.row_normalize.to_string());
        if self.format == DataFormat::Synth {
            let s = &self.synth;
            put("synth.graphs", s.n_graphs.to_string());
            put("synth.min_nodes", s.nodes.0.to_string());
            put("synth.max_nodes", s.nodes.1.to_string());
            put("synth.features", s.feature_dim.to_string());
            put("synth.categories", s.num_categories.to_string());
            put("synth.homophily", format!("{:?}", s.homophily));
            put("synth.seed", s.seed.to_string());
            put("synth.class_seed", s.class_seed.to_string());
            put("synth.mean_scale", format!("{:?}", s.mean_scale));
            put("synth.noise", format!("{:?}", s.noise));
            put("synth.shift", format!("{:?}", s.shift));
            put("synth.edges_per_node", s.edges_per_node.to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::synth_collection;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 7").unwrap(), vec![4, 7]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn later_keys_win() {
        let mut rc = RunConfig::default();
        rc.apply_all(&[("steps".into(), "3".into()), ("steps".into(), "1".into())]).unwrap();
        let data = synth_collection::<f64>(3, (4, 6), 5, 2, 0.8, 0);
        assert_eq!(rc.meta_config(&data).unwrap().hp.inner_steps, 1);
    }

    #[test]
    fn dataset_presets_apply_before_overrides() {
        let mut rc = RunConfig { name: Some("COX2".into()), ..RunConfig::default() };
        let data = synth_collection::<f64>(3, (4, 6), 3, 2, 0.8, 0);
        assert_eq!(rc.meta_config(&data).unwrap().hp.alpha, 0.005);
        rc.apply("alpha", "0.1").unwrap();
        assert_eq!(rc.meta_config(&data).unwrap().hp.alpha, 0.1);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let mut rc = RunConfig::default();
        assert!(matches!(rc.apply("colour", "red"), Err(Error::Config(_))));
        assert!(matches!(rc.apply("alpha", "fast"), Err(Error::Config(_))));
        assert!(matches!(rc.apply("method", "svm"), Err(Error::Config(_))));
    }
}
