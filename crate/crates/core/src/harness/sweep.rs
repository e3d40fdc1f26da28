use std::fmt;
use std::str::FromStr;

use crate::error::{contract, Error, Result};
use crate::harness::methods::{Method, MethodOptions};
use crate::harness::report::ResultBlock;
use crate::harness::run::{run_method, MethodRun, Splits};
use crate::meta::{mean_film_norm, MetaConfig};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    InnerSteps,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::InnerSteps => "steps",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "steps" | "inner_steps" => Ok(SweepParam::InnerSteps),
            _ => Err(Error::Config(format!("cannot sweep `{s}` (expected lambda or steps)"))),
        }
    }
}

pub struct SweepRow<T> {
    pub block: ResultBlock,
    pub run: MethodRun<T>,
}

/// One full multi-seed MI-GNN run per value, in the given order.
pub fn sweep<T: Scalar>(
    param: SweepParam,
    values: &[String],
    splits: &Splits<T>,
    cfg: &MetaConfig,
    options: &MethodOptions,
    seeds: &[u64],
) -> Result<Vec<SweepRow<T>>> {
    if values.is_empty() {
        return Err(contract("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.apply(param.key(), v)?;
            c.validate()?;
            let run = run_method(Method::Mignn, splits, &c, options, seeds)?;
            let mut norm = 0.0;
            for s in &run.seeds {
                norm += mean_film_norm(&splits.train, &s.model.state)?;
            }
            let mut b = ResultBlock::new(Method::Mignn.name(), &run.metrics);
            b.param = Some(param.key().into());
            b.value = Some(v.clone());
            b.film_norm = Some(norm / run.seeds.len() as f64);
            Ok(SweepRow { block: b, run })
        })
        .collect()
}

/// Comma-separated values, trimmed.
pub fn parse_values(s: &str) -> Vec<String> {
    s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{Arch, EncoderSpec};
    use crate::graphdata::synth_collection;
    use crate::meta::HyperParams;

    #[test]
    fn one_row_per_value() {
        let data = synth_collection::<f64>(6, (5, 8), 3, 2, 0.9, 3);
        let splits = Splits::partition(&data, 0).unwrap();
        let hp = HyperParams { max_epochs: 1, film_hidden: 4, ..HyperParams::default() };
        let cfg = MetaConfig::new(EncoderSpec::new(Arch::Sgc, 3, 2), hp, false);
        let values = parse_values("0, 1, 2,3,5");
        let rows = sweep(SweepParam::InnerSteps, &values, &splits, &cfg, &MethodOptions::default(), &[0]).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4].block.value.as_deref(), Some("5"));
        assert!(matches!(sweep(SweepParam::Lambda, &[], &splits, &cfg, &MethodOptions::default(), &[0]), Err(Error::Contract(_))));
        assert!("alpha".parse::<SweepParam>().is_err());
    }
}
