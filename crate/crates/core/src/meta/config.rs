use std::fmt::Write as _;

use crate::encoders::{Arch, EncoderSpec};
use crate::error::{Error, Result};
use crate::kv::{parse_flag, parse_value};

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Inner (task-level) learning rate.
    pub alpha: f64,
    pub inner_steps: usize,
    /// Weight of `‖γ‖₂ + ‖β‖₂` in the objective.
    pub lambda: f64,
    /// Adam learning rate of the outer update.
    pub outer_lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Differentiate through the inner gradient steps.
    pub second_order: bool,
    /// Fraction of a graph's labeled nodes placed in the support set.
    pub support_fraction: f64,
    /// Hidden width of the γ and β hypernetworks.
    pub film_hidden: usize,
    /// When false, γ = β = 0 and the graph prior is unused.
    pub graph_adaptation: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 0.5,
            inner_steps: 2,
            lambda: 0.001,
            outer_lr: 0.01,
            batch_size: 8,
            max_epochs: 500,
            patience: 30,
            second_order: true,
            support_fraction: 0.5,
            film_hidden: 32,
            graph_adaptation: true,
        }
    }
}

impl HyperParams {
    /// Defaults with the smaller inner rates used for COX2, DHFR and the
    /// unnormalized synthetic collections.
    pub fn for_dataset(name: &str) -> Self {
        let mut hp = HyperParams::default();
        match name.to_ascii_lowercase().as_str() {
            "cox2" | "dhfr" => hp.alpha = 0.005,
            "synthetic" => hp.alpha = 0.05,
            _ => {}
        }
        hp
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return bad("outer_lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch must be at least 1");
        }
        if !(self.support_fraction > 0.0 && self.support_fraction < 1.0) {
            return bad("support_fraction must lie in (0, 1)");
        }
        if self.film_hidden == 0 {
            return bad("film_hidden must be positive");
        }
        Ok(())
    }
}

/// Everything that fixes a model apart from its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaConfig {
    pub spec: EncoderSpec,
    pub hp: HyperParams,
    /// Per-category sigmoid decisions instead of a softmax over categories.
    pub multi_label: bool,
}

impl MetaConfig {
    pub fn new(spec: EncoderSpec, hp: HyperParams, multi_label: bool) -> Self {
        MetaConfig { spec, hp, multi_label }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.hp.validate()
    }

    /// Stable `key = value` rendering, used as the checkpoint snapshot.
    pub fn to_kv(&self) -> String {
        let (s, h) = (&self.spec, &self.hp);
        let onoff = |b: bool| if b { "on" } else { "off" };
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        put("arch", s.arch.to_string());
        put("input_dim", s.input_dim.to_string());
        put("hidden_dim", s.hidden_dim.to_string());
        put("output_dim", s.output_dim.to_string());
        put("propagation_steps", s.propagation_steps.to_string());
        put("sgc_collapsed", onoff(s.sgc_collapsed).into());
        put("multi_label", onoff(self.multi_label).into());
        put("alpha", format!("{:?}", h.alpha));
        put("steps", h.inner_steps.to_string());
        put("lambda", format!("{:?}", h.lambda));
        put("outer_lr", format!("{:?}", h.outer_lr));
        put("batch", h.batch_size.to_string());
        put("max_epochs", h.max_epochs.to_string());
        put("patience", h.patience.to_string());
        put("second_order", onoff(h.second_order).into());
        put("support_fraction", format!("{:?}", h.support_fraction));
        put("film_hidden", h.film_hidden.to_string());
        put("graph_adaptation", onoff(h.graph_adaptation).into());
        out
    }

    /// Applies one key. Returns `false` for keys this type does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        let (s, h) = (&mut self.spec, &mut self.hp);
        match key {
            "arch" => s.arch = value.parse::<Arch>()?,
            "input_dim" => s.input_dim = parse_value(key, value)?,
            "hidden_dim" => s.hidden_dim = parse_value(key, value)?,
            "output_dim" => s.output_dim = parse_value(key, value)?,
            "propagation_steps" => s.propagation_steps = parse_value(key, value)?,
            "sgc_collapsed" => s.sgc_collapsed = parse_flag(key, value)?,
            "multi_label" => self.multi_label = parse_flag(key, value)?,
            "alpha" => h.alpha = parse_value(key, value)?,
            "steps" | "inner_steps" => h.inner_steps = parse_value(key, value)?,
            "lambda" => h.lambda = parse_value(key, value)?,
            "outer_lr" | "lr" => h.outer_lr = parse_value(key, value)?,
            "batch" | "batch_size" => h.batch_size = parse_value(key, value)?,
            "max_epochs" | "epochs" => h.max_epochs = parse_value(key, value)?,
            "patience" => h.patience = parse_value(key, value)?,
            "second_order" | "second-order" => h.second_order = parse_flag(key, value)?,
            "support_fraction" => h.support_fraction = parse_value(key, value)?,
            "film_hidden" => h.film_hidden = parse_value(key, value)?,
            "graph_adaptation" => h.graph_adaptation = parse_flag(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = MetaConfig::new(EncoderSpec::new(Arch::Sgc, 1, 1), HyperParams::default(), false);
        for (k, v) in crate::kv::parse(text)? {
            if !c.apply(&k, &v)? {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let mut spec = EncoderSpec::new(Arch::Sage, 7, 3);
        spec.sgc_collapsed = true;
        let hp = HyperParams { alpha: 0.1 + 0.2, second_order: false, ..HyperParams::default() };
        let c = MetaConfig::new(spec, hp, true);
        assert_eq!(MetaConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn validation() {
        assert!(HyperParams::default().validate().is_ok());
        assert_eq!(HyperParams::for_dataset("COX2").alpha, 0.005);
        assert!(HyperParams { alpha: 0.0, ..HyperParams::default() }.validate().is_err());
        assert!(HyperParams { lambda: -1.0, ..HyperParams::default() }.validate().is_err());
        assert!(HyperParams { batch_size: 0, ..HyperParams::default() }.validate().is_err());
    }
}
