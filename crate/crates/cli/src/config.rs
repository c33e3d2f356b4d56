//! Experiment configuration: a TOML file with flat named sections.

use std::path::{Path, PathBuf};

use fsc_core::dp::{DpParams, DEFAULT_GRID_BUDGET, DEFAULT_POLICY_BUDGET};
use fsc_core::{ChannelSpec, InputConstraint};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Parameters that a sweep may vary.
pub const SWEEP_PARAMETERS: [&str; 5] = ["eps_b", "eps_g", "p_bg", "p_gb", "eps"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// `gilbert_elliott`, `bsc` or `inline`.
    pub model: Option<String>,
    pub p_bg: Option<f64>,
    pub p_gb: Option<f64>,
    pub eps_g: Option<f64>,
    pub eps_b: Option<f64>,
    pub eps: Option<f64>,
    pub num_states: Option<usize>,
    pub num_inputs: Option<usize>,
    pub num_outputs: Option<usize>,
    pub state_transition: Option<Vec<f64>>,
    pub output_kernel: Option<Vec<f64>>,
    /// Input constraint registry name; `none` when absent.
    pub constraint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    /// `(u, v, m)` triples.
    #[serde(default)]
    pub triples: Vec<[usize; 3]>,
    /// Optional per-triple grid steps overriding `dp.delta`.
    pub delta: Option<Vec<f64>>,
    /// Optional per-triple policy steps overriding `dp.eta`.
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSection {
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub n_iter: Option<usize>,
    pub grid_budget: Option<u64>,
    pub policy_budget: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    /// Extra seeds; `evaluate` emits one row per triple and seed.
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundSection {
    pub order: usize,
    pub step: f64,
    /// Search length; a tenth of `mc.n` when absent.
    pub n_search: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSection {
    pub deltas: Vec<f64>,
    /// Values of `eps_b` to study; the configured channel when absent.
    pub eps_b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Whole configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub dp: DpSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<LowerBoundSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantizer: Option<QuantizerSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// One bound to optimize: shape plus its grid and policy steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub u: usize,
    pub v: usize,
    pub m: usize,
    pub delta: f64,
    pub eta: f64,
}

fn require<T: Clone>(value: &Option<T>, field: &'static str) -> Result<T, ConfigError> {
    value.clone().ok_or(ConfigError::Missing(field))
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

/// `1/step` must be a positive integer.
fn check_step(field: &str, step: f64) -> Result<(), ConfigError> {
    let inv = 1.0 / step;
    if !(step > 0.0 && step <= 1.0) || (inv - inv.round()).abs() > 1e-9 {
        return Err(invalid(field, format!("{step} is not 1/k for a positive integer k")));
    }
    Ok(())
}

fn check_unit(field: &str, value: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(invalid(field, format!("{value} outside [0, 1]")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            ConfigError::Parse { line, message: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// Checks every field that the commands rely on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.channel()?;
        for (i, t) in self.bounds.triples.iter().enumerate() {
            let [u, v, m] = *t;
            if u > v {
                return Err(invalid(format!("bounds.triples[{i}]"), "u exceeds v"));
            }
            if v > m {
                return Err(invalid(format!("bounds.triples[{i}]"), "v exceeds m"));
            }
        }
        for (name, list) in [("bounds.delta", &self.bounds.delta), ("bounds.eta", &self.bounds.eta)] {
            if let Some(list) = list {
                if list.len() != self.bounds.triples.len() {
                    return Err(invalid(name, "needs one entry per triple"));
                }
                for &x in list {
                    check_step(name, x)?;
                }
            }
        }
        if !self.bounds.triples.is_empty() {
            if self.bounds.delta.is_none() {
                check_step("dp.delta", require(&self.dp.delta, "dp.delta")?)?;
            }
            if self.bounds.eta.is_none() {
                check_step("dp.eta", require(&self.dp.eta, "dp.eta")?)?;
            }
            require(&self.dp.n_iter, "dp.n_iter")?;
        }
        if let Some(d) = self.dp.delta {
            check_step("dp.delta", d)?;
        }
        if let Some(e) = self.dp.eta {
            check_step("dp.eta", e)?;
        }
        if self.mc.n == Some(0) {
            return Err(invalid("mc.n", "must be positive"));
        }
        if let Some(sw) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&sw.parameter.as_str()) {
                return Err(invalid("sweep.parameter", format!("unknown parameter {:?}", sw.parameter)));
            }
            if sw.values.is_empty() {
                return Err(invalid("sweep.values", "empty"));
            }
            for &x in &sw.values {
                check_unit("sweep.values", x)?;
                self.channel_with(&sw.parameter, x)
                    .map_err(|e| invalid("sweep.values", format!("{x}: {e}")))?;
            }
        }
        if let Some(lb) = &self.lower_bound {
            check_step("lower_bound.step", lb.step)?;
            if lb.n_search == Some(0) {
                return Err(invalid("lower_bound.n_search", "must be positive"));
            }
        }
        if let Some(q) = &self.quantizer {
            if q.deltas.is_empty() {
                return Err(invalid("quantizer.deltas", "empty"));
            }
            for &d in &q.deltas {
                check_step("quantizer.deltas", d)?;
            }
            for &e in q.eps_b.iter().flatten() {
                check_unit("quantizer.eps_b", e)?;
                self.channel_with("eps_b", e).map_err(|err| invalid("quantizer.eps_b", format!("{e}: {err}")))?;
            }
            require(&self.dp.eta, "dp.eta")?;
            require(&self.dp.n_iter, "dp.n_iter")?;
        }
        Ok(())
    }

    /// The configured channel.
    pub fn channel(&self) -> Result<ChannelSpec, ConfigError> {
        build_channel(&self.channel)
    }

    /// The configured channel with one parameter replaced.
    pub fn channel_with(&self, parameter: &str, value: f64) -> Result<ChannelSpec, ConfigError> {
        let mut section = self.channel.clone();
        let slot = match parameter {
            "eps_b" => &mut section.eps_b,
            "eps_g" => &mut section.eps_g,
            "p_bg" => &mut section.p_bg,
            "p_gb" => &mut section.p_gb,
            "eps" => &mut section.eps,
            other => return Err(invalid("sweep.parameter", format!("unknown parameter {other:?}"))),
        };
        *slot = Some(value);
        build_channel(&section)
    }

    /// Short label of the channel model for CSV rows.
    pub fn model_label(&self) -> String {
        let model = self.channel.model.as_deref().unwrap_or("unknown");
        let base = match model {
            "gilbert_elliott" => "ge",
            other => other,
        };
        match self.channel.constraint.as_deref() {
            None | Some("none") => base.to_string(),
            Some(c) => format!("{base}+{c}"),
        }
    }

    /// Bounds with their resolved steps.
    pub fn bounds(&self) -> Result<Vec<BoundSpec>, ConfigError> {
        self.bounds
            .triples
            .iter()
            .enumerate()
            .map(|(i, &[u, v, m])| {
                let delta = match &self.bounds.delta {
                    Some(d) => d[i],
                    None => require(&self.dp.delta, "dp.delta")?,
                };
                let eta = match &self.bounds.eta {
                    Some(e) => e[i],
                    None => require(&self.dp.eta, "dp.eta")?,
                };
                Ok(BoundSpec { u, v, m, delta, eta })
            })
            .collect()
    }

    /// Value-iteration parameters for one bound.
    pub fn dp_params(&self, bound: &BoundSpec) -> Result<DpParams, ConfigError> {
        let mut p = DpParams::new(bound.u, bound.v, bound.m, bound.delta, bound.eta, require(&self.dp.n_iter, "dp.n_iter")?);
        p.grid_budget = self.dp.grid_budget.unwrap_or(DEFAULT_GRID_BUDGET);
        p.policy_budget = self.dp.policy_budget.unwrap_or(DEFAULT_POLICY_BUDGET);
        Ok(p)
    }

    pub fn mc_n(&self) -> usize {
        self.mc.n.unwrap_or(1_000_000)
    }

    pub fn burn_in(&self) -> usize {
        self.mc.burn_in.unwrap_or(fsc_core::mc::DEFAULT_BURN_IN)
    }

    pub fn seed(&self) -> u64 {
        self.mc.seed.unwrap_or(1)
    }

    /// `mc.seed` followed by `mc.seeds`, duplicates removed.
    pub fn seeds(&self) -> Vec<u64> {
        let mut out = vec![self.seed()];
        for &s in self.mc.seeds.iter().flatten() {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn build_channel(c: &ChannelSection) -> Result<ChannelSpec, ConfigError> {
    let model = require(&c.model, "channel.model")?;
    let core = |e: fsc_core::Error| invalid("channel", e.to_string());
    let spec = match model.as_str() {
        "gilbert_elliott" => ChannelSpec::gilbert_elliott(
            require(&c.p_bg, "channel.p_bg")?,
            require(&c.p_gb, "channel.p_gb")?,
            require(&c.eps_g, "channel.eps_g")?,
            require(&c.eps_b, "channel.eps_b")?,
        )
        .map_err(core)?,
        "bsc" => ChannelSpec::bsc(require(&c.eps, "channel.eps")?).map_err(core)?,
        "inline" => ChannelSpec::from_flat(
            require(&c.num_states, "channel.num_states")?,
            require(&c.num_inputs, "channel.num_inputs")?,
            require(&c.num_outputs, "channel.num_outputs")?,
            require(&c.state_transition, "channel.state_transition")?,
            require(&c.output_kernel, "channel.output_kernel")?,
            InputConstraint::unconstrained(require(&c.num_inputs, "channel.num_inputs")?),
        )
        .map_err(core)?,
        other => return Err(invalid("channel.model", format!("unknown model {other:?}"))),
    };
    match c.constraint.as_deref() {
        None | Some("none") => Ok(spec),
        Some(name) => {
            let constraint =
                InputConstraint::from_name(name, spec.num_inputs()).map_err(|e| invalid("channel.constraint", e.to_string()))?;
            spec.with_constraint(constraint).map_err(|e| invalid("channel.constraint", e.to_string()))
        }
    }
}
