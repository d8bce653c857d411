//! Run configuration. Values come from built-in defaults, then an optional
//! `key=value` file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde_json::{json, Value};
use ustad_core::agg::{AggConfig, StepRule};
use ustad_core::eum::MergePolicy;
use ustad_core::interp::AnalysisConfig;
use ustad_core::TemplateKind;

/// A problem with how the tool was invoked; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub template_kind: TemplateKind,
    pub merge_policy: MergePolicy,
    pub agg: AggConfig,
    pub widening_delay: usize,
    pub narrowing: bool,
    pub bottom_probe: bool,
    /// Oracle sampling only.
    pub seed: u64,
    pub thetas: usize,
    pub points: usize,
    pub output_path: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        RunConfig {
            template_kind: a.template_kind,
            merge_policy: a.merge_policy,
            agg: a.agg,
            widening_delay: a.widening_delay,
            narrowing: a.narrowing,
            bottom_probe: a.bottom_probe,
            seed: 0,
            thetas: 50,
            points: 10_000,
            output_path: None,
            jobs: None,
        }
    }
}

/// Search parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct AggArgs {
    /// Number of search epochs R
    #[arg(long, short = 'R')]
    pub epochs: Option<usize>,
    /// Step size
    #[arg(long)]
    pub eta: Option<f64>,
    /// Penalty weight
    #[arg(long)]
    pub beta: Option<f64>,
    /// Exponent of the violation norm (1 or 2)
    #[arg(long)]
    pub p: Option<u32>,
    /// guarded or literal
    #[arg(long)]
    pub step_rule: Option<StepRule>,
}

/// Fixpoint engine parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisArgs {
    /// interval, zones or octagon
    #[arg(long)]
    pub template: Option<TemplateKind>,
    #[command(flatten)]
    pub merge: MergeArgs,
    /// Joins at a loop head before widening
    #[arg(long)]
    pub widening_delay: Option<usize>,
    /// Descending pass after widening
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub narrowing: Option<bool>,
    /// Exact emptiness test after every guard
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bottom_probe: Option<bool>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MergeArgs {
    /// all, quad, none or max_len:K
    #[arg(long)]
    pub merge: Option<MergePolicy>,
}

/// Oracle sampling parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct SamplingArgs {
    /// Seed for oracle sampling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sampled parameter vectors per audit
    #[arg(long)]
    pub thetas: Option<usize>,
    /// Sampled points for the minimum estimate
    #[arg(long)]
    pub points: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> anyhow::Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| usage(format!("bad value `{raw}` for `{key}`: {e}")))
}

impl RunConfig {
    /// Defaults, overridden by `file` when given.
    pub fn from_file(file: Option<&Path>) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        }
        Ok(cfg)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> anyhow::Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| usage(format!("line {}: expected key=value", no + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| usage(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> anyhow::Result<()> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "template" => self.template_kind = parse_value(&key, v)?,
            "merge" => self.merge_policy = parse_value(&key, v)?,
            "epochs" => self.agg.epochs = parse_value(&key, v)?,
            "eta" => self.agg.eta = parse_value(&key, v)?,
            "beta" => self.agg.beta = parse_value(&key, v)?,
            "p" => self.agg.p = parse_value(&key, v)?,
            "step_rule" => self.agg.step_rule = parse_value(&key, v)?,
            "widening_delay" => self.widening_delay = parse_value(&key, v)?,
            "narrowing" => self.narrowing = parse_value(&key, v)?,
            "bottom_probe" => self.bottom_probe = parse_value(&key, v)?,
            "seed" => self.seed = parse_value(&key, v)?,
            "thetas" => self.thetas = parse_value(&key, v)?,
            "points" => self.points = parse_value(&key, v)?,
            "output" => self.output_path = Some(PathBuf::from(v)),
            "jobs" => self.jobs = Some(parse_value(&key, v)?),
            _ => return Err(usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_agg(&mut self, a: &AggArgs) {
        if let Some(v) = a.epochs {
            self.agg.epochs = v;
        }
        if let Some(v) = a.eta {
            self.agg.eta = v;
        }
        if let Some(v) = a.beta {
            self.agg.beta = v;
        }
        if let Some(v) = a.p {
            self.agg.p = v;
        }
        if let Some(v) = a.step_rule {
            self.agg.step_rule = v;
        }
    }

    pub fn apply_analysis(&mut self, a: &AnalysisArgs) {
        if let Some(v) = a.template {
            self.template_kind = v;
        }
        self.apply_merge(&a.merge);
        if let Some(v) = a.widening_delay {
            self.widening_delay = v;
        }
        if let Some(v) = a.narrowing {
            self.narrowing = v;
        }
        if let Some(v) = a.bottom_probe {
            self.bottom_probe = v;
        }
    }

    pub fn apply_merge(&mut self, a: &MergeArgs) {
        if let Some(v) = a.merge {
            self.merge_policy = v;
        }
    }

    pub fn apply_sampling(&mut self, a: &SamplingArgs) {
        if let Some(v) = a.seed {
            self.seed = v;
        }
        if let Some(v) = a.thetas {
            self.thetas = v;
        }
        if let Some(v) = a.points {
            self.points = v;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.agg.validate().map_err(|e| usage(e.to_string()))?;
        if self.template_kind == TemplateKind::Custom {
            return Err(usage("custom templates cannot be selected from the command line"));
        }
        if self.jobs == Some(0) {
            return Err(usage("jobs must be at least 1"));
        }
        Ok(())
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            template_kind: self.template_kind,
            merge_policy: self.merge_policy,
            agg: self.agg,
            widening_delay: self.widening_delay,
            narrowing: self.narrowing,
            bottom_probe: self.bottom_probe,
            ..AnalysisConfig::default()
        }
    }

    pub fn agg_json(&self) -> Value {
        json!({
            "epochs": self.agg.epochs,
            "eta": self.agg.eta,
            "beta": self.agg.beta,
            "p": self.agg.p,
            "step_rule": self.agg.step_rule.to_string(),
        })
    }

    pub fn analysis_json(&self) -> Value {
        let mut v = self.agg_json();
        let extra = json!({
            "template": self.template_kind.to_string(),
            "merge": self.merge_policy.to_string(),
            "widening_delay": self.widening_delay,
            "narrowing": self.narrowing,
            "bottom_probe": self.bottom_probe,
        });
        if let (Some(m), Value::Object(e)) = (v.as_object_mut(), extra) {
            m.extend(e);
        }
        v
    }
}
