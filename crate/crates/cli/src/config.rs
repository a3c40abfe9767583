//! Run configuration: a flat JSON document whose fields double as command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Deserializer};
use vgpencr::cavi::{CaviOptions, HyperParams, DEFAULT_TAU_GRID};
use vgpencr::group_lasso::SolverOptions;
use vgpencr::pencr::{CvOptions, CvRule, Mode, PencrOptions, ScaleMode};
use vgpencr::sim::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Grouped,
    Nongrouped,
    /// Both modes on the same fits; `bench` only.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleArg {
    SecondMoment,
    MeanNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Min,
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioArg {
    Gam,
    Cat,
    Vc,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Gam => Scenario::Gam,
            ScenarioArg::Cat => Scenario::Cat,
            ScenarioArg::Vc => Scenario::Vc,
        }
    }
}

/// A fixed penalty or `cv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Fixed(f64),
    Cv,
}

impl FromStr for LambdaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(LambdaSpec::Cv);
        }
        s.parse::<f64>()
            .map(LambdaSpec::Fixed)
            .map_err(|_| format!("expected a number or `cv`, got `{s}`"))
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSpec::Fixed(v) => write!(f, "{v}"),
            LambdaSpec::Cv => f.write_str("cv"),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(LambdaSpec::Fixed(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Every setting is optional; unset fields fall back to library defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Data CSV: response first, predictors after (fit, cv) or feature rows (predict).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Group sizes as `{"sizes":[...]}`.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Group sizes inline, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Expand every raw predictor into a natural cubic spline basis of this dimension.
    #[arg(long)]
    pub basis_dim: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Model JSON read by `predict`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    /// Fixed global scale; without it `tau` is chosen from `tau_grid` by ELBO.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub tau_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub min_cycles: Option<usize>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,

    /// A number, or `cv` (default) to cross-validate.
    #[arg(long)]
    pub lambda: Option<LambdaSpec>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub scale_mode: Option<ScaleArg>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub n_lambda: Option<usize>,
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Fold shuffle seed; defaults to `seed`.
    #[arg(long)]
    pub cv_seed: Option<u64>,

    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    /// Training rows, or subjects for `vc`.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of groups for `gam` and `vc`.
    #[arg(long)]
    pub g: Option<usize>,
    /// Levels per categorical covariate for `cat`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, alias = "reps")]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `top` win.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        overlay_fields!(self, top;
            input, groups, sizes, basis_dim, output, model, out_dir,
            r, s, tau, tau_grid, min_cycles, max_cycles, rel_tol,
            lambda, mode, scale_mode, tol, max_iter, n_lambda, lambda_min_ratio,
            folds, rule, cv_seed, scenario, n, g, k, replications, seed, threads,
        );
        self
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let positive = [
            ("r", self.r),
            ("s", self.s),
            ("tau", self.tau),
            ("rel_tol", self.rel_tol),
            ("tol", self.tol),
            ("lambda_min_ratio", self.lambda_min_ratio),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    bail!("{name} must be positive and finite, got {v}");
                }
            }
        }
        if let Some(grid) = &self.tau_grid {
            if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                bail!("tau_grid must be a non-empty list of positive values");
            }
        }
        if let Some(LambdaSpec::Fixed(l)) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                bail!("lambda must be non-negative, got {l}");
            }
        }
        if self.replications == Some(0) {
            bail!("replications must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        if self.min_cycles.is_some_and(|c| c < 2) {
            bail!("min_cycles must be at least 2");
        }
        if self.lambda_min_ratio.is_some_and(|r| r >= 1.0) {
            bail!("lambda_min_ratio must be below 1");
        }
        Ok(())
    }

    pub fn hyper(&self) -> HyperParams {
        let d = HyperParams::default();
        HyperParams {
            r: self.r.unwrap_or(d.r),
            s: self.s.unwrap_or(d.s),
            tau: self.tau.unwrap_or(d.tau),
        }
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        self.tau_grid.clone().unwrap_or_else(|| DEFAULT_TAU_GRID.to_vec())
    }

    pub fn cavi(&self) -> CaviOptions {
        let d = CaviOptions::default();
        let min_cycles = self.min_cycles.unwrap_or(d.min_cycles);
        CaviOptions {
            min_cycles,
            max_cycles: self.max_cycles.unwrap_or(d.max_cycles).max(min_cycles),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
        }
    }

    pub fn solver(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
        }
    }

    pub fn pencr(&self) -> PencrOptions {
        PencrOptions {
            scale_mode: self.scale_mode.map(|s| match s {
                ScaleArg::SecondMoment => ScaleMode::SecondMoment,
                ScaleArg::MeanNorm => ScaleMode::MeanNorm,
            }),
            solver: self.solver(),
        }
    }

    pub fn modes(&self) -> Vec<Mode> {
        match self.mode.unwrap_or(ModeArg::Grouped) {
            ModeArg::Grouped => vec![Mode::Grouped],
            ModeArg::Nongrouped => vec![Mode::Nongrouped],
            ModeArg::Both => vec![Mode::Grouped, Mode::Nongrouped],
        }
    }

    /// The single mode for `fit` and `cv`.
    pub fn single_mode(&self) -> anyhow::Result<Mode> {
        match self.modes().as_slice() {
            [m] => Ok(*m),
            _ => bail!("mode `both` is only available for bench"),
        }
    }

    pub fn cv(&self, mode: Mode) -> CvOptions {
        let d = CvOptions::default();
        CvOptions {
            folds: self.folds.unwrap_or(d.folds),
            n_lambda: self.n_lambda.unwrap_or(d.n_lambda),
            lambda_min_ratio: self.lambda_min_ratio.unwrap_or(d.lambda_min_ratio),
            rule: match self.rule {
                Some(RuleArg::OneSe) => CvRule::OneSe,
                Some(RuleArg::Min) => CvRule::Min,
                None => d.rule,
            },
            seed: self.cv_seed.or(self.seed).unwrap_or(d.seed),
            mode,
            pencr: self.pencr(),
            cavi: self.cavi(),
        }
    }

    pub fn require_scenario(&self) -> anyhow::Result<Scenario> {
        self.scenario
            .map(Scenario::from)
            .context("a scenario (gam, cat or vc) is required")
    }

    /// `G`, or `K` for the categorical scenario.
    pub fn scenario_size(&self, scenario: Scenario) -> usize {
        match scenario {
            Scenario::Gam => self.g.unwrap_or(50),
            Scenario::Cat => self.k.or(self.g).unwrap_or(10),
            Scenario::Vc => self.g.unwrap_or(30),
        }
    }

    pub fn scenario_n(&self, scenario: Scenario) -> usize {
        self.n.unwrap_or(match scenario {
            Scenario::Vc => 50,
            _ => 200,
        })
    }
}
