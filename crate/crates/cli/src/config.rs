//! Experiment configuration: a JSON file whose fields can each be overridden
//! from the command line.

use std::path::Path;

use clap::ValueEnum;
use fixsim_core::chains::ChainKind;
use fixsim_core::GameSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    WrightFisher,
    Moran,
    EmbeddedMoran,
}

impl From<KernelChoice> for ChainKind {
    fn from(k: KernelChoice) -> Self {
        match k {
            KernelChoice::WrightFisher => ChainKind::WrightFisher,
            KernelChoice::Moran => ChainKind::Moran,
            KernelChoice::EmbeddedMoran => ChainKind::EmbeddedMoran,
        }
    }
}

/// Which probability the log-plot transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LogQuantity {
    /// `-(1/i) ln(1 - p_N(i))`, which tends to `-ln q`.
    Extinction,
    /// `-(1/i) ln p_N(i)`.
    Fixation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CoupleMode {
    /// One-step mismatch rates of the Wright-Fisher/branching coupling.
    Mismatch,
    /// One path of the ordered triple coupling.
    Triple,
    /// `P(tau_N <= m)` across population sizes.
    Divergence,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
}

impl GameConfig {
    /// Missing entries default to `(a, b, c, d, w) = (4, 2, 3, 1, 0.3)`.
    pub fn spec(&self) -> Result<GameSpec, CliError> {
        Ok(GameSpec::new(
            self.a.unwrap_or(4.0),
            self.b.unwrap_or(2.0),
            self.c.unwrap_or(3.0),
            self.d.unwrap_or(1.0),
            self.w.unwrap_or(0.3),
        )?)
    }

    fn merge(self, over: GameConfig) -> GameConfig {
        GameConfig {
            a: over.a.or(self.a),
            b: over.b.or(self.b),
            c: over.c.or(self.c),
            d: over.d.or(self.d),
            w: over.w.or(self.w),
        }
    }
}

/// Every knob of every subcommand. Unset fields take per-command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub game: GameConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantity: Option<LogQuantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0_replicas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<CoupleMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(u32, f64)>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Field-wise override: values set in `over` win.
    pub fn merge(self, over: ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig {
            game: self.game.merge(over.game),
            n: over.n.or(self.n),
            i: over.i.or(self.i),
            replicas: over.replicas.or(self.replicas),
            seed: over.seed.or(self.seed),
            max_steps: over.max_steps.or(self.max_steps),
            kernel: over.kernel.or(self.kernel),
            w_grid: over.w_grid.or(self.w_grid),
            quantity: over.quantity.or(self.quantity),
            k: over.k.or(self.k),
            horizons: over.horizons.or(self.horizons),
            j: over.j.or(self.j),
            eta: over.eta.or(self.eta),
            c0: over.c0.or(self.c0),
            c0_replicas: over.c0_replicas.or(self.c0_replicas),
            mode: over.mode.or(self.mode),
            steps: over.steps.or(self.steps),
            pairs: over.pairs.or(self.pairs),
        }
    }
}
