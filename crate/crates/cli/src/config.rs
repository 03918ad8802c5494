//! TOML run configuration.
//!
//! One file carries the whole model bundle. Units: prices in currency per
//! share, volumes in shares per day, `sigma` in currency per share per
//! square-root day, `dt` in days, `gamma` per unit of currency.

use std::path::{Path, PathBuf};

use asr_core::impact::PermanentImpactModel;
use asr_core::sim::PathSource;
use asr_core::sweep::SweepSpec;
use asr_core::{
    ContractSpec, ExecutionCostModel, MarketModel, Models, PentanomialLaw, RiskPreference, SolveConfig,
    TerminalPenalty, VolumeCurve,
};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out: Option<PathBuf>,
    contract: RawContract,
    market: RawMarket,
    costs: ExecutionCostModel,
    risk: RiskPreference,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    impact: PermanentImpactModel,
    #[serde(default)]
    simulate: RawSimulate,
    #[serde(default)]
    sweep: Vec<SweepSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContract {
    nominal: f64,
    horizon: usize,
    exercise_dates: ExerciseDates,
    penalty: TerminalPenalty,
}

/// Either an explicit list of days or an inclusive range.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ExerciseDates {
    Days(Vec<usize>),
    Range { from: usize, to: usize },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    initial_price: f64,
    sigma: f64,
    #[serde(default = "one")]
    dt: f64,
    volume: VolumeCurve,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    inventory_steps: usize,
    buy_only: bool,
    refine_local: bool,
    workers: Option<usize>,
}

impl Default for RawSolver {
    fn default() -> Self {
        let d = SolveConfig::default();
        RawSolver {
            inventory_steps: d.inventory_steps,
            buy_only: d.buy_only,
            refine_local: d.refine_local,
            workers: d.workers,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSimulate {
    paths: usize,
    source: SourceName,
}

impl Default for RawSimulate {
    fn default() -> Self {
        RawSimulate {
            paths: 10,
            source: SourceName::Lattice,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SourceName {
    Lattice,
    Gaussian,
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub models: Models,
    pub impact: PermanentImpactModel,
    pub solve: SolveConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub paths: usize,
    pub source: PathSource,
    /// Empty means the three standard tables.
    pub sweeps: Vec<SweepSpec>,
}

impl RunConfig {
    /// The built-in reference case, identical to `configs/reference.toml`.
    pub fn reference() -> Self {
        RunConfig {
            models: Models::reference(),
            impact: PermanentImpactModel::default(),
            solve: SolveConfig::default(),
            seed: 0,
            out: PathBuf::from("out"),
            paths: 10,
            source: PathSource::LatticePentanomial,
            sweeps: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        let exercise_dates = match raw.contract.exercise_dates {
            ExerciseDates::Days(d) => d,
            ExerciseDates::Range { from, to } => (from..=to).collect(),
        };
        let models = Models {
            contract: ContractSpec {
                nominal: raw.contract.nominal,
                horizon: raw.contract.horizon,
                exercise_dates,
                penalty: raw.contract.penalty,
            },
            market: MarketModel {
                initial_price: raw.market.initial_price,
                sigma: raw.market.sigma,
                dt: raw.market.dt,
                volume: raw.market.volume,
                innovation: PentanomialLaw,
            },
            costs: raw.costs,
            risk: raw.risk,
        };
        let cfg = RunConfig {
            models,
            impact: raw.impact,
            solve: SolveConfig {
                inventory_steps: raw.solver.inventory_steps,
                buy_only: raw.solver.buy_only,
                refine_local: raw.solver.refine_local,
                workers: raw.solver.workers,
            },
            seed: raw.seed,
            out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
            paths: raw.simulate.paths,
            source: match raw.simulate.source {
                SourceName::Lattice => PathSource::LatticePentanomial,
                SourceName::Gaussian => PathSource::Gaussian,
            },
            sweeps: raw.sweep,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.models.validate().map_err(|e| e.to_string())?;
        self.impact.validate().map_err(|e| e.to_string())?;
        if self.solve.inventory_steps == 0 || self.solve.inventory_steps > u16::MAX as usize {
            return Err(format!("invalid `solver.inventory_steps`: must be in 1..={}", u16::MAX));
        }
        if self.solve.workers == Some(0) {
            return Err("invalid `solver.workers`: must be >= 1".into());
        }
        for s in &self.sweeps {
            s.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUNDLED: &str = include_str!("../../../configs/reference.toml");

    #[test]
    fn bundled_config_is_the_reference_case() {
        let cfg = RunConfig::parse(BUNDLED).unwrap();
        assert_eq!(cfg.models, Models::reference());
        assert_eq!(cfg.solve, SolveConfig::default());
        assert!(cfg.impact.is_inert());
    }

    #[test]
    fn empty_exercise_set_names_the_field() {
        let text = BUNDLED.replace("exercise_dates = { from = 22, to = 62 }", "exercise_dates = []");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.contains("contract.exercise_dates"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BUNDLED.replace("gamma = 2.5e-7", "gamma = 2.5e-7\ngama = 1.0");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.contains("gama"), "{err}");
    }

    #[test]
    fn explicit_days_and_sweeps() {
        let text = BUNDLED.replace("exercise_dates = { from = 22, to = 62 }", "exercise_dates = [30, 40, 50]")
            + "\n[[sweep]]\nparameter = \"eta\"\nvalues = [0.05, 0.1]\n";
        let cfg = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg.models.contract.exercise_dates, vec![30, 40, 50]);
        assert_eq!(cfg.sweeps.len(), 1);
    }

    #[test]
    fn impact_section() {
        let text = BUNDLED.replace(
            "kernel = { kind = \"none\" }",
            "kernel = { kind = \"power-law\", k = 1e-7, beta = 0.5 }",
        );
        let cfg = RunConfig::parse(&text).unwrap();
        assert!(!cfg.impact.is_inert());
        let bad = BUNDLED.replace(
            "kernel = { kind = \"none\" }",
            "kernel = { kind = \"power-law\", k = 1e-7, beta = 1.5 }",
        );
        assert!(RunConfig::parse(&bad).unwrap_err().contains("impact.kernel"));
    }
}
