//! Comparative statics: prices along one swept parameter.
//!
//! Every point is an independent full solve on the same inventory grid.
//! Points shared between sweeps (the reference cell) are solved once.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::Models;
use crate::error::{AsrError, Result};
use crate::solver::{fmt_value, solve_price, PriceResult, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Gamma,
    Eta,
    Sigma,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Eta => "eta",
            SweepParam::Sigma => "sigma",
        }
    }

    /// Direction the price is expected to move as the parameter grows.
    pub fn expected(&self) -> Direction {
        match self {
            SweepParam::Gamma | SweepParam::Eta => Direction::Increasing,
            SweepParam::Sigma => Direction::Decreasing,
        }
    }

    pub fn apply(&self, models: &Models, value: f64) -> Models {
        let mut m = models.clone();
        match self {
            SweepParam::Gamma => m.risk.gamma = value,
            SweepParam::Eta => m.costs.eta = value,
            SweepParam::Sigma => m.market.sigma = value,
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    /// Also price each point under the buy-only constraint.
    #[serde(default)]
    pub buy_only_compare: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(AsrError::invalid("sweep.values", "must not be empty"));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(AsrError::invalid("sweep.values", "must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub pi: f64,
    pub pi_per_share: f64,
    pub v0: f64,
    pub seconds: f64,
    /// Buy-only price when requested.
    pub pi_buy_only: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub rows: Vec<SweepRow>,
    /// Strict ordering in the expected direction; `None` if a point failed.
    pub monotone: Option<bool>,
    /// `pi_buy_only >= pi` on every row; `None` when not requested or a point failed.
    pub buy_only_dominates: Option<bool>,
}

/// The three tables of the reference study.
pub fn standard_sweeps() -> Vec<SweepSpec> {
    vec![
        SweepSpec {
            parameter: SweepParam::Gamma,
            values: vec![0.0, 2.5e-9, 2.5e-7, 2.5e-6],
            buy_only_compare: false,
        },
        SweepSpec {
            parameter: SweepParam::Eta,
            values: vec![0.01, 0.1, 0.2],
            buy_only_compare: false,
        },
        SweepSpec {
            parameter: SweepParam::Sigma,
            values: vec![0.3, 0.6, 1.2],
            buy_only_compare: false,
        },
    ]
}

pub fn run_sweep(spec: &SweepSpec, models: &Models, config: &SolveConfig) -> Result<SweepResult> {
    Ok(run_sweeps(std::slice::from_ref(spec), models, config)?.remove(0))
}

/// Runs several sweeps, solving each distinct configuration once.
pub fn run_sweeps(specs: &[SweepSpec], models: &Models, config: &SolveConfig) -> Result<Vec<SweepResult>> {
    for s in specs {
        s.validate()?;
    }
    let mut jobs: Vec<(Models, bool)> = Vec::new();
    let mut key = |m: Models, buy_only: bool| match jobs.iter().position(|j| j.0 == m && j.1 == buy_only) {
        Some(p) => p,
        None => {
            jobs.push((m, buy_only));
            jobs.len() - 1
        }
    };
    let plan: Vec<Vec<(usize, Option<usize>)>> = specs
        .iter()
        .map(|s| {
            s.values
                .iter()
                .map(|&v| {
                    let m = s.parameter.apply(models, v);
                    let constrained = s.buy_only_compare.then(|| key(m.clone(), true));
                    (key(m, config.buy_only), constrained)
                })
                .collect()
        })
        .collect();

    let solved: Vec<std::result::Result<PriceResult, String>> = jobs
        .par_iter()
        .map(|(m, buy_only)| {
            let c = SolveConfig {
                buy_only: *buy_only,
                ..*config
            };
            solve_price(m, &c).map_err(|e| e.to_string())
        })
        .collect();

    Ok(specs
        .iter()
        .zip(plan)
        .map(|(spec, cells)| {
            let rows: Vec<SweepRow> = spec
                .values
                .iter()
                .zip(cells)
                .map(|(&value, (main, constrained))| {
                    let other = constrained.map(|c| &solved[c]);
                    let mut row = match &solved[main] {
                        Ok(r) => SweepRow {
                            value,
                            pi: r.pi,
                            pi_per_share: r.pi_per_share,
                            v0: r.v0,
                            seconds: r.seconds,
                            pi_buy_only: None,
                            error: None,
                        },
                        Err(e) => failed_row(value, e),
                    };
                    match other {
                        Some(Ok(r)) => row.pi_buy_only = Some(r.pi),
                        Some(Err(e)) if row.error.is_none() => row.error = Some(e.clone()),
                        _ => {}
                    }
                    row
                })
                .collect();
            summarize(spec, rows)
        })
        .collect())
}

fn failed_row(value: f64, error: &str) -> SweepRow {
    SweepRow {
        value,
        pi: f64::NAN,
        pi_per_share: f64::NAN,
        v0: f64::NAN,
        seconds: 0.0,
        pi_buy_only: None,
        error: Some(error.to_string()),
    }
}

fn summarize(spec: &SweepSpec, rows: Vec<SweepRow>) -> SweepResult {
    let ok = rows.iter().all(|r| r.error.is_none());
    let monotone = ok.then(|| {
        rows.windows(2).all(|w| match spec.parameter.expected() {
            Direction::Increasing => w[1].pi > w[0].pi,
            Direction::Decreasing => w[1].pi < w[0].pi,
        })
    });
    let buy_only_dominates = (ok && spec.buy_only_compare)
        .then(|| rows.iter().all(|r| r.pi_buy_only.is_some_and(|b| b >= r.pi)));
    SweepResult {
        parameter: spec.parameter,
        rows,
        monotone,
        buy_only_dominates,
    }
}

/// Unconstrained and buy-only prices on the same grid.
pub fn buyonly_compare(models: &Models, config: &SolveConfig) -> Result<(PriceResult, PriceResult)> {
    let free = SolveConfig {
        buy_only: false,
        ..*config
    };
    let constrained = SolveConfig {
        buy_only: true,
        ..*config
    };
    let (a, b) = rayon::join(|| solve_price(models, &free), || solve_price(models, &constrained));
    Ok((a?, b?))
}

/// `param,value,pi,pi_per_share,v0,seconds`, one line per row of each sweep.
pub fn write_sweep_csv<W: Write>(out: W, results: &[SweepResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "value", "pi", "pi_per_share", "v0", "seconds"])?;
    for r in results {
        for row in &r.rows {
            w.write_record([
                r.parameter.name().to_string(),
                format!("{}", row.value),
                fmt_value(row.pi),
                fmt_value(row.pi_per_share),
                fmt_value(row.v0),
                format!("{:.3}", row.seconds),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
