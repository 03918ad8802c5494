//! Contract terms, market environment and the elementary cost functions.
//!
//! Units follow the usual desk conventions: prices in currency per share,
//! volumes in shares per day, `sigma` in currency per share per square-root day.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{AsrError, Result};
use crate::numerics::weighted_log_sum_exp;

/// Cost value standing for "forbidden". Arithmetic on it follows IEEE rules
/// (`x + inf = inf`, `min(x, inf) = x`); code that shifts exponents checks for
/// it explicitly so it never turns into a NaN.
pub const INFINITE_COST: f64 = f64::INFINITY;

/// Innovation law of the daily price increments: the five-point law on
/// `{-2, -1, 0, 1, 2}` matching the first four moments of a standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PentanomialLaw;

/// Probability numerators over the common denominator 12.
const PENTA_TWELFTHS: [i64; 5] = [1, 2, 6, 2, 1];

/// Which moment of the innovation law to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    Raw(u32),
    PositivePart,
}

impl PentanomialLaw {
    pub const SUPPORT: [i64; 5] = [-2, -1, 0, 1, 2];

    pub fn probabilities(&self) -> [f64; 5] {
        PENTA_TWELFTHS.map(|k| k as f64 / 12.0)
    }

    pub fn exact_probabilities(&self) -> [Ratio<i64>; 5] {
        PENTA_TWELFTHS.map(|k| Ratio::new(k, 12))
    }

    pub fn value(&self, branch: usize) -> i64 {
        Self::SUPPORT[branch]
    }

    /// Exact moment as a rational.
    pub fn exact_moment(&self, moment: Moment) -> Result<Ratio<i64>> {
        let probs = self.exact_probabilities();
        let f: Box<dyn Fn(i64) -> i64> = match moment {
            Moment::Raw(k @ 1..=4) => Box::new(move |e: i64| e.pow(k)),
            Moment::PositivePart => Box::new(|e: i64| e.max(0)),
            Moment::Raw(k) => return Err(AsrError::UnsupportedMoment(format!("order {k}"))),
        };
        Ok(Self::SUPPORT
            .iter()
            .zip(probs)
            .fold(Ratio::from_integer(0), |acc, (&e, p)| acc + p * f(e)))
    }
}

/// Exact rational moments of the innovation law, as `f64`.
pub fn innovation_moment(law: &PentanomialLaw, moment: Moment) -> Result<f64> {
    let r = law.exact_moment(moment)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

/// Cumulant-generating function of `sigma * sqrt(dt) * eps`, evaluated at `u`.
pub fn cgf_g(law: &PentanomialLaw, sigma: f64, dt: f64, u: f64) -> f64 {
    // the law is symmetric, so g is even; evaluate at |u| to keep that exact
    let scale = u.abs() * sigma * dt.sqrt();
    let xs = PentanomialLaw::SUPPORT.map(|e| scale * e as f64);
    weighted_log_sum_exp(&law.probabilities(), &xs)
}

/// Deterministic daily market volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VolumeCurve {
    Flat(f64),
    /// `V_1, ..., V_N`.
    PerDay(Vec<f64>),
}

impl VolumeCurve {
    /// Volume of day `n` (1-based, the day ending at `t_n`).
    pub fn at(&self, n: usize) -> f64 {
        match self {
            VolumeCurve::Flat(v) => *v,
            VolumeCurve::PerDay(vs) => vs[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub initial_price: f64,
    pub sigma: f64,
    pub dt: f64,
    pub volume: VolumeCurve,
    #[serde(default)]
    pub innovation: PentanomialLaw,
}

impl MarketModel {
    /// `sigma * sqrt(dt)`, the price move per unit innovation.
    pub fn step_vol(&self) -> f64 {
        self.sigma * self.dt.sqrt()
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(AsrError::invalid("market.sigma", "must be finite and > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(AsrError::invalid("market.dt", "must be finite and > 0"));
        }
        if !self.initial_price.is_finite() {
            return Err(AsrError::invalid("market.initial_price", "must be finite"));
        }
        match &self.volume {
            VolumeCurve::Flat(v) if !(*v > 0.0 && v.is_finite()) => {
                Err(AsrError::invalid("market.volume", "must be finite and > 0"))
            }
            VolumeCurve::PerDay(vs) if vs.len() != horizon => Err(AsrError::invalid(
                "market.volume",
                format!("expected {horizon} daily volumes, got {}", vs.len()),
            )),
            VolumeCurve::PerDay(vs) if vs.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                Err(AsrError::invalid("market.volume", "every daily volume must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Temporary impact `L(rho) = eta |rho|^(1+phi) + psi |rho|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionCostModel {
    pub eta: f64,
    pub phi: f64,
    #[serde(default)]
    pub psi: f64,
}

impl ExecutionCostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(AsrError::invalid("costs.eta", "must be finite and >= 0"));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(AsrError::invalid("costs.phi", "must be finite and > 0"));
        }
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return Err(AsrError::invalid("costs.psi", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Cost of trading `shares` over a day of market volume `volume`:
    /// `L(v / V) V dt` with `v = shares / dt`.
    pub fn trade_cost(&self, shares: f64, volume: f64, dt: f64) -> f64 {
        exec_cost(self, shares / (volume * dt)) * volume * dt
    }
}

/// `L(rho)`.
pub fn exec_cost(model: &ExecutionCostModel, rho: f64) -> f64 {
    let a = rho.abs();
    if a == 0.0 {
        return 0.0;
    }
    model.eta * a.powf(1.0 + model.phi) + model.psi * a
}

/// Liquidity penalty paid on shares still missing at delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TerminalPenalty {
    /// Delivery is only allowed once everything has been bought.
    ForcedCompletion,
    /// `l(q) = coefficient * q^2`.
    Quadratic { coefficient: f64 },
    /// Piecewise-linear in `|q|` through `(points[i], values[i])`, extended
    /// linearly past the last point. Must start at `(0, 0)`.
    Tabulated { points: Vec<f64>, values: Vec<f64> },
}

impl TerminalPenalty {
    pub fn validate(&self) -> Result<()> {
        match self {
            TerminalPenalty::ForcedCompletion => Ok(()),
            TerminalPenalty::Quadratic { coefficient } => {
                if *coefficient >= 0.0 && coefficient.is_finite() {
                    Ok(())
                } else {
                    Err(AsrError::invalid("contract.penalty.coefficient", "must be finite and >= 0"))
                }
            }
            TerminalPenalty::Tabulated { points, values } => {
                let field = "contract.penalty";
                if points.len() != values.len() || points.len() < 2 {
                    return Err(AsrError::invalid(field, "need >= 2 points with matching values"));
                }
                if points[0] != 0.0 || values[0] != 0.0 {
                    return Err(AsrError::invalid(field, "table must start at (0, 0)"));
                }
                let mut last_slope = 0.0;
                for w in 0..points.len() - 1 {
                    let dx = points[w + 1] - points[w];
                    if !(dx > 0.0) {
                        return Err(AsrError::invalid(field, "points must be strictly increasing"));
                    }
                    let slope = (values[w + 1] - values[w]) / dx;
                    if slope < 0.0 || slope < last_slope {
                        return Err(AsrError::invalid(
                            field,
                            "values must be nondecreasing and convex in |q|",
                        ));
                    }
                    last_slope = slope;
                }
                Ok(())
            }
        }
    }

    pub fn is_forced_completion(&self) -> bool {
        matches!(self, TerminalPenalty::ForcedCompletion)
    }
}

/// `l(q)`; the forced-completion penalty returns [`INFINITE_COST`] off zero.
pub fn penalty(p: &TerminalPenalty, q: f64) -> f64 {
    let a = q.abs();
    match p {
        TerminalPenalty::ForcedCompletion => {
            if a == 0.0 {
                0.0
            } else {
                INFINITE_COST
            }
        }
        TerminalPenalty::Quadratic { coefficient } => coefficient * a * a,
        TerminalPenalty::Tabulated { points, values } => {
            let last = points.len() - 1;
            let seg = match points.iter().position(|&x| x > a) {
                Some(0) => 0,
                Some(i) => i - 1,
                None => last - 1,
            };
            let slope = (values[seg + 1] - values[seg]) / (points[seg + 1] - points[seg]);
            values[seg] + slope * (a - points[seg])
        }
    }
}

/// Absolute risk aversion; zero selects the risk-neutral arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskPreference {
    pub gamma: f64,
}

impl RiskPreference {
    pub fn is_risk_neutral(&self) -> bool {
        self.gamma == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma >= 0.0 && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(AsrError::invalid("risk.gamma", "must be finite and >= 0"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    /// Number of shares `Q` to deliver.
    pub nominal: f64,
    /// Number of days `N`.
    pub horizon: usize,
    /// Early-delivery days, ascending, inside `1..N`.
    pub exercise_dates: Vec<usize>,
    pub penalty: TerminalPenalty,
}

impl ContractSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nominal > 0.0 && self.nominal.is_finite()) {
            return Err(AsrError::invalid("contract.nominal", "must be finite and > 0"));
        }
        if self.horizon < 2 {
            return Err(AsrError::invalid("contract.horizon", "must be >= 2"));
        }
        if self.exercise_dates.is_empty() {
            return Err(AsrError::invalid("contract.exercise_dates", "must not be empty"));
        }
        if self.exercise_dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AsrError::invalid(
                "contract.exercise_dates",
                "must be strictly ascending",
            ));
        }
        if let Some(&bad) = self
            .exercise_dates
            .iter()
            .find(|&&n| n < 1 || n >= self.horizon)
        {
            return Err(AsrError::invalid(
                "contract.exercise_dates",
                format!("day {bad} outside [1, {}]", self.horizon - 1),
            ));
        }
        self.penalty.validate()
    }

    pub fn is_exercise_date(&self, n: usize) -> bool {
        self.exercise_dates.binary_search(&n).is_ok()
    }
}

/// Everything the base (temporary-impact only) problem depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub contract: ContractSpec,
    pub market: MarketModel,
    pub costs: ExecutionCostModel,
    pub risk: RiskPreference,
}

impl Models {
    /// Rounded large-cap reference case: 63 days, delivery allowed from day 22.
    pub fn reference() -> Self {
        Models {
            contract: ContractSpec {
                nominal: 2.0e7,
                horizon: 63,
                exercise_dates: (22..=62).collect(),
                penalty: TerminalPenalty::ForcedCompletion,
            },
            market: MarketModel {
                initial_price: 45.0,
                sigma: 0.6,
                dt: 1.0,
                volume: VolumeCurve::Flat(4.0e6),
                innovation: PentanomialLaw,
            },
            costs: ExecutionCostModel {
                eta: 0.1,
                phi: 0.75,
                psi: 0.0,
            },
            risk: RiskPreference { gamma: 2.5e-7 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.contract.validate()?;
        self.market.validate(self.contract.horizon)?;
        self.costs.validate()?;
        self.risk.validate()
    }

    pub fn terminal_penalty(&self, q: f64) -> f64 {
        penalty(&self.contract.penalty, q)
    }

    /// Cost of moving inventory by `shares` during day `n + 1`.
    pub fn trade_cost(&self, shares: f64, next_day: usize) -> f64 {
        self.costs
            .trade_cost(shares, self.market.volume.at(next_day), self.market.dt)
    }
}
