//! Brute-force reference: exhaustive recursion over the non-recombining
//! history tree in the original variables (price, average, cash, inventory).
//! Nothing here uses the reduced state or the solver's code paths.

#![allow(dead_code)]

use asr_core::{Models, TerminalPenalty, VolumeCurve};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const PROBS: [f64; 5] = [1.0 / 12.0, 2.0 / 12.0, 6.0 / 12.0, 2.0 / 12.0, 1.0 / 12.0];
const EPS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Constant permanent-impact kernel `f = k`, optionally with intraday noise.
#[derive(Debug, Clone, Copy)]
pub struct ConstantImpact {
    pub k: f64,
    pub noise: bool,
}

pub struct Oracle<'a> {
    pub models: &'a Models,
    pub steps: usize,
    pub buy_only: bool,
    pub impact: Option<ConstantImpact>,
}

impl Oracle<'_> {
    fn q(&self, i: usize) -> f64 {
        self.models.contract.nominal * i as f64 / self.steps as f64
    }

    fn gamma(&self) -> f64 {
        self.models.risk.gamma
    }

    fn g(&self, q: f64) -> f64 {
        self.impact.map_or(0.0, |c| c.k * (self.models.contract.nominal - q))
    }

    fn f(&self, q: f64) -> f64 {
        let big = self.models.contract.nominal;
        self.impact.map_or(0.0, |c| 0.5 * c.k * (big * big - q * q))
    }

    fn penalty(&self, q: f64) -> f64 {
        match &self.models.contract.penalty {
            TerminalPenalty::ForcedCompletion => {
                if q == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            TerminalPenalty::Quadratic { coefficient } => coefficient * q * q,
            other => panic!("oracle does not cover {other:?}"),
        }
    }

    fn cost(&self, shares: f64, day: usize) -> f64 {
        let m = &self.models;
        let volume = match &m.market.volume {
            VolumeCurve::Flat(v) => *v,
            VolumeCurve::PerDay(vs) => vs[day - 1],
        };
        let rho = (shares / m.market.dt / volume).abs();
        let l = if rho == 0.0 {
            0.0
        } else {
            m.costs.eta * rho.powf(1.0 + m.costs.phi) + m.costs.psi * rho
        };
        l * volume * m.market.dt
    }

    /// Wealth on delivery.
    fn wealth(&self, s: f64, a: f64, x: f64, q: f64) -> f64 {
        let pen = self.penalty(q);
        if pen.is_infinite() {
            return f64::NEG_INFINITY;
        }
        self.models.contract.nominal * a - x - q * s - pen - self.f(0.0) + self.f(q)
    }

    /// Expected utility `-exp(-gamma W)`, or the expected wealth at `gamma = 0`.
    fn score(&self, w: f64) -> f64 {
        let g = self.gamma();
        if g == 0.0 {
            w
        } else if w == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            -(-g * w).exp()
        }
    }

    /// Optimal score from day `n` with price `s`, average `a`, cash `x` and
    /// inventory index `i`.
    pub fn value(&self, n: usize, s: f64, a: f64, x: f64, i: usize) -> f64 {
        let m = self.models;
        let horizon = m.contract.horizon;
        let q = self.q(i);
        if n == horizon {
            return self.score(self.wealth(s, a, x, q));
        }
        let sv = m.market.sigma * m.market.dt.sqrt();
        let gamma = self.gamma();
        let upper = if self.buy_only { i } else { self.steps };
        let mut best = f64::NEG_INFINITY;
        for k in 0..=upper {
            let qk = self.q(k);
            let traded = q - qk;
            let dg = self.g(qk) - self.g(q);
            let df = self.f(qk) - self.f(q);
            let c = match self.impact {
                Some(ConstantImpact { noise: true, .. }) => m.market.sigma * traded * m.market.dt.sqrt() / SQRT3,
                _ => 0.0,
            };
            let mut total = 0.0;
            for j in 0..5 {
                let s1 = s + sv * EPS[j] + dg;
                let a1 = if n == 0 { s1 } else { (n as f64 * a + s1) / (n as f64 + 1.0) };
                let x1 = x + s1 * traded - q * dg + df + self.cost(traded, n + 1);
                let mut v = self.value(n + 1, s1, a1, x1, k);
                // the noise enters cash as -c eps'; integrate it out
                if c != 0.0 {
                    if n == 0 {
                        // day one uses the unconditional (Gaussian) law of eps'
                        if gamma > 0.0 {
                            v *= (0.5 * gamma * gamma * c * c).exp();
                        }
                    } else if gamma > 0.0 {
                        v *= (-gamma * c * 0.5 * SQRT3 * EPS[j] + gamma * gamma * c * c / 8.0).exp();
                    } else {
                        v += c * 0.5 * SQRT3 * EPS[j];
                    }
                }
                total += PROBS[j] * v;
            }
            best = best.max(total);
        }
        if n >= 1 && m.contract.is_exercise_date(n) {
            best = best.max(self.score(self.wealth(s, a, x, q)));
        }
        best
    }

    /// Reduced cost at day `n >= 1`, spread `z`, inventory index `i`.
    pub fn theta(&self, n: usize, z: f64, i: usize) -> f64 {
        let m = self.models;
        let a = m.market.initial_price;
        let s = a + m.market.sigma * m.market.dt.sqrt() * z;
        let q = self.q(i);
        let u = self.value(n, s, a, 0.0, i);
        let y = -m.contract.nominal * a + q * s - self.f(q);
        self.to_cost(u) - y
    }

    /// Indifference price.
    pub fn price(&self) -> f64 {
        let s0 = self.models.market.initial_price;
        self.to_cost(self.value(0, s0, s0, 0.0, self.steps))
    }

    fn to_cost(&self, u: f64) -> f64 {
        let g = self.gamma();
        if g == 0.0 {
            -u
        } else {
            (-u).ln() / g
        }
    }
}

/// Small market with visible risk and cost effects.
pub fn oracle_models(horizon: usize, gamma: f64, penalty: TerminalPenalty) -> Models {
    let mut m = Models::reference();
    m.contract.nominal = 1.0e5;
    m.contract.horizon = horizon;
    m.contract.exercise_dates = ((horizon / 2).max(1)..horizon).collect();
    m.contract.penalty = penalty;
    m.market.volume = VolumeCurve::Flat(2.0e5);
    m.risk.gamma = gamma;
    m
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone)]
pub struct OracleCase {
    pub horizon: usize,
    pub steps: usize,
    pub penalty: TerminalPenalty,
    pub gamma: f64,
    pub buy_only: bool,
}

/// The full comparison matrix.
pub fn oracle_matrix() -> Vec<OracleCase> {
    let mut out = Vec::new();
    for horizon in [2, 3, 4] {
        for steps in [2, 3] {
            for penalty in [
                TerminalPenalty::ForcedCompletion,
                TerminalPenalty::Quadratic { coefficient: 1e-4 },
            ] {
                for gamma in [0.0, 1e-6] {
                    for buy_only in [false, true] {
                        out.push(OracleCase {
                            horizon,
                            steps,
                            penalty: penalty.clone(),
                            gamma,
                            buy_only,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Largest relative mismatch between the solver and the oracle over every
/// node, inventory and the price.
pub fn compare_case(case: &OracleCase) -> f64 {
    use asr_core::lattice::{max_zeta, z_of};
    let models = oracle_models(case.horizon, case.gamma, case.penalty.clone());
    let config = asr_core::SolveConfig {
        inventory_steps: case.steps,
        buy_only: case.buy_only,
        ..Default::default()
    };
    let (surface, _) = asr_core::backward_solve(&models, &config).expect("solve");
    let oracle = Oracle {
        models: &models,
        steps: case.steps,
        buy_only: case.buy_only,
        impact: None,
    };
    let mut worst: f64 = 0.0;
    let mut record = |a: f64, b: f64| {
        let err = if a.is_infinite() || b.is_infinite() {
            if a == b {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (a - b).abs() / a.abs().max(b.abs()).max(1.0)
        };
        worst = worst.max(err);
    };
    for n in 1..=case.horizon {
        for zeta in 0..=max_zeta(n) {
            for i in 0..=case.steps {
                record(surface.theta(n, zeta, i), oracle.theta(n, z_of(n, zeta), i));
            }
        }
    }
    let pi = asr_core::solver::price(&surface, &models, &config).expect("price").pi;
    record(pi, oracle.price());
    worst
}
