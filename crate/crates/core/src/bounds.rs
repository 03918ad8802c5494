//! Analytic upper and lower bounds on the reduced cost function, used to
//! validate solved surfaces.
//!
//! The upper bound is the cost of one admissible strategy: trade the whole
//! inventory gap tomorrow, then follow the straight line to `N`. The lower
//! bound `-C_n Z^+ - D_n` comes from the fact that delivering early can at best
//! save the positive part of the spread.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::contract::{cgf_g, Models, Moment};
use crate::error::{AsrError, Result};
use crate::lattice::z_of;
use crate::solver::{fmt_value, ValueSurface};

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundCoeffs {
    /// `c[n - 1] = C_n`, `n = 1..=N`.
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl LowerBoundCoeffs {
    pub fn c_at(&self, n: usize) -> f64 {
        self.c[n - 1]
    }

    pub fn d_at(&self, n: usize) -> f64 {
        self.d[n - 1]
    }

    /// `-C_n Z^+ - D_n`.
    pub fn lower_bound(&self, n: usize, z: f64) -> f64 {
        -self.c_at(n) * z.max(0.0) - self.d_at(n)
    }
}

/// Cost of the "catch up tomorrow, then straight line" strategy from
/// `(n, q, Z)`. Defined for `n < N`.
pub fn upper_bound(n: usize, q: f64, z: f64, models: &Models) -> Result<f64> {
    let horizon = models.contract.horizon;
    if n < 1 || n >= horizon {
        return Err(AsrError::LevelOutOfRange { level: n, horizon });
    }
    let nominal = models.contract.nominal;
    let big_n = horizon as f64;
    let gamma = models.risk.gamma;
    let law = &models.market.innovation;
    let (sigma, dt) = (models.market.sigma, models.market.dt);
    let line = |j: usize| nominal * (1.0 - j as f64 / big_n);
    let risk = if gamma > 0.0 {
        let g = |u: f64| cgf_g(law, sigma, dt, u) / gamma;
        g(gamma * (q - line(n))) + (n + 1..horizon).map(|j| g(gamma * line(j))).sum::<f64>()
    } else {
        0.0
    };
    Ok(risk - line(n) * models.market.step_vol() * z + models.trade_cost(q, n + 1))
}

pub fn lower_coeffs(models: &Models) -> Result<LowerBoundCoeffs> {
    let horizon = models.contract.horizon;
    let e_plus = {
        let r = models.market.innovation.exact_moment(Moment::PositivePart)?;
        *r.numer() as f64 / *r.denom() as f64
    };
    let sv = models.market.step_vol();
    let nominal = models.contract.nominal;
    let mut c = vec![0.0; horizon];
    let mut d = vec![0.0; horizon];
    for n in (1..horizon).rev() {
        let ratio = n as f64 / (n as f64 + 1.0);
        let c_next = c[n];
        c[n - 1] = ratio * c_next + sv * nominal / (n as f64 + 1.0);
        d[n - 1] = ratio * c_next * e_plus + d[n];
    }
    Ok(LowerBoundCoeffs { c, d })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsRow {
    pub n: usize,
    pub zeta: i64,
    pub q: f64,
    pub lower: f64,
    pub theta: f64,
    pub upper: f64,
    pub pass: bool,
}

impl BoundsRow {
    /// Smaller of the two slacks; negative means violated.
    pub fn margin(&self) -> f64 {
        (self.theta - self.lower).min(self.upper - self.theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub checked: usize,
    pub violations: usize,
    /// Every violating entry, plus the tightest entry of each level.
    pub rows: Vec<BoundsRow>,
    pub worst_lower_margin: f64,
    pub worst_upper_margin: f64,
    pub tolerance: f64,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub const BOUNDS_TOLERANCE: f64 = 1e-6;

/// Checks `lower - tol <= Theta <= upper + tol` on every finite entry. The
/// last level has no upper bound and is checked against the lower one only.
pub fn check_surface(surface: &ValueSurface, coeffs: &LowerBoundCoeffs, models: &Models) -> Result<BoundsReport> {
    check_surface_with_tolerance(surface, coeffs, models, BOUNDS_TOLERANCE)
}

pub fn check_surface_with_tolerance(
    surface: &ValueSurface,
    coeffs: &LowerBoundCoeffs,
    models: &Models,
    tol: f64,
) -> Result<BoundsReport> {
    let horizon = models.contract.horizon;
    if surface.horizon != horizon || coeffs.c.len() != horizon {
        return Err(AsrError::Dimension("surface, coefficients and models disagree on the horizon".into()));
    }
    let grid = surface.grid;
    let mut report = BoundsReport {
        checked: 0,
        violations: 0,
        rows: Vec::new(),
        worst_lower_margin: f64::INFINITY,
        worst_upper_margin: f64::INFINITY,
        tolerance: tol,
    };
    for layer in &surface.layers {
        let n = layer.level;
        let zetas: Vec<i64> = layer.zetas().collect();
        let per_node: Vec<Vec<BoundsRow>> = zetas
            .par_iter()
            .map(|&zeta| {
                let z = z_of(n, zeta);
                let lower = coeffs.lower_bound(n, z);
                (0..grid.len())
                    .filter_map(|i| {
                        let theta = layer.get(zeta, i);
                        if !theta.is_finite() {
                            return None;
                        }
                        let q = grid.value(i);
                        let upper = if n < horizon {
                            upper_bound(n, q, z, models).unwrap_or(f64::INFINITY)
                        } else {
                            f64::INFINITY
                        };
                        let pass = theta >= lower - tol && theta <= upper + tol;
                        Some(BoundsRow {
                            n,
                            zeta,
                            q,
                            lower,
                            theta,
                            upper,
                            pass,
                        })
                    })
                    .collect()
            })
            .collect();
        let mut tightest: Option<BoundsRow> = None;
        for row in per_node.into_iter().flatten() {
            report.checked += 1;
            report.worst_lower_margin = report.worst_lower_margin.min(row.theta - row.lower);
            report.worst_upper_margin = report.worst_upper_margin.min(row.upper - row.theta);
            if !row.pass {
                report.violations += 1;
                report.rows.push(row);
            } else if tightest.as_ref().is_none_or(|t| row.margin() < t.margin()) {
                tightest = Some(row);
            }
        }
        report.rows.extend(tightest);
    }
    Ok(report)
}

/// Report as CSV: `n,zeta,q,lower,theta,upper,pass`.
pub fn write_report_csv<W: Write>(out: W, report: &BoundsReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "n,zeta,q,lower,theta,upper,pass")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            r.zeta,
            r.q,
            fmt_value(r.lower),
            fmt_value(r.theta),
            fmt_value(r.upper),
            r.pass
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::TerminalPenalty;
    use crate::solver::{backward_solve, SolveConfig};

    #[test]
    fn upper_bound_examples() {
        let mut m = Models::reference();
        m.risk.gamma = 0.0;
        assert_eq!(upper_bound(10, 0.0, 0.0, &m).unwrap(), 0.0);
        m.risk.gamma = 2.5e-7;
        let n = m.contract.horizon - 1;
        let q = m.contract.nominal / 63.0;
        let got = upper_bound(n, q, 0.0, &m).unwrap();
        let expected = m.trade_cost(q, 63);
        assert!((got - expected).abs() <= 1e-9 * expected);
        assert!(upper_bound(63, 0.0, 0.0, &m).is_err());
    }

    #[test]
    fn lower_coeff_examples() {
        let m = Models::reference();
        let k = lower_coeffs(&m).unwrap();
        assert_eq!(k.c_at(63), 0.0);
        assert_eq!(k.d_at(63), 0.0);
        assert!((k.c_at(62) - 0.6 * 2e7 / 63.0).abs() < 1e-6);
        assert!((k.c_at(62) - 190_476.2).abs() < 0.1);
        assert_eq!(k.d_at(62), 0.0);
        assert!(k.c.iter().chain(&k.d).all(|x| *x >= 0.0));
    }

    #[test]
    fn lower_coeffs_match_closed_form() {
        // C_n telescopes to sv Q (1 - n / N)
        let m = Models::reference();
        let k = lower_coeffs(&m).unwrap();
        let sv = m.market.step_vol();
        let (q, big_n) = (m.contract.nominal, m.contract.horizon as f64);
        for n in 1..=m.contract.horizon {
            let closed = sv * q * (1.0 - n as f64 / big_n);
            assert!((k.c_at(n) - closed).abs() <= 1e-12 * closed.max(1.0));
        }
        // D_n = E[eps+] sum_{j=n+1}^{N-1} (j / (j+1)) C_{j+1}, accumulated forward
        let mut d = 0.0;
        for n in (1..m.contract.horizon).rev() {
            let j = n + 1;
            let c_j = sv * q * (1.0 - j as f64 / big_n);
            d += n as f64 / j as f64 * c_j / 3.0;
            assert!((k.d_at(n) - d).abs() <= 1e-12 * d.max(1.0));
        }
    }

    fn small() -> Models {
        let mut m = Models::reference();
        m.contract.horizon = 8;
        m.contract.exercise_dates = vec![4, 5, 6, 7];
        m.contract.nominal = 2e6;
        m.market.volume = crate::contract::VolumeCurve::Flat(4e5);
        m
    }

    #[test]
    fn small_surfaces_lie_inside_the_bounds() {
        for gamma in [0.0, 2.5e-7, 2.5e-6] {
            for penalty in [TerminalPenalty::ForcedCompletion, TerminalPenalty::Quadratic { coefficient: 1e-5 }] {
                let mut m = small();
                m.risk.gamma = gamma;
                m.contract.penalty = penalty;
                let (s, _) = backward_solve(&m, &SolveConfig { inventory_steps: 20, ..Default::default() }).unwrap();
                let r = check_surface(&s, &lower_coeffs(&m).unwrap(), &m).unwrap();
                assert!(r.passed(), "gamma {gamma}: {:?}", r.rows.iter().find(|r| !r.pass));
                assert!(r.checked > 0);
            }
        }
    }

    #[test]
    fn corrupted_entry_is_flagged_alone() {
        let m = small();
        let (mut s, _) = backward_solve(&m, &SolveConfig { inventory_steps: 10, ..Default::default() }).unwrap();
        let layer = &mut s.layers[2];
        let stride = layer.stride;
        layer.values[5 * stride] = -1e9;
        let r = check_surface(&s, &lower_coeffs(&m).unwrap(), &m).unwrap();
        assert_eq!(r.violations, 1);
        let bad: Vec<_> = r.rows.iter().filter(|r| !r.pass).collect();
        assert_eq!((bad[0].n, bad[0].zeta, bad[0].q), (3, 5, 0.0));
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,zeta,q,lower,theta,upper,pass\n"));
        assert_eq!(text.matches(",false").count(), 1);
    }

    #[test]
    fn last_day_zero_inventory_sits_inside_bounds() {
        let m = small();
        let (s, _) = backward_solve(&m, &SolveConfig { inventory_steps: 10, ..Default::default() }).unwrap();
        let n = m.contract.horizon - 1;
        let zeta = ((n - 1) * n) as i64; // Z = 0
        assert_eq!(z_of(n, zeta), 0.0);
        let theta = s.theta(n, zeta, 0);
        assert_eq!(theta, 0.0);
        let k = lower_coeffs(&m).unwrap();
        assert!(k.lower_bound(n, 0.0) <= theta);
        assert!(upper_bound(n, 0.0, 0.0, &m).unwrap() >= theta);
    }
}
