//! Permanent market impact.
//!
//! Trading from `q` to `q'` moves the price by `G(q') - G(q)` with
//! `G(q) = int_q^Q f(|Q - y|) dy`, and the intraday path of that move adds
//! `F(q') - F(q)` plus a noise term `-(sigma v dt^{3/2} / sqrt 3) eps'` to the
//! cash spent. With `Y = -Q A + X + q S - F(q)` the reduced problem keeps one
//! state variable `Z`, but the price shift pushes the spread off the lattice,
//! so the continuation is interpolated in `zeta` on a padded lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{Models, INFINITE_COST};
use crate::error::{AsrError, Result};
use crate::lattice::{max_zeta, QGrid};
use crate::numerics::{adaptive_simpson, weighted_log_sum_exp};
use crate::solver::{
    self, apply_stopping, price_result, price_scan, Layer, Policy, PolicyLayer, PriceResult, SolveConfig,
    SolveMode, ValueSurface,
};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Kernel `f` of the permanent impact, as a function of `x = |Q - y|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ImpactKernel {
    #[default]
    None,
    Constant {
        k: f64,
    },
    /// `k x^{-beta}`, `0 < beta < 1`.
    PowerLaw {
        k: f64,
        beta: f64,
    },
    /// Piecewise linear through `(points, values)`, flat beyond the ends.
    Tabulated {
        points: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Intraday noise `eps'`, Gaussian given the daily innovation with mean
/// `(sqrt 3 / 2) eps` and variance `1/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct IntradayNoise {
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermanentImpactModel {
    #[serde(default)]
    pub kernel: ImpactKernel,
    #[serde(default)]
    pub noise: IntradayNoise,
    /// Relative tolerance of the quadrature used for tabulated kernels.
    #[serde(default = "default_quadrature_tol")]
    pub quadrature_tol: f64,
}

fn default_quadrature_tol() -> f64 {
    1e-10
}

impl Default for PermanentImpactModel {
    fn default() -> Self {
        PermanentImpactModel {
            kernel: ImpactKernel::None,
            noise: IntradayNoise::default(),
            quadrature_tol: default_quadrature_tol(),
        }
    }
}

impl PermanentImpactModel {
    pub fn is_inert(&self) -> bool {
        matches!(self.kernel, ImpactKernel::None) && !self.noise.enabled
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(AsrError::invalid("impact.kernel", r));
        match &self.kernel {
            ImpactKernel::None => {}
            ImpactKernel::Constant { k } => {
                if !(k.is_finite() && *k >= 0.0) {
                    return bad("constant k must be finite and >= 0");
                }
            }
            ImpactKernel::PowerLaw { k, beta } => {
                if !(k.is_finite() && *k >= 0.0) {
                    return bad("power-law k must be finite and >= 0");
                }
                if !(*beta > 0.0 && *beta < 1.0) {
                    return bad("power-law beta must lie in (0, 1)");
                }
            }
            ImpactKernel::Tabulated { points, values } => {
                if points.len() < 2 || points.len() != values.len() {
                    return bad("tabulated kernel needs >= 2 points and matching values");
                }
                if points.windows(2).any(|w| w[1] <= w[0]) || points[0] < 0.0 {
                    return bad("tabulated points must be >= 0 and strictly increasing");
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("tabulated values must be finite and >= 0");
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return bad("tabulated kernel must be nonincreasing");
                }
            }
        }
        if !(self.quadrature_tol > 0.0) {
            return Err(AsrError::invalid("impact.quadrature_tol", "must be > 0"));
        }
        Ok(())
    }

    /// `f(x)`.
    pub fn f(&self, x: f64) -> f64 {
        match &self.kernel {
            ImpactKernel::None => 0.0,
            ImpactKernel::Constant { k } => *k,
            ImpactKernel::PowerLaw { k, beta } => k * x.powf(-beta),
            ImpactKernel::Tabulated { points, values } => {
                let last = points.len() - 1;
                if x <= points[0] {
                    values[0]
                } else if x >= points[last] {
                    values[last]
                } else {
                    let j = points.partition_point(|p| *p <= x) - 1;
                    let t = (x - points[j]) / (points[j + 1] - points[j]);
                    values[j] + t * (values[j + 1] - values[j])
                }
            }
        }
    }
}

fn check_inventory(q: f64, nominal: f64) -> Result<()> {
    if !(0.0..=nominal).contains(&q) {
        return Err(AsrError::InventoryOutOfRange { q, nominal });
    }
    Ok(())
}

/// `G(q) = int_q^Q f(|Q - y|) dy`.
#[allow(non_snake_case)]
pub fn impact_G(model: &PermanentImpactModel, nominal: f64, q: f64) -> Result<f64> {
    check_inventory(q, nominal)?;
    let u = nominal - q;
    Ok(match &model.kernel {
        ImpactKernel::None => 0.0,
        ImpactKernel::Constant { k } => k * u,
        ImpactKernel::PowerLaw { k, beta } => k * u.powf(1.0 - beta) / (1.0 - beta),
        ImpactKernel::Tabulated { .. } => quadrature(model, |x| model.f(x), u),
    })
}

/// `F(q) = int_q^Q y f(|Q - y|) dy`.
#[allow(non_snake_case)]
pub fn impact_F(model: &PermanentImpactModel, nominal: f64, q: f64) -> Result<f64> {
    check_inventory(q, nominal)?;
    let u = nominal - q;
    Ok(match &model.kernel {
        ImpactKernel::None => 0.0,
        ImpactKernel::Constant { k } => 0.5 * k * (nominal * nominal - q * q),
        ImpactKernel::PowerLaw { k, beta } => {
            k * (nominal * u.powf(1.0 - beta) / (1.0 - beta) - u.powf(2.0 - beta) / (2.0 - beta))
        }
        ImpactKernel::Tabulated { .. } => quadrature(model, |x| (nominal - x) * model.f(x), u),
    })
}

/// `int_0^u integrand(x) dx`, split at the table knots.
fn quadrature(model: &PermanentImpactModel, integrand: impl Fn(f64) -> f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let mut cuts = vec![0.0];
    if let ImpactKernel::Tabulated { points, .. } = &model.kernel {
        cuts.extend(points.iter().copied().filter(|p| *p > 0.0 && *p < u));
    }
    cuts.push(u);
    cuts.windows(2)
        .map(|w| {
            let scale = integrand(w[0]).abs().max(integrand(w[1]).abs()).max(1e-300) * (w[1] - w[0]);
            adaptive_simpson(&integrand, w[0], w[1], model.quadrature_tol * scale)
        })
        .sum()
}

/// Cumulant-generating function of `sigma sqrt(dt) eps'` for the Gaussian
/// intraday noise; zero when the noise is disabled.
pub fn cgf_h(noise: &IntradayNoise, sigma: f64, dt: f64, u: f64) -> f64 {
    if noise.enabled {
        0.5 * u * u * sigma * sigma * dt
    } else {
        0.0
    }
}

/// Draws `eps'` given `eps`.
pub fn sample_intraday_noise<R: rand::Rng + ?Sized>(eps: f64, rng: &mut R) -> f64 {
    let normal: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
    0.5 * SQRT3 * eps + 0.5 * normal
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketState {
    /// Day index `n` of the state.
    pub day: usize,
    pub price: f64,
    /// Running average of the closing prices of days `1..=n`; `S_0` at day 0.
    pub average: f64,
    pub inventory: f64,
    pub cash: f64,
}

/// One day of trading at rate `v` with permanent impact.
pub fn permanent_dynamics_step(
    state: &MarketState,
    v: f64,
    eps: f64,
    eps_prime: f64,
    models: &Models,
    impact: &PermanentImpactModel,
) -> Result<MarketState> {
    let nominal = models.contract.nominal;
    let dt = models.market.dt;
    let q_next = state.inventory - v * dt;
    check_inventory(q_next, nominal)?;
    let dg = impact_G(impact, nominal, q_next)? - impact_G(impact, nominal, state.inventory)?;
    let df = impact_F(impact, nominal, q_next)? - impact_F(impact, nominal, state.inventory)?;
    let price = state.price + models.market.step_vol() * eps + dg;
    let noise = if impact.noise.enabled {
        models.market.sigma * v * dt.powf(1.5) / SQRT3 * eps_prime
    } else {
        0.0
    };
    let cash = state.cash + price * v * dt - state.inventory * dg + df - noise + models.trade_cost(v * dt, state.day + 1);
    let n = state.day as f64;
    Ok(MarketState {
        day: state.day + 1,
        price,
        average: (n * state.average + price) / (n + 1.0),
        inventory: q_next,
        cash,
    })
}

/// Per-level constants of the permanent-impact stage problem.
struct PermanentLevel<'a> {
    grid: QGrid,
    n: usize,
    gamma: f64,
    buy_only: bool,
    exercise: bool,
    noise: bool,
    probs: [f64; 5],
    sv: f64,
    share: f64,
    g: &'a [f64],
    /// `l(q_i) + F(0)`.
    terminal: &'a [f64],
    /// Trade cost and noise loading indexed by `i - k + M`.
    cost: Vec<f64>,
    noise_a: Vec<f64>,
}

impl<'a> PermanentLevel<'a> {
    fn new(
        models: &'a Models,
        impact: &PermanentImpactModel,
        config: &SolveConfig,
        grid: &QGrid,
        n: usize,
        g: &'a [f64],
        terminal: &'a [f64],
    ) -> Self {
        let m = grid.steps as i64;
        let dt = models.market.dt;
        let cost = (-m..=m).map(|d| models.trade_cost(grid.span(d), n + 1)).collect();
        let noise_a = (-m..=m)
            .map(|d| models.market.sigma * (grid.span(d) / dt) * dt.powf(1.5) / SQRT3)
            .collect();
        PermanentLevel {
            grid: *grid,
            n,
            gamma: models.risk.gamma,
            buy_only: config.buy_only,
            exercise: models.contract.is_exercise_date(n),
            noise: impact.noise.enabled,
            probs: models.market.innovation.probabilities(),
            sv: models.market.step_vol(),
            share: grid.nominal / (n as f64 + 1.0),
            g,
            terminal,
            cost,
            noise_a,
        }
    }

    /// Certainty-equivalent cost of moving `q_i -> q_k` at real node `zeta`.
    fn objective(&self, next: &Layer, zeta: f64, i: usize, k: usize) -> f64 {
        let n = self.n as f64;
        let d = i + self.grid.steps - k;
        let dg = self.g[k] - self.g[i];
        let z = zeta / n - (n - 1.0);
        let common = -self.sv * self.share * z + self.cost[d] - self.share * dg;
        let shift = zeta + n * dg / self.sv;
        let bi = self.sv * (self.grid.value(i) - self.share);
        let a = self.noise_a[d];
        let mut brackets = [0.0; 5];
        for (j, b) in brackets.iter_mut().enumerate() {
            let cont = next.extrapolate_zeta(shift + n * j as f64, k);
            if cont.is_infinite() {
                return INFINITE_COST;
            }
            let eps = j as f64 - 2.0;
            let noise = if self.noise {
                -a * 0.5 * SQRT3 * eps + self.gamma * a * a / 8.0
            } else {
                0.0
            };
            *b = bi * eps + common + noise + cont;
        }
        if self.gamma == 0.0 {
            self.probs.iter().zip(&brackets).map(|(p, b)| p * b).sum()
        } else {
            weighted_log_sum_exp(&self.probs, &brackets.map(|b| self.gamma * b)) / self.gamma
        }
    }

    fn stage(&self, next: &Layer, zeta: f64, i: usize) -> (f64, Option<usize>) {
        let upper = if self.buy_only { i } else { self.grid.steps };
        let mut best = (INFINITE_COST, None);
        for k in 0..=upper {
            let v = self.objective(next, zeta, i, k);
            if v < best.0 {
                best = (v, Some(k));
            }
        }
        best
    }

    fn solve_node(&self, next: &Layer, zeta: i64, values: &mut [f64], next_idx: &mut [u16], exercise: &mut [bool]) {
        for i in 0..values.len() {
            let (tt, k) = self.stage(next, zeta as f64, i);
            let (v, ex) = if self.exercise {
                apply_stopping(tt, self.terminal[i])
            } else {
                (tt, false)
            };
            values[i] = v;
            next_idx[i] = k.unwrap_or(i) as u16;
            exercise[i] = ex;
        }
    }
}

/// Node padding of each level, wide enough that every shifted child of a
/// stored node is stored too, up to a cap of one extra lattice width per side.
fn paddings(models: &Models, impact: &PermanentImpactModel) -> Result<Vec<i64>> {
    let horizon = models.contract.horizon;
    let s_max = impact_G(impact, models.contract.nominal, 0.0)? / models.market.step_vol();
    let mut pad = vec![0i64; horizon + 1];
    for n in 1..horizon {
        let grow = (n as f64 * s_max).ceil();
        let cap = max_zeta(n + 1) + 8;
        pad[n + 1] = if grow.is_finite() {
            (pad[n] + grow as i64).min(cap)
        } else {
            cap
        };
    }
    Ok(pad)
}

struct GridTables {
    g: Vec<f64>,
    terminal: Vec<f64>,
}

fn grid_tables(models: &Models, impact: &PermanentImpactModel, grid: &QGrid) -> Result<GridTables> {
    let nominal = models.contract.nominal;
    let f0 = impact_F(impact, nominal, 0.0)?;
    let g = (0..grid.len())
        .map(|i| impact_G(impact, nominal, grid.value(i)))
        .collect::<Result<Vec<_>>>()?;
    let terminal = (0..grid.len())
        .map(|i| models.terminal_penalty(grid.value(i)) + f0)
        .collect();
    Ok(GridTables { g, terminal })
}

/// Backward induction with permanent impact. A kernel of `none` with the
/// intraday noise disabled is the base problem and is solved by it.
pub fn backward_solve_permanent(
    models: &Models,
    impact: &PermanentImpactModel,
    config: &SolveConfig,
) -> Result<(ValueSurface, Policy)> {
    if impact.is_inert() {
        impact.validate()?;
        let (mut s, p) = solver::backward_solve(models, config)?;
        s.mode = SolveMode::Permanent;
        return Ok((s, p));
    }
    solve_general(models, impact, config)
}

fn solve_general(
    models: &Models,
    impact: &PermanentImpactModel,
    config: &SolveConfig,
) -> Result<(ValueSurface, Policy)> {
    models.validate()?;
    impact.validate()?;
    let grid = config.grid(models)?;
    let horizon = models.contract.horizon;
    let pad = paddings(models, impact)?;
    let tables = grid_tables(models, impact, &grid)?;
    let stride = grid.len();

    let (layers, policies) = config.run(|| -> Result<_> {
        let width = |n: usize| (max_zeta(n) + 2 * pad[n] + 1) as usize;
        let mut terminal = Layer::alloc(horizon, -pad[horizon], width(horizon), stride, 0.0)?;
        terminal
            .values
            .par_chunks_mut(stride)
            .for_each(|node| node.copy_from_slice(&tables.terminal));
        let mut terminal_policy = PolicyLayer::alloc(horizon, -pad[horizon], width(horizon), stride, false)?;
        for (off, slot) in terminal_policy.next.iter_mut().enumerate() {
            *slot = (off % stride) as u16;
        }
        terminal_policy.exercise.fill(true);
        let mut layers = vec![terminal];
        let mut policies = vec![terminal_policy];
        for n in (1..horizon).rev() {
            let level = PermanentLevel::new(models, impact, config, &grid, n, &tables.g, &tables.terminal);
            let lo = -pad[n];
            let mut layer = Layer::alloc(n, lo, width(n), stride, 0.0)?;
            let mut policy = PolicyLayer::alloc(n, lo, width(n), stride, false)?;
            let next = layers.last().expect("terminal layer present");
            layer
                .values
                .par_chunks_mut(stride)
                .zip(policy.next.par_chunks_mut(stride))
                .zip(policy.exercise.par_chunks_mut(stride))
                .enumerate()
                .for_each(|(r, ((vals, nxt), ex))| level.solve_node(next, lo + r as i64, vals, nxt, ex));
            if let Some(pos) = layer.values.iter().position(|v| v.is_nan()) {
                return Err(AsrError::Solver {
                    level: n,
                    zeta: lo + (pos / stride) as i64,
                    reason: "NaN in stage value".into(),
                });
            }
            layers.push(layer);
            policies.push(policy);
        }
        layers.reverse();
        policies.reverse();
        Ok((layers, policies))
    })??;
    Ok((
        ValueSurface {
            grid,
            horizon,
            mode: SolveMode::Permanent,
            layers,
        },
        Policy {
            grid,
            layers: policies,
        },
    ))
}

/// `Theta~_n(q_i, zeta)` with permanent impact at a real node coordinate.
#[allow(clippy::too_many_arguments)]
pub fn stage_value_permanent(
    models: &Models,
    impact: &PermanentImpactModel,
    config: &SolveConfig,
    n: usize,
    zeta: f64,
    i: usize,
    next_layer: &Layer,
) -> Result<(f64, Option<usize>)> {
    let horizon = models.contract.horizon;
    if n < 1 || n >= horizon {
        return Err(AsrError::LevelOutOfRange { level: n, horizon });
    }
    let grid = config.grid(models)?;
    if i > grid.steps {
        return Err(AsrError::Dimension(format!("grid index {i} beyond {}", grid.steps)));
    }
    let tables = grid_tables(models, impact, &grid)?;
    let level = PermanentLevel::new(models, impact, config, &grid, n, &tables.g, &tables.terminal);
    Ok(level.stage(next_layer, zeta, i))
}

/// Indifference price with permanent impact:
/// `min_k h-term - Q (G(q_k) - G(Q)) + L + Theta_1(q_k, 0)`.
pub fn price_permanent(
    surface: &ValueSurface,
    models: &Models,
    impact: &PermanentImpactModel,
    config: &SolveConfig,
) -> Result<PriceResult> {
    if surface.mode != SolveMode::Permanent {
        return Err(AsrError::invalid("mode", "surface was not solved in permanent mode"));
    }
    let grid = surface.grid;
    let first = surface.layer(1);
    if !first.contains(0) {
        return Err(AsrError::Dimension("surface has no level-1 root".into()));
    }
    let base_cost = |k: usize| models.trade_cost(grid.span((grid.steps - k) as i64), 1);
    let (pi, k) = if impact.is_inert() {
        price_scan(&grid, first, base_cost)
    } else {
        let nominal = models.contract.nominal;
        let g_q = impact_G(impact, nominal, nominal)?;
        let tables = grid_tables(models, impact, &grid)?;
        let gamma = models.risk.gamma;
        let dt = models.market.dt;
        price_scan(&grid, first, |k| {
            let traded = grid.span((grid.steps - k) as i64);
            let h = if gamma > 0.0 {
                cgf_h(&impact.noise, models.market.sigma, dt, -gamma * traded / SQRT3) / gamma
            } else {
                0.0
            };
            h - nominal * (tables.g[k] - g_q) + base_cost(k)
        })
    };
    Ok(price_result(models, config, &grid, pi, k, SolveMode::Permanent))
}

/// Prices with permanent impact (full solve, then [`price_permanent`]).
pub fn solve_price_permanent(
    models: &Models,
    impact: &PermanentImpactModel,
    config: &SolveConfig,
) -> Result<PriceResult> {
    let start = std::time::Instant::now();
    if impact.is_inert() {
        impact.validate()?;
        let mut r = solver::solve_price(models, config)?;
        r.mode = SolveMode::Permanent;
        return Ok(r);
    }
    let (s, _) = solve_general(models, impact, config)?;
    let mut r = price_permanent(&s, models, impact, config)?;
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

/// Draws `(eps, eps')` with `eps` standard
/// normal and returns their sample covariance.
pub fn sample_joint_covariance<R: rand::Rng + ?Sized>(samples: usize, rng: &mut R) -> (f64, f64) {
    let mut sum = (0.0, 0.0, 0.0);
    for _ in 0..samples {
        let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        let ep = sample_intraday_noise(e, rng);
        sum.0 += e;
        sum.1 += ep;
        sum.2 += e * ep;
    }
    let k = samples as f64;
    let cov = sum.2 / k - sum.0 / k * sum.1 / k;
    // standard error of the covariance of two unit-variance normals with correlation rho
    let rho = 0.5 * SQRT3;
    let se = ((1.0 + rho * rho) / k).sqrt();
    (cov, se)
}
