//! Backward induction for the reduced cost function on the pentanomial tree.
//!
//! `Theta_n(q, zeta)` is the liquidity-and-risk cost of an unfinished contract
//! at day `n`, spread node `zeta`, with `q` shares still to buy. The bank's
//! certainty equivalent is `Q A - X - q S - Theta`. Levels are solved from `N`
//! down to `1`; nodes inside a level are independent and solved in parallel.

mod kernel;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{Models, INFINITE_COST};
use crate::error::{AsrError, Result};
use crate::lattice::{max_zeta, z_of, zeta_of, QGrid};
use crate::numerics::{lerp, weighted_log_sum_exp};

pub(crate) use kernel::LevelContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Number of inventory steps `M`; the grid is `i Q / M`, `i = 0..=M`.
    pub inventory_steps: usize,
    /// Restrict trades to purchases (`q' <= q`).
    pub buy_only: bool,
    /// Golden-section refinement of the inner minimization between the
    /// neighbours of the grid argmin, with continuation interpolated in `q`.
    pub refine_local: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            inventory_steps: 200,
            buy_only: false,
            refine_local: false,
            workers: None,
        }
    }
}

impl SolveConfig {
    pub fn grid(&self, models: &Models) -> Result<QGrid> {
        QGrid::new(models.contract.nominal, self.inventory_steps)
    }

    pub(crate) fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        match self.workers {
            None => Ok(f()),
            Some(threads) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads.max(1))
                    .build()
                    .map_err(|e| AsrError::invalid("solver.workers", e.to_string()))?;
                Ok(pool.install(f))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    Base,
    Permanent,
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMode::Base => "base",
            SolveMode::Permanent => "permanent",
        })
    }
}

/// Values of one level, flat `[zeta - zeta_lo][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub level: usize,
    pub zeta_lo: i64,
    pub width: usize,
    pub stride: usize,
    pub values: Vec<f64>,
}

impl Layer {
    pub(crate) fn alloc(level: usize, zeta_lo: i64, width: usize, stride: usize, fill: f64) -> Result<Self> {
        let mut values = Vec::new();
        values
            .try_reserve_exact(width * stride)
            .map_err(|e| AsrError::Solver {
                level,
                zeta: zeta_lo,
                reason: format!("cannot allocate {width} x {stride} layer: {e}"),
            })?;
        values.resize(width * stride, fill);
        Ok(Layer {
            level,
            zeta_lo,
            width,
            stride,
            values,
        })
    }

    pub fn zeta_hi(&self) -> i64 {
        self.zeta_lo + self.width as i64 - 1
    }

    pub fn contains(&self, zeta: i64) -> bool {
        zeta >= self.zeta_lo && zeta <= self.zeta_hi()
    }

    #[inline]
    pub fn node(&self, zeta: i64) -> &[f64] {
        let r = (zeta - self.zeta_lo) as usize;
        &self.values[r * self.stride..(r + 1) * self.stride]
    }

    #[inline]
    pub fn get(&self, zeta: i64, i: usize) -> f64 {
        self.node(zeta)[i]
    }

    pub fn zetas(&self) -> impl Iterator<Item = i64> {
        self.zeta_lo..=self.zeta_hi()
    }

    /// Value at real node coordinate `pos` and grid index `i`, linear in
    /// `zeta` and clamped to the stored range.
    #[inline]
    pub fn interpolate_zeta(&self, pos: f64, i: usize) -> f64 {
        let mut pos = pos.clamp(self.zeta_lo as f64, self.zeta_hi() as f64);
        let nearest = pos.round();
        if (pos - nearest).abs() <= 1e-9 * (1.0 + nearest.abs()) {
            pos = nearest;
        }
        let lo = pos.floor();
        let t = pos - lo;
        let z0 = lo as i64;
        if t == 0.0 {
            self.get(z0, i)
        } else {
            lerp(self.get(z0, i), self.get(z0 + 1, i), t)
        }
    }

    /// Like [`Layer::interpolate_zeta`] inside the stored range, but continues
    /// the edge segment linearly beyond it.
    pub fn extrapolate_zeta(&self, pos: f64, i: usize) -> f64 {
        let (lo, hi) = (self.zeta_lo, self.zeta_hi());
        if hi == lo || (pos >= lo as f64 && pos <= hi as f64) {
            return self.interpolate_zeta(pos, i);
        }
        let (a, b) = if pos < lo as f64 { (lo, lo + 1) } else { (hi - 1, hi) };
        let (va, vb) = (self.get(a, i), self.get(b, i));
        if va.is_infinite() || vb.is_infinite() {
            return INFINITE_COST;
        }
        va + (vb - va) * (pos - a as f64)
    }
}

/// Decisions of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLayer {
    pub level: usize,
    pub zeta_lo: i64,
    pub width: usize,
    pub stride: usize,
    /// Grid index of the next inventory.
    pub next: Vec<u16>,
    /// Next inventory when local refinement moved it off the grid.
    pub next_q: Option<Vec<f64>>,
    pub exercise: Vec<bool>,
}

impl PolicyLayer {
    pub(crate) fn alloc(level: usize, zeta_lo: i64, width: usize, stride: usize, refined: bool) -> Result<Self> {
        let n = width * stride;
        let mut next = Vec::new();
        next.try_reserve_exact(n).map_err(|e| AsrError::Solver {
            level,
            zeta: zeta_lo,
            reason: format!("cannot allocate policy layer: {e}"),
        })?;
        next.resize(n, 0u16);
        Ok(PolicyLayer {
            level,
            zeta_lo,
            width,
            stride,
            next,
            next_q: refined.then(|| vec![f64::NAN; n]),
            exercise: vec![false; n],
        })
    }

    #[inline]
    fn offset(&self, zeta: i64, i: usize) -> usize {
        (zeta - self.zeta_lo) as usize * self.stride + i
    }

    pub fn next_index(&self, zeta: i64, i: usize) -> usize {
        self.next[self.offset(zeta, i)] as usize
    }

    pub fn exercises(&self, zeta: i64, i: usize) -> bool {
        self.exercise[self.offset(zeta, i)]
    }

    pub fn contains(&self, zeta: i64) -> bool {
        zeta >= self.zeta_lo && zeta < self.zeta_lo + self.width as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub grid: QGrid,
    pub horizon: usize,
    pub mode: SolveMode,
    /// `layers[n - 1]` holds level `n`.
    pub layers: Vec<Layer>,
}

impl ValueSurface {
    pub fn layer(&self, n: usize) -> &Layer {
        &self.layers[n - 1]
    }

    pub fn theta(&self, n: usize, zeta: i64, i: usize) -> f64 {
        self.layer(n).get(zeta, i)
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.width).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub grid: QGrid,
    pub layers: Vec<PolicyLayer>,
}

impl Policy {
    pub fn layer(&self, n: usize) -> &PolicyLayer {
        &self.layers[n - 1]
    }

    /// Next inventory chosen at `(n, zeta, q_i)`.
    pub fn next_inventory(&self, n: usize, zeta: i64, i: usize) -> f64 {
        let layer = self.layer(n);
        let off = layer.offset(zeta, i);
        match &layer.next_q {
            Some(qs) if qs[off].is_finite() => qs[off],
            _ => self.grid.value(layer.next[off] as usize),
        }
    }

    /// Implied trading rate `(q_i - q') / dt`.
    pub fn trade_rate(&self, n: usize, zeta: i64, i: usize, dt: f64) -> f64 {
        (self.grid.value(i) - self.next_inventory(n, zeta, i)) / dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceResult {
    /// Indifference price `Pi`.
    pub pi: f64,
    pub pi_per_share: f64,
    /// Optimal first-day trading rate.
    pub v0: f64,
    /// Inventory after the first day.
    pub q1: f64,
    pub q1_index: usize,
    pub mode: SolveMode,
    pub buy_only: bool,
    pub gamma: f64,
    pub inventory_steps: usize,
    pub horizon: usize,
    pub nodes: u64,
    pub seconds: f64,
}

/// Level-`N` values: `l(q_i)` at every node.
pub fn terminal_layer(models: &Models, grid: &QGrid) -> Result<Layer> {
    let n = models.contract.horizon;
    let width = max_zeta(n) as usize + 1;
    let mut layer = Layer::alloc(n, 0, width, grid.len(), 0.0)?;
    let row: Vec<f64> = (0..grid.len())
        .map(|i| models.terminal_penalty(grid.value(i)))
        .collect();
    layer
        .values
        .par_chunks_mut(grid.len())
        .for_each(|node| node.copy_from_slice(&row));
    Ok(layer)
}

/// Certainty-equivalent cost of moving from `q` to `q_tilde` at node spread
/// `z` of day `n`, given the continuation value along each branch.
pub fn stage_objective(
    models: &Models,
    n: usize,
    z: f64,
    q: f64,
    q_tilde: f64,
    continuation: impl Fn(usize) -> f64,
) -> f64 {
    let sv = models.market.step_vol();
    let nominal = models.contract.nominal;
    let share = nominal / (n as f64 + 1.0);
    let cost = models.trade_cost(q - q_tilde, n + 1);
    let probs = models.market.innovation.probabilities();
    let mut brackets = [0.0; 5];
    for (j, b) in brackets.iter_mut().enumerate() {
        let cont = continuation(j);
        if cont.is_infinite() {
            return INFINITE_COST;
        }
        let eps = j as f64 - 2.0;
        *b = sv * (eps * (q - share) - share * z) + cost + cont;
    }
    let gamma = models.risk.gamma;
    if gamma == 0.0 {
        probs.iter().zip(&brackets).map(|(p, b)| p * b).sum()
    } else {
        weighted_log_sum_exp(&probs, &brackets.map(|b| gamma * b)) / gamma
    }
}

/// Continuation cost `Theta~_n(q_i, zeta)` and its grid argmin, scanning every
/// admissible `q~` on the grid. Ties go to the smallest index; an empty
/// feasible set returns the infinite sentinel.
pub fn stage_value(
    models: &Models,
    config: &SolveConfig,
    n: usize,
    zeta: i64,
    i: usize,
    next_layer: &Layer,
) -> Result<(f64, Option<usize>)> {
    let horizon = models.contract.horizon;
    if n < 1 || n >= horizon {
        return Err(AsrError::LevelOutOfRange { level: n, horizon });
    }
    if next_layer.level != n + 1 {
        return Err(AsrError::Dimension(format!(
            "continuation layer is level {}, expected {}",
            next_layer.level,
            n + 1
        )));
    }
    let grid = config.grid(models)?;
    let z = z_of(n, zeta);
    let q = grid.value(i);
    let upper = if config.buy_only { i } else { grid.steps };
    let mut best = (INFINITE_COST, None);
    for k in 0..=upper {
        let v = stage_objective(models, n, z, q, grid.value(k), |j| {
            next_layer.get(zeta + (n * j) as i64, k)
        });
        if v < best.0 {
            best = (v, Some(k));
        }
    }
    Ok(best)
}

/// [`stage_value`] at a real node coordinate, with the continuation linear
/// in `zeta` between nodes (clamped at the edges of the stored level).
pub fn stage_value_at(
    models: &Models,
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
    let z = zeta / n as f64 - (n as f64 - 1.0);
    let q = grid.value(i);
    let upper = if config.buy_only { i } else { grid.steps };
    let mut best = (INFINITE_COST, None);
    for k in 0..=upper {
        let v = stage_objective(models, n, z, q, grid.value(k), |j| {
            next_layer.interpolate_zeta(zeta + (n * j) as f64, k)
        });
        if v < best.0 {
            best = (v, Some(k));
        }
    }
    Ok(best)
}

/// Optimal-stopping step at an exercise date: `min(Theta~, l(q))`, with ties
/// resolved in favour of delivery.
pub fn apply_stopping(theta_tilde: f64, penalty_value: f64) -> (f64, bool) {
    if penalty_value <= theta_tilde {
        (penalty_value, true)
    } else {
        (theta_tilde, false)
    }
}

/// Full backward induction; keeps every level.
pub fn backward_solve(models: &Models, config: &SolveConfig) -> Result<(ValueSurface, Policy)> {
    models.validate()?;
    let grid = config.grid(models)?;
    let horizon = models.contract.horizon;
    let mut layers = Vec::with_capacity(horizon);
    let mut policies = Vec::with_capacity(horizon);
    config.run(|| {
        backward_levels(models, config, &grid, |layer, policy| {
            layers.push(layer);
            policies.push(policy);
        })
    })??;
    layers.reverse();
    policies.reverse();
    Ok((
        ValueSurface {
            grid,
            horizon,
            mode: SolveMode::Base,
            layers,
        },
        Policy {
            grid,
            layers: policies,
        },
    ))
}

/// Prices the contract keeping only two levels in memory.
pub fn solve_price(models: &Models, config: &SolveConfig) -> Result<PriceResult> {
    models.validate()?;
    let start = Instant::now();
    let grid = config.grid(models)?;
    let mut first = None;
    config.run(|| {
        backward_levels(models, config, &grid, |layer, _| {
            if layer.level == 1 {
                first = Some(layer);
            }
        })
    })??;
    let first = first.expect("level 1 is always produced");
    let mut res = price_from_layer(models, config, &grid, &first, SolveMode::Base)?;
    res.seconds = start.elapsed().as_secs_f64();
    Ok(res)
}

pub(crate) fn backward_levels(
    models: &Models,
    config: &SolveConfig,
    grid: &QGrid,
    mut sink: impl FnMut(Layer, PolicyLayer),
) -> Result<()> {
    let horizon = models.contract.horizon;
    let stride = grid.len();
    let terminal = terminal_layer(models, grid)?;
    let mut terminal_policy = PolicyLayer::alloc(horizon, 0, terminal.width, stride, false)?;
    for (off, slot) in terminal_policy.next.iter_mut().enumerate() {
        *slot = (off % stride) as u16;
    }
    terminal_policy.exercise.fill(true);
    let mut next = terminal;
    let mut next_policy = terminal_policy;
    for n in (1..horizon).rev() {
        let ctx = LevelContext::new(models, config, grid, n);
        let width = max_zeta(n) as usize + 1;
        let mut layer = Layer::alloc(n, 0, width, stride, 0.0)?;
        let mut policy = PolicyLayer::alloc(n, 0, width, stride, config.refine_local)?;
        {
            let next_ref = &next;
            let refined = policy.next_q.as_mut().map(|v| v.as_mut_slice());
            let work = layer
                .values
                .par_chunks_mut(stride)
                .zip(policy.next.par_chunks_mut(stride))
                .zip(policy.exercise.par_chunks_mut(stride))
                .enumerate();
            match refined {
                None => work.for_each(|(r, ((vals, nxt), ex))| {
                    ctx.solve_node(next_ref, r as i64, vals, nxt, ex, None);
                }),
                Some(qs) => work
                    .zip(qs.par_chunks_mut(stride))
                    .for_each(|((r, ((vals, nxt), ex)), nq)| {
                        ctx.solve_node(next_ref, r as i64, vals, nxt, ex, Some(nq));
                    }),
            }
        }
        if let Some(pos) = layer.values.iter().position(|v| v.is_nan()) {
            return Err(AsrError::Solver {
                level: n,
                zeta: (pos / stride) as i64,
                reason: "NaN in stage value".into(),
            });
        }
        sink(std::mem::replace(&mut next, layer), std::mem::replace(&mut next_policy, policy));
    }
    sink(next, next_policy);
    Ok(())
}

pub(crate) fn price_from_layer(
    models: &Models,
    config: &SolveConfig,
    grid: &QGrid,
    first: &Layer,
    mode: SolveMode,
) -> Result<PriceResult> {
    let (pi, k) = price_scan(grid, first, |k| models.trade_cost(grid.span((grid.steps - k) as i64), 1));
    Ok(price_result(models, config, grid, pi, k, mode))
}

/// `min_k cost(k) + Theta_1(q_k, 0)`, smallest index on ties.
pub(crate) fn price_scan(grid: &QGrid, first: &Layer, cost: impl Fn(usize) -> f64) -> (f64, usize) {
    let root = first.node(0);
    let mut best = (INFINITE_COST, grid.steps);
    for (k, theta) in root.iter().enumerate() {
        let v = cost(k) + theta;
        if v < best.0 {
            best = (v, k);
        }
    }
    best
}

pub(crate) fn price_result(
    models: &Models,
    config: &SolveConfig,
    grid: &QGrid,
    pi: f64,
    k: usize,
    mode: SolveMode,
) -> PriceResult {
    let nominal = models.contract.nominal;
    PriceResult {
        pi,
        pi_per_share: pi / nominal,
        v0: grid.span((grid.steps - k) as i64) / models.market.dt,
        q1: grid.value(k),
        q1_index: k,
        mode,
        buy_only: config.buy_only,
        gamma: models.risk.gamma,
        inventory_steps: grid.steps,
        horizon: models.contract.horizon,
        nodes: crate::lattice::total_nodes(models.contract.horizon),
        seconds: 0.0,
    }
}

/// Indifference price from a solved surface.
pub fn price(surface: &ValueSurface, models: &Models, config: &SolveConfig) -> Result<PriceResult> {
    if surface.mode != SolveMode::Base {
        return Err(AsrError::invalid("mode", "use impact::price_permanent for permanent surfaces"));
    }
    if surface.layers.is_empty() || !surface.layer(1).contains(0) {
        return Err(AsrError::Dimension("surface has no level-1 root".into()));
    }
    price_from_layer(models, config, &surface.grid, surface.layer(1), SolveMode::Base)
}

/// `theta_n(q, Z)` off the lattice: linear in `zeta` between the bracketing
/// nodes (clamped to the stored range) and linear in `q` between grid points.
pub fn theta_continuous(surface: &ValueSurface, n: usize, q: f64, z: f64) -> f64 {
    let layer = surface.layer(n);
    let (i0, i1, s) = surface.grid.locate(q);
    let pos = zeta_of(n, z);
    let a = layer.interpolate_zeta(pos, i0);
    if s == 0.0 {
        return a;
    }
    lerp(a, layer.interpolate_zeta(pos, i1), s)
}

/// Certainty equivalent `Q A - x - q S - theta` of the bank's position.
pub fn certainty_equivalent(theta: f64, nominal: f64, average: f64, cash: f64, q: f64, price: f64) -> f64 {
    nominal * average - cash - q * price - theta
}

/// Expected utility `-exp(-gamma CE)`; undefined (None) in risk-neutral mode.
/// An infinite cost gives `-inf`.
pub fn recover_u(certainty_equivalent: f64, gamma: f64) -> Option<f64> {
    (gamma > 0.0).then(|| -(-gamma * certainty_equivalent).exp())
}

pub(crate) fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Surface and policy as CSV: `n,zeta,Z,q,theta,v_opt,exercise`.
pub fn write_surface_csv<W: Write>(
    out: W,
    surface: &ValueSurface,
    policy: &Policy,
    dt: f64,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "n,zeta,Z,q,theta,v_opt,exercise")?;
    for (layer, pol) in surface.layers.iter().zip(&policy.layers) {
        let n = layer.level;
        for zeta in layer.zetas() {
            let z = z_of(n, zeta);
            for i in 0..layer.stride {
                let v = policy.trade_rate(n, zeta, i, dt);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    n,
                    zeta,
                    z,
                    surface.grid.value(i),
                    fmt_value(layer.get(zeta, i)),
                    v,
                    pol.exercises(zeta, i)
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
