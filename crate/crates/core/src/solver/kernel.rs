//! Per-node inner minimization.
//!
//! Three evaluators share one contract: for every grid inventory `q_i` return
//! `min_k` of the stage objective over admissible `q_k`, the smallest minimizing
//! index, and the exercise decision.
//!
//! * `gamma = 0`: the objective is `c_{|i-k|} + E_k` with `E_k` the branch mean
//!   of the continuation; the inventory-dependent spread terms cancel.
//! * moderate `gamma`: everything is exponentiated once per node around a
//!   midpoint so the scan is a product of positive numbers, no `exp`/`ln`.
//! * large `gamma`: log-sum-exp per candidate, skipped whenever the dominant
//!   branch alone already exceeds the incumbent.
//!
//! The choice between the last two depends on the spread of values at the node
//! and is made before any arithmetic, so results are reproducible.

use crate::contract::{Models, INFINITE_COST};
use crate::lattice::{z_of, QGrid};
use crate::solver::{apply_stopping, Layer, SolveConfig};

/// Largest log-magnitude allowed in the product evaluator.
const PRODUCT_EXP_LIMIT: f64 = 600.0;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

pub(crate) struct LevelContext<'a> {
    models: &'a Models,
    grid: QGrid,
    n: usize,
    gamma: f64,
    buy_only: bool,
    exercise: bool,
    probs: [f64; 5],
    log_p_over_gamma: [f64; 5],
    /// `sigma sqrt(dt) Q / (n + 1)`.
    z_coef: f64,
    /// `b_i = sigma sqrt(dt) (q_i - Q / (n + 1))`.
    b: Vec<f64>,
    /// `c_d`, cost of trading `d` grid steps during day `n + 1`.
    cost: Vec<f64>,
    penalty: Vec<f64>,
    product: Option<ProductTables>,
}

struct ProductTables {
    /// `p_j exp(gamma (j - 2) b_i)`, row per `i`.
    w: Vec<[f64; 5]>,
    /// `exp(gamma (c_{|d|} - c_mid))` for `d = -M..=M`, index `d + M`.
    cexp: Vec<f64>,
    /// Budget left for the continuation spread at a node.
    node_budget: f64,
}

impl<'a> LevelContext<'a> {
    pub(crate) fn new(models: &'a Models, config: &SolveConfig, grid: &QGrid, n: usize) -> Self {
        let m = grid.steps;
        let gamma = models.risk.gamma;
        let sv = models.market.step_vol();
        let share = grid.nominal / (n as f64 + 1.0);
        let probs = models.market.innovation.probabilities();
        let b: Vec<f64> = (0..=m).map(|i| sv * (grid.value(i) - share)).collect();
        let cost: Vec<f64> = (0..=m)
            .map(|d| models.trade_cost(grid.span(d as i64), n + 1))
            .collect();
        let penalty = (0..=m).map(|i| models.terminal_penalty(grid.value(i))).collect();
        let product = (gamma > 0.0)
            .then(|| ProductTables::build(gamma, &probs, &b, &cost))
            .flatten();
        LevelContext {
            models,
            grid: *grid,
            n,
            gamma,
            buy_only: config.buy_only,
            exercise: models.contract.is_exercise_date(n),
            probs,
            log_p_over_gamma: probs.map(|p| if gamma > 0.0 { p.ln() / gamma } else { 0.0 }),
            z_coef: sv * share,
            b,
            cost,
            penalty,
            product,
        }
    }

    #[inline]
    fn upper(&self, i: usize) -> usize {
        if self.buy_only {
            i
        } else {
            self.grid.steps
        }
    }

    /// Solves node `zeta`, writing values, next indices and exercise flags.
    pub(crate) fn solve_node(
        &self,
        next: &Layer,
        zeta: i64,
        values: &mut [f64],
        next_idx: &mut [u16],
        exercise: &mut [bool],
        refined: Option<&mut [f64]>,
    ) {
        let n = self.n as i64;
        let rows: [&[f64]; 5] = std::array::from_fn(|j| next.node(zeta + n * j as i64));
        let zt = -self.z_coef * z_of(self.n, zeta);

        if self.gamma == 0.0 {
            self.risk_neutral(&rows, values, next_idx);
        } else {
            let (lo, hi) = feasible_range(&rows);
            match &self.product {
                Some(t) if lo.is_finite() && self.gamma * (hi - lo) * 0.5 <= t.node_budget => {
                    self.scaled_product(t, &rows, 0.5 * (lo + hi), values, next_idx)
                }
                _ => self.pruned_lse(&rows, values, next_idx),
            }
        }

        if let Some(qs) = refined {
            let z = z_of(self.n, zeta);
            for i in 0..values.len() {
                if values[i].is_finite() {
                    if let Some((q, v)) = self.refine_local(&rows, z, zt, i, next_idx[i] as usize, values[i]) {
                        values[i] = v;
                        qs[i] = q;
                    }
                }
            }
        }

        for i in 0..values.len() {
            let tt = values[i] + zt;
            let (v, ex) = if self.exercise {
                apply_stopping(tt, self.penalty[i])
            } else {
                (tt, false)
            };
            values[i] = v;
            exercise[i] = ex;
        }
    }

    /// Fills `values` with `min_k (c + continuation)` *without* the node
    /// spread term.
    fn risk_neutral(&self, rows: &[&[f64]; 5], values: &mut [f64], next_idx: &mut [u16]) {
        let p = &self.probs;
        let mean: Vec<f64> = (0..values.len())
            .map(|k| {
                if rows.iter().any(|r| r[k].is_infinite()) {
                    INFINITE_COST
                } else {
                    p[0] * rows[0][k] + p[1] * rows[1][k] + p[2] * rows[2][k] + p[3] * rows[3][k] + p[4] * rows[4][k]
                }
            })
            .collect();
        for i in 0..values.len() {
            let mut best = INFINITE_COST;
            let mut arg = i;
            for (k, e) in mean.iter().enumerate().take(self.upper(i) + 1) {
                let v = self.cost[i.abs_diff(k)] + e;
                if v < best {
                    best = v;
                    arg = k;
                }
            }
            values[i] = best;
            next_idx[i] = arg as u16;
        }
    }

    fn scaled_product(
        &self,
        t: &ProductTables,
        rows: &[&[f64]; 5],
        mref: f64,
        values: &mut [f64],
        next_idx: &mut [u16],
    ) {
        let g = self.gamma;
        let len = values.len();
        let m = self.grid.steps;
        let f: [Vec<f64>; 5] = std::array::from_fn(|j| {
            rows[j]
                .iter()
                .map(|&x| if x.is_infinite() { INFINITE_COST } else { (g * (x - mref)).exp() })
                .collect()
        });
        for i in 0..len {
            let w = &t.w[i];
            let cx = &t.cexp[m - i..];
            let mut best = INFINITE_COST;
            let mut arg = usize::MAX;
            for k in 0..=self.upper(i) {
                let s = w[0] * f[0][k] + w[1] * f[1][k] + w[2] * f[2][k] + w[3] * f[3][k] + w[4] * f[4][k];
                let v = cx[k] * s;
                if v < best {
                    best = v;
                    arg = k;
                }
            }
            if arg == usize::MAX {
                values[i] = INFINITE_COST;
                next_idx[i] = i as u16;
            } else {
                let s = w[0] * f[0][arg] + w[1] * f[1][arg] + w[2] * f[2][arg] + w[3] * f[3][arg] + w[4] * f[4][arg];
                values[i] = self.cost[i.abs_diff(arg)] + mref + s.ln() / g;
                next_idx[i] = arg as u16;
            }
        }
    }

    fn pruned_lse(&self, rows: &[&[f64]; 5], values: &mut [f64], next_idx: &mut [u16]) {
        let g = self.gamma;
        for i in 0..values.len() {
            let bi = self.b[i];
            let mut best = INFINITE_COST;
            let mut arg = i;
            for k in 0..=self.upper(i) {
                let mut x = [0.0; 5];
                let mut mx = f64::NEG_INFINITY;
                let mut jm = 0;
                for j in 0..5 {
                    x[j] = (j as f64 - 2.0) * bi + rows[j][k];
                    if x[j] > mx {
                        mx = x[j];
                        jm = j;
                    }
                }
                if mx.is_infinite() {
                    continue;
                }
                let base = self.cost[i.abs_diff(k)] + mx;
                if base + self.log_p_over_gamma[jm] > best {
                    continue;
                }
                let s: f64 = (0..5).map(|j| self.probs[j] * (g * (x[j] - mx)).exp()).sum();
                let v = base + s.ln() / g;
                if v < best {
                    best = v;
                    arg = k;
                }
            }
            values[i] = best;
            next_idx[i] = arg as u16;
        }
    }

    /// Golden-section search between the grid neighbours of `k`, with the
    /// continuation linear in `q~`. Returns the off-grid point and its value
    /// (without the node spread term) when it beats the grid value.
    fn refine_local(
        &self,
        rows: &[&[f64]; 5],
        z: f64,
        zt: f64,
        i: usize,
        k: usize,
        grid_value: f64,
    ) -> Option<(f64, f64)> {
        let lo_k = k.saturating_sub(1);
        let hi_k = (k + 1).min(self.upper(i));
        if hi_k <= lo_k {
            return None;
        }
        let q = self.grid.value(i);
        let objective = |qt: f64| {
            let (a, b, s) = self.grid.locate(qt);
            super::stage_objective(self.models, self.n, z, q, qt, |j| {
                crate::numerics::lerp(rows[j][a], rows[j][b], s)
            }) - zt
        };
        let (mut a, mut b) = (self.grid.value(lo_k), self.grid.value(hi_k));
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = objective(x1);
        let mut f2 = objective(x2);
        for _ in 0..60 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = objective(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = objective(x2);
            }
        }
        let (qt, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        (v < grid_value).then_some((qt, v))
    }
}

impl ProductTables {
    fn build(gamma: f64, probs: &[f64; 5], b: &[f64], cost: &[f64]) -> Option<Self> {
        let m = cost.len() - 1;
        let cmax = cost.iter().copied().fold(0.0, f64::max);
        let cmid = 0.5 * cmax;
        let bmax = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let level_span = gamma * cmid + 2.0 * gamma * bmax + 12f64.ln();
        if !level_span.is_finite() || level_span >= PRODUCT_EXP_LIMIT {
            return None;
        }
        let w = b
            .iter()
            .map(|bi| std::array::from_fn(|j| probs[j] * (gamma * (j as f64 - 2.0) * bi).exp()))
            .collect();
        let cexp = (0..=2 * m)
            .map(|d| (gamma * (cost[d.abs_diff(m)] - cmid)).exp())
            .collect();
        Some(ProductTables {
            w,
            cexp,
            node_budget: PRODUCT_EXP_LIMIT - level_span,
        })
    }
}

/// Min and max of the continuation over inventories feasible on every branch.
fn feasible_range(rows: &[&[f64]; 5]) -> (f64, f64) {
    let mut lo = INFINITE_COST;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..rows[0].len() {
        if rows.iter().all(|r| r[k].is_finite()) {
            for r in rows {
                lo = lo.min(r[k]);
                hi = hi.max(r[k]);
            }
        }
    }
    (lo, hi)
}
