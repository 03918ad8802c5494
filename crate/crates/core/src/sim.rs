//! Price paths and policy playback.
//!
//! Playback follows the stored policy on lattice paths. On paths that leave
//! the lattice (Gaussian or external prices, or any path with permanent
//! impact) each day's decision is re-optimized with the continuation
//! interpolated in `zeta`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contract::{MarketModel, Models};
use crate::error::{AsrError, Result};
use crate::impact::{impact_F, permanent_dynamics_step, sample_intraday_noise, stage_value_permanent, MarketState, PermanentImpactModel};
use crate::lattice::zeta_of;
use crate::numerics::pairwise_sum;
use crate::solver::{self, apply_stopping, stage_value_at, Policy, PriceResult, SolveConfig, SolveMode, ValueSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathSource {
    LatticePentanomial,
    Gaussian,
    External,
}

/// Exogenous part of a price path: `S_0` and the innovations `eps_1..eps_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub source: PathSource,
    pub initial_price: f64,
    /// `eps[n - 1] = eps_n`.
    pub eps: Vec<f64>,
    /// Intraday noise paired with each innovation.
    pub eps_prime: Vec<f64>,
}

impl PricePath {
    pub fn from_innovations(source: PathSource, initial_price: f64, eps: Vec<f64>) -> Self {
        let eps_prime = vec![0.0; eps.len()];
        PricePath {
            source,
            initial_price,
            eps,
            eps_prime,
        }
    }

    pub fn horizon(&self) -> usize {
        self.eps.len()
    }

    /// Prices `S_0..=S_N` without impact.
    pub fn prices(&self, market: &MarketModel) -> Vec<f64> {
        let sv = market.step_vol();
        let mut s = Vec::with_capacity(self.eps.len() + 1);
        s.push(self.initial_price);
        for e in &self.eps {
            let last = *s.last().unwrap();
            s.push(last + sv * e);
        }
        s
    }

    /// Running averages `A_1..=A_N` of the given prices (index `n - 1`).
    pub fn averages(prices: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(prices.len().saturating_sub(1));
        let mut a = 0.0;
        for (n, s) in prices.iter().enumerate().skip(1) {
            a = ((n - 1) as f64 * a + s) / n as f64;
            out.push(a);
        }
        out
    }

    /// Node index `zeta_n` for `n = 1..=N`, when every innovation is a
    /// lattice move.
    pub fn lattice_zetas(&self) -> Option<Vec<i64>> {
        let mut out = Vec::with_capacity(self.eps.len());
        let mut zeta = 0i64;
        out.push(zeta);
        for (idx, e) in self.eps.iter().enumerate().skip(1) {
            let n = idx as i64;
            if e.fract() != 0.0 || e.abs() > 2.0 {
                return None;
            }
            zeta += n * (*e as i64 + 2);
            out.push(zeta);
        }
        Some(out)
    }
}

fn draw_pentanomial<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // p = (1, 2, 6, 2, 1) / 12 on twelve equally likely outcomes
    match rng.random_range(0u32..12) {
        0 => -2.0,
        1 | 2 => -1.0,
        3..=8 => 0.0,
        9 | 10 => 1.0,
        _ => 2.0,
    }
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Reproducible path of `horizon` days; `stream` separates paths of a batch.
pub fn gen_path(market: &MarketModel, horizon: usize, source: PathSource, seed: u64, stream: u64) -> Result<PricePath> {
    let mut rng = path_rng(seed, stream);
    let eps: Vec<f64> = match source {
        PathSource::LatticePentanomial => (0..horizon).map(|_| draw_pentanomial(&mut rng)).collect(),
        PathSource::Gaussian => (0..horizon)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect(),
        PathSource::External => {
            return Err(AsrError::invalid("source", "external paths are read from CSV"));
        }
    };
    let eps_prime = eps.iter().map(|e| sample_intraday_noise(*e, &mut rng)).collect();
    Ok(PricePath {
        source,
        initial_price: market.initial_price,
        eps,
        eps_prime,
    })
}

#[derive(Debug, Deserialize)]
struct PathRow {
    day: usize,
    price: f64,
}

/// Reads a `day,price` CSV. Days must be consecutive from 0 (or from 1, in
/// which case `S_0` is the market's initial price). Intraday noise is drawn
/// from `seed`.
pub fn read_path_csv<R: Read>(input: R, market: &MarketModel, horizon: usize, seed: u64) -> Result<PricePath> {
    let mut reader = csv::Reader::from_reader(input);
    let rows: Vec<PathRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    let first = rows.first().map(|r| r.day).unwrap_or(0);
    let mut prices = Vec::with_capacity(horizon + 1);
    if first == 1 {
        prices.push(market.initial_price);
    } else if first != 0 {
        return Err(AsrError::invalid("path.day", "days must start at 0 or 1"));
    }
    for (expected, row) in (first..).zip(&rows) {
        if row.day != expected {
            return Err(AsrError::invalid("path.day", format!("expected day {expected}, found {}", row.day)));
        }
        if !row.price.is_finite() {
            return Err(AsrError::invalid("path.price", format!("non-finite price on day {}", row.day)));
        }
        prices.push(row.price);
    }
    if prices.len() != horizon + 1 {
        return Err(AsrError::Dimension(format!(
            "path covers {} days, contract has {horizon}",
            prices.len() - 1
        )));
    }
    let sv = market.step_vol();
    let eps: Vec<f64> = prices.windows(2).map(|w| (w[1] - w[0]) / sv).collect();
    let mut rng = path_rng(seed, 0);
    let eps_prime = eps.iter().map(|e| sample_intraday_noise(*e, &mut rng)).collect();
    Ok(PricePath {
        source: PathSource::External,
        initial_price: prices[0],
        eps,
        eps_prime,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: usize,
    #[serde(rename = "S")]
    pub price: f64,
    #[serde(rename = "A")]
    pub average: f64,
    #[serde(rename = "Z")]
    pub spread: f64,
    /// Inventory at the start of the day.
    pub q: f64,
    /// Trading rate over the following day (0 once delivered).
    pub v: f64,
    /// Cash spent so far, including the delivery purchase on the delivery day.
    #[serde(rename = "X")]
    pub cash: f64,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionRecord {
    pub days: Vec<DayRecord>,
    pub delivery_day: usize,
    /// `Q A - X - q S - l(q)` at delivery (with `- F(0) + F(q)` under
    /// permanent impact), `X` taken before the delivery purchase.
    pub objective: f64,
    /// Cost of each day's trade, `X_{n+1} - X_n`.
    pub daily_spend: Vec<f64>,
}

impl ExecutionRecord {
    pub fn inventories(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.q).collect()
    }
}

/// Everything playback needs besides the path.
pub struct Player<'a> {
    pub models: &'a Models,
    pub config: &'a SolveConfig,
    pub surface: &'a ValueSurface,
    pub policy: &'a Policy,
    pub impact: Option<&'a PermanentImpactModel>,
    first: PriceResult,
}

impl<'a> Player<'a> {
    pub fn new(
        models: &'a Models,
        config: &'a SolveConfig,
        surface: &'a ValueSurface,
        policy: &'a Policy,
        impact: Option<&'a PermanentImpactModel>,
    ) -> Result<Self> {
        if surface.horizon != models.contract.horizon || policy.layers.len() != surface.layers.len() {
            return Err(AsrError::Dimension("surface, policy and models disagree on the horizon".into()));
        }
        let first = match (surface.mode, impact) {
            (SolveMode::Base, None) => solver::price(surface, models, config)?,
            (SolveMode::Permanent, Some(imp)) => crate::impact::price_permanent(surface, models, imp, config)?,
            _ => return Err(AsrError::invalid("mode", "impact model must be given exactly for permanent surfaces")),
        };
        Ok(Player {
            models,
            config,
            surface,
            policy,
            impact,
            first,
        })
    }

    fn delivery_extra(&self, q: f64) -> Result<f64> {
        match self.impact {
            Some(imp) => {
                let nominal = self.models.contract.nominal;
                Ok(impact_F(imp, nominal, 0.0)? - impact_F(imp, nominal, q)?)
            }
            None => Ok(0.0),
        }
    }

    /// `Theta~` and the chosen next index at real node coordinate `zeta`.
    fn reoptimize(&self, n: usize, zeta: f64, i: usize) -> Result<(f64, usize)> {
        let next = self.surface.layer(n + 1);
        let (v, k) = match self.impact {
            Some(imp) => stage_value_permanent(self.models, imp, self.config, n, zeta, i, next)?,
            None => stage_value_at(self.models, self.config, n, zeta, i, next)?,
        };
        Ok((v, k.unwrap_or(i)))
    }

    pub fn play(&self, path: &PricePath) -> Result<ExecutionRecord> {
        let models = self.models;
        let horizon = models.contract.horizon;
        if path.horizon() != horizon {
            return Err(AsrError::Dimension(format!(
                "path has {} days, contract has {horizon}",
                path.horizon()
            )));
        }
        let grid = self.surface.grid;
        let nominal = models.contract.nominal;
        let dt = models.market.dt;
        let sv = models.market.step_vol();
        let follow_policy = self.impact.is_none() && path.source == PathSource::LatticePentanomial;
        let lattice = if follow_policy { path.lattice_zetas() } else { None };
        let f0 = match self.impact {
            Some(imp) => impact_F(imp, nominal, 0.0)?,
            None => 0.0,
        };

        let mut state = MarketState {
            day: 0,
            price: path.initial_price,
            average: path.initial_price,
            inventory: nominal,
            cash: 0.0,
        };
        let mut i = grid.steps;
        let mut next_i = self.first.q1_index;
        let mut days = Vec::with_capacity(horizon + 1);
        let mut spend = Vec::with_capacity(horizon);
        let mut delivered_on = None;

        for n in 0..=horizon {
            let z = if n == 0 { 0.0 } else { (state.price - state.average) / sv };
            if n >= 1 {
                let can_stop = n == horizon || models.contract.is_exercise_date(n);
                let mut stop = n == horizon;
                if n < horizon {
                    let zeta_int = lattice.as_ref().map(|zs| zs[n - 1]);
                    let (tt, k) = match zeta_int {
                        Some(zeta) => {
                            let pol = self.policy.layer(n);
                            (None, pol.next_index(zeta, i))
                        }
                        None => {
                            let (v, k) = self.reoptimize(n, zeta_of(n, z), i)?;
                            (Some(v), k)
                        }
                    };
                    next_i = k;
                    if can_stop {
                        stop = match (zeta_int, tt) {
                            (Some(zeta), _) => self.policy.layer(n).exercises(zeta, i),
                            (None, Some(tt)) => apply_stopping(tt, models.terminal_penalty(grid.value(i)) + f0).1,
                            (None, None) => unreachable!(),
                        };
                    }
                }
                if stop {
                    let q = state.inventory;
                    let objective = nominal * state.average
                        - state.cash
                        - q * state.price
                        - models.terminal_penalty(q)
                        - self.delivery_extra(q)?;
                    let delivery_cost = q * state.price + self.delivery_extra(q)? + models.terminal_penalty(q);
                    days.push(DayRecord {
                        day: n,
                        price: state.price,
                        average: state.average,
                        spread: z,
                        q,
                        v: 0.0,
                        cash: state.cash + delivery_cost,
                        delivered: true,
                    });
                    delivered_on = Some((n, objective));
                    break;
                }
            }
            let q_next = grid.value(next_i);
            let v = (state.inventory - q_next) / dt;
            days.push(DayRecord {
                day: n,
                price: state.price,
                average: state.average,
                spread: z,
                q: state.inventory,
                v,
                cash: state.cash,
                delivered: false,
            });
            let eps = path.eps[n];
            let next_state = match self.impact {
                Some(imp) => {
                    let mut s = permanent_dynamics_step(&state, v, eps, path.eps_prime[n], models, imp)?;
                    s.inventory = q_next;
                    s
                }
                None => {
                    let price = state.price + sv * eps;
                    let cash = state.cash + price * v * dt + models.trade_cost(v * dt, n + 1);
                    MarketState {
                        day: n + 1,
                        price,
                        average: (n as f64 * state.average + price) / (n as f64 + 1.0),
                        inventory: q_next,
                        cash,
                    }
                }
            };
            spend.push(next_state.cash - state.cash);
            state = next_state;
            i = next_i;
        }
        let (delivery_day, objective) = delivered_on.expect("delivery happens by the last day");
        Ok(ExecutionRecord {
            days,
            delivery_day,
            objective,
            daily_spend: spend,
        })
    }
}

/// Plays the stored policy along one path.
pub fn playback(
    policy: &Policy,
    surface: &ValueSurface,
    path: &PricePath,
    models: &Models,
    config: &SolveConfig,
    impact: Option<&PermanentImpactModel>,
) -> Result<ExecutionRecord> {
    Player::new(models, config, surface, policy, impact)?.play(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub paths: usize,
    pub mean_objective: f64,
    pub mean_delivery_day: f64,
}

/// Generates and plays `paths` paths, path `k` on stream `k` of `seed`.
pub fn simulate_batch(
    player: &Player<'_>,
    source: PathSource,
    seed: u64,
    paths: usize,
) -> Result<(Vec<ExecutionRecord>, BatchSummary)> {
    let horizon = player.models.contract.horizon;
    let records = (0..paths as u64)
        .into_par_iter()
        .map(|k| {
            let path = gen_path(&player.models.market, horizon, source, seed, k)?;
            player.play(&path)
        })
        .collect::<Result<Vec<_>>>()?;
    let objectives: Vec<f64> = records.iter().map(|r| r.objective).collect();
    let days: Vec<f64> = records.iter().map(|r| r.delivery_day as f64).collect();
    let k = paths.max(1) as f64;
    let summary = BatchSummary {
        paths,
        mean_objective: pairwise_sum(&objectives) / k,
        mean_delivery_day: pairwise_sum(&days) / k,
    };
    Ok((records, summary))
}

/// Record as CSV: `day,S,A,Z,q,v,X,delivered`.
pub fn write_record_csv<W: Write>(out: W, record: &ExecutionRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for d in &record.days {
        w.serialize(d)?;
    }
    w.flush()?;
    Ok(())
}

/// Checks the pathwise identity
/// `Y_k - Y_n = sum_{j=n}^{k-1} sv((q_j - Q/(j+1)) eps_{j+1} - Q/(j+1) Z_j) + L_j`
/// with `Y = -Q A + X + q S`, for a strategy of rates `v[j]` applied from day
/// `start` (`>= 1`). Returns the largest `|lhs - rhs| / (1 + max(|Y_n|, |Y_k|))`.
pub fn lemma_y_check(path: &PricePath, rates: &[f64], start: usize, cash: f64, models: &Models) -> Result<f64> {
    let horizon = models.contract.horizon;
    if start < 1 || start > horizon || rates.len() < horizon - start || path.horizon() != horizon {
        return Err(AsrError::Dimension("strategy and path must cover days start..N".into()));
    }
    let nominal = models.contract.nominal;
    let dt = models.market.dt;
    let sv = models.market.step_vol();
    let s = path.prices(&models.market);
    let a = PricePath::averages(&s);
    let mut q = nominal;
    let mut x = cash;
    let y = |n: usize, x: f64, q: f64| -nominal * a[n - 1] + x + q * s[n];
    let y_start = y(start, x, q);
    let mut rhs = 0.0;
    let mut worst: f64 = 0.0;
    for j in start..horizon {
        let v = rates[j - start];
        let z = (s[j] - a[j - 1]) / sv;
        let share = nominal / (j as f64 + 1.0);
        let cost = models.trade_cost(v * dt, j + 1);
        rhs += sv * ((q - share) * path.eps[j] - share * z) + cost;
        x += s[j + 1] * v * dt + cost;
        q -= v * dt;
        let yk = y(j + 1, x, q);
        worst = worst.max(((yk - y_start) - rhs).abs() / (1.0 + yk.abs().max(y_start.abs())));
    }
    Ok(worst)
}

/// `Z_n` along the exogenous prices, `n = 1..=N`.
pub fn spreads(path: &PricePath, market: &MarketModel) -> Vec<f64> {
    let s = path.prices(market);
    let a = PricePath::averages(&s);
    let sv = market.step_vol();
    (1..s.len()).map(|n| (s[n] - a[n - 1]) / sv).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::VolumeCurve;
    use crate::lattice::{max_zeta, z_of};

    fn small(horizon: usize, gamma: f64) -> Models {
        let mut m = Models::reference();
        m.contract.horizon = horizon;
        m.contract.nominal = 2e5;
        m.contract.exercise_dates = (horizon / 3..horizon).collect();
        m.market.volume = VolumeCurve::Flat(4e4);
        m.risk.gamma = gamma;
        m
    }

    #[test]
    fn same_seed_same_path() {
        let m = Models::reference();
        for source in [PathSource::LatticePentanomial, PathSource::Gaussian] {
            let a = gen_path(&m.market, 63, source, 7, 3).unwrap();
            let b = gen_path(&m.market, 63, source, 7, 3).unwrap();
            assert_eq!(a, b);
            let c = gen_path(&m.market, 63, source, 7, 4).unwrap();
            assert_ne!(a.eps, c.eps);
        }
    }

    #[test]
    fn zero_innovations_keep_price_flat() {
        let m = Models::reference();
        let p = PricePath::from_innovations(PathSource::LatticePentanomial, 45.0, vec![0.0; 63]);
        let s = p.prices(&m.market);
        assert!(s.iter().all(|x| *x == 45.0));
        assert!(spreads(&p, &m.market).iter().all(|z| *z == 0.0));
    }

    #[test]
    fn lattice_paths_stay_on_nodes() {
        let m = Models::reference();
        for k in 0..10_000u64 {
            let p = gen_path(&m.market, 63, PathSource::LatticePentanomial, 1, k).unwrap();
            let zetas = p.lattice_zetas().unwrap();
            let z = spreads(&p, &m.market);
            for (idx, zeta) in zetas.iter().enumerate() {
                let n = idx + 1;
                assert!((0..=max_zeta(n)).contains(zeta));
                if k < 100 {
                    assert!((z_of(n, *zeta) - z[idx]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn averages_follow_recursion() {
        let m = Models::reference();
        let p = gen_path(&m.market, 63, PathSource::Gaussian, 3, 0).unwrap();
        let s = p.prices(&m.market);
        let a = PricePath::averages(&s);
        assert_eq!(a[0], s[1]);
        for n in 1..63 {
            let rec = (n as f64 * a[n - 1] + s[n + 1]) / (n as f64 + 1.0);
            assert!((rec - a[n]).abs() <= 1e-12 * a[n].abs());
        }
    }

    #[test]
    fn pentanomial_draw_frequencies() {
        let mut rng = path_rng(5, 0);
        let mut counts = [0usize; 5];
        let total = 120_000;
        for _ in 0..total {
            counts[(draw_pentanomial(&mut rng) + 2.0) as usize] += 1;
        }
        for (c, p) in counts.iter().zip([1.0, 2.0, 6.0, 2.0, 1.0]) {
            let expected = total as f64 * p / 12.0;
            assert!((*c as f64 - expected).abs() < 5.0 * expected.sqrt());
        }
    }

    #[test]
    fn lemma_y_trivial_and_one_step() {
        let m = Models::reference();
        let p = PricePath::from_innovations(PathSource::Gaussian, 45.0, vec![0.0; 63]);
        assert_eq!(lemma_y_check(&p, &vec![0.0; 62], 63, 0.0, &m).unwrap(), 0.0);
        let mut eps = vec![0.0; 63];
        eps[0] = 1.3;
        eps[1] = -0.4;
        let p = PricePath::from_innovations(PathSource::Gaussian, 45.0, eps);
        let r = lemma_y_check(&p, &[1e5, 3e5, -2e4], 1, 0.0, &{
            let mut mm = m.clone();
            mm.contract.horizon = 63;
            mm
        });
        assert!(r.is_err());
        let rates = vec![2e5; 62];
        let r = lemma_y_check(&p, &rates, 1, 1e6, &m).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn zero_noise_risk_neutral_buys_monotonically() {
        let m = small(12, 0.0);
        let c = SolveConfig {
            inventory_steps: 20,
            ..Default::default()
        };
        let (s, pol) = solver::backward_solve(&m, &c).unwrap();
        let p = PricePath::from_innovations(PathSource::LatticePentanomial, 45.0, vec![0.0; 12]);
        let r = playback(&pol, &s, &p, &m, &c, None).unwrap();
        let q = r.inventories();
        assert!(q.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*q.last().unwrap(), 0.0);
        assert!(r.objective.is_finite());
    }

    #[test]
    fn delivery_only_on_allowed_days_and_budget_telescopes() {
        let m = small(12, 1e-5);
        let c = SolveConfig {
            inventory_steps: 20,
            ..Default::default()
        };
        let (s, pol) = solver::backward_solve(&m, &c).unwrap();
        let player = Player::new(&m, &c, &s, &pol, None).unwrap();
        for source in [PathSource::LatticePentanomial, PathSource::Gaussian] {
            let (records, summary) = simulate_batch(&player, source, 9, 50).unwrap();
            assert_eq!(summary.paths, 50);
            for r in &records {
                let d = r.delivery_day;
                assert!(d == 12 || m.contract.is_exercise_date(d));
                let last = r.days.last().unwrap();
                assert!(last.delivered);
                let delivery = last.q * last.price + m.terminal_penalty(last.q);
                let spent = pairwise_sum(&r.daily_spend);
                assert!((last.cash - delivery - spent).abs() <= 1e-9 * spent.abs().max(1.0));
                let expected = m.contract.nominal * last.average - spent - delivery;
                assert!((r.objective - expected).abs() <= 1e-9 * expected.abs().max(1.0));
                if source == PathSource::LatticePentanomial {
                    assert_eq!(last.q, 0.0);
                }
                for w in r.days.windows(2) {
                    if !w[1].delivered {
                        assert_eq!(w[1].q, w[0].q - w[0].v * m.market.dt);
                    }
                }
            }
        }
    }

    #[test]
    fn lattice_policy_and_reoptimization_agree_on_lattice_paths() {
        let m = small(10, 1e-5);
        let c = SolveConfig {
            inventory_steps: 16,
            ..Default::default()
        };
        let (s, pol) = solver::backward_solve(&m, &c).unwrap();
        let player = Player::new(&m, &c, &s, &pol, None).unwrap();
        for k in 0..30 {
            let p = gen_path(&m.market, 10, PathSource::LatticePentanomial, 2, k).unwrap();
            let on = player.play(&p).unwrap();
            let mut off = p.clone();
            off.source = PathSource::Gaussian;
            let re = player.play(&off).unwrap();
            assert_eq!(on.delivery_day, re.delivery_day);
            assert_eq!(on.inventories(), re.inventories());
        }
    }

    #[test]
    fn straight_line_reaches_zero() {
        let m = small(12, 0.0);
        let p = PricePath::from_innovations(PathSource::Gaussian, 45.0, vec![0.5; 12]);
        let rate = m.contract.nominal / 12.0;
        let mut q = m.contract.nominal;
        for _ in 0..12 {
            q -= rate * m.market.dt;
        }
        assert!(q.abs() < 1e-6);
        assert!(lemma_y_check(&p, &vec![rate; 11], 1, 0.0, &m).unwrap() < 1e-12);
    }

    #[test]
    fn record_csv_header_and_rows() {
        let m = small(6, 1e-5);
        let c = SolveConfig {
            inventory_steps: 6,
            ..Default::default()
        };
        let (s, pol) = solver::backward_solve(&m, &c).unwrap();
        let p = gen_path(&m.market, 6, PathSource::LatticePentanomial, 1, 0).unwrap();
        let r = playback(&pol, &s, &p, &m, &c, None).unwrap();
        let mut buf = Vec::new();
        write_record_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("day,S,A,Z,q,v,X,delivered\n"));
        assert_eq!(text.lines().count(), r.days.len() + 1);
    }

    #[test]
    fn external_csv_round_trip() {
        let m = small(3, 1e-5);
        let csv = "day,price\n0,45\n1,45.6\n2,44.4\n3,45\n";
        let p = read_path_csv(csv.as_bytes(), &m.market, 3, 0).unwrap();
        assert_eq!(p.initial_price, 45.0);
        assert!((p.eps[0] - 1.0).abs() < 1e-12 && (p.eps[1] + 2.0).abs() < 1e-12);
        let no_zero = "day,price\n1,45.6\n2,44.4\n3,45\n";
        assert_eq!(read_path_csv(no_zero.as_bytes(), &m.market, 3, 0).unwrap().eps, p.eps);
        assert!(read_path_csv("day,price\n0,45\n2,45\n".as_bytes(), &m.market, 3, 0).is_err());
        assert!(read_path_csv("day,price\n0,45\n1,45\n".as_bytes(), &m.market, 3, 0).is_err());
    }
}
