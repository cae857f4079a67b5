//! Monte Carlo and closed-form checks of the solvers.
//!
//! A representative agent is simulated against the fixed equilibrium mean
//! quote. Sales follow per-step thinning on the solver grid: in step
//! `[t_j, t_{j+1})` an agent holding `q` sells with probability
//! `λ(f(t_j, q), δ̄_j) dt`. This chain has exactly the law propagated by
//! [`forward_evolve`](crate::population::forward_evolve), and its expected
//! objective matches the backward value solve up to `O(dt)`.
//!
//! Sampling uses the equivalent first-passage form: with `E ~ Exp(1)` the next
//! sale happens in the first step where the accumulated `−ln(1 − λ dt)` exceeds
//! `E`. Looking this up in a prefix-sum table costs `O(log n)` per sale instead
//! of one uniform draw per step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::model::{Intensity, ModelParams};
use crate::table::LevelTable;

/// Mean and standard error of the agent objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√n_paths`; NaN for a single path.
    pub std_error: f64,
    pub n_paths: usize,
}

impl PerformanceEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_error,
            n_paths: n,
        }
    }
}

/// Empirical inventory distribution at one grid index, ordered from `q_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub index: usize,
    pub time: f64,
    pub proportions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub estimate: PerformanceEstimate,
    /// Snapshots at `T/4, T/2, 3T/4, T`; the last one is the terminal histogram.
    pub checkpoints: Vec<Histogram>,
}

impl SimulationReport {
    pub fn terminal_histogram(&self) -> &[f64] {
        &self.checkpoints.last().expect("checkpoints").proportions
    }
}

/// Grid indices of the checkpoints `T/4, T/2, 3T/4, T`.
pub fn checkpoint_indices(p: &ModelParams) -> [usize; 4] {
    let g = &p.grid;
    [0.25, 0.5, 0.75, 1.0].map(|f| g.index_of(f * g.horizon))
}

struct Sampler<'a> {
    p: &'a ModelParams,
    quotes: LevelTable,
    /// Prefix sums of `−ln(1 − λ dt)` per quoting level.
    hazard: LevelTable,
    checkpoints: [usize; 4],
}

struct PathOutcome {
    objective: f64,
    levels_at_checkpoints: [i32; 4],
}

impl<'a> Sampler<'a> {
    fn new(
        eq: &EquilibriumSolution,
        p: &'a ModelParams,
        strategy: &dyn Fn(i32, usize) -> f64,
    ) -> Result<Self> {
        let inv = p.inventory;
        let n = p.grid.n_steps;
        let dt = p.grid.dt();
        if eq.assumed_delta_bar.len() != p.grid.n_points() {
            return Err(Error::GridMismatch {
                expected: p.grid.n_points(),
                found: eq.assumed_delta_bar.len(),
            });
        }
        let mut quotes = LevelTable::filled(inv.q_min + 1, inv.q_max, n + 1, 0.0);
        let mut hazard = LevelTable::filled(inv.q_min + 1, inv.q_max, n + 1, 0.0);
        for q in inv.quoting_levels() {
            let mut acc = 0.0;
            for j in 0..n {
                let delta = strategy(q, j);
                quotes.set(q, j, delta);
                let prob = p.intensity.rate(delta, eq.assumed_delta_bar[j]) * dt;
                if prob.is_nan() || prob >= 1.0 {
                    return Err(Error::Unstable {
                        time: p.grid.time(j),
                        level: q,
                        product: prob,
                    });
                }
                acc += -(-prob).ln_1p();
                hazard.set(q, j + 1, acc);
            }
        }
        Ok(Self {
            p,
            quotes,
            hazard,
            checkpoints: checkpoint_indices(p),
        })
    }

    fn run_path(&self, seed: u64, path: u64) -> PathOutcome {
        let p = self.p;
        let inv = p.inventory;
        let n = p.grid.n_steps;
        let dt = p.grid.dt();

        let mut clock = ChaCha8Rng::seed_from_u64(seed);
        clock.set_stream(2 * path);
        let mut prices = ChaCha8Rng::seed_from_u64(seed);
        prices.set_stream(2 * path + 1);

        // Reference price sampled exactly at the grid indices where it is needed.
        let mut price = p.s0;
        let mut price_at = 0usize;
        let mut price_to = |to: usize, price: &mut f64| {
            let z: f64 = prices.sample(StandardNormal);
            *price += p.sigma * ((to - price_at) as f64 * dt).sqrt() * z;
            price_at = to;
        };

        let mut q = inv.q_max;
        let mut since = 0usize;
        let mut cash = p.x0;
        let mut running = 0.0;
        let mut levels = [inv.q_max; 4];
        let mut sojourn = |level: i32, from: usize, to: usize, levels: &mut [i32; 4]| {
            let lf = level as f64;
            running += (to - from) as f64 * dt * p.penalty.phi(level) * lf * lf;
            for (slot, &idx) in levels.iter_mut().zip(&self.checkpoints) {
                if (from..to).contains(&idx) || idx == n && to == n {
                    *slot = level;
                }
            }
        };

        while q > inv.q_min {
            let threshold: f64 = clock.sample(Exp1);
            let base = self.hazard.get(q, since);
            // First grid index k > since whose accumulated hazard exceeds the threshold.
            let (mut lo, mut hi) = (since + 1, n + 1);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if self.hazard.get(q, mid) - base > threshold {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            if lo > n {
                break;
            }
            price_to(lo, &mut price);
            cash += price + self.quotes.get(q, lo - 1);
            sojourn(q, since, lo, &mut levels);
            q -= 1;
            since = lo;
        }
        sojourn(q, since, n, &mut levels);
        price_to(n, &mut price);

        let qf = q as f64;
        PathOutcome {
            objective: cash + qf * price - p.penalty.alpha(q) * qf * qf - running,
            levels_at_checkpoints: levels,
        }
    }
}

fn run_simulation(
    eq: &EquilibriumSolution,
    p: &ModelParams,
    n_paths: usize,
    seed: u64,
    strategy: &dyn Fn(i32, usize) -> f64,
) -> Result<SimulationReport> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let sampler = Sampler::new(eq, p, strategy)?;
    let outcomes: Vec<PathOutcome> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sampler.run_path(seed, i))
        .collect();

    let objectives: Vec<f64> = outcomes.iter().map(|o| o.objective).collect();
    let inv = p.inventory;
    let checkpoints = sampler
        .checkpoints
        .iter()
        .enumerate()
        .map(|(c, &index)| {
            let mut counts = vec![0usize; inv.n_levels()];
            for o in &outcomes {
                counts[inv.offset(o.levels_at_checkpoints[c])] += 1;
            }
            Histogram {
                index,
                time: p.grid.time(index),
                proportions: counts
                    .into_iter()
                    .map(|k| k as f64 / n_paths as f64)
                    .collect(),
            }
        })
        .collect();
    Ok(SimulationReport {
        estimate: PerformanceEstimate::from_samples(&objectives),
        checkpoints,
    })
}

/// Simulates `n_paths` agents using the equilibrium quotes, or `strategy_override(q, j)`.
///
/// The objective of each path is
/// `X_T + Q_T (S_T − α(Q_T) Q_T) − Σ φ(Q) Q² dt`.
pub fn simulate_agent(
    eq: &EquilibriumSolution,
    p: &ModelParams,
    n_paths: usize,
    seed: u64,
    strategy_override: Option<&dyn Fn(i32, usize) -> f64>,
) -> Result<SimulationReport> {
    match strategy_override {
        Some(f) => run_simulation(eq, p, n_paths, seed, f),
        None => run_simulation(eq, p, n_paths, seed, &|q, j| eq.quotes.get(q, j)),
    }
}

/// Value the agent should expect from the equilibrium strategy, `x₀ + q_max s₀ + h[q_max](0)`.
pub fn predicted_value(eq: &EquilibriumSolution, p: &ModelParams) -> f64 {
    p.x0 + p.inventory.q_max as f64 * p.s0 + eq.values.get(p.inventory.q_max, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseRow {
    pub shift: f64,
    /// `Err` when the shifted quotes leave the admissible bounds.
    pub estimate: std::result::Result<PerformanceEstimate, String>,
}

impl BestResponseRow {
    /// Gain of this row over `baseline`, in units of the combined standard error.
    pub fn z_gain(&self, baseline: &PerformanceEstimate) -> Option<f64> {
        let e = self.estimate.as_ref().ok()?;
        let se = (e.std_error.powi(2) + baseline.std_error.powi(2)).sqrt();
        Some((e.mean - baseline.mean) / se)
    }
}

/// Simulates the equilibrium quotes shifted by each constant in `shifts`,
/// all with the same seed so the rows share random numbers.
pub fn best_response_check(
    eq: &EquilibriumSolution,
    p: &ModelParams,
    shifts: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<BestResponseRow>> {
    let mut rows = Vec::with_capacity(shifts.len());
    for &shift in shifts {
        let out_of_bounds = eq.quotes.iter().any(|f| !p.bounds.contains(f + shift));
        let estimate = if out_of_bounds {
            Err(format!(
                "shift {shift} moves quotes outside [{}, {}]",
                p.bounds.lower, p.bounds.upper
            ))
        } else {
            let strategy = |q: i32, j: usize| eq.quotes.get(q, j) + shift;
            Ok(run_simulation(eq, p, n_paths, seed, &strategy)?.estimate)
        };
        rows.push(BestResponseRow { shift, estimate });
    }
    Ok(rows)
}

/// Law at time `t` of a pure-death process started at `q_max` with constant `rate`,
/// ordered from level 0 upwards.
pub fn pure_death_oracle(rate: f64, t: f64, q_max: u32) -> Vec<f64> {
    let mean = rate * t;
    let mut out = vec![0.0; q_max as usize + 1];
    let mut pmf = (-mean).exp();
    let mut total = 0.0;
    for k in 0..q_max as usize {
        out[q_max as usize - k] = pmf;
        total += pmf;
        pmf *= mean / (k + 1) as f64;
    }
    out[0] = (1.0 - total).max(0.0);
    out
}

/// Empirical against Kolmogorov-forward distribution at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointComparison {
    pub index: usize,
    pub time: f64,
    pub empirical: Vec<f64>,
    pub theoretical: Vec<f64>,
    pub max_abs_deviation: f64,
}

/// Compares simulated inventory histograms with the population flow at
/// `T/4, T/2, 3T/4, T`.
pub fn population_vs_montecarlo(
    eq: &EquilibriumSolution,
    p: &ModelParams,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<CheckpointComparison>> {
    let report = simulate_agent(eq, p, n_paths, seed, None)?;
    Ok(report
        .checkpoints
        .into_iter()
        .map(|h| {
            let theoretical = eq.population.column(h.index).to_vec();
            let max_abs_deviation = h
                .proportions
                .iter()
                .zip(&theoretical)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            CheckpointComparison {
                index: h.index,
                time: h.time,
                empirical: h.proportions,
                theoretical,
                max_abs_deviation,
            }
        })
        .collect())
}
