//! Damped fixed-point iteration on the mean-quote path.
//!
//! Each pass solves the value system backward against the current mean quote,
//! evolves the population forward under the resulting quotes, aggregates a new
//! mean quote and blends it with the old one:
//!
//! ```text
//! δ̄⁽ⁿ⁺¹⁾ = γ δ̄⁽ⁿ⁾ + (1 − γ) mean_quote(δ*(δ̄⁽ⁿ⁾), P(δ*(δ̄⁽ⁿ⁾)))
//! ```
//!
//! Iteration stops once the RMS difference of successive iterates is at most `tol`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::{backward_solve, QuoteSurface, ValueSurface};
use crate::model::ModelParams;
use crate::population::{forward_evolve, mean_quote, MeanQuotePath, PopulationFlow};

/// `10^{-12.5}`
pub fn default_tolerance() -> f64 {
    10f64.powf(-12.5)
}

/// Starting mean-quote path.
#[derive(Debug, Clone, PartialEq)]
pub enum InitRule {
    /// Constant at the terminal quote of a full-inventory agent,
    /// `1/(κ+β) − α(2 q_max − 1)`, clamped to the quote bounds.
    TerminalQuote,
    Constant(f64),
    Path(MeanQuotePath),
}

impl InitRule {
    pub fn path(&self, p: &ModelParams) -> MeanQuotePath {
        match self {
            InitRule::TerminalQuote => {
                let k = p.intensity.kappa + p.intensity.beta;
                let q = p.inventory.q_max as f64;
                let v = 1.0 / k - p.penalty.alpha_pos * (2.0 * q - 1.0);
                MeanQuotePath::constant(&p.grid, p.bounds.clamp(v))
            }
            InitRule::Constant(v) => MeanQuotePath::constant(&p.grid, *v),
            InitRule::Path(path) => path.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Weight kept on the previous iterate, in `[0, 1)`.
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitRule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            tol: default_tolerance(),
            max_iter: 10_000,
            init: InitRule::TerminalQuote,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidSettings(format!("gamma = {} not in [0, 1)", self.gamma)));
        }
        // tol = 0 is allowed: it asks for an exact fixed point.
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidSettings(format!("tol = {} must be ≥ 0", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidSettings("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Result of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    /// Mean quote aggregated from `quotes` and `population`.
    pub delta_bar: MeanQuotePath,
    /// The iterate the surfaces were solved against. Differs from
    /// `delta_bar` by at most `tol / (1 − γ)` in RMS once converged.
    pub assumed_delta_bar: MeanQuotePath,
    pub quotes: QuoteSurface,
    pub values: ValueSurface,
    pub population: PopulationFlow,
    pub iterations: usize,
    /// RMS distance between successive damped iterates.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl EquilibriumSolution {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Root-mean-square of the pointwise difference of two paths.
pub fn residual(a: &MeanQuotePath, b: &MeanQuotePath) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((ss / a.len() as f64).sqrt())
}

struct Pass {
    values: ValueSurface,
    quotes: QuoteSurface,
    population: PopulationFlow,
    mean: MeanQuotePath,
}

fn one_pass(delta_bar: &MeanQuotePath, p: &ModelParams) -> Result<Pass> {
    let (values, quotes) = backward_solve(delta_bar, p)?;
    let population = forward_evolve(&quotes, delta_bar, p)?;
    let mean = mean_quote(&quotes, &population, p);
    Ok(Pass {
        values,
        quotes,
        population,
        mean,
    })
}

/// The undamped best-response map: mean quote induced when every agent
/// optimizes against `delta_bar`.
pub fn best_response_mean(delta_bar: &MeanQuotePath, p: &ModelParams) -> Result<MeanQuotePath> {
    Ok(one_pass(delta_bar, p)?.mean)
}

/// Runs the damped iteration until the residual reaches `s.tol` or `s.max_iter` passes.
///
/// Non-convergence is not an error: the last pass is returned with
/// `converged = false`.
pub fn solve_equilibrium(p: &ModelParams, s: &SolverSettings) -> Result<EquilibriumSolution> {
    p.validate()?;
    s.validate()?;
    let mut current = s.init.path(p);
    if current.len() != p.grid.n_points() {
        return Err(Error::GridMismatch {
            expected: p.grid.n_points(),
            found: current.len(),
        });
    }

    let mut history = Vec::new();
    for iter in 1..=s.max_iter {
        let pass = one_pass(&current, p)?;
        let next = current.blend(s.gamma, &pass.mean);
        let r = residual(&next, &current)?;
        history.push(r);
        let converged = r <= s.tol;
        if converged || iter == s.max_iter {
            return Ok(EquilibriumSolution {
                delta_bar: pass.mean,
                assumed_delta_bar: current,
                quotes: pass.quotes,
                values: pass.values,
                population: pass.population,
                iterations: iter,
                residual_history: history,
                converged,
            });
        }
        current = next;
    }
    unreachable!("max_iter is positive")
}

/// Outcome of one randomized trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
    pub error: Option<String>,
}

/// Across-trial statistics of the converged mean quote.
#[derive(Debug, Clone)]
pub struct RobustnessReport {
    pub mean: Vec<f64>,
    /// Sample standard deviation over `√n`, per grid point.
    pub std_error: Vec<f64>,
    pub trials: Vec<TrialOutcome>,
    /// Number of trials that entered the statistics.
    pub n_used: usize,
}

impl RobustnessReport {
    pub fn max_std_error(&self) -> f64 {
        self.std_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Initial path for trial `trial`: independent uniform values on `[-1, 2]`.
pub fn random_init(p: &ModelParams, seed: u64, trial: u64) -> MeanQuotePath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    MeanQuotePath::new(
        (0..p.grid.n_points())
            .map(|_| rng.random_range(-1.0..=2.0))
            .collect(),
    )
}

/// Solves from `n_trials` random initial paths and reports the spread of the results.
pub fn robustness_study(
    p: &ModelParams,
    s: &SolverSettings,
    n_trials: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    if n_trials < 2 {
        return Err(Error::InvalidArgument(format!(
            "robustness study needs at least 2 trials, got {n_trials}"
        )));
    }
    let inits = (0..n_trials as u64).map(|t| random_init(p, seed, t)).collect();
    robustness_from_inits(p, s, inits)
}

/// Same as [`robustness_study`] with caller-supplied initial paths.
pub fn robustness_from_inits(
    p: &ModelParams,
    s: &SolverSettings,
    inits: Vec<MeanQuotePath>,
) -> Result<RobustnessReport> {
    if inits.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 initial paths".into()));
    }
    let runs: Vec<(TrialOutcome, Option<MeanQuotePath>)> = inits
        .into_par_iter()
        .map(|init| {
            let settings = SolverSettings {
                init: InitRule::Path(init),
                ..s.clone()
            };
            match solve_equilibrium(p, &settings) {
                Ok(sol) => {
                    let outcome = TrialOutcome {
                        converged: sol.converged,
                        iterations: sol.iterations,
                        final_residual: sol.final_residual(),
                        error: None,
                    };
                    let path = sol.converged.then_some(sol.delta_bar);
                    (outcome, path)
                }
                Err(e) => (
                    TrialOutcome {
                        converged: false,
                        iterations: 0,
                        final_residual: f64::NAN,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let n_points = p.grid.n_points();
    let paths: Vec<&MeanQuotePath> = runs.iter().filter_map(|(_, x)| x.as_ref()).collect();
    let n = paths.len();
    let mut mean = vec![f64::NAN; n_points];
    let mut std_error = vec![f64::NAN; n_points];
    if n > 0 {
        for j in 0..n_points {
            let m = paths.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            mean[j] = m;
            if n > 1 {
                let var = paths.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                std_error[j] = (var / n as f64).sqrt();
            }
        }
    }
    Ok(RobustnessReport {
        mean,
        std_error,
        trials: runs.into_iter().map(|(o, _)| o).collect(),
        n_used: n,
    })
}
