//! Backward solver for the excess-value ODE system and the clamped feedback quotes.
//!
//! With the ansatz `H = x + q s + h_q(t)` the value of an agent holding `q`
//! units solves, for every admissible level,
//!
//! ```text
//! ∂_t h_q = φ(q) q² − λ(δ*, δ̄_t) (δ* + h_{q−1} − h_q) 𝟙{q > q_min}
//! h_q(T)  = −α(q) q²
//! δ*      = min{ b_hi, max{ 1/(κ+β) + h_q − h_{q−1}, b_lo } }
//! ```
//!
//! The single-agent reference model is the same system with `β = 0`, and the
//! overselling model only widens the level range below zero.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::model::{Intensity, ModelParams};
use crate::population::MeanQuotePath;
use crate::table::LevelTable;

/// Excess values `h[q][j]` for every admissible level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface(LevelTable);

impl ValueSurface {
    pub fn from_table(table: LevelTable) -> Self {
        Self(table)
    }

    pub fn into_table(self) -> LevelTable {
        self.0
    }
}

impl Deref for ValueSurface {
    type Target = LevelTable;

    fn deref(&self) -> &LevelTable {
        &self.0
    }
}

/// Feedback quotes `f[q][j]` for the quoting levels `q_min+1..=q_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSurface(LevelTable);

impl QuoteSurface {
    pub fn from_table(table: LevelTable) -> Self {
        Self(table)
    }

    /// Builds a surface over the quoting levels of `p` from `quote(q, j)`.
    pub fn from_fn(p: &ModelParams, mut quote: impl FnMut(i32, usize) -> f64) -> Self {
        let inv = p.inventory;
        let n = p.grid.n_points();
        let mut t = LevelTable::filled(inv.q_min + 1, inv.q_max, n, 0.0);
        for j in 0..n {
            for q in inv.quoting_levels() {
                t.set(q, j, quote(q, j));
            }
        }
        Self(t)
    }

    pub fn into_table(self) -> LevelTable {
        self.0
    }
}

impl Deref for QuoteSurface {
    type Target = LevelTable;

    fn deref(&self) -> &LevelTable {
        &self.0
    }
}

/// `−α(q) q²` for each admissible level, ordered from `q_min` upwards.
pub fn terminal_values(p: &ModelParams) -> Vec<f64> {
    p.inventory
        .levels()
        .map(|q| {
            let qf = q as f64;
            -p.penalty.alpha(q) * qf * qf
        })
        .collect()
}

/// Clamped maximizer of `λ(δ, δ̄) (δ + h_{q−1} − h_q)`. Independent of `δ̄`.
pub fn optimal_quote(h_q: f64, h_qm1: f64, p: &ModelParams) -> Result<f64> {
    let k = p.intensity.kappa + p.intensity.beta;
    if k == 0.0 {
        return Err(Error::UndefinedMaximizer);
    }
    Ok(clamped_quote(1.0 / k, h_q - h_qm1, p))
}

#[inline]
fn clamped_quote(base: f64, excess: f64, p: &ModelParams) -> f64 {
    p.bounds.clamp(base + excess)
}

/// Explicit backward Euler sweep from `T` to `0` against a given mean-quote path.
///
/// The step `j+1 → j` uses the quotes and values at level `j+1` and the mean
/// quote sampled at `t_{j+1}`.
pub fn backward_solve(
    delta_bar: &MeanQuotePath,
    p: &ModelParams,
) -> Result<(ValueSurface, QuoteSurface)> {
    let n_points = p.grid.n_points();
    if delta_bar.len() != n_points {
        return Err(Error::GridMismatch {
            expected: n_points,
            found: delta_bar.len(),
        });
    }
    let k = p.intensity.kappa + p.intensity.beta;
    if k == 0.0 {
        return Err(Error::UndefinedMaximizer);
    }
    let base_quote = 1.0 / k;
    let inv = p.inventory;
    let dt = p.grid.dt();
    let n = p.grid.n_steps;
    let width = inv.n_levels();

    let mut values = LevelTable::filled(inv.q_min, inv.q_max, n_points, 0.0);
    let mut quotes = LevelTable::filled(inv.q_min + 1, inv.q_max, n_points, 0.0);

    values.slice_mut(n).copy_from_slice(&terminal_values(p));

    // Level-independent running penalties, indexed like the value slices.
    let running: Vec<f64> = inv
        .levels()
        .map(|q| {
            let qf = q as f64;
            p.penalty.phi(q) * qf * qf
        })
        .collect();

    let fill_quotes = |values: &LevelTable, quotes: &mut LevelTable, j: usize| {
        let h = values.slice(j);
        let f = quotes.slice_mut(j);
        for i in 1..width {
            f[i - 1] = clamped_quote(base_quote, h[i] - h[i - 1], p);
        }
    };
    fill_quotes(&values, &mut quotes, n);

    let mut next = vec![0.0; width];
    for j in (0..n).rev() {
        let dbar = delta_bar[j + 1];
        let h_next = values.slice(j + 1);
        let f_next = quotes.slice(j + 1);
        next[0] = h_next[0] - dt * running[0];
        for i in 1..width {
            let delta = f_next[i - 1];
            let rate = p.intensity.rate(delta, dbar);
            let product = rate * dt;
            if product.is_nan() || product >= 1.0 {
                return Err(Error::Unstable {
                    time: p.grid.time(j + 1),
                    level: inv.q_min + i as i32,
                    product,
                });
            }
            let gain = rate * (delta + h_next[i - 1] - h_next[i]);
            next[i] = h_next[i] + dt * (gain - running[i]);
        }
        values.slice_mut(j).copy_from_slice(&next);
        fill_quotes(&values, &mut quotes, j);
    }

    Ok((ValueSurface(values), QuoteSurface(quotes)))
}
