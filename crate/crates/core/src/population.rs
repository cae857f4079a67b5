//! Forward Kolmogorov evolution of the inventory distribution and the
//! mean-quote aggregation that closes the mean-field loop.

use std::ops::{Deref, Index};

use crate::error::{Error, Result};
use crate::hjb::QuoteSurface;
use crate::model::{Intensity, ModelParams, TimeGrid};
use crate::table::LevelTable;

/// Active mass below which the mean quote holds its previous value.
pub const MASS_FLOOR: f64 = 1e-12;

/// Mean spread `δ̄[j]` on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanQuotePath(Vec<f64>);

impl MeanQuotePath {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(grid: &TimeGrid, value: f64) -> Self {
        Self(vec![value; grid.n_points()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// `self * w + other * (1 - w)`, pointwise.
    pub fn blend(&self, w: f64, other: &MeanQuotePath) -> MeanQuotePath {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
        )
    }
}

impl Index<usize> for MeanQuotePath {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// Proportions `P[q][j]` of agents holding `q` units at `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationFlow(LevelTable);

impl PopulationFlow {
    pub fn from_table(table: LevelTable) -> Self {
        Self(table)
    }

    /// Distribution at time index `j`, ordered from `q_min` upwards.
    pub fn column(&self, j: usize) -> &[f64] {
        self.0.slice(j)
    }

    pub fn terminal(&self) -> &[f64] {
        self.0.slice(self.0.n_times() - 1)
    }
}

impl Deref for PopulationFlow {
    type Target = LevelTable;

    fn deref(&self) -> &LevelTable {
        &self.0
    }
}

fn check_shapes(f: &QuoteSurface, delta_bar: &MeanQuotePath, p: &ModelParams) -> Result<()> {
    let n = p.grid.n_points();
    for found in [f.n_times(), delta_bar.len()] {
        if found != n {
            return Err(Error::GridMismatch { expected: n, found });
        }
    }
    if f.q_lo() != p.inventory.q_min + 1 || f.q_hi() != p.inventory.q_max {
        return Err(Error::InvalidArgument(format!(
            "quote surface covers {}..={}, expected {}..={}",
            f.q_lo(),
            f.q_hi(),
            p.inventory.q_min + 1,
            p.inventory.q_max
        )));
    }
    Ok(())
}

/// Explicit forward Euler for the pure-death flow, starting with all mass at `q_max`.
///
/// Each flow `dt λ(f[q][j], δ̄[j]) P[q][j]` leaves `q` and enters `q − 1`; the
/// stopped state `q_min` only receives.
pub fn forward_evolve(
    f: &QuoteSurface,
    delta_bar: &MeanQuotePath,
    p: &ModelParams,
) -> Result<PopulationFlow> {
    check_shapes(f, delta_bar, p)?;
    let inv = p.inventory;
    let dt = p.grid.dt();
    let n = p.grid.n_steps;
    let width = inv.n_levels();

    let mut table = LevelTable::filled(inv.q_min, inv.q_max, n + 1, 0.0);
    table.set(inv.q_max, 0, 1.0);

    let mut next = vec![0.0; width];
    for j in 0..n {
        let dbar = delta_bar[j];
        let cur = table.slice(j);
        let quotes = f.slice(j);
        next.copy_from_slice(cur);
        for i in 1..width {
            let rate = p.intensity.rate(quotes[i - 1], dbar);
            let product = rate * dt;
            if product.is_nan() || product >= 1.0 {
                return Err(Error::Unstable {
                    time: p.grid.time(j),
                    level: inv.q_min + i as i32,
                    product,
                });
            }
            let flow = product * cur[i];
            next[i] -= flow;
            next[i - 1] += flow;
        }
        table.slice_mut(j + 1).copy_from_slice(&next);
    }
    Ok(PopulationFlow(table))
}

/// Population-weighted mean of the quotes posted by agents that still quote.
///
/// Agents in the stopped state `q_min` are excluded. When the quoting mass
/// drops below [`MASS_FLOOR`] the previous value is held.
pub fn mean_quote(f: &QuoteSurface, pop: &PopulationFlow, p: &ModelParams) -> MeanQuotePath {
    let n = pop.n_times().min(f.n_times());
    let mut out = Vec::with_capacity(n);
    let mut last: Option<f64> = None;
    for j in 0..n {
        let mass = &pop.column(j)[1..];
        let quotes = f.slice(j);
        let active: f64 = mass.iter().sum();
        let v = if active >= MASS_FLOOR {
            let weighted: f64 = quotes.iter().zip(mass).map(|(q, m)| q * m).sum();
            weighted / active
        } else {
            last.unwrap_or_else(|| f.get(p.inventory.q_max, j))
        };
        last = Some(v);
        out.push(v);
    }
    MeanQuotePath(out)
}
