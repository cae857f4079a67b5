//! Market observables derived from an equilibrium: cumulative cost, revenue
//! and volume, average and instantaneous transaction costs, and the
//! cancellation probability under overselling.
//!
//! Costs are spread-denominated: the reference-price leg of each sale is not
//! included. Time integrals use the left-endpoint rule on the solver grid.

use std::collections::BTreeMap;

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::hjb::QuoteSurface;
use crate::model::{Intensity, ModelParams};
use crate::population::{MeanQuotePath, PopulationFlow, MASS_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct EconomicSeries {
    pub cost: Vec<f64>,
    pub revenue: Vec<f64>,
    pub volume: Vec<f64>,
    /// `cost / volume`; `None` until some volume has traded.
    pub avg_cost: Vec<Option<f64>>,
    pub inst_cost: Vec<f64>,
}

impl EconomicSeries {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn final_volume(&self) -> f64 {
        *self.volume.last().expect("non-empty series")
    }

    pub fn final_revenue(&self) -> f64 {
        *self.revenue.last().expect("non-empty series")
    }
}

/// Economic series of a solved equilibrium.
pub fn economic_series(eq: &EquilibriumSolution, p: &ModelParams) -> Result<EconomicSeries> {
    series_from_parts(&eq.quotes, &eq.population, &eq.assumed_delta_bar, p)
}

/// Economic series for arbitrary quotes, population and mean-quote path on the grid of `p`.
pub fn series_from_parts(
    quotes: &QuoteSurface,
    pop: &PopulationFlow,
    delta_bar: &MeanQuotePath,
    p: &ModelParams,
) -> Result<EconomicSeries> {
    let n_points = p.grid.n_points();
    for found in [quotes.n_times(), pop.n_times(), delta_bar.len()] {
        if found != n_points {
            return Err(Error::GridMismatch {
                expected: n_points,
                found,
            });
        }
    }
    let dt = p.grid.dt();
    let inv = p.inventory;

    // Preemptive terminal penalty weights, one per admissible level.
    let penalty: Vec<f64> = inv
        .levels()
        .map(|q| {
            let qf = q as f64;
            p.penalty.alpha(q) * qf * qf
        })
        .collect();

    let mut cost = Vec::with_capacity(n_points);
    let mut volume = Vec::with_capacity(n_points);
    let mut revenue = Vec::with_capacity(n_points);
    let mut avg_cost = Vec::with_capacity(n_points);
    let mut inst_cost = Vec::with_capacity(n_points);

    let (mut c, mut v) = (0.0, 0.0);
    let mut last_inst: Option<f64> = None;
    for j in 0..n_points {
        let mass = pop.column(j);
        let f = quotes.slice(j);
        let (mut money_rate, mut unit_rate) = (0.0, 0.0);
        for i in 1..mass.len() {
            let flow = mass[i] * p.intensity.rate(f[i - 1], delta_bar[j]);
            money_rate += f[i - 1] * flow;
            unit_rate += flow;
        }

        cost.push(c);
        volume.push(v);
        let charge: f64 = mass.iter().zip(&penalty).map(|(m, a)| m * a).sum();
        revenue.push(c - charge);
        avg_cost.push((v > 0.0).then(|| c / v));
        let k = if unit_rate >= MASS_FLOOR {
            money_rate / unit_rate
        } else {
            last_inst.unwrap_or_else(|| quotes.get(inv.q_max, j))
        };
        last_inst = Some(k);
        inst_cost.push(k);

        c += dt * money_rate;
        v += dt * unit_rate;
    }

    Ok(EconomicSeries {
        cost,
        revenue,
        volume,
        avg_cost,
        inst_cost,
    })
}

/// Probability that a given consumer's purchase is cancelled at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CancellationReport {
    pub probability: f64,
    /// Contribution of buyers from agents who oversold `q` units, for `q = 1..=-q_min`.
    pub per_depth: BTreeMap<i32, f64>,
}

/// Cancellation probability from the terminal distribution `p_t` (ordered from `q_min`).
///
/// An agent that ends at `−q` sold `q_max + q` units and cancels `q` of them
/// uniformly, so each of its buyers loses out with probability `q / (q_max + q)`.
pub fn cancellation_probability(p_t: &[f64], p: &ModelParams) -> Result<CancellationReport> {
    let inv = p.inventory;
    if !inv.allows_overselling() {
        return Err(Error::InvalidArgument(
            "cancellation probability needs q_min < 0".into(),
        ));
    }
    if p_t.len() != inv.n_levels() {
        return Err(Error::InvalidArgument(format!(
            "terminal distribution has {} levels, expected {}",
            p_t.len(),
            inv.n_levels()
        )));
    }
    let buyers = 1.0 - p_t[inv.offset(inv.q_max)];
    if buyers <= MASS_FLOOR {
        return Err(Error::InvalidArgument(
            "no agent sold anything: P_T[q_max] = 1".into(),
        ));
    }
    let q_max = inv.q_max as f64;
    let per_depth: BTreeMap<i32, f64> = (1..=-inv.q_min)
        .map(|q| {
            let qf = q as f64;
            (q, p_t[inv.offset(-q)] / buyers * qf / (q_max + qf))
        })
        .collect();
    Ok(CancellationReport {
        probability: per_depth.values().sum(),
        per_depth,
    })
}
