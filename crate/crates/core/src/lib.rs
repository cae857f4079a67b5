//! Markov mean-field Nash equilibria for competitive dynamic inventory pricing.
//!
//! A continuum of sellers each liquidates a finite stock of a perishable good
//! by quoting a spread over a reference price. Sales arrive with intensity
//! `A exp{-(κ+β)δ + βδ̄}`, so an agent's sales depend on its own spread and on
//! the population mean spread `δ̄`. An equilibrium is found by iterating a
//! backward value solve ([`hjb`]), a forward population solve ([`population`])
//! and a damped mean-quote update ([`equilibrium`]).

pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod hjb;
pub mod metrics;
pub mod model;
pub mod population;
pub mod table;
pub mod validation;

pub use error::{Error, Result};
