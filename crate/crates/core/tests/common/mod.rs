//! Independent single-agent reference solver, written without the library's
//! grid or table types.
//!
//! Sales arrive at rate `A e^{-κδ}`; the optimal quote is
//! `max(1/κ + h_q − h_{q−1}, B)`. Values are stored level-major:
//! `h[q][j]` for `q = 0..=q_max`.

#![allow(dead_code)]

pub struct ReferenceSolution {
    pub h: Vec<Vec<f64>>,
    /// `quote[q - 1][j]` for `q = 1..=q_max`.
    pub quote: Vec<Vec<f64>>,
    /// `mass[q][j]` for `q = 0..=q_max`.
    pub mass: Vec<Vec<f64>>,
}

#[derive(Clone, Copy)]
pub struct ReferenceMarket {
    pub horizon: f64,
    pub n_steps: usize,
    pub q_max: usize,
    pub scale: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub phi: f64,
    pub lower: f64,
}

impl ReferenceMarket {
    /// The reference-model figure set: T = 10, five units, α = 0.1, κ = 1,
    /// φ = 0.03, A = 1, lower bound −10.
    pub fn figure_set(n_steps: usize) -> Self {
        Self {
            horizon: 10.0,
            n_steps,
            q_max: 5,
            scale: 1.0,
            kappa: 1.0,
            alpha: 0.1,
            phi: 0.03,
            lower: -10.0,
        }
    }

    fn best_quote(&self, up: f64, down: f64) -> f64 {
        (1.0 / self.kappa + up - down).max(self.lower)
    }

    fn rate(&self, quote: f64) -> f64 {
        self.scale * (-self.kappa * quote).exp()
    }

    pub fn solve(&self) -> ReferenceSolution {
        let n = self.n_steps;
        let dt = self.horizon / n as f64;
        let levels = self.q_max + 1;
        let mut h = vec![vec![0.0; n + 1]; levels];
        for (q, row) in h.iter_mut().enumerate() {
            row[n] = -self.alpha * (q * q) as f64;
        }
        for j in (0..n).rev() {
            h[0][j] = h[0][j + 1];
            for q in 1..levels {
                let up = h[q][j + 1];
                let down = h[q - 1][j + 1];
                let d = self.best_quote(up, down);
                let drift = self.rate(d) * (d + down - up) - self.phi * (q * q) as f64;
                h[q][j] = up + dt * drift;
            }
        }

        let quote: Vec<Vec<f64>> = (1..levels)
            .map(|q| (0..=n).map(|j| self.best_quote(h[q][j], h[q - 1][j])).collect())
            .collect();

        let mut mass = vec![vec![0.0; n + 1]; levels];
        mass[self.q_max][0] = 1.0;
        for j in 0..n {
            for q in 0..levels {
                let out = if q > 0 {
                    dt * self.rate(quote[q - 1][j]) * mass[q][j]
                } else {
                    0.0
                };
                let inflow = if q < self.q_max {
                    dt * self.rate(quote[q][j]) * mass[q + 1][j]
                } else {
                    0.0
                };
                mass[q][j + 1] = mass[q][j] - out + inflow;
            }
        }
        ReferenceSolution { h, quote, mass }
    }
}
