//! Parameter records, the competitive sales intensity and validity checks.

use std::fmt;

use crate::error::{Error, Result};

/// Equidistant time grid `t_j = j * dt`, `j = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Self {
        Self { horizon, n_steps }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.horizon
        } else {
            j as f64 * self.dt()
        }
    }

    /// Grid index closest to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let j = (t / self.dt()).round();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.n_steps)
        }
    }

    /// True when every rate in `rates` satisfies `rate * dt < 1`.
    pub fn is_stable_for(&self, rates: impl IntoIterator<Item = f64>) -> bool {
        let dt = self.dt();
        rates.into_iter().all(|r| r * dt < 1.0)
    }
}

/// Admissible inventory levels `q_min..=q_max`. `q_min < 0` enables overselling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InventoryRange {
    pub q_max: i32,
    pub q_min: i32,
}

impl InventoryRange {
    pub fn new(q_min: i32, q_max: i32) -> Self {
        Self { q_max, q_min }
    }

    pub fn n_levels(&self) -> usize {
        (self.q_max - self.q_min + 1) as usize
    }

    pub fn levels(&self) -> impl DoubleEndedIterator<Item = i32> + Clone {
        self.q_min..=self.q_max
    }

    /// Levels at which an agent still quotes (everything above the stopped state).
    pub fn quoting_levels(&self) -> impl DoubleEndedIterator<Item = i32> + Clone {
        self.q_min + 1..=self.q_max
    }

    pub fn offset(&self, q: i32) -> usize {
        debug_assert!(q >= self.q_min && q <= self.q_max, "level {q} out of range");
        (q - self.q_min) as usize
    }

    pub fn allows_overselling(&self) -> bool {
        self.q_min < 0
    }
}

/// Constants of the exponential intensity `A exp{-(kappa + beta) delta + beta delta_bar}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityParams {
    pub scale: f64,
    pub kappa: f64,
    pub beta: f64,
}

/// Sales intensity as a function of the agent's own spread and the mean spread.
///
/// Any form satisfying the monotonicity and concavity conditions checked by
/// [`check_intensity_conditions`] can be plugged into the condition checks.
pub trait Intensity {
    fn rate(&self, delta: f64, delta_bar: f64) -> f64;
}

impl Intensity for IntensityParams {
    #[inline]
    fn rate(&self, delta: f64, delta_bar: f64) -> f64 {
        self.scale * (-(self.kappa + self.beta) * delta + self.beta * delta_bar).exp()
    }
}

impl<F: Fn(f64, f64) -> f64> Intensity for F {
    fn rate(&self, delta: f64, delta_bar: f64) -> f64 {
        self(delta, delta_bar)
    }
}

/// Exponential competitive intensity.
pub fn intensity(delta: f64, delta_bar: f64, ip: &IntensityParams) -> f64 {
    ip.rate(delta, delta_bar)
}

/// Quadratic inventory penalties, split by the sign of the inventory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub phi_pos: f64,
    pub phi_neg: f64,
}

impl PenaltyParams {
    /// Terminal penalty coefficient for level `q`.
    pub fn alpha(&self, q: i32) -> f64 {
        if q >= 0 {
            self.alpha_pos
        } else {
            self.alpha_neg
        }
    }

    /// Running penalty coefficient for level `q`.
    pub fn phi(&self, q: i32) -> f64 {
        if q >= 0 {
            self.phi_pos
        } else {
            self.phi_neg
        }
    }
}

/// Admissible quote interval `[lower, upper]`; `upper = +inf` means no price cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn clamp(&self, delta: f64) -> f64 {
        self.upper.min(delta.max(self.lower))
    }

    pub fn contains(&self, delta: f64) -> bool {
        delta >= self.lower && delta <= self.upper
    }

    pub fn is_capped(&self) -> bool {
        self.upper.is_finite()
    }
}

/// Everything that defines one scenario of the pricing game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub grid: TimeGrid,
    pub inventory: InventoryRange,
    pub intensity: IntensityParams,
    pub penalty: PenaltyParams,
    pub bounds: Bounds,
    /// Reference price volatility. Only enters Monte Carlo paths.
    pub sigma: f64,
    pub s0: f64,
    pub x0: f64,
}

impl Default for ModelParams {
    /// The base market: T = 10, five units, alpha = 0.1, kappa = 1,
    /// phi = 0.03, A = 1, beta = 0.3, lower quote bound -10.
    fn default() -> Self {
        Self {
            grid: TimeGrid::new(10.0, 10_000),
            inventory: InventoryRange::new(0, 5),
            intensity: IntensityParams {
                scale: 1.0,
                kappa: 1.0,
                beta: 0.3,
            },
            penalty: PenaltyParams {
                alpha_pos: 0.1,
                alpha_neg: 0.2,
                phi_pos: 0.03,
                phi_neg: 0.06,
            },
            bounds: Bounds {
                lower: -10.0,
                upper: f64::INFINITY,
            },
            sigma: 1.0,
            s0: 0.0,
            x0: 0.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let v = validate_params(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(v))
        }
    }
}

/// A violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.rule, self.detail)
    }
}

/// Lists every violated invariant of `p`. An empty list means the parameters are usable.
pub fn validate_params(p: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, rule: &'static str, detail: String| {
        if !ok {
            out.push(Violation { rule, detail });
        }
    };

    let g = &p.grid;
    check(
        g.horizon.is_finite() && g.horizon > 0.0,
        "horizon > 0",
        format!("horizon = {}", g.horizon),
    );
    check(g.n_steps >= 1, "n_steps ≥ 1", format!("n_steps = {}", g.n_steps));

    let inv = &p.inventory;
    check(inv.q_max >= 1, "q_max ≥ 1", format!("q_max = {}", inv.q_max));
    check(inv.q_min <= 0, "q_min ≤ 0", format!("q_min = {}", inv.q_min));

    let ip = &p.intensity;
    check(ip.scale.is_finite() && ip.scale >= 0.0, "A ≥ 0", format!("A = {}", ip.scale));
    check(ip.kappa.is_finite() && ip.kappa >= 0.0, "kappa ≥ 0", format!("kappa = {}", ip.kappa));
    check(ip.beta.is_finite() && ip.beta >= 0.0, "beta ≥ 0", format!("beta = {}", ip.beta));
    check(
        ip.kappa + ip.beta > 0.0 || !(ip.kappa >= 0.0 && ip.beta >= 0.0),
        "kappa + beta > 0",
        format!("kappa + beta = {}", ip.kappa + ip.beta),
    );

    let pen = &p.penalty;
    for (value, rule) in [
        (pen.alpha_pos, "alpha_pos ≥ 0"),
        (pen.alpha_neg, "alpha_neg ≥ 0"),
        (pen.phi_pos, "phi_pos ≥ 0"),
        (pen.phi_neg, "phi_neg ≥ 0"),
    ] {
        check(value.is_finite() && value >= 0.0, rule, format!("value = {value}"));
    }
    if inv.allows_overselling() {
        check(
            pen.alpha_pos < pen.alpha_neg,
            "alpha_pos < alpha_neg",
            format!("alpha_pos = {}, alpha_neg = {}", pen.alpha_pos, pen.alpha_neg),
        );
        check(
            pen.phi_pos < pen.phi_neg,
            "phi_pos < phi_neg",
            format!("phi_pos = {}, phi_neg = {}", pen.phi_pos, pen.phi_neg),
        );
    }

    let b = &p.bounds;
    check(b.lower.is_finite(), "b_lo finite", format!("b_lo = {}", b.lower));
    check(
        !b.upper.is_nan() && b.upper != f64::NEG_INFINITY,
        "b_hi finite or +inf",
        format!("b_hi = {}", b.upper),
    );
    check(b.lower < b.upper, "b_lo < b_hi", format!("b_lo = {}, b_hi = {}", b.lower, b.upper));

    check(p.sigma.is_finite() && p.sigma >= 0.0, "sigma ≥ 0", format!("sigma = {}", p.sigma));
    check(p.s0.is_finite(), "s0 finite", format!("s0 = {}", p.s0));
    check(p.x0.is_finite(), "x0 finite", format!("x0 = {}", p.x0));

    out
}

/// Relative step of the central differences used by [`check_intensity_conditions`].
pub const FD_RELATIVE_STEP: f64 = 1e-6;

/// Outcome of one intensity condition over the sample grid.
///
/// Every condition is phrased as `value < 0` (or `value ≤ 0` for the cross
/// partial); `worst_value` is the largest value seen and `worst_point` where.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub holds: bool,
    pub worst_value: f64,
    pub worst_point: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityConditionReport {
    /// dλ/dδ < 0
    pub own_decreasing: ConditionCheck,
    /// dλ/dδ̄ > 0
    pub mean_increasing: ConditionCheck,
    /// dλ/dδ + dλ/dδ̄ < 0
    pub joint_decreasing: ConditionCheck,
    /// d²λ/dδdδ̄ ≤ 0
    pub cross_nonpositive: ConditionCheck,
    /// λ d²λ/dδ² < 2 (dλ/dδ)²
    pub concavity: ConditionCheck,
}

impl IntensityConditionReport {
    pub fn all_hold(&self) -> bool {
        self.as_array().iter().all(|c| c.holds)
    }

    pub fn as_array(&self) -> [ConditionCheck; 5] {
        [
            self.own_decreasing,
            self.mean_increasing,
            self.joint_decreasing,
            self.cross_nonpositive,
            self.concavity,
        ]
    }
}

struct Tracker {
    strict: bool,
    worst: f64,
    at: (f64, f64),
}

impl Tracker {
    fn new(strict: bool) -> Self {
        Self {
            strict,
            worst: f64::NEG_INFINITY,
            at: (f64::NAN, f64::NAN),
        }
    }

    fn push(&mut self, value: f64, point: (f64, f64)) {
        // NaN counts as a failure.
        if value > self.worst || value.is_nan() && !self.worst.is_nan() {
            self.worst = value;
            self.at = point;
        }
    }

    fn finish(self) -> ConditionCheck {
        let holds = if self.strict {
            self.worst < 0.0
        } else {
            self.worst <= 0.0
        };
        ConditionCheck {
            holds,
            worst_value: self.worst,
            worst_point: self.at,
        }
    }
}

/// Checks the five economic conditions on an intensity by central finite
/// differences at each sample point.
pub fn check_intensity_conditions<I: Intensity + ?Sized>(
    lambda: &I,
    sample_points: &[(f64, f64)],
) -> Result<IntensityConditionReport> {
    if sample_points.is_empty() {
        return Err(Error::InvalidArgument("sample grid is empty".into()));
    }
    let mut own = Tracker::new(true);
    let mut mean = Tracker::new(true);
    let mut joint = Tracker::new(true);
    let mut cross = Tracker::new(false);
    let mut concave = Tracker::new(true);

    for &(d, m) in sample_points {
        let hd = FD_RELATIVE_STEP * d.abs().max(1.0);
        let hm = FD_RELATIVE_STEP * m.abs().max(1.0);
        let l = lambda.rate(d, m);
        let l_dp = lambda.rate(d + hd, m);
        let l_dm = lambda.rate(d - hd, m);
        let l_mp = lambda.rate(d, m + hm);
        let l_mm = lambda.rate(d, m - hm);

        let d_own = (l_dp - l_dm) / (2.0 * hd);
        let d_mean = (l_mp - l_mm) / (2.0 * hm);
        let d_own2 = (l_dp - 2.0 * l + l_dm) / (hd * hd);
        let d_cross = (lambda.rate(d + hd, m + hm) - lambda.rate(d + hd, m - hm)
            - lambda.rate(d - hd, m + hm)
            + lambda.rate(d - hd, m - hm))
            / (4.0 * hd * hm);

        own.push(d_own, (d, m));
        mean.push(-d_mean, (d, m));
        joint.push(d_own + d_mean, (d, m));
        cross.push(d_cross, (d, m));
        concave.push(l * d_own2 - 2.0 * d_own * d_own, (d, m));
    }

    Ok(IntensityConditionReport {
        own_decreasing: own.finish(),
        mean_increasing: mean.finish(),
        joint_decreasing: joint.finish(),
        cross_nonpositive: cross.finish(),
        concavity: concave.finish(),
    })
}

/// Change in total market sales when every agent except `agent` (0-based)
/// raises its quote, in the finite-`M` market where agent `i` faces
/// `A exp{-(kappa + beta (M-1)/M) δ_i + (beta/M) Σ_{j≠i} δ_j}`.
pub fn finite_market_sales_derivative(
    ip: &IntensityParams,
    quotes: &[f64],
    agent: usize,
) -> Result<f64> {
    let m = quotes.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "finite market needs at least 2 agents, got {m}"
        )));
    }
    if agent >= m {
        return Err(Error::InvalidArgument(format!(
            "agent index {agent} out of range for {m} agents"
        )));
    }
    let mf = m as f64;
    let own = ip.kappa + ip.beta * (mf - 1.0) / mf;
    let total: f64 = quotes.iter().sum();
    let rate = |j: usize| {
        ip.scale * (-own * quotes[j] + ip.beta / mf * (total - quotes[j])).exp()
    };
    let others: f64 = (0..m).filter(|&j| j != agent).map(rate).sum();
    Ok(ip.beta * (1.0 - 1.0 / mf) * rate(agent) - (ip.kappa + ip.beta / mf) * others)
}
