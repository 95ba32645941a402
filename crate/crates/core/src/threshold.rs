//! The practical threshold band separating 1st- and 2nd-class flows.
//!
//! The lower edge comes from the control-plane delay: a flow of size H pays
//! `T_cost` to consult the manager, so H must be large enough that the
//! expected first-service wait of the smallest managed flow in an
//! M/G/1/SRPT queue,
//!
//! ```text
//! E[W(x)] = lambda * (m2(x) + x^2 (1 - F(x))) / (2 (1 - rho(x))^2)
//! ```
//!
//! is at least `T_cost`. The upper edge caps the load carried by the
//! high-priority queue: the byte fraction of sub-threshold flows must stay
//! at or below 10% of the total so the unscheduled class never congests.
//! Sizes are converted to service times through the link capacity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A flow-size distribution as a piecewise-linear CDF over bytes.
///
/// The first knot may carry probability mass (an atom), which covers
/// degenerate single-size distributions; between knots the density is
/// constant. Knot sizes are strictly increasing and positive, cumulative
/// probabilities nondecreasing and ending at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    knots: Vec<(f64, f64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("bad distribution: {0}")]
    BadDistribution(String),
    #[error("bad inputs: {0}")]
    BadInputs(String),
    #[error("queue saturated at x = {x_bytes} bytes (rho(x) = {rho})")]
    Saturated { x_bytes: u64, rho: f64 },
    #[error("empty threshold band: h_low {h_low:?}, h_high {h_high:?}")]
    EmptyBand {
        h_low: Option<u64>,
        h_high: Option<u64>,
    },
}

impl SizeDistribution {
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self, ThresholdError> {
        if knots.is_empty() {
            return Err(ThresholdError::BadDistribution("no knots".into()));
        }
        for (s, p) in &knots {
            if !s.is_finite() || *s <= 0.0 {
                return Err(ThresholdError::BadDistribution(format!(
                    "sizes must be positive, got {s}"
                )));
            }
            if !(0.0..=1.0).contains(p) {
                return Err(ThresholdError::BadDistribution(format!(
                    "probability {p} outside [0,1]"
                )));
            }
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ThresholdError::BadDistribution(
                    "sizes must be strictly increasing".into(),
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(ThresholdError::BadDistribution(
                    "cumulative probabilities must be nondecreasing".into(),
                ));
            }
        }
        let last = knots.last().unwrap().1;
        if (last - 1.0).abs() > 1e-9 {
            return Err(ThresholdError::BadDistribution(format!(
                "cdf must end at 1, got {last}"
            )));
        }
        Ok(SizeDistribution { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn min_size(&self) -> f64 {
        self.knots[0].0
    }

    pub fn max_size(&self) -> f64 {
        self.knots.last().unwrap().0
    }

    /// P(size <= x). Right-continuous; the first knot may be an atom.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.knots[0].0 {
            return 0.0;
        }
        for w in self.knots.windows(2) {
            let (s0, p0) = w[0];
            let (s1, p1) = w[1];
            if x < s1 {
                return p0 + (p1 - p0) * (x - s0) / (s1 - s0);
            }
        }
        1.0
    }

    /// Inverse CDF for sampling; `u` in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let (s0, p0) = self.knots[0];
        if u <= p0 {
            return s0;
        }
        for w in self.knots.windows(2) {
            let (a, pa) = w[0];
            let (b, pb) = w[1];
            if u <= pb {
                return a + (b - a) * (u - pa) / (pb - pa);
            }
        }
        self.max_size()
    }

    /// Mean flow size in bytes.
    pub fn mean_bytes(&self) -> f64 {
        let (s0, p0) = self.knots[0];
        let mut mean = s0 * p0;
        for w in self.knots.windows(2) {
            let (a, pa) = w[0];
            let (b, pb) = w[1];
            mean += (pb - pa) * 0.5 * (a + b);
        }
        mean
    }

    /// Refines the CDF by inserting `extra` evenly spaced knots per segment.
    /// The distribution is unchanged; used to test grid invariance.
    pub fn refined(&self, extra: usize) -> SizeDistribution {
        let mut knots = vec![self.knots[0]];
        for w in self.knots.windows(2) {
            let (a, pa) = w[0];
            let (b, pb) = w[1];
            for j in 1..=extra {
                let t = j as f64 / (extra + 1) as f64;
                knots.push((a + (b - a) * t, pa + (pb - pa) * t));
            }
            knots.push((b, pb));
        }
        SizeDistribution { knots }
    }
}

/// Adaptive Simpson quadrature to a relative tolerance. Exact for the
/// low-order polynomial integrands that arise from piecewise-constant
/// densities, but written generically.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, eps / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, eps / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let eps = rel_tol * whole.abs().max(1e-300);
    recurse(f, a, fa, b, fb, whole, m, fm, eps, 40)
}

const QUAD_REL_TOL: f64 = 1e-9;

/// Inputs to the band computation, with sizes mapped into service time.
#[derive(Debug, Clone)]
pub struct ThresholdInputs {
    /// Service-time knots in seconds: (t, cum prob).
    svc_knots: Vec<(f64, f64)>,
    pub link_bps: u64,
    pub rho_total: f64,
    /// Flow arrival rate consistent with rho_total and the mean size.
    pub lambda: f64,
    pub t_cost_s: f64,
    mean_service_s: f64,
}

impl ThresholdInputs {
    pub fn new(
        dist: &SizeDistribution,
        link_bps: u64,
        rho_total: f64,
        t_cost_s: f64,
    ) -> Result<Self, ThresholdError> {
        if link_bps == 0 {
            return Err(ThresholdError::BadInputs("zero link capacity".into()));
        }
        if !(0.0..1.0).contains(&rho_total) {
            return Err(ThresholdError::BadInputs(format!(
                "rho_total {rho_total} outside [0, 1)"
            )));
        }
        if t_cost_s < 0.0 {
            return Err(ThresholdError::BadInputs("negative t_cost".into()));
        }
        let c = link_bps as f64;
        let svc_knots: Vec<(f64, f64)> = dist
            .knots()
            .iter()
            .map(|(s, p)| (s * 8.0 / c, *p))
            .collect();
        let mean_service_s = dist.mean_bytes() * 8.0 / c;
        let lambda = rho_total / mean_service_s;
        Ok(ThresholdInputs {
            svc_knots,
            link_bps,
            rho_total,
            lambda,
            t_cost_s,
            mean_service_s,
        })
    }

    pub fn service_time(&self, bytes: u64) -> f64 {
        bytes as f64 * 8.0 / self.link_bps as f64
    }

    fn svc_cdf(&self, t: f64) -> f64 {
        if t < self.svc_knots[0].0 {
            return 0.0;
        }
        for w in self.svc_knots.windows(2) {
            let (a, pa) = w[0];
            let (b, pb) = w[1];
            if t < b {
                return pa + (pb - pa) * (t - a) / (b - a);
            }
        }
        1.0
    }

    /// Integral of g(u) f(u) du over service times up to `x`, where f is the
    /// piecewise-constant density plus the atom at the first knot.
    fn moment<G: Fn(f64) -> f64>(&self, x: f64, g: G) -> f64 {
        let (t0, p0) = self.svc_knots[0];
        let mut total = if t0 <= x { g(t0) * p0 } else { 0.0 };
        for w in self.svc_knots.windows(2) {
            let (a, pa) = w[0];
            let (b, pb) = w[1];
            if x <= a {
                break;
            }
            let hi = x.min(b);
            let density = (pb - pa) / (b - a);
            if density > 0.0 {
                total += integrate(&|u| g(u) * density, a, hi, QUAD_REL_TOL);
            }
        }
        total
    }

    /// Load contributed by flows of service time <= x: lambda * xbar(x).
    pub fn rho_at(&self, x_service: f64) -> f64 {
        self.lambda * self.moment(x_service, |u| u)
    }

    pub fn mean_service(&self) -> f64 {
        self.mean_service_s
    }
}

/// Expected first-service wait E[W(x)] for a flow of `x_bytes` in the
/// M/G/1/SRPT model. Monotone nondecreasing in x.
pub fn expected_wait(inputs: &ThresholdInputs, x_bytes: u64) -> Result<f64, ThresholdError> {
    if inputs.lambda == 0.0 {
        return Ok(0.0);
    }
    let x = inputs.service_time(x_bytes);
    let rho_x = inputs.rho_at(x);
    if rho_x >= 1.0 {
        return Err(ThresholdError::Saturated { x_bytes, rho: rho_x });
    }
    let m2 = inputs.moment(x, |u| u * u);
    let f_x = inputs.svc_cdf(x);
    let numer = inputs.lambda * (m2 + x * x * (1.0 - f_x));
    Ok(numer / (2.0 * (1.0 - rho_x) * (1.0 - rho_x)))
}

/// Fraction of the total load carried by flows of size <= x:
/// xbar(x) / xbar(total), in [0, 1] and nondecreasing in x.
pub fn load_fraction_below(inputs: &ThresholdInputs, x_bytes: u64) -> f64 {
    let x = inputs.service_time(x_bytes);
    let below = inputs.moment(x, |u| u);
    if inputs.mean_service_s <= 0.0 {
        return 0.0;
    }
    (below / inputs.mean_service_s).clamp(0.0, 1.0)
}

/// The practical band for the class threshold H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdBand {
    pub h_low: u64,
    pub h_high: u64,
    /// The configured static threshold, clamped into the band.
    pub chosen_h: u64,
}

/// Band edges are searched on a 1 KB grid and rounded inward, conservatively
/// shrinking the band. An empty band is an explicit error, never a silent
/// clamp.
pub const BAND_GRID_BYTES: u64 = 1_000;

pub fn compute_band(
    inputs: &ThresholdInputs,
    static_h: u64,
) -> Result<ThresholdBand, ThresholdError> {
    let max_knot = inputs
        .svc_knots
        .last()
        .map(|(t, _)| t * inputs.link_bps as f64 / 8.0)
        .unwrap_or(0.0);
    let hi_idx = (max_knot as u64).div_ceil(BAND_GRID_BYTES) + 1;

    // Smallest grid point where waiting at least covers the control delay.
    let wait_ok = |idx: u64| -> Result<bool, ThresholdError> {
        Ok(expected_wait(inputs, idx * BAND_GRID_BYTES)? >= inputs.t_cost_s)
    };
    let h_low = bisect_first_true(1, hi_idx, &wait_ok)?.map(|i| i * BAND_GRID_BYTES);

    // Largest grid point keeping the 1st-queue load within a tenth of total.
    let frac_ok = |idx: u64| -> Result<bool, ThresholdError> {
        Ok(load_fraction_below(inputs, idx * BAND_GRID_BYTES) <= 0.1)
    };
    let h_high = bisect_last_true(1, hi_idx, &frac_ok)?.map(|i| i * BAND_GRID_BYTES);

    match (h_low, h_high) {
        (Some(lo), Some(hi)) if lo <= hi => Ok(ThresholdBand {
            h_low: lo,
            h_high: hi,
            chosen_h: static_h.clamp(lo, hi),
        }),
        (lo, hi) => Err(ThresholdError::EmptyBand {
            h_low: lo,
            h_high: hi,
        }),
    }
}

/// First index in [lo, hi] where the monotone predicate flips to true.
fn bisect_first_true<F: Fn(u64) -> Result<bool, ThresholdError>>(
    lo: u64,
    hi: u64,
    pred: &F,
) -> Result<Option<u64>, ThresholdError> {
    if !pred(hi)? {
        return Ok(None);
    }
    if pred(lo)? {
        return Ok(Some(lo));
    }
    let (mut lo, mut hi) = (lo, hi); // pred(lo) false, pred(hi) true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Last index in [lo, hi] where the monotone predicate is still true.
fn bisect_last_true<F: Fn(u64) -> Result<bool, ThresholdError>>(
    lo: u64,
    hi: u64,
    pred: &F,
) -> Result<Option<u64>, ThresholdError> {
    if !pred(lo)? {
        return Ok(None);
    }
    if pred(hi)? {
        return Ok(Some(hi));
    }
    let (mut lo, mut hi) = (lo, hi); // pred(lo) true, pred(hi) false
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}
