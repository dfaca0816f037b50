//! Executable versions of the descent and convergence inequalities.
//!
//! Every check is a pure function of its inputs and returns a
//! [`DiagnosticReport`] whose `worst_slack` is the most negative margin seen
//! (positive margins mean the inequality holds with room to spare).

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::par::{self, Execution};
use crate::problems::{CompositeProblem, SmoothPart};
use crate::solver::{lyapunov, ParameterSchedule, RunResult, TraceRecord};

/// Absolute slack allowed on per-step descent inequalities.
pub const DESCENT_TOL: f64 = 1e-9;
/// Slack allowed on the O(1/K) bound.
pub const RATE_TOL: f64 = 1e-12;
/// Relative slack (w.r.t. `1 + L·D_h`) allowed by smad certification.
pub const SMAD_TOL: f64 = 1e-9;
/// Absolute slack on the summed Bregman steps.
pub const SUMMABLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub check_name: String,
    pub passed: bool,
    pub worst_slack: f64,
    pub tolerance: f64,
    /// Iteration or sample index of the worst case.
    pub location: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl DiagnosticReport {
    fn from_slacks(
        name: &str,
        tolerance: f64,
        slacks: impl IntoIterator<Item = (usize, f64)>,
    ) -> Self {
        let mut worst = f64::INFINITY;
        let mut location = None;
        for (i, s) in slacks {
            // NaN counts as a violation.
            if !(s >= worst) {
                worst = s;
                location = Some(i);
                if s.is_nan() {
                    break;
                }
            }
        }
        DiagnosticReport {
            check_name: name.to_string(),
            passed: worst >= -tolerance,
            worst_slack: worst,
            tolerance,
            location,
            extra: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }
}

fn need(records: &[TraceRecord], needed: usize) -> Result<()> {
    if records.len() < needed {
        Err(Error::TraceTooShort {
            needed,
            found: records.len(),
        })
    } else {
        Ok(())
    }
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> DVector<f64> {
    let mut u = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    let n = u.norm();
    if n > 0.0 {
        u /= n;
    }
    let r: f64 = rng.random();
    u * (radius * r.powf(1.0 / d as f64))
}

/// The `index`-th sample pair drawn by [`certify_smad`].
pub fn certification_pair(
    d: usize,
    radius: f64,
    seed: u64,
    index: usize,
) -> (DVector<f64>, DVector<f64>) {
    const SCALES: [f64; 3] = [1.0, 10.0, 100.0];
    // One stream per sample keeps the draw independent of scheduling.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let r = radius * SCALES[index % SCALES.len()];
    let x = uniform_in_ball(&mut rng, d, r);
    let y = uniform_in_ball(&mut rng, d, r);
    (x, y)
}

/// Samples pairs `(x, y)` and checks `|f(x) − f(y) − ⟨∇f(y), x − y⟩| ≤ L·D_h(x, y)`.
///
/// Pairs are drawn uniformly from balls of radius `radius`, `10·radius` and
/// `100·radius` in rotation. Slack is normalized by `1 + L·D_h(x, y)`. The
/// report's `extra["empirical_l"]` is the largest observed ratio `|D_f|/D_h`.
pub fn certify_smad(
    f: &SmoothPart,
    h: &Kernel,
    l: f64,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<DiagnosticReport> {
    certify_smad_with(Execution::default(), f, h, l, n_samples, radius, seed)
}

pub fn certify_smad_with(
    exec: Execution,
    f: &SmoothPart,
    h: &Kernel,
    l: f64,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<DiagnosticReport> {
    if n_samples == 0 {
        return Err(Error::Configuration(
            "certification needs at least one sample".into(),
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Configuration(format!(
            "sampling radius must be positive, got {radius}"
        )));
    }
    if f.dimension() != h.dimension() {
        return Err(Error::DimensionMismatch {
            expected: h.dimension(),
            found: f.dimension(),
        });
    }
    let d = h.dimension();
    let samples: Vec<Result<(f64, f64)>> = par::map_range(exec, n_samples, |i| {
        let (x, y) = certification_pair(d, radius, seed, i);
        let (fy, gy) = f.eval(&y)?;
        let df = f.value(&x)? - fy - gy.dot(&(&x - &y));
        let dh = h.bregman_distance(&x, &y)?;
        let slack = (l * dh - df.abs()) / (1.0 + l * dh);
        let ratio = if dh > 0.0 { df.abs() / dh } else { 0.0 };
        Ok((slack, ratio))
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let empirical = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(DiagnosticReport::from_slacks(
        "smad_certificate",
        SMAD_TOL,
        samples.iter().enumerate().map(|(i, s)| (i, s.0)),
    )
    .with("declared_l", l)
    .with("empirical_l", empirical)
    .with("samples", n_samples as f64))
}

/// Per-step descent checks, in order:
///
/// 1. `one_step_inequality`:
///    `Ψₖ₊₁ + (1/λₖ − L − βₖ/(σλₖ))·Dₖ₊₁ ≤ Ψₖ + βₖ/(σλₖ)·Dₖ`
/// 2. `lyapunov_descent`:
///    `Hₖ₊₁ − Hₖ ≤ [M − (1/λₖ − L − βₖ/(σλₖ))]·Dₖ₊₁ − (M − βₖ/(σλₖ))·Dₖ`
/// 3. `lyapunov_monotone`: `Hₖ₊₁ ≤ Hₖ`
/// 4. `sufficient_decrease`: `Hₖ₊₁ + a‖xᵏ − xᵏ⁻¹‖² ≤ Hₖ` with `a = (σ/2)(M − β̄/(λ̲σ))`
///
/// where `Dₖ = D_h(xᵏ, xᵏ⁻¹)` and `H` is recomputed from `Ψ`, `D` and the given `M`.
pub fn check_descent(
    trace: &[TraceRecord],
    m: f64,
    l: f64,
    sigma: f64,
    schedule: &ParameterSchedule,
) -> Result<Vec<DiagnosticReport>> {
    need(trace, 2)?;
    let h = |r: &TraceRecord| lyapunov(r.psi, r.bregman_step, m);
    let steps = || trace.windows(2).map(|w| (&w[0], &w[1]));

    let one_step = DiagnosticReport::from_slacks(
        "one_step_inequality",
        DESCENT_TOL,
        steps().map(|(cur, next)| {
            let inertial = cur.beta / (sigma * cur.lambda);
            let lhs = next.psi + (1.0 / cur.lambda - l - inertial) * next.bregman_step;
            let rhs = cur.psi + inertial * cur.bregman_step;
            (cur.k, rhs - lhs)
        }),
    );
    let descent = DiagnosticReport::from_slacks(
        "lyapunov_descent",
        DESCENT_TOL,
        steps().map(|(cur, next)| {
            let inertial = cur.beta / (sigma * cur.lambda);
            let rhs = (m - (1.0 / cur.lambda - l - inertial)) * next.bregman_step
                - (m - inertial) * cur.bregman_step;
            (cur.k, rhs - (h(next) - h(cur)))
        }),
    );
    let monotone = DiagnosticReport::from_slacks(
        "lyapunov_monotone",
        DESCENT_TOL,
        steps().map(|(cur, next)| (cur.k, h(cur) - h(next))),
    );
    let a = (0.5 * sigma * (m - schedule.beta_max() / (schedule.lambda_min() * sigma))).max(0.0);
    let sufficient = DiagnosticReport::from_slacks(
        "sufficient_decrease",
        DESCENT_TOL,
        steps().map(|(cur, next)| (cur.k, h(cur) - h(next) - a * cur.step_norm.powi(2))),
    )
    .with("a", a);
    Ok(vec![one_step, descent, monotone, sufficient])
}

/// The O(1/K) bound: for every K ≥ 1 covered by the trace,
///
/// `min_{1≤k≤K} ‖xᵏ − xᵏ⁻¹‖² ≤ (H₁ − H_{K+1}) / (K·c)`, with `c = (σ/2)(M − β̄/(λ̲σ))`.
pub fn check_rate_bound(
    trace: &[TraceRecord],
    m: f64,
    sigma: f64,
    lambda_min: f64,
    beta_max: f64,
) -> Result<DiagnosticReport> {
    let c = 0.5 * sigma * (m - beta_max / (lambda_min * sigma));
    if !(c > 0.0) {
        return Err(Error::InfeasibleParameters(format!(
            "rate constant c = (sigma/2)(M - beta_bar/(lambda_min sigma)) = {c:e} must be positive \
             (requires M > {:e})",
            beta_max / (lambda_min * sigma)
        )));
    }
    need(trace, 3)?;
    let h = |r: &TraceRecord| lyapunov(r.psi, r.bregman_step, m);
    let h1 = h(&trace[1]);
    let mut min_sq = f64::INFINITY;
    let slacks = (1..trace.len() - 1).map(|k| {
        min_sq = min_sq.min(trace[k].step_norm.powi(2));
        let bound = (h1 - h(&trace[k + 1])) / (k as f64 * c);
        (k, bound - min_sq)
    });
    Ok(
        DiagnosticReport::from_slacks("rate_bound", RATE_TOL, slacks.collect::<Vec<_>>())
            .with("c", c),
    )
}

/// `Σ_{k=1}^{N−1} D_h(xᵏ, xᵏ⁻¹) ≤ (H₀ − H_N)/(M − β̄/(λ̲σ))`.
pub fn check_summable_steps(
    trace: &[TraceRecord],
    m: f64,
    sigma: f64,
    lambda_min: f64,
    beta_max: f64,
) -> Result<DiagnosticReport> {
    need(trace, 2)?;
    let gap = m - beta_max / (lambda_min * sigma);
    if !(gap > 0.0) {
        return Err(Error::InfeasibleParameters(format!(
            "M = {m:e} must exceed beta_bar/(lambda_min sigma) = {:e}",
            beta_max / (lambda_min * sigma)
        )));
    }
    let n = trace.len() - 1;
    let h = |r: &TraceRecord| lyapunov(r.psi, r.bregman_step, m);
    let total: f64 = trace[1..n].iter().map(|r| r.bregman_step).sum();
    let bound = (h(&trace[0]) - h(&trace[n])) / gap;
    Ok(
        DiagnosticReport::from_slacks("bregman_steps_summable", SUMMABLE_TOL, [(n, bound - total)])
            .with("sum", total)
            .with("bound", bound),
    )
}

/// `max ‖xᵏ‖ ≤ 10⁶·(1 + ‖x⁰‖)` along the trace.
pub fn check_bounded(trace: &[TraceRecord]) -> Result<DiagnosticReport> {
    need(trace, 1)?;
    let cap = 1e6 * (1.0 + trace[0].iterate_norm);
    let report = DiagnosticReport::from_slacks(
        "bounded_iterates",
        0.0,
        trace.iter().map(|r| (r.k, (cap - r.iterate_norm) / cap)),
    );
    let max = trace.iter().map(|r| r.iterate_norm).fold(0.0, f64::max);
    Ok(report.with("max_norm", max))
}

/// Observable proxies for finite length and KL-type behaviour. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteLengthReport {
    /// `Σₖ ‖xᵏ − xᵏ⁻¹‖`
    pub cumulative_length: f64,
    /// Least-squares slope of `ln ‖xᵏ − xᵏ⁻¹‖` against `k` over the second half of the trace.
    pub tail_slope: f64,
    /// Smallest `b` with `‖vᵏ‖ ≤ (b/2)(‖xᵏ − xᵏ⁻¹‖ + ‖xᵏ⁻¹ − xᵏ⁻²‖)` along the trace.
    pub residual_ratio: f64,
    /// Last Ψ value, as an estimate of `lim Ψ(xᵏ)`.
    pub psi_limit_estimate: f64,
}

pub fn finite_length_report(trace: &[TraceRecord]) -> Result<FiniteLengthReport> {
    need(trace, 3)?;
    let cumulative_length = trace.iter().skip(1).map(|r| r.step_norm).sum();

    let tail: Vec<(f64, f64)> = trace[trace.len() / 2..]
        .iter()
        .filter(|r| r.k >= 1 && r.step_norm > 0.0)
        .map(|r| (r.k as f64, r.step_norm.ln()))
        .collect();
    let tail_slope = if tail.len() >= 2 {
        let n = tail.len() as f64;
        let (mk, ml) = tail
            .iter()
            .fold((0.0, 0.0), |(a, b), (k, l)| (a + k / n, b + l / n));
        let (cov, var) = tail.iter().fold((0.0, 0.0), |(c, v), (k, l)| {
            (c + (k - mk) * (l - ml), v + (k - mk).powi(2))
        });
        cov / var
    } else {
        0.0
    };

    let residual_ratio = trace
        .windows(3)
        .filter_map(|w| {
            let denom = w[2].step_norm + w[1].step_norm;
            (denom > 0.0).then(|| 2.0 * w[2].residual_norm / denom)
        })
        .fold(0.0, f64::max);

    Ok(FiniteLengthReport {
        cumulative_length,
        tail_slope,
        residual_ratio,
        psi_limit_estimate: trace[trace.len() - 1].psi,
    })
}

/// Means of `‖xᵏ − xᵏ⁻¹‖` over consecutive windows of `window` steps (from `k = 1`),
/// checked to be nonincreasing over the second half of the windows.
pub fn check_windowed_decay(trace: &[TraceRecord], window: usize) -> Result<DiagnosticReport> {
    if window == 0 {
        return Err(Error::Configuration("window must be positive".into()));
    }
    need(trace, 1 + 2 * window)?;
    let means: Vec<f64> = trace[1..]
        .chunks_exact(window)
        .map(|c| c.iter().map(|r| r.step_norm).sum::<f64>() / window as f64)
        .collect();
    let start = (means.len() / 2).max(1);
    let report = DiagnosticReport::from_slacks(
        "windowed_step_decay",
        0.0,
        (start..means.len()).map(|i| (1 + i * window, means[i - 1] - means[i])),
    );
    Ok(report
        .with("windows", means.len() as f64)
        .with("first_checked_window", start as f64))
}

/// The gated checks run after a solve: descent family, plus the rate bound and
/// summability when the Lyapunov window has interior, plus boundedness.
pub fn standard_checks(
    result: &RunResult,
    problem: &CompositeProblem,
    schedule: &ParameterSchedule,
) -> Result<Vec<DiagnosticReport>> {
    let trace = &result.records;
    let (l, sigma) = (problem.smad_constant(), problem.kernel().sigma());
    let mut reports = Vec::new();
    if trace.len() >= 2 {
        reports.extend(check_descent(trace, result.m, l, sigma, schedule)?);
    }
    let (lam, beta) = (schedule.lambda_min(), schedule.beta_max());
    let strict = result.m > beta / (lam * sigma);
    if strict && trace.len() >= 3 {
        reports.push(check_rate_bound(trace, result.m, sigma, lam, beta)?);
    }
    if strict && trace.len() >= 2 {
        reports.push(check_summable_steps(trace, result.m, sigma, lam, beta)?);
    }
    reports.push(check_bounded(trace)?);
    Ok(reports)
}
