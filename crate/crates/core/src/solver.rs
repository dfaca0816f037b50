//! The inertial Bregman proximal gradient iteration.
//!
//! Each step solves
//!
//! ```text
//! x⁺ ∈ argmin { λₖ g(x) + h(x) − ⟨p, x⟩ },   p = ∇h(xᵏ) − λₖ∇f(xᵏ) + βₖ(xᵏ − xᵏ⁻¹)
//! ```
//!
//! and progress is tracked through the merit value `H = Ψ(xᵏ) + M·D_h(xᵏ, xᵏ⁻¹)`,
//! which is nonincreasing whenever `M` lies in the window returned by
//! [`validate_parameters`].

use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problems::{bregman_prox, CompositeProblem};

/// A step-size or inertia sequence. Explicit sequences hold their last value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl StepRule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            StepRule::Constant(v) => *v,
            StepRule::Sequence(seq) => seq[k.min(seq.len() - 1)],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            StepRule::Constant(v) => std::slice::from_ref(v),
            StepRule::Sequence(seq) => seq,
        }
    }

    pub fn inf(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup(&self) -> f64 {
        self.values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchedule {
    pub lambda: StepRule,
    pub beta: StepRule,
    /// Lyapunov weight; the upper end of the feasible window when unset.
    pub m: Option<f64>,
}

impl ParameterSchedule {
    pub fn constant(lambda: f64, beta: f64) -> Self {
        ParameterSchedule {
            lambda: StepRule::Constant(lambda),
            beta: StepRule::Constant(beta),
            m: None,
        }
    }

    /// `λ = 0.99/L` and `β = 0.9·(σ/2)(1 − λL)`, strictly inside the feasible region.
    pub fn default_for(l: f64, sigma: f64) -> Self {
        let lambda = 0.99 / l;
        ParameterSchedule::constant(lambda, 0.9 * max_inertia(l, sigma, lambda, lambda))
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = Some(m);
        self
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda.inf()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda.sup()
    }

    pub fn beta_max(&self) -> f64 {
        self.beta.sup()
    }
}

/// Supremum of admissible inertia, `(σ/2)(λ̲/λ̄ − λ̲L)`.
pub fn max_inertia(l: f64, sigma: f64, lambda_min: f64, lambda_max: f64) -> f64 {
    0.5 * sigma * (lambda_min / lambda_max - lambda_min * l)
}

/// Feasible Lyapunov weights `[β̄/(λ̲σ), 1/λ̄ − L − β̄/(σλ̲)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MWindow {
    pub lo: f64,
    pub hi: f64,
}

impl MWindow {
    /// Nonempty with interior: sufficient decrease and the O(1/K) bound apply.
    pub fn is_strict(&self) -> bool {
        self.lo < self.hi
    }

    pub fn contains(&self, m: f64) -> bool {
        self.lo <= m && m <= self.hi
    }
}

/// Checks the step-size/inertia envelopes and returns the feasible window for `M`.
pub fn validate_parameters(l: f64, sigma: f64, schedule: &ParameterSchedule) -> Result<MWindow> {
    let bad = |msg: String| Err(Error::InfeasibleParameters(msg));
    if !(l > 0.0 && l.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
        return bad(format!(
            "L and sigma must be positive and finite (L = {l}, sigma = {sigma})"
        ));
    }
    if let StepRule::Sequence(seq) = &schedule.lambda {
        if seq.is_empty() {
            return bad("lambda sequence is empty".into());
        }
    }
    if let StepRule::Sequence(seq) = &schedule.beta {
        if seq.is_empty() {
            return bad("beta sequence is empty".into());
        }
    }
    let (lam_lo, lam_hi) = (schedule.lambda_min(), schedule.lambda_max());
    let (beta_lo, beta_hi) = (schedule.beta.inf(), schedule.beta_max());
    if !(lam_lo > 0.0) || !lam_hi.is_finite() {
        return bad(format!(
            "step sizes must satisfy 0 < lambda_k, got inf lambda_k = {lam_lo}"
        ));
    }
    if lam_hi > 1.0 / l {
        return bad(format!(
            "step sizes must satisfy lambda_k <= 1/L = {:e}, got sup lambda_k = {lam_hi:e}",
            1.0 / l
        ));
    }
    if !(beta_lo >= 0.0) || !(beta_hi < 1.0) {
        return bad(format!(
            "inertia must satisfy 0 <= beta_k < 1, got range [{beta_lo}, {beta_hi}]"
        ));
    }
    let lo = beta_hi / (lam_lo * sigma);
    let hi = 1.0 / lam_hi - l - beta_hi / (sigma * lam_lo);
    if lo > hi {
        return bad(format!(
            "Lyapunov window is empty: M_lo = {lo:e} > M_hi = {hi:e}; inertia must satisfy \
             beta_bar < sigma/2 (lambda_min/lambda_max - lambda_min L) = {:e}, got beta_bar = {beta_hi:e}",
            max_inertia(l, sigma, lam_lo, lam_hi)
        ));
    }
    let window = MWindow { lo, hi };
    if let Some(m) = schedule.m {
        if !window.contains(m) {
            return bad(format!(
                "M = {m:e} lies outside the Lyapunov window [{lo:e}, {hi:e}]"
            ));
        }
    }
    Ok(window)
}

/// Iterate pair `(xᵏ, xᵏ⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub k: usize,
    pub x_curr: DVector<f64>,
    pub x_prev: DVector<f64>,
}

impl SolverState {
    /// `x⁰ = x⁻¹`.
    pub fn start(x0: DVector<f64>) -> Self {
        SolverState {
            k: 0,
            x_prev: x0.clone(),
            x_curr: x0,
        }
    }
}

/// One iteration. With `beta = 0` this is the plain Bregman proximal gradient step.
pub fn ibpg_step(
    state: &SolverState,
    problem: &CompositeProblem,
    lambda: f64,
    beta: f64,
) -> Result<SolverState> {
    let h = problem.kernel();
    let x = &state.x_curr;
    let mut p = h.gradient(x)?;
    p.axpy(-lambda, &problem.smooth().gradient(x)?, 1.0);
    p.axpy(beta, &(x - &state.x_prev), 1.0);
    let next = bregman_prox(problem.nonsmooth(), h, &p, lambda)?;
    Ok(SolverState {
        k: state.k + 1,
        x_prev: x.clone(),
        x_curr: next,
    })
}

/// The element of `∂Ψ(xᵏ)` read off the optimality condition of the step that produced `xᵏ`:
///
/// `vᵏ = ∇f(xᵏ) − ∇f(xᵏ⁻¹) + (βₖ₋₁/λₖ₋₁)(xᵏ⁻¹ − xᵏ⁻²) − (∇h(xᵏ) − ∇h(xᵏ⁻¹))/λₖ₋₁`
pub fn stationarity_residual(
    x_k: &DVector<f64>,
    x_km1: &DVector<f64>,
    x_km2: &DVector<f64>,
    lambda_km1: f64,
    beta_km1: f64,
    problem: &CompositeProblem,
) -> Result<DVector<f64>> {
    check_dim(x_k.len(), x_km1.len())?;
    check_dim(x_k.len(), x_km2.len())?;
    let f = problem.smooth();
    let h = problem.kernel();
    let mut v = f.gradient(x_k)? - f.gradient(x_km1)?;
    v.axpy(beta_km1 / lambda_km1, &(x_km1 - x_km2), 1.0);
    v.axpy(
        -1.0 / lambda_km1,
        &(h.gradient(x_k)? - h.gradient(x_km1)?),
        1.0,
    );
    Ok(v)
}

#[inline]
pub fn lyapunov(psi_k: f64, dh_k: f64, m: f64) -> f64 {
    psi_k + m * dh_k
}

/// Per-iteration measurements.
///
/// `lambda`/`beta` are the parameters applied at iteration `k`, i.e. the ones
/// that map `xᵏ` to `xᵏ⁺¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub psi: f64,
    pub lyapunov: f64,
    /// `D_h(xᵏ, xᵏ⁻¹)`
    pub bregman_step: f64,
    /// `‖xᵏ − xᵏ⁻¹‖`
    pub step_norm: f64,
    /// `‖vᵏ‖`; at `k = 0`, `dist(0, ∇f(x⁰) + ∂g(x⁰))`.
    pub residual_norm: f64,
    pub lambda: f64,
    pub beta: f64,
    /// `‖xᵏ‖`, kept for boundedness checks but not written to CSV.
    #[serde(skip)]
    pub iterate_norm: f64,
}

pub const TRACE_HEADER: [&str; 8] = [
    "k",
    "psi",
    "lyapunov",
    "bregman_step",
    "step_norm",
    "residual_norm",
    "lambda",
    "beta",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iter: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iter: 10_000,
            residual_tol: 1e-8,
            step_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Residual,
    StepNorm,
    MaxIter,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Residual => "residual",
            Termination::StepNorm => "step_norm",
            Termination::MaxIter => "max_iter",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<TraceRecord>,
    pub x: DVector<f64>,
    pub termination: Termination,
    pub m: f64,
    pub window: MWindow,
    /// Every iterate `x⁰ … xᴷ`, if requested.
    pub iterates: Option<Vec<DVector<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub iterations: usize,
    pub termination_reason: Termination,
    pub final_psi: f64,
    pub final_residual: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub window: [f64; 2],
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    pub fn summary(&self) -> Summary {
        let last = self.records.last().expect("trace always holds x0");
        Summary {
            iterations: last.k,
            termination_reason: self.termination,
            final_psi: last.psi,
            final_residual: last.residual_norm,
            m: self.m,
            window: [self.window.lo, self.window.hi],
        }
    }
}

/// Writes the trace as CSV with [`TRACE_HEADER`] as header row.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    if records.is_empty() {
        w.write_record(TRACE_HEADER).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// A validated problem/schedule pair ready to iterate.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    problem: &'a CompositeProblem,
    schedule: &'a ParameterSchedule,
    window: MWindow,
    m: f64,
    keep_iterates: bool,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a CompositeProblem, schedule: &'a ParameterSchedule) -> Result<Self> {
        let window =
            validate_parameters(problem.smad_constant(), problem.kernel().sigma(), schedule)?;
        let m = schedule.m.unwrap_or(window.hi);
        Ok(Solver {
            problem,
            schedule,
            window,
            m,
            keep_iterates: false,
        })
    }

    pub fn keep_iterates(mut self, keep: bool) -> Self {
        self.keep_iterates = keep;
        self
    }

    pub fn window(&self) -> MWindow {
        self.window
    }

    pub fn weight(&self) -> f64 {
        self.m
    }

    pub fn run(&self, x0: DVector<f64>, stop: &StopRule) -> Result<RunResult> {
        let problem = self.problem;
        check_dim(problem.dimension(), x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Configuration("starting point is not finite".into()));
        }
        let h = problem.kernel();
        let mut records = Vec::new();
        let psi0 = problem.psi(&x0)?;
        let first = TraceRecord {
            k: 0,
            psi: psi0,
            lyapunov: lyapunov(psi0, 0.0, self.m),
            bregman_step: 0.0,
            step_norm: 0.0,
            residual_norm: problem.criticality(&x0)?,
            lambda: self.schedule.lambda.at(0),
            beta: self.schedule.beta.at(0),
            iterate_norm: x0.norm(),
        };
        if let Some(what) = non_finite(&first) {
            return Err(Error::Diverged {
                iteration: 0,
                what,
                trace: records,
            });
        }
        records.push(first);
        let mut iterates = self.keep_iterates.then(|| vec![x0.clone()]);
        let mut state = SolverState::start(x0);
        // xᵏ⁻¹ of the state before the step, needed by the residual.
        let mut x_before_prev = state.x_prev.clone();

        let termination = loop {
            if state.k >= stop.max_iter {
                break Termination::MaxIter;
            }
            let (lambda, beta) = (
                self.schedule.lambda.at(state.k),
                self.schedule.beta.at(state.k),
            );
            let next = ibpg_step(&state, problem, lambda, beta)?;
            let k = next.k;
            if next.x_curr.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    iteration: k,
                    what: "iterate",
                    trace: records,
                });
            }
            let v = stationarity_residual(
                &next.x_curr,
                &next.x_prev,
                &x_before_prev,
                lambda,
                beta,
                problem,
            )?;
            let psi = problem.psi(&next.x_curr)?;
            let dh = h.bregman_distance(&next.x_curr, &next.x_prev)?;
            let rec = TraceRecord {
                k,
                psi,
                lyapunov: lyapunov(psi, dh, self.m),
                bregman_step: dh,
                step_norm: (&next.x_curr - &next.x_prev).norm(),
                residual_norm: v.norm(),
                lambda: self.schedule.lambda.at(k),
                beta: self.schedule.beta.at(k),
                iterate_norm: next.x_curr.norm(),
            };
            if let Some(what) = non_finite(&rec) {
                return Err(Error::Diverged {
                    iteration: k,
                    what,
                    trace: records,
                });
            }
            let (residual, step) = (rec.residual_norm, rec.step_norm);
            records.push(rec);
            if let Some(its) = iterates.as_mut() {
                its.push(next.x_curr.clone());
            }
            x_before_prev = state.x_prev;
            state = next;
            if residual <= stop.residual_tol {
                break Termination::Residual;
            }
            if step <= stop.step_tol {
                break Termination::StepNorm;
            }
        };

        Ok(RunResult {
            records,
            x: state.x_curr,
            termination,
            m: self.m,
            window: self.window,
            iterates,
        })
    }
}

fn non_finite(r: &TraceRecord) -> Option<&'static str> {
    [
        ("psi", r.psi),
        ("lyapunov", r.lyapunov),
        ("bregman_step", r.bregman_step),
        ("step_norm", r.step_norm),
        ("residual_norm", r.residual_norm),
    ]
    .into_iter()
    .find(|(_, v)| !v.is_finite())
    .map(|(name, _)| name)
}

/// Validates `schedule` against `problem` and iterates from `(x0, x0)`.
pub fn run(
    problem: &CompositeProblem,
    schedule: &ParameterSchedule,
    x0: DVector<f64>,
    stop: &StopRule,
) -> Result<RunResult> {
    Solver::new(problem, schedule)?.run(x0, stop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::problems::{NonsmoothPart, SmoothPart};
    use nalgebra::{dmatrix, dvector};

    /// f = ½x² on ℝ, g = 0, quadratic kernel, L = 1.
    fn half_square() -> CompositeProblem {
        let f = SmoothPart::least_squares(dmatrix![1.0], dvector![0.0]).unwrap();
        CompositeProblem::new(f, NonsmoothPart::Zero, Kernel::quadratic(1).unwrap()).unwrap()
    }

    #[test]
    fn window_examples() {
        let w = validate_parameters(1.0, 1.0, &ParameterSchedule::constant(0.5, 0.2)).unwrap();
        assert_eq!((w.lo, w.hi), (0.4, 0.6));
        assert!(w.is_strict());
        let w = validate_parameters(1.0, 1.0, &ParameterSchedule::constant(0.5, 0.0)).unwrap();
        assert_eq!((w.lo, w.hi), (0.0, 1.0));
        assert!(w.is_strict());
        let e = validate_parameters(1.0, 1.0, &ParameterSchedule::constant(0.5, 0.3)).unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::InfeasibleParameters(_)));
        assert!(
            msg.contains("beta_bar < sigma/2 (lambda_min/lambda_max - lambda_min L) = 2.5e-1"),
            "{msg}"
        );
    }

    #[test]
    fn envelope_violations() {
        let s = ParameterSchedule::constant(1.5, 0.0);
        assert!(validate_parameters(1.0, 1.0, &s).is_err());
        let s = ParameterSchedule::constant(0.5, -0.1);
        assert!(validate_parameters(1.0, 1.0, &s).is_err());
        let s = ParameterSchedule::constant(0.0, 0.0);
        assert!(validate_parameters(1.0, 1.0, &s).is_err());
        let s = ParameterSchedule::constant(0.5, 0.2).with_m(0.7);
        assert!(validate_parameters(1.0, 1.0, &s).is_err());
        let s = ParameterSchedule::constant(0.5, 0.2).with_m(0.5);
        assert!(validate_parameters(1.0, 1.0, &s).is_ok());
        let s = ParameterSchedule {
            lambda: StepRule::Sequence(vec![]),
            beta: StepRule::Constant(0.0),
            m: None,
        };
        assert!(validate_parameters(1.0, 1.0, &s).is_err());
    }

    #[test]
    fn sequence_envelopes() {
        let s = ParameterSchedule {
            lambda: StepRule::Sequence(vec![0.5, 0.25, 0.4]),
            beta: StepRule::Sequence(vec![0.0, 0.05]),
            m: None,
        };
        assert_eq!(
            (s.lambda_min(), s.lambda_max(), s.beta_max()),
            (0.25, 0.5, 0.05)
        );
        assert_eq!(s.lambda.at(10), 0.4);
        let w = validate_parameters(1.0, 1.0, &s).unwrap();
        assert_eq!(w.lo, 0.05 / 0.25);
        assert_eq!(w.hi, 2.0 - 1.0 - 0.05 / 0.25);
    }

    #[test]
    fn step_examples() {
        let p = half_square();
        let s = SolverState::start(dvector![1.0]);
        assert_eq!(ibpg_step(&s, &p, 0.5, 0.0).unwrap().x_curr, dvector![0.5]);
        let s = SolverState {
            k: 3,
            x_curr: dvector![1.0],
            x_prev: dvector![2.0],
        };
        let next = ibpg_step(&s, &p, 0.5, 0.2).unwrap();
        assert!((next.x_curr[0] - 0.3).abs() < 1e-15);
        assert_eq!(next.x_prev, dvector![1.0]);
        assert_eq!(next.k, 4);
        let s = SolverState::start(dvector![0.0]);
        assert_eq!(ibpg_step(&s, &p, 0.5, 0.2).unwrap().x_curr, dvector![0.0]);
    }

    #[test]
    fn residual_examples() {
        let p = half_square();
        let x = dvector![0.7];
        assert_eq!(
            stationarity_residual(&x, &x, &x, 0.5, 0.3, &p).unwrap(),
            dvector![0.0]
        );
        let v = stationarity_residual(&dvector![0.5], &dvector![1.0], &dvector![1.0], 0.5, 0.0, &p)
            .unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn residual_equals_gradient_for_gradient_descent() {
        let a = dmatrix![2.0, 1.0; 0.5, -1.0; 1.0, 3.0];
        let f = SmoothPart::least_squares(a, dvector![1.0, 0.0, -2.0]).unwrap();
        let p = CompositeProblem::new(
            f.clone(),
            NonsmoothPart::Zero,
            Kernel::quadratic(2).unwrap(),
        )
        .unwrap();
        let lambda = 0.05;
        let x_prev = dvector![0.3, -1.2];
        let x = &x_prev - f.gradient(&x_prev).unwrap() * lambda;
        let v = stationarity_residual(&x, &x_prev, &dvector![9.0, 9.0], lambda, 0.0, &p).unwrap();
        assert!((v - f.gradient(&x).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov(2.0, 0.0, 0.6), 2.0);
        assert!((lyapunov(2.0, 0.5, 0.6) - 2.3).abs() < 1e-15);
        assert_eq!(lyapunov(2.0, 0.5, 0.0), 2.0);
    }

    #[test]
    fn run_contracts_geometrically() {
        let p = half_square();
        let stop = StopRule {
            max_iter: 1000,
            residual_tol: 1e-8,
            step_tol: 0.0,
        };
        let out = run(
            &p,
            &ParameterSchedule::constant(0.5, 0.0),
            dvector![1.0],
            &stop,
        )
        .unwrap();
        assert_eq!(out.termination, Termination::Residual);
        assert!(out.x[0].abs() < 1e-7);
        assert!(out.iterations() <= 60);
        for (k, r) in out.records.iter().enumerate() {
            assert_eq!(r.k, k);
            assert_eq!(r.lyapunov, lyapunov(r.psi, r.bregman_step, out.m));
        }
    }

    #[test]
    fn zero_iterations() {
        let p = half_square();
        let stop = StopRule {
            max_iter: 0,
            ..StopRule::default()
        };
        let out = run(
            &p,
            &ParameterSchedule::constant(0.5, 0.0),
            dvector![1.0],
            &stop,
        )
        .unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.termination, Termination::MaxIter);
        assert_eq!(out.summary().termination_reason.to_string(), "max_iter");
    }

    #[test]
    fn stationary_start_stops_on_zero_step() {
        let p = half_square();
        let stop = StopRule {
            max_iter: 100,
            residual_tol: -1.0,
            step_tol: 0.0,
        };
        let out = run(
            &p,
            &ParameterSchedule::constant(0.5, 0.2),
            dvector![0.0],
            &stop,
        )
        .unwrap();
        assert_eq!(out.termination, Termination::StepNorm);
        assert_eq!(out.records.len(), 2);
    }

    #[test]
    fn overflow_reports_divergence() {
        // L is understated so the step is far too long for this f.
        let f = SmoothPart::least_squares(dmatrix![100.0], dvector![0.0]).unwrap();
        let p = CompositeProblem::new(f, NonsmoothPart::Zero, Kernel::quadratic(1).unwrap())
            .unwrap()
            .with_smad_constant(1e-3)
            .unwrap();
        let stop = StopRule {
            max_iter: 100_000,
            residual_tol: 0.0,
            step_tol: -1.0,
        };
        let err = run(
            &p,
            &ParameterSchedule::constant(900.0, 0.0),
            dvector![1.0],
            &stop,
        )
        .unwrap_err();
        match err {
            Error::Diverged {
                trace, iteration, ..
            } => {
                assert!(!trace.is_empty());
                assert!(iteration > 0);
                assert!(trace.iter().all(|r| r.psi.is_finite()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let p = half_square();
        let stop = StopRule {
            max_iter: 3,
            residual_tol: 0.0,
            step_tol: 0.0,
        };
        let out = run(
            &p,
            &ParameterSchedule::constant(0.5, 0.0),
            dvector![1.0],
            &stop,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER.join(","));
        assert_eq!(lines.count(), 4);
        let mut buf = Vec::new();
        write_trace_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            TRACE_HEADER.join(",")
        );
    }

    #[test]
    fn summary_json_shape() {
        let p = half_square();
        let out = run(
            &p,
            &ParameterSchedule::constant(0.5, 0.2),
            dvector![1.0],
            &StopRule::default(),
        )
        .unwrap();
        let v = serde_json::to_value(out.summary()).unwrap();
        for key in [
            "iterations",
            "termination_reason",
            "final_psi",
            "final_residual",
            "M",
            "window",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["window"].as_array().unwrap().len(), 2);
    }
}
