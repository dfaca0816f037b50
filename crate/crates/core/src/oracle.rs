//! Brute-force references for validating the closed forms.
//!
//! Objective values here are recomputed from scratch: nothing in this module
//! calls into the kernel gradients, the prox, or the smooth-part formulas it is
//! meant to check. (`LongRun` is the one exception and is documented as such.)

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::par::{self, Execution};
use crate::problems::{CompositeProblem, NonsmoothPart, SmoothKind};
use crate::solver::{self, ParameterSchedule, StopRule};

/// Points per dimension in each refinement round; spans ±2 coarse cells at 1/10 spacing.
const ZOOM_POINTS: usize = 41;
const ZOOM_ROUNDS: usize = 2;
const MAX_GRID_DIM: usize = 3;
const MAX_ENUM_DIM: usize = 8;

/// Central-difference gradient.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>, epsilon: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let xi = x[i];
        probe[i] = xi + epsilon;
        let up = f(&probe);
        probe[i] = xi - epsilon;
        let down = f(&probe);
        probe[i] = xi;
        (up - down) / (2.0 * epsilon)
    })
}

/// An axis-aligned tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_dim: usize,
}

impl GridSpec {
    pub fn cube(d: usize, half_width: f64, points_per_dim: usize) -> Self {
        GridSpec {
            lower: vec![-half_width; d],
            upper: vec![half_width; d],
            points_per_dim,
        }
    }

    /// A symmetric grid large enough to contain the prox of `p`, with an odd
    /// number of points so that 0 is a grid point.
    pub fn for_prox(p: &DVector<f64>, points_per_dim: usize) -> Self {
        GridSpec::cube(p.len(), p.norm() + 1.0, points_per_dim | 1)
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.lower.len(),
            });
        }
        if self.points_per_dim < 3 {
            return Err(Error::Configuration(
                "grid needs at least 3 points per dimension".into(),
            ));
        }
        let ok = self
            .lower
            .iter()
            .zip(&self.upper)
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi);
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration(
                "grid bounds must be finite with lower < upper".into(),
            ))
        }
    }

    fn cell(&self, i: usize) -> f64 {
        (self.upper[i] - self.lower[i]) / (self.points_per_dim - 1) as f64
    }
}

/// Grid minimizer and the diameter of the finest cell used to find it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub cell_diameter: f64,
}

fn kernel_value(kind: KernelKind, x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    match kind {
        KernelKind::Quadratic => sq / 2.0,
        KernelKind::QuarticNorm => sq * sq / 4.0 + sq / 2.0,
    }
}

fn penalty(g: &NonsmoothPart, x: &[f64]) -> f64 {
    match *g {
        NonsmoothPart::Zero => 0.0,
        NonsmoothPart::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
        NonsmoothPart::L0 { weight } => weight * x.iter().filter(|v| **v != 0.0).count() as f64,
    }
}

/// Exhaustive search over a tensor grid. Returns the best point, its value,
/// and whether it sits on the outer boundary in some coordinate.
fn grid_search<F>(obj: &F, lower: &[f64], cell: &[f64], n: usize) -> (Vec<f64>, f64, bool)
where
    F: Fn(&[f64]) -> f64,
{
    let d = lower.len();
    let mut idx = vec![0usize; d];
    let mut point: Vec<f64> = lower.to_vec();
    let mut best = (point.clone(), f64::INFINITY, idx.clone());
    loop {
        for j in 0..d {
            point[j] = lower[j] + idx[j] as f64 * cell[j];
        }
        let v = obj(&point);
        if v < best.1 {
            best = (point.clone(), v, idx.clone());
        }
        // odometer
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] < n {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }
    let on_boundary = best.2.iter().any(|&i| i == 0 || i == n - 1);
    (best.0, best.1, on_boundary)
}

/// Coarse search on `grid` followed by [`ZOOM_ROUNDS`] rounds of 10× refinement.
/// Coordinates listed in `free_lower` may touch their lower bound.
fn minimize_on_grid<F>(obj: &F, grid: &GridSpec, free_lower: bool) -> Result<(Vec<f64>, f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let d = grid.lower.len();
    let n = grid.points_per_dim;
    let mut cell: Vec<f64> = (0..d).map(|i| grid.cell(i)).collect();
    let (mut x, mut value, _) = grid_search(obj, &grid.lower, &cell, n);
    for j in 0..d {
        let at_lower = (x[j] - grid.lower[j]).abs() < 0.5 * cell[j];
        let at_upper = (grid.upper[j] - x[j]).abs() < 0.5 * cell[j];
        if at_upper || (at_lower && !free_lower) {
            return Err(Error::Inconclusive(format!(
                "grid incumbent lies on the boundary in coordinate {j}; enlarge the bounds"
            )));
        }
    }
    for _ in 0..ZOOM_ROUNDS {
        let half = (ZOOM_POINTS - 1) / 2;
        let lower: Vec<f64> = (0..d)
            .map(|j| x[j] - half as f64 * cell[j] / 10.0)
            .collect();
        cell.iter_mut().for_each(|c| *c /= 10.0);
        let lower: Vec<f64> = if free_lower {
            lower
                .iter()
                .zip(&grid.lower)
                .map(|(l, g)| l.max(*g))
                .collect()
        } else {
            lower
        };
        let (nx, nv, _) = grid_search(obj, &lower, &cell, ZOOM_POINTS);
        if nv <= value {
            x = nx;
            value = nv;
        }
    }
    let diameter = cell.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok((x, value, diameter))
}

/// Minimizes `λ·g(x) + h(x) − ⟨p, x⟩` by exhaustive search.
///
/// * `g = 0`: the problem is radial; a 1-D search over `x = s·p/‖p‖`,
///   `s ∈ [0, 1 + ‖p‖]` (any dimension).
/// * `g = l0`: one search per support pattern, keeping the best (d ≤ 3).
/// * `g = l1`: a full tensor grid (d ≤ 3).
pub fn prox_oracle(
    g: &NonsmoothPart,
    kernel: KernelKind,
    p: &DVector<f64>,
    lambda: f64,
    grid: &GridSpec,
) -> Result<OracleSolution> {
    let d = p.len();
    let ps: Vec<f64> = p.iter().copied().collect();
    let full = |x: &[f64]| -> f64 {
        lambda * penalty(g, x) + kernel_value(kernel, x)
            - x.iter().zip(&ps).map(|(a, b)| a * b).sum::<f64>()
    };

    if let NonsmoothPart::Zero = g {
        let pn = p.norm();
        if pn == 0.0 {
            return Ok(OracleSolution {
                x: DVector::zeros(d),
                value: 0.0,
                cell_diameter: 0.0,
            });
        }
        // h(s·u) for a unit u only depends on s.
        let radial = |s: &[f64]| kernel_value(kernel, s) - s[0] * pn;
        let line = GridSpec {
            lower: vec![0.0],
            upper: vec![1.0 + pn],
            points_per_dim: grid.points_per_dim,
        };
        line.validate(1)?;
        let (s, value, diameter) = minimize_on_grid(&radial, &line, true)?;
        return Ok(OracleSolution {
            x: p * (s[0] / pn),
            value,
            cell_diameter: diameter,
        });
    }

    grid.validate(d)?;
    if d > MAX_GRID_DIM {
        return Err(Error::Unsupported(format!(
            "grid oracle handles d <= {MAX_GRID_DIM}, got d = {d}"
        )));
    }

    match g {
        NonsmoothPart::L0 { .. } => {
            let mut best: Option<OracleSolution> = None;
            for mask in 0u32..(1 << d) {
                let support: Vec<usize> = (0..d).filter(|j| mask & (1 << j) != 0).collect();
                let (x, diameter) = if support.is_empty() {
                    (vec![0.0; d], 0.0)
                } else {
                    // Inside a fixed support the penalty is constant; search the smooth part only.
                    let embed = |z: &[f64]| {
                        let mut x = vec![0.0; d];
                        for (k, &j) in support.iter().enumerate() {
                            x[j] = z[k];
                        }
                        x
                    };
                    let smooth = |z: &[f64]| {
                        let x = embed(z);
                        kernel_value(kernel, &x)
                            - x.iter().zip(&ps).map(|(a, b)| a * b).sum::<f64>()
                    };
                    let sub = GridSpec {
                        lower: support.iter().map(|&j| grid.lower[j]).collect(),
                        upper: support.iter().map(|&j| grid.upper[j]).collect(),
                        points_per_dim: grid.points_per_dim,
                    };
                    let (z, _, diameter) = minimize_on_grid(&smooth, &sub, false)?;
                    (embed(&z), diameter)
                };
                let value = full(&x);
                if best.as_ref().is_none_or(|b| value < b.value) {
                    best = Some(OracleSolution {
                        x: DVector::from_vec(x),
                        value,
                        cell_diameter: diameter,
                    });
                }
            }
            let mut best = best.expect("the empty support is always evaluated");
            best.cell_diameter = (0..d)
                .map(|j| (grid.cell(j) / 100.0).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok(best)
        }
        _ => {
            let (x, value, diameter) = minimize_on_grid(&full, grid, false)?;
            Ok(OracleSolution {
                x: DVector::from_vec(x),
                value,
                cell_diameter: diameter,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMethod {
    /// Exact lasso solution by enumerating the 3^d sign patterns (d ≤ 8).
    SignEnumeration,
    /// Plain Bregman proximal gradient with `λ = 0.5/L` for up to 10⁶ iterations.
    /// Only a critical point on nonconvex instances; shares code with the solver.
    LongRun,
}

/// A reference minimizer and its objective value.
pub fn reference_solution(
    problem: &CompositeProblem,
    method: ReferenceMethod,
) -> Result<(DVector<f64>, f64)> {
    match method {
        ReferenceMethod::SignEnumeration => sign_enumeration(problem, Execution::default()),
        ReferenceMethod::LongRun => long_run(problem),
    }
}

fn sign_enumeration(problem: &CompositeProblem, exec: Execution) -> Result<(DVector<f64>, f64)> {
    let f = problem.smooth();
    let weight = match (f.kind(), problem.nonsmooth(), problem.kernel().kind()) {
        (SmoothKind::LeastSquares, NonsmoothPart::L1 { weight }, KernelKind::Quadratic) => *weight,
        _ => {
            return Err(Error::Unsupported(
                "sign enumeration needs least squares + l1 with the quadratic kernel".into(),
            ))
        }
    };
    let (a, b) = (f.design(), f.data());
    let d = a.ncols();
    if d > MAX_ENUM_DIM {
        return Err(Error::Unsupported(format!(
            "3^{d} sign patterns exceed the enumeration budget (d <= {MAX_ENUM_DIM})"
        )));
    }
    let objective = |x: &DVector<f64>| {
        0.5 * (a * x - b).norm_squared() + weight * x.iter().map(|v| v.abs()).sum::<f64>()
    };
    let patterns = 3usize.pow(d as u32);
    let candidates = par::map_range(exec, patterns, |code| {
        let mut signs = vec![0.0; d];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as f64 - 1.0;
            c /= 3;
        }
        let support: Vec<usize> = (0..d).filter(|&j| signs[j] != 0.0).collect();
        let mut x = DVector::zeros(d);
        if !support.is_empty() {
            let a_s = DMatrix::from_fn(a.nrows(), support.len(), |i, k| a[(i, support[k])]);
            let s_s = DVector::from_fn(support.len(), |k, _| signs[support[k]]);
            let rhs = a_s.tr_mul(b) - s_s * weight;
            let z = a_s.tr_mul(&a_s).cholesky()?.solve(&rhs);
            for (k, &j) in support.iter().enumerate() {
                if z[k] * signs[j] < 0.0 {
                    return None;
                }
                x[j] = z[k];
            }
        }
        let v = objective(&x);
        Some((x, v))
    });
    candidates
        .into_iter()
        .flatten()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .ok_or_else(|| Error::Inconclusive("no sign-consistent candidate found".into()))
}

fn long_run(problem: &CompositeProblem) -> Result<(DVector<f64>, f64)> {
    let schedule = ParameterSchedule::constant(0.5 / problem.smad_constant(), 0.0);
    let stop = StopRule {
        max_iter: 1_000_000,
        residual_tol: 1e-12,
        step_tol: 0.0,
    };
    let x0 = DVector::from_element(problem.dimension(), 1.0);
    let out = solver::run(problem, &schedule, x0, &stop)?;
    let psi = problem.psi(&out.x)?;
    Ok((out.x, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::problems::SmoothPart;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn fd_examples() {
        let g = fd_gradient(|x| 0.5 * x.norm_squared(), &dvector![1.0, 2.0], 1e-5);
        assert!((g - dvector![1.0, 2.0]).norm() < 1e-8);
        let g = fd_gradient(|_| 3.0, &dvector![1.0, 2.0], 1e-5);
        assert_eq!(g, dvector![0.0, 0.0]);
        // ¼(x₁² − 1)² has derivative (x₁² − 1)x₁ = 6 at x₁ = 2
        let g = fd_gradient(
            |x| 0.25 * (x[0] * x[0] - 1.0).powi(2),
            &dvector![2.0, 0.0],
            1e-5,
        );
        assert!((g - dvector![6.0, 0.0]).norm() < 1e-8);
    }

    #[test]
    fn prox_oracle_examples() {
        let p = dvector![1.0, 0.0];
        let sol = prox_oracle(
            &NonsmoothPart::Zero,
            KernelKind::QuarticNorm,
            &p,
            1.0,
            &GridSpec::for_prox(&p, 41),
        )
        .unwrap();
        assert!((sol.x[0] - 0.6823).abs() < 1e-3 && sol.x[1] == 0.0);

        let p = dvector![2.0, -0.5];
        let sol = prox_oracle(
            &NonsmoothPart::l1(1.0).unwrap(),
            KernelKind::Quadratic,
            &p,
            1.0,
            &GridSpec::for_prox(&p, 41),
        )
        .unwrap();
        assert!((sol.x - dvector![1.0, 0.0]).norm() <= sol.cell_diameter);

        let p = dvector![1.5, 0.1];
        let sol = prox_oracle(
            &NonsmoothPart::l0(1.0).unwrap(),
            KernelKind::Quadratic,
            &p,
            1.0,
            &GridSpec::for_prox(&p, 41),
        )
        .unwrap();
        assert!((sol.x - dvector![1.5, 0.0]).norm() <= sol.cell_diameter);
    }

    #[test]
    fn oracle_boundary_is_inconclusive() {
        let p = dvector![5.0, 0.0];
        let small = GridSpec::cube(2, 1.0, 21);
        assert!(matches!(
            prox_oracle(
                &NonsmoothPart::l1(0.1).unwrap(),
                KernelKind::Quadratic,
                &p,
                1.0,
                &small
            ),
            Err(Error::Inconclusive(_))
        ));
        let p4 = dvector![1.0, 0.0, 0.0, 0.0];
        assert!(matches!(
            prox_oracle(
                &NonsmoothPart::l1(0.1).unwrap(),
                KernelKind::Quadratic,
                &p4,
                1.0,
                &GridSpec::for_prox(&p4, 5)
            ),
            Err(Error::Unsupported(_))
        ));
        let bad = GridSpec::cube(2, 1.0, 2);
        assert!(prox_oracle(
            &NonsmoothPart::l1(0.1).unwrap(),
            KernelKind::Quadratic,
            &p,
            1.0,
            &bad
        )
        .is_err());
    }

    #[test]
    fn scalar_lasso() {
        let f = SmoothPart::least_squares(dmatrix![1.0], dvector![1.0]).unwrap();
        let p = CompositeProblem::new(
            f,
            NonsmoothPart::l1(0.3).unwrap(),
            Kernel::quadratic(1).unwrap(),
        )
        .unwrap();
        let (x, psi) = reference_solution(&p, ReferenceMethod::SignEnumeration).unwrap();
        assert!((x[0] - 0.7).abs() < 1e-15);
        assert!((psi - 0.255).abs() < 1e-15);
    }

    #[test]
    fn dominant_weight_gives_zero() {
        let a = dmatrix![1.0, 2.0; -1.0, 0.5; 0.3, 0.3];
        let b = dvector![1.0, -1.0, 2.0];
        let max_corr = a.tr_mul(&b).amax();
        let f = SmoothPart::least_squares(a, b).unwrap();
        let p = CompositeProblem::new(
            f,
            NonsmoothPart::l1(max_corr).unwrap(),
            Kernel::quadratic(2).unwrap(),
        )
        .unwrap();
        let (x, _) = reference_solution(&p, ReferenceMethod::SignEnumeration).unwrap();
        assert_eq!(x, dvector![0.0, 0.0]);
    }

    #[test]
    fn enumeration_rejects_other_problems() {
        let f = SmoothPart::quadratic_inverse(dmatrix![1.0, 0.0], dvector![1.0]).unwrap();
        let p = CompositeProblem::new(f, NonsmoothPart::Zero, Kernel::quartic(2).unwrap()).unwrap();
        assert!(matches!(
            reference_solution(&p, ReferenceMethod::SignEnumeration),
            Err(Error::Unsupported(_))
        ));
        let f = SmoothPart::least_squares(DMatrix::identity(9, 9), DVector::zeros(9)).unwrap();
        let p = CompositeProblem::new(
            f,
            NonsmoothPart::l1(1.0).unwrap(),
            Kernel::quadratic(9).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            reference_solution(&p, ReferenceMethod::SignEnumeration),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn long_run_finds_exact_fit() {
        // b = ⟨aᵢ, x̄⟩² with x̄ = (1, 1): Ψ* = 0 at ±x̄
        let a = dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0];
        let f = SmoothPart::quadratic_inverse(a, dvector![1.0, 1.0, 4.0]).unwrap();
        let p = CompositeProblem::new(f, NonsmoothPart::Zero, Kernel::quartic(2).unwrap()).unwrap();
        let (x, psi) = reference_solution(&p, ReferenceMethod::LongRun).unwrap();
        assert!(psi < 1e-12, "{psi}");
        assert!((x.abs() - dvector![1.0, 1.0]).norm() < 1e-6);
    }
}
