//! Composite objectives Ψ = f + g, and the Bregman proximal subproblem.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{Kernel, KernelKind};

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmoothKind {
    /// f(x) = ½‖Ax − b‖²
    LeastSquares,
    /// f(x) = ¼ Σᵢ (⟨aᵢ, x⟩² − bᵢ)², with aᵢ the rows of A
    QuadraticInverse,
}

impl fmt::Display for SmoothKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmoothKind::LeastSquares => "least_squares",
            SmoothKind::QuadraticInverse => "quadratic_inverse",
        })
    }
}

/// The differentiable part f, built from an m×d design and an m-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPart {
    kind: SmoothKind,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl SmoothPart {
    pub fn new(kind: SmoothKind, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Configuration(
                "design matrix must be non-empty".into(),
            ));
        }
        check_dim(a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Configuration(
                "instance data contains non-finite values".into(),
            ));
        }
        Ok(SmoothPart { kind, a, b })
    }

    pub fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        SmoothPart::new(SmoothKind::LeastSquares, a, b)
    }

    pub fn quadratic_inverse(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        SmoothPart::new(SmoothKind::QuadraticInverse, a, b)
    }

    pub fn kind(&self) -> SmoothKind {
        self.kind
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dimension(&self) -> usize {
        self.a.ncols()
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dimension(), x.len())?;
        let ax = &self.a * x;
        Ok(match self.kind {
            SmoothKind::LeastSquares => 0.5 * (ax - &self.b).norm_squared(),
            SmoothKind::QuadraticInverse => {
                0.25 * ax
                    .iter()
                    .zip(self.b.iter())
                    .map(|(s, b)| (s * s - b).powi(2))
                    .sum::<f64>()
            }
        })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dimension(), x.len())?;
        let ax = &self.a * x;
        let weights = match self.kind {
            SmoothKind::LeastSquares => ax - &self.b,
            // ∇f(x) = Σᵢ (⟨aᵢ,x⟩² − bᵢ)⟨aᵢ,x⟩ aᵢ
            SmoothKind::QuadraticInverse => ax.zip_map(&self.b, |s, b| (s * s - b) * s),
        };
        Ok(self.a.tr_mul(&weights))
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }

    /// A constant `L` for which `(f, h)` is L-smooth adaptable.
    ///
    /// Least squares pairs with the quadratic kernel (`L = λ_max(AᵀA)`, by power
    /// iteration); the quadratic inverse problem pairs with the quartic kernel
    /// (`L = Σᵢ 3‖aᵢ‖⁴ + ‖aᵢ‖²|bᵢ|`). Other pairings are rejected.
    pub fn smad_constant(&self, h: &Kernel) -> Result<f64> {
        check_dim(self.dimension(), h.dimension())?;
        match (self.kind, h.kind()) {
            (SmoothKind::LeastSquares, KernelKind::Quadratic) => {
                largest_eigenvalue(&self.a.tr_mul(&self.a))
            }
            (SmoothKind::QuadraticInverse, KernelKind::QuarticNorm) => Ok(self
                .a
                .row_iter()
                .zip(self.b.iter())
                .map(|(row, b)| {
                    let sq = row.norm_squared();
                    3.0 * sq * sq + sq * b.abs()
                })
                .sum()),
            (f, h) => Err(Error::Configuration(format!(
                "no smooth-adaptable constant is known for {f} with the {h} kernel \
                 (admissible: least_squares/quadratic, quadratic_inverse/quartic)"
            ))),
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Stops once the eigen-residual ‖Bv − μv‖ drops below `1e-10·μ`.
fn largest_eigenvalue(b: &DMatrix<f64>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(b.nrows(), |_, _| StandardNormal.sample(&mut rng));
    v /= v.norm();
    let mut mu = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = b * &v;
        mu = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        if (&w - &v * mu).norm() <= POWER_ITER_TOL * mu {
            return Ok(mu);
        }
        v = w / wn;
    }
    if mu > 0.0 {
        Ok(mu)
    } else {
        Err(Error::Configuration(
            "design matrix is zero; no positive smooth-adaptable constant".into(),
        ))
    }
}

/// The nonsmooth part g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NonsmoothPart {
    Zero,
    /// weight·‖x‖₁
    L1 {
        weight: f64,
    },
    /// weight·#{i : xᵢ ≠ 0}
    L0 {
        weight: f64,
    },
}

impl NonsmoothPart {
    pub fn l1(weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(NonsmoothPart::L1 { weight })
    }

    pub fn l0(weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(NonsmoothPart::L0 { weight })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match *self {
            NonsmoothPart::Zero => 0.0,
            NonsmoothPart::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            NonsmoothPart::L0 { weight } => weight * x.iter().filter(|v| **v != 0.0).count() as f64,
        }
    }

    /// Whether the closed-form prox exists for this kernel.
    pub fn admits(&self, kernel: KernelKind) -> bool {
        !matches!(
            (self, kernel),
            (NonsmoothPart::L0 { .. }, KernelKind::QuarticNorm)
        )
    }

    /// Euclidean distance from `v` to `scale·∂g(x)` (limiting subdifferential).
    pub fn subgradient_distance(&self, v: &DVector<f64>, x: &DVector<f64>, scale: f64) -> f64 {
        match *self {
            NonsmoothPart::Zero => v.norm(),
            NonsmoothPart::L1 { weight } => {
                let tau = scale * weight;
                v.iter()
                    .zip(x.iter())
                    .map(|(vi, xi)| {
                        let d = if *xi == 0.0 {
                            (vi.abs() - tau).max(0.0)
                        } else {
                            vi - tau * xi.signum()
                        };
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            // ∂(w·1[t≠0])(0) = ℝ, and {0} elsewhere.
            NonsmoothPart::L0 { .. } => v
                .iter()
                .zip(x.iter())
                .filter(|(_, xi)| **xi != 0.0)
                .map(|(vi, _)| vi * vi)
                .sum::<f64>()
                .sqrt(),
        }
    }
}

impl fmt::Display for NonsmoothPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonsmoothPart::Zero => write!(f, "zero"),
            NonsmoothPart::L1 { weight } => write!(f, "l1({weight})"),
            NonsmoothPart::L0 { weight } => write!(f, "l0({weight})"),
        }
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight > 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(Error::Configuration(format!(
            "regularization weight must be positive, got {weight}"
        )))
    }
}

pub fn soft_threshold(p: &DVector<f64>, tau: f64) -> DVector<f64> {
    p.map(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// Keeps `pᵢ` iff `½pᵢ² > tau`; ties go to zero.
pub fn hard_threshold(p: &DVector<f64>, tau: f64) -> DVector<f64> {
    p.map(|v| if 0.5 * v * v > tau { v } else { 0.0 })
}

/// A global minimizer of `λ·g(x) + h(x) − ⟨p, x⟩`.
pub fn bregman_prox(
    g: &NonsmoothPart,
    h: &Kernel,
    p: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    check_dim(h.dimension(), p.len())?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Configuration(format!(
            "prox step must be positive, got {lambda}"
        )));
    }
    match (*g, h.kind()) {
        (NonsmoothPart::Zero, _) => h.grad_inverse(p),
        (NonsmoothPart::L1 { weight }, KernelKind::Quadratic) => {
            Ok(soft_threshold(p, lambda * weight))
        }
        // Threshold, then rescale radially: ∇h(t·q) = q keeps the support and signs of q.
        (NonsmoothPart::L1 { weight }, KernelKind::QuarticNorm) => {
            h.grad_inverse(&soft_threshold(p, lambda * weight))
        }
        (NonsmoothPart::L0 { weight }, KernelKind::Quadratic) => {
            Ok(hard_threshold(p, lambda * weight))
        }
        (NonsmoothPart::L0 { .. }, KernelKind::QuarticNorm) => Err(Error::Configuration(
            "the l0 penalty is only supported with the quadratic kernel".into(),
        )),
    }
}

/// `dist(p − ∇h(x), λ∂g(x))`: zero exactly when `x` satisfies the prox optimality condition.
pub fn prox_inclusion_residual(
    g: &NonsmoothPart,
    h: &Kernel,
    p: &DVector<f64>,
    lambda: f64,
    x: &DVector<f64>,
) -> Result<f64> {
    check_dim(h.dimension(), p.len())?;
    let v = p - h.gradient(x)?;
    Ok(g.subgradient_distance(&v, x, lambda))
}

/// Ψ = f + g with the kernel used to build Bregman steps.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    f: SmoothPart,
    g: NonsmoothPart,
    h: Kernel,
    smad_l: f64,
    known_optimum: Option<f64>,
}

impl CompositeProblem {
    /// Validates the pairing and computes the smooth-adaptable constant.
    pub fn new(f: SmoothPart, g: NonsmoothPart, h: Kernel) -> Result<Self> {
        check_dim(f.dimension(), h.dimension())?;
        if !g.admits(h.kind()) {
            return Err(Error::Configuration(format!(
                "regularizer {g} has no closed-form prox with the {} kernel",
                h.kind()
            )));
        }
        let smad_l = f.smad_constant(&h)?;
        Ok(CompositeProblem {
            f,
            g,
            h,
            smad_l,
            known_optimum: None,
        })
    }

    /// Replaces the computed constant, e.g. to falsify a certificate.
    pub fn with_smad_constant(mut self, l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Configuration(format!(
                "smad constant must be positive, got {l}"
            )));
        }
        self.smad_l = l;
        Ok(self)
    }

    pub fn with_known_optimum(mut self, psi_star: f64) -> Self {
        self.known_optimum = Some(psi_star);
        self
    }

    pub fn smooth(&self) -> &SmoothPart {
        &self.f
    }

    pub fn nonsmooth(&self) -> &NonsmoothPart {
        &self.g
    }

    pub fn kernel(&self) -> &Kernel {
        &self.h
    }

    pub fn smad_constant(&self) -> f64 {
        self.smad_l
    }

    pub fn known_optimum(&self) -> Option<f64> {
        self.known_optimum
    }

    pub fn dimension(&self) -> usize {
        self.h.dimension()
    }

    pub fn psi(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.f.value(x)? + self.g.value(x))
    }

    /// `dist(0, ∇f(x) + ∂g(x))`.
    pub fn criticality(&self, x: &DVector<f64>) -> Result<f64> {
        let grad = self.f.gradient(x)?;
        Ok(self.g.subgradient_distance(&-grad, x, 1.0))
    }

    /// Sampled surrogate for a finite infimum and supercoercivity: along random rays
    /// `Ψ(r·u)` stays finite and `Ψ(r·u)/r` increases over `r = 10³ … 10⁶`.
    pub fn check_growth(&self, n_rays: usize, seed: u64) -> Result<()> {
        const RADII: [f64; 4] = [1e3, 1e4, 1e5, 1e6];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dimension();
        for ray in 0..n_rays {
            let mut u = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let n = u.norm();
            if n == 0.0 {
                continue;
            }
            u /= n;
            let mut prev = f64::NEG_INFINITY;
            for r in RADII {
                let psi = self.psi(&(&u * r))?;
                if !psi.is_finite() {
                    return Err(Error::Configuration(format!(
                        "objective is not finite at radius {r:e} on sampled ray {ray}"
                    )));
                }
                let ratio = psi / r;
                if ratio <= prev {
                    return Err(Error::Configuration(format!(
                        "objective is not supercoercive: Ψ(u)/‖u‖ stops growing at radius {r:e} \
                         on sampled ray {ray}"
                    )));
                }
                prev = ratio;
            }
        }
        Ok(())
    }
}
