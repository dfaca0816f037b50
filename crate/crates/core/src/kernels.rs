//! Kernel generating distances on ℝ^d and their Bregman distances.
//!
//! Two kernels are shipped, both with full domain and modulus of strong
//! convexity 1:
//!
//! * `Quadratic`:   h(x) = ½‖x‖²,          ∇h(x) = x
//! * `QuarticNorm`: h(x) = ¼‖x‖⁴ + ½‖x‖², ∇h(x) = (‖x‖² + 1)x

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cubic::radial_root;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "quadratic")]
    Quadratic,
    #[serde(rename = "quartic")]
    QuarticNorm,
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(KernelKind::Quadratic),
            "quartic" => Ok(KernelKind::QuarticNorm),
            other => Err(Error::Configuration(format!(
                "unknown kernel {other:?} (expected \"quadratic\" or \"quartic\")"
            ))),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Quadratic => "quadratic",
            KernelKind::QuarticNorm => "quartic",
        })
    }
}

/// An immutable kernel on ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    kind: KernelKind,
    sigma: f64,
    dimension: usize,
}

impl Kernel {
    pub fn new(kind: KernelKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Configuration(
                "kernel dimension must be positive".into(),
            ));
        }
        // The ½‖x‖² part fixes the modulus for both kernels.
        Ok(Kernel {
            kind,
            sigma: 1.0,
            dimension,
        })
    }

    pub fn quadratic(dimension: usize) -> Result<Self> {
        Kernel::new(KernelKind::Quadratic, dimension)
    }

    pub fn quartic(dimension: usize) -> Result<Self> {
        Kernel::new(KernelKind::QuarticNorm, dimension)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Strong-convexity modulus: `D_h(x, y) ≥ (σ/2)‖x − y‖²`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dimension, x.len())?;
        let sq = x.norm_squared();
        Ok(match self.kind {
            KernelKind::Quadratic => 0.5 * sq,
            KernelKind::QuarticNorm => 0.25 * sq * sq + 0.5 * sq,
        })
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dimension, x.len())?;
        Ok(match self.kind {
            KernelKind::Quadratic => x.clone(),
            KernelKind::QuarticNorm => x * (x.norm_squared() + 1.0),
        })
    }

    /// Value and gradient together.
    pub fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }

    /// The unique `x` with `∇h(x) = p`.
    ///
    /// For the quartic kernel `x = t·p` where `t` solves `‖p‖²t³ + t − 1 = 0`.
    pub fn grad_inverse(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dimension, p.len())?;
        Ok(match self.kind {
            KernelKind::Quadratic => p.clone(),
            KernelKind::QuarticNorm => p * radial_root(p.norm_squared()),
        })
    }

    /// `D_h(x, y) = h(x) − h(y) − ⟨∇h(y), x − y⟩`.
    pub fn bregman_distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        check_dim(self.dimension, x.len())?;
        check_dim(self.dimension, y.len())?;
        let diff = x - y;
        Ok(match self.kind {
            // Evaluated in closed form so that it is exactly ½‖x − y‖².
            KernelKind::Quadratic => 0.5 * diff.norm_squared(),
            KernelKind::QuarticNorm => {
                let gy = self.gradient(y)?;
                self.value(x)? - self.value(y)? - gy.dot(&diff)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn quadratic_eval() {
        let h = Kernel::quadratic(2).unwrap();
        let (v, g) = h.eval(&dvector![3.0, 4.0]).unwrap();
        assert_eq!(v, 12.5);
        assert_eq!(g, dvector![3.0, 4.0]);
    }

    #[test]
    fn quartic_eval() {
        let h = Kernel::quartic(2).unwrap();
        let (v, g) = h.eval(&dvector![0.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, dvector![0.0, 0.0]);
        // ¼ + ½ and (1 + 1)·(1, 0)
        let (v, g) = h.eval(&dvector![1.0, 0.0]).unwrap();
        assert_eq!(v, 0.75);
        assert_eq!(g, dvector![2.0, 0.0]);
    }

    #[test]
    fn grad_inverse_examples() {
        let q = Kernel::quadratic(2).unwrap();
        assert_eq!(
            q.grad_inverse(&dvector![1.0, 2.0]).unwrap(),
            dvector![1.0, 2.0]
        );
        let h = Kernel::quartic(2).unwrap();
        assert_eq!(
            h.grad_inverse(&dvector![0.0, 0.0]).unwrap(),
            dvector![0.0, 0.0]
        );
        let x = h.grad_inverse(&dvector![1.0, 0.0]).unwrap();
        assert!((x[0] - 0.682_327_8).abs() < 1e-7);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn bregman_examples() {
        let q = Kernel::quadratic(2).unwrap();
        let x = dvector![1.0, 2.0];
        assert_eq!(q.bregman_distance(&x, &dvector![0.0, 0.0]).unwrap(), 2.5);
        assert_eq!(q.bregman_distance(&x, &x).unwrap(), 0.0);
        let h = Kernel::quartic(2).unwrap();
        assert_eq!(h.bregman_distance(&x, &x).unwrap(), 0.0);
        let d = h
            .bregman_distance(&dvector![1.0, 0.0], &dvector![0.0, 0.0])
            .unwrap();
        assert_eq!(d, 0.75);
    }

    #[test]
    fn dimension_mismatch() {
        let h = Kernel::quartic(3).unwrap();
        assert!(matches!(
            h.gradient(&dvector![1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
        assert!(h
            .bregman_distance(&dvector![1.0, 2.0, 3.0], &dvector![1.0])
            .is_err());
        assert!(Kernel::quadratic(0).is_err());
    }

    #[test]
    fn config_strings() {
        assert_eq!(
            "quadratic".parse::<KernelKind>().unwrap(),
            KernelKind::Quadratic
        );
        assert_eq!(
            "quartic".parse::<KernelKind>().unwrap(),
            KernelKind::QuarticNorm
        );
        assert!("entropy".parse::<KernelKind>().is_err());
        assert_eq!(KernelKind::QuarticNorm.to_string(), "quartic");
    }
}
