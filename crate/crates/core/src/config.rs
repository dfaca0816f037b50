//! Experiment configuration.
//!
//! Configs are TOML files with the sections below; unknown keys are rejected.
//! Paths are resolved relative to the config file.
//!
//! ```toml
//! [instance]
//! family = "quadratic_inverse"   # or "least_squares"
//! m = 30
//! d = 10
//! seed = 7
//! # a_file = "A.txt"             # row-major text matrix, header "m d"
//! # b_file = "b.txt"             # same format, m x 1
//! # a = [[1.0, 0.0]]             # inline alternative
//! # b = [1.0]
//! # smad_constant = 0.01         # override the computed L
//! # known_optimum = 0.0
//!
//! [problem]
//! kernel = "quartic"             # default: quartic for quadratic_inverse, quadratic otherwise
//! regularizer = "zero"           # "zero" | "l1" | "l0"
//! # weight = 0.1
//!
//! [schedule]
//! lambda_scale = 0.99            # lambda = lambda_scale / L (default)
//! # lambda = 1e-4                # or an absolute constant
//! # lambda_seq = [1e-4, 2e-4]    # or an explicit sequence (last value repeats)
//! beta_fraction = 0.9            # beta = fraction * sigma/2 (lambda_min/lambda_max - lambda_min L)
//! # beta = 0.2                   # or an absolute constant
//! # beta_seq = [0.0, 0.1]
//! # m = 0.5                      # Lyapunov weight (default: upper end of the window)
//! # beta_sweep = [0.0, 0.1, 0.2]
//! # beta_sweep_fractions = [0.0, 0.25, 0.5, 0.9]
//!
//! [stop]
//! max_iter = 2000
//! residual_tol = 1e-8
//! step_tol = 0.0
//!
//! [start]
//! seed = 0                       # x0 ~ N(0, I); or give x0 = [...]
//!
//! [certify]
//! samples = 100000
//! radius = 1.0
//! seed = 0
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::instances;
use crate::kernels::{Kernel, KernelKind};
use crate::problems::{CompositeProblem, NonsmoothPart, SmoothKind, SmoothPart};
use crate::solver::{max_inertia, ParameterSchedule, StepRule, StopRule};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSection,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub stop: StopSection,
    #[serde(default)]
    pub start: StartSection,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    QuadraticInverse,
    LeastSquares,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    pub family: Family,
    pub m: Option<usize>,
    pub d: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub a_file: Option<PathBuf>,
    pub b_file: Option<PathBuf>,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<f64>>,
    pub smad_constant: Option<f64>,
    pub known_optimum: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    #[default]
    Zero,
    L1,
    L0,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kernel: Option<KernelKind>,
    #[serde(default)]
    pub regularizer: Regularizer,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub lambda_scale: Option<f64>,
    pub lambda: Option<f64>,
    pub lambda_seq: Option<Vec<f64>>,
    pub beta_fraction: Option<f64>,
    pub beta: Option<f64>,
    pub beta_seq: Option<Vec<f64>>,
    pub m: Option<f64>,
    pub beta_sweep: Option<Vec<f64>>,
    pub beta_sweep_fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopSection {
    pub max_iter: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
}

impl Default for StopSection {
    fn default() -> Self {
        let s = StopRule::default();
        StopSection {
            max_iter: s.max_iter,
            residual_tol: s.residual_tol,
            step_tol: s.step_tol,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    #[serde(default)]
    pub seed: u64,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySection {
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
}

impl Default for CertifySection {
    fn default() -> Self {
        CertifySection {
            samples: 100_000,
            radius: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Configuration(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::parse(&text)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Parses config text; relative paths resolve against the working directory.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Output directory from the config, resolved against the config location.
    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn kernel_kind(&self) -> KernelKind {
        self.problem.kernel.unwrap_or(match self.instance.family {
            Family::QuadraticInverse => KernelKind::QuarticNorm,
            Family::LeastSquares => KernelKind::Quadratic,
        })
    }

    fn smooth_part(&self) -> Result<SmoothPart> {
        let inst = &self.instance;
        let kind = match inst.family {
            Family::QuadraticInverse => SmoothKind::QuadraticInverse,
            Family::LeastSquares => SmoothKind::LeastSquares,
        };
        let a = match (&inst.a_file, &inst.a) {
            (Some(_), Some(_)) => {
                return Err(cfg_err("instance: give either a_file or a, not both"))
            }
            (Some(p), None) => Some(instances::read_matrix(&self.resolve(p))?),
            (None, Some(rows)) => Some(matrix_from_rows(rows)?),
            (None, None) => None,
        };
        let b = match (&inst.b_file, &inst.b) {
            (Some(_), Some(_)) => {
                return Err(cfg_err("instance: give either b_file or b, not both"))
            }
            (Some(p), None) => {
                let m = instances::read_matrix(&self.resolve(p))?;
                if m.ncols() != 1 {
                    return Err(cfg_err(format!("{}: b must have one column", p.display())));
                }
                Some(m.column(0).into_owned())
            }
            (None, Some(v)) => Some(DVector::from_column_slice(v)),
            (None, None) => None,
        };
        match (a, b) {
            (Some(a), Some(b)) => {
                if inst.m.is_some_and(|m| m != a.nrows()) || inst.d.is_some_and(|d| d != a.ncols())
                {
                    return Err(cfg_err("instance: m/d disagree with the supplied matrix"));
                }
                SmoothPart::new(kind, a, b)
            }
            (None, None) => {
                let (m, d) = match (inst.m, inst.d) {
                    (Some(m), Some(d)) => (m, d),
                    _ => return Err(cfg_err("instance: synthetic instances need m and d")),
                };
                let synth = match inst.family {
                    Family::QuadraticInverse => instances::quadratic_inverse(m, d, inst.seed)?,
                    Family::LeastSquares => instances::least_squares(m, d, inst.seed)?,
                };
                Ok(synth.smooth)
            }
            _ => Err(cfg_err(
                "instance: the design and the data must be given together",
            )),
        }
    }

    pub fn build_problem(&self) -> Result<CompositeProblem> {
        let f = self.smooth_part()?;
        let d = f.dimension();
        let g = match (self.problem.regularizer, self.problem.weight) {
            (Regularizer::Zero, None) => NonsmoothPart::Zero,
            (Regularizer::Zero, Some(_)) => {
                return Err(cfg_err("problem: weight given but regularizer is \"zero\""))
            }
            (Regularizer::L1, Some(w)) => NonsmoothPart::l1(w)?,
            (Regularizer::L0, Some(w)) => NonsmoothPart::l0(w)?,
            (_, None) => return Err(cfg_err("problem: regularizer needs a weight")),
        };
        let mut problem = CompositeProblem::new(f, g, Kernel::new(self.kernel_kind(), d)?)?;
        if let Some(l) = self.instance.smad_constant {
            problem = problem.with_smad_constant(l)?;
        }
        if let Some(v) = self.instance.known_optimum {
            problem = problem.with_known_optimum(v);
        }
        Ok(problem)
    }

    fn lambda_rule(&self, l: f64) -> Result<StepRule> {
        let s = &self.schedule;
        match (s.lambda_scale, s.lambda, &s.lambda_seq) {
            (None, None, None) => Ok(StepRule::Constant(0.99 / l)),
            (Some(scale), None, None) => Ok(StepRule::Constant(scale / l)),
            (None, Some(v), None) => Ok(StepRule::Constant(v)),
            (None, None, Some(seq)) if !seq.is_empty() => Ok(StepRule::Sequence(seq.clone())),
            (None, None, Some(_)) => Err(cfg_err("schedule: lambda_seq is empty")),
            _ => Err(cfg_err(
                "schedule: give only one of lambda_scale, lambda, lambda_seq",
            )),
        }
    }

    /// The schedule for this config with inertia given by `beta` (overriding the config's rule).
    pub fn schedule_with_beta(
        &self,
        l: f64,
        sigma: f64,
        beta: Option<f64>,
    ) -> Result<ParameterSchedule> {
        let lambda = self.lambda_rule(l)?;
        let s = &self.schedule;
        let beta_rule = match beta {
            Some(b) => StepRule::Constant(b),
            None => match (s.beta_fraction, s.beta, &s.beta_seq) {
                (None, None, None) => StepRule::Constant(0.9 * self.beta_limit(&lambda, l, sigma)),
                (Some(frac), None, None) => {
                    StepRule::Constant(frac * self.beta_limit(&lambda, l, sigma))
                }
                (None, Some(v), None) => StepRule::Constant(v),
                (None, None, Some(seq)) if !seq.is_empty() => StepRule::Sequence(seq.clone()),
                (None, None, Some(_)) => return Err(cfg_err("schedule: beta_seq is empty")),
                _ => {
                    return Err(cfg_err(
                        "schedule: give only one of beta_fraction, beta, beta_seq",
                    ))
                }
            },
        };
        Ok(ParameterSchedule {
            lambda,
            beta: beta_rule,
            m: s.m,
        })
    }

    pub fn schedule(&self, l: f64, sigma: f64) -> Result<ParameterSchedule> {
        self.schedule_with_beta(l, sigma, None)
    }

    fn beta_limit(&self, lambda: &StepRule, l: f64, sigma: f64) -> f64 {
        max_inertia(l, sigma, lambda.inf(), lambda.sup())
    }

    /// Inertia values for a sweep, in config order.
    pub fn sweep_betas(&self, l: f64, sigma: f64) -> Result<Vec<f64>> {
        let s = &self.schedule;
        match (&s.beta_sweep, &s.beta_sweep_fractions) {
            (Some(v), None) if !v.is_empty() => Ok(v.clone()),
            (None, Some(fr)) if !fr.is_empty() => {
                let limit = self.beta_limit(&self.lambda_rule(l)?, l, sigma);
                Ok(fr.iter().map(|f| f * limit).collect())
            }
            (None, None) => Err(cfg_err(
                "schedule: sweep needs beta_sweep or beta_sweep_fractions",
            )),
            (Some(_), Some(_)) => Err(cfg_err(
                "schedule: give only one of beta_sweep, beta_sweep_fractions",
            )),
            _ => Err(cfg_err("schedule: sweep list is empty")),
        }
    }

    pub fn start_point(&self, d: usize) -> Result<DVector<f64>> {
        match &self.start.x0 {
            Some(x) if x.len() == d => Ok(DVector::from_column_slice(x)),
            Some(x) => Err(cfg_err(format!(
                "start: x0 has length {}, expected {d}",
                x.len()
            ))),
            None => Ok(instances::standard_normal(d, self.start.seed)),
        }
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            max_iter: self.stop.max_iter,
            residual_tol: self.stop.residual_tol,
            step_tol: self.stop.step_tol,
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if m == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(cfg_err("instance: a must be a non-empty rectangular array"));
    }
    Ok(DMatrix::from_fn(m, d, |i, j| rows[i][j]))
}
