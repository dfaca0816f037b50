//! Seeded synthetic instances and the plain-text matrix format.
//!
//! Matrix files are row-major: a header line `m d`, followed by `m·d` numbers
//! separated by whitespace and/or commas (line breaks are not significant).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::problems::SmoothPart;

/// A generated smooth part together with the point used to synthesize its data.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub smooth: SmoothPart,
    pub planted: DVector<f64>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, d: usize) -> DMatrix<f64> {
    // Filled row by row so the stream order does not depend on storage order.
    let mut a = DMatrix::zeros(m, d);
    for i in 0..m {
        for j in 0..d {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    a
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn check_shape(m: usize, d: usize) -> Result<()> {
    if m == 0 || d == 0 {
        Err(Error::Configuration(format!(
            "instance shape must be positive, got m={m}, d={d}"
        )))
    } else {
        Ok(())
    }
}

/// Standard-normal vector, used for default starting points.
pub fn standard_normal(d: usize, seed: u64) -> DVector<f64> {
    gaussian_vector(&mut ChaCha8Rng::seed_from_u64(seed), d)
}

/// Quadratic inverse problem with Gaussian rows `aᵢ` and consistent data `bᵢ = ⟨aᵢ, x̄⟩²`.
pub fn quadratic_inverse(m: usize, d: usize, seed: u64) -> Result<Synthetic> {
    check_shape(m, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, m, d);
    let planted = gaussian_vector(&mut rng, d);
    let b = (&a * &planted).map(|s| s * s);
    Ok(Synthetic {
        smooth: SmoothPart::quadratic_inverse(a, b)?,
        planted,
    })
}

/// Least squares `½‖Ax − b‖²` with Gaussian `A` and `b = A·x̄ + 0.1·noise`, where
/// every other entry of `x̄` is zero.
pub fn least_squares(m: usize, d: usize, seed: u64) -> Result<Synthetic> {
    check_shape(m, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, m, d);
    let mut planted = gaussian_vector(&mut rng, d);
    for j in (1..d).step_by(2) {
        planted[j] = 0.0;
    }
    let noise = gaussian_vector(&mut rng, m);
    let b = &a * &planted + noise * 0.1;
    Ok(Synthetic {
        smooth: SmoothPart::least_squares(a, b)?,
        planted,
    })
}

/// Parses the row-major text format described in the module docs.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::Configuration("matrix file is empty".into()))?;
    let dims: Vec<usize> = tokens(header)
        .map(|t| {
            t.parse().map_err(|_| {
                Error::Configuration(format!("line {}: bad header token {t:?}", hline + 1))
            })
        })
        .collect::<Result<_>>()?;
    let [m, d] = dims[..] else {
        return Err(Error::Configuration(format!(
            "line {}: header must be \"m d\"",
            hline + 1
        )));
    };
    let mut values = Vec::with_capacity(m * d);
    for (lno, line) in lines {
        for t in tokens(line) {
            let v: f64 = t.parse().map_err(|_| {
                Error::Configuration(format!("line {}: cannot parse {t:?} as a number", lno + 1))
            })?;
            values.push(v);
        }
    }
    if values.len() != m * d {
        return Err(Error::Configuration(format!(
            "matrix header declares {m}x{d} = {} entries, found {}",
            m * d,
            values.len()
        )));
    }
    Ok(DMatrix::from_row_slice(m, d, &values))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Configuration(format!("cannot read matrix file {}: {e}", path.display()))
    })?;
    parse_matrix(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_comma_and_whitespace() {
        let a = parse_matrix("2 3\n1, 2,3\n4 5\t6\n").unwrap();
        assert_eq!(
            a,
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        );
        let a = parse_matrix("# comment\n1 2\n\n7 8").unwrap();
        assert_eq!(a.shape(), (1, 2));
    }

    #[test]
    fn parse_errors() {
        assert!(parse_matrix("").is_err());
        assert!(parse_matrix("2\n1 2").is_err());
        let e = parse_matrix("1 2\n1 x").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        assert!(parse_matrix("2 2\n1 2 3").is_err());
    }

    #[test]
    fn synthetic_is_reproducible() {
        let a = quadratic_inverse(30, 10, 7).unwrap();
        let b = quadratic_inverse(30, 10, 7).unwrap();
        assert_eq!(a.smooth, b.smooth);
        assert_ne!(a.smooth, quadratic_inverse(30, 10, 8).unwrap().smooth);
        // consistent data: the planted point fits exactly
        assert!(a.smooth.value(&a.planted).unwrap() < 1e-20);
        assert!(least_squares(0, 3, 1).is_err());
    }
}
