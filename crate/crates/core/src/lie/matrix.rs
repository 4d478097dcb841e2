//! Dense complex matrix helpers shared by the group kernels.
//!
//! The generic exponential and logarithm here back groups that are given only
//! by an algebra basis. The built-in groups use closed forms instead, and the
//! tests cross-check the two.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub(crate) const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

const EXPM_TOL: f64 = 1e-13;

/// Real part of the Frobenius inner product, `Re tr(a^H b)`.
pub fn frobenius_dot(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Embeds a real matrix.
pub fn from_real(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    if !is_finite(a) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let m = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.map(|x| x / 2f64.powi(squarings));

    let mut result = CMatrix::identity(m, m);
    let mut term = CMatrix::identity(m, m);
    for k in 1..=60 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        result += &term;
        if frobenius_norm(&term) <= EXPM_TOL * frobenius_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Principal square root by the Denman–Beavers iteration.
fn sqrtm(a: &CMatrix) -> Result<CMatrix> {
    let m = a.nrows();
    let mut y = a.clone();
    let mut z = CMatrix::identity(m, m);
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or(Error::OutOfInjectivityDomain)?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or(Error::OutOfInjectivityDomain)?;
        let y_next = (&y + z_inv) * Complex64::new(0.5, 0.0);
        let z_next = (&z + y_inv) * Complex64::new(0.5, 0.0);
        let delta = frobenius_norm(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * frobenius_norm(&y).max(1.0) {
            return Ok(y);
        }
    }
    if is_finite(&y) {
        Ok(y)
    } else {
        Err(Error::OutOfInjectivityDomain)
    }
}

/// Principal matrix logarithm by inverse scaling and squaring.
pub fn logm(a: &CMatrix) -> Result<CMatrix> {
    if !is_finite(a) {
        return Err(Error::NonFinite("matrix logarithm input"));
    }
    let m = a.nrows();
    let identity = CMatrix::identity(m, m);
    let mut x = a.clone();
    let mut roots = 0;
    while frobenius_norm(&(&x - &identity)) > 0.25 {
        if roots == 60 {
            return Err(Error::OutOfInjectivityDomain);
        }
        x = sqrtm(&x)?;
        roots += 1;
    }
    let y = &x - &identity;
    let mut power = y.clone();
    let mut result = CMatrix::zeros(m, m);
    for k in 1..=80 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = power.map(|v| v * (sign / k as f64));
        result += &term;
        if frobenius_norm(&term) <= 1e-17 {
            break;
        }
        power = &power * &y;
    }
    Ok(result * Complex64::new(2f64.powi(roots), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = CMatrix::zeros(3, 3);
        assert_eq!(expm(&z).unwrap(), CMatrix::identity(3, 3));
    }

    #[test]
    fn expm_diagonal_matches_scalar_exp() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.0, 2.5),
            c(-1.0, 0.3),
        ]));
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - c(0.0, 2.5).exp()).norm() < 1e-13);
        assert!((e[(1, 1)] - c(-1.0, 0.3).exp()).norm() < 1e-13);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn logm_inverts_expm_near_identity() {
        let a = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.0, 0.0),
                c(-0.7, 0.0),
                c(0.4, 0.0),
                c(0.7, 0.0),
                c(0.0, 0.0),
                c(-1.1, 0.0),
                c(-0.4, 0.0),
                c(1.1, 0.0),
                c(0.0, 0.0),
            ],
        );
        let back = logm(&expm(&a).unwrap()).unwrap();
        assert!(frobenius_norm(&(back - a)) < 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(expm(&a), Err(Error::NonFinite(_))));
    }
}
