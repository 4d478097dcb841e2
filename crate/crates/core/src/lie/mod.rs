//! Matrix Lie group kernels.
//!
//! Every group is carried in a fixed faithful matrix representation together
//! with a basis of its Lie algebra. Algebra coordinates are always real
//! `d`-vectors in that basis, even when the representation is complex (the
//! torus is stored as diagonal unitary matrices). Reported coordinates are
//! therefore basis-dependent; [`GroupSpec::basis_labels`] names the basis.
//!
//! Shipped groups:
//!
//! | name         | rep   | basis                               | exp           | injectivity radius |
//! |--------------|-------|-------------------------------------|---------------|--------------------|
//! | `u1`         | 1×1   | `i`                                 | `e^{ic}`      | π                  |
//! | `torus:d`    | d×d   | `i·E_kk`                            | entrywise     | π per factor       |
//! | `so3`        | 3×3   | `L_x, L_y, L_z` (skew generators)   | Rodrigues     | π                  |
//! | `heisenberg` | 3×3   | `X = E_12, Y = E_23, Z = E_13`      | `I + A + A²/2`| ∞                  |
//!
//! Groups built from an arbitrary basis with [`GroupSpec::custom`] fall back
//! to scaling-and-squaring for `exp` and inverse scaling-and-squaring for `log`.

pub mod matrix;

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
pub use matrix::CMatrix;
use matrix::{commutator, frobenius_dot, frobenius_norm, is_finite, C_ONE, C_ZERO};

/// Tolerance for the defining constraints of a group element.
pub const ELEMENT_TOL: f64 = 1e-10;
/// Residual allowed when projecting a tangent matrix onto the algebra.
pub const TANGENT_TOL: f64 = 1e-8;
const CLOSURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    U1,
    Torus(usize),
    So3,
    Heisenberg,
    Custom,
}

/// A point of the group in its matrix representation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement(CMatrix);

impl GroupElement {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Wraps a matrix without checking the group constraint.
    pub fn from_matrix_unchecked(m: CMatrix) -> Self {
        GroupElement(m)
    }

    pub fn distance(&self, other: &GroupElement) -> f64 {
        frobenius_norm(&(&self.0 - &other.0))
    }
}

/// An element of the Lie algebra, held both as a matrix and as coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    coords: DVector<f64>,
    matrix: CMatrix,
}

impl AlgebraElement {
    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }
}

/// Immutable description of a matrix Lie group.
#[derive(Clone)]
pub struct GroupSpec {
    name: String,
    kind: GroupKind,
    rep_size: usize,
    basis: Vec<CMatrix>,
    gram_inv: DMatrix<f64>,
    abelian: bool,
    injectivity_radius: f64,
}

impl fmt::Debug for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("rep_size", &self.rep_size)
            .field("abelian", &self.abelian)
            .finish()
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn unit(m: usize, i: usize, j: usize, value: Complex64) -> CMatrix {
    let mut e = CMatrix::zeros(m, m);
    e[(i, j)] = value;
    e
}

/// Skew-symmetric matrix of `(a, b, c)`, so that `skew(w) x = w × x`.
pub fn skew(a: f64, b: f64, cz: f64) -> CMatrix {
    CMatrix::from_row_slice(
        3,
        3,
        &[
            C_ZERO,
            c(-cz, 0.0),
            c(b, 0.0),
            c(cz, 0.0),
            C_ZERO,
            c(-a, 0.0),
            c(-b, 0.0),
            c(a, 0.0),
            C_ZERO,
        ],
    )
}

impl GroupSpec {
    pub fn u1() -> Self {
        Self::build(
            "u1".into(),
            GroupKind::U1,
            vec![unit(1, 0, 0, c(0.0, 1.0))],
            PI,
        )
        .expect("u1 basis is valid")
    }

    pub fn torus(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidInput(
                "torus dimension must be at least 1".into(),
            ));
        }
        let basis = (0..d).map(|k| unit(d, k, k, c(0.0, 1.0))).collect();
        Self::build(format!("torus:{d}"), GroupKind::Torus(d), basis, PI)
    }

    pub fn so3() -> Self {
        let basis = vec![
            skew(1.0, 0.0, 0.0),
            skew(0.0, 1.0, 0.0),
            skew(0.0, 0.0, 1.0),
        ];
        Self::build("so3".into(), GroupKind::So3, basis, PI).expect("so3 basis is valid")
    }

    pub fn heisenberg() -> Self {
        let basis = vec![
            unit(3, 0, 1, C_ONE),
            unit(3, 1, 2, C_ONE),
            unit(3, 0, 2, C_ONE),
        ];
        Self::build(
            "heisenberg".into(),
            GroupKind::Heisenberg,
            basis,
            f64::INFINITY,
        )
        .expect("heisenberg basis is valid")
    }

    /// A group given only by an algebra basis; exp/log use the generic
    /// matrix routines and the caller supplies the injectivity radius.
    pub fn custom(
        name: impl Into<String>,
        basis: Vec<CMatrix>,
        injectivity_radius: f64,
    ) -> Result<Self> {
        if !(injectivity_radius > 0.0) {
            return Err(Error::InvalidBasis(
                "injectivity radius must be positive".into(),
            ));
        }
        Self::build(name.into(), GroupKind::Custom, basis, injectivity_radius)
    }

    /// Parses `u1`, `torus:<d>`, `so3` or `heisenberg`.
    pub fn from_name(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "u1" => Ok(Self::u1()),
            "so3" => Ok(Self::so3()),
            "heisenberg" => Ok(Self::heisenberg()),
            _ => {
                if let Some(d) = name.strip_prefix("torus:") {
                    let d: usize = d.parse().map_err(|_| {
                        Error::validation("group", format!("bad torus dimension in `{name}`"))
                    })?;
                    Self::torus(d).map_err(|e| Error::validation("group", e.to_string()))
                } else {
                    Err(Error::validation(
                        "group",
                        format!("unknown group `{name}`"),
                    ))
                }
            }
        }
    }

    fn build(
        name: String,
        kind: GroupKind,
        basis: Vec<CMatrix>,
        injectivity_radius: f64,
    ) -> Result<Self> {
        let d = basis.len();
        if d == 0 {
            return Err(Error::InvalidBasis("empty basis".into()));
        }
        let m = basis[0].nrows();
        if basis.iter().any(|e| e.nrows() != m || e.ncols() != m) {
            return Err(Error::InvalidBasis(
                "basis matrices must share one square shape".into(),
            ));
        }
        if basis.iter().any(|e| !is_finite(e)) {
            return Err(Error::InvalidBasis("basis has non-finite entries".into()));
        }
        let gram = DMatrix::from_fn(d, d, |i, j| frobenius_dot(&basis[i], &basis[j]));
        let gram_inv = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidBasis("basis matrices are linearly dependent".into()))?
            .inverse();
        let mut spec = GroupSpec {
            name,
            kind,
            rep_size: m,
            basis,
            gram_inv,
            abelian: true,
            injectivity_radius,
        };

        let mut abelian = true;
        for i in 0..d {
            for j in (i + 1)..d {
                let bracket = commutator(&spec.basis[i], &spec.basis[j]);
                let scale = frobenius_norm(&spec.basis[i]) * frobenius_norm(&spec.basis[j]);
                let (_, residual) = spec.project(&bracket);
                if residual > CLOSURE_TOL * scale {
                    return Err(Error::InvalidBasis(format!(
                        "commutator of basis elements {i} and {j} leaves the span (residual {residual:.2e})"
                    )));
                }
                if frobenius_norm(&bracket) > CLOSURE_TOL * scale {
                    abelian = false;
                }
            }
        }
        spec.abelian = abelian;
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Algebra dimension `d`.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Matrix size `m` of the representation.
    pub fn rep_size(&self) -> usize {
        self.rep_size
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn is_abelian(&self) -> bool {
        self.abelian
    }

    pub fn injectivity_radius(&self) -> f64 {
        self.injectivity_radius
    }

    pub fn basis_labels(&self) -> Vec<String> {
        match self.kind {
            GroupKind::U1 => vec!["i".into()],
            GroupKind::Torus(d) => (1..=d).map(|k| format!("i*E{k}{k}")).collect(),
            GroupKind::So3 => vec!["L_x".into(), "L_y".into(), "L_z".into()],
            GroupKind::Heisenberg => vec!["X=E12".into(), "Y=E23".into(), "Z=E13".into()],
            GroupKind::Custom => (1..=self.dim()).map(|k| format!("E{k}")).collect(),
        }
    }

    /// Norm used to compare lift values against the injectivity radius:
    /// the max-norm for torus factors, Euclidean otherwise.
    pub fn lift_norm(&self, coords: &DVector<f64>) -> f64 {
        match self.kind {
            GroupKind::U1 | GroupKind::Torus(_) => coords.amax(),
            _ => coords.norm(),
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(CMatrix::identity(self.rep_size, self.rep_size))
    }

    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement {
            coords: DVector::zeros(self.dim()),
            matrix: CMatrix::zeros(self.rep_size, self.rep_size),
        }
    }

    pub fn from_coords(&self, coords: &[f64]) -> Result<AlgebraElement> {
        if coords.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} algebra coordinates", self.dim()),
                found: coords.len().to_string(),
            });
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("algebra coordinates"));
        }
        let mut matrix = CMatrix::zeros(self.rep_size, self.rep_size);
        for (ci, e) in coords.iter().zip(&self.basis) {
            matrix += e * c(*ci, 0.0);
        }
        Ok(AlgebraElement {
            coords: DVector::from_column_slice(coords),
            matrix,
        })
    }

    /// Least-squares coordinates of `x` in the basis and the residual norm.
    pub fn project(&self, x: &CMatrix) -> (DVector<f64>, f64) {
        let rhs =
            DVector::from_iterator(self.dim(), self.basis.iter().map(|e| frobenius_dot(e, x)));
        let coords = &self.gram_inv * rhs;
        let mut recon = x.clone();
        for (ci, e) in coords.iter().zip(&self.basis) {
            recon -= e * c(*ci, 0.0);
        }
        (coords, frobenius_norm(&recon))
    }

    /// Projects onto the algebra, failing when the residual exceeds `tolerance`.
    pub fn to_algebra(&self, x: &CMatrix, tolerance: f64) -> Result<AlgebraElement> {
        self.check_shape(x)?;
        if !is_finite(x) {
            return Err(Error::NonFinite("algebra matrix"));
        }
        let (coords, residual) = self.project(x);
        if residual > tolerance {
            return Err(Error::NotTangent {
                residual,
                tolerance,
            });
        }
        self.from_coords(coords.as_slice())
    }

    fn check_shape(&self, x: &CMatrix) -> Result<()> {
        if x.nrows() != self.rep_size || x.ncols() != self.rep_size {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0}", self.rep_size),
                found: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        Ok(())
    }

    /// Validates the defining constraint of the group.
    pub fn element(&self, m: CMatrix) -> Result<GroupElement> {
        self.check_shape(&m)?;
        if !is_finite(&m) {
            return Err(Error::NonFinite("group element"));
        }
        let size = self.rep_size;
        let ok = match self.kind {
            GroupKind::U1 | GroupKind::Torus(_) => (0..size).all(|i| {
                (0..size).all(|j| {
                    if i == j {
                        (m[(i, i)].norm() - 1.0).abs() <= ELEMENT_TOL
                    } else {
                        m[(i, j)].norm() <= ELEMENT_TOL
                    }
                })
            }),
            GroupKind::So3 => {
                let real = m.iter().all(|x| x.im.abs() <= ELEMENT_TOL);
                let gram = m.adjoint() * &m;
                let orth = frobenius_norm(&(gram - CMatrix::identity(3, 3))) <= ELEMENT_TOL;
                let det = m.map(|x| x.re).determinant();
                real && orth && (det - 1.0).abs() <= ELEMENT_TOL
            }
            GroupKind::Heisenberg => (0..3).all(|i| {
                (0..3).all(|j| {
                    let x = m[(i, j)];
                    let imag_ok = x.im.abs() <= ELEMENT_TOL;
                    if i == j {
                        imag_ok && (x.re - 1.0).abs() <= ELEMENT_TOL
                    } else if i > j {
                        x.norm() <= ELEMENT_TOL
                    } else {
                        imag_ok
                    }
                })
            }),
            GroupKind::Custom => m.clone().try_inverse().is_some(),
        };
        if ok {
            Ok(GroupElement(m))
        } else {
            Err(Error::InvalidInput(format!(
                "matrix violates the {} group constraint",
                self.name
            )))
        }
    }

    pub fn compose(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        GroupElement(&g.0 * &h.0)
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        let m = &g.0;
        let inv = match self.kind {
            GroupKind::U1 | GroupKind::Torus(_) => m.map(|x| x.conj()),
            GroupKind::So3 => m.transpose(),
            GroupKind::Heisenberg => {
                let (a, b, cc) = (m[(0, 1)], m[(1, 2)], m[(0, 2)]);
                let mut inv = CMatrix::identity(3, 3);
                inv[(0, 1)] = -a;
                inv[(1, 2)] = -b;
                inv[(0, 2)] = a * b - cc;
                inv
            }
            GroupKind::Custom => m
                .clone()
                .try_inverse()
                .unwrap_or_else(|| m.map(|_| c(f64::NAN, 0.0))),
        };
        GroupElement(inv)
    }

    /// The exponential map.
    pub fn exp(&self, v: &AlgebraElement) -> Result<GroupElement> {
        let coords = v.coords();
        if coords.iter().any(|x| !x.is_finite()) || !is_finite(v.matrix()) {
            return Err(Error::NonFinite("algebra element"));
        }
        let m = match self.kind {
            GroupKind::U1 | GroupKind::Torus(_) => {
                CMatrix::from_diagonal(&coords.map(|ck| c(0.0, ck).exp()))
            }
            GroupKind::So3 => rodrigues(coords[0], coords[1], coords[2]),
            GroupKind::Heisenberg => {
                let a = v.matrix();
                CMatrix::identity(3, 3) + a + (a * a) * c(0.5, 0.0)
            }
            GroupKind::Custom => matrix::expm(v.matrix())?,
        };
        Ok(GroupElement(m))
    }

    pub fn exp_coords(&self, coords: &[f64]) -> Result<GroupElement> {
        self.exp(&self.from_coords(coords)?)
    }

    /// Inverse of `exp` on the injectivity neighbourhood of the identity.
    pub fn log(&self, g: &GroupElement) -> Result<AlgebraElement> {
        let m = &g.0;
        self.check_shape(m)?;
        if !is_finite(m) {
            return Err(Error::NonFinite("group element"));
        }
        match self.kind {
            GroupKind::U1 | GroupKind::Torus(_) => {
                let coords: Vec<f64> = (0..self.rep_size).map(|k| m[(k, k)].arg()).collect();
                if coords.iter().any(|a| a.abs() >= PI - 1e-12) {
                    return Err(Error::OutOfInjectivityDomain);
                }
                self.from_coords(&coords)
            }
            GroupKind::So3 => {
                let r = m.map(|x| x.re);
                let cos = ((r[(0, 0)] + r[(1, 1)] + r[(2, 2)]) - 1.0) / 2.0;
                let axis = DVector::from_vec(vec![
                    (r[(2, 1)] - r[(1, 2)]) / 2.0,
                    (r[(0, 2)] - r[(2, 0)]) / 2.0,
                    (r[(1, 0)] - r[(0, 1)]) / 2.0,
                ]);
                let sin = axis.norm();
                let angle = sin.atan2(cos);
                if angle > PI - 1e-8 {
                    return Err(Error::OutOfInjectivityDomain);
                }
                let scale = if angle < 1e-8 {
                    1.0 + angle * angle / 6.0
                } else {
                    angle / sin
                };
                self.from_coords((axis * scale).as_slice())
            }
            GroupKind::Heisenberg => {
                let n = m - CMatrix::identity(3, 3);
                let log = &n - (&n * &n) * c(0.5, 0.0);
                self.to_algebra(&log, TANGENT_TOL)
            }
            GroupKind::Custom => {
                let log = matrix::logm(m)?;
                let v = self.to_algebra(&log, TANGENT_TOL)?;
                if self.lift_norm(v.coords()) >= self.injectivity_radius {
                    return Err(Error::OutOfInjectivityDomain);
                }
                Ok(v)
            }
        }
    }

    /// Pushforward of left translation by `g`: `w ↦ g·w`.
    pub fn left_pushforward(&self, g: &GroupElement, w: &CMatrix) -> Result<CMatrix> {
        self.check_shape(w)?;
        Ok(&g.0 * w)
    }

    /// Inverse of the bundle map `(g, v) ↦ g·v`: translates `v_g` back to the
    /// identity and reads off algebra coordinates.
    pub fn trivialize(&self, g: &GroupElement, v_g: &CMatrix) -> Result<AlgebraElement> {
        self.check_shape(v_g)?;
        let at_identity = &self.inverse(g).0 * v_g;
        let tolerance = TANGENT_TOL * frobenius_norm(&at_identity).max(1.0);
        self.to_algebra(&at_identity, tolerance)
    }

    /// Solves `g·Σ cᵢEᵢ = v_g` for `c` in the left-translated basis `{g·Eᵢ}`
    /// without forming `g⁻¹`. Returns coordinates and residual.
    pub fn bundle_coordinates(
        &self,
        g: &GroupElement,
        v_g: &CMatrix,
    ) -> Result<(DVector<f64>, f64)> {
        self.check_shape(v_g)?;
        let d = self.dim();
        let moved: Vec<CMatrix> = self.basis.iter().map(|e| &g.0 * e).collect();
        let gram = DMatrix::from_fn(d, d, |i, j| frobenius_dot(&moved[i], &moved[j]));
        let rhs = DVector::from_iterator(d, moved.iter().map(|e| frobenius_dot(e, v_g)));
        let coords = gram
            .cholesky()
            .ok_or(Error::InvalidInput("degenerate translated basis".into()))?
            .solve(&rhs);
        let mut recon = v_g.clone();
        for (ci, e) in coords.iter().zip(&moved) {
            recon -= e * c(*ci, 0.0);
        }
        Ok((coords, frobenius_norm(&recon)))
    }

    /// The flow `g ↦ g·exp(tω)`.
    pub fn exp_flow(
        &self,
        g: &GroupElement,
        omega: &AlgebraElement,
        t: f64,
    ) -> Result<GroupElement> {
        let scaled = self.from_coords((omega.coords() * t).as_slice())?;
        Ok(self.compose(g, &self.exp(&scaled)?))
    }
}

fn rodrigues(a: f64, b: f64, cz: f64) -> CMatrix {
    let angle = (a * a + b * b + cz * cz).sqrt();
    let k = skew(a, b, cz);
    let k2 = &k * &k;
    let (s1, s2) = if angle < 1e-8 {
        (1.0 - angle * angle / 6.0, 0.5 - angle * angle / 24.0)
    } else {
        (angle.sin() / angle, (1.0 - angle.cos()) / (angle * angle))
    };
    CMatrix::identity(3, 3) + k * c(s1, 0.0) + k2 * c(s2, 0.0)
}
