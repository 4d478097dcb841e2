//! The exterior derivative `dz` of a group-valued map.
//!
//! `dz(x)(v)` is the left-trivialized pushforward `z(x)⁻¹·(z_* v)`, read off
//! in algebra coordinates. `z` is a black box, so `z_* v` is a central
//! difference in the matrix representation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lie::{matrix::frobenius_norm, AlgebraElement, CMatrix, GroupElement, GroupSpec};
use crate::manifold::{ChartMap, ChartModel, ChartPoint, RiemannianMetric, VectorField};

/// Tangency residual allowed in `dz`, relative to `‖v‖`.
pub const DZ_TANGENT_TOL: f64 = 1e-6;
/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-8;

type GroupFn = dyn Fn(&DVector<f64>) -> CMatrix + Send + Sync;

/// A `C¹` map from a chart into a matrix group.
#[derive(Clone)]
pub struct GroupValuedMap {
    source: ChartModel,
    target: Arc<GroupSpec>,
    f: Arc<GroupFn>,
}

impl fmt::Debug for GroupValuedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupValuedMap")
            .field("source", &self.source)
            .field("target", &self.target.name())
            .finish_non_exhaustive()
    }
}

impl GroupValuedMap {
    pub fn new(
        source: ChartModel,
        target: Arc<GroupSpec>,
        f: impl Fn(&DVector<f64>) -> CMatrix + Send + Sync + 'static,
    ) -> Self {
        GroupValuedMap {
            source,
            target,
            f: Arc::new(f),
        }
    }

    /// `x ↦ exp(Σ_k u_k(x) E_k)` for scalar coordinate functions `u`.
    pub fn from_algebra_curve(
        source: ChartModel,
        target: Arc<GroupSpec>,
        u: impl Fn(&DVector<f64>) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        let group = target.clone();
        Self::new(source, target, move |x| match group.exp_coords(&u(x)) {
            Ok(g) => g.into_matrix(),
            Err(_) => CMatrix::from_element(group.rep_size(), group.rep_size(), f64::NAN.into()),
        })
    }

    pub fn constant(source: ChartModel, target: Arc<GroupSpec>, g: GroupElement) -> Self {
        let m = g.into_matrix();
        Self::new(source, target, move |_| m.clone())
    }

    pub fn source(&self) -> &ChartModel {
        &self.source
    }

    pub fn target(&self) -> &Arc<GroupSpec> {
        &self.target
    }

    pub fn eval_raw(&self, x: &DVector<f64>) -> CMatrix {
        (self.f)(x)
    }

    pub fn eval(&self, x: &ChartPoint) -> GroupElement {
        GroupElement::from_matrix_unchecked((self.f)(x.coords()))
    }

    /// Evaluates and checks the group constraint.
    pub fn eval_checked(&self, x: &ChartPoint) -> Result<GroupElement> {
        self.target.element((self.f)(x.coords()))
    }

    /// The map `x ↦ g·z(x)`.
    pub fn left_translated(&self, g: &GroupElement) -> Self {
        let inner = self.f.clone();
        let g = g.matrix().clone();
        Self::new(self.source.clone(), self.target.clone(), move |x| {
            &g * inner(x)
        })
    }

    /// The map `z ∘ φ`.
    pub fn precompose(&self, phi: &ChartMap) -> Self {
        let inner = self.f.clone();
        let phi = phi.clone();
        Self::new(phi.source().clone(), self.target.clone(), move |x| {
            inner(&phi.eval_raw(x))
        })
    }
}

fn check_direction(z: &GroupValuedMap, x: &ChartPoint, v: &DVector<f64>, h: f64) -> Result<()> {
    let n = z.source.dim();
    if x.dim() != n || v.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}-dimensional point and direction"),
            found: format!("{}, {}", x.dim(), v.len()),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidInput(
            "finite-difference step must be positive".into(),
        ));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("tangent direction"));
    }
    Ok(())
}

/// Central difference `z_*|_x v` in the matrix representation.
pub fn tangent_matrix(
    z: &GroupValuedMap,
    x: &ChartPoint,
    v: &DVector<f64>,
    h: f64,
) -> Result<CMatrix> {
    check_direction(z, x, v, h)?;
    let plus = z.eval_raw(&(x.coords() + v * h));
    let minus = z.eval_raw(&(x.coords() - v * h));
    let out = (plus - minus) / num_complex::Complex64::new(2.0 * h, 0.0);
    if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("group-valued map near the sample"));
    }
    Ok(out)
}

/// `dz(x)(v) = z(x)⁻¹·z_*|_x v`, projected onto the algebra.
pub fn dz(z: &GroupValuedMap, x: &ChartPoint, v: &DVector<f64>, h: f64) -> Result<AlgebraElement> {
    let pushed = tangent_matrix(z, x, v, h)?;
    let spec = z.target();
    let base = z.eval(x);
    let at_identity = spec.inverse(&base).into_matrix() * pushed;
    spec.to_algebra(&at_identity, DZ_TANGENT_TOL * v.norm())
}

/// The two routes to `dz` from one evaluation of `z_* v`: left translation
/// by `z(x)⁻¹` followed by projection, and inversion of the bundle map
/// `(g, w) ↦ g·w` by least squares in the translated basis.
pub fn dz_two_routes(
    z: &GroupValuedMap,
    x: &ChartPoint,
    v: &DVector<f64>,
    h: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let pushed = tangent_matrix(z, x, v, h)?;
    let spec = z.target();
    let base = z.eval(x);
    let translated = spec.trivialize(&base, &pushed)?;
    let (bundle, residual) = spec.bundle_coordinates(&base, &pushed)?;
    let tolerance = DZ_TANGENT_TOL * v.norm();
    if residual > tolerance {
        return Err(Error::NotTangent {
            residual,
            tolerance,
        });
    }
    Ok((translated.coords().clone(), bundle))
}

/// `dz(x)(V(x))` at every sample, in sample order.
pub fn dz_along_field(
    z: &GroupValuedMap,
    field: &VectorField,
    samples: &[ChartPoint],
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let results: Vec<Result<DVector<f64>>> = samples
        .par_iter()
        .map(|x| dz(z, x, &field.eval(x), h).map(|a| a.coords().clone()))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::at_sample(i, e)))
        .collect()
}

/// The `d×n` coordinate matrix of `dz(x)`, column `j` being `dz(x)(e_j)`.
pub fn jacobian(z: &GroupValuedMap, x: &ChartPoint, h: f64) -> Result<DMatrix<f64>> {
    let n = z.source().dim();
    let d = z.target().dim();
    let mut jac = DMatrix::zeros(d, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        jac.set_column(j, dz(z, x, &e, h)?.coords());
    }
    Ok(jac)
}

/// The `d` gradient vectors `∇_i` with `⟨∇_i, w⟩_τ = dz(x)(w)_i`.
pub fn gradient(
    z: &GroupValuedMap,
    metric: &RiemannianMetric,
    x: &ChartPoint,
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    if metric.dim() != z.source().dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("metric of dimension {}", z.source().dim()),
            found: metric.dim().to_string(),
        });
    }
    let gram = metric.gram_at(x)?;
    let chol = gram.cholesky().ok_or(Error::SingularMetric)?;
    let jac = jacobian(z, x, h)?;
    let grads = chol.solve(&jac.transpose());
    Ok(grads.column_iter().map(|c| c.into_owned()).collect())
}

/// Singular values of `dz(x)`, descending.
pub fn singular_values(z: &GroupValuedMap, x: &ChartPoint, h: f64) -> Result<Vec<f64>> {
    let jac = jacobian(z, x, h)?;
    let mut sv: Vec<f64> = jac.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Threshold below which a singular value counts as zero. The floor of 1
/// keeps points where every singular value is at rounding level from
/// being called regular.
pub fn rank_threshold(sigma_max: f64) -> f64 {
    RANK_TOL * sigma_max.max(1.0)
}

fn rank_from(sv: &[f64]) -> usize {
    let threshold = rank_threshold(sv.first().copied().unwrap_or(0.0));
    sv.iter().filter(|&&s| s > threshold).count()
}

/// Rank of `dz(x)`.
pub fn regular_rank(z: &GroupValuedMap, x: &ChartPoint, h: f64) -> Result<usize> {
    Ok(rank_from(&singular_values(z, x, h)?))
}

/// Orthonormal basis of `ker dz(x)`; requires full rank `d`.
pub fn kernel_basis(z: &GroupValuedMap, x: &ChartPoint, h: f64) -> Result<Vec<DVector<f64>>> {
    let n = z.source().dim();
    let d = z.target().dim();
    let jac = jacobian(z, x, h)?;
    let mut square = DMatrix::zeros(n.max(d), n);
    square.rows_mut(0, d).copy_from(&jac);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let threshold = rank_threshold(sigma_max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > threshold)
        .count();
    if rank < d {
        return Err(Error::NotRegular { rank, expected: d });
    }
    let basis: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= threshold)
        .map(|(i, _)| fix_sign(v_t.row(i).transpose()))
        .collect();
    Ok(basis)
}

/// Flips `v` so that its first entry of non-negligible size is positive.
pub fn fix_sign(v: DVector<f64>) -> DVector<f64> {
    let scale = v.amax();
    match v
        .iter()
        .find(|c| c.abs() > 1e-9 * scale.max(f64::MIN_POSITIVE))
    {
        Some(&c) if c < 0.0 => -v,
        _ => v,
    }
}

/// Frobenius distance between two evaluations of `z`.
pub fn value_drift(z: &GroupValuedMap, a: &ChartPoint, b: &ChartPoint) -> f64 {
    frobenius_norm(&(z.eval(a).into_matrix() - z.eval(b).into_matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::skew;
    use crate::manifold::{flow, metric_inner, DEFAULT_FD_STEP as H};
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn torus_identity() -> GroupValuedMap {
        let t = Arc::new(GroupSpec::torus(2).unwrap());
        GroupValuedMap::from_algebra_curve(ChartModel::torus(2), t, |x| vec![x[0], x[1]])
    }

    fn u1_sine() -> GroupValuedMap {
        GroupValuedMap::from_algebra_curve(ChartModel::torus(2), Arc::new(GroupSpec::u1()), |x| {
            vec![x[0].sin()]
        })
    }

    fn so3_circle() -> GroupValuedMap {
        GroupValuedMap::from_algebra_curve(ChartModel::torus(1), Arc::new(GroupSpec::so3()), |x| {
            vec![0.0, 0.0, x[0]]
        })
    }

    fn point(chart: &ChartModel, c: &[f64]) -> ChartPoint {
        chart.point(c).unwrap()
    }

    #[test]
    fn constant_map_has_zero_differential() {
        let so3 = Arc::new(GroupSpec::so3());
        let g = so3.exp_coords(&[0.3, 0.1, -0.2]).unwrap();
        let z = GroupValuedMap::constant(ChartModel::torus(2), so3, g);
        let x = point(z.source(), &[1.0, 2.0]);
        let v = DVector::from_vec(vec![0.5, -1.5]);
        assert_eq!(dz(&z, &x, &v, H).unwrap().norm(), 0.0);
        assert_eq!(regular_rank(&z, &x, H).unwrap(), 0);
        assert_eq!(
            kernel_basis(&z, &x, H).unwrap_err(),
            Error::NotRegular {
                rank: 0,
                expected: 3
            }
        );
        let grads = gradient(&z, &RiemannianMetric::identity(2), &x, H).unwrap();
        assert_eq!(grads.len(), 3);
        assert!(grads.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn circle_into_u1() {
        let z = GroupValuedMap::from_algebra_curve(
            ChartModel::torus(1),
            Arc::new(GroupSpec::u1()),
            |x| vec![x[0]],
        );
        let x = point(z.source(), &[2.0]);
        let out = dz(&z, &x, &DVector::from_vec(vec![1.0]), H).unwrap();
        assert!((out.coords()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn so3_one_parameter_curve() {
        let z = so3_circle();
        for s in [0.0, 1.0, 2.5, 5.9] {
            let x = point(z.source(), &[s]);
            let out = dz(&z, &x, &DVector::from_vec(vec![1.0]), H).unwrap();
            // derivative of exp(sΩ) is exp(sΩ)·Ω, so dz = Ω
            let omega = skew(0.0, 0.0, 1.0);
            assert!(frobenius_norm(&(out.matrix() - &omega)) < 1e-8, "s = {s}");
        }
    }

    #[test]
    fn along_field_examples() {
        let field = VectorField::constant(ChartModel::torus(2), &[1.0, SQRT_2]).unwrap();
        let samples: Vec<_> = [[0.0, 0.0], [1.0, 3.0], [FRAC_PI_2, 6.0]]
            .iter()
            .map(|c| point(field.chart(), c))
            .collect();
        let out = dz_along_field(&torus_identity(), &field, &samples, H).unwrap();
        for row in &out {
            assert!((row[0] - 1.0).abs() < 1e-9 && (row[1] - SQRT_2).abs() < 1e-9);
        }
        let out = dz_along_field(&u1_sine(), &field, &samples, H).unwrap();
        assert!((out[0][0] - 1.0).abs() < 1e-9);
        assert!(out[2][0].abs() < 1e-9);

        let zero = VectorField::constant(ChartModel::torus(2), &[0.0, 0.0]).unwrap();
        let out = dz_along_field(&u1_sine(), &zero, &samples, H).unwrap();
        assert!(out.iter().all(|r| r.norm() == 0.0));
        assert!(dz_along_field(&u1_sine(), &zero, &[], H).is_err());
    }

    #[test]
    fn errors_carry_sample_index() {
        let bad = GroupValuedMap::new(ChartModel::torus(1), Arc::new(GroupSpec::u1()), |x| {
            // radial growth leaves the circle
            CMatrix::from_element(1, 1, num_complex::Complex64::new(1.0 + x[0], 0.0))
        });
        let field = VectorField::constant(ChartModel::torus(1), &[1.0]).unwrap();
        let samples = vec![point(field.chart(), &[0.1]), point(field.chart(), &[0.2])];
        match dz_along_field(&bad, &field, &samples, H) {
            Err(Error::AtSample { index: 0, source }) => {
                assert!(matches!(*source, Error::NotTangent { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_examples() {
        let z = GroupValuedMap::from_algebra_curve(
            ChartModel::torus(2),
            Arc::new(GroupSpec::u1()),
            |x| vec![x[0]],
        );
        let x = point(z.source(), &[0.4, 1.2]);
        let flat = gradient(&z, &RiemannianMetric::identity(2), &x, H).unwrap();
        assert!((&flat[0] - DVector::from_vec(vec![1.0, 0.0])).amax() < 1e-9);
        let metric =
            RiemannianMetric::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])))
                .unwrap();
        let scaled = gradient(&z, &metric, &x, H).unwrap();
        assert!((&scaled[0] - DVector::from_vec(vec![0.25, 0.0])).amax() < 1e-9);
    }

    #[test]
    fn gradient_duality_with_nonconstant_metric() {
        let z = so3_wobble();
        let metric = RiemannianMetric::new(2, |x| {
            DMatrix::from_row_slice(2, 2, &[2.0 + x[0].sin(), 0.3, 0.3, 1.5 + x[1].cos()])
        });
        let x = point(z.source(), &[0.7, 2.2]);
        let grads = gradient(&z, &metric, &x, H).unwrap();
        for w in [[1.0, 0.0], [0.3, -0.8], [-2.0, 1.1]] {
            let w = DVector::from_column_slice(&w);
            let direct = dz(&z, &x, &w, H).unwrap();
            for (i, g) in grads.iter().enumerate() {
                let ip = metric_inner(&metric, &x, g, &w).unwrap();
                assert!((ip - direct.coords()[i]).abs() < 1e-7);
            }
        }
    }

    fn so3_wobble() -> GroupValuedMap {
        GroupValuedMap::from_algebra_curve(ChartModel::torus(2), Arc::new(GroupSpec::so3()), |x| {
            vec![
                0.6 * x[0].sin(),
                0.6 * x[1].sin(),
                0.3 * (x[0] + x[1]).sin(),
            ]
        })
    }

    #[test]
    fn kernel_and_rank_examples() {
        let z = GroupValuedMap::from_algebra_curve(
            ChartModel::torus(2),
            Arc::new(GroupSpec::u1()),
            |x| vec![x[0]],
        );
        let x = point(z.source(), &[2.0, 5.0]);
        let ker = kernel_basis(&z, &x, H).unwrap();
        assert_eq!(ker.len(), 1);
        assert!((&ker[0] - DVector::from_vec(vec![0.0, 1.0])).amax() < 1e-9);

        let full = torus_identity();
        assert!(kernel_basis(&full, &x, H).unwrap().is_empty());
        assert_eq!(regular_rank(&full, &x, H).unwrap(), 2);

        let sine = u1_sine();
        assert_eq!(
            regular_rank(&sine, &point(sine.source(), &[FRAC_PI_2, 0.3]), H).unwrap(),
            0
        );
        assert_eq!(
            regular_rank(&sine, &point(sine.source(), &[0.0, 0.3]), H).unwrap(),
            1
        );
    }

    #[test]
    fn two_routes_agree() {
        for z in [so3_wobble(), torus_identity(), u1_sine()] {
            let x = point(z.source(), &[0.9, 4.0]);
            let v = DVector::from_vec(vec![0.6, -1.7]);
            let (a, b) = dz_two_routes(&z, &x, &v, H).unwrap();
            assert!((a - b).amax() < 1e-10);
        }
    }

    #[test]
    fn kernel_flow_stays_on_level_set() {
        // z = e^{i(θ₁ + 0.5 sin θ₂)} has a curved kernel field
        let z = GroupValuedMap::from_algebra_curve(
            ChartModel::torus(2),
            Arc::new(GroupSpec::u1()),
            |x| vec![x[0] + 0.5 * x[1].sin()],
        );
        let zk = z.clone();
        let field = VectorField::new(ChartModel::torus(2), move |x| {
            let p = zk.source().point_from(x.clone()).unwrap();
            kernel_basis(&zk, &p, H).unwrap()[0].clone()
        });
        let start = point(z.source(), &[1.0, 0.5]);
        let end = flow(&field, &start, 1.0, 1e-3).unwrap();
        assert!(
            field
                .chart()
                .difference(end.coords(), start.coords())
                .norm()
                > 0.5
        );
        assert!(value_drift(&z, &start, &end) < 1e-4);
    }

    #[test]
    fn translation_and_precomposition() {
        let z = so3_wobble();
        let g = z.target().exp_coords(&[1.0, -2.0, 0.4]).unwrap();
        let gz = z.left_translated(&g);
        let x = point(z.source(), &[0.2, 0.9]);
        let v = DVector::from_vec(vec![1.0, 0.5]);
        let a = dz(&z, &x, &v, H).unwrap();
        let b = dz(&gz, &x, &v, H).unwrap();
        assert!((a.coords() - b.coords()).amax() < 1e-9);

        let torus = ChartModel::torus(2);
        let phi = ChartMap::new(torus.clone(), torus, |x| {
            DVector::from_vec(vec![2.0 * x[0] + x[1], x[1]])
        });
        let zphi = z.precompose(&phi);
        let lhs = dz(&zphi, &x, &v, H).unwrap();
        let pushed = crate::manifold::pushforward_map(&phi, &x, &v, H).unwrap();
        let rhs = dz(&z, &phi.apply(&x).unwrap(), &pushed, H).unwrap();
        assert!((lhs.coords() - rhs.coords()).amax() < 1e-6);
    }
}
