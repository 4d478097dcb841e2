//! Local lifts of a group-valued map through the exponential map.
//!
//! Near an anchor `x` with `g = z(x)`, `z = g·exp(θ)` for the algebra-valued
//! `θ(y) = log(g⁻¹·z(y))`. Two trivializations of `Tg` give two
//! differentials of `θ`: the canonical one (plain Jacobian of the
//! coordinates) and the one through `Ψ(u, w) = exp(u)⁻¹·exp_*|_u w`. The
//! second always reproduces `dz`; the first does so when `G` is abelian.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::differential::{dz, GroupValuedMap};
use crate::error::{Error, Result};
use crate::lie::{AlgebraElement, GroupElement, GroupSpec, TANGENT_TOL};
use crate::manifold::ChartPoint;
use crate::numeric::max_of;

/// Lift values stay below this fraction of the injectivity radius.
pub const LIFT_RADIUS_FRACTION: f64 = 0.9;
const PROBE_COUNT: usize = 32;
const BISECTION_STEPS: usize = 40;
const RAY_SAMPLES: usize = 64;
const MIN_RADIUS: f64 = 1e-6;
const MAX_RADIUS: f64 = 1.0;
/// Tolerance for `d(z|U) = d̃θ`.
pub const LIFT_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LocalLift {
    z: GroupValuedMap,
    anchor: ChartPoint,
    base: GroupElement,
    base_inv: GroupElement,
    domain_radius: f64,
}

impl LocalLift {
    pub fn anchor(&self) -> &ChartPoint {
        &self.anchor
    }

    /// `z(anchor)`.
    pub fn base(&self) -> &GroupElement {
        &self.base
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn group(&self) -> &GroupSpec {
        self.z.target()
    }

    fn theta_raw(&self, y: &DVector<f64>) -> Result<AlgebraElement> {
        let spec = self.z.target();
        let relative = spec.compose(
            &self.base_inv,
            &GroupElement::from_matrix_unchecked(self.z.eval_raw(y)),
        );
        spec.log(&relative)
    }

    fn distance(&self, y: &ChartPoint) -> f64 {
        self.z
            .source()
            .difference(y.coords(), self.anchor.coords())
            .norm()
    }

    pub fn contains(&self, y: &ChartPoint) -> bool {
        self.distance(y) <= self.domain_radius * (1.0 + 1e-12)
    }

    fn check_domain(&self, y: &ChartPoint) -> Result<()> {
        if self.contains(y) {
            Ok(())
        } else {
            Err(Error::DomainExit {
                distance: self.distance(y),
                radius: self.domain_radius,
            })
        }
    }

    /// Chart coordinates of `y` unwrapped around the anchor, so that
    /// difference quotients never straddle a periodic seam.
    fn unwrapped(&self, y: &ChartPoint) -> DVector<f64> {
        self.anchor.coords() + self.z.source().difference(y.coords(), self.anchor.coords())
    }

    /// `θ(y) = log(z(anchor)⁻¹·z(y))`.
    pub fn theta(&self, y: &ChartPoint) -> Result<AlgebraElement> {
        self.check_domain(y)?;
        self.theta_raw(y.coords())
    }

    /// Central difference `θ_*|_y v` in algebra coordinates.
    fn theta_pushforward(&self, y: &ChartPoint, v: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        self.check_domain(y)?;
        if !(h > 0.0) {
            return Err(Error::InvalidInput(
                "finite-difference step must be positive".into(),
            ));
        }
        let base = self.unwrapped(y);
        let plus = self.theta_raw(&(&base + v * h))?;
        let minus = self.theta_raw(&(&base - v * h))?;
        Ok((plus.coords() - minus.coords()) / (2.0 * h))
    }
}

/// Deterministic probe directions on the unit sphere of `ℝ^n`.
fn probe_directions(n: usize) -> Vec<DVector<f64>> {
    match n {
        1 => (0..PROBE_COUNT)
            .map(|k| DVector::from_element(1, if k % 2 == 0 { 1.0 } else { -1.0 }))
            .collect(),
        2 => (0..PROBE_COUNT)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / PROBE_COUNT as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x11f7);
            (0..PROBE_COUNT)
                .map(|_| loop {
                    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                    let norm = v.norm();
                    if norm > 1e-3 && norm <= 1.0 {
                        break v / norm;
                    }
                })
                .collect()
        }
    }
}

/// Builds the lift at `x`. The domain radius is the largest `r ≤ 1` (found
/// by bisection) for which every boundary probe keeps `θ` inside
/// `0.9 ×` the injectivity radius.
pub fn build_lift(z: &GroupValuedMap, x: &ChartPoint) -> Result<LocalLift> {
    let spec = z.target();
    let base = z.eval_checked(x)?;
    let base_inv = spec.inverse(&base);
    let mut lift = LocalLift {
        z: z.clone(),
        anchor: x.clone(),
        base,
        base_inv,
        domain_radius: 0.0,
    };
    let limit = LIFT_RADIUS_FRACTION * spec.injectivity_radius();
    let directions = probe_directions(z.source().dim());
    // Each probe ray is walked in small steps; `log` wraps silently, so a
    // jump between neighbouring samples counts as leaving the domain.
    let passes = |lift: &LocalLift, r: f64| {
        directions.iter().all(|dir| {
            let mut previous = DVector::zeros(spec.dim());
            (1..=RAY_SAMPLES).all(|k| {
                let y = x.coords() + dir * (r * k as f64 / RAY_SAMPLES as f64);
                match lift.theta_raw(&y) {
                    Ok(theta) => {
                        let ok = spec.lift_norm(theta.coords()) < limit
                            && (theta.coords() - &previous).norm() < 0.5 * limit;
                        previous = theta.coords().clone();
                        ok
                    }
                    Err(_) => false,
                }
            })
        })
    };
    if passes(&lift, MAX_RADIUS) {
        lift.domain_radius = MAX_RADIUS;
        return Ok(lift);
    }
    if !passes(&lift, MIN_RADIUS) {
        return Err(Error::LiftDomainEmpty { radius: MIN_RADIUS });
    }
    let (mut lo, mut hi) = (MIN_RADIUS, MAX_RADIUS);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if passes(&lift, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lift.domain_radius = lo;
    Ok(lift)
}

/// Fiber part of `Ψ(u, w) = exp(u)⁻¹·exp_*|_u w`, with `exp_*` by central
/// difference.
pub fn psi(
    spec: &GroupSpec,
    u: &AlgebraElement,
    w: &AlgebraElement,
    h: f64,
) -> Result<AlgebraElement> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(
            "finite-difference step must be positive".into(),
        ));
    }
    let plus = spec.exp(&spec.from_coords((u.coords() + w.coords() * h).as_slice())?)?;
    let minus = spec.exp(&spec.from_coords((u.coords() - w.coords() * h).as_slice())?)?;
    let pushed = (plus.into_matrix() - minus.into_matrix()) / Complex64::new(2.0 * h, 0.0);
    let at = spec.exp(u)?;
    let translated = spec.inverse(&at).into_matrix() * pushed;
    spec.to_algebra(&translated, TANGENT_TOL * w.norm().max(1.0))
}

/// `proj₂ ∘ Ψ ∘ θ_*` at `y` along `v`.
pub fn tilde_d_theta(
    lift: &LocalLift,
    y: &ChartPoint,
    v: &DVector<f64>,
    h: f64,
) -> Result<AlgebraElement> {
    let spec = lift.group();
    let pushed = lift.theta_pushforward(y, v, h)?;
    let theta = lift.theta(y)?;
    psi(spec, &theta, &spec.from_coords(pushed.as_slice())?, h)
}

/// The canonical differential `θ_*v` in algebra coordinates.
pub fn d_theta_canonical(
    lift: &LocalLift,
    y: &ChartPoint,
    v: &DVector<f64>,
    h: f64,
) -> Result<AlgebraElement> {
    let pushed = lift.theta_pushforward(y, v, h)?;
    lift.group().from_coords(pushed.as_slice())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    pub gap_tilde: f64,
    pub gap_canonical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftGapReport {
    pub anchor: Vec<f64>,
    pub domain_radius: f64,
    pub abelian: bool,
    /// `max ‖dz − d̃θ‖` over probes.
    pub max_gap_tilde: f64,
    /// `max ‖dz − dθ‖` over probes.
    pub max_gap_canonical: f64,
    pub passed: bool,
    pub probes: Vec<ProbeRecord>,
}

/// Compares `dz` against both lift differentials at every probe point and
/// direction. Passing requires `max_gap_tilde ≤ 1e-6`, and additionally
/// `max_gap_canonical ≤ 1e-6` for abelian groups. For non-abelian groups
/// the canonical gap is reported only.
pub fn lift_gap_check(
    z: &GroupValuedMap,
    x: &ChartPoint,
    probe_points: &[ChartPoint],
    probe_dirs: &[DVector<f64>],
    h: f64,
) -> Result<LiftGapReport> {
    let lift = build_lift(z, x)?;
    let mut probes = Vec::with_capacity(probe_points.len() * probe_dirs.len());
    for y in probe_points {
        for v in probe_dirs {
            let exact = dz(z, y, v, h)?;
            let tilde = tilde_d_theta(&lift, y, v, h)?;
            let canonical = d_theta_canonical(&lift, y, v, h)?;
            probes.push(ProbeRecord {
                point: y.coords().iter().copied().collect(),
                direction: v.iter().copied().collect(),
                gap_tilde: (exact.coords() - tilde.coords()).norm(),
                gap_canonical: (exact.coords() - canonical.coords()).norm(),
            });
        }
    }
    let max_gap_tilde = max_of(probes.iter().map(|p| p.gap_tilde));
    let max_gap_canonical = max_of(probes.iter().map(|p| p.gap_canonical));
    let abelian = z.target().is_abelian();
    let passed = max_gap_tilde <= LIFT_GAP_TOL && (!abelian || max_gap_canonical <= LIFT_GAP_TOL);
    Ok(LiftGapReport {
        anchor: x.coords().iter().copied().collect(),
        domain_radius: lift.domain_radius,
        abelian,
        max_gap_tilde,
        max_gap_canonical,
        passed,
        probes,
    })
}

/// Probe points at `fraction × radius` from the anchor, one per probe
/// direction, all inside the lift domain.
pub fn probes_around(lift: &LocalLift, fraction: f64) -> Vec<ChartPoint> {
    let chart = lift.z.source();
    probe_directions(chart.dim())
        .iter()
        .map(|dir| chart.offset(&lift.anchor, dir, fraction * lift.domain_radius))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::matrix::commutator;
    use crate::manifold::{ChartModel, DEFAULT_FD_STEP as H};
    use std::f64::consts::PI;
    use std::sync::Arc;

    /// Σ_k (−ad_u)^k w / (k+1)!, truncated at k = 20.
    fn dexp_series(spec: &GroupSpec, u: &AlgebraElement, w: &AlgebraElement) -> DVector<f64> {
        let mut term = w.matrix().clone();
        let mut sum = term.clone();
        let mut factorial = 1.0;
        for k in 1..=20 {
            term = -commutator(u.matrix(), &term);
            factorial *= (k + 1) as f64;
            sum += &term / Complex64::new(factorial, 0.0);
        }
        spec.project(&sum).0
    }

    fn circle_u1() -> GroupValuedMap {
        GroupValuedMap::from_algebra_curve(ChartModel::torus(1), Arc::new(GroupSpec::u1()), |x| {
            vec![x[0]]
        })
    }

    fn so3_line() -> GroupValuedMap {
        GroupValuedMap::from_algebra_curve(
            ChartModel::euclidean(1),
            Arc::new(GroupSpec::so3()),
            |x| vec![0.0, 0.0, x[0]],
        )
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
    fn lift_vanishes_at_anchor() {
        for z in [circle_u1(), so3_line()] {
            let x = z.source().point(&[0.4]).unwrap();
            let lift = build_lift(&z, &x).unwrap();
            assert!(lift.theta(&x).unwrap().norm() < 1e-15);
        }
    }

    #[test]
    fn u1_lift_is_the_angle() {
        let z = circle_u1();
        let x = z.source().point(&[0.0]).unwrap();
        let lift = build_lift(&z, &x).unwrap();
        assert_eq!(lift.domain_radius(), 1.0);
        for y in [0.3, 0.9, -0.7] {
            let theta = lift.theta(&z.source().point(&[y]).unwrap()).unwrap();
            assert!((theta.coords()[0] - y).abs() < 1e-12);
        }
        assert!(matches!(
            lift.theta(&z.source().point(&[2.0]).unwrap()),
            Err(Error::DomainExit { .. })
        ));
    }

    #[test]
    fn so3_lift_is_linear() {
        let z = so3_line();
        let lift = build_lift(&z, &z.source().point(&[0.0]).unwrap()).unwrap();
        let theta = lift.theta(&z.source().point(&[0.8]).unwrap()).unwrap();
        assert!((theta.coords() - DVector::from_vec(vec![0.0, 0.0, 0.8])).amax() < 1e-12);
    }

    #[test]
    fn fast_map_shrinks_the_domain() {
        // θ(y) = 5y reaches 0.9π at |y| ≈ 0.565
        let z = GroupValuedMap::from_algebra_curve(
            ChartModel::torus(1),
            Arc::new(GroupSpec::u1()),
            |x| vec![5.0 * x[0]],
        );
        let lift = build_lift(&z, &z.source().point(&[1.0]).unwrap()).unwrap();
        assert!((lift.domain_radius() - 0.9 * PI / 5.0).abs() < 1e-9);
    }

    #[test]
    fn wild_map_has_no_lift() {
        let z = GroupValuedMap::from_algebra_curve(
            ChartModel::euclidean(1),
            Arc::new(GroupSpec::u1()),
            |x| vec![1e7 * x[0]],
        );
        let err = build_lift(&z, &z.source().point(&[0.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::LiftDomainEmpty { .. }));
    }

    #[test]
    fn psi_is_identity_over_zero_and_on_abelian_groups() {
        for spec in [
            GroupSpec::u1(),
            GroupSpec::torus(2).unwrap(),
            GroupSpec::so3(),
            GroupSpec::heisenberg(),
        ] {
            let w: Vec<f64> = (0..spec.dim()).map(|k| 0.3 + k as f64).collect();
            let w = spec.from_coords(&w).unwrap();
            let out = psi(&spec, &spec.zero(), &w, H).unwrap();
            let gap = (out.coords() - w.coords()).amax();
            assert!(gap < 1e-9, "{} {gap:e}", spec.name());
        }
        let torus = GroupSpec::torus(2).unwrap();
        let u = torus.from_coords(&[2.0, -2.5]).unwrap();
        let w = torus.from_coords(&[0.7, 1.9]).unwrap();
        assert!((psi(&torus, &u, &w, H).unwrap().coords() - w.coords()).amax() < 1e-8);
    }

    #[test]
    fn psi_matches_dexp_series_on_so3() {
        let spec = GroupSpec::so3();
        let u = spec.from_coords(&[0.0, 0.0, PI / 2.0]).unwrap();
        let w = spec.from_coords(&[1.0, 0.0, 0.0]).unwrap();
        let out = psi(&spec, &u, &w, H).unwrap();
        let oracle = dexp_series(&spec, &u, &w);
        assert!((out.coords() - &oracle).amax() < 1e-8);
        let a = PI / 2.0;
        let closed = DVector::from_vec(vec![a.sin() / a, -(1.0 - a.cos()) / a, 0.0]);
        assert!((oracle - closed).amax() < 1e-12);
    }

    #[test]
    fn tilde_matches_dz_and_canonical_gap_on_so3() {
        let z = so3_wobble();
        let anchor = z.source().point(&[0.0, 0.0]).unwrap();
        let lift = build_lift(&z, &anchor).unwrap();
        let at_anchor = DVector::from_vec(vec![1.0, 0.3]);
        let a = tilde_d_theta(&lift, &anchor, &at_anchor, H).unwrap();
        let b = d_theta_canonical(&lift, &anchor, &at_anchor, H).unwrap();
        assert!((a.coords() - b.coords()).amax() < 1e-9);

        let probes = probes_around(&lift, 0.5);
        let dirs = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 2f64.sqrt()]),
        ];
        let report = lift_gap_check(&z, &anchor, &probes, &dirs, H).unwrap();
        assert!(report.passed);
        assert!(report.max_gap_tilde <= 1e-6, "{:e}", report.max_gap_tilde);
        assert!(
            report.max_gap_canonical > 1e-3,
            "{:e}",
            report.max_gap_canonical
        );
    }

    #[test]
    fn so3_line_lift_at_one() {
        let z = so3_line();
        let lift = build_lift(&z, &z.source().point(&[0.0]).unwrap()).unwrap();
        let y = z.source().point(&[1.0]).unwrap();
        let v = DVector::from_vec(vec![1.0]);
        let tilde = tilde_d_theta(&lift, &y, &v, H).unwrap();
        assert!((tilde.coords() - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-7);
    }

    #[test]
    fn periodic_seam_does_not_break_differences() {
        let z = GroupValuedMap::from_algebra_curve(
            ChartModel::torus(2),
            Arc::new(GroupSpec::torus(2).unwrap()),
            |x| vec![x[0], x[1]],
        );
        let anchor = z.source().point(&[0.0, 6.2]).unwrap();
        let lift = build_lift(&z, &anchor).unwrap();
        let probes = probes_around(&lift, 0.5);
        let dirs = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![-0.4, 1.0]),
        ];
        let report = lift_gap_check(&z, &anchor, &probes, &dirs, H).unwrap();
        assert!(report.passed && report.abelian);
        assert!(report.max_gap_canonical <= 1e-6);
    }
}
