//! Group-valued Koopman eigenfunctions.
//!
//! `z: M → G` is an eigenfunction of the flow of `V` with frequency `ω ∈ g`
//! exactly when `dz(V) ≡ ω`, equivalently `z(Φ^t x) = z(x)·exp(tω)`. Both
//! sides are checked here on finite sample sets, together with the
//! rescaling criterion: some `α·V` makes `z` an eigenfunction iff every
//! `dz(V)(x)` is nonzero and lies on one line `L ⊂ g`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::differential::{dz, dz_along_field, fix_sign, GroupValuedMap};
use crate::error::{Error, Result};
use crate::lie::{CMatrix, GroupSpec};
use crate::manifold::{flow, ChartModel, ChartPoint, VectorField};
use crate::numeric::{max_of, pairwise_mean};

/// Default collinearity threshold on `σ₂/σ₁`.
pub const DEFAULT_COLLIN_TOL: f64 = 1e-6;
/// Default floor on `‖dz(V)(x)‖`.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;
/// Number of equal intervals between semiconjugacy checkpoints.
pub const CHECKPOINT_INTERVALS: usize = 100;
/// Tolerance of the per-sample check in [`compute_alpha`], relative to `‖ω‖`.
pub const ALPHA_RESIDUAL_TOL: f64 = 1e-6;
/// Largest angle between a target frequency and the detected line.
pub const DIRECTION_ANGLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenReport {
    pub is_eigenfunction: bool,
    pub omega_hat: Vec<f64>,
    pub max_deviation: f64,
    /// Filled in once a trajectory check has been run.
    pub semiconjugacy_residual: Option<f64>,
    pub samples_used: usize,
    pub tolerance: f64,
    pub deviations: Vec<f64>,
    pub failing_samples: Vec<usize>,
    #[serde(skip)]
    pub dz_v: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaleReport {
    pub rescalable: bool,
    pub direction: Option<Vec<f64>>,
    pub collinearity_ratio: f64,
    pub min_norm: f64,
    pub singular_values: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    #[serde(skip)]
    pub dz_v: Vec<DVector<f64>>,
}

/// Mean of `dz(V)` over the samples.
pub fn estimate_frequency(
    z: &GroupValuedMap,
    field: &VectorField,
    samples: &[ChartPoint],
    h: f64,
) -> Result<DVector<f64>> {
    Ok(pairwise_mean(&dz_along_field(z, field, samples, h)?))
}

/// Checks `dz(V) ≡ ω̂` up to `tol` at every sample.
pub fn verify_eigenfunction(
    z: &GroupValuedMap,
    field: &VectorField,
    samples: &[ChartPoint],
    tol: f64,
    h: f64,
) -> Result<EigenReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(
            "eigenfunction verification needs at least two samples".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let rows = dz_along_field(z, field, samples, h)?;
    Ok(eigen_report_from_rows(rows, tol))
}

pub fn eigen_report_from_rows(rows: Vec<DVector<f64>>, tol: f64) -> EigenReport {
    let omega_hat = pairwise_mean(&rows);
    let deviations: Vec<f64> = rows.iter().map(|r| (r - &omega_hat).norm()).collect();
    let max_deviation = max_of(deviations.iter().copied());
    let failing_samples = deviations
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > tol)
        .map(|(i, _)| i)
        .collect();
    EigenReport {
        is_eigenfunction: max_deviation <= tol,
        omega_hat: omega_hat.iter().copied().collect(),
        max_deviation,
        semiconjugacy_residual: None,
        samples_used: rows.len(),
        tolerance: tol,
        deviations,
        failing_samples,
        dz_v: rows,
    }
}

/// Residual `‖z(Φ^t x₀) − z(x₀)·exp(tω)‖_F` at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub residual: f64,
}

/// Residual at `t = kT/100`, `k = 0..=100`, integrating from checkpoint to
/// checkpoint.
pub fn semiconjugacy_profile(
    z: &GroupValuedMap,
    field: &VectorField,
    omega: &[f64],
    x0: &ChartPoint,
    horizon: f64,
    step: f64,
) -> Result<Vec<Checkpoint>> {
    if !(horizon >= 0.0) || !(step > 0.0) {
        return Err(Error::InvalidInput(
            "semiconjugacy needs T >= 0 and step > 0".into(),
        ));
    }
    let spec = z.target();
    let omega = spec.from_coords(omega)?;
    let start = z.eval(x0);
    let spacing = horizon / CHECKPOINT_INTERVALS as f64;
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(CHECKPOINT_INTERVALS + 1);
    out.push(Checkpoint {
        t: 0.0,
        residual: 0.0,
    });
    if horizon == 0.0 {
        return Ok(out);
    }
    for k in 1..=CHECKPOINT_INTERVALS {
        x = flow(field, &x, spacing, step)?;
        let t = spacing * k as f64;
        let predicted = spec.exp_flow(&start, &omega, t)?;
        out.push(Checkpoint {
            t,
            residual: z.eval(&x).distance(&predicted),
        });
    }
    Ok(out)
}

pub fn semiconjugacy_residual(
    z: &GroupValuedMap,
    field: &VectorField,
    omega: &[f64],
    x0: &ChartPoint,
    horizon: f64,
    step: f64,
) -> Result<f64> {
    let profile = semiconjugacy_profile(z, field, omega, x0, horizon, step)?;
    Ok(max_of(profile.iter().map(|c| c.residual)))
}

/// The rescaling test on precomputed `dz(V)` rows.
pub fn rescale_from_rows(
    rows: Vec<DVector<f64>>,
    collin_tol: f64,
    zero_tol: f64,
) -> Result<RescaleReport> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if !(collin_tol > 0.0) || !(zero_tol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    let d = rows[0].len();
    let stacked = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let sigma1 = singular_values[0];
    let sigma2 = singular_values.get(1).copied().unwrap_or(0.0);
    let collinearity_ratio = if sigma1 > 0.0 { sigma2 / sigma1 } else { 1.0 };
    let min_norm = rows.iter().map(|r| r.norm()).fold(f64::INFINITY, f64::min);
    let rescalable = collinearity_ratio <= collin_tol && min_norm >= zero_tol;
    let direction = rescalable.then(|| {
        let top = v_t.row(order[0]).transpose();
        fix_sign(top.normalize()).iter().copied().collect()
    });
    Ok(RescaleReport {
        rescalable,
        direction,
        collinearity_ratio,
        min_norm,
        singular_values,
        alpha: None,
        dz_v: rows,
    })
}

/// Decides whether `V` can be rescaled so that `z` becomes an eigenfunction.
pub fn check_rescalable(
    z: &GroupValuedMap,
    field: &VectorField,
    samples: &[ChartPoint],
    collin_tol: f64,
    zero_tol: f64,
    h: f64,
) -> Result<RescaleReport> {
    rescale_from_rows(dz_along_field(z, field, samples, h)?, collin_tol, zero_tol)
}

/// Sine of the angle between `v` and the unit vector `direction`.
fn angle_to_line(v: &DVector<f64>, direction: &DVector<f64>) -> f64 {
    let unit = v.normalize();
    (&unit - direction * unit.dot(direction))
        .norm()
        .min(1.0)
        .asin()
}

/// Per-sample `α(x) = ⟨ω, ω⟩ / ⟨dz(V)(x), ω⟩`, signed.
pub fn compute_alpha(
    report: &RescaleReport,
    omega_target: &[f64],
    zero_tol: f64,
) -> Result<Vec<f64>> {
    let direction = match (&report.direction, report.rescalable) {
        (Some(dir), true) => DVector::from_column_slice(dir),
        _ => return Err(Error::NotRescalable),
    };
    let omega = DVector::from_column_slice(omega_target);
    if omega.len() != direction.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} coordinates", direction.len()),
            found: omega.len().to_string(),
        });
    }
    let omega_sq = omega.norm_squared();
    if !(omega_sq > 0.0) {
        return Err(Error::InvalidInput(
            "target frequency must be nonzero".into(),
        ));
    }
    let angle = angle_to_line(&omega, &direction);
    if angle > DIRECTION_ANGLE_TOL {
        return Err(Error::DirectionMismatch { angle });
    }
    let omega_norm = omega_sq.sqrt();
    report
        .dz_v
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let ip = row.dot(&omega);
            if ip.abs() < zero_tol {
                return Err(Error::at_sample(
                    i,
                    Error::DivisionNearZero {
                        value: ip,
                        tolerance: zero_tol,
                    },
                ));
            }
            let alpha = omega_sq / ip;
            let residual = (row * alpha - &omega).norm();
            if residual > ALPHA_RESIDUAL_TOL * omega_norm {
                return Err(Error::at_sample(i, Error::RescaleResidual { residual }));
            }
            Ok(alpha)
        })
        .collect()
}

/// The field `α·V` with `α` evaluated pointwise from `dz`. Points where
/// `α` is undefined map to NaN, which the flow reports as a blow-up.
pub fn rescaled_field(
    z: &GroupValuedMap,
    field: &VectorField,
    omega_target: &[f64],
    h: f64,
) -> VectorField {
    let z = z.clone();
    let inner = field.clone();
    let omega = DVector::from_column_slice(omega_target);
    let omega_sq = omega.norm_squared();
    field.scaled(move |x| {
        let p = match z.source().point_from(x.clone()) {
            Ok(p) => p,
            Err(_) => return f64::NAN,
        };
        match dz(&z, &p, &inner.eval_raw(x), h) {
            Ok(v) => omega_sq / v.coords().dot(&omega),
            Err(_) => f64::NAN,
        }
    })
}

type ComplexFn = dyn Fn(&DVector<f64>) -> Complex64 + Send + Sync;

/// A scalar complex observable on a chart.
#[derive(Clone)]
pub struct ComplexMap {
    source: ChartModel,
    f: Arc<ComplexFn>,
}

impl fmt::Debug for ComplexMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComplexMap")
            .field("source", &self.source)
            .finish_non_exhaustive()
    }
}

impl ComplexMap {
    pub fn new(
        source: ChartModel,
        f: impl Fn(&DVector<f64>) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        ComplexMap {
            source,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &ChartPoint) -> Complex64 {
        (self.f)(x.coords())
    }

    /// `ζ/|ζ|` as a map into U(1).
    pub fn normalized(&self) -> GroupValuedMap {
        let f = self.f.clone();
        GroupValuedMap::new(self.source.clone(), Arc::new(GroupSpec::u1()), move |x| {
            let v = f(x);
            CMatrix::from_element(1, 1, v / v.norm())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S1Report {
    pub modulus_constant: bool,
    pub transversal: bool,
    pub min_modulus: f64,
    pub max_modulus: f64,
    pub min_abs_dz_v: f64,
    /// Rescaling test on the normalized map.
    pub rescale: RescaleReport,
}

impl S1Report {
    pub fn rescalable(&self) -> bool {
        self.modulus_constant && self.transversal
    }

    /// The transversality verdict and the rescaling verdict on `ζ/|ζ|`
    /// coincide when `d = 1`.
    pub fn verdicts_agree(&self) -> bool {
        self.transversal == self.rescale.rescalable
    }
}

/// Constant modulus and transversality of `V` to the level sets of `ζ`.
pub fn s1_candidate_check(
    zeta: &ComplexMap,
    field: &VectorField,
    samples: &[ChartPoint],
    collin_tol: f64,
    zero_tol: f64,
    h: f64,
) -> Result<S1Report> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let mut moduli = Vec::with_capacity(samples.len());
    for (i, x) in samples.iter().enumerate() {
        let m = zeta.eval(x).norm();
        if !(m >= 1e-12) {
            return Err(Error::at_sample(i, Error::ZeroValue { modulus: m }));
        }
        moduli.push(m);
    }
    let min_modulus = moduli.iter().copied().fold(f64::INFINITY, f64::min);
    let max_modulus = max_of(moduli.iter().copied());
    let mean = crate::numeric::pairwise_sum(&moduli) / moduli.len() as f64;
    let rescale = check_rescalable(&zeta.normalized(), field, samples, collin_tol, zero_tol, h)?;
    let min_abs_dz_v = rescale.min_norm;
    Ok(S1Report {
        modulus_constant: max_modulus - min_modulus <= 1e-8 * mean,
        transversal: min_abs_dz_v >= zero_tol,
        min_modulus,
        max_modulus,
        min_abs_dz_v,
        rescale,
    })
}
