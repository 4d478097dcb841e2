//! Charts on `ℝ^k × T^{n−k}` with vector fields on them.
//!
//! Periodic coordinates have period 2π and are stored in `[0, 2π)`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default fixed RK4 step.
pub const DEFAULT_RK4_STEP: f64 = 1e-3;
/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
const MAX_FLOW_STEPS: f64 = 1e7;

/// Reduces an angle into `[0, 2π)`.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shifts an angle difference into `(−π, π]`.
pub fn wrap_difference(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartModel {
    periodic: Vec<bool>,
    names: Vec<String>,
}

impl ChartModel {
    pub fn new(periodic: Vec<bool>, names: Option<Vec<String>>) -> Result<Self> {
        if periodic.is_empty() {
            return Err(Error::InvalidInput(
                "chart dimension must be at least 1".into(),
            ));
        }
        let names = match names {
            Some(names) if names.len() != periodic.len() => {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} coordinate names", periodic.len()),
                    found: names.len().to_string(),
                })
            }
            Some(names) => names,
            None => (1..=periodic.len()).map(|i| format!("x{i}")).collect(),
        };
        Ok(ChartModel { periodic, names })
    }

    /// `T^n` with coordinates `theta1..thetan`.
    pub fn torus(n: usize) -> Self {
        let names = (1..=n).map(|i| format!("theta{i}")).collect();
        Self::new(vec![true; n], Some(names)).expect("n >= 1")
    }

    /// `ℝ^n`.
    pub fn euclidean(n: usize) -> Self {
        Self::new(vec![false; n], None).expect("n >= 1")
    }

    pub fn dim(&self) -> usize {
        self.periodic.len()
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn reduce(&self, x: &mut DVector<f64>) {
        for (xi, &p) in x.iter_mut().zip(&self.periodic) {
            if p {
                *xi = reduce_angle(*xi);
            }
        }
    }

    /// Builds a point, reducing periodic coordinates.
    pub fn point(&self, coords: &[f64]) -> Result<ChartPoint> {
        self.point_from(DVector::from_column_slice(coords))
    }

    pub fn point_from(&self, mut x: DVector<f64>) -> Result<ChartPoint> {
        if x.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coordinates", self.dim()),
                found: x.len().to_string(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("chart point"));
        }
        self.reduce(&mut x);
        Ok(ChartPoint(x))
    }

    /// `a − b` with periodic coordinates unwrapped into `(−π, π]`.
    pub fn difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut d = a - b;
        for (di, &p) in d.iter_mut().zip(&self.periodic) {
            if p {
                *di = wrap_difference(*di);
            }
        }
        d
    }

    /// The point `x + s·v`, reduced.
    pub fn offset(&self, x: &ChartPoint, v: &DVector<f64>, s: f64) -> ChartPoint {
        let mut y = &x.0 + v * s;
        self.reduce(&mut y);
        ChartPoint(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint(DVector<f64>);

impl ChartPoint {
    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub v: DVector<f64>,
}

type FieldFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A vector field on a chart, assumed `C¹`.
#[derive(Clone)]
pub struct VectorField {
    chart: ChartModel,
    f: Arc<FieldFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("chart", &self.chart)
            .finish_non_exhaustive()
    }
}

impl VectorField {
    pub fn new(
        chart: ChartModel,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        VectorField {
            chart,
            f: Arc::new(f),
        }
    }

    pub fn constant(chart: ChartModel, value: &[f64]) -> Result<Self> {
        if value.len() != chart.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} components", chart.dim()),
                found: value.len().to_string(),
            });
        }
        let value = DVector::from_column_slice(value);
        Ok(Self::new(chart, move |_| value.clone()))
    }

    /// `x ↦ A·x`.
    pub fn linear(chart: ChartModel, a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != chart.dim() || a.ncols() != chart.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{0}x{0} matrix", chart.dim()),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        Ok(Self::new(chart, move |x| &a * x))
    }

    pub fn chart(&self) -> &ChartModel {
        &self.chart
    }

    pub fn eval_raw(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    pub fn eval(&self, x: &ChartPoint) -> DVector<f64> {
        (self.f)(&x.0)
    }

    /// The field `α·V` for a scalar function `α`.
    pub fn scaled(&self, alpha: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        let inner = self.f.clone();
        Self::new(self.chart.clone(), move |x| inner(x) * alpha(x))
    }
}

/// Fixed-step classical RK4 approximation of `Φ^t_V(x)`. A final partial
/// step lands exactly on `t`; periodic coordinates are reduced after each
/// step.
pub fn flow(field: &VectorField, x: &ChartPoint, t: f64, step: f64) -> Result<ChartPoint> {
    if !(step > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!(
            "flow needs step > 0 and finite t (step {step}, t {t})"
        )));
    }
    if t.abs() / step > MAX_FLOW_STEPS {
        return Err(Error::InvalidInput(format!(
            "|t|/step = {:.3e} exceeds the step budget",
            t.abs() / step
        )));
    }
    let chart = field.chart();
    let full = (t.abs() / step).floor() as u64;
    let remainder = t.abs() - full as f64 * step;
    let h = step.copysign(t);
    let mut y = x.0.clone();
    let mut elapsed = 0.0;
    let advance = |y: &mut DVector<f64>, h: f64, elapsed: f64| -> Result<()> {
        let k1 = field.eval_raw(y);
        let k2 = field.eval_raw(&(&*y + &k1 * (h / 2.0)));
        let k3 = field.eval_raw(&(&*y + &k2 * (h / 2.0)));
        let k4 = field.eval_raw(&(&*y + &k3 * h));
        *y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: elapsed + h });
        }
        chart.reduce(y);
        Ok(())
    };
    for _ in 0..full {
        advance(&mut y, h, elapsed)?;
        elapsed += h;
    }
    if remainder > 1e-15 * step {
        advance(&mut y, remainder.copysign(t), elapsed)?;
    }
    Ok(ChartPoint(y))
}

type GramFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Riemannian metric given by its Gram matrix in chart coordinates.
#[derive(Clone)]
pub struct RiemannianMetric {
    n: usize,
    gram: Arc<GramFn>,
}

impl fmt::Debug for RiemannianMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RiemannianMetric")
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl RiemannianMetric {
    pub fn new(
        n: usize,
        gram: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        RiemannianMetric {
            n,
            gram: Arc::new(gram),
        }
    }

    /// The flat metric.
    pub fn identity(n: usize) -> Self {
        Self::new(n, move |_| DMatrix::identity(n, n))
    }

    pub fn constant(gram: DMatrix<f64>) -> Result<Self> {
        let n = gram.nrows();
        validate_gram(&gram, n)?;
        Ok(Self::new(n, move |_| gram.clone()))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The Gram matrix at `x`, checked for symmetry and positive-definiteness.
    pub fn gram_at(&self, x: &ChartPoint) -> Result<DMatrix<f64>> {
        let g = (self.gram)(&x.0);
        validate_gram(&g, self.n)?;
        Ok(g)
    }
}

fn validate_gram(g: &DMatrix<f64>, n: usize) -> Result<()> {
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n} Gram matrix"),
            found: format!("{}x{}", g.nrows(), g.ncols()),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric"));
    }
    if (g - g.transpose()).amax() > 1e-12 * g.amax().max(1.0) {
        return Err(Error::SingularMetric);
    }
    if g.clone().cholesky().is_none() {
        return Err(Error::SingularMetric);
    }
    Ok(())
}

/// `uᵀ·G(x)·w`.
pub fn metric_inner(
    metric: &RiemannianMetric,
    x: &ChartPoint,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<f64> {
    if u.len() != metric.dim() || w.len() != metric.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} components", metric.dim()),
            found: format!("{}, {}", u.len(), w.len()),
        });
    }
    if u.iter().chain(w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tangent vector"));
    }
    let g = metric.gram_at(x)?;
    Ok(u.dot(&(g * w)))
}

type MapFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A smooth map between chart models.
#[derive(Clone)]
pub struct ChartMap {
    source: ChartModel,
    target: ChartModel,
    f: Arc<MapFn>,
}

impl fmt::Debug for ChartMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartMap")
            .field("source", &self.source)
            .field("target", &self.target)
            .finish_non_exhaustive()
    }
}

impl ChartMap {
    pub fn new(
        source: ChartModel,
        target: ChartModel,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        ChartMap {
            source,
            target,
            f: Arc::new(f),
        }
    }

    pub fn source(&self) -> &ChartModel {
        &self.source
    }

    pub fn target(&self) -> &ChartModel {
        &self.target
    }

    pub fn eval_raw(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    pub fn apply(&self, x: &ChartPoint) -> Result<ChartPoint> {
        self.target.point_from((self.f)(&x.0))
    }
}

/// Central-difference pushforward `φ_*|_x v`, unwrapping periodic outputs.
pub fn pushforward_map(
    map: &ChartMap,
    x: &ChartPoint,
    v: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    if v.len() != map.source.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} components", map.source.dim()),
            found: v.len().to_string(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidInput(
            "finite-difference step must be positive".into(),
        ));
    }
    let plus = map.eval_raw(&(&x.0 + v * h));
    let minus = map.eval_raw(&(&x.0 - v * h));
    let out = map.target.difference(&plus, &minus) / (2.0 * h);
    if out.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteState { t: 0.0 });
    }
    Ok(out)
}
