//! TOML system definitions.
//!
//! Every table rejects unknown keys, so a misspelt tolerance is an error
//! rather than a silently ignored line.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::differential::GroupValuedMap;
use crate::error::{Error, Result};
use crate::lie::{CMatrix, GroupKind, GroupSpec};
use crate::manifold::{
    ChartModel, ChartPoint, RiemannianMetric, VectorField, DEFAULT_FD_STEP, DEFAULT_RK4_STEP,
};

/// Upper bound on the number of grid samples.
pub const MAX_GRID_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    Rescale,
    LiftCheck,
    Residual,
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Rescale => "rescale",
            Command::LiftCheck => "lift-check",
            Command::Residual => "residual",
            Command::Suite => "suite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub dim: usize,
    pub periodic: Option<Vec<bool>>,
    pub names: Option<Vec<String>>,
    /// Sampling box for non-periodic coordinates, one `[lo, hi]` each.
    pub bounds: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrigFunc {
    Cos,
    Sin,
}

/// `coef · func(freq · x)` contributing to one output component.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub component: usize,
    pub coef: f64,
    pub freq: Vec<i64>,
    pub func: TrigFunc,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    /// `constant`, `linear` or `trig`.
    pub kind: String,
    pub values: Option<Vec<f64>>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub terms: Option<Vec<TrigTerm>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// `torus-identity`, `exp-linear`, `exp-trig` or `constant`.
    pub kind: String,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub terms: Option<Vec<TrigTerm>>,
    pub coords: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub diag: Option<Vec<f64>>,
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    /// Grid points per axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_random")]
    pub random: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> usize {
    16
}

fn default_random() -> usize {
    256
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec {
            grid: default_grid(),
            random: default_random(),
            seed: 0,
        }
    }
}

/// Expected verdicts, checked by `suite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub eigenfunction: Option<bool>,
    pub rescalable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDefinition {
    pub id: String,
    pub group: String,
    pub description: String,
    pub chart: ChartSpec,
    pub field: FieldSpec,
    pub map: MapSpec,
    pub metric: Option<MetricSpec>,
    pub sampling: SamplingSpec,
    pub expect: Expectations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub tol: f64,
    pub collin_tol: f64,
    pub zero_tol: f64,
    pub fd_step: f64,
    pub rk4_step: f64,
    /// Integration horizon of the semiconjugacy residual.
    pub horizon: f64,
    /// Tolerance for the residual and for the rescaled-field verification.
    pub residual_tol: f64,
    /// Frequency for the residual; the sample mean of `dz(V)` when absent.
    pub omega: Option<Vec<f64>>,
    /// Target frequency of the rescaling; the detected direction scaled to
    /// the mean `‖dz(V)‖` when absent.
    pub omega_target: Option<Vec<f64>>,
    /// Initial point of the residual and anchor of the lift check.
    pub anchor: Option<Vec<f64>>,
    pub out: Option<String>,
    pub csv: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Verify,
            tol: 1e-6,
            collin_tol: crate::koopman::DEFAULT_COLLIN_TOL,
            zero_tol: crate::koopman::DEFAULT_ZERO_TOL,
            fd_step: DEFAULT_FD_STEP,
            rk4_step: DEFAULT_RK4_STEP,
            horizon: 10.0,
            residual_tol: 1e-5,
            omega: None,
            omega_target: None,
            anchor: None,
            out: None,
            csv: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("collin_tol", self.collin_tol),
            ("zero_tol", self.zero_tol),
            ("fd_step", self.fd_step),
            ("rk4_step", self.rk4_step),
            ("residual_tol", self.residual_tol),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(
                    field,
                    format!("must be positive and finite, got {value}"),
                ));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation(
                "horizon",
                "must be non-negative and finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    command: Option<Command>,
    tol: Option<f64>,
    collin_tol: Option<f64>,
    zero_tol: Option<f64>,
    fd_step: Option<f64>,
    rk4_step: Option<f64>,
    horizon: Option<f64>,
    residual_tol: Option<f64>,
    omega: Option<Vec<f64>>,
    omega_target: Option<Vec<f64>>,
    anchor: Option<Vec<f64>>,
    out: Option<String>,
    csv: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLayout {
    id: String,
    group: String,
    #[serde(default)]
    description: String,
    chart: ChartSpec,
    field: FieldSpec,
    map: MapSpec,
    metric: Option<MetricSpec>,
    #[serde(default)]
    sampling: SamplingSpec,
    #[serde(default)]
    expect: Expectations,
    #[serde(default)]
    run: RunSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Parses a configuration file body.
pub fn parse_config(text: &str) -> Result<(SystemDefinition, RunConfig)> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "empty configuration".into(),
        });
    }
    let layout: FileLayout = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let defaults = RunConfig::default();
    let r = layout.run;
    let config = RunConfig {
        command: r.command.unwrap_or(defaults.command),
        tol: r.tol.unwrap_or(defaults.tol),
        collin_tol: r.collin_tol.unwrap_or(defaults.collin_tol),
        zero_tol: r.zero_tol.unwrap_or(defaults.zero_tol),
        fd_step: r.fd_step.unwrap_or(defaults.fd_step),
        rk4_step: r.rk4_step.unwrap_or(defaults.rk4_step),
        horizon: r.horizon.unwrap_or(defaults.horizon),
        residual_tol: r.residual_tol.unwrap_or(defaults.residual_tol),
        omega: r.omega,
        omega_target: r.omega_target,
        anchor: r.anchor,
        out: r.out,
        csv: r.csv,
    };
    config.validate()?;
    let system = SystemDefinition {
        id: layout.id,
        group: layout.group,
        description: layout.description,
        chart: layout.chart,
        field: layout.field,
        map: layout.map,
        metric: layout.metric,
        sampling: layout.sampling,
        expect: layout.expect,
    };
    system.build()?;
    Ok((system, config))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<(SystemDefinition, RunConfig)> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// A fully instantiated system.
#[derive(Debug, Clone)]
pub struct System {
    pub id: String,
    pub chart: ChartModel,
    pub group: Arc<GroupSpec>,
    pub field: VectorField,
    pub map: GroupValuedMap,
    pub metric: RiemannianMetric,
    pub samples: Vec<ChartPoint>,
    pub expect: Expectations,
}

fn check_matrix(
    field: &str,
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::validation(
            field,
            format!("expected a {nrows}x{ncols} matrix"),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn check_vector(field: &str, values: &[f64], len: usize) -> Result<DVector<f64>> {
    if values.len() != len {
        return Err(Error::validation(
            field,
            format!("expected {len} values, got {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(field, "entries must be finite"));
    }
    Ok(DVector::from_column_slice(values))
}

/// Compiled trigonometric polynomial `ℝ^n → ℝ^m`.
#[derive(Debug, Clone)]
struct TrigTable {
    outputs: usize,
    terms: Vec<(usize, f64, DVector<f64>, TrigFunc)>,
}

impl TrigTable {
    fn compile(field: &str, terms: &[TrigTerm], n: usize, outputs: usize) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::validation(field, "at least one term is required"));
        }
        let mut compiled = Vec::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if t.component >= outputs {
                return Err(Error::validation(
                    format!("{field}[{i}].component"),
                    format!("must be below {outputs}"),
                ));
            }
            if t.freq.len() != n {
                return Err(Error::validation(
                    format!("{field}[{i}].freq"),
                    format!("expected {n} integers"),
                ));
            }
            if !t.coef.is_finite() {
                return Err(Error::validation(
                    format!("{field}[{i}].coef"),
                    "must be finite",
                ));
            }
            let freq = DVector::from_iterator(n, t.freq.iter().map(|&k| k as f64));
            compiled.push((t.component, t.coef, freq, t.func));
        }
        Ok(TrigTable {
            outputs,
            terms: compiled,
        })
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.outputs);
        for (component, coef, freq, func) in &self.terms {
            let phase = freq.dot(x);
            out[*component] += coef
                * match func {
                    TrigFunc::Cos => phase.cos(),
                    TrigFunc::Sin => phase.sin(),
                };
        }
        out
    }
}

impl SystemDefinition {
    pub fn chart_model(&self) -> Result<ChartModel> {
        let n = self.chart.dim;
        if n == 0 {
            return Err(Error::validation("chart.dim", "must be at least 1"));
        }
        let periodic = self.chart.periodic.clone().unwrap_or_else(|| vec![true; n]);
        if periodic.len() != n {
            return Err(Error::validation(
                "chart.periodic",
                format!("expected {n} entries"),
            ));
        }
        if let Some(names) = &self.chart.names {
            if names.len() != n {
                return Err(Error::validation(
                    "chart.names",
                    format!("expected {n} entries"),
                ));
            }
        }
        ChartModel::new(periodic, self.chart.names.clone())
    }

    /// One interval per axis. The file may list either every axis or only
    /// the non-periodic ones; periodic axes always use `[0, 2π)`.
    fn bounds(&self, chart: &ChartModel) -> Result<Vec<[f64; 2]>> {
        let n = chart.dim();
        let open = chart.periodic().iter().filter(|&&p| !p).count();
        let given = match &self.chart.bounds {
            None => return Ok(vec![[-1.0, 1.0]; n]),
            Some(b) => b,
        };
        if given
            .iter()
            .any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::validation(
                "chart.bounds",
                "each interval needs finite lo < hi",
            ));
        }
        if given.len() == n {
            return Ok(given.clone());
        }
        if given.len() == open {
            let mut rest = given.iter();
            return Ok(chart
                .periodic()
                .iter()
                .map(|&p| if p { [0.0, TAU] } else { *rest.next().unwrap() })
                .collect());
        }
        Err(Error::validation(
            "chart.bounds",
            format!("expected {open} or {n} intervals"),
        ))
    }

    fn vector_field(&self, chart: &ChartModel) -> Result<VectorField> {
        let n = chart.dim();
        let f = &self.field;
        match f.kind.as_str() {
            "constant" => {
                let values = f
                    .values
                    .as_ref()
                    .ok_or_else(|| Error::validation("field.values", "required"))?;
                check_vector("field.values", values, n)?;
                VectorField::constant(chart.clone(), values)
            }
            "linear" => {
                let rows = f
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::validation("field.matrix", "required"))?;
                VectorField::linear(chart.clone(), check_matrix("field.matrix", rows, n, n)?)
            }
            "trig" => {
                let terms = f
                    .terms
                    .as_ref()
                    .ok_or_else(|| Error::validation("field.terms", "required"))?;
                let table = TrigTable::compile("field.terms", terms, n, n)?;
                Ok(VectorField::new(chart.clone(), move |x| table.eval(x)))
            }
            other => Err(Error::validation(
                "field.kind",
                format!("unknown field kind `{other}`"),
            )),
        }
    }

    fn group_map(&self, chart: &ChartModel, group: &Arc<GroupSpec>) -> Result<GroupValuedMap> {
        let n = chart.dim();
        let d = group.dim();
        let m = &self.map;
        match m.kind.as_str() {
            "torus-identity" => {
                let matches = match group.kind() {
                    GroupKind::Torus(k) => k == n,
                    GroupKind::U1 => n == 1,
                    _ => false,
                };
                if !matches {
                    return Err(Error::validation(
                        "map.kind",
                        format!("torus-identity needs group torus:{n}"),
                    ));
                }
                Ok(GroupValuedMap::new(
                    chart.clone(),
                    group.clone(),
                    move |x| {
                        CMatrix::from_diagonal(
                            &x.map(|t| num_complex::Complex64::from_polar(1.0, t)),
                        )
                    },
                ))
            }
            "exp-linear" => {
                let rows = m
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::validation("map.matrix", "required"))?;
                let a = check_matrix("map.matrix", rows, d, n)?;
                Ok(GroupValuedMap::from_algebra_curve(
                    chart.clone(),
                    group.clone(),
                    move |x| (&a * x).iter().copied().collect(),
                ))
            }
            "exp-trig" => {
                let terms = m
                    .terms
                    .as_ref()
                    .ok_or_else(|| Error::validation("map.terms", "required"))?;
                let table = TrigTable::compile("map.terms", terms, n, d)?;
                Ok(GroupValuedMap::from_algebra_curve(
                    chart.clone(),
                    group.clone(),
                    move |x| table.eval(x).iter().copied().collect(),
                ))
            }
            "constant" => {
                let coords = m
                    .coords
                    .as_ref()
                    .ok_or_else(|| Error::validation("map.coords", "required"))?;
                check_vector("map.coords", coords, d)?;
                let g = group.exp_coords(coords)?;
                Ok(GroupValuedMap::constant(chart.clone(), group.clone(), g))
            }
            other => Err(Error::validation(
                "map.kind",
                format!("unknown map kind `{other}`"),
            )),
        }
    }

    fn metric(&self, n: usize) -> Result<RiemannianMetric> {
        let Some(spec) = &self.metric else {
            return Ok(RiemannianMetric::identity(n));
        };
        let gram = match (&spec.diag, &spec.matrix) {
            (Some(diag), None) => DMatrix::from_diagonal(&check_vector("metric.diag", diag, n)?),
            (None, Some(rows)) => check_matrix("metric.matrix", rows, n, n)?,
            _ => {
                return Err(Error::validation(
                    "metric",
                    "give exactly one of `diag` or `matrix`",
                ))
            }
        };
        RiemannianMetric::constant(gram).map_err(|e| Error::validation("metric", e.to_string()))
    }

    /// Grid points followed by seeded uniform random points. Periodic axes
    /// cover `[0, 2π)`, the others their `bounds` interval.
    pub fn samples(&self, chart: &ChartModel) -> Result<Vec<ChartPoint>> {
        let n = chart.dim();
        let s = &self.sampling;
        let bounds = self.bounds(chart)?;
        let total_grid = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(s.grid));
        match total_grid {
            Some(t) if t <= MAX_GRID_POINTS => {}
            _ => {
                return Err(Error::validation(
                    "sampling.grid",
                    format!(
                        "{}^{n} grid points exceed the cap of {MAX_GRID_POINTS}",
                        s.grid
                    ),
                ))
            }
        }
        if s.grid + s.random < 2 {
            return Err(Error::validation(
                "sampling",
                "at least two samples are required",
            ));
        }
        let axis = |k: usize, i: usize| -> f64 {
            if chart.periodic()[k] {
                TAU * i as f64 / s.grid as f64
            } else {
                let [lo, hi] = bounds[k];
                lo + (hi - lo) * (i as f64 + 0.5) / s.grid as f64
            }
        };
        let mut out = Vec::new();
        if s.grid > 0 {
            let total = s.grid.pow(n as u32);
            for flat in 0..total {
                let mut rem = flat;
                let x = DVector::from_fn(n, |k, _| {
                    let i = rem % s.grid;
                    rem /= s.grid;
                    axis(k, i)
                });
                out.push(chart.point_from(x)?);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        for _ in 0..s.random {
            let x = DVector::from_fn(n, |k, _| {
                if chart.periodic()[k] {
                    rng.random_range(0.0..TAU)
                } else {
                    let [lo, hi] = bounds[k];
                    rng.random_range(lo..hi)
                }
            });
            out.push(chart.point_from(x)?);
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<System> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "must not be empty"));
        }
        let group = Arc::new(GroupSpec::from_name(&self.group)?);
        let chart = self.chart_model()?;
        let field = self.vector_field(&chart)?;
        let map = self.group_map(&chart, &group)?;
        let metric = self.metric(chart.dim())?;
        let samples = self.samples(&chart)?;
        Ok(System {
            id: self.id.clone(),
            chart,
            group,
            field,
            map,
            metric,
            samples,
            expect: self.expect,
        })
    }
}
