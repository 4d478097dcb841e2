//! Built-in system catalog, configuration files and command dispatch.
//!
//! A run takes a [`SystemDefinition`] and a [`RunConfig`] and produces a
//! [`VerificationReport`] together with a per-sample CSV table.

mod config;
mod report;

pub use config::{
    load_config, parse_config, ChartSpec, Command, Expectations, FieldSpec, MapSpec, MetricSpec,
    RunConfig, SamplingSpec, System, SystemDefinition, TrigFunc, TrigTerm, MAX_GRID_POINTS,
};
pub use report::{num, CheckRecord, CsvTable, VerificationReport};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::koopman::{
    check_rescalable, compute_alpha, estimate_frequency, rescaled_field, semiconjugacy_profile,
    verify_eigenfunction,
};
use crate::lift::{build_lift, lift_gap_check, probes_around};
use crate::manifold::ChartPoint;
use crate::numeric::pairwise_sum;

const CATALOG: &[(&str, &str)] = &[
    (
        "torus-rotation",
        include_str!("../../catalog/torus-rotation.cfg"),
    ),
    (
        "torus-rescaled",
        include_str!("../../catalog/torus-rescaled.cfg"),
    ),
    ("u1-sine", include_str!("../../catalog/u1-sine.cfg")),
    ("so3-circle", include_str!("../../catalog/so3-circle.cfg")),
    ("so3-wobble", include_str!("../../catalog/so3-wobble.cfg")),
    (
        "heisenberg-line",
        include_str!("../../catalog/heisenberg-line.cfg"),
    ),
    (
        "noncollinear",
        include_str!("../../catalog/noncollinear.cfg"),
    ),
];

/// Residual above which a non-eigenfunction is considered visibly off its
/// predicted orbit.
pub const DIVERGENCE_FLOOR: f64 = 1e-2;
/// Only systems whose `dz(V)` spread reaches this value are expected to
/// show [`DIVERGENCE_FLOOR`] within the horizon.
pub const VISIBLE_DEVIATION: f64 = 0.1;

pub fn catalog_ids() -> Vec<&'static str> {
    CATALOG.iter().map(|(id, _)| *id).collect()
}

/// The raw configuration text of a catalog entry.
pub fn catalog_text(id: &str) -> Option<&'static str> {
    CATALOG
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, text)| *text)
}

pub fn catalog_system(id: &str) -> Result<(SystemDefinition, RunConfig)> {
    let text = catalog_text(id).ok_or_else(|| {
        Error::validation(
            "system",
            format!("unknown system `{id}`; known: {}", catalog_ids().join(", ")),
        )
    })?;
    parse_config(text)
}

/// Report and CSV of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: VerificationReport,
    pub csv: CsvTable,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }
}

/// Attaches the chart coordinates of the offending sample to an error.
fn with_point(err: Error, samples: &[ChartPoint]) -> Error {
    match err {
        Error::AtSample { index, source } => match samples.get(index) {
            Some(x) => Error::AtPoint {
                index,
                point: x.coords().iter().copied().collect(),
                source,
            },
            None => Error::AtSample { index, source },
        },
        other => other,
    }
}

fn base_report(command: Command, system: &System) -> VerificationReport {
    let mut report = VerificationReport::empty(command.name(), &system.id);
    report.group = Some(system.group.name().to_string());
    report.basis = Some(system.group.basis_labels());
    report.samples_used = system.samples.len();
    report
}

fn sample_header(system: &System) -> Vec<String> {
    let mut header = vec!["index".to_string()];
    header.extend(system.chart.names().iter().cloned());
    header.extend((1..=system.group.dim()).map(|k| format!("dzv_{k}")));
    header
}

fn sample_row(index: usize, x: &ChartPoint, dzv: &DVector<f64>) -> Vec<String> {
    let mut row = vec![index.to_string()];
    row.extend(x.coords().iter().map(|&v| num(v)));
    row.extend(dzv.iter().map(|&v| num(v)));
    row
}

fn anchor(system: &System, config: &RunConfig) -> Result<ChartPoint> {
    match &config.anchor {
        Some(a) => system
            .chart
            .point(a)
            .map_err(|e| Error::validation("anchor", e.to_string())),
        None => Ok(system
            .chart
            .point_from(DVector::zeros(system.chart.dim()))?),
    }
}

fn run_verify(system: &System, config: &RunConfig) -> Result<RunOutcome> {
    let eigen = verify_eigenfunction(
        &system.map,
        &system.field,
        &system.samples,
        config.tol,
        config.fd_step,
    )?;
    let mut report = base_report(Command::Verify, system);
    report.passed = eigen.is_eigenfunction;
    report.tolerance = Some(config.tol);
    report.omega_hat = Some(eigen.omega_hat.clone());
    report.max_deviation = Some(eigen.max_deviation);
    let mut header = sample_header(system);
    header.push("deviation".into());
    let mut csv = CsvTable::new(header);
    for (i, ((x, row), dev)) in system
        .samples
        .iter()
        .zip(&eigen.dz_v)
        .zip(&eigen.deviations)
        .enumerate()
    {
        let mut line = sample_row(i, x, row);
        line.push(num(*dev));
        csv.push(line);
    }
    Ok(RunOutcome { report, csv })
}

fn run_rescale(system: &System, config: &RunConfig) -> Result<RunOutcome> {
    let rescale = check_rescalable(
        &system.map,
        &system.field,
        &system.samples,
        config.collin_tol,
        config.zero_tol,
        config.fd_step,
    )?;
    let mut report = base_report(Command::Rescale, system);
    report.tolerance = Some(config.collin_tol);
    report.rescalable = Some(rescale.rescalable);
    report.direction = rescale.direction.clone();
    report.collinearity_ratio = Some(rescale.collinearity_ratio);
    report.min_norm = Some(rescale.min_norm);

    let mut alpha_column = vec![None; system.samples.len()];
    if let Some(direction) = &rescale.direction {
        let target: Vec<f64> = match &config.omega_target {
            Some(t) => t.clone(),
            None => {
                // direction scaled by the mean signed projection, so α > 0
                let u = DVector::from_column_slice(direction);
                let proj: Vec<f64> = rescale.dz_v.iter().map(|r| r.dot(&u)).collect();
                let scale = pairwise_sum(&proj) / proj.len() as f64;
                direction.iter().map(|c| c * scale).collect()
            }
        };
        let alpha = compute_alpha(&rescale, &target, config.zero_tol)?;
        let field = rescaled_field(&system.map, &system.field, &target, config.fd_step);
        let check = verify_eigenfunction(
            &system.map,
            &field,
            &system.samples,
            config.residual_tol,
            config.fd_step,
        )
        .map_err(|e| with_point(e, &system.samples))?;
        let target_gap = check
            .omega_hat
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let ok = check.is_eigenfunction && target_gap <= config.residual_tol;
        report.checks.push(CheckRecord {
            system: system.id.clone(),
            check: "rescaled-verify".into(),
            passed: ok,
            value: Some(check.max_deviation.max(target_gap)),
            detail: format!(
                "alpha*V verified against target at tol {:e}",
                config.residual_tol
            ),
        });
        report.omega_hat = Some(target);
        report.passed = ok;
        for (slot, a) in alpha_column.iter_mut().zip(&alpha) {
            *slot = Some(*a);
        }
        report.alpha = Some(alpha);
    }

    let mut header = sample_header(system);
    header.push("alpha".into());
    let mut csv = CsvTable::new(header);
    for (i, ((x, row), a)) in system
        .samples
        .iter()
        .zip(&rescale.dz_v)
        .zip(&alpha_column)
        .enumerate()
    {
        let mut line = sample_row(i, x, row);
        line.push(a.map(num).unwrap_or_default());
        csv.push(line);
    }
    Ok(RunOutcome { report, csv })
}

fn probe_directions(n: usize) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = (0..n)
        .map(|k| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 }))
        .collect();
    if n > 1 {
        dirs.push(DVector::from_fn(n, |i, _| (i as f64 + 1.0).sqrt()).normalize());
    }
    dirs
}

fn run_lift(system: &System, config: &RunConfig) -> Result<RunOutcome> {
    let x = anchor(system, config)?;
    let lift = build_lift(&system.map, &x)?;
    let probes = probes_around(&lift, 0.5);
    let check = lift_gap_check(
        &system.map,
        &x,
        &probes,
        &probe_directions(system.chart.dim()),
        config.fd_step,
    )?;
    let mut report = base_report(Command::LiftCheck, system);
    report.samples_used = check.probes.len();
    report.tolerance = Some(crate::lift::LIFT_GAP_TOL);
    report.max_gap_tilde = Some(check.max_gap_tilde);
    report.max_gap_canonical = Some(check.max_gap_canonical);
    report.passed = check.passed;
    report.checks.push(CheckRecord {
        system: system.id.clone(),
        check: "canonical-gap".into(),
        passed: !check.abelian || check.max_gap_canonical <= crate::lift::LIFT_GAP_TOL,
        value: Some(check.max_gap_canonical),
        detail: if check.abelian {
            "required on abelian groups".into()
        } else {
            "informational on non-abelian groups".into()
        },
    });

    let names = system.chart.names();
    let mut header = vec!["index".to_string()];
    header.extend(names.iter().cloned());
    header.extend(names.iter().map(|n| format!("dir_{n}")));
    header.extend(["gap_tilde".to_string(), "gap_canonical".to_string()]);
    let mut csv = CsvTable::new(header);
    for (i, p) in check.probes.iter().enumerate() {
        let mut line = vec![i.to_string()];
        line.extend(p.point.iter().map(|&v| num(v)));
        line.extend(p.direction.iter().map(|&v| num(v)));
        line.push(num(p.gap_tilde));
        line.push(num(p.gap_canonical));
        csv.push(line);
    }
    Ok(RunOutcome { report, csv })
}

fn run_residual(system: &System, config: &RunConfig) -> Result<RunOutcome> {
    let omega: Vec<f64> = match &config.omega {
        Some(w) => w.clone(),
        None => estimate_frequency(&system.map, &system.field, &system.samples, config.fd_step)
            .map_err(|e| with_point(e, &system.samples))?
            .iter()
            .copied()
            .collect(),
    };
    let x0 = anchor(system, config)?;
    let profile = semiconjugacy_profile(
        &system.map,
        &system.field,
        &omega,
        &x0,
        config.horizon,
        config.rk4_step,
    )?;
    let residual = crate::numeric::max_of(profile.iter().map(|c| c.residual));
    let mut report = base_report(Command::Residual, system);
    report.samples_used = profile.len();
    report.tolerance = Some(config.residual_tol);
    report.omega_hat = Some(omega);
    report.residual = Some(residual);
    report.passed = residual <= config.residual_tol;
    let mut csv = CsvTable::new(vec!["t".into(), "residual".into()]);
    for c in &profile {
        csv.push(vec![num(c.t), num(c.residual)]);
    }
    Ok(RunOutcome { report, csv })
}

fn failed_check(system: &str, check: &str, err: &Error) -> CheckRecord {
    CheckRecord {
        system: system.into(),
        check: check.into(),
        passed: false,
        value: None,
        detail: format!("error: {err}"),
    }
}

/// Runs every command on one system and compares against its
/// expectations. Absent expectations make the corresponding check
/// informational.
fn suite_checks(def: &SystemDefinition, config: &RunConfig) -> Result<(Vec<CheckRecord>, usize)> {
    let system = def.build()?;
    let id = system.id.clone();
    let mut checks = Vec::new();

    let verify = run_verify(&system, config).map_err(|e| with_point(e, &system.samples));
    let max_dev = match &verify {
        Ok(out) => {
            let got = out.report.passed;
            checks.push(CheckRecord {
                system: id.clone(),
                check: "verify".into(),
                passed: def.expect.eigenfunction.is_none_or(|e| e == got),
                value: out.report.max_deviation,
                detail: format!(
                    "eigenfunction = {got}, expected {:?}",
                    def.expect.eigenfunction
                ),
            });
            Some((got, out.report.max_deviation.unwrap_or(0.0)))
        }
        Err(e) => {
            checks.push(failed_check(&id, "verify", e));
            None
        }
    };

    match run_rescale(&system, config).map_err(|e| with_point(e, &system.samples)) {
        Ok(out) => {
            let got = out.report.rescalable.unwrap_or(false);
            let consistent = !got || out.report.passed;
            checks.push(CheckRecord {
                system: id.clone(),
                check: "rescale".into(),
                passed: consistent && def.expect.rescalable.is_none_or(|e| e == got),
                value: out.report.collinearity_ratio,
                detail: format!(
                    "rescalable = {got}, expected {:?}, min_norm = {:e}",
                    def.expect.rescalable,
                    out.report.min_norm.unwrap_or(f64::NAN)
                ),
            });
        }
        Err(e) => checks.push(failed_check(&id, "rescale", &e)),
    }

    match run_lift(&system, config) {
        Ok(out) => checks.push(CheckRecord {
            system: id.clone(),
            check: "lift-check".into(),
            passed: out.report.passed,
            value: out.report.max_gap_tilde,
            detail: format!(
                "max_gap_canonical = {:e}",
                out.report.max_gap_canonical.unwrap_or(f64::NAN)
            ),
        }),
        Err(e) => checks.push(failed_check(&id, "lift-check", &e)),
    }

    match (run_residual(&system, config), max_dev) {
        (Ok(out), Some((eigen, dev))) => {
            let r = out.report.residual.unwrap_or(f64::NAN);
            let (passed, detail) = if eigen {
                (
                    r <= config.residual_tol,
                    format!("eigenfunction: residual <= {:e}", config.residual_tol),
                )
            } else if dev >= VISIBLE_DEVIATION {
                (
                    r > DIVERGENCE_FLOOR,
                    format!("non-eigenfunction: residual > {DIVERGENCE_FLOOR:e}"),
                )
            } else {
                (true, "informational".to_string())
            };
            checks.push(CheckRecord {
                system: id.clone(),
                check: "residual".into(),
                passed,
                value: Some(r),
                detail,
            });
        }
        (Ok(out), None) => checks.push(CheckRecord {
            system: id.clone(),
            check: "residual".into(),
            passed: false,
            value: out.report.residual,
            detail: "verify failed, no verdict to compare against".into(),
        }),
        (Err(e), _) => checks.push(failed_check(&id, "residual", &e)),
    }
    Ok((checks, system.samples.len()))
}

/// Aggregates [`suite_checks`] over several systems.
pub fn run_suite(systems: &[(SystemDefinition, RunConfig)]) -> Result<RunOutcome> {
    let ids: Vec<&str> = systems.iter().map(|(d, _)| d.id.as_str()).collect();
    let mut report = VerificationReport::empty(Command::Suite.name(), &ids.join(","));
    let mut csv = CsvTable::new(
        ["system", "check", "passed", "value", "detail"]
            .map(String::from)
            .to_vec(),
    );
    for (def, config) in systems {
        let (checks, samples) = suite_checks(def, config)?;
        report.samples_used += samples;
        report.checks.extend(checks);
    }
    for c in &report.checks {
        csv.push(vec![
            c.system.clone(),
            c.check.clone(),
            c.passed.to_string(),
            c.value.map(num).unwrap_or_default(),
            c.detail.clone(),
        ]);
    }
    report.passed = !report.checks.is_empty() && report.checks.iter().all(|c| c.passed);
    Ok(RunOutcome { report, csv })
}

/// Every catalog system with its default configuration.
pub fn catalog_systems() -> Result<Vec<(SystemDefinition, RunConfig)>> {
    catalog_ids().into_iter().map(catalog_system).collect()
}

/// Dispatches one command.
pub fn run(
    command: Command,
    definition: &SystemDefinition,
    config: &RunConfig,
) -> Result<RunOutcome> {
    config.validate()?;
    if command == Command::Suite {
        return run_suite(&[(definition.clone(), config.clone())]);
    }
    let system = definition.build()?;
    let outcome = match command {
        Command::Verify => run_verify(&system, config),
        Command::Rescale => run_rescale(&system, config),
        Command::LiftCheck => run_lift(&system, config),
        Command::Residual => run_residual(&system, config),
        Command::Suite => unreachable!(),
    };
    outcome.map_err(|e| with_point(e, &system.samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_catalog_entry_parses() {
        for id in catalog_ids() {
            let (def, _) = catalog_system(id).unwrap();
            assert_eq!(def.id, id);
        }
        assert!(
            matches!(catalog_system("nope"), Err(Error::Validation { field, .. }) if field == "system")
        );
    }

    #[test]
    fn torus_rotation_definition() {
        let (def, _) = catalog_system("torus-rotation").unwrap();
        let system = def.build().unwrap();
        assert_eq!(system.chart.dim(), 2);
        assert_eq!(system.group.name(), "torus:2");
        let v = system.field.eval(&system.samples[7]);
        assert_eq!(v.as_slice(), &[1.0, std::f64::consts::SQRT_2]);
        let x = system.chart.point(&[0.3, 1.2]).unwrap();
        let z = system.map.eval(&x);
        assert!((z.matrix()[(0, 0)] - num_complex::Complex64::from_polar(1.0, 0.3)).norm() < 1e-15);
        assert!((z.matrix()[(1, 1)] - num_complex::Complex64::from_polar(1.0, 1.2)).norm() < 1e-15);
    }

    #[test]
    fn verify_reports_frequency_on_torus_rotation() {
        let (def, config) = catalog_system("torus-rotation").unwrap();
        let out = run(Command::Verify, &def, &config).unwrap();
        assert!(out.report.passed);
        let w = out.report.omega_hat.unwrap();
        assert!((w[0] - 1.0).abs() < 1e-7 && (w[1] - std::f64::consts::SQRT_2).abs() < 1e-7);
        assert_eq!(out.csv.rows.len(), 64 * 64 + 256);
        assert_eq!(
            out.csv.header,
            ["index", "theta1", "theta2", "dzv_1", "dzv_2", "deviation"]
        );
    }

    #[test]
    fn rescale_recovers_speed_on_torus_rescaled() {
        let (def, config) = catalog_system("torus-rescaled").unwrap();
        let out = run(Command::Rescale, &def, &config).unwrap();
        assert!(out.report.passed, "{:?}", out.report.checks);
        let system = def.build().unwrap();
        let alpha = out.report.alpha.unwrap();
        for (x, a) in system.samples.iter().zip(&alpha) {
            let expected = 1.0 / (2.0 + x.coords()[0].sin());
            assert!(((a - expected) / expected).abs() < 1e-6);
        }
    }

    #[test]
    fn lift_check_on_so3_wobble() {
        let (def, config) = catalog_system("so3-wobble").unwrap();
        let out = run(Command::LiftCheck, &def, &config).unwrap();
        assert!(out.report.passed);
        assert!(out.report.max_gap_tilde.unwrap() <= 1e-6);
        assert!(out.report.max_gap_canonical.unwrap() > 1e-3);
    }

    #[test]
    fn suite_passes_on_catalog() {
        let out = run_suite(&catalog_systems().unwrap()).unwrap();
        let failing: Vec<_> = out.report.checks.iter().filter(|c| !c.passed).collect();
        assert!(failing.is_empty(), "{failing:#?}");
        assert_eq!(out.exit_code(), 0);
    }

    #[test]
    fn wrong_expectation_fails_the_suite() {
        let (mut def, config) = catalog_system("noncollinear").unwrap();
        def.expect.rescalable = Some(true);
        let out = run(Command::Suite, &def, &config).unwrap();
        assert_eq!(out.exit_code(), 2);
    }

    #[test]
    fn reports_are_reproducible() {
        let (def, config) = catalog_system("u1-sine").unwrap();
        let a = run(Command::Rescale, &def, &config).unwrap();
        let b = run(Command::Rescale, &def, &config).unwrap();
        assert_eq!(a.csv.render().unwrap(), b.csv.render().unwrap());
        let mut ra = a.report;
        let mut rb = b.report;
        ra.timestamp = 0;
        rb.timestamp = 0;
        assert_eq!(ra.to_json(), rb.to_json());
    }
}
