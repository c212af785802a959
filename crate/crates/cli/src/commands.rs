use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use hmcf_core::geometry::{AngularGrid, HarmonicSeries};
use hmcf_core::hypersurface::{
    cylinder_residual, metric_evolution_fd_residual, sphere_flow, verify_metric_evolution,
    verify_normal_evolution, verify_scalar_evolutions, verify_second_form_evolution,
    ScalarEvolutionReport,
};
use hmcf_core::io::{fmt_f64, load_trajectory, save_report_json, save_trajectory};
use hmcf_core::ma_solver::{
    check_tau_hyperbolic, evolve, Diagnostics, EvolveOptions, FlowTrajectory, StopReason,
};
use hmcf_core::radial::{
    collapse_lower_bound, collapse_upper_bound, energy_envelope_check, integrate_radial,
    EnvelopeReport, RadialOptions, RadialProblem, RadialTrajectory,
};
use hmcf_core::verification::{
    check_containment, check_convexity_preservation, check_length_monotonicity,
    check_sigma_positivity, CheckReport, DERIVATIVE_REL_TOL, ORDERING_SLACK,
};
use hmcf_core::ForcingSchedule;

use crate::specs::{parse_forcing, parse_list, parse_profile};
use crate::{
    EvolveArgs, Failure, NumericArgs, RadialArgs, SphereArgs, Suite, SweepArgs, VerifyArgs,
};

/// Slack on the collapse-time bounds.
const BOUND_SLACK: f64 = 1e-6;

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    if let Some(path) = path {
        save_report_json(value, path)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // a closed reader (e.g. `| head`) is not an error
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(Failure::Usage(format!("writing stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn options(n: &NumericArgs, default_stride: usize) -> Result<EvolveOptions, Failure> {
    let opts = EvolveOptions {
        horizon: n.horizon,
        cfl: n.cfl,
        dt_max: n.dt_max,
        stride: n.stride.unwrap_or(default_stride),
        output_interval: n.output_interval,
        collapse_fraction: n.collapse_fraction,
        k_max_factor: n.k_max_factor,
        tv_factor: n.tv_factor,
        ..EvolveOptions::default()
    };
    opts.validate()?;
    Ok(opts)
}

fn grid(n: &NumericArgs) -> Result<AngularGrid, Failure> {
    AngularGrid::new(n.n_nodes).map_err(|e| Failure::field("--n")(e.to_string()))
}

/// Support profile: must be convex with the origin inside.
fn support_profile(spec: &str, name: &str, grid: &AngularGrid) -> Result<Vec<f64>, Failure> {
    let series = parse_profile(spec).map_err(Failure::field(name))?;
    series
        .validate_convex(grid)
        .map_err(|e| Failure::field(name)(e.to_string()))?;
    let h = series.sample(grid);
    if let Some(v) = h.iter().find(|v| !(**v > 0.0)) {
        return Err(Failure::field(name)(format!(
            "origin must be interior (support value {v} <= 0)"
        )));
    }
    Ok(h)
}

fn velocity_profile(spec: &str, name: &str, grid: &AngularGrid) -> Result<Vec<f64>, Failure> {
    let series: HarmonicSeries = parse_profile(spec).map_err(Failure::field(name))?;
    Ok(series.sample(grid))
}

fn run_curve(
    h: &str,
    h_name: &str,
    f: &str,
    f_name: &str,
    c: &ForcingSchedule,
    n: &NumericArgs,
    opts: &EvolveOptions,
) -> Result<FlowTrajectory, Failure> {
    let g = grid(n)?;
    let h = support_profile(h, h_name, &g)?;
    let f = velocity_profile(f, f_name, &g)?;
    Ok(evolve(g, &h, &f, c, opts)?)
}

#[derive(Serialize)]
struct EvolveReport {
    n_nodes: usize,
    stop: StopReason,
    snapshots: usize,
    initial: Diagnostics,
    last: Diagnostics,
    last_tau: f64,
    last_min_discriminant: f64,
}

pub fn evolve_curve(a: &EvolveArgs) -> Result<(), Failure> {
    let c = parse_forcing(&a.c).map_err(Failure::field("--c"))?;
    let opts = options(&a.numeric, 10)?;
    let traj = run_curve(&a.h, "--h", &a.f, "--f", &c, &a.numeric, &opts)?;
    if let Some(out) = &a.out {
        save_trajectory(&traj, out)?;
    }
    let last = traj.last();
    let report = EvolveReport {
        n_nodes: traj.grid().n_nodes(),
        stop: traj.stop,
        snapshots: traj.snapshots.len(),
        initial: traj.initial().diagnostics,
        last: last.diagnostics,
        last_tau: last.state.tau,
        last_min_discriminant: check_tau_hyperbolic(&last.state, &traj.forcing).min_discriminant,
    };
    emit(&report, a.report.as_deref())
}

#[derive(Serialize)]
struct RadialReport {
    c0: f64,
    r0: f64,
    r1: f64,
    cbar: String,
    collapse_time: Option<f64>,
    peak_radius: f64,
    peak_time: Option<f64>,
    upper_bound: Option<f64>,
    lower_bound: Option<f64>,
    envelope: Option<EnvelopeReport>,
    samples: usize,
    checks_passed: bool,
}

/// Runs one radial problem with its bound suite. Bounds and the energy
/// envelope apply to `r₁ = 0` only.
fn radial_suite(
    p: &RadialProblem,
    cbar: &str,
    dt_max: f64,
) -> Result<(RadialReport, RadialTrajectory), Failure> {
    if !p.forcing.is_non_positive() {
        return Err(Failure::Usage(format!(
            "--cbar: must be <= 0 for the bound suite, got {cbar}"
        )));
    }
    let opts = RadialOptions {
        dt_max,
        ..RadialOptions::default()
    };
    let traj = integrate_radial(p, &opts)?;
    let t0 = traj
        .collapse_time
        .ok_or_else(|| Failure::Numerical(format!("no collapse before t = {}", traj.t_end())))?;
    let (upper, lower, envelope) = if p.r1 == 0.0 {
        (
            Some(collapse_upper_bound(p)?),
            Some(collapse_lower_bound(p, &traj)?),
            Some(energy_envelope_check(&traj, p)?),
        )
    } else {
        (None, None, None)
    };
    let checks_passed = upper.is_none_or(|u| t0 <= u + BOUND_SLACK)
        && lower.is_none_or(|l| t0 >= l - BOUND_SLACK)
        && envelope.as_ref().is_none_or(|e| e.passed);
    let report = RadialReport {
        c0: p.c0,
        r0: p.r0,
        r1: p.r1,
        cbar: cbar.to_string(),
        collapse_time: Some(t0),
        peak_radius: traj.peak_radius,
        peak_time: traj.peak_time,
        upper_bound: upper,
        lower_bound: lower,
        envelope,
        samples: traj.samples.len(),
        checks_passed,
    };
    Ok((report, traj))
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "c0",
    "r0",
    "r1",
    "cbar",
    "status",
    "collapse_time",
    "upper_bound",
    "lower_bound",
    "bound_margin",
    "ratio",
    "envelope_passed",
    "checks_passed",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn summary_row(
    c0: f64,
    r0: f64,
    r1: f64,
    cbar: &str,
    outcome: &Result<RadialReport, Failure>,
) -> Vec<String> {
    let mut row = vec![fmt_f64(c0), fmt_f64(r0), fmt_f64(r1), cbar.to_string()];
    match outcome {
        Ok(rep) => {
            let t0 = rep.collapse_time;
            row.extend([
                "ok".to_string(),
                opt(t0),
                opt(rep.upper_bound),
                opt(rep.lower_bound),
                opt(rep.upper_bound.zip(t0).map(|(u, t)| u - t)),
                opt(rep.upper_bound.zip(t0).map(|(u, t)| t / u)),
                rep.envelope
                    .as_ref()
                    .map(|e| e.passed.to_string())
                    .unwrap_or_default(),
                rep.checks_passed.to_string(),
                String::new(),
            ]);
        }
        Err(f) => {
            row.extend(["error".to_string()]);
            row.extend(std::iter::repeat_n(String::new(), 6));
            row.extend(["false".to_string(), f.message().to_string()]);
        }
    }
    row
}

fn write_summary<W: Write>(rows: &[Vec<String>], out: W) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Failure::Usage(format!("writing summary: {e}"));
    w.write_record(SUMMARY_COLUMNS).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Failure::Usage(format!("writing summary: {e}")))
}

fn write_samples(traj: &RadialTrajectory, path: &Path) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Usage(format!("--out: {e}"));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["t", "r", "r_t"]).map_err(io)?;
    for s in &traj.samples {
        w.write_record([fmt_f64(s.t), fmt_f64(s.r), fmt_f64(s.r_t)])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Failure::Usage(format!("--out: {e}")))
}

fn radial_problem(
    c0: f64,
    r0: f64,
    r1: f64,
    forcing: ForcingSchedule,
) -> Result<RadialProblem, Failure> {
    RadialProblem::new(c0, forcing, r0, r1).map_err(Failure::from)
}

pub fn radial(a: &RadialArgs) -> Result<(), Failure> {
    let forcing = parse_forcing(&a.cbar).map_err(Failure::field("--cbar"))?;
    let p = radial_problem(a.c0, a.r0, a.r1, forcing)?;
    let (report, traj) = radial_suite(&p, &a.cbar, a.dt_max)?;
    if let Some(out) = &a.out {
        write_samples(&traj, out)?;
    }
    let passed = report.checks_passed;
    let outcome = Ok(report);
    if let Some(path) = &a.summary {
        let file =
            std::fs::File::create(path).map_err(|e| Failure::Usage(format!("--summary: {e}")))?;
        write_summary(&[summary_row(a.c0, a.r0, a.r1, &a.cbar, &outcome)], file)?;
    }
    if let Ok(report) = &outcome {
        emit(report, a.report.as_deref())?;
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::CheckFailed("radial bound suite failed".into()))
    }
}

pub fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let c0s = parse_list(&a.c0, "--c0").map_err(Failure::Usage)?;
    let r0s = parse_list(&a.r0, "--r0").map_err(Failure::Usage)?;
    let r1s = parse_list(&a.r1, "--r1").map_err(Failure::Usage)?;
    let cbars = parse_list(&a.cbar, "--cbar").map_err(Failure::Usage)?;
    let mut cells = Vec::new();
    for &cbar in &cbars {
        for &c0 in &c0s {
            for &r0 in &r0s {
                for &r1 in &r1s {
                    cells.push((c0, r0, r1, cbar));
                }
            }
        }
    }
    // cells are independent; collect keeps grid order
    let rows: Vec<(bool, Vec<String>)> = cells
        .par_iter()
        .map(|&(c0, r0, r1, cbar)| {
            let spec = format!("const:{cbar}");
            let outcome = ForcingSchedule::constant(cbar)
                .map_err(Failure::from)
                .and_then(|f| radial_problem(c0, r0, r1, f))
                .and_then(|p| radial_suite(&p, &spec, a.dt_max).map(|(rep, _)| rep));
            let ok = outcome.as_ref().is_ok_and(|r| r.checks_passed);
            (ok, summary_row(c0, r0, r1, &spec, &outcome))
        })
        .collect();
    let failed = rows.iter().filter(|(ok, _)| !ok).count();
    let rows: Vec<Vec<String>> = rows.into_iter().map(|(_, r)| r).collect();
    match &a.out {
        Some(path) => {
            let file =
                std::fs::File::create(path).map_err(|e| Failure::Usage(format!("--out: {e}")))?;
            write_summary(&rows, file)?;
        }
        None => write_summary(&rows, std::io::stdout().lock())?,
    }
    if failed > 0 {
        Err(Failure::CheckFailed(format!(
            "{failed} of {} sweep cells failed",
            rows.len()
        )))
    } else {
        Ok(())
    }
}

#[derive(Serialize)]
struct MaxResiduals {
    metric: f64,
    normal: f64,
    second_form: f64,
    mean_curvature: f64,
    norm_sq: f64,
    /// Informational: the printed normal-projection reading of one `|A|²` term.
    norm_sq_normal_projection: f64,
}

#[derive(Serialize)]
struct FiniteDifferenceFit {
    t: f64,
    intervals: Vec<f64>,
    residuals: Vec<f64>,
    order: f64,
}

#[derive(Serialize)]
struct SphereReport {
    dim: usize,
    r0: f64,
    r1: f64,
    c1: String,
    collapse_time: Option<f64>,
    peak_radius: f64,
    samples: usize,
    max_residuals: MaxResiduals,
    finite_difference: FiniteDifferenceFit,
    terms_at_midpoint: ScalarEvolutionReport,
    cylinder_max_residual: f64,
    passed: bool,
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn sphere(a: &SphereArgs) -> Result<(), Failure> {
    let c1 = parse_forcing(&a.c1).map_err(Failure::field("--c1"))?;
    if a.samples < 1 {
        return Err(Failure::Usage("--samples: must be at least 1".into()));
    }
    let fam = sphere_flow(a.dim, a.r0, a.r1, c1.clone(), &RadialOptions::default())?;
    let t_end = fam.radial.t_end();
    let rel = |res: f64, lhs: f64| res / lhs.abs().max(1.0);
    let mut m = MaxResiduals {
        metric: 0.0,
        normal: 0.0,
        second_form: 0.0,
        mean_curvature: 0.0,
        norm_sq: 0.0,
        norm_sq_normal_projection: 0.0,
    };
    for j in 0..a.samples {
        let t = t_end * j as f64 / a.samples as f64;
        m.metric = m.metric.max(verify_metric_evolution(&fam, t)?.residual);
        m.normal = m.normal.max(verify_normal_evolution(&fam, t)?.residual);
        m.second_form = m
            .second_form
            .max(verify_second_form_evolution(&fam, t)?.residual);
        let s = verify_scalar_evolutions(&fam, t)?;
        m.mean_curvature = m
            .mean_curvature
            .max(rel(s.mean_curvature.residual, s.mean_curvature.lhs));
        m.norm_sq = m.norm_sq.max(rel(s.norm_sq.residual, s.norm_sq.lhs));
        m.norm_sq_normal_projection = m.norm_sq_normal_projection.max(rel(
            s.norm_sq_normal_projection.residual,
            s.norm_sq_normal_projection.lhs,
        ));
    }
    let t_mid = 0.5 * t_end;
    let intervals = vec![2e-3, 1e-3, 5e-4];
    let residuals = intervals
        .iter()
        .map(|&d| metric_evolution_fd_residual(&fam, t_mid, d))
        .collect::<Result<Vec<_>, _>>()?;
    let order = log_slope(&intervals, &residuals);
    let cylinder_max_residual = (0..=100)
        .map(|j| cylinder_residual(j as f64 / 100.0, c1.eval(0.0)).abs())
        .fold(0.0, f64::max);
    let tol = 1e-12;
    let passed = m.metric <= tol
        && m.normal <= tol
        && m.second_form <= tol
        && m.mean_curvature <= tol
        && m.norm_sq <= tol
        && (order - 2.0).abs() <= 0.2;
    let report = SphereReport {
        dim: a.dim,
        r0: a.r0,
        r1: a.r1,
        c1: a.c1.clone(),
        collapse_time: fam.collapse_time(),
        peak_radius: fam.radial.peak_radius,
        samples: a.samples,
        max_residuals: m,
        finite_difference: FiniteDifferenceFit {
            t: t_mid,
            intervals,
            residuals,
            order,
        },
        terms_at_midpoint: verify_scalar_evolutions(&fam, t_mid)?,
        cylinder_max_residual,
        passed,
    };
    emit(&report, a.report.as_deref())?;
    if passed {
        Ok(())
    } else {
        Err(Failure::CheckFailed(
            "sphere identity residuals exceed tolerance".into(),
        ))
    }
}

fn single_trajectory(
    a: &VerifyArgs,
    c: &ForcingSchedule,
    opts: &EvolveOptions,
) -> Result<FlowTrajectory, Failure> {
    match (&a.trajectory, &a.h) {
        (Some(path), None) => {
            Ok(load_trajectory(path).map_err(|e| Failure::field("--trajectory")(e.to_string()))?)
        }
        (None, Some(h)) => run_curve(h, "--h", &a.f, "--f", c, &a.numeric, opts),
        _ => Err(Failure::Usage(
            "give exactly one of --h or --trajectory".into(),
        )),
    }
}

pub fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let c = parse_forcing(&a.c).map_err(Failure::field("--c"))?;
    let reports: Vec<CheckReport> = match a.suite {
        Suite::Containment => {
            let mut n = a.numeric.clone();
            // shared sample times need a common output schedule
            n.output_interval = n.output_interval.or(Some(0.01));
            let opts = options(&n, 1)?;
            let outer = a
                .outer
                .as_deref()
                .ok_or_else(|| Failure::Usage("--outer: required for containment".into()))?;
            let inner = a
                .inner
                .as_deref()
                .ok_or_else(|| Failure::Usage("--inner: required for containment".into()))?;
            let outer = run_curve(outer, "--outer", &a.f_outer, "--f-outer", &c, &n, &opts)?;
            let inner = run_curve(inner, "--inner", &a.f_inner, "--f-inner", &c, &n, &opts)?;
            vec![check_containment(
                &outer,
                &inner,
                a.slack.unwrap_or(ORDERING_SLACK),
            )?]
        }
        Suite::Convexity => {
            let traj = single_trajectory(a, &c, &options(&a.numeric, 1)?)?;
            vec![check_convexity_preservation(
                &traj,
                a.slack.unwrap_or(1e-3),
            )?]
        }
        Suite::Length => {
            let traj = single_trajectory(a, &c, &options(&a.numeric, 1)?)?;
            let rep = check_length_monotonicity(&traj, a.slack.unwrap_or(DERIVATIVE_REL_TOL))?;
            rep.reports().into_iter().cloned().collect()
        }
        Suite::Sigma => {
            let traj = single_trajectory(a, &c, &options(&a.numeric, 1)?)?;
            vec![check_sigma_positivity(
                &traj,
                a.slack.unwrap_or(ORDERING_SLACK),
            )?]
        }
    };
    emit(&reports, a.report.as_deref())?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::CheckFailed(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_slope_of_power_law() {
        let x = [2e-3, 1e-3, 5e-4];
        let y = x.map(|v: f64| 3.0 * v * v);
        assert!((log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn error_rows_keep_the_column_count() {
        let ok = summary_row(1.0, 1.0, 0.0, "const:0", &Err(Failure::Usage("bad".into())));
        assert_eq!(ok.len(), SUMMARY_COLUMNS.len());
        assert_eq!(ok[4], "error");
        assert_eq!(ok[12], "bad");
    }
}
