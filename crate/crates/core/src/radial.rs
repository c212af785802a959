//! The reduced radial problem `r_tt = −c₀/r + c̄(t) r`, `r(0) = r₀`, `r_t(0) = r₁`.
//!
//! Round circles under the curve flow (`c₀ = 1`) and round `n`-spheres under
//! the hypersurface flow (`c₀ = n`) both reduce to this ODE. The integrator
//! stops just above the singularity at `r = 0` and closes the remaining time
//! with the energy integral
//!
//! ```text
//! ∫₀^{r_stop} dr / √(2c₀ ln(r₀/r) + r₁²)
//! ```
//!
//! which is exact for `c̄ ≡ 0` and an over-estimate when `c̄ ≤ 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::forcing::ForcingSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProblem {
    pub c0: f64,
    pub forcing: ForcingSchedule,
    pub r0: f64,
    pub r1: f64,
}

impl RadialProblem {
    pub fn new(c0: f64, forcing: ForcingSchedule, r0: f64, r1: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(FlowError::InvalidInput(format!(
                "c0 must be positive, got {c0}"
            )));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(FlowError::InvalidInput(format!(
                "r0 must be positive, got {r0}"
            )));
        }
        if !r1.is_finite() {
            return Err(FlowError::InvalidInput(format!(
                "r1 must be finite, got {r1}"
            )));
        }
        Ok(Self {
            c0,
            forcing,
            r0,
            r1,
        })
    }

    /// Bound `c⁺ = sup |c̄|`.
    pub fn c_plus(&self) -> f64 {
        self.forcing.bound()
    }

    fn accel(&self, r: f64, t: f64) -> f64 {
        -self.c0 / r + self.forcing.eval(t) * r
    }
}

/// `−c₀/r + c̄(t) r`.
pub fn radial_rhs(r: f64, t: f64, problem: &RadialProblem) -> Result<f64> {
    if !(r > 0.0) {
        return Err(FlowError::Domain(format!(
            "radius must be positive, got {r}"
        )));
    }
    Ok(problem.accel(r, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialSample {
    pub t: f64,
    pub r: f64,
    pub r_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialOptions {
    pub dt_max: f64,
    /// Stop once `r < stop_fraction · r₀`.
    pub stop_fraction: f64,
    /// Give up (no collapse) after this much time.
    pub t_max: f64,
    pub max_steps: usize,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            dt_max: 1e-3,
            stop_fraction: 1e-6,
            t_max: 1e4,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialTrajectory {
    pub samples: Vec<RadialSample>,
    /// Estimated collapse time `t₀`; `None` if `t_max` was reached first.
    pub collapse_time: Option<f64>,
    /// Largest radius attained.
    pub peak_radius: f64,
    /// Time of the `r_t` sign change, when one occurred.
    pub peak_time: Option<f64>,
}

impl RadialTrajectory {
    pub fn t_start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Number of sign changes of `r_t` over `t > 0` (exact zeros skipped).
    pub fn velocity_sign_changes(&self) -> usize {
        let signs: Vec<f64> = self
            .samples
            .iter()
            .skip(1)
            .map(|s| s.r_t)
            .filter(|v| *v != 0.0)
            .collect();
        signs
            .windows(2)
            .filter(|w| w[0].signum() != w[1].signum())
            .count()
    }

    /// `(r, r_t)` at time `t`, integrated with fine RK4 steps from the last
    /// stored sample at or before `t`.
    pub fn state_at(&self, t: f64, problem: &RadialProblem) -> Result<RadialSample> {
        if !(t >= self.t_start() && t <= self.t_end()) {
            return Err(FlowError::Domain(format!(
                "t = {t} outside trajectory range [{}, {}]",
                self.t_start(),
                self.t_end()
            )));
        }
        let idx = self.samples.partition_point(|s| s.t <= t).saturating_sub(1);
        let base = self.samples[idx];
        let span = t - base.t;
        if span == 0.0 {
            return Ok(base);
        }
        let substeps = 16;
        let h = span / substeps as f64;
        let (mut r, mut v, mut tt) = (base.r, base.r_t, base.t);
        for _ in 0..substeps {
            (r, v) = rk4_step(problem, r, v, tt, h);
            tt += h;
        }
        Ok(RadialSample { t, r, r_t: v })
    }
}

pub(crate) fn rk4_step(p: &RadialProblem, r: f64, v: f64, t: f64, h: f64) -> (f64, f64) {
    let a1 = p.accel(r, t);
    let (r2, v2) = (r + 0.5 * h * v, v + 0.5 * h * a1);
    let a2 = p.accel(r2, t + 0.5 * h);
    let (r3, v3) = (r + 0.5 * h * v2, v + 0.5 * h * a2);
    let a3 = p.accel(r3, t + 0.5 * h);
    let (r4, v4) = (r + h * v3, v + h * a3);
    let a4 = p.accel(r4, t + h);
    (
        r + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4),
        v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
    )
}

/// RK4 with `dt = min(dt_max, 0.05 r / (|r_t| + √c₀))` until `r < ε_r`, then
/// the quadrature tail.
pub fn integrate_radial(problem: &RadialProblem, opts: &RadialOptions) -> Result<RadialTrajectory> {
    if !(opts.dt_max > 0.0) || !(opts.stop_fraction > 0.0 && opts.stop_fraction < 1.0) {
        return Err(FlowError::InvalidConfig(format!(
            "radial options need dt_max > 0 and stop_fraction in (0, 1), got {} and {}",
            opts.dt_max, opts.stop_fraction
        )));
    }
    let eps_r = opts.stop_fraction * problem.r0;
    let sqrt_c0 = problem.c0.sqrt();
    let (mut t, mut r, mut v) = (0.0, problem.r0, problem.r1);
    let mut samples = vec![RadialSample { t, r, r_t: v }];
    let mut peak_radius = r;
    let mut peak_time = None;

    let mut steps = 0usize;
    while r >= eps_r {
        if t >= opts.t_max {
            return Ok(RadialTrajectory {
                samples,
                collapse_time: None,
                peak_radius,
                peak_time,
            });
        }
        if steps >= opts.max_steps {
            return Err(FlowError::IntegrationFailure {
                t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        let dt = opts.dt_max.min(0.05 * r / (v.abs() + sqrt_c0));
        let (r_new, v_new) = rk4_step(problem, r, v, t, dt);
        if !(r_new.is_finite() && v_new.is_finite()) {
            return Err(FlowError::IntegrationFailure {
                t,
                reason: format!("non-finite state (r = {r_new}, r_t = {v_new})"),
            });
        }
        if v > 0.0 && v_new <= 0.0 && peak_time.is_none() {
            let (tp, rp) = hermite_turning_point(t, r, v, t + dt, r_new, v_new);
            peak_time = Some(tp);
            peak_radius = peak_radius.max(rp);
        }
        t += dt;
        r = r_new;
        v = v_new;
        peak_radius = peak_radius.max(r);
        steps += 1;
        if r > 0.0 {
            samples.push(RadialSample { t, r, r_t: v });
        }
    }
    let r_stop = r.max(0.0);
    let tail = collapse_tail(problem, r_stop);
    Ok(RadialTrajectory {
        samples,
        collapse_time: Some(t + tail),
        peak_radius,
        peak_time,
    })
}

/// Locates `r_t = 0` in `[t0, t1]` as the root of the derivative of the cubic
/// Hermite interpolant of `r`, returning `(t_peak, r(t_peak))`.
fn hermite_turning_point(t0: f64, r0: f64, v0: f64, t1: f64, r1: f64, v1: f64) -> (f64, f64) {
    let h = t1 - t0;
    // r(s) = h00 r0 + h10 h v0 + h01 r1 + h11 h v1, s ∈ [0, 1]
    let eval = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * r0
            + (s3 - 2.0 * s2 + s) * h * v0
            + (-2.0 * s3 + 3.0 * s2) * r1
            + (s3 - s2) * h * v1
    };
    let deriv = |s: f64| {
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * r0
            + (3.0 * s2 - 4.0 * s + 1.0) * h * v0
            + (-6.0 * s2 + 6.0 * s) * r1
            + (3.0 * s2 - 2.0 * s) * h * v1)
            / h
    };
    // derivative is v0 > 0 at s = 0 and v1 <= 0 at s = 1; bisect the sign change
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    (t0 + s * h, eval(s))
}

/// `∫₀^{r_stop} dr / √(2c₀ ln(r₀/r) + r₁²)` by 64-point Gauss–Legendre.
pub fn collapse_tail(problem: &RadialProblem, r_stop: f64) -> f64 {
    if r_stop <= 0.0 {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(64);
    let half = 0.5 * r_stop;
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| {
            let r = half * (x + 1.0);
            let energy = 2.0 * problem.c0 * (problem.r0 / r).ln() + problem.r1 * problem.r1;
            w / energy.sqrt()
        })
        .sum::<f64>()
        * half
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn check_bound_preconditions(problem: &RadialProblem) -> Result<()> {
    if problem.r1 != 0.0 {
        return Err(FlowError::NotApplicable(format!(
            "collapse-time bounds are stated for r1 = 0, got r1 = {}",
            problem.r1
        )));
    }
    if !problem.forcing.is_non_positive() {
        return Err(FlowError::NotApplicable(
            "collapse-time bounds need a non-positive forcing coefficient".into(),
        ));
    }
    Ok(())
}

/// `t₀ ≤ √(π/(2c₀)) r₀`, valid for `r₁ = 0` and `c̄ ≤ 0`.
pub fn collapse_upper_bound(problem: &RadialProblem) -> Result<f64> {
    check_bound_preconditions(problem)?;
    Ok((PI / (2.0 * problem.c0)).sqrt() * problem.r0)
}

/// Solution-dependent lower bound `√(π/(2c₀)) r₀ − A r₀/√(2c₀)` with
/// `A = √c⁺ ∫₀^{t₀} √((r₀² − r²)/ln(r₀/r)) r₀⁻¹ dt` by trapezoid over the samples.
pub fn collapse_lower_bound(problem: &RadialProblem, traj: &RadialTrajectory) -> Result<f64> {
    check_bound_preconditions(problem)?;
    let r0 = problem.r0;
    let integrand = |r: f64| {
        let log = (r0 / r).ln();
        if log <= 1e-12 {
            // limit r → r₀: (r₀² − r²)/ln(r₀/r) → 2r₀²
            2.0_f64.sqrt()
        } else {
            ((r0 * r0 - r * r) / log).max(0.0).sqrt() / r0
        }
    };
    let integral: f64 = traj
        .samples
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (integrand(w[0].r) + integrand(w[1].r)))
        .sum();
    let a = problem.c_plus().sqrt() * integral;
    Ok(collapse_upper_bound(problem)? - a * r0 / (2.0 * problem.c0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    pub index: usize,
    pub t: f64,
    /// `"lower"` or `"upper"`.
    pub side: String,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub passed: bool,
    pub first_violation: Option<EnvelopeViolation>,
    /// Smallest distance to either side over the samples, slack excluded.
    pub min_margin: f64,
    pub samples_checked: usize,
}

/// Checks `c₀ ln(r₀/r) ≤ r_t²/2 ≤ c₀ ln(r₀/r) + (c⁺/2)(r₀² − r²)` at every
/// sample with slack `1e−8 + 1e−6·|bound|`.
pub fn energy_envelope_check(
    traj: &RadialTrajectory,
    problem: &RadialProblem,
) -> Result<EnvelopeReport> {
    check_bound_preconditions(problem)?;
    let (c0, r0, c_plus) = (problem.c0, problem.r0, problem.c_plus());
    let mut first_violation = None;
    let mut min_margin = f64::INFINITY;
    for (index, s) in traj.samples.iter().enumerate() {
        let kinetic = 0.5 * s.r_t * s.r_t;
        let lower = c0 * (r0 / s.r).ln();
        let upper = lower + 0.5 * c_plus * (r0 * r0 - s.r * s.r);
        for (side, bound, margin) in [
            ("lower", lower, kinetic - lower),
            ("upper", upper, upper - kinetic),
        ] {
            min_margin = min_margin.min(margin);
            let slack = 1e-8 + 1e-6 * bound.abs();
            if margin < -slack && first_violation.is_none() {
                first_violation = Some(EnvelopeViolation {
                    index,
                    t: s.t,
                    side: side.to_string(),
                    excess: -margin,
                });
            }
        }
    }
    Ok(EnvelopeReport {
        passed: first_violation.is_none(),
        first_violation,
        min_margin,
        samples_checked: traj.samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(c0: f64, cbar: f64, r0: f64, r1: f64) -> RadialProblem {
        RadialProblem::new(c0, ForcingSchedule::constant(cbar).unwrap(), r0, r1).unwrap()
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(
            radial_rhs(1.0, 0.0, &problem(1.0, 0.0, 1.0, 0.0)).unwrap(),
            -1.0
        );
        assert_eq!(
            radial_rhs(2.0, 0.0, &problem(2.0, -1.0, 1.0, 0.0)).unwrap(),
            -3.0
        );
        assert!(matches!(
            radial_rhs(0.0, 0.0, &problem(1.0, 0.0, 1.0, 0.0)),
            Err(FlowError::Domain(_))
        ));
        // circle reduction with c(t): −1/r + c r
        let p = problem(1.0, -0.3, 1.0, 0.0);
        assert_eq!(radial_rhs(1.5, 0.2, &p).unwrap(), -1.0 / 1.5 - 0.3 * 1.5);
    }

    #[test]
    fn problem_validation() {
        let z = ForcingSchedule::zero();
        assert!(RadialProblem::new(0.0, z.clone(), 1.0, 0.0).is_err());
        assert!(RadialProblem::new(1.0, z.clone(), -1.0, 0.0).is_err());
        assert!(RadialProblem::new(1.0, z, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(64);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        // ∫ x^126 dx over [−1, 1] = 2/127
        let p: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(126)).sum();
        assert!((p - 2.0 / 127.0).abs() < 1e-13);
        let (x5, w5) = gauss_legendre(5);
        assert!(x5[2].abs() < 1e-15);
        assert!((w5[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn unforced_collapse_time() {
        let tr = integrate_radial(&problem(1.0, 0.0, 1.0, 0.0), &RadialOptions::default()).unwrap();
        let t0 = tr.collapse_time.unwrap();
        assert!((t0 / (PI / 2.0).sqrt() - 1.0).abs() < 1e-4, "t0 = {t0}");
        let tr = integrate_radial(&problem(2.0, 0.0, 1.0, 0.0), &RadialOptions::default()).unwrap();
        let t0 = tr.collapse_time.unwrap();
        assert!((t0 / (PI / 4.0).sqrt() - 1.0).abs() < 1e-4, "t0 = {t0}");
    }

    #[test]
    fn energy_integral_oracle_matches_closed_form() {
        // t₀ = ∫₀^{r₀} dr / √(2c₀ ln(r₀/r)); substitute r = r₀ e^{−u²}
        // → t₀ = r₀ √(2/c₀) ∫₀^∞ e^{−u²} du, evaluated here by a plain midpoint sum.
        let (c0, r0) = (2.0_f64, 1.0_f64);
        let n = 200_000;
        let upper = 8.0;
        let du = upper / n as f64;
        let integral: f64 = (0..n)
            .map(|i| (-((i as f64 + 0.5) * du).powi(2)).exp() * du)
            .sum();
        let t0 = r0 * (2.0 / c0).sqrt() * integral;
        assert!((t0 - (PI / 4.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn expanding_case_peaks_below_envelope() {
        let p = problem(1.0, 0.0, 1.0, 0.5);
        let tr = integrate_radial(&p, &RadialOptions::default()).unwrap();
        let bound = (0.125_f64).exp();
        assert!(tr.peak_radius <= bound + 1e-9);
        // c̄ ≡ 0 conserves energy, so the peak is exactly the envelope
        assert!(
            (tr.peak_radius - bound).abs() < 1e-8,
            "peak = {}",
            tr.peak_radius
        );
        assert!(tr.peak_time.is_some());
        assert_eq!(tr.velocity_sign_changes(), 1);
        assert!(tr.collapse_time.is_some());
    }

    #[test]
    fn upper_bound_examples() {
        assert!(
            (collapse_upper_bound(&problem(1.0, 0.0, 1.0, 0.0)).unwrap() - (PI / 2.0).sqrt()).abs()
                < 1e-15
        );
        assert!(
            (collapse_upper_bound(&problem(2.0, -1.0, 3.0, 0.0)).unwrap()
                - 3.0 * (PI / 4.0).sqrt())
            .abs()
                < 1e-14
        );
        assert!(matches!(
            collapse_upper_bound(&problem(1.0, 0.0, 1.0, 0.1)),
            Err(FlowError::NotApplicable(_))
        ));
        assert!(matches!(
            collapse_upper_bound(&problem(1.0, 0.5, 1.0, 0.0)),
            Err(FlowError::NotApplicable(_))
        ));
    }

    #[test]
    fn envelope_tight_when_unforced_and_strict_when_forced() {
        let p = problem(1.0, 0.0, 1.0, 0.0);
        let tr = integrate_radial(&p, &RadialOptions::default()).unwrap();
        let rep = energy_envelope_check(&tr, &p).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.min_margin.abs() < 1e-6);

        let p = problem(1.0, -0.5, 1.0, 0.0);
        let tr = integrate_radial(&p, &RadialOptions::default()).unwrap();
        let rep = energy_envelope_check(&tr, &p).unwrap();
        assert!(rep.passed, "{rep:?}");
        // interior samples sit strictly inside the envelope
        let s = tr.samples[tr.samples.len() / 2];
        let lower = (1.0 / s.r).ln();
        assert!(0.5 * s.r_t * s.r_t - lower > 1e-3);
    }

    #[test]
    fn corrupted_velocity_violates_lower_envelope() {
        let p = problem(1.0, -0.5, 1.0, 0.0);
        let mut tr = integrate_radial(&p, &RadialOptions::default()).unwrap();
        for s in &mut tr.samples {
            s.r_t *= 0.5;
        }
        let rep = energy_envelope_check(&tr, &p).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.first_violation.unwrap().side, "lower");
    }

    #[test]
    fn two_sided_collapse_bound() {
        let p = problem(1.0, -0.5, 1.0, 0.0);
        let tr = integrate_radial(&p, &RadialOptions::default()).unwrap();
        let t0 = tr.collapse_time.unwrap();
        let lo = collapse_lower_bound(&p, &tr).unwrap();
        let hi = collapse_upper_bound(&p).unwrap();
        assert!(lo <= t0 && t0 <= hi, "{lo} <= {t0} <= {hi}");
    }

    #[test]
    fn state_at_interpolates_and_rejects_out_of_range() {
        let p = problem(1.0, 0.0, 1.0, 0.0);
        let tr = integrate_radial(&p, &RadialOptions::default()).unwrap();
        let s = tr.state_at(0.5, &p).unwrap();
        // energy r_t²/2 = ln(r₀/r)
        assert!((0.5 * s.r_t * s.r_t - (1.0 / s.r).ln()).abs() < 1e-10);
        assert!(tr.state_at(-0.1, &p).is_err());
        assert!(tr.state_at(10.0, &p).is_err());
    }
}
