//! Executable versions of the comparison, convexity and length-monotonicity
//! properties of the forced curve flow, evaluated over stored trajectories.
//!
//! Every check produces a [`CheckReport`]. A check measures a signed
//! violation at each sample (positive means the property is broken by that
//! amount) and passes iff the largest violation stays within its slack.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::geometry::{curvature_from_support, periodic_quadrature, SupportState};
use crate::ma_solver::FlowTrajectory;

/// Absolute slack for ordering checks.
pub const ORDERING_SLACK: f64 = 1e-6;
/// Relative tolerance for matching a time derivative against its quadrature.
pub const DERIVATIVE_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    /// `None` for checks on integrated quantities.
    pub theta: Option<f64>,
    pub tau: f64,
}

/// Margin (negated violation) of one time sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub tau: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub location: Location,
    pub margins: Vec<Margin>,
}

/// Collects per-sample violations and keeps the worst one.
struct Accumulator {
    name: &'static str,
    worst: f64,
    location: Location,
    margins: Vec<Margin>,
}

impl Accumulator {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: f64::NEG_INFINITY,
            location: Location {
                theta: None,
                tau: 0.0,
            },
            margins: Vec::new(),
        }
    }

    fn sample(&mut self, tau: f64, theta: Option<f64>, violation: f64) {
        // NaN ranks as the worst possible violation
        let v = if violation.is_nan() {
            f64::INFINITY
        } else {
            violation
        };
        if v > self.worst {
            self.worst = v;
            self.location = Location { theta, tau };
        }
        self.margins.push(Margin { tau, margin: -v });
    }

    /// Largest nodal violation of one state.
    fn sample_nodes(&mut self, state: &SupportState, violations: impl Iterator<Item = f64>) {
        let (i, v) = violations
            .map(|v| if v.is_nan() { f64::INFINITY } else { v })
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
        self.sample(state.tau, Some(state.grid.theta(i)), v);
    }

    fn finish(self, passed: impl Fn(f64) -> bool) -> CheckReport {
        CheckReport {
            name: self.name.to_string(),
            passed: passed(self.worst),
            worst_violation: self.worst,
            location: self.location,
            margins: self.margins,
        }
    }
}

/// Support-function ordering `S_inner ≤ S_outer + slack` at every shared
/// sample time. At `τ = 0` the hypothesis `W_inner ≤ W_outer` (that is,
/// `f_inner ≥ f_outer`) is checked as well. Both curves are assumed convex
/// about the shared origin, where this ordering is equivalent to containment.
pub fn check_containment(
    outer: &FlowTrajectory,
    inner: &FlowTrajectory,
    slack: f64,
) -> Result<CheckReport> {
    if outer.grid().n_nodes() != inner.grid().n_nodes() {
        return Err(FlowError::InvalidComparison(format!(
            "grids differ: {} vs {} nodes",
            outer.grid().n_nodes(),
            inner.grid().n_nodes()
        )));
    }
    if outer.forcing != inner.forcing {
        return Err(FlowError::InvalidComparison(
            "trajectories use different forcing".into(),
        ));
    }
    let mut acc = Accumulator::new("containment");
    let mut j = 0;
    for o in &outer.snapshots {
        let tau = o.state.tau;
        while j < inner.snapshots.len() && inner.snapshots[j].state.tau < tau {
            j += 1;
        }
        let Some(i) = inner.snapshots.get(j).filter(|s| s.state.tau == tau) else {
            continue;
        };
        let (so, si) = (&o.state, &i.state);
        if tau == 0.0 {
            acc.sample_nodes(
                so,
                (0..so.s.len()).map(|n| (si.s[n] - so.s[n]).max(si.w[n] - so.w[n])),
            );
        } else {
            acc.sample_nodes(so, si.s.iter().zip(&so.s).map(|(a, b)| a - b));
        }
    }
    if acc.margins.is_empty() {
        return Err(FlowError::InvalidComparison(
            "trajectories share no sample time".into(),
        ));
    }
    Ok(acc.finish(|w| w <= slack))
}

/// `k(θ, τ) ≥ η − slack` at every sample, with `η = min k(·, 0)`.
pub fn check_convexity_preservation(traj: &FlowTrajectory, slack: f64) -> Result<CheckReport> {
    let eta = traj.initial().diagnostics.min_k;
    let mut acc = Accumulator::new("convexity_preservation");
    for snap in &traj.snapshots {
        let k = curvature_from_support(&snap.state)?;
        acc.sample_nodes(&snap.state, k.iter().map(|k| eta - k));
    }
    Ok(acc.finish(|w| w <= slack))
}

/// Hypotheses shared by the length and normal-speed checks: `f ≥ 0`, `c ≤ 0`
/// and the origin interior to the initial curve.
fn require_shrinking_hypotheses(traj: &FlowTrajectory) -> Result<()> {
    let s0 = &traj.initial().state;
    if let Some(w) = s0.w.iter().find(|w| !(**w <= 0.0)) {
        return Err(FlowError::NotApplicable(format!(
            "initial normal velocity f must be non-negative, found {}",
            -w
        )));
    }
    if !traj.forcing.is_non_positive() {
        return Err(FlowError::NotApplicable(
            "forcing c must be non-positive".into(),
        ));
    }
    if !(s0.min_s() > 0.0) {
        return Err(FlowError::NotApplicable(format!(
            "origin must be interior to the initial curve (min S = {})",
            s0.min_s()
        )));
    }
    Ok(())
}

/// Second length derivative `d²L/dτ² = ∫ [(W_θ² − 1) k + c S] dθ`.
pub fn length_second_derivative(state: &SupportState, c: f64) -> Result<f64> {
    let k = curvature_from_support(state)?;
    let w_theta = state.w_theta();
    let integrand: Vec<f64> = (0..k.len())
        .map(|i| (w_theta[i] * w_theta[i] - 1.0) * k[i] + c * state.s[i])
        .collect();
    Ok(periodic_quadrature(&state.grid, &integrand))
}

/// First length derivative `dL/dτ = ∫ W dθ = −∫ σ̃ dθ`.
pub fn length_first_derivative(state: &SupportState) -> f64 {
    periodic_quadrature(&state.grid, &state.w)
}

/// Centred derivative on a nonuniform grid, second-order accurate.
fn centred_difference(t: [f64; 3], y: [f64; 3]) -> f64 {
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    (h1 * h1 * y[2] - h2 * h2 * y[0] + (h2 * h2 - h1 * h1) * y[1]) / (h1 * h2 * (h1 + h2))
}

/// The three length checks on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    /// Relative mismatch of the centred difference of `L` against `∫ W dθ`
    /// at interior snapshots.
    pub derivative_match: CheckReport,
    /// `dL/dτ < 0` for `τ > 0`.
    pub decreasing: CheckReport,
    /// `d²L/dτ² < 0` for `τ > 0`.
    pub concave: CheckReport,
}

impl LengthReport {
    pub fn passed(&self) -> bool {
        self.derivative_match.passed && self.decreasing.passed && self.concave.passed
    }

    pub fn reports(&self) -> [&CheckReport; 3] {
        [&self.derivative_match, &self.decreasing, &self.concave]
    }
}

/// Length monotonicity for `f ≥ 0`, `c ≤ 0`. The derivative match uses the
/// relative tolerance `rel_tol`; first and last snapshots are excluded from it.
pub fn check_length_monotonicity(traj: &FlowTrajectory, rel_tol: f64) -> Result<LengthReport> {
    require_shrinking_hypotheses(traj)?;
    let snaps = &traj.snapshots;
    let mut matching = Accumulator::new("length_derivative_match");
    for win in snaps.windows(3) {
        let t = [win[0].state.tau, win[1].state.tau, win[2].state.tau];
        let l = [
            win[0].diagnostics.length,
            win[1].diagnostics.length,
            win[2].diagnostics.length,
        ];
        let fd = centred_difference(t, l);
        let quad = length_first_derivative(&win[1].state);
        matching.sample(t[1], None, (fd - quad).abs() / quad.abs());
    }
    let mut decreasing = Accumulator::new("length_decreasing");
    let mut concave = Accumulator::new("length_concave");
    for snap in snaps.iter().filter(|s| s.state.tau > 0.0) {
        let c = traj.forcing.eval(snap.state.tau);
        decreasing.sample(snap.state.tau, None, length_first_derivative(&snap.state));
        concave.sample(
            snap.state.tau,
            None,
            length_second_derivative(&snap.state, c)?,
        );
    }
    Ok(LengthReport {
        derivative_match: matching.finish(|w| w <= rel_tol),
        decreasing: decreasing.finish(|w| w < 0.0),
        concave: concave.finish(|w| w < 0.0),
    })
}

/// Normal-speed positivity: `k − c S > 0` and `σ̃ = −W ≥ −slack` everywhere.
pub fn check_sigma_positivity(traj: &FlowTrajectory, slack: f64) -> Result<CheckReport> {
    require_shrinking_hypotheses(traj)?;
    let mut acc = Accumulator::new("sigma_positivity");
    let mut acceleration_positive = true;
    for snap in &traj.snapshots {
        let st = &snap.state;
        let c = traj.forcing.eval(st.tau);
        let k = curvature_from_support(st)?;
        let accel: Vec<f64> = k.iter().zip(&st.s).map(|(k, s)| k - c * s).collect();
        acceleration_positive &= accel.iter().all(|a| *a > 0.0);
        acc.sample_nodes(st, accel.iter().zip(&st.w).map(|(a, w)| (-a).max(*w)));
    }
    Ok(acc.finish(|w| acceleration_positive && w <= slack))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::ForcingSchedule;
    use crate::geometry::{support_of_circle, AngularGrid, HarmonicSeries};
    use crate::ma_solver::{evolve, EvolveOptions};
    use crate::radial::{integrate_radial, RadialOptions, RadialProblem};

    fn opts(horizon: f64, interval: f64) -> EvolveOptions {
        EvolveOptions {
            horizon,
            output_interval: Some(interval),
            ..EvolveOptions::default()
        }
    }

    fn circle(grid: AngularGrid, r: f64, f: f64, c: f64, o: &EvolveOptions) -> FlowTrajectory {
        let h = support_of_circle(&grid, r, [0.0, 0.0]).unwrap();
        evolve(
            grid,
            &h,
            &vec![f; grid.n_nodes()],
            &ForcingSchedule::constant(c).unwrap(),
            o,
        )
        .unwrap()
    }

    fn ellipse_like(grid: AngularGrid, f: f64, c: f64, o: &EvolveOptions) -> FlowTrajectory {
        let h = HarmonicSeries {
            a0: 1.0,
            terms: vec![(2, 0.3, 0.0)],
        }
        .sample(&grid);
        evolve(
            grid,
            &h,
            &vec![f; grid.n_nodes()],
            &ForcingSchedule::constant(c).unwrap(),
            o,
        )
        .unwrap()
    }

    #[test]
    fn nested_circles_stay_ordered() {
        let g = AngularGrid::new(64).unwrap();
        let o = opts(0.8, 0.05);
        let outer = circle(g, 2.0, 0.0, 0.0, &o);
        let inner = circle(g, 1.0, 0.0, 0.0, &o);
        let rep = check_containment(&outer, &inner, ORDERING_SLACK).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(
            rep.margins.len(),
            inner.snapshots.len().min(outer.snapshots.len())
        );
        // at τ = 0 the equal velocities are the binding constraint
        assert_eq!(rep.margins[0].margin, 0.0);
        // afterwards the circle reduction gives r_outer − r_inner
        for (m, (a, b)) in rep
            .margins
            .iter()
            .zip(outer.snapshots.iter().zip(&inner.snapshots))
            .skip(1)
        {
            assert!((m.margin - (a.state.s[0] - b.state.s[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn swapped_roles_fail_at_start() {
        let g = AngularGrid::new(64).unwrap();
        let o = opts(0.3, 0.05);
        let outer = circle(g, 2.0, 0.0, 0.0, &o);
        let inner = circle(g, 1.0, 0.0, 0.0, &o);
        let rep = check_containment(&inner, &outer, ORDERING_SLACK).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.margins[0].tau, 0.0);
        assert!((rep.margins[0].margin + 1.0).abs() < 1e-12);
    }

    #[test]
    fn faster_inner_curve_stays_inside() {
        let g = AngularGrid::new(64).unwrap();
        let o = opts(0.6, 0.05);
        let outer = circle(g, 2.0, 0.5, 0.0, &o);
        let inner = ellipse_like(g, 1.0, 0.0, &o);
        let rep = check_containment(&outer, &inner, ORDERING_SLACK).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn slower_inner_velocity_violates_hypothesis() {
        let g = AngularGrid::new(64).unwrap();
        let o = opts(0.2, 0.05);
        let outer = circle(g, 2.0, 1.0, 0.0, &o);
        let inner = circle(g, 1.0, 0.0, 0.0, &o);
        let rep = check_containment(&outer, &inner, ORDERING_SLACK).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.location.tau, 0.0);
    }

    #[test]
    fn containment_is_transitive_on_three_circles() {
        let g = AngularGrid::new(64).unwrap();
        let o = opts(0.5, 0.05);
        let t: Vec<_> = [3.0, 2.0, 1.0]
            .iter()
            .map(|&r| circle(g, r, 0.0, -0.1, &o))
            .collect();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            assert!(
                check_containment(&t[a], &t[b], ORDERING_SLACK)
                    .unwrap()
                    .passed
            );
        }
    }

    #[test]
    fn mismatched_comparisons_are_rejected() {
        let o = opts(0.1, 0.05);
        let a = circle(AngularGrid::new(64).unwrap(), 2.0, 0.0, 0.0, &o);
        let b = circle(AngularGrid::new(32).unwrap(), 1.0, 0.0, 0.0, &o);
        assert!(matches!(
            check_containment(&a, &b, 1e-6),
            Err(FlowError::InvalidComparison(_))
        ));
        let c = circle(AngularGrid::new(64).unwrap(), 1.0, 0.0, -0.1, &o);
        assert!(matches!(
            check_containment(&a, &c, 1e-6),
            Err(FlowError::InvalidComparison(_))
        ));
        let d = circle(
            AngularGrid::new(64).unwrap(),
            1.0,
            0.0,
            0.0,
            &opts(0.1, 0.03),
        );
        // shared times are 0 and the horizon
        let rep = check_containment(&a, &d, 1e-6).unwrap();
        assert_eq!(rep.margins.len(), 2);
    }

    #[test]
    fn convexity_preserved_on_shrinking_data() {
        let g = AngularGrid::new(64).unwrap();
        let traj = ellipse_like(g, 1.0, -0.1, &opts(0.3, 0.02));
        let rep = check_convexity_preservation(&traj, 1e-3).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!((traj.initial().diagnostics.min_k - 1.0 / 1.9).abs() < 1e-3);
    }

    #[test]
    fn corrupted_curvature_is_located() {
        let g = AngularGrid::new(64).unwrap();
        let mut traj = circle(g, 1.0, 0.0, 0.0, &opts(0.3, 0.1));
        // flatten the curve around node 7 of the second snapshot: larger S_θθ + S
        let st = &mut traj.snapshots[1].state;
        st.s[7] -= 1e-3;
        let rep = check_convexity_preservation(&traj, 1e-3).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.location.theta, Some(g.theta(7)));
        assert_eq!(rep.location.tau, traj.snapshots[1].state.tau);
    }

    #[test]
    fn circle_length_law_reduces_to_radial() {
        let g = AngularGrid::new(128).unwrap();
        let traj = circle(g, 1.0, 0.0, 0.0, &opts(1.0, 0.01));
        let rep = check_length_monotonicity(&traj, DERIVATIVE_REL_TOL).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let p = RadialProblem::new(1.0, ForcingSchedule::zero(), 1.0, 0.0).unwrap();
        let radial = integrate_radial(&p, &RadialOptions::default()).unwrap();
        for snap in &traj.snapshots[1..] {
            let r = radial.state_at(snap.state.tau, &p).unwrap();
            let dl = length_first_derivative(&snap.state);
            assert!((dl / (2.0 * std::f64::consts::PI * r.r_t) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn length_laws_hold_on_shrinking_data() {
        let g = AngularGrid::new(64).unwrap();
        let traj = ellipse_like(g, 1.0, -0.1, &opts(0.4, 0.01));
        let rep = check_length_monotonicity(&traj, DERIVATIVE_REL_TOL).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn length_checks_need_hypotheses() {
        let g = AngularGrid::new(64).unwrap();
        let traj = circle(g, 1.0, -1.0, 0.0, &opts(0.1, 0.05));
        assert!(matches!(
            check_length_monotonicity(&traj, 1e-3),
            Err(FlowError::NotApplicable(_))
        ));
        assert!(matches!(
            check_sigma_positivity(&traj, 1e-6),
            Err(FlowError::NotApplicable(_))
        ));
        let traj = circle(g, 1.0, 0.0, 0.2, &opts(0.1, 0.05));
        assert!(matches!(
            check_length_monotonicity(&traj, 1e-3),
            Err(FlowError::NotApplicable(_))
        ));
    }

    #[test]
    fn sigma_positivity_holds_and_detects_injection() {
        let g = AngularGrid::new(64).unwrap();
        let mut traj = ellipse_like(g, 1.0, -0.1, &opts(0.3, 0.05));
        assert!(
            check_sigma_positivity(&traj, ORDERING_SLACK)
                .unwrap()
                .passed
        );
        let unforced = circle(g, 1.0, 0.0, 0.0, &opts(0.3, 0.05));
        assert!(
            check_sigma_positivity(&unforced, ORDERING_SLACK)
                .unwrap()
                .passed
        );
        traj.snapshots[2].state.w[5] = 0.5;
        let rep = check_sigma_positivity(&traj, ORDERING_SLACK).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.location.theta, Some(g.theta(5)));
    }

    #[test]
    fn centred_difference_is_exact_on_quadratics() {
        let q = |t: f64| 3.0 * t * t - t + 2.0;
        let t = [0.1, 0.13, 0.2];
        let d = centred_difference(t, t.map(q));
        assert!((d - (6.0 * 0.13 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn report_json_key_order_is_stable() {
        let g = AngularGrid::new(32).unwrap();
        let traj = circle(g, 1.0, 0.0, 0.0, &opts(0.1, 0.05));
        let rep = check_convexity_preservation(&traj, 1e-3).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        let keys = [
            "\"name\"",
            "\"passed\"",
            "\"worst_violation\"",
            "\"location\"",
            "\"margins\"",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
        assert_eq!(serde_json::from_str::<CheckReport>(&json).unwrap(), rep);
    }
}
