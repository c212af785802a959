//! Support-function geometry of strictly convex plane curves.
//!
//! A convex curve is carried by its support function `S(θ)` on a uniform
//! periodic grid of outward-normal angles. Position, curvature and length are
//! recovered from `S` and its θ-derivatives:
//!
//! * position `x = S cos θ − S_θ sin θ`, `y = S sin θ + S_θ cos θ`
//! * radius of curvature `1/k = S_θθ + S`
//! * length `L = ∫ (S_θθ + S) dθ = ∫ S dθ`

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

/// Relative convexity floor: a state is valid while `min(S_θθ + S) > CONVEXITY_FLOOR · max S`.
pub const CONVEXITY_FLOOR: f64 = 1e-8;

/// Minimum supported grid size.
pub const MIN_NODES: usize = 16;

/// Uniform periodic grid `θ_i = 2πi/n` on `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    n_nodes: usize,
    dtheta: f64,
}

impl AngularGrid {
    /// `n_nodes` must be even and at least [`MIN_NODES`].
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes < MIN_NODES || !n_nodes.is_multiple_of(2) {
            return Err(FlowError::InvalidInput(format!(
                "n_nodes must be even and >= {MIN_NODES}, got {n_nodes}"
            )));
        }
        Ok(Self {
            n_nodes,
            dtheta: TAU / n_nodes as f64,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn theta(&self, i: usize) -> f64 {
        TAU * i as f64 / self.n_nodes as f64
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(|i| self.theta(i))
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.thetas().map(f).collect()
    }

    fn check_len(&self, values: &[f64], what: &str) -> Result<()> {
        if values.len() != self.n_nodes {
            return Err(FlowError::InvalidInput(format!(
                "{what} has length {} but the grid has {} nodes",
                values.len(),
                self.n_nodes
            )));
        }
        Ok(())
    }
}

/// Order of a periodic θ-derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeOrder {
    First,
    Second,
}

/// Fourth-order central finite-difference derivative with periodic wraparound.
pub fn differentiate_periodic(
    grid: &AngularGrid,
    values: &[f64],
    order: DerivativeOrder,
) -> Result<Vec<f64>> {
    grid.check_len(values, "values")?;
    Ok(match order {
        DerivativeOrder::First => first_derivative(values, grid.dtheta()),
        DerivativeOrder::Second => second_derivative(values, grid.dtheta()),
    })
}

// Unchecked stencils used on hot paths where lengths are already known to match.
// Evaluation order keeps constants exactly stationary.
pub(crate) fn first_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let scale = 1.0 / (12.0 * h);
    (0..n)
        .map(|i| {
            let (m2, m1, p1, p2) = neighbours(i, n);
            (-f[p2] + 8.0 * f[p1] - 8.0 * f[m1] + f[m2]) * scale
        })
        .collect()
}

pub(crate) fn second_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let scale = 1.0 / (12.0 * h * h);
    (0..n)
        .map(|i| {
            let (m2, m1, p1, p2) = neighbours(i, n);
            (-f[p2] + 16.0 * f[p1] - 30.0 * f[i] + 16.0 * f[m1] - f[m2]) * scale
        })
        .collect()
}

#[inline]
fn neighbours(i: usize, n: usize) -> (usize, usize, usize, usize) {
    ((i + n - 2) % n, (i + n - 1) % n, (i + 1) % n, (i + 2) % n)
}

/// Support values `S` and velocities `W = S_τ` on a grid at time `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportState {
    pub grid: AngularGrid,
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    pub tau: f64,
}

impl SupportState {
    pub fn new(grid: AngularGrid, s: Vec<f64>, w: Vec<f64>, tau: f64) -> Result<Self> {
        grid.check_len(&s, "support array")?;
        grid.check_len(&w, "velocity array")?;
        Ok(Self { grid, s, w, tau })
    }

    /// A state with `W ≡ 0` at `τ = 0`.
    pub fn at_rest(grid: AngularGrid, s: Vec<f64>) -> Result<Self> {
        let w = vec![0.0; s.len()];
        Self::new(grid, s, w, 0.0)
    }

    pub fn max_s(&self) -> f64 {
        self.s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_s(&self) -> f64 {
        self.s.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `ε_convex = 1e−8 · max S`.
    pub fn convexity_floor(&self) -> f64 {
        CONVEXITY_FLOOR * self.max_s()
    }

    /// `S_θθ + S` at every node (no validity check).
    pub fn radius_of_curvature(&self) -> Vec<f64> {
        let s_tt = second_derivative(&self.s, self.grid.dtheta());
        s_tt.iter().zip(&self.s).map(|(a, b)| a + b).collect()
    }

    pub fn s_theta(&self) -> Vec<f64> {
        first_derivative(&self.s, self.grid.dtheta())
    }

    pub fn w_theta(&self) -> Vec<f64> {
        first_derivative(&self.w, self.grid.dtheta())
    }

    /// Errors with the first offending node when the convexity floor is violated.
    pub fn validate(&self) -> Result<()> {
        curvature_from_support(self).map(|_| ())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn all_finite(&self) -> bool {
        self.s.iter().chain(&self.w).all(|v| v.is_finite()) && self.tau.is_finite()
    }
}

/// `k_i = 1 / (S_θθ + S)(θ_i)`.
pub fn curvature_from_support(state: &SupportState) -> Result<Vec<f64>> {
    let rho = state.radius_of_curvature();
    let floor = state.convexity_floor();
    // NaN compares false, so it is caught by the negated test and ranked worst
    let worst = rho
        .iter()
        .enumerate()
        .filter(|(_, &r)| !(r > floor))
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Less));
    let worst = match (worst, floor > 0.0) {
        (Some((i, &r)), _) => Some((i, r)),
        // max S <= 0: the origin is not interior, no state is valid
        (None, false) => Some((0, rho[0])),
        (None, true) => None,
    };
    if let Some((index, radius_of_curvature)) = worst {
        return Err(FlowError::ConvexityLoss {
            index,
            theta: state.grid.theta(index),
            radius_of_curvature,
            tau: state.tau,
        });
    }
    Ok(rho.into_iter().map(|r| 1.0 / r).collect())
}

/// Curve points `(S cos θ − S_θ sin θ, S sin θ + S_θ cos θ)`.
pub fn reconstruct_curve(state: &SupportState) -> Result<Vec<[f64; 2]>> {
    state.validate()?;
    let s_theta = state.s_theta();
    Ok(state
        .grid
        .thetas()
        .zip(state.s.iter().zip(&s_theta))
        .map(|(th, (&s, &ds))| {
            let (sin, cos) = th.sin_cos();
            [s * cos - ds * sin, s * sin + ds * cos]
        })
        .collect())
}

/// Periodic trapezoid quadrature `Σ v_i · dθ`.
pub fn periodic_quadrature(grid: &AngularGrid, values: &[f64]) -> f64 {
    values.iter().sum::<f64>() * grid.dtheta()
}

/// Curve length `L = ∫ S dθ`.
pub fn curve_length(state: &SupportState) -> f64 {
    periodic_quadrature(&state.grid, &state.s)
}

/// Total variation of a periodic sequence, wraparound included.
pub fn periodic_total_variation(values: &[f64]) -> f64 {
    let n = values.len();
    (0..n)
        .map(|i| (values[(i + 1) % n] - values[i]).abs())
        .sum()
}

/// Support function of the circle of `radius` centred at `center`.
pub fn support_of_circle(grid: &AngularGrid, radius: f64, center: [f64; 2]) -> Result<Vec<f64>> {
    let offset = center[0].hypot(center[1]);
    if !(radius > offset) {
        return Err(FlowError::InvalidFixture(format!(
            "circle of radius {radius} centred at ({}, {}) does not contain the origin in its interior",
            center[0], center[1]
        )));
    }
    Ok(grid.sample(|th| radius + center[0] * th.cos() + center[1] * th.sin()))
}

/// Derived geometry of a valid support state.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGeometry {
    pub points: Vec<[f64; 2]>,
    pub curvature: Vec<f64>,
    pub length: f64,
    /// Normal speed `σ̃ = −S_τ`.
    pub sigma_tilde: Vec<f64>,
}

impl CurveGeometry {
    pub fn from_state(state: &SupportState) -> Result<Self> {
        let curvature = curvature_from_support(state)?;
        let points = reconstruct_curve(state)?;
        Ok(Self {
            points,
            curvature,
            length: curve_length(state),
            sigma_tilde: state.w.iter().map(|w| -w).collect(),
        })
    }
}

/// A finite Fourier series `a0 + Σ (a_m cos mθ + b_m sin mθ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSeries {
    pub a0: f64,
    /// `(m, a_m, b_m)` triples.
    pub terms: Vec<(u32, f64, f64)>,
}

impl HarmonicSeries {
    pub fn constant(a0: f64) -> Self {
        Self {
            a0,
            terms: Vec::new(),
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.terms.iter().fold(self.a0, |acc, &(m, a, b)| {
            let (sin, cos) = (m as f64 * theta).sin_cos();
            acc + a * cos + b * sin
        })
    }

    /// Exact `h_θθ + h` of the series.
    pub fn eval_radius_of_curvature(&self, theta: f64) -> f64 {
        self.terms.iter().fold(self.a0, |acc, &(m, a, b)| {
            let mf = m as f64;
            let (sin, cos) = (mf * theta).sin_cos();
            acc + (1.0 - mf * mf) * (a * cos + b * sin)
        })
    }

    pub fn sample(&self, grid: &AngularGrid) -> Vec<f64> {
        grid.sample(|th| self.eval(th))
    }

    /// Minimum of `h_θθ + h` over a grid four times finer than `grid`.
    pub fn min_radius_of_curvature(&self, grid: &AngularGrid) -> f64 {
        let fine = 4 * grid.n_nodes();
        (0..fine)
            .map(|i| self.eval_radius_of_curvature(TAU * i as f64 / fine as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Rejects series that are not strictly convex support functions with
    /// the origin inside.
    pub fn validate_convex(&self, grid: &AngularGrid) -> Result<()> {
        let rho = self.min_radius_of_curvature(grid);
        if !(rho > 0.0) {
            return Err(FlowError::InvalidFixture(format!(
                "harmonic data is not strictly convex: min(h_tt + h) = {rho} on the 4x grid"
            )));
        }
        let fine = 4 * grid.n_nodes();
        let min_h = (0..fine)
            .map(|i| self.eval(TAU * i as f64 / fine as f64))
            .fold(f64::INFINITY, f64::min);
        if !(min_h > 0.0) {
            return Err(FlowError::InvalidFixture(format!(
                "origin is not interior to the initial curve: min h = {min_h}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> AngularGrid {
        AngularGrid::new(n).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_rejects_small_or_odd() {
        assert!(AngularGrid::new(8).is_err());
        assert!(AngularGrid::new(17).is_err());
        let g = grid(64);
        assert!((g.dtheta() * 64.0 - TAU).abs() < 1e-15);
        assert!(g
            .thetas()
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] > w[0]));
        assert!(g.theta(63) < TAU);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid(32);
        let v = vec![5.0; 32];
        for order in [DerivativeOrder::First, DerivativeOrder::Second] {
            let d = differentiate_periodic(&g, &v, order).unwrap();
            assert!(d.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn second_derivative_of_cos_matches_stencil_truncation() {
        // The exact stencil symbol for e^{iθ} is (32 cos h − 2 cos 2h − 30)/(12h²);
        // its deviation from −1 is the max error on cos θ.
        let g = grid(64);
        let h = g.dtheta();
        let symbol_error =
            ((32.0 * h.cos() - 2.0 * (2.0 * h).cos() - 30.0) / (12.0 * h * h) + 1.0).abs();
        assert!((symbol_error - 1.0312960e-6).abs() < 1e-12);
        let v = g.sample(f64::cos);
        let d = differentiate_periodic(&g, &v, DerivativeOrder::Second).unwrap();
        let exact = g.sample(|t| -t.cos());
        let err = max_abs_diff(&d, &exact);
        assert!(err <= symbol_error * (1.0 + 1e-6) + 1e-13, "err = {err}");
    }

    #[test]
    fn first_derivative_of_sin3_is_fourth_order() {
        let errs: Vec<f64> = [64, 128]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let v = g.sample(|t| (3.0 * t).sin());
                let d = differentiate_periodic(&g, &v, DerivativeOrder::First).unwrap();
                let exact = g.sample(|t| 3.0 * (3.0 * t).cos());
                let err = max_abs_diff(&d, &exact);
                // leading term h⁴ m⁵ / 30
                assert!(err <= g.dtheta().powi(4) * 243.0 / 30.0, "n={n} err={err}");
                err
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 4.0).abs() < 0.05, "observed order {order}");
    }

    #[test]
    fn derivative_length_mismatch() {
        let g = grid(16);
        assert!(matches!(
            differentiate_periodic(&g, &[1.0; 15], DerivativeOrder::First),
            Err(FlowError::InvalidInput(_))
        ));
    }

    #[test]
    fn curvature_of_circle() {
        let g = grid(64);
        let st = SupportState::at_rest(g, vec![2.0; 64]).unwrap();
        let k = curvature_from_support(&st).unwrap();
        assert!(k.iter().all(|&x| (x - 0.5).abs() < 1e-14));
    }

    #[test]
    fn curvature_of_oval_at_zero() {
        let g = grid(256);
        let st = SupportState::at_rest(g, g.sample(|t| 1.0 + 0.3 * (2.0 * t).cos())).unwrap();
        let k = curvature_from_support(&st).unwrap();
        // 1 / (1.3 − 1.2)
        assert!((k[0] - 10.0).abs() < 1e-4, "k(0) = {}", k[0]);
    }

    #[test]
    fn translated_circle_has_uniform_curvature() {
        let g = grid(128);
        let (r, a, b) = (1.5_f64, 0.4_f64, -0.3_f64);
        let st = SupportState::at_rest(g, g.sample(|t| r + a * t.cos() + b * t.sin())).unwrap();
        let k = curvature_from_support(&st).unwrap();
        assert!(k.iter().all(|&x| (x - 1.0 / r).abs() < 1e-7));
    }

    #[test]
    fn convexity_loss_reports_location() {
        let g = grid(64);
        let mut s = vec![1.0; 64];
        // makes S_θθ + S strongly negative at node 10
        s[10] = 1.2;
        let st = SupportState::at_rest(g, s).unwrap();
        match curvature_from_support(&st) {
            Err(FlowError::ConvexityLoss { index, theta, .. }) => {
                assert_eq!(index, 10);
                assert!((theta - g.theta(10)).abs() < 1e-15);
            }
            other => panic!("expected convexity loss, got {other:?}"),
        }
    }

    #[test]
    fn reconstruct_circle_and_translated_circle() {
        let g = grid(64);
        let st = SupportState::at_rest(g, vec![3.0; 64]).unwrap();
        for p in reconstruct_curve(&st).unwrap() {
            assert!((p[0].hypot(p[1]) - 3.0).abs() < 1e-13);
        }
        let st = SupportState::at_rest(g, g.sample(|t| 1.0 + 0.5 * t.cos())).unwrap();
        for p in reconstruct_curve(&st).unwrap() {
            assert!(((p[0] - 0.5).hypot(p[1]) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn oval_point_at_zero() {
        let g = grid(128);
        let st = SupportState::at_rest(g, g.sample(|t| 1.0 + 0.3 * (2.0 * t).cos())).unwrap();
        let p = reconstruct_curve(&st).unwrap()[0];
        assert!((p[0] - 1.3).abs() < 1e-14);
        assert!(p[1].abs() < 1e-14);
    }

    #[test]
    fn lengths() {
        let g = grid(64);
        let r = 1.7;
        let circle = SupportState::at_rest(g, vec![r; 64]).unwrap();
        assert!((curve_length(&circle) - TAU * r).abs() < 1e-12);
        let oval = SupportState::at_rest(g, g.sample(|t| 1.0 + 0.3 * (2.0 * t).cos())).unwrap();
        assert!((curve_length(&oval) - TAU).abs() < 1e-12);
        let shifted = SupportState::at_rest(g, g.sample(|t| r + 0.4 * t.cos())).unwrap();
        assert!((curve_length(&shifted) - TAU * r).abs() < 1e-12);
    }

    #[test]
    fn circle_fixtures() {
        let g = grid(64);
        assert!(support_of_circle(&g, 1.0, [0.0, 0.0])
            .unwrap()
            .iter()
            .all(|&s| s == 1.0));
        let s = support_of_circle(&g, 2.0, [0.5, 0.0]).unwrap();
        assert!((s[0] - 2.5).abs() < 1e-15);
        assert!((s[32] - 1.5).abs() < 1e-15);
        assert!(matches!(
            support_of_circle(&g, 1.0, [1.5, 0.0]),
            Err(FlowError::InvalidFixture(_))
        ));
    }

    #[test]
    fn polygon_curvature_converges_at_second_order() {
        // discrete curvature from the circumcircle of consecutive vertices
        let errs: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let st = SupportState::at_rest(
                    g,
                    g.sample(|t| 1.0 + 0.2 * (2.0 * t).cos() + 0.05 * (3.0 * t).sin()),
                )
                .unwrap();
                let k = curvature_from_support(&st).unwrap();
                let p = reconstruct_curve(&st).unwrap();
                (0..n)
                    .map(|i| {
                        let a = p[(i + n - 1) % n];
                        let b = p[i];
                        let c = p[(i + 1) % n];
                        let ab = (b[0] - a[0]).hypot(b[1] - a[1]);
                        let bc = (c[0] - b[0]).hypot(c[1] - b[1]);
                        let ca = (a[0] - c[0]).hypot(a[1] - c[1]);
                        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                        let kd = 2.0 * cross.abs() / (ab * bc * ca);
                        (kd - k[i]).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "observed order {order} from {errs:?}");
        }
    }

    #[test]
    fn harmonic_series_validation() {
        let g = grid(64);
        let ok = HarmonicSeries {
            a0: 1.0,
            terms: vec![(2, 0.3, 0.0)],
        };
        assert!(ok.validate_convex(&g).is_ok());
        assert!((ok.min_radius_of_curvature(&g) - 0.1).abs() < 1e-12);
        let bad = HarmonicSeries {
            a0: 1.0,
            terms: vec![(2, 0.45, 0.0)],
        };
        assert!(bad.validate_convex(&g).is_err());
        assert!((ok.eval(PI) - 1.3).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn series() -> impl Strategy<Value = (f64, f64, f64)> {
            (0.8f64..2.0, -0.1f64..0.1, -0.03f64..0.03)
        }

        proptest! {
            #[test]
            fn translation_leaves_length_and_curvature_unchanged(
                (a0, a2, b3) in series(),
                dx in -0.3f64..0.3,
                dy in -0.3f64..0.3,
            ) {
                let g = grid(128);
                let base = g.sample(|t| a0 + a2 * (2.0 * t).cos() + b3 * (3.0 * t).sin());
                let moved: Vec<f64> = g
                    .thetas()
                    .zip(&base)
                    .map(|(t, s)| s + dx * t.cos() + dy * t.sin())
                    .collect();
                let s0 = SupportState::at_rest(g, base).unwrap();
                let s1 = SupportState::at_rest(g, moved).unwrap();
                prop_assume!(s0.min_s() > 0.0 && s1.min_s() > 0.0);
                let (l0, l1) = (curve_length(&s0), curve_length(&s1));
                prop_assert!((l0 - l1).abs() <= 1e-12 * l0);
                let k0 = curvature_from_support(&s0).unwrap();
                let k1 = curvature_from_support(&s1).unwrap();
                // first harmonics cancel only to stencil precision
                prop_assert!(max_abs_diff(&k0, &k1) < 1e-5);
            }

            #[test]
            fn radius_of_curvature_integrates_to_length((a0, a2, b3) in series()) {
                let g = grid(64);
                let st = SupportState::at_rest(g, g.sample(|t| a0 + a2 * (2.0 * t).cos() + b3 * (3.0 * t).sin())).unwrap();
                let lhs = periodic_quadrature(&g, &st.radius_of_curvature());
                let rhs = curve_length(&st);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
            }
        }
    }
}
