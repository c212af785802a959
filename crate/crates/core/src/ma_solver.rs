//! Method-of-lines integration of the support-function Monge–Ampère problem
//!
//! ```text
//! S S_ττ − c S S_θθ + (S_ττ S_θθ − S_θτ²) + 1 − c S² = 0,
//! S(θ, 0) = h(θ),  S_τ(θ, 0) = −f(θ)
//! ```
//!
//! Dividing by `S_θθ + S` gives the normal form used for time stepping,
//! `S_ττ = (S_θτ² − 1)/(S_θθ + S) + c(τ) S`, integrated as the first-order
//! system `S_τ = W`, `W_τ = rhs(S, W)` with classical RK4 and a CFL-limited
//! step built from the characteristic speeds `k (±1 − S_θτ)`.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::forcing::ForcingSchedule;
use crate::geometry::{
    curvature_from_support, curve_length, periodic_total_variation, AngularGrid, SupportState,
};

/// Coefficients of `A + B z_ττ + C z_τθ + D z_θθ + E (z_ττ z_θθ − z_θτ²) = 0` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MaCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl MaCoefficients {
    /// `A = 1 − cS², B = S, C = 0, D = −cS, E = 1` for the forced curve flow.
    pub fn forced_curve_flow(state: &SupportState, forcing: &ForcingSchedule) -> Self {
        let c = forcing.eval(state.tau);
        let n = state.s.len();
        Self {
            a: state.s.iter().map(|s| 1.0 - c * s * s).collect(),
            b: state.s.clone(),
            c: vec![0.0; n],
            d: state.s.iter().map(|s| -c * s).collect(),
            e: vec![1.0; n],
        }
    }

    /// `Δ² = C² − 4BD + 4AE` per node.
    pub fn discriminant(&self) -> Vec<f64> {
        (0..self.a.len())
            .map(|i| {
                self.c[i] * self.c[i] - 4.0 * self.b[i] * self.d[i] + 4.0 * self.a[i] * self.e[i]
            })
            .collect()
    }
}

/// Generic-formula discriminant of the forced flow at every node.
pub fn discriminant(state: &SupportState, forcing: &ForcingSchedule) -> Vec<f64> {
    MaCoefficients::forced_curve_flow(state, forcing).discriminant()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub hyperbolic: bool,
    pub min_discriminant: f64,
    pub min_discriminant_theta: f64,
    /// `min |z_θθ + B| = min |S_θθ + S|`.
    pub min_nondegeneracy: f64,
    pub min_nondegeneracy_theta: f64,
}

/// τ-hyperbolicity: `Δ² > 0` and `|S_θθ + S| > ε_convex` at every node.
pub fn check_tau_hyperbolic(
    state: &SupportState,
    forcing: &ForcingSchedule,
) -> HyperbolicityReport {
    let coeffs = MaCoefficients::forced_curve_flow(state, forcing);
    let disc = coeffs.discriminant();
    let s_tt = crate::geometry::second_derivative(&state.s, state.grid.dtheta());
    let nondeg: Vec<f64> = s_tt
        .iter()
        .zip(&coeffs.b)
        .map(|(z, b)| (z + b).abs())
        .collect();
    let (id, md) = argmin(&disc);
    let (inn, mn) = argmin(&nondeg);
    HyperbolicityReport {
        hyperbolic: md > 0.0 && mn > state.convexity_floor(),
        min_discriminant: md,
        min_discriminant_theta: state.grid.theta(id),
        min_nondegeneracy: mn,
        min_nondegeneracy_theta: state.grid.theta(inn),
    }
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, x)| {
            if !(x >= bv) {
                (i, x)
            } else {
                (bi, bv)
            }
        })
}

/// `W_τ = (W_θ² − 1)/(S_θθ + S) + c(τ) S`.
pub fn pde_rhs(state: &SupportState, forcing: &ForcingSchedule) -> Result<Vec<f64>> {
    let k = curvature_from_support(state)?;
    let w_theta = state.w_theta();
    let c = forcing.eval(state.tau);
    Ok(k.iter()
        .zip(&w_theta)
        .zip(&state.s)
        .map(|((k, wt), s)| (wt * wt - 1.0) * k + c * s)
        .collect())
}

/// `dt = cfl · dθ / max_i k_i (1 + |W_θ|)`, clamped to `dt_max`.
pub fn cfl_dt(state: &SupportState, cfl: f64, dt_max: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(FlowError::InvalidConfig(format!(
            "cfl must lie in (0, 1], got {cfl}"
        )));
    }
    if !(dt_max > 0.0) {
        return Err(FlowError::InvalidConfig(format!(
            "dt_max must be positive, got {dt_max}"
        )));
    }
    let k = curvature_from_support(state)?;
    let speed = k
        .iter()
        .zip(state.w_theta())
        .map(|(k, wt)| k * (1.0 + wt.abs()))
        .fold(0.0, f64::max);
    Ok((cfl * state.grid.dtheta() / speed).min(dt_max))
}

/// One classical RK4 step of length `dt`. Every stage revalidates convexity;
/// a failure carries the stage time in [`FlowError::ConvexityLoss`].
pub fn step(state: &SupportState, dt: f64, forcing: &ForcingSchedule) -> Result<SupportState> {
    if !(dt > 0.0) {
        return Err(FlowError::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let grid = state.grid;
    let stage = |base: &SupportState, ds: &[f64], dw: &[f64], h: f64| SupportState {
        grid,
        s: base.s.iter().zip(ds).map(|(s, d)| s + h * d).collect(),
        w: base.w.iter().zip(dw).map(|(w, d)| w + h * d).collect(),
        tau: base.tau + h,
    };

    let k1s = state.w.clone();
    let k1w = pde_rhs(state, forcing)?;
    let y2 = stage(state, &k1s, &k1w, 0.5 * dt);
    let k2w = pde_rhs(&y2, forcing)?;
    let k2s = y2.w;
    let y3 = stage(state, &k2s, &k2w, 0.5 * dt);
    let k3w = pde_rhs(&y3, forcing)?;
    let k3s = y3.w;
    let y4 = stage(state, &k3s, &k3w, dt);
    let k4w = pde_rhs(&y4, forcing)?;
    let k4s = y4.w;

    let combine = |base: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..base.len())
            .map(|i| base[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    Ok(SupportState {
        grid,
        s: combine(&state.s, &k1s, &k2s, &k3s, &k4s),
        w: combine(&state.w, &k1w, &k2w, &k3w, &k4w),
        tau: state.tau + dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopTag {
    HorizonReached,
    Collapsed,
    CurvatureBlowup,
    ShockSuspected,
    HyperbolicityLost,
}

impl StopTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopTag::HorizonReached => "HorizonReached",
            StopTag::Collapsed => "Collapsed",
            StopTag::CurvatureBlowup => "CurvatureBlowup",
            StopTag::ShockSuspected => "ShockSuspected",
            StopTag::HyperbolicityLost => "HyperbolicityLost",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "HorizonReached" => StopTag::HorizonReached,
            "Collapsed" => StopTag::Collapsed,
            "CurvatureBlowup" => StopTag::CurvatureBlowup,
            "ShockSuspected" => StopTag::ShockSuspected,
            "HyperbolicityLost" => StopTag::HyperbolicityLost,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopDetail {
    pub min_s: f64,
    pub max_k: f64,
    /// Total variation of `k` around the curve.
    pub tv_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopReason {
    pub tag: StopTag,
    pub tau_stop: f64,
    pub detail: StopDetail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub length: f64,
    pub min_k: f64,
    pub max_k: f64,
    pub min_s: f64,
}

impl Diagnostics {
    pub fn of(state: &SupportState) -> Result<Self> {
        let k = curvature_from_support(state)?;
        Ok(Self::from_curvature(state, &k))
    }

    fn from_curvature(state: &SupportState, k: &[f64]) -> Self {
        Self {
            length: curve_length(state),
            min_k: k.iter().copied().fold(f64::INFINITY, f64::min),
            max_k: k.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_s: state.min_s(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: SupportState,
    pub diagnostics: Diagnostics,
}

/// Time-ordered snapshots of one run and the reason it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub snapshots: Vec<Snapshot>,
    pub stop: StopReason,
    pub forcing: ForcingSchedule,
}

impl FlowTrajectory {
    pub fn grid(&self) -> AngularGrid {
        self.snapshots[0].state.grid
    }

    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory has at least one snapshot")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.state.tau).collect()
    }
}

/// Run controls for [`evolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub horizon: f64,
    pub cfl: f64,
    pub dt_max: f64,
    /// Record every `stride` steps (ignored when `output_interval` is set).
    pub stride: usize,
    /// Record exactly at multiples of this time, landing steps on them.
    pub output_interval: Option<f64>,
    /// `ε_collapse = collapse_fraction · max h`.
    pub collapse_fraction: f64,
    /// `k_max = k_max_factor / min initial radius of curvature`.
    pub k_max_factor: f64,
    pub tv_factor: f64,
    /// Lower bound on the initial normalised total variation used as the
    /// shock reference, so near-circular data has a finite threshold.
    pub tv_floor: f64,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            cfl: 0.4,
            dt_max: 1e-2,
            stride: 10,
            output_interval: None,
            collapse_fraction: 1e-4,
            k_max_factor: 1e3,
            tv_factor: 50.0,
            tv_floor: 0.1,
            max_steps: 5_000_000,
        }
    }
}

impl EvolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, msg: String| Err(FlowError::InvalidConfig(format!("{field}: {msg}")));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(
                "horizon",
                format!("must be positive and finite, got {}", self.horizon),
            );
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl", format!("must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.dt_max > 0.0) {
            return bad("dt_max", format!("must be positive, got {}", self.dt_max));
        }
        if self.stride == 0 {
            return bad("stride", "must be at least 1".into());
        }
        if let Some(dt) = self.output_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("output_interval", format!("must be positive, got {dt}"));
            }
        }
        if !(self.collapse_fraction > 0.0 && self.collapse_fraction < 1.0) {
            return bad(
                "collapse_fraction",
                format!("must lie in (0, 1), got {}", self.collapse_fraction),
            );
        }
        if !(self.k_max_factor > 1.0) {
            return bad(
                "k_max_factor",
                format!("must exceed 1, got {}", self.k_max_factor),
            );
        }
        if !(self.tv_factor > 1.0) {
            return bad(
                "tv_factor",
                format!("must exceed 1, got {}", self.tv_factor),
            );
        }
        if !(self.tv_floor >= 0.0) {
            return bad(
                "tv_floor",
                format!("must be non-negative, got {}", self.tv_floor),
            );
        }
        Ok(())
    }
}

/// Scale-free total variation `TV(k) / mean(k)`.
fn normalised_tv(k: &[f64]) -> f64 {
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    periodic_total_variation(k) / mean
}

/// Evolves initial support `h` and normal velocity `f` (so `W(·,0) = −f`)
/// until a [`StopReason`] fires.
///
/// Stop rules, checked after every accepted step:
/// * a non-finite value or `TV(k)/mean k` above `tv_factor` times its initial
///   value (floored by `tv_floor`) → `ShockSuspected`;
/// * `min S < ε_collapse` → `Collapsed`, with `tau_stop` interpolated to the crossing;
/// * convexity loss in any RK stage, or `max k · L/L₀ > k_max` → `CurvatureBlowup`.
///   The length factor removes the growth a uniformly shrinking curve has anyway,
///   so a collapsing circle reports `Collapsed` instead;
/// * τ-hyperbolicity failing → `HyperbolicityLost`;
/// * `τ = horizon` → `HorizonReached`.
pub fn evolve(
    grid: AngularGrid,
    h: &[f64],
    f: &[f64],
    forcing: &ForcingSchedule,
    opts: &EvolveOptions,
) -> Result<FlowTrajectory> {
    opts.validate()?;
    let w0: Vec<f64> = f.iter().map(|v| -v).collect();
    let mut state = SupportState::new(grid, h.to_vec(), w0, 0.0)?;
    if !state.all_finite() {
        return Err(FlowError::InvalidInput(
            "initial data contains non-finite values".into(),
        ));
    }
    let k0 = curvature_from_support(&state)?;
    if state.min_s() <= 0.0 {
        return Err(FlowError::InvalidInput(format!(
            "origin must be interior to the initial curve (min h = {})",
            state.min_s()
        )));
    }
    let diag0 = Diagnostics::from_curvature(&state, &k0);
    let length0 = diag0.length;
    // 1 / min radius of curvature is max k₀
    let k_max = opts.k_max_factor * diag0.max_k;
    let eps_collapse = opts.collapse_fraction * state.max_s();
    let tv_limit = opts.tv_factor * normalised_tv(&k0).max(opts.tv_floor);

    let mut snapshots = vec![Snapshot {
        state: state.clone(),
        diagnostics: diag0,
    }];
    let detail_of = |st: &SupportState, k: Option<&[f64]>| StopDetail {
        min_s: st.min_s(),
        max_k: k.map_or(f64::NAN, |k| {
            k.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }),
        tv_k: k.map_or(f64::NAN, periodic_total_variation),
    };

    let mut steps = 0usize;
    let mut next_output = opts.output_interval;
    let stop = loop {
        if state.tau >= opts.horizon {
            let k = curvature_from_support(&state).ok();
            break StopReason {
                tag: StopTag::HorizonReached,
                tau_stop: state.tau,
                detail: detail_of(&state, k.as_deref()),
            };
        }
        if steps >= opts.max_steps {
            return Err(FlowError::IntegrationFailure {
                t: state.tau,
                reason: format!("exceeded {} steps without a stop condition", opts.max_steps),
            });
        }

        let mut dt = cfl_dt(&state, opts.cfl, opts.dt_max)?;
        let mut lands_on_output = false;
        let mut lands_on_horizon = false;
        if state.tau + dt >= opts.horizon {
            dt = opts.horizon - state.tau;
            lands_on_horizon = true;
        }
        if let Some(t_out) = next_output {
            if state.tau + dt >= t_out {
                dt = t_out - state.tau;
                lands_on_output = true;
            }
        }
        if !(dt > 0.0) {
            return Err(FlowError::IntegrationFailure {
                t: state.tau,
                reason: format!("time step collapsed to {dt}"),
            });
        }

        let mut next = match step(&state, dt, forcing) {
            Ok(next) => next,
            Err(FlowError::ConvexityLoss { tau, .. }) => {
                push_final(&mut snapshots, &state);
                break StopReason {
                    tag: StopTag::CurvatureBlowup,
                    tau_stop: tau,
                    detail: detail_of(&state, None),
                };
            }
            Err(e) => return Err(e),
        };
        steps += 1;
        // snap exactly onto scheduled times so that shared sample times compare equal
        if lands_on_output {
            next.tau = next_output.unwrap_or(next.tau);
        }
        if lands_on_horizon && !lands_on_output {
            next.tau = opts.horizon;
        }

        if !next.all_finite() {
            push_final(&mut snapshots, &state);
            break StopReason {
                tag: StopTag::ShockSuspected,
                tau_stop: next.tau,
                detail: detail_of(&next, None),
            };
        }

        let k = match curvature_from_support(&next) {
            Ok(k) => k,
            Err(FlowError::ConvexityLoss { .. }) => {
                push_final(&mut snapshots, &state);
                break StopReason {
                    tag: StopTag::CurvatureBlowup,
                    tau_stop: next.tau,
                    detail: detail_of(&next, None),
                };
            }
            Err(e) => return Err(e),
        };
        let diag = Diagnostics::from_curvature(&next, &k);

        let stop_tag = if diag.min_s < eps_collapse {
            Some(StopTag::Collapsed)
        } else if diag.max_k * diag.length / length0 > k_max {
            Some(StopTag::CurvatureBlowup)
        } else if normalised_tv(&k) > tv_limit {
            Some(StopTag::ShockSuspected)
        } else if !check_tau_hyperbolic(&next, forcing).hyperbolic {
            Some(StopTag::HyperbolicityLost)
        } else {
            None
        };

        if let Some(tag) = stop_tag {
            let tau_stop = if tag == StopTag::Collapsed {
                let (m0, m1) = (state.min_s(), diag.min_s);
                let frac = ((m0 - eps_collapse) / (m0 - m1)).clamp(0.0, 1.0);
                state.tau + frac * (next.tau - state.tau)
            } else {
                next.tau
            };
            let detail = detail_of(&next, Some(&k));
            snapshots.push(Snapshot {
                state: next,
                diagnostics: diag,
            });
            break StopReason {
                tag,
                tau_stop,
                detail,
            };
        }

        let record = match opts.output_interval {
            Some(interval) => {
                if lands_on_output {
                    next_output = Some(next.tau + interval);
                }
                lands_on_output || lands_on_horizon
            }
            None => steps.is_multiple_of(opts.stride) || lands_on_horizon,
        };
        if record {
            snapshots.push(Snapshot {
                state: next.clone(),
                diagnostics: diag,
            });
        }
        state = next;
    };

    Ok(FlowTrajectory {
        snapshots,
        stop,
        forcing: forcing.clone(),
    })
}

fn push_final(snapshots: &mut Vec<Snapshot>, state: &SupportState) {
    if snapshots.last().is_some_and(|s| s.state.tau < state.tau) {
        if let Ok(diagnostics) = Diagnostics::of(state) {
            snapshots.push(Snapshot {
                state: state.clone(),
                diagnostics,
            });
        }
    }
}
