//! Round-sphere solutions of the forced hyperbolic flow `X_tt = H n⃗ + c₁(t) X`
//! and term-by-term checks of its evolution identities on them.
//!
//! For `X = r(t) · e(x)` with `e` the unit `n`-sphere embedding and `n⃗ = −e`
//! the inward normal, every symmetric 2-tensor is a scalar multiple of the
//! round metric `ĝ`. Tensors are therefore carried as their `ĝ`-coefficient:
//!
//! | tensor               | coefficient |
//! |----------------------|-------------|
//! | `g_ij`               | `r²`        |
//! | `h_ij`               | `r`         |
//! | `∂_t g_ij`           | `2 r r_t`   |
//! | `∂_t h_ij`           | `r_t`       |
//! | `(∂_t∂_i X, ∂_t∂_j X)` | `r_t²`    |
//! | `g^ij`               | `1/r²` (times `ĝ^ij`) |
//!
//! A closed contraction of `m` covariant coefficients with `m` inverse-metric
//! coefficients is `n · Π coefficients`; see [`loop_trace`]. The covector
//! `(n⃗, ∂_t∂_i X)` and `∂_t Γ^k_ij` vanish identically on this family, as do
//! all spatial derivatives of `H` and `|A|²`.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::forcing::ForcingSchedule;
use crate::radial::{
    integrate_radial, radial_rhs, rk4_step, RadialOptions, RadialProblem, RadialTrajectory,
};

/// A family of concentric round `n`-spheres of radius `r(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereFamily {
    pub dim: usize,
    pub problem: RadialProblem,
    pub radial: RadialTrajectory,
}

/// Radius, velocity and acceleration of a sphere together with `c₁` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereKinematics {
    pub dim: usize,
    pub r: f64,
    pub r_t: f64,
    pub r_tt: f64,
    pub c1: f64,
}

/// `ĝ`-coefficients of the geometric quantities of a round sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereTensors {
    pub dim: usize,
    pub g: f64,
    pub g_inv: f64,
    pub h: f64,
    pub mean_curvature: f64,
    pub norm_sq_a: f64,
    pub dg_dt: f64,
    pub dh_dt: f64,
    /// `(∂²X/∂t∂x^i, ∂²X/∂t∂x^j)`.
    pub mixed: f64,
    /// Magnitude of the covector `(n⃗, ∂²X/∂t∂x^i)`.
    pub normal_mixed: f64,
    pub dgamma_dt: f64,
    pub dn_dt: f64,
    pub dn_dtt: f64,
    /// `∇H` and `∇∇H`.
    pub grad_h: f64,
}

impl SphereTensors {
    pub fn at(k: &SphereKinematics) -> Self {
        let n = k.dim as f64;
        let r = k.r;
        Self {
            dim: k.dim,
            g: r * r,
            g_inv: 1.0 / (r * r),
            h: r,
            mean_curvature: n / r,
            norm_sq_a: n / (r * r),
            dg_dt: 2.0 * r * k.r_t,
            dh_dt: k.r_t,
            mixed: k.r_t * k.r_t,
            normal_mixed: 0.0,
            dgamma_dt: 0.0,
            dn_dt: 0.0,
            dn_dtt: 0.0,
            grad_h: 0.0,
        }
    }
}

/// Closed index loop over `ĝ`-proportional tensors: `tr(ĝ⁻¹ĝ ⋯) · Π c = n Π c`.
pub fn loop_trace(dim: usize, coefficients: &[f64]) -> f64 {
    dim as f64 * coefficients.iter().product::<f64>()
}

impl SphereFamily {
    /// `(r, r_t)` from the trajectory at `t`, `r_tt` from the ODE right side.
    pub fn kinematics(&self, t: f64) -> Result<SphereKinematics> {
        let s = self.radial.state_at(t, &self.problem)?;
        Ok(SphereKinematics {
            dim: self.dim,
            r: s.r,
            r_t: s.r_t,
            r_tt: radial_rhs(s.r, t, &self.problem)?,
            c1: self.problem.forcing.eval(t),
        })
    }

    pub fn collapse_time(&self) -> Option<f64> {
        self.radial.collapse_time
    }
}

/// Round `n`-spheres: delegates to the radial integrator with `c₀ = n`.
pub fn sphere_flow(
    dim: usize,
    r0: f64,
    r1: f64,
    c1: ForcingSchedule,
    opts: &RadialOptions,
) -> Result<SphereFamily> {
    if dim == 0 {
        return Err(FlowError::InvalidInput(
            "sphere dimension must be at least 1".into(),
        ));
    }
    if !c1.is_non_positive() {
        return Err(FlowError::InvalidInput(
            "sphere forcing c1 must be non-positive".into(),
        ));
    }
    let problem = RadialProblem::new(dim as f64, c1, r0, r1)?;
    let radial = integrate_radial(&problem, opts)?;
    Ok(SphereFamily {
        dim,
        problem,
        radial,
    })
}

/// Axial component `c₁ ρ` of the flow equation on a cylinder ansatz; it has
/// to vanish for the cylinder to be a solution.
pub fn cylinder_residual(rho: f64, c1_value: f64) -> f64 {
    c1_value * rho
}

/// Both sides of an identity as `ĝ`-coefficients (or scalars), with every
/// right-hand term recorded by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub terms: Vec<(String, f64)>,
}

impl IdentityResidual {
    fn from_terms(lhs: f64, terms: Vec<(&str, f64)>) -> Self {
        let rhs = terms.iter().map(|(_, v)| v).sum::<f64>();
        Self {
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
            terms: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// `∂²g_ij/∂t² = −2H h_ij + 2c₁ g_ij + 2(∂²X/∂t∂x^i, ∂²X/∂t∂x^j)`.
pub fn metric_evolution(k: &SphereKinematics) -> IdentityResidual {
    let t = SphereTensors::at(k);
    let lhs = 2.0 * (k.r * k.r_tt + k.r_t * k.r_t);
    IdentityResidual::from_terms(
        lhs,
        vec![
            ("-2 H h", -2.0 * t.mean_curvature * t.h),
            ("2 c1 g", 2.0 * k.c1 * t.g),
            ("2 (X_ti, X_tj)", 2.0 * t.mixed),
        ],
    )
}

/// Evolution of the inward unit normal. On spheres `n⃗` is time independent
/// and every right-hand term carries a vanishing factor, so the reported
/// residual is the largest term magnitude.
pub fn normal_evolution(k: &SphereKinematics) -> IdentityResidual {
    let t = SphereTensors::at(k);
    // bracket 2g^{kl}(X_j, X_tl)X_k + g^{kl}(X_l, X_tj)X_k − X_tj, as a multiple of ∂_j e
    let bracket = 3.0 * k.r_t - k.r_t;
    let terms = vec![
        ("-g^ij dH/dx^i dX/dx^j", -t.g_inv * t.grad_h * k.r),
        ("g^ij (n, X_ti) [..]", t.g_inv * t.normal_mixed * bracket),
    ];
    let mut out = IdentityResidual::from_terms(t.dn_dtt, terms);
    out.residual = out
        .terms
        .iter()
        .map(|(_, v)| v.abs())
        .fold(out.lhs.abs(), f64::max);
    out
}

/// `Δh_ij = ∇_i∇_j H + H h_il g^lm h_mj − |A|² h_ij`.
pub fn laplacian_second_form(k: &SphereKinematics) -> f64 {
    let t = SphereTensors::at(k);
    t.grad_h + t.mean_curvature * t.h * t.g_inv * t.h - t.norm_sq_a * t.h
}

/// `∂²h_ij/∂t² = Δh_ij − 2H h_il h_mj g^lm + |A|² h_ij
///   + g^kl h_ij (n⃗, X_tk)(n⃗, X_tl) − 2 ∂_tΓ^k_ij (n⃗, X_tk) + c₁ h_ij`.
pub fn second_form_evolution(k: &SphereKinematics) -> IdentityResidual {
    let t = SphereTensors::at(k);
    IdentityResidual::from_terms(
        k.r_tt,
        vec![
            ("Delta h", laplacian_second_form(k)),
            (
                "-2 H h g^-1 h",
                -2.0 * t.mean_curvature * t.h * t.g_inv * t.h,
            ),
            ("|A|^2 h", t.norm_sq_a * t.h),
            (
                "g^kl h (n,X_tk)(n,X_tl)",
                t.g_inv * t.h * t.normal_mixed * t.normal_mixed,
            ),
            ("-2 dGamma/dt (n,X_tk)", -2.0 * t.dgamma_dt * t.normal_mixed),
            ("c1 h", k.c1 * t.h),
        ],
    )
}

/// Which reading of the `|A|²` identity's `−4 g g g h h (·,·)` term to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormSqContraction {
    /// `(∂²X/∂t∂x^m, ∂²X/∂t∂x^n)`, the full inner product produced by
    /// differentiating the inverse metric twice.
    FullInnerProduct,
    /// `(n⃗, ∂²X/∂t∂x^m)(n⃗, ∂²X/∂t∂x^n)`, the normal projection as printed.
    NormalProjection,
}

/// `∂²H/∂t²` identity. The third term is contracted with `h_ij`, the only
/// placement that closes its free indices `i, j`.
pub fn mean_curvature_evolution(k: &SphereKinematics) -> IdentityResidual {
    let t = SphereTensors::at(k);
    let n = k.dim;
    let nf = n as f64;
    // H = n/r
    let lhs = nf * (2.0 * k.r_t * k.r_t / k.r.powi(3) - k.r_tt / (k.r * k.r));
    let p = t.g_inv;
    IdentityResidual::from_terms(
        lhs,
        vec![
            ("Delta H", 0.0 * t.grad_h),
            ("H |A|^2", t.mean_curvature * t.norm_sq_a),
            (
                "-2 g^ik g^jl h_ij (X_tk, X_tl)",
                -2.0 * loop_trace(n, &[p, t.h, p, t.mixed]),
            ),
            (
                "H g^kl (n,X_tk)(n,X_tl)",
                t.mean_curvature * p * t.normal_mixed * t.normal_mixed,
            ),
            (
                "-2 g^ij dGamma/dt (n,X_tk)",
                -2.0 * t.dgamma_dt * t.normal_mixed,
            ),
            (
                "2 g^ik g^jp g^lq h_ij dg_pq dg_kl",
                2.0 * loop_trace(n, &[p, t.h, p, t.dg_dt, p, t.dg_dt]),
            ),
            (
                "-2 g^ik g^jl dg_kl dh_ij",
                -2.0 * loop_trace(n, &[p, t.dg_dt, p, t.dh_dt]),
            ),
            ("-c1 H", -k.c1 * t.mean_curvature),
        ],
    )
}

/// `∂²|A|²/∂t²` identity with `|A|⁴ = (|A|²)²`.
pub fn norm_sq_evolution(k: &SphereKinematics, contraction: NormSqContraction) -> IdentityResidual {
    let t = SphereTensors::at(k);
    let n = k.dim;
    let nf = n as f64;
    let r = k.r;
    // |A|² = n/r²
    let lhs = nf * (6.0 * k.r_t * k.r_t / r.powi(4) - 2.0 * k.r_tt / r.powi(3));
    let p = t.g_inv;
    let velocity_pair = match contraction {
        NormSqContraction::FullInnerProduct => t.mixed,
        NormSqContraction::NormalProjection => t.normal_mixed * t.normal_mixed,
    };
    IdentityResidual::from_terms(
        lhs,
        vec![
            ("Delta |A|^2", 0.0 * t.grad_h),
            ("-2 |grad A|^2", 0.0 * t.grad_h),
            ("2 |A|^4", 2.0 * t.norm_sq_a * t.norm_sq_a),
            (
                "2 |A|^2 g^pq (n,X_tp)(n,X_tq)",
                2.0 * t.norm_sq_a * p * t.normal_mixed * t.normal_mixed,
            ),
            (
                "2 g^ij g^kl dh_ik dh_jl",
                2.0 * loop_trace(n, &[p, t.dh_dt, p, t.dh_dt]),
            ),
            (
                "-8 g^im g^jn g^kl h_jl dg_mn dh_ik",
                -8.0 * loop_trace(n, &[p, t.h, p, t.dg_dt, p, t.dh_dt]),
            ),
            (
                "-4 g^im g^jn g^kl h_ik h_jl (.,.)_mn",
                -4.0 * loop_trace(n, &[p, t.h, p, t.h, p, velocity_pair]),
            ),
            (
                "2 g^im dg_pq dg_mn h_ik h_jl (2 g^jp g^nq g^kl + g^jn g^kp g^lq)",
                2.0 * (2.0 * loop_trace(n, &[p, t.dg_dt, p, t.dg_dt, p, t.h, p, t.h])
                    + loop_trace(n, &[p, t.dg_dt, p, t.h, p, t.dg_dt, p, t.h])),
            ),
            (
                "-4 g^ij g^kl h_jl dGamma/dt (n,X_tp)",
                -4.0 * t.dgamma_dt * t.normal_mixed,
            ),
            ("-2 c1 |A|^2", -2.0 * k.c1 * t.norm_sq_a),
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarEvolutionReport {
    pub mean_curvature: IdentityResidual,
    pub norm_sq: IdentityResidual,
    /// The same identity with the printed normal-projection reading of one term.
    pub norm_sq_normal_projection: IdentityResidual,
}

pub fn scalar_evolutions(k: &SphereKinematics) -> ScalarEvolutionReport {
    ScalarEvolutionReport {
        mean_curvature: mean_curvature_evolution(k),
        norm_sq: norm_sq_evolution(k, NormSqContraction::FullInnerProduct),
        norm_sq_normal_projection: norm_sq_evolution(k, NormSqContraction::NormalProjection),
    }
}

pub fn verify_metric_evolution(family: &SphereFamily, t: f64) -> Result<IdentityResidual> {
    Ok(metric_evolution(&family.kinematics(t)?))
}

pub fn verify_normal_evolution(family: &SphereFamily, t: f64) -> Result<IdentityResidual> {
    Ok(normal_evolution(&family.kinematics(t)?))
}

pub fn verify_second_form_evolution(family: &SphereFamily, t: f64) -> Result<IdentityResidual> {
    Ok(second_form_evolution(&family.kinematics(t)?))
}

pub fn verify_scalar_evolutions(family: &SphereFamily, t: f64) -> Result<ScalarEvolutionReport> {
    Ok(scalar_evolutions(&family.kinematics(t)?))
}

/// Independent check of the metric identity: `∂²(r²)/∂t²` by a centred
/// difference of `r²` sampled at `t − δ, t, t + δ` along the solution through
/// the trajectory state at `t`, against the right side at that state.
pub fn metric_evolution_fd_residual(family: &SphereFamily, t: f64, interval: f64) -> Result<f64> {
    if !(interval > 0.0) {
        return Err(FlowError::InvalidInput(format!(
            "sampling interval must be positive, got {interval}"
        )));
    }
    if t - interval < family.radial.t_start() {
        return Err(FlowError::Domain(format!(
            "t − interval = {} precedes the trajectory start",
            t - interval
        )));
    }
    let centre = family.radial.state_at(t, &family.problem)?;
    let p = &family.problem;
    // 32 RK4 substeps per interval put the sampling error far below δ²
    let substeps = 32;
    let h = interval / substeps as f64;
    let advance = |sign: f64| {
        let (mut r, mut v, mut tt) = (centre.r, centre.r_t, t);
        for _ in 0..substeps {
            (r, v) = rk4_step(p, r, v, tt, sign * h);
            tt += sign * h;
        }
        r
    };
    let (r_minus, r_plus) = (advance(-1.0), advance(1.0));
    if !(r_minus > 0.0 && r_plus > 0.0) {
        return Err(FlowError::Domain(format!(
            "sampling window around t = {t} crosses the collapse"
        )));
    }
    let fd_lhs =
        (r_plus * r_plus - 2.0 * centre.r * centre.r + r_minus * r_minus) / (interval * interval);
    let k = SphereKinematics {
        dim: family.dim,
        r: centre.r,
        r_t: centre.r_t,
        r_tt: f64::NAN,
        c1: p.forcing.eval(t),
    };
    let rhs = metric_evolution(&k).rhs;
    Ok((fd_lhs - rhs).abs())
}
