//! Exact and inexact proximal point iterations on the SPD cone.
//!
//! Each outer step minimizes `f(a) + (β_k/2) d²(a, a_k)` by moving to
//! normalized coordinates around `a_k` and alternating two block steps on the
//! factors of `a = T_k⁻¹(c·diag(b)·cᵀ)`: a spectral step in `b` and a frame
//! step in `c`.

use crate::engine::{
    fd_neg_gradient, minimize, ArmijoParams, DiagSpace, OrthoSpace, SearchSpace, SpdSpace,
    StopReason,
};
use crate::error::{Error, Result};
use crate::objectives::{Objective, ProxObjective, Smoothness};
use crate::reducible::{diag_distance, reconstruct, DiagPD, OrthoFrame};
use crate::spd::{distance, SpdPoint};

/// `b` moves below this diagonal distance count as no change.
pub const B_FIXED_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxConfig {
    pub beta0: f64,
    /// `β_{k+1} = θ1·β_k`.
    pub theta1: f64,
    /// `ε_{k+1} = θ2·ε_k`.
    pub theta2: f64,
    pub eps0: f64,
    pub mu: f64,
    pub inner: ArmijoParams,
    pub outer_tol: f64,
    pub residual_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for ProxConfig {
    fn default() -> Self {
        ProxConfig {
            beta0: 1.0,
            theta1: 1.0,
            theta2: 0.5,
            eps0: 0.0,
            mu: 0.5,
            inner: ArmijoParams::default(),
            outer_tol: 1e-7,
            residual_tol: 1e-6,
            max_outer: 100,
            max_inner: 60,
        }
    }
}

impl ProxConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return bad(format!("beta0 must be positive, got {}", self.beta0));
        }
        if !(self.theta1 > 0.0 && self.theta1 <= 1.0) {
            return bad(format!("theta1 must lie in (0, 1], got {}", self.theta1));
        }
        if !(self.theta2 > 0.0 && self.theta2 < 1.0) {
            return bad(format!("theta2 must lie in (0, 1), got {}", self.theta2));
        }
        if !(self.eps0 >= 0.0 && self.eps0.is_finite()) {
            return bad(format!("eps0 must be nonnegative, got {}", self.eps0));
        }
        if self.eps0 > 0.0 && self.theta2 / self.theta1 >= 1.0 {
            return bad(format!(
                "theta2/theta1 must be below 1 when eps0 > 0, got {}",
                self.theta2 / self.theta1
            ));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu must lie in (0, 1), got {}", self.mu));
        }
        if !(self.outer_tol > 0.0) {
            return bad(format!(
                "outer tolerance must be positive, got {}",
                self.outer_tol
            ));
        }
        if !(self.residual_tol > 0.0) {
            return bad(format!(
                "residual tolerance must be positive, got {}",
                self.residual_tol
            ));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration limits must be positive".to_string());
        }
        self.inner.validate()
    }

    pub fn beta_at(&self, k: usize) -> f64 {
        self.beta0 * self.theta1.powi(k as i32)
    }

    pub fn eps_at(&self, k: usize) -> f64 {
        self.eps0 * self.theta2.powi(k as i32)
    }
}

/// Inner iterate: `u = T_k⁻¹(φ(b, c))`.
#[derive(Clone, Debug)]
pub struct InnerState {
    pub b: DiagPD,
    pub c: OrthoFrame,
    pub u: SpdPoint,
    pub j: usize,
}

#[derive(Clone, Debug)]
pub struct BlockStep<P> {
    pub point: P,
    pub value_before: f64,
    pub value_after: f64,
    /// The engine made no step.
    pub fixed: bool,
    pub stop: StopReason,
}

/// `b_{j+1} ≈ argmin_b φ_k(b, c_j) + (β_k/2) ρ_k(b)`.
pub fn b_step(
    p: &ProxObjective<'_>,
    state: &InnerState,
    params: &ArmijoParams,
) -> Result<BlockStep<DiagPD>> {
    let c = &state.c;
    let h = |b: &DiagPD| p.split_value(b, c).unwrap_or(f64::NAN);
    let r = minimize(&h, &state.b, &DiagSpace, params)?;
    Ok(BlockStep {
        fixed: r.accepted_steps == 0,
        point: r.point,
        value_before: r.initial_value,
        value_after: r.value,
        stop: r.stop,
    })
}

/// `c_{j+1}` by descent on `c ↦ φ_k(b_{j+1}, c)`; the `ρ_k` term is constant
/// in `c` and kept only so both steps report the same objective.
pub fn c_step(
    p: &ProxObjective<'_>,
    b: &DiagPD,
    c: &OrthoFrame,
    params: &ArmijoParams,
) -> Result<BlockStep<OrthoFrame>> {
    let h = |c: &OrthoFrame| p.split_value(b, c).unwrap_or(f64::NAN);
    let r = minimize(&h, c, &OrthoSpace::new(c.dim()), params)?;
    Ok(BlockStep {
        fixed: r.accepted_steps == 0,
        point: r.point,
        value_before: r.initial_value,
        value_after: r.value,
        stop: r.stop,
    })
}

/// One alternating sweep `(b_j, c_j) → (b_{j+1}, c_{j+1})`.
#[derive(Clone, Debug)]
pub struct InnerRecord {
    pub j: usize,
    pub tau: f64,
    pub value_start: f64,
    pub value_after_b: f64,
    pub value_end: f64,
    /// `d(b_j, b_{j+1})`.
    pub b_gap: f64,
    /// `d(u_j, ũ_{j+1})` with `ũ_{j+1} = T_k⁻¹(φ(b_{j+1}, c_j))`.
    pub u_gap: f64,
    pub b_fixed: bool,
    pub c_fixed: bool,
    pub b_stop: StopReason,
    /// Residual of the optimality condition at `u_{j+1}`, when a subgradient exists.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ProxStep {
    pub point: SpdPoint,
    pub sweeps: Vec<InnerRecord>,
    /// `(b_j, c_j, u_j)` for `j = 0..=sweeps`.
    pub states: Vec<InnerState>,
    pub residual: Option<f64>,
    /// The stopping surrogate never held within `max_inner` sweeps.
    pub warning: bool,
}

impl ProxStep {
    pub fn inner_iters(&self) -> usize {
        self.sweeps.len()
    }
}

/// `‖β·log_u(a_k) − grad f(u)‖_u`, when `f` supplies a (sub)gradient.
pub fn prox_residual(p: &ProxObjective<'_>, u: &SpdPoint) -> Result<Option<f64>> {
    Ok(p.gradient(u)?.map(|g| g.norm()))
}

/// Stopping test for the inner loop.
///
/// Differentiable `f`: the residual is at most `residual_tol + sqrt(2βε)`.
/// Otherwise: the last sweep left `b` and `c` in place and moved the
/// regularized objective by at most `ε`.
///
/// In both cases the loop also stops on a stall, when both block steps were
/// fixed points or the sweep changed the objective by less than `tau_min`.
/// Near `b = 1` the frame block only sees the off-diagonal gradient scaled by
/// `b_i − b_j`, so this happens before the residual tolerance once steps get
/// short; the next outer step restarts from a fresh frame.
pub fn stopping_surrogate(
    smoothness: Smoothness,
    sweep: &InnerRecord,
    beta: f64,
    eps: f64,
    residual_tol: f64,
    tau_min: f64,
) -> bool {
    let change = (sweep.value_start - sweep.value_end).abs();
    let stalled = (sweep.b_fixed && sweep.c_fixed) || change < tau_min;
    if smoothness == Smoothness::Differentiable {
        if let Some(r) = sweep.residual {
            return stalled || r <= residual_tol + (2.0 * beta * eps).sqrt();
        }
    }
    stalled || (sweep.b_gap <= B_FIXED_TOL && sweep.c_fixed && change <= eps)
}

/// Frame for the inner start. Any frame decomposes `T_k(a_k) = I`; the
/// eigenframe of the whitened descent direction at `a_k` is chosen because at
/// `b = 1` the frame step is flat and cannot rotate off a wrong choice.
fn initial_frame(p: &ProxObjective<'_>, delta: f64) -> Result<OrthoFrame> {
    let a = p.anchor();
    let whitened = match p.inner().subgradient(a)? {
        Some(g) => p.normalizer().apply(g.vec()),
        None => {
            let f = p.inner();
            let h = |x: &SpdPoint| f.value(x).unwrap_or(f64::NAN);
            let space = SpdSpace::new(a.dim());
            let s = fd_neg_gradient(&h, a, f.value(a)?, &space, delta)?;
            let e = space.direction(a, &s)?;
            p.normalizer().apply(e.vec())
        }
    };
    if whitened.frobenius_norm() == 0.0 {
        return Ok(OrthoFrame::identity(a.dim()));
    }
    Ok(OrthoFrame::repaired(whitened.eigen()?.frame))
}

/// Approximate `argmin_a f(a) + (β/2) d²(a, a_k)`, starting the inner loop at
/// `u_0 = a_k`, i.e. `b = 1`.
pub fn prox_step(
    f: &dyn Objective,
    a_k: &SpdPoint,
    beta: f64,
    eps: f64,
    config: &ProxConfig,
) -> Result<ProxStep> {
    let p = ProxObjective::new(f, a_k, beta)?;
    let n = a_k.dim();
    let mut state = InnerState {
        b: DiagPD::ones(n),
        c: initial_frame(&p, config.inner.delta)?,
        u: a_k.clone(),
        j: 0,
    };
    let mut sweeps = Vec::new();
    let mut states = vec![state.clone()];
    let mut done = false;
    for j in 0..config.max_inner {
        let tau = config.inner.tau_at(j);
        let params = config.inner.with_tau(tau);
        let bs = b_step(&p, &state, &params)?;
        let u_tilde = reconstruct(p.normalizer(), &bs.point, &state.c)?;
        let cs = c_step(&p, &bs.point, &state.c, &params)?;
        let u = reconstruct(p.normalizer(), &bs.point, &cs.point)?;
        let residual = prox_residual(&p, &u)?;
        let record = InnerRecord {
            j,
            tau,
            value_start: bs.value_before,
            value_after_b: bs.value_after,
            value_end: cs.value_after,
            b_gap: diag_distance(&state.b, &bs.point),
            u_gap: distance(&state.u, &u_tilde)?,
            b_fixed: bs.fixed,
            c_fixed: cs.fixed,
            b_stop: bs.stop,
            residual,
        };
        state = InnerState {
            b: bs.point,
            c: cs.point,
            u,
            j: j + 1,
        };
        states.push(state.clone());
        let stop = stopping_surrogate(
            f.smoothness(),
            &record,
            beta,
            eps,
            config.residual_tol,
            config.inner.tau_min,
        );
        sweeps.push(record);
        if stop {
            done = true;
            break;
        }
    }
    let residual = sweeps.last().and_then(|s| s.residual);
    Ok(ProxStep {
        point: state.u,
        sweeps,
        states,
        residual,
        warning: !done,
    })
}

/// `ε_k/β_k ≤ (μ_k/2)·d²(a_{k+1}, a_k)`.
pub fn inexact_condition(step_dist: f64, beta: f64, eps: f64, mu: f64) -> bool {
    eps / beta <= 0.5 * mu * step_dist * step_dist
}

/// `⌈(ln(2ε0(1−μ)) − ln(β0·μ·ε)) / ln ω⌉`, clamped below at 0.
pub fn iteration_lower_bound(eps0: f64, beta0: f64, mu: f64, omega: u32, eps: f64) -> Result<u64> {
    if omega <= 1 {
        return Err(Error::InvalidParameter(format!(
            "omega must exceed 1, got {omega}"
        )));
    }
    for (name, v) in [("eps0", eps0), ("beta0", beta0), ("eps", eps)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mu must lie in (0, 1), got {mu}"
        )));
    }
    let x = ((2.0 * eps0 * (1.0 - mu)).ln() - (beta0 * mu * eps).ln()) / f64::from(omega).ln();
    Ok(if x <= 0.0 { 0 } else { x.ceil() as u64 })
}

/// One outer iteration as it appears in the trace.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterRecord {
    pub k: usize,
    pub beta: f64,
    pub eps: f64,
    /// `f(a_{k+1})`.
    pub f_next: f64,
    /// `d(a_{k+1}, a_k)`.
    pub step_dist: f64,
    pub inner_iters: usize,
    pub residual: Option<f64>,
    /// `(μ/2)·d² − ε/β`; nonnegative iff the inexact condition holds.
    pub inexact_slack: f64,
    pub inexact_ok: bool,
    pub warning: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProxTrace {
    pub f_initial: f64,
    pub records: Vec<OuterRecord>,
}

impl ProxTrace {
    pub fn total_inner(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }

    pub fn any_warning(&self) -> bool {
        self.records.iter().any(|r| r.warning)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub point: SpdPoint,
    /// `a_0, a_1, …` in order.
    pub iterates: Vec<SpdPoint>,
    pub trace: ProxTrace,
    /// Stopped by the outer tolerance rather than `max_outer`.
    pub converged: bool,
}

fn gradient_norm(f: &dyn Objective, x: &SpdPoint) -> Result<Option<f64>> {
    if f.smoothness() != Smoothness::Differentiable {
        return Ok(None);
    }
    Ok(f.subgradient(x)?.map(|g| g.norm()))
}

/// Inexact proximal point method with `β_k = θ1^k β0` and `ε_k = θ2^k ε0`.
///
/// Stops when `β_k·d(a_{k+1}, a_k) ≤ outer_tol` (nonsmooth `f`, or steps
/// with `sqrt(2β_k ε_k) ≤ residual_tol`) or, for differentiable `f`, when
/// `‖grad f(a_k)‖ ≤ outer_tol`.
pub fn ipp_solve(f: &dyn Objective, a0: &SpdPoint, config: &ProxConfig) -> Result<Solution> {
    config.validate()?;
    if f.dim() != a0.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: a0.dim(),
        });
    }
    let mut trace = ProxTrace {
        f_initial: f.value(a0)?,
        records: Vec::new(),
    };
    let mut iterates = vec![a0.clone()];
    let mut a = a0.clone();
    let small_grad = |x: &SpdPoint| -> Result<bool> {
        Ok(gradient_norm(f, x)?.is_some_and(|g| g <= config.outer_tol))
    };
    if small_grad(&a)? {
        return Ok(Solution {
            point: a,
            iterates,
            trace,
            converged: true,
        });
    }
    let mut converged = false;
    for k in 0..config.max_outer {
        let beta = config.beta_at(k);
        let eps = config.eps_at(k);
        let step = prox_step(f, &a, beta, eps, config)?;
        let d = distance(&a, &step.point)?;
        let slack = 0.5 * config.mu * d * d - eps / beta;
        trace.records.push(OuterRecord {
            k,
            beta,
            eps,
            f_next: f.value(&step.point)?,
            step_dist: d,
            inner_iters: step.inner_iters(),
            residual: step.residual,
            inexact_slack: slack,
            inexact_ok: inexact_condition(d, beta, eps, config.mu),
            warning: step.warning,
        });
        a = step.point;
        iterates.push(a.clone());
        // once the ε slack is below the residual tolerance the inner test is
        // the exact-step test, so short steps certify as they do with ε = 0
        let proxy_applies = f.smoothness() != Smoothness::Differentiable
            || (2.0 * beta * eps).sqrt() <= config.residual_tol;
        if (proxy_applies && beta * d <= config.outer_tol) || small_grad(&a)? {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        point: a,
        iterates,
        trace,
        converged,
    })
}

/// Exact proximal point method: [`ipp_solve`] with `ε_k = 0` and `β_{k+1} = θ·β_k`.
pub fn epp_solve(f: &dyn Objective, a0: &SpdPoint, config: &ProxConfig) -> Result<Solution> {
    ipp_solve(
        f,
        a0,
        &ProxConfig {
            eps0: 0.0,
            ..*config
        },
    )
}
