//! Derivative-free descent with a geodesic Armijo line search.
//!
//! Each iteration estimates `−∇h` by forward differences along canonical
//! probe curves, turns the partials into a tangent direction with the inverse
//! metric, and walks the geodesic with a forward/backtracking step rule.
//! The scheme is generic over [`SearchSpace`], implemented for the diagonal
//! factor, the orthogonal group and the full SPD cone.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::reducible::{
    diag_geodesic, diag_norm_sq, orth_geodesic, skew_basis, DiagPD, OrthoFrame, SkewTangent,
};
use crate::spd::{geodesic, SpdPoint, SymMatrix, TangentVec};

/// Steps below this are treated as no progress.
pub const MIN_STEP: f64 = 1e-18;
/// Forward growth stops at `υ^MAX_GROWTH_POW`.
pub const MAX_GROWTH_POW: i32 = 64;
/// Number of `δ/10` retries when a probe leaves the domain.
pub const PROBE_RETRIES: usize = 3;

pub trait SearchSpace {
    type Point: Clone;
    type Tangent: Clone;

    fn geodesic(&self, x: &Self::Point, d: &Self::Tangent, t: f64) -> Result<Self::Point>;

    /// `‖d‖²_x`.
    fn norm_sq(&self, x: &Self::Point, d: &Self::Tangent) -> f64;

    fn probe_count(&self, x: &Self::Point) -> usize;

    /// Point reached by moving `delta` along probe direction `i`, or `None`
    /// when that leaves the domain.
    fn probe(&self, x: &Self::Point, i: usize, delta: f64) -> Option<Self::Point>;

    /// Tangent direction from partials `s_i` along the probe directions.
    fn direction(&self, x: &Self::Point, partials: &[f64]) -> Result<Self::Tangent>;
}

/// The positive orthant of diagonal matrices, probed along coordinates.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiagSpace;

impl SearchSpace for DiagSpace {
    type Point = DiagPD;
    type Tangent = DVector<f64>;

    fn geodesic(&self, x: &DiagPD, d: &DVector<f64>, t: f64) -> Result<DiagPD> {
        diag_geodesic(x, d, t)
    }

    fn norm_sq(&self, x: &DiagPD, d: &DVector<f64>) -> f64 {
        diag_norm_sq(x, d)
    }

    fn probe_count(&self, x: &DiagPD) -> usize {
        x.dim()
    }

    fn probe(&self, x: &DiagPD, i: usize, delta: f64) -> Option<DiagPD> {
        let mut v = x.values().clone();
        v[i] += delta;
        DiagPD::new(v).ok()
    }

    fn direction(&self, x: &DiagPD, partials: &[f64]) -> Result<DVector<f64>> {
        Ok(x.values()
            .zip_map(&DVector::from_column_slice(partials), |b, s| b * b * s))
    }
}

/// The orthogonal group with the bi-invariant metric, probed along the
/// geodesics `c·expm(δE)` of the orthonormal skew basis.
#[derive(Clone, Debug)]
pub struct OrthoSpace {
    pairs: Vec<(usize, usize)>,
    basis: Vec<DMatrix<f64>>,
}

impl OrthoSpace {
    pub fn new(n: usize) -> Self {
        let pairs = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        OrthoSpace {
            pairs,
            basis: skew_basis(n),
        }
    }
}

impl SearchSpace for OrthoSpace {
    type Point = OrthoFrame;
    type Tangent = SkewTangent;

    fn geodesic(&self, x: &OrthoFrame, d: &SkewTangent, t: f64) -> Result<OrthoFrame> {
        orth_geodesic(x, d, t)
    }

    fn norm_sq(&self, _x: &OrthoFrame, d: &SkewTangent) -> f64 {
        d.norm().powi(2)
    }

    fn probe_count(&self, _x: &OrthoFrame) -> usize {
        self.pairs.len()
    }

    fn probe(&self, x: &OrthoFrame, i: usize, delta: f64) -> Option<OrthoFrame> {
        let (a, b) = self.pairs[i];
        Some(x.rotated(a, b, delta * std::f64::consts::FRAC_1_SQRT_2))
    }

    fn direction(&self, x: &OrthoFrame, partials: &[f64]) -> Result<SkewTangent> {
        let n = x.dim();
        let mut omega = DMatrix::zeros(n, n);
        for (e, &s) in self.basis.iter().zip(partials) {
            omega += e * s;
        }
        Ok(SkewTangent::from_skew(x.clone(), omega))
    }
}

/// The SPD cone itself, probed additively along the symmetric basis.
#[derive(Clone, Debug)]
pub struct SpdSpace {
    basis: Vec<SymMatrix>,
}

impl SpdSpace {
    pub fn new(n: usize) -> Self {
        SpdSpace {
            basis: SymMatrix::basis(n),
        }
    }
}

impl SearchSpace for SpdSpace {
    type Point = SpdPoint;
    type Tangent = TangentVec;

    fn geodesic(&self, x: &SpdPoint, d: &TangentVec, t: f64) -> Result<SpdPoint> {
        geodesic(x, d, t)
    }

    fn norm_sq(&self, _x: &SpdPoint, d: &TangentVec) -> f64 {
        d.norm().powi(2)
    }

    fn probe_count(&self, _x: &SpdPoint) -> usize {
        self.basis.len()
    }

    fn probe(&self, x: &SpdPoint, i: usize, delta: f64) -> Option<SpdPoint> {
        SpdPoint::new(x.sym().add(&self.basis[i].scale(delta))).ok()
    }

    fn direction(&self, x: &SpdPoint, partials: &[f64]) -> Result<TangentVec> {
        let mut s = SymMatrix::zeros(x.dim());
        for (b, &p) in self.basis.iter().zip(partials) {
            s = s.add(&b.scale(p));
        }
        crate::spd::euclid_to_riem_grad(x, &s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmijoParams {
    pub delta: f64,
    pub eta: f64,
    pub upsilon: f64,
    /// Stop tolerance of the first sweep.
    pub tau: f64,
    /// Shrink factor applied to `tau` per sweep.
    pub kappa: f64,
    /// Floor of the shrinking tolerance.
    pub tau_min: f64,
    pub max_iters: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            delta: 1e-7,
            eta: 0.2,
            upsilon: 2.0,
            tau: 1e-6,
            kappa: 0.5,
            tau_min: 1e-12,
            max_iters: 500,
        }
    }
}

impl ArmijoParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.upsilon > 1.0 && self.upsilon.is_finite()) {
            return bad("upsilon must exceed 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa must lie in (0, 1]");
        }
        if !(self.tau_min > 0.0) {
            return bad("tau_min must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        Ok(())
    }

    /// `max(τ·κ^j, τ_min)`, never above `τ`.
    pub fn tau_at(&self, sweep: usize) -> f64 {
        let j = i32::try_from(sweep).unwrap_or(i32::MAX);
        (self.tau * self.kappa.powi(j)).max(self.tau_min.min(self.tau))
    }

    pub fn with_tau(self, tau: f64) -> Self {
        ArmijoParams { tau, ..self }
    }
}

/// Forward-difference estimate of `−∇h` along the probe directions:
/// `s_i = (h(x) − h(probe_i(δ)))/δ`. A probe that leaves the domain or gives
/// a non-finite value is retried with `δ/10`, up to three times.
pub fn fd_neg_gradient<S: SearchSpace>(
    h: &dyn Fn(&S::Point) -> f64,
    x: &S::Point,
    hx: f64,
    space: &S,
    delta: f64,
) -> Result<Vec<f64>> {
    (0..space.probe_count(x))
        .map(|i| {
            let mut d = delta;
            for _ in 0..=PROBE_RETRIES {
                if let Some(p) = space.probe(x, i, d) {
                    let hp = h(&p);
                    if hp.is_finite() {
                        return Ok((hx - hp) / d);
                    }
                }
                d /= 10.0;
            }
            Err(Error::numeric(
                "fd_neg_gradient",
                format!("probe {i} leaves the domain down to step {:.1e}", d * 10.0),
            ))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub enum LineSearch<P> {
    Accepted { t: f64, point: P, value: f64 },
    NoProgress,
}

/// Geodesic Armijo rule: accept `t` once
/// `h(ξ(x, d, t)) < h(x) − t·η·‖d‖²_x`. A feasible unit step is grown by `υ`
/// while the test keeps holding (capped at `υ^64`); otherwise the step is
/// shrunk by `υ` until feasible or below `1e-18`.
pub fn armijo_search<S: SearchSpace>(
    h: &dyn Fn(&S::Point) -> f64,
    x: &S::Point,
    hx: f64,
    d: &S::Tangent,
    space: &S,
    params: &ArmijoParams,
) -> LineSearch<S::Point> {
    let nd = space.norm_sq(x, d);
    if !(nd > 0.0 && nd.is_finite()) {
        return LineSearch::NoProgress;
    }
    let eval = |t: f64| -> Option<(S::Point, f64)> {
        let p = space.geodesic(x, d, t).ok()?;
        let v = h(&p);
        v.is_finite().then_some((p, v))
    };
    let ok = |t: f64, v: f64| v < hx - t * params.eta * nd;

    let mut t = 1.0;
    match eval(t) {
        Some((p, v)) if ok(t, v) => {
            let cap = params.upsilon.powi(MAX_GROWTH_POW);
            let mut best = (p, v);
            while t * params.upsilon <= cap {
                match eval(t * params.upsilon) {
                    Some((p, v)) if ok(t * params.upsilon, v) => {
                        t *= params.upsilon;
                        best = (p, v);
                    }
                    _ => break,
                }
            }
            LineSearch::Accepted {
                t,
                point: best.0,
                value: best.1,
            }
        }
        _ => loop {
            t /= params.upsilon;
            if t < MIN_STEP {
                return LineSearch::NoProgress;
            }
            if let Some((p, v)) = eval(t) {
                if ok(t, v) {
                    return LineSearch::Accepted {
                        t,
                        point: p,
                        value: v,
                    };
                }
            }
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// `|Δh| < τ` on an accepted step.
    Converged,
    /// The line search found no admissible step.
    NoProgress,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct MinimizeReport<P> {
    pub point: P,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub stop: StopReason,
}

/// Runs descent steps from `x0` until `|Δh| < τ`, no admissible step exists,
/// or `max_iters` is hit. The value sequence is nonincreasing by construction.
pub fn minimize<S: SearchSpace>(
    h: &dyn Fn(&S::Point) -> f64,
    x0: &S::Point,
    space: &S,
    params: &ArmijoParams,
) -> Result<MinimizeReport<S::Point>> {
    params.validate()?;
    let h0 = h(x0);
    if !h0.is_finite() {
        return Err(Error::numeric(
            "minimize",
            "objective is not finite at the start point",
        ));
    }
    let mut x = x0.clone();
    let mut hx = h0;
    let mut accepted = 0;
    for iter in 1..=params.max_iters {
        let s = fd_neg_gradient(h, &x, hx, space, params.delta)?;
        let d = space.direction(&x, &s)?;
        match armijo_search(h, &x, hx, &d, space, params) {
            LineSearch::NoProgress => {
                return Ok(MinimizeReport {
                    point: x,
                    value: hx,
                    initial_value: h0,
                    iterations: iter,
                    accepted_steps: accepted,
                    stop: StopReason::NoProgress,
                });
            }
            LineSearch::Accepted { t, point, value } => {
                debug_assert!(value < hx - t * params.eta * space.norm_sq(&x, &d));
                let dh = hx - value;
                x = point;
                hx = value;
                accepted += 1;
                if dh < params.tau {
                    return Ok(MinimizeReport {
                        point: x,
                        value: hx,
                        initial_value: h0,
                        iterations: iter,
                        accepted_steps: accepted,
                        stop: StopReason::Converged,
                    });
                }
            }
        }
    }
    Ok(MinimizeReport {
        point: x,
        value: hx,
        initial_value: h0,
        iterations: params.max_iters,
        accepted_steps: accepted,
        stop: StopReason::MaxIters,
    })
}
