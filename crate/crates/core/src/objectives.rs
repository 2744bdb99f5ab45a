//! Geodesically convex objectives on the SPD cone and the composed inner
//! objectives of the proximal iteration.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::reducible::{reconstruct, DiagPD, Normalizer, OrthoFrame};
use crate::spd::{distance, euclid_to_riem_grad, log_map, SpdPoint, SymMatrix, TangentVec};

/// Distance below which a median term is treated as sitting on its data point.
pub const MEDIAN_SKIP_DIST: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    Differentiable,
    NonsmoothAtDataPoints,
    General,
}

/// A convex function on the SPD cone. Existence of a minimizer and continuity
/// up to the boundary are the caller's responsibility.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &SpdPoint) -> Result<f64>;

    /// Riemannian (sub)gradient at `x`, when the objective provides one.
    fn subgradient(&self, _x: &SpdPoint) -> Result<Option<TangentVec>> {
        Ok(None)
    }

    fn smoothness(&self) -> Smoothness;
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct WeightedPoints {
    dim: usize,
    points: Vec<SpdPoint>,
    weights: Vec<f64>,
}

impl WeightedPoints {
    fn new(points: Vec<SpdPoint>, weights: Vec<f64>) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("data points"))?;
        let dim = first.dim();
        for p in &points {
            check_dim(dim, p.dim())?;
        }
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weights must be positive and finite, got {w}"
            )));
        }
        Ok(WeightedPoints {
            dim,
            points,
            weights,
        })
    }

    fn terms<'a>(&'a self) -> impl Iterator<Item = (&'a SpdPoint, f64)> + 'a {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// `½ Σ ω_i d²(x, x_i)`, the weighted Karcher mean objective.
#[derive(Clone, Debug)]
pub struct Karcher(WeightedPoints);

impl Karcher {
    pub fn new(points: Vec<SpdPoint>, weights: Vec<f64>) -> Result<Self> {
        Ok(Karcher(WeightedPoints::new(points, weights)?))
    }

    pub fn uniform(points: Vec<SpdPoint>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    pub fn points(&self) -> &[SpdPoint] {
        &self.0.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    /// `−Σ ω_i log_x(x_i)`.
    pub fn gradient(&self, x: &SpdPoint) -> Result<TangentVec> {
        check_dim(self.0.dim, x.dim())?;
        let mut acc = SymMatrix::zeros(x.dim());
        for (p, w) in self.0.terms() {
            acc = acc.sub(&log_map(x, p)?.vec().scale(w));
        }
        TangentVec::new(x.clone(), acc)
    }
}

impl Objective for Karcher {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn value(&self, x: &SpdPoint) -> Result<f64> {
        check_dim(self.0.dim, x.dim())?;
        let mut acc = 0.0;
        for (p, w) in self.0.terms() {
            // whitening by the data point reuses its cached square root
            acc += w * distance(p, x)?.powi(2);
        }
        Ok(0.5 * acc)
    }

    fn subgradient(&self, x: &SpdPoint) -> Result<Option<TangentVec>> {
        self.gradient(x).map(Some)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Differentiable
    }
}

/// `Σ ω_i d(x, x_i)`, the weighted geodesic median objective.
#[derive(Clone, Debug)]
pub struct Median(WeightedPoints);

impl Median {
    pub fn new(points: Vec<SpdPoint>, weights: Vec<f64>) -> Result<Self> {
        Ok(Median(WeightedPoints::new(points, weights)?))
    }

    pub fn uniform(points: Vec<SpdPoint>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    pub fn points(&self) -> &[SpdPoint] {
        &self.0.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }
}

impl Objective for Median {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn value(&self, x: &SpdPoint) -> Result<f64> {
        check_dim(self.0.dim, x.dim())?;
        let mut acc = 0.0;
        for (p, w) in self.0.terms() {
            acc += w * distance(p, x)?;
        }
        Ok(acc)
    }

    /// `−Σ ω_i log_x(x_i) / d(x, x_i)`, dropping terms with `d < 1e-12`.
    fn subgradient(&self, x: &SpdPoint) -> Result<Option<TangentVec>> {
        check_dim(self.0.dim, x.dim())?;
        let mut acc = SymMatrix::zeros(x.dim());
        for (p, w) in self.0.terms() {
            let l = log_map(x, p)?;
            let d = l.norm();
            if d < MEDIAN_SKIP_DIST {
                continue;
            }
            acc = acc.sub(&l.vec().scale(w / d));
        }
        TangentVec::new(x.clone(), acc).map(Some)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::NonsmoothAtDataPoints
    }
}

/// `f(x) = Tr(x)`.
#[derive(Clone, Copy, Debug)]
pub struct Trace {
    dim: usize,
}

impl Trace {
    pub fn new(dim: usize) -> Self {
        Trace { dim }
    }

    /// `x·I·x = x²`.
    pub fn gradient(&self, x: &SpdPoint) -> Result<TangentVec> {
        euclid_to_riem_grad(x, &SymMatrix::identity(self.dim))
    }
}

impl Objective for Trace {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &SpdPoint) -> Result<f64> {
        check_dim(self.dim, x.dim())?;
        Ok(x.sym().trace())
    }

    fn subgradient(&self, x: &SpdPoint) -> Result<Option<TangentVec>> {
        self.gradient(x).map(Some)
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::Differentiable
    }
}

/// `ρ_k(b, c) = Σ ln² b_i`; the frame drops out.
pub fn rho_k(b: &DiagPD) -> f64 {
    b.values().iter().map(|v| v.ln().powi(2)).sum()
}

/// Riemannian gradient of `ρ_k` in `b`, component-wise `2 b_i ln b_i`.
pub fn grad_rho_b(b: &DiagPD) -> DVector<f64> {
    b.values().map(|v| 2.0 * v * v.ln())
}

/// `a ↦ f(a) + (β/2) d²(a, a_k)`.
pub struct ProxObjective<'a> {
    inner: &'a dyn Objective,
    anchor: SpdPoint,
    beta: f64,
    normalizer: Normalizer,
}

impl<'a> ProxObjective<'a> {
    pub fn new(inner: &'a dyn Objective, anchor: &SpdPoint, beta: f64) -> Result<Self> {
        check_dim(inner.dim(), anchor.dim())?;
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be nonnegative and finite, got {beta}"
            )));
        }
        Ok(ProxObjective {
            inner,
            anchor: anchor.clone(),
            beta,
            normalizer: Normalizer::from_anchor(anchor)?,
        })
    }

    pub fn inner(&self) -> &'a dyn Objective {
        self.inner
    }

    pub fn anchor(&self) -> &SpdPoint {
        &self.anchor
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn value(&self, a: &SpdPoint) -> Result<f64> {
        let f = self.inner.value(a)?;
        if self.beta == 0.0 {
            return Ok(f);
        }
        Ok(f + 0.5 * self.beta * distance(&self.anchor, a)?.powi(2))
    }

    /// `grad f(a) − β log_a(a_k)`, when `f` supplies a gradient.
    pub fn gradient(&self, a: &SpdPoint) -> Result<Option<TangentVec>> {
        let Some(g) = self.inner.subgradient(a)? else {
            return Ok(None);
        };
        let pull = log_map(a, &self.anchor)?.scale(self.beta);
        g.sub(&pull).map(Some)
    }

    /// `φ_k(b, c) = f(T_k⁻¹(φ(b, c)))`.
    pub fn phi_k(&self, b: &DiagPD, c: &OrthoFrame) -> Result<f64> {
        self.inner.value(&reconstruct(&self.normalizer, b, c)?)
    }

    /// `φ_k(b, c) + (β/2) ρ_k(b)`, the objective minimized by both inner steps.
    pub fn split_value(&self, b: &DiagPD, c: &OrthoFrame) -> Result<f64> {
        Ok(self.phi_k(b, c)? + 0.5 * self.beta * rho_k(b))
    }
}
