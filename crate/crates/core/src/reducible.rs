//! Product structure of the SPD cone: every point is `φ(b, c) = c·diag(b)·cᵀ`
//! for a positive diagonal `b` and an orthogonal frame `c`.
//!
//! The diagonal factor is itself a flat copy of the positive orthant with the
//! restricted affine-invariant metric; the orthogonal group carries the
//! bi-invariant metric `<cΩ₁, cΩ₂> = Tr(Ω₁ᵀΩ₂)`, whose geodesics are
//! `c·expm(tΩ)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{SpdPoint, SymMatrix};

/// Orthogonality drift beyond which frames are re-orthonormalized.
pub const FRAME_REPAIR_TOL: f64 = 1e-12;
/// Orthogonality defect beyond which a frame is rejected.
pub const FRAME_REJECT_TOL: f64 = 1e-9;

/// Positive diagonal factor. The order of values is meaningful: value `i`
/// pairs with column `i` of the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagPD(DVector<f64>);

impl DiagPD {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("diagonal factor"));
        }
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: bad,
                max_eigenvalue: values.max(),
            });
        }
        Ok(DiagPD(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn ones(n: usize) -> Self {
        DiagPD(DVector::from_element(n, 1.0))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn to_spd(&self) -> SpdPoint {
        SpdPoint::new(SymMatrix::from_diagonal(self.0.as_slice()))
            .expect("positive diagonal is SPD")
    }
}

/// Orthogonal frame `c` with `cᵀc = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoFrame(DMatrix<f64>);

impl OrthoFrame {
    /// Accepts `m` when `‖mᵀm − I‖_F ≤ 1e-9`; drift above 1e-12 is removed by
    /// replacing `m` with its polar factor.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let defect = orthogonality_defect(&m);
        if !(defect <= FRAME_REJECT_TOL) {
            return Err(Error::InvalidParameter(format!(
                "frame is not orthogonal (defect {defect:.3e})"
            )));
        }
        Ok(Self::repaired(m))
    }

    pub fn identity(n: usize) -> Self {
        OrthoFrame(DMatrix::identity(n, n))
    }

    pub(crate) fn repaired(m: DMatrix<f64>) -> Self {
        if orthogonality_defect(&m) > FRAME_REPAIR_TOL {
            OrthoFrame(polar_factor(m))
        } else {
            OrthoFrame(m)
        }
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// `c·expm(φ(E_ij − E_ji))`: rotates columns `i` and `j` of the frame.
    pub fn rotated(&self, i: usize, j: usize, angle: f64) -> OrthoFrame {
        let (s, c) = angle.sin_cos();
        let mut m = self.0.clone();
        let ci = self.0.column(i);
        let cj = self.0.column(j);
        m.set_column(i, &(ci * c - cj * s));
        m.set_column(j, &(ci * s + cj * c));
        OrthoFrame(m)
    }

    pub fn compose(&self, other: &OrthoFrame) -> OrthoFrame {
        OrthoFrame::repaired(&self.0 * &other.0)
    }
}

fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (m.transpose() * m - DMatrix::<f64>::identity(n, n)).norm()
}

fn polar_factor(m: DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    u * vt
}

/// Tangent vector `base·Ω` to the orthogonal group, stored as the skew matrix `Ω`.
#[derive(Clone, Debug)]
pub struct SkewTangent {
    base: OrthoFrame,
    omega: DMatrix<f64>,
}

impl SkewTangent {
    pub(crate) fn from_skew(base: OrthoFrame, omega: DMatrix<f64>) -> Self {
        SkewTangent { base, omega }
    }

    pub fn new(base: OrthoFrame, omega: DMatrix<f64>) -> Result<Self> {
        if omega.nrows() != base.dim() || omega.ncols() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                found: omega.nrows(),
            });
        }
        let sym_part = (&omega + omega.transpose()).norm();
        if sym_part > 1e-12 * omega.norm().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "tangent generator is not skew (symmetric part {sym_part:.3e})"
            )));
        }
        let omega = (&omega - omega.transpose()) * 0.5;
        Ok(SkewTangent { base, omega })
    }

    pub fn zero(base: &OrthoFrame) -> Self {
        let n = base.dim();
        SkewTangent {
            base: base.clone(),
            omega: DMatrix::zeros(n, n),
        }
    }

    pub fn base(&self) -> &OrthoFrame {
        &self.base
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Bi-invariant norm `‖Ω‖_F`.
    pub fn norm(&self) -> f64 {
        self.omega.norm()
    }
}

/// Orthonormal basis `(E_ij − E_ji)/√2`, `i < j`, of the skew matrices.
pub fn skew_basis(n: usize) -> Vec<DMatrix<f64>> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut m = DMatrix::zeros(n, n);
            m[(i, j)] = r;
            m[(j, i)] = -r;
            out.push(m);
        }
    }
    out
}

/// Congruence `T_k(y) = a_k^{-1/2} y a_k^{-1/2}` that sends the anchor `a_k` to `I`.
#[derive(Clone, Debug)]
pub struct Normalizer {
    anchor: SpdPoint,
}

impl Normalizer {
    /// Fails when the anchor is flagged near the boundary of the cone.
    pub fn from_anchor(anchor: &SpdPoint) -> Result<Self> {
        if anchor.is_near_boundary() {
            return Err(Error::numeric(
                "normalizer",
                format!(
                    "anchor is near-singular (condition {:.3e})",
                    anchor.max_eigenvalue() / anchor.min_eigenvalue()
                ),
            ));
        }
        Ok(Normalizer {
            anchor: anchor.clone(),
        })
    }

    pub fn anchor(&self) -> &SpdPoint {
        &self.anchor
    }

    pub fn sqrt(&self) -> &SymMatrix {
        self.anchor.sqrt()
    }

    pub fn inv_sqrt(&self) -> &SymMatrix {
        self.anchor.inv_sqrt()
    }

    pub fn apply(&self, y: &SymMatrix) -> SymMatrix {
        let r = self.inv_sqrt().matrix();
        SymMatrix::symmetrized(r * y.matrix() * r)
    }

    pub fn apply_inv(&self, y: &SymMatrix) -> SymMatrix {
        let r = self.sqrt().matrix();
        SymMatrix::symmetrized(r * y.matrix() * r)
    }

    pub fn apply_point(&self, x: &SpdPoint) -> Result<SpdPoint> {
        SpdPoint::new(self.apply(x.sym()))
    }

    pub fn apply_inv_point(&self, x: &SpdPoint) -> Result<SpdPoint> {
        SpdPoint::new(self.apply_inv(x.sym()))
    }
}

fn check_dims(b: &DiagPD, c: &OrthoFrame) -> Result<()> {
    if b.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

fn frame_product(b: &DiagPD, c: &OrthoFrame) -> DMatrix<f64> {
    let mut scaled = c.0.clone();
    for (j, &v) in b.0.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * c.0.transpose()
}

/// `φ(b, c) = c·diag(b)·cᵀ`.
pub fn phi(b: &DiagPD, c: &OrthoFrame) -> Result<SpdPoint> {
    check_dims(b, c)?;
    SpdPoint::new(SymMatrix::symmetrized(frame_product(b, c)))
        .map_err(|e| Error::numeric("phi", e.to_string()))
}

/// `T_k⁻¹(φ(b, c)) = a_k^{1/2}·c·diag(b)·cᵀ·a_k^{1/2}`.
pub fn reconstruct(nrm: &Normalizer, b: &DiagPD, c: &OrthoFrame) -> Result<SpdPoint> {
    check_dims(b, c)?;
    if b.dim() != nrm.anchor.dim() {
        return Err(Error::DimensionMismatch {
            expected: nrm.anchor.dim(),
            found: b.dim(),
        });
    }
    let r = nrm.sqrt().matrix();
    let m = r * frame_product(b, c) * r;
    SpdPoint::new(SymMatrix::symmetrized(m))
        .map_err(|e| Error::numeric("reconstruct", e.to_string()))
}

/// Spectral factorization `a = c·diag(b)·cᵀ` with descending values and the
/// sign rule of [`crate::spd::EigenPair`].
pub fn decompose(a: &SpdPoint) -> (DiagPD, OrthoFrame) {
    let eig = a.eigen();
    (
        DiagPD(eig.values.clone()),
        OrthoFrame::repaired(eig.frame.clone()),
    )
}

/// Geodesic of the diagonal factor: component-wise `b_i·exp(t·v_i/b_i)`.
pub fn diag_geodesic(b0: &DiagPD, v: &DVector<f64>, t: f64) -> Result<DiagPD> {
    if v.len() != b0.dim() {
        return Err(Error::DimensionMismatch {
            expected: b0.dim(),
            found: v.len(),
        });
    }
    let out = b0.0.zip_map(v, |b, vi| b * (t * vi / b).exp());
    DiagPD::new(out).map_err(|e| Error::numeric("diag_geodesic", e.to_string()))
}

/// `sqrt(Σ ln²(b2_i / b1_i))`.
pub fn diag_distance(b1: &DiagPD, b2: &DiagPD) -> f64 {
    b1.0.iter()
        .zip(b2.0.iter())
        .map(|(x, y)| (y / x).ln().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Log map of the diagonal factor: component-wise `b1_i·ln(b2_i / b1_i)`.
pub fn diag_log_map(b1: &DiagPD, b2: &DiagPD) -> DVector<f64> {
    b1.0.zip_map(&b2.0, |x, y| x * (y / x).ln())
}

/// `‖v‖²_b = Σ (v_i / b_i)²`.
pub fn diag_norm_sq(b: &DiagPD, v: &DVector<f64>) -> f64 {
    b.0.iter()
        .zip(v.iter())
        .map(|(bi, vi)| (vi / bi).powi(2))
        .sum()
}

/// `<u, v>_b = Σ u_i v_i / b_i²`.
pub fn diag_inner(b: &DiagPD, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    b.0.iter()
        .zip(u.iter().zip(v.iter()))
        .map(|(bi, (ui, vi))| ui * vi / (bi * bi))
        .sum()
}

/// `c·expm(t·Ω)`. Stays in the connected component of `c`.
pub fn orth_geodesic(c: &OrthoFrame, s: &SkewTangent, t: f64) -> Result<OrthoFrame> {
    if s.base != *c {
        return Err(Error::BaseMismatch);
    }
    let step = (&s.omega * t).exp();
    if step.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            "orth_geodesic",
            "non-finite matrix exponential",
        ));
    }
    Ok(OrthoFrame::repaired(&c.0 * step))
}

/// Projection of a Euclidean gradient `g` onto the tangent space at `c`:
/// `Ω = (cᵀg − gᵀc)/2`.
pub fn orth_riem_grad(c: &OrthoFrame, g: &DMatrix<f64>) -> Result<SkewTangent> {
    if g.nrows() != c.dim() || g.ncols() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: g.nrows(),
        });
    }
    let ctg = c.0.transpose() * g;
    let omega = (&ctg - ctg.transpose()) * 0.5;
    Ok(SkewTangent {
        base: c.clone(),
        omega,
    })
}
