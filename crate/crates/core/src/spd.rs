//! Geometry of the cone of symmetric positive definite matrices under the
//! affine-invariant metric `<u, v>_x = Tr(x⁻¹ u x⁻¹ v)`.
//!
//! Matrix functions go through the symmetric eigendecomposition
//! `x = w·diag(λ)·wᵀ`, so `h(x) = w·diag(h(λ))·wᵀ`. Points cache their
//! eigendecomposition and square roots; every value is immutable after
//! construction and can be shared across threads.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry above which a constructor refuses its input.
pub const ASYMMETRY_TOL: f64 = 1e-8;

/// Conditioning (λ_min / λ_max) below which a point is flagged near the boundary.
pub const NEAR_BOUNDARY_RATIO: f64 = 1e3 * f64::EPSILON;

const EIGEN_MAX_ITERS: usize = 10_000;

/// A real symmetric matrix. Constructors symmetrize their input.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`. Fails if `m` is not square, has
    /// non-finite entries, or its relative asymmetry exceeds [`ASYMMETRY_TOL`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let norm = m.norm();
        if norm > 0.0 {
            let asymmetry = (&m - m.transpose()).norm() / norm;
            if asymmetry > ASYMMETRY_TOL {
                return Err(Error::Asymmetric { asymmetry });
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Row-major entries of an `n×n` matrix.
    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    /// Symmetrizes without the asymmetry check. Used for products that are
    /// symmetric in exact arithmetic.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix(&self.0 * factor)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    /// `Tr(self · other)`, the Frobenius inner product for symmetric matrices.
    pub fn frobenius_dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn eigen(&self) -> Result<EigenPair> {
        EigenPair::of(&self.0)
    }

    /// Orthonormal basis of the symmetric matrices under the Frobenius inner
    /// product: `E_ii` for the diagonal, `(E_ij + E_ji)/√2` off the diagonal,
    /// ordered row by row over the upper triangle.
    pub fn basis(n: usize) -> Vec<SymMatrix> {
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in i..n {
                let mut m = DMatrix::zeros(n, n);
                if i == j {
                    m[(i, i)] = 1.0;
                } else {
                    m[(i, j)] = r;
                    m[(j, i)] = r;
                }
                out.push(SymMatrix(m));
            }
        }
        out
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Each column of the frame has its largest-magnitude entry made positive so
/// that decompositions are reproducible.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub frame: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenPair {
    fn of(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITERS).ok_or_else(
            || {
                Error::numeric(
                    "eigendecomposition",
                    format!(
                        "no convergence for {n}x{n} matrix (frobenius norm {:.3e}, max |entry| {:.3e})",
                        m.norm(),
                        m.amax()
                    ),
                )
            },
        )?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut frame = DMatrix::zeros(n, n);
        let mut values = DVector::zeros(n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).clone_owned();
            let lead = col.iamax();
            if col[lead] < 0.0 {
                col.neg_mut();
            }
            frame.set_column(dst, &col);
            values[dst] = eig.eigenvalues[src];
        }
        Ok(EigenPair { frame, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `w · diag(h(λ)) · wᵀ`.
    pub fn map(&self, h: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.frame.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let hv = h(v);
            scaled.column_mut(j).scale_mut(hv);
        }
        scaled * self.frame.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|v| v)
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// `h(x) = w·h(λ)·wᵀ` for a scalar function `h` defined on the spectrum of `x`.
pub fn sym_fn(x: &SymMatrix, h: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    let eig = x.eigen()?;
    apply_fn(&eig, h, "sym_fn")
}

fn apply_fn(eig: &EigenPair, h: impl Fn(f64) -> f64, op: &'static str) -> Result<SymMatrix> {
    let m = eig.map(h);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(
            op,
            format!(
                "non-finite result (spectrum range [{:.3e}, {:.3e}])",
                eig.min(),
                eig.max()
            ),
        ));
    }
    Ok(SymMatrix::symmetrized(m))
}

/// Floor used when taking logs or inverse powers of numerically SPD matrices.
fn spectral_floor(eig: &EigenPair) -> f64 {
    eig.dim() as f64 * f64::EPSILON * eig.max().abs()
}

struct SpdInner {
    mat: SymMatrix,
    eig: EigenPair,
    sqrt: OnceLock<SymMatrix>,
    inv_sqrt: OnceLock<SymMatrix>,
}

/// A point of the SPD cone. Cheap to clone; caches its eigendecomposition and
/// matrix square roots.
#[derive(Clone)]
pub struct SpdPoint(Arc<SpdInner>);

impl std::fmt::Debug for SpdPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("SpdPoint").field(&self.0.mat.0).finish()
    }
}

/// Entrywise equality of the stored matrices.
impl PartialEq for SpdPoint {
    fn eq(&self, other: &Self) -> bool {
        self.matrix() == other.matrix()
    }
}

impl SpdPoint {
    /// Accepts `mat` if its smallest eigenvalue exceeds `n·ε·λ_max`.
    pub fn new(mat: SymMatrix) -> Result<Self> {
        let eig = mat.eigen()?;
        let n = mat.dim();
        if n == 0 {
            return Err(Error::Empty("matrix of dimension 0"));
        }
        let (lo, hi) = (eig.min(), eig.max());
        if !(hi > 0.0) || lo <= n as f64 * f64::EPSILON * hi {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: lo,
                max_eigenvalue: hi,
            });
        }
        Ok(SpdPoint(Arc::new(SpdInner {
            mat,
            eig,
            sqrt: OnceLock::new(),
            inv_sqrt: OnceLock::new(),
        })))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_row_slice(n, entries)?)
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(values))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(SymMatrix::identity(n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.0.mat.dim()
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.0.mat
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0.mat.0
    }

    pub fn eigen(&self) -> &EigenPair {
        &self.0.eig
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.eig.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.0.eig.max()
    }

    /// True when `λ_min / λ_max` falls below [`NEAR_BOUNDARY_RATIO`]. Policy on
    /// such points is left to callers.
    pub fn is_near_boundary(&self) -> bool {
        self.min_eigenvalue() < NEAR_BOUNDARY_RATIO * self.max_eigenvalue()
    }

    pub fn sqrt(&self) -> &SymMatrix {
        self.0
            .sqrt
            .get_or_init(|| SymMatrix::symmetrized(self.0.eig.map(f64::sqrt)))
    }

    pub fn inv_sqrt(&self) -> &SymMatrix {
        self.0
            .inv_sqrt
            .get_or_init(|| SymMatrix::symmetrized(self.0.eig.map(|v| 1.0 / v.sqrt())))
    }

    pub fn inverse(&self) -> SymMatrix {
        SymMatrix::symmetrized(self.0.eig.map(|v| 1.0 / v))
    }

    /// Same point up to a relative Frobenius tolerance of 1e-12.
    pub fn same_point(&self, other: &SpdPoint) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.dim() != other.dim() {
            return false;
        }
        let diff = (self.matrix() - other.matrix()).norm();
        diff <= 1e-12 * self.matrix().norm().max(other.matrix().norm())
    }

    /// `x^{-1/2} · y · x^{-1/2}`.
    fn whiten(&self, y: &DMatrix<f64>) -> SymMatrix {
        let r = self.inv_sqrt().matrix();
        SymMatrix::symmetrized(r * y * r)
    }

    /// `x^{1/2} · y · x^{1/2}`.
    fn unwhiten(&self, y: &DMatrix<f64>) -> SymMatrix {
        let r = self.sqrt().matrix();
        SymMatrix::symmetrized(r * y * r)
    }
}

/// A symmetric matrix attached to a base point of the cone.
#[derive(Clone, Debug)]
pub struct TangentVec {
    base: SpdPoint,
    vec: SymMatrix,
}

impl TangentVec {
    pub fn new(base: SpdPoint, vec: SymMatrix) -> Result<Self> {
        check_dim(base.dim(), vec.dim())?;
        Ok(TangentVec { base, vec })
    }

    pub fn zero(base: &SpdPoint) -> Self {
        TangentVec {
            vec: SymMatrix::zeros(base.dim()),
            base: base.clone(),
        }
    }

    pub fn base(&self) -> &SpdPoint {
        &self.base
    }

    pub fn vec(&self) -> &SymMatrix {
        &self.vec
    }

    pub fn scale(&self, factor: f64) -> TangentVec {
        TangentVec {
            base: self.base.clone(),
            vec: self.vec.scale(factor),
        }
    }

    pub fn add(&self, other: &TangentVec) -> Result<TangentVec> {
        check_base(&self.base, other)?;
        Ok(TangentVec {
            base: self.base.clone(),
            vec: self.vec.add(&other.vec),
        })
    }

    pub fn sub(&self, other: &TangentVec) -> Result<TangentVec> {
        check_base(&self.base, other)?;
        Ok(TangentVec {
            base: self.base.clone(),
            vec: self.vec.sub(&other.vec),
        })
    }

    /// Riemannian norm at the base point.
    pub fn norm(&self) -> f64 {
        self.base.whiten(self.vec.matrix()).frobenius_norm()
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_base(base: &SpdPoint, v: &TangentVec) -> Result<()> {
    if !base.same_point(&v.base) {
        return Err(Error::BaseMismatch);
    }
    Ok(())
}

/// `<u, v>_a = Tr(a⁻¹ u a⁻¹ v)`.
pub fn metric_inner(a: &SpdPoint, u: &TangentVec, v: &TangentVec) -> Result<f64> {
    check_base(a, u)?;
    check_base(a, v)?;
    let wu = a.whiten(u.vec.matrix());
    let wv = a.whiten(v.vec.matrix());
    Ok(wu.frobenius_dot(&wv))
}

/// `γ(t) = x^{1/2} exp(t·x^{-1/2} s x^{-1/2}) x^{1/2}`.
pub fn geodesic(x: &SpdPoint, s: &TangentVec, t: f64) -> Result<SpdPoint> {
    check_base(x, s)?;
    let ws = x.whiten(s.vec.matrix()).scale(t);
    let e = apply_fn(&ws.eigen()?, f64::exp, "geodesic")?;
    SpdPoint::new(x.unwhiten(e.matrix())).map_err(|e| Error::numeric("geodesic", e.to_string()))
}

/// Minimal geodesic `x^{1/2} (x^{-1/2} y x^{-1/2})^t x^{1/2}`, `t ∈ [0, 1]`.
pub fn geodesic_segment(x: &SpdPoint, y: &SpdPoint, t: f64) -> Result<SpdPoint> {
    check_dim(x.dim(), y.dim())?;
    let w = x.whiten(y.matrix()).eigen()?;
    let floor = spectral_floor(&w);
    let p = apply_fn(&w, |v| v.max(floor).powf(t), "geodesic_segment")?;
    SpdPoint::new(x.unwhiten(p.matrix()))
        .map_err(|e| Error::numeric("geodesic_segment", e.to_string()))
}

/// `d(x, y) = sqrt(Σ ln² λ_i(x^{-1/2} y x^{-1/2}))`.
pub fn distance(x: &SpdPoint, y: &SpdPoint) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    if Arc::ptr_eq(&x.0, &y.0) {
        return Ok(0.0);
    }
    let w = x.whiten(y.matrix()).eigen()?;
    let floor = spectral_floor(&w);
    Ok(w.values
        .iter()
        .map(|&v| v.max(floor).ln().powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Velocity at `x` of the minimal geodesic to `y`:
/// `x^{1/2} log(x^{-1/2} y x^{-1/2}) x^{1/2}`.
pub fn log_map(x: &SpdPoint, y: &SpdPoint) -> Result<TangentVec> {
    check_dim(x.dim(), y.dim())?;
    let w = x.whiten(y.matrix()).eigen()?;
    let floor = spectral_floor(&w);
    let l = apply_fn(&w, |v| v.max(floor).ln(), "log_map")?;
    Ok(TangentVec {
        base: x.clone(),
        vec: x.unwhiten(l.matrix()),
    })
}

pub fn exp_map(x: &SpdPoint, s: &TangentVec) -> Result<SpdPoint> {
    geodesic(x, s, 1.0)
}

/// `T_p(y) = p^{1/2} y p^{1/2}`. Maps the cone onto itself isometrically.
pub fn congruence(p: &SpdPoint, y: &SymMatrix) -> Result<SymMatrix> {
    check_dim(p.dim(), y.dim())?;
    Ok(p.unwhiten(y.matrix()))
}

/// [`congruence`] applied to a point.
pub fn congruence_point(p: &SpdPoint, x: &SpdPoint) -> Result<SpdPoint> {
    SpdPoint::new(congruence(p, x.sym())?)
}

/// Pushforward of a tangent vector through [`congruence`]: the base moves to
/// `T_p(base)` and the vector to `T_p(vec)`.
pub fn push_tangent(p: &SpdPoint, u: &TangentVec) -> Result<TangentVec> {
    let base = congruence_point(p, &u.base)?;
    let vec = congruence(p, &u.vec)?;
    Ok(TangentVec { base, vec })
}

/// Riemannian gradient `x·s·x` from a Euclidean gradient `s`.
pub fn euclid_to_riem_grad(x: &SpdPoint, s: &SymMatrix) -> Result<TangentVec> {
    check_dim(x.dim(), s.dim())?;
    let m = x.matrix();
    Ok(TangentVec {
        base: x.clone(),
        vec: SymMatrix::symmetrized(m * s.matrix() * m),
    })
}

/// `σ(x, y) = Tr(x yᵀ)`, the characteristic form of the cone.
pub fn characteristic_form(x: &SymMatrix, y: &SymMatrix) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    Ok(x.matrix().dot(y.matrix()))
}
