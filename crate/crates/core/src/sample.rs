//! Random symmetric, SPD and orthogonal matrices for tests, benches and the
//! synthetic field generator.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::reducible::OrthoFrame;
use crate::spd::{sym_fn, SpdPoint, SymMatrix};

/// Symmetric matrix with i.i.d. `N(0, scale²)` entries on and above the diagonal.
pub fn random_sym<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(StandardNormal);
            m[(i, j)] = scale * v;
            m[(j, i)] = scale * v;
        }
    }
    SymMatrix::symmetrized(m)
}

/// `exp(S)` for a random symmetric `S` with entry scale `spread`, so the
/// log-spectrum has magnitude of order `spread`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, spread: f64) -> SpdPoint {
    let s = random_sym(rng, n, spread);
    let e = sym_fn(&s, f64::exp).expect("exp of a moderate symmetric matrix");
    SpdPoint::new(e).expect("matrix exponential is SPD")
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R, n: usize) -> OrthoFrame {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    OrthoFrame::new(q).expect("QR factor is orthogonal")
}

/// Random symmetric direction with unit Frobenius norm.
pub fn random_unit_sym<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SymMatrix {
    let s = random_sym(rng, n, 1.0);
    let norm = s.frobenius_norm();
    s.scale(1.0 / norm)
}
