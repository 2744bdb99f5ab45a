//! Reference solutions for testing the proximal solver. Nothing here goes
//! through the factorized inner loop or the derivative-free engine.

use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::spd::{
    distance, exp_map, geodesic, geodesic_segment, log_map, metric_inner, sym_fn, SpdPoint,
    SymMatrix, TangentVec,
};

/// Relative commutator norm accepted by [`commuting_mean`].
pub const COMMUTE_TOL: f64 = 1e-10;
/// Gradient norms below this are compared in absolute terms.
pub const ABS_GRAD_FLOOR: f64 = 1e-8;

const MAX_DESCENT_ITERS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub point: SpdPoint,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// `argmin_a f(a) + (β/2) d²(a, a_k)` by geodesic gradient descent with the
/// analytic gradient `grad f(a) − β log_a(a_k)` and backtracking.
pub fn direct_prox(f: &dyn Objective, a_k: &SpdPoint, beta: f64, tol: f64) -> Result<OracleResult> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    let value =
        |x: &SpdPoint| -> Result<f64> { Ok(f.value(x)? + 0.5 * beta * distance(a_k, x)?.powi(2)) };
    let grad = |x: &SpdPoint| -> Result<TangentVec> {
        let g = f.subgradient(x)?.ok_or_else(|| {
            Error::InvalidParameter("direct prox needs an objective with a gradient".to_string())
        })?;
        g.sub(&log_map(x, a_k)?.scale(beta))
    };
    let mut x = a_k.clone();
    let mut fx = value(&x)?;
    let mut t = 1.0;
    for iter in 0..MAX_DESCENT_ITERS {
        let g = grad(&x)?;
        let gn = g.norm();
        if gn <= tol {
            return Ok(OracleResult {
                point: x,
                objective: fx,
                grad_norm: gn,
                iterations: iter,
            });
        }
        let dir = g.scale(-1.0);
        t *= 2.0;
        loop {
            if t < 1e-20 {
                return Err(Error::NoConvergence(format!(
                    "direct prox line search collapsed at gradient norm {gn:.3e}"
                )));
            }
            if let Ok(y) = exp_map(&x, &dir.scale(t)) {
                let fy = value(&y)?;
                // once the required decrease drops below rounding of f the
                // value test is a coin flip, so judge by the gradient instead
                let noise = 64.0 * f64::EPSILON * fx.abs().max(1.0);
                let wanted = 0.5 * t * gn * gn;
                let accept = if wanted > noise {
                    fy <= fx - wanted
                } else {
                    fy <= fx + noise && grad(&y)?.norm() < gn
                };
                if accept {
                    x = y;
                    fx = fy;
                    break;
                }
            }
            t *= 0.5;
        }
    }
    Err(Error::NoConvergence(format!(
        "direct prox did not reach gradient norm {tol:.1e} in {MAX_DESCENT_ITERS} iterations"
    )))
}

/// Geodesic midpoint, the equal-weight Karcher mean of two points.
pub fn two_point_mean(x1: &SpdPoint, x2: &SpdPoint) -> Result<SpdPoint> {
    geodesic_segment(x1, x2, 0.5)
}

/// `exp(Σ ω_i ln x_i / Σ ω_i)` for pairwise commuting points.
pub fn commuting_mean(points: &[SpdPoint], weights: &[f64]) -> Result<SpdPoint> {
    let first = points.first().ok_or(Error::Empty("data points"))?;
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(Error::InvalidParameter(
            "weights must be nonnegative with positive sum".to_string(),
        ));
    }
    for (i, x) in points.iter().enumerate() {
        if x.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: x.dim(),
            });
        }
        for y in &points[i + 1..] {
            let (a, b) = (x.matrix(), y.matrix());
            let rel = (a * b - b * a).norm() / (a.norm() * b.norm());
            if rel > COMMUTE_TOL {
                return Err(Error::NonCommuting { commutator: rel });
            }
        }
    }
    let mut acc = SymMatrix::zeros(first.dim());
    for (x, &w) in points.iter().zip(weights) {
        acc = acc.add(&sym_fn(x.sym(), f64::ln)?.scale(w / total));
    }
    SpdPoint::new(sym_fn(&acc, f64::exp)?)
}

/// Root of `−β ln t = t` in `(0, 1)` by bisection.
pub fn scalar_prox_trace(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let g = |t: f64| -beta * t.ln() - t;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut mid = 0.5;
    for _ in 0..2000 {
        mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v.abs() <= 1e-12 || hi - lo <= f64::EPSILON * hi {
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

fn relative_or_absolute(errors: &[f64], scale: f64) -> f64 {
    let worst = errors.iter().copied().fold(0.0, f64::max);
    if scale < ABS_GRAD_FLOOR {
        worst
    } else {
        worst / scale
    }
}

/// Worst disagreement between central differences of `f` along the
/// symmetric basis (`x ± δB`) and the pairing `<grad, B>_x`, relative to
/// the largest analytic component. Near-zero gradients are compared in
/// absolute terms.
pub fn fd_gradient_check(
    f: &dyn Objective,
    x: &SpdPoint,
    grad: &TangentVec,
    delta: f64,
) -> Result<f64> {
    let mut errors = Vec::new();
    let mut scale: f64 = 0.0;
    for b in SymMatrix::basis(x.dim()) {
        let plus = SpdPoint::new(x.sym().add(&b.scale(delta)))?;
        let minus = SpdPoint::new(x.sym().sub(&b.scale(delta)))?;
        let fd = (f.value(&plus)? - f.value(&minus)?) / (2.0 * delta);
        let an = metric_inner(x, grad, &TangentVec::new(x.clone(), b)?)?;
        scale = scale.max(an.abs());
        errors.push((fd - an).abs());
    }
    Ok(relative_or_absolute(&errors, scale))
}

/// As [`fd_gradient_check`], with central differences along the geodesics
/// leaving `x` in the given directions.
pub fn fd_directional_check(
    f: &dyn Objective,
    x: &SpdPoint,
    grad: &TangentVec,
    directions: &[SymMatrix],
    delta: f64,
) -> Result<f64> {
    let mut errors = Vec::new();
    let mut scale: f64 = 0.0;
    for d in directions {
        let v = TangentVec::new(x.clone(), d.clone())?;
        let fd = (f.value(&geodesic(x, &v, delta)?)? - f.value(&geodesic(x, &v, -delta)?)?)
            / (2.0 * delta);
        let an = metric_inner(x, grad, &v)?;
        scale = scale.max(an.abs() / v.norm());
        errors.push((fd - an).abs() / v.norm());
    }
    Ok(relative_or_absolute(&errors, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Karcher, Smoothness, Trace};
    use crate::sample::random_spd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    const OMEGA: f64 = 0.567_143_290_409_783_8;

    struct Zero(usize);

    impl Objective for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, _x: &SpdPoint) -> Result<f64> {
            Ok(0.0)
        }
        fn subgradient(&self, x: &SpdPoint) -> Result<Option<TangentVec>> {
            Ok(Some(TangentVec::zero(x)))
        }
        fn smoothness(&self) -> Smoothness {
            Smoothness::Differentiable
        }
    }

    #[test]
    fn direct_prox_zero_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let a = random_spd(&mut rng, 3, 1.0);
        let r = direct_prox(&Zero(3), &a, 1.0, 1e-10).unwrap();
        assert!(r.point.same_point(&a));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn direct_prox_trace() {
        let id = SpdPoint::identity(2);
        let r = direct_prox(&Trace::new(2), &id, 1.0, 1e-10).unwrap();
        let target = SpdPoint::new(SymMatrix::identity(2).scale(OMEGA)).unwrap();
        assert!(distance(&r.point, &target).unwrap() < 1e-9);
    }

    #[test]
    fn direct_prox_small_beta_approaches_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let x1 = random_spd(&mut rng, 3, 0.7);
        let x2 = random_spd(&mut rng, 3, 0.7);
        let mid = two_point_mean(&x1, &x2).unwrap();
        let f = Karcher::uniform(vec![x1.clone(), x2]).unwrap();
        let mut last = f64::INFINITY;
        for beta in [1.0, 0.1, 0.01] {
            let r = direct_prox(&f, &x1, beta, 1e-11).unwrap();
            let d = distance(&r.point, &mid).unwrap();
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn two_point_mean_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let x = random_spd(&mut rng, 3, 1.0);
        assert!(distance(&two_point_mean(&x, &x).unwrap(), &x).unwrap() < 1e-12);
        let id = SpdPoint::identity(3);
        let half = two_point_mean(&id, &x).unwrap();
        assert!((half.matrix() - x.sqrt().matrix()).norm() < 1e-10 * x.matrix().norm());
        for _ in 0..20 {
            let a = random_spd(&mut rng, 3, 1.0);
            let b = random_spd(&mut rng, 3, 1.0);
            let m = two_point_mean(&a, &b).unwrap();
            let f = Karcher::uniform(vec![a, b]).unwrap();
            assert!(f.gradient(&m).unwrap().norm() <= 1e-9);
        }
    }

    #[test]
    fn commuting_mean_cases() {
        let x = SpdPoint::from_diagonal(&[2.0, 5.0]).unwrap();
        let m = commuting_mean(&[x.clone(), x.clone()], &[1.0, 3.0]).unwrap();
        assert!(distance(&m, &x).unwrap() < 1e-12);

        let a = SpdPoint::identity(2);
        let b = SpdPoint::from_diagonal(&[E * E, E.powi(4)]).unwrap();
        let m = commuting_mean(&[a.clone(), b.clone()], &[1.0, 1.0]).unwrap();
        let want = SpdPoint::from_diagonal(&[E, E * E]).unwrap();
        assert!(distance(&m, &want).unwrap() < 1e-12);
        let f = Karcher::uniform(vec![a.clone(), b.clone()]).unwrap();
        assert!(f.gradient(&m).unwrap().norm() <= 1e-8);

        let first = commuting_mean(&[a.clone(), b], &[1.0, 0.0]).unwrap();
        assert!(distance(&first, &a).unwrap() < 1e-12);

        let c = SpdPoint::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let d = SpdPoint::from_diagonal(&[1.0, 3.0]).unwrap();
        assert!(matches!(
            commuting_mean(&[c, d], &[1.0, 1.0]),
            Err(Error::NonCommuting { .. })
        ));
    }

    #[test]
    fn scalar_prox_cases() {
        let t = scalar_prox_trace(1.0).unwrap();
        assert!((t - 0.5671432904).abs() < 1e-10);
        assert!((-t.ln() - t).abs() <= 1e-12);
        assert!(scalar_prox_trace(1e6).unwrap() > 0.9999);
        let small = scalar_prox_trace(1e-6).unwrap();
        assert!(small > 0.0 && small < 1e-4);
        let mut last = 0.0;
        for beta in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let t = scalar_prox_trace(beta).unwrap();
            assert!(t > last);
            last = t;
        }
    }

    #[test]
    fn gradient_check_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let x = random_spd(&mut rng, 3, 0.7);
        let tr = Trace::new(3);
        let e = fd_gradient_check(&tr, &x, &tr.gradient(&x).unwrap(), 1e-5).unwrap();
        assert!(e <= 1e-8);

        let pts: Vec<_> = (0..4).map(|_| random_spd(&mut rng, 3, 0.7)).collect();
        let k = Karcher::uniform(pts).unwrap();
        let e = fd_gradient_check(&k, &x, &k.gradient(&x).unwrap(), 1e-5).unwrap();
        assert!(e <= 1e-4);

        let single = Karcher::uniform(vec![x.clone()]).unwrap();
        let e = fd_gradient_check(&single, &x, &single.gradient(&x).unwrap(), 1e-5).unwrap();
        assert!(e <= 1e-7);

        let wrong = TangentVec::new(x.clone(), x.sym().clone()).unwrap();
        assert!(fd_gradient_check(&k, &x, &wrong, 1e-5).unwrap() > 1e-2);
    }
}
