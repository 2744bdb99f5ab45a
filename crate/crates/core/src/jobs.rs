//! Whole-field jobs behind the command line: means, medians, single
//! proximal steps, windowed denoising, trace CSV and exit codes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::{FieldError, TensorField};
use crate::objectives::{Karcher, Median, Objective};
use crate::par::Execution;
use crate::prox::{ipp_solve, ProxConfig, ProxTrace, Solution};
use crate::spd::{SpdPoint, SymMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SPD: i32 = 3;
pub const EXIT_WARNING: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::NotSquare { .. }
        | Error::Asymmetric { .. }
        | Error::NonFinite
        | Error::NotPositiveDefinite { .. } => EXIT_SPD,
        Error::DimensionMismatch { .. } | Error::InvalidParameter(_) | Error::Empty(_) => {
            EXIT_USAGE
        }
        Error::BaseMismatch
        | Error::Numeric { .. }
        | Error::NonCommuting { .. }
        | Error::NoConvergence(_) => EXIT_NUMERIC,
    }
}

pub fn field_exit_code(e: &FieldError) -> i32 {
    match e {
        FieldError::Io { .. } | FieldError::Parse { .. } | FieldError::Invalid(_) => EXIT_USAGE,
        FieldError::NotSpd { .. } => EXIT_SPD,
        FieldError::Record { source, .. } => error_exit_code(source),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    Mean,
    Median,
}

/// Where per-point weights come from in windowed jobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightPolicy {
    Uniform,
    /// The `weights:` line of the input field.
    Field,
}

/// Weighted arithmetic mean, with eigenvalues floored at `n·ε·λ_max` in the
/// unlikely case rounding pushes it off the cone.
pub fn arithmetic_mean(points: &[SpdPoint], weights: &[f64]) -> Result<SpdPoint> {
    let first = points.first().ok_or(Error::Empty("points"))?;
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    let mut acc = nalgebra::DMatrix::zeros(first.dim(), first.dim());
    for (p, w) in points.iter().zip(weights) {
        acc += p.matrix() * (*w / total);
    }
    let sym = SymMatrix::new(acc)?;
    SpdPoint::new(sym.clone()).or_else(|_| {
        let eig = sym.eigen()?;
        let floor = first.dim() as f64 * f64::EPSILON * eig.max().abs().max(f64::MIN_POSITIVE);
        SpdPoint::from_matrix(eig.map(|l| l.max(floor)))
    })
}

fn objective(
    filter: Filter,
    points: Vec<SpdPoint>,
    weights: Vec<f64>,
) -> Result<Box<dyn Objective>> {
    Ok(match filter {
        Filter::Mean => Box::new(Karcher::new(points, weights)?),
        Filter::Median => Box::new(Median::new(points, weights)?),
    })
}

/// Solver run over all records, started at their arithmetic mean.
pub fn run_filter(field: &TensorField, filter: Filter, config: &ProxConfig) -> Result<Solution> {
    let a0 = arithmetic_mean(field.matrices(), field.weights())?;
    let f = objective(filter, field.matrices().to_vec(), field.weights().to_vec())?;
    ipp_solve(f.as_ref(), &a0, config)
}

pub fn run_mean(field: &TensorField, config: &ProxConfig) -> Result<Solution> {
    run_filter(field, Filter::Mean, config)
}

pub fn run_median(field: &TensorField, config: &ProxConfig) -> Result<Solution> {
    run_filter(field, Filter::Median, config)
}

/// A single outer step from the arithmetic mean.
pub fn run_prox(field: &TensorField, filter: Filter, config: &ProxConfig) -> Result<Solution> {
    run_filter(
        field,
        filter,
        &ProxConfig {
            max_outer: 1,
            ..*config
        },
    )
}

/// Not converged, or some inner solve ran out of sweeps.
pub fn has_warning(sol: &Solution) -> bool {
    !sol.converged || sol.trace.any_warning()
}

#[derive(Clone, Debug)]
pub struct DenoiseOutput {
    pub field: TensorField,
    /// Voxels whose solve ended with a warning.
    pub warnings: Vec<usize>,
}

/// Replaces each voxel by the mean or median of its `window×window`
/// neighbourhood, shrunk at the borders. Voxels are independent, so they
/// are distributed by `exec`; output order is the input order.
pub fn run_denoise(
    field: &TensorField,
    window: usize,
    filter: Filter,
    weights: WeightPolicy,
    config: &ProxConfig,
    exec: Execution,
) -> std::result::Result<DenoiseOutput, FieldError> {
    let (h, w) = field
        .grid()
        .ok_or_else(|| FieldError::Invalid("denoise needs a field with a grid line".to_string()))?;
    if window == 0 || window.is_multiple_of(2) {
        return Err(FieldError::Invalid(format!(
            "window must be odd and positive, got {window}"
        )));
    }
    config
        .validate()
        .map_err(|e| FieldError::Invalid(e.to_string()))?;
    let half = window / 2;
    let voxels: Vec<(usize, usize)> = (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect();
    let solved = exec.map(&voxels, |_, &(r, c)| -> Result<(SpdPoint, bool)> {
        let mut pts = Vec::with_capacity(window * window);
        let mut wts = Vec::with_capacity(window * window);
        for rr in r.saturating_sub(half)..=(r + half).min(h - 1) {
            for cc in c.saturating_sub(half)..=(c + half).min(w - 1) {
                let idx = rr * w + cc;
                pts.push(field.matrices()[idx].clone());
                wts.push(match weights {
                    WeightPolicy::Uniform => 1.0,
                    WeightPolicy::Field => field.weights()[idx],
                });
            }
        }
        let a0 = arithmetic_mean(&pts, &wts)?;
        let f = objective(filter, pts, wts)?;
        let sol = ipp_solve(f.as_ref(), &a0, config)?;
        let warn = has_warning(&sol);
        Ok((sol.point, warn))
    });
    let mut out = Vec::with_capacity(solved.len());
    let mut warnings = Vec::new();
    for (i, res) in solved.into_iter().enumerate() {
        let (p, warn) = res.map_err(|source| FieldError::Record { record: i, source })?;
        if warn {
            warnings.push(i);
        }
        out.push(p);
    }
    Ok(DenoiseOutput {
        field: TensorField::new(out, Some(field.weights().to_vec()), field.grid())?,
        warnings,
    })
}

pub const TRACE_HEADER: &str =
    "k,beta,eps,f_next,step_dist,inner_iters,residual,inexact_slack,inexact_ok,warning";

/// One row per outer iteration; an absent residual is an empty cell.
pub fn trace_csv(trace: &ProxTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let residual = r.residual.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.k,
            r.beta,
            r.eps,
            r.f_next,
            r.step_dist,
            r.inner_iters,
            residual,
            r.inexact_slack,
            r.inexact_ok,
            r.warning
        );
    }
    out
}
