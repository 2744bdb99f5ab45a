//! Tensor fields: the text file format and synthetic fields with noise.
//!
//! ```text
//! 3 2            # n m
//! grid: 1 2      # optional, H·W = m
//! 1 0 0          # m records of n rows
//! 0 1 0
//! 0 0 1
//!
//! 2 0 0
//! 0 2 0
//! 0 0 2
//! weights: 1 0.5 # optional, defaults to 1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored, as is anything after
//! a `#` on a line.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::error::Error;
use crate::sample::random_unit_sym;
use crate::spd::{congruence, distance, exp_map, sym_fn, SpdPoint, SymMatrix, TangentVec};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("record {record} is not positive definite (min eigenvalue {min_eigenvalue:.6e})")]
    NotSpd { record: usize, min_eigenvalue: f64 },

    #[error("record {record}: {source}")]
    Record {
        record: usize,
        #[source]
        source: Error,
    },

    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    dim: usize,
    matrices: Vec<SpdPoint>,
    weights: Vec<f64>,
    grid: Option<(usize, usize)>,
}

impl TensorField {
    pub fn new(
        matrices: Vec<SpdPoint>,
        weights: Option<Vec<f64>>,
        grid: Option<(usize, usize)>,
    ) -> Result<Self, FieldError> {
        let dim = matrices
            .first()
            .map(SpdPoint::dim)
            .ok_or_else(|| FieldError::Invalid("field has no records".to_string()))?;
        if let Some(i) = matrices.iter().position(|m| m.dim() != dim) {
            return Err(FieldError::Invalid(format!(
                "record {i} has dimension {}, expected {dim}",
                matrices[i].dim()
            )));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; matrices.len()]);
        if weights.len() != matrices.len() {
            return Err(FieldError::Invalid(format!(
                "{} weights for {} records",
                weights.len(),
                matrices.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(FieldError::Invalid(format!(
                "weights must be positive, got {w}"
            )));
        }
        if let Some((h, w)) = grid {
            if h * w != matrices.len() {
                return Err(FieldError::Invalid(format!(
                    "grid {h}x{w} does not hold {} records",
                    matrices.len()
                )));
            }
        }
        Ok(TensorField {
            dim,
            matrices,
            weights,
            grid,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[SpdPoint] {
        &self.matrices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line with comments stripped, with its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if !body.is_empty() {
                return Some((i + 1, body));
            }
        }
        None
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> FieldError {
    FieldError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_numbers<T: std::str::FromStr>(
    line: usize,
    text: &str,
    what: &str,
) -> Result<Vec<T>, FieldError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| parse_err(line, format!("cannot parse {what} '{tok}'")))
        })
        .collect()
}

pub fn parse_field(text: &str) -> Result<TensorField, FieldError> {
    let mut lines = Lines::new(text);
    let (hl, header) = lines
        .next_content()
        .ok_or_else(|| parse_err(1, "missing header 'n m'"))?;
    let hdr: Vec<usize> = parse_numbers(hl, header, "header value")?;
    let [n, m] = hdr[..] else {
        return Err(parse_err(hl, "header must be 'n m'"));
    };
    if n == 0 || m == 0 {
        return Err(parse_err(hl, "header values must be positive"));
    }

    let mut grid = None;
    let mut pending = lines.next_content();
    if let Some((gl, body)) = pending {
        if let Some(rest) = body.strip_prefix("grid:") {
            let g: Vec<usize> = parse_numbers(gl, rest, "grid size")?;
            let [h, w] = g[..] else {
                return Err(parse_err(gl, "grid line must be 'grid: H W'"));
            };
            if h * w != m {
                return Err(parse_err(
                    gl,
                    format!("grid {h}x{w} does not hold {m} records"),
                ));
            }
            grid = Some((h, w));
            pending = lines.next_content();
        }
    }

    let mut matrices = Vec::with_capacity(m);
    for record in 0..m {
        let mut entries = Vec::with_capacity(n * n);
        let mut first_line = 0;
        for row in 0..n {
            let (ln, body) = match pending.take() {
                Some(l) => l,
                None => lines.next_content().ok_or_else(|| {
                    parse_err(
                        lines.last + 1,
                        format!("expected row {row} of record {record}"),
                    )
                })?,
            };
            if row == 0 {
                first_line = ln;
            }
            if body.starts_with("weights:") || body.starts_with("grid:") {
                return Err(parse_err(
                    ln,
                    format!("expected row {row} of record {record}"),
                ));
            }
            let vals: Vec<f64> = parse_numbers(ln, body, "matrix entry")?;
            if vals.len() != n {
                return Err(parse_err(
                    ln,
                    format!("expected {n} entries, found {}", vals.len()),
                ));
            }
            entries.extend(vals);
        }
        let sym = SymMatrix::from_row_slice(n, &entries).map_err(|e| match e {
            Error::NonFinite => parse_err(
                first_line,
                format!("record {record} has a non-finite entry"),
            ),
            other => FieldError::Record {
                record,
                source: other,
            },
        })?;
        let point = SpdPoint::new(sym).map_err(|e| match e {
            Error::NotPositiveDefinite { min_eigenvalue, .. } => FieldError::NotSpd {
                record,
                min_eigenvalue,
            },
            other => FieldError::Record {
                record,
                source: other,
            },
        })?;
        matrices.push(point);
    }

    let mut weights = None;
    if let Some((wl, body)) = lines.next_content() {
        let rest = body
            .strip_prefix("weights:")
            .ok_or_else(|| parse_err(wl, "unexpected content after the last record"))?;
        let w: Vec<f64> = parse_numbers(wl, rest, "weight")?;
        if w.len() != m {
            return Err(parse_err(
                wl,
                format!("expected {m} weights, found {}", w.len()),
            ));
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(parse_err(
                wl,
                format!("weights must be positive, got {bad}"),
            ));
        }
        weights = Some(w);
        if let Some((extra, _)) = lines.next_content() {
            return Err(parse_err(
                extra,
                "unexpected content after the weights line",
            ));
        }
    }
    TensorField::new(matrices, weights, grid)
}

/// Canonical text: shortest round-trip decimals, a blank line between
/// records, and a weights line only when some weight differs from 1.
pub fn format_field(field: &TensorField) -> String {
    let n = field.dim;
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", n, field.len());
    if let Some((h, w)) = field.grid {
        let _ = writeln!(out, "grid: {h} {w}");
    }
    for (i, m) in field.matrices.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mat = m.matrix();
        for r in 0..n {
            let row: Vec<String> = (0..n).map(|c| format!("{}", mat[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    if field.weights.iter().any(|&w| w != 1.0) {
        let ws: Vec<String> = field.weights.iter().map(|w| format!("{w}")).collect();
        let _ = writeln!(out, "weights: {}", ws.join(" "));
    }
    out
}

pub fn load_field(path: &Path) -> Result<TensorField, FieldError> {
    let text = std::fs::read_to_string(path).map_err(|source| FieldError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_field(&text)
}

pub fn save_field(path: &Path, field: &TensorField) -> Result<(), FieldError> {
    std::fs::write(path, format_field(field)).map_err(|source| FieldError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Mean of `d(a_i, b_i)` over two fields of equal shape.
pub fn mean_distance(a: &TensorField, b: &TensorField) -> Result<f64, FieldError> {
    if a.len() != b.len() || a.dim != b.dim {
        return Err(FieldError::Invalid(format!(
            "fields differ in shape ({} x {} vs {} x {})",
            a.len(),
            a.dim,
            b.len(),
            b.dim
        )));
    }
    let mut acc = 0.0;
    for (i, (x, y)) in a.matrices.iter().zip(&b.matrices).enumerate() {
        acc += distance(x, y).map_err(|source| FieldError::Record { record: i, source })?;
    }
    Ok(acc / a.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    /// Every voxel moved by exactly `scale` in Riemannian distance.
    Dense { scale: f64 },
    /// A `fraction` of voxels moved by `scale`, the rest untouched.
    Impulse { scale: f64, fraction: f64 },
}

/// Smooth SPD field on an `h×w` grid: `expm(S(u, v))` with `S` a
/// trigonometric symmetric matrix of the normalized grid position.
pub fn clean_field(n: usize, h: usize, w: usize) -> Result<TensorField, FieldError> {
    if n == 0 || h == 0 || w == 0 {
        return Err(FieldError::Invalid(
            "dimension and grid sizes must be positive".to_string(),
        ));
    }
    let tau = std::f64::consts::TAU;
    let mut matrices = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let u = r as f64 / h.max(2).saturating_sub(1) as f64;
            let v = c as f64 / w.max(2).saturating_sub(1) as f64;
            let s = DMatrix::from_fn(n, n, |i, j| {
                let (i, j) = (i.min(j), i.max(j));
                if i == j {
                    0.3 * (0.5 * tau * u + i as f64).sin()
                        + 0.2 * (0.5 * tau * v - 0.7 * i as f64).cos()
                } else {
                    0.12 * (0.5 * tau * (u + v) + (i + 2 * j) as f64).sin()
                }
            });
            let e = sym_fn(
                &SymMatrix::new(s).map_err(|e| FieldError::Invalid(e.to_string()))?,
                f64::exp,
            )
            .and_then(SpdPoint::new)
            .map_err(|source| FieldError::Record {
                record: r * w + c,
                source,
            })?;
            matrices.push(e);
        }
    }
    TensorField::new(matrices, None, Some((h, w)))
}

/// Noisy copy of `clean`. Voxel `i` draws from its own ChaCha8 stream `i`
/// of `seed`, so output is independent of evaluation order; the perturbation
/// is `exp_x(x^{1/2} Z x^{1/2})` with `‖Z‖_F = scale`, i.e. distance exactly
/// `scale`.
pub fn add_noise(clean: &TensorField, noise: Noise, seed: u64) -> Result<TensorField, FieldError> {
    let (scale, fraction) = match noise {
        Noise::Dense { scale } => (scale, 1.0),
        Noise::Impulse { scale, fraction } => (scale, fraction),
    };
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(FieldError::Invalid(format!(
            "noise scale must be nonnegative, got {scale}"
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(FieldError::Invalid(format!(
            "impulse fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let mut out = Vec::with_capacity(clean.len());
    for (i, x) in clean.matrices.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let hit = fraction >= 1.0 || rand::Rng::random::<f64>(&mut rng) < fraction;
        if scale == 0.0 || !hit {
            out.push(x.clone());
            continue;
        }
        let z = random_unit_sym(&mut rng, clean.dim).scale(scale);
        let noisy = congruence(x, &z)
            .and_then(|v| TangentVec::new(x.clone(), v))
            .and_then(|v| exp_map(x, &v))
            .map_err(|source| FieldError::Record { record: i, source })?;
        out.push(noisy);
    }
    TensorField::new(out, Some(clean.weights.clone()), clean.grid)
}

/// `(clean, noisy)` pair of synthetic fields.
pub fn gen_synthetic(
    n: usize,
    h: usize,
    w: usize,
    noise: Noise,
    seed: u64,
) -> Result<(TensorField, TensorField), FieldError> {
    let clean = clean_field(n, h, w)?;
    let noisy = add_noise(&clean, noise, seed)?;
    Ok((clean, noisy))
}
