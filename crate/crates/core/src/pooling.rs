//! Frame-level to segment-level pooling: temporal average (TAP), temporal
//! statistics (TSP) and attentive statistics (ASP).
//!
//! All reductions over frames sum their terms in sorted order, which makes
//! every output bitwise invariant to the order of the input frames.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-10;

/// `T x F` matrix of frame features (one row per frame), `T >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix(DMatrix<f64>);

impl FrameMatrix {
    pub fn new(frames: DMatrix<f64>) -> Result<Self> {
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "frame matrix needs at least one frame and one feature".into(),
            ));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite frame feature".into()));
        }
        Ok(Self(frames))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let f = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != f) {
            return Err(Error::InvalidArgument("ragged frame rows".into()));
        }
        Self::new(DMatrix::from_fn(t, f, |i, j| rows[i][j]))
    }

    pub fn frames(&self) -> usize {
        self.0.nrows()
    }

    pub fn features(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Channel-shared scalar attention: `e_t = v . tanh(W x_t + b) + k . x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `H x F`
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub v: DVector<f64>,
    /// Linear skip term, length `F`.
    pub k: DVector<f64>,
}

impl AttentionParams {
    pub fn zeros(hidden: usize, features: usize) -> Self {
        Self {
            w: DMatrix::zeros(hidden, features),
            b: DVector::zeros(hidden),
            v: DVector::zeros(hidden),
            k: DVector::zeros(features),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w.nrows()
    }

    fn check(&self, features: usize) -> Result<()> {
        let h = self.hidden();
        if h == 0
            || self.w.ncols() != features
            || self.b.len() != h
            || self.v.len() != h
            || self.k.len() != features
        {
            return Err(Error::InvalidArgument(format!(
                "attention parameter shapes do not match H={h}, F={features}"
            )));
        }
        let finite = self
            .w
            .iter()
            .chain(self.b.iter())
            .chain(self.v.iter())
            .chain(self.k.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("non-finite attention parameter".into()));
        }
        Ok(())
    }
}

/// Sum with the terms sorted first, so the result does not depend on the
/// order the terms arrive in.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn column_mean(x: &DMatrix<f64>, f: usize) -> f64 {
    sorted_sum(x.column(f).iter().copied().collect()) / x.nrows() as f64
}

/// Temporal average pooling: per-feature mean over frames.
pub fn tap(x: &FrameMatrix) -> Vec<f64> {
    (0..x.features()).map(|f| column_mean(&x.0, f)).collect()
}

/// Temporal statistics pooling: means followed by `sqrt(var + eps)` with the
/// population variance.
pub fn tsp(x: &FrameMatrix, eps: f64) -> Vec<f64> {
    let t = x.frames() as f64;
    let means = tap(x);
    let stds = means.iter().enumerate().map(|(f, &mu)| {
        let sq = x.0.column(f).iter().map(|v| (v - mu) * (v - mu)).collect();
        (sorted_sum(sq) / t + eps).sqrt()
    });
    means.iter().copied().chain(stds).collect()
}

/// Output of [`asp`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentivePooled {
    /// Weighted means followed by weighted standard deviations (`2F`).
    pub stats: Vec<f64>,
    /// Attention weights over frames; a probability vector of length `T`.
    pub weights: Vec<f64>,
}

/// Per-frame attention scores `e_t`.
pub fn attention_scores(x: &FrameMatrix, p: &AttentionParams) -> Result<Vec<f64>> {
    p.check(x.features())?;
    Ok(x.0
        .row_iter()
        .map(|row| {
            let xt = row.transpose();
            let hidden = (&p.w * &xt + &p.b).map(f64::tanh);
            p.v.dot(&hidden) + p.k.dot(&xt)
        })
        .collect())
}

/// Attentive statistics pooling.
pub fn asp(x: &FrameMatrix, p: &AttentionParams, eps: f64) -> Result<AttentivePooled> {
    let scores = attention_scores(x, p)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|e| (e - max).exp()).collect();
    let z = sorted_sum(exps.clone());
    let weights: Vec<f64> = exps.iter().map(|e| e / z).collect();

    let nf = x.features();
    let mut stats = vec![0.0; 2 * nf];
    for f in 0..nf {
        let col = x.0.column(f);
        let mu = sorted_sum(col.iter().zip(&weights).map(|(v, a)| a * v).collect());
        // Centered form of sum(a x^2) - mu^2; identical in exact arithmetic.
        let var = sorted_sum(
            col.iter()
                .zip(&weights)
                .map(|(v, a)| a * (v - mu) * (v - mu))
                .collect(),
        );
        stats[f] = mu;
        stats[nf + f] = (var.max(0.0) + eps).sqrt();
    }
    Ok(AttentivePooled { stats, weights })
}
