//! Margin-based softmax objectives over cosine logits: plain softmax,
//! A-softmax, AM-softmax and AAM-softmax, with sub-center classifier heads
//! and the inter-topK hard-negative penalty. Loss and exact analytic
//! gradients are evaluated together; [`toy_train`] fits a head by gradient
//! descent on fixed embeddings.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Softmax,
    ASoftmax,
    AmSoftmax,
    AamSoftmax,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Softmax,
        Variant::ASoftmax,
        Variant::AmSoftmax,
        Variant::AamSoftmax,
    ];
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Variant::Softmax),
            "a_softmax" | "asoftmax" | "a-softmax" => Ok(Variant::ASoftmax),
            "am_softmax" | "am" | "am-softmax" => Ok(Variant::AmSoftmax),
            "aam_softmax" | "aam" | "aam-softmax" => Ok(Variant::AamSoftmax),
            _ => Err(Error::InvalidArgument(format!(
                "unknown loss variant '{s}'"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Softmax => "softmax",
            Variant::ASoftmax => "a_softmax",
            Variant::AmSoftmax => "am_softmax",
            Variant::AamSoftmax => "aam_softmax",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    pub variant: Variant,
    pub scale: f64,
    pub margin: f64,
}

impl MarginConfig {
    pub fn new(variant: Variant, scale: f64, margin: f64) -> Result<Self> {
        let cfg = Self {
            variant,
            scale,
            margin,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Softmax {
            return Ok(());
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "margin must be >= 0, got {}",
                self.margin
            )));
        }
        if self.variant == Variant::AamSoftmax && self.margin >= PI / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "AAM margin must be below pi/2, got {}",
                self.margin
            )));
        }
        Ok(())
    }

    /// Logit scale actually applied; plain softmax uses unit scale.
    pub fn effective_scale(&self) -> f64 {
        match self.variant {
            Variant::Softmax => 1.0,
            _ => self.scale,
        }
    }

    /// Target logit and its derivative with respect to the target cosine.
    ///
    /// A-softmax uses the angle multiplier `1 + margin`, so that a zero margin
    /// is margin-free for every variant.
    pub fn target_logit(&self, cos: f64) -> (f64, f64) {
        let s = self.effective_scale();
        let m = self.margin;
        if self.variant == Variant::Softmax || m == 0.0 {
            return (s * cos, s);
        }
        let c = cos.clamp(-1.0, 1.0);
        let sin = (1.0 - c * c).max(0.0).sqrt();
        match self.variant {
            Variant::Softmax => unreachable!(),
            Variant::AmSoftmax => (s * (cos - m), s),
            Variant::AamSoftmax => {
                if c > (PI - m).cos() {
                    let value = c * m.cos() - sin * m.sin();
                    let d = m.cos() + m.sin() * c / sin.max(1e-12);
                    (s * value, s * d)
                } else {
                    (s * (c - m * m.sin()), s)
                }
            }
            Variant::ASoftmax => {
                let mult = 1.0 + m;
                let theta = c.acos();
                let n = (mult * theta / PI).floor().min(mult.ceil() - 1.0);
                let sign = if n as i64 % 2 == 0 { 1.0 } else { -1.0 };
                let value = sign * (mult * theta).cos() - 2.0 * n;
                let d = if sin < 1e-12 && theta < 1.0 {
                    mult * mult
                } else {
                    sign * mult * (mult * theta).sin() / sin.max(1e-12)
                };
                (s * value, s * d)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubCenterConfig {
    pub centers: usize,
}

impl Default for SubCenterConfig {
    fn default() -> Self {
        Self { centers: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterTopKConfig {
    /// Number of hardest non-target classes to penalize.
    pub k: usize,
    /// Extra margin added to their cosines.
    pub margin: f64,
}

impl InterTopKConfig {
    pub fn is_active(&self) -> bool {
        self.k > 0 && self.margin != 0.0
    }
}

/// Class weight matrix with `classes * centers` rows of dimension `dim`;
/// row `c * centers + j` is sub-center `j` of class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    weights: DMatrix<f64>,
    classes: usize,
    centers: usize,
}

impl ClassifierHead {
    pub fn new(weights: DMatrix<f64>, classes: usize, centers: usize) -> Result<Self> {
        if classes == 0 || centers == 0 || weights.nrows() != classes * centers {
            return Err(Error::InvalidArgument(format!(
                "head has {} rows, expected {classes} classes x {centers} centers",
                weights.nrows()
            )));
        }
        if weights.ncols() == 0 || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain(
                "head weights must be finite and nonempty".into(),
            ));
        }
        Ok(Self {
            weights,
            classes,
            centers,
        })
    }

    /// Unit-norm Gaussian-direction rows drawn from `seed`.
    pub fn random(classes: usize, sub: SubCenterConfig, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = classes * sub.centers;
        let mut w = DMatrix::<f64>::zeros(rows, dim);
        for r in 0..rows {
            loop {
                for c in 0..dim {
                    w[(r, c)] = StandardNormal.sample(&mut rng);
                }
                let n = w.row(r).norm();
                if n > 1e-12 {
                    w.row_mut(r).unscale_mut(n);
                    break;
                }
            }
        }
        Self::new(w, classes, sub.centers)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn centers(&self) -> usize {
        self.centers
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.weights
    }

    /// Row-normalized weights and the original row norms.
    fn normalized(&self) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let mut w = self.weights.clone();
        let mut norms = Vec::with_capacity(w.nrows());
        for r in 0..w.nrows() {
            let n = w.row(r).norm();
            if n == 0.0 {
                return Err(Error::Domain(format!("head row {r} has zero norm")));
            }
            w.row_mut(r).unscale_mut(n);
            norms.push(n);
        }
        Ok((w, norms))
    }
}

/// Per-class cosines after sub-center max, with the winning row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Cosines {
    pub values: Vec<f64>,
    pub rows: Vec<usize>,
}

fn unit(emb: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = emb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Domain(
            "embedding has zero or non-finite norm".into(),
        ));
    }
    Ok((emb.iter().map(|x| x / n).collect(), n))
}

fn class_cosines(
    unit_emb: &[f64],
    unit_w: &DMatrix<f64>,
    classes: usize,
    centers: usize,
) -> Cosines {
    let mut values = Vec::with_capacity(classes);
    let mut rows = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut best = (f64::NEG_INFINITY, c * centers);
        for j in 0..centers {
            let r = c * centers + j;
            let cos: f64 = unit_w.row(r).iter().zip(unit_emb).map(|(a, b)| a * b).sum();
            if cos > best.0 {
                best = (cos, r);
            }
        }
        values.push(best.0);
        rows.push(best.1);
    }
    Cosines { values, rows }
}

/// Class cosines of `emb` against `head` (max over sub-centers).
pub fn cosines(emb: &[f64], head: &ClassifierHead) -> Result<Cosines> {
    check_dim(emb, head)?;
    let (e, _) = unit(emb)?;
    let (w, _) = head.normalized()?;
    Ok(class_cosines(&e, &w, head.classes, head.centers))
}

fn check_dim(emb: &[f64], head: &ClassifierHead) -> Result<()> {
    if emb.len() != head.dim() {
        return Err(Error::InvalidArgument(format!(
            "embedding dim {} does not match head dim {}",
            emb.len(),
            head.dim()
        )));
    }
    Ok(())
}

fn check_target(target: usize, head: &ClassifierHead) -> Result<()> {
    if target >= head.classes {
        return Err(Error::InvalidArgument(format!(
            "target {target} out of range for {} classes",
            head.classes
        )));
    }
    Ok(())
}

/// Logits with the variant's margin applied to the target class only.
pub fn margin_logits(
    emb: &[f64],
    head: &ClassifierHead,
    cfg: &MarginConfig,
    target: usize,
) -> Result<(Vec<f64>, Cosines)> {
    cfg.validate()?;
    check_target(target, head)?;
    let cos = cosines(emb, head)?;
    let s = cfg.effective_scale();
    let mut logits: Vec<f64> = cos.values.iter().map(|c| s * c).collect();
    logits[target] = cfg.target_logit(cos.values[target]).0;
    Ok((logits, cos))
}

/// Non-target classes with the `k` largest cosines, ties to the lower index.
pub fn topk_nontargets(cosines: &[f64], target: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..cosines.len()).filter(|&c| c != target).collect();
    idx.sort_by(|&a, &b| cosines[b].total_cmp(&cosines[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Replaces the logits of the `k` hardest non-target classes with
/// `s * (cos + m')`. The target logit is never touched.
pub fn inter_topk_adjust(
    logits: &[f64],
    target: usize,
    cfg: &InterTopKConfig,
    scale: f64,
    cosines: &[f64],
) -> Vec<f64> {
    let mut out = logits.to_vec();
    if !cfg.is_active() {
        return out;
    }
    for c in topk_nontargets(cosines, target, cfg.k) {
        out[c] = scale * (cosines[c] + cfg.margin);
    }
    out
}

/// Mean loss with gradients for the embeddings (one row per sample) and the
/// raw (unnormalized) head weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_emb: Vec<Vec<f64>>,
    pub grad_head: DMatrix<f64>,
}

struct SampleGrad {
    loss: f64,
    grad_emb: Vec<f64>,
    /// (row, gradient w.r.t. that raw weight row)
    grad_rows: Vec<(usize, Vec<f64>)>,
}

fn sample_loss(
    emb: &[f64],
    target: usize,
    head: &ClassifierHead,
    unit_w: &DMatrix<f64>,
    w_norms: &[f64],
    cfg: &MarginConfig,
    itk: &InterTopKConfig,
) -> Result<SampleGrad> {
    check_dim(emb, head)?;
    check_target(target, head)?;
    let (e, e_norm) = unit(emb)?;
    let cos = class_cosines(&e, unit_w, head.classes, head.centers);
    let s = cfg.effective_scale();

    let mut logits: Vec<f64> = cos.values.iter().map(|c| s * c).collect();
    let mut dlogit_dcos = vec![s; head.classes];
    let (t_logit, t_d) = cfg.target_logit(cos.values[target]);
    logits[target] = t_logit;
    dlogit_dcos[target] = t_d;
    let logits = inter_topk_adjust(&logits, target, itk, s, &cos.values);

    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + z.ln();
    let loss = lse - logits[target];
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite cross-entropy".into()));
    }

    let dim = emb.len();
    let mut g_unit_e = vec![0.0; dim];
    let mut grad_rows = Vec::with_capacity(head.classes);
    for c in 0..head.classes {
        let p = (logits[c] - lse).exp();
        let dz = if c == target { p - 1.0 } else { p };
        let dcos = dz * dlogit_dcos[c];
        let r = cos.rows[c];
        let w = unit_w.row(r);
        for (g, wi) in g_unit_e.iter_mut().zip(w.iter()) {
            *g += dcos * wi;
        }
        // d cos / d w_raw = (e_hat - cos * w_hat) / |w|
        let cv = cos.values[c];
        let gw: Vec<f64> = w
            .iter()
            .zip(&e)
            .map(|(wi, ei)| dcos * (ei - cv * wi) / w_norms[r])
            .collect();
        grad_rows.push((r, gw));
    }
    // Project through the embedding normalization.
    let along: f64 = g_unit_e.iter().zip(&e).map(|(g, ei)| g * ei).sum();
    let grad_emb = g_unit_e
        .iter()
        .zip(&e)
        .map(|(g, ei)| (g - along * ei) / e_norm)
        .collect();
    Ok(SampleGrad {
        loss,
        grad_emb,
        grad_rows,
    })
}

/// Mean cross-entropy over the batch and its exact gradients.
pub fn loss_and_grad(
    embeddings: &[Vec<f64>],
    targets: &[usize],
    head: &ClassifierHead,
    cfg: &MarginConfig,
    itk: &InterTopKConfig,
) -> Result<LossGrad> {
    loss_and_grad_with(Execution::default(), embeddings, targets, head, cfg, itk)
}

pub fn loss_and_grad_with(
    exec: Execution,
    embeddings: &[Vec<f64>],
    targets: &[usize],
    head: &ClassifierHead,
    cfg: &MarginConfig,
    itk: &InterTopKConfig,
) -> Result<LossGrad> {
    cfg.validate()?;
    if embeddings.is_empty() || embeddings.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "batch needs matching nonempty embeddings/targets ({} vs {})",
            embeddings.len(),
            targets.len()
        )));
    }
    let (unit_w, norms) = head.normalized()?;
    let samples = par::try_map_range(exec, embeddings.len(), |i| {
        sample_loss(&embeddings[i], targets[i], head, &unit_w, &norms, cfg, itk)
    })?;

    let n = embeddings.len() as f64;
    let mut loss = 0.0;
    let mut grad_head = DMatrix::zeros(head.weights.nrows(), head.dim());
    let mut grad_emb = Vec::with_capacity(samples.len());
    for s in samples {
        loss += s.loss;
        for (r, g) in s.grad_rows {
            for (j, v) in g.into_iter().enumerate() {
                grad_head[(r, j)] += v / n;
            }
        }
        grad_emb.push(s.grad_emb.into_iter().map(|g| g / n).collect());
    }
    Ok(LossGrad {
        loss: loss / n,
        grad_emb,
        grad_head,
    })
}

/// Labeled embeddings for [`toy_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub embeddings: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub head: ClassifierHead,
    /// Loss after 0, 1, ..., `steps` updates.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub margin: MarginConfig,
    pub sub: SubCenterConfig,
    pub itk: InterTopKConfig,
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
}

/// Full-batch gradient descent on the head weights, embeddings fixed.
/// Deterministic for a given seed.
pub fn toy_train(data: &LabeledData, cfg: &TrainConfig) -> Result<TrainResult> {
    if data.classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    if cfg.itk.k >= data.classes {
        return Err(Error::InvalidArgument(format!(
            "inter-topK k={} must be below the class count {}",
            cfg.itk.k, data.classes
        )));
    }
    let dim = data.embeddings.first().map_or(0, Vec::len);
    let mut head = ClassifierHead::random(data.classes, cfg.sub, dim, cfg.seed)?;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let lg = loss_and_grad_with(
            Execution::Sequential,
            &data.embeddings,
            &data.targets,
            &head,
            &cfg.margin,
            &cfg.itk,
        )
        .map_err(|e| match e {
            Error::Numeric(_) => Error::Training { step },
            e => e,
        })?;
        if !lg.loss.is_finite() {
            return Err(Error::Training { step });
        }
        trace.push(lg.loss);
        if step == cfg.steps {
            break;
        }
        head.weights -= lg.grad_head * cfg.lr;
        if head.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Training { step });
        }
    }
    Ok(TrainResult { head, trace })
}

/// Fraction of samples whose highest class cosine is their own class.
pub fn accuracy(head: &ClassifierHead, data: &LabeledData) -> Result<f64> {
    let mut correct = 0usize;
    for (e, &t) in data.embeddings.iter().zip(&data.targets) {
        let c = cosines(e, head)?;
        let best = (0..c.values.len())
            .max_by(|&a, &b| c.values[a].total_cmp(&c.values[b]).then(b.cmp(&a)))
            .unwrap();
        correct += usize::from(best == t);
    }
    Ok(correct as f64 / data.embeddings.len().max(1) as f64)
}
