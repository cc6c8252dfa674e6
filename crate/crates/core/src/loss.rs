//! Training objectives over embeddings, with analytic gradients.
//!
//! * softmax cross-entropy over `W·e`,
//! * additive angular margin softmax: target logit `s·cos(θ_y + m)`,
//!   others `s·cos θ_j`, using cosines between unit embeddings and unit
//!   class weights,
//! * angular prototypical: each speaker contributes one query and one
//!   prototype; logits `w·cos(q_j, p_k) + b` with the matching prototype
//!   as the target,
//! * the sum of angular prototypical and softmax on the same batch.
//!
//! Gradients stop at the embeddings; nothing here touches the trunk.

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Softmax,
    Aam,
    AngularPrototypical,
    ApPlusSoftmax,
    SoftmaxThenAam,
}

impl LossKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "s" | "softmax" => LossKind::Softmax,
            "aam" => LossKind::Aam,
            "ap" => LossKind::AngularPrototypical,
            "ap+s" | "ap_plus_s" => LossKind::ApPlusSoftmax,
            "s-aam" | "s_then_aam" => LossKind::SoftmaxThenAam,
            other => return Err(Error::invalid(format!("unknown loss '{other}'"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Softmax => "s",
            LossKind::Aam => "aam",
            LossKind::AngularPrototypical => "ap",
            LossKind::ApPlusSoftmax => "ap+s",
            LossKind::SoftmaxThenAam => "s-aam",
        }
    }
}

/// Affine map applied to prototype cosines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApAffine {
    pub w: f64,
    pub b: f64,
}

impl Default for ApAffine {
    fn default() -> Self {
        Self { w: 10.0, b: -5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub margin: f64,
    pub scale: f64,
    pub ap_group_size: usize,
    pub ap_affine: ApAffine,
    pub switch_epoch: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::SoftmaxThenAam,
            margin: 0.2,
            scale: 30.0,
            ap_group_size: 2,
            ap_affine: ApAffine::default(),
            switch_epoch: 3,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) || !(self.scale > 0.0) {
            return Err(Error::invalid("margin must be >= 0 and scale > 0"));
        }
        if self.ap_group_size != 2 {
            return Err(Error::invalid("angular prototypical groups hold exactly 2 utterances"));
        }
        if !(self.ap_affine.w > 0.0) {
            return Err(Error::invalid("prototypical affine scale must be positive"));
        }
        Ok(())
    }
}

/// Loss kind in effect at `epoch`. Only `SoftmaxThenAam` changes over time.
pub fn loss_schedule(cfg: &LossConfig, epoch: usize) -> LossKind {
    match cfg.kind {
        LossKind::SoftmaxThenAam if epoch < cfg.switch_epoch => LossKind::Softmax,
        LossKind::SoftmaxThenAam => LossKind::Aam,
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<G> {
    pub value: f64,
    pub grad_embeddings: G,
    pub grad_weights: Option<Array2<f64>>,
    pub grad_affine: Option<ApAffine>,
}

/// Mean cross-entropy of each logits row against its target, and the logits
/// gradient `(softmax − onehot) / batch`.
fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let batch = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + z.ln();
        total += log_z - row[y];
        for (j, slot) in g.iter_mut().enumerate() {
            let p = (row[j] - log_z).exp();
            *slot = (p - if j == y { 1.0 } else { 0.0 }) / batch;
        }
    }
    (total / batch, grad)
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if labels.len() != batch {
        return Err(Error::invalid(format!("{} labels for {batch} embeddings", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

fn check_dims(embs: &ArrayView2<f64>, weights: &ArrayView2<f64>) -> Result<()> {
    if embs.ncols() != weights.ncols() {
        return Err(Error::invalid(format!(
            "embedding dim {} does not match classifier dim {}",
            embs.ncols(),
            weights.ncols()
        )));
    }
    if weights.nrows() == 0 {
        return Err(Error::invalid("classifier has no classes"));
    }
    Ok(())
}

pub fn softmax_loss(
    embs: ArrayView2<f64>,
    labels: &[usize],
    weights: ArrayView2<f64>,
) -> Result<LossResult<Array2<f64>>> {
    check_dims(&embs, &weights)?;
    check_labels(labels, embs.nrows(), weights.nrows())?;
    let logits = embs.dot(&weights.t());
    let (value, dz) = cross_entropy(&logits, labels);
    Ok(LossResult {
        value,
        grad_embeddings: dz.dot(&weights),
        grad_weights: Some(dz.t().dot(&embs)),
        grad_affine: None,
    })
}

/// Unit rows and their original norms; zero rows are an error.
fn unit_rows(x: ArrayView2<f64>, what: &str) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0) || !n.is_finite()) {
        return Err(Error::degenerate(format!("{what} row {i} has zero or non-finite norm")));
    }
    let mut unit = x.to_owned();
    for (mut row, &n) in unit.rows_mut().into_iter().zip(&norms) {
        row /= n;
    }
    Ok((unit, norms))
}

/// Backpropagates through `x̂ = x / |x|` row-wise: `(g − (g·x̂) x̂) / |x|`.
fn unit_rows_backward(grad_unit: &Array2<f64>, unit: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let mut out = grad_unit.clone();
    for ((mut g, u), &n) in out.rows_mut().into_iter().zip(unit.rows()).zip(norms) {
        let proj = g.dot(&u);
        g.zip_mut_with(&u, |gv, &uv| *gv = (*gv - proj * uv) / n);
    }
    out
}

/// Margin-adjusted target cosine `φ(c)` and `dφ/dc`.
///
/// Uses `cos(θ + m) = c·cos m − sin θ·sin m` while `θ + m < π`, and the
/// linear continuation `c − m·sin m` beyond it.
fn margin_cosine(c: f64, margin: f64) -> (f64, f64) {
    let (sin_m, cos_m) = margin.sin_cos();
    let threshold = (std::f64::consts::PI - margin).cos();
    if c > threshold {
        let sin_t = (1.0 - c * c).max(0.0).sqrt();
        let phi = c * cos_m - sin_t * sin_m;
        let dphi = if sin_t > 0.0 {
            cos_m + sin_m * c / sin_t
        } else {
            cos_m
        };
        (phi, dphi)
    } else {
        (c - margin * sin_m, 1.0)
    }
}

pub fn aam_softmax_loss(
    embs: ArrayView2<f64>,
    labels: &[usize],
    weights: ArrayView2<f64>,
    margin: f64,
    scale: f64,
) -> Result<LossResult<Array2<f64>>> {
    check_dims(&embs, &weights)?;
    check_labels(labels, embs.nrows(), weights.nrows())?;
    let (e_hat, e_norm) = unit_rows(embs, "embedding")?;
    let (w_hat, w_norm) = unit_rows(weights, "classifier")?;
    let cos = e_hat.dot(&w_hat.t());
    let mut logits = &cos * scale;
    let mut dphi = vec![0.0; labels.len()];
    for (i, &y) in labels.iter().enumerate() {
        let (phi, d) = margin_cosine(cos[[i, y]], margin);
        logits[[i, y]] = scale * phi;
        dphi[i] = d;
    }
    let (value, dz) = cross_entropy(&logits, labels);
    let mut dcos = dz * scale;
    for (i, &y) in labels.iter().enumerate() {
        dcos[[i, y]] *= dphi[i];
    }
    let d_e_hat = dcos.dot(&w_hat);
    let d_w_hat = dcos.t().dot(&e_hat);
    Ok(LossResult {
        value,
        grad_embeddings: unit_rows_backward(&d_e_hat, &e_hat, &e_norm),
        grad_weights: Some(unit_rows_backward(&d_w_hat, &w_hat, &w_norm)),
        grad_affine: None,
    })
}

/// `groups` is `(speakers, 2, dim)`: index 0 is the query, index 1 the prototype.
pub fn angular_prototypical_loss(
    groups: ArrayView3<f64>,
    affine: ApAffine,
) -> Result<LossResult<Array3<f64>>> {
    let (n, g, dim) = groups.dim();
    if g != 2 {
        return Err(Error::invalid(format!("groups must hold 2 utterances, got {g}")));
    }
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let queries = groups.index_axis(Axis(1), 0);
    let protos = groups.index_axis(Axis(1), 1);
    let (q_hat, q_norm) = unit_rows(queries, "query")?;
    let (p_hat, p_norm) = unit_rows(protos, "prototype")?;
    let cos = q_hat.dot(&p_hat.t());
    let logits = cos.mapv(|c| affine.w * c + affine.b);
    let targets: Vec<usize> = (0..n).collect();
    let (value, dz) = cross_entropy(&logits, &targets);
    let grad_affine = ApAffine {
        w: (&dz * &cos).sum(),
        b: dz.sum(),
    };
    let dcos = dz * affine.w;
    let dq = unit_rows_backward(&dcos.dot(&p_hat), &q_hat, &q_norm);
    let dp = unit_rows_backward(&dcos.t().dot(&q_hat), &p_hat, &p_norm);
    let mut grad = Array3::zeros((n, 2, dim));
    grad.index_axis_mut(Axis(1), 0).assign(&dq);
    grad.index_axis_mut(Axis(1), 1).assign(&dp);
    Ok(LossResult {
        value,
        grad_embeddings: grad,
        grad_weights: None,
        grad_affine: Some(grad_affine),
    })
}

/// Angular prototypical plus softmax over the same 2-per-speaker batch. The
/// softmax term sees all `2n` embeddings labelled with their speaker.
pub fn combined_ap_plus_s(
    groups: ArrayView3<f64>,
    speaker_labels: &[usize],
    weights: ArrayView2<f64>,
    affine: ApAffine,
) -> Result<LossResult<Array3<f64>>> {
    let (n, g, dim) = groups.dim();
    if speaker_labels.len() != n {
        return Err(Error::invalid(format!(
            "{} speaker labels for {n} groups",
            speaker_labels.len()
        )));
    }
    let ap = angular_prototypical_loss(groups, affine)?;
    let flat = groups
        .to_owned()
        .into_shape_with_order((n * g, dim))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let labels: Vec<usize> = speaker_labels.iter().flat_map(|&l| [l, l]).collect();
    let s = softmax_loss(flat.view(), &labels, weights)?;
    let s_grad = s
        .grad_embeddings
        .into_shape_with_order((n, g, dim))
        .map_err(|e| Error::invalid(e.to_string()))?;
    Ok(LossResult {
        value: ap.value + s.value,
        grad_embeddings: ap.grad_embeddings + s_grad,
        grad_weights: s.grad_weights,
        grad_affine: ap.grad_affine,
    })
}
