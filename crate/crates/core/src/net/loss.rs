//! Classification losses and the dense linear head used on top of
//! embeddings. Batch means are accumulated in f64.

use crate::error::{Error, Result};
use crate::net::tensor::{Real, Tensor};

/// Dot product with split accumulators so the reduction vectorizes.
#[inline]
fn dot_lanes<R: Real>(a: &[R], b: &[R]) -> R {
    const LANES: usize = 8;
    let mut acc = [R::ZERO; LANES];
    let chunks = a.len() / LANES;
    for k in 0..chunks {
        for l in 0..LANES {
            let i = k * LANES + l;
            acc[l] += a[i] * b[i];
        }
    }
    let mut total = R::ZERO;
    for i in chunks * LANES..a.len() {
        total += a[i] * b[i];
    }
    for v in acc {
        total += v;
    }
    total
}

/// Row-wise softmax with the usual max shift.
pub fn softmax_rows<R: Real>(logits: &Tensor<R>) -> Result<Tensor<R>> {
    if logits.shape.len() != 2 {
        return Err(Error::ShapeMismatch("logits must be [batch, classes]".into()));
    }
    let (b, c) = (logits.shape[0], logits.shape[1]);
    let mut out = vec![R::ZERO; b * c];
    for i in 0..b {
        let row = &logits.data[i * c..(i + 1) * c];
        let mut mx = row[0];
        for &v in row {
            mx = mx.maximum(v);
        }
        let mut denom = 0.0f64;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - mx).exp();
            out[i * c + j] = e;
            denom += e.to_f64();
        }
        let inv = R::from_f64(1.0 / denom);
        for j in 0..c {
            out[i * c + j] *= inv;
        }
    }
    Tensor::from_vec(&[b, c], out)
}

/// Mean cross-entropy over the batch plus its gradient
/// (softmax - onehot) / batch.
pub fn softmax_cross_entropy<R: Real>(
    logits: &Tensor<R>,
    labels: &[usize],
) -> Result<(f64, Tensor<R>)> {
    if logits.shape.len() != 2 || logits.shape[0] != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs {} labels",
            logits.shape,
            labels.len()
        )));
    }
    let (b, c) = (logits.shape[0], logits.shape[1]);
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let probs = softmax_rows(logits)?;
    let mut loss = 0.0f64;
    let inv_b = R::from_f64(1.0 / b as f64);
    let mut grad = probs.data.clone();
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.data[i * c + y].to_f64().max(1e-300);
        loss -= p.ln();
        grad[i * c + y] -= R::ONE;
    }
    for g in grad.iter_mut() {
        *g *= inv_b;
    }
    Ok((loss / b as f64, Tensor::from_vec(&[b, c], grad)?))
}

/// Mean KL(teacher || student) over the batch; the teacher is a constant.
/// Gradient w.r.t. student logits is (softmax_s - softmax_t) / batch.
pub fn kl_divergence<R: Real>(
    student_logits: &Tensor<R>,
    teacher_logits: &Tensor<R>,
) -> Result<(f64, Tensor<R>)> {
    if student_logits.shape != teacher_logits.shape {
        return Err(Error::ShapeMismatch(format!(
            "student {:?} vs teacher {:?}",
            student_logits.shape, teacher_logits.shape
        )));
    }
    let (b, c) = (student_logits.shape[0], student_logits.shape[1]);
    let p_s = softmax_rows(student_logits)?;
    let p_t = softmax_rows(teacher_logits)?;
    let mut loss = 0.0f64;
    for i in 0..b * c {
        let pt = p_t.data[i].to_f64();
        if pt > 0.0 {
            let ps = p_s.data[i].to_f64().max(1e-300);
            loss += pt * (pt.ln() - ps.ln());
        }
    }
    let inv_b = R::from_f64(1.0 / b as f64);
    let grad: Vec<R> = p_s
        .data
        .iter()
        .zip(&p_t.data)
        .map(|(&s, &t)| (s - t) * inv_b)
        .collect();
    Ok((loss / b as f64, Tensor::from_vec(&[b, c], grad)?))
}

/// logits = x W^T + b for x: [batch, d], w: [classes, d], b: [classes].
pub fn linear_forward<R: Real>(
    x: &Tensor<R>,
    w: &Tensor<R>,
    b: &Tensor<R>,
) -> Result<Tensor<R>> {
    if x.shape.len() != 2 || w.shape.len() != 2 || x.shape[1] != w.shape[1] {
        return Err(Error::ShapeMismatch(format!(
            "linear: x {:?} w {:?}",
            x.shape, w.shape
        )));
    }
    let (batch, d) = (x.shape[0], x.shape[1]);
    let c = w.shape[0];
    if b.shape != [c] {
        return Err(Error::ShapeMismatch(format!("bias {:?} vs {c} classes", b.shape)));
    }
    let mut out = vec![R::ZERO; batch * c];
    for i in 0..batch {
        let xi = &x.data[i * d..(i + 1) * d];
        for j in 0..c {
            let wj = &w.data[j * d..(j + 1) * d];
            out[i * c + j] = dot_lanes(xi, wj) + b.data[j];
        }
    }
    Tensor::from_vec(&[batch, c], out)
}

/// Gradients of the linear layer: dw = dlogits^T x, db = column sums of
/// dlogits, dx = dlogits W.
pub fn linear_backward<R: Real>(
    x: &Tensor<R>,
    w: &Tensor<R>,
    dlogits: &Tensor<R>,
) -> Result<(Tensor<R>, Tensor<R>, Tensor<R>)> {
    let (batch, d) = (x.shape[0], x.shape[1]);
    let c = w.shape[0];
    if dlogits.shape != [batch, c] {
        return Err(Error::ShapeMismatch(format!(
            "dlogits {:?} vs [{batch}, {c}]",
            dlogits.shape
        )));
    }
    let mut dw = vec![R::ZERO; c * d];
    let mut db = vec![R::ZERO; c];
    let mut dx = vec![R::ZERO; batch * d];
    for i in 0..batch {
        let xi = &x.data[i * d..(i + 1) * d];
        let dxi = &mut dx[i * d..(i + 1) * d];
        for j in 0..c {
            let g = dlogits.data[i * c + j];
            db[j] += g;
            let wj = &w.data[j * d..(j + 1) * d];
            let dwj = &mut dw[j * d..(j + 1) * d];
            for k in 0..d {
                dwj[k] += g * xi[k];
                dxi[k] += g * wj[k];
            }
        }
    }
    Ok((
        Tensor::from_vec(&[c, d], dw)?,
        Tensor::from_vec(&[c], db)?,
        Tensor::from_vec(&[batch, d], dx)?,
    ))
}
