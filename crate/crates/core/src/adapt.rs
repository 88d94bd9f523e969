//! Per-task classifiers over frozen embeddings: a ridge-regularized linear
//! head fit by full-batch gradient descent, and a cosine-similarity
//! classifier over the support set.

use crate::error::{Error, Result};
use crate::net::loss::{linear_backward, linear_forward, softmax_cross_entropy, softmax_rows};
use crate::net::tensor::{Real, Tensor};
use serde::{Deserialize, Serialize};

/// The per-task classifier: logits = W f(x) + b.
#[derive(Debug, Clone)]
pub struct LinearHead<R: Real> {
    pub w: Tensor<R>,
    pub b: Tensor<R>,
    pub lambda: f64,
}

impl<R: Real> LinearHead<R> {
    /// JSON form for run-manifest audit trails.
    pub fn to_json(&self) -> String {
        let w: Vec<f64> = self.w.data.iter().map(|v| v.to_f64()).collect();
        let b: Vec<f64> = self.b.data.iter().map(|v| v.to_f64()).collect();
        serde_json::json!({
            "lambda": self.lambda,
            "shape": self.w.shape,
            "w": w,
            "b": b,
        })
        .to_string()
    }
}

/// Cosine-similarity classifier settings. Support weights are
/// softmax(cos / temperature) over the support set.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub temperature: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { temperature: 10.0 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be > 0".into()));
        }
        Ok(())
    }
}

/// How the head fit runs: full-batch GD with a step cap and a gradient-norm
/// tolerance. `lr: None` picks 1/L from the CE smoothness bound
/// L = max_t ||x_t||^2 / 4 + lambda, which keeps the loss monotone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadFitCfg {
    pub lambda: f64,
    pub max_steps: usize,
    pub grad_tol: f64,
    pub lr: Option<f64>,
}

impl Default for HeadFitCfg {
    fn default() -> Self {
        HeadFitCfg {
            lambda: 0.01,
            max_steps: 1000,
            grad_tol: 1e-6,
            lr: None,
        }
    }
}

/// Regularized CE objective and its gradient at (w, b):
/// sum_t CE + lambda (||W||^2 + ||b||^2). Loss is reported summed over the
/// support (not averaged), matching the objective being minimized.
fn head_objective<R: Real>(
    w: &Tensor<R>,
    b: &Tensor<R>,
    x: &Tensor<R>,
    labels: &[usize],
    lambda: f64,
) -> Result<(f64, Tensor<R>, Tensor<R>)> {
    let t = labels.len() as f64;
    let logits = linear_forward(x, w, b)?;
    let (mean_ce, dlogits_mean) = softmax_cross_entropy(&logits, labels)?;
    // softmax_cross_entropy averages; rescale to a sum.
    let scale = R::from_f64(t);
    let dlogits = Tensor::from_vec(
        &dlogits_mean.shape,
        dlogits_mean.data.iter().map(|&g| g * scale).collect(),
    )?;
    let (mut dw, mut db, _) = linear_backward(x, w, &dlogits)?;
    let lam = R::from_f64(2.0 * lambda);
    for (g, p) in dw.data.iter_mut().zip(&w.data) {
        *g += lam * *p;
    }
    for (g, p) in db.data.iter_mut().zip(&b.data) {
        *g += lam * *p;
    }
    let reg = lambda * (w.sq_norm_f64() + b.sq_norm_f64());
    Ok((mean_ce * t + reg, dw, db))
}

/// Step size bound that keeps full-batch GD on the summed, ridge-regularized
/// CE monotone: 1 / (sum_t (||x_t||^2 + 1) / 2 + 2 lambda).
fn auto_lr(row_sq_norms: &[f64], lambda: f64) -> f64 {
    let l: f64 = row_sq_norms.iter().map(|s| (s + 1.0) / 2.0).sum::<f64>() + 2.0 * lambda;
    1.0 / l.max(1e-12)
}

/// Fit the head on support embeddings by full-batch gradient descent.
/// Deterministic; starts from zeros. When the support count is below the
/// embedding dimension, the identical iteration runs in the span of the
/// support rows (W always stays there from a zero start), which turns each
/// step from O(t d c) into O(t^2 c).
pub fn fit_linear_head<R: Real>(
    support: &Tensor<R>,
    labels: &[usize],
    n_way: usize,
    cfg: &HeadFitCfg,
) -> Result<LinearHead<R>> {
    if cfg.lambda < 0.0 {
        return Err(Error::InvalidConfig("lambda must be >= 0".into()));
    }
    if support.shape.len() != 2 || support.shape[0] == 0 {
        return Err(Error::InvalidInput("support must be a nonempty [t, d] matrix".into()));
    }
    if support.shape[0] != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} support rows vs {} labels",
            support.shape[0],
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_way) {
        return Err(Error::InvalidInput(format!(
            "label {bad} outside n_way {n_way}"
        )));
    }
    support.assert_finite("support embeddings")?;
    let t = support.shape[0];
    let d = support.shape[1];
    if t <= d {
        return fit_linear_head_dual(support, labels, n_way, cfg);
    }

    let mut w = Tensor::<R>::zeros(&[n_way, d]);
    let mut b = Tensor::<R>::zeros(&[n_way]);
    let lr = cfg.lr.unwrap_or_else(|| {
        let norms: Vec<f64> = (0..t)
            .map(|i| {
                support.data[i * d..(i + 1) * d]
                    .iter()
                    .map(|v| {
                        let x = v.to_f64();
                        x * x
                    })
                    .sum()
            })
            .collect();
        auto_lr(&norms, cfg.lambda)
    });

    let lr_r = R::from_f64(lr);
    for _ in 0..cfg.max_steps {
        let (_, dw, db) = head_objective(&w, &b, support, labels, cfg.lambda)?;
        let gnorm = (dw.sq_norm_f64() + db.sq_norm_f64()).sqrt();
        if gnorm < cfg.grad_tol {
            break;
        }
        for (p, g) in w.data.iter_mut().zip(&dw.data) {
            *p -= lr_r * *g;
        }
        for (p, g) in b.data.iter_mut().zip(&db.data) {
            *p -= lr_r * *g;
        }
    }
    Ok(LinearHead {
        w,
        b,
        lambda: cfg.lambda,
    })
}

/// Span-parameterized variant of the same gradient descent: W_k = A_k X for
/// every iterate, so steps only touch the t x t Gram matrix. Math runs in
/// f64 regardless of the storage precision.
fn fit_linear_head_dual<R: Real>(
    support: &Tensor<R>,
    labels: &[usize],
    n_way: usize,
    cfg: &HeadFitCfg,
) -> Result<LinearHead<R>> {
    let t = support.shape[0];
    let d = support.shape[1];
    let x: Vec<f64> = support.data.iter().map(|v| v.to_f64()).collect();

    // Gram matrix g[s][u] = <x_s, x_u>
    let mut gram = vec![0.0f64; t * t];
    for s in 0..t {
        for u in 0..=s {
            let mut dot = 0.0;
            for k in 0..d {
                dot += x[s * d + k] * x[u * d + k];
            }
            gram[s * t + u] = dot;
            gram[u * t + s] = dot;
        }
    }
    let norms: Vec<f64> = (0..t).map(|s| gram[s * t + s]).collect();
    let lr = cfg.lr.unwrap_or_else(|| auto_lr(&norms, cfg.lambda));

    let mut a = vec![0.0f64; n_way * t];
    let mut b = vec![0.0f64; n_way];
    for _ in 0..cfg.max_steps {
        // logits[s][c] = sum_u a[c][u] gram[u][s] + b[c]
        let mut dlogits = vec![0.0f64; t * n_way]; // reused as logits first
        for s in 0..t {
            for c in 0..n_way {
                let mut acc = 0.0;
                for u in 0..t {
                    acc += a[c * t + u] * gram[u * t + s];
                }
                dlogits[s * n_way + c] = acc + b[c];
            }
        }
        // softmax rows -> summed-CE gradient (softmax - onehot)
        for s in 0..t {
            let row = &mut dlogits[s * n_way..(s + 1) * n_way];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                denom += *v;
            }
            for v in row.iter_mut() {
                *v /= denom;
            }
            row[labels[s]] -= 1.0;
        }
        // dA = dlogits^T + 2 lambda A ; db = column sums
        let mut da = vec![0.0f64; n_way * t];
        let mut db = vec![0.0f64; n_way];
        for s in 0..t {
            for c in 0..n_way {
                let g = dlogits[s * n_way + c];
                da[c * t + s] = g;
                db[c] += g;
            }
        }
        for (dac, ac) in da.iter_mut().zip(&a) {
            *dac += 2.0 * cfg.lambda * ac;
        }
        for (dbc, bc) in db.iter_mut().zip(&b) {
            *dbc += 2.0 * cfg.lambda * bc;
        }
        // ||dW||^2 = sum_c dA_c G dA_c^T ; plus bias norm
        let mut gsq = db.iter().map(|v| v * v).sum::<f64>();
        for c in 0..n_way {
            let dac = &da[c * t..(c + 1) * t];
            for s in 0..t {
                let mut acc = 0.0;
                for u in 0..t {
                    acc += gram[s * t + u] * dac[u];
                }
                gsq += dac[s] * acc;
            }
        }
        if gsq.max(0.0).sqrt() < cfg.grad_tol {
            break;
        }
        for (av, gv) in a.iter_mut().zip(&da) {
            *av -= lr * gv;
        }
        for (bv, gv) in b.iter_mut().zip(&db) {
            *bv -= lr * gv;
        }
    }

    // materialize W = A X
    let mut w = vec![R::ZERO; n_way * d];
    for c in 0..n_way {
        for s in 0..t {
            let coeff = a[c * t + s];
            if coeff == 0.0 {
                continue;
            }
            for k in 0..d {
                let cur = w[c * d + k].to_f64();
                w[c * d + k] = R::from_f64(cur + coeff * x[s * d + k]);
            }
        }
    }
    Ok(LinearHead {
        w: Tensor::from_vec(&[n_way, d], w)?,
        b: Tensor::from_vec(&[n_way], b.iter().map(|&v| R::from_f64(v)).collect())?,
        lambda: cfg.lambda,
    })
}

/// Class distribution and argmax labels for query embeddings.
pub fn predict_linear<R: Real>(
    head: &LinearHead<R>,
    query: &Tensor<R>,
) -> Result<(Tensor<R>, Vec<usize>)> {
    let logits = linear_forward(query, &head.w, &head.b)?;
    let probs = softmax_rows(&logits)?;
    let c = probs.shape[1];
    let labels = (0..probs.shape[0])
        .map(|i| {
            let row = &probs.data[i * c..(i + 1) * c];
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok((probs, labels))
}

/// Metric classifier: attention weights softmax_k(cos(q, s_k)/T), output
/// distribution sum_k a_k onehot(y_k).
pub fn predict_metric<R: Real>(
    query: &Tensor<R>,
    support: &Tensor<R>,
    support_labels: &[usize],
    n_way: usize,
    mc: &MetricConfig,
) -> Result<(Tensor<R>, Vec<usize>)> {
    mc.validate()?;
    if support.shape.len() != 2 || support.shape[0] == 0 {
        return Err(Error::InvalidInput("support must be nonempty".into()));
    }
    if support.shape[0] != support_labels.len() {
        return Err(Error::ShapeMismatch("support rows vs labels".into()));
    }
    if query.shape.len() != 2 || query.shape[1] != support.shape[1] {
        return Err(Error::ShapeMismatch(format!(
            "query {:?} vs support {:?}",
            query.shape, support.shape
        )));
    }
    let d = support.shape[1];
    let k = support.shape[0];
    let norm = |row: &[R]| -> Result<f64> {
        let mut s = 0.0f64;
        for v in row {
            let x = v.to_f64();
            s += x * x;
        }
        if s <= 0.0 {
            return Err(Error::InvalidInput(
                "zero-norm embedding; cosine undefined".into(),
            ));
        }
        Ok(s.sqrt())
    };
    let mut support_norms = Vec::with_capacity(k);
    for i in 0..k {
        support_norms.push(norm(&support.data[i * d..(i + 1) * d])?);
    }

    let q_count = query.shape[0];
    let mut dist = vec![R::ZERO; q_count * n_way];
    let mut labels = Vec::with_capacity(q_count);
    for qi in 0..q_count {
        let qrow = &query.data[qi * d..(qi + 1) * d];
        let qn = norm(qrow)?;
        // cos / T, softmax over support items
        let mut scores = Vec::with_capacity(k);
        for si in 0..k {
            let srow = &support.data[si * d..(si + 1) * d];
            let mut dot = 0.0f64;
            for (a, b) in qrow.iter().zip(srow) {
                dot += a.to_f64() * b.to_f64();
            }
            scores.push(dot / (qn * support_norms[si]) / mc.temperature);
        }
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0f64;
        let exps: Vec<f64> = scores
            .iter()
            .map(|s| {
                let e = (s - mx).exp();
                denom += e;
                e
            })
            .collect();
        for (si, e) in exps.iter().enumerate() {
            let y = support_labels[si];
            if y >= n_way {
                return Err(Error::InvalidInput(format!(
                    "support label {y} outside n_way {n_way}"
                )));
            }
            dist[qi * n_way + y] += R::from_f64(e / denom);
        }
        let row = &dist[qi * n_way..(qi + 1) * n_way];
        let mut best = 0;
        for j in 1..n_way {
            if row[j] > row[best] {
                best = j;
            }
        }
        labels.push(best);
    }
    Ok((Tensor::from_vec(&[q_count, n_way], dist)?, labels))
}
