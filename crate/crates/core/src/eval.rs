//! Evaluation harness: episodic accuracy with confidence intervals and
//! confusion matrices, paired noise sweeps, adaptation curves, and
//! embedding dumps.

use crate::adapt::{fit_linear_head, predict_linear, predict_metric, HeadFitCfg, LinearHead, MetricConfig};
use crate::episodes::{sample_episode_from_counts, Episode, ImageBank};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::net::backbone::{embed, EmbeddingParams};
use crate::net::loss::{linear_backward, linear_forward, softmax_cross_entropy};
use crate::net::tensor::Tensor;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Which per-episode classifier runs over the frozen embeddings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Ridge-regularized linear head fit by full-batch GD.
    Linear(HeadFitCfg),
    /// Cosine-similarity attention over the support set.
    Metric(MetricConfig),
    /// Plain SGD on a fresh zero head for a fixed number of steps.
    InnerSgd { steps: usize, lr: f64 },
}

impl HeadKind {
    pub fn label(&self) -> &'static str {
        match self {
            HeadKind::Linear(_) => "linear",
            HeadKind::Metric(_) => "metric",
            HeadKind::InnerSgd { .. } => "inner_sgd",
        }
    }
}

/// A frozen backbone plus the episode-classifier choice.
pub struct EvalModel<'a> {
    pub params: &'a EmbeddingParams<f32>,
    pub head: HeadKind,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_per_class: usize,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub label: String,
    pub snr_db: Option<f64>,
    pub mean_accuracy: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub steps: usize,
    pub mean_accuracy: f64,
    pub ci95: f64,
}

/// Aggregated evaluation result. The confusion matrix counts episode-local
/// labels (class_map is ascending, so local index i is the i-th smallest
/// chosen global class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub head: String,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_per_class: usize,
    pub episodes: usize,
    pub seed: u64,
    pub task_ids: Vec<usize>,
    pub mean_accuracy: f64,
    /// 1.96 * sample std of per-episode accuracies / sqrt(episodes).
    pub ci95: f64,
    pub confusion: Vec<Vec<usize>>,
    pub per_snr: Vec<SnrRow>,
    pub adaptation_curve: Vec<CurvePoint>,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mean_accuracy) || self.ci95 < 0.0 {
            return Err(Error::Numerical("accuracy/CI out of range".into()));
        }
        let per_row = self.episodes * self.q_per_class;
        let mut trace = 0usize;
        let mut total = 0usize;
        for (i, row) in self.confusion.iter().enumerate() {
            let s: usize = row.iter().sum();
            if s != per_row {
                return Err(Error::Numerical(format!(
                    "confusion row {i} sums to {s}, expected {per_row}"
                )));
            }
            trace += row[i];
            total += s;
        }
        if total > 0 && (self.mean_accuracy - trace as f64 / total as f64).abs() > 0.0 {
            return Err(Error::Numerical(
                "confusion trace / total must equal reported accuracy exactly".into(),
            ));
        }
        Ok(())
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Every image of a bank set embedded once; episodes then run over rows.
pub struct EmbeddedPool {
    pub task_ids: Vec<usize>,
    pub class_counts: Vec<usize>,
    /// Per class: [count, dim] embedding matrix, banks concatenated in
    /// argument order.
    pub class_embeddings: Vec<Tensor<f32>>,
    pub dim: usize,
    pub snr_db: Option<f64>,
    pub uniform_snr: bool,
}

/// Embed the union of the banks' sample pools (merged task combos keep the
/// bank argument order, which episode replay relies on).
pub fn embed_banks(params: &EmbeddingParams<f32>, banks: &[&ImageBank]) -> Result<EmbeddedPool> {
    if banks.is_empty() {
        return Err(Error::InvalidInput("no banks to evaluate".into()));
    }
    let n_classes = banks[0].classes.len();
    if banks.iter().any(|b| b.classes.len() != n_classes) {
        return Err(Error::ShapeMismatch("banks disagree on class count".into()));
    }
    let dim = params.cfg.embed_dim(banks[0].n)?;
    let mut class_embeddings = Vec::with_capacity(n_classes);
    let mut class_counts = Vec::with_capacity(n_classes);
    for ci in 0..n_classes {
        let images: Vec<&GrayImage> = banks.iter().flat_map(|b| b.classes[ci].iter()).collect();
        class_counts.push(images.len());
        if images.is_empty() {
            class_embeddings.push(Tensor::zeros(&[0, dim]));
        } else {
            class_embeddings.push(embed(params, &images)?);
        }
    }
    let snr0 = banks[0].snr_db;
    let uniform_snr = banks.iter().all(|b| b.snr_db == snr0);
    Ok(EmbeddedPool {
        task_ids: banks.iter().map(|b| b.task_id).collect(),
        class_counts,
        class_embeddings,
        dim,
        snr_db: if uniform_snr { snr0 } else { None },
        uniform_snr,
    })
}

impl EmbeddedPool {
    /// Gather one episode half into a dense [rows, dim] matrix plus local
    /// labels.
    fn gather(&self, episode: &Episode, pairs: &[(usize, usize)]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let mut data = Vec::with_capacity(pairs.len() * self.dim);
        let mut labels = Vec::with_capacity(pairs.len());
        for &(local, idx) in pairs {
            let ci = *episode
                .class_map
                .get(local)
                .ok_or_else(|| Error::InvalidInput("local label out of range".into()))?;
            let emb = &self.class_embeddings[ci];
            if idx >= emb.shape[0] {
                return Err(Error::InvalidInput(format!(
                    "sample {idx} out of range for class {ci}"
                )));
            }
            data.extend_from_slice(&emb.data[idx * self.dim..(idx + 1) * self.dim]);
            labels.push(local);
        }
        Ok((Tensor::from_vec(&[pairs.len(), self.dim], data)?, labels))
    }

    fn snr_label(&self) -> String {
        if !self.uniform_snr {
            return "mixed".into();
        }
        match self.snr_db {
            None => "clean".into(),
            Some(db) => format!("{db} dB"),
        }
    }
}

/// Plain SGD on a fresh zero head over cached support embeddings.
fn fit_head_sgd(
    support: &Tensor<f32>,
    labels: &[usize],
    n_way: usize,
    steps: usize,
    lr: f64,
) -> Result<LinearHead<f32>> {
    let d = support.shape[1];
    let mut w = Tensor::<f32>::zeros(&[n_way, d]);
    let mut b = Tensor::<f32>::zeros(&[n_way]);
    let lr = lr as f32;
    for _ in 0..steps {
        let logits = linear_forward(support, &w, &b)?;
        let (_, dlogits) = softmax_cross_entropy(&logits, labels)?;
        let (dw, db, _) = linear_backward(support, &w, &dlogits)?;
        for (p, g) in w.data.iter_mut().zip(&dw.data) {
            *p -= lr * *g;
        }
        for (p, g) in b.data.iter_mut().zip(&db.data) {
            *p -= lr * *g;
        }
    }
    Ok(LinearHead { w, b, lambda: 0.0 })
}

/// Episode loop shared by every protocol: `classify` maps one episode's
/// support/query embeddings to predicted local labels.
fn run_with<C>(
    pool: &EmbeddedPool,
    protocol: &EvalProtocol,
    head_label: &str,
    mut classify: C,
) -> Result<(EvalReport, Vec<Episode>)>
where
    C: FnMut(&Tensor<f32>, &[usize], &Tensor<f32>, usize) -> Result<Vec<usize>>,
{
    if protocol.episodes == 0 {
        return Err(Error::InvalidInput("need at least one episode".into()));
    }
    let master = Rng::new(protocol.seed);
    let mut episodes = Vec::with_capacity(protocol.episodes);
    let mut confusion = vec![vec![0usize; protocol.n_way]; protocol.n_way];
    let mut ep_accs = Vec::with_capacity(protocol.episodes);

    for e in 0..protocol.episodes {
        let mut rng = master.fork(e as u64);
        let episode = sample_episode_from_counts(
            pool.task_ids[0],
            &pool.class_counts,
            protocol.n_way,
            protocol.k_shot,
            protocol.q_per_class,
            &mut rng,
        )?;
        let (s_emb, s_labels) = pool.gather(&episode, &episode.support)?;
        let (q_emb, q_labels) = pool.gather(&episode, &episode.query)?;
        let preds = classify(&s_emb, &s_labels, &q_emb, protocol.n_way)?;
        if preds.len() != q_labels.len() {
            return Err(Error::ShapeMismatch("classifier output length".into()));
        }
        let mut hits = 0usize;
        for (&truth, &pred) in q_labels.iter().zip(&preds) {
            confusion[truth][pred] += 1;
            if truth == pred {
                hits += 1;
            }
        }
        ep_accs.push(hits as f64 / q_labels.len() as f64);
        episodes.push(episode);
    }

    let total: usize = confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
    let trace: usize = (0..protocol.n_way).map(|i| confusion[i][i]).sum();
    let mean = trace as f64 / total as f64;
    let e = ep_accs.len() as f64;
    let ci95 = if ep_accs.len() > 1 {
        let m = ep_accs.iter().sum::<f64>() / e;
        let var = ep_accs.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (e - 1.0);
        1.96 * (var / e).sqrt()
    } else {
        0.0
    };

    let report = EvalReport {
        head: head_label.to_string(),
        n_way: protocol.n_way,
        k_shot: protocol.k_shot,
        q_per_class: protocol.q_per_class,
        episodes: protocol.episodes,
        seed: protocol.seed,
        task_ids: pool.task_ids.clone(),
        mean_accuracy: mean,
        ci95,
        confusion,
        per_snr: vec![SnrRow {
            label: pool.snr_label(),
            snr_db: pool.snr_db,
            mean_accuracy: mean,
            ci95,
        }],
        adaptation_curve: Vec::new(),
    };
    report.validate()?;
    Ok((report, episodes))
}

fn classify_with_head(
    head: &HeadKind,
    s_emb: &Tensor<f32>,
    s_labels: &[usize],
    q_emb: &Tensor<f32>,
    n_way: usize,
) -> Result<Vec<usize>> {
    match head {
        HeadKind::Linear(cfg) => {
            let fitted = fit_linear_head(s_emb, s_labels, n_way, cfg)?;
            Ok(predict_linear(&fitted, q_emb)?.1)
        }
        HeadKind::Metric(mc) => Ok(predict_metric(q_emb, s_emb, s_labels, n_way, mc)?.1),
        HeadKind::InnerSgd { steps, lr } => {
            let fitted = fit_head_sgd(s_emb, s_labels, n_way, *steps, *lr)?;
            Ok(predict_linear(&fitted, q_emb)?.1)
        }
    }
}

/// Evaluate a frozen backbone on episodes drawn from one task or a merged
/// task combination (union of sample pools, bank argument order).
pub fn evaluate(
    model: &EvalModel,
    banks: &[&ImageBank],
    protocol: &EvalProtocol,
) -> Result<(EvalReport, Vec<Episode>)> {
    let pool = embed_banks(model.params, banks)?;
    run_with(&pool, protocol, model.head.label(), |s, sl, q, n| {
        classify_with_head(&model.head, s, sl, q, n)
    })
}

/// One evaluation per noise row with the same seed schedule, so episode
/// sample indices pair up across rows.
pub fn noise_sweep(
    model: &EvalModel,
    rows: &[&ImageBank],
    protocol: &EvalProtocol,
) -> Result<Vec<EvalReport>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("noise sweep needs at least one row".into()));
    }
    let counts0: Vec<usize> = rows[0].classes.iter().map(|c| c.len()).collect();
    for b in rows {
        let counts: Vec<usize> = b.classes.iter().map(|c| c.len()).collect();
        if counts != counts0 {
            return Err(Error::InvalidInput(format!(
                "noise task {} has different per-class counts; rows cannot pair",
                b.task_id
            )));
        }
    }
    rows.iter()
        .map(|bank| evaluate(model, &[bank], protocol).map(|(r, _)| r))
        .collect()
}

/// Accuracy after 0, 1, ..., max_steps SGD adaptation steps from a zero
/// head, on one fixed set of episodes.
pub fn adaptation_curve(
    params: &EmbeddingParams<f32>,
    bank: &ImageBank,
    protocol: &EvalProtocol,
    max_steps: usize,
    inner_lr: f64,
) -> Result<Vec<CurvePoint>> {
    let pool = embed_banks(params, &[bank])?;
    let mut curve = Vec::with_capacity(max_steps + 1);
    for steps in 0..=max_steps {
        let head = HeadKind::InnerSgd {
            steps,
            lr: inner_lr,
        };
        let (report, _) = run_with(&pool, protocol, head.label(), |s, sl, q, n| {
            classify_with_head(&head, s, sl, q, n)
        })?;
        curve.push(CurvePoint {
            steps,
            mean_accuracy: report.mean_accuracy,
            ci95: report.ci95,
        });
    }
    Ok(curve)
}

/// CSV dump of embeddings: d feature columns plus the global class label.
/// Values print in shortest round-trip form, so re-parsing them recovers
/// the forward output bitwise.
pub fn dump_embeddings(
    params: &EmbeddingParams<f32>,
    bank: &ImageBank,
    count: usize,
) -> Result<String> {
    let dim = params.cfg.embed_dim(bank.n)?;
    let mut out = String::new();
    for k in 0..dim {
        out.push_str(&format!("e{k},"));
    }
    out.push_str("label\n");
    if count == 0 {
        return Ok(out);
    }
    let mut written = 0usize;
    'outer: for (ci, images) in bank.classes.iter().enumerate() {
        if images.is_empty() {
            continue;
        }
        let refs: Vec<&GrayImage> = images.iter().collect();
        let emb = embed(params, &refs)?;
        for row in 0..emb.shape[0] {
            let cells: Vec<String> = emb.data[row * dim..(row + 1) * dim]
                .iter()
                .map(|v| v.to_string())
                .collect();
            out.push_str(&cells.join(","));
            out.push_str(&format!(",{ci}\n"));
            written += 1;
            if written == count {
                break 'outer;
            }
        }
    }
    if written < count {
        return Err(Error::InvalidInput(format!(
            "bank holds only {written} samples, requested {count}"
        )));
    }
    Ok(out)
}
