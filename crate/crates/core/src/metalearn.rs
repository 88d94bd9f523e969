//! Training procedures: pooled-CE embedding pretraining, self-distillation
//! against the frozen pretrained teacher, the first-order MAML episodic
//! loop, and fast adaptation to unseen tasks.

use crate::adapt::HeadFitCfg;
use crate::episodes::{sample_episode_from_counts, ImageBank};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalModel, EvalProtocol, EvalReport, HeadKind};
use crate::imaging::GrayImage;
use crate::net::backbone::{backward, forward, BackboneCfg, EmbeddingParams};
use crate::net::checkpoint::pack;
use crate::net::loss::{kl_divergence, linear_backward, linear_forward, softmax_cross_entropy};
use crate::net::optim::{LrSchedule, OptKind, OptimizerState};
use crate::net::tensor::{Real, Tensor};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Training hyperparameters shared by the pretraining, distillation and
/// episodic phases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaConfig {
    pub backbone: BackboneCfg,
    pub seed: u64,
    /// Images per forward pass.
    pub batch_size: usize,
    /// Minibatches per pretraining/distillation epoch.
    pub batches_per_epoch: usize,
    pub epochs: usize,
    /// Outer learning-rate ramp; spans the configured run length.
    pub lr_start: f64,
    pub lr_end: f64,
    pub outer_kind: OptKind,
    pub rmsprop_rho: f64,
    pub rmsprop_eps: f64,
    pub clip_norm: f64,
    /// Episodic phase.
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub inner_mode: InnerMode,
    pub meta_batch_tasks: usize,
    pub episodes_per_epoch: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_per_class: usize,
    /// Distillation mix: alpha * CE + beta * KL.
    pub alpha: f64,
    pub beta: f64,
    /// When set, a divergence aborts after writing the last good epoch's
    /// checkpoint here.
    pub diverge_checkpoint: Option<PathBuf>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            backbone: BackboneCfg::default(),
            seed: 7,
            batch_size: 32,
            batches_per_epoch: 8,
            epochs: 500,
            lr_start: 2e-4,
            lr_end: 1e-2,
            outer_kind: OptKind::RmsProp,
            rmsprop_rho: 0.9,
            rmsprop_eps: 1e-8,
            clip_norm: 5.62,
            inner_steps: 5,
            inner_lr: 0.01,
            inner_mode: InnerMode::Full,
            meta_batch_tasks: 4,
            episodes_per_epoch: 8,
            n_way: 6,
            k_shot: 5,
            q_per_class: 15,
            alpha: 1.0,
            beta: 0.02,
            diverge_checkpoint: None,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(Error::InvalidConfig(
                "need alpha >= 0, beta >= 0, alpha + beta > 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        // epochs = 0 is legal: training returns the initialization.
        LrSchedule::new(self.lr_start, self.lr_end, self.epochs.max(1))?;
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            start: self.lr_start,
            end: self.lr_end,
            total_epochs: self.epochs.max(1),
        }
    }

    fn outer_optimizer(&self) -> Result<OptimizerState<f32>> {
        OptimizerState::new(
            self.outer_kind,
            self.lr_start,
            self.rmsprop_rho,
            self.rmsprop_eps,
            self.clip_norm,
        )
    }
}

/// Whether inner adaptation touches only the episode head or a full
/// backbone copy (first-order MAML either way).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    HeadOnly,
    Full,
}

/// Linear classifier tensors riding on top of the backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<R: Real> {
    pub w: Tensor<R>,
    pub b: Tensor<R>,
}

impl<R: Real> Head<R> {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Head {
            w: Tensor::zeros(&[classes, dim]),
            b: Tensor::zeros(&[classes]),
        }
    }

    pub fn init(classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let a = (1.0 / dim as f64).sqrt();
        Head {
            w: Tensor::from_vec(
                &[classes, dim],
                (0..classes * dim)
                    .map(|_| R::from_f64(rng.uniform_in(-a, a)))
                    .collect(),
            )
            .expect("head shape"),
            b: Tensor::zeros(&[classes]),
        }
    }
}

/// One row of the per-epoch training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
}

/// Pre-clip gradient norm bookkeeping for each outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepNorm {
    pub step: usize,
    pub pre_clip_norm: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub step_norms: Vec<StepNorm>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,acc,lr\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.accuracy, r.lr));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = None;
        for r in &self.epochs {
            if !(r.loss.is_finite() && r.accuracy.is_finite() && r.lr.is_finite()) {
                return Err(Error::Numerical(format!("non-finite log row {}", r.epoch)));
            }
            if let Some(prev) = last {
                if r.epoch <= prev {
                    return Err(Error::InvalidInput("epoch indices must increase".into()));
                }
            }
            last = Some(r.epoch);
        }
        Ok(())
    }
}

/// A trained embedding plus its (temporary) global classifier head.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub params: EmbeddingParams<f32>,
    pub head: Head<f32>,
    /// Global class indices present in the pool, ascending; head rows map
    /// onto this list.
    pub class_ids: Vec<usize>,
    pub log: TrainLog,
}

/// Flat sample pool over the training banks with compact labels.
struct Pool<'a> {
    images: Vec<&'a GrayImage>,
    labels: Vec<usize>,
    class_ids: Vec<usize>,
    n: usize,
}

fn build_pool<'a>(banks: &[&'a ImageBank]) -> Result<Pool<'a>> {
    if banks.is_empty() {
        return Err(Error::InvalidInput("no training tasks".into()));
    }
    let n = banks[0].n;
    if banks.iter().any(|b| b.n != n) {
        return Err(Error::ShapeMismatch(
            "all training tasks must share one image size".into(),
        ));
    }
    let n_classes = banks[0].classes.len();
    let mut present = vec![false; n_classes];
    for b in banks {
        for (ci, samples) in b.classes.iter().enumerate() {
            if !samples.is_empty() {
                present[ci] = true;
            }
        }
    }
    let class_ids: Vec<usize> = (0..n_classes).filter(|&c| present[c]).collect();
    let compact: Vec<Option<usize>> = {
        let mut m = vec![None; n_classes];
        for (local, &c) in class_ids.iter().enumerate() {
            m[c] = Some(local);
        }
        m
    };
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for b in banks {
        for (ci, samples) in b.classes.iter().enumerate() {
            if let Some(local) = compact[ci] {
                for img in samples {
                    images.push(img);
                    labels.push(local);
                }
            }
        }
    }
    if images.is_empty() {
        return Err(Error::InvalidInput("training pool is empty".into()));
    }
    Ok(Pool {
        images,
        labels,
        class_ids,
        n,
    })
}

fn argmax_accuracy<R: Real>(logits: &Tensor<R>, labels: &[usize]) -> f64 {
    let c = logits.shape[1];
    let mut hits = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits.data[i * c..(i + 1) * c];
        let mut best = 0;
        for j in 1..c {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == y {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

/// Shared trainer behind pretraining (no teacher) and self-distillation
/// (teacher present). With beta == 0 the teacher path is skipped entirely,
/// so the arithmetic sequence is identical to pretraining.
fn train_embedding(
    banks: &[&ImageBank],
    cfg: &MetaConfig,
    teacher: Option<&Pretrained>,
) -> Result<Pretrained> {
    cfg.validate()?;
    let pool = build_pool(banks)?;
    let n_classes = pool.class_ids.len();
    let dim = cfg.backbone.embed_dim(pool.n)?;

    let mut params = EmbeddingParams::<f32>::init(cfg.backbone, cfg.seed);
    let mut head = Head::<f32>::init(n_classes, dim, Rng::new(cfg.seed).fork(0x4EAD).next_u64());
    let mut opt = cfg.outer_optimizer()?;
    let schedule = cfg.schedule();
    let mut data_rng = Rng::new(cfg.seed).fork(0xDA7A);

    let use_teacher = teacher.is_some() && cfg.beta > 0.0;
    if use_teacher {
        let t = teacher.unwrap();
        if t.class_ids != pool.class_ids {
            return Err(Error::InvalidConfig(
                "teacher and student must share the class pool".into(),
            ));
        }
    }

    let mut log = TrainLog::default();
    let mut step = 0usize;
    let mut last_good = params.clone();
    let mut last_good_head = head.clone();

    for epoch in 0..cfg.epochs {
        opt.set_lr(schedule.lr_at(epoch));
        let mut loss_sum = 0.0f64;
        let mut acc_sum = 0.0f64;
        let take = cfg.batch_size.min(pool.images.len());

        for _ in 0..cfg.batches_per_epoch {
            let picks = data_rng.choose_indices(pool.images.len(), take);
            let images: Vec<&GrayImage> = picks.iter().map(|&i| pool.images[i]).collect();
            let labels: Vec<usize> = picks.iter().map(|&i| pool.labels[i]).collect();

            let (emb, cache) = forward(&params, &images)?;
            let logits = linear_forward(&emb, &head.w, &head.b)?;
            let (ce, dlogits_ce) = softmax_cross_entropy(&logits, &labels)?;

            let alpha_r = cfg.alpha as f32;
            let mut total = cfg.alpha * ce;
            let mut dlogits = Tensor::from_vec(
                &dlogits_ce.shape,
                dlogits_ce.data.iter().map(|&g| g * alpha_r).collect(),
            )?;
            if use_teacher {
                let t = teacher.unwrap();
                let (temb, _) = forward(&t.params, &images)?;
                let tlogits = linear_forward(&temb, &t.head.w, &t.head.b)?;
                let (kl, dkl) = kl_divergence(&logits, &tlogits)?;
                total += cfg.beta * kl;
                let beta_r = cfg.beta as f32;
                for (g, k) in dlogits.data.iter_mut().zip(&dkl.data) {
                    *g += beta_r * *k;
                }
            }

            if !total.is_finite() {
                if let Some(path) = &cfg.diverge_checkpoint {
                    let ck = pack(
                        &last_good,
                        &[
                            ("head.w".into(), last_good_head.w.clone()),
                            ("head.b".into(), last_good_head.b.clone()),
                        ],
                    );
                    ck.save(path)?;
                }
                return Err(Error::Diverged {
                    epoch,
                    message: "loss became non-finite".into(),
                });
            }

            let (dw, db, demb) = linear_backward(&emb, &head.w, &dlogits)?;
            let bgrads = backward(&params, &cache, &demb)?;

            let mut plist = params.tensors_mut();
            plist.push(&mut head.w);
            plist.push(&mut head.b);
            let mut glist: Vec<Tensor<f32>> = bgrads.tensors().into_iter().cloned().collect();
            glist.push(dw);
            glist.push(db);
            let norm = opt.clip_and_step(&mut plist, &glist)?;
            log.step_norms.push(StepNorm {
                step,
                pre_clip_norm: norm,
                clipped: norm > cfg.clip_norm,
            });
            step += 1;

            loss_sum += total;
            acc_sum += argmax_accuracy(&logits, &labels);
        }

        let denom = cfg.batches_per_epoch.max(1) as f64;
        log.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / denom,
            accuracy: acc_sum / denom,
            lr: schedule.lr_at(epoch),
        });
        last_good = params.clone();
        last_good_head = head.clone();
    }

    Ok(Pretrained {
        params,
        head,
        class_ids: pool.class_ids,
        log,
    })
}

/// Embedding pretraining: pooled-class cross-entropy through a temporary
/// global linear head, outer optimizer with the lr ramp.
pub fn pretrain_embedding(banks: &[&ImageBank], cfg: &MetaConfig) -> Result<Pretrained> {
    let mut ce_cfg = cfg.clone();
    ce_cfg.alpha = 1.0;
    ce_cfg.beta = 0.0;
    train_embedding(banks, &ce_cfg, None)
}

/// Self-distillation: a fresh student of the same architecture trained on
/// alpha * CE + beta * KL(student || teacher), teacher frozen.
pub fn self_distill(
    teacher: &Pretrained,
    banks: &[&ImageBank],
    cfg: &MetaConfig,
) -> Result<Pretrained> {
    train_embedding(banks, cfg, Some(teacher))
}

/// Adapted episode parameters: the head, and in Full mode the backbone copy.
#[derive(Debug, Clone)]
pub struct AdaptedParams {
    pub head: Head<f32>,
    pub params: Option<EmbeddingParams<f32>>,
    /// Support CE at the start of each inner step (trace[i+1] < trace[i]
    /// means step i reduced the loss).
    pub support_trace: Vec<f64>,
}

/// Inner-loop adaptation on one episode's support set: `steps` SGD updates
/// of the episode head (and, in Full mode, a backbone copy) on support CE.
/// The originals are untouched.
pub fn inner_adapt(
    head: &Head<f32>,
    params: &EmbeddingParams<f32>,
    support: &[(&GrayImage, usize)],
    steps: usize,
    inner_lr: f64,
    mode: InnerMode,
) -> Result<AdaptedParams> {
    if support.is_empty() {
        return Err(Error::InvalidInput("empty support set".into()));
    }
    let labels: Vec<usize> = support.iter().map(|&(_, y)| y).collect();
    let images: Vec<&GrayImage> = support.iter().map(|&(im, _)| im).collect();
    let lr = inner_lr as f32;
    let mut adapted_head = head.clone();
    let mut trace = Vec::with_capacity(steps);

    match mode {
        InnerMode::HeadOnly => {
            let (emb, _) = forward(params, &images)?;
            for _ in 0..steps {
                let logits = linear_forward(&emb, &adapted_head.w, &adapted_head.b)?;
                let (ce, dlogits) = softmax_cross_entropy(&logits, &labels)?;
                trace.push(ce);
                let (dw, db, _) = linear_backward(&emb, &adapted_head.w, &dlogits)?;
                for (p, g) in adapted_head.w.data.iter_mut().zip(&dw.data) {
                    *p -= lr * *g;
                }
                for (p, g) in adapted_head.b.data.iter_mut().zip(&db.data) {
                    *p -= lr * *g;
                }
            }
            Ok(AdaptedParams {
                head: adapted_head,
                params: None,
                support_trace: trace,
            })
        }
        InnerMode::Full => {
            let mut adapted = params.clone();
            for _ in 0..steps {
                let (emb, cache) = forward(&adapted, &images)?;
                let logits = linear_forward(&emb, &adapted_head.w, &adapted_head.b)?;
                let (ce, dlogits) = softmax_cross_entropy(&logits, &labels)?;
                trace.push(ce);
                let (dw, db, demb) = linear_backward(&emb, &adapted_head.w, &dlogits)?;
                let bgrads = backward(&adapted, &cache, &demb)?;
                for (p, g) in adapted.tensors_mut().into_iter().zip(bgrads.tensors()) {
                    for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                        *pv -= lr * *gv;
                    }
                }
                for (p, g) in adapted_head.w.data.iter_mut().zip(&dw.data) {
                    *p -= lr * *g;
                }
                for (p, g) in adapted_head.b.data.iter_mut().zip(&db.data) {
                    *p -= lr * *g;
                }
            }
            Ok(AdaptedParams {
                head: adapted_head,
                params: Some(adapted),
                support_trace: trace,
            })
        }
    }
}

/// Episodically meta-trained model: shared backbone plus the shared
/// episode-head initialization.
#[derive(Debug, Clone)]
pub struct MetaModel {
    pub params: EmbeddingParams<f32>,
    pub head: Head<f32>,
    pub n_way: usize,
}

/// First-order MAML over episodes: inner adaptation on copies, query-loss
/// gradients taken at the adapted parameters, one clipped outer step per
/// meta-batch. The logged epoch loss is the arithmetic mean of per-episode
/// query losses.
pub fn meta_train(banks: &[&ImageBank], cfg: &MetaConfig) -> Result<(MetaModel, TrainLog)> {
    cfg.validate()?;
    if banks.is_empty() {
        return Err(Error::InvalidInput("empty meta-train split".into()));
    }
    let n = banks[0].n;
    let dim = cfg.backbone.embed_dim(n)?;
    let mut params = EmbeddingParams::<f32>::init(cfg.backbone, cfg.seed);
    let mut head = Head::<f32>::init(cfg.n_way, dim, Rng::new(cfg.seed).fork(0x4EAD).next_u64());
    let mut opt = cfg.outer_optimizer()?;
    let schedule = cfg.schedule();
    let mut rng = Rng::new(cfg.seed).fork(0xE915);

    let mut log = TrainLog::default();
    let mut step = 0usize;
    let mut last_good = params.clone();
    let mut last_good_head = head.clone();

    for epoch in 0..cfg.epochs {
        opt.set_lr(schedule.lr_at(epoch));
        if cfg.episodes_per_epoch == 0 {
            continue;
        }
        let mut ep_losses = Vec::with_capacity(cfg.episodes_per_epoch);
        let mut ep_accs = Vec::with_capacity(cfg.episodes_per_epoch);

        let mut remaining = cfg.episodes_per_epoch;
        while remaining > 0 {
            let batch = cfg.meta_batch_tasks.max(1).min(remaining);
            remaining -= batch;

            // Fixed-order f64 accumulators over the meta-batch.
            let mut acc: Vec<Vec<f64>> = params
                .tensors()
                .iter()
                .map(|t| vec![0.0f64; t.numel()])
                .collect();
            let mut acc_w = vec![0.0f64; head.w.numel()];
            let mut acc_b = vec![0.0f64; head.b.numel()];

            for _ in 0..batch {
                let bank = banks[rng.index(banks.len())];
                let counts: Vec<usize> = bank.classes.iter().map(|c| c.len()).collect();
                let episode = sample_episode_from_counts(
                    bank.task_id,
                    &counts,
                    cfg.n_way,
                    cfg.k_shot,
                    cfg.q_per_class,
                    &mut rng,
                )?;
                let support = bank.resolve(&episode, &episode.support)?;
                let query = bank.resolve(&episode, &episode.query)?;

                let adapted = inner_adapt(
                    &head,
                    &params,
                    &support,
                    cfg.inner_steps,
                    cfg.inner_lr,
                    cfg.inner_mode,
                )?;
                let eval_params = adapted.params.as_ref().unwrap_or(&params);

                let q_images: Vec<&GrayImage> = query.iter().map(|&(im, _)| im).collect();
                let q_labels: Vec<usize> = query.iter().map(|&(_, y)| y).collect();
                let (qemb, qcache) = forward(eval_params, &q_images)?;
                let logits = linear_forward(&qemb, &adapted.head.w, &adapted.head.b)?;
                let (qloss, dlogits) = softmax_cross_entropy(&logits, &q_labels)?;

                if !qloss.is_finite() {
                    if let Some(path) = &cfg.diverge_checkpoint {
                        let ck = pack(
                            &last_good,
                            &[
                                ("head.w".into(), last_good_head.w.clone()),
                                ("head.b".into(), last_good_head.b.clone()),
                            ],
                        );
                        ck.save(path)?;
                    }
                    return Err(Error::Diverged {
                        epoch,
                        message: "query loss became non-finite".into(),
                    });
                }
                ep_losses.push(qloss);
                ep_accs.push(argmax_accuracy(&logits, &q_labels));

                let (dw, db, demb) = linear_backward(&qemb, &adapted.head.w, &dlogits)?;
                let bgrads = backward(eval_params, &qcache, &demb)?;
                for (slots, t) in acc.iter_mut().zip(bgrads.tensors()) {
                    for (s, v) in slots.iter_mut().zip(&t.data) {
                        *s += v.to_f64();
                    }
                }
                for (s, v) in acc_w.iter_mut().zip(&dw.data) {
                    *s += v.to_f64();
                }
                for (s, v) in acc_b.iter_mut().zip(&db.data) {
                    *s += v.to_f64();
                }
            }

            // Mean over the meta-batch, then one clipped outer step.
            let inv = 1.0 / batch as f64;
            let mut glist: Vec<Tensor<f32>> = Vec::with_capacity(acc.len() + 2);
            for (slots, t) in acc.iter().zip(params.tensors()) {
                glist.push(Tensor::from_vec(
                    &t.shape,
                    slots.iter().map(|&v| (v * inv) as f32).collect(),
                )?);
            }
            glist.push(Tensor::from_vec(
                &head.w.shape,
                acc_w.iter().map(|&v| (v * inv) as f32).collect(),
            )?);
            glist.push(Tensor::from_vec(
                &head.b.shape,
                acc_b.iter().map(|&v| (v * inv) as f32).collect(),
            )?);

            let mut plist = params.tensors_mut();
            plist.push(&mut head.w);
            plist.push(&mut head.b);
            let norm = opt.clip_and_step(&mut plist, &glist)?;
            log.step_norms.push(StepNorm {
                step,
                pre_clip_norm: norm,
                clipped: norm > cfg.clip_norm,
            });
            step += 1;
        }

        let count = ep_losses.len() as f64;
        log.epochs.push(EpochRecord {
            epoch,
            loss: ep_losses.iter().sum::<f64>() / count,
            accuracy: ep_accs.iter().sum::<f64>() / count,
            lr: schedule.lr_at(epoch),
        });
        last_good = params.clone();
        last_good_head = head.clone();
    }

    Ok((
        MetaModel {
            params,
            head,
            n_way: cfg.n_way,
        },
        log,
    ))
}

/// Freeze the backbone and fit fresh heads on an unseen task's episodes;
/// reports mean query accuracy with a 95% confidence interval.
pub fn adapt_to_unseen(
    params: &EmbeddingParams<f32>,
    unseen: &ImageBank,
    n_way: usize,
    k_shot: usize,
    q_per_class: usize,
    episodes: usize,
    head_cfg: &HeadFitCfg,
    seed: u64,
) -> Result<EvalReport> {
    let model = EvalModel {
        params,
        head: HeadKind::Linear(*head_cfg),
    };
    let protocol = EvalProtocol {
        n_way,
        k_shot,
        q_per_class,
        episodes,
        seed,
    };
    let (report, _) = evaluate(&model, &[unseen], &protocol)?;
    Ok(report)
}
