//! End-to-end orchestration: corpus -> tasks -> split -> pretrain ->
//! distill -> evaluate, shared by the CLI and the acceptance suite.

use crate::adapt::MetricConfig;
use crate::config::PipelineConfig;
use crate::episodes::{
    build_tasks, default_task_specs, image_bank, meta_split, ImageBank, MetaSplit, TaskDataset,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalModel, EvalProtocol, EvalReport, HeadKind};
use crate::metalearn::{pretrain_embedding, self_distill, Pretrained};
use crate::net::checkpoint::{pack, Checkpoint};
use crate::signalgen::{build_corpus, Corpus};
use serde::Serialize;

/// Everything the generation stage produces.
pub struct GeneratedData {
    pub corpus: Corpus,
    pub tasks: Vec<TaskDataset>,
    pub split: MetaSplit,
}

pub fn generate_data(cfg: &PipelineConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let corpus = build_corpus(&cfg.corpus, cfg.seed)?;
    let specs = cfg
        .task_specs
        .clone()
        .unwrap_or_else(|| default_task_specs(cfg.task_samples));
    let tasks = build_tasks(&corpus, &specs, cfg.seed ^ 0x5EED)?;
    let ids: Vec<usize> = tasks.iter().map(|t| t.task_id).collect();
    let split = meta_split(&ids, cfg.split.clone())?;
    Ok(GeneratedData {
        corpus,
        tasks,
        split,
    })
}

pub fn banks_for<'a>(
    tasks: &'a [TaskDataset],
    ids: &[usize],
    cfg: &PipelineConfig,
) -> Result<Vec<ImageBank>> {
    ids.iter()
        .map(|id| {
            let task = tasks
                .iter()
                .find(|t| t.task_id == *id)
                .ok_or_else(|| Error::InvalidInput(format!("no task with id {id}")))?;
            image_bank(task, &cfg.imaging)
        })
        .collect()
}

pub fn head_kind(cfg: &PipelineConfig) -> HeadKind {
    match cfg.eval.head.as_str() {
        "metric" => HeadKind::Metric(MetricConfig {
            temperature: cfg.eval.metric_temperature,
        }),
        "inner_sgd" => HeadKind::InnerSgd {
            steps: cfg.eval.inner_sgd_steps,
            lr: cfg.eval.inner_sgd_lr,
        },
        _ => HeadKind::Linear(cfg.eval.head_fit),
    }
}

/// Checkpoint bytes for a trained embedding (backbone plus classifier head
/// and the class list it maps onto).
pub fn checkpoint_of(model: &Pretrained) -> Result<Vec<u8>> {
    let class_tensor = crate::net::tensor::Tensor::from_vec(
        &[model.class_ids.len()],
        model.class_ids.iter().map(|&c| c as f32).collect(),
    )?;
    pack(
        &model.params,
        &[
            ("head.w".into(), model.head.w.clone()),
            ("head.b".into(), model.head.b.clone()),
            ("head.classes".into(), class_tensor),
        ],
    )
    .to_bytes()
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub pretrain_final_loss: f64,
    pub distill_final_loss: f64,
    pub eval_task_ids: Vec<usize>,
    pub reports: Vec<EvalReport>,
}

/// The full default pipeline. Evaluation runs on the first clean meta-test
/// task (T4 under the default split) with the configured head, once per
/// configured shot count.
pub struct PipelineOutcome {
    pub pretrained: Pretrained,
    pub distilled: Pretrained,
    pub eval_task_id: usize,
    pub reports: Vec<EvalReport>,
    pub summary: PipelineSummary,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let data = generate_data(cfg)?;
    let train_banks = banks_for(&data.tasks, &data.split.train_tasks, cfg)?;
    let train_refs: Vec<&ImageBank> = train_banks.iter().collect();

    let pretrained = pretrain_embedding(&train_refs, &cfg.pretrain_cfg())?;
    let distilled = self_distill(&pretrained, &train_refs, &cfg.distill_cfg())?;

    let eval_task_id = data
        .split
        .test_tasks
        .iter()
        .copied()
        .find(|id| {
            data.tasks
                .iter()
                .any(|t| t.task_id == *id && t.snr_db.is_none())
        })
        .or_else(|| data.split.test_tasks.first().copied())
        .ok_or_else(|| Error::InvalidInput("no meta-test task to evaluate".into()))?;
    let eval_banks = banks_for(&data.tasks, &[eval_task_id], cfg)?;

    let model = EvalModel {
        params: &distilled.params,
        head: head_kind(cfg),
    };
    let mut reports = Vec::new();
    for &k in &cfg.eval.k_shots {
        let protocol = EvalProtocol {
            n_way: cfg.eval.n_way,
            k_shot: k,
            q_per_class: cfg.eval.q_per_class,
            episodes: cfg.eval.episodes,
            seed: cfg.seed ^ 0xEAA1,
        };
        let (report, _) = evaluate(&model, &[&eval_banks[0]], &protocol)?;
        reports.push(report);
    }

    let summary = PipelineSummary {
        seed: cfg.seed,
        pretrain_final_loss: pretrained.log.epochs.last().map(|r| r.loss).unwrap_or(0.0),
        distill_final_loss: distilled.log.epochs.last().map(|r| r.loss).unwrap_or(0.0),
        eval_task_ids: vec![eval_task_id],
        reports: reports.clone(),
    };

    Ok(PipelineOutcome {
        pretrained,
        distilled,
        eval_task_id,
        reports,
        summary,
    })
}

/// Deterministic artifacts for byte-identity checks: the distilled
/// checkpoint and the summary JSON.
pub fn pipeline_artifacts(outcome: &PipelineOutcome) -> Result<(Vec<u8>, String)> {
    let ck = checkpoint_of(&outcome.distilled)?;
    let json = serde_json::to_string_pretty(&outcome.summary)?;
    Ok((ck, json))
}

/// Reusable loader: checkpoint bytes back into a Pretrained (class list
/// included).
pub fn load_pretrained(bytes: &[u8]) -> Result<Pretrained> {
    let ck = Checkpoint::from_bytes(bytes)?;
    let params = crate::net::checkpoint::unpack(&ck)?;
    let head_w = ck
        .get("head.w")
        .cloned()
        .ok_or_else(|| Error::Checkpoint("missing head.w".into()))?;
    let head_b = ck
        .get("head.b")
        .cloned()
        .ok_or_else(|| Error::Checkpoint("missing head.b".into()))?;
    let class_ids = ck
        .get("head.classes")
        .map(|t| t.data.iter().map(|&v| v as usize).collect())
        .unwrap_or_default();
    Ok(Pretrained {
        params,
        head: crate::metalearn::Head {
            w: head_w,
            b: head_b,
        },
        class_ids,
        log: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::CorpusCfg;

    /// A deliberately tiny configuration that still runs every stage.
    pub(crate) fn tiny_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 13;
        let mut motor = crate::signalgen::MotorConfig::default();
        motor.sample_rate_hz = 1000.0;
        cfg.corpus = CorpusCfg {
            n: 16,
            stride: 256,
            signals_per_pool: 2,
            windows_per_signal: 16,
            motor,
            ..CorpusCfg::default()
        };
        cfg.task_samples = 90;
        cfg.train.backbone = crate::net::backbone::BackboneCfg {
            blocks: 2,
            channels: 8,
        };
        cfg.train.batch_size = 16;
        cfg.train.batches_per_epoch = 2;
        cfg.train.pretrain_epochs = 6;
        cfg.train.distill_epochs = 4;
        cfg.train.lr_start = 1e-3;
        cfg.train.lr_end = 1e-2;
        cfg.eval.k_shots = vec![1, 5];
        cfg.eval.episodes = 10;
        cfg.eval.q_per_class = 3;
        cfg
    }

    #[test]
    fn tiny_pipeline_runs_every_stage() {
        let cfg = tiny_config();
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.eval_task_id, 4);
        assert_eq!(out.reports.len(), 2);
        for r in &out.reports {
            r.validate().unwrap();
        }
        assert_eq!(out.reports[0].k_shot, 1);
        assert_eq!(out.reports[1].k_shot, 5);
    }

    #[test]
    fn pipeline_artifacts_are_byte_identical_across_runs() {
        let cfg = tiny_config();
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&cfg).unwrap();
        let (ck_a, json_a) = pipeline_artifacts(&a).unwrap();
        let (ck_b, json_b) = pipeline_artifacts(&b).unwrap();
        assert_eq!(ck_a, ck_b);
        assert_eq!(json_a, json_b);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_model() {
        let cfg = tiny_config();
        let out = run_pipeline(&cfg).unwrap();
        let bytes = checkpoint_of(&out.distilled).unwrap();
        let loaded = load_pretrained(&bytes).unwrap();
        assert_eq!(loaded.params, out.distilled.params);
        assert_eq!(loaded.head.w, out.distilled.head.w);
        assert_eq!(loaded.class_ids, out.distilled.class_ids);
    }
}
