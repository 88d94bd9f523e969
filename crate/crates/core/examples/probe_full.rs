//! Scratch experiment: acceptance-scale pretraining with confusion
//! diagnostics, comparing the default morphology chain against the
//! identity imaging pipeline.

use faultmeta::adapt::MetricConfig;
use faultmeta::episodes::{build_tasks, default_task_specs, image_bank, ImageBank};
use faultmeta::eval::{evaluate, EvalModel, EvalProtocol, HeadKind};
use faultmeta::imaging::ImagingConfig;
use faultmeta::metalearn::{pretrain_embedding, MetaConfig};
use faultmeta::signalgen::{build_corpus, CorpusCfg};
use std::time::Instant;

fn run(tag: &str, img_cfg: &ImagingConfig, epochs: usize) {
    let t0 = Instant::now();
    let corpus = build_corpus(&CorpusCfg::default(), 42).unwrap();
    let tasks = build_tasks(&corpus, &default_task_specs(3000), 3).unwrap();
    let train_banks: Vec<ImageBank> = [0usize, 1, 2, 3, 5]
        .iter()
        .map(|&i| image_bank(&tasks[i], img_cfg).unwrap())
        .collect();
    let eval_bank = image_bank(&tasks[4], img_cfg).unwrap();
    println!("[{tag}] data ready {:.0}s", t0.elapsed().as_secs_f64());

    let refs: Vec<&ImageBank> = train_banks.iter().collect();
    let cfg = MetaConfig {
        epochs,
        seed: 7,
        batches_per_epoch: 8,
        ..MetaConfig::default()
    };
    let t1 = Instant::now();
    let pre = pretrain_embedding(&refs, &cfg).unwrap();
    for r in pre.log.epochs.iter().step_by(20) {
        println!("[{tag}] epoch {:3} loss {:.3} acc {:.3} lr {:.2e}", r.epoch, r.loss, r.accuracy, r.lr);
    }
    let last = pre.log.epochs.last().unwrap();
    println!(
        "[{tag}] pretrain {} epochs: {:.0}s, CE {:.3}, acc {:.3}",
        epochs,
        t1.elapsed().as_secs_f64(),
        last.loss,
        last.accuracy
    );

    for (label, head) in [
        ("linear", HeadKind::Linear(Default::default())),
        ("metric t=0.1", HeadKind::Metric(MetricConfig { temperature: 0.1 })),
    ] {
        let model = EvalModel { params: &pre.params, head };
        for k in [1usize, 5] {
            let p = EvalProtocol { n_way: 6, k_shot: k, q_per_class: 15, episodes: 100, seed: 3 };
            let (r, _) = evaluate(&model, &[&eval_bank], &p).unwrap();
            println!("[{tag}] {label} 6-way {k}-shot: {:.3} +/- {:.3}", r.mean_accuracy, r.ci95);
        }
    }

    // 9-way confusion to find the confusable classes
    let model = EvalModel {
        params: &pre.params,
        head: HeadKind::Linear(Default::default()),
    };
    let p = EvalProtocol { n_way: 9, k_shot: 5, q_per_class: 10, episodes: 60, seed: 5 };
    let (r, _) = evaluate(&model, &[&eval_bank], &p).unwrap();
    println!("[{tag}] 9-way 5-shot acc {:.3}; confusion rows:", r.mean_accuracy);
    let names = ["healthy", "brb1", "brb2", "brb3", "ecc_s", "ecc_d", "b_out", "b_cage", "b_ball"];
    for (i, row) in r.confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        let cells: Vec<String> = row.iter().map(|c| format!("{:4}", c)).collect();
        println!("[{tag}] {:8} {} ({:.2})", names[i], cells.join(" "), row[i] as f64 / total as f64);
    }
}

fn main() {
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let close3 = ImagingConfig {
        chain: vec![faultmeta::imaging::MorphStep {
            op: faultmeta::imaging::MorphOp::Close,
            shape: faultmeta::imaging::SeShape::Square,
            size: 3,
        }],
    };
    run("identity", &ImagingConfig::identity(), epochs);
    run("close3", &close3, epochs);
    run("open3", &ImagingConfig::default(), epochs);
}
