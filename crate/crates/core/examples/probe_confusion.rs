//! Scratch experiment: teacher + student confusion diagnostics at
//! acceptance scale.

use faultmeta::adapt::MetricConfig;
use faultmeta::config::PipelineConfig;
use faultmeta::episodes::{image_bank, ImageBank};
use faultmeta::eval::{evaluate, EvalModel, EvalProtocol, HeadKind};
use faultmeta::metalearn::{pretrain_embedding, self_distill};
use faultmeta::net::backbone::EmbeddingParams;
use faultmeta::pipeline::generate_data;
use std::time::Instant;

fn report(tag: &str, params: &EmbeddingParams<f32>, bank: &ImageBank) {
    for (label, head) in [
        ("linear", HeadKind::Linear(Default::default())),
        ("metric t0.1", HeadKind::Metric(MetricConfig { temperature: 0.1 })),
    ] {
        for k in [1usize, 5] {
            let p = EvalProtocol { n_way: 6, k_shot: k, q_per_class: 15, episodes: 150, seed: 3 };
            let model = EvalModel { params, head };
            let (r, _) = evaluate(&model, &[bank], &p).unwrap();
            println!("[{tag}] {label} 6-way {k}-shot: {:.4} +/- {:.4}", r.mean_accuracy, r.ci95);
        }
    }
    let p = EvalProtocol { n_way: 9, k_shot: 5, q_per_class: 10, episodes: 80, seed: 5 };
    let model = EvalModel { params, head: HeadKind::Linear(Default::default()) };
    let (r, _) = evaluate(&model, &[bank], &p).unwrap();
    println!("[{tag}] 9-way 5-shot {:.4}; per-class recall:", r.mean_accuracy);
    let names = ["healthy", "brb1", "brb2", "brb3", "ecc_s", "ecc_d", "b_out", "b_cage", "b_ball"];
    for (i, row) in r.confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        let cells: Vec<String> = row.iter().map(|c| format!("{:4}", c)).collect();
        println!("[{tag}] {:8} {} ({:.2})", names[i], cells.join(" "), row[i] as f64 / total as f64);
    }
}

fn main() {
    let mut cfg = PipelineConfig::default();
    cfg.train.pretrain_epochs = 200;
    cfg.train.distill_epochs = 100;
    let t0 = Instant::now();
    let data = generate_data(&cfg).unwrap();
    let train_banks: Vec<ImageBank> = data
        .split
        .train_tasks
        .iter()
        .map(|id| image_bank(data.tasks.iter().find(|t| t.task_id == *id).unwrap(), &cfg.imaging).unwrap())
        .collect();
    let eval_bank = image_bank(data.tasks.iter().find(|t| t.task_id == 4).unwrap(), &cfg.imaging).unwrap();
    println!("data {:.0}s", t0.elapsed().as_secs_f64());
    let refs: Vec<&ImageBank> = train_banks.iter().collect();

    let t1 = Instant::now();
    let teacher = pretrain_embedding(&refs, &cfg.pretrain_cfg()).unwrap();
    println!("teacher {:.0}s", t1.elapsed().as_secs_f64());
    std::fs::write("/tmp/teacher.ck", faultmeta::pipeline::checkpoint_of(&teacher).unwrap()).unwrap();
    report("teacher", &teacher.params, &eval_bank);

    let t2 = Instant::now();
    let student = self_distill(&teacher, &refs, &cfg.distill_cfg()).unwrap();
    println!("student {:.0}s", t2.elapsed().as_secs_f64());
    std::fs::write("/tmp/student.ck", faultmeta::pipeline::checkpoint_of(&student).unwrap()).unwrap();
    report("student", &student.params, &eval_bank);
}
