//! Scratch experiment: the acceptance-shaped pipeline end to end, with
//! stage timings.

use faultmeta::config::PipelineConfig;
use faultmeta::pipeline::run_pipeline;
use std::time::Instant;

fn main() {
    let mut cfg = PipelineConfig::default();
    cfg.train.pretrain_epochs = 200;
    cfg.train.distill_epochs = 100;
    cfg.eval.k_shots = vec![1, 5];
    cfg.eval.episodes = 600;
    let t0 = Instant::now();
    let out = run_pipeline(&cfg).unwrap();
    let total = t0.elapsed().as_secs_f64();
    println!(
        "pretrain final: loss {:.4} acc {:.4}",
        out.pretrained.log.epochs.last().unwrap().loss,
        out.pretrained.log.epochs.last().unwrap().accuracy
    );
    println!(
        "distill  final: loss {:.4} acc {:.4}",
        out.distilled.log.epochs.last().unwrap().loss,
        out.distilled.log.epochs.last().unwrap().accuracy
    );
    for r in &out.reports {
        println!(
            "6-way {}-shot over {} episodes: {:.4} +/- {:.4}",
            r.k_shot, r.episodes, r.mean_accuracy, r.ci95
        );
    }
    println!("total wall clock: {total:.0}s");
}
