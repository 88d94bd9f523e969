//! Scratch experiment: how separable are the synthetic classes, before and
//! after pretraining, at the tiny and production scales?

use faultmeta::adapt::{predict_metric, MetricConfig};
use faultmeta::episodes::{build_tasks, default_task_specs, image_bank, sample_episode_from_counts, ImageBank};
use faultmeta::eval::{evaluate, EvalModel, EvalProtocol, HeadKind};
use faultmeta::imaging::ImagingConfig;
use faultmeta::metalearn::{pretrain_embedding, MetaConfig};
use faultmeta::net::backbone::{BackboneCfg, EmbeddingParams};
use faultmeta::net::tensor::Tensor;
use faultmeta::rng::Rng;
use faultmeta::signalgen::{build_corpus, CorpusCfg, MotorConfig};
use std::time::Instant;

fn centroid_accuracy(bank: &ImageBank, n_way: usize, k_shot: usize, episodes: usize) -> f64 {
    let counts: Vec<usize> = bank.classes.iter().map(|c| c.len()).collect();
    let mut rng = Rng::new(99);
    let mut hits = 0usize;
    let mut total = 0usize;
    for _ in 0..episodes {
        let ep = sample_episode_from_counts(bank.task_id, &counts, n_way, k_shot, 5, &mut rng).unwrap();
        let dim = bank.n * bank.n;
        let mut centroids = vec![vec![0.0f64; dim]; n_way];
        for &(local, idx) in &ep.support {
            let img = &bank.classes[ep.class_map[local]][idx];
            for (c, p) in centroids[local].iter_mut().zip(&img.pixels) {
                *c += *p as f64;
            }
        }
        for c in centroids.iter_mut() {
            for v in c.iter_mut() {
                *v /= k_shot as f64;
            }
        }
        for &(local, idx) in &ep.query {
            let img = &bank.classes[ep.class_map[local]][idx];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, c) in centroids.iter().enumerate() {
                let d: f64 = c
                    .iter()
                    .zip(&img.pixels)
                    .map(|(a, b)| (a - *b as f64) * (a - *b as f64))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            if best == local {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}

fn metric_on_random_embeddings(bank: &ImageBank, backbone: BackboneCfg, episodes: usize) -> f64 {
    let params = EmbeddingParams::<f32>::init(backbone, 5);
    let model = EvalModel {
        params: &params,
        head: HeadKind::Metric(MetricConfig { temperature: 0.1 }),
    };
    let protocol = EvalProtocol {
        n_way: 3,
        k_shot: 5,
        q_per_class: 5,
        episodes,
        seed: 3,
    };
    evaluate(&model, &[bank], &protocol).map(|(r, _)| r.mean_accuracy).unwrap_or(f64::NAN)
}

fn main() {
    // tiny scale, 1 kHz so a 256-sample window spans 0.26 s
    let tiny_corpus_cfg = CorpusCfg {
        n: 16,
        stride: 256,
        signals_per_pool: 2,
        windows_per_signal: 16,
        motor: MotorConfig {
            sample_rate_hz: 1000.0,
            ..MotorConfig::default()
        },
        ..CorpusCfg::default()
    };
    let t0 = Instant::now();
    let corpus = build_corpus(&tiny_corpus_cfg, 42).unwrap();
    let tasks = build_tasks(&corpus, &default_task_specs(135), 3).unwrap();
    let bank = image_bank(&tasks[0], &ImagingConfig::default()).unwrap();
    println!("tiny corpus+bank: {:.1}s", t0.elapsed().as_secs_f64());
    println!(
        "tiny 16x16@1kHz  centroid 3-way 5-shot: {:.3}",
        centroid_accuracy(&bank, 3, 5, 100)
    );
    let bb = BackboneCfg { blocks: 2, channels: 8 };
    println!(
        "tiny 16x16@1kHz  random-emb metric:     {:.3}",
        metric_on_random_embeddings(&bank, bb, 50)
    );

    // quick pretrain on tiny
    let banks: Vec<ImageBank> = tasks[..2]
        .iter()
        .map(|t| image_bank(t, &ImagingConfig::default()).unwrap())
        .collect();
    let refs: Vec<&ImageBank> = banks.iter().collect();
    let cfg = MetaConfig {
        backbone: bb,
        seed: 11,
        batch_size: 32,
        batches_per_epoch: 4,
        epochs: 60,
        lr_start: 1e-3,
        lr_end: 1e-2,
        ..MetaConfig::default()
    };
    let t1 = Instant::now();
    let pre = pretrain_embedding(&refs, &cfg).unwrap();
    println!(
        "tiny pretrain 60 epochs: {:.1}s, final CE {:.3}, final acc {:.3}",
        t1.elapsed().as_secs_f64(),
        pre.log.epochs.last().unwrap().loss,
        pre.log.epochs.last().unwrap().accuracy
    );
    let model = EvalModel {
        params: &pre.params,
        head: HeadKind::Metric(MetricConfig { temperature: 0.1 }),
    };
    let protocol = EvalProtocol { n_way: 3, k_shot: 5, q_per_class: 5, episodes: 100, seed: 3 };
    let (r, _) = evaluate(&model, &[&bank], &protocol).unwrap();
    println!("tiny pretrained metric 3-way 5-shot: {:.3}", r.mean_accuracy);

    // production scale: 64x64 @ 10 kHz
    let prod_cfg = CorpusCfg {
        signals_per_pool: 4,
        windows_per_signal: 12,
        ..CorpusCfg::default()
    };
    let t2 = Instant::now();
    let corpus = build_corpus(&prod_cfg, 42).unwrap();
    let tasks = build_tasks(&corpus, &default_task_specs(315), 3).unwrap();
    let bank = image_bank(&tasks[0], &ImagingConfig::default()).unwrap();
    println!("prod corpus+bank: {:.1}s", t2.elapsed().as_secs_f64());
    println!(
        "prod 64x64@10kHz centroid 6-way 5-shot: {:.3}",
        centroid_accuracy(&bank, 6, 5, 50)
    );
    println!(
        "prod 64x64@10kHz random-emb metric 3-way: {:.3}",
        metric_on_random_embeddings(&bank, BackboneCfg::default(), 30)
    );

    // short prod pretrain to gauge learnability
    let banks: Vec<ImageBank> = tasks[..3]
        .iter()
        .map(|t| image_bank(t, &ImagingConfig::default()).unwrap())
        .collect();
    let refs2: Vec<&ImageBank> = banks.iter().collect();
    let cfg = MetaConfig {
        epochs: 60,
        batches_per_epoch: 6,
        seed: 11,
        ..MetaConfig::default()
    };
    let t3 = Instant::now();
    let pre = pretrain_embedding(&refs2, &cfg).unwrap();
    println!(
        "prod pretrain 60 epochs: {:.0}s, final CE {:.3} acc {:.3}",
        t3.elapsed().as_secs_f64(),
        pre.log.epochs.last().unwrap().loss,
        pre.log.epochs.last().unwrap().accuracy
    );
    for (label, head) in [
        ("metric t=0.1", HeadKind::Metric(MetricConfig { temperature: 0.1 })),
        ("linear", HeadKind::Linear(Default::default())),
    ] {
        let model = EvalModel { params: &pre.params, head };
        for k in [1usize, 5] {
            let protocol = EvalProtocol { n_way: 6, k_shot: k, q_per_class: 15, episodes: 60, seed: 3 };
            let (r, _) = evaluate(&model, &[&bank], &protocol).unwrap();
            println!("prod {label} 6-way {k}-shot: {:.3} +/- {:.3}", r.mean_accuracy, r.ci95);
        }
    }
    let _ = predict_metric::<f32>(
        &Tensor::zeros(&[1, 2]),
        &Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap(),
        &[0],
        1,
        &MetricConfig::default(),
    );
}
