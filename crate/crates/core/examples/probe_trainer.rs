//! Scratch experiment: can the trainer fit trivially separable images?

use faultmeta::episodes::ImageBank;
use faultmeta::eval::{evaluate, EvalModel, EvalProtocol, HeadKind};
use faultmeta::adapt::MetricConfig;
use faultmeta::imaging::GrayImage;
use faultmeta::metalearn::{pretrain_embedding, MetaConfig};
use faultmeta::net::backbone::BackboneCfg;
use faultmeta::rng::Rng;

fn toy_bank(n: usize, per_class: usize, noise: f32, seed: u64) -> ImageBank {
    let mut rng = Rng::new(seed);
    let mut classes = Vec::new();
    for ci in 0..9usize {
        let mut imgs = Vec::new();
        for _ in 0..per_class {
            let phase = rng.uniform() * std::f64::consts::TAU;
            let freq = 1.0 + ci as f64; // class-specific spatial frequency
            let pixels: Vec<f32> = (0..n * n)
                .map(|k| {
                    let col = (k % n) as f64 / n as f64;
                    let v = (std::f64::consts::TAU * freq * col + phase).sin() as f32;
                    v + noise * rng.gaussian() as f32
                })
                .collect();
            imgs.push(GrayImage::new(n, pixels).unwrap());
        }
        classes.push(imgs);
    }
    ImageBank {
        task_id: 0,
        classes,
        n,
        snr_db: None,
    }
}

fn main() {
    let bank = toy_bank(16, 40, 0.1, 3);
    let refs = [&bank];
    for (label, lr_start, lr_end, epochs) in [
        ("fast 1e-3..1e-2, 60 ep", 1e-3, 1e-2, 60usize),
        ("paper 1e-6..5e-5, 200 ep", 1e-6, 5e-5, 200),
    ] {
        let cfg = MetaConfig {
            backbone: BackboneCfg { blocks: 2, channels: 8 },
            seed: 11,
            batch_size: 32,
            batches_per_epoch: 4,
            epochs,
            lr_start,
            lr_end,
            ..MetaConfig::default()
        };
        let pre = pretrain_embedding(&refs, &cfg).unwrap();
        let last = pre.log.epochs.last().unwrap();
        let model = EvalModel {
            params: &pre.params,
            head: HeadKind::Metric(MetricConfig { temperature: 0.1 }),
        };
        let protocol = EvalProtocol { n_way: 6, k_shot: 5, q_per_class: 5, episodes: 50, seed: 3 };
        let (r, _) = evaluate(&model, &refs, &protocol).unwrap();
        println!(
            "{label}: final CE {:.4} acc {:.3} | metric 6-way 5-shot {:.3}",
            last.loss, last.accuracy, r.mean_accuracy
        );
    }
}
