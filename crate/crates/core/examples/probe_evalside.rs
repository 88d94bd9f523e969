//! Scratch experiment: eval-side knobs on a saved checkpoint.

use faultmeta::adapt::{HeadFitCfg, MetricConfig};
use faultmeta::config::PipelineConfig;
use faultmeta::episodes::image_bank;
use faultmeta::eval::{evaluate, EvalModel, EvalProtocol, HeadKind};
use faultmeta::pipeline::{generate_data, load_pretrained};

fn main() {
    let path = std::env::args().nth(1).unwrap_or("/tmp/teacher.ck".into());
    let model = load_pretrained(&std::fs::read(path).unwrap()).unwrap();
    let cfg = PipelineConfig::default();
    let data = generate_data(&cfg).unwrap();
    let bank = image_bank(data.tasks.iter().find(|t| t.task_id == 4).unwrap(), &cfg.imaging).unwrap();

    let heads: Vec<(String, HeadKind)> = vec![
        ("linear l=0.01".into(), HeadKind::Linear(HeadFitCfg::default())),
        ("linear l=0.001".into(), HeadKind::Linear(HeadFitCfg { lambda: 0.001, ..Default::default() })),
        ("linear l=0.1".into(), HeadKind::Linear(HeadFitCfg { lambda: 0.1, ..Default::default() })),
        ("linear l=1.0".into(), HeadKind::Linear(HeadFitCfg { lambda: 1.0, ..Default::default() })),
        ("linear 3000 steps".into(), HeadKind::Linear(HeadFitCfg { max_steps: 3000, ..Default::default() })),
        ("metric t=0.05".into(), HeadKind::Metric(MetricConfig { temperature: 0.05 })),
        ("metric t=0.3".into(), HeadKind::Metric(MetricConfig { temperature: 0.3 })),
        ("sgd 200x0.5".into(), HeadKind::InnerSgd { steps: 200, lr: 0.5 }),
    ];
    for (label, head) in heads {
        let mut line = format!("{label:18}");
        for k in [1usize, 5] {
            let p = EvalProtocol { n_way: 6, k_shot: k, q_per_class: 15, episodes: 120, seed: 3 };
            let model_ref = EvalModel { params: &model.params, head };
            let (r, _) = evaluate(&model_ref, &[&bank], &p).unwrap();
            line.push_str(&format!("  {k}-shot {:.4}", r.mean_accuracy));
        }
        println!("{line}");
    }
}
