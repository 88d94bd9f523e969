//! Command-line surface: dataset generation, training stages, evaluation,
//! noise sweeps, adaptation curves and embedding dumps.

use faultmeta::adapt::MetricConfig;
use faultmeta::config::PipelineConfig;
use faultmeta::episodes::{image_bank, meta_split, read_task_dir, write_task_dir, ImageBank, TaskDataset};
use faultmeta::error::Error;
use faultmeta::eval::{adaptation_curve, dump_embeddings, evaluate, noise_sweep, EvalModel, EvalProtocol, HeadKind};
use faultmeta::metalearn::{meta_train, pretrain_embedding, self_distill, MetaModel, Pretrained};
use faultmeta::net::checkpoint::pack;
use faultmeta::pipeline::{checkpoint_of, generate_data, head_kind, load_pretrained};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const USAGE: &str = "\
faultmeta - few-shot fault diagnosis on synthetic motor-current data

USAGE:
    faultmeta <SUBCOMMAND> [FLAGS]

SUBCOMMANDS:
    gen        build the synthetic corpus and task datasets on disk
    pretrain   pooled cross-entropy embedding pretraining
    distill    self-distillation against a pretrained teacher
    metatrain  episodic first-order meta-training
    eval       episodic evaluation of a checkpoint
    sweep      paired noise sweep over the clean + noisy meta-test tasks
    curve      accuracy vs adaptation steps
    dump       embeddings to CSV
    config     print the default configuration JSON

GLOBAL FLAGS:
    --config <path>   JSON configuration (defaults apply when absent)
    --seed <u64>      override the configured seed
    --out <path>      output file or directory

SUBCOMMAND FLAGS:
    --data <dir>        task dataset directory (from `gen`)
    --checkpoint <path> model checkpoint (from `pretrain`/`distill`)
    --teacher <path>    teacher checkpoint (distill)
    --task <ids>        comma-separated task ids (eval/curve/dump)
    --k-shot <n>        support size per class (eval)
    --head <name>       linear | metric | inner_sgd (eval)
    --episodes <n>      episode count override (eval/sweep/curve)
    --max-steps <n>     adaptation steps (curve)
    --count <n>         row count (dump)
    --replay <path>     write the sampled episodes as JSON (eval)
";

struct Cli {
    sub: String,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    teacher: Option<PathBuf>,
    task: Option<Vec<usize>>,
    k_shot: Option<usize>,
    head: Option<String>,
    episodes: Option<usize>,
    max_steps: Option<usize>,
    count: Option<usize>,
    replay: Option<PathBuf>,
}

fn usage_fail(msg: &str) -> Error {
    Error::InvalidInput(format!("{msg}\n\n{USAGE}"))
}

fn parse_args(argv: &[String]) -> Result<Cli, Error> {
    let sub = argv
        .first()
        .ok_or_else(|| usage_fail("missing subcommand"))?
        .clone();
    let known = [
        "gen", "pretrain", "distill", "metatrain", "eval", "sweep", "curve", "dump", "config",
    ];
    if !known.contains(&sub.as_str()) {
        return Err(usage_fail(&format!("unknown subcommand {sub:?}")));
    }
    let mut cli = Cli {
        sub,
        config: None,
        seed: None,
        out: None,
        data: None,
        checkpoint: None,
        teacher: None,
        task: None,
        k_shot: None,
        head: None,
        episodes: None,
        max_steps: None,
        count: None,
        replay: None,
    };
    let mut it = argv[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> Result<String, Error> {
            it.next()
                .cloned()
                .ok_or_else(|| usage_fail(&format!("flag {name} needs a value")))
        };
        match flag.as_str() {
            "--config" => cli.config = Some(PathBuf::from(value("--config")?)),
            "--seed" => {
                cli.seed = Some(value("--seed")?.parse().map_err(|e| {
                    usage_fail(&format!("--seed wants an unsigned integer: {e}"))
                })?)
            }
            "--out" => cli.out = Some(PathBuf::from(value("--out")?)),
            "--data" => cli.data = Some(PathBuf::from(value("--data")?)),
            "--checkpoint" => cli.checkpoint = Some(PathBuf::from(value("--checkpoint")?)),
            "--teacher" => cli.teacher = Some(PathBuf::from(value("--teacher")?)),
            "--task" => {
                let ids: Result<Vec<usize>, _> =
                    value("--task")?.split(',').map(|t| t.trim().parse()).collect();
                cli.task = Some(ids.map_err(|e| usage_fail(&format!("--task: {e}")))?);
            }
            "--k-shot" => {
                cli.k_shot = Some(
                    value("--k-shot")?
                        .parse()
                        .map_err(|e| usage_fail(&format!("--k-shot: {e}")))?,
                )
            }
            "--head" => cli.head = Some(value("--head")?),
            "--episodes" => {
                cli.episodes = Some(
                    value("--episodes")?
                        .parse()
                        .map_err(|e| usage_fail(&format!("--episodes: {e}")))?,
                )
            }
            "--max-steps" => {
                cli.max_steps = Some(
                    value("--max-steps")?
                        .parse()
                        .map_err(|e| usage_fail(&format!("--max-steps: {e}")))?,
                )
            }
            "--count" => {
                cli.count = Some(
                    value("--count")?
                        .parse()
                        .map_err(|e| usage_fail(&format!("--count: {e}")))?,
                )
            }
            "--replay" => cli.replay = Some(PathBuf::from(value("--replay")?)),
            other => return Err(usage_fail(&format!("unknown flag {other:?}"))),
        }
    }
    Ok(cli)
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_tasks(dir: &Path) -> Result<Vec<TaskDataset>, Error> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("task_"))
        })
        .collect();
    entries.sort();
    let mut tasks = Vec::new();
    for path in entries {
        tasks.push(read_task_dir(&path)?);
    }
    if tasks.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no task_<id> directories under {}",
            dir.display()
        )));
    }
    tasks.sort_by_key(|t| t.task_id);
    Ok(tasks)
}

fn require<'a, T>(opt: &'a Option<T>, what: &str) -> Result<&'a T, Error> {
    opt.as_ref()
        .ok_or_else(|| usage_fail(&format!("{what} is required")))
}

fn train_banks(tasks: &[TaskDataset], cfg: &PipelineConfig) -> Result<Vec<ImageBank>, Error> {
    let ids: Vec<usize> = tasks.iter().map(|t| t.task_id).collect();
    let split = meta_split(&ids, cfg.split.clone())?;
    split
        .train_tasks
        .iter()
        .map(|id| {
            let t = tasks
                .iter()
                .find(|t| t.task_id == *id)
                .ok_or_else(|| Error::InvalidInput(format!("split names missing task {id}")))?;
            image_bank(t, &cfg.imaging)
        })
        .collect()
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn save_model(model: &Pretrained, path: &Path, cfg: &PipelineConfig) -> Result<(), Error> {
    std::fs::write(path, checkpoint_of(model)?)?;
    std::fs::write(path.with_extension("log.csv"), model.log.to_csv())?;
    let manifest = serde_json::json!({
        "config": cfg,
        "seed": cfg.seed,
        "final": model.log.epochs.last(),
    });
    std::fs::write(
        path.with_extension("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

fn resolve_head(cli: &Cli, cfg: &PipelineConfig) -> Result<HeadKind, Error> {
    match cli.head.as_deref() {
        None => Ok(head_kind(cfg)),
        Some("linear") => Ok(HeadKind::Linear(cfg.eval.head_fit)),
        Some("metric") => Ok(HeadKind::Metric(MetricConfig {
            temperature: cfg.eval.metric_temperature,
        })),
        Some("inner_sgd") => Ok(HeadKind::InnerSgd {
            steps: cfg.eval.inner_sgd_steps,
            lr: cfg.eval.inner_sgd_lr,
        }),
        Some(other) => Err(usage_fail(&format!("unknown head {other:?}"))),
    }
}

fn find_task<'a>(tasks: &'a [TaskDataset], id: usize) -> Result<&'a TaskDataset, Error> {
    tasks
        .iter()
        .find(|t| t.task_id == id)
        .ok_or_else(|| Error::InvalidInput(format!("no task {id} in data")))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    match cli.sub.as_str() {
        "config" => {
            println!("{}", cfg.to_json());
            Ok(())
        }
        "gen" => {
            let out = require(&cli.out, "--out <dir>")?;
            let data = generate_data(&cfg)?;
            std::fs::create_dir_all(out)?;
            for task in &data.tasks {
                write_task_dir(task, &out.join(format!("task_{}", task.task_id)))?;
            }
            std::fs::write(out.join("config.json"), cfg.to_json())?;
            std::fs::write(
                out.join("split.json"),
                serde_json::to_string_pretty(&data.split)?,
            )?;
            eprintln!(
                "wrote {} tasks ({} segments) to {}",
                data.tasks.len(),
                data.tasks.iter().map(|t| t.total()).sum::<usize>(),
                out.display()
            );
            Ok(())
        }
        "pretrain" => {
            let data_dir = require(&cli.data, "--data <dir>")?;
            let out = require(&cli.out, "--out <path>")?;
            let tasks = load_tasks(data_dir)?;
            let banks = train_banks(&tasks, &cfg)?;
            let refs: Vec<&ImageBank> = banks.iter().collect();
            let model = pretrain_embedding(&refs, &cfg.pretrain_cfg())?;
            save_model(&model, out, &cfg)?;
            eprintln!(
                "pretrained {} epochs, final loss {:.4}",
                cfg.train.pretrain_epochs,
                model.log.epochs.last().map(|r| r.loss).unwrap_or(f64::NAN)
            );
            Ok(())
        }
        "distill" => {
            let data_dir = require(&cli.data, "--data <dir>")?;
            let teacher_path = require(&cli.teacher, "--teacher <checkpoint>")?;
            let out = require(&cli.out, "--out <path>")?;
            let teacher = load_pretrained(&std::fs::read(teacher_path)?)?;
            let tasks = load_tasks(data_dir)?;
            let banks = train_banks(&tasks, &cfg)?;
            let refs: Vec<&ImageBank> = banks.iter().collect();
            let student = self_distill(&teacher, &refs, &cfg.distill_cfg())?;
            save_model(&student, out, &cfg)?;
            eprintln!(
                "distilled {} epochs (alpha {}, beta {})",
                cfg.train.distill_epochs, cfg.train.alpha, cfg.train.beta
            );
            Ok(())
        }
        "metatrain" => {
            let data_dir = require(&cli.data, "--data <dir>")?;
            let out = require(&cli.out, "--out <path>")?;
            let tasks = load_tasks(data_dir)?;
            let banks = train_banks(&tasks, &cfg)?;
            let refs: Vec<&ImageBank> = banks.iter().collect();
            let (MetaModel { params, head, .. }, log) = meta_train(&refs, &cfg.metatrain_cfg())?;
            let ck = pack(
                &params,
                &[("head.w".into(), head.w), ("head.b".into(), head.b)],
            );
            ck.save(out)?;
            std::fs::write(out.with_extension("log.csv"), log.to_csv())?;
            eprintln!("meta-trained {} epochs", cfg.train.meta_epochs);
            Ok(())
        }
        "eval" => {
            let data_dir = require(&cli.data, "--data <dir>")?;
            let ck_path = require(&cli.checkpoint, "--checkpoint <path>")?;
            let model = load_pretrained(&std::fs::read(ck_path)?)?;
            let tasks = load_tasks(data_dir)?;
            let ids: Vec<usize> = tasks.iter().map(|t| t.task_id).collect();
            let default_eval = meta_split(&ids, cfg.split.clone())
                .ok()
                .and_then(|s| s.test_tasks.first().copied())
                .unwrap_or(ids[0]);
            let wanted = cli.task.clone().unwrap_or_else(|| vec![default_eval]);
            let banks: Vec<ImageBank> = wanted
                .iter()
                .map(|id| image_bank(find_task(&tasks, *id)?, &cfg.imaging))
                .collect::<Result<Vec<_>, _>>()?;
            let bank_refs: Vec<&ImageBank> = banks.iter().collect();
            let head = resolve_head(cli, &cfg)?;
            let protocol = EvalProtocol {
                n_way: cfg.eval.n_way,
                k_shot: cli.k_shot.unwrap_or(5),
                q_per_class: cfg.eval.q_per_class,
                episodes: cli.episodes.unwrap_or(cfg.eval.episodes),
                seed: cfg.seed ^ 0xEAA1,
            };
            let eval_model = EvalModel {
                params: &model.params,
                head,
            };
            let (report, episodes) = evaluate(&eval_model, &bank_refs, &protocol)?;
            if let Some(replay) = &cli.replay {
                faultmeta::episodes::write_replay(&episodes, replay)?;
            }
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = &cli.out {
                std::fs::write(out, &json)?;
                std::fs::write(out.with_extension("confusion.csv"), report.confusion_csv())?;
            }
            println!("{json}");
            eprintln!(
                "{}-way {}-shot over {} episodes: {:.4} +/- {:.4}",
                report.n_way, report.k_shot, report.episodes, report.mean_accuracy, report.ci95
            );
            Ok(())
        }
        "sweep" => {
            let data_dir = require(&cli.data, "--data <dir>")?;
            let ck_path = require(&cli.checkpoint, "--checkpoint <path>")?;
            let model = load_pretrained(&std::fs::read(ck_path)?)?;
            let tasks = load_tasks(data_dir)?;
            let ids: Vec<usize> = tasks.iter().map(|t| t.task_id).collect();
            let split = meta_split(&ids, cfg.split.clone())?;
            // clean test row first, then noisy rows by ascending SNR
            let mut row_ids: Vec<usize> = split
                .test_tasks
                .iter()
                .copied()
                .filter(|id| {
                    tasks
                        .iter()
                        .any(|t| t.task_id == *id && t.snr_db.is_none())
                })
                .take(1)
                .collect();
            let mut noisy: Vec<(f64, usize)> = tasks
                .iter()
                .filter_map(|t| t.snr_db.map(|db| (db, t.task_id)))
                .collect();
            noisy.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            row_ids.extend(noisy.iter().map(|(_, id)| *id));
            if row_ids.len() < 2 {
                return Err(Error::InvalidInput(
                    "sweep needs a clean test task and at least one noise task".into(),
                ));
            }
            let banks: Vec<ImageBank> = row_ids
                .iter()
                .map(|id| image_bank(find_task(&tasks, *id)?, &cfg.imaging))
                .collect::<Result<Vec<_>, _>>()?;
            let bank_refs: Vec<&ImageBank> = banks.iter().collect();
            let protocol = EvalProtocol {
                n_way: cfg.eval.n_way,
                k_shot: cli.k_shot.unwrap_or(10),
                q_per_class: cfg.eval.q_per_class,
                episodes: cli.episodes.unwrap_or(cfg.eval.episodes),
                seed: cfg.seed ^ 0xEAA1,
            };
            let eval_model = EvalModel {
                params: &model.params,
                head: resolve_head(cli, &cfg)?,
            };
            let reports = noise_sweep(&eval_model, &bank_refs, &protocol)?;
            println!("{:<10} {:>10} {:>10}", "noise", "accuracy", "ci95");
            for r in &reports {
                println!(
                    "{:<10} {:>10.4} {:>10.4}",
                    r.per_snr[0].label, r.mean_accuracy, r.ci95
                );
            }
            if let Some(out) = &cli.out {
                std::fs::write(out, serde_json::to_string_pretty(&reports)?)?;
            }
            Ok(())
        }
        "curve" => {
            let data_dir = require(&cli.data, "--data <dir>")?;
            let ck_path = require(&cli.checkpoint, "--checkpoint <path>")?;
            let model = load_pretrained(&std::fs::read(ck_path)?)?;
            let tasks = load_tasks(data_dir)?;
            let task_id = cli.task.as_ref().and_then(|t| t.first().copied()).unwrap_or(4);
            let bank = image_bank(find_task(&tasks, task_id)?, &cfg.imaging)?;
            let protocol = EvalProtocol {
                n_way: cfg.eval.n_way,
                k_shot: cli.k_shot.unwrap_or(5),
                q_per_class: cfg.eval.q_per_class,
                episodes: cli.episodes.unwrap_or(100),
                seed: cfg.seed ^ 0xEAA1,
            };
            let curve = adaptation_curve(
                &model.params,
                &bank,
                &protocol,
                cli.max_steps.unwrap_or(10),
                cfg.eval.inner_sgd_lr,
            )?;
            let mut csv = String::from("steps,accuracy,ci95\n");
            for p in &curve {
                csv.push_str(&format!("{},{},{}\n", p.steps, p.mean_accuracy, p.ci95));
            }
            write_or_print(&cli.out, &csv)?;
            Ok(())
        }
        "dump" => {
            let data_dir = require(&cli.data, "--data <dir>")?;
            let ck_path = require(&cli.checkpoint, "--checkpoint <path>")?;
            let count = require(&cli.count, "--count <n>")?;
            let model = load_pretrained(&std::fs::read(ck_path)?)?;
            let tasks = load_tasks(data_dir)?;
            let task_id = cli.task.as_ref().and_then(|t| t.first().copied()).unwrap_or(4);
            let bank = image_bank(find_task(&tasks, task_id)?, &cfg.imaging)?;
            let csv = dump_embeddings(&model.params, &bank, *count)?;
            write_or_print(&cli.out, &csv)?;
            Ok(())
        }
        _ => unreachable!("subcommand validated in parse_args"),
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::InvalidInput(_)
        | Error::CoverageGap(_)
        | Error::ShapeMismatch(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_args(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
