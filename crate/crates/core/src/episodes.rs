//! Task datasets, the meta-train/meta-test split, and N-way K-shot episode
//! sampling, plus the on-disk dataset format (JSON manifest + per-class
//! CSV) and episode replay files.

use crate::error::{Error, Result};
use crate::imaging::{preprocess, GrayImage, ImagingConfig};
use crate::parallel::par_map;
use crate::rng::Rng;
use crate::signalgen::{
    inject_drive_noise_values, inject_noise_values, Corpus, FaultClass, HealthState,
    SignalSegment,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One task's labeled segment pool: 9 classes, balanced within one sample.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task_id: usize,
    /// Indexed by [`FaultClass::ALL`] order.
    pub classes: Vec<Vec<SignalSegment>>,
    pub load_levels: Vec<f64>,
    /// Injected noise level; `None` means clean.
    pub snr_db: Option<f64>,
    pub n: usize,
}

impl TaskDataset {
    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.len()).sum()
    }

    pub fn min_class_count(&self) -> usize {
        self.classes.iter().map(|c| c.len()).min().unwrap_or(0)
    }
}

/// Which noise generator shapes tasks T6-T8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian,
    /// 5th/7th supply harmonics plus broadband, jointly SNR-scaled.
    Drive,
}

/// Per-task build recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub samples: usize,
    /// Load level (index into the load table) oversampled 3:1; `None`
    /// samples all loads uniformly.
    pub emphasized_load: Option<usize>,
    /// When set, this task is a noise-injected copy of `derive_from`.
    pub snr_db: Option<f64>,
    /// Clean task whose segments get the noise; required with `snr_db`.
    pub derive_from: Option<usize>,
    pub noise_model: NoiseModel,
}

/// The nine default tasks: T0 uniform over loads, T1-T5 each oversampling
/// one load level 3:1, T6-T8 noise-injected copies of T4 at 2/4/6 dB.
pub fn default_task_specs(samples: usize) -> Vec<TaskSpec> {
    let mut specs = Vec::with_capacity(9);
    specs.push(TaskSpec {
        task_id: 0,
        samples,
        emphasized_load: None,
        snr_db: None,
        derive_from: None,
        noise_model: NoiseModel::Drive,
    });
    for t in 1..=5 {
        specs.push(TaskSpec {
            task_id: t,
            samples,
            emphasized_load: Some(t - 1),
            snr_db: None,
            derive_from: None,
            noise_model: NoiseModel::Drive,
        });
    }
    for (i, snr) in [2.0, 4.0, 6.0].into_iter().enumerate() {
        specs.push(TaskSpec {
            task_id: 6 + i,
            samples,
            emphasized_load: Some(3),
            snr_db: Some(snr),
            derive_from: Some(4),
            noise_model: NoiseModel::Drive,
        });
    }
    specs
}

/// Largest-remainder apportionment of `total` across weighted bins.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let wsum: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = Vec::with_capacity(weights.len());
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, w) in weights.iter().enumerate() {
        let quota = total as f64 * w / wsum;
        let base = quota.floor() as usize;
        counts.push(base);
        assigned += base;
        fracs.push((i, quota - base as f64));
    }
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..total - assigned {
        counts[fracs[k].0] += 1;
    }
    counts
}

/// Build the task datasets from a clean corpus. Clean tasks draw disjoint
/// segments (meta-test tasks never share samples with meta-train tasks);
/// noise tasks clone their parent's segments and inject calibrated noise.
pub fn build_tasks(corpus: &Corpus, specs: &[TaskSpec], seed: u64) -> Result<Vec<TaskDataset>> {
    let n_classes = FaultClass::ALL.len();
    let n_loads = corpus.load_levels.len();
    for (ci, class) in FaultClass::ALL.iter().enumerate() {
        for li in 0..n_loads {
            if corpus.pools[ci][li].is_empty() {
                return Err(Error::CoverageGap(format!(
                    "corpus has no segments for class {} at load {}",
                    class.name(),
                    corpus.load_levels[li]
                )));
            }
        }
    }

    let master = Rng::new(seed);
    // Per-pool shuffled draw order with a cursor, shared across tasks so
    // clean tasks never overlap.
    let mut orders: Vec<Vec<Vec<usize>>> = Vec::with_capacity(n_classes);
    for ci in 0..n_classes {
        let mut per_load = Vec::with_capacity(n_loads);
        for li in 0..n_loads {
            let mut order: Vec<usize> = (0..corpus.pools[ci][li].len()).collect();
            master.fork((ci * 64 + li) as u64 + 7).shuffle(&mut order);
            per_load.push(order);
        }
        orders.push(per_load);
    }
    let mut cursors = vec![vec![0usize; n_loads]; n_classes];

    let mut tasks: Vec<TaskDataset> = Vec::with_capacity(specs.len());
    for spec in specs {
        if let (Some(snr), Some(parent_id)) = (spec.snr_db, spec.derive_from) {
            let parent = tasks
                .iter()
                .find(|t| t.task_id == parent_id)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "task {} derives from task {parent_id}, which is not built yet",
                        spec.task_id
                    ))
                })?;
            let mut noise_rng = master.fork(1000 + spec.task_id as u64);
            let mut classes = Vec::with_capacity(n_classes);
            for per_class in &parent.classes {
                let mut noisy_class = Vec::with_capacity(per_class.len());
                for seg in per_class {
                    let values: Vec<f64> = seg.values.iter().map(|&v| v as f64).collect();
                    let noise_seed = noise_rng.next_u64();
                    let noisy = match spec.noise_model {
                        NoiseModel::Gaussian => inject_noise_values(&values, snr, noise_seed)?,
                        NoiseModel::Drive => inject_drive_noise_values(
                            &values,
                            corpus.sample_rate_hz,
                            corpus.supply_freq_hz,
                            snr,
                            noise_seed,
                        )?,
                    };
                    noisy_class.push(SignalSegment {
                        values: noisy.iter().map(|&v| v as f32).collect(),
                        label: seg.label,
                        op: seg.op,
                        snr_db: Some(snr),
                    });
                }
                classes.push(noisy_class);
            }
            tasks.push(TaskDataset {
                task_id: spec.task_id,
                classes,
                load_levels: parent.load_levels.clone(),
                snr_db: Some(snr),
                n: parent.n,
            });
            continue;
        }

        // Clean task: apportion samples over classes (within +/- 1), then
        // over loads with the task's emphasis.
        let mut load_weights = vec![1.0f64; n_loads];
        if let Some(li) = spec.emphasized_load {
            if li >= n_loads {
                return Err(Error::InvalidConfig(format!(
                    "task {} emphasizes load index {li}, but only {n_loads} levels exist",
                    spec.task_id
                )));
            }
            load_weights[li] = 3.0;
        }
        let class_counts = apportion(spec.samples, &vec![1.0; n_classes]);
        let mut classes = Vec::with_capacity(n_classes);
        for (ci, class) in FaultClass::ALL.iter().enumerate() {
            let per_load = apportion(class_counts[ci], &load_weights);
            let mut samples = Vec::with_capacity(class_counts[ci]);
            for (li, want) in per_load.iter().enumerate() {
                let pool = &corpus.pools[ci][li];
                let order = &orders[ci][li];
                let cur = cursors[ci][li];
                if cur + want > pool.len() {
                    return Err(Error::CoverageGap(format!(
                        "corpus pool for class {} at load {} exhausted: task {} wants {} more \
                         segments but only {} remain",
                        class.name(),
                        corpus.load_levels[li],
                        spec.task_id,
                        want,
                        pool.len() - cur
                    )));
                }
                for k in 0..*want {
                    samples.push(pool[order[cur + k]].clone());
                }
                cursors[ci][li] += want;
            }
            classes.push(samples);
        }
        tasks.push(TaskDataset {
            task_id: spec.task_id,
            classes,
            load_levels: corpus.load_levels.clone(),
            snr_db: None,
            n: corpus.n,
        });
    }
    Ok(tasks)
}

/// Meta-train/meta-test split over task ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaSplit {
    pub train_tasks: Vec<usize>,
    pub test_tasks: Vec<usize>,
}

/// Default split: train {T0, T1, T2, T3, T5}, test {T4, T6, T7, T8};
/// an override replaces it after validation.
pub fn meta_split(
    task_ids: &[usize],
    override_split: Option<MetaSplit>,
) -> Result<MetaSplit> {
    if task_ids.len() < 2 {
        return Err(Error::InvalidInput("need at least two tasks to split".into()));
    }
    let split = override_split.unwrap_or_else(|| MetaSplit {
        train_tasks: [0, 1, 2, 3, 5]
            .iter()
            .copied()
            .filter(|t| task_ids.contains(t))
            .collect(),
        test_tasks: [4, 6, 7, 8]
            .iter()
            .copied()
            .filter(|t| task_ids.contains(t))
            .collect(),
    });
    if split.train_tasks.is_empty() || split.test_tasks.is_empty() {
        return Err(Error::InvalidConfig("both split sides must be nonempty".into()));
    }
    for t in split.train_tasks.iter().chain(&split.test_tasks) {
        if !task_ids.contains(t) {
            return Err(Error::InvalidConfig(format!("unknown task id {t} in split")));
        }
    }
    if split.train_tasks.iter().any(|t| split.test_tasks.contains(t)) {
        return Err(Error::InvalidConfig(
            "train and test tasks must be disjoint".into(),
        ));
    }
    Ok(split)
}

/// One N-way K-shot task instance, stored as sample indices into its task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub task_id: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub q_per_class: usize,
    /// Episode-local label -> global class index, ascending.
    pub class_map: Vec<usize>,
    /// (local label, sample index within that class).
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
}

/// Uniform class and sample choice without replacement; support and query
/// are disjoint; deterministic given the rng.
pub fn sample_episode(
    task: &TaskDataset,
    n_way: usize,
    k_shot: usize,
    q_per_class: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    let counts: Vec<usize> = task.classes.iter().map(|c| c.len()).collect();
    sample_episode_from_counts(task.task_id, &counts, n_way, k_shot, q_per_class, rng)
}

/// Episode sampling over any per-class sample pool, given only the counts.
pub fn sample_episode_from_counts(
    task_id: usize,
    class_counts: &[usize],
    n_way: usize,
    k_shot: usize,
    q_per_class: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    let n_classes = class_counts.len();
    let available = class_counts.iter().filter(|&&c| c > 0).count();
    if n_way == 0 || n_way > available {
        return Err(Error::InvalidInput(format!(
            "n_way {n_way} outside 1..={available} available classes"
        )));
    }
    if k_shot == 0 {
        return Err(Error::InvalidInput("k_shot must be >= 1".into()));
    }
    let need = k_shot + q_per_class;
    let nonempty: Vec<usize> = (0..n_classes).filter(|&c| class_counts[c] > 0).collect();
    let mut class_map: Vec<usize> = rng
        .choose_indices(nonempty.len(), n_way)
        .into_iter()
        .map(|i| nonempty[i])
        .collect();
    class_map.sort_unstable();
    for &ci in &class_map {
        if class_counts[ci] < need {
            return Err(Error::InvalidInput(format!(
                "class {} has {} samples, episode needs {need}",
                FaultClass::ALL
                    .get(ci)
                    .map(|c| c.name())
                    .unwrap_or("<out of range>"),
                class_counts[ci]
            )));
        }
    }
    let mut support = Vec::with_capacity(n_way * k_shot);
    let mut query = Vec::with_capacity(n_way * q_per_class);
    for (local, &ci) in class_map.iter().enumerate() {
        let picks = rng.choose_indices(class_counts[ci], need);
        for &idx in &picks[..k_shot] {
            support.push((local, idx));
        }
        for &idx in &picks[k_shot..] {
            query.push((local, idx));
        }
    }
    Ok(Episode {
        task_id,
        n_way,
        k_shot,
        q_per_class,
        class_map,
        support,
        query,
    })
}

/// Preprocessed images for one task, episode-addressable.
#[derive(Debug, Clone)]
pub struct ImageBank {
    pub task_id: usize,
    pub classes: Vec<Vec<GrayImage>>,
    pub n: usize,
    /// Carried over from the task; `None` means clean.
    pub snr_db: Option<f64>,
}

/// Run the imaging pipeline over every segment of a task.
pub fn image_bank(task: &TaskDataset, img_cfg: &ImagingConfig) -> Result<ImageBank> {
    let flat: Vec<(usize, usize)> = task
        .classes
        .iter()
        .enumerate()
        .flat_map(|(ci, segs)| (0..segs.len()).map(move |si| (ci, si)))
        .collect();
    let images = par_map(flat.len(), |k| {
        let (ci, si) = flat[k];
        preprocess(&task.classes[ci][si], img_cfg)
    });
    let mut classes: Vec<Vec<GrayImage>> = task.classes.iter().map(|_| Vec::new()).collect();
    for ((ci, _), img) in flat.into_iter().zip(images) {
        classes[ci].push(img?);
    }
    Ok(ImageBank {
        task_id: task.task_id,
        classes,
        n: task.n,
        snr_db: task.snr_db,
    })
}

impl ImageBank {
    /// Materialize (image, local label) pairs for an episode half.
    pub fn resolve<'a>(
        &'a self,
        episode: &Episode,
        pairs: &[(usize, usize)],
    ) -> Result<Vec<(&'a GrayImage, usize)>> {
        if episode.task_id != self.task_id {
            return Err(Error::InvalidInput(format!(
                "episode belongs to task {}, bank holds task {}",
                episode.task_id, self.task_id
            )));
        }
        pairs
            .iter()
            .map(|&(local, idx)| {
                let ci = *episode.class_map.get(local).ok_or_else(|| {
                    Error::InvalidInput(format!("local label {local} out of range"))
                })?;
                let img = self.classes[ci].get(idx).ok_or_else(|| {
                    Error::InvalidInput(format!("sample {idx} out of range for class {ci}"))
                })?;
                Ok((img, local))
            })
            .collect()
    }
}

// ── On-disk dataset format ─────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskManifest {
    pub task_id: usize,
    pub n: usize,
    pub snr_db: Option<f64>,
    pub load_levels: Vec<f64>,
    pub classes: Vec<String>,
    pub sample_counts: Vec<usize>,
}

/// Write one task as `manifest.json` plus one CSV per class (one segment
/// per row, n^2 comma-separated decimal floats).
pub fn write_task_dir(task: &TaskDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = TaskManifest {
        task_id: task.task_id,
        n: task.n,
        snr_db: task.snr_db,
        load_levels: task.load_levels.clone(),
        classes: FaultClass::ALL.iter().map(|c| c.name().to_string()).collect(),
        sample_counts: task.classes.iter().map(|c| c.len()).collect(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for (ci, class) in FaultClass::ALL.iter().enumerate() {
        let mut out = String::new();
        for seg in &task.classes[ci] {
            let row: Vec<String> = seg.values.iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(dir.join(format!("{}.csv", class.name())), out)?;
    }
    Ok(())
}

/// Read a task directory written by [`write_task_dir`] (or external data in
/// the same format). Per-row operating points are not stored on disk, so
/// ingested segments carry `op: None` and severity 1.0.
pub fn read_task_dir(dir: &Path) -> Result<TaskDataset> {
    let manifest: TaskManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let window = manifest.n * manifest.n;
    let mut classes = Vec::with_capacity(manifest.classes.len());
    for (ci, name) in manifest.classes.iter().enumerate() {
        let class = FaultClass::from_name(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown class name {name}")))?;
        let text = std::fs::read_to_string(dir.join(format!("{name}.csv")))?;
        let mut segs = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let values: std::result::Result<Vec<f32>, _> =
                line.split(',').map(|v| v.trim().parse::<f32>()).collect();
            let values = values.map_err(|e| {
                Error::InvalidInput(format!("{name}.csv line {}: {e}", line_no + 1))
            })?;
            if values.len() != window {
                return Err(Error::InvalidInput(format!(
                    "{name}.csv line {} has {} values, expected {window}",
                    line_no + 1,
                    values.len()
                )));
            }
            segs.push(SignalSegment {
                values,
                label: HealthState::new(class, 1.0),
                op: None,
                snr_db: manifest.snr_db,
            });
        }
        if segs.len() != manifest.sample_counts[ci] {
            return Err(Error::InvalidInput(format!(
                "{name}.csv holds {} segments, manifest says {}",
                segs.len(),
                manifest.sample_counts[ci]
            )));
        }
        classes.push(segs);
    }
    Ok(TaskDataset {
        task_id: manifest.task_id,
        classes,
        load_levels: manifest.load_levels,
        snr_db: manifest.snr_db,
        n: manifest.n,
    })
}

/// Episode replay files make any sampled run exactly reproducible.
pub fn write_replay(episodes: &[Episode], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string(episodes)?)?;
    Ok(())
}

pub fn read_replay(path: &Path) -> Result<Vec<Episode>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::{build_corpus, CorpusCfg};

    fn tiny_corpus() -> Corpus {
        // 1 kHz so a 256-sample window spans 0.26 s of signal.
        let mut motor = crate::signalgen::MotorConfig::default();
        motor.sample_rate_hz = 1000.0;
        let cfg = CorpusCfg {
            n: 16,
            stride: 256,
            signals_per_pool: 2,
            windows_per_signal: 12,
            motor,
            ..CorpusCfg::default()
        };
        build_corpus(&cfg, 42).unwrap()
    }

    fn tiny_specs(samples: usize) -> Vec<TaskSpec> {
        default_task_specs(samples)
    }

    #[test]
    fn apportion_balances() {
        assert_eq!(apportion(3000, &vec![1.0; 9]).iter().sum::<usize>(), 3000);
        let counts = apportion(3000, &vec![1.0; 9]);
        let (mn, mx) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(mx - mn <= 1);
        let weighted = apportion(90, &[3.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(weighted.iter().sum::<usize>(), 90);
        assert!(weighted[0] > weighted[1]);
    }

    #[test]
    fn build_default_tasks() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(90), 3).unwrap();
        assert_eq!(tasks.len(), 9);
        for t in &tasks {
            assert_eq!(t.total(), 90);
            let counts: Vec<usize> = t.classes.iter().map(|c| c.len()).collect();
            let (mn, mx) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(mx - mn <= 1, "balanced within one: {counts:?}");
        }
        assert_eq!(tasks[6].snr_db, Some(2.0));
        assert_eq!(tasks[7].snr_db, Some(4.0));
        assert_eq!(tasks[8].snr_db, Some(6.0));
        // noise tasks mirror T4's segment labels exactly
        for (a, b) in tasks[4].classes.iter().zip(&tasks[6].classes) {
            assert_eq!(a.len(), b.len());
            for (sa, sb) in a.iter().zip(b) {
                assert_eq!(sa.label, sb.label);
                assert_ne!(sa.values, sb.values);
            }
        }
    }

    #[test]
    fn clean_tasks_are_disjoint() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(45), 3).unwrap();
        // Compare T4 (test) against train tasks by raw segment content.
        let key = |seg: &SignalSegment| -> Vec<u32> {
            seg.values[..8].iter().map(|v| v.to_bits()).collect()
        };
        let t4: std::collections::HashSet<Vec<u32>> =
            tasks[4].classes.iter().flatten().map(key).collect();
        for train_id in [0usize, 1, 2, 3, 5] {
            for seg in tasks[train_id].classes.iter().flatten() {
                assert!(!t4.contains(&key(seg)), "task {train_id} leaks into T4");
            }
        }
    }

    #[test]
    fn build_tasks_reports_coverage_gap() {
        let mut corpus = tiny_corpus();
        corpus.pools[FaultClass::BearingBall.index()][2].clear();
        let err = build_tasks(&corpus, &tiny_specs(45), 3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bearing_ball"), "{msg}");
    }

    #[test]
    fn build_tasks_reports_exhaustion() {
        let corpus = tiny_corpus();
        // Demand far more than the pools hold.
        let err = build_tasks(&corpus, &tiny_specs(100_000), 3).unwrap_err();
        assert!(err.to_string().contains("exhausted"));
    }

    #[test]
    fn episode_shape_and_disjointness() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(180), 3).unwrap();
        let mut rng = Rng::new(5);
        let ep = sample_episode(&tasks[0], 6, 5, 15, &mut rng).unwrap();
        assert_eq!(ep.support.len(), 30);
        assert_eq!(ep.query.len(), 90);
        assert_eq!(ep.class_map.len(), 6);
        let mut sorted = ep.class_map.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted, ep.class_map);
        // support/query never share a sample
        let sup: std::collections::HashSet<(usize, usize)> =
            ep.support.iter().copied().collect();
        for q in &ep.query {
            assert!(!sup.contains(q));
        }
        // local labels cover 0..n_way
        for local in 0..6 {
            assert!(ep.support.iter().filter(|(l, _)| *l == local).count() == 5);
            assert!(ep.query.iter().filter(|(l, _)| *l == local).count() == 15);
        }
    }

    #[test]
    fn episode_errors() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(90), 3).unwrap();
        let mut rng = Rng::new(5);
        assert!(sample_episode(&tasks[0], 10, 1, 1, &mut rng).is_err());
        assert!(sample_episode(&tasks[0], 6, 9, 15, &mut rng).is_err());
    }

    #[test]
    fn episode_deterministic_per_seed() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(90), 3).unwrap();
        let a = sample_episode(&tasks[1], 6, 1, 5, &mut Rng::new(9)).unwrap();
        let b = sample_episode(&tasks[1], 6, 1, 5, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_draw_frequencies_near_uniform() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(90), 3).unwrap();
        let mut rng = Rng::new(17);
        let episodes = 1000;
        let n_way = 6;
        let mut hits = [0usize; 9];
        for _ in 0..episodes {
            let ep = sample_episode(&tasks[0], n_way, 1, 1, &mut rng).unwrap();
            for &c in &ep.class_map {
                hits[c] += 1;
            }
        }
        // Each class appears with prob 6/9 per episode; 3 sigma window.
        let p = n_way as f64 / 9.0;
        let sigma = (episodes as f64 * p * (1.0 - p)).sqrt();
        for (c, &h) in hits.iter().enumerate() {
            let expect = episodes as f64 * p;
            assert!(
                (h as f64 - expect).abs() < 3.0 * sigma,
                "class {c}: {h} vs {expect} +/- {sigma}"
            );
        }
    }

    #[test]
    fn split_default_and_overrides() {
        let ids: Vec<usize> = (0..9).collect();
        let s = meta_split(&ids, None).unwrap();
        assert_eq!(s.train_tasks, vec![0, 1, 2, 3, 5]);
        assert_eq!(s.test_tasks, vec![4, 6, 7, 8]);

        let overlap = MetaSplit {
            train_tasks: vec![0],
            test_tasks: vec![0],
        };
        assert!(meta_split(&ids, Some(overlap)).is_err());

        let ok = MetaSplit {
            train_tasks: (0..8).collect(),
            test_tasks: vec![8],
        };
        assert_eq!(meta_split(&ids, Some(ok.clone())).unwrap(), ok);
        assert!(meta_split(&[0], None).is_err());
    }

    #[test]
    fn disk_roundtrip() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(45), 3).unwrap();
        let dir = std::env::temp_dir().join(format!("fm_task_test_{}", std::process::id()));
        write_task_dir(&tasks[6], &dir).unwrap();
        let back = read_task_dir(&dir).unwrap();
        assert_eq!(back.task_id, 6);
        assert_eq!(back.snr_db, Some(2.0));
        assert_eq!(back.total(), tasks[6].total());
        for (a, b) in tasks[6].classes.iter().zip(&back.classes) {
            for (sa, sb) in a.iter().zip(b) {
                assert_eq!(sa.values, sb.values, "CSV round trip must be lossless");
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn replay_roundtrip() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(90), 3).unwrap();
        let mut rng = Rng::new(2);
        let eps: Vec<Episode> = (0..5)
            .map(|_| sample_episode(&tasks[0], 4, 2, 3, &mut rng).unwrap())
            .collect();
        let path = std::env::temp_dir().join(format!("fm_replay_{}.json", std::process::id()));
        write_replay(&eps, &path).unwrap();
        let back = read_replay(&path).unwrap();
        assert_eq!(eps, back);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn image_bank_matches_task_layout() {
        let corpus = tiny_corpus();
        let tasks = build_tasks(&corpus, &tiny_specs(45), 3).unwrap();
        let bank = image_bank(&tasks[0], &ImagingConfig::default()).unwrap();
        assert_eq!(bank.classes.len(), 9);
        for (ci, class) in tasks[0].classes.iter().enumerate() {
            assert_eq!(bank.classes[ci].len(), class.len());
        }
        let mut rng = Rng::new(3);
        let ep = sample_episode(&tasks[0], 3, 1, 2, &mut rng).unwrap();
        let support = bank.resolve(&ep, &ep.support).unwrap();
        assert_eq!(support.len(), 3);
        assert_eq!(support[0].0.n, 16);
    }
}
