//! Training-corpus construction from 500 Hz teach recordings: tenfold
//! offset-downsampling to 50 Hz, train-statistics normalization, and
//! seeded white noise on the normalized training inputs.

use crate::binio;
use crate::joints::JOINT_COUNT;
use crate::motionlog::MotionLog;
use rand_chacha::ChaCha8Rng;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

const DATASET_MAGIC: &[u8; 4] = b"TSDS";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("log {index}: too short ({rows} rows, need at least {min})")]
    TooShort { index: usize, rows: usize, min: usize },
    #[error("log {index}: missing object coordinates in metadata")]
    MissingCoordinates { index: usize },
    #[error("no logs supplied")]
    Empty,
    #[error("validation split needs {requested} logs but only {available} exist")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("arm selection: {0}")]
    BadArm(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Which joints one policy covers. The stock arms are eight joints; smaller
/// sub-chains are used for desk-scale experiments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArmSelection {
    /// 0-based joint indices.
    pub joints: Vec<usize>,
}

impl ArmSelection {
    pub fn right() -> Self {
        ArmSelection { joints: (0..8).collect() }
    }

    pub fn left() -> Self {
        ArmSelection { joints: (8..16).collect() }
    }

    pub fn custom(joints: Vec<usize>) -> Result<Self, DatasetError> {
        if joints.is_empty() {
            return Err(DatasetError::BadArm("selection is empty".into()));
        }
        for &j in &joints {
            if j >= JOINT_COUNT {
                return Err(DatasetError::BadArm(format!("joint index {} out of range", j + 1)));
            }
        }
        let mut seen = [false; JOINT_COUNT];
        for &j in &joints {
            if seen[j] {
                return Err(DatasetError::BadArm(format!("joint {} repeated", j + 1)));
            }
            seen[j] = true;
        }
        Ok(ArmSelection { joints })
    }

    /// Width of the per-step state vector: angle, velocity and torque per
    /// selected joint.
    pub fn state_width(&self) -> usize {
        3 * self.joints.len()
    }
}

/// Train/validation tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// One 50 Hz sequence. Inputs hold the normalized follower state plus the
/// normalized object coordinates as the trailing two channels; targets hold
/// the normalized leader response one step ahead.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub split: Split,
    pub source_log: usize,
    pub offset: usize,
}

/// Per-channel mean and standard deviation of the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

impl Normalization {
    fn fit(episodes: &[Episode]) -> Normalization {
        let input_width = episodes[0].inputs[0].len();
        let target_width = episodes[0].targets[0].len();
        let mut norm = Normalization {
            input_mean: vec![0.0; input_width],
            input_std: vec![0.0; input_width],
            target_mean: vec![0.0; target_width],
            target_std: vec![0.0; target_width],
        };
        let mut count = 0usize;
        for e in episodes.iter().filter(|e| e.split == Split::Train) {
            for (input, target) in e.inputs.iter().zip(&e.targets) {
                for (k, v) in input.iter().enumerate() {
                    norm.input_mean[k] += v;
                }
                for (k, v) in target.iter().enumerate() {
                    norm.target_mean[k] += v;
                }
                count += 1;
            }
        }
        for v in norm.input_mean.iter_mut().chain(norm.target_mean.iter_mut()) {
            *v /= count as f64;
        }
        for e in episodes.iter().filter(|e| e.split == Split::Train) {
            for (input, target) in e.inputs.iter().zip(&e.targets) {
                for (k, v) in input.iter().enumerate() {
                    let d = v - norm.input_mean[k];
                    norm.input_std[k] += d * d;
                }
                for (k, v) in target.iter().enumerate() {
                    let d = v - norm.target_mean[k];
                    norm.target_std[k] += d * d;
                }
            }
        }
        for v in norm.input_std.iter_mut().chain(norm.target_std.iter_mut()) {
            *v = (*v / count as f64).sqrt();
            // Exactly constant channels pass through unscaled.
            if *v < 1e-12 {
                *v = 1.0;
            }
        }
        norm
    }

    pub fn normalize_input(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(k, v)| (v - self.input_mean[k]) / self.input_std[k])
            .collect()
    }

    pub fn normalize_target(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(k, v)| (v - self.target_mean[k]) / self.target_std[k])
            .collect()
    }

    pub fn denormalize_target(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.target_std[k] + self.target_mean[k])
            .collect()
    }

    fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        binio::write_f64_slice(w, &self.input_mean)?;
        binio::write_f64_slice(w, &self.input_std)?;
        binio::write_f64_slice(w, &self.target_mean)?;
        binio::write_f64_slice(w, &self.target_std)
    }

    fn read<R: Read>(r: &mut R) -> io::Result<Normalization> {
        Ok(Normalization {
            input_mean: binio::read_f64_vec(r)?,
            input_std: binio::read_f64_vec(r)?,
            target_mean: binio::read_f64_vec(r)?,
            target_std: binio::read_f64_vec(r)?,
        })
    }
}

/// The imitation-learning corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeDataset {
    pub arm: ArmSelection,
    pub episodes: Vec<Episode>,
    pub stats: Normalization,
    /// Source rows per dataset step (10: 500 Hz to 50 Hz).
    pub downsample: usize,
    /// Rate of the source recordings, Hz.
    pub source_rate: f64,
}

impl EpisodeDataset {
    pub fn rate(&self) -> f64 {
        self.source_rate / self.downsample as f64
    }

    pub fn input_width(&self) -> usize {
        self.arm.state_width() + 2
    }

    pub fn output_width(&self) -> usize {
        self.arm.state_width()
    }

    pub fn train_episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter().filter(|e| e.split == Split::Train)
    }

    pub fn validation_episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter().filter(|e| e.split == Split::Validation)
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        binio::write_u32(&mut w, DATASET_VERSION)?;
        binio::write_u32(&mut w, self.arm.joints.len() as u32)?;
        for &j in &self.arm.joints {
            binio::write_u32(&mut w, j as u32)?;
        }
        binio::write_u32(&mut w, self.downsample as u32)?;
        binio::write_f64(&mut w, self.source_rate)?;
        self.stats.write(&mut w)?;
        binio::write_u64(&mut w, self.episodes.len() as u64)?;
        for e in &self.episodes {
            binio::write_u32(&mut w, matches!(e.split, Split::Validation) as u32)?;
            binio::write_u64(&mut w, e.source_log as u64)?;
            binio::write_u64(&mut w, e.offset as u64)?;
            binio::write_u64(&mut w, e.inputs.len() as u64)?;
            for (input, target) in e.inputs.iter().zip(&e.targets) {
                binio::write_f64_slice(&mut w, input)?;
                binio::write_f64_slice(&mut w, target)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> io::Result<Self> {
        binio::expect_magic(&mut r, DATASET_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "unsupported dataset version"));
        }
        let njoints = binio::read_u32(&mut r)? as usize;
        let mut joints = Vec::with_capacity(njoints);
        for _ in 0..njoints {
            joints.push(binio::read_u32(&mut r)? as usize);
        }
        let downsample = binio::read_u32(&mut r)? as usize;
        let source_rate = binio::read_f64(&mut r)?;
        let stats = Normalization::read(&mut r)?;
        let count = binio::read_u64(&mut r)? as usize;
        let mut episodes = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let split = if binio::read_u32(&mut r)? == 1 { Split::Validation } else { Split::Train };
            let source_log = binio::read_u64(&mut r)? as usize;
            let offset = binio::read_u64(&mut r)? as usize;
            let steps = binio::read_u64(&mut r)? as usize;
            let mut inputs = Vec::with_capacity(steps);
            let mut targets = Vec::with_capacity(steps);
            for _ in 0..steps {
                inputs.push(binio::read_f64_vec(&mut r)?);
                targets.push(binio::read_f64_vec(&mut r)?);
            }
            episodes.push(Episode { inputs, targets, split, source_log, offset });
        }
        Ok(EpisodeDataset {
            arm: ArmSelection { joints },
            episodes,
            stats,
            downsample,
            source_rate,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path)?;
        self.write(io::BufWriter::new(file))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        Ok(Self::read(io::BufReader::new(file))?)
    }
}

/// Dataset construction parameters.
#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub arm: ArmSelection,
    /// Variance of the white noise added to normalized training inputs.
    pub noise_variance: f64,
    pub seed: u64,
    /// Number of trailing logs held out for validation.
    pub val_count: usize,
    /// Source rows per step.
    pub downsample: usize,
}

impl DatasetConfig {
    pub fn new(arm: ArmSelection, seed: u64) -> Self {
        DatasetConfig { arm, noise_variance: 0.01, seed, val_count: 3, downsample: 10 }
    }
}

/// Build the corpus. Each source log yields `downsample` episodes whose
/// start offsets partition the source rows; episode s pairs the follower
/// state at step s with the leader response at step s+1 (the final target
/// holds). Statistics come from the training split only; noise is drawn
/// deterministically from the seed and touches training inputs only.
pub fn build_dataset(logs: &[MotionLog], cfg: &DatasetConfig) -> Result<EpisodeDataset, DatasetError> {
    use rand::SeedableRng;
    if logs.is_empty() {
        return Err(DatasetError::Empty);
    }
    if cfg.val_count >= logs.len() {
        return Err(DatasetError::SplitTooLarge { requested: cfg.val_count, available: logs.len() });
    }
    let min_rows = 2 * cfg.downsample;
    let mut episodes = Vec::with_capacity(logs.len() * cfg.downsample);
    for (index, log) in logs.iter().enumerate() {
        if log.rows.len() < min_rows {
            return Err(DatasetError::TooShort { index, rows: log.rows.len(), min: min_rows });
        }
        let (x, y) = log
            .metadata
            .object_xy
            .ok_or(DatasetError::MissingCoordinates { index })?;
        let split = if index >= logs.len() - cfg.val_count { Split::Validation } else { Split::Train };
        let steps = log.rows.len() / cfg.downsample;
        for offset in 0..cfg.downsample {
            let mut inputs = Vec::with_capacity(steps);
            let mut targets = Vec::with_capacity(steps);
            for s in 0..steps {
                let row = &log.rows[offset + s * cfg.downsample];
                let mut input = Vec::with_capacity(cfg.arm.state_width() + 2);
                for &j in &cfg.arm.joints {
                    input.push(row.theta_f[j]);
                }
                for &j in &cfg.arm.joints {
                    input.push(row.omega_f[j]);
                }
                for &j in &cfg.arm.joints {
                    input.push(row.tau_f[j]);
                }
                input.push(x);
                input.push(y);
                inputs.push(input);

                let ahead = (s + 1).min(steps - 1);
                let target_row = &log.rows[offset + ahead * cfg.downsample];
                let mut target = Vec::with_capacity(cfg.arm.state_width());
                for &j in &cfg.arm.joints {
                    target.push(target_row.theta_l[j]);
                }
                for &j in &cfg.arm.joints {
                    target.push(target_row.omega_l[j]);
                }
                for &j in &cfg.arm.joints {
                    target.push(target_row.tau_l[j]);
                }
                targets.push(target);
            }
            episodes.push(Episode { inputs, targets, split, source_log: index, offset });
        }
    }

    let stats = Normalization::fit(&episodes);
    for e in &mut episodes {
        for input in &mut e.inputs {
            *input = stats.normalize_input(input);
        }
        for target in &mut e.targets {
            *target = stats.normalize_target(target);
        }
    }

    // Noise on training inputs only; validation episodes never touch the
    // generator, so they are byte-identical across seeds.
    let noise_std = cfg.noise_variance.sqrt();
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for e in episodes.iter_mut().filter(|e| e.split == Split::Train) {
            for input in &mut e.inputs {
                for v in input.iter_mut() {
                    *v += noise_std * standard_normal(&mut rng);
                }
            }
        }
    }

    Ok(EpisodeDataset {
        arm: cfg.arm.clone(),
        episodes,
        stats,
        downsample: cfg.downsample,
        source_rate: logs[0].rate,
    })
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    loop {
        let u1: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen::<f64>();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joints::JointVector;
    use crate::motionlog::{LogMetadata, LogRow};
    use crate::CONTROL_DT;
    use rand::{Rng, SeedableRng};

    fn synthetic_log(rows: usize, seed: u64) -> MotionLog {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log = MotionLog::new(LogMetadata {
            object_xy: Some((rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))),
            ..LogMetadata::default()
        });
        for k in 0..rows {
            let mut v = || JointVector::from_fn(|_| rng.gen_range(-1.0..1.0));
            log.rows.push(LogRow {
                t: k as f64 * CONTROL_DT,
                theta_l: v(),
                omega_l: v(),
                tau_l: v(),
                theta_f: v(),
                omega_f: v(),
                tau_f: v(),
            });
        }
        log
    }

    fn logs(count: usize, rows: usize) -> Vec<MotionLog> {
        (0..count).map(|i| synthetic_log(rows, 100 + i as u64)).collect()
    }

    #[test]
    fn tenfold_augmentation_arithmetic() {
        let logs = logs(4, 10_000);
        let cfg = DatasetConfig::new(ArmSelection::right(), 1);
        let data = build_dataset(&logs, &cfg).unwrap();
        assert_eq!(data.episodes.len(), 40);
        for e in &data.episodes {
            assert_eq!(e.inputs.len(), 1_000);
            assert_eq!(e.targets.len(), 1_000);
        }
        assert_eq!(data.input_width(), 26);
        assert_eq!(data.output_width(), 24);
        assert!((data.rate() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn offsets_partition_the_source_rows() {
        let logs = logs(1, 230);
        let mut cfg = DatasetConfig::new(ArmSelection::right(), 1);
        cfg.val_count = 0;
        let data = build_dataset(&logs, &cfg).unwrap();
        let mut covered = vec![false; 230];
        for e in &data.episodes {
            for s in 0..e.inputs.len() {
                let row = e.offset + s * data.downsample;
                assert!(!covered[row], "row {row} sampled twice");
                covered[row] = true;
            }
        }
        let tail = 230 - 10 * (230 / 10);
        assert_eq!(covered.iter().filter(|c| !**c).count(), tail);
    }

    #[test]
    fn train_statistics_are_zero_mean_unit_std() {
        let logs = logs(5, 4_000);
        let cfg = DatasetConfig { noise_variance: 0.0, ..DatasetConfig::new(ArmSelection::right(), 3) };
        let data = build_dataset(&logs, &cfg).unwrap();
        let train: Vec<&Episode> = data.train_episodes().collect();
        let width = data.input_width();
        let mut count = 0usize;
        let mut mean = vec![0.0; width];
        for e in &train {
            for input in &e.inputs {
                for (k, v) in input.iter().enumerate() {
                    mean[k] += v;
                }
                count += 1;
            }
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        let mut var = vec![0.0; width];
        for e in &train {
            for input in &e.inputs {
                for (k, v) in input.iter().enumerate() {
                    var[k] += (v - mean[k]) * (v - mean[k]);
                }
            }
        }
        for (k, v) in var.iter().enumerate() {
            let std = (v / count as f64).sqrt();
            assert!(mean[k].abs() < 1e-6, "channel {k} mean {}", mean[k]);
            assert!((std - 1.0).abs() < 1e-6, "channel {k} std {std}");
        }
    }

    #[test]
    fn zero_noise_reproduces_downsampled_values() {
        let logs = logs(2, 600);
        let mut cfg = DatasetConfig::new(ArmSelection::custom(vec![0, 1]).unwrap(), 5);
        cfg.noise_variance = 0.0;
        cfg.val_count = 1;
        let data = build_dataset(&logs, &cfg).unwrap();
        // Denormalizing episode 0 step 3 must give the raw source row 30.
        let e = &data.episodes[0];
        assert_eq!(e.offset, 0);
        let raw_row = &logs[0].rows[30];
        let denorm: Vec<f64> = e.inputs[3]
            .iter()
            .enumerate()
            .map(|(k, v)| v * data.stats.input_std[k] + data.stats.input_mean[k])
            .collect();
        assert!((denorm[0] - raw_row.theta_f[0]).abs() < 1e-12);
        assert!((denorm[1] - raw_row.theta_f[1]).abs() < 1e-12);
        assert!((denorm[2] - raw_row.omega_f[0]).abs() < 1e-12);
        assert!((denorm[4] - raw_row.tau_f[0]).abs() < 1e-12);
        assert!((denorm[6] - logs[0].metadata.object_xy.unwrap().0).abs() < 1e-12);
    }

    #[test]
    fn final_target_holds_last_leader_sample() {
        let logs = logs(1, 100);
        let mut cfg = DatasetConfig::new(ArmSelection::custom(vec![2]).unwrap(), 5);
        cfg.noise_variance = 0.0;
        cfg.val_count = 0;
        let data = build_dataset(&logs, &cfg).unwrap();
        let e = &data.episodes[0];
        let steps = e.targets.len();
        assert_eq!(e.targets[steps - 1], e.targets[steps - 2]);
    }

    #[test]
    fn validation_episodes_ignore_the_seed() {
        let logs = logs(4, 800);
        let mut cfg_a = DatasetConfig::new(ArmSelection::right(), 111);
        cfg_a.val_count = 2;
        let mut cfg_b = cfg_a.clone();
        cfg_b.seed = 222;
        let a = build_dataset(&logs, &cfg_a).unwrap();
        let b = build_dataset(&logs, &cfg_b).unwrap();
        let val_a: Vec<&Episode> = a.validation_episodes().collect();
        let val_b: Vec<&Episode> = b.validation_episodes().collect();
        assert_eq!(val_a.len(), 20);
        assert_eq!(val_a, val_b);
        // Training inputs do differ.
        let t_a: Vec<&Episode> = a.train_episodes().collect();
        let t_b: Vec<&Episode> = b.train_episodes().collect();
        assert_ne!(t_a[0].inputs, t_b[0].inputs);
        // And targets carry no noise.
        assert_eq!(t_a[0].targets, t_b[0].targets);
    }

    #[test]
    fn dataset_is_deterministic_under_seed() {
        let logs = logs(3, 500);
        let mut cfg = DatasetConfig::new(ArmSelection::right(), 77);
        cfg.val_count = 1;
        let a = build_dataset(&logs, &cfg).unwrap();
        let b = build_dataset(&logs, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_log_is_rejected() {
        let logs = logs(1, 19);
        let mut cfg = DatasetConfig::new(ArmSelection::right(), 1);
        cfg.val_count = 0;
        assert!(matches!(
            build_dataset(&logs, &cfg),
            Err(DatasetError::TooShort { .. })
        ));
    }

    #[test]
    fn missing_coordinates_are_rejected() {
        let mut log = synthetic_log(100, 1);
        log.metadata.object_xy = None;
        let mut cfg = DatasetConfig::new(ArmSelection::right(), 1);
        cfg.val_count = 0;
        assert!(matches!(
            build_dataset(&[log], &cfg),
            Err(DatasetError::MissingCoordinates { .. })
        ));
    }

    #[test]
    fn container_round_trip() {
        let logs = logs(2, 300);
        let mut cfg = DatasetConfig::new(ArmSelection::custom(vec![4, 5]).unwrap(), 9);
        cfg.val_count = 1;
        let data = build_dataset(&logs, &cfg).unwrap();
        let mut buf = Vec::new();
        data.write(&mut buf).unwrap();
        let back = EpisodeDataset::read(buf.as_slice()).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn normalization_round_trip_is_tight() {
        let logs = logs(2, 400);
        let mut cfg = DatasetConfig::new(ArmSelection::right(), 2);
        cfg.val_count = 1;
        let data = build_dataset(&logs, &cfg).unwrap();
        let raw: Vec<f64> = (0..data.output_width()).map(|k| 0.3 * k as f64 - 1.7).collect();
        let back = data.stats.denormalize_target(&data.stats.normalize_target(&raw));
        for (a, b) in raw.iter().zip(&back) {
            let rel = (a - b).abs() / a.abs().max(1.0);
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn arm_selection_validation() {
        assert!(ArmSelection::custom(vec![]).is_err());
        assert!(ArmSelection::custom(vec![19]).is_err());
        assert!(ArmSelection::custom(vec![3, 3]).is_err());
        assert_eq!(ArmSelection::right().state_width(), 24);
        assert_eq!(ArmSelection::custom(vec![4, 5]).unwrap().state_width(), 6);
    }
}
