//! Gradient training of the recurrent policy: mean squared error on the
//! normalized one-step-ahead leader prediction, truncated backpropagation
//! through time, Adam updates, deterministic under a seed.

use super::dataset::EpisodeDataset;
use super::lstm::{
    adam_step, backward_window, empty_cache, forward_step, HiddenState, NetworkParams,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss became non-finite at epoch {epoch}, window {window}")]
    NonFiniteLoss { epoch: usize, window: usize },
    #[error("dataset has no training episodes")]
    NoTrainingData,
    #[error("network input width {net} does not match dataset width {data}")]
    WidthMismatch { net: usize, data: usize },
}

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Backpropagation-through-time window, steps (2 s at 50 Hz).
    pub tbptt: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainConfig { learning_rate: 0.001, epochs, seed, tbptt: 100 }
    }
}

/// Loss curves of one run.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Mean train loss per epoch.
    pub train_loss: Vec<f64>,
    /// Mean validation loss per epoch (empty entries when there is no
    /// validation split).
    pub val_loss: Vec<f64>,
}

/// Train in place. Episode order reshuffles every epoch from the seed; one
/// Adam step per TBPTT window; the hidden state carries across windows
/// within an episode but gradients do not.
pub fn train(
    net: &mut NetworkParams,
    data: &EpisodeDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    let train_indices: Vec<usize> = data
        .episodes
        .iter()
        .enumerate()
        .filter(|(_, e)| e.split == super::dataset::Split::Train)
        .map(|(i, _)| i)
        .collect();
    if train_indices.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    if net.input_width() != data.input_width() {
        return Err(TrainError::WidthMismatch { net: net.input_width(), data: data.input_width() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport::default();
    let out_width = net.cfg.output_width;

    for epoch in 0..cfg.epochs {
        let mut order = train_indices.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        let mut window_index = 0usize;

        for &episode_index in &order {
            let episode = &data.episodes[episode_index];
            let mut hidden = HiddenState::zeros(&net.cfg);
            let mut start = 0;
            while start < episode.inputs.len() {
                let end = (start + cfg.tbptt).min(episode.inputs.len());
                let steps = end - start;
                let scale = 1.0 / (steps * out_width) as f64;
                let mut caches = Vec::with_capacity(steps);
                let mut d_outputs = Vec::with_capacity(steps);
                let mut window_loss = 0.0;
                for s in start..end {
                    let mut cache = empty_cache();
                    let y = forward_step(net, &episode.inputs[s], &mut hidden, Some(&mut cache));
                    let target = &episode.targets[s];
                    let mut dy = vec![0.0; out_width];
                    for k in 0..out_width {
                        let e = y[k] - target[k];
                        window_loss += e * e * scale;
                        dy[k] = 2.0 * e * scale;
                    }
                    caches.push(cache);
                    d_outputs.push(dy);
                }
                if !window_loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, window: window_index });
                }
                let mut grads = vec![0.0; net.weights.len()];
                backward_window(net, &caches, &d_outputs, &mut grads);
                adam_step(net, &grads, cfg.learning_rate);

                epoch_loss += window_loss * steps as f64;
                epoch_steps += steps;
                window_index += 1;
                start = end;
            }
        }
        report.train_loss.push(epoch_loss / epoch_steps.max(1) as f64);
        report.val_loss.push(validation_loss(net, data));
    }
    Ok(report)
}

/// Mean squared error over the validation split, forward only.
pub fn validation_loss(net: &NetworkParams, data: &EpisodeDataset) -> f64 {
    let out_width = net.cfg.output_width;
    let mut total = 0.0;
    let mut count = 0usize;
    for episode in data.validation_episodes() {
        let mut hidden = HiddenState::zeros(&net.cfg);
        for (input, target) in episode.inputs.iter().zip(&episode.targets) {
            let y = forward_step(net, input, &mut hidden, None);
            for k in 0..out_width {
                let e = y[k] - target[k];
                total += e * e;
            }
            count += out_width;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imitation::dataset::{ArmSelection, Episode, EpisodeDataset, Normalization, Split};
    use crate::imitation::lstm::PolicyConfig;

    /// A one-episode dataset mapping a constant input to a constant target.
    fn constant_dataset(steps: usize) -> EpisodeDataset {
        let arm = ArmSelection::custom(vec![0]).unwrap();
        let width_in = arm.state_width() + 2;
        let width_out = arm.state_width();
        let episode = Episode {
            inputs: vec![vec![0.4; width_in]; steps],
            targets: vec![vec![0.25; width_out]; steps],
            split: Split::Train,
            source_log: 0,
            offset: 0,
        };
        EpisodeDataset {
            arm,
            episodes: vec![episode],
            stats: Normalization {
                input_mean: vec![0.0; width_in],
                input_std: vec![1.0; width_in],
                target_mean: vec![0.0; width_out],
                target_std: vec![1.0; width_out],
            },
            downsample: 10,
            source_rate: 500.0,
        }
    }

    #[test]
    fn memorizes_a_constant_mapping() {
        let data = constant_dataset(20);
        let cfg = PolicyConfig { layers: 1, hidden: 8, state_width: 3, output_width: 3 };
        let mut net = NetworkParams::init_seeded(cfg, 1);
        // 500 optimizer steps: 20-step episode in one window per epoch.
        let train_cfg = TrainConfig { learning_rate: 0.001, epochs: 500, seed: 2, tbptt: 100 };
        let report = train(&mut net, &data, &train_cfg).unwrap();
        let final_loss = *report.train_loss.last().unwrap();
        assert!(final_loss < 1e-4, "loss stalled at {final_loss}");
    }

    #[test]
    fn loss_curve_descends() {
        let data = constant_dataset(30);
        let cfg = PolicyConfig::desk(3, 3);
        let mut net = NetworkParams::init_seeded(cfg, 3);
        let report = train(&mut net, &data, &TrainConfig::new(50, 4)).unwrap();
        assert!(report.train_loss.last().unwrap() < &report.train_loss[0]);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = constant_dataset(25);
        let cfg = PolicyConfig::desk(3, 3);
        let train_cfg = TrainConfig::new(10, 9);
        let mut a = NetworkParams::init_seeded(cfg, 5);
        let mut b = NetworkParams::init_seeded(cfg, 5);
        let ra = train(&mut a, &data, &train_cfg).unwrap();
        let rb = train(&mut b, &data, &train_cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.adam, b.adam);
        assert_eq!(ra.train_loss, rb.train_loss);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let data = constant_dataset(10);
        let mut net = NetworkParams::init_seeded(PolicyConfig::desk(24, 24), 1);
        assert!(matches!(
            train(&mut net, &data, &TrainConfig::new(1, 1)),
            Err(TrainError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn validation_loss_reported_when_split_exists() {
        let mut data = constant_dataset(20);
        let mut val = data.episodes[0].clone();
        val.split = Split::Validation;
        data.episodes.push(val);
        let cfg = PolicyConfig::desk(3, 3);
        let mut net = NetworkParams::init_seeded(cfg, 6);
        let report = train(&mut net, &data, &TrainConfig::new(5, 7)).unwrap();
        assert_eq!(report.val_loss.len(), 5);
        assert!(report.val_loss.iter().all(|v| v.is_finite() && *v > 0.0));
    }
}
