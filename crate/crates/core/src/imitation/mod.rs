//! Bilateral-control-based imitation learning: dataset construction from
//! teach recordings, the coordinate-injected recurrent policy, training,
//! dual-rate closed-loop inference and pick-target selection.

pub mod dataset;
pub mod infer;
pub mod lstm;
pub mod scene;
pub mod train;

pub use dataset::{build_dataset, ArmSelection, DatasetConfig, DatasetError, Episode, EpisodeDataset, Normalization, Split};
pub use infer::{run_inference, run_inference_with, run_policy, InferenceSetup, COMMAND_INTERVAL};
pub use lstm::{adam_step, policy_forward, sequence_gradients, sequence_loss, AdamState, HiddenState, NetworkParams, PolicyConfig};
pub use scene::{select_target, ObjectScene, Point, Rect, SceneError};
pub use train::{train, validation_loss, TrainConfig, TrainError, TrainReport};

use crate::binio;
use std::io::{self, Read, Write};
use std::path::Path;

const BUNDLE_MAGIC: &[u8; 4] = b"TSNN";
const BUNDLE_VERSION: u32 = 1;

/// A trained policy with everything inference needs: network weights and
/// optimizer state, the training-split normalization, and the joint
/// selection it was trained for.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyBundle {
    pub net: NetworkParams,
    pub stats: Normalization,
    pub arm: ArmSelection,
}

impl PolicyBundle {
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(BUNDLE_MAGIC)?;
        binio::write_u32(&mut w, BUNDLE_VERSION)?;
        binio::write_u32(&mut w, self.arm.joints.len() as u32)?;
        for &j in &self.arm.joints {
            binio::write_u32(&mut w, j as u32)?;
        }
        binio::write_f64_slice(&mut w, &self.stats.input_mean)?;
        binio::write_f64_slice(&mut w, &self.stats.input_std)?;
        binio::write_f64_slice(&mut w, &self.stats.target_mean)?;
        binio::write_f64_slice(&mut w, &self.stats.target_std)?;
        self.net.write(&mut w)
    }

    pub fn read<R: Read>(mut r: R) -> io::Result<Self> {
        binio::expect_magic(&mut r, BUNDLE_MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != BUNDLE_VERSION {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "unsupported bundle version"));
        }
        let njoints = binio::read_u32(&mut r)? as usize;
        let mut joints = Vec::with_capacity(njoints);
        for _ in 0..njoints {
            joints.push(binio::read_u32(&mut r)? as usize);
        }
        let stats = Normalization {
            input_mean: binio::read_f64_vec(&mut r)?,
            input_std: binio::read_f64_vec(&mut r)?,
            target_mean: binio::read_f64_vec(&mut r)?,
            target_std: binio::read_f64_vec(&mut r)?,
        };
        let net = NetworkParams::read(&mut r)?;
        Ok(PolicyBundle { net, stats, arm: ArmSelection { joints } })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_round_trip() {
        let arm = ArmSelection::custom(vec![4, 5]).unwrap();
        let net = NetworkParams::init_seeded(PolicyConfig::desk(6, 6), 77);
        let stats = Normalization {
            input_mean: vec![0.1; 8],
            input_std: vec![1.5; 8],
            target_mean: vec![-0.2; 6],
            target_std: vec![0.7; 6],
        };
        let bundle = PolicyBundle { net, stats, arm };
        let mut buf = Vec::new();
        bundle.write(&mut buf).unwrap();
        let back = PolicyBundle::read(buf.as_slice()).unwrap();
        assert_eq!(bundle, back);
    }
}
