use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::WedgeGrid;
use crate::params::LcaParams;

/// Which process produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Lca = 0,
    Emulator = 1,
}

impl Source {
    pub fn from_byte(b: u8) -> Option<Source> {
        match b {
            0 => Some(Source::Lca),
            1 => Some(Source::Emulator),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("trajectory has no frames")]
    Empty,
    #[error("frame {frame} has side {got}, expected {expected}")]
    FrameSize { frame: usize, got: usize, expected: usize },
    #[error("frame 0 must contain exactly the seed cell")]
    BadInitialFrame,
    #[error("frame {frame} drops cells attached in frame {}", frame - 1)]
    NonMonotone { frame: usize },
    #[error("snapshot_every must be >= 1")]
    ZeroSnapshotInterval,
    #[error("downsampling factor must be >= 1")]
    ZeroFactor,
}

/// Binary attachment frames of one growth run, with the parameters that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub side: usize,
    pub frames: Vec<WedgeGrid>,
    pub params: LcaParams,
    pub seed: u64,
    /// Raw automaton steps between consecutive frames (the last interval may
    /// be shorter).
    pub snapshot_every: u32,
    pub source: Source,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn final_frame(&self) -> Option<&WedgeGrid> {
        self.frames.last()
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let first = self.frames.first().ok_or(TrajectoryError::Empty)?;
        if self.snapshot_every == 0 {
            return Err(TrajectoryError::ZeroSnapshotInterval);
        }
        for (k, f) in self.frames.iter().enumerate() {
            if f.side() != self.side {
                return Err(TrajectoryError::FrameSize { frame: k, got: f.side(), expected: self.side });
            }
        }
        if self.side == 0 || first.count() != 1 || !first.get(0, 0) {
            return Err(TrajectoryError::BadInitialFrame);
        }
        for (k, w) in self.frames.windows(2).enumerate() {
            if !w[0].is_subset_of(&w[1]) {
                return Err(TrajectoryError::NonMonotone { frame: k + 1 });
            }
        }
        Ok(())
    }

    /// Keeps frames `0, factor, 2·factor, …` plus the final frame.
    pub fn downsample(&self, factor: usize) -> Result<Trajectory, TrajectoryError> {
        if factor == 0 {
            return Err(TrajectoryError::ZeroFactor);
        }
        let last = self.frames.len().saturating_sub(1);
        let frames = self
            .frames
            .iter()
            .enumerate()
            .filter(|(k, _)| k % factor == 0 || *k == last)
            .map(|(_, f)| f.clone())
            .collect();
        Ok(Trajectory {
            frames,
            snapshot_every: self.snapshot_every.saturating_mul(factor as u32),
            ..self.clone()
        })
    }
}
