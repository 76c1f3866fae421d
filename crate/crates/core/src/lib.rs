//! Ground-truth snow-crystal growth trajectories, morphology statistics, and
//! Wasserstein-distance evaluation of emulators against the ground truth.

pub mod bench;
pub mod dataset;
pub mod grid;
pub mod lca;
pub mod morphology;
pub mod params;
pub mod rng;
pub mod trajectory;
pub mod transport;

pub use grid::{AxialCoord, HexMask, WedgeGrid, WedgeSymmetry};
pub use lca::{Engine, LcaError, LcaState};
pub use params::{BoundaryMode, LcaParams, RunConfig};
pub use trajectory::{Source, Trajectory};
pub use morphology::MorphologySample;
pub use transport::{EmpiricalJoint, EwdReport};
