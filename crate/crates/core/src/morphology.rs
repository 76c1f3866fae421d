//! Whole-crystal shape descriptors: area and hex-edge boundary length.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{reconstruct_full, AxialCoord, GridError, HexMask, WedgeGrid, WedgeSymmetry};
use crate::trajectory::Trajectory;

// One representative per unordered neighbor pair.
const FORWARD: [(i32, i32); 3] = [(1, 0), (0, 1), (1, -1)];

#[derive(Debug, Error)]
pub enum MorphologyError {
    #[error("trajectory has no frames")]
    EmptyTrajectory,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv is missing column `{0}`")]
    MissingColumn(&'static str),
}

/// Descriptors of one final crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphologySample {
    pub rho: f64,
    pub area: u64,
    pub boundary_length: u64,
}

pub fn area(mask: &HexMask) -> u64 {
    mask.count() as u64
}

/// Number of unordered adjacent pairs with exactly one attached member.
pub fn boundary_length(mask: &HexMask) -> u64 {
    let r = mask.radius() as i32 + 1;
    let mut n = 0;
    for i in -r..=r {
        for j in -r..=r {
            let a = mask.get(AxialCoord::new(i, j));
            for (di, dj) in FORWARD {
                if a != mask.get(AxialCoord::new(i + di, j + dj)) {
                    n += 1;
                }
            }
        }
    }
    n
}

/// `Σ attached·(6 − attached neighbors)`; equals [`boundary_length`].
pub fn exposed_faces(mask: &HexMask) -> u64 {
    mask.attached()
        .map(|c| c.neighbors().iter().filter(|&&nb| !mask.get(nb)).count() as u64)
        .sum()
}

/// Whole-crystal area from the wedge alone, weighting each wedge cell by the
/// number of crystal cells it stands for.
pub fn wedge_area(w: &WedgeGrid, symmetry: WedgeSymmetry) -> f64 {
    w.coords().filter(|&(_, v)| v).map(|(c, _)| symmetry.multiplicity(c)).sum()
}

pub fn features(traj: &Trajectory) -> Result<MorphologySample, MorphologyError> {
    features_with_symmetry(traj, WedgeSymmetry::default())
}

/// Descriptors of the final frame, reconstructed under `symmetry`.
pub fn features_with_symmetry(traj: &Trajectory, symmetry: WedgeSymmetry) -> Result<MorphologySample, MorphologyError> {
    let last = traj.final_frame().ok_or(MorphologyError::EmptyTrajectory)?;
    let mask = reconstruct_full(last, symmetry)?;
    Ok(MorphologySample { rho: traj.params.rho, area: area(&mask), boundary_length: boundary_length(&mask) })
}

pub fn write_csv<W: Write>(samples: &[MorphologySample], out: W) -> Result<(), MorphologyError> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MorphologySample>, MorphologyError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    for col in ["rho", "area", "boundary_length"] {
        if !headers.iter().any(|h| h == col) {
            return Err(MorphologyError::MissingColumn(col));
        }
    }
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}
