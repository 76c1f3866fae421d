//! Trajectory files, dataset manifests, and batch generation.
//!
//! File layout, all integers little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `CGT1`                           |
//! | 4      | 2    | version (1)                            |
//! | 6      | 2    | reserved, zero                         |
//! | 8      | 4    | side                                   |
//! | 12     | 4    | frame_count                            |
//! | 16     | 4    | snapshot_every                         |
//! | 20     | 1    | source (0 lca, 1 emulator)             |
//! | 21     | 3    | zero                                   |
//! | 24     | 8    | seed                                   |
//! | 32     | 4    | n_params (8)                           |
//! | 36     | 4    | zero                                   |
//! | 40     | 24   | zero                                   |
//! | 64     | 8·n  | f64 parameters in [`LcaParams::NAMES`] order |
//!
//! Frames follow, each `ceil(side²/8)` bytes: cells row-major (`i` major),
//! bit `k % 8` of byte `k / 8` holding cell `k`, unused high bits zero.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::WedgeGrid;
use crate::lca::{self, LcaError};
use crate::params::{LcaParams, RunConfig};
use crate::rng::{keyed_u64, keyed_uniform, mix64, stream};
use crate::trajectory::{Source, Trajectory, TrajectoryError};

pub const MAGIC: [u8; 4] = *b"CGT1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 64;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a trajectory file (bad magic)")]
    BadMagic,
    #[error("unsupported trajectory format version {0}")]
    Version(u16),
    #[error("file truncated: need {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("trajectory invariant violated: {0}")]
    Invariant(#[from] TrajectoryError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn frame_bytes(side: usize) -> usize {
    (side * side).div_ceil(8)
}

/// Exact size in bytes of an encoded trajectory.
pub fn encoded_len(side: usize, frames: usize) -> usize {
    HEADER_BYTES + 8 * LcaParams::COUNT + frames * frame_bytes(side)
}

pub fn encode_trajectory(t: &Trajectory) -> Result<Vec<u8>, DatasetError> {
    t.validate()?;
    let mut out = Vec::with_capacity(encoded_len(t.side, t.len()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(t.side as u32).to_le_bytes());
    out.extend_from_slice(&(t.len() as u32).to_le_bytes());
    out.extend_from_slice(&t.snapshot_every.to_le_bytes());
    out.push(t.source as u8);
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&t.seed.to_le_bytes());
    out.extend_from_slice(&(LcaParams::COUNT as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.resize(HEADER_BYTES, 0);
    for p in t.params.to_array() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let fb = frame_bytes(t.side);
    for f in &t.frames {
        let start = out.len();
        out.resize(start + fb, 0);
        for (k, _) in f.cells().iter().enumerate().filter(|(_, &v)| v) {
            out[start + k / 8] |= 1 << (k % 8);
        }
    }
    Ok(out)
}

fn u16_at(b: &[u8], o: usize) -> u16 {
    u16::from_le_bytes([b[o], b[o + 1]])
}

fn u32_at(b: &[u8], o: usize) -> u32 {
    u32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], o: usize) -> u64 {
    u64::from_le_bytes(b[o..o + 8].try_into().unwrap())
}

pub fn decode_trajectory(bytes: &[u8]) -> Result<Trajectory, DatasetError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(DatasetError::BadMagic);
    }
    if bytes.len() < HEADER_BYTES {
        return Err(DatasetError::Truncated { expected: HEADER_BYTES, found: bytes.len() });
    }
    let version = u16_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(DatasetError::Version(version));
    }
    let side = u32_at(bytes, 8) as usize;
    let frame_count = u32_at(bytes, 12) as usize;
    let snapshot_every = u32_at(bytes, 16);
    let source = Source::from_byte(bytes[20]).ok_or_else(|| DatasetError::Header(format!("unknown source {}", bytes[20])))?;
    let seed = u64_at(bytes, 24);
    let n_params = u32_at(bytes, 32) as usize;
    if n_params != LcaParams::COUNT {
        return Err(DatasetError::Header(format!("expected {} parameters, found {n_params}", LcaParams::COUNT)));
    }
    if side == 0 {
        return Err(DatasetError::Header("side is zero".into()));
    }
    let expected = encoded_len(side, frame_count);
    if bytes.len() < expected {
        return Err(DatasetError::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(DatasetError::Header(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let mut params = [0.0; LcaParams::COUNT];
    for (k, p) in params.iter_mut().enumerate() {
        *p = f64::from_bits(u64_at(bytes, HEADER_BYTES + 8 * k));
    }
    let fb = frame_bytes(side);
    let base = HEADER_BYTES + 8 * n_params;
    let frames = (0..frame_count)
        .map(|f| {
            let raw = &bytes[base + f * fb..base + (f + 1) * fb];
            WedgeGrid::from_cells(side, (0..side * side).map(|k| raw[k / 8] >> (k % 8) & 1 == 1).collect())
        })
        .collect();
    let t = Trajectory { side, frames, params: LcaParams::from_array(params), seed, snapshot_every, source };
    t.validate()?;
    Ok(t)
}

pub fn write_trajectory(t: &Trajectory, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_trajectory(t)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, DatasetError> {
    decode_trajectory(&fs::read(path)?)
}

/// Frame subsampling; see [`Trajectory::downsample`].
pub fn downsample(t: &Trajectory, factor: usize) -> Result<Trajectory, DatasetError> {
    Ok(t.downsample(factor)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// 80/10/10 train/val/test by a hash of the run seed.
pub fn split_for_seed(seed: u64) -> Split {
    match mix64(seed ^ stream::SPLIT) % 100 {
        0..=79 => Split::Train,
        80..=89 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub rho: f64,
    pub seed: u64,
    pub frame_count: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFailure {
    pub index: usize,
    pub rho: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreationInfo {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub failures: Vec<ManifestFailure>,
    /// Growth parameters shared by every run; ρ varies per entry.
    pub fixed_params: BTreeMap<String, f64>,
    pub rho_range: [f64; 2],
    pub run: RunConfig,
    pub created: CreationInfo,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let m: DatasetManifest = serde_json::from_slice(&fs::read(path)?)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(DatasetError::Manifest(format!("unsupported manifest version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Reads every listed trajectory, resolving file names against `dir`.
    pub fn load_trajectories(&self, dir: &Path) -> Result<Vec<Trajectory>, DatasetError> {
        self.entries.par_iter().map(|e| read_trajectory(&dir.join(&e.file))).collect()
    }
}

/// ρ and run seed of entry `index` under `master_seed`.
pub fn plan_run(index: usize, rho_range: (f64, f64), master_seed: u64) -> (f64, u64) {
    let (lo, hi) = rho_range;
    let u = keyed_uniform(master_seed, stream::RHO, index as u64, 0);
    (lo + (hi - lo) * u, keyed_u64(master_seed, stream::RUN_SEED, index as u64, 0))
}

#[derive(Debug, Clone)]
pub struct GenerateRequest {
    pub n: usize,
    pub run: RunConfig,
    /// ρ is ignored; it is drawn per entry.
    pub fixed: LcaParams,
    pub rho_range: (f64, f64),
    pub master_seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

pub fn entry_file_name(index: usize) -> String {
    format!("traj_{index:06}.cgt")
}

fn fixed_block(p: &LcaParams) -> BTreeMap<String, f64> {
    LcaParams::NAMES.iter().zip(p.to_array()).filter(|(n, _)| **n != "rho").map(|(n, v)| (n.to_string(), v)).collect()
}

/// Runs `req.n` trajectories and writes them with a manifest into
/// `req.out_dir`. Runs that fail are listed under `failures`.
pub fn generate_dataset(req: &GenerateRequest) -> Result<DatasetManifest, DatasetError> {
    if req.n == 0 {
        return Err(DatasetError::Manifest("dataset size must be at least 1".into()));
    }
    fs::create_dir_all(&req.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.workers.max(1))
        .build()
        .map_err(|e| DatasetError::Manifest(e.to_string()))?;
    let outcomes: Vec<Result<ManifestEntry, ManifestFailure>> = pool.install(|| {
        (0..req.n)
            .into_par_iter()
            .map(|index| {
                let (rho, seed) = plan_run(index, req.rho_range, req.master_seed);
                let cfg = RunConfig { seed, ..req.run };
                let fail = |error: String| ManifestFailure { index, rho, seed, error };
                let t = lca::run(req.fixed.with_rho(rho), &cfg).map_err(|e: LcaError| fail(e.to_string()))?;
                let file = entry_file_name(index);
                write_trajectory(&t, &req.out_dir.join(&file)).map_err(|e| fail(e.to_string()))?;
                Ok(ManifestEntry { file, rho, seed, frame_count: t.len(), split: split_for_seed(seed) })
            })
            .collect()
    });
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(e) => entries.push(e),
            Err(f) => failures.push(f),
        }
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        entries,
        failures,
        fixed_params: fixed_block(&req.fixed),
        rho_range: [req.rho_range.0, req.rho_range.1],
        run: RunConfig { seed: req.master_seed, ..req.run },
        created: CreationInfo {
            tool: "cgne".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: req.master_seed,
            requested: req.n,
        },
    };
    manifest.save(&req.out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Trajectory {
        let side = 5;
        let mut f1 = WedgeGrid::seed_only(side);
        f1.set(1, 0, true);
        f1.set(0, 1, true);
        let mut f2 = f1.clone();
        f2.set(4, 4, true);
        Trajectory {
            side,
            frames: vec![WedgeGrid::seed_only(side), f1, f2],
            params: LcaParams::default(),
            seed: 0xdead_beef,
            snapshot_every: 7,
            source: Source::Emulator,
        }
    }

    #[test]
    fn roundtrip_and_size() {
        let t = tiny();
        let b = encode_trajectory(&t).unwrap();
        assert_eq!(b.len(), 64 + 64 + 3 * 4);
        assert_eq!(b.len(), encoded_len(5, 3));
        assert_eq!(decode_trajectory(&b).unwrap(), t);
    }

    #[test]
    fn bit_order_is_lsb_first_row_major() {
        let b = encode_trajectory(&tiny()).unwrap();
        let f1 = &b[128 + 4..128 + 8];
        // cells 0 = (0,0), 1 = (0,1), 5 = (1,0)
        assert_eq!(f1, &[0b0010_0011, 0, 0, 0]);
        let f2 = &b[128 + 8..];
        // cell 24 = (4,4) is bit 0 of byte 3
        assert_eq!(f2, &[0b0010_0011, 0, 0, 1]);
    }

    #[test]
    fn distinct_errors() {
        let b = encode_trajectory(&tiny()).unwrap();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_trajectory(&bad), Err(DatasetError::BadMagic)));
        assert!(matches!(decode_trajectory(&b[..b.len() - 1]), Err(DatasetError::Truncated { .. })));
        assert!(matches!(decode_trajectory(&b[..20]), Err(DatasetError::Truncated { .. })));
        let mut bad = b.clone();
        bad[4] = 2;
        assert!(matches!(decode_trajectory(&bad), Err(DatasetError::Version(2))));
        let mut bad = b.clone();
        // drop (0,1) from the last frame
        bad[128 + 8] &= !0b10;
        assert!(matches!(decode_trajectory(&bad), Err(DatasetError::Invariant(TrajectoryError::NonMonotone { frame: 2 }))));
        let mut t = tiny();
        t.frames.swap(1, 2);
        assert!(matches!(encode_trajectory(&t), Err(DatasetError::Invariant(_))));
    }

    #[test]
    fn split_proportions() {
        let n = 20_000;
        let mut c = [0usize; 3];
        for s in 0..n {
            c[split_for_seed(keyed_u64(1, stream::RUN_SEED, s, 0)) as usize] += 1;
        }
        let f = c.map(|x| x as f64 / n as f64);
        assert!((f[0] - 0.8).abs() < 0.01 && (f[1] - 0.1).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn plan_is_in_range() {
        for k in 0..1000 {
            let (rho, _) = plan_run(k, (0.35, 0.65), 9);
            assert!((0.35..0.65).contains(&rho));
        }
    }
}
