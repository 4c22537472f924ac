//! Study tables as CSV plus a JSON sidecar, and trajectories in a binary
//! container.
//!
//! Trajectory layout, all little-endian:
//!
//! ```text
//! "BBGK" | version u32 | d u32 | n u32 | N u32 | dt f64 | count u64
//! count x time f64
//! count x frame, each n^(dN) x (re f64, im f64)
//! SHA-256 of everything above (32 bytes)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, StudyKind};
use crate::error::{HarnessError, Result};
use crate::result::{Cell, StudyResult, METRIC_NOTE};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &[u8; 4] = b"BBGK";
const HEADER_LEN: usize = 4 + 4 * 4 + 8 + 8;

fn fail<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Persistence(msg.into()))
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    study: StudyKind,
    metric: String,
    config_digest: String,
    csv_sha256: String,
    row_count: usize,
    columns: Vec<String>,
    wall_clock_seconds: f64,
    timestamp_unix: u64,
    versions: BTreeMap<String, String>,
    config: ExperimentConfig,
}

/// Paths written by [`persist_study`].
#[derive(Clone, Debug)]
pub struct StudyFiles {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

pub fn study_files(dir: &Path, study: StudyKind) -> StudyFiles {
    StudyFiles { csv: dir.join(format!("{}.csv", study.name())), sidecar: dir.join(format!("{}.json", study.name())) }
}

/// Writes `<study>.csv` and `<study>.json` into `dir`.
pub fn persist_study(result: &StudyResult, config: &ExperimentConfig, dir: &Path) -> Result<StudyFiles> {
    if result.config_digest != config.digest() {
        return fail("result was not produced by this configuration");
    }
    fs::create_dir_all(dir)?;
    let files = study_files(dir, result.study);
    let csv = result.to_csv();
    let timestamp_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        study: result.study,
        metric: METRIC_NOTE.to_string(),
        config_digest: result.config_digest.clone(),
        csv_sha256: hex::encode(Sha256::digest(csv.as_bytes())),
        row_count: result.rows.len(),
        columns: result.columns.clone(),
        wall_clock_seconds: result.wall_clock_seconds,
        timestamp_unix,
        versions: result.versions.clone(),
        config: config.clone(),
    };
    fs::write(&files.csv, csv)?;
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| HarnessError::Persistence(e.to_string()))?;
    fs::write(&files.sidecar, json + "\n")?;
    Ok(files)
}

/// Reads a study back from its CSV and sidecar, checking both digests.
pub fn load_study(files: &StudyFiles) -> Result<(StudyResult, ExperimentConfig)> {
    let json = fs::read_to_string(&files.sidecar)?;
    let sidecar: Sidecar = serde_json::from_str(&json).map_err(|e| HarnessError::Persistence(format!("sidecar: {e}")))?;
    if sidecar.format_version != FORMAT_VERSION {
        return fail(format!("version mismatch: file has {}, expected {FORMAT_VERSION}", sidecar.format_version));
    }
    let csv = fs::read_to_string(&files.csv)?;
    if hex::encode(Sha256::digest(csv.as_bytes())) != sidecar.csv_sha256 {
        return fail("digest mismatch: CSV does not match its sidecar");
    }
    if sidecar.config.digest() != sidecar.config_digest {
        return fail("digest mismatch: configuration does not match its digest");
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| HarnessError::Persistence(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != sidecar.columns {
        return fail("CSV header does not match the sidecar column list");
    }
    let mut rows = Vec::with_capacity(sidecar.row_count);
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::Persistence(e.to_string()))?;
        rows.push(record.iter().map(Cell::parse).collect());
    }
    if rows.len() != sidecar.row_count {
        return fail(format!("truncated file: {} of {} rows", rows.len(), sidecar.row_count));
    }
    let result = StudyResult {
        study: sidecar.study,
        config_digest: sidecar.config_digest,
        columns: header,
        rows,
        wall_clock_seconds: sidecar.wall_clock_seconds,
        versions: sidecar.versions,
    };
    Ok((result, sidecar.config))
}

/// Recorded frames of a one-body (`particles = 1`) or N-body evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: u32,
    pub n: u32,
    pub particles: u32,
    pub dt: f64,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<C64>>,
}

impl Trajectory {
    pub fn frame_len(&self) -> usize {
        (self.n as usize).pow(self.dim * self.particles)
    }

    /// Bitwise equality, including NaN payloads and signed zeros.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let cbits = |f: &[C64]| f.iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]).collect::<Vec<_>>();
        (self.dim, self.n, self.particles, self.dt.to_bits()) == (other.dim, other.n, other.particles, other.dt.to_bits())
            && bits(&self.times) == bits(&other.times)
            && self.frames.len() == other.frames.len()
            && self.frames.iter().zip(&other.frames).all(|(a, b)| cbits(a) == cbits(b))
    }
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let len = traj.frame_len();
    if traj.times.len() != traj.frames.len() || traj.frames.iter().any(|f| f.len() != len) {
        return fail("trajectory frames disagree with the header");
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * traj.times.len() + 16 * len * traj.frames.len() + 32);
    buf.extend_from_slice(MAGIC);
    for v in [FORMAT_VERSION, traj.dim, traj.n, traj.particles] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&traj.dt.to_le_bytes());
    buf.extend_from_slice(&(traj.times.len() as u64).to_le_bytes());
    for t in &traj.times {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for frame in &traj.frames {
        for c in frame {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return fail("truncated file: no header");
    }
    if &bytes[..4] != MAGIC {
        return fail("bad magic");
    }
    if bytes.len() < HEADER_LEN {
        return fail("truncated file: short header");
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let f64_at = |o: usize| f64::from_bits(u64_at(o));
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return fail(format!("version mismatch: file has {version}, expected {FORMAT_VERSION}"));
    }
    let (dim, n, particles) = (u32_at(8), u32_at(12), u32_at(16));
    let dt = f64_at(20);
    let count = u64_at(28) as usize;
    let frame_len = (n as u128).checked_pow(dim * particles).unwrap_or(u128::MAX);
    let expected = (count as u128)
        .checked_mul(8 + 16 * frame_len)
        .and_then(|b| b.checked_add((HEADER_LEN + 32) as u128));
    match expected {
        Some(e) if e == bytes.len() as u128 => {}
        Some(e) if e > bytes.len() as u128 => return fail(format!("truncated file: {} of {e} bytes", bytes.len())),
        _ => return fail("trailing or inconsistent data after the frames"),
    }
    let body = bytes.len() - 32;
    if Sha256::digest(&bytes[..body]).as_slice() != &bytes[body..] {
        return fail("digest mismatch");
    }
    let frame_len = frame_len as usize;
    let mut off = HEADER_LEN;
    let times: Vec<f64> = (0..count).map(|i| f64_at(off + 8 * i)).collect();
    off += 8 * count;
    let frames = (0..count)
        .map(|f| {
            let base = off + 16 * frame_len * f;
            (0..frame_len).map(|i| C64::new(f64_at(base + 16 * i), f64_at(base + 16 * i + 8))).collect()
        })
        .collect();
    Ok(Trajectory { dim, n, particles, dt, times, frames })
}
