//! Binary dataset container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "NBDS"
//! version      u32      1
//! header_len   u64
//! header       JSON     DatasetHeader
//! records      n_records x Record
//! probs_flag   u8       0 or 1
//! [if 1] n_probs u64, then n_probs x (sample_id u64, N_t * S f64 in flat beam order)
//! ```
//!
//! A record is `sample_id u64`, `los u8`, `ue_x f64`, `ue_y f64`,
//! `n_mm u32`, `n_sub u32`, the paths (`gain_re f64, gain_im f64, aod f64,
//! toa f64, dist f64, is_los u8` each, mmWave first), then `h_mm` and
//! `h_sub_est` row-major as interleaved `(re, im)` f64 pairs.

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::channel::{ChannelPair, PathParams, ScenarioSample};
use crate::config::{GeometryConfig, SystemConfig};
use crate::error::DatasetError;
use crate::predictor::ProbabilityMatrix;

pub const MAGIC: &[u8; 4] = b"NBDS";
pub const VERSION: u32 = 1;
pub const GENERATOR_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub system: SystemConfig,
    #[serde(default)]
    pub geometry: Option<GeometryConfig>,
    pub n_records: u64,
    /// `[N_t, S]` of stored probability matrices, if any.
    #[serde(default)]
    pub probability_shape: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub system: SystemConfig,
    pub geometry: Option<GeometryConfig>,
    pub pairs: Vec<ChannelPair>,
    /// Externally computed predictions keyed by sample id.
    pub probabilities: Option<BTreeMap<u64, ProbabilityMatrix>>,
}

/// JSON sidecar written next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub generator_version: String,
    pub n_samples: usize,
    pub system: SystemConfig,
    pub geometry: Option<GeometryConfig>,
    /// SHA-256 of the dataset file.
    pub digest: String,
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<Complex64>) -> std::io::Result<()> {
    for z in m.iter() {
        w.write_f64::<LE>(z.re)?;
        w.write_f64::<LE>(z.im)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<Complex64>, DatasetError> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re = r.read_f64::<LE>()?;
        let im = r.read_f64::<LE>()?;
        data.push(Complex64::new(re, im));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| DatasetError::Malformed(e.to_string()))
}

fn write_path<W: Write>(w: &mut W, p: &PathParams) -> std::io::Result<()> {
    w.write_f64::<LE>(p.gain.re)?;
    w.write_f64::<LE>(p.gain.im)?;
    w.write_f64::<LE>(p.aod)?;
    w.write_f64::<LE>(p.toa)?;
    w.write_f64::<LE>(p.dist)?;
    w.write_u8(p.is_los as u8)
}

fn read_path<R: Read>(r: &mut R) -> Result<PathParams, DatasetError> {
    let re = r.read_f64::<LE>()?;
    let im = r.read_f64::<LE>()?;
    Ok(PathParams {
        gain: Complex64::new(re, im),
        aod: r.read_f64::<LE>()?,
        toa: r.read_f64::<LE>()?,
        dist: r.read_f64::<LE>()?,
        is_los: read_bool(r)?,
    })
}

fn read_bool<R: Read>(r: &mut R) -> Result<bool, DatasetError> {
    match r.read_u8()? {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(DatasetError::Malformed(format!("invalid flag byte {b}"))),
    }
}

impl Dataset {
    pub fn new(system: SystemConfig, geometry: Option<GeometryConfig>, pairs: Vec<ChannelPair>) -> Self {
        Self {
            system,
            geometry,
            pairs,
            probabilities: None,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), DatasetError> {
        let c = &self.system;
        let probability_shape = match &self.probabilities {
            Some(map) => {
                let shape = [c.antennas, c.rings];
                if let Some((id, p)) = map.iter().find(|(_, p)| p.dim() != (shape[0], shape[1])) {
                    return Err(DatasetError::Malformed(format!(
                        "probability matrix of sample {id} has shape {:?}, expected {shape:?}",
                        p.dim()
                    )));
                }
                Some(shape)
            }
            None => None,
        };
        let header = DatasetHeader {
            system: c.clone(),
            geometry: self.geometry.clone(),
            n_records: self.pairs.len() as u64,
            probability_shape,
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u64::<LE>(json.len() as u64)?;
        w.write_all(&json)?;
        for pair in &self.pairs {
            if pair.h_mm.dim() != (c.subcarriers, c.antennas)
                || pair.h_sub_est.dim() != (c.subcarriers_sub, c.antennas_sub)
            {
                return Err(DatasetError::Malformed(format!(
                    "sample {} does not match the configured dimensions",
                    pair.sample_id
                )));
            }
            let s = &pair.scenario;
            w.write_u64::<LE>(pair.sample_id)?;
            w.write_u8(s.los_condition as u8)?;
            w.write_f64::<LE>(s.ue_position[0])?;
            w.write_f64::<LE>(s.ue_position[1])?;
            w.write_u32::<LE>(s.mmwave_paths.len() as u32)?;
            w.write_u32::<LE>(s.sub6_paths.len() as u32)?;
            for p in s.mmwave_paths.iter().chain(&s.sub6_paths) {
                write_path(w, p)?;
            }
            write_matrix(w, &pair.h_mm)?;
            write_matrix(w, &pair.h_sub_est)?;
        }
        match &self.probabilities {
            None => w.write_u8(0)?,
            Some(map) => {
                w.write_u8(1)?;
                w.write_u64::<LE>(map.len() as u64)?;
                for (id, p) in map {
                    w.write_u64::<LE>(*id)?;
                    for &x in p.flat() {
                        w.write_f64::<LE>(x)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, DatasetError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DatasetError::Magic);
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(DatasetError::Version(version));
        }
        let len = r.read_u64::<LE>()?;
        if len > 1 << 24 {
            return Err(DatasetError::Malformed(format!("header length {len}")));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json)?;
        let header: DatasetHeader = serde_json::from_slice(&json)?;
        let c = header.system.clone();
        c.validate().map_err(|e| DatasetError::Malformed(e.to_string()))?;
        let mut pairs = Vec::with_capacity(header.n_records.min(1 << 20) as usize);
        for _ in 0..header.n_records {
            let sample_id = r.read_u64::<LE>()?;
            let los_condition = read_bool(r)?;
            let ue_position = [r.read_f64::<LE>()?, r.read_f64::<LE>()?];
            let n_mm = r.read_u32::<LE>()? as usize;
            let n_sub = r.read_u32::<LE>()? as usize;
            let mmwave_paths = (0..n_mm).map(|_| read_path(r)).collect::<Result<Vec<_>, _>>()?;
            let sub6_paths = (0..n_sub).map(|_| read_path(r)).collect::<Result<Vec<_>, _>>()?;
            let h_mm = read_matrix(r, c.subcarriers, c.antennas)?;
            let h_sub_est = read_matrix(r, c.subcarriers_sub, c.antennas_sub)?;
            pairs.push(ChannelPair {
                sample_id,
                h_mm,
                h_sub_est,
                scenario: ScenarioSample {
                    mmwave_paths,
                    sub6_paths,
                    ue_position,
                    los_condition,
                },
            });
        }
        let probabilities = if read_bool(r)? {
            let [rows, cols] = header
                .probability_shape
                .ok_or_else(|| DatasetError::Malformed("probabilities without a shape".into()))?;
            let count = r.read_u64::<LE>()?;
            let mut map = BTreeMap::new();
            for _ in 0..count {
                let id = r.read_u64::<LE>()?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(r.read_f64::<LE>()?);
                }
                let m = Array2::from_shape_vec((rows, cols), data).map_err(|e| DatasetError::Malformed(e.to_string()))?;
                let p = ProbabilityMatrix::from_weights(m).map_err(|e| DatasetError::Malformed(format!("sample {id}: {e}")))?;
                map.insert(id, p);
            }
            Some(map)
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(DatasetError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            system: header.system,
            geometry: header.geometry,
            pairs,
            probabilities,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Sidecar for a dataset already written to `path`.
    pub fn provenance(&self, seed: u64, path: &Path) -> Result<Provenance, DatasetError> {
        Ok(Provenance {
            seed,
            generator_version: GENERATOR_VERSION.to_string(),
            n_samples: self.pairs.len(),
            system: self.system.clone(),
            geometry: self.geometry.clone(),
            digest: file_digest(path)?,
        })
    }
}

/// Hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> Result<String, DatasetError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Sidecar path: `<dataset>.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
