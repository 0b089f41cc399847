//! Dataset container files.
//!
//! Layout (all integers and counts little-endian 64-bit unless noted):
//! ```text
//! magic "EMDS" | version u16 | seed u64 | num_agents u64 | n u64
//! per agent:   obs_dim u64
//! per step:    app_class u64 | demand u64 | channel u64
//!              | traffic_rate f64 | snr_db f64 | step_index u64
//!              then per agent: features f64 x obs_dim | label u64
//!              | noise_seed u64
//! ```
//! Floats are raw IEEE-754 bit patterns, so a write/read cycle is
//! bit-exact.

use super::{Dataset, EnvError, EnvSample, GlobalState, Observation, TaskTarget};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"EMDS";
const VERSION: u16 = 1;

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), EnvError> {
    let bytes = encode(dataset);
    let mut file = fs::File::create(path).map_err(|e| EnvError::DatasetFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    file.write_all(&bytes).map_err(|e| EnvError::DatasetFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(())
}

pub fn encode(dataset: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&dataset.seed.to_le_bytes());
    buf.extend_from_slice(&(dataset.num_agents() as u64).to_le_bytes());
    buf.extend_from_slice(&(dataset.n as u64).to_le_bytes());
    for per_agent in &dataset.samples {
        let dim = per_agent.first().map_or(0, |s| s.observation.features.len());
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for i in 0..dataset.n {
        let truth = &dataset.samples[0][i].global_truth;
        buf.extend_from_slice(&(truth.app_class as u64).to_le_bytes());
        buf.extend_from_slice(&(truth.demand_level as u64).to_le_bytes());
        buf.extend_from_slice(&(truth.channel_level as u64).to_le_bytes());
        buf.extend_from_slice(&truth.traffic_rate.to_le_bytes());
        buf.extend_from_slice(&truth.snr_db.to_le_bytes());
        buf.extend_from_slice(&truth.step_index.to_le_bytes());
        for per_agent in &dataset.samples {
            let sample = &per_agent[i];
            for f in &sample.observation.features {
                buf.extend_from_slice(&f.to_le_bytes());
            }
            buf.extend_from_slice(&(sample.target.label as u64).to_le_bytes());
            buf.extend_from_slice(&sample.observation.noise_seed.to_le_bytes());
        }
    }
    buf
}

pub fn read_dataset(path: &Path) -> Result<Dataset, EnvError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| EnvError::DatasetFile {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
    decode(&bytes).map_err(|msg| EnvError::DatasetFile {
        path: path.display().to_string(),
        msg,
    })
}

pub fn decode(bytes: &[u8]) -> Result<Dataset, String> {
    let mut cur = Reader { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err("bad magic, expected EMDS".into());
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let seed = cur.take_u64()?;
    let num_agents = cur.take_u64()? as usize;
    let n = cur.take_u64()? as usize;
    if num_agents == 0 || num_agents > 64 {
        return Err(format!("implausible agent count {num_agents}"));
    }
    let mut dims = Vec::with_capacity(num_agents);
    for _ in 0..num_agents {
        dims.push(cur.take_u64()? as usize);
    }
    let mut samples: Vec<Vec<EnvSample>> = vec![Vec::with_capacity(n); num_agents];
    for _ in 0..n {
        let truth = GlobalState {
            app_class: cur.take_u64()? as usize,
            demand_level: cur.take_u64()? as usize,
            channel_level: cur.take_u64()? as usize,
            traffic_rate: cur.take_f64()?,
            snr_db: cur.take_f64()?,
            step_index: cur.take_u64()?,
        };
        for (k, dim) in dims.iter().enumerate() {
            let mut features = Vec::with_capacity(*dim);
            for _ in 0..*dim {
                features.push(cur.take_f64()?);
            }
            let label = cur.take_u64()? as usize;
            let noise_seed = cur.take_u64()?;
            samples[k].push(EnvSample {
                observation: Observation {
                    agent_id: k + 1,
                    features,
                    noise_seed,
                },
                target: TaskTarget {
                    agent_id: k + 1,
                    label,
                },
                global_truth: truth.clone(),
            });
        }
    }
    if cur.pos != bytes.len() {
        return Err(format!(
            "{} trailing bytes after the declared payload",
            bytes.len() - cur.pos
        ));
    }
    Ok(Dataset { samples, n, seed })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err(format!(
                "truncated: need {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len()
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take_u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn take_f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvConfig;
    use crate::env::make_dataset;

    #[test]
    fn encode_decode_is_bit_exact() {
        let dataset = make_dataset(&EnvConfig::default(), 16, 4).unwrap();
        let bytes = encode(&dataset);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, dataset);
    }

    #[test]
    fn identical_seeds_give_identical_bytes() {
        let config = EnvConfig::default();
        let a = encode(&make_dataset(&config, 32, 9).unwrap());
        let b = encode(&make_dataset(&config, 32, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_and_bad_magic_are_rejected() {
        let dataset = make_dataset(&EnvConfig::default(), 4, 1).unwrap();
        let mut bytes = encode(&dataset);
        bytes.truncate(bytes.len() - 3);
        assert!(decode(&bytes).unwrap_err().contains("truncated"));
        assert!(decode(b"XXXX").unwrap_err().contains("bad magic"));
    }
}
