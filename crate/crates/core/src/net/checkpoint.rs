//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic "SOLNETCK" | version u32
//! config: num_layers, hidden_units, input_features, lags, horizon (u32 each),
//!         dropout_rate f64, cell variant u8
//! scaler: channel count u32, then per channel
//!         name length u32, name bytes, unit u8, min f64, max f64, overridden u8
//! payload: value count u64, values f64 in tensor order
//! sha256 of everything above (32 bytes)
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::{CellVariant, ModelConfig};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::ingest::Unit;
use crate::series::{ChannelScale, ScalerState};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SOLNETCK";
const DIGEST_LEN: usize = 32;

/// Everything needed to forecast: weights, architecture, and input scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub scaler: ScalerState,
}

fn unit_code(u: Unit) -> u8 {
    match u {
        Unit::Kilowatt => 0,
        Unit::Percent => 1,
        Unit::WattsPerSquareMeter => 2,
        Unit::Dimensionless => 3,
    }
}

fn unit_from(code: u8) -> Result<Unit> {
    Ok(match code {
        0 => Unit::Kilowatt,
        1 => Unit::Percent,
        2 => Unit::WattsPerSquareMeter,
        3 => Unit::Dimensionless,
        other => return Err(Error::Checkpoint(format!("unknown unit code {other}"))),
    })
}

fn count(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} too large")))
}

pub fn encode(params: &ModelParams, config: &ModelConfig, scaler: &ScalerState) -> Result<Vec<u8>> {
    config.validate()?;
    if !params.matches(config) {
        return Err(Error::Shape("parameters do not match the model configuration".into()));
    }
    let mut out = Vec::with_capacity(64 + params.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        config.num_layers,
        config.hidden_units,
        config.input_features,
        config.lags,
        config.horizon,
    ] {
        out.extend_from_slice(&count(v, "model dimension")?.to_le_bytes());
    }
    out.extend_from_slice(&config.dropout_rate.to_le_bytes());
    out.push(match config.cell_variant {
        CellVariant::PaperFaithful => 0,
        CellVariant::Standard => 1,
    });
    out.extend_from_slice(&count(scaler.channels.len(), "channel count")?.to_le_bytes());
    for c in &scaler.channels {
        out.extend_from_slice(&count(c.name.len(), "channel name")?.to_le_bytes());
        out.extend_from_slice(c.name.as_bytes());
        out.push(unit_code(c.unit));
        out.extend_from_slice(&c.min.to_le_bytes());
        out.extend_from_slice(&c.max.to_le_bytes());
        out.push(c.overridden as u8);
    }
    let flat = params.flatten();
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 12 + DIGEST_LEN {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }

    let mut r = Reader { buf: body, pos: 12 };
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let dropout_rate = r.f64()?;
    let cell_variant = match r.u8()? {
        0 => CellVariant::PaperFaithful,
        1 => CellVariant::Standard,
        other => return Err(Error::Checkpoint(format!("unknown cell variant {other}"))),
    };
    let config = ModelConfig {
        num_layers: dims[0],
        hidden_units: dims[1],
        input_features: dims[2],
        lags: dims[3],
        horizon: dims[4],
        dropout_rate,
        cell_variant,
    };
    config.validate()?;

    let n_channels = r.u32()? as usize;
    let mut channels = Vec::with_capacity(n_channels.min(64));
    for _ in 0..n_channels {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("channel name is not UTF-8".into()))?
            .to_string();
        channels.push(ChannelScale {
            name,
            unit: unit_from(r.u8()?)?,
            min: r.f64()?,
            max: r.f64()?,
            overridden: r.u8()? != 0,
        });
    }

    let mut params = ModelParams::zeros(&config);
    let n = r.u64()? as usize;
    if n != params.param_count() {
        return Err(Error::Checkpoint(format!(
            "payload holds {n} values, configuration needs {}",
            params.param_count()
        )));
    }
    let mut flat = Vec::with_capacity(n);
    for _ in 0..n {
        flat.push(r.f64()?);
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    params.assign_flat(&flat);
    Ok(Checkpoint {
        params,
        config,
        scaler: ScalerState { channels },
    })
}

/// Write a checkpoint atomically (temporary file, then rename).
pub fn save_model(params: &ModelParams, config: &ModelConfig, scaler: &ScalerState, path: &Path) -> Result<()> {
    let bytes = encode(params, config, scaler)?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io("creating temporary checkpoint", e))?;
    std::fs::write(tmp.path(), &bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e.error))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}
