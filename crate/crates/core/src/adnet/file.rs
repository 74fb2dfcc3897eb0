//! Model file layout (all little-endian):
//!
//! ```text
//! magic            8 bytes  "SPANNAD1"
//! format version   u32      currently 1
//! in_channels      u32
//! ensemble_size    u32
//! conv_channels    u32
//! kernel           u32
//! stride           u32
//! pool_kernel      u32
//! pool_stride      u32
//! second_pool      u8       0 when the second pooling stage is skipped
//! channel_mask     u8       bit i set for channel i of (n_c, d_mean, d_std, n_imp)
//! fc_width         u32
//! seed             u64
//! block count      u32      18
//! blocks           per block: u32 element count, then that many f64
//! ```
//!
//! Blocks are the 14 parameter blocks in [`PARAM_BLOCKS`](super::PARAM_BLOCKS)
//! order followed by bn1 running mean, bn1 running var, bn2 running mean and
//! bn2 running var.

use std::path::Path;

use super::{ADConfig, ADModel, BnStats, Mode, Params};
use crate::featurize::ChannelMask;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPANNAD1";
const VERSION: u32 = 1;
const BLOCKS: usize = 18;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub(crate) fn encode(model: &ADModel) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::with_capacity(64 + model.params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.in_channels, c.ensemble_size, c.conv_channels, c.kernel, c.stride, c.pool_kernel, c.pool_stride] {
        put_u32(&mut out, v);
    }
    out.push(c.second_pool as u8);
    out.push(c.channel_mask.bits());
    put_u32(&mut out, c.fc_width);
    out.extend_from_slice(&c.seed.to_le_bytes());
    put_u32(&mut out, BLOCKS);
    let stats = [&model.bn1.mean, &model.bn1.var, &model.bn2.mean, &model.bn2.var];
    for block in model.params.blocks().into_iter().chain(stats) {
        put_u32(&mut out, block.len());
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated file at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self, expected: usize, name: &str) -> std::result::Result<Vec<f64>, String> {
        let len = self.u32()?;
        if len != expected {
            return Err(format!("block {name} has {len} values, expected {expected}"));
        }
        Ok(self
            .take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub(crate) fn decode(bytes: &[u8]) -> std::result::Result<ADModel, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| "bad magic bytes".to_string())? != MAGIC {
        return Err("bad magic bytes".into());
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(format!("unsupported model format version {version} (expected {VERSION})"));
    }
    let in_channels = r.u32()?;
    let ensemble_size = r.u32()?;
    let conv_channels = r.u32()?;
    let kernel = r.u32()?;
    let stride = r.u32()?;
    let pool_kernel = r.u32()?;
    let pool_stride = r.u32()?;
    let second_pool = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(format!("invalid second_pool flag {v}")),
    };
    let channel_mask = ChannelMask::from_bits(r.u8()?).map_err(|e| e.to_string())?;
    let fc_width = r.u32()?;
    let seed = r.u64()?;
    let config = ADConfig {
        in_channels,
        ensemble_size,
        conv_channels,
        kernel,
        stride,
        pool_kernel,
        pool_stride,
        second_pool,
        fc_width,
        seed,
        channel_mask,
    };
    let shapes = config.validate().map_err(|e| e.to_string())?;
    if r.u32()? != BLOCKS {
        return Err("unexpected block count".into());
    }
    let mut params = Params::zeros(&config, &shapes);
    for (name, block) in super::PARAM_BLOCKS.iter().zip(params.blocks_mut()) {
        *block = r.block(block.len(), name)?;
    }
    let mut stats = |name: &str| r.block(conv_channels, name);
    let bn1 = BnStats {
        mean: stats("bn1.running_mean")?,
        var: stats("bn1.running_var")?,
    };
    let bn2 = BnStats {
        mean: stats("bn2.running_mean")?,
        var: stats("bn2.running_var")?,
    };
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let model = ADModel {
        config,
        shapes,
        params,
        bn1,
        bn2,
        mode: Mode::Eval,
    };
    if !model.all_finite() {
        return Err("non-finite parameter or non-positive running variance".into());
    }
    Ok(model)
}

pub fn save_model(model: &ADModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a model; it comes back in eval mode.
pub fn load_model(path: impl AsRef<Path>) -> Result<ADModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}

/// Loads a model and checks it consumes exactly `mask`'s channels.
pub fn load_model_for(path: impl AsRef<Path>, mask: ChannelMask) -> Result<ADModel> {
    let model = load_model(path)?;
    model.check_mask(mask)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adnet::init_model;
    use crate::featurize::{Channel, FeatureCurves};

    fn model() -> ADModel {
        let mut m = init_model(&ADConfig::new(ChannelMask::ALL, 10, 3)).unwrap();
        m.bn1.mean[2] = 0.123456789;
        m.bn2.var[5] = 0.987654321;
        m.eval()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ad.bin");
        let m = model();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let input = FeatureCurves::new(4, 10, (0..40).map(|i| (i as f64 / 20.0) - 1.0).collect(), true).unwrap();
        assert_eq!(back.score(&input).unwrap().to_bits(), m.score(&input).unwrap().to_bits());
        assert_eq!(&std::fs::read(&path).unwrap()[..8], b"SPANNAD1");
    }

    #[test]
    fn single_pool_flag_round_trips() {
        let m = init_model(&ADConfig::new(ChannelMask::ALL, 4, 3)).unwrap().eval();
        let back = decode(&encode(&m)).unwrap();
        assert!(!back.config.second_pool);
        assert_eq!(back, m);
    }

    #[test]
    fn mask_mismatch_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ad.bin");
        save_model(&model(), &path).unwrap();
        let err = load_model_for(&path, ChannelMask::without(Channel::DStd)).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let bytes = encode(&model());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).unwrap_err().contains("magic"));
        assert!(decode(&bytes[..bytes.len() - 5]).unwrap_err().contains("truncated"));
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(decode(&bad_version).unwrap_err().contains("version"));
        assert!(decode(b"SPAN").unwrap_err().contains("magic"));
    }
}
