//! Model checkpoints: a small binary container with a JSON metadata block
//! and raw little-endian f64 parameter arrays, round-tripping bit-exactly.

use super::features::FeatureConfig;
use super::mlp::MlpParams;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ALSIMCK\x01";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    layer_sizes: Vec<usize>,
    dropout: f64,
    features: FeatureConfig,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &MlpParams,
    features: &FeatureConfig,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let meta = serde_json::to_vec(&Meta {
        layer_sizes: params.layer_sizes.clone(),
        dropout: params.dropout,
        features: features.clone(),
    })?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    for l in 0..params.weights.len() {
        for &v in &params.weights[l] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in &params.biases[l] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MlpParams, FeatureConfig)> {
    let path = path.as_ref();
    let loc = || path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::parse(loc(), "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(Error::parse(loc(), "magic: not an alsim checkpoint"));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4).map_err(|_| Error::parse(loc(), "missing version"))?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(Error::parse(loc(), format!("version: unsupported {version}")));
    }
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8).map_err(|_| Error::parse(loc(), "missing metadata length"))?;
    let meta_len = u64::from_le_bytes(len8) as usize;
    if meta_len > 16 << 20 {
        return Err(Error::parse(loc(), "metadata length: implausibly large"));
    }
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes).map_err(|_| Error::parse(loc(), "truncated metadata"))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::parse(loc(), format!("metadata: {e}")))?;
    meta.features.validate().map_err(|e| Error::parse(loc(), format!("features: {e}")))?;

    let mut params = MlpParams::zeros(&meta.layer_sizes, meta.dropout)
        .map_err(|e| Error::parse(loc(), format!("layer_sizes: {e}")))?;
    let mut buf = [0u8; 8];
    for l in 0..params.weights.len() {
        for slot in params.weights[l].iter_mut().chain(params.biases[l].iter_mut()) {
            r.read_exact(&mut buf)
                .map_err(|_| Error::parse(loc(), "parameter payload: truncated"))?;
            *slot = f64::from_le_bytes(buf);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::parse(loc(), "parameter payload: trailing bytes"));
    }
    Ok((params, meta.features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::derive_rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("alsim-ck-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = derive_rng(1, &["ck".into()]);
        let params = MlpParams::init(&[5, 16, 2], 0.25, &mut rng).unwrap();
        let features = FeatureConfig::default();
        let path = tmp("roundtrip.bin");
        save_checkpoint(&path, &params, &features).unwrap();
        let (p2, f2) = load_checkpoint(&path).unwrap();
        assert_eq!(p2, params);
        assert_eq!(f2, features);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut rng = derive_rng(2, &["ck".into()]);
        let params = MlpParams::init(&[3, 4, 2], 0.1, &mut rng).unwrap();
        let path = tmp("trunc.bin");
        save_checkpoint(&path, &params, &FeatureConfig::default()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let path = tmp("magic.bin");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }
}
