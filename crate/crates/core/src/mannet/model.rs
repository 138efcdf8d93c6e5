//! Model persistence.
//!
//! Layout (little-endian): magic `MNET`, u32 version, u32 N_t, N_rf, L,
//! f64 activation parameter, then L pairs of weight vectors (w1 before w2),
//! each of `2 * N_t * N_rf` f64 values. Round trips are bit exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::linalg::RVec;
use crate::mannet::{LayerWeights, UnfoldedNet};

const MAGIC: &[u8; 4] = b"MNET";
const VERSION: u32 = 1;

pub fn model_write(path: &Path, net: &UnfoldedNet) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(net.n_tx() as u32)?;
    w.write_u32::<LittleEndian>(net.n_rf() as u32)?;
    w.write_u32::<LittleEndian>(net.n_layers() as u32)?;
    w.write_f64::<LittleEndian>(net.t())?;
    for layer in net.layers() {
        for &v in layer.w1.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
        for &v in layer.w2.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn model_read(path: &Path) -> Result<UnfoldedNet> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let n_tx = read_u32(&mut r)? as usize;
    let n_rf = read_u32(&mut r)? as usize;
    let n_layers = read_u32(&mut r)? as usize;
    let t = read_f64(&mut r)?;
    let len = 2 * n_tx * n_rf;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut w1 = RVec::zeros(len);
        let mut w2 = RVec::zeros(len);
        for i in 0..len {
            w1[i] = read_f64(&mut r)?;
        }
        for i in 0..len {
            w2[i] = read_f64(&mut r)?;
        }
        layers.push(LayerWeights { w1, w2 });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after declared payload".into()));
    }
    UnfoldedNet::from_parts(n_tx, n_rf, t, layers)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("truncated model file".into()))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    r.read_f64::<LittleEndian>()
        .map_err(|_| Error::Format("truncated model file".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::realization_rng;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = realization_rng(70, 0);
        let net = UnfoldedNet::new(8, 2, 4, 0.5, &mut rng).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("net.mnet");
        model_write(&path, &net).unwrap();
        let back = model_read(&path).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn truncated_model_rejected_without_partial_result() {
        let mut rng = realization_rng(71, 0);
        let net = UnfoldedNet::new(8, 2, 4, 0.5, &mut rng).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("net.mnet");
        model_write(&path, &net).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = model_read(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn bad_magic_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("junk.mnet");
        std::fs::write(&path, b"WHAT\x01\x00\x00\x00").unwrap();
        assert!(matches!(model_read(&path), Err(Error::Format(_))));
    }
}
