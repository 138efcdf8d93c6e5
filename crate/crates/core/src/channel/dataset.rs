//! Binary channel-dataset persistence.
//!
//! Layout (little-endian): magic `HBFC`, u32 version, u32 fields N_t, N_r,
//! K, P, count, f64 f_c and BW, then per realization: P complex gains,
//! P ToAs, 4*P angles (departure azimuth, departure elevation, arrival
//! azimuth, arrival elevation), then K*N_r*N_t complex entries (re, im)
//! in (k, rx, tx) row-major order. Round trips are bit exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::channel::{ChannelTensor, PathSet, SystemDims};
use crate::error::{Error, Result};
use crate::linalg::CMat;

const MAGIC: &[u8; 4] = b"HBFC";
const VERSION: u32 = 1;

/// Writes a homogeneous list of realizations. An empty list is valid.
pub fn dataset_write(path: &Path, channels: &[ChannelTensor]) -> Result<()> {
    if let Some(first) = channels.first() {
        for ch in channels {
            if ch.dims != first.dims {
                return Err(Error::Dim(
                    "dataset realizations must share dimensions".into(),
                ));
            }
        }
    }
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let dims = channels.first().map(|c| c.dims.clone());
    let (n_tx, n_rx, k, p, fc, bw) = match &dims {
        Some(d) => (
            d.n_tx as u32,
            d.n_rx as u32,
            d.n_subcarriers as u32,
            d.n_paths as u32,
            d.center_freq_hz,
            d.bandwidth_hz,
        ),
        None => (0, 0, 0, 0, 0.0, 0.0),
    };
    w.write_u32::<LittleEndian>(n_tx)?;
    w.write_u32::<LittleEndian>(n_rx)?;
    w.write_u32::<LittleEndian>(k)?;
    w.write_u32::<LittleEndian>(p)?;
    w.write_u32::<LittleEndian>(channels.len() as u32)?;
    w.write_f64::<LittleEndian>(fc)?;
    w.write_f64::<LittleEndian>(bw)?;
    for ch in channels {
        for g in &ch.paths.gains {
            w.write_f64::<LittleEndian>(g.re)?;
            w.write_f64::<LittleEndian>(g.im)?;
        }
        for block in [
            &ch.paths.toas,
            &ch.paths.aod_az,
            &ch.paths.aod_el,
            &ch.paths.aoa_az,
            &ch.paths.aoa_el,
        ] {
            for &v in block {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        for hk in &ch.h {
            for r in 0..hk.nrows() {
                for c in 0..hk.ncols() {
                    w.write_f64::<LittleEndian>(hk[(r, c)].re)?;
                    w.write_f64::<LittleEndian>(hk[(r, c)].im)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset written by [`dataset_write`]. `dims` supplies the system
/// parameters the file does not carry (RF chains, streams, array
/// factorizations); the header must agree with it on everything it does.
pub fn dataset_read(path: &Path, dims: &SystemDims) -> Result<Vec<ChannelTensor>> {
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
        return Err(Error::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let n_tx = read_u32(&mut r)? as usize;
    let n_rx = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)? as usize;
    let p = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    let fc = read_f64(&mut r)?;
    let bw = read_f64(&mut r)?;
    if count > 0 {
        let matches = n_tx == dims.n_tx
            && n_rx == dims.n_rx
            && k == dims.n_subcarriers
            && p == dims.n_paths
            && fc == dims.center_freq_hz
            && bw == dims.bandwidth_hz;
        if !matches {
            return Err(Error::Format(format!(
                "header (n_tx={n_tx}, n_rx={n_rx}, k={k}, p={p}) disagrees with configured dimensions"
            )));
        }
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut gains = Vec::with_capacity(p);
        for _ in 0..p {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            gains.push(Complex64::new(re, im));
        }
        let mut blocks: Vec<Vec<f64>> = Vec::with_capacity(5);
        for _ in 0..5 {
            let mut b = Vec::with_capacity(p);
            for _ in 0..p {
                b.push(read_f64(&mut r)?);
            }
            blocks.push(b);
        }
        let aoa_el = blocks.pop().unwrap();
        let aoa_az = blocks.pop().unwrap();
        let aod_el = blocks.pop().unwrap();
        let aod_az = blocks.pop().unwrap();
        let toas = blocks.pop().unwrap();
        let mut h = Vec::with_capacity(k);
        for _ in 0..k {
            let mut hk = CMat::zeros(n_rx, n_tx);
            for row in 0..n_rx {
                for col in 0..n_tx {
                    let re = read_f64(&mut r)?;
                    let im = read_f64(&mut r)?;
                    hk[(row, col)] = Complex64::new(re, im);
                }
            }
            h.push(hk);
        }
        out.push(ChannelTensor {
            h,
            dims: dims.clone(),
            paths: PathSet {
                gains,
                toas,
                aod_az,
                aod_el,
                aoa_az,
                aoa_el,
            },
        });
    }
    let mut rest = [0u8; 1];
    match r.read(&mut rest)? {
        0 => Ok(out),
        _ => Err(Error::Format(
            "trailing bytes after declared payload".into(),
        )),
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    r.read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("truncated file: payload shorter than header declares".into()))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    r.read_f64::<LittleEndian>()
        .map_err(|_| Error::Format("truncated file: payload shorter than header declares".into()))
}
