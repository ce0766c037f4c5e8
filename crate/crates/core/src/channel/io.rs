//! Binary CSI and dataset files (little endian).
//!
//! CSI: `RLC1`, u32 `N_t`, `N_r`, `N_s`, f64 `f_c`, `df`, then interleaved
//! `(re, im)` f64 pairs in `[n_t][n_r][j]` order. Dataset: u32 record count,
//! then per record f64 `x, y, z` of the receiver followed by one CSI block.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::CsiTensor;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::FreqGrid;

const MAGIC: &[u8; 4] = b"RLC1";

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stream>", e)
}

pub fn write_csi<W: Write>(w: &mut W, h: &CsiTensor) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + 16 * h.len());
    buf.extend_from_slice(MAGIC);
    for n in [h.nt, h.nr, h.ns()] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    buf.extend_from_slice(&h.freq.fc.to_le_bytes());
    buf.extend_from_slice(&h.freq.df.to_le_bytes());
    for z in &h.data {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_csi<R: Read>(r: &mut R) -> Result<CsiTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::invalid("csi", "bad magic, expected RLC1"));
    }
    let (nt, nr, ns) = (read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize);
    let (fc, df) = (read_f64(r)?, read_f64(r)?);
    if nt == 0 || nr == 0 {
        return Err(Error::invalid("csi", "antenna counts must be >= 1"));
    }
    let freq = FreqGrid::new(fc, df, ns)?;
    let mut data = Vec::with_capacity(nt * nr * ns);
    for _ in 0..nt * nr * ns {
        data.push(Complex64::new(read_f64(r)?, read_f64(r)?));
    }
    Ok(CsiTensor { nt, nr, freq, data })
}

pub fn save_csi(path: &Path, h: &CsiTensor) -> Result<()> {
    let mut buf = Vec::new();
    write_csi(&mut buf, h)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_csi(path: &Path) -> Result<CsiTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_csi(&mut bytes.as_slice()).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    }
}

/// Receiver positions with the CSI measured there.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<(Vec3, CsiTensor)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records share one shape and frequency grid.
    pub fn validate(&self) -> Result<()> {
        let Some((_, first)) = self.records.first() else {
            return Err(Error::invalid("dataset", "no records"));
        };
        for (i, (_, h)) in self.records.iter().enumerate() {
            if !h.same_shape(first) {
                return Err(Error::Shape(format!("dataset record {i} differs in shape from record 0")));
            }
        }
        Ok(())
    }
}

pub fn write_dataset<W: Write>(w: &mut W, d: &Dataset) -> Result<()> {
    w.write_all(&(d.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (p, h) in &d.records {
        for c in p.to_array() {
            w.write_all(&c.to_le_bytes()).map_err(io_err)?;
        }
        write_csi(w, h)?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    let n = read_u32(r)? as usize;
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let p = Vec3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?);
        records.push((p, read_csi(r)?));
    }
    Ok(Dataset { records })
}

pub fn save_dataset(path: &Path, d: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, d)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_dataset(&mut bytes.as_slice()).map_err(|e| relabel(e, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsiTensor {
        let mut h = CsiTensor::zeros(3, 1, FreqGrid::new(5e9, 156_250.0, 4).unwrap());
        for (i, z) in h.data.iter_mut().enumerate() {
            *z = Complex64::new(i as f64 * 0.1, -1.0 / (1.0 + i as f64));
        }
        h
    }

    #[test]
    fn csi_round_trip_and_layout() {
        let h = sample();
        let mut buf = Vec::new();
        write_csi(&mut buf, &h).unwrap();
        assert_eq!(&buf[..4], b"RLC1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 4 + 12 + 16 + 16 * 12);
        // Entry [n_t = 1][n_r = 0][j = 2] is the 7th complex value.
        let off = 32 + 16 * 6;
        assert_eq!(f64::from_le_bytes(buf[off..off + 8].try_into().unwrap()), h.get(1, 0, 2).re);
        assert_eq!(read_csi(&mut buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn dataset_round_trip() {
        let d = Dataset { records: vec![(Vec3::new(1.0, 2.0, 1.2), sample()), (Vec3::new(3.0, 2.0, 1.2), sample())] };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        save_dataset(&p, &d).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), d);
        d.validate().unwrap();
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_csi(&mut &b"XXXX"[..]).is_err());
        let mut buf = Vec::new();
        write_csi(&mut buf, &sample()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_csi(&mut buf.as_slice()).is_err());
    }
}
