//! Little-endian binary snapshots of time-indexed fields.
//!
//! Layout: magic `PFSNAP01`, u64 metadata length, metadata bytes (UTF-8),
//! u64 record count, then per record: f64 time, u32 dims, u32 points per
//! dim, u32 basis tag, f64 extents per dim, f64 values.

use std::io::{Read, Write};

use super::{Basis, GridSpec, SpatialField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PFSNAP01";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub metadata: String,
    pub records: Vec<(f64, SpatialField)>,
}

pub fn write_snapshot<W: Write>(mut w: W, snap: &Snapshot) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(snap.metadata.len() as u64).to_le_bytes())?;
    w.write_all(snap.metadata.as_bytes())?;
    w.write_all(&(snap.records.len() as u64).to_le_bytes())?;
    for (t, f) in &snap.records {
        let g = f.grid();
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&(g.dims() as u32).to_le_bytes())?;
        for &n in g.points() {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        w.write_all(&g.basis().tag().to_le_bytes())?;
        for &l in g.extents() {
            w.write_all(&l.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * f.values().len());
        for v in f.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mlen = read_u64(&mut r)? as usize;
    if mlen > 1 << 24 {
        return Err(Error::Format(format!("metadata length {} too large", mlen)));
    }
    let mut meta = vec![0u8; mlen];
    r.read_exact(&mut meta)?;
    let metadata = String::from_utf8(meta).map_err(|e| Error::Format(e.to_string()))?;
    let count = read_u64(&mut r)?;
    let mut records = Vec::new();
    for _ in 0..count {
        let t = read_f64(&mut r)?;
        let dims = read_u32(&mut r)? as usize;
        if dims != 1 && dims != 3 {
            return Err(Error::Format(format!("unsupported dimension {}", dims)));
        }
        let mut points = Vec::with_capacity(dims);
        for _ in 0..dims {
            points.push(read_u32(&mut r)? as usize);
        }
        let basis = Basis::from_tag(read_u32(&mut r)?).ok_or_else(|| Error::Format("unknown basis tag".into()))?;
        let mut extents = Vec::with_capacity(dims);
        for _ in 0..dims {
            extents.push(read_f64(&mut r)?);
        }
        let grid = GridSpec::new(&points, &extents, basis).map_err(|e| Error::Format(e.to_string()))?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(read_f64(&mut r)?);
        }
        records.push((t, SpatialField::new(grid, values)?));
    }
    Ok(Snapshot { metadata, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g1 = GridSpec::cosine_1d(8, 20.0).unwrap();
        let g3 = GridSpec::periodic_3d(4, 1.0).unwrap();
        let snap = Snapshot {
            metadata: "problem=nagumo\n".into(),
            records: vec![
                (0.0, SpatialField::from_fn(g1, |x| x[0].sin())),
                (0.5, SpatialField::from_fn(g3, |x| x[0] + 2.0 * x[1] - x[2])),
            ],
        };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &snap).unwrap();
        assert_eq!(&buf[..8], b"PFSNAP01");
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, snap);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_snapshot(&b"NOTSNAPSHOT....."[..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        let g = GridSpec::periodic_1d(4, 1.0).unwrap();
        write_snapshot(&mut buf, &Snapshot { metadata: String::new(), records: vec![(0.0, SpatialField::zeros(g))] }).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_snapshot(buf.as_slice()).is_err());
    }
}
