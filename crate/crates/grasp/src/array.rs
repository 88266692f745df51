//! Binary array container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "GRSPARR1"
//! ndim    u32
//! dims    ndim x u64, outermost first
//! data    prod(dims) x f32, row-major
//! ```
//!
//! A [`GraspMapSet`] is stored as a `(4, H, W)` array with channels quality,
//! sin 2ψ, cos 2ψ, width.

use std::io::{Read, Write};
use std::path::Path;

use grasp_core::{GraspMapSet, Grid};
use ndarray::{ArrayD, IxDyn};

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GRSPARR1";

pub fn write_array<W: Write>(mut w: W, a: &ArrayD<f32>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(a.ndim() as u32).to_le_bytes())?;
    for &d in a.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(a.len() * 4);
    for v in a.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn bad(path: &Path, msg: &str) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

pub fn read_array<R: Read>(mut r: R, path: &Path) -> Result<ArrayD<f32>> {
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad(path, "not an array container"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io)?;
    let ndim = u32::from_le_bytes(b4) as usize;
    if ndim > 8 {
        return Err(bad(path, "too many dimensions"));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut b8 = [0u8; 8];
    for _ in 0..ndim {
        r.read_exact(&mut b8).map_err(io)?;
        dims.push(u64::from_le_bytes(b8) as usize);
    }
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad(path, "dimensions overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() != len * 4 {
        return Err(bad(path, "payload length does not match dimensions"));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| bad(path, &e.to_string()))
}

pub fn save_array(path: &Path, a: &ArrayD<f32>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_array(&mut w, a).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_array(path: &Path) -> Result<ArrayD<f32>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_array(std::io::BufReader::new(f), path)
}

pub fn grid_to_array(g: &Grid<f64>) -> ArrayD<f32> {
    let data = g.as_slice().iter().map(|&v| v as f32).collect();
    ArrayD::from_shape_vec(IxDyn(&[g.rows(), g.cols()]), data).expect("grid is row-major")
}

pub fn array_to_grid(a: &ArrayD<f32>, path: &Path) -> Result<Grid<f64>> {
    if a.ndim() != 2 {
        return Err(bad(path, "expected a 2-d array"));
    }
    let (h, w) = (a.shape()[0], a.shape()[1]);
    Ok(Grid::from_vec(h, w, a.iter().map(|&v| v as f64).collect())?)
}

pub fn maps_to_array(m: &GraspMapSet) -> ArrayD<f32> {
    let (h, w) = m.shape();
    let mut data = Vec::with_capacity(4 * h * w);
    for g in m.heads() {
        data.extend(g.as_slice().iter().map(|&v| v as f32));
    }
    ArrayD::from_shape_vec(IxDyn(&[4, h, w]), data).expect("four equal heads")
}

pub fn array_to_maps(a: &ArrayD<f32>, path: &Path) -> Result<GraspMapSet> {
    if a.ndim() != 3 || a.shape()[0] != 4 {
        return Err(bad(path, "expected a (4, H, W) array"));
    }
    let (h, w) = (a.shape()[1], a.shape()[2]);
    let flat: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let head = |k: usize| Grid::from_vec(h, w, flat[k * h * w..(k + 1) * h * w].to_vec());
    Ok(GraspMapSet::new(head(0)?, head(1)?, head(2)?, head(3)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use grasp_core::{encode_target_maps, GraspRectangle, Point2};

    #[test]
    fn round_trip_bytes() {
        let a = ArrayD::from_shape_fn(IxDyn(&[2, 3, 4]), |i| (i[0] * 12 + i[1] * 4 + i[2]) as f32 * 0.5);
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf.len(), 8 + 4 + 3 * 8 + 24 * 4);
        let b = read_array(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_payload_is_decode_error() {
        let a = ArrayD::<f32>::zeros(IxDyn(&[3, 3]));
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        buf.pop();
        assert!(matches!(
            read_array(buf.as_slice(), Path::new("mem")),
            Err(Error::Decode { .. })
        ));
        assert!(matches!(
            read_array(&b"NOTARRAY"[..], Path::new("mem")),
            Err(Error::Decode { .. })
        ));
    }

    #[test]
    fn map_set_round_trip() {
        let r = GraspRectangle::new([
            Point2::new(10.0, 5.0),
            Point2::new(10.0, 25.0),
            Point2::new(16.0, 25.0),
            Point2::new(16.0, 5.0),
        ])
        .unwrap();
        let m = encode_target_maps(&[r], 32, 32, 150.0).unwrap();
        let back = array_to_maps(&maps_to_array(&m), Path::new("mem")).unwrap();
        for (a, b) in m.heads().iter().zip(back.heads()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
