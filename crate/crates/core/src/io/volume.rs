//! `SARVOL1` volume files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 7    | magic `SARVOL1`                           |
//! | 7      | 12   | dims `nx, ny, nz` as `u32`                |
//! | 19     | 24   | spacing `dx, dy, dz` as `f64`             |
//! | 43     | 24   | origin `x0, y0, z0` as `f64`              |
//! | 67     | 8·N  | N complex values, interleaved `f32` re/im |
//!
//! Values follow the voxel order of [`crate::model`].

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Reflectivity, SceneGrid};

pub const MAGIC: &[u8; 7] = b"SARVOL1";
pub const HEADER_LEN: usize = 67;

pub fn encode_volume(v: &Reflectivity) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * v.values.len());
    out.extend_from_slice(MAGIC);
    for d in v.grid.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::invalid(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for x in v.grid.spacing.iter().chain(&v.grid.origin) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for c in &v.values {
        out.extend_from_slice(&(c.re as f32).to_le_bytes());
        out.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_volume(bytes: &[u8]) -> Result<Reflectivity> {
    let fmt = |offset: usize, message: String| Error::Format {
        offset: offset as u64,
        message,
    };
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(fmt(0, "bad magic, expected SARVOL1".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(fmt(
            bytes.len(),
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dims = [u32_at(7), u32_at(11), u32_at(15)];
    let spacing = [f64_at(19), f64_at(27), f64_at(35)];
    let origin = [f64_at(43), f64_at(51), f64_at(59)];

    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| fmt(7, format!("dims {dims:?} overflow")))?;
    let grid = SceneGrid::new(dims, spacing, origin).map_err(|e| fmt(7, e.to_string()))?;

    let payload = &bytes[HEADER_LEN..];
    if payload.len() < 8 * n {
        return Err(fmt(
            bytes.len(),
            format!(
                "truncated payload: {} complex values for {n} voxels",
                payload.len() / 8
            ),
        ));
    }
    if payload.len() > 8 * n {
        return Err(fmt(HEADER_LEN + 8 * n, "trailing bytes after payload".into()));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Reflectivity::new(grid, values).map_err(|e| fmt(HEADER_LEN, e.to_string()))
}

pub fn write_volume(path: impl AsRef<Path>, v: &Reflectivity) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(v)?).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Reflectivity> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f32_volume(values: Vec<(f32, f32)>) -> Reflectivity {
        let grid = SceneGrid::new([2, 1, values.len() / 2], [0.1, 0.2, 0.3], [-1.0, 0.0, 2.5]).unwrap();
        Reflectivity::new(
            grid,
            values.into_iter().map(|(a, b)| Complex64::new(a as f64, b as f64)).collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec((-1e6f32..1e6, -1e6f32..1e6), 1..20)) {
            let mut vals = vals;
            if vals.len() % 2 == 1 { vals.push((0.0, 0.0)); }
            let v = f32_volume(vals);
            let bytes = encode_volume(&v).unwrap();
            let back = decode_volume(&bytes).unwrap();
            prop_assert_eq!(&back, &v);
            prop_assert_eq!(encode_volume(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_volume(&f32_volume(vec![(1.0, 2.0); 2])).unwrap();
        bytes[0] = b'X';
        match decode_volume(&bytes).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn truncated_payload() {
        let grid = SceneGrid::new([2, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        let v = Reflectivity::zeros(grid);
        let mut bytes = encode_volume(&v).unwrap();
        bytes.truncate(bytes.len() - 8);
        let err = decode_volume(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("truncated payload"), "{err}");
    }

    #[test]
    fn overflowing_dims() {
        let mut bytes = encode_volume(&f32_volume(vec![(0.0, 0.0); 2])).unwrap();
        for o in [7, 11, 15] {
            bytes[o..o + 4].copy_from_slice(&u32::MAX.to_le_bytes());
        }
        match decode_volume(&bytes).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 7),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn header_length_constant() {
        let bytes = encode_volume(&f32_volume(vec![(0.0, 0.0); 2])).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 16);
    }
}
