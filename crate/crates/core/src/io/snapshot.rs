//! Binary field snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"CHOC" | version: u32 | ndims: u32 | dims: u32 × ndims | values: f64 × Π dims
//! ```
//!
//! Values are row-major (last axis fastest), matching [`Field`] storage.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &[u8; 4] = b"CHOC";
pub const VERSION: u32 = 1;

/// Raw contents of a snapshot file, independent of any grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn from_field(field: &Field) -> Self {
        Self {
            dims: field.grid().dims().to_vec(),
            values: field.values().to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(Error::Format(format!("truncated {what}")));
            }
            let (head, rest) = cursor.split_at(n);
            cursor = rest;
            Ok(head)
        };
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        if take(4, "magic")? != MAGIC {
            return Err(Error::Format("bad magic, not a CHOC snapshot".into()));
        }
        let version = u32_at(take(4, "header")?);
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version} (expected {VERSION})"
            )));
        }
        let ndims = u32_at(take(4, "header")?) as usize;
        if ndims == 0 || ndims > 3 {
            return Err(Error::Format(format!("invalid ndims {ndims}")));
        }
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(u32_at(take(4, "header")?) as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dims overflow".into()))?;
        let payload = take(8 * count, "payload")?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                cursor.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, values })
    }

    /// Places the values on `grid`, which must have the same dims.
    pub fn into_field(self, grid: &Arc<Grid>) -> Result<Field> {
        if self.dims != grid.dims() {
            return Err(Error::Format(format!(
                "snapshot dims {:?} do not match grid dims {:?}",
                self.dims,
                grid.dims()
            )));
        }
        Field::from_values(grid, self.values)
    }

    /// One row per cell: coordinates then value.
    pub fn to_csv(&self, grid: Option<&Grid>) -> String {
        let nd = self.dims.len();
        let mut out = String::new();
        let axes = ["x", "y", "z"];
        let head: Vec<&str> = if grid.is_some() { axes[..nd].to_vec() } else { vec![] };
        let idx: Vec<String> = (0..nd).map(|a| format!("i{a}")).collect();
        out.push_str(&idx.join(","));
        for h in &head {
            out.push(',');
            out.push_str(h);
        }
        out.push_str(",value\n");
        for (flat, v) in self.values.iter().enumerate() {
            let mut rem = flat;
            let mut multi = vec![0usize; nd];
            for a in (0..nd).rev() {
                multi[a] = rem % self.dims[a];
                rem /= self.dims[a];
            }
            let mut cells: Vec<String> = multi.iter().map(|i| i.to_string()).collect();
            if let Some(g) = grid {
                cells.extend(multi.iter().enumerate().map(|(a, &i)| format!("{:e}", g.coordinate(a, i))));
            }
            cells.push(format!("{v:e}"));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_snapshot(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&Snapshot::from_field(field).to_bytes())?;
    Ok(())
}

pub fn read_snapshot_raw(path: impl AsRef<Path>) -> Result<Snapshot> {
    Snapshot::from_bytes(&fs::read(path)?)
}

/// Reads a snapshot and checks it against `grid`. Nothing is returned on any
/// format error.
pub fn read_snapshot(path: impl AsRef<Path>, grid: &Arc<Grid>) -> Result<Field> {
    read_snapshot_raw(path)?.into_field(grid)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_field_layout() {
        let g = Grid::rect([4, 5], [1.0, 2.0]).unwrap();
        let bytes = Snapshot::from_field(&Field::zeros(&g)).to_bytes();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 8 * 20);
        assert_eq!(&bytes[..4], b"CHOC");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &4u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &5u32.to_le_bytes());
        assert!(bytes[20..].iter().all(|&b| b == 0));
        let back = Snapshot::from_bytes(&bytes).unwrap().into_field(&g).unwrap();
        assert_eq!(back, Field::zeros(&g));
    }

    #[test]
    fn random_field_round_trips_bitwise() {
        let g = Grid::line(37, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vals: Vec<f64> = (0..37).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect();
        let f = Field::from_values(&g, vals).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.choc");
        write_snapshot(&f, &path).unwrap();
        let back = read_snapshot(&path, &g).unwrap();
        assert!(f.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(Snapshot::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let g = Grid::line(8, 1.0).unwrap();
        let good = Snapshot::from_field(&Field::constant(&g, 1.0)).to_bytes();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(Snapshot::from_bytes(&bad_magic), Err(Error::Format(_))));
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(Snapshot::from_bytes(&bad_version), Err(Error::Format(_))));
        assert!(matches!(Snapshot::from_bytes(&good[..good.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(Snapshot::from_bytes(&good[..6]), Err(Error::Format(_))));
        let mut long = good.clone();
        long.push(0);
        assert!(Snapshot::from_bytes(&long).is_err());
        let other = Grid::line(9, 1.0).unwrap();
        assert!(Snapshot::from_bytes(&good).unwrap().into_field(&other).is_err());
    }

    #[test]
    fn csv_lists_every_cell() {
        let g = Grid::rect([4, 5], [1.0, 1.0]).unwrap();
        let f = Field::from_fn(&g, |x| x[0] + 10.0 * x[1]);
        let csv = Snapshot::from_field(&f).to_csv(Some(&g));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "i0,i1,x,y,value");
        assert_eq!(lines.len(), 21);
        assert!(lines[2].starts_with("0,1,"));
    }
}
