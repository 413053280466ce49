//! Writes a 2D field in the binary snapshot format, reads it back bit for
//! bit and prints the first rows of its CSV form.
//!
//! cargo run --release --example snapshot_roundtrip

use choc::grid::{Field, Grid};
use choc::io::{read_snapshot, write_snapshot, Snapshot};

fn main() -> choc::Result<()> {
    let g = Grid::rect([8, 6], [1.0, 0.75])?;
    let f = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).cos() * x[1]);
    let path = std::env::temp_dir().join("choc_snapshot_example.choc");
    write_snapshot(&f, &path)?;
    let back = read_snapshot(&path, &g)?;
    let identical = f.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    let bytes = std::fs::read(&path)?;
    println!("{} bytes, header {:?}, bitwise identical: {identical}", bytes.len(), &bytes[..4]);
    for line in Snapshot::from_field(&back).to_csv(Some(&g)).lines().take(5) {
        println!("{line}");
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
