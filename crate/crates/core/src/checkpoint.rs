//! Binary field snapshots.
//!
//! Layout, all little-endian 64-bit words:
//!
//! ```text
//! magic | version | d | N | L (f64) | representation (0 physical, 1 spectral) | time (f64)
//! re_0 | im_0 | re_1 | im_1 | ...        (N^d samples, row-major, f64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CheckpointError, Error, Result};
use crate::scalar::{Complex, Real};
use crate::spectral::{Field, Grid, Representation};

pub const MAGIC: u64 = u64::from_le_bytes(*b"DMNLSCKP");
pub const VERSION: u64 = 1;
const HEADER_WORDS: usize = 7;

#[derive(Debug, Clone)]
pub struct Checkpoint<T: Real> {
    pub field: Field<T>,
    pub time: T,
}

pub fn write_checkpoint<T: Real, W: Write>(mut w: W, field: &Field<T>, time: T) -> Result<()> {
    let grid = field.grid();
    let representation = match field.representation() {
        Representation::Physical => 0u64,
        Representation::Spectral => 1u64,
    };
    let header = [
        MAGIC,
        VERSION,
        grid.dimension() as u64,
        grid.points_per_axis() as u64,
        grid.half_length().as_f64().to_bits(),
        representation,
        time.as_f64().to_bits(),
    ];
    let mut buf = Vec::with_capacity(8 * (HEADER_WORDS + 2 * field.values().len()));
    for word in header {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    for v in field.values() {
        buf.extend_from_slice(&v.re.as_f64().to_le_bytes());
        buf.extend_from_slice(&v.im.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Real, R: Read>(mut r: R) -> Result<Checkpoint<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 8 * HEADER_WORDS {
        return Err(CheckpointError::Truncated {
            expected: 8 * HEADER_WORDS,
            found: bytes.len(),
        }
        .into());
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    let magic = word(0);
    if magic != MAGIC {
        return Err(if magic == MAGIC.swap_bytes() {
            CheckpointError::CrossEndian
        } else {
            CheckpointError::BadMagic { found: magic }
        }
        .into());
    }
    let version = word(1);
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        }
        .into());
    }
    let header_err = |msg: String| Error::from(CheckpointError::Header(msg));
    let d = usize::try_from(word(2)).map_err(|_| header_err("dimension out of range".into()))?;
    let n = usize::try_from(word(3)).map_err(|_| header_err("point count out of range".into()))?;
    let half_length = f64::from_bits(word(4));
    let representation = match word(5) {
        0 => Representation::Physical,
        1 => Representation::Spectral,
        other => return Err(header_err(format!("unknown representation tag {other}"))),
    };
    let time = f64::from_bits(word(6));
    let grid = Grid::new(d, n, T::lit(half_length)).map_err(|e| header_err(e.to_string()))?;
    let expected = 8 * HEADER_WORDS + 16 * grid.len();
    if bytes.len() != expected {
        return Err(CheckpointError::Truncated {
            expected,
            found: bytes.len(),
        }
        .into());
    }
    let payload = &bytes[8 * HEADER_WORDS..];
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex::new(T::lit(re), T::lit(im))
        })
        .collect();
    let field = Field::new(grid, values, representation).map_err(|e| header_err(e.to_string()))?;
    Ok(Checkpoint {
        field,
        time: T::lit(time),
    })
}

pub fn save_checkpoint<T: Real>(field: &Field<T>, time: T, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), field, time)
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(d: usize, n: usize) -> Field<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = Grid::new(d, n, 3.7).unwrap();
        let values = (0..grid.len())
            .map(|_| Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        Field::new(grid, values, Representation::Physical).unwrap()
    }

    fn bits(f: &Field<f64>) -> Vec<(u64, u64)> {
        f.values().iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        for (d, n) in [(1, 64), (2, 16), (3, 8)] {
            let f = random_field(d, n);
            for field in [f.clone(), f.spectral()] {
                let mut buf = Vec::new();
                write_checkpoint(&mut buf, &field, 0.123456789).unwrap();
                assert_eq!(buf.len(), 8 * 7 + 16 * field.values().len());
                let back: Checkpoint<f64> = read_checkpoint(&buf[..]).unwrap();
                assert_eq!(bits(&back.field), bits(&field));
                assert_eq!(back.field.representation(), field.representation());
                assert_eq!(back.field.grid(), field.grid());
                assert_eq!(back.time.to_bits(), 0.123456789f64.to_bits());
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.ckpt");
        let f = random_field(1, 32);
        save_checkpoint(&f, 2.5, &path).unwrap();
        let back = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(bits(&back.field), bits(&f));
    }

    #[test]
    fn corrupted_files_rejected() {
        let f = random_field(1, 16);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &f, 0.0).unwrap();

        let mut bad = buf.clone();
        bad[0] ^= 0xff;
        assert!(matches!(
            read_checkpoint::<f64, _>(&bad[..]),
            Err(Error::Checkpoint(CheckpointError::BadMagic { .. }))
        ));

        let mut swapped = buf.clone();
        swapped[..8].copy_from_slice(&MAGIC.to_be_bytes());
        assert!(matches!(
            read_checkpoint::<f64, _>(&swapped[..]),
            Err(Error::Checkpoint(CheckpointError::CrossEndian))
        ));

        let mut version = buf.clone();
        version[8..16].copy_from_slice(&2u64.to_le_bytes());
        assert!(matches!(
            read_checkpoint::<f64, _>(&version[..]),
            Err(Error::Checkpoint(CheckpointError::Version { found: 2, expected: 1 }))
        ));

        assert!(matches!(
            read_checkpoint::<f64, _>(&buf[..buf.len() - 3]),
            Err(Error::Checkpoint(CheckpointError::Truncated { .. }))
        ));
        assert!(matches!(
            read_checkpoint::<f64, _>(&buf[..20]),
            Err(Error::Checkpoint(CheckpointError::Truncated { .. }))
        ));

        let mut tag = buf;
        tag[40..48].copy_from_slice(&7u64.to_le_bytes());
        assert!(matches!(
            read_checkpoint::<f64, _>(&tag[..]),
            Err(Error::Checkpoint(CheckpointError::Header(_)))
        ));
    }
}
