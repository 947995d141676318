//! Vector-set and permutation files.
//!
//! Vector sets come in two encodings:
//!
//! * CSV: one vector per row, `d` numeric columns, no header. Lines starting
//!   with `#` are skipped.
//! * Binary: the 8 magic bytes `GRABVEC1`, then `n` and `d` as little-endian
//!   `u64`, then `n * d` little-endian `f64` in row-major order.
//!
//! [`read_vector_set`] sniffs the magic bytes to pick the decoder.
//!
//! Permutations are text: a `# schema=1` line followed by one 0-based index
//! per line.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vector::{Permutation, VectorSet};

pub const BINARY_MAGIC: &[u8; 8] = b"GRABVEC1";

pub fn encode_binary(set: &VectorSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * set.as_flat().len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u64).to_le_bytes());
    for x in set.as_flat() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<VectorSet> {
    if bytes.len() < 24 || &bytes[..8] != BINARY_MAGIC {
        return Err(Error::Parse("missing GRABVEC1 header".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let n = usize::try_from(word(8)).map_err(|_| Error::Parse("n too large".into()))?;
    let d = usize::try_from(word(16)).map_err(|_| Error::Parse("d too large".into()))?;
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Parse("n * d overflows".into()))?;
    let body = &bytes[24..];
    if body.len() != count * 8 {
        return Err(Error::Parse(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VectorSet::from_flat(n, d, data)
}

pub fn write_csv<W: Write>(set: &VectorSet, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in set.iter() {
        w.write_record(row.iter().map(|x| format!("{x:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<VectorSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {r}: `{f}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    VectorSet::from_rows(&rows)
}

pub fn read_vector_set(path: impl AsRef<Path>) -> Result<VectorSet> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(&bytes)
    } else {
        read_csv(&bytes[..])
    }
}

pub fn write_permutation<W: Write>(perm: &Permutation, mut out: W) -> Result<()> {
    writeln!(out, "# schema=1")?;
    for i in perm.as_slice() {
        writeln!(out, "{i}")?;
    }
    Ok(())
}

pub fn read_permutation(path: impl AsRef<Path>) -> Result<Permutation> {
    let text = fs::read_to_string(path)?;
    let map = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<usize>()
                .map_err(|_| Error::Parse(format!("`{l}` is not an index")))
        })
        .collect::<Result<Vec<_>>>()?;
    Permutation::new(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_layout_is_exact() {
        let set = VectorSet::from_rows(&[[1.0, -2.0]]).unwrap();
        let bytes = encode_binary(&set);
        let mut want = b"GRABVEC1".to_vec();
        want.extend_from_slice(&1u64.to_le_bytes());
        want.extend_from_slice(&2u64.to_le_bytes());
        want.extend_from_slice(&1.0f64.to_le_bytes());
        want.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn binary_rejects_truncation_and_bad_magic() {
        let set = VectorSet::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let bytes = encode_binary(&set);
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_binary(&bad).is_err());
    }

    #[test]
    fn csv_skips_comments_and_rejects_text() {
        let set = read_csv("# two rows\n1,2\n3, 4\n".as_bytes()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.get(1), &[3.0, 4.0]);
        assert!(read_csv("1,x\n".as_bytes()).is_err());
        assert!(read_csv("1,nan\n".as_bytes()).is_err());
    }

    #[test]
    fn files_round_trip_through_sniffing() {
        let dir = tempfile::tempdir().unwrap();
        let set = VectorSet::from_rows(&[[0.1, 1e-300], [-7.5, 3.0]]).unwrap();
        let bin = dir.path().join("v.bin");
        fs::write(&bin, encode_binary(&set)).unwrap();
        assert_eq!(read_vector_set(&bin).unwrap(), set);

        let csv_path = dir.path().join("v.csv");
        write_csv(&set, fs::File::create(&csv_path).unwrap()).unwrap();
        assert_eq!(read_vector_set(&csv_path).unwrap(), set);

        let perm = Permutation::new(vec![2, 0, 1]).unwrap();
        let p = dir.path().join("p.txt");
        write_permutation(&perm, fs::File::create(&p).unwrap()).unwrap();
        assert_eq!(read_permutation(&p).unwrap(), perm);
    }

    proptest! {
        #[test]
        fn binary_round_trip(n in 1usize..20, d in 1usize..6, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::rng::substream(seed, 0, 0);
            let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1e6..1e6)).collect();
            let set = VectorSet::from_flat(n, d, data).unwrap();
            prop_assert_eq!(decode_binary(&encode_binary(&set)).unwrap(), set);
        }
    }
}
