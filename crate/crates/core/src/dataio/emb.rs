//! `EMB1` embedding files: magic `EMB1`, u32 LE rows, u32 LE cols, then
//! `rows × cols` little-endian f64 in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Matrix;

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER: usize = 12;

pub fn encode_emb(m: &Matrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::invalid("too many rows for EMB1"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::invalid("too many columns for EMB1"))?;
    let mut out = Vec::with_capacity(HEADER + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_emb(bytes: &[u8], path: &Path) -> Result<Matrix> {
    if bytes.len() < HEADER {
        return Err(Error::format(
            path,
            format!("expected at least {HEADER} header bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(path, format!("bad magic {:?} at offset 0", &bytes[..4])));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let expected = HEADER + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "{rows}x{cols} embedding needs {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (k, chunk) in bytes[HEADER..].chunks_exact(8).enumerate() {
        let x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !x.is_finite() {
            return Err(Error::format(
                path,
                format!("non-finite value at byte offset {}", HEADER + 8 * k),
            ));
        }
        data.push(x);
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn write_emb(path: &Path, m: &Matrix) -> Result<()> {
    fs::write(path, encode_emb(m)?).map_err(|e| Error::io(path, e))
}

pub fn read_emb(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_emb(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let m = Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap();
        let bytes = encode_emb(&m).unwrap();
        let mut expected = b"EMB1".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0]);
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn bad_magic_and_nan_are_rejected() {
        let m = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let mut bytes = encode_emb(&m).unwrap();
        bytes[0] = b'X';
        assert!(decode_emb(&bytes, Path::new("x.emb")).is_err());
        let mut bytes = encode_emb(&m).unwrap();
        bytes[12..20].copy_from_slice(&f64::NAN.to_le_bytes());
        let err = decode_emb(&bytes, Path::new("x.emb")).unwrap_err().to_string();
        assert!(err.contains("offset 12"), "{err}");
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|k| f64::from_bits(seed.wrapping_mul(k as u64 + 1)) )
                .map(|x| if x.is_finite() { x } else { 0.5 })
                .collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let back = decode_emb(&encode_emb(&m).unwrap(), Path::new("p.emb")).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
