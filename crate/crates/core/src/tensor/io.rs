//! "FCT1" binary tensor container.
//!
//! Layout, all little-endian: the four magic bytes `FCT1`, a `u32` rank, `rank`
//! `u32` extents, then the row-major payload as IEEE-754 `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::{check_dims, Tensor, MAX_RANK};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"FCT1";

pub fn write_tensor<T: Scalar, W: Write>(tensor: &Tensor<T>, mut w: W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(8 + 4 * tensor.rank() + 4 * tensor.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.dims() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        buf.extend_from_slice(&v.as_f32().to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Truncated(format!("file ends inside {what}")),
        _ => Error::io("<stream>", e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads one tensor. Fails without returning partial data on a bad magic, a
/// malformed header, or a short payload.
pub fn read_tensor<T: Scalar, R: Read>(mut r: R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic bytes")?;
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let rank = read_u32(&mut r, "rank")? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::invalid(format!("tensor file declares rank {rank}")));
    }
    let dims = (0..rank)
        .map(|_| read_u32(&mut r, "extents").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let len = check_dims(&dims)?;
    let mut payload = vec![0u8; len * 4];
    read_exact_or(&mut r, &mut payload, "payload")?;
    let data = payload
        .chunks_exact(4)
        .map(|b| T::from_f32(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    Ok(Tensor::from_parts(dims, data))
}

pub fn write_tensor_file<T: Scalar>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensor(tensor, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor_file<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(BufReader::new(f)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        Error::Truncated(m) => Error::Truncated(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::<f32>::from_vec(&[1, 2], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        let mut expect = b"FCT1".to_vec();
        expect.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(buf, expect);
        let back: Tensor<f32> = read_tensor(&buf[..]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn truncation_and_magic_are_distinct() {
        let t = Tensor::<f32>::full(&[3, 3], 0.5).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        let short = &buf[..buf.len() - 3];
        assert!(matches!(
            read_tensor::<f32, _>(short),
            Err(Error::Truncated(_))
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_tensor::<f32, _>(&bad[..]),
            Err(Error::BadMagic { .. })
        ));
        assert!(matches!(
            read_tensor::<f32, _>(&buf[..2]),
            Err(Error::Truncated(_))
        ));
    }
}
