//! The UVTF tensor container: `"UVTF"`, u16 version, u16 rank, rank x u32
//! dims, then little-endian f32 values in row-major order.

use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"UVTF";
pub const VERSION: u16 = 1;

pub fn encode_tensor(dims: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    let count: usize = dims.iter().product();
    if count != data.len() {
        return Err(Error::Dimension {
            what: "tensor payload",
            expected: count,
            actual: data.len(),
        });
    }
    let rank = u16::try_from(dims.len()).map_err(|_| Error::invalid("tensor rank too large"))?;
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rank.to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("tensor dimension too large"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a tensor; `origin` only labels errors.
pub fn decode_tensor(bytes: &[u8], origin: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let bad = |m: String| Error::format(origin, m);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("not a UVTF tensor (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(format!("unsupported UVTF version {version}")));
    }
    let rank = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header".into()));
    }
    let dims: Vec<usize> = bytes[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() - header != 4 * count {
        return Err(bad(format!(
            "payload holds {} bytes, dims {:?} need {}",
            bytes.len() - header,
            dims,
            4 * count
        )));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok((dims, data))
}

pub fn write_tensor(path: impl AsRef<Path>, dims: &[usize], data: &[f64]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensor(dims, data)?).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<f64>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Reads a tensor and checks its dimensions.
pub fn read_tensor_shaped(path: impl AsRef<Path>, dims: &[usize]) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let (d, data) = read_tensor(path)?;
    if d != dims {
        return Err(Error::format(path, format!("expected dims {dims:?}, found {d:?}")));
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let data = [1.0, -2.5, 0.125, 3.0, 4.0, 5.5];
        let bytes = encode_tensor(&[2, 3], &data).unwrap();
        assert_eq!(&bytes[..4], b"UVTF");
        assert_eq!(bytes.len(), 8 + 8 + 24);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        let (dims, back) = decode_tensor(&bytes, Path::new("t")).unwrap();
        assert_eq!(dims, vec![2, 3]);
        assert_eq!(back, data);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode_tensor(&[4], &[1.0; 4]).unwrap();
        assert!(decode_tensor(&bytes[..bytes.len() - 1], Path::new("t")).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_tensor(&wrong, Path::new("t")).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(decode_tensor(&version, Path::new("t")).is_err());
        assert!(encode_tensor(&[3], &[1.0; 4]).is_err());
    }
}
