//! AVSF binary tensor container.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "AVSF"
//! 4       4         version, u32 little-endian (= 1)
//! 8       4         ndim, u32 little-endian
//! 12      8·ndim    dims, u64 little-endian each
//! ...     4·∏dims   payload, f32 little-endian, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"AVSF";
pub const VERSION: u32 = 1;

/// Upper bound on rank accepted when decoding; guards against reading a
/// garbage header as a huge allocation.
const MAX_NDIM: u32 = 16;

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if !t.is_finite() {
        return Err(Error::invalid("refusing to write a tensor with non-finite values"));
    }
    let mut out = Vec::with_capacity(12 + 8 * t.ndim() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parsed header: shape plus the byte offset where the payload starts.
pub fn decode_header(bytes: &[u8]) -> Result<(Vec<usize>, usize)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format("magic", "bad magic: expected \"AVSF\""));
    }
    let u32_at = |off: usize, field: &str| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| Error::format(field, "truncated header"))
    };
    let version = u32_at(4, "version")?;
    if version != VERSION {
        return Err(Error::format("version", format!("unsupported version {version}, expected {VERSION}")));
    }
    let ndim = u32_at(8, "ndim")?;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(Error::format("ndim", format!("rank {ndim} outside 1..={MAX_NDIM}")));
    }
    let mut shape = Vec::with_capacity(ndim as usize);
    for i in 0..ndim as usize {
        let off = 12 + 8 * i;
        let d = bytes
            .get(off..off + 8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .ok_or_else(|| Error::format("dims", "truncated header"))?;
        if d == 0 {
            return Err(Error::format("dims", format!("dimension {i} is zero")));
        }
        shape.push(usize::try_from(d).map_err(|_| Error::format("dims", "dimension overflows usize"))?);
    }
    Ok((shape, 12 + 8 * ndim as usize))
}

pub fn decode(bytes: &[u8]) -> Result<Tensor<f32>> {
    let (shape, start) = decode_header(bytes)?;
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("dims", "element count overflows"))?;
    let payload = &bytes[start..];
    let expected = count
        .checked_mul(4)
        .ok_or_else(|| Error::format("dims", "payload size overflows"))?;
    if payload.len() < expected {
        return Err(Error::format(
            "payload",
            format!(
                "truncated: header declares {count} values ({expected} bytes) but {} bytes remain",
                payload.len()
            ),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes after {count} values", payload.len() - expected),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format("payload", "non-finite value"));
    }
    Tensor::new(shape, data)
}

pub fn write_features<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_features<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&bytes)?.cast())
}

/// Reads only the header of a feature file.
pub fn read_shape(path: &Path) -> Result<Vec<usize>> {
    use std::io::Read;
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = vec![0u8; 12 + 8 * MAX_NDIM as usize];
    let mut n = 0;
    loop {
        let k = f.read(&mut head[n..]).map_err(|e| Error::io(path, e))?;
        if k == 0 {
            break;
        }
        n += k;
        if n == head.len() {
            break;
        }
    }
    head.truncate(n);
    decode_header(&head).map(|(shape, _)| shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_3x4() {
        let t = Tensor::<f32>::from_fn(&[3, 4], |i| i as f32 * 0.25 - 1.0);
        let back = decode(&encode(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_input_is_bad_magic() {
        let err = decode(&[]).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn truncated_payload_is_reported() {
        let mut bytes = encode(&Tensor::<f32>::zeros(&[2, 2])).unwrap();
        bytes.truncate(bytes.len() - 4);
        match decode(&bytes).unwrap_err() {
            Error::Format { field, message } => {
                assert_eq!(field, "payload");
                assert!(message.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_names_field() {
        let mut bytes = encode(&Tensor::<f32>::zeros(&[2])).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(Error::Format { field, .. }) if field == "version"));
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode(&Tensor::<f32>::from_fn(&[1, 2], |i| i as f32)).unwrap();
        assert_eq!(&bytes[..4], b"AVSF");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[20..28], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[28..32], &0.0f32.to_le_bytes());
        assert_eq!(&bytes[32..36], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 36);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shape in prop::collection::vec(1usize..5, 1..4),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, "avsf");
            let t = Tensor::<f32>::from_fn(&shape, |_| rng.random_range(-1e6f32..1e6));
            let back = decode(&encode(&t).unwrap()).unwrap();
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(bits(&back), bits(&t));
        }
    }
}
