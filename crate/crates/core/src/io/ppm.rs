//! Binary portable pixmap (P6) image I/O.
//!
//! Canonical 8-bit image format of the artifact: channel value `v` in
//! `[-1, 1]` maps to `round((v + 1) * 127.5)` with round-half-up, clamped
//! to `[0, 255]`; reading inverts the mapping. Write -> read -> write is
//! byte-identical.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn value_to_byte(v: f64) -> u8 {
    // (v + 1) * 127.5 is non-negative after the clamp below, so f64::round
    // (half away from zero) is round-half-up here.
    let scaled = ((v + 1.0) * 127.5).round();
    scaled.clamp(0.0, 255.0) as u8
}

pub fn byte_to_value<E: Scalar>(b: u8) -> E {
    E::from_f64(b as f64 / 127.5 - 1.0)
}

/// Quantize a tensor through the 8-bit channel mapping (write + read in
/// memory). Training inputs always pass through this so in-memory and
/// on-disk pipelines are bit-identical.
pub fn quantize<E: Scalar>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| byte_to_value(value_to_byte(v.to_f64())))
}

/// Encode a `(3, h, w)` tensor as P6 bytes.
pub fn encode<E: Scalar>(x: &Tensor<E>) -> Result<Vec<u8>> {
    let s = x.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Dimension {
            op: "ppm encode",
            lhs: s.to_vec(),
            rhs: vec![3, 0, 0],
        });
    }
    let (h, w) = (s[1], s[2]);
    let mut out = format!("P6 {w} {h} 255\n").into_bytes();
    let data = x.data();
    let plane = h * w;
    for i in 0..plane {
        for c in 0..3 {
            out.push(value_to_byte(data[c * plane + i].to_f64()));
        }
    }
    Ok(out)
}

/// Decode P6 bytes into a `(3, h, w)` tensor.
pub fn decode<E: Scalar>(bytes: &[u8]) -> Result<Tensor<E>> {
    let bad = |reason: &str| Error::format("ppm", reason);

    // header: "P6" w h maxval, whitespace-separated, then exactly one
    // whitespace byte before the binary payload
    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if next_token(bytes)? != "P6" {
        return Err(bad("missing P6 magic"));
    }
    let w: usize = next_token(bytes)?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = next_token(bytes)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = next_token(bytes)?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    pos += 1; // the single whitespace after maxval
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(bad("truncated pixel payload"));
    }
    let payload = &bytes[pos..pos + need];
    let plane = h * w;
    let mut data = vec![E::ZERO; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = byte_to_value(payload[i * 3 + c]);
        }
    }
    Tensor::new(vec![3, h, w], data)
}

pub fn write_file<E: Scalar>(path: &std::path::Path, x: &Tensor<E>) -> Result<()> {
    let bytes = encode(x)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_file<E: Scalar>(path: &std::path::Path) -> Result<Tensor<E>> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_endpoints() {
        assert_eq!(value_to_byte(-1.0), 0);
        assert_eq!(value_to_byte(1.0), 255);
        // round(127.5) with round-half-up
        assert_eq!(value_to_byte(0.0), 128);
        // clamped outside the range
        assert_eq!(value_to_byte(-2.0), 0);
        assert_eq!(value_to_byte(2.0), 255);
    }

    #[test]
    fn default_header_layout() {
        let x = Tensor::<f32>::zeros(vec![3, 32, 32]);
        let bytes = encode(&x).unwrap();
        assert!(bytes.starts_with(b"P6 32 32 255"));
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let x = Tensor::<f32>::from_fn(vec![3, 8, 8], |i| ((i * 37 % 101) as f32 / 50.0) - 1.0);
        let first = encode(&x).unwrap();
        let decoded: Tensor<f32> = decode(&first).unwrap();
        let second = encode(&decoded).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn malformed_files_are_format_errors() {
        assert!(matches!(decode::<f32>(b"P5 2 2 255\n"), Err(Error::Format { .. })));
        assert!(matches!(decode::<f32>(b"P6 2 2 255\n\x00"), Err(Error::Format { .. })));
        assert!(matches!(decode::<f32>(b"P6 2"), Err(Error::Format { .. })));
    }

    #[test]
    fn quantize_is_idempotent() {
        let x = Tensor::<f32>::from_fn(vec![3, 4, 4], |i| (i as f32 * 0.077).sin());
        let q1 = quantize(&x);
        let q2 = quantize(&q1);
        assert_eq!(q1.data(), q2.data());
    }
}
