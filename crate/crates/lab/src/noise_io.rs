//! Binary noise dumps: a 16-byte header (`b"SHWN"`, version, k-count,
//! i-count, each field 4 bytes little-endian) followed by the increments as
//! little-endian `f64`, row-major in time.

use shelab_core::noise::{NoiseField, NoiseSource};

use crate::LabError;

pub const MAGIC: [u8; 4] = *b"SHWN";
pub const VERSION: u32 = 1;

pub fn encode(field: &NoiseField) -> Vec<u8> {
    let data = field.as_slice();
    let mut out = Vec::with_capacity(16 + 8 * data.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(field.steps() as u32).to_le_bytes());
    out.extend_from_slice(&(field.cells() as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads a dump back; `seed` and `path_index` are metadata only.
pub fn decode(bytes: &[u8], seed: u64, path_index: u64) -> Result<NoiseField, LabError> {
    let bad = |m: &str| LabError::Validation(format!("noise dump: {m}"));
    if bytes.len() < 16 || bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    let (steps, cells) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != 8 * steps * cells {
        return Err(bad("length does not match the header"));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    NoiseField::from_raw(steps, cells, data, seed, path_index).map_err(|e| bad(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use shelab_core::{Boundary, GridSpec};

    #[test]
    fn round_trip() {
        let g = GridSpec::new(0.1, 0.004, 1.0, 0.02, Boundary::Neumann).unwrap();
        let f = NoiseField::sample(&g, 9, 2);
        let bytes = encode(&f);
        assert_eq!(bytes.len(), 16 + 8 * g.steps() * g.cells());
        assert_eq!(&bytes[..4], b"SHWN");
        let back = decode(&bytes, 9, 2).unwrap();
        assert_eq!(back.as_slice(), f.as_slice());
        assert!(decode(&bytes[..20], 9, 2).is_err());
    }
}
