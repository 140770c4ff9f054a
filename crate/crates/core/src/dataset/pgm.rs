//! 8-bit binary PGM (P5) masks: 0 is background, 255 is defect.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mask::Mask;

pub fn encode(mask: &Mask) -> Vec<u8> {
    let (rows, cols) = mask.shape();
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(mask.as_array().iter().map(|&v| if v { 255u8 } else { 0 }));
    out
}

/// Decodes a P5 image; any non-zero sample counts as defect.
pub fn decode(bytes: &[u8]) -> Result<Mask> {
    let mut pos = 0;
    let mut next_token = |bytes: &[u8]| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::config("truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if next_token(bytes)? != "P5" {
        return Err(Error::config("not a binary PGM (P5)"));
    }
    let num = |s: String| -> Result<usize> {
        s.parse().map_err(|_| Error::config(format!("bad PGM header value `{s}`")))
    };
    let cols = num(next_token(bytes)?)?;
    let rows = num(next_token(bytes)?)?;
    let maxval = num(next_token(bytes)?)?;
    if maxval != 255 {
        return Err(Error::config(format!("PGM maxval {maxval}, expected 255")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = &bytes[pos + 1..];
    if data.len() != rows * cols {
        return Err(Error::config(format!(
            "PGM raster has {} bytes, expected {}",
            data.len(),
            rows * cols
        )));
    }
    Ok(Mask::from_fn(rows, cols, |(r, c)| data[r * cols + c] != 0))
}

pub fn write(path: &Path, mask: &Mask) -> Result<()> {
    std::fs::write(path, encode(mask)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::format(path, "pgm", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Mask::from_fn(2, 3, |(r, c)| r == c);
        let bytes = encode(&m);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[255, 0, 0, 0, 255, 0]);
    }

    #[test]
    fn tolerates_comments() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff".to_vec();
        let m = decode(&bytes).unwrap();
        assert!(!m.get(0, 0) && m.get(0, 1));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in 1usize..12, cols in 1usize..12, bits in prop::collection::vec(any::<bool>(), 144)) {
            let m = Mask::from_fn(rows, cols, |(r, c)| bits[r * 12 + c]);
            prop_assert_eq!(decode(&encode(&m)).unwrap(), m);
        }
    }
}
