use crate::error::{Error, Result};
use crate::mask::Mask;

/// Per-pixel majority vote (at least two of three) over three annotations.
pub fn fuse_annotations(masks: &[Mask]) -> Result<Mask> {
    let [a, b, c] = masks else {
        return Err(Error::domain(format!("fusion needs exactly 3 masks, got {}", masks.len())));
    };
    if a.shape() != b.shape() || a.shape() != c.shape() {
        return Err(Error::domain(format!(
            "annotation shapes differ: {:?}, {:?}, {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let (rows, cols) = a.shape();
    Ok(Mask::from_fn(rows, cols, |(r, c_)| {
        (a.get(r, c_) as u8 + b.get(r, c_) as u8 + c.get(r, c_) as u8) >= 2
    }))
}
