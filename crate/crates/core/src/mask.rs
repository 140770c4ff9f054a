//! Binary masks over an `m × n` image.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Inclusive pixel rectangle `(row0, col0) ..= (row1, col1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl PixelRect {
    pub fn height(&self) -> usize {
        self.row1 - self.row0 + 1
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0 + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.row0..=self.row1).contains(&r) && (self.col0..=self.col1).contains(&c)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask(Array2<bool>);

impl Mask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Mask(Array2::from_elem((rows, cols), false))
    }

    pub fn from_array(a: Array2<bool>) -> Self {
        Mask(a)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut((usize, usize)) -> bool) -> Self {
        Mask(Array2::from_shape_fn((rows, cols), f))
    }

    pub fn rect(rows: usize, cols: usize, rect: PixelRect) -> Self {
        Self::from_fn(rows, cols, |(r, c)| rect.contains(r, c))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.0[[r, c]]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.0[[r, c]] = v;
    }

    pub fn as_array(&self) -> &Array2<bool> {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&v| v)
    }

    pub fn check_same_shape(&self, other: &Mask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    pub fn union_with(&mut self, other: &Mask) -> Result<()> {
        self.check_same_shape(other)?;
        self.0.zip_mut_with(&other.0, |a, &b| *a |= b);
        Ok(())
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        self.check_same_shape(other)?;
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .filter(|(&a, &b)| a && b)
            .count())
    }

    /// `true` when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.shape() == other.shape()
            && self.0.iter().zip(other.0.iter()).all(|(&a, &b)| !a || b)
    }

    /// Tight bounding box of the set pixels.
    pub fn bounding_box(&self) -> Option<PixelRect> {
        let mut bb: Option<PixelRect> = None;
        for ((r, c), &v) in self.0.indexed_iter() {
            if !v {
                continue;
            }
            bb = Some(match bb {
                None => PixelRect {
                    row0: r,
                    col0: c,
                    row1: r,
                    col1: c,
                },
                Some(b) => PixelRect {
                    row0: b.row0.min(r),
                    col0: b.col0.min(c),
                    row1: b.row1.max(r),
                    col1: b.col1.max(c),
                },
            });
        }
        bb
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.0.mapv(|v| if v { 1.0 } else { 0.0 })
    }
}

/// Union of a set of same-shaped masks; `None` for an empty list.
pub fn union_all<'a>(masks: impl IntoIterator<Item = &'a Mask>) -> Result<Option<Mask>> {
    let mut acc: Option<Mask> = None;
    for m in masks {
        match acc.as_mut() {
            None => acc = Some(m.clone()),
            Some(a) => a.union_with(m)?,
        }
    }
    Ok(acc)
}
