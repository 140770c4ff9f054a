//! Frame rendering to PNG.

use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use ndarray::ArrayView2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Colormap {
    Gray,
    Iron,
}

impl Colormap {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gray" | "grey" => Some(Colormap::Gray),
            "iron" => Some(Colormap::Iron),
            _ => None,
        }
    }

    pub fn color(self, level: u8) -> [u8; 3] {
        match self {
            Colormap::Gray => [level; 3],
            Colormap::Iron => IRON[level as usize],
        }
    }
}

/// Anchor colours of the iron palette, evenly spaced over 0..=255.
const IRON_ANCHORS: [[u8; 3]; 7] = [
    [0, 0, 0],
    [32, 0, 96],
    [128, 0, 140],
    [200, 32, 64],
    [240, 110, 0],
    [255, 200, 20],
    [255, 255, 255],
];

const fn build_iron() -> [[u8; 3]; 256] {
    let mut out = [[0u8; 3]; 256];
    let segments = IRON_ANCHORS.len() - 1;
    let mut i = 0;
    while i < 256 {
        // Position in anchor units, in 1/255 steps: i * segments / 255.
        let num = i * segments;
        let seg = if num / 255 >= segments { segments - 1 } else { num / 255 };
        let frac = num - seg * 255; // 0..=255
        let a = IRON_ANCHORS[seg];
        let b = IRON_ANCHORS[seg + 1];
        let mut ch = 0;
        while ch < 3 {
            let v = (a[ch] as usize * (255 - frac) + b[ch] as usize * frac + 127) / 255;
            out[i][ch] = v as u8;
            ch += 1;
        }
        i += 1;
    }
    out
}

/// Fixed 256-entry iron palette: black through purple, red and yellow to
/// white.
pub static IRON: [[u8; 3]; 256] = build_iron();

/// Maps values linearly onto 0..=255 between `range` (default: the frame's
/// own min and max) and encodes an RGB PNG.
pub fn render_png(frame: ArrayView2<'_, f64>, cmap: Colormap, range: Option<(f64, f64)>) -> Vec<u8> {
    let (rows, cols) = frame.dim();
    let (lo, hi) = range.unwrap_or_else(|| {
        frame.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    let span = hi - lo;
    let mut img = RgbImage::new(cols as u32, rows as u32);
    for ((r, c), &v) in frame.indexed_iter() {
        let level = if span > 0.0 { ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 };
        img.put_pixel(c as u32, r as u32, image::Rgb(cmap.color(level)));
    }
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory cannot fail");
    out.into_inner()
}
