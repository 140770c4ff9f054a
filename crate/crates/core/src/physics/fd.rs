//! Explicit finite-volume heat solver on a 3-D grid.
//!
//! Laterally the grid has one column per pixel. In depth the nodes sit on
//! the planes `z = k·dz`, `k = 0..=layers`, so node 0 is the heated surface
//! and the last node is the rear face. Materials are assigned per cell (the
//! slab between two node planes), which puts every material interface on a
//! node plane. Each node owns half of the cell above and half of the cell
//! below it.
//!
//! All outer faces are adiabatic. The step is forward Euler, limited so
//! every diagonal coefficient stays non-negative:
//! `dt ≤ 0.9 · min_i C_i / Σ_j G_ij`.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use super::scene::SimScene;
use crate::error::{Error, Result};

pub const STABILITY_SAFETY: f64 = 0.9;

/// Hard cap on solver steps for one run.
pub const MAX_STEPS: usize = 5_000_000;

/// Node storage is padded by one ghost node on every side (rows, cols and
/// depth). Ghost nodes have zero conductance to everything and stay at zero,
/// which removes all boundary branches from the stencil.
pub struct HeatGrid {
    rows: usize,
    cols: usize,
    layers: usize,
    /// Strides of the padded layout: depth is contiguous.
    stride_c: usize,
    stride_r: usize,
    inv_cap: Vec<f64>,
    cap: Vec<f64>,
    /// Conductance between node `i` and `i + 1` (next depth).
    g_down: Vec<f64>,
    /// Between `i` and `i + stride_c`.
    g_right: Vec<f64>,
    /// Between `i` and `i + stride_r`.
    g_south: Vec<f64>,
    /// Pulse energy per surface node, J.
    surface_energy: Array2<f64>,
}

/// Surface temperatures and diagnostics sampled at the frame times.
#[derive(Clone, Debug)]
pub struct SurfaceHistory {
    /// `(frames, rows, cols)` rise above ambient, K.
    pub surface: Array3<f64>,
    /// Stored heat above ambient at each frame, J.
    pub energy: Vec<f64>,
    pub time_step: f64,
    pub steps_per_frame: usize,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl HeatGrid {
    pub fn build(scene: &SimScene) -> Result<Self> {
        let (rows, cols, layers) = (scene.rows, scene.cols, scene.layers);
        let h = scene.pixel_pitch;
        let dz = scene.layer_thickness();

        // Per-cell material: index into `mats`, 0 is the bulk.
        let mut mats = vec![scene.material];
        let mut cell = vec![0u16; rows * cols * layers];
        for def in &scene.defects {
            let id = match mats.iter().position(|m| *m == def.fill) {
                Some(i) => i,
                None => {
                    mats.push(def.fill);
                    mats.len() - 1
                }
            } as u16;
            let k_range: Vec<usize> = (0..layers)
                .filter(|&k| {
                    let mid = (k as f64 + 0.5) * dz;
                    mid >= def.depth && mid <= def.depth + def.thickness
                })
                .collect();
            let k_range = if k_range.is_empty() {
                // Thinner than one layer: take the cell holding its top face.
                vec![((def.depth / dz).floor() as usize).min(layers - 1)]
            } else {
                k_range
            };
            for r in 0..rows {
                for c in 0..cols {
                    if def.covers(r, c) {
                        for &k in &k_range {
                            cell[(r * cols + c) * layers + k] = id;
                        }
                    }
                }
            }
        }
        let rho_c: Vec<f64> = mats.iter().map(|m| m.volumetric_heat_capacity()).collect();
        let kk: Vec<f64> = mats.iter().map(|m| m.conductivity()).collect();
        let cell_at = |r: usize, c: usize, k: usize| cell[(r * cols + c) * layers + k] as usize;

        let nk = layers + 1;
        let stride_c = nk + 2;
        let stride_r = (cols + 2) * stride_c;
        let n = (rows + 2) * stride_r;
        let mut cap = vec![0.0; n];
        let mut g_down = vec![0.0; n];
        let mut g_right = vec![0.0; n];
        let mut g_south = vec![0.0; n];
        let area = h * h;
        for r in 0..rows {
            for c in 0..cols {
                for k in 0..nk {
                    let i = (r + 1) * stride_r + (c + 1) * stride_c + k + 1;
                    // Cells touching this node plane: above (k-1) and below (k).
                    let touching: [Option<usize>; 2] =
                        [(k > 0).then(|| k - 1), (k < layers).then_some(k)];
                    cap[i] = touching
                        .iter()
                        .flatten()
                        .map(|&kc| rho_c[cell_at(r, c, kc)] * area * dz / 2.0)
                        .sum();
                    if k < layers {
                        g_down[i] = kk[cell_at(r, c, k)] * area / dz;
                    }
                    let lateral = |r2: usize, c2: usize| -> f64 {
                        touching
                            .iter()
                            .flatten()
                            .map(|&kc| {
                                harmonic(kk[cell_at(r, c, kc)], kk[cell_at(r2, c2, kc)]) * dz / 2.0
                            })
                            .sum()
                    };
                    if c + 1 < cols {
                        g_right[i] = lateral(r, c + 1);
                    }
                    if r + 1 < rows {
                        g_south[i] = lateral(r + 1, c);
                    }
                }
            }
        }
        let inv_cap = cap
            .iter()
            .map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 })
            .collect();
        let gains = scene.pulse.illumination.gains(rows, cols)?;
        let surface_energy = gains.mapv(|g| scene.pulse.energy * g * area);
        Ok(Self {
            rows,
            cols,
            layers,
            stride_c,
            stride_r,
            inv_cap,
            cap,
            g_down,
            g_right,
            g_south,
            surface_energy,
        })
    }

    /// Real (non-ghost) nodes.
    pub fn node_count(&self) -> usize {
        self.rows * self.cols * (self.layers + 1)
    }

    fn surface_index(&self, r: usize, c: usize) -> usize {
        (r + 1) * self.stride_r + (c + 1) * self.stride_c + 1
    }

    fn conductance_sum(&self, i: usize) -> f64 {
        self.g_down[i]
            + self.g_down[i - 1]
            + self.g_right[i]
            + self.g_right[i - self.stride_c]
            + self.g_south[i]
            + self.g_south[i - self.stride_r]
    }

    /// Largest forward-Euler step that keeps every diagonal coefficient
    /// non-negative, times [`STABILITY_SAFETY`].
    pub fn stable_time_step(&self) -> f64 {
        let bound = (0..self.cap.len())
            .filter(|&i| self.cap[i] > 0.0)
            .map(|i| self.cap[i] / self.conductance_sum(i))
            .fold(f64::INFINITY, f64::min);
        STABILITY_SAFETY * bound
    }

    /// One forward-Euler step. `coef[i] = dt / C_i`.
    fn step(&self, t: &[f64], out: &mut [f64], coef: &[f64]) {
        let (sc, sr, nk) = (self.stride_c, self.stride_r, self.layers + 1);
        let cols = self.cols;
        out.par_chunks_mut(sr)
            .enumerate()
            .skip(1)
            .take(self.rows)
            .for_each(|(r, out_row)| {
                for c in 1..=cols {
                    let lo = r * sr + c * sc + 1;
                    let hi = lo + nk;
                    let local = c * sc + 1;
                    let out_col = &mut out_row[local..local + nk];
                    let ti = &t[lo..hi];
                    let (up, down) = (&t[lo - 1..hi - 1], &t[lo + 1..hi + 1]);
                    let (west, east) = (&t[lo - sc..hi - sc], &t[lo + sc..hi + sc]);
                    let (north, south) = (&t[lo - sr..hi - sr], &t[lo + sr..hi + sr]);
                    let (gd, gu) = (&self.g_down[lo..hi], &self.g_down[lo - 1..hi - 1]);
                    let (ge, gw) = (&self.g_right[lo..hi], &self.g_right[lo - sc..hi - sc]);
                    let (gs, gn) = (&self.g_south[lo..hi], &self.g_south[lo - sr..hi - sr]);
                    let cf = &coef[lo..hi];
                    for k in 0..nk {
                        let x = ti[k];
                        let flux = gd[k] * (down[k] - x)
                            + gu[k] * (up[k] - x)
                            + ge[k] * (east[k] - x)
                            + gw[k] * (west[k] - x)
                            + gs[k] * (south[k] - x)
                            + gn[k] * (north[k] - x);
                        out_col[k] = x + cf[k] * flux;
                    }
                }
            });
    }

    fn deposit(&self, t: &mut [f64], fraction: f64) {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let i = self.surface_index(r, c);
                t[i] += fraction * self.surface_energy[[r, c]] * self.inv_cap[i];
            }
        }
    }

    fn stored_energy(&self, t: &[f64]) -> f64 {
        t.iter().zip(&self.cap).map(|(a, b)| a * b).sum()
    }

    fn surface(&self, t: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(r, c)| t[self.surface_index(r, c)])
    }

    /// Runs the scene and samples the surface at every frame time.
    pub fn run(&self, scene: &SimScene) -> Result<SurfaceHistory> {
        let bound = self.stable_time_step();
        let period = 1.0 / scene.frame_rate;
        let requested = match scene.time_step {
            Some(dt) if dt > bound => {
                return Err(Error::config(format!(
                    "time_step {dt:e} s exceeds the explicit stability bound {bound:e} s \
                     ({STABILITY_SAFETY} x min C/sum G)"
                )))
            }
            Some(dt) => dt,
            None => bound,
        };
        let steps_per_frame = (period / requested).ceil().max(1.0) as usize;
        let total = steps_per_frame.saturating_mul(scene.frames - 1);
        if total > MAX_STEPS {
            return Err(Error::config(format!(
                "stability bound {bound:e} s needs {total} solver steps, over the limit of \
                 {MAX_STEPS}; coarsen layers/pixel_pitch or shorten the sequence"
            )));
        }
        let dt = period / steps_per_frame as f64;
        let coef: Vec<f64> = self.inv_cap.iter().map(|c| c * dt).collect();
        let pulse = scene.pulse.duration;

        let mut cur = vec![0.0; self.cap.len()];
        let mut next = vec![0.0; self.cap.len()];
        let mut surface = Array3::zeros((scene.frames, self.rows, self.cols));
        let mut energy = Vec::with_capacity(scene.frames);
        surface
            .index_axis_mut(ndarray::Axis(0), 0)
            .assign(&self.surface(&cur));
        energy.push(self.stored_energy(&cur));

        let mut step_no = 0usize;
        for frame in 1..scene.frames {
            for _ in 0..steps_per_frame {
                let t0 = step_no as f64 * dt;
                if pulse == 0.0 {
                    if step_no == 0 {
                        self.deposit(&mut cur, 1.0);
                    }
                } else if t0 < pulse {
                    let overlap = (t0 + dt).min(pulse) - t0;
                    self.deposit(&mut cur, overlap / pulse);
                }
                self.step(&cur, &mut next, &coef);
                std::mem::swap(&mut cur, &mut next);
                step_no += 1;
            }
            surface
                .index_axis_mut(ndarray::Axis(0), frame)
                .assign(&self.surface(&cur));
            energy.push(self.stored_energy(&cur));
        }
        Ok(SurfaceHistory {
            surface,
            energy,
            time_step: dt,
            steps_per_frame,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{DefectShape, DefectSpec, MaterialProps};

    fn small_plate() -> SimScene {
        let mut s = SimScene::plate(8, 8, 6);
        s.layers = 8;
        s
    }

    #[test]
    fn uniform_bound_matches_textbook_limit() {
        let s = small_plate();
        let g = HeatGrid::build(&s).unwrap();
        let a = s.material.diffusivity();
        let (h, dz) = (s.pixel_pitch, s.layer_thickness());
        let textbook = 1.0 / (2.0 * a * (2.0 / (h * h) + 1.0 / (dz * dz)));
        assert!((g.stable_time_step() / (STABILITY_SAFETY * textbook) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_is_conserved_with_adiabatic_faces() {
        let s = small_plate();
        let g = HeatGrid::build(&s).unwrap();
        let hist = g.run(&s).unwrap();
        let expected = s.pulse.energy * (s.pixel_pitch * 8.0).powi(2);
        for e in &hist.energy[1..] {
            assert!((e / expected - 1.0).abs() < 1e-10, "{e} vs {expected}");
        }
    }

    #[test]
    fn finite_pulse_deposits_full_energy() {
        let mut s = small_plate();
        s.pulse.duration = 0.25;
        let g = HeatGrid::build(&s).unwrap();
        let hist = g.run(&s).unwrap();
        let expected = s.pulse.energy * (s.pixel_pitch * 8.0).powi(2);
        assert!((hist.energy.last().unwrap() / expected - 1.0).abs() < 1e-10);
        // Still heating during the first frame interval.
        assert!(hist.energy[1] < expected);
    }

    #[test]
    fn explicit_step_above_bound_is_rejected() {
        let mut s = small_plate();
        let bound = HeatGrid::build(&s).unwrap().stable_time_step();
        s.time_step = Some(bound * 1.5);
        let err = HeatGrid::build(&s).unwrap().run(&s).unwrap_err();
        assert!(err.to_string().contains("stability bound"), "{err}");
        s.time_step = Some(bound * 0.5);
        assert!(HeatGrid::build(&s).unwrap().run(&s).is_ok());
    }

    #[test]
    fn air_fill_tightens_the_bound() {
        let mut s = small_plate();
        s.layers = 16;
        let plain = HeatGrid::build(&s).unwrap().stable_time_step();
        s.defects.push(DefectSpec {
            shape: DefectShape::Circle { radius: 2.0 },
            center: (4.0, 4.0),
            depth: 1e-3,
            // Two layers, so the middle node plane is all air.
            thickness: 5e-4,
            fill: MaterialProps::air(),
        });
        let holed = HeatGrid::build(&s).unwrap().stable_time_step();
        assert!(holed < plain / 10.0);
    }
}
