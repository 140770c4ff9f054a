use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array3, ArrayView3};

use super::{check_frames, pixels_to_stack, EnhanceMethod, EnhancedStack};
use crate::error::{Error, Result};

/// Mean time history and leading temporal eigenvectors.
#[derive(Clone, Debug)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `F × K`, columns in non-increasing eigenvalue order.
    pub vectors: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
    /// Centred data, pixels × time.
    centred: DMatrix<f64>,
}

impl PcaBasis {
    /// Rebuilds frames `[t, row, col]` from component images: the mean plus
    /// the projection-weighted eigenvectors.
    pub fn reconstruct(&self, stack: &EnhancedStack) -> Result<Array3<f64>> {
        let (k, m, n) = stack.images.dim();
        if k != self.vectors.ncols() {
            return Err(Error::shape(format!("{} components", self.vectors.ncols()), format!("{k} components")));
        }
        let f = self.mean.len();
        Ok(Array3::from_shape_fn((f, m, n), |(t, r, c)| {
            self.mean[t] + (0..k).map(|j| stack.images[[j, r, c]] * self.vectors[(t, j)]).sum::<f64>()
        }))
    }
}

/// Temporal mean and the `components` leading eigenvectors of the frames'
/// `F × F` covariance.
pub fn pca_basis(frames: &ArrayView3<'_, f64>, components: usize) -> Result<PcaBasis> {
    check_frames(frames, 2)?;
    let (f, m, n) = frames.dim();
    if components == 0 || components > f {
        return Err(Error::domain(format!("components must be in 1..={f}, got {components}")));
    }
    let p = m * n;
    let mut x = DMatrix::<f64>::zeros(p, f);
    for ((t, r, c), &v) in frames.indexed_iter() {
        x[(r * n + c, t)] = v;
    }
    let mean: Vec<f64> = (0..f).map(|t| x.column(t).sum() / p as f64).collect();
    for t in 0..f {
        x.column_mut(t).add_scalar_mut(-mean[t]);
    }
    let denom = (p.max(2) - 1) as f64;
    let cov = x.transpose() * &x / denom;
    let total_variance: f64 = cov.diagonal().sum();

    let mut vectors = DMatrix::<f64>::zeros(f, components);
    let mut eigenvalues = vec![0.0; components];
    if total_variance > 0.0 {
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..f).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        for (j, &src) in order.iter().take(components).enumerate() {
            let mut v = eig.eigenvectors.column(src).clone_owned();
            let lead = v.iter().copied().fold(0.0f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
            if lead < 0.0 {
                v.neg_mut();
            }
            vectors.set_column(j, &v);
            eigenvalues[j] = eig.eigenvalues[src].max(0.0);
        }
    }
    Ok(PcaBasis { mean, vectors, eigenvalues, total_variance, centred: x })
}

/// Principal components of the pixel time histories.
///
/// Each pixel is an `F`-vector; vectors are centred on the mean over pixels
/// and projected onto the leading eigenvectors of the `F × F` temporal
/// covariance. Eigenvector signs make the largest-magnitude entry positive.
pub fn sequence_pca(source_id: &str, frames: ArrayView3<'_, f64>, components: usize) -> Result<EnhancedStack> {
    let basis = pca_basis(&frames, components)?;
    let (_, m, n) = frames.dim();
    let mut warnings = Vec::new();
    if basis.total_variance <= 0.0 {
        log::warn!("sequence {source_id} has zero temporal variance; PCA projections are zero");
        warnings.push("zero variance input; projections are all zero".to_string());
    }
    let proj = &basis.centred * &basis.vectors;
    let mut values = vec![0.0; m * n * components];
    for px in 0..m * n {
        for j in 0..components {
            values[px * components + j] = proj[(px, j)];
        }
    }
    let mut stack = EnhancedStack::new(
        source_id,
        EnhanceMethod::Pca,
        pixels_to_stack(&values, components, m, n),
        (0..components).map(|k| k as f64).collect(),
    )?;
    stack.warnings = warnings;
    stack.notes.push((
        "eigenvalues".into(),
        basis.eigenvalues.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
    ));
    stack.notes.push(("total_variance".into(), basis.total_variance.to_string()));
    Ok(stack)
}
