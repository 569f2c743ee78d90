//! SSD and SPoC as symmetric-definite generalized eigenproblems.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{zscore, FilterSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{generalized_symmetric_eigen, Matrix};

use super::{covariance, epoch_covariances, filter_rows, shrink, BandDefinition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ssd,
    Spoc,
}

/// Spatial filters (columns of `filters`), their activation patterns and
/// eigenvalues, best component first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub method: Method,
    pub filters: Matrix,
    pub patterns: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl Decomposition {
    pub fn components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn filter(&self, k: usize) -> Vec<f64> {
        self.filters.column(k)
    }

    pub fn pattern(&self, k: usize) -> Vec<f64> {
        self.patterns.column(k)
    }
}

/// `A = C·W·(Wᵀ·C·W)⁻¹`.
pub fn patterns(cov: &Matrix, filters: &Matrix) -> Result<Matrix> {
    let cw = cov.matmul(filters)?;
    let mut inner = filters.transpose().matmul(&cw)?;
    inner.symmetrize();
    cw.matmul(&inner.spd_inverse()?)
}

fn take_columns(m: &Matrix, order: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        out.set_column(dst, &m.column(src));
    }
    out
}

fn check_components(k: usize, channels: usize) -> Result<()> {
    if k == 0 || k > channels {
        return Err(invalid("component count must be between 1 and the channel count"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsdFit {
    pub decomposition: Decomposition,
    pub signal_cov: Matrix,
    /// Shrunk flank covariance; the filters are orthonormal against it.
    pub flank_cov: Matrix,
}

/// Pooled covariance over several blocks, weighted by degrees of freedom.
fn pooled_covariance(blocks: &[Matrix]) -> Result<Matrix> {
    let c = blocks.first().ok_or(Error::Empty)?.rows();
    let mut acc = Matrix::zeros(c, c);
    let mut dof = 0.0;
    for b in blocks {
        let w = (b.cols() - 1) as f64;
        acc.add_assign_scaled(&covariance(b)?, w);
        dof += w;
    }
    Ok(acc.scale(1.0 / dof))
}

/// SSD on continuous `channels × samples` segments: maximizes signal-band
/// power relative to the summed flank bands.
pub fn ssd(
    segments: &[Matrix],
    sample_rate: f64,
    band: &BandDefinition,
    n_components: usize,
    shrinkage: f64,
) -> Result<SsdFit> {
    band.validate()?;
    let channels = segments.first().ok_or(Error::Empty)?.rows();
    check_components(n_components, channels)?;
    let (lo, hi) = band.signal();
    let [f1, f2] = band.flanks();
    let mut sig = Vec::with_capacity(segments.len());
    let mut flank = Vec::with_capacity(segments.len());
    for s in segments {
        if s.rows() != channels {
            return Err(Error::DimensionMismatch {
                expected: channels,
                got: s.rows(),
            });
        }
        sig.push(filter_rows(s, &FilterSpec::bandpass(lo, hi, sample_rate))?);
        let mut fl = filter_rows(s, &FilterSpec::bandpass(f1.0, f1.1, sample_rate))?;
        let upper = filter_rows(s, &FilterSpec::bandpass(f2.0, f2.1, sample_rate))?;
        fl.add_assign_scaled(&upper, 1.0);
        flank.push(fl);
    }
    let signal_cov = pooled_covariance(&sig)?;
    let flank_cov = shrink(&pooled_covariance(&flank)?, shrinkage)?;
    let eig = generalized_symmetric_eigen(&signal_cov, &flank_cov)?;
    let order: Vec<usize> = (0..n_components).collect();
    let filters = take_columns(&eig.vectors, &order);
    let patterns = patterns(&signal_cov, &filters)?;
    Ok(SsdFit {
        decomposition: Decomposition {
            method: Method::Ssd,
            filters,
            patterns,
            eigenvalues: eig.values[..n_components].to_vec(),
        },
        signal_cov,
        flank_cov,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpocFit {
    pub decomposition: Decomposition,
    /// Mean epoch covariance; the filters are orthonormal against it.
    pub mean_cov: Matrix,
    /// `powers[k][e] = w_kᵀ·C_e·w_k`.
    pub powers: Vec<Vec<f64>>,
    /// Pearson correlation of each component's power with the target.
    pub train_correlations: Vec<f64>,
}

/// Minimum epochs for a SPoC fit.
pub const MIN_SPOC_EPOCHS: usize = 10;

/// SPoC with a z-scored target: solves `C_z·w = λ·C·w` where
/// `C_z = mean(z_e·C_e)` and `C = mean(C_e)`; components are ordered by |λ|.
pub fn spoc(epochs: &[Matrix], z: &[f64], n_components: usize, shrinkage: f64) -> Result<SpocFit> {
    if epochs.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: epochs.len(),
            got: z.len(),
        });
    }
    if epochs.len() < MIN_SPOC_EPOCHS {
        return Err(Error::TooShort {
            needed: MIN_SPOC_EPOCHS,
            got: epochs.len(),
        });
    }
    let zs = zscore(z)?;
    let covs = epoch_covariances(epochs, shrinkage)?;
    let c = covs.mean.rows();
    check_components(n_components, c)?;
    let mut cz = Matrix::zeros(c, c);
    for (ce, ze) in covs.per_epoch.iter().zip(&zs) {
        cz.add_assign_scaled(ce, ze / epochs.len() as f64);
    }
    let eig = generalized_symmetric_eigen(&cz, &covs.mean)?;
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        eig.values[b]
            .abs()
            .total_cmp(&eig.values[a].abs())
            .then(a.cmp(&b))
    });
    order.truncate(n_components);
    let filters = take_columns(&eig.vectors, &order);
    let patterns = patterns(&covs.mean, &filters)?;
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.values[i]).collect();
    let powers: Vec<Vec<f64>> = (0..n_components)
        .map(|k| {
            let w = filters.column(k);
            covs.per_epoch.iter().map(|ce| ce.quad_form(&w)).collect()
        })
        .collect();
    let train_correlations = powers
        .iter()
        .map(|p| crate::math::pearson(p, &zs).unwrap_or(0.0))
        .collect();
    Ok(SpocFit {
        decomposition: Decomposition {
            method: Method::Spoc,
            filters,
            patterns,
            eigenvalues,
        },
        mean_cov: covs.mean,
        powers,
        train_correlations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Standardized component power, sign-matched to the target.
    pub prediction: Vec<f64>,
    pub r: Option<f64>,
}

/// Projects epochs through component `k` and standardizes the per-epoch
/// power; the sign of the eigenvalue orients it toward the target.
pub fn decode_target(
    decomposition: &Decomposition,
    component: usize,
    epochs: &[Matrix],
    truth: Option<&[f64]>,
) -> Result<Decoded> {
    if component >= decomposition.components() {
        return Err(invalid("component index out of range"));
    }
    if epochs.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: epochs.len(),
        });
    }
    let w = decomposition.filter(component);
    let mut power = Vec::with_capacity(epochs.len());
    for e in epochs {
        if e.rows() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: e.rows(),
            });
        }
        power.push(covariance(e)?.quad_form(&w));
    }
    let sign = if decomposition.eigenvalues[component] < 0.0 {
        -1.0
    } else {
        1.0
    };
    let prediction: Vec<f64> = zscore(&power)?.into_iter().map(|v| sign * v).collect();
    let r = match truth {
        None => None,
        Some(t) => Some(crate::math::pearson(&prediction, t)?),
    };
    Ok(Decoded { prediction, r })
}
