//! Per-subgroup multicast precoders built from composite channel estimates.

use nalgebra::linalg::Cholesky;
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, Result, C64};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderScheme {
    #[default]
    Mr,
    Zf,
}

impl PrecoderScheme {
    pub fn label(self) -> &'static str {
        match self {
            PrecoderScheme::Mr => "mr",
            PrecoderScheme::Zf => "zf",
        }
    }
}

/// Diagonal loading of the ZF Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    /// `ε = 1e-9 · tr(ĤᴴĤ) / G`.
    Auto,
    Fixed(f64),
}

const AUTO_REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub scheme: PrecoderScheme,
    pub vectors: Vec<CVector>,
}

/// `w = ĥ / ‖ĥ‖`.
pub fn mr_precoder(estimate: &CVector) -> Result<CVector> {
    let norm = estimate.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroEstimate(0));
    }
    Ok(estimate.unscale(norm))
}

/// Column `g` of `Ĥ(ĤᴴĤ + εI)⁻¹`, normalized to unit norm.
pub fn zf_precoders(estimates: &[CVector], reg: Regularization) -> Result<Vec<CVector>> {
    let g = estimates.len();
    if g == 0 {
        return Ok(Vec::new());
    }
    let h = CMatrix::from_columns(estimates);
    let mut gram = h.adjoint() * &h;
    let trace: f64 = gram.diagonal().iter().map(|z| z.re).sum();
    let eps = match reg {
        Regularization::Auto => AUTO_REGULARIZATION * trace / g as f64,
        Regularization::Fixed(e) => e,
    };
    for i in 0..g {
        gram[(i, i)] += C64::new(eps, 0.0);
    }
    let chol = Cholesky::new(gram).ok_or(Error::RankDeficient)?;
    // Without loading, a pivot this small relative to the trace means Ĥ has
    // (numerically) dependent columns.
    if eps == 0.0 {
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|z| z.re * z.re)
            .fold(f64::INFINITY, f64::min);
        if min_pivot <= 1e-13 * trace / g as f64 {
            return Err(Error::RankDeficient);
        }
    }
    let w = h * chol.inverse();
    w.column_iter()
        .enumerate()
        .map(|(idx, col)| {
            let n = col.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::ZeroEstimate(idx));
            }
            Ok(col.unscale(n))
        })
        .collect()
}

/// Builds the precoders of every subgroup for one coherence block.
pub fn precoders(scheme: PrecoderScheme, estimates: &[CVector]) -> Result<PrecoderSet> {
    let vectors = match scheme {
        PrecoderScheme::Mr => estimates
            .iter()
            .enumerate()
            .map(|(g, e)| mr_precoder(e).map_err(|_| Error::ZeroEstimate(g)))
            .collect::<Result<Vec<_>>>()?,
        PrecoderScheme::Zf => zf_precoders(estimates, Regularization::Auto)?,
    };
    Ok(PrecoderSet { scheme, vectors })
}
