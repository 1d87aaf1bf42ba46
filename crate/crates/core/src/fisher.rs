//! Expected information matrices and the OLS sandwich covariance.
//!
//! Weighted (approximate) designs enter through `W = diag(w)`. The OLS
//! sandwich treats the design as an exact design of `n` runs and ignores weights.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize, weighted_gram};
use crate::model::{logistic, model_matrix, BasisSpec, Design, LinkSpec, VarianceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoKind {
    BetaBlock,
    AlphaBlock,
    Gee,
    OlsSandwich,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    pub m: DMatrix<f64>,
    pub kind: InfoKind,
}

impl InfoMatrix {
    pub fn d(&self) -> usize {
        self.m.nrows()
    }
}

fn check_beta(basis: &BasisSpec, beta: &[f64]) -> Result<()> {
    if beta.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            context: "beta",
            expected: basis.len(),
            found: beta.len(),
        });
    }
    Ok(())
}

/// Diagonal of `P` for a GLM with unit dispersion: `1` for identity, `p(1-p)` for logit.
pub(crate) fn glm_p_diag(f: &DMatrix<f64>, beta: &[f64], link: LinkSpec) -> Vec<f64> {
    match link {
        LinkSpec::Identity => vec![1.0; f.nrows()],
        LinkSpec::Logit => f
            .row_iter()
            .map(|row| {
                let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
                let p = logistic(eta);
                p * (1.0 - p)
            })
            .collect(),
    }
}

/// `F^T W P F`.
pub fn info_glm_weighted(
    design: &Design,
    basis: &BasisSpec,
    link: LinkSpec,
    beta: &[f64],
) -> Result<InfoMatrix> {
    check_beta(basis, beta)?;
    let f = model_matrix(design, basis)?;
    let p = glm_p_diag(&f, beta, link);
    let wp: Vec<f64> = design.weights().iter().zip(&p).map(|(w, p)| w * p).collect();
    Ok(InfoMatrix {
        m: weighted_gram(&f, &wp),
        kind: InfoKind::BetaBlock,
    })
}

/// `F^T W P F` with `P_ii = 1 / (sigma2 v(x_i))`; does not depend on beta.
pub fn info_hetero_beta(
    design: &Design,
    basis: &BasisSpec,
    vm: &VarianceModel,
) -> Result<InfoMatrix> {
    vm.check_dim(design.dim())?;
    let f = model_matrix(design, basis)?;
    let wp: Vec<f64> = design
        .points()
        .iter()
        .map(|p| p.weight / (vm.sigma2 * vm.exponent(&p.coords).exp()))
        .collect();
    Ok(InfoMatrix {
        m: weighted_gram(&f, &wp),
        kind: InfoKind::BetaBlock,
    })
}

/// `X^T W Q X` on raw coordinates with `Q_ii = (1 + 4 x_i . alpha)^2 / 2`.
pub fn info_hetero_alpha(design: &Design, vm: &VarianceModel) -> Result<InfoMatrix> {
    vm.check_dim(design.dim())?;
    let (n, q) = (design.len(), design.dim());
    let x = DMatrix::from_fn(n, q, |i, j| design.points()[i].coords[j]);
    let wq: Vec<f64> = design
        .points()
        .iter()
        .map(|p| {
            let s: f64 = p.coords.iter().zip(&vm.alpha).map(|(a, b)| a * b).sum();
            let t = 1.0 + 4.0 * s;
            p.weight * 0.5 * t * t
        })
        .collect();
    Ok(InfoMatrix {
        m: weighted_gram(&x, &wq),
        kind: InfoKind::AlphaBlock,
    })
}

/// `F^T (WP)^{1/2} R^{-1} (WP)^{1/2} F` through a Cholesky solve against `R`.
pub fn info_gee(
    design: &Design,
    basis: &BasisSpec,
    link: LinkSpec,
    beta: &[f64],
    r: &DMatrix<f64>,
) -> Result<InfoMatrix> {
    check_beta(basis, beta)?;
    let n = design.len();
    if r.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "info_gee correlation matrix",
            expected: n,
            found: r.nrows(),
        });
    }
    let chol = cholesky(r)
        .ok_or_else(|| Error::Singular("correlation matrix is not positive definite".into()))?;
    let f = model_matrix(design, basis)?;
    let p = glm_p_diag(&f, beta, link);
    let m = gee_from_factor(&f, &design.weights(), &p, &chol);
    Ok(InfoMatrix {
        m,
        kind: InfoKind::Gee,
    })
}

pub(crate) fn gee_from_factor(
    f: &DMatrix<f64>,
    weights: &[f64],
    p: &[f64],
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> DMatrix<f64> {
    let mut b = f.clone();
    for (i, mut row) in b.row_iter_mut().enumerate() {
        row *= (weights[i] * p[i]).sqrt();
    }
    // Half-solve: L^{-1} B, then (L^{-1}B)^T (L^{-1}B).
    let mut half = b;
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut half);
    let mut m = half.transpose() * &half;
    symmetrize(&mut m);
    m
}

/// `sigma2 (F^T F)^{-1} F^T V F (F^T F)^{-1}` for an exact design of `n` runs.
pub fn ols_variance(
    design: &Design,
    basis: &BasisSpec,
    v: &DMatrix<f64>,
    sigma2: f64,
) -> Result<InfoMatrix> {
    let n = design.len();
    if v.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "ols_variance V",
            expected: n,
            found: v.nrows(),
        });
    }
    let f = model_matrix(design, basis)?;
    if n < basis.len() {
        return Err(Error::Singular(format!(
            "F^T F is singular: n = {n} < d = {}",
            basis.len()
        )));
    }
    let ftf = f.transpose() * &f;
    let chol = cholesky(&ftf)
        .ok_or_else(|| Error::Singular("F^T F is singular (rank-deficient design)".into()))?;
    let meat = f.transpose() * v * &f;
    let left = chol.solve(&meat);
    let mut m = chol.solve(&left.transpose()) * sigma2;
    symmetrize(&mut m);
    Ok(InfoMatrix {
        m,
        kind: InfoKind::OlsSandwich,
    })
}
