//! Scalar design objectives built from information and variance matrices.
//!
//! Log-scale and root-scale averages treat singular draws differently:
//! [`robust_log_d`] becomes `-inf` as soon as one draw is singular, while
//! [`j_functional`] lets that draw contribute zero.
//!
//! The PRN criterion takes `log |det|` of `F^T V F`. Over the unit square of
//! `(rho_minus, rho_plus)` the block covariance `V` is not always positive
//! definite, so the modulus is used rather than failing the whole evaluation.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::covariance::{build_correlation, prn_covariance, stream_block_matrix, KernelSpec};
use crate::covariance::{PrnAssignment, PrnCorrelationSpec};
use crate::error::{Error, Result};
use crate::fisher::{gee_from_factor, glm_p_diag};
use crate::linalg::{
    cholesky, log_abs_det, relative_asymmetry, spd_log_det, weighted_gram, CompensatedSum,
};
use crate::model::{model_matrix, model_matrix_unchecked, BasisSpec, Design, LinkSpec};
use crate::priors::QuadratureGrid;

/// Relative asymmetry accepted by [`log_det_psd`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub value: f64,
    /// Prior draws or quadrature nodes used.
    pub m: usize,
    /// Monte Carlo standard error; `None` for quadrature. `NaN` when the value is infinite.
    pub std_error: Option<f64>,
}

pub fn log_det_psd(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "log_det_psd",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if relative_asymmetry(m) > SYMMETRY_TOL {
        return Err(Error::invalid("log_det_psd requires a symmetric matrix"));
    }
    Ok(spd_log_det(m).unwrap_or(f64::NEG_INFINITY))
}

/// Which information matrix a robust criterion averages, and what a prior draw means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// `F^T W P F`; draws are `beta`.
    GlmWeighted { basis: BasisSpec, link: LinkSpec },
    /// Mean-parameter block of the heteroscedastic normal model; draws are `alpha`.
    HeteroBeta {
        basis: BasisSpec,
        #[serde(default = "crate::model::default_sigma2")]
        sigma2: f64,
    },
    /// Variance-parameter block `X^T W Q X`; draws are `alpha`.
    HeteroAlpha,
    /// Both blocks of the block-diagonal information; draws are `alpha`.
    HeteroFull {
        basis: BasisSpec,
        #[serde(default = "crate::model::default_sigma2")]
        sigma2: f64,
    },
    /// GEE information with a working correlation built from `kernel`; draws are `beta`.
    Gee {
        basis: BasisSpec,
        link: LinkSpec,
        kernel: KernelSpec,
    },
}

impl ModelConfig {
    /// Number of parameters the information matrix covers.
    pub fn n_params(&self, q: usize) -> usize {
        match self {
            ModelConfig::GlmWeighted { basis, .. }
            | ModelConfig::HeteroBeta { basis, .. }
            | ModelConfig::Gee { basis, .. } => basis.len(),
            ModelConfig::HeteroAlpha => q,
            ModelConfig::HeteroFull { basis, .. } => basis.len() + q,
        }
    }

    /// Length a prior draw must have.
    pub fn draw_dim(&self, q: usize) -> usize {
        match self {
            ModelConfig::GlmWeighted { basis, .. } | ModelConfig::Gee { basis, .. } => basis.len(),
            _ => q,
        }
    }

    pub fn basis(&self) -> Option<&BasisSpec> {
        match self {
            ModelConfig::GlmWeighted { basis, .. }
            | ModelConfig::HeteroBeta { basis, .. }
            | ModelConfig::HeteroFull { basis, .. }
            | ModelConfig::Gee { basis, .. } => Some(basis),
            ModelConfig::HeteroAlpha => None,
        }
    }

    pub fn with_kernel(&self, kernel: KernelSpec) -> Option<ModelConfig> {
        match self {
            ModelConfig::Gee { basis, link, .. } => Some(ModelConfig::Gee {
                basis: basis.clone(),
                link: *link,
                kernel,
            }),
            _ => None,
        }
    }

    /// Information blocks for one draw; the criterion is the sum of their log-determinants.
    pub fn information(&self, design: &Design, draw: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let prepared = Prepared::new(self, design)?;
        check_draw(self, design, draw)?;
        Ok(prepared.blocks(draw))
    }
}

fn check_draw(config: &ModelConfig, design: &Design, draw: &[f64]) -> Result<()> {
    let want = config.draw_dim(design.dim());
    if draw.len() != want {
        return Err(Error::DimensionMismatch {
            context: "prior draw",
            expected: want,
            found: draw.len(),
        });
    }
    Ok(())
}

/// Per-design state reused across prior draws.
struct Prepared<'a> {
    config: &'a ModelConfig,
    design: &'a Design,
    f: Option<DMatrix<f64>>,
    weights: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl<'a> Prepared<'a> {
    fn new(config: &'a ModelConfig, design: &'a Design) -> Result<Self> {
        let f = match config.basis() {
            Some(b) => Some(model_matrix(design, b)?),
            None => None,
        };
        let chol = match config {
            ModelConfig::Gee { kernel, .. } => cholesky(&build_correlation(design, kernel)),
            _ => None,
        };
        Ok(Self {
            config,
            design,
            f,
            weights: design.weights(),
            chol,
        })
    }

    fn blocks(&self, draw: &[f64]) -> Vec<DMatrix<f64>> {
        match self.config {
            ModelConfig::GlmWeighted { link, .. } => {
                let f = self.f.as_ref().expect("basis");
                let p = glm_p_diag(f, draw, *link);
                let wp: Vec<f64> = self.weights.iter().zip(&p).map(|(w, p)| w * p).collect();
                vec![weighted_gram(f, &wp)]
            }
            ModelConfig::HeteroBeta { sigma2, .. } => vec![self.beta_block(draw, *sigma2)],
            ModelConfig::HeteroAlpha => vec![self.alpha_block(draw)],
            ModelConfig::HeteroFull { sigma2, .. } => {
                vec![self.beta_block(draw, *sigma2), self.alpha_block(draw)]
            }
            ModelConfig::Gee { link, .. } => {
                let f = self.f.as_ref().expect("basis");
                match &self.chol {
                    Some(chol) => {
                        let p = glm_p_diag(f, draw, *link);
                        vec![gee_from_factor(f, &self.weights, &p, chol)]
                    }
                    // Working correlation not positive definite: no usable information.
                    None => vec![DMatrix::zeros(f.ncols(), f.ncols())],
                }
            }
        }
    }

    fn beta_block(&self, alpha: &[f64], sigma2: f64) -> DMatrix<f64> {
        let f = self.f.as_ref().expect("basis");
        let wp: Vec<f64> = self
            .design
            .points()
            .iter()
            .map(|p| {
                let s: f64 = p.coords.iter().zip(alpha).map(|(x, a)| x * a).sum();
                p.weight / (sigma2 * (s * (1.0 + 2.0 * s)).exp())
            })
            .collect();
        weighted_gram(f, &wp)
    }

    fn alpha_block(&self, alpha: &[f64]) -> DMatrix<f64> {
        let (n, q) = (self.design.len(), self.design.dim());
        let pts = self.design.points();
        let x = DMatrix::from_fn(n, q, |i, j| pts[i].coords[j]);
        let wq: Vec<f64> = pts
            .iter()
            .map(|p| {
                let s: f64 = p.coords.iter().zip(alpha).map(|(x, a)| x * a).sum();
                let t = 1.0 + 4.0 * s;
                p.weight * 0.5 * t * t
            })
            .collect();
        weighted_gram(&x, &wq)
    }

    fn log_det(&self, draw: &[f64]) -> f64 {
        self.blocks(draw)
            .iter()
            .map(|m| spd_log_det(m).unwrap_or(f64::NEG_INFINITY))
            .sum()
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / m;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, if mean.is_finite() { 0.0 } else { f64::NAN });
    }
    let ss = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .value();
    (mean, (ss / (m - 1.0) / m).sqrt())
}

fn check_draws(config: &ModelConfig, design: &Design, draws: &[Vec<f64>]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::invalid("robust criterion needs at least one prior draw"));
    }
    for d in draws {
        check_draw(config, design, d)?;
    }
    Ok(())
}

/// Per-draw log-determinants, in draw order.
pub fn log_det_per_draw(
    design: &Design,
    config: &ModelConfig,
    draws: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_draws(config, design, draws)?;
    let prepared = Prepared::new(config, design)?;
    Ok(draws.iter().map(|d| prepared.log_det(d)).collect())
}

/// Monte Carlo average of `log |I(theta_m)|` over the draws.
pub fn robust_log_d(
    design: &Design,
    config: &ModelConfig,
    draws: &[Vec<f64>],
) -> Result<CriterionValue> {
    let values = log_det_per_draw(design, config, draws)?;
    if values.iter().any(|v| *v == f64::NEG_INFINITY) {
        return Ok(CriterionValue {
            value: f64::NEG_INFINITY,
            m: values.len(),
            std_error: Some(f64::NAN),
        });
    }
    let (value, se) = mean_and_se(&values);
    Ok(CriterionValue {
        value,
        m: values.len(),
        std_error: Some(se),
    })
}

/// `|det|^{1/d}` of a symmetric matrix, zero when singular.
pub fn root_det(m: &DMatrix<f64>) -> f64 {
    let d = m.nrows() as f64;
    spd_log_det(m).map_or(0.0, |ld| (ld / d).exp())
}

/// Mean of `|I_m|^{1/d}` over a list of information matrices.
pub fn mean_root_det(infos: &[DMatrix<f64>]) -> CriterionValue {
    let roots: Vec<f64> = infos.iter().map(root_det).collect();
    let (value, se) = mean_and_se(&roots);
    CriterionValue {
        value,
        m: roots.len(),
        std_error: Some(se),
    }
}

fn root_per_draw(design: &Design, config: &ModelConfig, draws: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = config.n_params(design.dim()) as f64;
    Ok(log_det_per_draw(design, config, draws)?
        .into_iter()
        .map(|ld| if ld == f64::NEG_INFINITY { 0.0 } else { (ld / d).exp() })
        .collect())
}

/// Monte Carlo average of the d-th root of the information determinant.
pub fn j_functional(
    design: &Design,
    config: &ModelConfig,
    draws: &[Vec<f64>],
) -> Result<CriterionValue> {
    let roots = root_per_draw(design, config, draws)?;
    let (value, se) = mean_and_se(&roots);
    Ok(CriterionValue {
        value,
        m: roots.len(),
        std_error: Some(se),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub value: f64,
    /// Delta-method standard error of the ratio over paired draws.
    pub std_error: f64,
}

/// `J(design_assumed, R_true) / J(design_true, R_true)` on one shared draw set.
pub fn misspec_efficiency(
    design_assumed: &Design,
    design_true: &Design,
    config_true: &ModelConfig,
    draws: &[Vec<f64>],
) -> Result<Efficiency> {
    let num = root_per_draw(design_assumed, config_true, draws)?;
    let den = root_per_draw(design_true, config_true, draws)?;
    let m = draws.len() as f64;
    let num_mean = num.iter().copied().collect::<CompensatedSum>().value() / m;
    let den_mean = den.iter().copied().collect::<CompensatedSum>().value() / m;
    if den_mean <= 0.0 {
        return Err(Error::DegenerateReference);
    }
    if num == den {
        return Ok(Efficiency {
            value: 1.0,
            std_error: 0.0,
        });
    }
    let ratio = num_mean / den_mean;
    let std_error = if draws.len() > 1 {
        let resid: Vec<f64> = num.iter().zip(&den).map(|(a, b)| a - ratio * b).collect();
        let ss = resid.iter().map(|r| r * r).collect::<CompensatedSum>().value();
        (ss / (m - 1.0) / m).sqrt() / den_mean
    } else {
        0.0
    };
    Ok(Efficiency {
        value: ratio,
        std_error,
    })
}

fn ftf_log_det(f: &DMatrix<f64>) -> Option<f64> {
    if f.nrows() < f.ncols() {
        return None;
    }
    spd_log_det(&(f.transpose() * f))
}

/// Per-node `log |F^T V F|`, nodes given as `(rho_minus, rho_plus)`; direct dense route.
pub fn prn_log_det_terms(
    design: &Design,
    assignment: &PrnAssignment,
    basis: &BasisSpec,
    nodes: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let f = model_matrix(design, basis)?;
    if assignment.len() != design.len() {
        return Err(Error::DimensionMismatch {
            context: "PRN assignment",
            expected: design.len(),
            found: assignment.len(),
        });
    }
    nodes
        .iter()
        .map(|node| {
            let (rho_minus, rho_plus) = node_pair(node)?;
            let spec = PrnCorrelationSpec::new(rho_plus, rho_minus, 1.0)?;
            let v = prn_covariance(assignment, &spec);
            Ok(log_abs_det(&(f.transpose() * v * &f)))
        })
        .collect()
}

fn node_pair(node: &[f64]) -> Result<(f64, f64)> {
    match node {
        [rm, rp] => Ok((*rm, *rp)),
        _ => Err(Error::DimensionMismatch {
            context: "PRN quadrature node (rho_minus, rho_plus)",
            expected: 2,
            found: node.len(),
        }),
    }
}

/// `sum_m w_m log |F^T V_m F| - 2 log |F^T F|`, to be minimized.
/// Rank-deficient `F` gives `+inf`.
pub fn prn_quadrature_criterion(
    design: &Design,
    assignment: &PrnAssignment,
    basis: &BasisSpec,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let f = model_matrix(design, basis)?;
    let Some(ld_ftf) = ftf_log_det(&f) else {
        return Ok(f64::INFINITY);
    };
    let terms = prn_log_det_terms(design, assignment, basis, &grid.nodes)?;
    let sum: CompensatedSum = terms.iter().zip(&grid.weights).map(|(t, w)| t * w).collect();
    Ok(sum.value() - 2.0 * ld_ftf)
}

/// `log |Var(beta_hat)|` of the OLS sandwich, including the `sigma2^d` factor.
pub fn var_log_det(
    design: &Design,
    basis: &BasisSpec,
    v: &DMatrix<f64>,
    sigma2: f64,
) -> Result<f64> {
    let n = design.len();
    if v.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "var_log_det V",
            expected: n,
            found: v.nrows(),
        });
    }
    let f = model_matrix(design, basis)?;
    let ld_ftf =
        ftf_log_det(&f).ok_or_else(|| Error::Singular("F^T F is singular".into()))?;
    let d = basis.len() as f64;
    Ok(d * sigma2.ln() + log_abs_det(&(f.transpose() * v * &f)) - 2.0 * ld_ftf)
}

/// Fast evaluator of the PRN criterion for one design across many assignments.
///
/// Uses `F^T V F = (1 - rho_plus) A + S C S^T` with `A = F^T F` and `S = F^T Z`,
/// so each node costs one `2g x 2g` determinant:
/// `|F^T V F| = (1 - rho_plus)^d |A| |I + C S^T A^{-1} S / (1 - rho_plus)|`.
pub struct PrnEvaluator<'a> {
    rows: Vec<Vec<f64>>,
    a_inv: DMatrix<f64>,
    ld_a: f64,
    d: usize,
    grid: &'a QuadratureGrid,
    ftf: DMatrix<f64>,
}

impl<'a> PrnEvaluator<'a> {
    /// `None` when `F^T F` is singular (the criterion is `+inf` for every assignment).
    pub fn new(design: &Design, basis: &BasisSpec, grid: &'a QuadratureGrid) -> Option<Self> {
        let f = model_matrix_unchecked(design, basis);
        let ftf = f.transpose() * &f;
        let chol = cholesky(&ftf)?;
        let ld_a = spd_log_det(&ftf)?;
        let a_inv = chol.inverse();
        let rows = f.row_iter().map(|r| r.iter().copied().collect()).collect();
        Some(Self {
            rows,
            a_inv,
            ld_a,
            d: basis.len(),
            grid,
            ftf,
        })
    }

    pub fn log_det_ftf(&self) -> f64 {
        self.ld_a
    }

    /// Criterion value for assignment `k` (streams `1..=2g`).
    pub fn evaluate(&self, k: &[usize], g: usize) -> f64 {
        let h = 2 * g;
        let d = self.d;
        let mut s = DMatrix::<f64>::zeros(d, h);
        for (row, &stream) in self.rows.iter().zip(k) {
            for (j, &v) in row.iter().enumerate() {
                s[(j, stream - 1)] += v;
            }
        }
        let gmat = s.transpose() * &self.a_inv * &s;
        let mut total = CompensatedSum::default();
        let mut mmat = DMatrix::<f64>::zeros(h, h);
        for (node, &w) in self.grid.nodes.iter().zip(&self.grid.weights) {
            let (rho_minus, rho_plus) = (node[0], node[1]);
            let a = 1.0 - rho_plus;
            let term = if a > 1e-12 {
                // Row i of C G is rho_plus G_i - rho_minus G_{pair(i)}.
                for i in 0..h {
                    let pair = if i < g { i + g } else { i - g };
                    for j in 0..h {
                        let cg = rho_plus * gmat[(i, j)] - rho_minus * gmat[(pair, j)];
                        mmat[(i, j)] = cg / a + if i == j { 1.0 } else { 0.0 };
                    }
                }
                d as f64 * a.ln() + self.ld_a + log_abs_det_small(&mmat)
            } else {
                let c = stream_block_matrix(g, rho_plus, rho_minus);
                log_abs_det(&(&self.ftf * a + &s * c * s.transpose()))
            };
            total.add(w * term);
        }
        total.value() - 2.0 * self.ld_a
    }
}

fn log_abs_det_small(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)].abs().ln(),
        2 => (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).abs().ln(),
        _ => log_abs_det(m),
    }
}
