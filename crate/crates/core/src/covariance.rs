//! Correlation kernels over a design and the PRN block-effect covariance.
//!
//! Streams are labelled `1..=2g`; stream `j + g` is the antithesis of stream `j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_sigma2, Design};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Independent,
    Constant,
    AutoRegressive,
    DistanceKernel,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Independent,
        KernelKind::Constant,
        KernelKind::AutoRegressive,
        KernelKind::DistanceKernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Independent => "independent",
            KernelKind::Constant => "constant",
            KernelKind::AutoRegressive => "auto_regressive",
            KernelKind::DistanceKernel => "distance_kernel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default)]
    pub rho: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("kernel sigma2 must be positive, got {sigma2}")));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!("kernel rho must lie in [0, 1], got {rho}")));
        }
        Ok(Self { kind, sigma2, rho })
    }

    pub fn independent() -> Self {
        Self {
            kind: KernelKind::Independent,
            sigma2: 1.0,
            rho: 0.0,
        }
    }

    /// True when the matrix depends only on the number of points, not their location.
    pub fn is_location_free(&self) -> bool {
        !matches!(self.kind, KernelKind::DistanceKernel)
    }
}

pub fn build_correlation(design: &Design, spec: &KernelSpec) -> DMatrix<f64> {
    let n = design.len();
    let points = design.points();
    let s2 = spec.sigma2;
    let rho = spec.rho;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return s2;
        }
        match spec.kind {
            KernelKind::Independent => 0.0,
            KernelKind::Constant => s2 * rho,
            KernelKind::AutoRegressive => s2 * rho.powi(i.abs_diff(j) as i32),
            KernelKind::DistanceKernel => {
                let dist2: f64 = points[i]
                    .coords
                    .iter()
                    .zip(&points[j].coords)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                s2 * rho * (-dist2 / 4.0).exp()
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrnAssignment {
    g: usize,
    k: Vec<usize>,
}

impl PrnAssignment {
    pub fn new(g: usize, k: Vec<usize>) -> Result<Self> {
        if g == 0 {
            return Err(Error::invalid("number of base streams g must be positive"));
        }
        if let Some(&bad) = k.iter().find(|&&s| s == 0 || s > 2 * g) {
            return Err(Error::invalid(format!("stream {bad} outside 1..={}", 2 * g)));
        }
        Ok(Self { g, k })
    }

    /// Every point on stream 1 (common random numbers).
    pub fn common(n: usize, g: usize) -> Result<Self> {
        Self::new(g, vec![1; n])
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn streams(&self) -> &[usize] {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Applies a permutation of the base streams (antitheses follow their base
    /// stream) and optionally swaps individual streams with their antithesis.
    pub fn relabeled(&self, base_perm: &[usize], flip: &[bool]) -> Result<Self> {
        let g = self.g;
        if base_perm.len() != g || flip.len() != g {
            return Err(Error::DimensionMismatch {
                context: "stream relabeling",
                expected: g,
                found: base_perm.len().min(flip.len()),
            });
        }
        let k = self
            .k
            .iter()
            .map(|&s| {
                let (base, anti) = if s > g { (s - g - 1, true) } else { (s - 1, false) };
                let anti = anti ^ flip[base];
                base_perm[base] + 1 + if anti { g } else { 0 }
            })
            .collect();
        Self::new(g, k)
    }
}

/// Correlations induced by sharing a stream (`rho_plus`) or using its antithesis (`rho_minus`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrnCorrelationSpec {
    pub rho_plus: f64,
    pub rho_minus: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
}

impl PrnCorrelationSpec {
    pub fn new(rho_plus: f64, rho_minus: f64, sigma2: f64) -> Result<Self> {
        for (name, v) in [("rho_plus", rho_plus), ("rho_minus", rho_minus)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self {
            rho_plus,
            rho_minus,
            sigma2,
        })
    }
}

/// `Z[i][h] = 1` iff point `i` uses stream `h + 1`.
pub fn assignment_matrix(a: &PrnAssignment, n: usize) -> Result<DMatrix<f64>> {
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            context: "assignment_matrix",
            expected: n,
            found: a.len(),
        });
    }
    let mut z = DMatrix::zeros(n, 2 * a.g());
    for (i, &s) in a.streams().iter().enumerate() {
        z[(i, s - 1)] = 1.0;
    }
    Ok(z)
}

/// Correlation-scale block matrix between streams: `rho_plus` on the diagonal,
/// `-rho_minus` between a stream and its antithesis.
pub fn stream_block_matrix(g: usize, rho_plus: f64, rho_minus: f64) -> DMatrix<f64> {
    DMatrix::from_fn(2 * g, 2 * g, |a, b| {
        if a == b {
            rho_plus
        } else if a.abs_diff(b) == g {
            -rho_minus
        } else {
            0.0
        }
    })
}

/// `V = (1 - rho_plus) I + Z C Z^T`; unit diagonal, `sigma2` is not applied here.
pub fn prn_covariance(a: &PrnAssignment, spec: &PrnCorrelationSpec) -> DMatrix<f64> {
    let n = a.len();
    let g = a.g();
    let k = a.streams();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if k[i] == k[j] {
            spec.rho_plus
        } else if k[i].abs_diff(k[j]) == g {
            -spec.rho_minus
        } else {
            0.0
        }
    })
}
