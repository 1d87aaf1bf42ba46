//! Designs, regression bases, links and the heteroscedastic variance function.
//!
//! A [`Design`] is an ordered list of weighted points. Order matters: the
//! auto-regressive kernel and PRN stream assignments index points by position.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the weight sum of a normalized design.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub coords: Vec<f64>,
    pub weight: f64,
}

impl DesignPoint {
    pub fn new(coords: Vec<f64>, weight: f64) -> Self {
        Self { coords, weight }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Closed interval for one design coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const UNIT: Bound = Bound { lo: -1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bound [{lo}, {hi}] must satisfy lo < hi")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignRepr")]
pub struct Design {
    points: Vec<DesignPoint>,
    bounds: Vec<Bound>,
}

#[derive(Deserialize)]
struct DesignRepr {
    points: Vec<DesignPoint>,
    bounds: Vec<Bound>,
}

impl TryFrom<DesignRepr> for Design {
    type Error = Error;

    fn try_from(r: DesignRepr) -> Result<Self> {
        Design::new(r.points, r.bounds)
    }
}

impl Design {
    /// Builds a design whose weights must already sum to one.
    pub fn new(points: Vec<DesignPoint>, bounds: Vec<Bound>) -> Result<Self> {
        let design = Self { points, bounds };
        design.validate()?;
        Ok(design)
    }

    /// Builds a design after rescaling the weights to sum to one.
    pub fn normalized(mut points: Vec<DesignPoint>, bounds: Vec<Bound>) -> Result<Self> {
        let total: f64 = points.iter().map(|p| p.weight).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("design weights must have a positive finite sum"));
        }
        for p in &mut points {
            p.weight /= total;
        }
        Self::new(points, bounds)
    }

    /// Equal-weight design over `coords` in the default `[-1, 1]^q` box.
    pub fn uniform(coords: Vec<Vec<f64>>) -> Result<Self> {
        let q = coords.first().map_or(0, Vec::len);
        Self::uniform_in(coords, vec![Bound::UNIT; q])
    }

    pub fn uniform_in(coords: Vec<Vec<f64>>, bounds: Vec<Bound>) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::invalid("design must contain at least one point"));
        }
        let w = 1.0 / n as f64;
        let points = coords.into_iter().map(|c| DesignPoint::new(c, w)).collect();
        Self::normalized(points, bounds)
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.points.first() else {
            return Err(Error::invalid("design must contain at least one point"));
        };
        let q = first.dim();
        if q == 0 {
            return Err(Error::invalid("design points must have at least one coordinate"));
        }
        if self.bounds.len() != q {
            return Err(Error::DimensionMismatch {
                context: "design bounds",
                expected: q,
                found: self.bounds.len(),
            });
        }
        let mut total = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            if p.dim() != q {
                return Err(Error::DimensionMismatch {
                    context: "design point",
                    expected: q,
                    found: p.dim(),
                });
            }
            if !(p.weight >= 0.0 && p.weight.is_finite()) {
                return Err(Error::invalid(format!("point {i} has invalid weight {}", p.weight)));
            }
            for (j, (&x, b)) in p.coords.iter().zip(&self.bounds).enumerate() {
                if !b.contains(x) {
                    return Err(Error::invalid(format!(
                        "point {i} coordinate {j} = {x} outside [{}, {}]",
                        b.lo, b.hi
                    )));
                }
            }
            total += p.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("design weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.weight).collect()
    }

    pub fn coords(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.coords.as_slice())
    }

    /// Copy of the design with the points reordered by `perm` (new i = old `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "permutation",
                expected: self.len(),
                found: perm.len(),
            });
        }
        let points = perm.iter().map(|&i| self.points[i].clone()).collect();
        Self::new(points, self.bounds.clone())
    }

    /// Coordinates with the given point replaced, weights untouched. No validation.
    pub(crate) fn set_coord_unchecked(&mut self, point: usize, coord: usize, value: f64) {
        self.points[point].coords[coord] = value;
    }

    pub(crate) fn from_parts_unchecked(points: Vec<DesignPoint>, bounds: Vec<Bound>) -> Self {
        Self { points, bounds }
    }
}

/// Regression terms as monomial exponent vectors.
///
/// Deserializes from either `{ q, terms }` or `{ q, preset }` with preset one of
/// `linear`, `main_effects_pairwise`, `full_quadratic`; always serializes the terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr")]
pub struct BasisSpec {
    q: usize,
    terms: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisPreset {
    Linear,
    MainEffectsPairwise,
    FullQuadratic,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BasisRepr {
    Terms { q: usize, terms: Vec<Vec<u32>> },
    Preset { q: usize, preset: BasisPreset },
}

impl TryFrom<BasisRepr> for BasisSpec {
    type Error = Error;

    fn try_from(r: BasisRepr) -> Result<Self> {
        match r {
            BasisRepr::Terms { q, terms } => BasisSpec::from_terms(q, terms),
            BasisRepr::Preset { q, preset } => BasisSpec::preset(q, preset),
        }
    }
}

impl BasisSpec {
    pub fn from_terms(q: usize, terms: Vec<Vec<u32>>) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("basis input dimension must be positive"));
        }
        if terms.is_empty() {
            return Err(Error::invalid("basis must contain at least one term"));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.len() != q {
                return Err(Error::DimensionMismatch {
                    context: "basis term",
                    expected: q,
                    found: t.len(),
                });
            }
            if terms[..i].contains(t) {
                return Err(Error::invalid(format!("duplicate basis term {t:?}")));
            }
        }
        Ok(Self { q, terms })
    }

    /// `[1, x1, ..., xq]`.
    pub fn linear(q: usize) -> Result<Self> {
        let mut terms = vec![vec![0; q]];
        terms.extend((0..q).map(|i| unit(q, i, 1)));
        Self::from_terms(q, terms)
    }

    /// Intercept, main effects and all pairwise interactions `x_i x_j`, `i < j`.
    pub fn main_effects_pairwise(q: usize) -> Result<Self> {
        let mut terms = vec![vec![0; q]];
        terms.extend((0..q).map(|i| unit(q, i, 1)));
        terms.extend(pairs(q));
        Self::from_terms(q, terms)
    }

    /// Full second order polynomial: intercept, main effects, interactions, squares.
    pub fn full_quadratic(q: usize) -> Result<Self> {
        let mut terms = vec![vec![0; q]];
        terms.extend((0..q).map(|i| unit(q, i, 1)));
        terms.extend(pairs(q));
        terms.extend((0..q).map(|i| unit(q, i, 2)));
        Self::from_terms(q, terms)
    }

    pub fn preset(q: usize, preset: BasisPreset) -> Result<Self> {
        match preset {
            BasisPreset::Linear => Self::linear(q),
            BasisPreset::MainEffectsPairwise => Self::main_effects_pairwise(q),
            BasisPreset::FullQuadratic => Self::full_quadratic(q),
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of terms, `d`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Vec<u32>] {
        &self.terms
    }

    pub fn expand(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.q {
            return Err(Error::DimensionMismatch {
                context: "expand_basis",
                expected: self.q,
                found: coords.len(),
            });
        }
        let mut out = vec![0.0; self.len()];
        self.expand_into(coords, &mut out);
        Ok(out)
    }

    /// Unchecked hot-path variant of [`BasisSpec::expand`].
    pub(crate) fn expand_into(&self, coords: &[f64], out: &mut [f64]) {
        for (o, term) in out.iter_mut().zip(&self.terms) {
            *o = term
                .iter()
                .zip(coords)
                .filter(|(&e, _)| e > 0)
                .map(|(&e, &x)| x.powi(e as i32))
                .product();
        }
    }
}

fn unit(q: usize, i: usize, power: u32) -> Vec<u32> {
    let mut t = vec![0; q];
    t[i] = power;
    t
}

fn pairs(q: usize) -> impl Iterator<Item = Vec<u32>> {
    (0..q).flat_map(move |i| {
        (i + 1..q).map(move |j| {
            let mut t = vec![0; q];
            t[i] = 1;
            t[j] = 1;
            t
        })
    })
}

pub fn expand_basis(point: &DesignPoint, basis: &BasisSpec) -> Result<Vec<f64>> {
    basis.expand(&point.coords)
}

/// The `n x d` matrix whose rows are the basis expansions of the design points.
pub fn model_matrix(design: &Design, basis: &BasisSpec) -> Result<DMatrix<f64>> {
    if design.dim() != basis.q() {
        return Err(Error::DimensionMismatch {
            context: "model_matrix",
            expected: basis.q(),
            found: design.dim(),
        });
    }
    Ok(model_matrix_unchecked(design, basis))
}

pub(crate) fn model_matrix_unchecked(design: &Design, basis: &BasisSpec) -> DMatrix<f64> {
    let (n, d) = (design.len(), basis.len());
    let mut f = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for (i, p) in design.points().iter().enumerate() {
        basis.expand_into(&p.coords, &mut row);
        for (j, &v) in row.iter().enumerate() {
            f[(i, j)] = v;
        }
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkSpec {
    Identity,
    Logit,
}

impl LinkSpec {
    /// Inverse link applied to a linear predictor.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            LinkSpec::Identity => eta,
            LinkSpec::Logit => logistic(eta),
        }
    }
}

/// `exp(eta) / (1 + exp(eta))` without overflow for large `|eta|`.
pub fn logistic(eta: f64) -> f64 {
    let e = (-eta.abs()).exp();
    if eta >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

pub fn mean_response(
    point: &DesignPoint,
    basis: &BasisSpec,
    beta: &[f64],
    link: LinkSpec,
) -> Result<f64> {
    if beta.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            context: "mean_response beta",
            expected: basis.len(),
            found: beta.len(),
        });
    }
    let f = basis.expand(&point.coords)?;
    let eta: f64 = f.iter().zip(beta).map(|(a, b)| a * b).sum();
    Ok(link.mean(eta))
}

/// Log-variance model `v(x) = exp(s (1 + 2 s))`, `s = x . alpha`, with scale `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceModel {
    pub alpha: Vec<f64>,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
}

pub(crate) fn default_sigma2() -> f64 {
    1.0
}

impl VarianceModel {
    pub fn new(alpha: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(Self { alpha, sigma2 })
    }

    pub(crate) fn exponent(&self, coords: &[f64]) -> f64 {
        let s: f64 = coords.iter().zip(&self.alpha).map(|(x, a)| x * a).sum();
        s * (1.0 + 2.0 * s)
    }

    pub(crate) fn check_dim(&self, q: usize) -> Result<()> {
        if self.alpha.len() != q {
            return Err(Error::DimensionMismatch {
                context: "variance model alpha",
                expected: q,
                found: self.alpha.len(),
            });
        }
        Ok(())
    }
}

/// `v(x)`; the `sigma2` factor is applied by the information routines.
pub fn variance_function(point: &DesignPoint, vm: &VarianceModel) -> Result<f64> {
    vm.check_dim(point.dim())?;
    Ok(vm.exponent(&point.coords).exp())
}
