//! Prior distributions over unknown parameters, Monte Carlo draws and
//! tensor-product Gauss-Legendre grids.

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    DiscreteAtoms { atoms: Vec<Atom> },
    /// Independent uniform coordinates, one `[lo, hi]` per dimension.
    ProductUniform { bounds: Vec<[f64; 2]> },
    /// Independent normal coordinates.
    ProductNormal { mean: Vec<f64>, sd: Vec<f64> },
}

impl PriorSpec {
    pub fn single(value: Vec<f64>) -> Self {
        PriorSpec::DiscreteAtoms {
            atoms: vec![Atom { value, mass: 1.0 }],
        }
    }

    /// Equal mass on each value.
    pub fn equal_atoms(values: Vec<Vec<f64>>) -> Self {
        let mass = 1.0 / values.len() as f64;
        PriorSpec::DiscreteAtoms {
            atoms: values.into_iter().map(|value| Atom { value, mass }).collect(),
        }
    }

    /// Five equally weighted variance-direction atoms for a two factor problem,
    /// sweeping from `[1, 0]` to `[0, 1]`.
    pub fn five_direction_alpha() -> Self {
        Self::equal_atoms(vec![
            vec![1.0, 0.0],
            vec![0.75, 0.25],
            vec![0.5, 0.5],
            vec![0.25, 0.75],
            vec![0.0, 1.0],
        ])
    }

    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Self {
        PriorSpec::ProductUniform {
            bounds: vec![[lo, hi]; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::DiscreteAtoms { atoms } => atoms.first().map_or(0, |a| a.value.len()),
            PriorSpec::ProductUniform { bounds } => bounds.len(),
            PriorSpec::ProductNormal { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::DiscreteAtoms { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::invalid("discrete prior needs at least one atom"));
                }
                let dim = atoms[0].value.len();
                let mut total = 0.0;
                for a in atoms {
                    if a.value.len() != dim {
                        return Err(Error::DimensionMismatch {
                            context: "prior atom",
                            expected: dim,
                            found: a.value.len(),
                        });
                    }
                    if !(a.mass > 0.0 && a.mass.is_finite()) {
                        return Err(Error::invalid(format!("atom mass {} must be positive", a.mass)));
                    }
                    total += a.mass;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("atom masses sum to {total}, expected 1")));
                }
            }
            PriorSpec::ProductUniform { bounds } => {
                if bounds.is_empty() {
                    return Err(Error::invalid("uniform prior needs at least one dimension"));
                }
                for &[lo, hi] in bounds {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::invalid(format!("uniform bounds [{lo}, {hi}] need lo < hi")));
                    }
                }
            }
            PriorSpec::ProductNormal { mean, sd } => {
                if mean.is_empty() || mean.len() != sd.len() {
                    return Err(Error::invalid("normal prior needs matching nonempty mean and sd"));
                }
                if sd.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(Error::invalid("normal prior sd must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// `m` draws from `spec`, bit-reproducible for a given `seed`.
pub fn sample_prior(spec: &PriorSpec, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::invalid("number of prior draws must be at least 1"));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = match spec {
        PriorSpec::DiscreteAtoms { atoms } => {
            let index = WeightedIndex::new(atoms.iter().map(|a| a.mass))
                .map_err(|e| Error::invalid(format!("atom masses: {e}")))?;
            (0..m)
                .map(|_| atoms[index.sample(&mut rng)].value.clone())
                .collect()
        }
        PriorSpec::ProductUniform { bounds } => {
            let dists: Vec<Uniform<f64>> = bounds
                .iter()
                .map(|&[lo, hi]| Uniform::new(lo, hi).expect("validated bounds"))
                .collect();
            (0..m)
                .map(|_| dists.iter().map(|u| u.sample(&mut rng)).collect())
                .collect()
        }
        PriorSpec::ProductNormal { mean, sd } => {
            let dists: Vec<Normal<f64>> = mean
                .iter()
                .zip(sd)
                .map(|(&mu, &s)| Normal::new(mu, s).expect("validated sd"))
                .collect();
            (0..m)
                .map(|_| dists.iter().map(|n| n.sample(&mut rng)).collect())
                .collect()
        }
    };
    Ok(draws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Rescales weights to sum to one, so the rule averages under a uniform density.
    pub fn normalized(mut self) -> Self {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        self
    }
}

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre_1d(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::invalid("Gauss-Legendre rule needs at least one node"));
    }
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Ok((nodes, weights))
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if m == 1 {
        return (x, 1.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product Gauss-Legendre grid over a box; the last dimension varies fastest.
pub fn gauss_legendre_grid(nodes_per_dim: usize, bounds: &[[f64; 2]]) -> Result<QuadratureGrid> {
    if bounds.is_empty() {
        return Err(Error::invalid("quadrature grid needs at least one dimension"));
    }
    for &[lo, hi] in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("quadrature bounds [{lo}, {hi}] need lo < hi")));
        }
    }
    let (x, w) = gauss_legendre_1d(nodes_per_dim)?;
    let mut nodes = vec![Vec::with_capacity(bounds.len())];
    let mut weights = vec![1.0];
    for &[lo, hi] in bounds {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut next_nodes = Vec::with_capacity(nodes.len() * nodes_per_dim);
        let mut next_weights = Vec::with_capacity(nodes.len() * nodes_per_dim);
        for (node, &wt) in nodes.iter().zip(&weights) {
            for (&xi, &wi) in x.iter().zip(&w) {
                let mut n = node.clone();
                n.push(mid + half * xi);
                next_nodes.push(n);
                next_weights.push(wt * wi * half);
            }
        }
        nodes = next_nodes;
        weights = next_weights;
    }
    Ok(QuadratureGrid { nodes, weights })
}
