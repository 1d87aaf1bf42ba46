//! Averages the PRN criterion of a fixed design over the unknown block
//! correlations `(rho_minus, rho_plus) ~ U[0,1]^2` two ways: tensor
//! Gauss-Legendre rules of increasing size, and plain Monte Carlo.
//!
//! Run with `cargo run --release --example quadrature_vs_monte_carlo`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_design::criteria::{prn_log_det_terms, prn_quadrature_criterion};
use robust_design::priors::gauss_legendre_grid;
use robust_design::{BasisSpec, Design, PrnAssignment, PrnEvaluator};

fn main() -> robust_design::Result<()> {
    let basis = BasisSpec::full_quadratic(2)?;
    let design = Design::uniform(vec![
        vec![-1.0, -1.0],
        vec![-1.0, 1.0],
        vec![1.0, -1.0],
        vec![1.0, 1.0],
        vec![-1.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, -1.0],
        vec![0.0, 1.0],
        vec![0.0, 0.0],
        vec![1.0, 1.0],
    ])?;
    let assignment = PrnAssignment::new(1, vec![1, 1, 1, 1, 2, 2, 2, 2, 1, 1])?;

    for m in [2, 4, 8, 12, 16, 24] {
        let grid = gauss_legendre_grid(m, &[[0.0, 1.0], [0.0, 1.0]])?;
        let v = prn_quadrature_criterion(&design, &assignment, &basis, &grid)?;
        println!("Gauss-Legendre {m:>2} x {m:<2}  {v:.6}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 10_000;
    let nodes: Vec<Vec<f64>> = (0..draws)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let terms = prn_log_det_terms(&design, &assignment, &basis, &nodes)?;
    let mean = terms.iter().sum::<f64>() / draws as f64;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
    let grid = gauss_legendre_grid(1, &[[0.0, 1.0], [0.0, 1.0]])?;
    let ld_ftf = PrnEvaluator::new(&design, &basis, &grid)
        .expect("full rank design")
        .log_det_ftf();
    println!(
        "Monte Carlo {draws}      {:.6}  (se {:.6})",
        mean - 2.0 * ld_ftf,
        (var / draws as f64).sqrt()
    );
    Ok(())
}
