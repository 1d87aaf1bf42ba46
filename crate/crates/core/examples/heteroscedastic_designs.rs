//! Weighted designs for the variance parameters of a heteroscedastic normal
//! meta-model in two factors, `Var(Y) = sigma^2 exp(s (1 + 2 s))` with
//! `s = x . alpha`.
//!
//! Prints the locally optimal design for each of five variance directions and
//! the robust design that averages over all five.
//!
//! Run with `cargo run --release --example heteroscedastic_designs`.

use robust_design::criteria::ModelConfig;
use robust_design::studies::{optimize_robust, AnnealSettings};
use robust_design::{Design, PriorSpec};

fn show(label: &str, design: &Design, criterion: f64) {
    println!("== {label}  (criterion {criterion:.4}) ==");
    let mut points: Vec<_> = design.points().iter().collect();
    points.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    for p in points {
        println!("  ({:6.3}, {:6.3})  w = {:.3}", p.coords[0], p.coords[1], p.weight);
    }
}

fn main() -> robust_design::Result<()> {
    let model = ModelConfig::HeteroAlpha;
    let settings = AnnealSettings::unit_box(2);
    let PriorSpec::DiscreteAtoms { atoms } = PriorSpec::five_direction_alpha() else {
        unreachable!()
    };
    let start = std::time::Instant::now();
    for (i, atom) in atoms.iter().enumerate() {
        let draws = vec![atom.value.clone()];
        let res = optimize_robust(&model, &draws, &settings, 100 + i as u64)?;
        show(&format!("local, alpha = {:?}", atom.value), &res.design, res.criterion);
    }
    let draws: Vec<Vec<f64>> = atoms.iter().map(|a| a.value.clone()).collect();
    let res = optimize_robust(&model, &draws, &settings, 7)?;
    show("robust over all five directions", &res.design, res.criterion);
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
