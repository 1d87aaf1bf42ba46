//! Compares three ways of running a 10-run simulation experiment for a full
//! quadratic meta-model in two factors when two pseudo-random number streams
//! (a base stream and its antithesis) are available:
//!
//! * independent streams everywhere (classical D-optimal design),
//! * one common stream for every run,
//! * design and stream assignment optimized together.
//!
//! The block correlations `(rho_minus, rho_plus)` are unknown and averaged
//! with an 8 x 8 Gauss-Legendre rule over the unit square.
//!
//! Run with `cargo run --release --example prn_joint_optimization`.

use robust_design::optimize::{GridSpec, PrnMode, DEFAULT_ASSIGNMENT_BUDGET};
use robust_design::studies::{prn_comparison, PrnStudySpec};
use robust_design::BasisSpec;

fn main() -> robust_design::Result<()> {
    let spec = PrnStudySpec {
        basis: BasisSpec::full_quadratic(2)?,
        grid: GridSpec::uniform(2, -1.0, 1.0, 21)?,
        quad_nodes: 8,
        n: 10,
        g: 1,
        max_passes: 50,
        restarts: 3,
        budget: DEFAULT_ASSIGNMENT_BUDGET,
    };
    let start = std::time::Instant::now();
    let results = prn_comparison(&spec, &PrnMode::ALL, 2024)?;
    for r in &results {
        println!("== {} ==", r.mode.name());
        println!("log|Var|            {:8.3}", r.log_var);
        println!("after best reassign {:8.3}", r.reassigned_log_var);
        for (p, k) in r.design.points().iter().zip(r.reassigned.streams()) {
            println!("  ({:5.2}, {:5.2})  stream {k}", p.coords[0], p.coords[1]);
        }
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
