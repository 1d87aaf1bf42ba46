//! How much D-efficiency is lost when a logistic meta-model design is built
//! for the wrong error correlation structure.
//!
//! For each correlation strength, one robust design is optimized per assumed
//! structure; every design is then scored under every true structure. Each
//! entry is `J(design_assumed; R_true) / J(design_true; R_true)` on a shared
//! set of prior draws.
//!
//! A reduced version of the study (two factors, few draws) so it finishes in
//! about a minute: `cargo run --release --example gee_misspecification`.

use robust_design::optimize::AnnealingSchedule;
use robust_design::studies::{run_efficiency_grid, AnnealSettings, EfficiencyGridSpec};
use robust_design::{BasisSpec, Bound, KernelKind, LinkSpec, PriorSpec};

fn main() -> robust_design::Result<()> {
    let basis = BasisSpec::main_effects_pairwise(2)?;
    let spec = EfficiencyGridSpec {
        prior: PriorSpec::uniform_box(basis.len(), -1.0, 1.0),
        basis,
        link: LinkSpec::Logit,
        structures: vec![
            KernelKind::Constant,
            KernelKind::AutoRegressive,
            KernelKind::DistanceKernel,
        ],
        rhos: vec![0.2, 0.8],
        sigma2: 1.0,
        m_opt: 50,
        m_eval: 1000,
        anneal: AnnealSettings {
            n: Some(12),
            bounds: vec![Bound::UNIT; 2],
            schedule: Some(AnnealingSchedule {
                initial_temp: 0.5,
                min_temp: 1e-3,
                cooling_factor: 0.9,
                ..AnnealingSchedule::default()
            }),
            restarts: 2,
        },
    };
    let table = run_efficiency_grid(&spec, 42, None)?;
    let mut kinds = vec![KernelKind::Independent];
    kinds.extend(&spec.structures);
    for &rho in &spec.rhos {
        println!("rho = {rho}: rows assumed, columns true");
        print!("{:>16}", "");
        for t in &kinds {
            print!("{:>16}", t.name());
        }
        println!();
        for &a in &kinds {
            print!("{:>16}", a.name());
            for &t in &kinds {
                let row = table.get(a, t, rho).expect("full matrix");
                print!("{:>9.3} ±{:.3}", row.efficiency, row.std_error);
            }
            println!();
        }
    }
    Ok(())
}
