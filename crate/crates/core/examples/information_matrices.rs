//! Information matrices for one small design under each model family, with
//! their log-determinants.
//!
//! Run with `cargo run --example information_matrices`.

use robust_design::covariance::build_correlation;
use robust_design::fisher::{info_gee, info_glm_weighted, info_hetero_alpha, info_hetero_beta};
use robust_design::{BasisSpec, Design, KernelKind, KernelSpec, LinkSpec, VarianceModel};

fn main() -> robust_design::Result<()> {
    let design = Design::uniform(vec![
        vec![-1.0, -1.0],
        vec![1.0, -1.0],
        vec![-1.0, 1.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
    ])?;
    let basis = BasisSpec::linear(2)?;
    let beta = [0.5, 1.0, -1.0];
    let vm = VarianceModel::new(vec![0.5, 0.25], 1.0)?;

    let glm = info_glm_weighted(&design, &basis, LinkSpec::Logit, &beta)?;
    println!("logistic, independent errors{}", glm.m);
    for kind in [KernelKind::Constant, KernelKind::AutoRegressive, KernelKind::DistanceKernel] {
        let r = build_correlation(&design, &KernelSpec::new(kind, 1.0, 0.5)?);
        let info = info_gee(&design, &basis, LinkSpec::Logit, &beta, &r)?;
        println!(
            "logistic, {} rho = 0.5: log det {:.4}",
            kind.name(),
            robust_design::criteria::log_det_psd(&info.m)?
        );
    }
    let hb = info_hetero_beta(&design, &basis, &vm)?;
    let ha = info_hetero_alpha(&design, &vm)?;
    println!("heteroscedastic mean block{}", hb.m);
    println!("heteroscedastic variance block{}", ha.m);
    Ok(())
}
