//! Invariant checks shared by the property test target and the acceptance gate.
//!
//! Each check returns `Ok(summary)` or `Err(reason)` instead of panicking so the
//! acceptance runner can print one line per invariant.

#![allow(dead_code)]

use std::fmt::Debug;

use nalgebra::DMatrix;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use robust_design::cli::{export_design, import_design, run, DesignFormat, ExperimentConfig, Overrides};
use robust_design::covariance::{build_correlation, prn_covariance};
use robust_design::criteria::{
    j_functional, misspec_efficiency, prn_log_det_terms, prn_quadrature_criterion, robust_log_d,
};
use robust_design::fisher::{info_gee, info_glm_weighted, info_hetero_alpha, info_hetero_beta};
use robust_design::linalg::{relative_asymmetry, spd_log_det};
use robust_design::model::{expand_basis, mean_response, model_matrix, variance_function};
use robust_design::optimize::{
    best_prn_assignment, coordinate_exchange, prn_objective, random_grid_design,
    simulated_annealing, DEFAULT_ASSIGNMENT_BUDGET,
};
use robust_design::priors::{gauss_legendre_grid, sample_prior, Atom};
use robust_design::studies::{prn_comparison, PrnStudySpec};
use robust_design::{
    AnnealingSchedule, BasisSpec, Bound, Design, DesignPoint, GridSpec, KernelKind, KernelSpec,
    LinkSpec, ModelConfig, PrnAssignment, PrnCorrelationSpec, PrnMode, PriorSpec, VarianceModel,
};

pub type Check = Result<String, String>;
pub type CheckFn = fn() -> Check;

/// Every invariant, in module order.
pub const INVARIANTS: &[(&str, CheckFn)] = &[
    ("model: basis is multiplicative over monomials", basis_multiplicative),
    ("model: v(x, alpha) = v(-x, -alpha)", variance_symmetry),
    ("model: logit mean(beta) + mean(-beta) = 1", logit_complement),
    ("model: model matrix is n x d", model_matrix_shape),
    ("covariance: kernels are symmetric", kernels_symmetric),
    ("covariance: permutation behaviour per kernel", kernel_permutation),
    ("covariance: AR kernel is not permutation-equivariant", ar_counterexample),
    ("covariance: constant and AR kernels are positive definite", kernels_positive_definite),
    ("covariance: PRN covariance has unit diagonal", prn_unit_diagonal),
    ("covariance: PRN covariance ignores stream labels", prn_relabel_invariance),
    ("fisher: symmetric and positive semidefinite", info_symmetric_psd),
    ("fisher: replication invariance", replication_invariance),
    ("fisher: observed information averages to Fisher information", observed_information),
    ("fisher: GEE information under permutation", gee_permutation),
    ("priors: Gauss-Legendre exactness", gauss_legendre_exactness),
    ("priors: seeded draws are bit-identical", prior_reproducibility),
    ("priors: five-atom frequencies converge", atom_frequencies),
    ("criteria: sigma2 shifts the criterion, keeps the ranking", sigma2_ranking),
    ("criteria: Monte Carlo matches quadrature", mc_matches_quadrature),
    ("criteria: self efficiency is exactly 1", self_efficiency),
    ("criteria: J is monotone under dominance", j_monotone),
    ("criteria: draw order does not matter", draw_permutation),
    ("optimize: annealing traces, validity, reproducibility", annealing_properties),
    ("optimize: greedy annealing trace strictly improves", greedy_annealing),
    ("optimize: coordinate exchange traces, validity, reproducibility", exchange_properties),
    ("optimize: best assignment value survives stream relabeling", assignment_relabeling),
    ("optimize: joint optimum dominates sequential", joint_dominates_sequential),
    ("cli: design export/import round trip", design_round_trip),
    ("cli: reports are reproducible and echo the full config", report_reproducible),
];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn prop<S>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Check
where
    S: Strategy,
    S::Value: Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map(|()| format!("{cases} cases"))
        .map_err(|e| e.to_string())
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(1.0)
}

fn conjugate(r: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| r[(perm[i], perm[j])])
}

fn make_design(coords: Vec<Vec<f64>>, weights: Vec<f64>) -> Design {
    let q = coords[0].len();
    let points = coords
        .into_iter()
        .zip(weights)
        .map(|(c, w)| DesignPoint::new(c, w))
        .collect();
    Design::normalized(points, vec![Bound::UNIT; q]).expect("valid random design")
}

/// Weighted designs in `[-1, 1]^q` with `q` in `qs` and `n` in `ns`.
fn designs(
    qs: std::ops::RangeInclusive<usize>,
    ns: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Design> {
    (qs, ns).prop_flat_map(|(q, n)| {
        (vec(vec(-1.0..=1.0f64, q), n), vec(0.05..1.0f64, n))
            .prop_map(|(c, w)| make_design(c, w))
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn kernel_kind() -> impl Strategy<Value = KernelKind> {
    prop::sample::select(KernelKind::ALL.to_vec())
}

fn random_basis(q: usize, which: usize) -> BasisSpec {
    match which % 3 {
        0 => BasisSpec::linear(q),
        1 => BasisSpec::main_effects_pairwise(q),
        _ => BasisSpec::full_quadratic(q),
    }
    .expect("preset basis")
}

pub fn basis_multiplicative() -> Check {
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    prop(64, vec((0u32..4, 0u32..4), 1..8), |exps| {
        let mut terms: Vec<Vec<u32>> = Vec::new();
        for (a, b) in exps {
            if !terms.contains(&vec![a, b]) {
                terms.push(vec![a, b]);
            }
        }
        let basis = BasisSpec::from_terms(2, terms.clone()).unwrap();
        for &x1 in &grid {
            for &x2 in &grid {
                let f = expand_basis(&DesignPoint::new(vec![x1, x2], 1.0), &basis).unwrap();
                for (t, v) in terms.iter().zip(&f) {
                    let want = x1.powi(t[0] as i32) * x2.powi(t[1] as i32);
                    prop_assert_eq!(*v, want, "term {:?} at ({}, {})", t, x1, x2);
                }
            }
        }
        Ok(())
    })
}

pub fn variance_symmetry() -> Check {
    let s = (1usize..=4).prop_flat_map(|q| (vec(-2.0..2.0f64, q), vec(-2.0..2.0f64, q)));
    prop(256, s, |(x, a)| {
        let neg = |v: &[f64]| v.iter().map(|t| -t).collect::<Vec<_>>();
        let v1 = variance_function(&DesignPoint::new(x.clone(), 1.0), &VarianceModel::new(a.clone(), 1.0).unwrap()).unwrap();
        let v2 = variance_function(&DesignPoint::new(neg(&x), 1.0), &VarianceModel::new(neg(&a), 1.0).unwrap()).unwrap();
        prop_assert_eq!(v1, v2);
        prop_assert!(v1 > 0.0);
        Ok(())
    })
}

pub fn logit_complement() -> Check {
    let s = (1usize..=3, 0usize..3).prop_flat_map(|(q, which)| {
        let d = random_basis(q, which).len();
        (Just(q), Just(which), vec(-1.0..=1.0f64, q), vec(-5.0..5.0f64, d))
    });
    prop(256, s, |(q, which, x, beta)| {
        let basis = random_basis(q, which);
        let p = DesignPoint::new(x, 1.0);
        let neg: Vec<f64> = beta.iter().map(|b| -b).collect();
        let m1 = mean_response(&p, &basis, &beta, LinkSpec::Logit).unwrap();
        let m2 = mean_response(&p, &basis, &neg, LinkSpec::Logit).unwrap();
        prop_assert!(m1 > 0.0 && m1 < 1.0);
        prop_assert!((m1 + m2 - 1.0).abs() <= 1e-14, "sum {}", m1 + m2);
        Ok(())
    })
}

pub fn model_matrix_shape() -> Check {
    prop(128, (designs(1..=3, 1..=50), 0usize..3), |(d, which)| {
        let basis = random_basis(d.dim(), which);
        let f = model_matrix(&d, &basis).unwrap();
        prop_assert_eq!(f.shape(), (d.len(), basis.len()));
        Ok(())
    })
}

pub fn kernels_symmetric() -> Check {
    prop(256, (designs(1..=3, 1..=12), kernel_kind(), 0.0..=1.0f64, 0.1..3.0f64), |(d, kind, rho, s2)| {
        let r = build_correlation(&d, &KernelSpec::new(kind, s2, rho).unwrap());
        prop_assert_eq!(&r, &r.transpose());
        Ok(())
    })
}

pub fn kernel_permutation() -> Check {
    let s = designs(1..=3, 1..=10)
        .prop_flat_map(|d| {
            let n = d.len();
            (Just(d), permutation(n), kernel_kind(), 0.0..1.0f64)
        });
    prop(256, s, |(d, perm, kind, rho)| {
        let spec = KernelSpec::new(kind, 1.0, rho).unwrap();
        let r = build_correlation(&d, &spec);
        let rp = build_correlation(&d.permuted(&perm).unwrap(), &spec);
        match kind {
            KernelKind::Independent | KernelKind::Constant => {
                prop_assert_eq!(&rp, &r);
                prop_assert_eq!(&rp, &conjugate(&r, &perm));
            }
            KernelKind::DistanceKernel => prop_assert_eq!(&rp, &conjugate(&r, &perm)),
            // Index-based: recomputing on the permuted design gives the same matrix.
            KernelKind::AutoRegressive => prop_assert_eq!(&rp, &r),
        }
        Ok(())
    })
}

pub fn ar_counterexample() -> Check {
    let d = Design::uniform(vec![vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
    let spec = KernelSpec::new(KernelKind::AutoRegressive, 1.0, 0.5).unwrap();
    let r = build_correlation(&d, &spec);
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let found = perms.iter().find(|p| {
        build_correlation(&d.permuted(&p[..]).unwrap(), &spec) != conjugate(&r, &p[..])
    });
    match found {
        Some(p) => Ok(format!("counterexample permutation {p:?}")),
        None => Err("AR kernel commuted with every permutation of 3 points".into()),
    }
}

pub fn kernels_positive_definite() -> Check {
    prop(128, (1usize..=30, 0.0..0.999f64, 0.1..3.0f64), |(n, rho, s2)| {
        let d = Design::uniform((0..n).map(|i| vec![i as f64 / n as f64]).collect()).unwrap();
        for kind in [KernelKind::Constant, KernelKind::AutoRegressive] {
            let r = build_correlation(&d, &KernelSpec::new(kind, s2, rho).unwrap());
            prop_assert!(spd_log_det(&r).is_some(), "{:?} not PD at n={} rho={}", kind, n, rho);
        }
        let r = build_correlation(&d, &KernelSpec::new(KernelKind::Constant, s2, rho).unwrap());
        let mut eig: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let lo = s2 * (1.0 - rho);
        let hi = s2 * (1.0 + (n as f64 - 1.0) * rho);
        let (small, large) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        if n > 1 {
            prop_assert!((eig[0] - small).abs() <= 1e-9 * hi.max(1.0));
            prop_assert!((eig[n - 1] - large).abs() <= 1e-9 * hi.max(1.0));
        }
        for e in &eig {
            prop_assert!((e - lo).abs() <= 1e-9 * hi.max(1.0) || (e - hi).abs() <= 1e-9 * hi.max(1.0));
        }
        Ok(())
    })
}

fn assignments() -> impl Strategy<Value = PrnAssignment> {
    (1usize..=3, 1usize..=10).prop_flat_map(|(g, n)| {
        vec(1..=2 * g, n).prop_map(move |k| PrnAssignment::new(g, k).unwrap())
    })
}

pub fn prn_unit_diagonal() -> Check {
    prop(64, assignments(), |a| {
        for i in 0..=10 {
            for j in 0..=10 {
                let spec = PrnCorrelationSpec::new(i as f64 / 10.0, j as f64 / 10.0, 1.0).unwrap();
                let v = prn_covariance(&a, &spec);
                prop_assert!(v.diagonal().iter().all(|&x| x == 1.0));
            }
        }
        Ok(())
    })
}

fn relabelings(g: usize) -> impl Strategy<Value = (Vec<usize>, Vec<bool>)> {
    (permutation(g), vec(any::<bool>(), g))
}

pub fn prn_relabel_invariance() -> Check {
    let s = assignments().prop_flat_map(|a| {
        let g = a.g();
        (Just(a), relabelings(g), 0.0..=1.0f64, 0.0..=1.0f64)
    });
    prop(256, s, |(a, (perm, flip), rp, rm)| {
        let spec = PrnCorrelationSpec::new(rp, rm, 1.0).unwrap();
        let v = prn_covariance(&a, &spec);
        let no_flip = vec![false; a.g()];
        prop_assert_eq!(&prn_covariance(&a.relabeled(&perm, &no_flip).unwrap(), &spec), &v);
        prop_assert_eq!(&prn_covariance(&a.relabeled(&perm, &flip).unwrap(), &spec), &v);
        Ok(())
    })
}

fn psd_ok(m: &DMatrix<f64>) -> Result<(), TestCaseError> {
    prop_assert!(relative_asymmetry(m) <= 1e-10, "asymmetric");
    let min = m.clone().symmetric_eigen().eigenvalues.min();
    prop_assert!(min >= -1e-9 * max_abs(m).max(1.0), "min eigenvalue {}", min);
    Ok(())
}

pub fn info_symmetric_psd() -> Check {
    let s = (designs(1..=3, 1..=20), 0usize..3, kernel_kind(), 0.0..0.95f64)
        .prop_flat_map(|(d, which, kind, rho)| {
            let q = d.dim();
            let p = random_basis(q, which).len();
            (Just(d), Just(which), Just(kind), Just(rho), vec(-2.0..2.0f64, p), vec(-1.0..1.0f64, q))
        });
    prop(128, s, |(d, which, kind, rho, beta, alpha)| {
        let basis = random_basis(d.dim(), which);
        let vm = VarianceModel::new(alpha, 1.0).unwrap();
        psd_ok(&info_glm_weighted(&d, &basis, LinkSpec::Logit, &beta).unwrap().m)?;
        psd_ok(&info_hetero_beta(&d, &basis, &vm).unwrap().m)?;
        psd_ok(&info_hetero_alpha(&d, &vm).unwrap().m)?;
        let r = build_correlation(&d, &KernelSpec::new(kind, 1.0, rho).unwrap());
        psd_ok(&info_gee(&d, &basis, LinkSpec::Logit, &beta, &r).unwrap().m)?;
        Ok(())
    })
}

fn split_point(d: &Design, i: usize) -> Design {
    let mut points = d.points().to_vec();
    let w = points[i].weight / 2.0;
    points[i].weight = w;
    let copy = points[i].clone();
    points.insert(i + 1, copy);
    Design::new(points, d.bounds().to_vec()).unwrap()
}

pub fn replication_invariance() -> Check {
    let s = (designs(1..=3, 1..=15), 0usize..3, any::<prop::sample::Index>())
        .prop_flat_map(|(d, which, idx)| {
            let q = d.dim();
            let p = random_basis(q, which).len();
            (Just(d), Just(which), Just(idx), vec(-2.0..2.0f64, p), vec(-1.0..1.0f64, q))
        });
    prop(128, s, |(d, which, idx, beta, alpha)| {
        let basis = random_basis(d.dim(), which);
        let split = split_point(&d, idx.index(d.len()));
        for link in [LinkSpec::Identity, LinkSpec::Logit] {
            let a = info_glm_weighted(&d, &basis, link, &beta).unwrap().m;
            let b = info_glm_weighted(&split, &basis, link, &beta).unwrap().m;
            prop_assert!(rel_diff(&a, &b) <= 1e-12, "glm {:?} diff {}", link, rel_diff(&a, &b));
        }
        let vm = VarianceModel::new(alpha, 1.0).unwrap();
        let a = info_hetero_beta(&d, &basis, &vm).unwrap().m;
        let b = info_hetero_beta(&split, &basis, &vm).unwrap().m;
        prop_assert!(rel_diff(&a, &b) <= 1e-12, "hetero beta diff {}", rel_diff(&a, &b));
        Ok(())
    })
}

/// Averages the closed-form observed information of the heteroscedastic normal
/// model over simulated responses at one design point and compares with the
/// Fisher information, entry by entry, within 4 standard errors.
pub fn observed_information_check(draws: usize, seed: u64) -> Check {
    let x = vec![0.3, -0.5];
    let alpha = vec![0.4, 0.2];
    let sigma2 = 1.5;
    let basis = BasisSpec::full_quadratic(2).unwrap();
    let beta = [0.5, -1.0, 0.25, 0.8, -0.3, 0.1];
    let f = basis.expand(&x).unwrap();
    let (d, q) = (f.len(), x.len());
    let s: f64 = x.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let v = (s * (1.0 + 2.0 * s)).exp();
    let t = 1.0 + 4.0 * s;
    let mu: f64 = f.iter().zip(&beta).map(|(a, b)| a * b).sum();

    let point = Design::uniform(vec![x.clone()]).unwrap();
    let vm = VarianceModel::new(alpha.clone(), sigma2).unwrap();
    let ib = info_hetero_beta(&point, &basis, &vm).unwrap().m;
    let ia = info_hetero_alpha(&point, &vm).unwrap().m;

    let noise = Normal::new(0.0, (sigma2 * v).sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = d + q;
    // Running sums of each observed-information entry and its square.
    let mut sum = DMatrix::<f64>::zeros(p, p);
    let mut sum2 = DMatrix::<f64>::zeros(p, p);
    let mut obs = DMatrix::<f64>::zeros(p, p);
    for _ in 0..draws {
        let y = mu + noise.sample(&mut rng);
        let r = y - mu;
        let u = r * r / (sigma2 * v);
        for j in 0..d {
            for k in 0..d {
                obs[(j, k)] = f[j] * f[k] / (sigma2 * v);
            }
            for k in 0..q {
                let cross = r * f[j] * x[k] * t / (sigma2 * v);
                obs[(j, d + k)] = cross;
                obs[(d + k, j)] = cross;
            }
        }
        for j in 0..q {
            for k in 0..q {
                obs[(d + j, d + k)] = 0.5 * x[j] * x[k] * (4.0 - (4.0 - t * t) * u);
            }
        }
        sum += &obs;
        sum2 += obs.component_mul(&obs);
    }
    let m = draws as f64;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for j in 0..p {
        for k in 0..p {
            let mean = sum[(j, k)] / m;
            let var = (sum2[(j, k)] / m - mean * mean).max(0.0) * m / (m - 1.0);
            let se = (var / m).sqrt();
            let target = match (j < d, k < d) {
                (true, true) => ib[(j, k)],
                (false, false) => ia[(j - d, k - d)],
                _ => 0.0,
            };
            let slack = 4.0 * se + 1e-12 * target.abs().max(1.0);
            let gap = (mean - target).abs();
            if se > 0.0 {
                worst = worst.max(gap / se);
            }
            if gap > slack {
                failures.push(format!("entry ({j},{k}): mean {mean:.6} target {target:.6} se {se:.2e}"));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("{draws} responses, largest deviation {worst:.2} SE"))
    } else {
        Err(failures.join("; "))
    }
}

pub fn observed_information() -> Check {
    observed_information_check(100_000, 4)
}

pub fn gee_permutation() -> Check {
    let s = (designs(1..=3, 2..=12), 0usize..3, kernel_kind(), 0.0..0.9f64)
        .prop_flat_map(|(d, which, kind, rho)| {
            let n = d.len();
            let p = random_basis(d.dim(), which).len();
            (Just(d), Just(which), Just(kind), Just(rho), permutation(n), vec(-2.0..2.0f64, p))
        });
    prop(128, s, |(d, which, kind, rho, perm, beta)| {
        let basis = random_basis(d.dim(), which);
        let r = build_correlation(&d, &KernelSpec::new(kind, 1.0, rho).unwrap());
        let a = info_gee(&d, &basis, LinkSpec::Logit, &beta, &r).unwrap().m;
        let dp = d.permuted(&perm).unwrap();
        let b = info_gee(&dp, &basis, LinkSpec::Logit, &beta, &conjugate(&r, &perm)).unwrap().m;
        prop_assert!(rel_diff(&a, &b) <= 1e-9, "diff {}", rel_diff(&a, &b));
        if let (Some(la), Some(lb)) = (spd_log_det(&a), spd_log_det(&b)) {
            prop_assert!((la - lb).abs() <= 1e-8 * la.abs().max(1.0));
        }
        Ok(())
    })
}

/// Exact integrals of `x^a` and `x^a y^b` over `[0, 1]` and `[0, 1]^2`.
pub fn gauss_legendre_exactness() -> Check {
    let mut worst: f64 = 0.0;
    for m in 1..=6usize {
        let top = 2 * m as i32 - 1;
        let g1 = gauss_legendre_grid(m, &[[0.0, 1.0]]).map_err(|e| e.to_string())?;
        let g2 = gauss_legendre_grid(m, &[[0.0, 1.0], [0.0, 1.0]]).map_err(|e| e.to_string())?;
        for a in 0..=top {
            let got: f64 = g1.nodes.iter().zip(&g1.weights).map(|(x, w)| w * x[0].powi(a)).sum();
            let exact = 1.0 / (a as f64 + 1.0);
            worst = worst.max((got - exact).abs() / exact);
            for b in 0..=top {
                let got: f64 = g2
                    .nodes
                    .iter()
                    .zip(&g2.weights)
                    .map(|(x, w)| w * x[0].powi(a) * x[1].powi(b))
                    .sum();
                let exact = 1.0 / ((a as f64 + 1.0) * (b as f64 + 1.0));
                worst = worst.max((got - exact).abs() / exact);
            }
        }
    }
    if worst <= 1e-13 {
        Ok(format!("max relative error {worst:.1e}"))
    } else {
        Err(format!("max relative error {worst:.3e} exceeds 1e-13"))
    }
}

pub fn prior_reproducibility() -> Check {
    let priors = [
        PriorSpec::five_direction_alpha(),
        PriorSpec::uniform_box(3, -1.0, 1.0),
        PriorSpec::ProductNormal {
            mean: vec![0.0, 1.0],
            sd: vec![1.0, 0.5],
        },
    ];
    for p in &priors {
        for seed in [0u64, 17, u64::MAX] {
            let a = sample_prior(p, 500, seed).map_err(|e| e.to_string())?;
            let b = sample_prior(p, 500, seed).map_err(|e| e.to_string())?;
            let bits = |v: &Vec<Vec<f64>>| -> Vec<u64> { v.iter().flatten().map(|x| x.to_bits()).collect() };
            if bits(&a) != bits(&b) {
                return Err(format!("draws differ for {p:?} at seed {seed}"));
            }
        }
    }
    Ok("3 prior families x 3 seeds".into())
}

pub fn atom_frequencies() -> Check {
    let prior = PriorSpec::five_direction_alpha();
    let PriorSpec::DiscreteAtoms { atoms } = &prior else {
        unreachable!()
    };
    let m = 100_000;
    let draws = sample_prior(&prior, m, 99).map_err(|e| e.to_string())?;
    let tv: f64 = 0.5
        * atoms
            .iter()
            .map(|Atom { value, mass }| {
                let hits = draws.iter().filter(|d| *d == value).count();
                (hits as f64 / m as f64 - mass).abs()
            })
            .sum::<f64>();
    if tv < 0.01 {
        Ok(format!("total variation {tv:.4}"))
    } else {
        Err(format!("total variation {tv:.4} >= 0.01"))
    }
}

pub fn sigma2_ranking() -> Check {
    let basis = BasisSpec::full_quadratic(2).unwrap();
    let d = basis.len() as f64;
    let draws = sample_prior(&PriorSpec::uniform_box(2, -0.5, 0.5), 50, 5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let designs: Vec<Design> = (0..10)
        .map(|_| {
            let c = (0..8).map(|_| vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect();
            let w = (0..8).map(|_| rng.random_range(0.05..1.0)).collect();
            make_design(c, w)
        })
        .collect();
    let score = |s2: f64| -> Result<Vec<f64>, String> {
        let cfg = ModelConfig::HeteroBeta {
            basis: basis.clone(),
            sigma2: s2,
        };
        designs
            .iter()
            .map(|x| robust_log_d(x, &cfg, &draws).map(|c| c.value).map_err(|e| e.to_string()))
            .collect()
    };
    let (a, b) = (score(1.0)?, score(4.0)?);
    for (x, y) in a.iter().zip(&b) {
        let shift = y - x;
        if (shift + d * 4f64.ln()).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(format!("shift {shift} != -d log 4"));
        }
    }
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        idx
    };
    if order(&a) == order(&b) {
        Ok("10 designs, identical ranking".into())
    } else {
        Err("ranking changed between sigma2 = 1 and 4".into())
    }
}

/// `n`-run designs on the 21-level grid in `[-1, 1]^2` with random single-stream
/// assignments, for the full quadratic basis.
pub fn random_prn_problems(count: usize, n: usize, seed: u64) -> Vec<(Design, PrnAssignment)> {
    let basis = BasisSpec::full_quadratic(2).unwrap();
    let grid = GridSpec::uniform(2, -1.0, 1.0, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let d = random_grid_design(n, &grid, &mut rng);
        let f = model_matrix(&d, &basis).unwrap();
        if spd_log_det(&(f.transpose() * &f)).is_none() {
            continue;
        }
        let k = (0..n).map(|_| rng.random_range(1..=2)).collect();
        out.push((d, PrnAssignment::new(1, k).unwrap()));
    }
    out
}

/// Per problem: (MC mean, MC standard error, 8-node value) of the averaged
/// `log |F^T V F|` over uniform `(rho_minus, rho_plus)`.
pub fn mc_vs_quadrature(problems: &[(Design, PrnAssignment)], draws: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let basis = BasisSpec::full_quadratic(2).unwrap();
    let quad = gauss_legendre_grid(8, &[[0.0, 1.0], [0.0, 1.0]]).unwrap().normalized();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    problems
        .iter()
        .map(|(d, a)| {
            let nodes: Vec<Vec<f64>> = (0..draws)
                .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect();
            let terms = prn_log_det_terms(d, a, &basis, &nodes).unwrap();
            let m = terms.len() as f64;
            let mean = terms.iter().sum::<f64>() / m;
            let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let qterms = prn_log_det_terms(d, a, &basis, &quad.nodes).unwrap();
            let qv: f64 = qterms.iter().zip(&quad.weights).map(|(t, w)| t * w).sum();
            (mean, (var / m).sqrt(), qv)
        })
        .collect()
}

pub fn mc_matches_quadrature() -> Check {
    let problems = random_prn_problems(20, 10, 55);
    let rows = mc_vs_quadrature(&problems, 10_000, 56);
    let z: Vec<f64> = rows.iter().map(|(m, se, q)| (m - q).abs() / se).collect();
    let worst = z.iter().copied().fold(0.0, f64::max);
    let bad = z.iter().filter(|&&v| v > 3.0).count();
    if bad == 0 {
        Ok(format!("20 designs, largest gap {worst:.2} SE"))
    } else {
        Err(format!("{bad} of 20 designs beyond 3 SE (largest {worst:.2} SE)"))
    }
}

fn gee_config(kind: KernelKind, rho: f64) -> ModelConfig {
    ModelConfig::Gee {
        basis: BasisSpec::main_effects_pairwise(2).unwrap(),
        link: LinkSpec::Logit,
        kernel: KernelSpec::new(kind, 1.0, rho).unwrap(),
    }
}

pub fn self_efficiency() -> Check {
    let draws = sample_prior(&PriorSpec::uniform_box(4, -1.0, 1.0), 100, 8).map_err(|e| e.to_string())?;
    prop(32, designs(2..=2, 4..=10), |d| {
        for kind in KernelKind::ALL {
            for rho in [0.2, 0.5, 0.8] {
                let e = misspec_efficiency(&d, &d, &gee_config(kind, rho), &draws).unwrap();
                prop_assert_eq!(e.value, 1.0);
            }
        }
        Ok(())
    })
}

pub fn j_monotone() -> Check {
    // n >= d = 6, so neither information matrix is rank deficient by construction.
    let s = (designs(2..=2, 6..=10), 1.0..4.0f64);
    prop(64, s, |(d, c)| {
        let basis = BasisSpec::full_quadratic(2).unwrap();
        let alphas = sample_prior(&PriorSpec::uniform_box(2, -0.5, 0.5), 40, 1).unwrap();
        let betas = sample_prior(&PriorSpec::uniform_box(basis.len(), -1.0, 1.0), 40, 2).unwrap();
        // sigma2 = 1 dominates sigma2 = c by the factor c.
        let strong = ModelConfig::HeteroBeta { basis: basis.clone(), sigma2: 1.0 };
        let weak = ModelConfig::HeteroBeta { basis: basis.clone(), sigma2: c };
        let j1 = j_functional(&d, &strong, &alphas).unwrap().value;
        let j2 = j_functional(&d, &weak, &alphas).unwrap().value;
        prop_assert!(j1 >= j2, "sigma2 pair: {} < {}", j1, j2);
        // Identity link has P = 1 >= p(1 - p) pointwise.
        let ident = ModelConfig::GlmWeighted { basis: basis.clone(), link: LinkSpec::Identity };
        let logit = ModelConfig::GlmWeighted { basis, link: LinkSpec::Logit };
        let j1 = j_functional(&d, &ident, &betas).unwrap().value;
        let j2 = j_functional(&d, &logit, &betas).unwrap().value;
        prop_assert!(j1 >= j2, "link pair: {} < {}", j1, j2);
        Ok(())
    })
}

pub fn draw_permutation() -> Check {
    let draws = sample_prior(&PriorSpec::uniform_box(4, -1.0, 1.0), 60, 9).map_err(|e| e.to_string())?;
    let s = (designs(2..=2, 4..=10), permutation(60), kernel_kind(), 0.0..0.9f64);
    prop(64, s, |(d, perm, kind, rho)| {
        let cfg = gee_config(kind, rho);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| draws[i].clone()).collect();
        let a = robust_log_d(&d, &cfg, &draws).unwrap().value;
        let b = robust_log_d(&d, &cfg, &shuffled).unwrap().value;
        prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        Ok(())
    })
}

fn short_schedule() -> AnnealingSchedule {
    AnnealingSchedule {
        initial_temp: 0.5,
        cooling_factor: 0.7,
        iters_per_temp: 40,
        min_temp: 0.01,
        ..AnnealingSchedule::default()
    }
}

fn design_valid(d: &Design, bounds: &[Bound]) -> Result<(), TestCaseError> {
    let total: f64 = d.weights().iter().sum();
    prop_assert!((total - 1.0).abs() <= 1e-10, "weights sum to {}", total);
    prop_assert!(d.weights().iter().all(|&w| w >= 0.0));
    for p in d.points() {
        for (x, b) in p.coords.iter().zip(bounds) {
            prop_assert!(b.contains(*x), "{} outside [{}, {}]", x, b.lo, b.hi);
        }
    }
    Ok(())
}

fn monotone(trace: &[robust_design::optimize::TracePoint], maximize: bool, strict: bool) -> bool {
    trace.windows(2).all(|w| {
        let (a, b) = (w[0].best, w[1].best);
        match (maximize, strict) {
            (true, false) => b >= a,
            (true, true) => b > a,
            (false, false) => b <= a,
            (false, true) => b < a,
        }
    })
}

pub fn annealing_properties() -> Check {
    let s = (designs(2..=2, 3..=6), any::<u64>(), prop::sample::select(vec![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]));
    prop(16, s, |(initial, seed, alpha)| {
        let model = ModelConfig::HeteroAlpha;
        let draws = vec![alpha.to_vec()];
        let objective = |d: &Design| robust_log_d(d, &model, &draws).map_or(f64::NEG_INFINITY, |c| c.value);
        let a = simulated_annealing(&objective, &initial, &short_schedule(), seed).unwrap();
        let b = simulated_annealing(&objective, &initial, &short_schedule(), seed).unwrap();
        prop_assert!(monotone(&a.trace, true, false), "trace not monotone");
        prop_assert_eq!(&a.design, &b.design);
        prop_assert_eq!(a.criterion.to_bits(), b.criterion.to_bits());
        prop_assert_eq!(&a.trace, &b.trace);
        design_valid(&a.design, initial.bounds())?;
        prop_assert!(a.criterion >= objective(&initial));
        Ok(())
    })
}

pub fn greedy_annealing() -> Check {
    let schedule = AnnealingSchedule {
        initial_temp: 0.2,
        min_temp: 0.2,
        ..short_schedule()
    };
    prop(16, (designs(2..=2, 3..=6), any::<u64>()), |(initial, seed)| {
        let model = ModelConfig::HeteroAlpha;
        let draws = vec![vec![0.75, 0.25]];
        let objective = |d: &Design| robust_log_d(d, &model, &draws).map_or(f64::NEG_INFINITY, |c| c.value);
        let r = simulated_annealing(&objective, &initial, &schedule, seed).unwrap();
        prop_assert!(monotone(&r.trace, true, true), "trace not strictly improving");
        Ok(())
    })
}

pub fn exchange_properties() -> Check {
    let basis = BasisSpec::linear(2).unwrap();
    let grid = GridSpec::uniform(2, -1.0, 1.0, 5).unwrap();
    let quad = gauss_legendre_grid(4, &[[0.0, 1.0], [0.0, 1.0]]).unwrap().normalized();
    prop(16, (4usize..=7, any::<u64>(), prop::sample::select(PrnMode::ALL.to_vec())), |(n, seed, mode)| {
        let objective = |d: &Design| {
            prn_objective(d, &basis, &quad, 1, mode, DEFAULT_ASSIGNMENT_BUDGET).map_or(f64::INFINITY, |(_, v)| v)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = random_grid_design(n, &grid, &mut rng);
        let a = coordinate_exchange(&objective, &initial, &grid, 20, seed).unwrap();
        let b = coordinate_exchange(&objective, &initial, &grid, 20, seed).unwrap();
        prop_assert!(monotone(&a.trace, false, false), "trace not monotone");
        prop_assert_eq!(&a.design, &b.design);
        prop_assert_eq!(a.criterion.to_bits(), b.criterion.to_bits());
        design_valid(&a.design, &grid.bounds())?;
        for p in a.design.points() {
            for (x, levels) in p.coords.iter().zip(grid.levels()) {
                prop_assert!(levels.contains(x), "{} is not a grid level", x);
            }
        }
        prop_assert!(a.criterion <= objective(&initial));
        Ok(())
    })
}

pub fn assignment_relabeling() -> Check {
    let basis = BasisSpec::linear(2).unwrap();
    let grid = GridSpec::uniform(2, -1.0, 1.0, 5).unwrap();
    let quad = gauss_legendre_grid(4, &[[0.0, 1.0], [0.0, 1.0]]).unwrap().normalized();
    let s = (any::<u64>(), 1usize..=2).prop_flat_map(|(seed, g)| (Just(seed), Just(g), relabelings(g)));
    prop(24, s, |(seed, g, (perm, flip))| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_grid_design(5, &grid, &mut rng);
        let (k, v) = best_prn_assignment(&d, &basis, &quad, g, DEFAULT_ASSIGNMENT_BUDGET).unwrap();
        if !v.is_finite() {
            return Ok(());
        }
        let moved = k.relabeled(&perm, &flip).unwrap();
        let w = prn_quadrature_criterion(&d, &moved, &basis, &quad).unwrap();
        prop_assert!((v - w).abs() <= 1e-9 * v.abs().max(1.0), "{} vs {}", v, w);
        Ok(())
    })
}

pub fn prn_poc_spec(restarts: usize) -> PrnStudySpec {
    PrnStudySpec {
        basis: BasisSpec::full_quadratic(2).unwrap(),
        grid: GridSpec::uniform(2, -1.0, 1.0, 21).unwrap(),
        quad_nodes: 8,
        n: 10,
        g: 1,
        max_passes: 50,
        restarts,
        budget: DEFAULT_ASSIGNMENT_BUDGET,
    }
}

pub fn joint_dominates_sequential() -> Check {
    let spec = prn_poc_spec(2);
    let res = prn_comparison(&spec, &[PrnMode::Independent, PrnMode::Joint], 31).map_err(|e| e.to_string())?;
    let sequential = res[0].reassigned_log_var;
    let joint = res[1].log_var;
    if joint <= sequential + 1e-12 * sequential.abs().max(1.0) {
        Ok(format!("joint {joint:.4} <= sequential {sequential:.4}"))
    } else {
        Err(format!("joint {joint:.4} > sequential {sequential:.4}"))
    }
}

pub fn design_round_trip() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = designs(1..=4, 1..=15).prop_flat_map(|d| {
        let n = d.len();
        (Just(d), prop::option::of((1usize..=3).prop_flat_map(move |g| (Just(g), vec(1..=2 * g, n)))))
    });
    prop(128, s, |(d, assign)| {
        let a = assign.map(|(g, k)| PrnAssignment::new(g, k).unwrap());
        for (format, name) in [(DesignFormat::Csv, "d.csv"), (DesignFormat::Json, "d.json")] {
            let path = dir.path().join(name);
            export_design(&d, a.as_ref(), format, &path).unwrap();
            let (back, ba) = import_design(&path, format, None).unwrap();
            prop_assert_eq!(&back, &d);
            match (&a, &ba) {
                (Some(x), Some(y)) => prop_assert_eq!(x.streams(), y.streams()),
                (None, None) => {}
                _ => return Err(fail("assignment presence changed")),
            }
        }
        Ok(())
    })
}

pub const SMALL_ROBUST_CONFIG: &str = r#"
problem = "robust_design"
seed = 21

[model]
kind = "hetero_alpha"

[prior]
kind = "discrete_atoms"
atoms = [ { value = [1.0, 0.0], mass = 0.5 }, { value = [0.0, 1.0], mass = 0.5 } ]

[optimizer]
n = 5
restarts = 2
schedule = { initial_temp = 0.5, cooling_factor = 0.6, iters_per_temp = 30, min_temp = 0.01, proposal_scale = 0.15, weight_prune_threshold = 0.001 }
"#;

pub fn report_reproducible() -> Check {
    let cfg = ExperimentConfig::from_toml_str(SMALL_ROBUST_CONFIG).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let m = cfg
            .materialize(&Overrides {
                seed: None,
                out_dir: Some(dir.path().to_path_buf()),
            })
            .map_err(|e| e.to_string())?;
        let (report, files) = run(&m).map_err(|e| e.to_string())?;
        if report.config != m || m.materialize(&Overrides::default()).map_err(|e| e.to_string())? != m {
            return Err("report config is not the fully materialized config".into());
        }
        let text = std::fs::read_to_string(&files.report).map_err(|e| e.to_string())?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        value["config"]["output"]["dir"] = serde_json::Value::Null;
        reports.push(value);
        dirs.push(dir);
    }
    if reports[0] == reports[1] {
        Ok("two runs, identical reports apart from the output directory".into())
    } else {
        Err("reports differ between identical runs".into())
    }
}
