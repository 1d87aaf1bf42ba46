//! End-to-end studies built from the lower layers: robust weighted designs,
//! the correlation-misspecification efficiency grid, and the PRN mode
//! comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{KernelKind, KernelSpec, PrnAssignment};
use crate::criteria::{misspec_efficiency, robust_log_d, ModelConfig};
use crate::error::{Error, Result};
use crate::model::{BasisSpec, Bound, Design, LinkSpec};
use crate::optimize::{
    anneal_with_restarts, best_prn_assignment, derive_seed, joint_optimize, simulated_annealing,
    AnnealingSchedule, GridSpec, JointOptions, OptimizationResult, PrnMode,
};
use crate::priors::{gauss_legendre_grid, sample_prior, PriorSpec, QuadratureGrid};

// Stream tags for seeds derived from a study's master seed.
const TAG_CALIBRATE: u64 = 1 << 40;
const TAG_OPT_DRAWS: u64 = (1 << 40) + 1;
const TAG_EVAL_DRAWS: u64 = (1 << 40) + 2;
const TAG_POLISH: u64 = 1 << 41;

/// Settings for a simulated-annealing design search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealSettings {
    /// Initial number of support points; `None` means three times the parameter count.
    pub n: Option<usize>,
    pub bounds: Vec<Bound>,
    /// Explicit schedule; `None` calibrates the starting temperature from random designs.
    pub schedule: Option<AnnealingSchedule>,
    pub restarts: usize,
}

impl AnnealSettings {
    pub fn unit_box(q: usize) -> Self {
        Self {
            n: None,
            bounds: vec![Bound::UNIT; q],
            schedule: None,
            restarts: 5,
        }
    }
}

/// Objective for annealing: the robust log-determinant, `-inf` on any error.
pub fn robust_objective<'a>(
    model: &'a ModelConfig,
    draws: &'a [Vec<f64>],
) -> impl Fn(&Design) -> f64 + Sync + 'a {
    move |d: &Design| robust_log_d(d, model, draws).map_or(f64::NEG_INFINITY, |c| c.value)
}

/// Schedule and support size after filling in defaults.
pub fn resolve_anneal(
    model: &ModelConfig,
    draws: &[Vec<f64>],
    settings: &AnnealSettings,
    seed: u64,
) -> (usize, AnnealingSchedule) {
    let q = settings.bounds.len();
    let n = settings.n.unwrap_or(3 * model.n_params(q));
    let schedule = settings.schedule.unwrap_or_else(|| {
        let objective = robust_objective(model, draws);
        AnnealingSchedule::calibrated(
            &objective,
            n,
            &settings.bounds,
            50,
            derive_seed(seed, TAG_CALIBRATE),
        )
    });
    (n, schedule)
}

/// Maximizes the Monte Carlo robust log-determinant over weighted designs.
pub fn optimize_robust(
    model: &ModelConfig,
    draws: &[Vec<f64>],
    settings: &AnnealSettings,
    seed: u64,
) -> Result<OptimizationResult> {
    if settings.bounds.is_empty() {
        return Err(Error::invalid("design bounds must cover at least one coordinate"));
    }
    if draws.is_empty() {
        return Err(Error::invalid("robust design needs at least one prior draw"));
    }
    let (n, schedule) = resolve_anneal(model, draws, settings, seed);
    let objective = robust_objective(model, draws);
    let mut result = anneal_with_restarts(
        &objective,
        n,
        &settings.bounds,
        &schedule,
        settings.restarts,
        seed,
    )?;
    result.config_echo = serde_json::json!({
        "model": model,
        "n": n,
        "schedule": schedule,
        "restarts": settings.restarts,
        "draws": draws.len(),
    });
    Ok(result)
}

/// Inputs of the misspecification efficiency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyGridSpec {
    pub basis: BasisSpec,
    pub link: LinkSpec,
    /// Correlated structures to compare; independence is always added.
    pub structures: Vec<KernelKind>,
    pub rhos: Vec<f64>,
    pub sigma2: f64,
    /// Prior on the regression coefficients.
    pub prior: PriorSpec,
    pub m_opt: usize,
    pub m_eval: usize,
    pub anneal: AnnealSettings,
}

impl EfficiencyGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.structures.contains(&KernelKind::Independent) {
            return Err(Error::config(
                "structures",
                "independence is always included; list only correlated structures",
            ));
        }
        if self.rhos.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::config("rhos", "each rho must lie in [0, 1)"));
        }
        if self.m_opt == 0 || self.m_eval == 0 {
            return Err(Error::config("m_opt", "draw counts must be positive"));
        }
        if self.prior.dim() != self.basis.len() {
            return Err(Error::config(
                "prior",
                format!(
                    "prior dimension {} does not match {} regression terms",
                    self.prior.dim(),
                    self.basis.len()
                ),
            ));
        }
        if self.anneal.bounds.len() != self.basis.q() {
            return Err(Error::config("optimizer.bounds", "one bound per design coordinate"));
        }
        self.prior.validate()
    }

    fn model(&self, kind: KernelKind, rho: f64) -> Result<ModelConfig> {
        let kernel = match kind {
            KernelKind::Independent => KernelSpec {
                sigma2: self.sigma2,
                ..KernelSpec::independent()
            },
            _ => KernelSpec::new(kind, self.sigma2, rho)?,
        };
        Ok(ModelConfig::Gee {
            basis: self.basis.clone(),
            link: self.link,
            kernel,
        })
    }

    /// Optimization cells: independence first, then every `(rho, structure)` pair.
    pub fn cells(&self) -> Vec<(KernelKind, f64)> {
        let mut cells = vec![(KernelKind::Independent, 0.0)];
        for &rho in &self.rhos {
            for &s in &self.structures {
                cells.push((s, rho));
            }
        }
        cells
    }
}

/// Optimized design for one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDesign {
    pub index: usize,
    pub structure: KernelKind,
    pub rho: f64,
    pub design: Design,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub assumed_structure: KernelKind,
    pub true_structure: KernelKind,
    pub rho: f64,
    pub efficiency: f64,
    pub std_error: f64,
    pub m_opt: usize,
    pub m_eval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyTable {
    pub rows: Vec<EfficiencyRow>,
    pub designs: Vec<CellDesign>,
}

impl EfficiencyTable {
    pub fn get(&self, assumed: KernelKind, truth: KernelKind, rho: f64) -> Option<&EfficiencyRow> {
        self.rows.iter().find(|r| {
            r.assumed_structure == assumed && r.true_structure == truth && r.rho == rho
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "assumed_structure,true_structure,rho,efficiency,std_error,m_opt,m_eval\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{},{}\n",
                r.assumed_structure.name(),
                r.true_structure.name(),
                r.rho,
                r.efficiency,
                r.std_error,
                r.m_opt,
                r.m_eval
            ));
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    spec: EfficiencyGridSpec,
    seed: u64,
    cells: Vec<CellDesign>,
}

fn load_checkpoint(path: &Path, spec: &EfficiencyGridSpec, seed: u64) -> Result<Vec<CellDesign>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cp: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::config("checkpoint", format!("{}: {e}", path.display())))?;
    if &cp.spec != spec || cp.seed != seed {
        return Err(Error::config(
            "checkpoint",
            format!("{} belongs to a different study", path.display()),
        ));
    }
    Ok(cp.cells)
}

fn write_checkpoint(
    path: &Path,
    spec: &EfficiencyGridSpec,
    seed: u64,
    cells: &BTreeMap<usize, CellDesign>,
) -> Result<()> {
    let cp = Checkpoint {
        spec: spec.clone(),
        seed,
        cells: cells.values().cloned().collect(),
    };
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string_pretty(&cp).expect("checkpoint serializes");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Restarts each cell from the best design in the whole pool under that
/// cell's own objective, then refines it with a cool, short-step anneal.
/// A final selection over the polished pool means no cell's design is beaten
/// by another cell's under its own objective.
fn pool_polish(
    spec: &EfficiencyGridSpec,
    cells: &[CellDesign],
    draws: &[Vec<f64>],
    seed: u64,
) -> Result<Vec<CellDesign>> {
    let polished = cells
        .par_iter()
        .map(|cell| -> Result<CellDesign> {
            let model = spec.model(cell.structure, cell.rho)?;
            let objective = robust_objective(&model, draws);
            let mut start = &cell.design;
            let mut start_value = cell.criterion;
            for other in cells {
                let v = objective(&other.design);
                if v > start_value {
                    start = &other.design;
                    start_value = v;
                }
            }
            let (_, base) = resolve_anneal(&model, draws, &spec.anneal, derive_seed(seed, cell.index as u64));
            let schedule = AnnealingSchedule {
                initial_temp: 1e-2 * base.initial_temp,
                min_temp: (1e-2 * base.initial_temp).min(base.min_temp),
                proposal_scale: 0.1 * base.proposal_scale,
                ..base
            };
            let polished = simulated_annealing(
                &objective,
                start,
                &schedule,
                derive_seed(seed, TAG_POLISH + cell.index as u64),
            )?;
            let (design, criterion) = if polished.criterion > start_value {
                (polished.design, polished.criterion)
            } else {
                (start.clone(), start_value)
            };
            Ok(CellDesign {
                design,
                criterion,
                ..cell.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    polished
        .par_iter()
        .map(|cell| -> Result<CellDesign> {
            let model = spec.model(cell.structure, cell.rho)?;
            let objective = robust_objective(&model, draws);
            let mut best = cell.clone();
            for other in &polished {
                let v = objective(&other.design);
                if v > best.criterion {
                    best.design = other.design.clone();
                    best.criterion = v;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Optimizes one design per cell, then evaluates every assumed/true pair per rho.
///
/// Cell `i` anneals with seed `derive_seed(seed, i)`. All cells share one
/// optimization draw set, and all efficiencies share one evaluation draw set,
/// so the result does not depend on scheduling. Before evaluation every cell
/// is restarted from the pool (see `pool_polish`). With `checkpoint`, finished
/// cells are persisted as they complete and reused on the next call.
pub fn run_efficiency_grid(
    spec: &EfficiencyGridSpec,
    seed: u64,
    checkpoint: Option<&Path>,
) -> Result<EfficiencyTable> {
    spec.validate()?;
    let opt_draws = sample_prior(&spec.prior, spec.m_opt, derive_seed(seed, TAG_OPT_DRAWS))?;
    let eval_draws = sample_prior(&spec.prior, spec.m_eval, derive_seed(seed, TAG_EVAL_DRAWS))?;
    let cells = spec.cells();

    let mut done: BTreeMap<usize, CellDesign> = BTreeMap::new();
    if let Some(path) = checkpoint {
        for c in load_checkpoint(path, spec, seed)? {
            done.insert(c.index, c);
        }
    }
    let done = Mutex::new(done);
    let pending: Vec<usize> = (0..cells.len())
        .filter(|i| !done.lock().expect("lock").contains_key(i))
        .collect();

    pending.par_iter().try_for_each(|&i| -> Result<()> {
        let (kind, rho) = cells[i];
        let model = spec.model(kind, rho)?;
        let res = optimize_robust(&model, &opt_draws, &spec.anneal, derive_seed(seed, i as u64))?;
        let cell = CellDesign {
            index: i,
            structure: kind,
            rho,
            design: res.design,
            criterion: res.criterion,
        };
        let mut guard = done.lock().expect("lock");
        guard.insert(i, cell);
        if let Some(path) = checkpoint {
            write_checkpoint(path, spec, seed, &guard)?;
        }
        Ok(())
    })?;
    let cells_done: Vec<CellDesign> = done.into_inner().expect("lock").into_values().collect();
    let designs = pool_polish(spec, &cells_done, &opt_draws, seed)?;

    let design_for = |kind: KernelKind, rho: f64| -> &Design {
        let cell = if kind == KernelKind::Independent {
            &designs[0]
        } else {
            designs
                .iter()
                .find(|c| c.structure == kind && c.rho == rho)
                .expect("every cell optimized")
        };
        &cell.design
    };

    let mut kinds = vec![KernelKind::Independent];
    kinds.extend(spec.structures.iter().copied());
    let mut jobs = Vec::new();
    for &rho in &spec.rhos {
        for &truth in &kinds {
            for &assumed in &kinds {
                jobs.push((rho, truth, assumed));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(rho, truth, assumed)| {
            let model = spec.model(truth, rho)?;
            let eff = misspec_efficiency(
                design_for(assumed, rho),
                design_for(truth, rho),
                &model,
                &eval_draws,
            )?;
            Ok(EfficiencyRow {
                assumed_structure: assumed,
                true_structure: truth,
                rho,
                efficiency: eff.value,
                std_error: eff.std_error,
                m_opt: spec.m_opt,
                m_eval: spec.m_eval,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EfficiencyTable { rows, designs })
}

/// Inputs of the PRN mode comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrnStudySpec {
    pub basis: BasisSpec,
    pub grid: GridSpec,
    /// Gauss-Legendre nodes per axis over the unit square of `(rho_minus, rho_plus)`.
    pub quad_nodes: usize,
    pub n: usize,
    pub g: usize,
    pub max_passes: usize,
    pub restarts: usize,
    pub budget: u128,
}

impl PrnStudySpec {
    pub fn quadrature(&self) -> Result<QuadratureGrid> {
        Ok(gauss_legendre_grid(self.quad_nodes, &[[0.0, 1.0], [0.0, 1.0]])?.normalized())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrnModeResult {
    pub mode: PrnMode,
    pub design: Design,
    pub assignment: Option<PrnAssignment>,
    /// `log |Var(beta_hat)|` of the mode's own objective at its optimum.
    pub log_var: f64,
    /// Best stream assignment for this design and its criterion value.
    pub reassigned: PrnAssignment,
    pub reassigned_log_var: f64,
    pub trace_len: usize,
}

/// Optimizes the design under each mode and re-scores every optimum with the
/// best stream assignment. Mode `i` uses `derive_seed(seed, i)`.
pub fn prn_comparison(
    spec: &PrnStudySpec,
    modes: &[PrnMode],
    seed: u64,
) -> Result<Vec<PrnModeResult>> {
    let quad = spec.quadrature()?;
    modes
        .iter()
        .enumerate()
        .map(|(i, &mode)| {
            let options = JointOptions {
                mode,
                max_passes: spec.max_passes,
                restarts: spec.restarts,
                budget: spec.budget,
            };
            let res = joint_optimize(
                &spec.basis,
                &spec.grid,
                &quad,
                spec.n,
                spec.g,
                derive_seed(seed, i as u64),
                &options,
            )?;
            let (reassigned, reassigned_log_var) =
                best_prn_assignment(&res.design, &spec.basis, &quad, spec.g, spec.budget)?;
            Ok(PrnModeResult {
                mode,
                design: res.design,
                assignment: res.assignment,
                log_var: res.criterion,
                reassigned,
                reassigned_log_var,
                trace_len: res.trace.len(),
            })
        })
        .collect()
}
