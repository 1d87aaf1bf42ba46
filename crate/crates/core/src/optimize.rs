//! Design search: simulated annealing over weighted designs, coordinate
//! exchange over a discrete grid, exhaustive PRN stream assignment, and the
//! nested design + assignment optimizer.
//!
//! Simulated annealing maximizes; coordinate exchange minimizes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::PrnAssignment;
use crate::criteria::PrnEvaluator;
use crate::error::{Error, Result};
use crate::model::{BasisSpec, Bound, Design, DesignPoint};
use crate::priors::QuadratureGrid;

/// Default cap on the number of enumerated stream assignments.
pub const DEFAULT_ASSIGNMENT_BUDGET: u128 = 1 << 24;

/// Relative tolerance under which two objective values are treated as tied.
const TIE_TOL: f64 = 1e-12;

/// Spread of a softmax logit step relative to a coordinate step.
const LOGIT_STEP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub initial_temp: f64,
    pub cooling_factor: f64,
    pub iters_per_temp: usize,
    pub min_temp: f64,
    /// Step size as a fraction of each coordinate range.
    pub proposal_scale: f64,
    pub weight_prune_threshold: f64,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        Self {
            initial_temp: 1.0,
            cooling_factor: 0.95,
            iters_per_temp: 200,
            min_temp: 1e-4,
            proposal_scale: 0.15,
            weight_prune_threshold: 1e-3,
        }
    }
}

impl AnnealingSchedule {
    /// Default schedule whose starting temperature is the sample standard deviation of
    /// the objective over `samples` random designs of `n` points.
    pub fn calibrated<F>(objective: &F, n: usize, bounds: &[Bound], samples: usize, seed: u64) -> Self
    where
        F: Fn(&Design) -> f64,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..samples)
            .map(|_| objective(&random_design(n, bounds, &mut rng)))
            .filter(|v| v.is_finite())
            .collect();
        let mut temp = 1.0;
        if values.len() >= 2 {
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            if var > 0.0 {
                temp = var.sqrt();
            }
        }
        Self {
            initial_temp: temp,
            min_temp: 1e-4 * temp,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_temp > 0.0
            && self.min_temp > 0.0
            && self.min_temp <= self.initial_temp
            && self.cooling_factor > 0.0
            && self.cooling_factor < 1.0
            && self.iters_per_temp > 0
            && self.proposal_scale > 0.0
            && (0.0..1.0).contains(&self.weight_prune_threshold);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid annealing schedule {self:?}")))
        }
    }

    /// Temperatures visited, strictly decreasing. A schedule with
    /// `min_temp == initial_temp` is a single greedy level.
    pub fn temperatures(&self) -> Vec<f64> {
        let mut temps = vec![self.initial_temp];
        let mut t = self.initial_temp * self.cooling_factor;
        while t >= self.min_temp {
            temps.push(t);
            t *= self.cooling_factor;
        }
        temps
    }

    fn is_greedy(&self) -> bool {
        self.min_temp >= self.initial_temp
    }
}

/// Allowed coordinate values per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    levels: Vec<Vec<f64>>,
}

impl GridSpec {
    pub fn new(levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("grid needs at least one dimension"));
        }
        for l in &levels {
            if l.len() < 2 || l.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid(
                    "each grid dimension needs at least two strictly increasing levels",
                ));
            }
        }
        Ok(Self { levels })
    }

    /// `count` evenly spaced levels on `[lo, hi]` in every one of `q` dimensions.
    pub fn uniform(q: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("grid needs at least two levels"));
        }
        let steps = (count - 1) as f64;
        let level: Vec<f64> = (0..count)
            .map(|i| ((count - 1 - i) as f64 * lo + i as f64 * hi) / steps)
            .collect();
        Self::new(vec![level; q])
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn bounds(&self) -> Vec<Bound> {
        self.levels
            .iter()
            .map(|l| Bound {
                lo: l[0],
                hi: l[l.len() - 1],
            })
            .collect()
    }

    fn level_index(&self, dim: usize, x: f64) -> Option<usize> {
        self.levels[dim].iter().position(|&l| (l - x).abs() <= 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub design: Design,
    pub assignment: Option<PrnAssignment>,
    pub criterion: f64,
    pub trace: Vec<TracePoint>,
    pub seed: u64,
    pub config_echo: serde_json::Value,
}

/// Independent per-task seed from a master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` uniformly placed points with random positive weights.
pub fn random_design<R: Rng>(n: usize, bounds: &[Bound], rng: &mut R) -> Design {
    let points = (0..n)
        .map(|_| {
            let coords = bounds.iter().map(|b| rng.random_range(b.lo..=b.hi)).collect();
            DesignPoint::new(coords, rng.random_range(0.05..1.0))
        })
        .collect();
    Design::normalized(points, bounds.to_vec()).expect("random design is valid")
}

/// Drops points with weight below `threshold` and renormalizes. If every point
/// falls below, the heaviest point is kept with weight one.
pub fn prune_weights(design: &Design, threshold: f64) -> Design {
    let kept: Vec<DesignPoint> = design
        .points()
        .iter()
        .filter(|p| p.weight >= threshold)
        .cloned()
        .collect();
    if kept.len() == design.len() {
        return design.clone();
    }
    let kept = if kept.is_empty() {
        let heaviest = design
            .points()
            .iter()
            .max_by(|a, b| a.weight.total_cmp(&b.weight))
            .expect("nonempty design");
        vec![DesignPoint::new(heaviest.coords.clone(), 1.0)]
    } else {
        kept
    };
    Design::normalized(kept, design.bounds().to_vec()).expect("pruned design is valid")
}

/// Annealing state: coordinates plus unconstrained weight logits.
struct AnnealState {
    coords: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl AnnealState {
    fn from_design(design: &Design) -> Self {
        Self {
            coords: design.points().iter().map(|p| p.coords.clone()).collect(),
            logits: design
                .points()
                .iter()
                .map(|p| p.weight.max(1e-300).ln())
                .collect(),
        }
    }

    fn to_design(&self, bounds: &[Bound]) -> Design {
        let max = self.logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let points = self
            .coords
            .iter()
            .zip(&exps)
            .map(|(c, e)| DesignPoint::new(c.clone(), e / total))
            .collect();
        Design::from_parts_unchecked(points, bounds.to_vec())
    }
}

fn better_max(candidate: f64, incumbent: f64) -> bool {
    !candidate.is_nan() && (candidate > incumbent || incumbent.is_nan())
}

/// Maximizes `objective` from `initial`. Each move perturbs one coordinate or
/// one weight logit of a randomly chosen point; steps shrink with the square
/// root of the temperature ratio. Weights are pruned at every temperature drop.
pub fn simulated_annealing<F>(
    objective: &F,
    initial: &Design,
    schedule: &AnnealingSchedule,
    seed: u64,
) -> Result<OptimizationResult>
where
    F: Fn(&Design) -> f64 + ?Sized,
{
    if initial.is_empty() {
        return Err(Error::invalid("initial design is empty"));
    }
    schedule.validate()?;
    let bounds = initial.bounds().to_vec();
    let q = initial.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut state = AnnealState::from_design(initial);
    let mut current_design = state.to_design(&bounds);
    let mut current = objective(&current_design);
    let mut best_design = current_design.clone();
    let mut best = current;
    let mut iteration = 0usize;
    let mut trace = vec![TracePoint {
        iteration,
        best,
    }];

    let temps = schedule.temperatures();
    let greedy = schedule.is_greedy();
    for (level, &temp) in temps.iter().enumerate() {
        if level > 0 && schedule.weight_prune_threshold > 0.0 {
            let pruned = prune_weights(&current_design, schedule.weight_prune_threshold);
            if pruned.len() < current_design.len() {
                state = AnnealState::from_design(&pruned);
                current_design = state.to_design(&bounds);
                current = objective(&current_design);
            }
        }
        let step = schedule.proposal_scale * (temp / schedule.initial_temp).sqrt();
        for _ in 0..schedule.iters_per_temp {
            iteration += 1;
            let i = rng.random_range(0..state.coords.len());
            let c = rng.random_range(0..=q);
            let z: f64 = rng.sample(StandardNormal);
            let old = if c < q { state.coords[i][c] } else { state.logits[i] };
            if c < q {
                let b = bounds[c];
                state.coords[i][c] = b.clamp(old + z * step * b.width());
            } else {
                state.logits[i] = old + z * step * LOGIT_STEP;
            }
            let proposal = state.to_design(&bounds);
            let value = objective(&proposal);
            let accept = if value.is_nan() {
                false
            } else if current == f64::NEG_INFINITY || current.is_nan() || value >= current {
                !greedy || value > current || current.is_nan()
            } else if greedy || value == f64::NEG_INFINITY {
                false
            } else {
                rng.random::<f64>() < ((value - current) / temp).exp()
            };
            if accept {
                current = value;
                current_design = proposal;
                if better_max(current, best) {
                    best = current;
                    best_design = current_design.clone();
                    trace.push(TracePoint { iteration, best });
                }
            } else if c < q {
                state.coords[i][c] = old;
            } else {
                state.logits[i] = old;
            }
        }
    }

    // Keep the pruned form of the winner when pruning does not cost anything.
    let pruned = prune_weights(&best_design, schedule.weight_prune_threshold);
    if pruned.len() < best_design.len() {
        let value = objective(&pruned);
        if value >= best {
            best = value;
            best_design = pruned;
            trace.push(TracePoint { iteration, best });
        }
    }

    Ok(OptimizationResult {
        design: best_design,
        assignment: None,
        criterion: best,
        trace,
        seed,
        config_echo: serde_json::to_value(schedule).unwrap_or_default(),
    })
}

/// Runs `restarts` independent annealing runs in parallel from random initial
/// designs of `n` points and keeps the best. Restart `r` uses `derive_seed(seed, r)`.
pub fn anneal_with_restarts<F>(
    objective: &F,
    n: usize,
    bounds: &[Bound],
    schedule: &AnnealingSchedule,
    restarts: usize,
    seed: u64,
) -> Result<OptimizationResult>
where
    F: Fn(&Design) -> f64 + Sync + ?Sized,
{
    if n == 0 {
        return Err(Error::invalid("initial design is empty"));
    }
    let runs: Vec<Result<OptimizationResult>> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let run_seed = derive_seed(seed, r);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            let initial = random_design(n, bounds, &mut rng);
            simulated_annealing(objective, &initial, schedule, run_seed)
        })
        .collect();
    let mut best: Option<OptimizationResult> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| better_max(run.criterion, b.criterion)) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.seed = seed;
    Ok(best)
}

fn tie_window(v: f64) -> f64 {
    TIE_TOL * v.abs().max(1.0)
}

/// Minimizes `objective` over grid designs by sweeping points x coordinates,
/// replacing each coordinate with its best level. Ties keep the current level,
/// then prefer the smaller level. Points are visited in a seeded random order
/// each pass.
pub fn coordinate_exchange<F>(
    objective: &F,
    initial: &Design,
    grid: &GridSpec,
    max_passes: usize,
    seed: u64,
) -> Result<OptimizationResult>
where
    F: Fn(&Design) -> f64 + Sync + ?Sized,
{
    if grid.dim() != initial.dim() {
        return Err(Error::DimensionMismatch {
            context: "coordinate exchange grid",
            expected: initial.dim(),
            found: grid.dim(),
        });
    }
    let mut design = initial.clone();
    for i in 0..design.len() {
        for j in 0..design.dim() {
            let x = design.points()[i].coords[j];
            let idx = grid.level_index(j, x).ok_or_else(|| {
                Error::invalid(format!("point {i} coordinate {j} = {x} is not a grid level"))
            })?;
            design.set_coord_unchecked(i, j, grid.levels()[j][idx]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = objective(&design);
    let mut evaluations = 1usize;
    let mut trace = vec![TracePoint {
        iteration: 0,
        best: current,
    }];
    let mut order: Vec<usize> = (0..design.len()).collect();

    for _pass in 0..max_passes.max(1) {
        let mut changed = false;
        order.shuffle(&mut rng);
        for &i in &order {
            for j in 0..design.dim() {
                let levels = &grid.levels()[j];
                let here = design.points()[i].coords[j];
                let values: Vec<f64> = levels
                    .par_iter()
                    .map(|&l| {
                        if l == here {
                            return current;
                        }
                        let mut cand = design.clone();
                        cand.set_coord_unchecked(i, j, l);
                        objective(&cand)
                    })
                    .collect();
                evaluations += levels.len() - 1;
                let best = values.iter().copied().fold(f64::INFINITY, f64::min);
                if current.is_nan() || best < current - tie_window(current) {
                    let window = tie_window(best);
                    let pick = values
                        .iter()
                        .position(|&v| v <= best + window)
                        .expect("minimum exists");
                    design.set_coord_unchecked(i, j, levels[pick]);
                    current = values[pick];
                    changed = true;
                    trace.push(TracePoint {
                        iteration: evaluations,
                        best: current,
                    });
                }
            }
        }
        if !changed {
            break;
        }
    }

    Ok(OptimizationResult {
        design,
        assignment: None,
        criterion: current,
        trace,
        seed,
        config_echo: serde_json::json!({ "grid": grid, "max_passes": max_passes }),
    })
}

/// Random equal-weight design with every coordinate drawn from the grid levels.
pub fn random_grid_design<R: Rng>(n: usize, grid: &GridSpec, rng: &mut R) -> Design {
    let coords = (0..n)
        .map(|_| {
            grid.levels()
                .iter()
                .map(|l| l[rng.random_range(0..l.len())])
                .collect()
        })
        .collect();
    Design::uniform_in(coords, grid.bounds()).expect("grid design is valid")
}

/// Coordinate exchange from `restarts` random grid starts; best result wins,
/// earlier restarts win ties.
pub fn exchange_with_restarts<F>(
    objective: &F,
    n: usize,
    grid: &GridSpec,
    max_passes: usize,
    restarts: usize,
    seed: u64,
) -> Result<OptimizationResult>
where
    F: Fn(&Design) -> f64 + Sync + ?Sized,
{
    let runs: Vec<Result<OptimizationResult>> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| {
            let run_seed = derive_seed(seed, r);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            let initial = random_grid_design(n, grid, &mut rng);
            coordinate_exchange(objective, &initial, grid, max_passes, run_seed)
        })
        .collect();
    let mut best: Option<OptimizationResult> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.criterion < b.criterion - tie_window(b.criterion)) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.seed = seed;
    Ok(best)
}

fn decode_assignment(index: u64, n: usize, h: usize, out: &mut [usize]) {
    out[0] = 1;
    let mut rest = index;
    for slot in out[1..n].iter_mut().rev() {
        *slot = (rest % h as u64) as usize + 1;
        rest /= h as u64;
    }
}

/// Exhaustive minimum of the PRN criterion over stream assignments with the
/// first point pinned to stream 1. Among tied minimizers the lexicographically
/// smallest assignment is returned. A singular `F^T F` gives `+inf` with the
/// all-common assignment.
pub fn best_prn_assignment(
    design: &Design,
    basis: &BasisSpec,
    grid: &QuadratureGrid,
    g: usize,
    budget: u128,
) -> Result<(PrnAssignment, f64)> {
    let n = design.len();
    if g == 0 {
        return Err(Error::invalid("number of base streams g must be positive"));
    }
    if design.dim() != basis.q() {
        return Err(Error::DimensionMismatch {
            context: "best_prn_assignment",
            expected: basis.q(),
            found: design.dim(),
        });
    }
    let h = 2 * g;
    let candidates = (h as u128).checked_pow(n as u32 - 1).unwrap_or(u128::MAX);
    if candidates > budget {
        return Err(Error::BudgetExceeded {
            candidates,
            cap: budget,
        });
    }
    let Some(eval) = PrnEvaluator::new(design, basis, grid) else {
        return Ok((PrnAssignment::common(n, g)?, f64::INFINITY));
    };
    let count = candidates as u64;
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |k, idx| {
                decode_assignment(idx, n, h, k);
                eval.evaluate(k, g)
            },
        )
        .collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let window = tie_window(best);
    let pick = values
        .iter()
        .position(|&v| v <= best + window)
        .unwrap_or(0);
    let mut k = vec![0usize; n];
    decode_assignment(pick as u64, n, h, &mut k);
    Ok((PrnAssignment::new(g, k)?, values[pick]))
}

/// How stream assignments are chosen while optimizing the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrnMode {
    /// Distinct stream per point: the classical `-log |F^T F|` objective.
    Independent,
    /// Every point on stream 1.
    Common,
    /// Best assignment for each candidate design (nested enumeration).
    Joint,
}

impl PrnMode {
    pub const ALL: [PrnMode; 3] = [PrnMode::Independent, PrnMode::Common, PrnMode::Joint];

    pub fn name(self) -> &'static str {
        match self {
            PrnMode::Independent => "independent",
            PrnMode::Common => "common",
            PrnMode::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    pub mode: PrnMode,
    pub max_passes: usize,
    pub restarts: usize,
    pub budget: u128,
}

impl Default for JointOptions {
    fn default() -> Self {
        Self {
            mode: PrnMode::Joint,
            max_passes: 50,
            restarts: 5,
            budget: DEFAULT_ASSIGNMENT_BUDGET,
        }
    }
}

/// PRN objective of a design under `mode`, with the assignment that attains it.
pub fn prn_objective(
    design: &Design,
    basis: &BasisSpec,
    quad: &QuadratureGrid,
    g: usize,
    mode: PrnMode,
    budget: u128,
) -> Result<(Option<PrnAssignment>, f64)> {
    let n = design.len();
    match mode {
        PrnMode::Independent => {
            let value = PrnEvaluator::new(design, basis, quad)
                .map_or(f64::INFINITY, |e| -e.log_det_ftf());
            Ok((None, value))
        }
        PrnMode::Common => {
            let value = PrnEvaluator::new(design, basis, quad)
                .map_or(f64::INFINITY, |e| e.evaluate(&vec![1; n], g));
            Ok((Some(PrnAssignment::common(n, g)?), value))
        }
        PrnMode::Joint => {
            let (k, v) = best_prn_assignment(design, basis, quad, g, budget)?;
            Ok((Some(k), v))
        }
    }
}

/// Coordinate exchange over `n`-point grid designs where each candidate is scored
/// by its PRN objective under `options.mode`.
pub fn joint_optimize(
    basis: &BasisSpec,
    grid_spec: &GridSpec,
    quad_grid: &QuadratureGrid,
    n: usize,
    g: usize,
    seed: u64,
    options: &JointOptions,
) -> Result<OptimizationResult> {
    let d = basis.len();
    if d > n {
        return Err(Error::Infeasible(format!(
            "d = {d} parameters exceed n = {n} runs; F^T F is singular for every design"
        )));
    }
    if grid_spec.dim() != basis.q() {
        return Err(Error::DimensionMismatch {
            context: "joint_optimize grid",
            expected: basis.q(),
            found: grid_spec.dim(),
        });
    }
    if options.mode == PrnMode::Joint {
        let candidates = ((2 * g) as u128).checked_pow(n as u32 - 1).unwrap_or(u128::MAX);
        if candidates > options.budget {
            return Err(Error::BudgetExceeded {
                candidates,
                cap: options.budget,
            });
        }
    }
    let objective = |design: &Design| {
        prn_objective(design, basis, quad_grid, g, options.mode, options.budget)
            .map_or(f64::INFINITY, |(_, v)| v)
    };
    let mut result = exchange_with_restarts(
        &objective,
        n,
        grid_spec,
        options.max_passes,
        options.restarts,
        seed,
    )?;
    if !result.criterion.is_finite() {
        return Err(Error::Infeasible("no candidate design has a nonsingular F^T F".into()));
    }
    let (assignment, value) =
        prn_objective(&result.design, basis, quad_grid, g, options.mode, options.budget)?;
    result.assignment = assignment;
    result.criterion = value;
    result.config_echo = serde_json::json!({
        "grid": grid_spec,
        "quadrature_nodes": quad_grid.len(),
        "n": n,
        "g": g,
        "options": options,
    });
    Ok(result)
}
