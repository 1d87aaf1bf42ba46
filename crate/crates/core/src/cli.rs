//! Declarative experiment runner behind the `robust-design` binary: the TOML
//! config schema, default materialization, design import/export and the
//! report writer.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::covariance::{KernelKind, PrnAssignment};
use crate::criteria::{j_functional, prn_quadrature_criterion, robust_log_d, ModelConfig};
use crate::error::{Error, Result};
use crate::model::{BasisSpec, Bound, Design, DesignPoint};
use crate::optimize::{
    derive_seed, AnnealingSchedule, GridSpec, PrnMode, DEFAULT_ASSIGNMENT_BUDGET,
};
use crate::priors::{sample_prior, PriorSpec};
use crate::studies::{
    optimize_robust, prn_comparison, resolve_anneal, run_efficiency_grid, AnnealSettings,
    EfficiencyGridSpec, PrnStudySpec,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit status for success.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;

const TAG_DRAWS: u64 = 1 << 41;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Infeasible(_) | Error::Singular(_) | Error::DegenerateReference => EXIT_INFEASIBLE,
        Error::Config { .. }
        | Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::BudgetExceeded { .. } => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    RobustDesign,
    LocalDesign,
    EfficiencyGrid,
    JointPrn,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::RobustDesign => "robust_design",
            ProblemKind::LocalDesign => "local_design",
            ProblemKind::EfficiencyGrid => "efficiency_grid",
            ProblemKind::JointPrn => "joint_prn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Use each equally weighted atom once: the exact prior expectation.
    Enumerate,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorBlock {
    #[serde(flatten)]
    pub spec: PriorSpec,
    pub draws: Option<usize>,
    pub sampling: Option<Sampling>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    /// Initial support size (annealing) or run count (coordinate exchange).
    pub n: Option<usize>,
    pub restarts: Option<usize>,
    /// `[lo, hi]` per design coordinate.
    pub bounds: Option<Vec<[f64; 2]>>,
    pub schedule: Option<AnnealingSchedule>,
    /// Grid levels per coordinate for coordinate exchange.
    pub grid_levels: Option<usize>,
    pub max_passes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub structures: Option<Vec<KernelKind>>,
    pub rhos: Option<Vec<f64>>,
    pub sigma2: Option<f64>,
    pub m_eval: Option<usize>,
    pub checkpoint: Option<bool>,
    pub g: Option<usize>,
    pub quad_nodes: Option<usize>,
    pub modes: Option<Vec<PrnMode>>,
    /// Cap on enumerated stream assignments per design.
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub design_format: Option<DesignFormat>,
    pub plot: Option<bool>,
}

/// One experiment. Optional fields are defaults; [`ExperimentConfig::materialize`]
/// fills every one of them so the echoed config is complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub seed: Option<u64>,
    pub model: Option<ModelConfig>,
    /// Parameter value for a locally optimal design.
    pub parameter: Option<Vec<f64>>,
    pub prior: Option<PriorBlock>,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub study: StudyBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

fn toml_field(err: &toml::de::Error) -> String {
    let msg = err.message();
    for marker in ["missing field `", "unknown field `", "unknown variant `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "config".to_string()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(toml_field(&e), e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn basis(&self) -> Result<&BasisSpec> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::config("model", "required"))?;
        model
            .basis()
            .ok_or_else(|| Error::config("model.basis", "this problem needs a regression basis"))
    }

    /// Number of design coordinates.
    fn q(&self) -> Result<usize> {
        if let Some(b) = &self.optimizer.bounds {
            return Ok(b.len());
        }
        if let Some(basis) = self.model.as_ref().and_then(ModelConfig::basis) {
            return Ok(basis.q());
        }
        if let Some(p) = &self.parameter {
            return Ok(p.len());
        }
        if let Some(p) = &self.prior {
            return Ok(p.spec.dim());
        }
        Err(Error::config("optimizer.bounds", "cannot infer the number of design coordinates"))
    }

    /// Copy with every default applied, validated for its problem kind.
    pub fn materialize(&self, ov: &Overrides) -> Result<Self> {
        let mut c = self.clone();
        if c.model.is_none() {
            return Err(Error::config("model", format!("required for {}", c.problem.name())));
        }
        match c.problem {
            ProblemKind::RobustDesign if c.prior.is_none() => {
                return Err(Error::config("prior", "required for robust_design"));
            }
            ProblemKind::LocalDesign if c.parameter.is_none() => {
                return Err(Error::config("parameter", "required for local_design"));
            }
            _ => {}
        }
        c.seed = Some(ov.seed.or(c.seed).unwrap_or(0));
        if let Some(dir) = &ov.out_dir {
            c.output.dir = Some(dir.clone());
        }
        c.output.dir.get_or_insert_with(|| PathBuf::from("out"));
        c.output.design_format.get_or_insert(DesignFormat::Csv);
        c.output.plot.get_or_insert(true);

        let q = c.q()?;
        if q == 0 {
            return Err(Error::config("optimizer.bounds", "need at least one coordinate"));
        }
        let bounds = c
            .optimizer
            .bounds
            .get_or_insert_with(|| vec![[-1.0, 1.0]; q])
            .clone();
        for &[lo, hi] in &bounds {
            Bound::new(lo, hi).map_err(|e| Error::config("optimizer.bounds", e.to_string()))?;
        }
        c.optimizer.restarts.get_or_insert(5);

        match c.problem {
            ProblemKind::RobustDesign | ProblemKind::LocalDesign => c.materialize_weighted(q)?,
            ProblemKind::EfficiencyGrid => c.materialize_grid(q)?,
            ProblemKind::JointPrn => c.materialize_prn()?,
        }
        Ok(c)
    }

    fn materialize_weighted(&mut self, q: usize) -> Result<()> {
        let model = self
            .model
            .clone()
            .ok_or_else(|| Error::config("model", "required for weighted design problems"))?;
        if let Some(b) = model.basis() {
            if b.q() != q {
                return Err(Error::config("model.basis", "basis q differs from design dimension"));
            }
        }
        let want = model.draw_dim(q);
        match self.problem {
            ProblemKind::LocalDesign => {
                let p = self
                    .parameter
                    .as_ref()
                    .ok_or_else(|| Error::config("parameter", "required for local_design"))?;
                if p.len() != want {
                    return Err(Error::config(
                        "parameter",
                        format!("expected {want} values, found {}", p.len()),
                    ));
                }
            }
            _ => {
                let prior = self
                    .prior
                    .as_mut()
                    .ok_or_else(|| Error::config("prior", "required for robust_design"))?;
                prior
                    .spec
                    .validate()
                    .map_err(|e| Error::config("prior", e.to_string()))?;
                if prior.spec.dim() != want {
                    return Err(Error::config(
                        "prior",
                        format!("expected dimension {want}, found {}", prior.spec.dim()),
                    ));
                }
                let equal_atoms = match &prior.spec {
                    PriorSpec::DiscreteAtoms { atoms } => {
                        atoms.iter().all(|a| a.mass == atoms[0].mass)
                    }
                    _ => false,
                };
                let sampling = *prior.sampling.get_or_insert(if equal_atoms {
                    Sampling::Enumerate
                } else {
                    Sampling::MonteCarlo
                });
                match (sampling, &prior.spec) {
                    (Sampling::Enumerate, PriorSpec::DiscreteAtoms { atoms }) if equal_atoms => {
                        prior.draws = Some(atoms.len());
                    }
                    (Sampling::Enumerate, _) => {
                        return Err(Error::config(
                            "prior.sampling",
                            "enumerate needs equally weighted discrete atoms",
                        ))
                    }
                    (Sampling::MonteCarlo, _) => {
                        if prior.draws.get_or_insert(1000) == &0 {
                            return Err(Error::config("prior.draws", "must be positive"));
                        }
                    }
                }
            }
        }
        let n = *self
            .optimizer
            .n
            .get_or_insert(3 * model.n_params(q));
        if n == 0 {
            return Err(Error::config("optimizer.n", "must be positive"));
        }
        if self.optimizer.schedule.is_none() {
            let draws = self.draws()?;
            let settings = self.anneal_settings()?;
            let (_, schedule) = resolve_anneal(&model, &draws, &settings, self.seed.unwrap_or(0));
            self.optimizer.schedule = Some(schedule);
        }
        let schedule = self.optimizer.schedule.expect("set above");
        schedule
            .validate()
            .map_err(|e| Error::config("optimizer.schedule", e.to_string()))?;
        Ok(())
    }

    fn materialize_grid(&mut self, q: usize) -> Result<()> {
        let (basis, link) = match &self.model {
            Some(ModelConfig::GlmWeighted { basis, link }) => (basis.clone(), *link),
            Some(ModelConfig::Gee { basis, link, .. }) => (basis.clone(), *link),
            Some(_) => {
                return Err(Error::config(
                    "model.kind",
                    "efficiency_grid needs glm_weighted or gee",
                ))
            }
            None => return Err(Error::config("model", "required for efficiency_grid")),
        };
        if basis.q() != q {
            return Err(Error::config("model.basis", "basis q differs from design dimension"));
        }
        self.model = Some(ModelConfig::GlmWeighted { basis: basis.clone(), link });
        let d = basis.len();
        let prior = self.prior.get_or_insert_with(|| PriorBlock {
            spec: PriorSpec::uniform_box(d, -1.0, 1.0),
            draws: None,
            sampling: None,
        });
        prior.draws.get_or_insert(200);
        prior.sampling = Some(Sampling::MonteCarlo);
        self.optimizer.n.get_or_insert(20);
        self.study.structures.get_or_insert_with(|| {
            vec![
                KernelKind::Constant,
                KernelKind::AutoRegressive,
                KernelKind::DistanceKernel,
            ]
        });
        self.study.rhos.get_or_insert_with(|| vec![0.2, 0.5, 0.8]);
        self.study.sigma2.get_or_insert(1.0);
        self.study.m_eval.get_or_insert(2000);
        self.study.checkpoint.get_or_insert(true);
        let spec = self.grid_spec()?;
        spec.validate()?;
        if self.optimizer.schedule.is_none() {
            // Calibrate once under independence; every cell shares the schedule.
            let draws = sample_prior(&spec.prior, spec.m_opt, derive_seed(self.seed(), TAG_DRAWS))?;
            let model = ModelConfig::Gee {
                basis: spec.basis.clone(),
                link: spec.link,
                kernel: crate::covariance::KernelSpec::independent(),
            };
            let (_, schedule) = resolve_anneal(&model, &draws, &spec.anneal, self.seed());
            self.optimizer.schedule = Some(schedule);
        }
        Ok(())
    }

    fn materialize_prn(&mut self) -> Result<()> {
        let basis = self.basis()?.clone();
        self.optimizer.n.get_or_insert(10);
        self.optimizer.grid_levels.get_or_insert(21);
        self.optimizer.max_passes.get_or_insert(50);
        self.study.g.get_or_insert(1);
        self.study.quad_nodes.get_or_insert(8);
        self.study
            .modes
            .get_or_insert_with(|| PrnMode::ALL.to_vec());
        self.study
            .budget
            .get_or_insert(DEFAULT_ASSIGNMENT_BUDGET as u64);
        let spec = self.prn_spec()?;
        if spec.basis.len() > spec.n {
            return Err(Error::Infeasible(format!(
                "{} parameters exceed n = {} runs",
                basis.len(),
                spec.n
            )));
        }
        if spec.g == 0 {
            return Err(Error::config("study.g", "must be positive"));
        }
        if spec.quad_nodes == 0 {
            return Err(Error::config("study.quad_nodes", "must be positive"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn bounds(&self) -> Result<Vec<Bound>> {
        self.optimizer
            .bounds
            .as_ref()
            .ok_or_else(|| Error::config("optimizer.bounds", "not materialized"))?
            .iter()
            .map(|&[lo, hi]| Bound::new(lo, hi))
            .collect()
    }

    fn anneal_settings(&self) -> Result<AnnealSettings> {
        Ok(AnnealSettings {
            n: self.optimizer.n,
            bounds: self.bounds()?,
            schedule: self.optimizer.schedule,
            restarts: self.optimizer.restarts.unwrap_or(5),
        })
    }

    /// Prior draws (or the single local parameter) used by weighted problems.
    pub fn draws(&self) -> Result<Vec<Vec<f64>>> {
        if self.problem == ProblemKind::LocalDesign {
            return self
                .parameter
                .clone()
                .map(|p| vec![p])
                .ok_or_else(|| Error::config("parameter", "required for local_design"));
        }
        let prior = self
            .prior
            .as_ref()
            .ok_or_else(|| Error::config("prior", "required for robust_design"))?;
        match (prior.sampling, &prior.spec) {
            (Some(Sampling::Enumerate), PriorSpec::DiscreteAtoms { atoms }) => {
                Ok(atoms.iter().map(|a| a.value.clone()).collect())
            }
            _ => sample_prior(
                &prior.spec,
                prior.draws.unwrap_or(1000),
                derive_seed(self.seed(), TAG_DRAWS),
            ),
        }
    }

    pub fn grid_spec(&self) -> Result<EfficiencyGridSpec> {
        let Some(ModelConfig::GlmWeighted { basis, link }) = &self.model else {
            return Err(Error::config("model", "efficiency_grid needs a glm model"));
        };
        let prior = self.prior.as_ref().ok_or_else(|| Error::config("prior", "required"))?;
        Ok(EfficiencyGridSpec {
            basis: basis.clone(),
            link: *link,
            structures: self.study.structures.clone().unwrap_or_default(),
            rhos: self.study.rhos.clone().unwrap_or_default(),
            sigma2: self.study.sigma2.unwrap_or(1.0),
            prior: prior.spec.clone(),
            m_opt: prior.draws.unwrap_or(200),
            m_eval: self.study.m_eval.unwrap_or(2000),
            anneal: self.anneal_settings()?,
        })
    }

    pub fn prn_spec(&self) -> Result<PrnStudySpec> {
        let basis = self.basis()?.clone();
        let bounds = self.bounds()?;
        let levels = self.optimizer.grid_levels.unwrap_or(21);
        let grid = GridSpec::new(
            bounds
                .iter()
                .map(|b| {
                    GridSpec::uniform(1, b.lo, b.hi, levels).map(|g| g.levels()[0].clone())
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::config("optimizer.grid_levels", e.to_string()))?,
        )?;
        Ok(PrnStudySpec {
            basis,
            grid,
            quad_nodes: self.study.quad_nodes.unwrap_or(8),
            n: self.optimizer.n.unwrap_or(10),
            g: self.study.g.unwrap_or(1),
            max_passes: self.optimizer.max_passes.unwrap_or(50),
            restarts: self.optimizer.restarts.unwrap_or(5),
            budget: self.study.budget.unwrap_or(DEFAULT_ASSIGNMENT_BUDGET as u64) as u128,
        })
    }
}

/// Writes `design` (and its stream assignment, if any) to `path`.
///
/// CSV columns are `x1..xq,weight[,stream]` with 17 significant digits, so a
/// read back reproduces every value bit for bit.
pub fn export_design(
    design: &Design,
    assignment: Option<&PrnAssignment>,
    format: DesignFormat,
    path: &Path,
) -> Result<()> {
    if let Some(a) = assignment {
        if a.len() != design.len() {
            return Err(Error::DimensionMismatch {
                context: "exported assignment",
                expected: design.len(),
                found: a.len(),
            });
        }
    }
    let text = match format {
        DesignFormat::Csv => design_csv(design, assignment)?,
        DesignFormat::Json => {
            let doc = json!({
                "design": design,
                "assignment": assignment,
                "q": design.dim(),
                "n": design.len(),
                "version": VERSION,
            });
            serde_json::to_string_pretty(&doc).expect("design serializes") + "\n"
        }
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn design_csv(design: &Design, assignment: Option<&PrnAssignment>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = (1..=design.dim()).map(|i| format!("x{i}")).collect();
    header.push("weight".into());
    if assignment.is_some() {
        header.push("stream".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, p) in design.points().iter().enumerate() {
        let mut row: Vec<String> = p.coords.iter().map(|x| format!("{x:.16e}")).collect();
        row.push(format!("{:.16e}", p.weight));
        if let Some(a) = assignment {
            row.push(a.streams()[i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii output"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("design csv: {e}"))
}

/// Reads a design written by [`export_design`].
///
/// CSV files carry no bounds; `bounds` defaults to `[-1, 1]` per coordinate. The
/// stream count `g` of a CSV assignment is the smallest one covering its labels.
pub fn import_design(
    path: &Path,
    format: DesignFormat,
    bounds: Option<Vec<Bound>>,
) -> Result<(Design, Option<PrnAssignment>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        DesignFormat::Json => {
            #[derive(Deserialize)]
            struct Doc {
                design: Design,
                assignment: Option<PrnAssignment>,
            }
            let doc: Doc = serde_json::from_str(&text)
                .map_err(|e| Error::config("design", format!("{}: {e}", path.display())))?;
            Ok((doc.design, doc.assignment))
        }
        DesignFormat::Csv => parse_design_csv(&text, bounds),
    }
}

pub fn parse_design_csv(
    text: &str,
    bounds: Option<Vec<Bound>>,
) -> Result<(Design, Option<PrnAssignment>)> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let has_stream = header.last().is_some_and(|h| h == "stream");
    let weight_col = header
        .iter()
        .position(|h| h == "weight")
        .ok_or_else(|| Error::config("design", "csv header lacks a weight column"))?;
    for (i, h) in header[..weight_col].iter().enumerate() {
        if *h != format!("x{}", i + 1) {
            return Err(Error::config("design", format!("unexpected csv column {h:?}")));
        }
    }
    let q = weight_col;
    let expected_cols = q + 1 + usize::from(has_stream);
    if header.len() != expected_cols || q == 0 {
        return Err(Error::config("design", "csv header must be x1..xq,weight[,stream]"));
    }
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::config("design", format!("bad number {s:?}: {e}")))
    };
    let mut points = Vec::new();
    let mut streams = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let coords = (0..q).map(|j| parse(&rec[j])).collect::<Result<Vec<_>>>()?;
        points.push(DesignPoint::new(coords, parse(&rec[q])?));
        if has_stream {
            let k: usize = rec[q + 1]
                .trim()
                .parse()
                .map_err(|e| Error::config("design", format!("bad stream: {e}")))?;
            streams.push(k);
        }
    }
    let design = Design::new(points, bounds.unwrap_or_else(|| vec![Bound::UNIT; q]))?;
    let assignment = if has_stream {
        let g = streams.iter().copied().max().unwrap_or(1).div_ceil(2).max(1);
        Some(PrnAssignment::new(g, streams)?)
    } else {
        None
    };
    Ok((design, assignment))
}

/// Top-level report document.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub result: Value,
    pub trace: Vec<crate::optimize::TracePoint>,
    pub version: &'static str,
    pub seed: u64,
}

/// Files written by a run.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub design: Option<PathBuf>,
    pub report: PathBuf,
    pub plot: Option<PathBuf>,
    pub extra: Vec<PathBuf>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn design_file(dir: &Path, stem: &str, format: DesignFormat) -> PathBuf {
    dir.join(match format {
        DesignFormat::Csv => format!("{stem}.csv"),
        DesignFormat::Json => format!("{stem}.json"),
    })
}

fn trace_csv(trace: &[crate::optimize::TracePoint]) -> String {
    let mut out = String::from("iteration,best\n");
    for t in trace {
        out.push_str(&format!("{},{:e}\n", t.iteration, t.best));
    }
    out
}

/// Runs a config and writes its artifacts under the output directory.
/// `config` must already be materialized.
pub fn run(config: &ExperimentConfig) -> Result<(Report, Artifacts)> {
    let dir = config.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let format = config.output.design_format.unwrap_or(DesignFormat::Csv);
    let plot = config.output.plot.unwrap_or(true);
    let seed = config.seed();
    let mut artifacts = Artifacts {
        report: dir.join("report.json"),
        ..Artifacts::default()
    };

    let (result, trace) = match config.problem {
        ProblemKind::RobustDesign | ProblemKind::LocalDesign => {
            let model = config.model.as_ref().ok_or_else(|| Error::config("model", "required"))?;
            let draws = config.draws()?;
            let res = optimize_robust(model, &draws, &config.anneal_settings()?, seed)?;
            if !res.criterion.is_finite() {
                return Err(Error::Infeasible(
                    "no design with nonsingular information was found".into(),
                ));
            }
            let check = robust_log_d(&res.design, model, &draws)?;
            let jv = j_functional(&res.design, model, &draws)?;
            let path = design_file(&dir, "design", format);
            export_design(&res.design, None, format, &path)?;
            artifacts.design = Some(path);
            if plot {
                let p = dir.join("trace.csv");
                write_text(&p, &trace_csv(&res.trace))?;
                artifacts.plot = Some(p);
            }
            let result = json!({
                "design": res.design,
                "assignment": Value::Null,
                "criterion": res.criterion,
                "std_error": check.std_error,
                "j_functional": jv.value,
                "j_std_error": jv.std_error,
                "draws": draws.len(),
            });
            (result, res.trace)
        }
        ProblemKind::EfficiencyGrid => {
            let spec = config.grid_spec()?;
            let cp = config
                .study
                .checkpoint
                .unwrap_or(true)
                .then(|| dir.join("efficiency_checkpoint.json"));
            let table = run_efficiency_grid(&spec, seed, cp.as_deref())?;
            let p = dir.join("efficiency.csv");
            write_text(&p, &table.to_csv())?;
            artifacts.plot = Some(p);
            for cell in &table.designs {
                let stem = format!("design_{}_{}", cell.structure.name(), cell.rho);
                let path = design_file(&dir, &stem, format);
                export_design(&cell.design, None, format, &path)?;
                artifacts.extra.push(path);
            }
            let result = json!({
                "design": Value::Null,
                "assignment": Value::Null,
                "criterion": Value::Null,
                "std_error": Value::Null,
                "table": table.rows,
                "cells": table.designs,
                "draws_fixed_across_ratio": true,
            });
            (result, Vec::new())
        }
        ProblemKind::JointPrn => {
            let spec = config.prn_spec()?;
            let modes = config.study.modes.clone().unwrap_or_else(|| PrnMode::ALL.to_vec());
            let results = prn_comparison(&spec, &modes, seed)?;
            let mut rows = String::from("mode,log_var,reassigned_log_var\n");
            for r in &results {
                rows.push_str(&format!(
                    "{},{:e},{:e}\n",
                    r.mode.name(),
                    r.log_var,
                    r.reassigned_log_var
                ));
                let path = design_file(&dir, &format!("design_{}", r.mode.name()), format);
                export_design(&r.design, Some(&r.reassigned), format, &path)?;
                artifacts.extra.push(path);
            }
            if plot {
                let p = dir.join("prn_comparison.csv");
                write_text(&p, &rows)?;
                artifacts.plot = Some(p);
            }
            let best = results
                .iter()
                .min_by(|a, b| a.log_var.total_cmp(&b.log_var))
                .expect("at least one mode");
            let path = design_file(&dir, "design", format);
            let assignment = best.assignment.clone().unwrap_or_else(|| best.reassigned.clone());
            export_design(&best.design, Some(&assignment), format, &path)?;
            artifacts.design = Some(path);
            let result = json!({
                "design": best.design,
                "assignment": assignment,
                "criterion": best.log_var,
                "std_error": Value::Null,
                "mode": best.mode,
                "comparison": results,
            });
            (result, Vec::new())
        }
    };

    let report = Report {
        config: config.clone(),
        result,
        trace,
        version: VERSION,
        seed,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_text(&artifacts.report, &text)?;
    Ok((report, artifacts))
}

/// Criterion of a given design under a materialized config.
pub fn evaluate(
    config: &ExperimentConfig,
    design: &Design,
    assignment: Option<&PrnAssignment>,
) -> Result<Value> {
    match config.problem {
        ProblemKind::RobustDesign | ProblemKind::LocalDesign => {
            let model = config.model.as_ref().ok_or_else(|| Error::config("model", "required"))?;
            let draws = config.draws()?;
            let ld = robust_log_d(design, model, &draws)?;
            let jv = j_functional(design, model, &draws)?;
            Ok(json!({
                "criterion": ld.value,
                "std_error": ld.std_error,
                "j_functional": jv.value,
                "j_std_error": jv.std_error,
                "draws": draws.len(),
            }))
        }
        ProblemKind::JointPrn => {
            let spec = config.prn_spec()?;
            let quad = spec.quadrature()?;
            let g = assignment.map_or(spec.g, PrnAssignment::g);
            let common = PrnAssignment::common(design.len(), g)?;
            let given = assignment.cloned().unwrap_or(common.clone());
            let (best, best_v) = crate::optimize::best_prn_assignment(
                design,
                &spec.basis,
                &quad,
                g,
                spec.budget,
            )?;
            Ok(json!({
                "criterion": prn_quadrature_criterion(design, &given, &spec.basis, &quad)?,
                "assignment": given,
                "independent": crate::optimize::prn_objective(
                    design, &spec.basis, &quad, g, PrnMode::Independent, spec.budget
                )?.1,
                "common": prn_quadrature_criterion(design, &common, &spec.basis, &quad)?,
                "best_assignment": best,
                "best": best_v,
            }))
        }
        ProblemKind::EfficiencyGrid => Err(Error::config(
            "problem",
            "evaluate supports robust_design, local_design and joint_prn",
        )),
    }
}
