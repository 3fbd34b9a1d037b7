//! Configuration-driven experiment runner.
//!
//! Configs are flat `key = value` text files (`#` starts a comment). Every
//! run is fully determined by the config plus the seed; all resolved
//! parameters (including grid-selected step sizes and applied defaults) are
//! echoed into the summary so a run can be reproduced bit-identically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::numerics::RngState;
use crate::oracle::{
    MinibatchOracle, NoiseModel, NoisyOracle, Problem, ProxGradOracle, SmoothTerm,
};
use crate::problem::{
    make_lasso_instance_with_lambda, make_phase_retrieval_instance, phase_retrieval_problem,
    LassoInstance, PhaseRetrievalInstance,
};
use crate::solver::{
    run_pgm_reference, run_signprox, run_signsgd, run_spgm, Encoding, Schedule, Trace,
    TraceRecord,
};
use crate::theory::{estimate_smoothness, theorem1_check, theorem2_check, BoundReport};
use crate::{Error, Result};

pub const TRACE_CSV_HEADER: &str = "t,f,normalized_obj,gmap_l2sq,gmap_l1,bits_cumulative";

/// The 13-point logarithmic step-size grid `10⁻⁴ … 10⁰`.
pub fn gamma_grid() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-4.0 + k as f64 / 3.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    PhaseRetrieval,
    Lasso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    Spgm,
    Signprox,
    Signsgd,
    PgmReference,
    Theorem1,
    Theorem2,
}

impl AlgorithmKind {
    fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Spgm => "spgm",
            AlgorithmKind::Signprox => "signprox",
            AlgorithmKind::Signsgd => "signsgd",
            AlgorithmKind::PgmReference => "pgm_reference",
            AlgorithmKind::Theorem1 => "theorem1",
            AlgorithmKind::Theorem2 => "theorem2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSpec {
    Fixed(f64),
    Theorem1,
    Theorem2,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSpec {
    Fixed(usize),
    MatchT,
}

/// Declarative description of one run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub side: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub condition: f64,
    pub tv_weight: f64,
    pub lambda: f64,
    pub algorithm: AlgorithmKind,
    pub gamma: GammaSpec,
    pub batch: BatchSpec,
    pub iterations: usize,
    pub rho: f64,
    pub sigma: f64,
    pub seed: u64,
    pub instance_seed: u64,
    pub seeds: usize,
    pub out: PathBuf,
    /// `key = value` defaults that were filled in, for provenance.
    pub defaults_applied: Vec<String>,
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Parses and validates a flat `key = value` config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err("<file>", format!("cannot read {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            config_err(
                "<syntax>",
                format!("line {}: expected `key = value`, got `{line}`", lineno + 1),
            )
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    ExperimentConfig::from_pairs(&pairs)
}

impl ExperimentConfig {
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| -> Option<&str> {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };
        const KNOWN: &[&str] = &[
            "problem", "side", "m", "n", "K", "condition", "tv_weight", "lambda", "algorithm",
            "gamma", "B", "T", "rho", "sigma", "seed", "instance_seed", "seeds", "out",
        ];
        for (k, _) in pairs {
            if !KNOWN.contains(&k.as_str()) {
                return Err(config_err(k, "unknown key"));
            }
        }
        let mut defaults = Vec::new();
        let mut defaulted = |key: &str, value: String| {
            defaults.push(format!("{key} = {value}"));
        };

        let problem = match get("problem") {
            Some("phase_retrieval") => ProblemKind::PhaseRetrieval,
            Some("lasso") => ProblemKind::Lasso,
            Some(other) => {
                return Err(config_err(
                    "problem",
                    format!("must be `phase_retrieval` or `lasso`, got `{other}`"),
                ))
            }
            None => return Err(config_err("problem", "required key missing")),
        };
        let algorithm = match get("algorithm") {
            Some("spgm") => AlgorithmKind::Spgm,
            Some("signprox") => AlgorithmKind::Signprox,
            Some("signsgd") => AlgorithmKind::Signsgd,
            Some("pgm_reference") => AlgorithmKind::PgmReference,
            Some("theorem1") => AlgorithmKind::Theorem1,
            Some("theorem2") => AlgorithmKind::Theorem2,
            Some(other) => return Err(config_err("algorithm", format!("unknown `{other}`"))),
            None => return Err(config_err("algorithm", "required key missing")),
        };

        let parse_usize = |key: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| config_err(key, format!("invalid count `{v}`")))
        };
        let parse_f64 = |key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| config_err(key, format!("invalid number `{v}`")))
                .and_then(|x| {
                    if x.is_finite() {
                        Ok(x)
                    } else {
                        Err(config_err(key, "must be finite"))
                    }
                })
        };
        let parse_u64 = |key: &str, v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| config_err(key, format!("invalid integer `{v}`")))
        };

        let iterations = match get("T") {
            Some(v) => parse_usize("T", v)?,
            None => return Err(config_err("T", "required key missing")),
        };
        if iterations == 0 {
            return Err(config_err("T", "must be >= 1"));
        }
        let seed = match get("seed") {
            Some(v) => parse_u64("seed", v)?,
            None => return Err(config_err("seed", "required key missing")),
        };

        let side = match get("side") {
            Some(v) => parse_usize("side", v)?,
            None => {
                defaulted("side", "50".into());
                50
            }
        };
        let default_m = match problem {
            ProblemKind::PhaseRetrieval => 3000,
            ProblemKind::Lasso => 40,
        };
        let m = match get("m") {
            Some(v) => parse_usize("m", v)?,
            None => {
                defaulted("m", default_m.to_string());
                default_m
            }
        };
        if m == 0 {
            return Err(config_err("m", "must be >= 1"));
        }
        let n = match get("n") {
            Some(v) => parse_usize("n", v)?,
            None => {
                defaulted("n", "20".into());
                20
            }
        };
        let default_k = match problem {
            ProblemKind::PhaseRetrieval => 1,
            ProblemKind::Lasso => 8,
        };
        let k = match get("K") {
            Some(v) => parse_usize("K", v)?,
            None => {
                defaulted("K", default_k.to_string());
                default_k
            }
        };
        if k == 0 {
            return Err(config_err("K", "must be >= 1"));
        }
        let condition = match get("condition") {
            Some(v) => parse_f64("condition", v)?,
            None => {
                defaulted("condition", "10".into());
                10.0
            }
        };
        let tv_weight = match get("tv_weight") {
            Some(v) => parse_f64("tv_weight", v)?,
            None => {
                defaulted("tv_weight", "0.1".into());
                0.1
            }
        };
        if tv_weight < 0.0 {
            return Err(config_err("tv_weight", "must be >= 0"));
        }
        let lambda = match get("lambda") {
            Some(v) => parse_f64("lambda", v)?,
            None => {
                defaulted("lambda", "0.05".into());
                0.05
            }
        };
        if lambda <= 0.0 {
            return Err(config_err("lambda", "must be > 0"));
        }

        let gamma = match get("gamma") {
            Some("theorem1") => GammaSpec::Theorem1,
            Some("theorem2") => GammaSpec::Theorem2,
            Some("grid") => GammaSpec::Grid,
            Some(v) => {
                let g = parse_f64("gamma", v)?;
                if g <= 0.0 {
                    return Err(config_err("gamma", "must be > 0"));
                }
                GammaSpec::Fixed(g)
            }
            None => {
                defaulted("gamma", "grid".into());
                GammaSpec::Grid
            }
        };
        let batch = match get("B") {
            Some("T") => BatchSpec::MatchT,
            Some(v) => {
                let b = parse_usize("B", v)?;
                if b == 0 {
                    return Err(config_err("B", "must be >= 1"));
                }
                BatchSpec::Fixed(b)
            }
            None => {
                defaulted("B", "1".into());
                BatchSpec::Fixed(1)
            }
        };
        let rho = match get("rho") {
            Some(v) => parse_f64("rho", v)?,
            None => {
                defaulted("rho", "1.0".into());
                1.0
            }
        };
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(config_err("rho", format!("must be in (0, 1], got {rho}")));
        }
        let sigma = match get("sigma") {
            Some(v) => parse_f64("sigma", v)?,
            None => {
                defaulted("sigma", "0.0".into());
                0.0
            }
        };
        if sigma < 0.0 {
            return Err(config_err("sigma", "must be >= 0"));
        }
        let instance_seed = match get("instance_seed") {
            Some(v) => parse_u64("instance_seed", v)?,
            None => {
                defaulted("instance_seed", "0".into());
                0
            }
        };
        let seeds = match get("seeds") {
            Some(v) => parse_usize("seeds", v)?,
            None => {
                defaulted("seeds", "20".into());
                20
            }
        };
        let out = match get("out") {
            Some(v) => PathBuf::from(v),
            None => {
                defaulted("out", "trace.csv".into());
                PathBuf::from("trace.csv")
            }
        };

        // Schedule/algorithm compatibility.
        match (gamma, algorithm) {
            (GammaSpec::Theorem1, a) if a != AlgorithmKind::Spgm => {
                return Err(config_err(
                    "gamma",
                    "schedule `theorem1` only applies to algorithm `spgm`",
                ));
            }
            (GammaSpec::Theorem2, a) if a != AlgorithmKind::Signprox => {
                return Err(config_err(
                    "gamma",
                    "schedule `theorem2` only applies to algorithm `signprox`",
                ));
            }
            (GammaSpec::Grid, AlgorithmKind::Theorem1 | AlgorithmKind::Theorem2) => {
                return Err(config_err(
                    "gamma",
                    "theorem checks fix their own schedule; gamma must not be `grid`",
                ));
            }
            _ => {}
        }
        if matches!(algorithm, AlgorithmKind::Theorem1 | AlgorithmKind::Theorem2)
            && problem != ProblemKind::Lasso
        {
            return Err(config_err(
                "algorithm",
                "theorem checks require problem = lasso (exact constants)",
            ));
        }
        if matches!(algorithm, AlgorithmKind::Theorem2) && iterations > 512 {
            return Err(config_err("T", "theorem2 requires T <= 512"));
        }

        Ok(Self {
            problem,
            side,
            m,
            n,
            k,
            condition,
            tv_weight,
            lambda,
            algorithm,
            gamma,
            batch,
            iterations,
            rho,
            sigma,
            seed,
            instance_seed,
            seeds,
            out,
            defaults_applied: defaults,
        })
    }
}

/// Per-iteration communication cost of a finished trace under an encoding.
/// The cumulative sum over iterations matches the trace column for the
/// encoding the trace was produced with.
pub fn communication_cost(trace: &Trace, encoding: Encoding) -> u64 {
    let completed = trace.records.len().saturating_sub(1) as u64;
    completed * encoding.bits_per_iteration(trace.final_x.len())
}

/// Writes a trace as CSV with the fixed header.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        let normalized = match r.normalized {
            Some(v) => v.to_string(),
            None => "nan".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.objective, normalized, r.gmap_l2_sq, r.gmap_l1, r.bits_cumulative
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses a trace CSV back into records.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty trace CSV".into()))?;
    if header != TRACE_CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header `{header}`")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::Parse(format!("row {}: expected 6 columns", i + 2)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number `{s}`", i + 2)))
        };
        let normalized = if cols[2] == "nan" {
            None
        } else {
            Some(parse(cols[2])?)
        };
        records.push(TraceRecord {
            t: cols[0]
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad t", i + 2)))?,
            objective: parse(cols[1])?,
            normalized,
            gmap_l2_sq: parse(cols[3])?,
            gmap_l1: parse(cols[4])?,
            bits_cumulative: cols[5]
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad bits", i + 2)))?,
        });
    }
    Ok(records)
}

/// Everything a finished run leaves behind.
pub struct RunArtifacts {
    pub trace_csv: Option<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: String,
    pub trace: Option<Trace>,
    pub bound_report: Option<BoundReport>,
}

enum BuiltProblem {
    Phase(Arc<PhaseRetrievalInstance>, Problem),
    Lasso(Arc<LassoInstance>, Problem),
}

impl BuiltProblem {
    fn problem(&self) -> &Problem {
        match self {
            BuiltProblem::Phase(_, p) => p,
            BuiltProblem::Lasso(_, p) => p,
        }
    }
}

fn build_problem(config: &ExperimentConfig) -> Result<BuiltProblem> {
    let mut rng = RngState::new(config.instance_seed);
    match config.problem {
        ProblemKind::PhaseRetrieval => {
            let inst = Arc::new(make_phase_retrieval_instance(
                config.side,
                config.m,
                config.tv_weight,
                &mut rng,
            )?);
            let problem = phase_retrieval_problem(&inst)?;
            Ok(BuiltProblem::Phase(inst, problem))
        }
        ProblemKind::Lasso => {
            let inst = Arc::new(make_lasso_instance_with_lambda(
                config.n,
                config.m,
                config.k,
                config.condition,
                config.lambda,
                &mut rng,
            )?);
            let problem = inst.problem()?;
            Ok(BuiltProblem::Lasso(inst, problem))
        }
    }
}

fn default_x0(config: &ExperimentConfig, dimension: usize) -> Vec<f64> {
    match config.problem {
        // x = 0 is a critical point of the quartic misfit; start from a
        // constant gray image instead.
        ProblemKind::PhaseRetrieval => vec![0.5; dimension],
        ProblemKind::Lasso => vec![0.0; dimension],
    }
}

/// Obtains `f*` for the normalized objective. LASSO instances store it; for
/// phase retrieval the full TV reconstruction runs once per instance and is
/// cached next to the output path.
fn resolve_fstar(config: &ExperimentConfig, built: &BuiltProblem) -> Result<f64> {
    match built {
        BuiltProblem::Lasso(inst, _) => Ok(inst.fstar),
        BuiltProblem::Phase(inst, problem) => {
            let dir = config.out.parent().map(Path::to_path_buf).unwrap_or_default();
            let cache = dir.join(format!(
                "fstar_phase_s{}_m{}_tv{}_is{}.txt",
                config.side, config.m, config.tv_weight, config.instance_seed
            ));
            if let Ok(text) = std::fs::read_to_string(&cache) {
                if let Some(v) = text
                    .lines()
                    .find_map(|l| l.strip_prefix("fstar "))
                    .and_then(|s| s.parse::<f64>().ok())
                {
                    return Ok(v);
                }
            }
            let x0 = vec![0.5; inst.dimension()];
            // Short step-size sweep for the reference run, then a long run
            // at the winner.
            let mut best = (f64::INFINITY, 0.003);
            for &g in &[0.001, 0.003, 0.01, 0.03] {
                let r = run_pgm_reference(problem, &x0, g, 200, 1e-9)?;
                if r.objective.is_finite() && r.objective < best.0 {
                    best = (r.objective, g);
                }
            }
            let r = run_pgm_reference(problem, &x0, best.1, 1500, 1e-9)?;
            let text = format!(
                "fstar {}\ngamma {}\nconverged {}\niterations {}\n",
                r.objective, best.1, r.converged, r.iterations
            );
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(&dir)?;
            }
            std::fs::write(&cache, text)?;
            Ok(r.objective)
        }
    }
}

/// Uniform row-block decomposition of the smooth data fidelity into `K`
/// component functions whose uniform average is the full fidelity; this is
/// the smooth family signSGD runs on.
fn row_block_components(
    config: &ExperimentConfig,
    built: &BuiltProblem,
) -> Result<Vec<Arc<dyn SmoothTerm>>> {
    struct ScaledBlock<S: SmoothTerm> {
        inner: S,
        scale: f64,
    }
    impl<S: SmoothTerm> SmoothTerm for ScaledBlock<S> {
        fn value(&self, x: &[f64]) -> f64 {
            self.scale * self.inner.value(x)
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            self.inner.grad(x).iter().map(|g| self.scale * g).collect()
        }
    }

    let k = config.k;
    match built {
        BuiltProblem::Lasso(inst, _) => {
            let m = inst.a.rows();
            if k > m {
                return Err(config_err("K", "more blocks than rows"));
            }
            let mut comps: Vec<Arc<dyn SmoothTerm>> = Vec::with_capacity(k);
            for block in 0..k {
                let lo = block * m / k;
                let hi = (block + 1) * m / k;
                let mut data = Vec::with_capacity((hi - lo) * inst.a.cols());
                for i in lo..hi {
                    data.extend_from_slice(inst.a.row(i));
                }
                let a = crate::numerics::Matrix::new(hi - lo, inst.a.cols(), data)?;
                let b = inst.b[lo..hi].to_vec();
                comps.push(Arc::new(ScaledBlock {
                    inner: crate::problem::LassoSmooth::new(a, b, f64::NAN),
                    scale: k as f64,
                }));
            }
            Ok(comps)
        }
        BuiltProblem::Phase(inst, _) => {
            let m = inst.num_measurements();
            if k > m {
                return Err(config_err("K", "more blocks than measurements"));
            }
            let mut comps: Vec<Arc<dyn SmoothTerm>> = Vec::with_capacity(k);
            for block in 0..k {
                let lo = block * m / k;
                let hi = (block + 1) * m / k;
                let mut data = Vec::with_capacity((hi - lo) * inst.h.cols());
                for i in lo..hi {
                    data.extend_from_slice(inst.h.row(i));
                }
                let sub = PhaseRetrievalInstance {
                    h: crate::numerics::Matrix::new(hi - lo, inst.h.cols(), data)?,
                    y: inst.y[lo..hi].to_vec(),
                    true_signal: inst.true_signal.clone(),
                    tv_weight: 0.0,
                    side: inst.side,
                };
                comps.push(Arc::new(ScaledBlock {
                    inner: sub,
                    scale: k as f64,
                }));
            }
            Ok(comps)
        }
    }
}

fn make_oracle(config: &ExperimentConfig, batch: usize) -> Result<Box<dyn ProxGradOracle>> {
    if config.sigma > 0.0 {
        Ok(Box::new(NoisyOracle {
            noise: NoiseModel::new(config.rho, config.sigma)?,
        }))
    } else {
        Ok(Box::new(MinibatchOracle { batch }))
    }
}

fn run_solver_once(
    config: &ExperimentConfig,
    built: &BuiltProblem,
    components: Option<&[Arc<dyn SmoothTerm>]>,
    gamma: f64,
    batch: usize,
    fstar: Option<f64>,
) -> Result<Trace> {
    let schedule = Schedule::new(gamma, batch, config.iterations)?;
    let problem = built.problem();
    let x0 = default_x0(config, problem.dimension);
    let mut rng = RngState::new(config.seed);
    match config.algorithm {
        AlgorithmKind::Spgm => {
            let oracle = make_oracle(config, batch)?;
            run_spgm(problem, oracle.as_ref(), &x0, schedule, &mut rng, fstar)
        }
        AlgorithmKind::Signprox => {
            let oracle = make_oracle(config, batch)?;
            run_signprox(problem, oracle.as_ref(), &x0, schedule, &mut rng, fstar)
        }
        AlgorithmKind::Signsgd => {
            let comps = components.expect("components built for signsgd");
            let weights = vec![1.0 / config.k as f64; config.k];
            run_signsgd(comps, &weights, &x0, schedule, &mut rng, fstar)
        }
        AlgorithmKind::PgmReference => {
            let oracle = crate::oracle::ExactOracle;
            run_spgm(problem, &oracle, &x0, schedule, &mut rng, fstar)
        }
        _ => unreachable!("theorem checks do not run a single solver"),
    }
}

/// Resolves the step size, including the `grid` protocol: run every grid
/// point at the configured seed and keep the step with the lowest final
/// objective (equivalently, lowest final normalized objective).
fn resolve_gamma(
    config: &ExperimentConfig,
    built: &BuiltProblem,
    components: Option<&[Arc<dyn SmoothTerm>]>,
    batch: usize,
) -> Result<(f64, String)> {
    match config.gamma {
        GammaSpec::Fixed(g) => Ok((g, "fixed".into())),
        GammaSpec::Theorem1 => {
            let s = match built {
                BuiltProblem::Lasso(inst, _) => {
                    Schedule::theorem1(inst.smooth_lipschitz, config.iterations)?
                }
                BuiltProblem::Phase(_, problem) => {
                    let mut rng = RngState::new(config.instance_seed).split(9000);
                    let prof = estimate_smoothness(problem, 100, &mut rng)?;
                    Schedule::theorem1(prof.scalar_l, config.iterations)?
                }
            };
            Ok((s.gamma, "theorem1".into()))
        }
        GammaSpec::Theorem2 => {
            let s = match built {
                BuiltProblem::Lasso(inst, _) => {
                    let problem = inst.problem()?;
                    let mut rng = RngState::new(config.instance_seed).split(9001);
                    let prof = estimate_smoothness(&problem, 100, &mut rng)?;
                    Schedule::theorem2(prof.coord_l_norm1(), config.iterations)?
                }
                BuiltProblem::Phase(_, problem) => {
                    let mut rng = RngState::new(config.instance_seed).split(9001);
                    let prof = estimate_smoothness(problem, 100, &mut rng)?;
                    Schedule::theorem2(prof.coord_l_norm1(), config.iterations)?
                }
            };
            Ok((s.gamma, "theorem2".into()))
        }
        GammaSpec::Grid => {
            if config.algorithm == AlgorithmKind::PgmReference {
                // The reference run takes 1/L from the smoothness estimate.
                let mut rng = RngState::new(config.instance_seed).split(9002);
                let prof = estimate_smoothness(built.problem(), 100, &mut rng)?;
                let g = 1.0 / prof.scalar_l.max(1e-12);
                return Ok((g, "1/L_estimated".into()));
            }
            let mut best: Option<(f64, f64)> = None;
            for g in gamma_grid() {
                let trace = run_solver_once(config, built, components, g, batch, None)?;
                if trace.divergence.is_some() {
                    continue;
                }
                let f = trace.final_record().objective;
                if f.is_finite() && best.map_or(true, |(bf, _)| f < bf) {
                    best = Some((f, g));
                }
            }
            let (_, g) = best.ok_or_else(|| Error::Divergence {
                iteration: 0,
                reason: "every grid step size diverged".into(),
            })?;
            Ok((g, "grid".into()))
        }
    }
}

/// Executes a validated config end to end and writes all artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    if let Some(dir) = config.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    match config.algorithm {
        AlgorithmKind::Theorem1 | AlgorithmKind::Theorem2 => run_theorem_check(config),
        _ => run_solver_experiment(config),
    }
}

fn run_theorem_check(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let built = build_problem(config)?;
    let inst = match &built {
        BuiltProblem::Lasso(inst, _) => inst.clone(),
        BuiltProblem::Phase(..) => unreachable!("validated at parse time"),
    };
    let rng = RngState::new(config.seed);
    let report = match config.algorithm {
        AlgorithmKind::Theorem1 => theorem1_check(&inst, config.iterations, config.seeds, &rng)?,
        _ => theorem2_check(&inst, config.iterations, config.seeds, &rng)?,
    };
    let block = report.to_text_block();
    std::fs::write(&config.out, &block)?;
    let csv_path = config.out.with_extension("csv");
    std::fs::write(
        &csv_path,
        format!("{}\n{}\n", report.csv_header(), report.to_csv_row()),
    )?;
    let mut summary = String::new();
    let _ = writeln!(summary, "# bound check");
    summary.push_str(&block);
    append_provenance(&mut summary, config, None);
    let summary_path = summary_path_for(&config.out);
    std::fs::write(&summary_path, &summary)?;
    Ok(RunArtifacts {
        trace_csv: None,
        summary_path,
        summary,
        trace: None,
        bound_report: Some(report),
    })
}

fn summary_path_for(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}_summary.txt"))
}

fn append_provenance(summary: &mut String, config: &ExperimentConfig, gamma: Option<(f64, &str)>) {
    let _ = writeln!(summary, "# resolved parameters");
    let _ = writeln!(
        summary,
        "problem = {}",
        match config.problem {
            ProblemKind::PhaseRetrieval => "phase_retrieval",
            ProblemKind::Lasso => "lasso",
        }
    );
    match config.problem {
        ProblemKind::PhaseRetrieval => {
            let _ = writeln!(summary, "side = {}", config.side);
            let _ = writeln!(summary, "m = {}", config.m);
            let _ = writeln!(summary, "tv_weight = {}", config.tv_weight);
        }
        ProblemKind::Lasso => {
            let _ = writeln!(summary, "n = {}", config.n);
            let _ = writeln!(summary, "m = {}", config.m);
            let _ = writeln!(summary, "condition = {}", config.condition);
            let _ = writeln!(summary, "lambda = {}", config.lambda);
        }
    }
    let _ = writeln!(summary, "K = {}", config.k);
    let _ = writeln!(summary, "algorithm = {}", config.algorithm.as_str());
    if let Some((g, how)) = gamma {
        let _ = writeln!(summary, "gamma = {g}  # {how}");
    }
    let _ = writeln!(summary, "T = {}", config.iterations);
    let _ = writeln!(summary, "rho = {}", config.rho);
    let _ = writeln!(summary, "sigma = {}", config.sigma);
    let _ = writeln!(summary, "seed = {}", config.seed);
    let _ = writeln!(summary, "instance_seed = {}", config.instance_seed);
    let _ = writeln!(
        summary,
        "x0 = {}",
        match config.problem {
            ProblemKind::PhaseRetrieval => "constant 0.5",
            ProblemKind::Lasso => "zeros",
        }
    );
    if !config.defaults_applied.is_empty() {
        let _ = writeln!(summary, "# defaults applied");
        for d in &config.defaults_applied {
            let _ = writeln!(summary, "{d}");
        }
    }
}

fn run_solver_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let built = build_problem(config)?;
    let components = if config.algorithm == AlgorithmKind::Signsgd {
        Some(row_block_components(config, &built)?)
    } else {
        None
    };
    let batch = match config.batch {
        BatchSpec::Fixed(b) => b,
        BatchSpec::MatchT => config.iterations,
    };
    let fstar = resolve_fstar(config, &built)?;
    let (gamma, gamma_how) = resolve_gamma(config, &built, components.as_deref(), batch)?;
    let trace = run_solver_once(
        config,
        &built,
        components.as_deref(),
        gamma,
        batch,
        Some(fstar),
    )?;

    write_trace_csv(&trace, &config.out)?;

    let mut summary = String::new();
    let last = trace.final_record();
    let _ = writeln!(summary, "# run summary");
    let _ = writeln!(summary, "final_objective = {}", last.objective);
    if let Some(nv) = last.normalized {
        let _ = writeln!(summary, "final_normalized_obj = {nv}");
    }
    let _ = writeln!(summary, "final_gmap_l2sq = {}", last.gmap_l2_sq);
    let _ = writeln!(summary, "final_gmap_l1 = {}", last.gmap_l1);
    let _ = writeln!(summary, "total_bits = {}", last.bits_cumulative);
    let _ = writeln!(summary, "fstar = {fstar}");
    let _ = writeln!(summary, "B = {batch}");
    if let Some(div) = &trace.divergence {
        let _ = writeln!(
            summary,
            "diverged_at = {}  # {}",
            div.iteration, div.reason
        );
    }
    append_provenance(&mut summary, config, Some((gamma, &gamma_how)));
    let summary_path = summary_path_for(&config.out);
    std::fs::write(&summary_path, &summary)?;

    if let Some(div) = &trace.divergence {
        return Err(Error::Divergence {
            iteration: div.iteration,
            reason: format!("{} (partial trace written to {})", div.reason, config.out.display()),
        });
    }

    Ok(RunArtifacts {
        trace_csv: Some(config.out.clone()),
        summary_path,
        summary,
        trace: Some(trace),
        bound_report: None,
    })
}
