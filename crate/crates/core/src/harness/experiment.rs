use serde::{Deserialize, Deserializer, Serialize};
use std::path::Path;
use std::sync::Arc;

use super::{benchmark_noise, build_diffusion_surrogate, HarnessError, SurrogateSpec};
use crate::eig::{EigEstimator, NoiseModel, PriorSpec};
use crate::models::{ConstantModel, ForwardModel, LinearGaussianModel};
use crate::optim::{
    rm_optimize, saa_optimize, BfgsOptions, Bounds, GainSchedule, GapEstimate, LineSearch, RmOptions, Termination,
};
use crate::polychaos::PCExpansion;
use crate::seed::derive_seed;

const TAG_CELL: u64 = 0x5EED_0001;
const TAG_REQUALITY: u64 = 0x5EED_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rm,
    Saa,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Rm => "rm",
            Algorithm::Saa => "saa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rm" => Some(Algorithm::Rm),
            "saa" => Some(Algorithm::Saa),
            _ => None,
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Algorithm::Rm => 1,
            Algorithm::Saa => 2,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Algorithm>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Algorithm),
        Many(Vec<Algorithm>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(a) => vec![a],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmSettings {
    pub beta: f64,
    pub max_iters: usize,
    pub stall_tol: f64,
    pub stall_patience: usize,
}

impl Default for RmSettings {
    fn default() -> Self {
        RmSettings {
            beta: 1.0,
            max_iters: 50,
            stall_tol: 1e-4,
            stall_patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaaSettings {
    /// Outer sample count of the lower-bound estimate; `min(10 N, 1001)`
    /// (at least `N + 1`) when absent.
    pub n_prime: Option<usize>,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub line_search: LineSearch,
}

impl Default for SaaSettings {
    fn default() -> Self {
        SaaSettings {
            n_prime: None,
            grad_tol: 1e-5,
            max_iters: 100,
            line_search: LineSearch::default(),
        }
    }
}

impl SaaSettings {
    pub fn n_prime_for(&self, n: usize) -> usize {
        self.n_prime.unwrap_or_else(|| (10 * n).min(1001).max(n + 1))
    }
}

/// Forward model used by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelChoice {
    /// Diffusion surrogate read from an expansion file.
    Surrogate { path: String },
    /// Diffusion surrogate built in process.
    BuildSurrogate {
        #[serde(default)]
        spec: SurrogateSpec,
    },
    /// `G = d θ`, `θ ~ N(0, 1)`, constant noise `alpha`, design in `[lower, upper]`.
    LinearGaussian { alpha: f64, lower: f64, upper: f64 },
    /// Outputs independent of `θ` and `d`.
    Constant { outputs: Vec<f64> },
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice::BuildSurrogate {
            spec: SurrogateSpec::default(),
        }
    }
}

/// Everything but the sample sizes of an estimator.
#[derive(Clone)]
pub struct ExperimentSetup {
    pub model: Arc<dyn ForwardModel>,
    pub noise: NoiseModel,
    pub prior: PriorSpec,
    pub design_bounds: Bounds,
}

impl ExperimentSetup {
    pub fn estimator(&self, n: usize, m: usize) -> Result<EigEstimator, HarnessError> {
        Ok(EigEstimator::new(
            self.model.clone(),
            self.noise.clone(),
            self.prior.clone(),
            n,
            m,
            self.design_bounds.clone(),
        )?)
    }

    pub fn from_surrogate(expansion: Arc<PCExpansion>) -> Result<Self, HarnessError> {
        Ok(ExperimentSetup {
            noise: benchmark_noise(expansion.n_outputs()),
            prior: PriorSpec::uniform_box(&expansion.theta_bounds())?,
            design_bounds: Bounds::from_pairs(&expansion.design_bounds())?,
            model: expansion,
        })
    }
}

impl ModelChoice {
    /// Relative surrogate paths resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<ExperimentSetup, HarnessError> {
        match self {
            ModelChoice::Surrogate { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full).map_err(|source| HarnessError::Io {
                    path: full.clone(),
                    source,
                })?;
                let expansion = PCExpansion::from_json(&text).map_err(|e| HarnessError::Format {
                    path: full,
                    message: e.to_string(),
                })?;
                ExperimentSetup::from_surrogate(Arc::new(expansion))
            }
            ModelChoice::BuildSurrogate { spec } => {
                let (expansion, _) = build_diffusion_surrogate(spec)?;
                ExperimentSetup::from_surrogate(Arc::new(expansion))
            }
            ModelChoice::LinearGaussian { alpha, lower, upper } => Ok(ExperimentSetup {
                model: Arc::new(LinearGaussianModel::new(1.0)),
                noise: NoiseModel::uniform(1, *alpha, 0.0)?,
                prior: PriorSpec::standard_normal(1)?,
                design_bounds: Bounds::new(vec![*lower], vec![*upper])?,
            }),
            ModelChoice::Constant { outputs } => Ok(ExperimentSetup {
                model: Arc::new(ConstantModel::new(outputs.clone(), 2, 2)),
                noise: NoiseModel::uniform(outputs.len(), 0.1, 0.1)?,
                prior: PriorSpec::uniform_box(&[(0.0, 1.0), (0.0, 1.0)])?,
                design_bounds: Bounds::unit(2),
            }),
        }
    }
}

fn default_requality() -> usize {
    1001
}

fn default_true() -> bool {
    true
}

/// JSON configuration of an experiment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub algorithm: Vec<Algorithm>,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(rename = "M_list")]
    pub m_list: Vec<usize>,
    #[serde(rename = "T")]
    pub runs: usize,
    pub seed: u64,
    #[serde(rename = "requality_N", default = "default_requality")]
    pub requality_n: usize,
    #[serde(rename = "requality_M", default = "default_requality")]
    pub requality_m: usize,
    #[serde(default)]
    pub rm: RmSettings,
    #[serde(default)]
    pub saa: SaaSettings,
    #[serde(default)]
    pub model: ModelChoice,
    /// Record wall-clock times; when false every time is written as 0 so
    /// that reports are byte-for-byte reproducible.
    #[serde(default = "default_true")]
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: vec![Algorithm::Rm, Algorithm::Saa],
            n_list: vec![1, 11, 101],
            m_list: vec![2, 11, 101],
            runs: 50,
            seed: 0,
            requality_n: 1001,
            requality_m: 1001,
            rm: RmSettings::default(),
            saa: SaaSettings::default(),
            model: ModelChoice::default(),
            timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.algorithm.is_empty() || self.n_list.is_empty() || self.m_list.is_empty() {
            return bad("algorithm, N_list and M_list must be non-empty");
        }
        if self.n_list.iter().chain(&self.m_list).any(|&v| v == 0) {
            return bad("sample sizes must be at least 1");
        }
        if self.runs == 0 || self.requality_n == 0 || self.requality_m == 0 {
            return bad("T and re-estimate sizes must be at least 1");
        }
        Ok(())
    }

    pub fn rm_options(&self, bounds: Bounds) -> Result<RmOptions, HarnessError> {
        let o = RmOptions {
            gain: GainSchedule::harmonic(self.rm.beta)?,
            max_iters: self.rm.max_iters,
            stall_tol: self.rm.stall_tol,
            stall_patience: self.rm.stall_patience,
            bounds,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn bfgs_options(&self, bounds: Bounds) -> Result<BfgsOptions, HarnessError> {
        let mut o = BfgsOptions::new(bounds);
        o.grad_tol = self.saa.grad_tol;
        o.max_iters = self.saa.max_iters;
        o.line_search = self.saa.line_search;
        o.validate()?;
        Ok(o)
    }
}

/// Seed handed to the optimizer driver for one matrix cell.
pub fn cell_seed(master: u64, algorithm: Algorithm, n: usize, m: usize) -> u64 {
    derive_seed(master, &[TAG_CELL, algorithm.tag(), n as u64, m as u64])
}

/// Seed of the high-quality re-estimate of replicate `t`.
pub fn requality_seed(master: u64, algorithm: Algorithm, n: usize, m: usize, t: usize) -> u64 {
    derive_seed(master, &[TAG_REQUALITY, algorithm.tag(), n as u64, m as u64, t as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub t: usize,
    pub design: Vec<f64>,
    pub termination: Termination,
    pub iters: usize,
    pub objective_evals: usize,
    pub gradient_evals: usize,
    pub wall_s: f64,
    /// High-quality re-estimate at the final design.
    pub u_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub t: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub replicates: Vec<ReplicateRecord>,
    pub gaps: Vec<GapEstimate>,
    pub failures: Vec<FailureRecord>,
}

impl CellResult {
    pub fn mean_runtime(&self) -> Option<f64> {
        (!self.replicates.is_empty())
            .then(|| self.replicates.iter().map(|r| r.wall_s).sum::<f64>() / self.replicates.len() as f64)
    }

    pub fn u_hats(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.u_hat).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrixResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
}

impl ExperimentMatrixResult {
    /// Largest re-estimate over every cell and algorithm.
    pub fn u_ref(&self) -> Option<f64> {
        self.cells
            .iter()
            .flat_map(|c| c.replicates.iter().map(|r| r.u_hat))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    }

    pub fn cell_mse(&self, cell: &CellResult) -> Option<f64> {
        let u_ref = self.u_ref()?;
        mse_of_cell(&cell.u_hats(), u_ref).ok()
    }
}

/// `(1/T) Σ_t (Û_t - U_ref)²`.
pub fn mse_of_cell(re_estimates: &[f64], u_ref: f64) -> Result<f64, HarnessError> {
    if re_estimates.is_empty() {
        return Err(HarnessError::Empty("re-estimates"));
    }
    Ok(re_estimates.iter().map(|u| (u - u_ref) * (u - u_ref)).sum::<f64>() / re_estimates.len() as f64)
}

/// Runs every `(algorithm, N, M)` cell of the matrix. Replicate starts are
/// uniform over the design box; each final design is re-estimated with
/// `requality_N × requality_M` samples drawn from a seed stream disjoint
/// from the optimization streams.
pub fn run_matrix(config: &ExperimentConfig, setup: &ExperimentSetup) -> Result<ExperimentMatrixResult, HarnessError> {
    config.validate()?;
    let requality = setup.estimator(config.requality_n, config.requality_m)?;
    let mut cells = Vec::new();
    for &algorithm in &config.algorithm {
        for &n in &config.n_list {
            for &m in &config.m_list {
                let est = setup.estimator(n, m)?;
                let seed = cell_seed(config.seed, algorithm, n, m);
                let mut cell = CellResult {
                    algorithm,
                    n,
                    m,
                    replicates: Vec::new(),
                    gaps: Vec::new(),
                    failures: Vec::new(),
                };
                let mut finished = Vec::new();
                match algorithm {
                    Algorithm::Rm => {
                        let opts = config.rm_options(setup.design_bounds.clone())?;
                        for (t, run) in rm_optimize(&est, config.runs, &opts, seed)?.into_iter().enumerate() {
                            match run {
                                Ok(trace) => finished.push((t, trace)),
                                Err(e) => cell.failures.push(FailureRecord { t, message: e.to_string() }),
                            }
                        }
                    }
                    Algorithm::Saa => {
                        let opts = config.bfgs_options(setup.design_bounds.clone())?;
                        let out = saa_optimize(&est, config.runs, config.saa.n_prime_for(n), &opts, seed)?;
                        for (t, e) in out.failures {
                            cell.failures.push(FailureRecord { t, message: e.to_string() });
                        }
                        cell.gaps = out.gaps;
                        finished.extend(out.replicates.into_iter().map(|r| (r.t, r.trace)));
                    }
                }
                for (t, trace) in finished {
                    let design = trace.final_iterate().to_vec();
                    match requality.eig_value_fresh(&design, requality_seed(config.seed, algorithm, n, m, t)) {
                        Ok(u_hat) => cell.replicates.push(ReplicateRecord {
                            t,
                            design,
                            termination: trace.termination,
                            iters: trace.iterations,
                            objective_evals: trace.n_objective_evals,
                            gradient_evals: trace.n_gradient_evals,
                            wall_s: if config.timing { trace.wall_time } else { 0.0 },
                            u_hat,
                        }),
                        Err(e) => cell.failures.push(FailureRecord {
                            t,
                            message: format!("re-estimate: {e}"),
                        }),
                    }
                }
                cell.failures.sort_by_key(|f| f.t);
                cells.push(cell);
            }
        }
    }
    Ok(ExperimentMatrixResult {
        config: config.clone(),
        cells,
    })
}
