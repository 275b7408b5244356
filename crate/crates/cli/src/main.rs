use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eigopt::harness::*;
use eigopt::models::{DiffusionModel, DiffusionSolver, FieldHistory};
use eigopt::optim::*;
use eigopt::polychaos::PCExpansion;
use serde_json::json;

#[derive(Parser)]
#[command(name = "eigopt", version, about = "Stochastic optimization of expected information gain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or check a polynomial-chaos surrogate of the diffusion model
    #[command(subcommand)]
    Surrogate(SurrogateCmd),
    /// Estimate expected information gain
    #[command(subcommand)]
    Eig(EigCmd),
    /// Run replicated optimizations
    #[command(subcommand)]
    Optimize(OptimizeCmd),
    /// Solve the diffusion model directly
    #[command(subcommand)]
    Model(ModelCmd),
    /// Run an (algorithm, N, M) experiment matrix
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Subcommand)]
enum SurrogateCmd {
    Build {
        /// Surrogate spec JSON; defaults apply when absent
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "surrogate.json")]
        out: PathBuf,
    },
    Check {
        #[arg(long)]
        surrogate: PathBuf,
        /// Spec JSON whose model settings the surrogate was built with
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct ModelSource {
    /// Expansion JSON written by `surrogate build`; the default surrogate is
    /// built in process when absent
    #[arg(long)]
    surrogate: Option<PathBuf>,
}

impl ModelSource {
    fn setup(&self) -> Result<ExperimentSetup> {
        let expansion = match &self.surrogate {
            Some(p) => read_expansion(p)?,
            None => build_diffusion_surrogate(&SurrogateSpec::default())?.0,
        };
        Ok(ExperimentSetup::from_surrogate(Arc::new(expansion))?)
    }
}

#[derive(Subcommand)]
enum EigCmd {
    Eval {
        #[arg(long, value_delimiter = ',', required = true)]
        design: Vec<f64>,
        #[arg(long = "n", default_value_t = 101)]
        n: usize,
        #[arg(long = "m", default_value_t = 101)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Estimates on a K×K design grid, all from one sample set
    Surface {
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long = "n", default_value_t = 1001)]
        n: usize,
        #[arg(long = "m", default_value_t = 101)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        source: ModelSource,
    },
}

#[derive(Args)]
struct RunCommon {
    #[arg(long = "n", default_value_t = 101)]
    n: usize,
    #[arg(long = "m", default_value_t = 101)]
    m: usize,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "requality-n", default_value_t = 1001)]
    requality_n: usize,
    #[arg(long = "requality-m", default_value_t = 1001)]
    requality_m: usize,
    /// Directory receiving runs.csv and summary.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    source: ModelSource,
}

#[derive(Subcommand)]
enum OptimizeCmd {
    Rm {
        #[command(flatten)]
        common: RunCommon,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long = "max-iters", default_value_t = 50)]
        max_iters: usize,
    },
    Saa {
        #[command(flatten)]
        common: RunCommon,
        #[arg(long = "n-prime")]
        n_prime: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Print the observations at one sensor
    Solve {
        #[arg(long, value_delimiter = ',', required = true)]
        src: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        sensor: Vec<f64>,
    },
    /// Write the grid field at one time as CSV
    Field {
        #[arg(long, value_delimiter = ',', required = true)]
        src: Vec<f64>,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_expansion(path: &Path) -> Result<PCExpansion> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    PCExpansion::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_spec(path: Option<&PathBuf>) -> Result<SurrogateSpec> {
    match path {
        None => Ok(SurrogateSpec::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn point(v: &[f64], what: &str) -> Result<[f64; 2]> {
    match v {
        [x, y] => Ok([*x, *y]),
        _ => bail!("{what} needs two comma-separated coordinates, got {}", v.len()),
    }
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    })
}

fn surrogate(cmd: SurrogateCmd) -> Result<()> {
    match cmd {
        SurrogateCmd::Build { config, out } => {
            let spec = read_spec(config.as_ref())?;
            let (expansion, report) = build_diffusion_surrogate(&spec)?;
            fs::write(&out, expansion.to_json()).with_context(|| format!("writing {}", out.display()))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        SurrogateCmd::Check {
            surrogate,
            config,
            samples,
            seed,
        } => {
            let expansion = read_expansion(&surrogate)?;
            let model = DiffusionModel::new(read_spec(config.as_ref())?.model)?;
            let check = check_surrogate(&expansion, &model, samples, seed)?;
            println!("{}", serde_json::to_string_pretty(&check)?);
        }
    }
    Ok(())
}

fn eig(cmd: EigCmd) -> Result<()> {
    match cmd {
        EigCmd::Eval {
            design,
            n,
            m,
            seed,
            source,
        } => {
            let est = source.setup()?.estimator(n, m)?;
            let r = est.eig_gradient(&design, &est.draw_sample_set(seed))?;
            println!(
                "{}",
                json!({"value": r.value, "gradient": r.gradient, "n_model_evals": r.n_model_evals})
            );
        }
        EigCmd::Surface {
            grid,
            n,
            m,
            seed,
            out,
            source,
        } => {
            if grid < 2 {
                bail!("--grid must be at least 2");
            }
            let setup = source.setup()?;
            let est = setup.estimator(n, m)?;
            let b = &setup.design_bounds;
            if b.dim() != 2 {
                bail!("surface needs a two-dimensional design");
            }
            let samples = est.draw_sample_set(seed);
            let mut w = csv::Writer::from_writer(output(out.as_ref())?);
            w.write_record(["x", "y", "u_hat"])?;
            for j in 0..grid {
                for i in 0..grid {
                    let f = |k: usize, a: usize| b.lower()[a] + (b.upper()[a] - b.lower()[a]) * k as f64 / (grid - 1) as f64;
                    let d = [f(i, 0), f(j, 1)];
                    let u = est.eig_value(&d, &samples)?;
                    w.serialize((d[0], d[1], u))?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct RunRow {
    t: usize,
    x: f64,
    y: Option<f64>,
    objective: Option<f64>,
    u_hat: f64,
    gap: Option<f64>,
    variance: Option<f64>,
    iters: usize,
    wall_s: f64,
    termination: String,
}

fn optimize(cmd: OptimizeCmd) -> Result<()> {
    let (common, algorithm) = match &cmd {
        OptimizeCmd::Rm { common, .. } => (common, Algorithm::Rm),
        OptimizeCmd::Saa { common, .. } => (common, Algorithm::Saa),
    };
    let setup = common.source.setup()?;
    let est = setup.estimator(common.n, common.m)?;
    let requality = setup.estimator(common.requality_n, common.requality_m)?;
    let seed = cell_seed(common.seed, algorithm, common.n, common.m);

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut push = |t: usize, trace: &OptimizationTrace, objective: Option<f64>, gap: Option<&GapEstimate>| -> Result<()> {
        let d = trace.final_iterate();
        let u_hat = requality.eig_value_fresh(d, requality_seed(common.seed, algorithm, common.n, common.m, t))?;
        rows.push(RunRow {
            t,
            x: d[0],
            y: d.get(1).copied(),
            objective,
            u_hat,
            gap: gap.map(|g| g.gap),
            variance: gap.map(|g| g.variance),
            iters: trace.iterations,
            wall_s: trace.wall_time,
            termination: trace.termination.to_string(),
        });
        Ok(())
    };
    let mut extra = serde_json::Map::new();
    match &cmd {
        OptimizeCmd::Rm { beta, max_iters, .. } => {
            let mut opts = RmOptions::new(setup.design_bounds.clone());
            opts.gain = GainSchedule::harmonic(*beta)?;
            opts.max_iters = *max_iters;
            for (t, r) in rm_optimize(&est, common.runs, &opts, seed)?.into_iter().enumerate() {
                match r {
                    Ok(trace) => push(t, &trace, None, None)?,
                    Err(e) => failures.push(json!({"t": t, "message": e.to_string()})),
                }
            }
            extra.insert("beta".into(), json!(beta));
            extra.insert("max_iters".into(), json!(max_iters));
        }
        OptimizeCmd::Saa { n_prime, .. } => {
            let n_prime = n_prime.unwrap_or_else(|| SaaSettings::default().n_prime_for(common.n));
            let opts = BfgsOptions::new(setup.design_bounds.clone());
            let out = saa_optimize(&est, common.runs, n_prime, &opts, seed)?;
            for r in &out.replicates {
                let gap = out.gaps.iter().find(|g| g.t == r.t);
                push(r.t, &r.trace, Some(r.optimum), gap)?;
            }
            for (t, e) in &out.failures {
                failures.push(json!({"t": t, "message": e.to_string()}));
            }
            extra.insert("n_prime".into(), json!(n_prime));
            extra.insert("upper".into(), json!(out.upper));
        }
    }

    fs::create_dir_all(&common.out)?;
    let csv_path = common.out.join("runs.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let u: Vec<f64> = rows.iter().map(|r| r.u_hat).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let mut summary = json!({
        "algorithm": algorithm.as_str(),
        "N": common.n,
        "M": common.m,
        "T": common.runs,
        "seed": common.seed,
        "requality_N": common.requality_n,
        "requality_M": common.requality_m,
        "completed": rows.len(),
        "failures": failures,
        "mean_u_hat": mean(&u),
        "mean_runtime_s": mean(&rows.iter().map(|r| r.wall_s).collect::<Vec<_>>()),
        "mean_gap": mean(&gaps),
    });
    summary.as_object_mut().unwrap().extend(extra);
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(common.out.join("summary.json"), text.clone() + "\n")?;
    println!("{text}");
    Ok(())
}

fn model(cmd: ModelCmd) -> Result<()> {
    match cmd {
        ModelCmd::Solve { src, sensor } => {
            let model = DiffusionModel::new(Default::default())?;
            let (src, sensor) = (point(&src, "--src")?, point(&sensor, "--sensor")?);
            let history = model.solve_observation_times(src)?;
            let values = model.observe(&history, sensor)?;
            println!("{}", json!({"times": model.solver().config().obs_times, "values": values}));
        }
        ModelCmd::Field { src, time, out } => {
            let solver = DiffusionSolver::new(Default::default())?;
            let history = solver.solve_at(point(&src, "--src")?, &[time])?;
            write_field(&solver, &history, out.as_ref())?;
        }
    }
    Ok(())
}

fn write_field(solver: &DiffusionSolver, history: &FieldHistory, out: Option<&PathBuf>) -> Result<()> {
    let n = solver.grid_n();
    let u = history.level(0);
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["x", "y", "w"])?;
    for j in 0..n {
        for i in 0..n {
            w.serialize((solver.coordinate(i), solver.coordinate(j), u[j * n + i]))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn experiment(cmd: ExperimentCmd) -> Result<()> {
    let ExperimentCmd::Matrix { config, out } = cmd;
    let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    let base = config.parent().unwrap_or(Path::new("."));
    let setup = cfg.model.resolve(base)?;
    let result = run_matrix(&cfg, &setup)?;
    for p in emit_reports(&result, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Surrogate(c) => surrogate(c),
        Command::Eig(c) => eig(c),
        Command::Optimize(c) => optimize(c),
        Command::Model(c) => model(c),
        Command::Experiment(c) => experiment(c),
    }
}
