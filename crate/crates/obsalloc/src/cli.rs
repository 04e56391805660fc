//! Command-line front end. Every command reads and writes files only, and
//! each file it writes gets a `<out>.manifest.json` describing the run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use obsalloc_core::allocation::{GreedyOptions, RankEstimator, RankSource};
use obsalloc_core::linsys::SystemModel;
use obsalloc_core::measurement::{cyclic_schedule, cyclic_schedule_restricted, MeasurementMatrix, Schedule};
use obsalloc_core::models::{build_model1_with_variances, build_model2, HvacConfig};
use obsalloc_core::oracle::{self, SearchOptions, SearchSpace};
use obsalloc_core::sysid::{self, DEFAULT_GAP_FACTOR, DEFAULT_RANK_TOL};
use serde::Serialize;

use crate::error::CliError;
use crate::formats::{
    AllocationFile, AllocationMatrixFile, MarkovFile, MinSensorsFile, ModelFile, RecoveredFile, ScheduleFile,
    TrajectoryFile,
};
use crate::harness::{self, AllocationParams, EstimatorKind, SweepParams, DEFAULT_HORIZONS};
use crate::manifest::{self, Recorder, RunManifest};
use crate::parallel;

#[derive(Debug, Parser)]
#[command(name = "obsalloc", version, about = "Learn Markov parameters from partial observations and allocate sensors")]
pub struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "OBSALLOC_THREADS")]
    pub threads: Option<usize>,
    /// On failure, print a JSON error object on stdout.
    #[arg(long, global = true)]
    pub error_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one of the benchmark models.
    #[command(subcommand)]
    GenModel(GenModel),
    /// Write a cyclic measurement schedule.
    Schedule(ScheduleCmd),
    /// Simulate trajectories under a schedule.
    Simulate(SimulateCmd),
    /// Estimate Markov parameters by row-wise least squares.
    Sysid(SysidCmd),
    /// Recover (A, B) from a fully measured Markov estimate.
    Recover(RecoverCmd),
    /// Ho-Kalman realization from the measured rows of a Markov estimate.
    HoKalman(HoKalmanCmd),
    /// Greedy sensor allocation.
    Allocate(AllocateCmd),
    /// Exhaustive references.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Benchmark sweeps and end-to-end allocations.
    Experiment(ExperimentCmd),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayCmd),
}

#[derive(Debug, Subcommand, Serialize)]
pub enum GenModel {
    /// Block-cyclic permutation system, every coordinate accessible.
    Model1(Model1Args),
    /// 20-zone thermal network with three accessible zones per block.
    Model2(Model2Args),
}

#[derive(Debug, Args, Serialize)]
pub struct Model1Args {
    #[arg(long, default_value_t = 1.0)]
    pub sigma_u2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_eta2: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Model2Args {
    /// Time step in seconds.
    #[arg(long, default_value_t = 35.0)]
    pub delta: f64,
    /// Environment temperature; only 0 is supported.
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xi_env: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xi_pair: f64,
    /// Zone thermal capacity.
    #[arg(long, default_value_t = 100.0)]
    pub v: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_u2: f64,
    /// Variance of the raw disturbance before the sqrt(delta)/v gain.
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_eta2: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Either a schedule file or the parameters of a cyclic schedule.
#[derive(Debug, Args, Serialize)]
pub struct ScheduleSource {
    #[arg(long, conflicts_with_all = ["n_bar", "s", "accessible"])]
    pub schedule: Option<PathBuf>,
    /// Sensors per trajectory.
    #[arg(long)]
    pub n_bar: Option<usize>,
    /// Minimum number of trajectories measuring each coordinate.
    #[arg(long)]
    pub s: Option<usize>,
    /// Cycle over the model's accessible coordinates only.
    #[arg(long)]
    pub accessible: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ScheduleCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n_bar: usize,
    #[arg(long)]
    pub s: usize,
    #[arg(long)]
    pub accessible: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub schedule: ScheduleSource,
    #[arg(long = "T")]
    pub horizon: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SysidCmd {
    /// Simulate from this model (needs --T and --seed).
    #[arg(long, required_unless_present = "trajectories")]
    pub model: Option<PathBuf>,
    /// Estimate from previously simulated trajectories.
    #[arg(long, conflicts_with_all = ["model", "schedule", "n_bar", "s", "accessible", "horizon", "seed"])]
    pub trajectories: Option<PathBuf>,
    #[command(flatten)]
    pub schedule: ScheduleSource,
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    /// Markov parameters estimated: G_0..G_d. Defaults to r for full
    /// schedules and 2r - 1 for restricted ones.
    #[arg(long)]
    pub rank_d: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RecoverCmd {
    #[arg(long)]
    pub markov: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct HoKalmanCmd {
    #[arg(long)]
    pub markov: PathBuf,
    /// Rows to realize from (1-based, comma separated); defaults to every
    /// measured row.
    #[arg(long)]
    pub rows: Option<String>,
    /// Realization order; defaults to the state dimension.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Minimum ratio sigma_r / sigma_(r+1) of the Hankel spectrum.
    #[arg(long, default_value_t = DEFAULT_GAP_FACTOR)]
    pub gap_factor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Direct,
    Hankel,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Direct => EstimatorKind::Direct,
            EstimatorArg::Hankel => EstimatorKind::Hankel,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AllocateCmd {
    #[arg(long, value_enum)]
    pub estimator: EstimatorArg,
    #[arg(long, required_unless_present = "a_hat")]
    pub markov: Option<PathBuf>,
    /// Recovered system (output of `recover`) for the direct estimator.
    #[arg(long, conflicts_with = "markov")]
    pub a_hat: Option<PathBuf>,
    /// `all`, `accessible`, or a 1-based comma separated list.
    #[arg(long, default_value = "all")]
    pub candidates: String,
    /// Model whose accessible set `--candidates accessible` refers to.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Singular value threshold; defaults to (1 / (s_min T))^(1/4).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub lazy: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum OracleCmd {
    /// Exhaustive minimal number of sensors.
    MinSensors(MinSensorsCmd),
    /// Exact observability rank of (A, C).
    Rank(RankCmd),
}

#[derive(Debug, Args, Serialize)]
pub struct MinSensorsCmd {
    #[arg(long)]
    pub model: PathBuf,
    /// Only search the model's accessible coordinates.
    #[arg(long)]
    pub accessible: bool,
    /// Search the whole state instead of each decoupled block separately.
    #[arg(long)]
    pub no_prune: bool,
    #[arg(long, default_value_t = oracle::DEFAULT_MAX_CANDIDATES)]
    pub max_candidates: usize,
    #[arg(long, default_value_t = oracle::DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RankCmd {
    #[arg(long)]
    pub model: PathBuf,
    /// 1-based, comma separated.
    #[arg(long)]
    pub coords: String,
    #[arg(long, default_value_t = oracle::DEFAULT_REL_TOL)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Model1,
    Model2,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["sweep", "allocate"])))]
pub struct ExperimentCmd {
    #[arg(value_enum)]
    pub benchmark: Benchmark,
    /// Markov error against horizon, written as CSV.
    #[arg(long)]
    pub sweep: bool,
    /// Stage one followed by greedy allocation.
    #[arg(long)]
    pub allocate: bool,
    #[arg(long, default_value_t = 5)]
    pub n_bar: usize,
    /// Trajectory counts (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Horizons (comma separated).
    #[arg(long = "T", value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long)]
    pub rank_d: Option<usize>,
    /// First seed; sweeps use `seed .. seed + replicates`.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub replicates: u64,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub lazy: bool,
    /// Write 0 in the wall-time column so sweeps are reproducible byte for
    /// byte.
    #[arg(long)]
    pub omit_timing: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Dense 0/1 allocation matrix; defaults to `<out stem>.matrix.json`.
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
    /// Also write the stage-one Markov estimate.
    #[arg(long)]
    pub markov_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayCmd {
    pub manifest: PathBuf,
    /// Fail unless every recorded output is reproduced byte for byte.
    #[arg(long)]
    pub check: bool,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute_with_threads(cli.threads, &cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if cli.error_json {
                println!("{}", serde_json::to_string(&e.report()).expect("error report serializes"));
            }
            e.exit_code()
        }
    }
}

fn execute_with_threads(threads: Option<usize>, command: &Command, argv: &[String]) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| execute(command, argv))
}

/// `argv` without the program path and the execution-only flags, neither
/// of which affects outputs.
fn recorded_argv(argv: &[String]) -> Vec<String> {
    let mut out = vec![String::from("obsalloc")];
    let mut skip_next = false;
    for a in argv.iter().skip(1) {
        if skip_next {
            skip_next = false;
        } else if a == "--threads" {
            skip_next = true;
        } else if !(a.starts_with("--threads=") || a == "--error-json") {
            out.push(a.clone());
        }
    }
    out
}

struct Run<'a> {
    name: &'static str,
    argv: &'a [String],
    rec: Recorder,
}

impl<'a> Run<'a> {
    fn new(name: &'static str, argv: &'a [String]) -> Self {
        Run { name, argv, rec: Recorder::default() }
    }

    fn load_model(&mut self, path: &Path) -> Result<(SystemModel, Option<Vec<usize>>), CliError> {
        self.rec.read_json::<ModelFile>(path)?.to_model()
    }

    /// Writes the manifest next to `out`.
    fn finish<P: Serialize>(self, out: &Path, params: &P, seed: Option<u64>) -> Result<(), CliError> {
        let manifest = RunManifest {
            subcommand: self.name.into(),
            params: serde_json::to_value(params)?,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            argv: recorded_argv(self.argv),
            inputs: self.rec.inputs,
            outputs: self.rec.outputs,
        };
        crate::formats::write_json(&manifest::manifest_path(out), &manifest)
    }
}

fn parse_coords(r: usize, list: &str) -> Result<Vec<usize>, CliError> {
    let mut coords = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let c: usize = part.parse().map_err(|_| CliError::Usage(format!("not a coordinate: {part:?}")))?;
        if c == 0 || c > r {
            return Err(CliError::Usage(format!("coordinate {c} outside 1..={r}")));
        }
        coords.push(c - 1);
    }
    Ok(coords)
}

fn require_accessible(accessible: Option<Vec<usize>>) -> Result<Vec<usize>, CliError> {
    accessible.ok_or_else(|| CliError::Usage("the model declares no accessible set".into()))
}

fn resolve_schedule(
    run: &mut Run,
    src: &ScheduleSource,
    r: usize,
    accessible: Option<Vec<usize>>,
) -> Result<Schedule, CliError> {
    if let Some(path) = &src.schedule {
        let schedule = run.rec.read_json::<ScheduleFile>(path)?.to_schedule()?;
        if schedule.r() != r {
            return Err(CliError::Format(format!("schedule is over {} coordinates, model has {r}", schedule.r())));
        }
        return Ok(schedule);
    }
    let (Some(n_bar), Some(s)) = (src.n_bar, src.s) else {
        return Err(CliError::Usage("give --schedule or both --n-bar and --s".into()));
    };
    Ok(if src.accessible {
        cyclic_schedule_restricted(r, &require_accessible(accessible)?, n_bar, s)?
    } else {
        cyclic_schedule(r, n_bar, s)?
    })
}

fn default_d(r: usize, schedule: &Schedule) -> usize {
    let covered = obsalloc_core::measurement::coverage(schedule).measured.len();
    if covered == r {
        r
    } else {
        2 * r - 1
    }
}

fn execute(command: &Command, argv: &[String]) -> Result<(), CliError> {
    match command {
        Command::GenModel(cmd) => gen_model(cmd, argv),
        Command::Schedule(cmd) => schedule(cmd, argv),
        Command::Simulate(cmd) => simulate(cmd, argv),
        Command::Sysid(cmd) => sysid_cmd(cmd, argv),
        Command::Recover(cmd) => recover(cmd, argv),
        Command::HoKalman(cmd) => ho_kalman(cmd, argv),
        Command::Allocate(cmd) => allocate(cmd, argv),
        Command::Oracle(OracleCmd::MinSensors(cmd)) => min_sensors(cmd, argv),
        Command::Oracle(OracleCmd::Rank(cmd)) => rank(cmd, argv),
        Command::Experiment(cmd) => experiment(cmd, argv),
        Command::Replay(cmd) => replay(cmd),
    }
}

fn gen_model(cmd: &GenModel, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("gen-model", argv);
    let (file, out) = match cmd {
        GenModel::Model1(a) => {
            let model = build_model1_with_variances(a.sigma_u2, a.sigma_w2, a.sigma_eta2)?;
            (ModelFile::from_model(&model, None), &a.out)
        }
        GenModel::Model2(a) => {
            let cfg = HvacConfig {
                delta: a.delta,
                theta: a.theta,
                xi_env: a.xi_env,
                xi_pair: a.xi_pair,
                v: a.v,
                sigma_u2: a.sigma_u2,
                sigma_w2: a.sigma_w2,
                sigma_eta2: a.sigma_eta2,
                ..HvacConfig::default()
            };
            let (model, accessible) = build_model2(&cfg)?;
            (ModelFile::from_model(&model, Some(&accessible)), &a.out)
        }
    };
    run.rec.write_json(out, &file)?;
    run.finish(out, cmd, None)
}

fn schedule(cmd: &ScheduleCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("schedule", argv);
    let (model, accessible) = run.load_model(&cmd.model)?;
    let src = ScheduleSource { schedule: None, n_bar: Some(cmd.n_bar), s: Some(cmd.s), accessible: cmd.accessible };
    let schedule = resolve_schedule(&mut run, &src, model.r(), accessible)?;
    run.rec.write_json(&cmd.out, &ScheduleFile::from_schedule(&schedule))?;
    run.finish(&cmd.out, cmd, None)
}

fn simulate(cmd: &SimulateCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("simulate", argv);
    let (model, accessible) = run.load_model(&cmd.model)?;
    let schedule = resolve_schedule(&mut run, &cmd.schedule, model.r(), accessible)?;
    let trajs = parallel::simulate_schedule(&model, &schedule, cmd.horizon, cmd.seed)?;
    let file = TrajectoryFile::from_data(&schedule, model.m(), cmd.seed, &trajs);
    run.rec.write_json(&cmd.out, &file)?;
    run.finish(&cmd.out, cmd, Some(cmd.seed))
}

fn sysid_cmd(cmd: &SysidCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("sysid", argv);
    let (est, seed) = if let Some(path) = &cmd.trajectories {
        let file: TrajectoryFile = run.rec.read_json(path)?;
        let (schedule, trajs) = file.to_data()?;
        let d = cmd.rank_d.unwrap_or_else(|| default_d(schedule.r(), &schedule));
        (parallel::estimate_markov(&schedule, &trajs, d)?, Some(file.seed))
    } else {
        let path = cmd.model.as_ref().expect("clap requires --model without --trajectories");
        let seed = cmd.seed.ok_or_else(|| CliError::Usage("--seed is required when simulating".into()))?;
        let horizon = cmd.horizon.ok_or_else(|| CliError::Usage("--T is required when simulating".into()))?;
        let (model, accessible) = run.load_model(path)?;
        let schedule = resolve_schedule(&mut run, &cmd.schedule, model.r(), accessible)?;
        let d = cmd.rank_d.unwrap_or_else(|| default_d(model.r(), &schedule));
        (parallel::simulate_and_estimate(&model, &schedule, horizon, seed, d)?, Some(seed))
    };
    run.rec.write_json(&cmd.out, &MarkovFile::from_estimate(&est))?;
    run.finish(&cmd.out, cmd, seed)
}

fn recover(cmd: &RecoverCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("recover", argv);
    let est = run.rec.read_json::<MarkovFile>(&cmd.markov)?.to_estimate()?;
    let rec = sysid::recover_ab(&est, cmd.rank_tol)?;
    let file = RecoveredFile::from_recovered(&rec, None, Some((est.stats.s_min, est.horizon)));
    run.rec.write_json(&cmd.out, &file)?;
    run.finish(&cmd.out, cmd, None)
}

fn ho_kalman(cmd: &HoKalmanCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("ho-kalman", argv);
    let est = run.rec.read_json::<MarkovFile>(&cmd.markov)?.to_estimate()?;
    let rows = match &cmd.rows {
        Some(list) => parse_coords(est.r, list)?,
        None => est.measured(),
    };
    let restricted = est.restrict(&rows)?;
    let rec = sysid::ho_kalman(&restricted, cmd.order.unwrap_or(est.r), cmd.rank_tol, cmd.gap_factor)?;
    let file = RecoveredFile::from_recovered(&rec, Some(&restricted.rows), Some((est.stats.s_min, est.horizon)));
    run.rec.write_json(&cmd.out, &file)?;
    run.finish(&cmd.out, cmd, None)
}

fn allocate(cmd: &AllocateCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("allocate", argv);
    let model_accessible = match &cmd.model {
        Some(path) => run.load_model(path)?.1,
        None => None,
    };
    let (estimator, measured) = match (cmd.estimator, &cmd.markov, &cmd.a_hat) {
        (EstimatorArg::Hankel, None, _) => {
            return Err(CliError::Usage("the hankel estimator needs --markov".into()));
        }
        (kind, Some(path), _) => {
            let est = run.rec.read_json::<MarkovFile>(path)?.to_estimate()?;
            (harness::estimator_for(&est, kind.into(), cmd.threshold)?, Some(est.measured()))
        }
        (EstimatorArg::Direct, None, Some(path)) => {
            let file: RecoveredFile = run.rec.read_json(path)?;
            let source = RankSource::Direct { a_hat: file.a_hat()? };
            let estimator = match (cmd.threshold, file.s_min, file.horizon) {
                (Some(t), _, _) => RankEstimator::new(source, t)?,
                (None, Some(s_min), Some(t)) => RankEstimator::from_stage_one(source, s_min, t)?,
                _ => {
                    return Err(CliError::Usage(
                        "this A_hat carries no stage-one statistics; pass --threshold".into(),
                    ))
                }
            };
            (estimator, None)
        }
        (EstimatorArg::Direct, None, None) => unreachable!("clap requires --markov or --a-hat"),
    };
    let r = estimator.r();
    let candidates = match cmd.candidates.as_str() {
        "all" => (0..r).collect(),
        "accessible" => match (model_accessible, measured) {
            (Some(j), _) => j,
            (None, Some(measured)) => measured,
            (None, None) => return Err(CliError::Usage("`accessible` needs --model or --markov".into())),
        },
        list => parse_coords(r, list)?,
    };
    let result = parallel::greedy_allocate(&estimator, &candidates, GreedyOptions { lazy: cmd.lazy })?;
    run.rec.write_json(&cmd.out, &AllocationFile::from_result(&result, estimator.threshold()))?;
    println!("{}", join_one_based(result.allocation.coords()));
    run.finish(&cmd.out, cmd, None)
}

fn join_one_based(coords: &[usize]) -> String {
    coords.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(",")
}

fn min_sensors(cmd: &MinSensorsCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("oracle min-sensors", argv);
    let (model, accessible) = run.load_model(&cmd.model)?;
    let (candidates, space) = if cmd.accessible {
        (require_accessible(accessible)?, SearchSpace::Restricted)
    } else {
        ((0..model.r()).collect(), SearchSpace::All)
    };
    let opts = SearchOptions { rel_tol: cmd.rel_tol, max_candidates: cmd.max_candidates, prune_blocks: !cmd.no_prune };
    let min = oracle::minimal_sensor_count(model.a(), &candidates, space, opts)?;
    println!("{}", min.n_star);
    match &cmd.out {
        Some(out) => {
            run.rec.write_json(out, &MinSensorsFile::from_minimal(&min))?;
            run.finish(out, cmd, None)
        }
        None => Ok(()),
    }
}

fn rank(cmd: &RankCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("oracle rank", argv);
    let (model, _) = run.load_model(&cmd.model)?;
    let c = MeasurementMatrix::new(model.r(), parse_coords(model.r(), &cmd.coords)?)?;
    println!("{}", oracle::exact_observability_rank(model.a(), &c, cmd.rel_tol)?);
    Ok(())
}

fn experiment(cmd: &ExperimentCmd, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("experiment", argv);
    let (model, accessible) = match cmd.benchmark {
        Benchmark::Model1 => (obsalloc_core::models::build_model1(), None),
        Benchmark::Model2 => {
            let (m, j) = build_model2(&HvacConfig::default())?;
            (m, Some(j))
        }
    };
    let r = model.r();
    let d = cmd.rank_d.unwrap_or(if accessible.is_some() { 2 * r - 1 } else { r });
    if cmd.sweep {
        let default_ks = match cmd.benchmark {
            Benchmark::Model1 => vec![4, 8, 16],
            Benchmark::Model2 => vec![6, 12],
        };
        let params = SweepParams {
            n_bar: cmd.n_bar,
            ks: cmd.k.clone().unwrap_or(default_ks),
            horizons: cmd.horizons.clone().unwrap_or_else(|| DEFAULT_HORIZONS.to_vec()),
            d,
            seeds: (0..cmd.replicates).map(|i| cmd.seed + i).collect(),
            accessible,
        };
        let rows = harness::run_error_sweep(&model, &params)?;
        run.rec.write(&cmd.out, harness::sweep_csv(&rows, cmd.omit_timing).as_bytes())?;
    } else {
        let k = match cmd.k.as_deref() {
            None => match cmd.benchmark {
                Benchmark::Model1 => 16,
                Benchmark::Model2 => 12,
            },
            Some([k]) => *k,
            Some(_) => return Err(CliError::Usage("--allocate takes a single --k".into())),
        };
        let horizon = match cmd.horizons.as_deref() {
            None => 20000,
            Some([t]) => *t,
            Some(_) => return Err(CliError::Usage("--allocate takes a single --T".into())),
        };
        let estimator = cmd.estimator.map(EstimatorKind::from).unwrap_or(match cmd.benchmark {
            Benchmark::Model1 => EstimatorKind::Direct,
            Benchmark::Model2 => EstimatorKind::Hankel,
        });
        let params = AllocationParams {
            n_bar: cmd.n_bar,
            k,
            horizon,
            d,
            seed: cmd.seed,
            estimator,
            threshold: cmd.threshold,
            lazy: cmd.lazy,
            candidates: None,
        };
        let outcome = harness::run_allocation_experiment(&model, accessible.as_deref(), &params)?;
        run.rec.write_json(&cmd.out, &AllocationFile::from_result(&outcome.result, outcome.threshold))?;
        let matrix_out = cmd.matrix_out.clone().unwrap_or_else(|| matrix_path(&cmd.out));
        run.rec.write_json(&matrix_out, &AllocationMatrixFile::from_result(&outcome.result))?;
        if let Some(path) = &cmd.markov_out {
            run.rec.write_json(path, &MarkovFile::from_estimate(&outcome.estimate))?;
        }
        println!("{}", join_one_based(outcome.result.allocation.coords()));
    }
    run.finish(&cmd.out, cmd, Some(cmd.seed))
}

fn matrix_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.matrix.json"))
}

fn replay(cmd: &ReplayCmd) -> Result<(), CliError> {
    let manifest = manifest::read_manifest(&cmd.manifest)?;
    let changed = manifest::stale_files(&manifest.inputs);
    if !changed.is_empty() {
        return Err(CliError::Format(format!("inputs changed since the recorded run: {}", changed.join(", "))));
    }
    let cli = Cli::try_parse_from(&manifest.argv).map_err(|e| CliError::Format(format!("recorded argv: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Format("a manifest cannot record a replay".into()));
    }
    execute(&cli.command, &manifest.argv)?;
    if cmd.check {
        let differing = manifest::stale_files(&manifest.outputs);
        if !differing.is_empty() {
            return Err(CliError::Format(format!("outputs not reproduced: {}", differing.join(", "))));
        }
    }
    Ok(())
}
