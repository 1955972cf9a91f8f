//! `fanet`: plan, build topologies, assign powers and simulate UAV missions.
//!
//! Exit codes: 0 success, 2 invalid input, 3 no feasible solution, 1 other
//! failures.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fanet_core::kinematics::{positions_over_slots, validate_all};
use fanet_core::planner::train::write_log_csv;
use fanet_core::planner::{load_checkpoint, save_checkpoint, train, InstanceConfig, ModelConfig, TrainConfig};
use fanet_core::power;
use fanet_core::scenario::load_scenario;
use fanet_core::simulator::{
    self, emit_report, read_report, render_files, square_area, write_text, FailureModel, PlanSummary, PlannerChoice, SimOptions, SquareAreaConfig,
    TopoChoice,
};
use fanet_core::topology::optimize_series;
use fanet_core::{Error, Scenario, TrajectorySet};

#[derive(Parser, Debug)]
#[command(name = "fanet", version, about = "Multi-UAV coverage planning and FANET topology/power optimization")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expand a terrain scenario (or a preset) into explicit waypoints.
    Gen(GenArgs),
    /// Plan routes.
    Plan(PlanArgs),
    /// Build per-slot topologies for a plan.
    Topo(TopoArgs),
    /// C-TOP topology plus throughput-maximizing powers.
    Power(PlanSource),
    /// Full pipeline with metrics.
    Simulate(SimulateArgs),
    /// Train the attention planner.
    Train(TrainArgs),
    /// Re-render CSV files from a report.json.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Synthesize instead of reading --scenario.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// UAV count for the preset.
    #[arg(long, default_value_t = 4)]
    uavs: usize,
    /// Slot count for the preset.
    #[arg(long, default_value_t = 50)]
    slots: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// 500 m x 500 m square with a Gaussian waypoint cloud.
    SquareArea,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PlannerArg {
    Trained,
    Heuristic,
    Oracle,
}

#[derive(Args, Debug)]
struct PlannerArgs {
    #[arg(long, value_enum, default_value = "heuristic")]
    planner: PlannerArg,
    /// Checkpoint for --planner trained.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Args, Debug)]
struct PlanSource {
    /// Use this plan.json instead of planning.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Ctop,
    Mtp,
    Lmst,
    /// Every algorithm on the same plan (simulate only).
    All,
}

impl AlgoArg {
    fn choices(self) -> Vec<TopoChoice> {
        match self {
            AlgoArg::Ctop => vec![TopoChoice::Ctop],
            AlgoArg::Mtp => vec![TopoChoice::Mtp],
            AlgoArg::Lmst => vec![TopoChoice::Lmst],
            AlgoArg::All => TopoChoice::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
struct TopoArgs {
    #[arg(long, value_enum, default_value = "ctop")]
    algo: AlgoArg,
    #[command(flatten)]
    source: PlanSource,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FailureArg {
    Frozen,
    Recompute,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "ctop")]
    algo: AlgoArg,
    /// Slot at which UAVs are disconnected for the connectivity rate
    /// (default round(0.3 N)).
    #[arg(long)]
    n_dc: Option<usize>,
    #[arg(long, value_enum, default_value = "frozen")]
    failure: FailureArg,
    #[command(flatten)]
    source: PlanSource,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value_t = 1)]
    uavs: usize,
    #[arg(long, default_value_t = 10)]
    waypoints: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    heads: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 512)]
    ff_hidden: usize,
    #[arg(long, default_value_t = 256)]
    validation: usize,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// report.json to render; defaults to <out>/report.json.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_validation() => 2,
        Some(err) if err.is_infeasibility() => 3,
        _ => 1,
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Gen(args) => gen(cli, args),
        Command::Plan(args) => plan_cmd(cli, args),
        Command::Topo(args) => topo_cmd(cli, args),
        Command::Power(args) => power_cmd(cli, args),
        Command::Simulate(args) => simulate_cmd(cli, args),
        Command::Train(args) => train_cmd(cli, args),
        Command::Report(args) => report_cmd(cli, args),
    }
}

/// Bad flag combinations count as invalid input (exit code 2).
fn usage(field: &str, message: &str) -> anyhow::Error {
    Error::Validation { field: field.into(), message: message.into() }.into()
}

fn scenario(cli: &Cli) -> anyhow::Result<Scenario> {
    let Some(path) = &cli.scenario else {
        return Err(usage("scenario", "--scenario is required for this command"));
    };
    Ok(load_scenario(path)?)
}

fn out_dir(cli: &Cli) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    Ok(&cli.out)
}

fn planner(args: &PlannerArgs) -> anyhow::Result<PlannerChoice> {
    Ok(match args.planner {
        PlannerArg::Heuristic => PlannerChoice::Heuristic,
        PlannerArg::Oracle => PlannerChoice::Oracle,
        PlannerArg::Trained => {
            let Some(path) = &args.model else {
                return Err(usage("model", "--planner trained needs --model <checkpoint>"));
            };
            PlannerChoice::Trained(Box::new(load_checkpoint(path)?))
        }
    })
}

fn routes(cli: &Cli, sc: &Scenario, src: &PlanSource) -> anyhow::Result<(TrajectorySet, String)> {
    match &src.plan {
        Some(path) => Ok((PlanSummary::read(path)?.trajectories(), "file".to_string())),
        None => {
            let choice = planner(&src.planner)?;
            Ok((simulator::plan(sc, &choice, cli.seed)?, choice.name().to_string()))
        }
    }
}

fn csv_file<F, E>(path: &Path, f: F) -> anyhow::Result<()>
where
    F: FnOnce(BufWriter<File>) -> Result<(), E>,
    E: std::error::Error + Send + Sync + 'static,
{
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn gen(cli: &Cli, args: &GenArgs) -> anyhow::Result<()> {
    let sc = match args.preset {
        Some(Preset::SquareArea) => {
            let mut cfg = SquareAreaConfig::table_one().with_uavs(args.uavs);
            cfg.n_slots = args.slots;
            square_area(&cfg, cli.seed)
        }
        None => scenario(cli)?,
    };
    sc.validate()?;
    let path = out_dir(cli)?.join("scenario.json");
    sc.save(&path)?;
    info!("{} UAVs, {} waypoints -> {}", sc.num_uavs(), sc.waypoints.len(), path.display());
    Ok(())
}

fn plan_cmd(cli: &Cli, args: &PlanArgs) -> anyhow::Result<()> {
    let sc = scenario(cli)?;
    let choice = planner(&args.planner)?;
    let traj = simulator::plan(&sc, &choice, cli.seed)?;
    let summary = PlanSummary::new(&traj, &sc);
    let dir = out_dir(cli)?;
    write_text(&dir.join("plan.json"), &summary.to_json())?;
    let report = validate_all(&traj, &sc)?;
    info!("total length {:.1} m, {} violations", summary.total_length_m, report.violations.len());
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    if !report.is_feasible() {
        return Err(Error::NoFeasiblePlan(format!("{} violations", report.violations.len())).into());
    }
    Ok(())
}

fn topo_cmd(cli: &Cli, args: &TopoArgs) -> anyhow::Result<()> {
    let sc = scenario(cli)?;
    let (traj, _) = routes(cli, &sc, &args.source)?;
    let pos = positions_over_slots(&traj, &sc)?;
    let dir = out_dir(cli)?;
    let algo = match args.algo.choices().as_slice() {
        [one] => *one,
        _ => return Err(usage("algo", "--algo all is only supported by simulate")),
    };
    match algo {
        TopoChoice::Ctop => {
            let series = optimize_series(&pos, &sc)?;
            csv_file(&dir.join("edges.csv"), |w| series.write_edges_csv(w))?;
            csv_file(&dir.join("intervals.csv"), |w| series.write_intervals_csv(w))?;
            for v in &series.residual {
                eprintln!("residual: {v}");
            }
        }
        TopoChoice::Mtp | TopoChoice::Lmst => {
            let out = if algo == TopoChoice::Mtp { simulator::mtp_series(&pos, &sc) } else { simulator::lmst_series(&pos, &sc) };
            csv_file(&dir.join("edges.csv"), |w| fanet_core::topology::write_edges_csv(&out.matrices, w))?;
            csv_file(&dir.join("powers.csv"), |w| out.powers.write_csv(w))?;
        }
    }
    info!("wrote topology for {} slots to {}", pos.num_slots(), dir.display());
    Ok(())
}

fn power_cmd(cli: &Cli, args: &PlanSource) -> anyhow::Result<()> {
    let sc = scenario(cli)?;
    let (traj, _) = routes(cli, &sc, args)?;
    let pos = positions_over_slots(&traj, &sc)?;
    let series = optimize_series(&pos, &sc)?;
    let schedule = power::solve_all(&series, &pos, &sc)?;
    let dir = out_dir(cli)?;
    csv_file(&dir.join("powers.csv"), |w| schedule.write_csv(w))?;
    let energy = schedule.energy(pos.slot_duration);
    for (a, e) in energy.iter().enumerate() {
        info!("UAV {a}: {e:.3} J of {:.3} J", sc.uavs[a].e_max_j);
    }
    Ok(())
}

fn simulate_cmd(cli: &Cli, args: &SimulateArgs) -> anyhow::Result<()> {
    let sc = scenario(cli)?;
    sc.validate()?;
    let (traj, planner) = routes(cli, &sc, &args.source)?;
    let failure = match args.failure {
        FailureArg::Frozen => FailureModel::Frozen,
        FailureArg::Recompute => FailureModel::Recompute,
    };
    let opts = SimOptions { n_dc: args.n_dc, failure };
    let choices = args.algo.choices();
    let dir = out_dir(cli)?;
    let mut summary = String::from("algo,throughput_total_bps,connectivity_rate,average_hops,violations\n");
    for &algo in &choices {
        let report = simulator::run_with_plan(&sc, &traj, &planner, algo, cli.seed, &opts)?;
        let target = if choices.len() == 1 { dir.to_path_buf() } else { dir.join(format!("{algo:?}").to_lowercase()) };
        emit_report(&report, &target)?;
        let hops = report.average_hops.map_or("inf".to_string(), |h| h.to_string());
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            format!("{algo:?}").to_lowercase(),
            report.throughput_total_bps,
            report.connectivity_rate,
            hops,
            report.violations.len()
        ));
        println!(
            "{:>5}: throughput {:.4e} bit/s, xi {:.4}, hops {}, violations {}",
            format!("{algo:?}").to_lowercase(),
            report.throughput_total_bps,
            report.connectivity_rate,
            hops,
            report.violations.len()
        );
    }
    if choices.len() > 1 {
        write_text(&dir.join("summary.csv"), &summary)?;
    }
    Ok(())
}

fn train_cmd(cli: &Cli, args: &TrainArgs) -> anyhow::Result<()> {
    let mut instances = if args.uavs <= 1 { InstanceConfig::single_uav(args.waypoints) } else { InstanceConfig::pair(args.waypoints) };
    instances.num_uavs = args.uavs.max(1);
    instances.k_min = instances.k_min.min(args.uavs.saturating_sub(1));
    let model = ModelConfig { dim: args.dim, heads: args.heads, layers: args.layers, ff_hidden: args.ff_hidden, ..ModelConfig::default() };
    let config = TrainConfig {
        epochs: args.epochs,
        steps_per_epoch: args.steps,
        batch_size: args.batch,
        learning_rate: args.lr,
        validation_size: args.validation,
        baseline_every: args.steps,
        seed: cli.seed,
        instances,
        model,
        ..TrainConfig::default()
    };
    let outcome = match &args.resume {
        Some(path) => fanet_core::planner::train::train_from(&config, load_checkpoint(path)?)?,
        None => train(&config)?,
    };
    let dir = out_dir(cli)?;
    save_checkpoint(&outcome.best, &dir.join("model.ckpt"))?;
    csv_file(&dir.join("train_log.csv"), |w| write_log_csv(&outcome.log, w))?;
    info!("baseline history: {:?}", outcome.baseline_history);
    Ok(())
}

fn report_cmd(cli: &Cli, args: &ReportArgs) -> anyhow::Result<()> {
    let path = args.report.clone().unwrap_or_else(|| cli.out.join("report.json"));
    let report = read_report(&path)?;
    render_files(&report, out_dir(cli)?)?;
    info!("rendered {} slots from {}", report.slots.len(), path.display());
    Ok(())
}
