use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cheeger_core::granulation::{choose_gamma, classify_boxes, BoxColor, BoxGrid};
use cheeger_core::harness::{write_csv, write_recovery_csv, ExperimentConfig};
use cheeger_core::optimize::{self, median_split, SweepMode};
use cheeger_core::{
    recovery_curve, rescaled_estimator, run_convergence, CheegerObjective, CutSet, DomainDensity, GeoGraph,
    IndicatorField, Kernel, ObjectiveSpec, Partition, PointCloud, DEFAULT_TAIL_EPS,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cheeger", version, about = "Cheeger cuts and bisections of random geometric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel constants.
    Kernel {
        #[command(subcommand)]
        cmd: KernelCmd,
    },
    /// Continuum Cheeger constant or minimum bisection of a domain.
    Continuum(ContinuumArgs),
    /// Graph statistics.
    Graph {
        #[command(subcommand)]
        cmd: GraphCmd,
    },
    /// Box granulation.
    Grid {
        #[command(subcommand)]
        cmd: GridCmd,
    },
    /// Minimise a Cheeger-type ratio.
    Cut(CutArgs),
    /// Minimum bisection.
    Bisect(BisectArgs),
    /// Monte Carlo nonlocal total variation for a list of radii.
    TvNonlocal(TvArgs),
    /// Run a convergence experiment from a JSON config.
    Converge(ConvergeArgs),
    /// Draw i.i.d. points from a domain.
    Sample(SampleArgs),
}

#[derive(Subcommand)]
enum KernelCmd {
    Info {
        #[arg(long, default_value = "uniform")]
        kernel: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
}

#[derive(Subcommand)]
enum GraphCmd {
    Stats {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value = "uniform")]
        kernel: String,
        #[arg(long, default_value_t = DEFAULT_TAIL_EPS)]
        tail_eps: f64,
    },
}

#[derive(Subcommand)]
enum GridCmd {
    Inspect {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        r: f64,
        /// Defaults to the admissible choice for `n` and `r`.
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        domain: DomainArgs,
        /// One 0/1 per line.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct DomainArgs {
    /// `square`, `cube` or `ball`.
    #[arg(long, default_value = "square")]
    domain: String,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// `uniform` or `file:PATH`.
    #[arg(long, default_value = "uniform")]
    density: String,
}

impl DomainArgs {
    fn build(&self) -> Result<DomainDensity> {
        Ok(DomainDensity::from_spec(&self.domain, self.dim, &self.density)?)
    }
}

#[derive(Args)]
struct ContinuumArgs {
    #[command(flatten)]
    domain: DomainArgs,
    /// `che:v,b` or `mbis`.
    #[arg(long, default_value = "che:1,1")]
    objective: String,
}

/// Points from a file, or sampled from the domain.
#[derive(Args)]
struct GraphArgs {
    #[arg(long, conflicts_with = "n")]
    points: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long)]
    r: f64,
    #[arg(long, default_value = "uniform")]
    kernel: String,
    /// Partition output, one 0/1 per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl GraphArgs {
    fn graph(&self) -> Result<(DomainDensity, GeoGraph)> {
        let dd = self.domain.build()?;
        let cloud = match (&self.points, self.n) {
            (Some(path), _) => PointCloud::from_csv(path)?,
            (None, Some(n)) => dd.sample_points(n, self.seed)?,
            (None, None) => bail!("give either --points or --n"),
        };
        let kernel = Kernel::from_spec(&self.kernel, cloud.dim())?;
        Ok((dd, GeoGraph::build(cloud, self.r, kernel, DEFAULT_TAIL_EPS)?))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CutMethod {
    Exact,
    Sweep,
    Refine,
}

#[derive(Args)]
struct CutArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, default_value = "che:1,1")]
    objective: String,
    #[arg(long, value_enum, default_value = "refine")]
    method: CutMethod,
    /// Order points by the Fiedler vector instead of the coordinates.
    #[arg(long)]
    fiedler: bool,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BisectMethod {
    Exact,
    Local,
}

#[derive(Args)]
struct BisectArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, value_enum, default_value = "local")]
    method: BisectMethod,
    #[arg(long, default_value_t = 50)]
    max_passes: usize,
}

#[derive(Args)]
struct TvArgs {
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long, default_value = "uniform")]
    kernel: String,
    /// `halfspace:axis,offset`, `corner:bits,radius`, `cap:axis,offset` or `whole`.
    #[arg(long, default_value = "halfspace:0,0.5")]
    cut: String,
    /// Multiplies the indicator.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
    r_list: Vec<f64>,
    #[arg(long, default_value_t = cheeger_core::nonlocal::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV, or JSON when the name ends in `.json`. Overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 if any run is outside the regime `n r^d >= 4 log n`.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(io::stdout().lock(), "{text}") {
        // A closed pipe (`| head`) is not an error.
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn write_partition(path: Option<&Path>, y: &Partition) -> Result<()> {
    if let Some(p) = path {
        let mut w = output(Some(p))?;
        y.write(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn kernel_info(kernel: &str, dim: usize) -> Result<()> {
    let k = Kernel::from_spec(kernel, dim)?;
    print_json(&serde_json::to_value(k.info()?)?)
}

fn continuum(args: &ContinuumArgs) -> Result<()> {
    let dd = args.domain.build()?;
    let opt = match args.objective.parse::<ObjectiveSpec>()? {
        ObjectiveSpec::Cheeger(o) => dd.continuum_cheeger(o.volume, o.balance)?,
        ObjectiveSpec::Mbis => dd.continuum_mbis()?,
        ObjectiveSpec::Vol2 => bail!("`vol2` has no continuum optimisation problem"),
    };
    let mut value = serde_json::to_value(&opt)?;
    value["objective"] = json!(args.objective);
    print_json(&value)
}

fn graph_stats(points: &Path, r: f64, kernel: &str, tail_eps: f64) -> Result<()> {
    let cloud = PointCloud::from_csv(points)?;
    let k = Kernel::from_spec(kernel, cloud.dim())?;
    let g = GeoGraph::build(cloud, r, k, tail_eps)?;
    print_json(&serde_json::to_value(g.stats())?)
}

fn grid_inspect(points: &Path, r: f64, gamma: Option<f64>, domain: &DomainArgs, partition: Option<&Path>) -> Result<()> {
    let dd = domain.build()?;
    let cloud = PointCloud::from_csv(points)?;
    let choice = choose_gamma(cloud.len(), r, dd.dim());
    let gamma = gamma.unwrap_or(choice.gamma);
    let grid = BoxGrid::build(&dd, &cloud, r, gamma)?;
    let histogram: Vec<_> = grid
        .occupancy_histogram()
        .into_iter()
        .map(|(count, boxes)| json!({"points": count, "boxes": boxes}))
        .collect();
    let mut value = json!({
        "n": cloud.len(),
        "r": r,
        "gamma": gamma,
        "in_regime": choice.in_regime,
        "side": grid.side(),
        "boxes": grid.len(),
        "merge_distance": grid.merge_distance(),
        "histogram": histogram,
        "concentration": serde_json::to_value(grid.concentration_check())?,
    });
    if let Some(path) = partition {
        let y = Partition::from_file(path)?;
        if y.len() != cloud.len() {
            bail!("partition has {} entries for {} points", y.len(), cloud.len());
        }
        let colors = classify_boxes(&grid, &y);
        value["colors"] = json!({
            "black": colors.count(BoxColor::Black),
            "white": colors.count(BoxColor::White),
            "grey": colors.grey_count(),
            "unclassifiable": colors.unclassifiable_count(),
        });
    }
    print_json(&value)
}

fn summary(g: &GeoGraph, res: &optimize::OptimizerResult, seed: u64, objective: &str) -> serde_json::Value {
    json!({
        "objective": objective,
        "value": res.value,
        "rescaled": rescaled_estimator(res.value, g.len(), g.r(), g.dim()),
        "method": res.method,
        "seed": seed,
        "n": g.len(),
        "r": g.r(),
        "size": res.partition.count(),
        "iterations": res.iterations,
        "wall_time": res.wall_time,
        "flags": res.flags,
    })
}

fn cut(args: &CutArgs) -> Result<()> {
    let (dd, g) = args.graph.graph()?;
    let obj: CheegerObjective = args.objective.parse()?;
    let res = match args.method {
        CutMethod::Exact => optimize::exact_cheeger(&g, obj)?,
        CutMethod::Sweep => {
            let mode = if args.fiedler { SweepMode::Fiedler } else { SweepMode::Axis };
            optimize::sweep_cut(&g, obj, mode)?
        }
        CutMethod::Refine => {
            let gamma = args.gamma.unwrap_or(choose_gamma(g.len(), g.r(), g.dim()).gamma);
            let grid = BoxGrid::build(&dd, g.cloud(), g.r(), gamma)?;
            optimize::refine_pipeline(&g, &grid, obj)?
        }
    };
    write_partition(args.graph.out.as_deref(), &res.partition)?;
    print_json(&summary(&g, &res, args.graph.seed, &obj.to_string()))
}

fn bisect(args: &BisectArgs) -> Result<()> {
    let (_, g) = args.graph.graph()?;
    let res = match args.method {
        BisectMethod::Exact => optimize::exact_mbis(&g)?,
        BisectMethod::Local => optimize::local_search_bisection(&g, &median_split(&g), args.max_passes)?,
    };
    write_partition(args.graph.out.as_deref(), &res.partition)?;
    print_json(&summary(&g, &res, args.graph.seed, "mbis"))
}

fn tv_nonlocal(args: &TvArgs) -> Result<()> {
    let dd = args.domain.build()?;
    let kernel = Kernel::from_spec(&args.kernel, dd.dim())?;
    let u = if args.cut == "whole" {
        IndicatorField::whole()
    } else {
        IndicatorField::of(CutSet::parse(&args.cut, dd.dim())?)
    }
    .scaled(args.amplitude);
    let rows = recovery_curve(&dd, &kernel, &u, &args.r_list, args.samples, args.seed)?;
    let mut w = output(args.out.as_deref())?;
    write_recovery_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn converge(args: &ConvergeArgs) -> Result<ExitCode> {
    let config = ExperimentConfig::from_json_file(&args.config)?;
    let records = run_convergence(&config)?;
    let out = args.out.clone().or(config.out.as_ref().map(PathBuf::from));
    let mut w = output(out.as_deref())?;
    if out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "json")) {
        serde_json::to_writer_pretty(&mut w, &records)?;
        writeln!(w)?;
    } else {
        write_csv(&records, &mut w)?;
    }
    w.flush()?;
    let flagged = records.iter().filter(|r| !r.in_regime).count();
    if flagged > 0 {
        log::warn!("{flagged} records are outside the regime n r^d >= 4 log n");
        if args.strict {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn sample(args: &SampleArgs) -> Result<()> {
    let dd = args.domain.build()?;
    let cloud = dd.sample_points(args.n, args.seed)?;
    let mut w = output(args.out.as_deref())?;
    cloud.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Kernel {
            cmd: KernelCmd::Info { kernel, dim },
        } => kernel_info(kernel, *dim)?,
        Command::Continuum(args) => continuum(args)?,
        Command::Graph {
            cmd: GraphCmd::Stats {
                points,
                r,
                kernel,
                tail_eps,
            },
        } => graph_stats(points, *r, kernel, *tail_eps)?,
        Command::Grid {
            cmd: GridCmd::Inspect {
                points,
                r,
                gamma,
                domain,
                partition,
            },
        } => grid_inspect(points, *r, *gamma, domain, partition.as_deref())?,
        Command::Cut(args) => cut(args)?,
        Command::Bisect(args) => bisect(args)?,
        Command::TvNonlocal(args) => tv_nonlocal(args)?,
        Command::Converge(args) => return converge(args),
        Command::Sample(args) => sample(args)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
