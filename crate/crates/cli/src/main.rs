use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mtirl::experiments::{
    run_aggregation_experiment, run_gridworld_experiment, AggExpConfig, ExperimentFile,
    GridExpConfig, Provenance,
};
use mtirl::gridworld::{optimal_q, GridMap, OracleRewards};

const DESK: &str = include_str!("../../../configs/desk.toml");
const PAPER: &str = include_str!("../../../configs/paper.toml");

/// Significance level before Bonferroni correction.
const ALPHA: f64 = 0.05;

#[derive(Parser)]
#[command(name = "mtirl", version, about = "Trust-weighted multi-trainer feedback experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the feedback aggregation accuracy sweep.
    Aggregate(RunArgs),
    /// Run the interactive grid-world sweep.
    Gridworld(RunArgs),
    /// Solve a map exactly and write the optimal Q-table and policy.
    Oracle(MapArgs),
    /// Validate a map file and print a preview.
    Map {
        /// Map JSON; the built-in cliff map when omitted.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Run the live session server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Where paused sessions are saved.
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config; `paper` when neither this nor --config is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, env = "MTIRL_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, env = "MTIRL_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn experiment(&self) -> Result<ExperimentFile> {
        match (&self.config, self.preset) {
            (Some(path), _) => ExperimentFile::load(path)
                .with_context(|| format!("loading {}", path.display())),
            (None, Some(Preset::Desk)) => Ok(ExperimentFile::from_toml(DESK)?),
            (None, Some(Preset::Paper) | None) => Ok(ExperimentFile::from_toml(PAPER)?),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_map(path: Option<&Path>) -> Result<GridMap> {
    let map = match path {
        Some(p) => GridMap::load(p).with_context(|| format!("loading map {}", p.display()))?,
        None => GridMap::default_map(),
    };
    map.ensure_fully_reachable()?;
    Ok(map)
}

fn aggregate(args: RunArgs) -> Result<()> {
    let Some(mut config): Option<AggExpConfig> = args.experiment()?.aggregation else {
        bail!("config has no [aggregation] section");
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out_dir()?;
    let res = run_aggregation_experiment(&config, args.jobs)?;
    res.write_results(create(out, "aggregate_results.csv")?)?;
    res.write_summary(create(out, "aggregate_summary.csv")?)?;
    println!("{}", res.provenance("aggregate").header_line());
    print!("{}", res.render_significance(ALPHA));
    println!("wrote {} runs to {}", res.rows.len(), out.display());
    Ok(())
}

fn gridworld(args: RunArgs) -> Result<()> {
    let Some(mut config): Option<GridExpConfig> = args.experiment()?.gridworld else {
        bail!("config has no [gridworld] section");
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out_dir()?;
    let res = run_gridworld_experiment(&config, args.jobs)?;
    res.write_results(create(out, "gridworld_results.csv")?)?;
    res.write_summary(create(out, "gridworld_summary.csv")?)?;
    res.write_episodes(create(out, "gridworld_episodes.csv")?)?;
    println!("{}", res.provenance("gridworld").header_line());
    for metric in ["closeness", "n_queries"] {
        print!("{}", res.render_significance(metric, ALPHA));
    }
    println!("wrote {} runs to {}", res.rows.len(), out.display());
    Ok(())
}

fn oracle(args: MapArgs) -> Result<()> {
    let map = load_map(args.map.as_deref())?;
    let q = optimal_q(&map, OracleRewards::default())?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    // Value iteration has no randomness; the seed field is always 0.
    let prov = Provenance::new("oracle", &map.to_spec(), 0);
    let mut w = create(&args.out, "oracle_q.csv")?;
    writeln!(w, "{}", prov.header_line())?;
    q.write_csv(&mut w)?;
    w.flush()?;
    let policy = map.render_policy(&q);
    let mut w = create(&args.out, "oracle_policy.txt")?;
    writeln!(w, "{}", prov.header_line())?;
    w.write_all(policy.as_bytes())?;
    w.flush()?;
    print!("{policy}");
    Ok(())
}

fn preview(path: Option<&Path>) -> Result<()> {
    let map = load_map(path)?;
    print!("{}", map.render());
    println!(
        "{}x{} goal ({}, {}), {} start cells",
        map.width(),
        map.height(),
        map.goal().x,
        map.goal().y,
        map.start_pool().len()
    );
    Ok(())
}

fn serve(addr: SocketAddr, data_dir: PathBuf) -> Result<()> {
    tracing_subscriber::fmt::init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(mtirl_live::serve(addr, data_dir))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Aggregate(a) => aggregate(a),
        Command::Gridworld(a) => gridworld(a),
        Command::Oracle(a) => oracle(a),
        Command::Map { map } => preview(map.as_deref()),
        Command::Serve { addr, data_dir } => serve(addr, data_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
