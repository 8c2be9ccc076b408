//! `kish`: serve, query, evaluate, benchmark and diagnose the k-ish nearest
//! neighbor classifier on WDBC-format data.

use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kish_core::classifier::{LabeledDatabase, ProtocolParams, DEFAULT_REPETITIONS};
use kish_core::protocol::{self, ClientConfig, Duplex};
use kish_core::{seed, select_ring_params};
use kish_eval::{
    bench_csv, default_dataset_path, distance_distribution, gaussian_sd, histogram_csv,
    leave_one_out_f1, load_wdbc, project_2d, quantize, sweep_benchmarks, EvalConfig, GridDataset,
    Mode, SweepSpec,
};

#[derive(Parser, Debug)]
#[command(name = "kish", version, about = "k-ish nearest neighbor classification on encrypted queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Answer encrypted queries against the dataset.
    Serve(ServeArgs),
    /// Classify one grid point through a server.
    Query(QueryArgs),
    /// Leave-one-out F1 on the dataset.
    Evaluate(EvaluateArgs),
    /// Circuit-cost sweeps over grid size and database size.
    Bench(BenchArgs),
    /// Distance histograms and their distance from a Gaussian.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// WDBC-format data file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Grid size g; coordinates lie in [0, g).
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
    grid: u64,
    #[arg(long, default_value_t = 13, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Protocol repetitions (odd).
    #[arg(long, default_value_t = DEFAULT_REPETITIONS, value_parser = parse_reps)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Transport {
    Tcp,
    Stdio,
    /// Server and client in this process over 127.0.0.1.
    Loopback,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Transport::Tcp)]
    transport: Transport,
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Transport::Tcp)]
    transport: Transport,
    #[arg(long, default_value = "127.0.0.1:7878")]
    connect: String,
    /// Grid coordinates of the query point.
    #[arg(required = true, num_args = 2)]
    coords: Vec<u64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = ModeArg::Plain)]
    mode: ModeArg,
    /// Per-point predictions CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Plain,
    Secure,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Database sizes to sweep at `--grid` (points are duplicated as needed).
    #[arg(long, value_delimiter = ',')]
    n_sweep: Vec<usize>,
    /// Grid sizes to sweep at the full dataset size.
    #[arg(long, value_delimiter = ',')]
    grid_sweep: Vec<u64>,
    /// CSV output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: Common,
    /// Directory for the histogram CSVs (default: no files).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_reps(s: &str) -> Result<usize, String> {
    let r: usize = s.parse().map_err(|e| format!("{e}"))?;
    if r % 2 == 1 {
        Ok(r)
    } else {
        Err(format!("repetitions must be odd, got {r}"))
    }
}

type CliResult<T> = Result<T, String>;

/// Seeded random query points examined by `diagnose`.
const DIAGNOSE_QUERIES: u64 = 3;

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Loaded {
    points2d: Vec<[f64; 2]>,
    grid: GridDataset,
}

fn load(common: &Common) -> CliResult<Loaded> {
    let path = common.dataset.clone().unwrap_or_else(default_dataset_path);
    let raw = load_wdbc(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let proj = project_2d(&raw);
    if let Some(eps) = proj.ridge {
        eprintln!("warning: within-class scatter is singular, added ridge {eps:.3e}");
    }
    let grid = quantize(&proj.points, &raw.labels, common.grid).map_err(fail)?;
    for a in &grid.degenerate_axes {
        eprintln!("warning: axis {a} is constant; all points map to 0");
    }
    Ok(Loaded { points2d: proj.points, grid })
}

fn server_setup(common: &Common) -> CliResult<(LabeledDatabase, ProtocolParams)> {
    let data = load(common)?;
    let db = data.grid.database().map_err(fail)?;
    let ring = select_ring_params(common.grid, 2, db.len()).map_err(fail)?;
    let pp = ProtocolParams::new(ring, common.k as usize, common.reps, common.seed).map_err(fail)?;
    Ok((db, pp))
}

fn cmd_serve(args: &ServeArgs) -> CliResult<()> {
    let (db, pp) = server_setup(&args.common)?;
    match args.transport {
        Transport::Stdio => {
            let mut stream = Duplex { reader: io::stdin().lock(), writer: io::stdout().lock() };
            protocol::run_server(&mut stream, &db, &pp).map(|_| ()).map_err(fail)
        }
        Transport::Tcp | Transport::Loopback => {
            let addr = if args.transport == Transport::Loopback { "127.0.0.1:0" } else { &args.listen };
            let listener = TcpListener::bind(addr).map_err(|e| format!("bind {addr}: {e}"))?;
            let local = listener.local_addr().map_err(fail)?;
            println!("listening on {local} (n={}, grid={}, modulus={})", db.len(), args.common.grid, pp.ring.modulus());
            io::stdout().flush().map_err(fail)?;
            protocol::serve_tcp(listener, db, pp, None, |e| eprintln!("connection error: {e}"))
                .map_err(fail)
        }
    }
}

fn cmd_query(args: &QueryArgs) -> CliResult<u8> {
    let ring = select_ring_params(args.common.grid, 2, 1).map_err(fail)?;
    let cfg = ClientConfig { ring, seed: args.common.seed };
    let q = &args.coords;
    match args.transport {
        Transport::Tcp => {
            let mut s = protocol::connect(&args.connect).map_err(|e| format!("connect {}: {e}", args.connect))?;
            protocol::run_client(&mut s, q, &cfg).map_err(fail)
        }
        Transport::Stdio => {
            let mut stream = Duplex { reader: io::stdin().lock(), writer: io::stdout().lock() };
            protocol::run_client(&mut stream, q, &cfg).map_err(fail)
        }
        Transport::Loopback => {
            let (db, pp) = server_setup(&args.common)?;
            let (addr, handle) = protocol::spawn_loopback_server(db, pp, 1).map_err(fail)?;
            let mut s = protocol::connect(addr).map_err(fail)?;
            let bit = protocol::run_client(&mut s, q, &cfg).map_err(fail);
            drop(s);
            handle.join().map_err(|_| "server thread panicked".to_string())?.map_err(fail)?;
            bit
        }
    }
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let data = load(&args.common)?;
    let mode = match args.mode {
        ModeArg::Plain => Mode::Plain,
        ModeArg::Secure => Mode::Secure,
    };
    let cfg = EvalConfig {
        k: args.common.k as usize,
        repetitions: args.common.reps,
        seed: args.common.seed,
        mode,
    };
    let report = leave_one_out_f1(&data.grid, &cfg).map_err(fail)?;
    if let Some(path) = &args.out {
        write_file(path, &report.predictions_csv(&data.grid.labels))?;
    }
    println!("{}", report.summary());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> CliResult<()> {
    if args.n_sweep.is_empty() && args.grid_sweep.is_empty() {
        return Err("bench needs --n-sweep and/or --grid-sweep".into());
    }
    let data = load(&args.common)?;
    let spec = SweepSpec {
        grids: args.grid_sweep.clone(),
        grid_sweep_n: data.grid.len(),
        ns: args.n_sweep.clone(),
        n_sweep_grid: args.common.grid,
        k: args.common.k as usize,
        seed: args.common.seed,
    };
    let rows = sweep_benchmarks(&data.points2d, &data.grid.labels, &spec).map_err(fail)?;
    let csv = bench_csv(&rows);
    match &args.out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let data = load(&args.common)?;
    let n = data.grid.len();
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    println!("query,x,y,mu,sigma,sd");
    for j in 0..DIAGNOSE_QUERIES {
        let idx = (seed::derive(args.common.seed, "diagnose", j) % n as u64) as usize;
        let q = &data.grid.points[idx];
        let d = distance_distribution(&data.grid, q);
        let diag = gaussian_sd(&d);
        if diag.degenerate {
            eprintln!("warning: query {idx} has zero distance spread; SD reported as 1");
        }
        println!("{idx},{},{},{:.3},{:.3},{:.4}", q[0], q[1], diag.mu, diag.sigma, diag.sd);
        if let Some(dir) = &args.out {
            write_file(&dir.join(format!("hist_q{idx}.csv")), &histogram_csv(&d))?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Serve(a) => cmd_serve(a),
        // Over stdio the protocol owns stdout.
        Command::Query(a) if a.transport == Transport::Stdio => cmd_query(a).map(|b| eprintln!("{b}")),
        Command::Query(a) => cmd_query(a).map(|bit| println!("{bit}")),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
