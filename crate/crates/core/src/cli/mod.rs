//! Command-line front end: scenario runs, graph checks, sweeps and presets.
//!
//! Output goes under `$RESCON_OUT_DIR` (default `rescon-out`). Exit codes are
//! 0 on success, 2 for validation failures, 3 for numeric divergence and 1 for
//! I/O errors.

pub mod presets;
pub mod report;
pub mod scenario;
pub mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{
    build_chain, build_complete, build_proposition_graph, build_random, build_ring, example_graph, Digraph,
    RobustnessChecker, WeightPolicy,
};
pub use report::{write_run, Report, RunOutput};
pub use scenario::{Experiment, Mode, Scenario};
pub use sweep::{run_sweep, Grid, SweepRow};

/// Environment variable naming the output directory.
pub const OUT_DIR_ENV: &str = "RESCON_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "rescon-out";

#[derive(Debug, Parser)]
#[command(name = "rescon", version, about = "Resilient consensus simulator and graph robustness checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file or a preset by name.
    Run {
        /// Path to a scenario TOML file, or a preset name.
        scenario: String,
        /// Output directory; defaults to `$RESCON_OUT_DIR/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check (r,s)-robustness of a graph.
    CheckGraph(CheckGraphArgs),
    /// Run a scenario template over a parameter grid.
    Sweep {
        /// Scenario template file or preset name.
        template: String,
        /// Grid file with `[[axis]]` tables.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Extra axis as `key=[v1, v2]` (TOML values); repeatable.
        #[arg(long = "axis")]
        axes: Vec<String>,
        /// Output directory; defaults to `$RESCON_OUT_DIR/sweep`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the trace and report of every run.
        #[arg(long)]
        traces: bool,
    },
    /// Bundled scenarios.
    Presets {
        #[command(subcommand)]
        command: PresetCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetCommand {
    /// List preset names and descriptions.
    List,
    /// Print a preset's scenario file.
    Show { name: String },
}

#[derive(Debug, Args)]
pub struct CheckGraphArgs {
    /// Edge-list file (`n`, then `from to weight` per line, 1-indexed).
    #[arg(long, conflicts_with = "generator")]
    pub file: Option<PathBuf>,
    /// `complete`, `chain`, `ring`, `random`, `proposition` or `example`.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge probability for `random`.
    #[arg(long)]
    pub p: Option<f64>,
    /// Block size for `proposition`.
    #[arg(long, default_value_t = 1)]
    pub f: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Edge to delete before checking, as `from,to` (1-indexed); repeatable.
    #[arg(long = "remove", value_parser = parse_edge)]
    pub remove: Vec<(usize, usize)>,
    #[arg(short, long, default_value_t = 1)]
    pub r: usize,
    #[arg(short, long, default_value_t = 1)]
    pub s: usize,
    /// Report the largest r for every s instead of a single check.
    #[arg(long)]
    pub sweep: bool,
    /// Override the node-count guard of the exhaustive check.
    #[arg(long)]
    pub max_nodes: Option<usize>,
}

fn parse_edge(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected from,to")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

/// Output directory from the environment, or the default.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

/// Loads a scenario from a file, falling back to a preset of that name.
pub fn load_scenario(spec: &str) -> Result<(Scenario, PathBuf)> {
    let path = Path::new(spec);
    if path.exists() {
        Scenario::load(path)
    } else if let Some(p) = presets::find(spec) {
        Ok((Scenario::from_toml(p.source)?, PathBuf::from(".")))
    } else {
        Err(Error::input(format!("{spec:?} is neither a scenario file nor a preset name")))
    }
}

/// Runs a scenario and writes its files. A diverging run still writes the
/// partial trace before the error is returned.
pub fn run_scenario(spec: &str, out: Option<PathBuf>) -> Result<(Report, RunOutput)> {
    let (scenario, base) = load_scenario(spec)?;
    let exp = scenario.build(&base)?;
    for w in &exp.warnings {
        log::warn!("{w}");
    }
    let dir = out.unwrap_or_else(|| out_root().join(&exp.name));
    match exp.run() {
        Ok(trace) => {
            let report = Report::compute(&exp, &trace)?;
            let files = write_run(&dir, &trace, Some(&report))?;
            Ok((report, files))
        }
        Err(Error::Diverged {
            step,
            agent,
            magnitude,
            partial,
        }) => {
            write_run(&dir, &partial, None)?;
            log::error!("partial trace written to {}", dir.display());
            Err(Error::Diverged {
                step,
                agent,
                magnitude,
                partial,
            })
        }
        Err(e) => Err(e),
    }
}

fn graph_for(args: &CheckGraphArgs) -> Result<Digraph> {
    let mut g = if let Some(file) = &args.file {
        let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        Digraph::from_edge_list(&text)?
    } else {
        let need_n = || args.n.ok_or_else(|| Error::input("--n is required for this generator"));
        match args.generator.as_deref() {
            Some("complete") => build_complete(need_n()?, WeightPolicy::InverseOrder)?,
            Some("chain") => build_chain(need_n()?, WeightPolicy::InverseOrder)?,
            Some("ring") => build_ring(need_n()?, WeightPolicy::InverseOrder)?,
            Some("random") => {
                let p = args.p.ok_or_else(|| Error::input("--p is required for random graphs"))?;
                build_random(need_n()?, p, WeightPolicy::InverseOrder, &mut ChaCha8Rng::seed_from_u64(args.seed))?
            }
            Some("proposition") => build_proposition_graph(args.f)?,
            Some("example") => example_graph(),
            Some(other) => return Err(Error::input(format!("unknown generator {other:?}"))),
            None => return Err(Error::input("give --file or --generator")),
        }
    };
    for &(j, i) in &args.remove {
        let n = g.node_count();
        if j == 0 || i == 0 || j > n || i > n || g.remove_edge(j - 1, i - 1).is_none() {
            return Err(Error::input(format!("edge ({j}, {i}) is not in the graph")));
        }
    }
    Ok(g)
}

fn one_based(set: &crate::graph::NodeSet) -> Vec<usize> {
    set.iter().map(|i| i + 1).collect()
}

/// Text output of `check-graph`.
pub fn check_graph(args: &CheckGraphArgs) -> Result<String> {
    let g = graph_for(args)?;
    let mut checker = RobustnessChecker::default();
    if let Some(m) = args.max_nodes {
        checker.max_nodes = m;
    }
    let n = g.node_count();
    let mut out = format!("graph: {n} nodes, {} edges\n", g.edge_count());
    if args.sweep {
        out.push_str("s  max r\n");
        for s in 1..=n {
            let mut best = 0;
            for r in 1..=n.div_ceil(2) {
                if checker.check(&g, r, s)?.holds {
                    best = r;
                } else {
                    break;
                }
            }
            out.push_str(&format!("{s:<2} {best}\n"));
        }
        return Ok(out);
    }
    let report = checker.check(&g, args.r, args.s)?;
    match &report.witness {
        None => out.push_str(&format!("({}, {})-robust: holds\n", args.r, args.s)),
        Some((s1, s2)) => out.push_str(&format!(
            "({}, {})-robust: fails\nwitness: S1 = {:?}, S2 = {:?}\n",
            args.r,
            args.s,
            one_based(s1),
            one_based(s2)
        )),
    }
    Ok(out)
}

fn sweep_command(template: &str, grid: Option<&Path>, axes: &[String], out: Option<PathBuf>, traces: bool) -> Result<String> {
    let (path, base) = match Path::new(template).exists() {
        true => (
            Some(template),
            Path::new(template).parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        false => (None, PathBuf::from(".")),
    };
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => presets::find(template)
            .ok_or_else(|| Error::input(format!("{template:?} is neither a template file nor a preset name")))?
            .source
            .to_string(),
    };
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let mut g = match grid {
        Some(p) => Grid::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => Grid::default(),
    };
    for a in axes {
        g.axes.push(Grid::parse_axis(a)?);
    }
    let dir = out.unwrap_or_else(|| out_root().join("sweep"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let rows = run_sweep(&doc, &base, &g, traces.then(|| dir.clone()));
    let summary = dir.join("summary.csv");
    let mut buf = Vec::new();
    sweep::write_table(&g, &rows, &mut buf)?;
    std::fs::write(&summary, &buf).map_err(|e| Error::io(&summary, e))?;
    let failed = rows.iter().filter(|r| r.report.is_none()).count();
    Ok(format!(
        "{}{} runs ({failed} failed); summary in {}\n",
        String::from_utf8_lossy(&buf),
        rows.len(),
        summary.display()
    ))
}

/// Executes a parsed command and returns what should be printed.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Run { scenario, out } => {
            let (report, files) = run_scenario(&scenario, out)?;
            Ok(format!("{}written to {}\n", report.summary(), files.dir.display()))
        }
        Command::CheckGraph(args) => check_graph(&args),
        Command::Sweep {
            template,
            grid,
            axes,
            out,
            traces,
        } => sweep_command(&template, grid.as_deref(), &axes, out, traces),
        Command::Presets { command } => match command {
            PresetCommand::List => {
                let mut out = String::new();
                for p in presets::PRESETS {
                    let s = Scenario::from_toml(p.source)?;
                    out.push_str(&format!("{:<24} {}\n", p.name, s.description.unwrap_or_default()));
                }
                for (alias, target) in presets::ALIASES {
                    out.push_str(&format!("{alias:<24} alias of {target}\n"));
                }
                Ok(out)
            }
            PresetCommand::Show { name } => presets::find(&name)
                .map(|p| p.source.to_string())
                .ok_or_else(|| Error::input(format!("unknown preset {name:?}"))),
        },
    }
}

/// Entry point of the `rescon` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
