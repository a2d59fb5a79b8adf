use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use grayhole_core::scenario::{run_with_sink, ScenarioError};
use grayhole_core::sweep::{run_sweep, summarize, summary_csv, to_csv};
use grayhole_core::trace::{parse_trace, LineWriter, NullSink, TraceSink};
use grayhole_core::{compute_metrics, Axis, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "grayhole",
    version,
    about = "MANET gray-hole detection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics.
    Run {
        /// Flat `key = value` scenario file.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for trace.txt, metrics.txt and config.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter with repeats and write CSVs.
    Sweep {
        #[arg(long)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        repeats: u32,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip the detection-off run at each point.
        #[arg(long)]
        no_baseline: bool,
    },
    /// Recompute metrics from a saved trace.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
    },
}

/// Exit 1 for anything wrong with the inputs, 2 for failures while running.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    ScenarioConfig::parse_kv(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(io_err(path))
}

fn run(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let metrics = match out {
        None => run_with_sink(&cfg, &mut NullSink)?,
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            write(&dir.join("config.txt"), &cfg.to_kv_string())?;
            let path = dir.join("trace.txt");
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            let mut w = LineWriter::new(BufWriter::new(file));
            let m = run_with_sink(&cfg, &mut w as &mut dyn TraceSink)?;
            w.finish().map_err(io_err(&path))?;
            write(&dir.join("metrics.txt"), &m.to_string())?;
            m
        }
    };
    print!("{metrics}");
    Ok(())
}

fn sweep(
    axis: Axis,
    values: &[f64],
    repeats: u32,
    config: &Path,
    out: &Path,
    baseline: bool,
) -> Result<(), Failure> {
    if repeats == 0 {
        return Err(Failure::Config("--repeats must be at least 1".into()));
    }
    let cfg = load_config(config)?;
    for &v in values {
        axis.apply(&cfg, v)
            .validate()
            .map_err(|e| Failure::Config(format!("{axis} = {v}: {e}")))?;
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("config.txt"), &cfg.to_kv_string())?;
    let rows = run_sweep(&cfg, axis, values, repeats, baseline);
    write(&out.join("sweep.csv"), &to_csv(&rows))?;
    let points = summarize(&rows);
    let summary = summary_csv(&points);
    write(&out.join("summary.csv"), &summary)?;
    print!("{summary}");
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!(
            "{failed} of {} runs failed; see sweep.csv",
            rows.len()
        )));
    }
    Ok(())
}

fn metrics(trace: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(trace).map_err(io_err(trace))?;
    let records =
        parse_trace(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", trace.display())))?;
    let m = compute_metrics(&records)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", trace.display())))?;
    print!("{m}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let res = match &cli.command {
        Command::Run { config, seed, out } => run(config, *seed, out.as_deref()),
        Command::Sweep {
            axis,
            values,
            repeats,
            config,
            out,
            no_baseline,
        } => sweep(*axis, values, *repeats, config, out, !no_baseline),
        Command::Metrics { trace } => metrics(trace),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {}", m.trim_end());
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {}", m.trim_end());
            ExitCode::from(2)
        }
    }
}
