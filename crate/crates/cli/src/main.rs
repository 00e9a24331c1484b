use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tokenomics::engine::{deviation_suite, run_audits, TraceModel};
use tokenomics::scenario::{
    figures_preset, trace_to_csv, Figure, SweepSpec, SweepVar, BISECTION_TOLERANCE,
};
use tokenomics::two_token::deviation_value_bound;
use tokenomics::{parse_scenario, run_scenario, Execution, ScenarioConfig, TerminalStatus, Trace};

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_AUDIT: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(name = "tokenomics", version, about = "Proof-of-stake token economy simulator")]
struct Cli {
    /// Run batches on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV trace.
    Simulate {
        config: PathBuf,
        /// Destination; defaults to the config's `output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and check it with every audit and the deviation suite.
    Verify { config: PathBuf },
    /// Sweep one parameter over a grid or bisect for a regime threshold.
    Sweep {
        config: PathBuf,
        #[arg(long = "var")]
        var: SweepVar,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], conflicts_with = "grid")]
        bisect: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', required_unless_present = "bisect")]
        grid: Option<Vec<f64>>,
        /// Relative bracket width at which bisection stops.
        #[arg(long, default_value_t = BISECTION_TOLERANCE)]
        tol: f64,
    },
    /// Write the paired preset configs and their traces for a figure.
    Figures {
        which: Figure,
        #[arg(long)]
        outdir: PathBuf,
    },
}

/// `println!` that ignores a closed stdout.
macro_rules! outln {
    ($($arg:tt)*) => {{
        let _ = writeln!(io::stdout(), $($arg)*);
    }};
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| fail(EXIT_INVALID, format!("{}:\n{e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| fail(EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn status_code(status: &TerminalStatus) -> u8 {
    if status.is_infeasible() {
        EXIT_INFEASIBLE
    } else {
        0
    }
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<u8, Failure> {
    let cfg = load(config)?;
    let trace = run_scenario(&cfg);
    let csv = trace_to_csv(&trace);
    match out.or_else(|| cfg.output.as_ref().map(PathBuf::from)) {
        Some(path) => {
            write(&path, &csv)?;
            eprintln!("{}: {} rounds, {}", path.display(), trace.len(), trace.status);
        }
        None => {
            let _ = io::stdout().write_all(csv.as_bytes());
        }
    }
    Ok(status_code(&trace.status))
}

fn viability(cfg: &ScenarioConfig, trace: &Trace) -> Option<String> {
    let Some(TraceModel::Two(_)) = trace.model else {
        return None;
    };
    let mut price_a = Vec::new();
    let mut r_b = Vec::new();
    let mut price_b = Vec::new();
    for r in &trace.records {
        let (a, b) = r.two()?;
        price_a.push(a.price);
        r_b.push(b.reward);
        price_b.push(b.price);
    }
    let bound = deviation_value_bound(&cfg.params, cfg.a_v0, &price_a, 0, &r_b, &price_b).ok()?;
    let mut line = format!(
        "INFO stake value {:.6} vs discounted validator income {:.6}",
        bound.deviation_value, bound.equilibrium_value
    );
    if bound.equilibrium_value < 0.0 {
        line.push_str("\nWARN validators earn less than their costs over the horizon (not viable)");
    }
    Some(line)
}

fn verify(config: &Path, exec: Execution) -> Result<u8, Failure> {
    let cfg = load(config)?;
    let trace = run_scenario(&cfg);
    outln!("status: {} ({} rounds)", trace.status, trace.len());
    if trace.status.is_infeasible() {
        return Ok(EXIT_INFEASIBLE);
    }
    let mut ok = true;
    if let TerminalStatus::Exploded { round } = trace.status {
        outln!("FAIL bounded holdings: a token quantity exceeded 1e12 at t={round}");
        ok = false;
    }
    for audit in run_audits(&trace) {
        outln!("{audit}");
        ok &= audit.passed;
    }
    let suite = deviation_suite(&trace, exec);
    outln!("{suite}");
    ok &= suite.passed;
    if let Some(line) = viability(&cfg, &trace) {
        outln!("{line}");
    }
    Ok(if ok { 0 } else { EXIT_AUDIT })
}

fn sweep_cmd(
    config: &Path,
    var: SweepVar,
    bisect: Option<Vec<f64>>,
    grid: Option<Vec<f64>>,
    tol: f64,
    exec: Execution,
) -> Result<u8, Failure> {
    let cfg = load(config)?;
    let spec = match (bisect, grid) {
        (Some(b), _) => SweepSpec::Bisect {
            lo: b[0],
            hi: b[1],
            rel_tol: tol,
        },
        (None, Some(g)) => SweepSpec::Grid(g),
        (None, None) => return Err(fail(EXIT_INVALID, "need --bisect or --grid")),
    };
    let res = tokenomics::scenario::sweep(&cfg, var, &spec, exec)
        .map_err(|e| fail(EXIT_INVALID, e.to_string()))?;
    outln!("{},status", res.variable);
    for (v, s) in &res.points {
        outln!("{v},{s}");
    }
    if let (Some(th), Some((lo, hi))) = (res.threshold, res.bracket) {
        outln!(
            "# threshold {} = {th} (bracket [{lo}, {hi}], {} iterations)",
            res.variable, res.iterations
        );
    }
    Ok(0)
}

fn figures(which: Figure, outdir: &Path) -> Result<u8, Failure> {
    fs::create_dir_all(outdir)
        .map_err(|e| fail(EXIT_IO, format!("cannot create {}: {e}", outdir.display())))?;
    for p in figures_preset(which) {
        let trace = run_scenario(&p.config);
        write(&outdir.join(format!("{}.cfg", p.name)), &p.to_config_text())?;
        let csv_path = outdir.join(format!("{}.csv", p.name));
        write(&csv_path, &trace_to_csv(&trace))?;
        outln!("{}: {}", csv_path.display(), trace.status);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::Verify { config } => verify(&config, exec),
        Command::Sweep {
            config,
            var,
            bisect,
            grid,
            tol,
        } => sweep_cmd(&config, var, bisect, grid, tol, exec),
        Command::Figures { which, outdir } => figures(which, &outdir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
