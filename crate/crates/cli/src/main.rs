use std::fs::File;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use minimax_bounds::backward::{
    build_pair, run_backward, terminal_necessary, terminal_sufficient, TerminalKind, Verdict,
};
use minimax_bounds::bounds::{
    bisect_lower, bisect_upper, feasibility_floor, model_pairs, BoundsOptions,
};
use minimax_bounds::config::{load_config, ExperimentSpec};
use minimax_bounds::estimator::run_sequence;
use minimax_bounds::exact::{exact_gamma, ExactOptions};
use minimax_bounds::experiments::{format_sig, reference_experiments, run_curves, write_curves};
use minimax_bounds::forward::{stationary_defaults, StationarySolution};
use minimax_bounds::linalg::{Matrix, Vector};
use minimax_bounds::{Error, Result};

/// Minimax performance levels and the minimax multiple-model estimator.
#[derive(Parser)]
#[command(name = "mmbounds", version, about)]
struct Cli {
    /// Model-set configuration (TOML file or bundled name such as table1_a).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (directory for paper-experiments); stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Bisection tolerance on gamma.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Simplex grid spacing.
    #[arg(long, global = true)]
    theta_step: Option<f64>,

    /// Largest gamma probed before reporting that no upper bound exists.
    #[arg(long, global = true)]
    cap: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary Riccati solution of every model.
    Stationary,
    /// Pairwise definiteness certificates at a fixed gamma.
    Certify {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        horizon: usize,
        /// `sufficient` (upper bound) or `necessary` (lower bound).
        #[arg(long, default_value = "sufficient")]
        terminal: TerminalKind,
    },
    /// Feasibility floor and bisected lower and upper bounds.
    Bounds {
        /// A single horizon `N` or an inclusive range `A..B`.
        #[arg(long, value_parser = parse_horizon)]
        horizon: Option<RangeInclusive<usize>>,
    },
    /// Exact optimal performance level for one or two models.
    Exact {
        #[arg(long, value_parser = parse_horizon)]
        horizon: Option<RangeInclusive<usize>>,
        /// Bisection tolerance on gamma (same as --tol).
        #[arg(long)]
        gamma_tol: Option<f64>,
    },
    /// Floor, bounds and exact level in one table.
    Curves {
        #[arg(long, value_parser = parse_horizon)]
        horizon: Option<RangeInclusive<usize>>,
    },
    /// Runs the minimax estimator over measurements read from a CSV file.
    Estimate {
        #[arg(long)]
        gamma: f64,
        /// One row per time step, one column per output.
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Stationary regression table and the curves of the four bundled systems.
    PaperExperiments {
        #[arg(long, value_parser = parse_horizon)]
        horizon: Option<RangeInclusive<usize>>,
    },
}

fn parse_horizon(s: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let bad = |_| format!("expected N or A..B, got `{s}`");
    match s.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(bad)?;
            let b: usize = b.trim_start_matches('=').trim().parse().map_err(bad)?;
            if a > b {
                return Err(format!("empty horizon range `{s}`"));
            }
            Ok(a..=b)
        }
        None => {
            let n = s.trim().parse().map_err(bad)?;
            Ok(n..=n)
        }
    }
}

struct Settings {
    spec: ExperimentSpec,
    output: Option<PathBuf>,
}

impl Settings {
    fn from_cli(cli: &Cli) -> Result<Settings> {
        let path = cli.config.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--config is required for this command".into())
        })?;
        let mut spec = load_config(path)?;
        if let Some(t) = cli.tol {
            spec.gamma_tol = positive(t, "--tol")?;
        }
        if let Some(s) = cli.theta_step {
            spec.theta_step = positive(s, "--theta-step")?;
        }
        if let Some(c) = cli.cap {
            spec.cap = positive(c, "--cap")?;
        }
        Ok(Settings {
            spec,
            output: cli.output.clone(),
        })
    }

    fn bounds_options(&self) -> BoundsOptions {
        BoundsOptions {
            tol: self.spec.gamma_tol,
            cap: self.spec.cap,
            pd_tol: self.spec.pd_tol,
            qunder: None,
        }
    }

    fn exact_options(&self) -> ExactOptions {
        ExactOptions {
            gamma_tol: self.spec.gamma_tol,
            theta_step: self.spec.theta_step,
            cap: self.spec.cap,
            pd_tol: self.spec.pd_tol,
        }
    }

    fn stationary(&self) -> Result<Vec<StationarySolution>> {
        stationary_defaults(&self.spec.model_set)
    }

    fn writer(&self) -> Result<csv::Writer<Box<dyn Write>>> {
        let sink: Box<dyn Write> = match &self.output {
            Some(p) => Box::new(File::create(p).map_err(|e| io_error(p, e))?),
            None => Box::new(io::stdout().lock()),
        };
        Ok(csv::Writer::from_writer(sink))
    }
}

fn positive(v: f64, flag: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!(
            "{flag} must be positive, got {v}"
        )))
    }
}

fn io_error(path: &Path, e: io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn matrix_field(m: &Matrix) -> String {
    m.row_iter()
        .map(|r| {
            r.iter()
                .map(|v| format_sig(*v))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn emit<I, S>(w: &mut csv::Writer<Box<dyn Write>>, record: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(record).map_err(csv_error)
}

fn cmd_stationary(s: &Settings) -> Result<()> {
    let stat = s.stationary()?;
    let mut w = s.writer()?;
    emit(
        &mut w,
        ["model", "P", "K", "Rtilde", "iterations", "residual"],
    )?;
    for (i, sol) in stat.iter().enumerate() {
        emit(
            &mut w,
            [
                (i + 1).to_string(),
                matrix_field(sol.p.as_matrix()),
                matrix_field(&sol.k),
                matrix_field(sol.rtilde.as_matrix()),
                sol.iterations.to_string(),
                format!("{:e}", sol.residual),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_certify(s: &Settings, gamma: f64, horizon: usize, kind: TerminalKind) -> Result<()> {
    let set = &s.spec.model_set;
    let stat = s.stationary()?;
    let mut certs = Vec::new();
    for (i, j) in model_pairs(set.len()) {
        let pair = build_pair(set, &stat, i, j)?;
        let term = match kind {
            TerminalKind::Sufficient => terminal_sufficient(&stat, i, j, gamma, None)?,
            TerminalKind::Necessary => terminal_necessary(&stat, i, j, gamma)?,
        };
        certs.push(run_backward(&pair, &term, horizon, s.spec.pd_tol)?);
    }
    let mut w = s.writer()?;
    emit(
        &mut w,
        ["i", "j", "gamma", "terminal", "N", "verdict", "T0"],
    )?;
    for cert in certs {
        let verdict = match cert.verdict {
            Verdict::AllDefinite => "definite".to_string(),
            Verdict::FailsAt(t) => format!("fails at t={t}"),
        };
        emit(
            &mut w,
            [
                (cert.i + 1).to_string(),
                (cert.j + 1).to_string(),
                format_sig(gamma),
                kind.to_string(),
                horizon.to_string(),
                verdict,
                cert.t0
                    .map(|t| matrix_field(t.as_matrix()))
                    .unwrap_or_default(),
            ],
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bounds(s: &Settings, horizon: RangeInclusive<usize>) -> Result<()> {
    let set = &s.spec.model_set;
    let stat = s.stationary()?;
    let opts = s.bounds_options();
    let floor = feasibility_floor(&stat);
    let mut rows = Vec::new();
    for n in horizon {
        let lower = bisect_lower(set, &stat, n, &opts)?;
        let upper = bisect_upper(set, &stat, n, &opts)?;
        rows.push([
            n.to_string(),
            format_sig(floor),
            format_sig(lower),
            format_sig(upper),
        ]);
    }
    let mut w = s.writer()?;
    emit(&mut w, ["N", "gamma_floor", "gamma_lower", "gamma_upper"])?;
    for row in rows {
        emit(&mut w, row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_exact(s: &Settings, horizon: RangeInclusive<usize>) -> Result<()> {
    let set = &s.spec.model_set;
    let stat = s.stationary()?;
    let opts = s.exact_options();
    let mut rows = Vec::new();
    for n in horizon {
        let r = exact_gamma(set, &stat, n, &opts)?;
        let theta = r
            .argmax_theta
            .iter()
            .map(|t| format_sig(*t))
            .collect::<Vec<_>>()
            .join(" ");
        rows.push([n.to_string(), format_sig(r.gamma), theta]);
    }
    let mut w = s.writer()?;
    emit(&mut w, ["N", "gamma_exact", "argmax_theta"])?;
    for row in rows {
        emit(&mut w, row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_curves(s: &Settings, horizon: RangeInclusive<usize>) -> Result<()> {
    let mut spec = s.spec.clone();
    spec.horizon = horizon;
    let rows = run_curves(&spec)?;
    match &s.output {
        Some(p) => write_curves(&rows, File::create(p).map_err(|e| io_error(p, e))?),
        None => write_curves(&rows, io::stdout().lock()),
    }
}

fn read_measurements(path: &Path, m: usize) -> Result<Vec<Vector>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut ys = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line: Some(line),
            message: e.to_string(),
        })?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse).collect();
        let values = match parsed {
            Ok(v) => v,
            // a leading non-numeric row is a header
            Err(_) if line == 1 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line: Some(line),
                    message: e.to_string(),
                })
            }
        };
        if values.len() != m {
            return Err(Error::Parse {
                line: Some(line),
                message: format!("expected {m} columns, found {}", values.len()),
            });
        }
        ys.push(Vector::from_vec(values));
    }
    Ok(ys)
}

fn cmd_estimate(s: &Settings, gamma: f64, measurements: &Path) -> Result<()> {
    let set = &s.spec.model_set;
    let stat = s.stationary()?;
    let ys = read_measurements(measurements, set.output_dim())?;
    let reports = run_sequence(set, &stat, gamma, &set.x0_hats(), &ys)?;
    let (n, m) = (set.state_dim(), set.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("x_hat_{k}")));
    header.push("value".into());
    header.extend((1..=m).map(|i| format!("theta_{i}")));
    header.extend((1..=m).map(|i| format!("c_{i}")));
    let mut w = s.writer()?;
    emit(&mut w, &header)?;
    for r in &reports {
        let mut rec = vec![r.t.to_string()];
        rec.extend(r.x_hat.iter().map(|v| format_sig(*v)));
        rec.push(format_sig(r.game_value));
        rec.extend(r.theta_star.iter().map(|v| format_sig(*v)));
        rec.extend(r.residual_costs.iter().map(|v| format_sig(*v)));
        emit(&mut w, &rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_reference(cli: &Cli, horizon: Option<RangeInclusive<usize>>) -> Result<()> {
    let dir = cli
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"));
    let out = reference_experiments(&dir, horizon, cli.theta_step)?;
    let mut stdout = io::stdout().lock();
    for r in &out.table1_rows {
        writeln!(
            stdout,
            "system {} model {}: P = {:.4} (reference {:.2}) {}",
            r.system,
            r.model,
            r.computed,
            r.reference,
            if r.pass { "pass" } else { "FAIL" }
        )?;
    }
    writeln!(stdout, "wrote {}", out.table1.display())?;
    for p in &out.curves {
        writeln!(stdout, "wrote {}", p.display())?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::PaperExperiments { horizon } = &cli.command {
        return cmd_reference(cli, horizon.clone());
    }
    let s = Settings::from_cli(cli)?;
    let default_horizon = s.spec.horizon.clone();
    match &cli.command {
        Command::Stationary => cmd_stationary(&s),
        Command::Certify {
            gamma,
            horizon,
            terminal,
        } => cmd_certify(&s, *gamma, *horizon, *terminal),
        Command::Bounds { horizon } => cmd_bounds(&s, horizon.clone().unwrap_or(default_horizon)),
        Command::Exact { horizon, gamma_tol } => {
            let mut s = s;
            if let Some(t) = gamma_tol {
                s.spec.gamma_tol = positive(*t, "--gamma-tol")?;
            }
            cmd_exact(&s, horizon.clone().unwrap_or(default_horizon))
        }
        Command::Curves { horizon } => cmd_curves(&s, horizon.clone().unwrap_or(default_horizon)),
        Command::Estimate {
            gamma,
            measurements,
        } => cmd_estimate(&s, *gamma, measurements),
        Command::PaperExperiments { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
