//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dissem_core::engine::{ReshufflingSim, Simulation};
use dissem_core::topology::{check_cut_condition, is_unique_path, NetworkSpec, UNIQUE_PATH_MAX_NODES};
use serde::Serialize;

use crate::config::{Command, RunConfig, Settings};
use crate::error::{Error, Result};
use crate::experiments::{self as ex, Discipline, Replications, RunLength, Scenario};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "dissemsim", version, about = "Packet dissemination simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
    /// JSON file with default settings (flags take precedence)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write a JSON-lines event trace of the first replication (simulate)
    #[arg(long, global = true)]
    pub trace: bool,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Sub {
    /// Run one scenario or one network and discipline
    Simulate,
    /// Distinct packets, undelivered copies and AoI for OU, RU and Selfish
    Table1,
    /// Slowdown and its variance across network sizes
    Table2,
    /// Reshuffling useful-count statistics
    Table3,
    /// Mean normalized delay profiles and sojourn histograms
    Profile,
    /// Impulse drain under reshuffling and Random-Useful
    Impulse,
    /// Three-node counterexample under OU and RU
    Instability,
    /// Transport model convergence and the impulse limit
    Hydro,
    /// Free-system sojourn: closed form and simulation
    Free,
    /// Cut condition and unique-path check of a network
    Check,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Simulate => Command::Simulate,
            Sub::Table1 => Command::Table1,
            Sub::Table2 => Command::Table2,
            Sub::Table3 => Command::Table3,
            Sub::Profile => Command::Profile,
            Sub::Impulse => Command::Impulse,
            Sub::Instability => Command::Instability,
            Sub::Hydro => Command::Hydro,
            Sub::Free => Command::Free,
            Sub::Check => Command::Check,
        }
    }
}

/// Exit status for an error: 2 invalid input, 3 unreadable network,
/// 4 output failure, 1 anything else.
pub fn exit_code(e: &Error) -> u8 {
    use dissem_core::Error as C;
    match e {
        Error::Invalid { .. } | Error::ConfigFile { .. } | Error::Precondition(_) => 2,
        Error::Core(C::InvalidParameter { .. } | C::InvalidNetwork(_) | C::SizeLimit { .. }) => 2,
        Error::UnknownNetwork(_) | Error::NetworkFile { .. } | Error::NetworkFormat { .. } => 3,
        Error::Output { .. } | Error::Csv(_) | Error::Json(_) => 4,
        _ => 1,
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolves and validates the configuration, runs, writes the result
/// directory and returns the human-readable summary.
pub fn run(cli: &Cli) -> Result<String> {
    let cmd = cli.command.command();
    let file = cli.config.as_deref().map(Settings::from_file).transpose()?;
    let env_seed = std::env::var("DISSEMSIM_SEED").ok();
    let cfg = RunConfig::resolve(cmd, &cli.settings, file.as_ref(), env_seed.as_deref(), cli.trace)?;
    cfg.validate()?;
    let net = match cmd {
        Command::Simulate | Command::Check if cfg.scenario.is_none() => Some(io::resolve_network(
            &cfg.network,
            cfg.n,
            cfg.lambda,
            cfg.epsilon,
        )?),
        _ => None,
    };
    if cmd == Command::Simulate && cfg.discipline == Discipline::Rs {
        if let Some(n) = &net {
            if !n.is_symmetric() {
                return Err(Error::Precondition("reshuffling needs a complete symmetric network".into()));
            }
        }
    }
    let out = match cmd {
        Command::Simulate => simulate(&cfg, net)?,
        Command::Table1 => table1(&cfg)?,
        Command::Table2 => table2(&cfg)?,
        Command::Table3 => table3(&cfg)?,
        Command::Profile => profile(&cfg)?,
        Command::Impulse => impulse(&cfg)?,
        Command::Instability => instability(&cfg)?,
        Command::Hydro => hydro(&cfg)?,
        Command::Free => free(&cfg)?,
        Command::Check => check(&cfg, net.expect("resolved above"))?,
    };
    Ok(out)
}

fn reps(cfg: &RunConfig) -> Replications {
    Replications::new(cfg.reps, cfg.seed).with_jobs(cfg.jobs)
}

fn length(cfg: &RunConfig) -> Result<RunLength> {
    RunLength::new(cfg.warmup, cfg.horizon)
}

/// Creates the result directory; called only once results exist.
fn make_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(|source| Error::Output {
        path: cfg.out.clone(),
        source,
    })
}

fn finish(cfg: &RunConfig, files: &[PathBuf], mut text: String) -> Result<String> {
    io::write_manifest(&cfg.out, cfg.subcommand.name(), cfg, files)?;
    let _ = writeln!(text, "results: {}", cfg.out.display());
    Ok(text)
}

/// Trims a fixed six-decimal rendering: `0.050000 -> 0.05`.
pub fn short(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn pm(s: &dissem_core::metrics::SummaryStats) -> String {
    format!("{:.4} ± {:.4}", s.mean, s.stderr)
}

fn metric_table(rows: &[ex::MetricSummary]) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "{:<8} {:>20} {:>22} {:>18}", "", "distinct", "undelivered", "aoi");
    for r in rows {
        let _ = writeln!(
            t,
            "{:<8} {:>20} {:>22} {:>18}",
            r.discipline.label(),
            pm(&r.distinct),
            pm(&r.undelivered),
            pm(&r.aoi)
        );
    }
    t
}

fn simulate(cfg: &RunConfig, net: Option<NetworkSpec>) -> Result<String> {
    let scenario = match &cfg.scenario {
        Some(name) => {
            let mut s = Scenario::named(name, cfg.seed)?;
            s.replications = s.replications.with_jobs(cfg.jobs);
            s
        }
        None => Scenario {
            name: "simulate".into(),
            network: net.expect("resolved network"),
            disciplines: vec![cfg.discipline],
            length: length(cfg)?,
            replications: reps(cfg),
        },
    };
    let rows = scenario.run()?;
    make_dir(cfg)?;
    let l = scenario.length;
    let csv = rows
        .iter()
        .flat_map(|r| io::summary_rows(r, l.horizon, l.warmup, scenario.replications.seed));
    let mut files = vec![io::write_csv(&cfg.out, "summary.csv", csv)?];
    if cfg.trace {
        files.push(write_trace(cfg, &scenario)?);
    }
    let mut text = format!(
        "scenario {} (N={}, {} replications, seed {})\n",
        scenario.name,
        scenario.network.node_count(),
        scenario.replications.count,
        scenario.replications.seed
    );
    text += &metric_table(&rows);
    for r in &rows {
        if let Some(s) = &r.slowdown {
            let _ = writeln!(text, "slowdown {}: {}", r.discipline, pm(s));
        }
    }
    finish(cfg, &files, text)
}

fn write_trace(cfg: &RunConfig, s: &Scenario) -> Result<PathBuf> {
    let path = cfg.out.join("events.jsonl");
    let file = File::create(&path).map_err(|source| Error::Output {
        path: path.clone(),
        source,
    })?;
    let mut w = io::TraceWriter::new(BufWriter::new(file));
    let d = s.disciplines[0];
    let rng = s.replications.stream(d, 0);
    match d.kind() {
        Some(kind) => Simulation::new(&s.network, kind, rng)?.run_until(s.length.horizon, &mut w),
        None => {
            let lambda = s.network.uniform_arrival_rate().unwrap_or(0.0);
            ReshufflingSim::new(s.network.node_count(), lambda, rng)?.run_until(s.length.horizon, &mut w)
        }
    }
    w.finish().map_err(|source| Error::Output {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn table1(cfg: &RunConfig) -> Result<String> {
    let l = length(cfg)?;
    let rows = ex::table_comparison(cfg.n, cfg.lambda, l, &reps(cfg))?;
    make_dir(cfg)?;
    let csv = rows.iter().flat_map(|r| io::summary_rows(r, l.horizon, l.warmup, cfg.seed));
    let files = vec![io::write_csv(&cfg.out, "summary.csv", csv)?];
    let mut text = format!("N={}, lambda={}\n", cfg.n, cfg.lambda);
    text += &metric_table(&rows);
    finish(cfg, &files, text)
}

fn table2(cfg: &RunConfig) -> Result<String> {
    let l = length(cfg)?;
    let rows = ex::slowdown_table(cfg.discipline, &cfg.ns, cfg.lambda, l, &reps(cfg))?;
    make_dir(cfg)?;
    let csv = rows.iter().flat_map(|r| io::summary_rows(r, l.horizon, l.warmup, cfg.seed));
    let files = vec![io::write_csv(&cfg.out, "summary.csv", csv)?];
    let mut text = format!("{}, lambda={}\n{:>6} {:>20} {:>10}\n", cfg.discipline, cfg.lambda, "N", "slowdown", "variance");
    for r in &rows {
        let sd = r.slowdown.map(|s| pm(&s)).unwrap_or_else(|| "-".into());
        let var = r.sojourn_variance.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(text, "{:>6} {:>20} {:>10}", r.n, sd, var);
    }
    finish(cfg, &files, text)
}

fn table3(cfg: &RunConfig) -> Result<String> {
    let rows = ex::rs_poisson_table(&cfg.ns, &cfg.lambdas, length(cfg)?, &reps(cfg))?;
    make_dir(cfg)?;
    let files = vec![
        io::write_csv(&cfg.out, "poisson.csv", rows.iter().map(io::PoissonRow::from))?,
        io::write_csv(&cfg.out, "useful_counts.csv", rows.iter().flat_map(io::useful_count_rows))?,
        io::write_csv(&cfg.out, "stage_profile.csv", rows.iter().flat_map(io::stage_profile_rows))?,
    ];
    let mut text = format!("{:>6} {:>7} {:>10} {:>18} {:>8} {:>8}\n", "N", "lambda", "-ln(1-l)", "psi_hat", "TV", "lag1");
    for r in &rows {
        let _ = writeln!(
            text,
            "{:>6} {:>7} {:>10.4} {:>18} {:>8.4} {:>8}",
            r.n,
            r.lambda,
            r.predicted,
            format!("{:.4} ± {:.4}", r.psi_hat, r.psi_runs.stderr),
            r.tv,
            r.lag1.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    finish(cfg, &files, text)
}

fn profile(cfg: &RunConfig) -> Result<String> {
    let l = length(cfg)?;
    let rows = ex::mndf_experiment(cfg.discipline, &cfg.ns, cfg.lambda, l, &reps(cfg))?;
    make_dir(cfg)?;
    let files = vec![
        io::write_csv(&cfg.out, "profile.csv", rows.iter().flat_map(|m| io::profile_rows(m, cfg.lambda)))?,
        io::write_csv(&cfg.out, "histogram.csv", rows.iter().flat_map(io::histogram_rows))?,
        io::write_csv(
            &cfg.out,
            "summary.csv",
            rows.iter().flat_map(|m| io::summary_rows(&m.summary, l.horizon, l.warmup, cfg.seed)),
        )?,
    ];
    let mut text = format!("{}, lambda={}\n", cfg.discipline, cfg.lambda);
    for m in &rows {
        let _ = writeln!(
            text,
            "N={:<6} R(0.25)={:.4} R(0.5)={:.4} R(0.75)={:.4} R(1)={:.4} ({} packets)",
            m.summary.n,
            m.profile.at(0.25),
            m.profile.at(0.5),
            m.profile.at(0.75),
            m.profile.total(),
            m.profile.n_packets
        );
    }
    finish(cfg, &files, text)
}

fn impulse(cfg: &RunConfig) -> Result<String> {
    let r = ex::impulse_experiment(cfg.mass, cfg.n, &reps(cfg))?;
    make_dir(cfg)?;
    let files = vec![io::write_csv(&cfg.out, "impulse.csv", io::impulse_rows(&r))?];
    let mut text = format!("impulse c={} N={} ({} packets)\n", r.c, r.n, r.mass);
    for x in [0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            text,
            "x={x:<5} rs {} ru {} limit {}",
            pm(&r.rs.at(x)?),
            pm(&r.ru.at(x)?),
            short(r.hydro.time_to(x))
        );
    }
    let _ = writeln!(text, "rs total minus (c+1): {:.4}", r.total_deviation()?);
    finish(cfg, &files, text)
}

#[derive(Serialize)]
struct InstabilitySummaryRow {
    discipline: String,
    slope: f64,
    slope_lo: f64,
    slope_hi: f64,
    creation_rate: f64,
    creation_lo: f64,
    creation_hi: f64,
    growth_factor: f64,
    mixed_states: u64,
}

fn instability(cfg: &RunConfig) -> Result<String> {
    let rows = ex::instability_experiment(cfg.epsilon, cfg.horizon, &reps(cfg))?;
    make_dir(cfg)?;
    let summary = rows.iter().map(|r| {
        let (a, b) = r.slope.ci95();
        let (c, d) = r.creation_rate.ci95();
        InstabilitySummaryRow {
            discipline: r.discipline.to_string(),
            slope: r.slope.mean,
            slope_lo: a,
            slope_hi: b,
            creation_rate: r.creation_rate.mean,
            creation_lo: c,
            creation_hi: d,
            growth_factor: r.growth_factor,
            mixed_states: r.mixed_states,
        }
    });
    let files = vec![
        io::write_csv(&cfg.out, "instability.csv", rows.iter().flat_map(io::instability_rows))?,
        io::write_csv(&cfg.out, "instability_summary.csv", summary)?,
    ];
    let mut text = format!("counterexample, epsilon={}, horizon={}\n", cfg.epsilon, cfg.horizon);
    for r in &rows {
        let (a, b) = r.slope.ci95();
        let (c, d) = r.creation_rate.ci95();
        let _ = writeln!(
            text,
            "{:<3} slope {:.4} [{:.4}, {:.4}]  creation rate {:.4} [{:.4}, {:.4}]  final packets {:.0}  mixed states {}",
            r.discipline.label(),
            r.slope.mean,
            a,
            b,
            r.creation_rate.mean,
            c,
            d,
            r.total_packets.last().copied().unwrap_or(0.0),
            r.mixed_states
        );
    }
    finish(cfg, &files, text)
}

#[derive(Serialize)]
struct SupRow {
    t: f64,
    sup_deviation: f64,
}

#[derive(Serialize)]
struct TimeRow {
    x: f64,
    time: f64,
}

fn hydro(cfg: &RunConfig) -> Result<String> {
    let psi = dissem_core::hydro::fixed_point(cfg.lambda)?;
    let xi0 = ex::random_step_density(cfg.seed, 8, 2.0 * psi.max(0.5), cfg.lambda)?;
    let times: Vec<f64> = (0..=20).map(|k| cfg.horizon * k as f64 / 20.0).collect();
    let r = ex::hydro_convergence(&xi0, &times)?;
    let imp = dissem_core::hydro::impulse_solution(if cfg.mass > 0.0 { cfg.mass } else { 5.0 })?;
    make_dir(cfg)?;
    let files = vec![
        io::write_csv(&cfg.out, "hydro_density.csv", io::density_rows(&r, 64))?,
        io::write_csv(
            &cfg.out,
            "hydro_sup.csv",
            r.times.iter().zip(&r.sup_deviation).map(|(&t, &s)| SupRow { t, sup_deviation: s }),
        )?,
        io::write_csv(
            &cfg.out,
            "hydro_impulse.csv",
            io::hydro_time_rows(&imp, 200).into_iter().map(|(x, time)| TimeRow { x, time }),
        )?,
    ];
    let mut text = format!("lambda={}, psi={:.6}\n", cfg.lambda, psi);
    for (t, s) in r.times.iter().zip(&r.sup_deviation).step_by(5) {
        let _ = writeln!(text, "t={t:<8} sup|xi-psi|={s:.3e}");
    }
    finish(cfg, &files, text)
}

#[derive(Serialize)]
struct FreeRow {
    #[serde(rename = "N")]
    n: usize,
    lambda: f64,
    b_n: f64,
    asymptote: f64,
    sim_mean: f64,
    sim_stderr: f64,
    profile_deviation: f64,
    packets: usize,
}

#[derive(Serialize)]
struct FreeProfileRow {
    x: f64,
    #[serde(rename = "R")]
    r: f64,
    stderr: f64,
}

fn free(cfg: &RunConfig) -> Result<String> {
    let r = ex::free_experiment(cfg.n, cfg.lambda, cfg.packets, cfg.seed)?;
    make_dir(cfg)?;
    let files = vec![
        io::write_csv(
            &cfg.out,
            "free.csv",
            [FreeRow {
                n: r.n,
                lambda: cfg.lambda,
                b_n: r.b_n,
                asymptote: r.asymptote,
                sim_mean: r.sojourn.mean,
                sim_stderr: r.sojourn.stderr,
                profile_deviation: r.profile_deviation,
                packets: cfg.packets,
            }],
        )?,
        io::write_csv(
            &cfg.out,
            "free_profile.csv",
            r.profile.points.iter().map(|p| FreeProfileRow {
                x: p.x,
                r: p.r,
                stderr: p.stderr,
            }),
        )?,
    ];
    let mut text = format!("B_{} = {:.6}    2 ln({})/{} = {:.6}\n", r.n, r.b_n, r.n, r.n, r.asymptote);
    let _ = writeln!(
        text,
        "simulated mean sojourn {} over {} packets; sup|R(x)-x| = {:.4}",
        pm(&r.sojourn),
        cfg.packets,
        r.profile_deviation
    );
    finish(cfg, &files, text)
}

#[derive(Serialize)]
struct CheckRecord {
    satisfied: bool,
    margin: f64,
    worst_subset: Vec<usize>,
    unique_path: Option<bool>,
}

fn check(cfg: &RunConfig, net: NetworkSpec) -> Result<String> {
    let cut = check_cut_condition(&net)?;
    let unique = if net.node_count() <= UNIQUE_PATH_MAX_NODES {
        Some(is_unique_path(&net)?)
    } else {
        None
    };
    let labels: Vec<usize> = cut.worst_subset.iter().map(|v| v.0 + 1).collect();
    let set = labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",");
    make_dir(cfg)?;
    let path = cfg.out.join("check.json");
    let rec = CheckRecord {
        satisfied: cut.satisfied,
        margin: cut.margin,
        worst_subset: labels,
        unique_path: unique,
    };
    fs::write(&path, serde_json::to_string_pretty(&rec)? + "\n").map_err(|source| Error::Output {
        path: path.clone(),
        source,
    })?;
    let mut text = format!(
        "cut condition: {}, margin {} at S={{{}}}\n",
        if cut.satisfied { "satisfied" } else { "violated" },
        short(cut.margin),
        set
    );
    let _ = writeln!(
        text,
        "unique path: {}",
        match unique {
            Some(true) => "yes",
            Some(false) => "no",
            None => "not checked (too many nodes)",
        }
    );
    finish(cfg, &[path], text)
}
