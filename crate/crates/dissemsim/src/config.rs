//! Run configuration: command-line flags over config-file values over
//! per-subcommand defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::experiments::{Discipline, SCENARIOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Table1,
    Table2,
    Table3,
    Profile,
    Impulse,
    Instability,
    Hydro,
    Free,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Table1 => "table1",
            Command::Table2 => "table2",
            Command::Table3 => "table3",
            Command::Profile => "profile",
            Command::Impulse => "impulse",
            Command::Instability => "instability",
            Command::Hydro => "hydro",
            Command::Free => "free",
            Command::Check => "check",
        }
    }
}

/// Settings that may come from flags or a JSON config file. Unset fields
/// fall through to the next source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Canned scenario for `simulate`
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Builtin network (symmetric, counterexample, star, path) or a JSON file
    #[arg(long, global = true)]
    pub network: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub discipline: Option<Discipline>,
    /// Number of nodes
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated list of node counts
    #[arg(long, global = true, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Per-node arrival rate
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Comma-separated list of arrival rates
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Load gap of the three-node counterexample
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// End time (final time for `hydro`)
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub warmup: Option<f64>,
    /// Replications
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Base seed (fallback: DISSEMSIM_SEED)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker cap; 0 means one per core
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Result directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Impulse size c
    #[arg(long, global = true)]
    pub mass: Option<f64>,
    /// Packets drawn by `free`
    #[arg(long, global = true)]
    pub packets: Option<usize>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let err = |reason: String| Error::ConfigFile {
            path: path.into(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Field-wise `self` if set, else `lower`.
    pub fn over(&self, lower: &Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.clone().or_else(|| lower.$f.clone()),)* } };
        }
        pick!(
            scenario, network, discipline, n, ns, lambda, lambdas, epsilon, horizon, warmup, reps,
            seed, jobs, out, mass, packets
        )
    }
}

/// Effective configuration of one invocation, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: Command,
    pub scenario: Option<String>,
    pub network: String,
    pub discipline: Discipline,
    pub n: usize,
    pub ns: Vec<usize>,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub epsilon: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub reps: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub mass: f64,
    pub packets: usize,
    pub trace: bool,
}

pub const DEFAULT_SEED: u64 = 1;

impl RunConfig {
    pub fn defaults(cmd: Command) -> Self {
        let mut c = RunConfig {
            subcommand: cmd,
            scenario: None,
            network: "symmetric".into(),
            discipline: Discipline::Ou,
            n: 50,
            ns: vec![50],
            lambda: 0.5,
            lambdas: vec![0.5],
            epsilon: 0.05,
            horizon: 20000.0,
            warmup: 2000.0,
            reps: 10,
            seed: DEFAULT_SEED,
            jobs: 0,
            out: Path::new("dissemsim-out").join(cmd.name()),
            mass: 5.0,
            packets: 10_000,
            trace: false,
        };
        match cmd {
            Command::Table2 => c.ns = vec![50, 100, 150, 200],
            Command::Table3 => {
                c.ns = vec![50, 100, 150, 200];
                c.lambdas = vec![0.3, 0.5, 0.7];
            }
            Command::Profile => c.ns = vec![50, 100],
            Command::Impulse => {
                c.n = 10_000;
                c.ns = vec![10_000];
            }
            Command::Instability => {
                c.network = "counterexample".into();
                c.horizon = 1e5;
                c.warmup = 0.0;
            }
            Command::Hydro => {
                c.horizon = 10.0;
                c.warmup = 0.0;
            }
            Command::Free => {
                c.n = 100;
                c.ns = vec![100];
                c.lambda = 0.0;
                c.lambdas = vec![0.0];
            }
            _ => {}
        }
        c
    }

    /// Applies `flags` over `file` over the defaults of `cmd`. The seed
    /// falls back to `env_seed` (the DISSEMSIM_SEED value) before the
    /// builtin default.
    pub fn resolve(
        cmd: Command,
        flags: &Settings,
        file: Option<&Settings>,
        env_seed: Option<&str>,
        trace: bool,
    ) -> Result<Self> {
        let s = match file {
            Some(f) => flags.over(f),
            None => flags.clone(),
        };
        let mut c = Self::defaults(cmd);
        c.trace = trace;
        c.scenario = s.scenario;
        if let Some(v) = s.network {
            c.network = v;
        }
        if let Some(v) = s.discipline {
            c.discipline = v;
        }
        match (s.n, s.ns) {
            (_, Some(ns)) => {
                c.n = ns.first().copied().unwrap_or(0);
                c.ns = ns;
            }
            (Some(n), None) => {
                c.n = n;
                c.ns = vec![n];
            }
            (None, None) => {}
        }
        match (s.lambda, s.lambdas) {
            (_, Some(ls)) => {
                c.lambda = ls.first().copied().unwrap_or(f64::NAN);
                c.lambdas = ls;
            }
            (Some(l), None) => {
                c.lambda = l;
                c.lambdas = vec![l];
            }
            (None, None) => {}
        }
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = s.$f { c.$f = v; })* };
        }
        take!(epsilon, horizon, warmup, reps, jobs, out, mass, packets);
        c.seed = match (s.seed, env_seed) {
            (Some(v), _) => v,
            (None, Some(e)) => e
                .trim()
                .parse()
                .map_err(|_| invalid("DISSEMSIM_SEED", format!("`{e}` is not an unsigned integer")))?,
            (None, None) => DEFAULT_SEED,
        };
        Ok(c)
    }

    /// Checks every parameter the subcommand uses. Touches the filesystem
    /// only to inspect the output location.
    pub fn validate(&self) -> Result<()> {
        use Command::*;
        let cmd = self.subcommand;
        let rate = |name: &'static str, v: f64| -> Result<()> {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and nonnegative"));
            }
            Ok(())
        };
        for &n in &self.ns {
            if n < 2 {
                return Err(invalid("n", "must be at least 2"));
            }
        }
        if self.ns.is_empty() {
            return Err(invalid("ns", "at least one size is required"));
        }
        if self.lambdas.is_empty() {
            return Err(invalid("lambdas", "at least one rate is required"));
        }
        for &l in &self.lambdas {
            rate("lambda", l)?;
        }
        rate("epsilon", self.epsilon)?;
        rate("mass", self.mass)?;
        let symmetric = matches!(cmd, Table1 | Table2 | Table3 | Profile | Hydro)
            || (matches!(cmd, Simulate | Check) && self.network == "symmetric");
        if symmetric && self.lambdas.iter().any(|&l| l >= 1.0) {
            return Err(invalid("lambda", "must be below 1 (the stability limit)"));
        }
        if matches!(cmd, Table3 | Profile | Table2) && self.lambdas.contains(&0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        if matches!(cmd, Simulate | Table1 | Table2 | Table3 | Profile) {
            if !(self.warmup.is_finite() && self.horizon.is_finite()) {
                return Err(invalid("horizon", "warmup and horizon must be finite"));
            }
            if !(self.horizon > self.warmup) {
                return Err(invalid("horizon", "must exceed warmup"));
            }
        }
        rate("warmup", self.warmup)?;
        if matches!(cmd, Instability | Hydro) && !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", "must be positive and finite"));
        }
        if cmd == Instability && !(self.epsilon > 0.0 && self.epsilon <= 0.1) {
            return Err(invalid("epsilon", "must lie in (0, 0.1]"));
        }
        if cmd == Impulse && !(self.mass > 0.0) {
            return Err(invalid("mass", "must be positive"));
        }
        if matches!(cmd, Simulate | Table1 | Table2 | Table3 | Profile | Impulse | Instability)
            && self.reps < 2
        {
            return Err(invalid("reps", "at least 2 replications are needed for error bars"));
        }
        if cmd == Free && self.packets < 2 {
            return Err(invalid("packets", "must be at least 2"));
        }
        if cmd == Table2 && self.discipline == Discipline::Rs {
            return Err(invalid("discipline", "use table3 for the reshuffling system"));
        }
        if let Some(s) = &self.scenario {
            if !SCENARIOS.contains(&s.as_str()) {
                return Err(invalid(
                    "scenario",
                    format!("unknown scenario `{s}`; known: {}", SCENARIOS.join(", ")),
                ));
            }
        }
        check_output(&self.out)
    }
}

/// The output location must be a directory or not exist yet, and its
/// nearest existing ancestor must be a writable directory.
fn check_output(out: &Path) -> Result<()> {
    if out.as_os_str().is_empty() {
        return Err(invalid("out", "must not be empty"));
    }
    let mut p = out.to_path_buf();
    loop {
        if let Ok(m) = std::fs::metadata(&p) {
            if !m.is_dir() {
                return Err(invalid("out", format!("{} is not a directory", p.display())));
            }
            if m.permissions().readonly() {
                return Err(invalid("out", format!("{} is not writable", p.display())));
            }
            return Ok(());
        }
        if !p.pop() || p.as_os_str().is_empty() {
            return Ok(());
        }
    }
}
