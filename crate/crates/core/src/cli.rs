//! Command-line front end: resolve a run configuration from flags and an
//! optional TOML file, run the sweep and write CSV tables.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{
    linear_grid, run_scenario, ExperimentError, GateKind, Mode, NoiseSpec, RunSettings, Scenario,
    ScenarioResult, SweepRow, SCENARIO_NAMES,
};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "GEOPHASE_WORKERS";

pub const CSV_HEADER: &str =
    "gamma,loss_fidelity,entropy,eof,se_loss,se_entropy,se_eof,tau,n_traj,seed";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("could not read config file {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("no rows to write")]
    EmptyTable,
    #[error("could not write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

#[derive(Debug, Parser)]
#[command(
    name = "geophase",
    version,
    about = "Decoherence sweeps for adiabatic and non-adiabatic geometric phase gates"
)]
struct Args {
    /// Named scenario (see --list-scenarios), or `custom` with --gate/--noise.
    #[arg(long)]
    scenario: Option<String>,
    /// Γ values: comma list `a,b,c` or linear range `lo:hi:n`.
    #[arg(long, value_name = "GRID")]
    gamma_grid: Option<String>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// full, fast or oracle.
    #[arg(long)]
    mode: Option<String>,
    /// Output CSV path; multi-series scenarios write `<stem>_<label>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print scenario names with their default parameters and exit.
    #[arg(long)]
    list_scenarios: bool,
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
    /// Custom gate: single:<γ_B>, conditional:<Δγ>, dynamic or fast.
    #[arg(long)]
    gate: Option<String>,
    /// Custom noise: x|y|z|isotropic[:a|b|both].
    #[arg(long)]
    noise: Option<String>,
}

/// Γ grid as written in a config file: a flag-style string or an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum GridValue {
    Text(String),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<String>,
    gamma_grid: Option<GridValue>,
    trajectories: Option<usize>,
    dt: Option<f64>,
    seed: Option<u64>,
    mode: Option<String>,
    out: Option<PathBuf>,
    gate: Option<String>,
    noise: Option<String>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub gate: Option<GateKind>,
    pub noise: Option<NoiseSpec>,
    pub gamma_grid: Option<Vec<f64>>,
    pub trajectories: usize,
    pub dt: f64,
    pub seed: u64,
    pub mode: Mode,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    ListScenarios,
    DumpConfig(RunConfig),
    Run(RunConfig),
}

/// Parses `lo:hi:n` (inclusive linear) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |tok: &str, why: &str| {
        CliError::Usage(format!("invalid --gamma-grid token `{tok}`: {why}"))
    };
    let text = text.trim();
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(text, "expected lo:hi:n"));
        }
        let lo: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| bad(parts[0], "not a number"))?;
        let hi: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| bad(parts[1], "not a number"))?;
        let n: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad(parts[2], "not a point count"))?;
        if n == 0 {
            return Err(bad(parts[2], "need at least one point"));
        }
        if hi < lo {
            return Err(bad(text, "upper end below lower end"));
        }
        linear_grid(lo, hi, n)
    } else {
        text.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(tok, "not a number"))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("empty --gamma-grid".into()));
    }
    if let Some(g) = grid.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(CliError::Usage(format!(
            "invalid --gamma-grid value `{g}`: must be ≥ 0"
        )));
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let err = |reason: String| CliError::Config {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    toml::from_str(&text).map_err(|e| err(e.to_string()))
}

fn usage_err(e: ExperimentError) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses the command line (including the program name) into a command.
/// Flags override keys from `--config`.
pub fn parse_args<I, T>(argv: I) -> Result<Command, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.list_scenarios {
        return Ok(Command::ListScenarios);
    }
    let file = match &args.config {
        Some(p) => read_config(p)?,
        None => ConfigFile::default(),
    };

    let mode = match args.mode.or(file.mode) {
        Some(m) => m.parse::<Mode>().map_err(usage_err)?,
        None => Mode::Full,
    };
    let gate = match args.gate.or(file.gate) {
        Some(g) => Some(g.parse::<GateKind>().map_err(usage_err)?),
        None => None,
    };
    let noise = match args.noise.or(file.noise) {
        Some(n) => Some(n.parse::<NoiseSpec>().map_err(usage_err)?),
        None => None,
    };
    let scenario = match args.scenario.or(file.scenario) {
        Some(s) => s,
        None if gate.is_some() => "custom".to_string(),
        None => {
            return Err(CliError::Usage(format!(
                "no scenario given; available: {}, custom",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    if scenario == "custom" {
        if gate.is_none() || noise.is_none() {
            return Err(CliError::Usage(
                "scenario `custom` needs --gate and --noise".into(),
            ));
        }
    } else {
        Scenario::named(&scenario).map_err(usage_err)?;
    }
    let gamma_grid = match (args.gamma_grid, file.gamma_grid) {
        (Some(text), _) | (None, Some(GridValue::Text(text))) => Some(parse_grid(&text)?),
        (None, Some(GridValue::List(list))) => {
            check_grid(&list)?;
            Some(list)
        }
        (None, None) => None,
    };
    if scenario == "custom" && gamma_grid.is_none() {
        return Err(CliError::Usage(
            "scenario `custom` needs --gamma-grid".into(),
        ));
    }
    let trajectories = args
        .trajectories
        .or(file.trajectories)
        .unwrap_or(mode.default_trajectories().max(1));
    if trajectories == 0 {
        return Err(CliError::Usage(
            "invalid --trajectories `0`: must be positive".into(),
        ));
    }
    let dt = args.dt.or(file.dt).unwrap_or(mode.default_dt());
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CliError::Usage(format!(
            "invalid --dt `{dt}`: must be positive"
        )));
    }
    let config = RunConfig {
        out: args
            .out
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from(format!("{scenario}.csv"))),
        scenario,
        gate,
        noise,
        gamma_grid,
        trajectories,
        dt,
        seed: args.seed.or(file.seed).unwrap_or(42),
        mode,
    };
    Ok(if args.dump_config {
        Command::DumpConfig(config)
    } else {
        Command::Run(config)
    })
}

impl RunConfig {
    /// TOML text that parses back to this configuration.
    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            scenario: Some(self.scenario.clone()),
            gamma_grid: self.gamma_grid.clone().map(GridValue::List),
            trajectories: Some(self.trajectories),
            dt: Some(self.dt),
            seed: Some(self.seed),
            mode: Some(self.mode.to_string()),
            out: Some(self.out.clone()),
            gate: self.gate.map(|g| g.to_string()),
            noise: self.noise.map(|n| n.to_string()),
        };
        toml::to_string(&file).expect("config serializes")
    }

    pub fn scenario(&self) -> Result<Scenario, ExperimentError> {
        let mut s = if self.scenario == "custom" {
            Scenario::custom(
                self.gate.expect("validated"),
                self.noise.expect("validated"),
                Vec::new(),
            )
        } else {
            Scenario::named(&self.scenario)?
        };
        if let Some(g) = &self.gamma_grid {
            s.grid = g.clone();
        }
        Ok(s)
    }

    pub fn settings(&self, workers: Option<usize>) -> RunSettings {
        RunSettings {
            mode: self.mode,
            trajectories: self.trajectories,
            dt: self.dt,
            seed: self.seed,
            workers,
        }
    }
}

/// Worker count from the environment; `None` means all available cores.
pub fn workers_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "invalid {WORKERS_ENV} `{v}`: must be a positive integer"
            ))),
        },
    }
}

/// `%.9g`-style formatting.
pub fn format_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let strip = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip(mantissa), sign, exp.abs())
    } else {
        strip(&format!("{:.*}", (8 - exp) as usize, x))
    }
}

/// CSV text for one table.
pub fn table_text(rows: &[SweepRow]) -> Result<String, CliError> {
    if rows.is_empty() {
        return Err(CliError::EmptyTable);
    }
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_g9).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            format_g9(r.gamma),
            format_g9(r.loss),
            format_g9(r.entropy),
            opt(r.eof),
            format_g9(r.se_loss),
            format_g9(r.se_entropy),
            opt(r.se_eof),
            format_g9(r.tau),
            r.n_traj,
            r.seed
        )
        .expect("write to string");
    }
    Ok(out)
}

/// Writes one CSV table. Nothing is created for an empty table.
pub fn emit_table(rows: &[SweepRow], path: &Path) -> Result<(), CliError> {
    let text = table_text(rows)?;
    std::fs::write(path, text).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Output path of one series: `out` itself for single-series results,
/// `<stem>_<label>.<ext>` otherwise.
pub fn series_path(out: &Path, label: &str, single: bool) -> PathBuf {
    if single {
        return out.to_path_buf();
    }
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{label}.{ext}"),
        None => format!("{stem}_{label}"),
    };
    out.with_file_name(name)
}

/// Writes every series of a result and returns the paths written.
pub fn emit_result(result: &ScenarioResult, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let single = result.series.len() == 1;
    let texts = result
        .series
        .iter()
        .map(|s| Ok((series_path(out, &s.label, single), table_text(&s.rows)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    for (path, text) in &texts {
        std::fs::write(path, text).map_err(|e| CliError::Write {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    }
    Ok(texts.into_iter().map(|(p, _)| p).collect())
}

/// Human-readable scenario list with default parameters.
pub fn scenario_listing() -> String {
    let mut out = String::new();
    for name in SCENARIO_NAMES {
        let s = Scenario::named(name).expect("built-in scenario");
        let full = RunSettings::for_mode(Mode::Full);
        let _ = writeln!(out, "{name}: {}", s.description);
        let _ = writeln!(
            out,
            "  grid: {} points in [{}, {}]; trajectories {}; dt {}; seed {}",
            s.grid.len(),
            format_g9(s.grid[0]),
            format_g9(*s.grid.last().expect("non-empty grid")),
            full.trajectories,
            full.dt,
            full.seed
        );
        for series in &s.series {
            let _ = writeln!(
                out,
                "  series {}: gate {}, noise {}",
                series.label, series.gate, series.noise
            );
        }
    }
    let _ = writeln!(
        out,
        "custom: --gate <gate> --noise <noise> --gamma-grid <grid>"
    );
    out
}

/// Runs a resolved configuration, reporting progress on stderr.
pub fn execute(config: &RunConfig, workers: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let scenario = config.scenario()?;
    let settings = config.settings(workers);
    let progress = |done: usize, total: usize| eprintln!("progress: {done}/{total} points");
    let result = run_scenario(&scenario, &settings, Some(&progress))?;
    emit_result(&result, &config.out)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let command = match parse_args(argv) {
        Ok(c) => c,
        Err(CliError::Usage(msg)) => {
            eprintln!("{}", msg.trim_end());
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match command {
        Command::ListScenarios => {
            print!("{}", scenario_listing());
            0
        }
        Command::DumpConfig(c) => {
            print!("{}", c.to_toml());
            0
        }
        Command::Run(c) => {
            let run = workers_from_env().and_then(|w| execute(&c, w));
            match run {
                Ok(paths) => {
                    for p in paths {
                        eprintln!("wrote {}", p.display());
                    }
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_config(args: &[&str]) -> Result<RunConfig, CliError> {
        let argv = std::iter::once("geophase").chain(args.iter().copied());
        match parse_args(argv)? {
            Command::Run(c) | Command::DumpConfig(c) => Ok(c),
            Command::ListScenarios => panic!("unexpected listing"),
        }
    }

    #[test]
    fn parse_examples() {
        let c = run_config(&[
            "--scenario",
            "fig1b",
            "--trajectories",
            "1000",
            "--seed",
            "42",
        ])
        .unwrap();
        assert_eq!(c.scenario, "fig1b");
        assert_eq!(c.trajectories, 1000);
        assert_eq!(c.seed, 42);
        assert_eq!(c.mode, Mode::Full);
        assert_eq!(c.out, PathBuf::from("fig1b.csv"));

        let c = run_config(&["--scenario", "fig2a", "--gamma-grid", "0:0.01:11"]).unwrap();
        let g = c.gamma_grid.unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert!((g[10] - 0.01).abs() < 1e-18);

        let err = run_config(&["--scenario", "nosuch"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("nosuch") && err.contains("fig1a"), "{err}");
    }

    #[test]
    fn errors_name_the_offending_token() {
        let err = run_config(&["--scenario", "fig1b", "--dt", "abc"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("abc"), "{err}");
        let err = run_config(&["--scenario", "fig1b", "--bogus"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("--bogus"), "{err}");
        let err = run_config(&["--scenario", "fig1b", "--gamma-grid", "0,x,1"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("`x`"), "{err}");
        let err = run_config(&[]).unwrap_err().to_string();
        assert!(err.contains("fig3b"), "{err}");
        assert!(run_config(&["--scenario", "fig1b", "--trajectories", "0"]).is_err());
        assert!(run_config(&["--scenario", "fig1b", "--dt", "-1"]).is_err());
        assert!(run_config(&["--scenario", "fig1b", "--mode", "slow"]).is_err());
    }

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("0.1, 0.2,0.3").unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(parse_grid("1:1:1").unwrap(), vec![1.0]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("-0.1").is_err());
    }

    #[test]
    fn mode_defaults() {
        let c = run_config(&["--scenario", "fig3a", "--mode", "fast"]).unwrap();
        assert_eq!(c.trajectories, 200);
        assert_eq!(c.dt, 6.5e-4);
    }

    #[test]
    fn custom_scenario_needs_gate_noise_and_grid() {
        let c = run_config(&[
            "--gate",
            "single:pi/8",
            "--noise",
            "z",
            "--gamma-grid",
            "0,0.01",
        ])
        .unwrap();
        assert_eq!(c.scenario, "custom");
        assert!(run_config(&[
            "--scenario",
            "custom",
            "--gate",
            "dynamic",
            "--gamma-grid",
            "0"
        ])
        .is_err());
        assert!(run_config(&["--gate", "dynamic", "--noise", "z:both"]).is_err());
    }

    #[test]
    fn config_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "scenario = \"fig3a\"\ngamma-grid = \"0:3:4\"\ntrajectories = 50\nseed = 7\nmode = \"fast\"\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let c = run_config(&["--config", p]).unwrap();
        assert_eq!(
            (c.scenario.as_str(), c.trajectories, c.seed),
            ("fig3a", 50, 7)
        );
        assert_eq!(c.gamma_grid.as_ref().unwrap().len(), 4);
        let c = run_config(&["--config", p, "--seed", "9", "--trajectories", "5"]).unwrap();
        assert_eq!((c.seed, c.trajectories), (9, 5));

        std::fs::write(&path, "scenaro = \"fig3a\"\n").unwrap();
        assert!(matches!(
            run_config(&["--config", p]),
            Err(CliError::Config { .. })
        ));
    }

    #[test]
    fn dump_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = run_config(&[
            "--gate",
            "conditional:pi/8",
            "--noise",
            "isotropic:both",
            "--gamma-grid",
            "0:0.01:7",
            "--dt",
            "0.0003",
            "--mode",
            "oracle",
        ])
        .unwrap();
        let path = dir.path().join("dump.toml");
        std::fs::write(&path, c.to_toml()).unwrap();
        let back = run_config(&["--config", path.to_str().unwrap()]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn g9_formatting() {
        assert_eq!(format_g9(0.0), "0");
        assert_eq!(format_g9(1.0), "1");
        assert_eq!(format_g9(0.1), "0.1");
        assert_eq!(format_g9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_g9(18.912387), "18.912387");
        assert_eq!(format_g9(2.6e-5), "2.6e-05");
        assert_eq!(format_g9(0.00012345678912), "0.000123456789");
        assert_eq!(format_g9(123456789.4), "123456789");
        assert_eq!(format_g9(1234567890.0), "1.23456789e+09");
        assert_eq!(format_g9(-0.5), "-0.5");
    }

    fn sample_row(eof: Option<f64>) -> SweepRow {
        SweepRow {
            gamma: 0.001,
            loss: 0.25,
            entropy: 0.5,
            eof,
            concurrence: eof,
            se_loss: 0.01,
            se_entropy: 0.02,
            se_eof: eof.map(|_| 0.03),
            se_concurrence: eof.map(|_| 0.03),
            tau: 18.9,
            n_traj: 1000,
            seed: 42,
        }
    }

    #[test]
    fn csv_layout() {
        let text = table_text(&[sample_row(None)]).unwrap();
        assert_eq!(
            text,
            format!("{CSV_HEADER}\n0.001,0.25,0.5,,0.01,0.02,,18.9,1000,42\n")
        );
        let text = table_text(&[sample_row(Some(0.75))]).unwrap();
        assert!(text.ends_with("0.001,0.25,0.5,0.75,0.01,0.02,0.03,18.9,1000,42\n"));
    }

    #[test]
    fn empty_table_creates_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        assert!(matches!(emit_table(&[], &path), Err(CliError::EmptyTable)));
        assert!(!path.exists());
        let bad = dir.path().join("missing").join("x.csv");
        assert!(matches!(
            emit_table(&[sample_row(None)], &bad),
            Err(CliError::Write { .. })
        ));
    }

    #[test]
    fn series_paths() {
        let out = Path::new("/tmp/run.csv");
        assert_eq!(series_path(out, "x", true), PathBuf::from("/tmp/run.csv"));
        assert_eq!(
            series_path(out, "pi8_z", false),
            PathBuf::from("/tmp/run_pi8_z.csv")
        );
    }

    #[test]
    fn listing_mentions_every_scenario() {
        let l = scenario_listing();
        for name in SCENARIO_NAMES {
            assert!(l.contains(name));
        }
    }
}
