//! Command-line front end: simulate CHSH runs, scan fringes, reconstruct
//! states from projective counts, and search local-hidden-variable
//! strategies.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bellsim_core::analysis::{chsh_from_counts, fit_fringe, mean_visibility, FringeFit};
use bellsim_core::lhv::{LhvReport, PostselectionRule};
use bellsim_core::sim::{fringe_scan, run_chsh_experiment};
use bellsim_core::tomo::{
    fidelity_error_bar, ml_reconstruction, settings_from_csv, table2_settings, with_counts,
    ReconstructionJson, TomographySetting, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use bellsim_core::{Error, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "bellsim", version, about = "Bell-CHSH simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the four CHSH setting pairs and report S.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// RNG seed; fixed seed means byte-identical artifacts.
        #[arg(long)]
        seed: u64,
        /// Override the interferometer scheme (franson | hug).
        #[arg(long)]
        scheme: Option<String>,
        /// Override the two-photon visibility.
        #[arg(long)]
        visibility: Option<f64>,
        /// Override the emitted pairs per setting.
        #[arg(long)]
        pairs_per_setting: Option<u64>,
    },
    /// Scan phi_A at fixed phi_B and fit the four fringes.
    Fringes {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        seed: u64,
        /// Analyzer phase at station B.
        #[arg(long, default_value_t = 0.0)]
        phi_b: f64,
        /// Number of evenly spaced phi_A points over one period.
        #[arg(long, default_value_t = 24)]
        points: u32,
        /// Emitted pairs per grid point.
        #[arg(long, default_value_t = 14_000)]
        pairs_per_point: u64,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        visibility: Option<f64>,
    },
    /// Maximum-likelihood state reconstruction from projective counts.
    Tomo {
        #[command(flatten)]
        common: CommonArgs,
        /// Use the built-in 16-setting reference dataset.
        #[arg(long, conflicts_with = "counts")]
        table2: bool,
        /// CSV of settings and counts (index,proj_a,proj_b,count,duration_s).
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Accidental-coincidence rate (counts/s) subtracted per setting.
        #[arg(long)]
        subtract_accidentals: Option<f64>,
        /// Parametric bootstrap resamples for the fidelity error bar.
        #[arg(long)]
        bootstrap: Option<usize>,
        /// RNG seed (used by the bootstrap).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Search time-tagged local-hidden-variable strategies.
    Lhv {
        #[command(flatten)]
        common: CommonArgs,
        /// Postselection rule the adversary plays against.
        #[arg(long, value_enum)]
        rule: RuleArg,
        /// Try to reproduce the postselected quantum statistics at this
        /// visibility.
        #[arg(long)]
        target_quantum: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    /// No event is discarded.
    None,
    /// Keep a coincidence when both time tags agree.
    Franson,
    /// Keep or drop based on the hidden state alone.
    Hug,
}

impl From<RuleArg> for PostselectionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::None => PostselectionRule::None,
            RuleArg::Franson => PostselectionRule::TagMatch,
            RuleArg::Hug => PostselectionRule::SettingIndependent,
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::from_file(path),
        None => Ok(RunConfig::default()),
    }
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn cmd_simulate(
    common: &CommonArgs,
    seed: u64,
    scheme: Option<&str>,
    visibility: Option<f64>,
    pairs: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(s) = scheme {
        cfg.geometry.scheme = config::parse_scheme(s)?;
    }
    if let Some(v) = visibility {
        cfg.geometry.visibility = v;
    }
    if let Some(p) = pairs {
        cfg.pairs_per_setting = p;
    }
    cfg.geometry.validate()?;

    let table = run_chsh_experiment(&cfg.geometry, &cfg.settings, cfg.pairs_per_setting, seed)?;
    let report = chsh_from_counts(&table, &cfg.settings)?;
    write_artifact(&common.out, "counts.csv", &table.to_csv())?;
    write_artifact(&common.out, "chsh.json", &to_json(&report)?)?;
    match report.sigma_violation {
        Some(sigma) => println!(
            "S = {:.4} +/- {:.4} ({:.1} sigma above 2)",
            report.s, report.delta_s, sigma
        ),
        None => println!("S = {:.4} +/- {:.4} (no violation)", report.s, report.delta_s),
    }
    Ok(())
}

#[derive(Serialize)]
struct FringeReport {
    phi_b: f64,
    fits: Vec<FringeFit>,
    mean_visibility: f64,
    visibility_sem: f64,
}

fn cmd_fringes(
    common: &CommonArgs,
    seed: u64,
    phi_b: f64,
    points: u32,
    pairs_per_point: u64,
    scheme: Option<&str>,
    visibility: Option<f64>,
) -> Result<()> {
    if points < 4 {
        return Err(Error::Config("need at least 4 grid points".into()));
    }
    let mut cfg = load_config(common)?;
    if let Some(s) = scheme {
        cfg.geometry.scheme = config::parse_scheme(s)?;
    }
    if let Some(v) = visibility {
        cfg.geometry.visibility = v;
    }
    cfg.geometry.validate()?;

    let grid: Vec<f64> = (0..points)
        .map(|k| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * f64::from(k) / f64::from(points))
        .collect();
    let scan = fringe_scan(&cfg.geometry, phi_b, &grid, pairs_per_point, seed)?;

    let mut csv = String::from("phi_a,c11,c12,c21,c22\n");
    for (i, &pa) in scan.phi_a.iter().enumerate() {
        csv.push_str(&format!(
            "{:.8e},{},{},{},{}\n",
            pa, scan.counts[0][i], scan.counts[1][i], scan.counts[2][i], scan.counts[3][i]
        ));
    }
    write_artifact(&common.out, "fringes.csv", &csv)?;

    let mut fits = Vec::with_capacity(4);
    for channel in &scan.counts {
        let counts: Vec<f64> = channel.iter().map(|&c| c as f64).collect();
        fits.push(fit_fringe(&scan.phi_a, &counts)?);
    }
    let (mean_v, sem) = mean_visibility(&fits)?;
    let report = FringeReport {
        phi_b,
        fits,
        mean_visibility: mean_v,
        visibility_sem: sem,
    };
    write_artifact(&common.out, "fringe_fits.json", &to_json(&report)?)?;
    println!("mean visibility = {mean_v:.4} +/- {sem:.4}");
    Ok(())
}

#[derive(Serialize)]
struct TomoReport {
    #[serde(flatten)]
    reconstruction: ReconstructionJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    fidelity_error: Option<f64>,
}

fn cmd_tomo(
    common: &CommonArgs,
    table2: bool,
    counts: Option<&Path>,
    subtract: Option<f64>,
    bootstrap: Option<usize>,
    seed: u64,
) -> Result<()> {
    let mut settings: Vec<TomographySetting> = match (table2, counts) {
        (true, None) => table2_settings(),
        (false, Some(path)) => settings_from_csv(&std::fs::read_to_string(path)?)?,
        _ => {
            return Err(Error::Config(
                "exactly one of --table2 or --counts FILE is required".into(),
            ))
        }
    };
    if let Some(rate) = subtract {
        if rate < 0.0 || !rate.is_finite() {
            return Err(Error::Config("accidental rate must be nonnegative".into()));
        }
        let corrected: Vec<u64> = settings
            .iter()
            .map(|s| (s.count as f64 - rate * s.duration).round().max(0.0) as u64)
            .collect();
        settings = with_counts(&settings, &corrected);
    }

    let rec = ml_reconstruction(&settings, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let fidelity_error = match bootstrap {
        Some(n) => Some(fidelity_error_bar(&settings, n, seed)?),
        None => None,
    };
    let report = TomoReport {
        reconstruction: ReconstructionJson::from(&rec),
        fidelity_error,
    };
    write_artifact(&common.out, "tomo.json", &to_json(&report)?)?;
    match fidelity_error {
        Some(err) => println!(
            "fidelity = {:.4} +/- {err:.4}, predicted S = {:.4}",
            rec.fidelity_with_phi_plus, rec.predicted_s
        ),
        None => println!(
            "fidelity = {:.4}, predicted S = {:.4}",
            rec.fidelity_with_phi_plus, rec.predicted_s
        ),
    }
    Ok(())
}

fn cmd_lhv(common: &CommonArgs, rule: RuleArg, target: Option<f64>) -> Result<()> {
    let cfg = load_config(common)?;
    let report = LhvReport::build(rule.into(), target.map(|v| (v, &cfg.settings)))?;
    write_artifact(&common.out, "lhv.json", &to_json(&report)?)?;
    match &report.quantum_target {
        Some(t) if t.feasible => println!(
            "S* = {:.4}; quantum target at V = {} is feasible",
            report.s_star, t.visibility
        ),
        Some(t) => println!(
            "S* = {:.4}; quantum target at V = {} is infeasible",
            report.s_star, t.visibility
        ),
        None => println!("S* = {:.4}", report.s_star),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate {
            common,
            seed,
            scheme,
            visibility,
            pairs_per_setting,
        } => cmd_simulate(common, *seed, scheme.as_deref(), *visibility, *pairs_per_setting),
        Command::Fringes {
            common,
            seed,
            phi_b,
            points,
            pairs_per_point,
            scheme,
            visibility,
        } => cmd_fringes(
            common,
            *seed,
            *phi_b,
            *points,
            *pairs_per_point,
            scheme.as_deref(),
            *visibility,
        ),
        Command::Tomo {
            common,
            table2,
            counts,
            subtract_accidentals,
            bootstrap,
            seed,
        } => cmd_tomo(
            common,
            *table2,
            counts.as_deref(),
            *subtract_accidentals,
            *bootstrap,
            *seed,
        ),
        Command::Lhv {
            common,
            rule,
            target_quantum,
        } => cmd_lhv(common, *rule, *target_quantum),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Parse { .. } => 3,
        Error::Numeric(_) => 4,
        Error::Infeasible(_) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
