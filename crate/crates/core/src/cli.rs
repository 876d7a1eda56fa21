//! Command-line front end.
//!
//! Exit codes: `0` success, `1` configuration or input error, `2` a run
//! diverged (for `run`) or the suite/certificate did not meet expectations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::linsys::{gain_bound, l2_gain, tf_to_ss, true_indices_lti, FrequencySweep, RationalTF, DEFAULT_GAIN_SAFETY};
use crate::mmatrix::{certify_default, design_ifofp, design_ifp, design_ofp, design_passive, MMatrix};
use crate::scenario::{self, parse_override, Scenario, Summary, BUNDLED};

pub const OUT_ENV: &str = "PASSIGUARD_DEFAULT_OUT";

#[derive(Debug, Parser)]
#[command(name = "passiguard", version, about = "Passivity-index fault detection and controller reconfiguration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario config and write NAME.csv, NAME.events.csv and NAME.summary.txt.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the bundled scenarios with mitigation on and off.
    Suite {
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize a wrapper for a controller and certify it on probe signals.
    Certify {
        #[arg(long, value_enum)]
        case: CaseArg,
        #[arg(long)]
        rho_target: Option<f64>,
        #[arg(long)]
        nu_target: Option<f64>,
        #[command(flatten)]
        tf: TfArgs,
        /// Gain bound to design for; defaults to the controller's grid gain times 1.05.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print grid estimates of the IFP/OFP indices and L2 gain of a transfer function.
    Oracle {
        #[command(flatten)]
        tf: TfArgs,
        #[arg(long, default_value_t = 1e-3)]
        omega_min: f64,
        #[arg(long, default_value_t = 1e4)]
        omega_max: f64,
        #[arg(long, default_value_t = 200)]
        points_per_decade: usize,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory [default: ./results]
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// Config override KEY=VALUE (repeatable), e.g. --set mitigation=off
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Estimator window in seconds, or "none"
    #[arg(long)]
    pub window: Option<String>,
    /// Solver step in seconds
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TfArgs {
    /// Numerator coefficients, descending powers, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub num: Vec<f64>,
    /// Denominator coefficients, descending powers, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub den: Vec<f64>,
}

impl TfArgs {
    fn tf(&self) -> Result<RationalTF> {
        RationalTF::new(self.num.clone(), self.den.clone())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CaseArg {
    Passive,
    Ofp,
    Ifp,
    Ifofp,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        if let Some(w) = &self.window {
            out.push(("estimator.window".into(), w.clone()));
        }
        if let Some(dt) = self.dt {
            out.push(("solver.dt".into(), dt.to_string()));
        }
        Ok(out)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }
}

/// Parses `args` and runs the selected command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Run { config, common } => cmd_run(&config, &common),
        Command::Suite { common } => cmd_suite(&common),
        Command::Certify {
            case,
            rho_target,
            nu_target,
            tf,
            gamma,
            seed,
        } => cmd_certify(case, rho_target, nu_target, &tf, gamma, seed),
        Command::Oracle {
            tf,
            omega_min,
            omega_max,
            points_per_decade,
        } => cmd_oracle(&tf, FrequencySweep::new(omega_min, omega_max, points_per_decade)?),
    }
}

pub fn cmd_run(config: &Path, common: &Common) -> Result<u8> {
    let s = Scenario::from_file(config, &common.overrides()?)?;
    let log = scenario::run(&s)?;
    let summary = scenario::write_outputs(&log, &common.out_dir())?;
    println!("{}", summary_line(&summary));
    Ok(if log.diverged() { 2 } else { 0 })
}

fn summary_line(s: &Summary) -> String {
    format!(
        "{:<14} {:<4} sup|y| {:>12.4}  diverged {:<8} first fault {:>8}  reconfigs {}",
        s.name,
        if s.mitigation { "on" } else { "off" },
        s.sup_y,
        s.divergence_time.map_or("no".to_string(), |t| format!("{t:.2}")),
        s.first_fault.map_or("-".to_string(), |t| format!("{t:.3}")),
        s.reconfigurations
    )
}

/// One row of the suite report.
#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub summary: Summary,
    /// Mitigated runs should stay bounded, unmitigated ones should not.
    pub as_expected: bool,
}

/// Bound on `sup|y|` for a mitigated run to count as bounded.
pub const BOUNDED_SUP: f64 = 20.0;
/// `sup|y|` from which an unmitigated run counts as unbounded.
pub const UNBOUNDED_SUP: f64 = 100.0;

/// Runs every bundled scenario in both modes, in parallel.
pub fn run_suite(overrides: &[(String, String)], out: Option<&Path>) -> Result<Vec<SuiteRow>> {
    let jobs: Vec<(&str, bool)> = BUNDLED
        .iter()
        .flat_map(|(name, _)| [(*name, true), (*name, false)])
        .collect();
    let results: Vec<Result<SuiteRow>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(name, mitigation)| {
                scope.spawn(move || -> Result<SuiteRow> {
                    let text = BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).unwrap_or("");
                    let mut over = overrides.to_vec();
                    over.push(("mitigation".into(), mitigation.to_string()));
                    let tag = if mitigation { "on" } else { "off" };
                    over.push(("name".into(), format!("\"{name}_{tag}\"")));
                    let s = Scenario::load_with_overrides(text, &over)?;
                    let log = scenario::run(&s)?;
                    let mut summary = match out {
                        Some(dir) => scenario::write_outputs(&log, dir)?,
                        None => scenario::report(&log),
                    };
                    summary.name = name.to_string();
                    let as_expected = if mitigation {
                        summary.divergence_time.is_none() && summary.sup_y <= BOUNDED_SUP
                    } else {
                        summary.divergence_time.is_some() || summary.sup_y >= UNBOUNDED_SUP
                    };
                    Ok(SuiteRow { summary, as_expected })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::config("suite worker panicked"))))
            .collect()
    });
    results.into_iter().collect()
}

pub fn suite_table(rows: &[SuiteRow]) -> String {
    let mut s = format!(
        "{:<14} {:<4} {:>12} {:>9} {:>12} {:>9} {:>8}\n",
        "scenario", "mode", "sup|y|", "diverged", "first_fault", "reconfigs", "expected"
    );
    for r in rows {
        let m = &r.summary;
        s.push_str(&format!(
            "{:<14} {:<4} {:>12.4} {:>9} {:>12} {:>9} {:>8}\n",
            m.name,
            if m.mitigation { "on" } else { "off" },
            m.sup_y,
            m.divergence_time.map_or("no".to_string(), |t| format!("{t:.2}")),
            m.first_fault.map_or("-".to_string(), |t| format!("{t:.3}")),
            m.reconfigurations,
            if r.as_expected { "yes" } else { "NO" }
        ));
    }
    s
}

pub fn cmd_suite(common: &Common) -> Result<u8> {
    let dir = common.out_dir();
    let rows = run_suite(&common.overrides()?, Some(&dir))?;
    let table = suite_table(&rows);
    let path = dir.join("suite_report.txt");
    std::fs::write(&path, &table).map_err(|source| Error::Io { path, source })?;
    print!("{table}");
    Ok(if rows.iter().all(|r| r.as_expected) { 0 } else { 2 })
}

pub fn cmd_oracle(tf: &TfArgs, sweep: FrequencySweep) -> Result<u8> {
    let ss = tf_to_ss(&tf.tf()?)?;
    let idx = true_indices_lti(&ss, &sweep)?;
    let gain = l2_gain(&ss, &sweep)?;
    println!("nu (IFP, grid upper bound)   {:.9}", idx.nu);
    println!("rho (OFP, grid upper bound)  {:.9}", idx.rho);
    println!("L2 gain (grid lower bound)   {gain:.9}");
    println!("gamma = {DEFAULT_GAIN_SAFETY} x gain        {:.9}", gain * DEFAULT_GAIN_SAFETY);
    println!(
        "grid                         {}..{} rad/s, {} points/decade",
        sweep.omega_min, sweep.omega_max, sweep.points_per_decade
    );
    if !idx.skipped.is_empty() {
        println!("skipped (|G| = 0)            {:?}", idx.skipped);
    }
    Ok(0)
}

pub fn cmd_certify(
    case: CaseArg,
    rho_target: Option<f64>,
    nu_target: Option<f64>,
    tf: &TfArgs,
    gamma: Option<f64>,
    seed: u64,
) -> Result<u8> {
    let controller = tf_to_ss(&tf.tf()?)?;
    let gamma = match gamma {
        Some(g) => g,
        None => gain_bound(&controller, &FrequencySweep::default(), DEFAULT_GAIN_SAFETY)?,
    };
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::InvalidTarget(format!("--{name} is required for this case")))
    };
    let m: MMatrix = match case {
        CaseArg::Passive => design_passive(gamma)?,
        CaseArg::Ofp => design_ofp(gamma, need(rho_target, "rho-target")?)?,
        CaseArg::Ifp => design_ifp(gamma, need(nu_target, "nu-target")?)?,
        CaseArg::Ifofp => design_ifofp(gamma, need(rho_target, "rho-target")?, need(nu_target, "nu-target")?)?,
    };
    println!(
        "M = [{:.9}, {:.9}; {:.9}, {:.9}]  case {}  gamma {gamma:.6}",
        m.m11, m.m12, m.m21, m.m22, m.case
    );
    if let Some(a) = m.a {
        println!("a = {a:.9}");
    }
    if let Some(w) = &m.warning {
        println!("warning: {w}");
    }
    for c in m.constraints() {
        println!("  {:<28} slack {:+.3e} {}", c.label, c.slack, if c.holds() { "ok" } else { "VIOLATED" });
    }
    let cert = certify_default(&m, &controller, seed)?;
    println!("{cert}");
    Ok(if cert.passed() { 0 } else { 2 })
}
