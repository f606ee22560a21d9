use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use decaylab::comparison::{k_inverse, solve_comparison_to};
use decaylab::convex::{envelope_general, envelope_simplified, DecayEnvelope};
use decaylab::harness::experiment::{analyze_trace, run_experiment, sweep, write_atomic, write_outcome};
use decaylab::harness::fit::{fit_tail_exponent, fraction_window, FitMode};
use decaylab::harness::suite::run_suite;
use decaylab::harness::ExperimentConfig;
use decaylab::wave::{self, EnergyTrace};
use decaylab::{Error, Family, FeedbackLaw};

#[derive(Parser)]
#[command(name = "decaylab", version, about = "Energy decay of indirectly damped wave systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate H, H', Λ_H and optional envelopes (tab-separated)
    Calc(CalcArgs),
    /// Run the simulation of a config and write the trace CSV
    Simulate(ConfigArgs),
    /// Fit the tail of a trace CSV
    Fit(FitArgs),
    /// Comparison ODE table, or with --trace a full envelope comparison
    Compare(CompareArgs),
    /// Lemma checks and quick invariant battery
    Suite,
    /// Run every config in a directory in parallel
    Sweep(SweepArgs),
    /// Simulate, fit, check inequalities and compare envelopes
    Run(ConfigArgs),
}

#[derive(Args)]
struct LawArgs {
    /// Read the law from a config file instead of the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FamilyName::Power)]
    family: FamilyName,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long)]
    r0: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    Linear,
    Power,
    ExpInvSquare,
    PowerLog,
    SubExponential,
}

impl LawArgs {
    fn law(&self) -> Result<FeedbackLaw, Error> {
        if let Some(path) = &self.config {
            return ExperimentConfig::load(path)?.law().map_err(|e| Error::Config(e.to_string()));
        }
        let family = match self.family {
            FamilyName::Linear => Family::Linear,
            FamilyName::Power => Family::Power { p: self.p },
            FamilyName::ExpInvSquare => Family::ExpInvSquare,
            FamilyName::PowerLog => Family::PowerLog { p: self.p, q: self.q },
            FamilyName::SubExponential => Family::SubExponential { p: self.p },
        };
        let r0 = self.r0.unwrap_or_else(|| family.default_r0());
        FeedbackLaw::new(family, r0).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Args)]
struct CalcArgs {
    #[command(flatten)]
    law: LawArgs,
    /// Geometric sample points in (0, r0²]
    #[arg(long, default_value_t = 12)]
    points: usize,
    /// Times at which to evaluate the upper envelopes
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeName {
    Power,
    Log,
    Stretched,
    Exponential,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeName::Power)]
    mode: ModeName,
    /// Exponent of the stretched mode
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    lo_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    hi_fraction: f64,
    /// Also write fit.kv here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    law: LawArgs,
    /// Trace CSV to compare against the config's envelopes
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Initial value; defaults to r0²
    #[arg(long)]
    z0: Option<f64>,
    #[arg(long, default_value_t = 1000.0)]
    horizon: f64,
    #[arg(long, default_value_t = 101)]
    samples: usize,
    /// Product γ_s C_s of the lower envelope
    #[arg(long, default_value_t = 1.0)]
    gamma_cs: f64,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.0)]
    t1: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Assertion,
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Cfl { .. } | Error::InvalidParameter(_) | Error::Io(_) => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calc(a) => calc(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Compare(a) => compare(&a),
        Command::Suite => suite(),
        Command::Sweep(a) => run_sweep(&a),
        Command::Run(a) => run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
    }
}

fn out_dir(cfg: &ExperimentConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

fn calc(a: &CalcArgs) -> Result<(), Failure> {
    let law = a.law.law()?;
    let lim = law.lambda_limit();
    println!("family\t{}", law.family().name());
    println!("r0\t{}", law.r0());
    println!("limsup_lambda\t{:.12e}", lim.limsup);
    println!("liminf_lambda\t{:.12e}", lim.liminf);
    println!("extrapolated_lambda\t{:.12e}", lim.extrapolated);
    println!("strictly_convex\t{}", law.convexity_check(1000)?.strictly_convex);
    println!();
    println!("x\tH\tH'\tLambda_H");
    let n = a.points.max(1);
    for k in 0..n {
        let x = law.x_max() * 0.5f64.powi(4 * k as i32);
        println!("{x:.12e}\t{:.12e}\t{:.12e}\t{:.12e}", law.h(x)?, law.h_prime(x)?, law.lambda_h(x)?);
    }
    if !a.times.is_empty() {
        println!();
        println!("t\tgeneral\tsimplified");
        let general = DecayEnvelope::general(law, a.beta, a.m);
        let simplified = DecayEnvelope::simplified(law, a.beta, a.m, a.kappa);
        for &t in &a.times {
            let g = envelope_general(&general, t).map_or(f64::NAN, |v| v);
            let s = envelope_simplified(&simplified, t).map_or(f64::NAN, |v| v);
            println!("{t}\t{g:.12e}\t{s:.12e}");
        }
    }
    Ok(())
}

fn simulate(a: &ConfigArgs) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&a.config)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let trace = wave::run(&cfg.sim_params()?)?;
    let path = out_dir(&cfg, &a.out).join(&cfg.output.trace);
    write_atomic(&path, &trace.to_csv())?;
    println!("{}", path.display());
    Ok(())
}

fn load_trace(path: &Path) -> Result<EnergyTrace, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(EnergyTrace::from_csv(&text)?)
}

fn fit(a: &FitArgs) -> Result<(), Failure> {
    let trace = load_trace(&a.trace)?;
    let points: Vec<(f64, f64)> = trace.samples.iter().map(|s| (s.t, s.e)).collect();
    let mode = match a.mode {
        ModeName::Power => FitMode::Power,
        ModeName::Log => FitMode::Log,
        ModeName::Stretched => FitMode::Stretched { p: a.p },
        ModeName::Exponential => FitMode::Exponential,
    };
    let window = fraction_window(&points, a.lo_fraction, a.hi_fraction, mode)?;
    let f = fit_tail_exponent(&points, window, mode)?;
    let text = format!(
        "mode={}\nslope={:.10e}\nintercept={:.10e}\nstderr={:.10e}\nr_squared={:.10e}\nwindow_lo={:.10e}\nwindow_hi={:.10e}\nsamples={}\n",
        mode.name(),
        f.slope,
        f.intercept,
        f.stderr,
        f.r_squared,
        f.window.0,
        f.window.1,
        f.samples
    );
    print!("{text}");
    if let Some(dir) = &a.out {
        write_atomic(&dir.join("fit.kv"), &text)?;
    }
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<(), Failure> {
    if let Some(trace_path) = &a.trace {
        let cfg_path = a.law.config.as_ref().ok_or_else(|| Error::Config("compare --trace needs --config".into()))?;
        let cfg = ExperimentConfig::load(cfg_path)?;
        let trace = load_trace(trace_path)?;
        let outcome = analyze_trace(&cfg, trace)?;
        print!("{}", outcome.text_report());
        if let Some(dir) = &a.out {
            write_atomic(&dir.join(&cfg.output.report), &outcome.text_report())?;
            write_atomic(&dir.join(&cfg.output.summary), &outcome.key_values())?;
        }
        return if outcome.passes { Ok(()) } else { Err(Failure::Assertion) };
    }
    let law = a.law.law()?;
    let z0 = a.z0.unwrap_or(law.x_max());
    let sol = solve_comparison_to(&law, a.kappa, z0, a.horizon, a.samples)?;
    let env = DecayEnvelope::lower(law, a.gamma_cs, 1.0, a.t0, a.t1);
    let mut csv = String::from("t,z,K_inverse,lower_envelope\n");
    for &(t, z) in &sol.samples {
        let kinv = k_inverse(&law, a.kappa * t, z0)?;
        let lower = env.eval(t).unwrap_or(f64::NAN);
        csv.push_str(&format!("{t:.16e},{z:.16e},{kinv:.16e},{lower:.16e}\n"));
    }
    match &a.out {
        Some(dir) => write_atomic(&dir.join("compare.csv"), &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn suite() -> Result<(), Failure> {
    let lines = run_suite()?;
    let mut ok = true;
    for l in &lines {
        println!("{}\t{}\t{}", if l.passes { "PASS" } else { "FAIL" }, l.name, l.detail);
        ok &= l.passes;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

fn run_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let entries = sweep(&a.dir, &a.out)?;
    let mut config_error = false;
    let mut failed = false;
    for e in &entries {
        let name = e.config_path.display();
        match &e.outcome {
            Ok(o) => {
                println!("{}\t{name}", if o.passes { "PASS" } else { "FAIL" });
                failed |= !o.passes;
            }
            Err(err) => {
                println!("ERROR\t{name}\t{err}");
                match Failure::from(err.clone()) {
                    Failure::Config(_) => config_error = true,
                    _ => failed = true,
                }
            }
        }
    }
    if config_error {
        Err(Failure::Config(Error::Config("one or more configs were invalid".into())))
    } else if failed {
        Err(Failure::Assertion)
    } else {
        Ok(())
    }
}

fn run(a: &ConfigArgs) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(&a.config)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let outcome = run_experiment(&cfg)?;
    let files = write_outcome(&outcome, &out_dir(&cfg, &a.out))?;
    print!("{}", outcome.text_report());
    println!("wrote {}", files.report.display());
    if outcome.passes {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}
