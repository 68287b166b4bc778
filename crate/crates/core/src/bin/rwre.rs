use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use rwre::harness::{self, ExperimentConfig, ExperimentKind, ExperimentOutput, Format};

#[derive(Parser)]
#[command(name = "rwre", version, about = "Random walk in random environment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lambda grid, kappa, rate function and speed of a model.
    Spectrum(Common),
    /// Scaling of the walk position X_n.
    WalkExponent(Common),
    /// Scaling of the hitting time T_n.
    HittingExponent(Common),
    /// Scaling of the branching partial sums.
    ZsumExponent(Common),
    /// Generating-function invariant suite.
    GenfnAudit(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the replica count in the config.
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

fn load_config(path: &Path, kind: ExperimentKind, args: &Common) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| anyhow!("{}: expected a JSON object", path.display()))?;
    let name = serde_json::Value::String(kind.name().to_string());
    match obj.get("experiment") {
        None => {
            obj.insert("experiment".into(), name);
        }
        Some(v) if *v == name => {}
        Some(v) => bail!("{}: experiment is {v}, but the subcommand runs `{}`", path.display(), kind.name()),
    }
    let mut config: ExperimentConfig =
        serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(replicas) = args.replicas {
        config.replicas = replicas;
    }
    config.validate()?;
    Ok(config)
}

fn report(output: &ExperimentOutput) {
    match output {
        ExperimentOutput::Scaling(r) => {
            for s in &r.summary {
                println!(
                    "size {:>10}  median {:.4}  iqr [{:.4}, {:.4}]  flagged {}/{}",
                    s.size, s.median, s.q1, s.q3, s.flagged, s.count
                );
            }
            match r.fit {
                Some(f) => println!(
                    "slope {:.4} (stderr {}) status {:?}",
                    f.slope,
                    f.stderr.map_or("n/a".to_string(), |e| format!("{e:.4}")),
                    r.fit_status
                ),
                None => println!("slope unavailable: insufficient grid"),
            }
            if let Some(t) = r.target_exponent {
                println!("reference exponent {t:.6}");
            }
        }
        ExperimentOutput::Spectrum(r) => {
            match r.kappa_root {
                Some(k) => println!("kappa {:.12}", k.kappa),
                None => println!("kappa: no root in (0, 1]"),
            }
            println!("kappa via rate {:.6}", r.kappa_via_rate.kappa);
            match r.speed.speed {
                Some(v) => println!("speed {v:.6}"),
                None => println!("speed 0 (series diverges)"),
            }
        }
        ExperimentOutput::Audit(r) => {
            for t in &r.tallies {
                println!("{:<20} passed {:>6} failed {:>6} worst {:e}", t.check.name(), t.passed, t.failed, t.worst);
            }
        }
    }
}

fn run(kind: ExperimentKind, args: &Common) -> anyhow::Result<bool> {
    let config = load_config(&args.config, kind, args)?;
    let output = harness::run(&config)?;
    let files = output.emit(args.format, &args.out)?;
    report(&output);
    for f in files {
        println!("wrote {}", f.display());
    }
    let breaches = output.invariant_breaches();
    for b in &breaches {
        eprintln!("invariant breach: {b}");
    }
    Ok(breaches.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Spectrum(a) => (ExperimentKind::Spectrum, a),
        Command::WalkExponent(a) => (ExperimentKind::WalkExponent, a),
        Command::HittingExponent(a) => (ExperimentKind::HittingExponent, a),
        Command::ZsumExponent(a) => (ExperimentKind::ZsumExponent, a),
        Command::GenfnAudit(a) => (ExperimentKind::GenfnAudit, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
