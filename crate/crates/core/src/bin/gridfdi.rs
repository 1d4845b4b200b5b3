use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gridfdi::attack::Completion;
use gridfdi::detection::{DetectionMethod, DEFAULT_CONFIDENCE};
use gridfdi::market::solve_dc_opf;
use gridfdi::scenario::files::{self, AttackFile};
use gridfdi::scenario::report::{dispatch_rows, Report};
use gridfdi::scenario::{
    run_monte_carlo, run_scenario, AttackSpec, DetectorSpec, Injection, MeasurementSource,
    Scenario, DEFAULT_ATTACK_MAGNITUDE,
};
use gridfdi::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gridfdi",
    version,
    about = "DC state estimation and false-data-injection lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Network case file.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Meter configuration file.
    #[arg(long)]
    meters: Option<PathBuf>,
    /// Measurement file.
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// Detector confidence level [default: 0.99].
    #[arg(long)]
    confidence: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    ChiSquare,
    Lnr,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompletionArg {
    MinMeasurementChange,
    MinStateShift,
}

#[derive(Subcommand)]
enum Command {
    /// WLS state estimate.
    Estimate(#[command(flatten)] Common),
    /// Estimate and run bad-data detection.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
    },
    /// Build a stealth attack and check it against both detectors.
    Attack {
        #[command(subcommand)]
        kind: AttackCommand,
    },
    /// DC optimal power flow with LMPs.
    Opf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        market: PathBuf,
    },
    /// Scenario files.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCommand,
    },
    /// Repeat a scenario with derived seeds and report detection rates.
    Montecarlo {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
}

#[derive(Subcommand)]
enum AttackCommand {
    /// Random attack restricted to the given meters.
    Random {
        #[command(flatten)]
        common: Common,
        /// Controlled meters, 1-based, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        support: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_ATTACK_MAGNITUDE)]
        magnitude: f64,
        /// Also write the attack as a replayable JSON file.
        #[arg(long)]
        save_attack: Option<PathBuf>,
    },
    /// Attack with chosen state shifts, e.g. `--pin 4=-0.01`.
    Targeted {
        #[command(flatten)]
        common: Common,
        #[arg(long = "pin", value_parser = parse_pin, required = true)]
        pins: Vec<(u32, f64)>,
        #[arg(long, value_enum, default_value_t = CompletionArg::MinMeasurementChange)]
        completion: CompletionArg,
        #[arg(long)]
        save_attack: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_pin(s: &str) -> std::result::Result<(u32, f64), String> {
    let (bus, value) = s.split_once('=').ok_or("expected BUS=VALUE")?;
    let bus = bus.trim().parse().map_err(|e| format!("bad bus id: {e}"))?;
    let value = value
        .trim()
        .parse()
        .map_err(|e| format!("bad value: {e}"))?;
    Ok((bus, value))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Validation(format!("--{flag} is required for this command")))
}

fn check_confidence(c: f64) -> Result<f64> {
    if c > 0.0 && c < 1.0 {
        Ok(c)
    } else {
        Err(Error::Validation(format!(
            "confidence must lie in (0, 1), got {c}"
        )))
    }
}

/// Scenario assembled from the individual file flags.
fn ad_hoc(
    name: &str,
    common: &Common,
    attack: AttackSpec,
    methods: &[DetectionMethod],
) -> Result<Scenario> {
    let net = files::load_network(required(&common.case, "case")?)?;
    let meters = files::load_meters(required(&common.meters, "meters")?, &net)?;
    let z = files::load_measurements(required(&common.measurements, "measurements")?)?;
    if z.len() != meters.len() {
        return Err(Error::Validation(format!(
            "{} measurements for {} meters",
            z.len(),
            meters.len()
        )));
    }
    let confidence = check_confidence(common.confidence.unwrap_or(DEFAULT_CONFIDENCE))?;
    Ok(Scenario {
        name: name.to_string(),
        network: net,
        meters,
        measurements: MeasurementSource::Given(z),
        attack,
        detectors: methods
            .iter()
            .map(|&method| DetectorSpec { method, confidence })
            .collect(),
        market: None,
    })
}

/// Applies `--seed` and `--confidence` overrides to a loaded scenario.
fn override_scenario(s: &mut Scenario, common: &Common) -> Result<()> {
    if let Some(c) = common.confidence {
        let c = check_confidence(c)?;
        s.detectors.iter_mut().for_each(|d| d.confidence = c);
    }
    if let Some(new_seed) = common.seed {
        if let MeasurementSource::Simulate { seed, .. } = &mut s.measurements {
            *seed = new_seed;
        }
        if let AttackSpec::Random { seed, .. } = &mut s.attack {
            *seed = new_seed;
        }
    }
    Ok(())
}

const BOTH: [DetectionMethod; 2] = [
    DetectionMethod::ChiSquare,
    DetectionMethod::LargestNormalizedResidual,
];

fn execute(cmd: Command) -> Result<(Report, Common)> {
    match cmd {
        Command::Estimate(common) => {
            let s = ad_hoc("estimate", &common, AttackSpec::None, &[])?;
            Ok((run_scenario(&s)?.report().clone(), common))
        }
        Command::Detect { common, method } => {
            let methods: &[DetectionMethod] = match method {
                MethodArg::ChiSquare => &BOTH[..1],
                MethodArg::Lnr => &BOTH[1..],
                MethodArg::Both => &BOTH,
            };
            let s = ad_hoc("detect", &common, AttackSpec::None, methods)?;
            Ok((run_scenario(&s)?.report().clone(), common))
        }
        Command::Attack { kind } => {
            let (common, attack, save, name) = match kind {
                AttackCommand::Random {
                    common,
                    support,
                    magnitude,
                    save_attack,
                } => {
                    let support = support
                        .iter()
                        .map(|&k| {
                            k.checked_sub(1)
                                .ok_or_else(|| Error::Validation("meter numbers start at 1".into()))
                        })
                        .collect::<Result<BTreeSet<_>>>()?;
                    let attack = AttackSpec::Random {
                        support,
                        seed: common.seed.unwrap_or(0),
                        magnitude,
                    };
                    (common, attack, save_attack, "attack-random")
                }
                AttackCommand::Targeted {
                    common,
                    pins,
                    completion,
                    save_attack,
                } => {
                    let net = files::load_network(required(&common.case, "case")?)?;
                    let pins = pins
                        .into_iter()
                        .collect::<BTreeMap<_, _>>()
                        .into_iter()
                        .map(|(bus, v)| {
                            net.state_index(gridfdi::grid::BusId(bus))
                                .map(|i| (i, v))
                                .ok_or_else(|| {
                                    Error::Validation(format!(
                                        "bus {bus} is the slack or does not exist"
                                    ))
                                })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let completion = match completion {
                        CompletionArg::MinMeasurementChange => Completion::MinimumMeasurementChange,
                        CompletionArg::MinStateShift => Completion::MinimumStateShift,
                    };
                    (
                        common,
                        AttackSpec::Targeted { pins, completion },
                        save_attack,
                        "attack-targeted",
                    )
                }
            };
            let out = run_scenario(&ad_hoc(name, &common, attack, &BOTH)?)?;
            if let (Some(path), Some(Injection::Stealth(atk))) = (save, &out.evaluation.injection) {
                files::write_json(&path, &AttackFile::from(atk))?;
            }
            Ok((out.report().clone(), common))
        }
        Command::Opf { common, market } => {
            let net = files::load_network(required(&common.case, "case")?)?;
            let case = files::load_market(&market, &net)?;
            let res = solve_dc_opf(&case)?;
            let mut r = Report::new("opf");
            dispatch_rows(&mut r, "dispatch", &net, &res);
            Ok((r, common))
        }
        Command::Scenario {
            action: ScenarioCommand::Run { scenario, common },
        } => {
            let mut s = Scenario::load(&scenario)?;
            override_scenario(&mut s, &common)?;
            Ok((run_scenario(&s)?.report().clone(), common))
        }
        Command::Montecarlo {
            scenario,
            common,
            trials,
        } => {
            let mut s = Scenario::load(&scenario)?;
            override_scenario(
                &mut s,
                &Common {
                    seed: None,
                    ..common.clone()
                },
            )?;
            let summary = run_monte_carlo(&s, trials, common.seed.unwrap_or(0))?;
            Ok((summary.to_report(), common))
        }
    }
}

fn emit(report: &Report, common: &Common) -> Result<()> {
    let text = match common.format {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    };
    match &common.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command).and_then(|(report, common)| emit(&report, &common)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
