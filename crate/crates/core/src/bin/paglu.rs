#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use paglu::estimation::fit_beta_with;
use paglu::fopdt::{log_grid, DEFAULT_DROP_THRESHOLD};
use paglu::io;
use paglu::metrics::accuracy;
use paglu::{
    bode, estimate_delay, fit_fopdt, fopdt_step_response, population_quartiles, Error, ErrorKind,
    Fopdt, Host, HrInput, Patient, Result, Scenario, Series, Sim, Unit,
};

#[derive(Parser)]
#[command(
    name = "paglu",
    version,
    about = "Glucose response to aerobic exercise in type 1 diabetes"
)]
struct Cli {
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunConfig {
    /// Patient parameter file (TOML); defaults to the nominal set
    #[arg(long, global = true)]
    patient: Option<PathBuf>,
    /// Host parameter file (TOML); defaults to the built-in host
    #[arg(long, global = true)]
    host: Option<PathBuf>,
    /// Scenario file (TOML); defaults to the control arm
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Internal integration step, min
    #[arg(long, global = true, default_value_t = 0.5)]
    dt_internal: f64,
    /// Seed for synthetic noise
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario; writes bg.csv and events.csv
    Simulate {
        /// Sampling interval of the glucose trace, min
        #[arg(long, default_value_t = 5.0)]
        output_dt: f64,
    },
    /// Fit the heart-rate gain beta to glucose measured during exercise
    FitBeta {
        /// Glucose trace (mg/dl) inside the exercise window
        #[arg(long)]
        bg: PathBuf,
        /// Absolute heart rate (bpm); replaces the scenario's step
        #[arg(long)]
        hr: Option<PathBuf>,
    },
    /// Fit gain and time constant of the dead-time disturbance model
    FitTf(FitTfArgs),
    /// Frequency response of a disturbance model; writes bode.csv
    Bode {
        /// Model file written by fit-tf; overrides --k/--t/--tau
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, required_unless_present = "model")]
        k: Option<f64>,
        #[arg(long, required_unless_present = "model")]
        t: Option<f64>,
        #[arg(long, required_unless_present = "model")]
        tau: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        omega_min: f64,
        #[arg(long, default_value_t = 1.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Compare a prediction with a reference; appends to accuracy.csv
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long, default_value = "1")]
        patient_id: String,
    },
    /// Simulate a cohort that differs only in beta; writes traces and quartiles
    Population {
        /// Comma-separated beta values, 1/bpm
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 5.0)]
        output_dt: f64,
    },
    /// Generate a noisy disturbance-model response for testing fit-tf
    SynthTf {
        #[arg(long)]
        k: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 52.0)]
        u_amp: f64,
        #[arg(long, default_value_t = 60.0)]
        t_on: f64,
        #[arg(long, default_value_t = 105.0)]
        t_off: f64,
        /// Grid step, min
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        /// Standard deviation of additive Gaussian noise, mg/dl
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value = "synth_tf.csv")]
        file: String,
    },
}

#[derive(Args)]
struct FitTfArgs {
    /// Glucose trace over the exercise session
    #[arg(long)]
    bg: PathBuf,
    /// Treat the trace as absolute glucose and subtract its pre-exercise mean
    #[arg(long)]
    absolute: bool,
    /// Dead time, min; estimated from an absolute trace when omitted
    #[arg(long)]
    tau: Option<f64>,
    /// Heart-rate step, bpm; defaults to the scenario's step amplitude
    #[arg(long)]
    u_amp: Option<f64>,
    #[arg(long)]
    t_on: Option<f64>,
    #[arg(long)]
    t_off: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let usage = e.render().to_string();
            return report(
                "validation",
                1,
                usage.lines().next().unwrap_or("invalid arguments"),
            );
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.kind() {
            ErrorKind::Validation => report("validation", 1, &e.to_string()),
            ErrorKind::Numerical => report("numerical", 2, &e.to_string()),
        },
    }
}

/// One machine-parsable line on stderr: `error kind=<kind> message="<text>"`.
fn report(kind: &str, code: u8, message: &str) -> ExitCode {
    let message = message
        .trim_start_matches("error: ")
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', " ");
    eprintln!("error kind={kind} message=\"{message}\"");
    ExitCode::from(code)
}

impl RunConfig {
    fn patient(&self) -> Result<Patient> {
        self.patient
            .as_ref()
            .map_or_else(|| Ok(Patient::nominal()), io::load_patient)
    }

    fn host(&self) -> Result<Host> {
        self.host
            .as_ref()
            .map_or_else(|| Ok(Host::placeholder()), io::load_host)
    }

    fn scenario(&self) -> Result<Scenario> {
        self.scenario
            .as_ref()
            .map_or_else(|| Ok(Scenario::control()), io::load_scenario)
    }

    fn simulator(&self, output_dt: f64) -> Result<Sim> {
        for (field, v) in [("dt_internal", self.dt_internal), ("output_dt", output_dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositive { field, value: v });
            }
        }
        Ok(Sim {
            dt_internal: self.dt_internal,
            output_dt,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.run;
    match cli.command {
        Command::Simulate { output_dt } => {
            let r = cfg.simulator(output_dt)?.run_scenario(
                &cfg.patient()?,
                &cfg.host()?,
                &cfg.scenario()?,
            )?;
            io::write_timeseries_csv(cfg.out("bg.csv"), &r.bg)?;
            io::write_events_csv(cfg.out("events.csv"), &r.events)?;
            let v = r.bg.values();
            println!(
                "bg start={} end={} min={}",
                v[0],
                v[v.len() - 1],
                v.iter().copied().fold(f64::INFINITY, f64::min)
            );
        }
        Command::FitBeta { bg, hr } => {
            let y = io::load_timeseries_csv(&bg)?;
            let hr = hr.map(io::load_timeseries_csv).transpose()?;
            let sim = cfg.simulator(Sim::default().output_dt)?;
            let report = fit_beta_with(
                &sim,
                &y,
                hr.as_ref(),
                &cfg.patient()?,
                &cfg.host()?,
                &cfg.scenario()?,
            )?;
            let text = io::fit_report_toml(&report);
            io::write_text(cfg.out("fit_beta.toml"), &text)?;
            print!("{text}");
        }
        Command::FitTf(args) => fit_tf(&cfg, args)?,
        Command::Bode {
            model,
            k,
            t,
            tau,
            omega_min,
            omega_max,
            points,
        } => {
            let model = match model {
                Some(path) => load_model(&path)?,
                None => Fopdt::new(
                    k.unwrap_or_default(),
                    t.unwrap_or_default(),
                    tau.unwrap_or_default(),
                )?,
            };
            if !(omega_min > 0.0 && omega_max > omega_min && points >= 2) {
                return Err(Error::InvalidParameter {
                    field: "omega",
                    reason: "need 0 < omega_min < omega_max and at least 2 points".into(),
                });
            }
            let pts = bode(&model, &log_grid(omega_min, omega_max, points))?;
            io::write_bode_csv(cfg.out("bode.csv"), &pts)?;
            println!("dc_gain_db={} points={}", pts[0].mag_db, pts.len());
        }
        Command::Metrics {
            reference,
            prediction,
            patient_id,
        } => {
            let y = io::load_timeseries_csv(reference)?;
            let y_hat = io::load_timeseries_csv(prediction)?;
            let report = accuracy(&y, &y_hat)?;
            io::append_accuracy_csv(cfg.out("accuracy.csv"), &patient_id, &report)?;
            println!(
                "patient_id={patient_id} e_fit={} e_rms_mg_dl={}",
                report.e_fit, report.e_rms
            );
        }
        Command::Population { betas, output_dt } => {
            let base = cfg.patient()?;
            let cohort: Vec<Patient> = betas.iter().map(|&b| base.with_beta(b)).collect();
            let runs = cfg.simulator(output_dt)?.run_population(
                &cohort,
                &cfg.host()?,
                &cfg.scenario()?,
            )?;
            let mut traces = Vec::new();
            let mut first_err = None;
            for (i, r) in runs.into_iter().enumerate() {
                match r {
                    Ok(r) => {
                        io::write_timeseries_csv(
                            cfg.out(&format!("population/patient_{:02}.csv", i + 1)),
                            &r.bg,
                        )?;
                        traces.push(r.bg);
                    }
                    Err(e) => {
                        log::warn!("patient {} (beta {}) failed: {e}", i + 1, betas[i]);
                        first_err.get_or_insert(e);
                    }
                }
            }
            if !traces.is_empty() {
                io::write_quartiles_csv(cfg.out("quartiles.csv"), &population_quartiles(&traces)?)?;
            }
            println!("patients={} succeeded={}", betas.len(), traces.len());
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        Command::SynthTf {
            k,
            t,
            tau,
            u_amp,
            t_on,
            t_off,
            dt,
            noise_sd,
            file,
        } => {
            let model = Fopdt::new(k, t, tau)?;
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::NonPositive {
                    field: "dt",
                    value: dt,
                });
            }
            if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                return Err(Error::InvalidParameter {
                    field: "noise_sd",
                    reason: format!("must be >= 0, got {noise_sd}"),
                });
            }
            let n = ((t_off - t_on) / dt + 1e-9).floor() as usize + 1;
            let grid = Series::new(t_on, dt, vec![0.0; n], Unit::MgPerDl)?;
            let clean = fopdt_step_response(&model, u_amp, t_on, t_off, &grid)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter {
                field: "noise_sd",
                reason: e.to_string(),
            })?;
            let noisy = clean.map(|v| v + noise.sample(&mut rng))?;
            io::write_timeseries_csv(cfg.out(&file), &noisy)?;
            println!("samples={n}");
        }
    }
    Ok(())
}

fn fit_tf(cfg: &RunConfig, args: FitTfArgs) -> Result<()> {
    let scenario = cfg.scenario()?;
    let data = io::load_timeseries_csv(&args.bg)?;
    let t_on = args.t_on.unwrap_or(scenario.exercise_start);
    let t_off = args.t_off.unwrap_or(scenario.exercise_end);
    let u_amp = match (args.u_amp, &scenario.hr_input) {
        (Some(u), _) => u,
        (None, HrInput::Step { amplitude }) => *amplitude,
        (None, HrInput::Series(_)) => {
            return Err(Error::InvalidParameter {
                field: "u_amp",
                reason: "scenario has a measured heart rate; pass --u-amp".into(),
            })
        }
    };
    let tau = match args.tau {
        Some(tau) => tau,
        None if args.absolute => estimate_delay(&data, t_on, DEFAULT_DROP_THRESHOLD)?,
        None => {
            return Err(Error::InvalidParameter {
                field: "tau",
                reason: "pass --tau, or --absolute so it can be estimated from the trace".into(),
            })
        }
    };
    let y_ref = if args.absolute {
        let pre: Vec<f64> = data
            .iter()
            .filter(|(t, _)| *t < t_on)
            .map(|(_, v)| v)
            .collect();
        if pre.is_empty() {
            return Err(Error::InvalidSignal(format!(
                "no samples before t_on = {t_on} to set the baseline"
            )));
        }
        let baseline = pre.iter().sum::<f64>() / pre.len() as f64;
        data.window(t_on, t_off)?.map(|v| v - baseline)?
    } else {
        data.window(t_on, t_off)?
    };
    let report = fit_fopdt(&y_ref, tau, u_amp, (t_on, t_off))?;
    let text = format!("{}tau_min = {tau:?}\n", io::fit_report_toml(&report));
    io::write_text(cfg.out("fit_tf.toml"), &text)?;
    print!("{text}");
    Ok(())
}

fn load_model(path: &Path) -> Result<Fopdt> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let report = io::parse_fit_report(&text)?;
    let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
    let tau = table
        .get("tau_min")
        .and_then(toml::Value::as_float)
        .ok_or_else(|| Error::Config(format!("{}: missing `tau_min`", path.display())))?;
    let get = |n: &str| {
        report
            .get(n)
            .ok_or_else(|| Error::Config(format!("{}: missing `{n}`", path.display())))
    };
    Fopdt::new(get("K")?, get("T")?, tau)
}
