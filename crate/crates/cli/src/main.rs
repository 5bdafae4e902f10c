//! Command-line driver for the hybrid identification pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ipmc_ident::circuit::simulate_cascade;
use ipmc_ident::estimate::{estimate_params, EstimationProblem, Objective};
use ipmc_ident::pipeline::{
    evaluate_saved, resolve_circuit, run_experiment, train_only, DataSource, ExperimentConfig,
    ExperimentReport,
};
use ipmc_ident::plant::{ingest_recording, plant_response};
use ipmc_ident::report;
use ipmc_ident::seeds::child_seed;
use ipmc_ident::signal::Signal;
use ipmc_ident::stimulus::generate_stimulus;
use ipmc_ident::Error;

#[derive(Parser)]
#[command(name = "ipmc-ident", version, about = "Hybrid circuit+MLP identification of IPMC actuators")]
struct Cli {
    /// Experiment configuration JSON; defaults to the built-in experiment
    /// (four stimuli, synthetic plant, 45-stage circuit).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configuration's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for per-stimulus parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    parallel: usize,

    /// Restrict to the stimulus with this name.
    #[arg(long, global = true)]
    stimulus: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured stimuli as two-column CSV signals.
    Generate,
    /// Simulate the circuit on the configured stimuli (or on --input) and
    /// write the mediatory tip-voltage signals.
    Simulate {
        /// Simulate this signal CSV instead of the configured stimuli.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Estimate the circuit's unknown interface parameters from data.
    Estimate {
        /// Three-column recording CSV; defaults to the configured data
        /// source of the first stimulus.
        #[arg(long)]
        recording: Option<PathBuf>,
    },
    /// Train the Hybrid and Normal models and save them.
    Train,
    /// Evaluate previously trained models and write the summary report.
    Evaluate,
    /// Full pipeline: generate, simulate, train, evaluate, render.
    Run,
    /// Re-render report.txt and summary.csv from report.json.
    Render,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Index(_) | Error::Json(_) => 2,
        Error::Data(_) | Error::Io(_) => 3,
        Error::Numeric(_) => 4,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &cli.stimulus {
        cfg.stimuli.retain(|s| s.name() == name);
        if cfg.stimuli.is_empty() {
            return Err(Error::Domain(format!("no stimulus named '{name}' in the config")));
        }
    }
    Ok(cfg)
}

fn cmd_generate(cfg: &ExperimentConfig, cli: &Cli) -> Result<(), Error> {
    let dir = cli.out_dir.join("signals");
    std::fs::create_dir_all(&dir)?;
    for (name, spec) in cfg.named_stimuli() {
        let sig = generate_stimulus(&spec)?;
        let path = dir.join(format!("{name}_v_in.csv"));
        sig.write_csv(&path)?;
        println!("wrote {} ({} samples)", path.display(), spec.duration * spec.sample_rate);
    }
    Ok(())
}

fn cmd_simulate(cfg: &ExperimentConfig, cli: &Cli, input: Option<&PathBuf>) -> Result<(), Error> {
    let dir = cli.out_dir.join("signals");
    std::fs::create_dir_all(&dir)?;
    let (_, cascade) = resolve_circuit(cfg, Some(&cli.out_dir))?;
    match input {
        Some(path) => {
            let sig = Signal::read_csv(path)?;
            let v_o = simulate_cascade(&cascade, &sig, cfg.circuit.oversample)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".to_string());
            let out = dir.join(format!("{stem}_v_o.csv"));
            v_o.write_csv(&out)?;
            println!("wrote {}", out.display());
        }
        None => {
            for (name, spec) in cfg.named_stimuli() {
                let v_i = generate_stimulus(&spec)?;
                let v_o = simulate_cascade(&cascade, &v_i, cfg.circuit.oversample)?;
                let out = dir.join(format!("{name}_v_o.csv"));
                v_o.write_csv(&out)?;
                println!("wrote {}", out.display());
            }
        }
    }
    Ok(())
}

fn cmd_estimate(cfg: &ExperimentConfig, cli: &Cli, recording: Option<&PathBuf>) -> Result<(), Error> {
    std::fs::create_dir_all(&cli.out_dir)?;
    let (v_i, w) = match recording {
        Some(path) => ingest_recording(path)?,
        None => {
            let (name, spec) = cfg
                .named_stimuli()
                .into_iter()
                .next()
                .ok_or_else(|| Error::Domain("config has no stimuli".to_string()))?;
            match &cfg.data {
                DataSource::Recordings { paths } => {
                    let path = paths.get(&name).ok_or_else(|| {
                        Error::Data(format!("no recording configured for '{name}'"))
                    })?;
                    ingest_recording(path)?
                }
                DataSource::Plant(pc) => {
                    let v_i = generate_stimulus(&spec)?;
                    let plant = pc.to_spec(child_seed(cfg.seed, &["plant", &name]))?;
                    let w = plant_response(&plant, &v_i)?;
                    (v_i, w)
                }
            }
        }
    };
    let problem = EstimationProblem {
        v_i,
        w,
        n_stages: cfg.circuit.n_stages,
        oversample: cfg.circuit.oversample,
        template: cfg.circuit.params,
        bounds: cfg.circuit.bounds,
        objective: Objective::AffineNmse,
    };
    let result = estimate_params(
        &problem,
        cfg.circuit.estimation_restarts,
        child_seed(cfg.seed, &["estimate"]),
    )?;
    std::fs::write(
        cli.out_dir.join("estimation.json"),
        serde_json::to_string_pretty(&result)?,
    )?;
    report::write_estimation_trace(&cli.out_dir.join("estimation_trace.csv"), &result)?;
    println!("best objective: {}", report::sci(result.objective));
    println!(
        "xi_rho = {:.4}, xi_h = {:.4}, C_clamp = {:.4e} F",
        result.free.xi_rho, result.free.xi_h, result.free.c_clamp
    );
    println!(
        "alpha_E = {:.4}, alpha_I = {:.4}, alpha_C = {:.4}",
        result.free.alpha_e, result.free.alpha_i, result.free.alpha_c
    );
    println!(
        "note: xi_rho and xi_h act only through their ratio {:.4}; \
         the pair is not separately identifiable from electrical behavior",
        result.interface_resistance_ratio
    );
    println!("wrote {}", cli.out_dir.join("estimation.json").display());
    Ok(())
}

fn print_report(report: &ExperimentReport) {
    print!("{}", report::render_text(report));
}

fn real_main() -> Result<(), Error> {
    let cli = Cli::parse();
    if cli.parallel > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.parallel)
            .build_global()
            .map_err(|e| Error::Domain(format!("cannot configure thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg, &cli),
        Command::Simulate { input } => cmd_simulate(&cfg, &cli, input.as_ref()),
        Command::Estimate { recording } => cmd_estimate(&cfg, &cli, recording.as_ref()),
        Command::Train => {
            let (trained, failures) = train_only(&cfg, &cli.out_dir)?;
            for name in &trained {
                println!("trained {name} (hybrid + normal)");
            }
            for f in &failures {
                eprintln!("failed {}: {}", f.name, f.error);
            }
            println!("models under {}", cli.out_dir.join("models").display());
            Ok(())
        }
        Command::Evaluate => {
            let report = evaluate_saved(&cfg, &cli.out_dir)?;
            print_report(&report);
            Ok(())
        }
        Command::Run => {
            let report = run_experiment(&cfg, &cli.out_dir)?;
            print_report(&report);
            println!("outputs under {}", cli.out_dir.display());
            Ok(())
        }
        Command::Render => {
            let report = ExperimentReport::from_json_file(cli.out_dir.join("report.json"))?;
            report::write_outputs(&report, &cli.out_dir)?;
            print_report(&report);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
