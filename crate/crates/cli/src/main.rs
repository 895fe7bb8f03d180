//! `terra`: dataset generation, surrogate training, plant simulation,
//! terrain estimation, and evaluation from one binary.
//!
//! Every stage reads the same TOML run configuration and writes its
//! artifacts into the output directory under conventional names, so
//! the stages chain without extra flags:
//!
//! ```text
//! terra gen-data -c configs/clay.toml -o out
//! terra train    -c configs/clay.toml -o out
//! terra simulate -c configs/clay.toml -o out
//! terra estimate -c configs/clay.toml -o out
//! terra evaluate -c configs/clay.toml -o out
//! terra report   -c configs/clay.toml -o out
//! ```

mod config;
mod plot;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use terra_core::bicycle::BicycleState;
use terra_core::lhs::{self, InputSpace};
use terra_core::mlp::Mlp;
use terra_core::sim::{self, TrajectoryLog, TwinScenario};
use terra_core::train;
use terra_core::ukf::{EstimateRecord, Ukf};
use terra_core::{eval, Result, TerraError};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "terra",
    version,
    about = "Terramechanics surrogate and terrain-parameter estimation toolkit"
)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(short, long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the input space and label it with the reference model.
    GenData,
    /// Train the surrogate ensemble on the generated dataset.
    Train,
    /// Run the plant simulation and log the drive.
    Simulate,
    /// Run the sinkage-exponent estimator along the logged drive.
    Estimate,
    /// Score the surrogate and the estimate against the log.
    Evaluate,
    /// Render summary tables and plots from the artifacts.
    Report,
    /// Time the estimator step on this machine.
    Bench {
        /// Filter steps to run.
        #[arg(long, default_value_t = 2000)]
        steps: usize,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::GenData => gen_data(&cfg, &cli.out),
        Command::Train => train_cmd(&cfg, &cli.out),
        Command::Simulate => simulate_cmd(&cfg, &cli.out),
        Command::Estimate => estimate_cmd(&cfg, &cli.out),
        Command::Evaluate => evaluate_cmd(&cfg, &cli.out),
        Command::Report => report_cmd(&cfg, &cli.out),
        Command::Bench { steps } => bench_cmd(&cfg, steps),
    }
}

fn dataset_csv(out: &Path) -> PathBuf {
    out.join("dataset.csv")
}
fn dataset_manifest(out: &Path) -> PathBuf {
    out.join("dataset.json")
}
fn model_path(out: &Path) -> PathBuf {
    out.join("model.json")
}
fn training_report_path(out: &Path) -> PathBuf {
    out.join("training_report.json")
}
fn trace_csv(out: &Path) -> PathBuf {
    out.join("trace.csv")
}
fn trace_manifest(out: &Path) -> PathBuf {
    out.join("trace.json")
}
fn estimate_csv(out: &Path) -> PathBuf {
    out.join("estimate.csv")
}
fn estimate_summary(out: &Path) -> PathBuf {
    out.join("estimate.json")
}
fn evaluation_path(out: &Path) -> PathBuf {
    out.join("evaluation.json")
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let dataset = lhs::generate_dataset(
        &InputSpace::default(),
        cfg.dataset.count,
        cfg.dataset.seed,
        &cfg.vehicle.wheel,
    )?;
    lhs::write_csv(&dataset, &dataset_csv(out))?;
    lhs::write_manifest(&dataset, &dataset_manifest(out))?;
    println!(
        "wrote {} rows to {} in {:.1} s (resampled {})",
        dataset.len(),
        dataset_csv(out).display(),
        started.elapsed().as_secs_f64(),
        dataset.provenance.resampled_rows
    );
    Ok(())
}

fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dataset = lhs::read_dataset(&dataset_csv(out), &dataset_manifest(out))?;
    let (model, report) = train::train(&dataset, &cfg.train)?;
    model.save(&model_path(out))?;
    std::fs::write(
        training_report_path(out),
        serde_json::to_string_pretty(&report)
            .map_err(|e| TerraError::Serialization(e.to_string()))?,
    )?;
    let best = &report.members[report.selected];
    println!(
        "trained {} members in {:.0} s; selected member {} \
         (train {:.1}, val {:.1}, test {:.1} N² MSE)",
        report.members.len(),
        report.wall_time_s,
        report.selected,
        best.train_mse,
        best.val_mse,
        best.test_mse
    );
    Ok(())
}

fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let started = Instant::now();
    let log = sim::simulate(
        &cfg.scenario,
        &cfg.vehicle,
        &cfg.terrain.params(),
        cfg.noise.std,
        cfg.noise.seed,
        cfg.mesh.nodes,
    )?;
    log.write_csv(&trace_csv(out))?;
    log.write_manifest(&trace_manifest(out))?;
    let (u_min, u_max) = log
        .records
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.state.body.u), hi.max(r.state.body.u))
        });
    println!(
        "simulated {:.1} s ({} records) in {:.1} s; u in [{u_min:.2}, {u_max:.2}] m/s",
        cfg.scenario.duration,
        log.records.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn estimate_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = Mlp::load(&model_path(out))?;
    let log = TrajectoryLog::read(&trace_csv(out), &trace_manifest(out))?;
    let records = run_estimator_on_log(cfg, &model, &log)?;
    write_estimates(&records, &estimate_csv(out))?;

    let final_record = records.last().ok_or_else(|| {
        TerraError::InvalidInput("trace too short for a single filter step".into())
    })?;
    let summary = serde_json::json!({
        "n0": cfg.estimator.n0,
        "n_true": log.terrain.n,
        "n_hat": final_record.mean[6],
        "n_std": final_record.n_std,
        "steps": records.len(),
    });
    std::fs::write(
        estimate_summary(out),
        serde_json::to_string_pretty(&summary)
            .map_err(|e| TerraError::Serialization(e.to_string()))?,
    )?;
    println!(
        "estimated n = {:.4} ± {:.4} after {} steps (truth {}, started at {})",
        final_record.mean[6],
        final_record.n_std,
        records.len(),
        log.terrain.n,
        cfg.estimator.n0
    );
    Ok(())
}

/// Runs the production filter along a plant log: initialized from the
/// first measurement and the configured n₀, then stepped through the
/// remaining records.
fn run_estimator_on_log(
    cfg: &RunConfig,
    model: &Mlp,
    log: &TrajectoryLog,
) -> Result<Vec<EstimateRecord>> {
    let first = log
        .records
        .first()
        .ok_or_else(|| TerraError::InvalidInput("empty trace".into()))?;
    let init = BicycleState {
        x: first.measurement[0],
        y: first.measurement[1],
        psi: first.measurement[2],
        u: first.measurement[3],
        v: first.measurement[4],
        omega_z: first.measurement[5],
    };
    let mut ukf = Ukf::new(cfg.estimator.ukf, &init, cfg.estimator.n0)?;
    let (inputs, measurements) = sim::estimator_io(log);
    terra_core::ukf::run_estimator(
        &mut ukf,
        first.t,
        &inputs,
        &measurements,
        &cfg.vehicle,
        &log.terrain,
        model,
    )
}

fn write_estimates(records: &[EstimateRecord], path: &Path) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| TerraError::Serialization(e.to_string()))?;
    w.write_record([
        "t", "x", "y", "psi", "u", "v", "omega_z", "n_hat", "n_std",
    ])
    .map_err(|e| TerraError::Serialization(e.to_string()))?;
    for r in records {
        let row = [
            r.t, r.mean[0], r.mean[1], r.mean[2], r.mean[3], r.mean[4], r.mean[5], r.mean[6],
            r.n_std,
        ];
        let text: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        w.write_record(&text)
            .map_err(|e| TerraError::Serialization(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the estimate CSV back into records.
fn read_estimates(path: &Path) -> Result<Vec<EstimateRecord>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| TerraError::Serialization(e.to_string()))?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| TerraError::Serialization(e.to_string()))?;
        if row.len() != 9 {
            return Err(TerraError::Serialization(format!(
                "estimate row has {} columns, expected 9",
                row.len()
            )));
        }
        let mut v = [0.0_f64; 9];
        for (slot, field) in v.iter_mut().zip(row.iter()) {
            *slot = field
                .parse()
                .map_err(|e| TerraError::Serialization(format!("bad float {field}: {e}")))?;
        }
        records.push(EstimateRecord {
            t: v[0],
            mean: [v[1], v[2], v[3], v[4], v[5], v[6], v[7]],
            n_std: v[8],
        });
    }
    Ok(records)
}

fn evaluate_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = Mlp::load(&model_path(out))?;
    let log = TrajectoryLog::read(&trace_csv(out), &trace_manifest(out))?;
    let estimates = read_estimates(&estimate_csv(out))?;
    let n_hat = estimates
        .last()
        .ok_or_else(|| TerraError::InvalidInput("empty estimate file".into()))?
        .mean[6];

    let terrain_true = log.terrain;
    let evaluation = report::Evaluation {
        force: eval::force_rmse(&log, &model, &cfg.vehicle, &terrain_true)?,
        n_true: terrain_true.n,
        n_hat,
        n0: cfg.estimator.n0,
        horizon_true: eval::horizon_mse(&log, &model, &cfg.vehicle, &terrain_true, &cfg.eval)?,
        horizon_estimated: eval::horizon_mse(
            &log,
            &model,
            &cfg.vehicle,
            &terrain_true.with_n(n_hat),
            &cfg.eval,
        )?,
        horizon_nominal: eval::horizon_mse(
            &log,
            &model,
            &cfg.vehicle,
            &terrain_true.with_n(cfg.estimator.n0),
            &cfg.eval,
        )?,
    };
    std::fs::write(
        evaluation_path(out),
        serde_json::to_string_pretty(&evaluation)
            .map_err(|e| TerraError::Serialization(e.to_string()))?,
    )?;
    println!(
        "force RMSE {:.1} N (front {:.1}, rear {:.1}); lateral-velocity horizon MSE: \
         true n {:.4e}, estimated n {:.4e}, prior n {:.4e}",
        evaluation.force.combined,
        evaluation.force.front,
        evaluation.force.rear,
        evaluation.horizon_true.v,
        evaluation.horizon_estimated.v,
        evaluation.horizon_nominal.v
    );
    Ok(())
}

fn report_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = Mlp::load(&model_path(out))?;
    let log = TrajectoryLog::read(&trace_csv(out), &trace_manifest(out))?;
    let estimates = read_estimates(&estimate_csv(out))?;
    let evaluation: report::Evaluation =
        serde_json::from_str(&std::fs::read_to_string(evaluation_path(out))?)
            .map_err(|e| TerraError::Serialization(e.to_string()))?;

    let tables = out.join("tables");
    let plots = out.join("plots");
    std::fs::create_dir_all(&tables)?;
    std::fs::create_dir_all(&plots)?;

    report::write_force_table(&tables.join("force_rmse.csv"), &evaluation, &model)?;
    report::write_horizon_table(&tables.join("horizon_mse.csv"), &evaluation)?;
    plot::n_trace(&plots.join("n_estimate.svg"), &estimates, log.terrain.n)?;
    plot::force_overlay(
        &plots.join("forces.svg"),
        &log,
        &model,
        &cfg.vehicle,
        &log.terrain,
    )?;
    plot::trajectory_overlay(&plots.join("trajectory.svg"), &log, &estimates)?;
    println!(
        "wrote tables to {} and plots to {}",
        tables.display(),
        plots.display()
    );
    Ok(())
}

/// Times the production filter step (predict + update) on synthetic
/// data from an untrained surrogate of the production architecture.
fn bench_cmd(cfg: &RunConfig, steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(TerraError::InvalidInput("need at least one step".into()));
    }
    let mut model = Mlp::new(&cfg.train.widths, 0)?;
    model.set_normalization(&InputSpace::default().bounds, [-4000.0, 4000.0]);
    let terrain = cfg.terrain.params();

    let scenario = TwinScenario {
        duration: (steps + 1) as f64 * cfg.estimator.ukf.dt,
        ..TwinScenario::default()
    };
    let (inputs, measurements, _) = sim::simulate_twin(
        &scenario,
        &cfg.vehicle,
        &terrain,
        &model,
        cfg.estimator.ukf.dt,
        cfg.estimator.ukf.substeps,
    )?;
    let init = BicycleState {
        u: scenario.initial_speed,
        ..BicycleState::default()
    };
    let mut ukf = Ukf::new(cfg.estimator.ukf, &init, cfg.estimator.n0)?;

    let mut total = 0.0_f64;
    let mut worst = 0.0_f64;
    let mut timed = 0usize;
    for (input, z) in inputs.iter().zip(&measurements).take(steps) {
        let tic = Instant::now();
        ukf.step(input, z, &cfg.vehicle, &terrain, &model)?;
        let elapsed = tic.elapsed().as_secs_f64() * 1e3;
        total += elapsed;
        worst = worst.max(elapsed);
        timed += 1;
    }
    println!(
        "filter step over {timed} steps: mean {:.3} ms, max {:.3} ms",
        total / timed as f64,
        worst
    );
    Ok(())
}
