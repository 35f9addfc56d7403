use std::fs;
use std::path::Path;

use serde::Serialize;

use cpnet::data::{load_csv, synth_generate, Dataset, SynthSpec};
use cpnet::model::ModelConfig;
use cpnet::train::{
    benchmark_runtime, evaluate, load_checkpoint, run_ablation, run_train, save_checkpoint,
    sweep_branches, sweep_lookback, write_csv, write_json, BenchConfig, EpochLog, Metrics,
    PreparedData, Scale, Split, TrainError, TrainedModel,
};

use crate::spec::{Command, DataSource, RunSpec};
use crate::CliError;

/// Name of the resolved-config echo, written before anything else.
pub const RESOLVED_CONFIG: &str = "config.resolved";
/// Present while a command runs and left behind if it fails.
pub const SENTINEL: &str = "INCOMPLETE";

fn runtime(e: TrainError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_dataset(spec: &RunSpec) -> Result<Dataset, CliError> {
    match &spec.data {
        Some(DataSource::Csv(path)) => load_csv(path).map_err(|e| CliError::Usage(e.to_string())),
        Some(DataSource::Synth(_)) => {
            let s = spec.synth_spec()?.expect("synth source");
            synth_generate(&s).map_err(|e| CliError::Usage(e.to_string()))
        }
        None => Err(CliError::Usage("no dataset given".into())),
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    dataset: &'a str,
    model: &'a ModelConfig,
    test: Metrics,
    test_raw: Metrics,
}

/// Runs one command. Writes the resolved config first, then a sentinel
/// that is removed only when every output has been written.
pub fn execute(spec: &RunSpec) -> Result<(), CliError> {
    let out = &spec.out;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    write_text(&out.join(RESOLVED_CONFIG), &spec.to_config())?;
    let sentinel = out.join(SENTINEL);
    write_text(&sentinel, "run in progress\n")?;
    match dispatch(spec, out) {
        Ok(()) => fs::remove_file(&sentinel)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", sentinel.display()))),
        Err(e) => {
            let _ = fs::write(&sentinel, format!("{e}\n"));
            Err(e)
        }
    }
}

fn dispatch(spec: &RunSpec, out: &Path) -> Result<(), CliError> {
    match spec.command {
        Command::Train => {
            let ds = load_dataset(spec)?;
            let scheme = spec.split.resolve(&ds.name);
            let run = run_train(&ds, scheme, &spec.model, &spec.train).map_err(runtime)?;
            write_json(&out.join("report.json"), &run.report).map_err(runtime)?;
            write_json(&out.join("timings.json"), &run.timings).map_err(runtime)?;
            write_csv::<EpochLog>(&out.join("epochs.csv"), &run.report.epochs).map_err(runtime)?;
            save_checkpoint(out, "model", &spec.model, &run.model.params).map_err(runtime)?;
            println!(
                "{}: test mse={:.6} mae={:.6} (best epoch {} of {})",
                ds.name,
                run.report.test.mse,
                run.report.test.mae,
                run.report.best_epoch,
                run.report.epochs.len()
            );
        }
        Command::Eval => {
            let ds = load_dataset(spec)?;
            let dir = spec.checkpoint.as_deref().unwrap_or(out);
            let (net, params) = load_checkpoint(dir, "model").map_err(runtime)?;
            let cfg = net.config().clone();
            let data =
                PreparedData::new(&ds, spec.split.resolve(&ds.name), cfg.lookback, cfg.horizon)
                    .map_err(runtime)?;
            let model = TrainedModel { net, params };
            let report = EvalReport {
                dataset: &ds.name,
                model: &cfg,
                test: evaluate(&model, &data, Split::Test, Scale::Standardized).map_err(runtime)?,
                test_raw: evaluate(&model, &data, Split::Test, Scale::Raw).map_err(runtime)?,
            };
            write_json(&out.join("eval.json"), &report).map_err(runtime)?;
            println!(
                "{}: test mse={:.6} mae={:.6}",
                ds.name, report.test.mse, report.test.mae
            );
        }
        Command::Ablate => {
            let ds = load_dataset(spec)?;
            let scheme = spec.split.resolve(&ds.name);
            let report = run_ablation(&ds, scheme, &spec.model, &spec.train, &spec.variants)
                .map_err(runtime)?;
            write_json(&out.join("ablation.json"), &report).map_err(runtime)?;
            write_csv(&out.join("ablation.csv"), &report.rows).map_err(runtime)?;
            for r in &report.rows {
                println!("{:<9} mse={:.6} mae={:.6}", r.variant, r.mse, r.mae);
            }
        }
        Command::SweepLookback => {
            let ds = load_dataset(spec)?;
            let scheme = spec.split.resolve(&ds.name);
            let report = sweep_lookback(&ds, scheme, &spec.model, &spec.train, &spec.lookbacks)
                .map_err(runtime)?;
            write_json(&out.join("lookback.json"), &report).map_err(runtime)?;
            write_csv(&out.join("lookback.csv"), &report.rows).map_err(runtime)?;
            for r in &report.rows {
                println!("I={:<4} mse={:.6} mae={:.6}", r.lookback, r.mse, r.mae);
            }
        }
        Command::SweepBranches => {
            let ds = load_dataset(spec)?;
            let scheme = spec.split.resolve(&ds.name);
            let report = sweep_branches(&ds, scheme, &spec.model, &spec.train, &spec.branch_counts)
                .map_err(runtime)?;
            write_json(&out.join("branches.json"), &report).map_err(runtime)?;
            write_csv(&out.join("branches.csv"), &report.rows).map_err(runtime)?;
            for r in &report.rows {
                println!(
                    "n={} ({}) mse={:.6} mae={:.6}",
                    r.branches, r.branch_set, r.mse, r.mae
                );
            }
        }
        Command::Bench => {
            let cfg = BenchConfig {
                lookbacks: spec.lookbacks.clone(),
                model: spec.model.clone(),
                batch_size: spec.train.batch_size,
                channels: spec.bench_channels,
                warmup: spec.bench_warmup,
                steps: spec.bench_steps,
                epoch_windows: spec.bench_epoch_windows,
                seed: spec.train.seed,
            };
            let report = benchmark_runtime(&cfg).map_err(runtime)?;
            write_json(&out.join("bench.json"), &report).map_err(runtime)?;
            write_csv(&out.join("bench.csv"), &report.rows).map_err(runtime)?;
            for r in &report.rows {
                println!(
                    "I={:<4} step={:.3}ms infer={:.3}ms",
                    r.lookback,
                    r.step_seconds * 1e3,
                    r.infer_seconds * 1e3
                );
            }
            if let (Some(fit), Some(ratio)) = (report.fit, report.ratio) {
                println!(
                    "slope={:.3e}s/step r2={:.4} ratio={ratio:.2}",
                    fit.slope, fit.r2
                );
            }
        }
        Command::Synth => {
            let s = spec.synth_spec()?.unwrap_or_else(SynthSpec::default);
            let ds = synth_generate(&s).map_err(|e| CliError::Usage(e.to_string()))?;
            write_text(&out.join("synth.conf"), &s.to_kv())?;
            let path = out.join("synthetic.csv");
            let file = fs::File::create(&path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            ds.write_csv(std::io::BufWriter::new(file))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "wrote {} ({} steps x {} variates)",
                path.display(),
                ds.len(),
                ds.channels()
            );
        }
    }
    Ok(())
}
