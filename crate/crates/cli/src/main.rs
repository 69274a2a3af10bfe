use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use counterfact::eval::evaluate;
use counterfact::inference::{argmax, explain};
use counterfact::model::ExplainModel;
use counterfact::pipeline::{featurize, fit_target, init_model, target_report, train_samples, PipelineConfig};
use counterfact::selftest;
use counterfact::target::{Dataset, TargetClassifier};
use counterfact::trainer::{train, write_loss_csv};

#[derive(Parser, Debug)]
#[command(name = "counterfact", version, about = "Counterfactual attribute/tube explanations for video classifiers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Pipeline config JSON; missing sections and fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; every stage seed is derived from it. Defaults to the config's data seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic dataset.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the frozen target classifier.
    TrainTarget {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the explanation model against a frozen target.
    TrainExplain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Explain one sample for a (positive, negative) class pair.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sample: String,
        /// Defaults to the target's prediction.
        #[arg(long)]
        c_pos: Option<String>,
        #[arg(long)]
        c_neg: String,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
    },
    /// Compute the full metric report on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the oracle, gradient and MI suites.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
    /// Time the subpath DP against the number of frames.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 128, 256, 512])]
        frames: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    seed: u64,
    config_path: Option<&'a Path>,
    inputs: Vec<(&'a str, &'a Path)>,
    out: Option<&'a Path>,
    config: &'a PipelineConfig,
}

fn load_config(common: &Common) -> Result<(PipelineConfig, u64)> {
    let cfg: PipelineConfig = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    let seed = common.seed.unwrap_or(cfg.synth.seed);
    Ok((cfg.with_seed(seed), seed))
}

fn out_dir(common: &Common) -> Result<&Path> {
    let out = common.out.as_deref().context("--out is required for this subcommand")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write_manifest(name: &str, common: &Common, cfg: &PipelineConfig, seed: u64, inputs: Vec<(&str, &Path)>) -> Result<()> {
    let Some(out) = common.out.as_deref() else { return Ok(()) };
    fs::create_dir_all(out)?;
    let m = RunManifest {
        subcommand: name,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config_path: common.config.as_deref(),
        inputs,
        out: Some(out),
        config: cfg,
    };
    fs::write(out.join("run_manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

fn class_index(target: &TargetClassifier, name: &str) -> Result<usize> {
    target.classes.iter().position(|c| c == name).with_context(|| format!("unknown class {name:?}"))
}

fn load_target(path: &Path) -> Result<TargetClassifier> {
    TargetClassifier::load(path).with_context(|| format!("loading target {}", path.display()))
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<ExplainModel> {
    ExplainModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.cmd {
        Cmd::Gen { common }
        | Cmd::TrainTarget { common, .. }
        | Cmd::TrainExplain { common, .. }
        | Cmd::Explain { common, .. }
        | Cmd::Eval { common, .. }
        | Cmd::Selftest { common }
        | Cmd::Bench { common, .. } => common.clone(),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring threads")?;
    }
    let (cfg, seed) = load_config(&common)?;
    match cli.cmd {
        Cmd::Gen { .. } => {
            let out = out_dir(&common)?;
            Dataset::generate(&cfg.synth)?.write(out)?;
            write_manifest("gen", &common, &cfg, seed, vec![])?;
            eprintln!("wrote {} train / {} test samples to {}", cfg.synth.train_count, cfg.synth.test_count, out.display());
        }
        Cmd::TrainTarget { data, .. } => {
            let out = out_dir(&common)?;
            let dataset = load_data(&data)?;
            let (target, report, _) = fit_target(&dataset, &cfg.target)?;
            target.save(out.join("target.json"))?;
            fs::write(out.join("target_report.json"), serde_json::to_string_pretty(&report)?)?;
            write_manifest("train-target", &common, &cfg, seed, vec![("data", &data)])?;
            println!("train accuracy {:.4}  test accuracy {:.4}", report.train_accuracy, report.test_accuracy);
        }
        Cmd::TrainExplain { data, target, .. } => {
            let out = out_dir(&common)?;
            let dataset = load_data(&data)?;
            let target_cls = load_target(&target)?;
            let hash = target_cls.param_hash();
            let feats = featurize(&target_cls, &dataset, &dataset.train)?;
            let samples = train_samples(&target_cls, &dataset.train, feats)?;
            let outcome = train(init_model(&dataset.config, &cfg.explain)?, &samples, &cfg.train)?;
            if target_cls.param_hash() != hash {
                bail!("target parameters changed during explanation training");
            }
            outcome.model.save(out.join("model"))?;
            write_loss_csv(&outcome.loss_trace, fs::File::create(out.join("loss.csv"))?)?;
            write_manifest("train-explain", &common, &cfg, seed, vec![("data", &data), ("target", &target)])?;
            if let (Some(first), Some(last)) = (outcome.loss_trace.first(), outcome.loss_trace.last()) {
                println!("loss {first:.4} -> {last:.4} over {} epochs", outcome.loss_trace.len());
            }
        }
        Cmd::Explain { data, target, model, sample, c_pos, c_neg, top_k, .. } => {
            let dataset = load_data(&data)?;
            let target_cls = load_target(&target)?;
            let model = load_model(&model)?;
            let meta = dataset.find(&sample).with_context(|| format!("unknown sample {sample:?}"))?;
            let (features, probs) = target_cls.forward(&dataset.video(meta)?)?;
            let c_pos = match c_pos {
                Some(name) => class_index(&target_cls, &name)?,
                None => argmax(&probs),
            };
            let c_neg = class_index(&target_cls, &c_neg)?;
            let set = explain(&features, &model, c_pos, c_neg, top_k, &cfg.eval.subpath)?;
            let json = set.to_json(&model)?;
            if let Some(out) = common.out.as_deref() {
                fs::create_dir_all(out)?;
                fs::write(out.join("explanation.json"), &json)?;
            }
            write_manifest("explain", &common, &cfg, seed, vec![("data", &data), ("target", &target)])?;
            println!("{json}");
        }
        Cmd::Eval { data, target, model, .. } => {
            let out = out_dir(&common)?;
            let dataset = load_data(&data)?;
            let target_cls = load_target(&target)?;
            let model = load_model(&model)?;
            let report = evaluate(&target_cls, &model, &dataset, &cfg.eval)?;
            fs::write(out.join("metrics.json"), report.to_json()?)?;
            report.write_csv(fs::File::create(out.join("metrics.csv"))?)?;
            let train_feats = featurize(&target_cls, &dataset, &dataset.train)?;
            let tr = target_report(&target_cls, &dataset, &train_feats)?;
            fs::write(out.join("target_report.json"), serde_json::to_string_pretty(&tr)?)?;
            write_manifest("eval", &common, &cfg, seed, vec![("data", &data), ("target", &target)])?;
            for m in &report.metrics {
                println!("{:<44} {:>2}  {:.4}  (n={})", m.metric, m.n_or_k, m.value, m.count);
            }
        }
        Cmd::Selftest { .. } => {
            let suites = [
                selftest::oracle_suite(5000, rng_stream(seed, 1))?,
                selftest::layerized_suite(1000, rng_stream(seed, 2))?,
                selftest::duality_suite(1000, rng_stream(seed, 3))?,
                selftest::gradcheck_suite(100, rng_stream(seed, 4))?,
                selftest::mi_suite(200, rng_stream(seed, 5))?,
            ];
            for s in &suites {
                let status = if s.passed() { "passed" } else { "FAILED" };
                println!("{:<10} {status:<6} {:>5} cases  max err {:.2e}  {:.2}s", s.name, s.cases, s.max_error, s.seconds);
                if let Some(f) = &s.first_failure {
                    println!("           first failure: {f}");
                }
            }
            if let Some(out) = common.out.as_deref() {
                fs::create_dir_all(out)?;
                fs::write(out.join("selftest.json"), serde_json::to_string_pretty(&suites)?)?;
            }
            write_manifest("selftest", &common, &cfg, seed, vec![])?;
            if suites.iter().any(|s| !s.passed()) {
                bail!("self-test failed");
            }
            println!("all {} suites passed", suites.len());
        }
        Cmd::Bench { frames, size, reps, .. } => {
            let rep = selftest::bench(&frames, size, size, reps, seed)?;
            println!("{:>6}  {:>12}  {:>14}", "T", "seconds", "ns/cell");
            for r in &rep.rows {
                println!("{:>6}  {:>12.6}  {:>14.2}", r.frames, r.seconds, r.seconds * 1e9 / (size * size * r.frames) as f64);
            }
            println!("log-log slope {:.3}  superlinear ratio {:.3}", rep.loglog_slope, rep.superlinear_ratio);
            if let Some(out) = common.out.as_deref() {
                fs::create_dir_all(out)?;
                fs::write(out.join("bench.json"), serde_json::to_string_pretty(&rep)?)?;
            }
            write_manifest("bench", &common, &cfg, seed, vec![])?;
        }
    }
    Ok(())
}

fn rng_stream(seed: u64, k: u64) -> u64 {
    counterfact::rng::derive(seed, k)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
