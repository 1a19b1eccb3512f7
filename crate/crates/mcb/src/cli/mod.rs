//! Command-line surface: verification suites, benchmarks, training,
//! ablation, grounding, sketch persistence, and attention-map export.
//!
//! Every command is deterministic given `--seed`. Deterministic outputs
//! (metrics JSON, report CSV columns other than wall clock) are identical
//! across reruns; wall-clock and timestamps live in a separate
//! `<command>_run.json`. `MCB_THREADS` caps internal parallelism.

pub mod formats;
pub mod verify;

use crate::error::{Error, Result};
use crate::harness::{
    ablate, ablate_grounding, evaluate, sweep_d, train, AblationReport, AttentionSpec,
    GroundingConfig, ModelSpec, TaskConfig,
};
use crate::mcb::{full_bilinear_param_count, mcb_param_count, McbOperator};
use crate::nn::PoolingMethod;
use crate::rng::SplitMix64;
use crate::sketch::{outer_product_vec, CountSketchParams};
use crate::tasks::BilinearClassificationTask;
use formats::{ResultRecord, RunInfo};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Entry point for the binary; returns the process exit code.
pub fn run(args: &[String], out: &mut dyn Write) -> Result<i32> {
    let Some(command) = args.first() else {
        writeln!(out, "{USAGE}")?;
        return Err(Error::Usage("missing command".into()));
    };
    let flags = Flags::parse(&args[1..])?;
    match command.as_str() {
        "verify" => cmd_verify(&flags, out),
        "bench" => cmd_bench(&flags, out),
        "train" => cmd_train(&flags, out),
        "ablate" => cmd_ablate(&flags, out),
        "ground" => cmd_ground(&flags, out),
        "sketch" => cmd_sketch(&flags, out),
        "export-attention" => cmd_export_attention(&flags, out),
        "help" | "--help" | "-h" => {
            writeln!(out, "{USAGE}")?;
            Ok(0)
        }
        other => Err(Error::Usage(format!("unknown command '{other}'"))),
    }
}

const USAGE: &str = "\
usage: mcb <command> [flags]

commands:
  verify            run all verification suites; exit 0 iff all pass
                    [--tolerance <f>]
  bench             time the pooling forward pass against the explicit
                    outer-product route and report parameter counts
                    [--n1 <n>] [--n2 <n>] [--d <n>] [--classes <n>]
                    [--batch <n>] [--reps <n>] [--out <dir>]
  train             train one model on the default planted task
                    [--pooling <m>] [--d <n>] [--epochs <n>] [--seed <s>]
                    [--no-normalization] [--export-data] [--out <dir>]
  ablate            compare pooling methods over seeds
                    [--methods <a,b,..>] [--seeds <1..5|1,2,3>]
                    [--budget-match] [--d-sweep <64,128,..>]
                    [--d <n>] [--epochs <n>] [--out <dir>]
  ground            grounding ablation on the proposal-ranking task
                    [--methods <a,b>] [--seeds <..>] [--d <n>]
                    [--epochs <n>] [--out <dir>]
  sketch save       write sketch params [--n <n>] [--d <n>] [--seed <s>]
                    --path <file>
  sketch load       validate and describe a sketch file --path <file>
  export-attention  train a small attention model and export its maps as
                    row-major CSV [--glimpses <n>] [--epochs <n>]
                    [--seed <s>] [--index <i>] [--out <dir>]

pooling methods: mcb, concat, concat-fc, sum (eltwise-sum),
                 product (eltwise-product), full-bilinear
env: MCB_THREADS caps internal parallelism (default: machine cores)";

#[derive(Debug, Default)]
struct Flags {
    values: BTreeMap<String, String>,
    switches: Vec<String>,
    positional: Vec<String>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Flags> {
        let mut flags = Flags::default();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            if let Some(name) = arg.strip_prefix("--") {
                if matches!(
                    name,
                    "budget-match" | "no-normalization" | "export-data"
                ) {
                    flags.switches.push(name.to_string());
                    i += 1;
                    continue;
                }
                let Some(value) = args.get(i + 1) else {
                    return Err(Error::Usage(format!("flag --{name} needs a value")));
                };
                flags.values.insert(name.to_string(), value.clone());
                i += 2;
            } else {
                flags.positional.push(arg.clone());
                i += 1;
            }
        }
        Ok(flags)
    }

    fn has(&self, switch: &str) -> bool {
        self.switches.iter().any(|s| s == switch)
    }

    fn get_u64(&self, name: &str, default: u64) -> Result<u64> {
        match self.values.get(name) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Usage(format!("--{name} expects an integer, got '{raw}'"))),
        }
    }

    fn get_usize(&self, name: &str, default: usize) -> Result<usize> {
        Ok(self.get_u64(name, default as u64)? as usize)
    }

    fn get_f64(&self, name: &str) -> Result<Option<f64>> {
        match self.values.get(name) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| Error::Usage(format!("--{name} expects a number, got '{raw}'"))),
        }
    }

    fn get_str(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(|s| s.as_str())
    }

    fn out_dir(&self) -> Result<Option<PathBuf>> {
        match self.values.get("out") {
            None => Ok(None),
            Some(dir) => {
                let path = PathBuf::from(dir);
                std::fs::create_dir_all(&path)?;
                Ok(Some(path))
            }
        }
    }

    /// Seeds: either "a..b" (inclusive) or a comma list; default 1..5.
    fn seeds(&self) -> Result<Vec<u64>> {
        let Some(raw) = self.values.get("seeds") else {
            return Ok(vec![1, 2, 3, 4, 5]);
        };
        if let Some((lo, hi)) = raw.split_once("..") {
            let lo: u64 = lo
                .parse()
                .map_err(|_| Error::Usage(format!("--seeds range start '{lo}' is not an integer")))?;
            let hi: u64 = hi
                .parse()
                .map_err(|_| Error::Usage(format!("--seeds range end '{hi}' is not an integer")))?;
            if hi < lo {
                return Err(Error::Usage(format!("--seeds range '{raw}' is empty")));
            }
            return Ok((lo..=hi).collect());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("--seeds entry '{s}' is not an integer")))
            })
            .collect()
    }

    fn methods(&self) -> Result<Vec<PoolingMethod>> {
        let Some(raw) = self.values.get("methods") else {
            return Ok(vec![
                PoolingMethod::Mcb,
                PoolingMethod::Concat,
                PoolingMethod::EltwiseSum,
            ]);
        };
        raw.split(',').map(|s| PoolingMethod::parse(s.trim())).collect()
    }
}

fn cmd_verify(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let tolerance = flags.get_f64("tolerance")?;
    let results = verify::run_all(tolerance)?;
    let mut all_passed = true;
    writeln!(out, "{:<32} {:>14} {:>14}  result", "suite", "worst", "tolerance")?;
    for suite in &results {
        let passed = suite.passed();
        all_passed &= passed;
        writeln!(
            out,
            "{:<32} {:>14.6e} {:>14.6e}  {}",
            suite.name,
            suite.worst,
            suite.tolerance,
            if passed { "pass" } else { "FAIL" }
        )?;
    }
    writeln!(
        out,
        "{}",
        if all_passed {
            "verify: all suites passed"
        } else {
            "verify: FAILURES (see above)"
        }
    )?;
    Ok(if all_passed { 0 } else { 1 })
}

fn cmd_bench(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let n1 = flags.get_usize("n1", 2048)?;
    let n2 = flags.get_usize("n2", 2048)?;
    let d = flags.get_usize("d", 16000)?;
    let classes = flags.get_u64("classes", 3000)?;
    let batch = flags.get_usize("batch", 16)?;
    let reps = flags.get_usize("reps", 5)?.max(1);
    let seed = flags.get_u64("seed", 1)?;
    if n1 == 0 || n2 == 0 || d == 0 {
        return Err(Error::Usage("--n1, --n2, and --d must be positive".into()));
    }
    let full_params = full_bilinear_param_count(n1 as u64, n2 as u64, classes)?;
    let compact_params = mcb_param_count(d as u64, classes)?;
    let op = McbOperator::new(seed, &[n1, n2], d)?;
    let mut rng = SplitMix64::new(seed);
    let batch_inputs: Vec<Vec<Vec<f64>>> = (0..batch.max(1))
        .map(|_| vec![rng.unit_vec(n1), rng.unit_vec(n2)])
        .collect();
    // Warm-up outside the timed region.
    op.forward_batch(&batch_inputs[..1])?;
    let mut fft_times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        op.forward_batch(&batch_inputs)?;
        fft_times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let explicit_feasible = full_params <= crate::harness::FULL_BILINEAR_CAP;
    let mut explicit_times = Vec::new();
    if explicit_feasible {
        let combined = op.params(0).outer_product_params(op.params(1))?;
        for _ in 0..reps {
            let t0 = Instant::now();
            for tuple in &batch_inputs {
                let flat = outer_product_vec(&tuple[0], &tuple[1]);
                combined.apply(&flat)?;
            }
            explicit_times.push(t0.elapsed().as_secs_f64() * 1e3);
        }
    }
    let header = [
        "leg", "n1", "n2", "d", "classes", "batch", "reps", "median_ms", "p95_ms",
        "param_count", "status",
    ];
    let mut rows = Vec::new();
    let dims = |leg: &str, times: &[f64], params: u64, status: &str| -> Vec<String> {
        let (median, p95) = if times.is_empty() {
            (String::from("-"), String::from("-"))
        } else {
            (
                format!("{:.3}", percentile(times, 0.5)),
                format!("{:.3}", percentile(times, 0.95)),
            )
        };
        vec![
            leg.to_string(),
            n1.to_string(),
            n2.to_string(),
            d.to_string(),
            classes.to_string(),
            batch.to_string(),
            reps.to_string(),
            median,
            p95,
            params.to_string(),
            status.to_string(),
        ]
    };
    rows.push(dims("mcb-fft", &fft_times, compact_params, "ok"));
    if explicit_feasible {
        rows.push(dims(
            "explicit-outer-product",
            &explicit_times,
            full_params,
            "ok",
        ));
    } else {
        rows.push(dims(
            "explicit-outer-product",
            &[],
            full_params,
            "refused-over-cap",
        ));
    }
    writeln!(out, "{}", header.join(","))?;
    for row in &rows {
        writeln!(out, "{}", row.join(","))?;
    }
    if !explicit_feasible {
        writeln!(
            out,
            "note: explicit outer-product leg refused, {full_params} classifier weights exceed \
             the cap of {}",
            crate::harness::FULL_BILINEAR_CAP
        )?;
    }
    if let Some(dir) = flags.out_dir()? {
        formats::write_csv(&dir.join("bench_report.csv"), &header, &rows)?;
        writeln!(out, "wrote {}", dir.join("bench_report.csv").display())?;
    }
    Ok(0)
}

fn percentile(times: &[f64], p: f64) -> f64 {
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((sorted.len() as f64 * p).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn task_config_from_flags(flags: &Flags) -> Result<TaskConfig> {
    let mut cfg = TaskConfig::default();
    cfg.d = flags.get_usize("d", cfg.d)?;
    cfg.epochs = flags.get_usize("epochs", cfg.epochs)?;
    if let Some(lr) = flags.get_f64("lr")? {
        cfg.lr = lr;
    }
    if let Some(noise) = flags.get_f64("noise")? {
        cfg.noise_sigma = noise;
    }
    cfg.n1 = flags.get_usize("n1", cfg.n1)?;
    cfg.n2 = flags.get_usize("n2", cfg.n2)?;
    cfg.classes = flags.get_usize("classes", cfg.classes)?;
    cfg.train_count = flags.get_usize("train-count", cfg.train_count)?;
    cfg.test_count = flags.get_usize("test-count", cfg.test_count)?;
    Ok(cfg)
}

fn cmd_train(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let seed = flags.get_u64("seed", 1)?;
    let pooling = match flags.get_str("pooling") {
        Some(raw) => PoolingMethod::parse(raw)?,
        None => PoolingMethod::Mcb,
    };
    let cfg = task_config_from_flags(flags)?;
    let started = Instant::now();
    let task = BilinearClassificationTask::new(cfg.n1, cfg.n2, cfg.classes, cfg.noise_sigma, seed)?;
    let train_set = task.generate(cfg.train_count)?;
    let test_set = task.generate_offset(cfg.train_count, cfg.test_count)?;
    let mut spec = ModelSpec::new(pooling, cfg.d, crate::rng::child_seed(seed, 99));
    spec.lr = cfg.lr;
    if flags.has("no-normalization") {
        spec.normalization = false;
    }
    let result = train(
        &spec,
        &train_set,
        &test_set,
        cfg.classes,
        cfg.epochs,
        cfg.batch_size,
        cfg.patience,
    )?;
    let train_acc = evaluate(&result.model, &train_set)?;
    let test_acc = evaluate(&result.model, &test_set)?;
    let ceiling = task.planted_accuracy(&test_set);
    let wall = started.elapsed();
    writeln!(
        out,
        "train[{}]: train_acc={train_acc:.4} test_acc={test_acc:.4} ceiling={ceiling:.4} \
         best_epoch={} params={} ({:.1}s)",
        pooling.label(),
        result.best_epoch,
        result.model.param_count(),
        wall.as_secs_f64()
    )?;
    if let Some(dir) = flags.out_dir()? {
        let mut config = BTreeMap::new();
        config.insert("pooling".into(), serde_json::json!(pooling.label()));
        config.insert("d".into(), serde_json::json!(cfg.d));
        config.insert("n1".into(), serde_json::json!(cfg.n1));
        config.insert("n2".into(), serde_json::json!(cfg.n2));
        config.insert("classes".into(), serde_json::json!(cfg.classes));
        config.insert("noise_sigma".into(), serde_json::json!(cfg.noise_sigma));
        config.insert("epochs".into(), serde_json::json!(cfg.epochs));
        config.insert("lr".into(), serde_json::json!(cfg.lr));
        config.insert(
            "normalization".into(),
            serde_json::json!(spec.normalization),
        );
        let mut metrics = BTreeMap::new();
        metrics.insert("train_acc".into(), train_acc);
        metrics.insert("test_acc".into(), test_acc);
        metrics.insert("ceiling".into(), ceiling);
        metrics.insert("best_epoch".into(), result.best_epoch as f64);
        metrics.insert("param_count".into(), result.model.param_count() as f64);
        let record = ResultRecord {
            format_version: formats::RESULT_FORMAT_VERSION,
            command: "train".into(),
            config,
            metrics,
            seed,
        };
        formats::write_json(&dir.join("train_report.json"), &record)?;
        formats::write_json(
            &dir.join("train_run.json"),
            &RunInfo::new("train", wall.as_millis() as u64),
        )?;
        let history_rows: Vec<Vec<String>> = result
            .history
            .iter()
            .map(|e| {
                vec![
                    e.epoch.to_string(),
                    format!("{}", e.mean_loss),
                    format!("{}", e.train_acc),
                    format!("{}", e.val_acc),
                ]
            })
            .collect();
        formats::write_csv(
            &dir.join("train_history.csv"),
            &["epoch", "mean_loss", "train_acc", "val_acc"],
            &history_rows,
        )?;
        if flags.has("export-data") {
            formats::write_classification_jsonl(&dir.join("train_data.jsonl"), &train_set)?;
            formats::write_classification_jsonl(&dir.join("test_data.jsonl"), &test_set)?;
        }
        writeln!(out, "wrote reports under {}", dir.display())?;
    }
    Ok(0)
}

fn print_report_table(report: &AblationReport, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "{:<18} {:<10} {:>12} {:>10} {:>10} {:>8} {:>6}",
        "method", "config", "params", "train_acc", "test_acc", "wall_s", "seed"
    )?;
    for row in &report.rows {
        writeln!(
            out,
            "{:<18} {:<10} {:>12} {:>10.4} {:>10.4} {:>8.1} {:>6}",
            row.method, row.config, row.param_count, row.train_acc, row.test_acc, row.wall_s,
            row.seed
        )?;
    }
    writeln!(out, "--")?;
    for s in &report.summaries {
        writeln!(
            out,
            "{:<18} {:<10} {:>12} {:>10.4} {:>10.4}  (mean +/- std over seeds: test {:.4} +/- {:.4})",
            s.method, s.config, "", s.mean_train, s.mean_test, s.mean_test, s.std_test
        )?;
    }
    Ok(())
}

fn report_rows_csv(report: &AblationReport) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "method", "config", "param_count", "train_acc", "test_acc", "wall_s", "seed",
    ];
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.config.clone(),
                r.param_count.to_string(),
                format!("{}", r.train_acc),
                format!("{}", r.test_acc),
                format!("{}", r.wall_s),
                r.seed.to_string(),
            ]
        })
        .collect();
    for s in &report.summaries {
        rows.push(vec![
            s.method.clone(),
            s.config.clone(),
            String::from("-"),
            format!("{}", s.mean_train),
            format!("{}", s.mean_test),
            String::from("-"),
            String::from("mean"),
        ]);
        rows.push(vec![
            s.method.clone(),
            s.config.clone(),
            String::from("-"),
            format!("{}", s.std_train),
            format!("{}", s.std_test),
            String::from("-"),
            String::from("std"),
        ]);
    }
    (header, rows)
}

/// Deterministic JSON for an ablation: rows without wall-clock.
fn report_record(command: &str, report: &AblationReport, seeds: &[u64]) -> ResultRecord {
    let mut metrics = BTreeMap::new();
    for s in &report.summaries {
        metrics.insert(format!("{}:mean_test", s.method), s.mean_test);
        metrics.insert(format!("{}:std_test", s.method), s.std_test);
        metrics.insert(format!("{}:mean_train", s.method), s.mean_train);
    }
    for r in &report.rows {
        metrics.insert(format!("{}:seed{}:test_acc", r.method, r.seed), r.test_acc);
    }
    let mut config = BTreeMap::new();
    config.insert("seeds".into(), serde_json::json!(seeds));
    config.insert(
        "methods".into(),
        serde_json::json!(report.summaries.iter().map(|s| s.method.clone()).collect::<Vec<_>>()),
    );
    ResultRecord {
        format_version: formats::RESULT_FORMAT_VERSION,
        command: command.into(),
        config,
        metrics,
        seed: seeds.first().copied().unwrap_or(0),
    }
}

fn cmd_ablate(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let seeds = flags.seeds()?;
    let cfg = task_config_from_flags(flags)?;
    let started = Instant::now();
    let report = if let Some(sweep) = flags.get_str("d-sweep") {
        let ds: Vec<usize> = sweep
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("--d-sweep entry '{s}' is not an integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        sweep_d(&cfg, &ds, &seeds)?
    } else {
        let methods = flags.methods()?;
        ablate(&cfg, &methods, flags.has("budget-match"), &seeds)?
    };
    print_report_table(&report, out)?;
    if let Some(dir) = flags.out_dir()? {
        let (header, rows) = report_rows_csv(&report);
        formats::write_csv(&dir.join("ablate_report.csv"), &header, &rows)?;
        formats::write_json(
            &dir.join("ablate_report.json"),
            &report_record("ablate", &report, &seeds),
        )?;
        formats::write_json(
            &dir.join("ablate_run.json"),
            &RunInfo::new("ablate", started.elapsed().as_millis() as u64),
        )?;
        writeln!(out, "wrote reports under {}", dir.display())?;
    }
    Ok(0)
}

fn cmd_ground(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let seeds = flags.seeds()?;
    let methods = match flags.get_str("methods") {
        Some(_) => flags.methods()?,
        None => vec![PoolingMethod::Mcb, PoolingMethod::Concat],
    };
    let mut cfg = GroundingConfig::default();
    cfg.d = flags.get_usize("d", cfg.d)?;
    cfg.epochs = flags.get_usize("epochs", cfg.epochs)?;
    cfg.proposals = flags.get_usize("proposals", cfg.proposals)?;
    if let Some(lr) = flags.get_f64("lr")? {
        cfg.lr = lr;
    }
    let started = Instant::now();
    let report = ablate_grounding(&cfg, &methods, &seeds)?;
    print_report_table(&report, out)?;
    if let Some(dir) = flags.out_dir()? {
        let (header, rows) = report_rows_csv(&report);
        formats::write_csv(&dir.join("ground_report.csv"), &header, &rows)?;
        formats::write_json(
            &dir.join("ground_report.json"),
            &report_record("ground", &report, &seeds),
        )?;
        formats::write_json(
            &dir.join("ground_run.json"),
            &RunInfo::new("ground", started.elapsed().as_millis() as u64),
        )?;
        writeln!(out, "wrote reports under {}", dir.display())?;
    }
    Ok(0)
}

fn cmd_sketch(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let action = flags
        .positional
        .first()
        .ok_or_else(|| Error::Usage("sketch needs an action: save or load".into()))?;
    let path = flags
        .get_str("path")
        .ok_or_else(|| Error::Usage("sketch needs --path <file>".into()))?;
    match action.as_str() {
        "save" => {
            let n = flags.get_usize("n", 2048)?;
            let d = flags.get_usize("d", 16000)?;
            let seed = flags.get_u64("seed", 1)?;
            let params = CountSketchParams::sample(seed, n, d)?;
            formats::save_sketch(Path::new(path), &params)?;
            writeln!(out, "wrote sketch n={n} d={d} seed={seed} to {path}")?;
            Ok(0)
        }
        "load" => {
            let params = formats::load_sketch(Path::new(path))?;
            writeln!(
                out,
                "loaded sketch n={} d={} seed={} (checksum ok)",
                params.input_dim(),
                params.output_dim(),
                params.seed()
            )?;
            Ok(0)
        }
        other => Err(Error::Usage(format!(
            "unknown sketch action '{other}' (expected save or load)"
        ))),
    }
}

fn cmd_export_attention(flags: &Flags, out: &mut dyn Write) -> Result<i32> {
    let seed = flags.get_u64("seed", 1)?;
    let glimpses = flags.get_usize("glimpses", 2)?;
    let epochs = flags.get_usize("epochs", 5)?;
    let index = flags.get_usize("index", 0)?;
    let cfg = TaskConfig {
        train_count: 600,
        test_count: 200,
        epochs,
        ..TaskConfig::default()
    };
    let task = BilinearClassificationTask::new(cfg.n1, cfg.n2, cfg.classes, cfg.noise_sigma, seed)?;
    let train_set = task.generate(cfg.train_count)?;
    let test_set = task.generate_offset(cfg.train_count, cfg.test_count)?;
    if index >= test_set.len() {
        return Err(Error::Usage(format!(
            "--index {index} out of range for {} held-out samples",
            test_set.len()
        )));
    }
    let mut spec = ModelSpec::new(PoolingMethod::Mcb, cfg.d, crate::rng::child_seed(seed, 99));
    spec.lr = cfg.lr;
    spec.attention = Some(AttentionSpec {
        grid_h: 2,
        grid_w: 2,
        glimpses,
        d: 64,
        hidden: 32,
    });
    let result = train(
        &spec,
        &train_set,
        &test_set,
        cfg.classes,
        cfg.epochs,
        cfg.batch_size,
        cfg.patience,
    )?;
    let sample = &test_set[index];
    let maps = result
        .model
        .attention_maps(&sample.x, &sample.q)?
        .expect("attention model");
    let locations = maps[0].len();
    let header: Vec<String> = (0..locations).map(|g| format!("loc_{g}")).collect();
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = maps
        .iter()
        .map(|map| map.iter().map(|w| format!("{w}")).collect())
        .collect();
    for (g, map) in maps.iter().enumerate() {
        writeln!(
            out,
            "glimpse {g}: [{}] (sum {:.6})",
            map.iter()
                .map(|w| format!("{w:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            map.iter().sum::<f64>()
        )?;
    }
    if let Some(dir) = flags.out_dir()? {
        let path = dir.join(format!("attention_maps_sample{index}.csv"));
        formats::write_csv(&path, &header_refs, &rows)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(0)
}
