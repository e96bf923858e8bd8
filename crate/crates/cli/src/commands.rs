use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use npfs::data::{generate_synthetic, load_csv, read_table, save_csv, standardize, StandardizationParams};
use npfs::oracle::naive_forward_select;
use npfs::persist::ModelFile;
use npfs::selector::forward_select_timed;
use npfs::update::marginalize;
use npfs::{fit_full_model, forward_select, overall_accuracy, Dataset, NpfsError, Result, SelectionConfig};

use crate::report::{BenchmarkReport, ConfigEcho, PathTiming, RunReport, Timings, TraceEntry};
use crate::{BenchmarkArgs, FitArgs, GenerateArgs, InputArgs, PredictArgs, SelectArgs, SelectionArgs};

const DEFAULT_MAX_VARIABLES: usize = 20;
const TRAJECTORY_TOL: f64 = 1e-9;
/// Benchmarks below this many samples or features are flagged as
/// overhead-dominated.
const SMALL_SAMPLES: usize = 500;
const SMALL_FEATURES: usize = 20;

impl SelectionArgs {
    fn config(&self, n_features: usize) -> SelectionConfig {
        SelectionConfig {
            folds: self.k,
            delta: self.delta,
            max_variables: self.max_variables.unwrap_or(DEFAULT_MAX_VARIABLES.min(n_features)),
            seed: self.seed,
            stratified: self.stratified,
            refold_each_iteration: self.refold,
        }
    }
}

/// Loads the labeled input and, if requested, standardizes it.
fn load(input: &InputArgs) -> Result<(Dataset, Option<StandardizationParams>)> {
    let raw = load_csv(&input.input, &input.label_column, !input.no_header)?;
    if input.standardize {
        let (data, _, params) = standardize(&raw, &[])?;
        Ok((data, Some(params)))
    } else {
        Ok((raw, None))
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| NpfsError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn training_accuracy(model: &npfs::GmmModel, data: &Dataset) -> Result<f64> {
    let predicted = model.predict(data.samples())?;
    overall_accuracy(&predicted, data.labels())
}

pub fn select(a: &SelectArgs) -> Result<()> {
    let start = Instant::now();
    let (data, params) = load(&a.input)?;
    let config = a.selection.config(data.n_features());
    let run = forward_select_timed(&data, &config)?;
    let state = &run.state;
    std::fs::create_dir_all(&a.output)?;

    let mut training = f64::NAN;
    if !state.selected.is_empty() {
        let model = marginalize(&fit_full_model(&data)?, &state.selected)?;
        training = training_accuracy(&model, &data.select_columns(&state.selected)?)?;
        let file = ModelFile::new(
            &model,
            data.class_labels(),
            &state.selected,
            data.feature_names(),
            data.n_features(),
            params,
        )?;
        file.save(a.output.join("model.json"))?;
    }

    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: ConfigEcho {
            input: a.input.input.display().to_string(),
            label_column: a.input.label_column.to_string(),
            header: !a.input.no_header,
            standardize: a.input.standardize,
            k: config.folds,
            delta: config.delta,
            max_variables: config.max_variables,
            seed: config.seed,
            stratified: config.stratified,
            refold_each_iteration: config.refold_each_iteration,
            threads: rayon::current_num_threads(),
        },
        n_samples: data.n_samples(),
        n_features: data.n_features(),
        class_labels: data.class_labels().to_vec(),
        class_counts: data.class_counts().to_vec(),
        selected: state.selected.clone(),
        selected_names: state.selected.iter().map(|&f| data.feature_name(f)).collect(),
        trace: state
            .trace
            .iter()
            .map(|r| TraceEntry {
                feature: r.feature,
                name: data.feature_name(r.feature),
                accuracy: r.accuracy,
                fold_accuracies: r.fold_accuracies.clone(),
                failed_candidates: r.failed_candidates.clone(),
            })
            .collect(),
        stop_reason: state.stop_reason,
        rejected: state.rejected.clone(),
        fold_seeds: (0..run.iteration_seconds.len()).map(|i| config.plan_seed(i)).collect(),
        training_accuracy: training,
        timings: Timings {
            fit_seconds: run.fit_seconds,
            iteration_seconds: run.iteration_seconds.clone(),
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&report, &a.output.join("report.json"))?;
    let text = report.to_text();
    std::fs::write(a.output.join("report.txt"), &text)?;
    print!("{text}");
    if state.selected.is_empty() {
        eprintln!("warning: no feature met delta; no model written");
    }
    Ok(())
}

fn resolve_feature(token: &str, data: &Dataset) -> Result<usize> {
    let token = token.trim();
    if let Ok(i) = token.parse::<usize>() {
        return if i < data.n_features() {
            Ok(i)
        } else {
            Err(NpfsError::IndexOutOfRange { index: i, bound: data.n_features() })
        };
    }
    data.feature_names()
        .and_then(|names| names.iter().position(|n| n == token))
        .ok_or_else(|| NpfsError::InvalidConfig(format!("unknown feature `{token}`")))
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let (data, params) = load(&a.input)?;
    let features = a.features.iter().map(|t| resolve_feature(t, &data)).collect::<Result<Vec<_>>>()?;
    let sub = data.select_columns(&features)?;
    let model = fit_full_model(&sub)?;
    let file = ModelFile::new(&model, data.class_labels(), &features, data.feature_names(), data.n_features(), params)?;
    file.save(&a.output)?;
    println!("training OA {:.4} on features {features:?}", training_accuracy(&model, &sub)?);
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let table = read_table(&a.input, a.truth_column.as_ref(), !a.no_header)?;
    let x = file.prepare(&table)?;
    let predicted: Vec<i64> = file.model()?.predict(x.view())?.into_iter().map(|c| file.class_labels[c]).collect();

    let mut out: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    writeln!(out, "label")?;
    for label in &predicted {
        writeln!(out, "{label}")?;
    }
    out.flush()?;
    drop(out);

    if let Some(truth) = &table.labels {
        let acc = overall_accuracy(&predicted, truth)?;
        let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
        let line = format!("overall accuracy {acc:.4} ({hits}/{})", truth.len());
        if a.output.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    if a.repetitions == 0 {
        return Err(NpfsError::InvalidConfig("repetitions must be at least 1".into()));
    }
    let (raw, source) = match &a.input {
        Some(path) => (load_csv(path, &a.label_column, !a.no_header)?, path.display().to_string()),
        None => (generate_synthetic(&a.synthetic.spec(a.selection.seed))?, "synthetic".to_string()),
    };
    let (data, _, _) = standardize(&raw, &[])?;
    let config = a.selection.config(data.n_features());

    let mut fast_times = Vec::with_capacity(a.repetitions);
    let mut naive_times = Vec::with_capacity(a.repetitions);
    let mut reference = None;
    for rep in 0..a.repetitions {
        let t = Instant::now();
        let fast = forward_select(&data, &config)?;
        fast_times.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let naive = naive_forward_select(&data, &config)?;
        naive_times.push(t.elapsed().as_secs_f64());

        let same = fast.selected == naive.selected
            && fast.stop_reason == naive.stop_reason
            && fast.accuracies().iter().zip(naive.accuracies()).all(|(x, y)| (x - y).abs() <= TRAJECTORY_TOL);
        if !same {
            return Err(NpfsError::TrajectoryMismatch(format!(
                "repetition {rep}: fast selected {:?} ({:?}), naive selected {:?} ({:?})",
                fast.selected,
                fast.accuracies(),
                naive.selected,
                naive.accuracies()
            )));
        }
        reference.get_or_insert(fast);
    }
    let state = reference.expect("at least one repetition");
    let fast = PathTiming::new(fast_times);
    let naive = PathTiming::new(naive_times);
    let report = BenchmarkReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        source,
        n_samples: data.n_samples(),
        n_features: data.n_features(),
        n_classes: data.n_classes(),
        k: config.folds,
        delta: config.delta,
        max_variables: config.max_variables,
        seed: config.seed,
        threads: rayon::current_num_threads(),
        selected: state.selected.clone(),
        accuracies: state.accuracies(),
        speedup: naive.mean_seconds / fast.mean_seconds,
        fast,
        naive,
        small_instance: data.n_samples() < SMALL_SAMPLES || data.n_features() < SMALL_FEATURES,
    };
    print!("{}", report.to_text());
    if let Some(path) = &a.output {
        write_json(&report, path)?;
    }
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let data = generate_synthetic(&a.synthetic.spec(a.seed))?;
    save_csv(&data, &a.output)?;
    println!("wrote {} rows x {} features to {}", data.n_samples(), data.n_features(), a.output.display());
    Ok(())
}
