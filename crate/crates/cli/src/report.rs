use std::fmt::Write as _;

use npfs::selector::RejectedCandidate;
use npfs::{Folds, StopReason};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub input: String,
    pub label_column: String,
    pub header: bool,
    pub standardize: bool,
    pub k: Folds,
    pub delta: f64,
    pub max_variables: usize,
    pub seed: u64,
    pub stratified: bool,
    pub refold_each_iteration: bool,
    pub threads: usize,
}

#[derive(Debug, Serialize)]
pub struct TraceEntry {
    pub feature: usize,
    pub name: String,
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub failed_candidates: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub fit_seconds: f64,
    pub iteration_seconds: Vec<f64>,
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub version: String,
    pub config: ConfigEcho,
    pub n_samples: usize,
    pub n_features: usize,
    pub class_labels: Vec<i64>,
    pub class_counts: Vec<usize>,
    pub selected: Vec<usize>,
    pub selected_names: Vec<String>,
    pub trace: Vec<TraceEntry>,
    pub stop_reason: StopReason,
    pub rejected: Option<RejectedCandidate>,
    /// Seed of the fold plan at each iteration, including a final rejected one.
    pub fold_seeds: Vec<u64>,
    pub training_accuracy: f64,
    pub timings: Timings,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "npfs {}", self.version);
        let _ = writeln!(s, "input        {}", c.input);
        let _ = writeln!(
            s,
            "data         {} samples, {} features, {} classes",
            self.n_samples,
            self.n_features,
            self.class_labels.len()
        );
        let _ = writeln!(
            s,
            "config       k={} delta={} max_variables={} seed={} stratified={} standardize={} refold={}",
            c.k, c.delta, c.max_variables, c.seed, c.stratified, c.standardize, c.refold_each_iteration
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "step  feature  name                  cv accuracy");
        for (i, t) in self.trace.iter().enumerate() {
            let _ = writeln!(s, "{:>4}  {:>7}  {:<20}  {:.4}", i + 1, t.feature, t.name, t.accuracy);
        }
        if let Some(r) = &self.rejected {
            let _ = writeln!(s, "   -  {:>7}  {:<20}  {:.4} (rejected)", r.feature, "", r.accuracy);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "stop reason  {:?}", self.stop_reason);
        let _ = writeln!(s, "training OA  {:.4}", self.training_accuracy);
        let t = &self.timings;
        let _ = writeln!(
            s,
            "time         fit {:.3}s, scoring {:.3}s, total {:.3}s",
            t.fit_seconds,
            t.iteration_seconds.iter().sum::<f64>(),
            t.total_seconds
        );
        s
    }
}

#[derive(Debug, Serialize)]
pub struct PathTiming {
    pub seconds: Vec<f64>,
    pub mean_seconds: f64,
    pub min_seconds: f64,
}

impl PathTiming {
    pub fn new(seconds: Vec<f64>) -> Self {
        let mean_seconds = seconds.iter().sum::<f64>() / seconds.len() as f64;
        let min_seconds = seconds.iter().copied().fold(f64::INFINITY, f64::min);
        Self { seconds, mean_seconds, min_seconds }
    }
}

#[derive(Debug, Serialize)]
pub struct BenchmarkReport {
    pub version: String,
    pub source: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub k: Folds,
    pub delta: f64,
    pub max_variables: usize,
    pub seed: u64,
    pub threads: usize,
    pub selected: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub fast: PathTiming,
    pub naive: PathTiming,
    pub speedup: f64,
    /// Set when the problem is too small for timings to mean much.
    pub small_instance: bool,
}

impl BenchmarkReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: {} samples, {} features, {} classes, k={}",
            self.source, self.n_samples, self.n_features, self.n_classes, self.k
        );
        let _ = writeln!(s, "selected     {:?}", self.selected);
        let _ = writeln!(s, "fast path    mean {:.3}s, min {:.3}s ({} threads)", self.fast.mean_seconds, self.fast.min_seconds, self.threads);
        let _ = writeln!(s, "naive path   mean {:.3}s, min {:.3}s (1 thread)", self.naive.mean_seconds, self.naive.min_seconds);
        let _ = writeln!(s, "speedup      {:.2}x", self.speedup);
        if self.small_instance {
            let _ = writeln!(s, "note         small instance, timings are dominated by overhead");
        }
        s
    }
}
