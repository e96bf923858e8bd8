//! Greedy forward feature selection driven by cross-validated accuracy.
//!
//! The full model is fitted once. For k-fold scoring, every fold's model is
//! obtained by downdating the full model with the fold's removal summary;
//! these `k` full-dimension models are cached for the whole run. Candidate
//! sub-models are marginals of the cached models. Within one iteration the
//! Cholesky factor of each class covariance on the already-selected features
//! is computed once, and each candidate only appends one row to it.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{NpfsError, Result};
use crate::linalg::{append_row, CholeskyFactor};
use crate::model::{argmax, overall_accuracy, GmmModel};
use crate::update::{
    check_features, downdate_model, loo_class_parameters, loo_decision_shift, loo_downdate, loo_shift, marginalize,
    summarize_removed,
};

/// Cross-validation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Folds {
    KFold(usize),
    LeaveOneOut,
}

impl std::fmt::Display for Folds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Folds::KFold(k) => write!(f, "{k}"),
            Folds::LeaveOneOut => write!(f, "loo"),
        }
    }
}

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    /// Sample indices of fold `fold`, ascending.
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| (f == fold).then_some(i))
            .collect()
    }

    pub fn folds(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &f) in self.assignments.iter().enumerate() {
            out[f].push(i);
        }
        out
    }
}

/// Seeded partition of `0..labels.len()` into `k` folds.
///
/// Stratified plans shuffle each class and deal its samples round-robin,
/// continuing the rotation from one class to the next, so per-class counts
/// and fold sizes both differ by at most one across folds. Stratified plans
/// are rejected when some fold would leave a class fewer than 2 samples.
pub fn plan_folds(labels: &[usize], k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(NpfsError::InvalidK(format!("k = {k} must lie in [2, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n];
    if stratified {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_class = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class[l].push(i);
        }
        for (class, rows) in by_class.iter().enumerate() {
            let nc = rows.len();
            if nc > 0 && nc - nc.div_ceil(k) < 2 {
                return Err(NpfsError::InvalidK(format!(
                    "k = {k} leaves class {class} ({nc} samples) with fewer than 2 training samples"
                )));
            }
        }
        let mut next = 0;
        for mut rows in by_class {
            rows.shuffle(&mut rng);
            for i in rows {
                assignments[i] = next;
                next = (next + 1) % k;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (pos, i) in order.into_iter().enumerate() {
            assignments[i] = pos % k;
        }
    }
    Ok(FoldPlan { k, assignments, seed, stratified })
}

/// Cross-validated accuracy of one feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub mean: f64,
    pub per_fold: Vec<f64>,
}

impl CvScore {
    pub(crate) fn from_folds(per_fold: Vec<f64>) -> Self {
        let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
        Self { mean, per_fold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub folds: Folds,
    /// Minimum absolute accuracy gain to accept a feature (0.005 is half a
    /// percentage point).
    pub delta: f64,
    pub max_variables: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Draw a new fold plan (seed + iteration) at every iteration instead of
    /// once per run. Disables the fold-model cache.
    pub refold_each_iteration: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            folds: Folds::KFold(5),
            delta: 0.005,
            max_variables: 20,
            seed: 0,
            stratified: true,
            refold_each_iteration: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(NpfsError::InvalidConfig(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if self.max_variables < 1 || self.max_variables > n_features {
            return Err(NpfsError::InvalidConfig(format!(
                "max_variables must lie in [1, {n_features}], got {}",
                self.max_variables
            )));
        }
        if let Folds::KFold(k) = self.folds {
            if k < 2 {
                return Err(NpfsError::InvalidK(format!("k = {k} must be at least 2")));
            }
        }
        Ok(())
    }

    /// Seed of the fold plan used at `iteration` (0-based).
    pub fn plan_seed(&self, iteration: usize) -> u64 {
        if self.refold_each_iteration {
            self.seed.wrapping_add(iteration as u64)
        } else {
            self.seed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    DeltaNotMet,
    MaxVariablesReached,
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub feature: usize,
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Candidates excluded because some fold had a singular covariance.
    pub failed_candidates: Vec<usize>,
}

/// Best candidate of the iteration that failed the `delta` test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub feature: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub selected: Vec<usize>,
    pub available: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub rejected: Option<RejectedCandidate>,
}

impl SelectionState {
    /// Best accuracy of each accepted iteration.
    pub fn accuracies(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.accuracy).collect()
    }
}

/// A selection run with wall-clock timings.
#[derive(Debug, Clone)]
pub struct SelectionRun {
    pub state: SelectionState,
    pub fit_seconds: f64,
    /// Scoring time of every iteration, including a final rejected one.
    pub iteration_seconds: Vec<f64>,
}

/// Cross-validated accuracy of `features` by downdating `model` per fold and
/// marginalizing.
pub fn score_candidate(model: &GmmModel, data: &Dataset, plan: &FoldPlan, features: &[usize]) -> Result<CvScore> {
    check_features(features, data.n_features())?;
    check_plan(plan, data)?;
    let per_fold = plan
        .folds()
        .iter()
        .enumerate()
        .map(|(u, holdout)| {
            let summary = summarize_removed(data, holdout)?;
            let fold_model = downdate_model(model, &summary).map_err(|e| fold_error(e, u, model, &summary))?;
            let sub = marginalize(&fold_model, features)?;
            let x = data.samples().select(ndarray::Axis(0), holdout);
            let x = x.select(ndarray::Axis(1), features);
            let predicted = sub.predict(x.view()).map_err(|e| e.with_context(format!("fold {u}")))?;
            let truth: Vec<usize> = holdout.iter().map(|&i| data.labels()[i]).collect();
            overall_accuracy(&predicted, &truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvScore::from_folds(per_fold))
}

/// Leave-one-out accuracy of `features`: the removed sample's class is
/// downdated, the other classes only see their prior shift.
pub fn loo_score_candidate(model: &GmmModel, data: &Dataset, features: &[usize]) -> Result<CvScore> {
    check_features(features, data.n_features())?;
    check_loo(model)?;
    let full = marginalize(model, features)?;
    let n = model.n_total();
    let per_fold = (0..data.n_samples())
        .map(|i| {
            let c = data.labels()[i];
            let x = data.row(i);
            let xs: Array1<f64> = features.iter().map(|&f| x[f]).collect();
            let scores = full.decision_scores(xs.view())?;
            let mut shifted = loo_decision_shift(&scores, c, n)?;
            let down = marginalize(&loo_downdate(model, x, c)?, features)?;
            shifted.q_values[c] = down.decision_scores(xs.view())?.q_values[c];
            let predicted = argmax(&shifted.q_values);
            Ok(if predicted == c { 1.0 } else { 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvScore::from_folds(per_fold))
}

fn check_plan(plan: &FoldPlan, data: &Dataset) -> Result<()> {
    if plan.assignments.len() != data.n_samples() {
        return Err(NpfsError::LengthMismatch { left: plan.assignments.len(), right: data.n_samples() });
    }
    if let Some(&bad) = plan.assignments.iter().find(|&&f| f >= plan.k) {
        return Err(NpfsError::IndexOutOfRange { index: bad, bound: plan.k });
    }
    Ok(())
}

fn check_loo(model: &GmmModel) -> Result<()> {
    match model.class_counts().iter().position(|&c| c < 3) {
        Some(class) => Err(NpfsError::DegenerateRemainder {
            class: Some(class),
            reason: format!("leave-one-out needs 3 samples per class, found {}", model.class_counts()[class]),
        }),
        None => Ok(()),
    }
}

fn fold_error(e: NpfsError, fold: usize, model: &GmmModel, summary: &crate::update::RemovalSummary) -> NpfsError {
    match e {
        NpfsError::DegenerateRemainder { class: Some(class), .. } => NpfsError::DegenerateFold {
            fold,
            class,
            retained: model.class_counts()[class] - summary.count(class),
        },
        other => other,
    }
}

/// Greedy forward selection with the fast scoring path.
pub fn forward_select(data: &Dataset, config: &SelectionConfig) -> Result<SelectionState> {
    forward_select_timed(data, config).map(|run| run.state)
}

/// Forward selection with leave-one-out scoring.
pub fn loo_forward_select(data: &Dataset, config: &SelectionConfig) -> Result<SelectionState> {
    let config = SelectionConfig { folds: Folds::LeaveOneOut, ..config.clone() };
    forward_select(data, &config)
}

pub fn forward_select_timed(data: &Dataset, config: &SelectionConfig) -> Result<SelectionRun> {
    config.validate(data.n_features())?;
    let start = Instant::now();
    let full = GmmModel::fit(data)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let samples = data.samples().as_standard_layout().into_owned();
    let mut iteration_seconds = Vec::new();

    let state = match config.folds {
        Folds::LeaveOneOut => {
            check_loo(&full)?;
            let engine = LooEngine { full: &full, samples: samples.view(), labels: data.labels() };
            greedy_loop(data.n_features(), config, &mut iteration_seconds, |_, selected, available| {
                Ok(engine.score_all(selected, available))
            })?
        }
        Folds::KFold(k) => {
            let mut cached: Option<(u64, Vec<FoldEngine>)> = None;
            greedy_loop(data.n_features(), config, &mut iteration_seconds, |iteration, selected, available| {
                let seed = config.plan_seed(iteration);
                if cached.as_ref().is_none_or(|(s, _)| *s != seed) {
                    let plan = plan_folds(data.labels(), k, seed, config.stratified)?;
                    cached = Some((seed, build_fold_engines(&full, data, &plan)?));
                }
                let folds = &cached.as_ref().expect("fold engines").1;
                Ok(score_kfold(folds, samples.view(), data.labels(), selected, available))
            })?
        }
    };
    Ok(SelectionRun { state, fit_seconds, iteration_seconds })
}

/// The accept/stop loop. `score` returns one entry per available feature (in
/// the order of `available`), `None` for candidates that failed.
fn greedy_loop<F>(
    n_features: usize,
    config: &SelectionConfig,
    iteration_seconds: &mut Vec<f64>,
    mut score: F,
) -> Result<SelectionState>
where
    F: FnMut(usize, &[usize], &[usize]) -> Result<Vec<Option<CvScore>>>,
{
    let mut selected = Vec::new();
    let mut available: Vec<usize> = (0..n_features).collect();
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut previous = 0.0;
    let mut rejected = None;
    let stop_reason = loop {
        if selected.len() >= config.max_variables {
            break StopReason::MaxVariablesReached;
        }
        if available.is_empty() {
            break StopReason::PoolExhausted;
        }
        let tick = Instant::now();
        let scores = score(trace.len(), &selected, &available)?;
        iteration_seconds.push(tick.elapsed().as_secs_f64());

        let mut best: Option<(usize, &CvScore)> = None;
        let mut failed = Vec::new();
        for (pos, s) in scores.iter().enumerate() {
            match s {
                None => failed.push(available[pos]),
                Some(s) if best.is_none_or(|(_, b)| s.mean > b.mean) => best = Some((pos, s)),
                Some(_) => {}
            }
        }
        let Some((pos, score)) = best else {
            if trace.is_empty() {
                return Err(NpfsError::NoFeasibleCandidate);
            }
            break StopReason::DeltaNotMet;
        };
        let feature = available[pos];
        if score.mean - previous < config.delta {
            rejected = Some(RejectedCandidate { feature, accuracy: score.mean });
            break StopReason::DeltaNotMet;
        }
        debug_assert!(score.mean - previous >= config.delta);
        previous = score.mean;
        trace.push(IterationRecord {
            feature,
            accuracy: score.mean,
            fold_accuracies: score.per_fold.clone(),
            failed_candidates: failed,
        });
        selected.push(feature);
        available.remove(pos);
    };
    Ok(SelectionState { selected, available, trace, stop_reason, rejected })
}

/// Factor of one class covariance on the selected features, without jitter.
/// `None` when that block is not numerically positive definite.
struct Prefix {
    factor: Option<CholeskyFactor>,
    half_log_det: f64,
}

impl Prefix {
    fn new(cov: &Array2<f64>, selected: &[usize]) -> Self {
        let p = selected.len();
        let block: Vec<f64> = selected
            .iter()
            .flat_map(|&a| selected.iter().map(move |&b| (a, b)))
            .map(|(a, b)| cov[[a, b]])
            .collect();
        let factor = CholeskyFactor::exact(&block, p);
        let half_log_det = factor
            .as_ref()
            .map_or(0.0, |f| (0..p).map(|i| f.lower()[i * p + i].ln()).sum::<f64>());
        Self { factor, half_log_det }
    }

    /// Whitened residual `L^{-1}(x_S - mu_S)` into `z`; returns its squared norm.
    fn project(&self, x: &[f64], mean: &Array1<f64>, selected: &[usize], z: &mut [f64]) -> f64 {
        for (zj, &f) in z.iter_mut().zip(selected) {
            *zj = x[f] - mean[f];
        }
        if let Some(factor) = &self.factor {
            factor.forward_solve(z);
        }
        z.iter().map(|t| t * t).sum()
    }
}

/// Factor of a class covariance on `selected + [candidate]`.
enum Extension {
    /// One row appended to the prefix factor.
    Appended { row: Vec<f64>, diag: f64, log_det: f64 },
    /// Refactorized from scratch under the jitter policy.
    Fresh { factor: CholeskyFactor },
    Singular,
}

impl Extension {
    fn new(prefix: &Prefix, cov: &Array2<f64>, selected: &[usize], candidate: usize) -> Self {
        if let Some(factor) = &prefix.factor {
            let mut row: Vec<f64> = selected.iter().map(|&j| cov[[candidate, j]]).collect();
            if let Some(pivot) = append_row(factor, &mut row, cov[[candidate, candidate]]) {
                let diag = pivot.sqrt();
                let log_det = 2.0 * (prefix.half_log_det + diag.ln());
                return Extension::Appended { row, diag, log_det };
            }
        }
        let features: Vec<usize> = selected.iter().copied().chain(std::iter::once(candidate)).collect();
        let p = features.len();
        let block: Vec<f64> = features
            .iter()
            .flat_map(|&a| features.iter().map(move |&b| (a, b)))
            .map(|(a, b)| cov[[a, b]])
            .collect();
        match CholeskyFactor::with_jitter(&block, p) {
            Some(factor) => Extension::Fresh { factor },
            None => Extension::Singular,
        }
    }

    /// `Q` of a sample whose whitened prefix residual is `z` with squared norm
    /// `z_norm2`. Same arithmetic as a fresh factorization followed by a
    /// forward solve.
    #[allow(clippy::too_many_arguments)]
    fn q(
        &self,
        x: &[f64],
        mean: &Array1<f64>,
        selected: &[usize],
        candidate: usize,
        z: &[f64],
        z_norm2: f64,
        log_prior2: f64,
    ) -> f64 {
        match self {
            Extension::Appended { row, diag, log_det } => {
                let mut t = x[candidate] - mean[candidate];
                for (l, y) in row.iter().zip(z) {
                    t -= l * y;
                }
                let zp = t / diag;
                let maha = z_norm2 + zp * zp;
                -maha - log_det + log_prior2
            }
            Extension::Fresh { factor } => {
                let centered: Vec<f64> = selected
                    .iter()
                    .chain(std::iter::once(&candidate))
                    .map(|&f| x[f] - mean[f])
                    .collect();
                -factor.quad_form(&centered) - factor.log_det() + log_prior2
            }
            Extension::Singular => f64::NAN,
        }
    }
}

struct FoldEngine {
    holdout: Vec<usize>,
    model: GmmModel,
}

fn build_fold_engines(full: &GmmModel, data: &Dataset, plan: &FoldPlan) -> Result<Vec<FoldEngine>> {
    plan.folds()
        .into_iter()
        .enumerate()
        .map(|(u, holdout)| {
            let summary = summarize_removed(data, &holdout)?;
            let model = downdate_model(full, &summary).map_err(|e| fold_error(e, u, full, &summary))?;
            Ok(FoldEngine { holdout, model })
        })
        .collect()
}

/// Per-iteration state of one fold: class prefixes and whitened residuals
/// of the held-out rows, laid out `[class][row * p + j]`.
struct FoldPrefix {
    prefixes: Vec<Prefix>,
    z: Vec<Vec<f64>>,
    z_norm2: Vec<Vec<f64>>,
}

fn fold_prefix(fold: &FoldEngine, samples: ArrayView2<'_, f64>, selected: &[usize]) -> FoldPrefix {
    let p = selected.len();
    let d = samples.ncols();
    let flat = samples.as_slice().expect("standard layout");
    let model = &fold.model;
    let mut prefixes = Vec::with_capacity(model.n_classes());
    let mut z_all = Vec::with_capacity(model.n_classes());
    let mut norms = Vec::with_capacity(model.n_classes());
    for c in 0..model.n_classes() {
        let prefix = Prefix::new(&model.covariances()[c], selected);
        let mut z = vec![0.0; fold.holdout.len() * p];
        let mut nrm = vec![0.0; fold.holdout.len()];
        for (h, &i) in fold.holdout.iter().enumerate() {
            let x = &flat[i * d..(i + 1) * d];
            nrm[h] = prefix.project(x, &model.means()[c], selected, &mut z[h * p..(h + 1) * p]);
        }
        prefixes.push(prefix);
        z_all.push(z);
        norms.push(nrm);
    }
    FoldPrefix { prefixes, z: z_all, z_norm2: norms }
}

fn score_kfold(
    folds: &[FoldEngine],
    samples: ArrayView2<'_, f64>,
    labels: &[usize],
    selected: &[usize],
    available: &[usize],
) -> Vec<Option<CvScore>> {
    let p = selected.len();
    let d = samples.ncols();
    let flat = samples.as_slice().expect("standard layout");
    let prefixes: Vec<FoldPrefix> = folds.par_iter().map(|f| fold_prefix(f, samples, selected)).collect();
    available
        .par_iter()
        .map(|&s| {
            let mut per_fold = Vec::with_capacity(folds.len());
            for (fold, pre) in folds.iter().zip(&prefixes) {
                let model = &fold.model;
                let exts: Vec<Extension> = (0..model.n_classes())
                    .map(|c| Extension::new(&pre.prefixes[c], &model.covariances()[c], selected, s))
                    .collect();
                if exts.iter().any(|e| matches!(e, Extension::Singular)) {
                    return None;
                }
                let log_priors: Vec<f64> = model.proportions().iter().map(|p| 2.0 * p.ln()).collect();
                let mut q = vec![0.0; model.n_classes()];
                let mut hits = 0usize;
                for (h, &i) in fold.holdout.iter().enumerate() {
                    let x = &flat[i * d..(i + 1) * d];
                    for (c, ext) in exts.iter().enumerate() {
                        let z = &pre.z[c][h * p..(h + 1) * p];
                        q[c] = ext.q(x, &model.means()[c], selected, s, z, pre.z_norm2[c][h], log_priors[c]);
                    }
                    if argmax(&q) == labels[i] {
                        hits += 1;
                    }
                }
                per_fold.push(hits as f64 / fold.holdout.len() as f64);
            }
            Some(CvScore::from_folds(per_fold))
        })
        .collect()
}

struct LooEngine<'a> {
    full: &'a GmmModel,
    samples: ArrayView2<'a, f64>,
    labels: &'a [usize],
}

/// Outcome of one left-out sample for one candidate.
#[derive(Clone, Copy, PartialEq)]
enum Outcome {
    Hit,
    Miss,
    Failed,
}

impl LooEngine<'_> {
    fn score_all(&self, selected: &[usize], available: &[usize]) -> Vec<Option<CvScore>> {
        let full = self.full;
        let n = full.n_total();
        let c_count = full.n_classes();
        let p = selected.len();
        let d = self.samples.ncols();
        let flat = self.samples.as_slice().expect("standard layout");
        let shift = loo_shift(n);

        // Non-member classes use the full model, shared by every sample.
        let prefixes: Vec<Prefix> = full.covariances().iter().map(|cov| Prefix::new(cov, selected)).collect();
        let exts: Vec<Vec<Extension>> = (0..c_count)
            .map(|c| {
                available
                    .par_iter()
                    .map(|&s| Extension::new(&prefixes[c], &full.covariances()[c], selected, s))
                    .collect()
            })
            .collect();
        let log_priors: Vec<f64> = full.proportions().iter().map(|p| 2.0 * p.ln()).collect();

        let outcomes: Vec<Vec<Outcome>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = &flat[i * d..(i + 1) * d];
                let own = self.labels[i];
                let mut z = vec![vec![0.0; p]; c_count];
                let mut z_norm2 = vec![0.0; c_count];
                for k in 0..c_count {
                    if k != own {
                        z_norm2[k] = prefixes[k].project(x, &full.means()[k], selected, &mut z[k]);
                    }
                }
                let (mean, cov) =
                    loo_class_parameters(full, self.samples.row(i), own).expect("class sizes checked");
                let np = n as f64 * full.proportions()[own];
                let own_log_prior2 = 2.0 * ((np - 1.0) / (n as f64 - 1.0)).ln();
                let own_prefix = Prefix::new(&cov, selected);
                z_norm2[own] = own_prefix.project(x, &mean, selected, &mut z[own]);

                let mut q = vec![0.0; c_count];
                available
                    .iter()
                    .enumerate()
                    .map(|(pos, &s)| {
                        for k in 0..c_count {
                            q[k] = if k == own {
                                let ext = Extension::new(&own_prefix, &cov, selected, s);
                                if matches!(ext, Extension::Singular) {
                                    return Outcome::Failed;
                                }
                                ext.q(x, &mean, selected, s, &z[k], z_norm2[k], own_log_prior2)
                            } else {
                                let ext = &exts[k][pos];
                                if matches!(ext, Extension::Singular) {
                                    return Outcome::Failed;
                                }
                                ext.q(x, &full.means()[k], selected, s, &z[k], z_norm2[k], log_priors[k]) + shift
                            };
                        }
                        if argmax(&q) == own {
                            Outcome::Hit
                        } else {
                            Outcome::Miss
                        }
                    })
                    .collect()
            })
            .collect();

        (0..available.len())
            .map(|pos| {
                let per_fold = outcomes
                    .iter()
                    .map(|row| match row[pos] {
                        Outcome::Hit => Some(1.0),
                        Outcome::Miss => Some(0.0),
                        Outcome::Failed => None,
                    })
                    .collect::<Option<Vec<f64>>>()?;
                Some(CvScore::from_folds(per_fold))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn balanced_stratified_plan() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let plan = plan_folds(&labels, 5, 42, true);
        // 5 samples per class and k = 5 leave 4 training samples: allowed
        let plan = plan.unwrap();
        for fold in plan.folds() {
            assert_eq!(fold.len(), 2);
            let zeros = fold.iter().filter(|&&i| labels[i] == 0).count();
            assert_eq!(zeros, 1);
        }
    }

    #[test]
    fn plan_rejects_bad_k() {
        let labels = [0, 0, 0, 1, 1, 1];
        assert!(matches!(plan_folds(&labels, 1, 0, true), Err(NpfsError::InvalidK(_))));
        assert!(matches!(plan_folds(&labels, 7, 0, true), Err(NpfsError::InvalidK(_))));
    }

    #[test]
    fn plan_rejects_all_distinct_classes() {
        let labels: Vec<usize> = (0..6).collect();
        assert!(matches!(plan_folds(&labels, 6, 0, true), Err(NpfsError::InvalidK(_))));
    }

    #[test]
    fn unstratified_plan_partitions() {
        let labels = vec![0; 17];
        let plan = plan_folds(&labels, 4, 9, false).unwrap();
        let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 17);
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
    }

    #[test]
    fn config_validation() {
        let cfg = SelectionConfig::default();
        assert!(cfg.validate(20).is_ok());
        assert!(cfg.validate(19).is_err());
        assert!(SelectionConfig { delta: -0.1, max_variables: 1, ..cfg.clone() }.validate(3).is_err());
        assert!(SelectionConfig { folds: Folds::KFold(1), max_variables: 1, ..cfg }.validate(3).is_err());
    }

    #[test]
    fn separable_single_feature_scores_one() {
        let x = array![[0.0, 0.3], [0.1, 0.9], [0.2, 0.5], [0.15, 0.4], [0.05, 0.2], [0.12, 0.6],
                       [5.0, 0.1], [5.1, 0.8], [5.2, 0.5], [5.15, 0.3], [5.05, 0.7], [5.12, 0.2]];
        let ds = Dataset::new(x, &[0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1], None).unwrap();
        let model = GmmModel::fit(&ds).unwrap();
        let plan = plan_folds(ds.labels(), 3, 1, true).unwrap();
        let score = score_candidate(&model, &ds, &plan, &[0]).unwrap();
        assert_eq!(score.mean, 1.0);
        assert_eq!(loo_score_candidate(&model, &ds, &[0]).unwrap().mean, 1.0);
        let cfg = SelectionConfig { max_variables: 2, folds: Folds::KFold(3), ..Default::default() };
        let state = forward_select(&ds, &cfg).unwrap();
        assert_eq!(state.selected[0], 0);
        assert_eq!(state.trace[0].accuracy, 1.0);
        let state = loo_forward_select(&ds, &cfg).unwrap();
        assert_eq!(state.selected[0], 0);
        assert_eq!(state.trace[0].accuracy, 1.0);
    }

    #[test]
    fn loo_rejects_two_sample_class() {
        let x = array![[0.0], [1.0], [5.0], [6.0], [7.0]];
        let ds = Dataset::new(x, &[0, 0, 1, 1, 1], None).unwrap();
        let cfg = SelectionConfig { max_variables: 1, ..Default::default() };
        assert!(matches!(loo_forward_select(&ds, &cfg), Err(NpfsError::DegenerateRemainder { .. })));
    }
}
