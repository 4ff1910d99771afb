//! End-to-end pipeline: data, split, pairwise permutation tests, FDR
//! adjustment, significance counting, cutoff and Lasso selections, Ridge
//! models per selection, and validation-set MAE, assembled into a
//! serializable report.
//!
//! Every tuning decision (split, penalties, cutoffs) uses training rows
//! only. The expensive permutation matrix is written to disk as soon as it
//! exists, so selection and modeling can be re-run against it with
//! different alpha, family, or cutoffs without recomputation.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{CutoffSpec, DataSource, PipelineConfig};
use crate::dataset::{
    average_repetitions, read_samples_csv, split_train_validation, write_samples_csv, SampleSet,
    TrainValidationSplit,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::linmod::{
    cv_select_ridge_lambda_multi, multivariate_lasso_select, ridge_lambda_grid, mae, ModelFit,
    Standardizer,
};
use crate::multiplicity::{
    adjust_matrix, contiguous_bands, cutoff_for_target_size, relative_count_cutoff,
    select_by_cutoff, significance_counts_with_family, write_counts_csv, write_selection_csv,
    Band, FamilyMode, SelectionMethod, SelectionResult, SignificanceCounts,
};
use crate::permtest::{pairwise_pvalue_matrix, write_pvalues_csv, PValueMatrix, PermutationMode};
use crate::synth::{generate_dataset, write_ground_truth_csv};

/// Fractions of the maximum significance count used for the automatic
/// cutoff grid, from loose to tight.
pub const AUTO_CUTOFF_FRACTIONS: [f64; 3] = [0.5, 0.75, 0.9];

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

/// Runs `f` on a dedicated rayon pool of `threads` workers (0 = the global
/// default pool).
pub fn with_threads<T>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    if threads == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(f)
    }
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub source: String,
    pub generator_seed: Option<u64>,
    pub n_samples: usize,
    pub n_reps: usize,
    pub n_vars: usize,
    pub n_responses: usize,
    pub split_fraction: f64,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_pairs: usize,
    pub permutation_method: String,
    pub perm_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub id: String,
    pub method: SelectionMethod,
    pub n_selected: usize,
    pub selected: Vec<usize>,
    pub bands: Vec<Band>,
    pub n_bands: usize,
    pub ridge_lambda: f64,
    pub validation_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub load_s: f64,
    pub permutation_s: f64,
    pub adjust_s: f64,
    pub selection_s: f64,
    pub modeling_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub fingerprint: DatasetFingerprint,
    pub alpha: f64,
    pub family: FamilyMode,
    pub counts: Vec<usize>,
    pub strategies: Vec<StrategyReport>,
    pub all_variables_mae: f64,
    pub timing: Timing,
}

impl Report {
    pub fn strategy(&self, id: &str) -> Option<&StrategyReport> {
        self.strategies.iter().find(|s| s.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("cannot parse report JSON: {e}")))
    }

    /// Timing fields are excluded from determinism guarantees; this is the
    /// comparable remainder.
    pub fn without_timing(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("report serializes");
        value.as_object_mut().unwrap().remove("timing");
        value
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Loads or generates the dataset. Generated data (and its ground truth) is
/// written to the output directory for inspection.
pub fn load_source(cfg: &PipelineConfig) -> Result<(SampleSet, Option<Vec<usize>>, String, Option<u64>)> {
    match &cfg.source {
        DataSource::Generate(gen) => {
            let (set, truth) = stage("generate", generate_dataset(gen))?;
            if let Some(dir) = &cfg.out_dir {
                ensure_dir(dir)?;
                write_to(dir.join("data.csv"), |w| write_samples_csv(&set, w))?;
                write_to(dir.join("ground_truth.csv"), |w| write_ground_truth_csv(&truth, w))?;
            }
            Ok((set, Some(truth), "generate".to_string(), Some(gen.seed)))
        }
        DataSource::Csv(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let set = stage("ingest", read_samples_csv(std::io::BufReader::new(file)))?;
            Ok((set, None, path.display().to_string(), None))
        }
    }
}

/// Everything the selection stages produce, kept for reuse by the modeling
/// stage and by callers that stop before modeling.
pub struct SelectionOutcome {
    pub split: TrainValidationSplit,
    pub pvalues: PValueMatrix,
    pub counts: SignificanceCounts,
    /// Strategy id to selection, in report order: all, lasso, npc entries.
    pub strategies: Vec<(String, SelectionResult)>,
    pub timing: Timing,
}

/// Split, permutation matrix, FDR, counts, and all selections.
///
/// `precomputed` skips the permutation stage with a previously written raw
/// matrix (it must match the training shape).
pub fn run_selection(
    cfg: &PipelineConfig,
    set: &SampleSet,
    precomputed: Option<PValueMatrix>,
) -> Result<SelectionOutcome> {
    let mut timing = Timing::default();
    let split = stage(
        "split",
        split_train_validation(set, cfg.split_fraction, cfg.split_seed),
    )?;
    let train = stage("split", set.subset(&split.train_indices))?;

    let t = Instant::now();
    let pvalues = match precomputed {
        Some(m) => {
            let expected_pairs = train.n_samples() * (train.n_samples() - 1) / 2;
            if m.n_pairs() != expected_pairs || m.n_vars() != train.n_vars() {
                return Err(Error::Stage {
                    stage: "permutation",
                    source: Box::new(Error::InvalidInput(format!(
                        "precomputed matrix is {}x{}, training data needs {}x{}",
                        m.n_pairs(),
                        m.n_vars(),
                        expected_pairs,
                        train.n_vars()
                    ))),
                });
            }
            m
        }
        None => stage(
            "permutation",
            pairwise_pvalue_matrix(&train, cfg.perm_mode, cfg.perm_seed),
        )?,
    };
    timing.permutation_s = t.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.out_dir {
        ensure_dir(dir)?;
        write_to(dir.join("pvalues.csv"), |w| write_pvalues_csv(&pvalues, w))?;
    }

    let t = Instant::now();
    let adjusted = stage("fdr", adjust_matrix(&pvalues, cfg.family))?;
    let counts = stage(
        "fdr",
        significance_counts_with_family(&adjusted, cfg.alpha, cfg.family),
    )?;
    timing.adjust_s = t.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.out_dir {
        write_to(dir.join("counts.csv"), |w| write_counts_csv(&counts, w))?;
    }

    let t = Instant::now();
    let avg_train = average_repetitions(&train);
    let standardizer = stage("selection", Standardizer::fit(&avg_train.values))?;
    let x_std = stage("selection", standardizer.apply(&avg_train.values))?;
    let y_train = train.response_matrix();
    let lasso = stage(
        "selection",
        multivariate_lasso_select(
            &x_std,
            &y_train,
            cfg.lasso_grid_size,
            cfg.lasso_grid_decades,
            cfg.lasso_folds,
            cfg.lasso_seed,
        ),
    )?;

    let mut strategies: Vec<(String, SelectionResult)> = Vec::new();
    let all = SelectionResult::new(
        (0..set.n_vars()).collect(),
        SelectionMethod::AllVariables,
        set.n_vars(),
    )?;
    strategies.push(("all".to_string(), all));
    strategies.push(("lasso".to_string(), lasso.clone()));
    if !lasso.is_empty() {
        let matched = stage("selection", cutoff_for_target_size(&counts, lasso.len()))?;
        strategies.push(("npc_matched".to_string(), select_by_cutoff(&counts, matched)));
    }
    let cutoffs: Vec<usize> = match &cfg.cutoffs {
        CutoffSpec::Explicit(list) => list.clone(),
        CutoffSpec::Auto => AUTO_CUTOFF_FRACTIONS
            .iter()
            .map(|&f| relative_count_cutoff(&counts, f))
            .collect(),
    };
    let mut seen = std::collections::BTreeSet::new();
    for cutoff in cutoffs {
        if seen.insert(cutoff) {
            strategies.push((format!("npc_cutoff_{cutoff}"), select_by_cutoff(&counts, cutoff)));
        }
    }
    timing.selection_s = t.elapsed().as_secs_f64();

    Ok(SelectionOutcome { split, pvalues, counts, strategies, timing })
}

/// Ridge fit for one selection on training rows, evaluated on validation
/// rows. Returns the CV-chosen penalty and the validation MAE.
pub fn fit_and_score(
    x_train_raw: &Matrix,
    y_train: &Matrix,
    x_val_raw: &Matrix,
    y_val: &Matrix,
    selection: &SelectionResult,
    ridge_grid_size: usize,
    ridge_folds: usize,
    ridge_seed: u64,
) -> Result<(ModelFit, f64)> {
    let lambda = if selection.is_empty() {
        0.0
    } else {
        let x_sub = x_train_raw.select_columns(&selection.selected);
        let standardizer = Standardizer::fit(&x_sub)?;
        let x_sub_std = standardizer.apply(&x_sub)?;
        let grid = ridge_lambda_grid(x_train_raw.rows(), ridge_grid_size);
        cv_select_ridge_lambda_multi(&x_sub_std, y_train, &grid, ridge_folds, ridge_seed)?
    };
    let fit = ModelFit::fit_ridge(x_train_raw, y_train, &selection.selected, lambda)?;
    let predictions = fit.predict(x_val_raw)?;
    let score = mae(&predictions, y_val)?;
    Ok((fit, score))
}

/// Full pipeline for an already loaded dataset.
pub fn run_with_dataset(
    cfg: &PipelineConfig,
    set: &SampleSet,
    source: String,
    generator_seed: Option<u64>,
    precomputed: Option<PValueMatrix>,
) -> Result<Report> {
    let total = Instant::now();
    let outcome = run_selection(cfg, set, precomputed)?;
    let mut timing = outcome.timing.clone();

    let t = Instant::now();
    let avg = average_repetitions(set);
    let pick_rows = |indices: &[usize], m: &Matrix| -> Matrix {
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| m.row(i).to_vec()).collect();
        Matrix::from_rows(&rows).expect("uniform row widths")
    };
    let x_train = pick_rows(&outcome.split.train_indices, &avg.values);
    let x_val = pick_rows(&outcome.split.validation_indices, &avg.values);
    let responses = set.response_matrix();
    let y_train = pick_rows(&outcome.split.train_indices, &responses);
    let y_val = pick_rows(&outcome.split.validation_indices, &responses);

    let mut strategies = Vec::with_capacity(outcome.strategies.len());
    let mut all_variables_mae = f64::NAN;
    for (id, selection) in &outcome.strategies {
        let (fit, score) = stage(
            "modeling",
            fit_and_score(
                &x_train,
                &y_train,
                &x_val,
                &y_val,
                selection,
                cfg.ridge_grid_size,
                cfg.ridge_folds,
                cfg.ridge_seed,
            ),
        )?;
        if id == "all" {
            all_variables_mae = score;
        }
        let bands = contiguous_bands(selection);
        strategies.push(StrategyReport {
            id: id.clone(),
            method: selection.method.clone(),
            n_selected: selection.len(),
            selected: selection.selected.clone(),
            n_bands: bands.len(),
            bands,
            ridge_lambda: fit.lambdas.first().copied().unwrap_or(0.0),
            validation_mae: score,
        });
    }
    timing.modeling_s = t.elapsed().as_secs_f64();
    timing.total_s = total.elapsed().as_secs_f64();

    let report = Report {
        fingerprint: DatasetFingerprint {
            source,
            generator_seed,
            n_samples: set.n_samples(),
            n_reps: set.n_reps(),
            n_vars: set.n_vars(),
            n_responses: set.n_responses(),
            split_fraction: cfg.split_fraction,
            split_seed: cfg.split_seed,
            n_train: outcome.split.train_indices.len(),
            n_validation: outcome.split.validation_indices.len(),
            n_pairs: outcome.pvalues.n_pairs(),
            permutation_method: match cfg.perm_mode {
                PermutationMode::Exact => "exact".to_string(),
                PermutationMode::MonteCarlo { n_perm } => format!("monte_carlo({n_perm})"),
            },
            perm_seed: cfg.perm_seed,
        },
        alpha: cfg.alpha,
        family: cfg.family,
        counts: outcome.counts.counts.clone(),
        strategies,
        all_variables_mae,
        timing,
    };
    if let Some(dir) = &cfg.out_dir {
        emit_report(&report, dir)?;
    }
    Ok(report)
}

/// Loads or generates data per the config, then runs everything on the
/// configured worker count.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Report> {
    cfg.validate()?;
    let t = Instant::now();
    let (set, _truth, source, generator_seed) = load_source(cfg)?;
    let load_s = t.elapsed().as_secs_f64();
    let mut report = with_threads(cfg.threads, || {
        run_with_dataset(cfg, &set, source, generator_seed, None)
    })?;
    report.timing.load_s = load_s;
    Ok(report)
}

/// `(strategy, n_selected, mae)` rows sorted by selection size.
pub fn compare_strategies(report: &Report) -> Vec<(String, usize, f64)> {
    let mut rows: Vec<(String, usize, f64)> = report
        .strategies
        .iter()
        .map(|s| (s.id.clone(), s.n_selected, s.validation_mae))
        .collect();
    rows.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_to<F>(path: std::path::PathBuf, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    f(&mut writer).and_then(|_| writer.flush()).map_err(|e| Error::io(&path, e))
}

/// Writes `report.json`, one `selection_<strategy>.csv` per strategy,
/// `counts.csv`, `mae_vs_k.csv` (strategy, n_selected, mae), and
/// `selection_map.csv` (variable x strategy 0/1 matrix).
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    write_to(out_dir.join("report.json"), |w| {
        writeln!(w, "{}", report.to_json())
    })?;
    let counts = SignificanceCounts {
        counts: report.counts.clone(),
        alpha: report.alpha,
        family: report.family,
    };
    write_to(out_dir.join("counts.csv"), |w| write_counts_csv(&counts, w))?;
    for s in &report.strategies {
        let selection = SelectionResult {
            selected: s.selected.clone(),
            method: s.method.clone(),
            n_vars_total: report.fingerprint.n_vars,
        };
        write_to(out_dir.join(format!("selection_{}.csv", s.id)), |w| {
            write_selection_csv(&selection, w)
        })?;
    }
    write_to(out_dir.join("mae_vs_k.csv"), |w| {
        writeln!(w, "strategy,n_selected,mae")?;
        for (id, n, score) in compare_strategies(report) {
            writeln!(w, "{id},{n},{score}")?;
        }
        Ok(())
    })?;
    write_to(out_dir.join("selection_map.csv"), |w| {
        write!(w, "variable")?;
        for s in &report.strategies {
            write!(w, ",{}", s.id)?;
        }
        writeln!(w)?;
        for v in 0..report.fingerprint.n_vars {
            write!(w, "{v}")?;
            for s in &report.strategies {
                let flag = if s.selected.binary_search(&v).is_ok() { 1 } else { 0 };
                write!(w, ",{flag}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    Ok(())
}
