//! Command-line interface.
//!
//! Data goes to files or stdout; progress and timing go to stderr. Exit
//! codes: 0 success, 1 usage error, 2 runtime failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use crate::config::{DataSource, PipelineConfig};
use crate::dataset::{average_repetitions, split_train_validation, write_samples_csv};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::linmod::{cv_select_ridge_lambda_multi, mae, ridge_lambda_grid, ModelFit, Standardizer};
use crate::multiplicity::write_selection_csv;
use crate::permtest::read_pvalues_csv;
use crate::pipeline::{
    compare_strategies, load_source, run_pipeline, run_selection, with_threads, Report,
};
use crate::synth::{generate_dataset, write_ground_truth_csv};

const USAGE: &str = "\
permselect - permutation-test variable selection benchmark

USAGE: permselect <command> [flags]

COMMANDS:
  generate   write a synthetic dataset (data.csv, ground_truth.csv)
  select     split + pairwise permutation tests + FDR + selections
  fit        fit a Ridge model on the training split of a selection
  evaluate   score a fitted model on the validation split
  pipeline   full run, emitting report.json and plot-ready CSVs
  compare    print a strategy,n_selected,mae table

FLAGS:
  --config <path>         flat 'key = value' config file ('#' comments)
  --set <key=value>       override one config key (repeatable)
  --seed <n>              master seed; stage seeds derive from it
  --out <dir>             output directory
  --data <path>           input dataset CSV (implies source=csv)
  --threads <n>           permutation-stage worker count
  --pvalues <path>        (select) reuse a raw p-value matrix CSV
  --selection <path|all>  (fit) variable subset to fit (default all)
  --model <path>          (evaluate) fitted model JSON
  --report <path>         (compare) reuse an existing report.json

EXIT CODES: 0 success, 1 usage error, 2 runtime failure
";

struct Cli {
    command: String,
    config_path: Option<PathBuf>,
    /// Config assignments in command-line order; `--seed` expands through
    /// [`PipelineConfig::apply_master_seed`].
    overrides: Vec<CliOverride>,
    pvalues: Option<PathBuf>,
    selection: Option<String>,
    model: Option<PathBuf>,
    report: Option<PathBuf>,
}

enum CliOverride {
    KeyValue(String, String),
    MasterSeed(u64),
}

fn parse_args(args: &[String]) -> std::result::Result<Cli, String> {
    let mut iter = args.iter();
    let command = iter.next().ok_or("missing command")?.clone();
    const COMMANDS: [&str; 6] = ["generate", "select", "fit", "evaluate", "pipeline", "compare"];
    if !COMMANDS.contains(&command.as_str()) {
        return Err(format!("unknown command '{command}'"));
    }
    let mut cli = Cli {
        command,
        config_path: None,
        overrides: Vec::new(),
        pvalues: None,
        selection: None,
        model: None,
        report: None,
    };
    while let Some(flag) = iter.next() {
        let mut value = || -> std::result::Result<String, String> {
            iter.next().cloned().ok_or(format!("flag {flag} needs a value"))
        };
        match flag.as_str() {
            "--config" => cli.config_path = Some(PathBuf::from(value()?)),
            "--set" => {
                let pair = value()?;
                let Some((k, v)) = pair.split_once('=') else {
                    return Err(format!("--set expects key=value, got '{pair}'"));
                };
                cli.overrides.push(CliOverride::KeyValue(k.trim().into(), v.trim().into()));
            }
            "--seed" => {
                let raw = value()?;
                let seed: u64 =
                    raw.parse().map_err(|_| format!("bad --seed value '{raw}'"))?;
                cli.overrides.push(CliOverride::MasterSeed(seed));
            }
            "--out" => {
                let dir = value()?;
                cli.overrides.push(CliOverride::KeyValue("out_dir".into(), dir));
            }
            "--data" => {
                let path = value()?;
                cli.overrides.push(CliOverride::KeyValue("data_path".into(), path));
            }
            "--threads" => {
                let n = value()?;
                cli.overrides.push(CliOverride::KeyValue("threads".into(), n));
            }
            "--pvalues" => cli.pvalues = Some(PathBuf::from(value()?)),
            "--selection" => cli.selection = Some(value()?),
            "--model" => cli.model = Some(PathBuf::from(value()?)),
            "--report" => cli.report = Some(PathBuf::from(value()?)),
            "--help" | "-h" => return Err(String::new()),
            other => return Err(format!("unknown flag '{other}'")),
        }
    }
    Ok(cli)
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config_path {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for o in &cli.overrides {
        match o {
            CliOverride::KeyValue(k, v) => cfg.apply(k, v)?,
            CliOverride::MasterSeed(seed) => cfg.apply_master_seed(*seed),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(cfg: &PipelineConfig, command: &str) -> Result<PathBuf> {
    cfg.out_dir
        .clone()
        .ok_or_else(|| Error::Config(format!("'{command}' needs --out <dir>")))
}

fn write_file<F>(path: PathBuf, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> std::io::Result<()>,
{
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
}

fn cmd_generate(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let out = require_out(&cfg, "generate")?;
    let DataSource::Generate(gen) = &cfg.source else {
        return Err(Error::Config("generate requires source=generate".into()));
    };
    let t = std::time::Instant::now();
    let (set, truth) = generate_dataset(gen)?;
    write_file(out.join("data.csv"), |w| write_samples_csv(&set, w))?;
    write_file(out.join("ground_truth.csv"), |w| write_ground_truth_csv(&truth, w))?;
    eprintln!(
        "generated {} samples x {} reps x {} vars in {:.2}s -> {}",
        set.n_samples(),
        set.n_reps(),
        set.n_vars(),
        t.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn cmd_select(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let out = require_out(&cfg, "select")?;
    let (set, _, _, _) = load_source(&cfg)?;
    let precomputed = match &cli.pvalues {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            Some(read_pvalues_csv(std::io::BufReader::new(file))?)
        }
        None => None,
    };
    let outcome = with_threads(cfg.threads, || run_selection(&cfg, &set, precomputed))?;
    for (id, selection) in &outcome.strategies {
        write_file(out.join(format!("selection_{id}.csv")), |w| {
            write_selection_csv(selection, w)
        })?;
    }
    eprintln!(
        "selection done: {} pairs, permutation {:.2}s, adjust {:.2}s",
        outcome.pvalues.n_pairs(),
        outcome.timing.permutation_s,
        outcome.timing.adjust_s
    );
    Ok(())
}

fn parse_selection_arg(arg: Option<&String>, n_vars: usize) -> Result<Vec<usize>> {
    match arg.map(|s| s.as_str()) {
        None | Some("all") => Ok((0..n_vars).collect()),
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| Error::io(PathBuf::from(path), e))?;
            let mut vars = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || (i == 0 && line == "variable") {
                    continue;
                }
                let v: usize = line.parse().map_err(|_| {
                    Error::InvalidInput(format!("bad variable index '{line}' in {path}"))
                })?;
                if v >= n_vars {
                    return Err(Error::InvalidInput(format!(
                        "variable {v} out of range (n_vars = {n_vars})"
                    )));
                }
                vars.push(v);
            }
            vars.sort_unstable();
            vars.dedup();
            Ok(vars)
        }
    }
}

fn training_matrices(
    cfg: &PipelineConfig,
    set: &crate::dataset::SampleSet,
) -> Result<(Matrix, Matrix, Matrix, Matrix)> {
    let split = split_train_validation(set, cfg.split_fraction, cfg.split_seed)?;
    let avg = average_repetitions(set);
    let responses = set.response_matrix();
    let pick = |indices: &[usize], m: &Matrix| -> Matrix {
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| m.row(i).to_vec()).collect();
        Matrix::from_rows(&rows).expect("uniform rows")
    };
    Ok((
        pick(&split.train_indices, &avg.values),
        pick(&split.train_indices, &responses),
        pick(&split.validation_indices, &avg.values),
        pick(&split.validation_indices, &responses),
    ))
}

fn cmd_fit(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let out = require_out(&cfg, "fit")?;
    let (set, _, _, _) = load_source(&cfg)?;
    let vars = parse_selection_arg(cli.selection.as_ref(), set.n_vars())?;
    let (x_train, y_train, _, _) = training_matrices(&cfg, &set)?;
    let lambda = if vars.is_empty() {
        0.0
    } else {
        let x_sub = x_train.select_columns(&vars);
        let x_std = Standardizer::fit(&x_sub)?.apply(&x_sub)?;
        let grid = ridge_lambda_grid(x_train.rows(), cfg.ridge_grid_size);
        cv_select_ridge_lambda_multi(&x_std, &y_train, &grid, cfg.ridge_folds, cfg.ridge_seed)?
    };
    let fit = ModelFit::fit_ridge(&x_train, &y_train, &vars, lambda)?;
    write_file(out.join("model.json"), |w| {
        writeln!(w, "{}", serde_json::to_string_pretty(&fit).expect("model serializes"))
    })?;
    eprintln!("fit {} variables at lambda {lambda:.6e} -> {}", vars.len(), out.display());
    Ok(())
}

fn cmd_evaluate(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let model_path = cli
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("'evaluate' needs --model <path>".into()))?;
    let text = fs::read_to_string(model_path).map_err(|e| Error::io(model_path, e))?;
    let fit: ModelFit = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("cannot parse model JSON: {e}")))?;
    let (set, _, _, _) = load_source(&cfg)?;
    let (_, _, x_val, y_val) = training_matrices(&cfg, &set)?;
    let predictions = fit.predict(&x_val)?;
    let score = mae(&predictions, &y_val)?;
    println!("metric,value");
    println!("validation_mae,{score}");
    Ok(())
}

fn cmd_pipeline(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    require_out(&cfg, "pipeline")?;
    let report = run_pipeline(&cfg)?;
    eprintln!(
        "pipeline done: {} pairs, permutation {:.2}s, total {:.2}s -> {}",
        report.fingerprint.n_pairs,
        report.timing.permutation_s,
        report.timing.total_s,
        cfg.out_dir.as_ref().unwrap().display()
    );
    Ok(())
}

fn cmd_compare(cli: &Cli) -> Result<()> {
    let report = match &cli.report {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Report::from_json(&text)?
        }
        None => {
            let cfg = build_config(cli)?;
            run_pipeline(&cfg)?
        }
    };
    println!("strategy,n_selected,mae");
    for (id, n, score) in compare_strategies(&report) {
        println!("{id},{n},{score}");
    }
    Ok(())
}

/// Entry point used by the binary and by tests. Returns the process exit
/// code instead of exiting, so tests can call it in-process.
pub fn cli_main(args: &[String]) -> i32 {
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(msg) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}\n");
            }
            eprintln!("{USAGE}");
            return 1;
        }
    };
    let result = match cli.command.as_str() {
        "generate" => cmd_generate(&cli),
        "select" => cmd_select(&cli),
        "fit" => cmd_fit(&cli),
        "evaluate" => cmd_evaluate(&cli),
        "pipeline" => cmd_pipeline(&cli),
        "compare" => cmd_compare(&cli),
        _ => unreachable!("parse_args validated the command"),
    };
    match result {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}\n");
            eprintln!("{USAGE}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> i32 {
        let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        cli_main(&owned)
    }

    #[test]
    fn unknown_command_and_flags_are_usage_errors() {
        assert_eq!(run(&["frobnicate"]), 1);
        assert_eq!(run(&[]), 1);
        assert_eq!(run(&["pipeline", "--wat"]), 1);
        assert_eq!(run(&["pipeline", "--seed"]), 1);
        assert_eq!(run(&["pipeline", "--seed", "x"]), 1);
    }

    #[test]
    fn missing_data_file_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert_eq!(
            run(&[
                "select",
                "--data",
                "definitely_missing.csv",
                "--out",
                out.to_str().unwrap()
            ]),
            2
        );
    }

    #[test]
    fn generate_is_deterministic_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("a");
        let d2 = dir.path().join("b");
        for d in [&d1, &d2] {
            let code = run(&[
                "generate",
                "--seed",
                "7",
                "--set",
                "n_samples=12",
                "--set",
                "n_vars=20",
                "--set",
                "n_components=3",
                "--out",
                d.to_str().unwrap(),
            ]);
            assert_eq!(code, 0);
        }
        let a = fs::read(d1.join("data.csv")).unwrap();
        let b = fs::read(d2.join("data.csv")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        assert_eq!(
            fs::read(d1.join("ground_truth.csv")).unwrap(),
            fs::read(d2.join("ground_truth.csv")).unwrap()
        );
    }
}
