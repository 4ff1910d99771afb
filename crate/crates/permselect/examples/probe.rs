// scratch probe (not committed)
use permselect::config::*;
use permselect::pipeline::*;
use permselect::dataset::*;
use permselect::linalg::Matrix;
use permselect::linmod::*;

fn main() {
    for seed in 0..3u64 {
        let mut cfg = PipelineConfig::default();
        cfg.apply_master_seed(seed);
        let (set, _, _, _) = load_source(&cfg).unwrap();
        let split = split_train_validation(&set, 0.75, cfg.split_seed).unwrap();
        let avg = average_repetitions(&set);
        let responses = set.response_matrix();
        let pick = |idx: &[usize], m: &Matrix| -> Matrix {
            Matrix::from_rows(&idx.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>()).unwrap()
        };
        let x_train = pick(&split.train_indices, &avg.values);
        let y_train = pick(&split.train_indices, &responses);
        let x_val = pick(&split.validation_indices, &avg.values);
        let y_val = pick(&split.validation_indices, &responses);
        let t = std::time::Instant::now();
        let outcome = run_selection(&cfg, &set, None).unwrap();
        println!("--- seed {seed} ({:.1}s selection) ---", t.elapsed().as_secs_f64());
        for (id, sel) in &outcome.strategies {
            let bands = permselect::multiplicity::contiguous_bands(sel);
            let (fit, score) = fit_and_score(&x_train, &y_train, &x_val, &y_val, sel, 40, 5, cfg.ridge_seed).unwrap();
            println!("  {id:>18}: k={:>3} bands={:>2} lambda={:.2e} mae={score:.7}", sel.len(), bands.len(), fit.lambdas[0]);
        }
    }
}
