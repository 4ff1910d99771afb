//! Multiplicity control and cutoff-based variable selection.
//!
//! Raw pairwise p-values are adjusted with the Benjamini-Hochberg step-up
//! procedure, either per variable (each variable's pair tests form one
//! family, the default) or globally over the whole matrix. A variable's
//! significance count is the number of pairs still significant at level
//! alpha after adjustment; variables are selected by thresholding that
//! count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permtest::{MatrixKind, PValueMatrix};

/// Which family the BH adjustment runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyMode {
    PerVariable,
    Global,
}

/// Number of significant pairs per variable at a fixed alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceCounts {
    pub counts: Vec<usize>,
    pub alpha: f64,
    pub family: FamilyMode,
}

/// Provenance of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionMethod {
    /// Significance-count threshold.
    CountCutoff { cutoff: usize },
    /// Union of per-response Lasso supports, with the CV-chosen penalty per
    /// response.
    Lasso { lambdas: Vec<f64> },
    AllVariables,
}

/// Sorted, duplicate-free set of selected variable indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub method: SelectionMethod,
    pub n_vars_total: usize,
}

impl SelectionResult {
    pub fn new(mut selected: Vec<usize>, method: SelectionMethod, n_vars_total: usize) -> Result<Self> {
        selected.sort_unstable();
        selected.dedup();
        if selected.last().is_some_and(|&v| v >= n_vars_total) {
            return Err(Error::InvalidInput(format!(
                "selected index {} out of range (n_vars = {n_vars_total})",
                selected.last().unwrap()
            )));
        }
        Ok(SelectionResult { selected, method, n_vars_total })
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Maximal run of consecutive selected indices, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub start: usize,
    pub end: usize,
}

/// Benjamini-Hochberg step-up adjusted p-values.
///
/// Sorting ascending, the adjusted value at rank i (1-based) is
/// `min over j >= i of (m * p_(j) / j)` capped at 1, mapped back to the
/// original positions. Ties keep their input order.
pub fn bh_adjust(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::InvalidInput("empty p-value vector".into()));
    }
    for &x in p {
        if !(x > 0.0 && x <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "p-value {x} outside (0, 1]"
            )));
        }
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        let q = (m as f64 * p[idx] / rank as f64).min(1.0);
        running = running.min(q);
        // The clamp keeps `adjusted >= input` exact under floating-point
        // rounding of m * p / rank; it cannot break monotonicity because
        // both the running minimum and the inputs are ordered.
        adjusted[idx] = running.max(p[idx]);
    }
    Ok(adjusted)
}

/// Applies [`bh_adjust`] to a raw p-value matrix, per variable column or
/// over the whole matrix as one family.
pub fn adjust_matrix(raw: &PValueMatrix, family: FamilyMode) -> Result<PValueMatrix> {
    if raw.kind() != MatrixKind::Raw {
        return Err(Error::InvalidInput("matrix is already adjusted".into()));
    }
    let n_pairs = raw.n_pairs();
    let n_vars = raw.n_vars();
    let values = match family {
        FamilyMode::PerVariable => {
            let columns: Vec<Vec<f64>> = (0..n_vars)
                .into_par_iter()
                .map(|v| bh_adjust(&raw.column(v)))
                .collect::<Result<_>>()?;
            let mut values = vec![0.0; n_pairs * n_vars];
            for (v, col) in columns.iter().enumerate() {
                for (pair, &q) in col.iter().enumerate() {
                    values[pair * n_vars + v] = q;
                }
            }
            values
        }
        FamilyMode::Global => bh_adjust(raw.values())?,
    };
    raw.with_values(values, MatrixKind::Adjusted)
}

/// Counts, per variable, the pairs whose adjusted p-value is <= alpha.
pub fn significance_counts(adj: &PValueMatrix, alpha: f64) -> Result<SignificanceCounts> {
    significance_counts_with_family(adj, alpha, FamilyMode::PerVariable)
}

pub fn significance_counts_with_family(
    adj: &PValueMatrix,
    alpha: f64,
    family: FamilyMode,
) -> Result<SignificanceCounts> {
    if adj.kind() != MatrixKind::Adjusted {
        return Err(Error::InvalidInput(
            "significance counting needs an adjusted matrix".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let mut counts = vec![0usize; adj.n_vars()];
    for pair in 0..adj.n_pairs() {
        let row = adj.row(pair);
        for (v, &q) in row.iter().enumerate() {
            if q <= alpha {
                counts[v] += 1;
            }
        }
    }
    Ok(SignificanceCounts { counts, alpha, family })
}

/// Variables whose count reaches the cutoff; boundary ties are included.
pub fn select_by_cutoff(c: &SignificanceCounts, cutoff: usize) -> SelectionResult {
    let selected: Vec<usize> = c
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &count)| count >= cutoff)
        .map(|(v, _)| v)
        .collect();
    SelectionResult {
        selected,
        method: SelectionMethod::CountCutoff { cutoff },
        n_vars_total: c.counts.len(),
    }
}

/// Cutoff at a fraction of the maximum significance count.
///
/// On benchmark data the counts are near-binary (zero-inflated with a
/// plateau of detected variables), so quantiles of the count vector are
/// degenerate as cutoffs: the median is usually 0, which selects every
/// variable. Fractions of the plateau height scan the count structure
/// instead, which is what a cutoff grid is for.
pub fn relative_count_cutoff(c: &SignificanceCounts, fraction: f64) -> usize {
    let max = c.counts.iter().copied().max().unwrap_or(0);
    (fraction * max as f64).ceil() as usize
}

/// Largest cutoff whose selection has at least `k` variables. Count ties can
/// make the selection larger than `k`, never smaller.
pub fn cutoff_for_target_size(c: &SignificanceCounts, k: usize) -> Result<usize> {
    let n_vars = c.counts.len();
    if k == 0 || k > n_vars {
        return Err(Error::InvalidInput(format!(
            "target size {k} outside 1..={n_vars}"
        )));
    }
    let mut sorted = c.counts.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    // The k-th largest count is the largest threshold that keeps >= k variables.
    Ok(sorted[k - 1])
}

/// Maximal runs of consecutive indices in the selection. Concatenating the
/// bands reproduces the selection exactly.
pub fn contiguous_bands(sel: &SelectionResult) -> Vec<Band> {
    let mut bands = Vec::new();
    let mut iter = sel.selected.iter().copied();
    let Some(first) = iter.next() else {
        return bands;
    };
    let mut start = first;
    let mut end = first;
    for v in iter {
        if v == end + 1 {
            end = v;
        } else {
            bands.push(Band { start, end });
            start = v;
            end = v;
        }
    }
    bands.push(Band { start, end });
    bands
}

/// Writes `variable,count` rows.
pub fn write_counts_csv<W: Write>(c: &SignificanceCounts, mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "variable,count")?;
    for (v, count) in c.counts.iter().enumerate() {
        writeln!(writer, "{v},{count}")?;
    }
    Ok(())
}

/// Writes a one-column `variable` list.
pub fn write_selection_csv<W: Write>(sel: &SelectionResult, mut writer: W) -> std::io::Result<()> {
    writeln!(writer, "variable")?;
    for v in &sel.selected {
        writeln!(writer, "{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permtest::{PValueMatrix, PairId, TestMethod};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn matrix_from_columns(columns: &[Vec<f64>]) -> PValueMatrix {
        let n_pairs = columns[0].len();
        let n_vars = columns.len();
        let pairs: Vec<PairId> = (0..n_pairs).map(|p| PairId { i: 0, j: p + 1 }).collect();
        let mut values = vec![0.0; n_pairs * n_vars];
        for (v, col) in columns.iter().enumerate() {
            for (p, &x) in col.iter().enumerate() {
                values[p * n_vars + v] = x;
            }
        }
        PValueMatrix::new(pairs, n_vars, values, MatrixKind::Raw, TestMethod::FromFile).unwrap()
    }

    #[test]
    fn bh_matches_hand_computed_vectors() {
        // Frozen oracle: running minimum of m * p_(j) / j from the top rank.
        let adj = bh_adjust(&[0.01, 0.02, 0.03, 0.04, 0.05]).unwrap();
        for q in &adj {
            assert!((q - 0.05).abs() < 1e-12, "{adj:?}");
        }
        let adj = bh_adjust(&[0.005, 0.009, 0.05, 0.2]).unwrap();
        let expect = [0.018, 0.018, 0.2 / 3.0, 0.2];
        for (q, e) in adj.iter().zip(&expect) {
            assert!((q - e).abs() < 1e-12, "{adj:?}");
        }
    }

    #[test]
    fn bh_leaves_constant_vectors_unchanged() {
        let adj = bh_adjust(&[0.3; 7]).unwrap();
        assert_eq!(adj, vec![0.3; 7]);
    }

    #[test]
    fn bh_rejects_out_of_range() {
        assert!(bh_adjust(&[0.0, 0.5]).is_err());
        assert!(bh_adjust(&[1.5]).is_err());
        assert!(bh_adjust(&[f64::NAN]).is_err());
        assert!(bh_adjust(&[]).is_err());
    }

    #[test]
    fn bh_is_monotone_and_dominates_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p: Vec<f64> = (0..40).map(|_| rng.gen_range(1e-6..1.0)).collect();
            let adj = bh_adjust(&p).unwrap();
            for (q, x) in adj.iter().zip(&p) {
                assert!(q >= x && *q <= 1.0);
            }
            // Order statistics stay ordered.
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
            for w in order.windows(2) {
                assert!(adj[w[0]] <= adj[w[1]] + 1e-15);
            }
        }
    }

    #[test]
    fn bh_is_permutation_equivariant() {
        let p = vec![0.04, 0.001, 0.2, 0.6, 0.013, 0.08];
        let adj = bh_adjust(&p).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let p_perm: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let adj_perm = bh_adjust(&p_perm).unwrap();
        for (slot, &i) in perm.iter().enumerate() {
            assert_eq!(adj_perm[slot], adj[i]);
        }
    }

    #[test]
    fn empirical_fdr_is_controlled_on_uniform_nulls() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sims = 500;
        let m = 1000;
        let mut fdp_sum = 0.0;
        for _ in 0..sims {
            let p: Vec<f64> = (0..m).map(|_| rng.gen_range(f64::MIN_POSITIVE..1.0)).collect();
            let adj = bh_adjust(&p).unwrap();
            let rejections = adj.iter().filter(|q| **q <= 0.05).count();
            // All hypotheses are null, so every rejection is false.
            if rejections > 0 {
                fdp_sum += 1.0;
            }
        }
        let mean_fdp = fdp_sum / sims as f64;
        assert!(mean_fdp <= 0.07, "mean FDP = {mean_fdp}");
    }

    #[test]
    fn adjust_matrix_per_variable_matches_bh_per_column() {
        let m = matrix_from_columns(&[vec![0.01, 0.02, 0.03, 0.04, 0.05]]);
        let adj = adjust_matrix(&m, FamilyMode::PerVariable).unwrap();
        for p in 0..5 {
            assert!((adj.value(p, 0) - 0.05).abs() < 1e-12);
        }
        assert!(adjust_matrix(&adj, FamilyMode::PerVariable).is_err());
    }

    #[test]
    fn adjust_matrix_all_ones_unchanged() {
        let m = matrix_from_columns(&[vec![1.0; 4], vec![1.0; 4]]);
        let adj = adjust_matrix(&m, FamilyMode::Global).unwrap();
        assert!(adj.values().iter().all(|&q| q == 1.0));
    }

    #[test]
    fn global_adjustment_dominates_per_variable_on_duplicated_columns() {
        let col = vec![0.004, 0.03, 0.011, 0.2, 0.47];
        let m = matrix_from_columns(&[col.clone(), col]);
        let per_var = adjust_matrix(&m, FamilyMode::PerVariable).unwrap();
        let global = adjust_matrix(&m, FamilyMode::Global).unwrap();
        for p in 0..m.n_pairs() {
            for v in 0..2 {
                assert!(global.value(p, v) >= per_var.value(p, v) - 1e-15);
            }
        }
    }

    #[test]
    fn counting_uses_inclusive_alpha() {
        let m = matrix_from_columns(&[
            vec![0.01, 0.04, 0.2],
            vec![1.0, 1.0, 1.0],
            vec![0.05, 0.5, 0.6],
        ]);
        // Constant columns are BH fixed points, so adjusting changes nothing here
        // except the 3-value column; use alpha on already-adjusted values instead.
        let adj = m.with_values(m.values().to_vec(), MatrixKind::Adjusted).unwrap();
        let counts = significance_counts(&adj, 0.05).unwrap();
        assert_eq!(counts.counts, vec![2, 0, 1]);
        assert!(significance_counts(&m, 0.05).is_err(), "raw matrix must be rejected");
        assert!(significance_counts(&adj, 0.0).is_err());
    }

    #[test]
    fn cutoff_selection_keeps_boundary_ties() {
        let c = SignificanceCounts {
            counts: vec![10, 5, 7],
            alpha: 0.05,
            family: FamilyMode::PerVariable,
        };
        assert_eq!(select_by_cutoff(&c, 7).selected, vec![0, 2]);
        assert_eq!(select_by_cutoff(&c, 0).selected, vec![0, 1, 2]);
        let none = SignificanceCounts {
            counts: vec![3, 3, 3],
            alpha: 0.05,
            family: FamilyMode::PerVariable,
        };
        assert!(select_by_cutoff(&none, 4).selected.is_empty());
    }

    #[test]
    fn cutoff_selection_is_antitone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let counts: Vec<usize> = (0..60).map(|_| rng.gen_range(0..100)).collect();
        let c = SignificanceCounts { counts, alpha: 0.05, family: FamilyMode::PerVariable };
        for lo in (0..100).step_by(7) {
            let hi = lo + 13;
            let big = select_by_cutoff(&c, lo).selected;
            let small = select_by_cutoff(&c, hi).selected;
            assert!(small.iter().all(|v| big.contains(v)));
        }
    }

    #[test]
    fn matched_size_cutoffs() {
        let c = SignificanceCounts {
            counts: vec![9, 7, 7, 2],
            alpha: 0.05,
            family: FamilyMode::PerVariable,
        };
        let cutoff = cutoff_for_target_size(&c, 2).unwrap();
        assert_eq!(cutoff, 7);
        assert_eq!(select_by_cutoff(&c, cutoff).selected, vec![0, 1, 2]);

        let c2 = SignificanceCounts {
            counts: vec![5, 4, 3],
            alpha: 0.05,
            family: FamilyMode::PerVariable,
        };
        assert_eq!(cutoff_for_target_size(&c2, 1).unwrap(), 5);
        assert_eq!(select_by_cutoff(&c2, 5).selected, vec![0]);

        let zeros = SignificanceCounts {
            counts: vec![0, 0],
            alpha: 0.05,
            family: FamilyMode::PerVariable,
        };
        assert_eq!(cutoff_for_target_size(&zeros, 1).unwrap(), 0);
        assert_eq!(select_by_cutoff(&zeros, 0).selected, vec![0, 1]);
        assert!(cutoff_for_target_size(&zeros, 3).is_err());
        assert!(cutoff_for_target_size(&zeros, 0).is_err());
    }

    #[test]
    fn matched_size_never_undershoots() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let counts: Vec<usize> = (0..30).map(|_| rng.gen_range(0..10)).collect();
            let c = SignificanceCounts {
                counts,
                alpha: 0.05,
                family: FamilyMode::PerVariable,
            };
            for k in 1..=30 {
                let cutoff = cutoff_for_target_size(&c, k).unwrap();
                let size = select_by_cutoff(&c, cutoff).len();
                assert!(size >= k, "k = {k}, cutoff = {cutoff}, size = {size}");
                // One step tighter must undershoot, otherwise cutoff was not maximal.
                let tighter = select_by_cutoff(&c, cutoff + 1).len();
                assert!(tighter < k);
            }
        }
    }

    #[test]
    fn bands_partition_the_selection() {
        let sel = SelectionResult::new(
            vec![3, 4, 5, 9, 10],
            SelectionMethod::AllVariables,
            16,
        )
        .unwrap();
        let bands = contiguous_bands(&sel);
        assert_eq!(bands, vec![Band { start: 3, end: 5 }, Band { start: 9, end: 10 }]);

        let empty =
            SelectionResult::new(vec![], SelectionMethod::AllVariables, 4).unwrap();
        assert!(contiguous_bands(&empty).is_empty());

        let sparse =
            SelectionResult::new(vec![0, 2, 4], SelectionMethod::AllVariables, 5).unwrap();
        assert_eq!(contiguous_bands(&sparse).len(), 3);

        // Round trip: bands reproduce the selection.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let selected: Vec<usize> =
                (0..40).filter(|_| rng.gen_bool(0.35)).collect();
            let sel =
                SelectionResult::new(selected.clone(), SelectionMethod::AllVariables, 40).unwrap();
            let mut rebuilt = Vec::new();
            for band in contiguous_bands(&sel) {
                rebuilt.extend(band.start..=band.end);
            }
            assert_eq!(rebuilt, selected);
        }
    }
}
