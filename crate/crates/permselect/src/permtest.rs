//! Two-sample permutation testing over all training-sample pairs.
//!
//! The exchangeable units are the repetition values of a sample: comparing
//! samples `i` and `j` at one variable is a two-sample test between `i`'s
//! `n_reps` repetition measurements and `j`'s, using the difference in
//! means as the test statistic. With 5-vs-5 groups the full permutation
//! distribution has C(10, 5) = 252 relabelings and is enumerated exactly;
//! a seeded Monte-Carlo estimator covers group sizes where exhaustive
//! enumeration is off the table.
//!
//! The pair loop is embarrassingly parallel: pairs are computed on a rayon
//! pool into preassigned row slots, so the resulting matrix is bit-identical
//! for any worker count.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::SampleSet;
use crate::error::{Error, Result};

/// Largest number of partitions the exhaustive enumerator will walk.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 1_000_000;

/// Relative tie tolerance on |T|: permuted statistics within
/// `1e-12 * max(1, |T_obs|)` of the observed one count as ties and are
/// included in the rejection region.
const TIE_REL_TOL: f64 = 1e-12;

/// Difference-in-means statistic, `mean(a) - mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistic {
    pub value: f64,
}

pub fn diff_means_stat(a: &[f64], b: &[f64]) -> Result<TestStatistic> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("empty group in two-sample statistic".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in two-sample statistic".into()));
    }
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    Ok(TestStatistic { value: ma - mb })
}

/// C(n, k) without overflow for the sizes the limit check allows.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Lexicographic iterator over all size-`k` subsets of `{0, .., n-1}`,
/// interpreted as the indices assigned to group A. The identity assignment
/// `{0, .., k-1}` comes first.
pub struct PartitionIter {
    n: usize,
    k: usize,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl Iterator for PartitionIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.current.clone());
        }
        // Advance the rightmost index that still has room.
        let (n, k) = (self.n, self.k);
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                return None;
            }
            i -= 1;
            if self.current[i] < n - k + i {
                break;
            }
        }
        self.current[i] += 1;
        for j in i + 1..k {
            self.current[j] = self.current[j - 1] + 1;
        }
        Some(self.current.clone())
    }
}

/// Enumerates the `C(n_a + n_b, n_a)` group-A index subsets.
///
/// Fails when the count exceeds [`DEFAULT_EXHAUSTIVE_LIMIT`]; callers are
/// expected to fall back to [`mc_two_sample_pvalue`] in that case.
pub fn enumerate_partitions(n_a: usize, n_b: usize) -> Result<PartitionIter> {
    enumerate_partitions_with_limit(n_a, n_b, DEFAULT_EXHAUSTIVE_LIMIT)
}

pub fn enumerate_partitions_with_limit(
    n_a: usize,
    n_b: usize,
    limit: u64,
) -> Result<PartitionIter> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InvalidInput("both groups must be nonempty".into()));
    }
    let count = binomial((n_a + n_b) as u64, n_a as u64);
    if count > limit as u128 {
        return Err(Error::InvalidInput(format!(
            "C({}, {n_a}) = {count} exceeds the exhaustive limit {limit}; use Monte Carlo",
            n_a + n_b
        )));
    }
    Ok(PartitionIter {
        n: n_a + n_b,
        k: n_a,
        current: (0..n_a).collect(),
        started: false,
        done: false,
    })
}

#[inline]
fn rejection_threshold(t_obs: f64) -> f64 {
    t_obs.abs() - TIE_REL_TOL * t_obs.abs().max(1.0)
}

/// Exact two-sided permutation p-value by streaming enumeration:
/// `p = #{partitions with |T| >= |T_obs| - eps} / C(n_a + n_b, n_a)`.
///
/// The identity partition counts itself, so `p >= 1 / C(n_a + n_b, n_a)`.
pub fn exact_two_sample_pvalue(a: &[f64], b: &[f64]) -> Result<f64> {
    let t_obs = diff_means_stat(a, b)?.value;
    let parts = enumerate_partitions(a.len(), b.len())?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let inv_a = 1.0 / a.len() as f64;
    let inv_b = 1.0 / b.len() as f64;
    let threshold = rejection_threshold(t_obs);
    let mut hits = 0u64;
    let mut n_parts = 0u64;
    for subset in parts {
        let s: f64 = subset.iter().map(|&i| pooled[i]).sum();
        let t = s * (inv_a + inv_b) - total * inv_b;
        if t.abs() >= threshold {
            hits += 1;
        }
        n_parts += 1;
    }
    Ok(hits as f64 / n_parts as f64)
}

/// Monte-Carlo two-sided permutation p-value with add-one correction:
/// `p = (1 + #{sampled partitions with |T| >= |T_obs| - eps}) / (n_perm + 1)`.
pub fn mc_two_sample_pvalue(
    a: &[f64],
    b: &[f64],
    n_perm: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if n_perm < 100 {
        return Err(Error::InvalidInput(format!(
            "n_perm must be at least 100, got {n_perm}"
        )));
    }
    let t_obs = diff_means_stat(a, b)?.value;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let inv_a = 1.0 / a.len() as f64;
    let inv_b = 1.0 / b.len() as f64;
    let threshold = rejection_threshold(t_obs);
    let mut hits = 0u64;
    for _ in 0..n_perm {
        let idx = rand::seq::index::sample(rng, pooled.len(), a.len());
        let s: f64 = idx.iter().map(|i| pooled[i]).sum();
        let t = s * (inv_a + inv_b) - total * inv_b;
        if t.abs() >= threshold {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (n_perm + 1) as f64)
}

// ---------------------------------------------------------------------------
// Pairwise matrix
// ---------------------------------------------------------------------------

/// Unordered training-sample pair, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairId {
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Raw,
    Adjusted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestMethod {
    Exact,
    MonteCarlo { n_perm: usize, seed: u64 },
    /// Loaded from a CSV artifact; the producing method is not recorded there.
    FromFile,
}

/// How p-values are computed in [`pairwise_pvalue_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationMode {
    Exact,
    MonteCarlo { n_perm: usize },
}

/// `(pair x variable)` p-value matrix over all training pairs,
/// lexicographically ordered by (i, j).
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    pairs: Vec<PairId>,
    n_vars: usize,
    /// Flat row-major `[pair][variable]` buffer.
    values: Vec<f64>,
    kind: MatrixKind,
    method: TestMethod,
}

impl PValueMatrix {
    pub fn new(
        pairs: Vec<PairId>,
        n_vars: usize,
        values: Vec<f64>,
        kind: MatrixKind,
        method: TestMethod,
    ) -> Result<Self> {
        if values.len() != pairs.len() * n_vars {
            return Err(Error::InvalidInput(format!(
                "p-value buffer has {} entries, expected {}",
                values.len(),
                pairs.len() * n_vars
            )));
        }
        if values.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::InvalidInput("p-values must lie in (0, 1]".into()));
        }
        Ok(PValueMatrix { pairs, n_vars, values, kind, method })
    }

    pub fn pairs(&self) -> &[PairId] {
        &self.pairs
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn method(&self) -> TestMethod {
        self.method
    }

    #[inline]
    pub fn value(&self, pair: usize, var: usize) -> f64 {
        self.values[pair * self.n_vars + var]
    }

    pub fn row(&self, pair: usize) -> &[f64] {
        &self.values[pair * self.n_vars..(pair + 1) * self.n_vars]
    }

    pub fn column(&self, var: usize) -> Vec<f64> {
        (0..self.n_pairs()).map(|p| self.value(p, var)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn with_values(&self, values: Vec<f64>, kind: MatrixKind) -> Result<Self> {
        PValueMatrix::new(self.pairs.clone(), self.n_vars, values, kind, self.method)
    }
}

/// Materialized partition table for one (n_a, n_b) shape, reused across all
/// pairs and variables of a matrix computation.
struct ExactKernel {
    subsets: Vec<u32>,
    n_a: usize,
    n_comb: usize,
    inv_a: f64,
    inv_b: f64,
}

impl ExactKernel {
    fn build(n_a: usize, n_b: usize) -> Result<Self> {
        let mut subsets = Vec::new();
        let mut n_comb = 0usize;
        for subset in enumerate_partitions(n_a, n_b)? {
            subsets.extend(subset.iter().map(|&i| i as u32));
            n_comb += 1;
        }
        Ok(ExactKernel {
            subsets,
            n_a,
            n_comb,
            inv_a: 1.0 / n_a as f64,
            inv_b: 1.0 / n_b as f64,
        })
    }

    /// Two-sided exact p-value for pooled values `[a..., b...]`.
    fn pvalue(&self, pooled: &[f64]) -> f64 {
        let total: f64 = pooled.iter().sum();
        let t_obs = {
            let s: f64 = pooled[..self.n_a].iter().sum();
            s * (self.inv_a + self.inv_b) - total * self.inv_b
        };
        let threshold = rejection_threshold(t_obs);
        let mut hits = 0u32;
        for chunk in self.subsets.chunks_exact(self.n_a) {
            let s: f64 = chunk.iter().map(|&i| pooled[i as usize]).sum();
            let t = s * (self.inv_a + self.inv_b) - total * self.inv_b;
            if t.abs() >= threshold {
                hits += 1;
            }
        }
        hits as f64 / self.n_comb as f64
    }
}

/// Independent per-pair stream so Monte-Carlo results do not depend on the
/// order pairs are scheduled in.
fn pair_stream(seed: u64, i: usize, j: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(i as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(j as u64).to_le_bytes());
    key[24..32].copy_from_slice(&0x7065726d70616972u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Tests every training-sample pair at every variable.
///
/// Row order is lexicographic in (i, j); the result is raw (unadjusted).
/// Rows are computed in parallel into their final slots, so the output is
/// identical for any rayon thread count.
pub fn pairwise_pvalue_matrix(
    train: &SampleSet,
    mode: PermutationMode,
    seed: u64,
) -> Result<PValueMatrix> {
    if train.n_samples() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 training samples, got {}",
            train.n_samples()
        )));
    }
    if train.n_reps() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 repetitions per sample, got {}",
            train.n_reps()
        )));
    }
    let n = train.n_samples();
    let n_vars = train.n_vars();
    let n_reps = train.n_reps();
    let pairs: Vec<PairId> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| PairId { i, j }))
        .collect();

    let kernel = match mode {
        PermutationMode::Exact => Some(ExactKernel::build(n_reps, n_reps)?),
        PermutationMode::MonteCarlo { n_perm } => {
            if n_perm < 100 {
                return Err(Error::InvalidInput(format!(
                    "n_perm must be at least 100, got {n_perm}"
                )));
            }
            None
        }
    };

    let mut values = vec![0.0_f64; pairs.len() * n_vars];
    let rows: Vec<(&PairId, &mut [f64])> =
        pairs.iter().zip(values.chunks_mut(n_vars)).collect();
    rows.into_par_iter().try_for_each(|(pair, row)| -> Result<()> {
        let mut pooled = vec![0.0_f64; 2 * n_reps];
        match mode {
            PermutationMode::Exact => {
                let kernel = kernel.as_ref().unwrap();
                for (v, slot) in row.iter_mut().enumerate() {
                    train.fill_reps(pair.i, v, &mut pooled[..n_reps]);
                    train.fill_reps(pair.j, v, &mut pooled[n_reps..]);
                    *slot = kernel.pvalue(&pooled);
                }
            }
            PermutationMode::MonteCarlo { n_perm } => {
                let mut rng = pair_stream(seed, pair.i, pair.j);
                for (v, slot) in row.iter_mut().enumerate() {
                    train.fill_reps(pair.i, v, &mut pooled[..n_reps]);
                    train.fill_reps(pair.j, v, &mut pooled[n_reps..]);
                    *slot =
                        mc_two_sample_pvalue(&pooled[..n_reps], &pooled[n_reps..], n_perm, &mut rng)?;
                }
            }
        }
        Ok(())
    })?;

    let method = match mode {
        PermutationMode::Exact => TestMethod::Exact,
        PermutationMode::MonteCarlo { n_perm } => TestMethod::MonteCarlo { n_perm, seed },
    };
    PValueMatrix::new(pairs, n_vars, values, MatrixKind::Raw, method)
}

// ---------------------------------------------------------------------------
// CSV serialization
// ---------------------------------------------------------------------------

/// Writes `i,j,v1..vV` with one row per pair.
pub fn write_pvalues_csv<W: Write>(m: &PValueMatrix, mut writer: W) -> std::io::Result<()> {
    write!(writer, "i,j")?;
    for v in 1..=m.n_vars() {
        write!(writer, ",v{v}")?;
    }
    writeln!(writer)?;
    for (p, pair) in m.pairs().iter().enumerate() {
        write!(writer, "{},{}", pair.i, pair.j)?;
        for &x in m.row(p) {
            write!(writer, ",{x}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Reads the CSV written by [`write_pvalues_csv`]. The matrix is assumed to
/// hold raw p-values; the producing method is recorded as
/// [`TestMethod::FromFile`].
pub fn read_pvalues_csv<R: BufRead>(reader: R) -> Result<PValueMatrix> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => {
            line.map_err(|e| Error::Csv { line: 1, message: format!("cannot read header: {e}") })?
        }
        None => return Err(Error::Csv { line: 1, message: "empty input".into() }),
    };
    let cols: Vec<&str> = header.trim_end_matches(['\r', '\n']).split(',').collect();
    if cols.len() < 3 || cols[0] != "i" || cols[1] != "j" {
        return Err(Error::Csv { line: 1, message: "header must be i,j,v1..vV".into() });
    }
    let n_vars = cols.len() - 2;
    let mut pairs = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Csv {
            line: line_no,
            message: format!("cannot read line: {e}"),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_vars + 2 {
            return Err(Error::Csv {
                line: line_no,
                message: format!("row has {} fields, expected {}", fields.len(), n_vars + 2),
            });
        }
        let i: usize = fields[0].parse().map_err(|_| Error::Csv {
            line: line_no,
            message: format!("bad pair index '{}'", fields[0]),
        })?;
        let j: usize = fields[1].parse().map_err(|_| Error::Csv {
            line: line_no,
            message: format!("bad pair index '{}'", fields[1]),
        })?;
        if i >= j {
            return Err(Error::Csv {
                line: line_no,
                message: format!("pair ({i}, {j}) is not ordered i < j"),
            });
        }
        pairs.push(PairId { i, j });
        for raw in &fields[2..] {
            let p: f64 = raw.parse().map_err(|_| Error::Csv {
                line: line_no,
                message: format!("cannot parse '{raw}' as a p-value"),
            })?;
            values.push(p);
        }
    }
    PValueMatrix::new(pairs, n_vars, values, MatrixKind::Raw, TestMethod::FromFile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, GeneratorConfig};

    /// Independent oracle: enumerate group-A assignments as bitmasks and
    /// compute both means directly.
    fn brute_force_pvalue(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let t_obs = a.iter().sum::<f64>() / a.len() as f64
            - b.iter().sum::<f64>() / b.len() as f64;
        let eps = 1e-12 * t_obs.abs().max(1.0);
        let mut hits = 0u64;
        let mut count = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            let mut sa = 0.0;
            let mut sb = 0.0;
            for (idx, &x) in pooled.iter().enumerate() {
                if mask & (1 << idx) != 0 {
                    sa += x;
                } else {
                    sb += x;
                }
            }
            let t = sa / a.len() as f64 - sb / b.len() as f64;
            if t.abs() >= t_obs.abs() - eps {
                hits += 1;
            }
            count += 1;
        }
        hits as f64 / count as f64
    }

    #[test]
    fn diff_means_examples() {
        let t = diff_means_stat(&[1.0, 2.0, 3.0, 4.0, 5.0], &[6.0, 7.0, 8.0, 9.0, 10.0]).unwrap();
        assert_eq!(t.value, -5.0);
        let z = diff_means_stat(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(diff_means_stat(&[], &[1.0]).is_err());
        assert!(diff_means_stat(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn partition_counts_match_binomials() {
        assert_eq!(enumerate_partitions(5, 5).unwrap().count(), 252);
        assert_eq!(enumerate_partitions(1, 1).unwrap().count(), 2);
        let three: Vec<Vec<usize>> = enumerate_partitions(2, 1).unwrap().collect();
        assert_eq!(three, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn partitions_start_with_identity_and_respect_limit() {
        let first = enumerate_partitions(3, 2).unwrap().next().unwrap();
        assert_eq!(first, vec![0, 1, 2]);
        assert!(enumerate_partitions_with_limit(12, 12, 1_000_000).is_err());
        assert!(enumerate_partitions(0, 3).is_err());
    }

    #[test]
    fn exact_pvalue_on_separated_groups() {
        let p = exact_two_sample_pvalue(&[1.0, 2.0, 3.0, 4.0, 5.0], &[6.0, 7.0, 8.0, 9.0, 10.0])
            .unwrap();
        assert!((p - 2.0 / 252.0).abs() < 1e-15, "p = {p}");
    }

    #[test]
    fn exact_pvalue_is_one_for_identical_and_constant_groups() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(exact_two_sample_pvalue(&v, &v).unwrap(), 1.0);
        let c = [7.0; 5];
        assert_eq!(exact_two_sample_pvalue(&c, &c).unwrap(), 1.0);
    }

    #[test]
    fn exact_pvalue_matches_brute_force_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for case in 0..25 {
            let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let fast = exact_two_sample_pvalue(&a, &b).unwrap();
            let slow = brute_force_pvalue(&a, &b);
            assert_eq!(fast, slow, "case {case}: {fast} vs {slow}");
        }
    }

    #[test]
    fn exact_pvalue_is_symmetric_and_shift_scale_invariant() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = exact_two_sample_pvalue(&a, &b).unwrap();
            let p_swap = exact_two_sample_pvalue(&b, &a).unwrap();
            assert_eq!(p, p_swap);
            let shift: Vec<f64> = a.iter().map(|x| x + 3.7).collect();
            let shift_b: Vec<f64> = b.iter().map(|x| x + 3.7).collect();
            assert_eq!(p, exact_two_sample_pvalue(&shift, &shift_b).unwrap());
            let scale: Vec<f64> = a.iter().map(|x| x * -2.5).collect();
            let scale_b: Vec<f64> = b.iter().map(|x| x * -2.5).collect();
            assert_eq!(p, exact_two_sample_pvalue(&scale, &scale_b).unwrap());
        }
    }

    #[test]
    fn exact_pvalues_live_on_the_252_lattice() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = exact_two_sample_pvalue(&a, &b).unwrap();
            let k = p * 252.0;
            assert!((k - k.round()).abs() < 1e-9, "p = {p} is not k/252");
            assert!(k.round() >= 1.0 && k.round() <= 252.0);
        }
    }

    #[test]
    fn mc_pvalue_tracks_exact_and_is_deterministic() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [6.0, 7.0, 8.0, 9.0, 10.0];
        let exact = 2.0 / 252.0;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = mc_two_sample_pvalue(&a, &b, 9999, &mut rng).unwrap();
            assert!((p - exact).abs() < 0.004, "seed {seed}: {p}");
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(
            mc_two_sample_pvalue(&a, &b, 500, &mut r1).unwrap(),
            mc_two_sample_pvalue(&a, &b, 500, &mut r2).unwrap()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mc_two_sample_pvalue(&[3.0; 5], &[3.0; 5], 200, &mut rng).unwrap(), 1.0);
        assert!(mc_two_sample_pvalue(&a, &b, 99, &mut rng).is_err());
    }

    #[test]
    fn pairwise_matrix_shape_and_order() {
        let cfg = GeneratorConfig {
            n_samples: 3,
            n_components: 2,
            n_vars: 2,
            n_reps: 5,
            noise_sigma: 0.05,
            ..GeneratorConfig::default()
        };
        let (set, _) = generate_dataset(&cfg).unwrap();
        let m = pairwise_pvalue_matrix(&set, PermutationMode::Exact, 0).unwrap();
        assert_eq!(m.n_pairs(), 3);
        assert_eq!(m.n_vars(), 2);
        assert_eq!(
            m.pairs(),
            &[PairId { i: 0, j: 1 }, PairId { i: 0, j: 2 }, PairId { i: 1, j: 2 }]
        );
        assert_eq!(m.kind(), MatrixKind::Raw);
    }

    #[test]
    fn identical_samples_give_unit_pvalues() {
        // Two samples with the same repetition block at every variable.
        let set = crate::dataset::SampleSet::new(
            2,
            3,
            2,
            1,
            vec![
                1.0, 5.0, 2.0, 6.0, 3.0, 7.0, // sample 0, reps 0..2
                1.0, 5.0, 2.0, 6.0, 3.0, 7.0, // sample 1, identical
            ],
            vec![0.5, 0.5],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let m = pairwise_pvalue_matrix(&set, PermutationMode::Exact, 0).unwrap();
        assert_eq!(m.row(0), &[1.0, 1.0]);
    }

    #[test]
    fn pairwise_matrix_is_thread_count_independent() {
        let cfg = GeneratorConfig {
            n_samples: 8,
            n_components: 2,
            n_vars: 6,
            noise_sigma: 0.02,
            ..GeneratorConfig::default()
        };
        let (set, _) = generate_dataset(&cfg).unwrap();
        let reference = pairwise_pvalue_matrix(&set, PermutationMode::Exact, 3).unwrap();
        for workers in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
            let m =
                pool.install(|| pairwise_pvalue_matrix(&set, PermutationMode::Exact, 3).unwrap());
            assert_eq!(m, reference);
        }
        // Monte Carlo has per-pair streams, so it must also be stable.
        let mc_ref =
            pairwise_pvalue_matrix(&set, PermutationMode::MonteCarlo { n_perm: 200 }, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let mc = pool.install(|| {
            pairwise_pvalue_matrix(&set, PermutationMode::MonteCarlo { n_perm: 200 }, 9).unwrap()
        });
        assert_eq!(mc, mc_ref);
    }

    #[test]
    fn pairwise_rejects_degenerate_inputs() {
        let cfg = GeneratorConfig {
            n_samples: 4,
            n_components: 2,
            n_reps: 1,
            n_vars: 4,
            ..GeneratorConfig::default()
        };
        let (set, _) = generate_dataset(&cfg).unwrap();
        assert!(pairwise_pvalue_matrix(&set, PermutationMode::Exact, 0).is_err());
    }

    #[test]
    fn pvalue_csv_round_trip() {
        let cfg = GeneratorConfig {
            n_samples: 4,
            n_components: 2,
            n_vars: 3,
            noise_sigma: 0.05,
            ..GeneratorConfig::default()
        };
        let (set, _) = generate_dataset(&cfg).unwrap();
        let m = pairwise_pvalue_matrix(&set, PermutationMode::Exact, 0).unwrap();
        let mut buf = Vec::new();
        write_pvalues_csv(&m, &mut buf).unwrap();
        let back = read_pvalues_csv(buf.as_slice()).unwrap();
        assert_eq!(back.pairs(), m.pairs());
        assert_eq!(back.values(), m.values());
        assert_eq!(back.method(), TestMethod::FromFile);
    }

    #[test]
    fn null_calibration_is_close_to_uniform() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n_pairs = 2000;
        let mut at_05 = 0usize;
        let mut at_01 = 0usize;
        let mut at_10 = 0usize;
        for _ in 0..n_pairs {
            let a: Vec<f64> = (0..5).map(|_| standard_normal_for_test(&mut rng)).collect();
            let b: Vec<f64> = (0..5).map(|_| standard_normal_for_test(&mut rng)).collect();
            let p = exact_two_sample_pvalue(&a, &b).unwrap();
            if p <= 0.05 {
                at_05 += 1;
            }
            if p <= 0.01 {
                at_01 += 1;
            }
            if p <= 0.10 {
                at_10 += 1;
            }
        }
        let f05 = at_05 as f64 / n_pairs as f64;
        let f01 = at_01 as f64 / n_pairs as f64;
        let f10 = at_10 as f64 / n_pairs as f64;
        assert!(f05 <= 0.06, "P(p <= 0.05) = {f05}");
        assert!(f01 <= 0.015, "P(p <= 0.01) = {f01}");
        assert!(f10 <= 0.11, "P(p <= 0.10) = {f10}");

        fn standard_normal_for_test(rng: &mut ChaCha8Rng) -> f64 {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
}
