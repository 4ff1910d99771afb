//! Core data containers: samples x repetitions x variables measurements with
//! per-sample responses, CSV ingestion/emission, train/validation splitting,
//! and repetition averaging.
//!
//! CSV format (UTF-8, comma-separated, `.` decimal, header row):
//!
//! ```text
//! sample_id,rep_id,y1,...,y<R>,x1,...,x<V>
//! ```
//!
//! One row per repetition; the responses are repeated identically on every
//! repetition row of a sample.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Measurements for a set of samples, each measured `n_reps` times over
/// `n_vars` variables, with `n_responses` known response values per sample.
///
/// Immutable after construction; all accessors are cheap index arithmetic
/// into flat buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n_samples: usize,
    n_reps: usize,
    n_vars: usize,
    n_responses: usize,
    /// Flat `[sample][rep][variable]` tensor.
    measurements: Vec<f64>,
    /// Flat `[sample][response]` matrix.
    responses: Vec<f64>,
    sample_ids: Vec<String>,
}

impl SampleSet {
    /// Validates dimensions, finiteness, and buffer sizes.
    pub fn new(
        n_samples: usize,
        n_reps: usize,
        n_vars: usize,
        n_responses: usize,
        measurements: Vec<f64>,
        responses: Vec<f64>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        if n_samples == 0 || n_reps == 0 || n_vars == 0 || n_responses == 0 {
            return Err(Error::InvalidInput(
                "all SampleSet dimensions must be positive".into(),
            ));
        }
        if measurements.len() != n_samples * n_reps * n_vars {
            return Err(Error::InvalidInput(format!(
                "measurement buffer has {} entries, expected {}",
                measurements.len(),
                n_samples * n_reps * n_vars
            )));
        }
        if responses.len() != n_samples * n_responses {
            return Err(Error::InvalidInput(format!(
                "response buffer has {} entries, expected {}",
                responses.len(),
                n_samples * n_responses
            )));
        }
        if sample_ids.len() != n_samples {
            return Err(Error::InvalidInput(format!(
                "{} sample ids for {} samples",
                sample_ids.len(),
                n_samples
            )));
        }
        if let Some(bad) = measurements.iter().chain(responses.iter()).find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value {bad}")));
        }
        Ok(SampleSet {
            n_samples,
            n_reps,
            n_vars,
            n_responses,
            measurements,
            responses,
            sample_ids,
        })
    }

    #[inline]
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    #[inline]
    pub fn n_reps(&self) -> usize {
        self.n_reps
    }

    #[inline]
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    #[inline]
    pub fn n_responses(&self) -> usize {
        self.n_responses
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    /// Measurement of `sample` at repetition `rep`, variable `var`.
    #[inline]
    pub fn measurement(&self, sample: usize, rep: usize, var: usize) -> f64 {
        self.measurements[(sample * self.n_reps + rep) * self.n_vars + var]
    }

    /// One repetition row (all variables) of a sample.
    #[inline]
    pub fn rep_row(&self, sample: usize, rep: usize) -> &[f64] {
        let start = (sample * self.n_reps + rep) * self.n_vars;
        &self.measurements[start..start + self.n_vars]
    }

    /// Copies the `n_reps` repetition values of one (sample, variable) cell
    /// into `buf`.
    #[inline]
    pub fn fill_reps(&self, sample: usize, var: usize, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.n_reps);
        for (rep, slot) in buf.iter_mut().enumerate() {
            *slot = self.measurement(sample, rep, var);
        }
    }

    /// Response vector of a sample.
    #[inline]
    pub fn response_row(&self, sample: usize) -> &[f64] {
        &self.responses[sample * self.n_responses..(sample + 1) * self.n_responses]
    }

    /// Responses as an `n_samples x n_responses` matrix.
    pub fn response_matrix(&self) -> Matrix {
        Matrix::from_flat(self.n_samples, self.n_responses, self.responses.clone())
            .expect("responses buffer is sized by construction")
    }

    /// Restricts to the given samples, preserving the order of `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<SampleSet> {
        let mut seen = vec![false; self.n_samples];
        for &i in indices {
            if i >= self.n_samples {
                return Err(Error::InvalidInput(format!(
                    "sample index {i} out of range (n_samples = {})",
                    self.n_samples
                )));
            }
            if seen[i] {
                return Err(Error::InvalidInput(format!("duplicate sample index {i}")));
            }
            seen[i] = true;
        }
        if indices.is_empty() {
            return Err(Error::InvalidInput("empty sample subset".into()));
        }
        let block = self.n_reps * self.n_vars;
        let mut measurements = Vec::with_capacity(indices.len() * block);
        let mut responses = Vec::with_capacity(indices.len() * self.n_responses);
        let mut sample_ids = Vec::with_capacity(indices.len());
        for &i in indices {
            measurements.extend_from_slice(&self.measurements[i * block..(i + 1) * block]);
            responses.extend_from_slice(self.response_row(i));
            sample_ids.push(self.sample_ids[i].clone());
        }
        SampleSet::new(
            indices.len(),
            self.n_reps,
            self.n_vars,
            self.n_responses,
            measurements,
            responses,
            sample_ids,
        )
    }
}

/// Disjoint train/validation partition of sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainValidationSplit {
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub seed: u64,
}

/// Seeded uniform split: shuffle the sample indices, send the first
/// `floor(fraction * n)` to training, the rest to validation. Both index
/// lists are returned sorted ascending.
pub fn split_train_validation(
    s: &SampleSet,
    fraction: f64,
    seed: u64,
) -> Result<TrainValidationSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = s.n_samples();
    let n_train = (fraction * n as f64).floor() as usize;
    if n_train < 2 {
        return Err(Error::InvalidInput(format!(
            "training split too small: floor({fraction} * {n}) = {n_train} < 2"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut train_indices = indices[..n_train].to_vec();
    let mut validation_indices = indices[n_train..].to_vec();
    train_indices.sort_unstable();
    validation_indices.sort_unstable();
    Ok(TrainValidationSplit { train_indices, validation_indices, seed })
}

/// Per-sample mean over repetitions: an `n_samples x n_vars` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedMatrix {
    pub values: Matrix,
}

pub fn average_repetitions(s: &SampleSet) -> AveragedMatrix {
    let mut values = Matrix::zeros(s.n_samples(), s.n_vars());
    let inv = 1.0 / s.n_reps() as f64;
    for i in 0..s.n_samples() {
        for r in 0..s.n_reps() {
            let row = s.rep_row(i, r);
            for (v, &x) in row.iter().enumerate() {
                values.set(i, v, values.get(i, v) + x);
            }
        }
        for v in 0..s.n_vars() {
            values.set(i, v, values.get(i, v) * inv);
        }
    }
    AveragedMatrix { values }
}

// ---------------------------------------------------------------------------
// CSV ingestion / emission
// ---------------------------------------------------------------------------

struct PendingSample {
    id: String,
    responses: Vec<f64>,
    /// (rep_id, measurement row), sorted by rep_id before assembly.
    reps: Vec<(i64, Vec<f64>)>,
    first_line: usize,
}

/// Parses the CSV format described in the module docs.
///
/// Dimensions are inferred from the header; repetition rows are ordered by
/// `rep_id` within each sample. Every sample must have the same repetition
/// count (the modal count over samples), identical responses on all of its
/// rows, and finite numeric cells.
pub fn read_samples_csv<R: BufRead>(reader: R) -> Result<SampleSet> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::Csv {
            line: 1,
            message: format!("cannot read header: {e}"),
        })?,
        None => {
            return Err(Error::Csv { line: 1, message: "empty input".into() });
        }
    };
    let cols: Vec<&str> = header.trim_end_matches(['\r', '\n']).split(',').collect();
    if cols.len() < 4 || cols[0] != "sample_id" || cols[1] != "rep_id" {
        return Err(Error::Csv {
            line: 1,
            message: "header must start with sample_id,rep_id and carry y*/x* columns".into(),
        });
    }
    let n_responses = cols[2..].iter().take_while(|c| c.starts_with('y')).count();
    let n_vars = cols[2 + n_responses..].iter().take_while(|c| c.starts_with('x')).count();
    if n_responses == 0 || n_vars == 0 || 2 + n_responses + n_vars != cols.len() {
        return Err(Error::Csv {
            line: 1,
            message: format!(
                "header must be sample_id,rep_id,y1..yR,x1..xV; found {} y-columns and {} x-columns in {} fields",
                n_responses,
                n_vars,
                cols.len()
            ),
        });
    }
    let expected_fields = cols.len();

    let mut order: Vec<String> = Vec::new();
    let mut by_id: std::collections::HashMap<String, PendingSample> = std::collections::HashMap::new();

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
        if fields.len() != expected_fields {
            return Err(Error::Csv {
                line: line_no,
                message: format!("row has {} fields, expected {expected_fields}", fields.len()),
            });
        }
        let sample_id = fields[0].to_string();
        let rep_id: i64 = fields[1].parse().map_err(|_| Error::Csv {
            line: line_no,
            message: format!("rep_id '{}' is not an integer", fields[1]),
        })?;
        let mut numbers = Vec::with_capacity(expected_fields - 2);
        for (k, raw) in fields[2..].iter().enumerate() {
            let value: f64 = raw.parse().map_err(|_| Error::Csv {
                line: line_no,
                message: format!("cannot parse '{raw}' as a number (column {})", k + 3),
            })?;
            if !value.is_finite() {
                return Err(Error::Csv {
                    line: line_no,
                    message: format!("non-finite value at column {}", k + 3),
                });
            }
            numbers.push(value);
        }
        let responses = numbers[..n_responses].to_vec();
        let row = numbers[n_responses..].to_vec();
        let entry = by_id.entry(sample_id.clone()).or_insert_with(|| {
            order.push(sample_id.clone());
            PendingSample { id: sample_id, responses: responses.clone(), reps: Vec::new(), first_line: line_no }
        });
        if entry.responses != responses {
            return Err(Error::Csv {
                line: line_no,
                message: format!(
                    "sample \"{}\" repeats with different responses (first seen at line {})",
                    entry.id, entry.first_line
                ),
            });
        }
        if entry.reps.iter().any(|(r, _)| *r == rep_id) {
            return Err(Error::Csv {
                line: line_no,
                message: format!("duplicate rep_id {rep_id} for sample \"{}\"", entry.id),
            });
        }
        entry.reps.push((rep_id, row));
    }

    if order.is_empty() {
        return Err(Error::Csv { line: 1, message: "empty input: no data rows".into() });
    }

    // The repetition count must be uniform; report deviations from the modal count.
    let mut count_freq: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for id in &order {
        *count_freq.entry(by_id[id].reps.len()).or_insert(0) += 1;
    }
    let modal = count_freq
        .iter()
        .max_by_key(|(count, freq)| (**freq, std::cmp::Reverse(**count)))
        .map(|(count, _)| *count)
        .unwrap();
    for id in &order {
        let got = by_id[id].reps.len();
        if got != modal {
            return Err(Error::InvalidInput(format!(
                "inconsistent repetition count: sample \"{id}\" has {got} repetitions, expected {modal}"
            )));
        }
    }

    let n_samples = order.len();
    let mut measurements = Vec::with_capacity(n_samples * modal * n_vars);
    let mut responses = Vec::with_capacity(n_samples * n_responses);
    let mut sample_ids = Vec::with_capacity(n_samples);
    for id in &order {
        let mut pending = by_id.remove(id).unwrap();
        pending.reps.sort_by_key(|(rep_id, _)| *rep_id);
        for (_, row) in &pending.reps {
            measurements.extend_from_slice(row);
        }
        responses.extend_from_slice(&pending.responses);
        sample_ids.push(pending.id);
    }
    SampleSet::new(n_samples, modal, n_vars, n_responses, measurements, responses, sample_ids)
}

/// Writes the CSV format read by [`read_samples_csv`]. Floats are printed
/// with the shortest representation that round-trips, so
/// `read(write(s)) == s` exactly.
pub fn write_samples_csv<W: Write>(s: &SampleSet, mut writer: W) -> std::io::Result<()> {
    write!(writer, "sample_id,rep_id")?;
    for r in 1..=s.n_responses() {
        write!(writer, ",y{r}")?;
    }
    for v in 1..=s.n_vars() {
        write!(writer, ",x{v}")?;
    }
    writeln!(writer)?;
    for i in 0..s.n_samples() {
        for rep in 0..s.n_reps() {
            write!(writer, "{},{rep}", s.sample_ids()[i])?;
            for &y in s.response_row(i) {
                write!(writer, ",{y}")?;
            }
            for &x in s.rep_row(i, rep) {
                write!(writer, ",{x}")?;
            }
            writeln!(writer)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_set() -> SampleSet {
        // 2 samples, 2 reps, 3 vars, 2 responses.
        SampleSet::new(
            2,
            2,
            3,
            2,
            vec![
                1.0, 2.0, 3.0, //
                1.5, 2.5, 3.5, //
                10.0, 20.0, 30.0, //
                10.5, 20.5, 30.5,
            ],
            vec![0.5, 1.0, 1.5, 0.5],
            vec!["S1".into(), "S2".into()],
        )
        .unwrap()
    }

    #[test]
    fn ingest_infers_dimensions() {
        let csv = "\
sample_id,rep_id,y1,y2,x1,x2,x3,x4
a,0,0.5,1.0,1,2,3,4
a,1,0.5,1.0,1,2,3,4
a,2,0.5,1.0,1,2,3,4
a,3,0.5,1.0,1,2,3,4
a,4,0.5,1.0,1,2,3,4
b,0,1.5,0.5,5,6,7,8
b,1,1.5,0.5,5,6,7,8
b,2,1.5,0.5,5,6,7,8
b,3,1.5,0.5,5,6,7,8
b,4,1.5,0.5,5,6,7,8
";
        let s = read_samples_csv(csv.as_bytes()).unwrap();
        assert_eq!(
            (s.n_samples(), s.n_reps(), s.n_vars(), s.n_responses()),
            (2, 5, 4, 2)
        );
        assert_eq!(s.sample_ids(), &["a".to_string(), "b".to_string()]);
        assert_eq!(s.measurement(1, 4, 3), 8.0);
    }

    #[test]
    fn ingest_rejects_inconsistent_rep_count() {
        let csv = "\
sample_id,rep_id,y1,x1
a,0,1,1
a,1,1,1
a,2,1,1
a,3,1,1
b,0,2,2
b,1,2,2
b,2,2,2
b,3,2,2
b,4,2,2
";
        let err = read_samples_csv(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("inconsistent repetition count"), "{err}");
    }

    #[test]
    fn ingest_rejects_nan_with_location() {
        let csv = "sample_id,rep_id,y1,x1\na,0,1.0,NaN\n";
        let err = read_samples_csv(csv.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("non-finite"), "{msg}");
    }

    #[test]
    fn ingest_rejects_ragged_and_non_numeric_and_empty() {
        let ragged = "sample_id,rep_id,y1,x1\na,0,1.0\n";
        assert!(read_samples_csv(ragged.as_bytes()).unwrap_err().to_string().contains("fields"));
        let bad = "sample_id,rep_id,y1,x1\na,0,1.0,abc\n";
        assert!(read_samples_csv(bad.as_bytes()).unwrap_err().to_string().contains("'abc'"));
        let empty = "sample_id,rep_id,y1,x1\n";
        assert!(read_samples_csv(empty.as_bytes()).unwrap_err().to_string().contains("no data rows"));
        assert!(read_samples_csv("".as_bytes()).is_err());
    }

    #[test]
    fn ingest_orders_reps_by_rep_id() {
        let csv = "\
sample_id,rep_id,y1,x1
a,1,1.0,20
a,0,1.0,10
";
        let s = read_samples_csv(csv.as_bytes()).unwrap();
        assert_eq!(s.measurement(0, 0, 0), 10.0);
        assert_eq!(s.measurement(0, 1, 0), 20.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = tiny_set();
        let mut buf = Vec::new();
        write_samples_csv(&s, &mut buf).unwrap();
        let back = read_samples_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_round_trip_survives_awkward_floats() {
        let s = SampleSet::new(
            1,
            2,
            2,
            1,
            vec![0.1 + 0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300],
            vec![-0.000123456789],
            vec!["s".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&s, &mut buf).unwrap();
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn split_sizes_match_floor_rule() {
        let s = synth_sized(250);
        let split = split_train_validation(&s, 0.75, 7).unwrap();
        assert_eq!(split.train_indices.len(), 187);
        assert_eq!(split.validation_indices.len(), 63);
    }

    #[test]
    fn split_partitions_all_indices() {
        let s = synth_sized(4);
        for seed in 0..20 {
            let split = split_train_validation(&s, 0.5, seed).unwrap();
            assert_eq!(split.train_indices.len(), 2);
            assert_eq!(split.validation_indices.len(), 2);
            let mut all: Vec<usize> = split
                .train_indices
                .iter()
                .chain(&split.validation_indices)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let s = synth_sized(50);
        let a = split_train_validation(&s, 0.75, 42).unwrap();
        let b = split_train_validation(&s, 0.75, 42).unwrap();
        assert_eq!(a, b);
        let c = split_train_validation(&s, 0.75, 43).unwrap();
        assert_ne!(a.train_indices, c.train_indices);
    }

    #[test]
    fn split_rejects_bad_fraction_and_small_n() {
        let s = synth_sized(4);
        assert!(split_train_validation(&s, 0.0, 1).is_err());
        assert!(split_train_validation(&s, 1.0, 1).is_err());
        assert!(split_train_validation(&s, 0.25, 1).is_err()); // floor(1) < 2
    }

    #[test]
    fn averaging_matches_arithmetic_mean() {
        let s = SampleSet::new(
            1,
            5,
            2,
            1,
            vec![
                1.0, 0.1, //
                2.0, 0.2, //
                3.0, 0.3, //
                4.0, 0.4, //
                5.0, 0.5,
            ],
            vec![1.0],
            vec!["s".into()],
        )
        .unwrap();
        let avg = average_repetitions(&s);
        assert!((avg.values.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((avg.values.get(0, 1) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn averaging_is_identity_on_constant_reps() {
        let s = SampleSet::new(
            1,
            3,
            1,
            1,
            vec![7.25, 7.25, 7.25],
            vec![1.0],
            vec!["s".into()],
        )
        .unwrap();
        assert_eq!(average_repetitions(&s).values.get(0, 0), 7.25);
    }

    #[test]
    fn averaging_is_linear() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = (3usize, 4usize, 6usize);
        let len = dims.0 * dims.1 * dims.2;
        let a: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ids = vec!["a".into(), "b".into(), "c".into()];
        let resp = vec![0.0; 3];
        let mk = |m: Vec<f64>| SampleSet::new(3, 4, 6, 1, m, resp.clone(), ids.clone()).unwrap();
        let avg_a = average_repetitions(&mk(a));
        let avg_b = average_repetitions(&mk(b));
        let avg_sum = average_repetitions(&mk(sum));
        for i in 0..3 {
            for v in 0..6 {
                let lhs = avg_sum.values.get(i, v);
                let rhs = avg_a.values.get(i, v) + avg_b.values.get(i, v);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subset_preserves_data_and_rejects_bad_indices() {
        let s = tiny_set();
        let one = s.subset(&[0]).unwrap();
        assert_eq!(one.n_samples(), 1);
        assert_eq!(one.rep_row(0, 1), s.rep_row(0, 1));
        let all = s.subset(&[0, 1]).unwrap();
        assert_eq!(all, s);
        assert!(s.subset(&[5]).is_err());
        assert!(s.subset(&[0, 0]).is_err());
        assert!(s.subset(&[]).is_err());
    }

    fn synth_sized(n: usize) -> SampleSet {
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        SampleSet::new(n, 1, 1, 1, vec![0.0; n], vec![0.0; n], ids).unwrap()
    }
}
