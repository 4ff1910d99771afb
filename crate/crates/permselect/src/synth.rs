//! Synthetic design-of-experiments mixture spectra with known informative
//! variables.
//!
//! Samples are mixtures of `n_components` analytes, each at one of
//! `n_levels` concentration levels. Every analyte contributes a fixed
//! Gaussian-peak signature; a measured repetition is the concentration-
//! weighted sum of the signatures plus iid Gaussian noise. Because the
//! signal is exactly linear in the concentrations and adjacent variables
//! share peak mass, the generated data has the two properties the selection
//! benchmark needs: a known ground-truth set of informative variables, and
//! correlation between neighboring variables.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::SampleSet;
use crate::error::{Error, Result};

/// Relative threshold under which a signature tail no longer counts as
/// informative for ground-truth purposes.
pub const GROUND_TRUTH_REL_THRESHOLD: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Mixture design
// ---------------------------------------------------------------------------

/// Concentration levels assigned to each sample: a `[sample][component]`
/// table where every entry is one of the component's discrete levels and no
/// two rows are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDesign {
    pub n_components: usize,
    /// Ordered concentration levels, per component.
    pub levels: Vec<Vec<f64>>,
    pub rows: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Equispaced positive default levels: 0.5, 1.0, 1.5, ...
pub fn default_levels(n_levels: usize) -> Vec<f64> {
    (1..=n_levels).map(|i| 0.5 * i as f64).collect()
}

/// Builds a design of `n_samples` distinct level combinations.
///
/// When `n_samples` equals the full factorial size the rows are all
/// combinations in lexicographic order (first component most significant);
/// otherwise they are a seeded uniform sample of distinct combinations,
/// kept in lexicographic order.
pub fn build_design(
    n_components: usize,
    n_levels: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MixtureDesign> {
    if n_components == 0 || n_levels == 0 || n_samples == 0 {
        return Err(Error::InvalidInput(
            "design needs at least one component, level, and sample".into(),
        ));
    }
    let total = (n_levels as u128).checked_pow(n_components as u32).ok_or_else(|| {
        Error::InvalidInput("design space size overflows".into())
    })?;
    if total > usize::MAX as u128 {
        return Err(Error::InvalidInput("design space size overflows".into()));
    }
    let total = total as usize;
    if n_samples > total {
        return Err(Error::InvalidInput(format!(
            "design space exhausted ({total} < {n_samples})"
        )));
    }
    let levels = default_levels(n_levels);
    let codes: Vec<usize> = if n_samples == total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, total, n_samples).into_vec();
        picked.sort_unstable();
        picked
    };
    let rows = codes
        .iter()
        .map(|&code| {
            let mut row = vec![0.0; n_components];
            let mut rest = code;
            for k in (0..n_components).rev() {
                row[k] = levels[rest % n_levels];
                rest /= n_levels;
            }
            row
        })
        .collect();
    Ok(MixtureDesign {
        n_components,
        levels: vec![levels; n_components],
        rows,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Component signatures
// ---------------------------------------------------------------------------

/// One Gaussian peak of a component signature.
#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// Variable index of the maximum.
    pub center: f64,
    /// Gaussian sigma, in variable-index units.
    pub width: f64,
    pub height: f64,
}

/// Spectral signature of one analyte: a sum of Gaussian peaks over the
/// variable axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSignature {
    pub peaks: Vec<Peak>,
    pub n_vars: usize,
}

impl ComponentSignature {
    pub fn validate(&self) -> Result<()> {
        if self.peaks.is_empty() {
            return Err(Error::InvalidInput("signature needs at least one peak".into()));
        }
        for p in &self.peaks {
            if !(p.center >= 0.0 && p.center < self.n_vars as f64) {
                return Err(Error::InvalidInput(format!(
                    "peak center {} outside [0, {})",
                    p.center, self.n_vars
                )));
            }
            if !(p.width > 0.0) || !(p.height > 0.0) {
                return Err(Error::InvalidInput(
                    "peak width and height must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Evaluates the signature on the variable grid:
    /// `value(v) = sum over peaks of height * exp(-(v - center)^2 / (2 width^2))`.
    pub fn vector(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars];
        for p in &self.peaks {
            for (v, slot) in out.iter_mut().enumerate() {
                let d = v as f64 - p.center;
                *slot += p.height * (-d * d / (2.0 * p.width * p.width)).exp();
            }
        }
        out
    }
}

/// Signature source for the generator.
#[derive(Debug, Clone, PartialEq)]
pub enum Signatures {
    /// Banded layout described on [`auto_signatures`].
    Auto,
    Explicit(Vec<ComponentSignature>),
}

/// Generator configuration. The defaults produce the benchmark shape:
/// 250 samples, 6 components at 3 levels, 5 repetitions, 130 variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub n_components: usize,
    pub n_levels: usize,
    pub n_reps: usize,
    pub n_vars: usize,
    pub noise_sigma: f64,
    pub signatures: Signatures,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_samples: 250,
            n_components: 6,
            n_levels: 3,
            n_reps: 5,
            n_vars: 130,
            noise_sigma: 2e-5,
            signatures: Signatures::Auto,
            seed: 1,
        }
    }
}

/// Automatic banded signature layout.
///
/// Picks the smallest number `L` of band locations with `C(L, 2) >=
/// n_components`, spreads the locations evenly over the variable axis, and
/// gives component `k` one peak at each location of the k-th location pair
/// (lexicographic). Components sharing a location are offset by a fraction
/// of the band so they stay distinguishable. Peak full width at half
/// maximum is about 3 variables, so each band of informative variables
/// stays narrow and well separated from its neighbors, leaving most of the
/// axis uninformative.
pub fn auto_signatures(n_components: usize, n_vars: usize) -> Result<Vec<ComponentSignature>> {
    if n_components == 0 || n_vars == 0 {
        return Err(Error::InvalidInput("need components and variables".into()));
    }
    let mut n_locations = 2usize;
    while n_locations * (n_locations - 1) / 2 < n_components {
        n_locations += 1;
    }
    let pairs: Vec<(usize, usize)> = (0..n_locations)
        .flat_map(|a| ((a + 1)..n_locations).map(move |b| (a, b)))
        .collect();
    let centers: Vec<f64> = (0..n_locations)
        .map(|l| n_vars as f64 * (2 * l + 1) as f64 / (2 * n_locations) as f64)
        .collect();
    // Hosts per location, in component order, to assign within-band offsets.
    let mut hosts: Vec<Vec<usize>> = vec![Vec::new(); n_locations];
    for k in 0..n_components {
        let (a, b) = pairs[k];
        hosts[a].push(k);
        hosts[b].push(k);
    }
    const WIDTH: f64 = 1.4; // sigma; FWHM ~ 3.3 variables
    const OFFSET_STEP: f64 = 1.6;
    // A taller middle peak raises the band maximum, which pulls the relative
    // ground-truth boundary inward to where at least two components are
    // still measurable. Band edges then stay informative for the pairwise
    // tests instead of degenerating into one component's lone tail.
    const CENTER_HEIGHT: f64 = 2.2;
    let mut sigs: Vec<ComponentSignature> = (0..n_components)
        .map(|_| ComponentSignature { peaks: Vec::new(), n_vars })
        .collect();
    for (l, host_list) in hosts.iter().enumerate() {
        let m = host_list.len();
        for (slot, &k) in host_list.iter().enumerate() {
            let offset = (slot as f64 - (m as f64 - 1.0) / 2.0) * OFFSET_STEP;
            let center = (centers[l] + offset).clamp(0.0, n_vars as f64 - 1.0);
            let height = if m % 2 == 1 && slot == (m - 1) / 2 { CENTER_HEIGHT } else { 1.0 };
            sigs[k].peaks.push(Peak { center, width: WIDTH, height });
        }
    }
    for s in &sigs {
        s.validate()?;
    }
    Ok(sigs)
}

/// Indices whose combined signature mass exceeds
/// [`GROUND_TRUTH_REL_THRESHOLD`] times the largest combined value.
pub fn ground_truth(signature_vectors: &[Vec<f64>], n_vars: usize) -> Vec<usize> {
    let mut total = vec![0.0; n_vars];
    for vec in signature_vectors {
        for (slot, &x) in total.iter_mut().zip(vec) {
            *slot += x;
        }
    }
    let max = total.iter().cloned().fold(0.0, f64::max);
    let threshold = GROUND_TRUTH_REL_THRESHOLD * max;
    (0..n_vars).filter(|&v| total[v] > threshold).collect()
}

/// One measured repetition: concentration-weighted signature sum plus iid
/// Gaussian noise.
fn synthesize_rep(
    concentrations: &[f64],
    signature_vectors: &[Vec<f64>],
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n_vars = signature_vectors.first().map_or(0, |s| s.len());
    let mut rep = vec![0.0; n_vars];
    for (conc, sig) in concentrations.iter().zip(signature_vectors) {
        for (slot, &x) in rep.iter_mut().zip(sig) {
            *slot += conc * x;
        }
    }
    if noise_sigma > 0.0 {
        for slot in rep.iter_mut() {
            *slot += noise_sigma * standard_normal(rng);
        }
    }
    rep
}

/// All repetitions of one sample, consuming `rng` in repetition order.
/// Deterministic given the stream state.
pub fn synthesize_sample(
    concentrations: &[f64],
    signatures: &[ComponentSignature],
    n_reps: usize,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if concentrations.len() != signatures.len() {
        return Err(Error::InvalidInput(format!(
            "{} concentrations for {} signatures",
            concentrations.len(),
            signatures.len()
        )));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise_sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    for s in signatures {
        s.validate()?;
    }
    let vectors: Vec<Vec<f64>> = signatures.iter().map(|s| s.vector()).collect();
    Ok((0..n_reps)
        .map(|_| synthesize_rep(concentrations, &vectors, noise_sigma, rng))
        .collect())
}

/// Box-Muller transform on the ChaCha stream. One normal per draw keeps the
/// stream layout simple and reproducible.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Per-sample noise stream, independent of the design stream.
fn sample_stream(seed: u64, sample: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(sample as u64).to_le_bytes());
    key[16..24].copy_from_slice(&0x73796e74685f7331u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Generates the full dataset plus the ground-truth informative set.
///
/// The response matrix is the design's concentration table, so
/// `n_responses == n_components`. Sample `i` draws its noise from a stream
/// keyed by `(seed, i)`, which makes the output independent of generation
/// order.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<(SampleSet, Vec<usize>)> {
    let design = build_design(cfg.n_components, cfg.n_levels, cfg.n_samples, cfg.seed)?;
    let signatures = match &cfg.signatures {
        Signatures::Auto => auto_signatures(cfg.n_components, cfg.n_vars)?,
        Signatures::Explicit(sigs) => {
            if sigs.len() != cfg.n_components {
                return Err(Error::InvalidInput(format!(
                    "{} signatures for {} components",
                    sigs.len(),
                    cfg.n_components
                )));
            }
            for s in sigs {
                if s.n_vars != cfg.n_vars {
                    return Err(Error::InvalidInput(format!(
                        "signature grid has {} variables, config says {}",
                        s.n_vars, cfg.n_vars
                    )));
                }
            }
            sigs.clone()
        }
    };
    let vectors: Vec<Vec<f64>> = signatures.iter().map(|s| s.vector()).collect();
    let truth = ground_truth(&vectors, cfg.n_vars);

    if !(cfg.noise_sigma >= 0.0) || !cfg.noise_sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise_sigma must be finite and >= 0, got {}",
            cfg.noise_sigma
        )));
    }
    let mut measurements = Vec::with_capacity(cfg.n_samples * cfg.n_reps * cfg.n_vars);
    let mut responses = Vec::with_capacity(cfg.n_samples * cfg.n_components);
    let mut ids = Vec::with_capacity(cfg.n_samples);
    for (i, row) in design.rows.iter().enumerate() {
        let mut rng = sample_stream(cfg.seed, i);
        for _ in 0..cfg.n_reps {
            measurements.extend(synthesize_rep(row, &vectors, cfg.noise_sigma, &mut rng));
        }
        responses.extend_from_slice(row);
        ids.push(format!("s{i}"));
    }
    let set = SampleSet::new(
        cfg.n_samples,
        cfg.n_reps,
        cfg.n_vars,
        cfg.n_components,
        measurements,
        responses,
        ids,
    )?;
    Ok((set, truth))
}

/// Writes ground truth as a one-column CSV of variable indices.
pub fn write_ground_truth_csv<W: std::io::Write>(
    truth: &[usize],
    mut writer: W,
) -> std::io::Result<()> {
    writeln!(writer, "variable")?;
    for v in truth {
        writeln!(writer, "{v}")?;
    }
    Ok(())
}
