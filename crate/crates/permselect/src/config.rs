//! Pipeline configuration: defaults, flat `key = value` config files, and
//! flag overrides.
//!
//! Config files are UTF-8 text, one `key = value` pair per line, `#` starts
//! a comment. Later assignments override earlier ones, and command-line
//! flags are applied after the file.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::multiplicity::FamilyMode;
use crate::permtest::PermutationMode;
use crate::synth::{GeneratorConfig, Signatures};

/// Where the pipeline gets its data.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Generate(GeneratorConfig),
    Csv(PathBuf),
}

/// Which significance-count cutoffs the selection stage evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum CutoffSpec {
    /// Cutoffs at 50/75/90% of the maximum significance count, plus the
    /// cutoff matched to the Lasso selection size.
    Auto,
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: DataSource,
    pub split_fraction: f64,
    pub split_seed: u64,
    pub perm_mode: PermutationMode,
    pub perm_seed: u64,
    /// Rayon worker count for the permutation stage; 0 = library default.
    pub threads: usize,
    pub alpha: f64,
    pub family: FamilyMode,
    pub cutoffs: CutoffSpec,
    pub lasso_folds: usize,
    pub lasso_seed: u64,
    pub lasso_grid_size: usize,
    pub lasso_grid_decades: f64,
    pub ridge_folds: usize,
    pub ridge_seed: u64,
    pub ridge_grid_size: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source: DataSource::Generate(GeneratorConfig::default()),
            split_fraction: 0.75,
            split_seed: 2,
            perm_mode: PermutationMode::Exact,
            perm_seed: 3,
            threads: 0,
            alpha: 0.05,
            family: FamilyMode::PerVariable,
            cutoffs: CutoffSpec::Auto,
            lasso_folds: 5,
            lasso_seed: 4,
            lasso_grid_size: 100,
            lasso_grid_decades: 4.0,
            ridge_folds: 5,
            ridge_seed: 5,
            ridge_grid_size: 40,
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Applies one `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "source" => match value {
                "generate" => {
                    if !matches!(self.source, DataSource::Generate(_)) {
                        self.source = DataSource::Generate(GeneratorConfig::default());
                    }
                }
                "csv" => {
                    if !matches!(self.source, DataSource::Csv(_)) {
                        self.source = DataSource::Csv(PathBuf::new());
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "source must be 'generate' or 'csv', got '{other}'"
                    )))
                }
            },
            "data_path" => self.source = DataSource::Csv(PathBuf::from(value)),
            "n_samples" => self.generator_mut(key)?.n_samples = parse(key, value)?,
            "n_components" => self.generator_mut(key)?.n_components = parse(key, value)?,
            "n_levels" => self.generator_mut(key)?.n_levels = parse(key, value)?,
            "n_reps" => self.generator_mut(key)?.n_reps = parse(key, value)?,
            "n_vars" => self.generator_mut(key)?.n_vars = parse(key, value)?,
            "noise_sigma" => self.generator_mut(key)?.noise_sigma = parse(key, value)?,
            "generator_seed" => self.generator_mut(key)?.seed = parse(key, value)?,
            "split_fraction" => self.split_fraction = parse(key, value)?,
            "split_seed" => self.split_seed = parse(key, value)?,
            "perm_mode" => match value {
                "exact" => self.perm_mode = PermutationMode::Exact,
                "mc" | "monte_carlo" => {
                    if let PermutationMode::Exact = self.perm_mode {
                        self.perm_mode = PermutationMode::MonteCarlo { n_perm: 9999 };
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "perm_mode must be 'exact' or 'mc', got '{other}'"
                    )))
                }
            },
            "mc_permutations" => {
                let n_perm = parse(key, value)?;
                self.perm_mode = PermutationMode::MonteCarlo { n_perm };
            }
            "perm_seed" => self.perm_seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "fdr_family" => match value {
                "per_variable" => self.family = FamilyMode::PerVariable,
                "global" => self.family = FamilyMode::Global,
                other => {
                    return Err(Error::Config(format!(
                        "fdr_family must be 'per_variable' or 'global', got '{other}'"
                    )))
                }
            },
            "cutoffs" => {
                if value == "auto" {
                    self.cutoffs = CutoffSpec::Auto;
                } else {
                    let cutoffs = value
                        .split(',')
                        .map(|c| {
                            c.trim().parse::<usize>().map_err(|_| {
                                Error::Config(format!("bad cutoff '{}' in '{value}'", c.trim()))
                            })
                        })
                        .collect::<Result<Vec<usize>>>()?;
                    if cutoffs.is_empty() {
                        return Err(Error::Config("empty cutoff list".into()));
                    }
                    self.cutoffs = CutoffSpec::Explicit(cutoffs);
                }
            }
            "lasso_folds" => self.lasso_folds = parse(key, value)?,
            "lasso_seed" => self.lasso_seed = parse(key, value)?,
            "lasso_grid_size" => self.lasso_grid_size = parse(key, value)?,
            "lasso_grid_decades" => self.lasso_grid_decades = parse(key, value)?,
            "ridge_folds" => self.ridge_folds = parse(key, value)?,
            "ridge_seed" => self.ridge_seed = parse(key, value)?,
            "ridge_grid_size" => self.ridge_grid_size = parse(key, value)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies the whole text of a config file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("expected 'key = value', got '{raw}'")));
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Master-seed convenience: stage seeds become consecutive values so a
    /// single flag re-seeds the whole pipeline.
    pub fn apply_master_seed(&mut self, seed: u64) {
        if let DataSource::Generate(g) = &mut self.source {
            g.seed = seed;
        }
        self.split_seed = seed.wrapping_add(1);
        self.perm_seed = seed.wrapping_add(2);
        self.lasso_seed = seed.wrapping_add(3);
        self.ridge_seed = seed.wrapping_add(4);
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split_fraction must be in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if let DataSource::Csv(path) = &self.source {
            if path.as_os_str().is_empty() {
                return Err(Error::Config("source=csv needs data_path".into()));
            }
        }
        Ok(())
    }

    fn generator_mut(&mut self, key: &str) -> Result<&mut GeneratorConfig> {
        match &mut self.source {
            DataSource::Generate(g) => Ok(g),
            DataSource::Csv(_) => Err(Error::Config(format!(
                "'{key}' only applies to source=generate"
            ))),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

/// Keeps the generator's signature field out of the config surface; explicit
/// signatures are a library-level feature.
pub fn generator_with_defaults(cfg: &GeneratorConfig) -> GeneratorConfig {
    GeneratorConfig { signatures: Signatures::Auto, ..cfg.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_then_file_then_flags() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(
            "# benchmark tweaks\n\
             noise_sigma = 0.01\n\
             alpha = 0.1  # looser\n\
             cutoffs = 5, 10, 20\n",
        )
        .unwrap();
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.cutoffs, CutoffSpec::Explicit(vec![5, 10, 20]));
        // A later flag overrides the file.
        cfg.apply("alpha", "0.05").unwrap();
        assert_eq!(cfg.alpha, 0.05);
        match &cfg.source {
            DataSource::Generate(g) => assert_eq!(g.noise_sigma, 0.01),
            _ => panic!("expected generate source"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply("no_such_key", "1").is_err());
        assert!(cfg.apply("alpha", "lots").is_err());
        assert!(cfg.apply_text("alpha 0.05").is_err());
        assert!(cfg.apply("cutoffs", "1,x").is_err());
    }

    #[test]
    fn csv_source_switches_and_validates() {
        let mut cfg = PipelineConfig::default();
        cfg.apply("data_path", "data/run.csv").unwrap();
        assert_eq!(cfg.source, DataSource::Csv(PathBuf::from("data/run.csv")));
        assert!(cfg.apply("n_vars", "10").is_err());
        let mut empty = PipelineConfig::default();
        empty.apply("source", "csv").unwrap();
        assert!(empty.validate().is_err());
    }

    #[test]
    fn master_seed_reseeds_stages() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_master_seed(100);
        assert_eq!(cfg.split_seed, 101);
        assert_eq!(cfg.perm_seed, 102);
        match &cfg.source {
            DataSource::Generate(g) => assert_eq!(g.seed, 100),
            _ => unreachable!(),
        }
    }

    #[test]
    fn mc_mode_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.apply("perm_mode", "mc").unwrap();
        assert_eq!(cfg.perm_mode, PermutationMode::MonteCarlo { n_perm: 9999 });
        cfg.apply("mc_permutations", "500").unwrap();
        assert_eq!(cfg.perm_mode, PermutationMode::MonteCarlo { n_perm: 500 });
        cfg.apply("perm_mode", "exact").unwrap();
        assert_eq!(cfg.perm_mode, PermutationMode::Exact);
    }
}
