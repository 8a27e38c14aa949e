//! Declarative run manifests.
//!
//! ```toml
//! output_dir = "results"
//! seeds = 10                     # or an explicit list: [0, 1, 7]
//!
//! [[benchmarks]]
//! path = "data/xgboost_higgs.csv"
//!
//! [[benchmarks]]
//! synthetic = "branin_discretized"
//! noise_seed = 3
//!
//! [[algorithms]]
//! name = "qgbm_ts"
//! surrogate = { architecture = "qgbm" }
//! acquisition = { kind = "ts" }
//! study = { budget_iterations = 100 }
//!
//! [[algorithms]]
//! name = "random"
//! random_search = true
//!
//! [calibration]
//! surrogate = { architecture = "qgbm" }
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use cqhpo_core::{AcquisitionSpec, StudyConfig, SurrogateSpec};
use cqhpo_harness::tabular::{load_tabular, BenchError};
use cqhpo_harness::{SyntheticKind, SyntheticSpec, TabularBenchmark};
use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("manifest field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("manifest field `{field}`: {source}")]
    Benchmark { field: String, source: BenchError },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

impl<'de> Deserialize<'de> for Seeds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct SeedsVisitor;

        impl<'de> Visitor<'de> for SeedsVisitor {
            type Value = Seeds;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a seed count or a list of seeds")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Seeds, E> {
                let n = u64::try_from(v).map_err(|_| E::custom("seed count must be nonnegative"))?;
                Ok(Seeds((0..n).collect()))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Seeds, E> {
                Ok(Seeds((0..v).collect()))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Seeds, A::Error> {
                let mut out = Vec::new();
                while let Some(s) = seq.next_element::<u64>()? {
                    out.push(s);
                }
                Ok(Seeds(out))
            }
        }

        d.deserialize_any(SeedsVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkEntry {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticKind>,
    #[serde(default)]
    pub noise_seed: u64,
    pub resolution: Option<usize>,
    /// Overrides the dataset name (file stem or synthetic kind).
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub name: String,
    #[serde(default)]
    pub random_search: bool,
    #[serde(default = "SurrogateSpec::qgbm")]
    pub surrogate: SurrogateSpec,
    #[serde(default)]
    pub acquisition: AcquisitionSpec,
    /// Study settings; the seed always comes from `seeds`.
    #[serde(default)]
    pub study: StudyConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationEntry {
    #[serde(default = "SurrogateSpec::qgbm")]
    pub surrogate: SurrogateSpec,
    #[serde(default)]
    pub study: StudyConfig,
}

impl Default for CalibrationEntry {
    fn default() -> Self {
        Self { surrogate: SurrogateSpec::qgbm(), study: StudyConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub output_dir: PathBuf,
    pub seeds: Seeds,
    pub benchmarks: Vec<BenchmarkEntry>,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default)]
    pub calibration: CalibrationEntry,
}

/// A benchmark ready to be optimized, with its dataset name.
#[derive(Debug, Clone)]
pub struct LoadedBenchmark {
    pub name: String,
    pub bench: TabularBenchmark,
}

impl RunManifest {
    /// Reads and validates a manifest. Relative paths inside it are
    /// resolved against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
        let mut m: RunManifest = toml::from_str(&text).map_err(|e| ManifestError::Parse { path: path.into(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if m.output_dir.is_relative() {
            m.output_dir = base.join(&m.output_dir);
        }
        for b in &mut m.benchmarks {
            if let Some(p) = &mut b.path {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.seeds.0.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.0.iter().find(|s| !seen.insert(**s)) {
            return Err(invalid("seeds", format!("duplicate seed {dup}")));
        }
        if self.benchmarks.is_empty() {
            return Err(invalid("benchmarks", "at least one benchmark is required"));
        }
        for (i, b) in self.benchmarks.iter().enumerate() {
            if b.path.is_some() == b.synthetic.is_some() {
                return Err(invalid(format!("benchmarks[{i}]"), "give exactly one of `path` or `synthetic`"));
            }
        }
        let mut names = HashSet::new();
        for (i, a) in self.algorithms.iter().enumerate() {
            let field = |f: &str| format!("algorithms[{i}].{f}");
            if !valid_name(&a.name) {
                return Err(invalid(field("name"), format!("`{}` must be nonempty and use only letters, digits, `_`, `-`, `.`, `+`", a.name)));
            }
            if !names.insert(a.name.as_str()) {
                return Err(invalid(field("name"), format!("duplicate algorithm `{}`", a.name)));
            }
            a.study.validate().map_err(|e| invalid(field("study"), e.to_string()))?;
            if a.study.seed != 0 {
                return Err(invalid(field("study.seed"), "seeds come from the top-level `seeds`"));
            }
            if !a.random_search {
                a.surrogate.validate().map_err(|e| invalid(field("surrogate"), e.to_string()))?;
                a.acquisition.validate().map_err(|e| invalid(field("acquisition"), e.to_string()))?;
            }
        }
        self.calibration.study.validate().map_err(|e| invalid("calibration.study", e.to_string()))?;
        self.calibration.surrogate.validate().map_err(|e| invalid("calibration.surrogate", e.to_string()))?;
        Ok(())
    }

    /// Requires a nonempty algorithm list, as grid runs do.
    pub fn require_algorithms(&self) -> Result<(), ManifestError> {
        if self.algorithms.is_empty() {
            return Err(invalid("algorithms", "at least one algorithm is required"));
        }
        Ok(())
    }

    /// Loads or materializes every benchmark; dataset names must be unique.
    pub fn load_benchmarks(&self) -> Result<Vec<LoadedBenchmark>, ManifestError> {
        let mut out: Vec<LoadedBenchmark> = Vec::with_capacity(self.benchmarks.len());
        for (i, b) in self.benchmarks.iter().enumerate() {
            let field = format!("benchmarks[{i}]");
            let bench = match (&b.path, b.synthetic) {
                (Some(p), _) => load_tabular(p).map_err(|source| ManifestError::Benchmark { field: field.clone(), source })?,
                (None, Some(kind)) => SyntheticSpec { kind, noise_seed: b.noise_seed, resolution: b.resolution }.materialize(),
                (None, None) => return Err(invalid(field, "give exactly one of `path` or `synthetic`")),
            };
            let name = b.name.clone().unwrap_or_else(|| bench.name().to_string());
            if !valid_name(&name) {
                return Err(invalid(format!("{field}.name"), format!("`{name}` is not a usable dataset name")));
            }
            if out.iter().any(|o| o.name == name) {
                return Err(invalid(format!("{field}.name"), format!("duplicate dataset name `{name}`")));
            }
            out.push(LoadedBenchmark { name, bench });
        }
        Ok(out)
    }
}

/// Names become directory names.
fn valid_name(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && s.chars().all(|c| c.is_ascii_alphanumeric() || "_-.+".contains(c))
}
