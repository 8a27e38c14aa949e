//! Search-space description, configurations, feature encoding and candidate
//! sampling.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: lower bound {lo} must be below upper bound {hi}")]
    EmptyRange { name: String, lo: f64, hi: f64 },
    #[error("parameter `{0}`: categorical parameters need at least two levels")]
    TooFewLevels(String),
    #[error("parameter `{0}`: duplicate categorical level")]
    DuplicateLevel(String),
    #[error("configuration has {got} values but the space has {expected} parameters")]
    Arity { expected: usize, got: usize },
    #[error("parameter `{name}`: value {value} does not match its kind")]
    KindMismatch { name: String, value: String },
    #[error("parameter `{name}`: value {value} is outside [{lo}, {hi}]")]
    OutOfBounds { name: String, value: f64, lo: f64, hi: f64 },
    #[error("parameter `{name}`: unknown categorical level `{level}`")]
    UnknownLevel { name: String, level: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

/// Kind and domain of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Continuous { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Continuous { lo, hi } }
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::Integer { lo, hi } }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical { levels: levels.into_iter().map(Into::into).collect() },
        }
    }

    fn one_hot_width(&self) -> usize {
        match &self.kind {
            ParamKind::Categorical { levels } => levels.len(),
            _ => 1,
        }
    }
}

/// Ordered list of validated parameter specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct ParamSpace {
    params: Vec<ParamSpec>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    params: Vec<ParamSpec>,
}

impl TryFrom<RawSpace> for ParamSpace {
    type Error = SpaceError;

    fn try_from(raw: RawSpace) -> Result<Self, SpaceError> {
        ParamSpace::new(raw.params)
    }
}

impl From<ParamSpace> for RawSpace {
    fn from(space: ParamSpace) -> Self {
        RawSpace { params: space.params }
    }
}

impl ParamSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        let mut names = HashSet::new();
        for p in &params {
            if !names.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
            match &p.kind {
                ParamKind::Continuous { lo, hi } => {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(SpaceError::EmptyRange { name: p.name.clone(), lo: *lo, hi: *hi });
                    }
                }
                ParamKind::Integer { lo, hi } => {
                    if lo >= hi {
                        return Err(SpaceError::EmptyRange {
                            name: p.name.clone(),
                            lo: *lo as f64,
                            hi: *hi as f64,
                        });
                    }
                }
                ParamKind::Categorical { levels } => {
                    if levels.len() < 2 {
                        return Err(SpaceError::TooFewLevels(p.name.clone()));
                    }
                    let distinct: HashSet<&String> = levels.iter().collect();
                    if distinct.len() != levels.len() {
                        return Err(SpaceError::DuplicateLevel(p.name.clone()));
                    }
                }
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Width of the encoded feature vector under `scheme`.
    pub fn encoded_dim(&self, scheme: Encoding) -> usize {
        match scheme {
            Encoding::OneHot => self.params.iter().map(ParamSpec::one_hot_width).sum(),
            Encoding::Ordinal => self.params.len(),
        }
    }

    /// Number of distinct configurations when every parameter is discrete.
    pub fn cardinality(&self) -> Option<u128> {
        self.params.iter().try_fold(1u128, |acc, p| {
            let k = match &p.kind {
                ParamKind::Continuous { .. } => return None,
                ParamKind::Integer { lo, hi } => (hi - lo) as u128 + 1,
                ParamKind::Categorical { levels } => levels.len() as u128,
            };
            acc.checked_mul(k)
        })
    }

    /// Checks kind, bounds and level membership of every value.
    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        if config.values.len() != self.params.len() {
            return Err(SpaceError::Arity { expected: self.params.len(), got: config.values.len() });
        }
        for (spec, value) in self.params.iter().zip(&config.values) {
            let mismatch = || SpaceError::KindMismatch { name: spec.name.clone(), value: value.to_string() };
            match (&spec.kind, value) {
                (ParamKind::Continuous { lo, hi }, ParamValue::Float(v)) => {
                    if !(v.is_finite() && *v >= *lo && *v <= *hi) {
                        return Err(SpaceError::OutOfBounds { name: spec.name.clone(), value: *v, lo: *lo, hi: *hi });
                    }
                }
                (ParamKind::Integer { lo, hi }, ParamValue::Int(v)) => {
                    if v < lo || v > hi {
                        return Err(SpaceError::OutOfBounds {
                            name: spec.name.clone(),
                            value: *v as f64,
                            lo: *lo as f64,
                            hi: *hi as f64,
                        });
                    }
                }
                (ParamKind::Categorical { levels }, ParamValue::Level(s)) => {
                    if !levels.contains(s) {
                        return Err(SpaceError::UnknownLevel { name: spec.name.clone(), level: s.clone() });
                    }
                }
                _ => return Err(mismatch()),
            }
        }
        Ok(())
    }

    /// Draws one configuration uniformly per dimension.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let values = self
            .params
            .iter()
            .map(|p| match &p.kind {
                ParamKind::Continuous { lo, hi } => ParamValue::Float(lo + (hi - lo) * rng.random::<f64>()),
                ParamKind::Integer { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
                ParamKind::Categorical { levels } => {
                    ParamValue::Level(levels[rng.random_range(0..levels.len())].clone())
                }
            })
            .collect();
        Configuration { values }
    }

    /// Parses a textual value (e.g. a CSV cell) into the kind of parameter `idx`.
    pub fn parse_value(&self, idx: usize, text: &str) -> Result<ParamValue, SpaceError> {
        let spec = &self.params[idx];
        let bad = || SpaceError::KindMismatch { name: spec.name.clone(), value: text.to_string() };
        let text = text.trim();
        let value = match &spec.kind {
            ParamKind::Continuous { .. } => ParamValue::Float(text.parse().map_err(|_| bad())?),
            ParamKind::Integer { .. } => {
                let v: i64 = match text.parse() {
                    Ok(v) => v,
                    Err(_) => {
                        let f: f64 = text.parse().map_err(|_| bad())?;
                        if f.fract() != 0.0 {
                            return Err(bad());
                        }
                        f as i64
                    }
                };
                ParamValue::Int(v)
            }
            ParamKind::Categorical { levels } => {
                if !levels.iter().any(|l| l == text) {
                    return Err(SpaceError::UnknownLevel { name: spec.name.clone(), level: text.to_string() });
                }
                ParamValue::Level(text.to_string())
            }
        };
        Ok(value)
    }
}

/// A single hyperparameter value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Level(String),
}

impl PartialEq for ParamValue {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ParamValue::Int(a), ParamValue::Int(b)) => a == b,
            (ParamValue::Float(a), ParamValue::Float(b)) => a.to_bits() == b.to_bits(),
            (ParamValue::Level(a), ParamValue::Level(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for ParamValue {}

impl Hash for ParamValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            ParamValue::Int(v) => {
                0u8.hash(state);
                v.hash(state);
            }
            ParamValue::Float(v) => {
                1u8.hash(state);
                v.to_bits().hash(state);
            }
            ParamValue::Level(v) => {
                2u8.hash(state);
                v.hash(state);
            }
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Level(v) => f.write_str(v),
        }
    }
}

/// Values aligned with a [`ParamSpace`]. Equality is exact (bitwise for floats).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub values: Vec<ParamValue>,
}

impl Configuration {
    pub fn new(values: Vec<ParamValue>) -> Self {
        Self { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    OneHot,
    Ordinal,
}

/// Encodes `config` into a dense feature vector.
///
/// Numeric parameters are min-max scaled with the space bounds. Categorical
/// parameters expand into indicator columns (`OneHot`) or map to their level
/// index (`Ordinal`).
pub fn encode(config: &Configuration, space: &ParamSpace, scheme: Encoding) -> Result<Vec<f64>, SpaceError> {
    let mut out = Vec::with_capacity(space.encoded_dim(scheme));
    encode_into(config, space, scheme, &mut out)?;
    Ok(out)
}

fn encode_into(config: &Configuration, space: &ParamSpace, scheme: Encoding, out: &mut Vec<f64>) -> Result<(), SpaceError> {
    if config.values.len() != space.len() {
        return Err(SpaceError::Arity { expected: space.len(), got: config.values.len() });
    }
    for (spec, value) in space.params.iter().zip(&config.values) {
        match (&spec.kind, value) {
            (ParamKind::Continuous { lo, hi }, ParamValue::Float(v)) => out.push((v - lo) / (hi - lo)),
            (ParamKind::Integer { lo, hi }, ParamValue::Int(v)) => out.push((v - lo) as f64 / (hi - lo) as f64),
            (ParamKind::Categorical { levels }, ParamValue::Level(s)) => {
                let idx = levels
                    .iter()
                    .position(|l| l == s)
                    .ok_or_else(|| SpaceError::UnknownLevel { name: spec.name.clone(), level: s.clone() })?;
                match scheme {
                    Encoding::OneHot => out.extend((0..levels.len()).map(|j| if j == idx { 1.0 } else { 0.0 })),
                    Encoding::Ordinal => out.push(idx as f64),
                }
            }
            _ => return Err(SpaceError::KindMismatch { name: spec.name.clone(), value: value.to_string() }),
        }
    }
    Ok(())
}

/// Both encodings of a batch of configurations. Tree learners read the
/// ordinal view, linear and kernel learners the one-hot view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub one_hot: Vec<Vec<f64>>,
    pub ordinal: Vec<Vec<f64>>,
}

/// Column counts of the two views of a [`FeatureSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDims {
    pub one_hot: usize,
    pub ordinal: usize,
}

impl FeatureSet {
    pub fn encode(space: &ParamSpace, configs: &[Configuration]) -> Result<Self, SpaceError> {
        let mut set = FeatureSet {
            one_hot: Vec::with_capacity(configs.len()),
            ordinal: Vec::with_capacity(configs.len()),
        };
        for c in configs {
            set.one_hot.push(encode(c, space, Encoding::OneHot)?);
            set.ordinal.push(encode(c, space, Encoding::Ordinal)?);
        }
        Ok(set)
    }

    /// A feature set for purely numeric data, where both views coincide.
    pub fn numeric(rows: Vec<Vec<f64>>) -> Self {
        Self { ordinal: rows.clone(), one_hot: rows }
    }

    pub fn len(&self) -> usize {
        self.one_hot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.one_hot.is_empty()
    }

    pub fn view(&self, scheme: Encoding) -> &[Vec<f64>] {
        match scheme {
            Encoding::OneHot => &self.one_hot,
            Encoding::Ordinal => &self.ordinal,
        }
    }

    /// Column counts, taken from the first row (zero for an empty set).
    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            one_hot: self.one_hot.first().map_or(0, Vec::len),
            ordinal: self.ordinal.first().map_or(0, Vec::len),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            one_hot: idx.iter().map(|&i| self.one_hot[i].clone()).collect(),
            ordinal: idx.iter().map(|&i| self.ordinal[i].clone()).collect(),
        }
    }

    pub fn row(&self, i: usize) -> Self {
        self.subset(&[i])
    }
}

/// Draws `n` configurations i.i.d. uniformly per dimension.
///
/// Draws that exactly equal an entry of `history` are discarded, so the
/// result can be shorter than `n` (and is empty once a finite space is
/// exhausted).
pub fn sample_candidates<R: Rng + ?Sized>(
    space: &ParamSpace,
    n: usize,
    rng: &mut R,
    history: Option<&HashSet<Configuration>>,
) -> Vec<Configuration> {
    (0..n)
        .map(|_| space.sample(rng))
        .filter(|c| history.is_none_or(|h| !h.contains(c)))
        .collect()
}

/// Draws up to `n` distinct entries of a finite `pool` without replacement,
/// skipping entries present in `history`. Output keeps pool order.
pub fn sample_from_pool<R: Rng + ?Sized>(
    pool: &[Configuration],
    n: usize,
    rng: &mut R,
    history: Option<&HashSet<Configuration>>,
) -> Vec<Configuration> {
    let open: Vec<&Configuration> = pool.iter().filter(|c| history.is_none_or(|h| !h.contains(*c))).collect();
    if open.len() <= n {
        return open.into_iter().cloned().collect();
    }
    let mut picked = index::sample(rng, open.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| open[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixed() -> ParamSpace {
        ParamSpace::new(vec![
            ParamSpec::continuous("x", 0.0, 10.0),
            ParamSpec::integer("k", 1, 5),
            ParamSpec::categorical("opt", ["a", "b", "c"]),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(matches!(
            ParamSpace::new(vec![ParamSpec::continuous("x", 1.0, 1.0)]),
            Err(SpaceError::EmptyRange { .. })
        ));
        assert!(matches!(
            ParamSpace::new(vec![ParamSpec::categorical("c", ["a"])]),
            Err(SpaceError::TooFewLevels(_))
        ));
        assert!(matches!(
            ParamSpace::new(vec![ParamSpec::integer("a", 0, 2), ParamSpec::integer("a", 0, 3)]),
            Err(SpaceError::DuplicateName(_))
        ));
    }

    #[test]
    fn encodes_midpoint_and_indicators() {
        let space = mixed();
        let c = Configuration::new(vec![ParamValue::Float(5.0), ParamValue::Int(3), ParamValue::Level("b".into())]);
        assert_eq!(encode(&c, &space, Encoding::OneHot).unwrap(), vec![0.5, 0.5, 0.0, 1.0, 0.0]);
        let c = Configuration::new(vec![ParamValue::Float(5.0), ParamValue::Int(1), ParamValue::Level("c".into())]);
        assert_eq!(encode(&c, &space, Encoding::Ordinal).unwrap(), vec![0.5, 0.0, 2.0]);
        assert_eq!(space.encoded_dim(Encoding::OneHot), 5);
        assert_eq!(space.encoded_dim(Encoding::Ordinal), 3);
    }

    #[test]
    fn unknown_level_is_an_encoding_error() {
        let space = mixed();
        let c = Configuration::new(vec![ParamValue::Float(5.0), ParamValue::Int(3), ParamValue::Level("z".into())]);
        assert!(matches!(encode(&c, &space, Encoding::OneHot), Err(SpaceError::UnknownLevel { .. })));
        assert!(space.validate(&c).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_valid() {
        let space = mixed();
        let a = sample_candidates(&space, 2000, &mut ChaCha8Rng::seed_from_u64(9), None);
        let b = sample_candidates(&space, 2000, &mut ChaCha8Rng::seed_from_u64(9), None);
        assert_eq!(a.len(), 2000);
        assert_eq!(a, b);
        assert!(a.iter().all(|c| space.validate(c).is_ok()));

        let single = ParamSpace::new(vec![ParamSpec::categorical("c", ["a", "b"])]).unwrap();
        let one = sample_candidates(&single, 1, &mut ChaCha8Rng::seed_from_u64(3), None);
        let again = sample_candidates(&single, 1, &mut ChaCha8Rng::seed_from_u64(3), None);
        assert_eq!(one.len(), 1);
        assert_eq!(one, again);
    }

    #[test]
    fn exhausted_finite_space_yields_no_candidates() {
        let space = ParamSpace::new(vec![ParamSpec::integer("a", 0, 4), ParamSpec::categorical("b", ["u", "v"])]).unwrap();
        assert_eq!(space.cardinality(), Some(10));
        // Enumerate the whole space.
        let mut all = HashSet::new();
        for a in 0..=4 {
            for b in ["u", "v"] {
                all.insert(Configuration::new(vec![ParamValue::Int(a), ParamValue::Level(b.into())]));
            }
        }
        assert_eq!(all.len(), 10);
        let got = sample_candidates(&space, 500, &mut ChaCha8Rng::seed_from_u64(1), Some(&all));
        assert!(got.is_empty());

        let pool: Vec<Configuration> = all.iter().cloned().collect();
        assert!(sample_from_pool(&pool, 5, &mut ChaCha8Rng::seed_from_u64(1), Some(&all)).is_empty());
    }

    #[test]
    fn pool_sampling_excludes_history() {
        let pool: Vec<Configuration> = (0..20).map(|i| Configuration::new(vec![ParamValue::Int(i)])).collect();
        let hist: HashSet<Configuration> = pool[..15].iter().cloned().collect();
        let got = sample_from_pool(&pool, 100, &mut ChaCha8Rng::seed_from_u64(1), Some(&hist));
        assert_eq!(got, pool[15..].to_vec());
        let some = sample_from_pool(&pool, 7, &mut ChaCha8Rng::seed_from_u64(1), None);
        assert_eq!(some.len(), 7);
        let distinct: HashSet<_> = some.iter().collect();
        assert_eq!(distinct.len(), 7);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn one_hot_is_injective_on_distinct_configs(
                x1 in 0.0f64..10.0, x2 in 0.0f64..10.0, l1 in 0usize..3, l2 in 0usize..3, k1 in 1i64..=5, k2 in 1i64..=5
            ) {
                let space = mixed();
                let lv = ["a", "b", "c"];
                let a = Configuration::new(vec![ParamValue::Float(x1), ParamValue::Int(k1), ParamValue::Level(lv[l1].into())]);
                let b = Configuration::new(vec![ParamValue::Float(x2), ParamValue::Int(k2), ParamValue::Level(lv[l2].into())]);
                let ea = encode(&a, &space, Encoding::OneHot).unwrap();
                let eb = encode(&b, &space, Encoding::OneHot).unwrap();
                prop_assert_eq!(a == b, ea == eb);
                prop_assert_eq!(ea.len(), space.encoded_dim(Encoding::OneHot));
            }
        }
    }
}
