//! JSON artifacts read and written by the command-line tool.
//!
//! Every file carries `"format": "sos-auction/1"`. Valuation and probability
//! tables are indexed by bitmask (bidder `b` is bit `b`), or by mixed-radix
//! profile index for grid instances. Rationals are JSON integers when
//! integral and `"p/q"` strings otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{Allocation, AllocationRule};
use crate::lattice::{FailureDetail, LatticeError, LatticeSetting, Reproducer};
use crate::matroid::{Matroid, MatroidError};
use crate::payments::PaymentRule;
use crate::rational::{serde_rational_matrix, Rational};
use crate::signal::{SignalSet, MAX_BIDDERS};
use crate::valuation::{Setting, ValuationError};

pub const FORMAT: &str = "sos-auction/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("unsupported format {0:?}, expected {FORMAT:?}")]
    Format(String),
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Matroid(#[from] MatroidError),
}

fn format_version() -> String {
    FORMAT.to_string()
}

/// A valuation profile, binary (`k` absent) or over `{0..k}ⁿ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default = "format_version")]
    pub format: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<u32>,
    #[serde(with = "serde_rational_matrix")]
    pub valuations: Vec<Vec<Rational>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matroid: Option<Matroid>,
}

impl InstanceFile {
    pub fn from_setting(setting: &Setting, seed: Option<u64>, scale: Option<u32>) -> Self {
        InstanceFile {
            format: format_version(),
            n: setting.n(),
            k: None,
            seed,
            scale,
            valuations: setting.tables(),
            matroid: None,
        }
    }

    pub fn from_lattice(setting: &LatticeSetting, seed: Option<u64>, scale: Option<u32>) -> Self {
        InstanceFile {
            format: format_version(),
            n: setting.n,
            k: Some(setting.k),
            seed,
            scale,
            valuations: setting.valuations.clone(),
            matroid: None,
        }
    }

    pub fn is_lattice(&self) -> bool {
        self.k.is_some()
    }

    fn check_n(&self) -> Result<(), IoError> {
        if self.n == 0 || self.n > MAX_BIDDERS {
            return Err(IoError::Shape(format!("n = {} outside 1..={MAX_BIDDERS}", self.n)));
        }
        if self.valuations.len() != self.n {
            return Err(IoError::Shape(format!("{} valuation tables for n = {}", self.valuations.len(), self.n)));
        }
        Ok(())
    }

    /// The binary setting. Shapes are checked; SOS is not.
    pub fn setting(&self) -> Result<Setting, IoError> {
        if self.is_lattice() {
            return Err(IoError::Shape("grid instance where a binary one is required".into()));
        }
        self.check_n()?;
        Ok(Setting::from_tables(self.valuations.clone())?)
    }

    pub fn lattice(&self) -> Result<LatticeSetting, IoError> {
        self.check_n()?;
        Ok(LatticeSetting::new(self.n, self.k.unwrap_or(1), self.valuations.clone())?)
    }

    /// The embedded matroid bound to this instance's ground set.
    pub fn matroid(&self) -> Result<Option<Matroid>, IoError> {
        self.matroid.clone().map(|m| m.with_ground_set(self.n)).transpose().map_err(Into::into)
    }
}

/// Allocation probabilities per signal set, with optional colors and payments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFile {
    #[serde(default = "format_version")]
    pub format: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `probabilities[S][b] = x_b(S)`.
    #[serde(with = "serde_rational_matrix")]
    pub probabilities: Vec<Vec<Rational>>,
    /// `colors[S]` is one `W`/`R`/`B` character per bidder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<String>>,
    /// `payments[S][b]` is bidder `b`'s expected payment at reported `S`.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "optional_matrix")]
    pub payments: Option<Vec<Vec<Rational>>>,
}

mod optional_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Deserialize)]
    struct Owned(#[serde(with = "serde_rational_matrix")] Vec<Vec<Rational>>);

    pub fn serialize<S: Serializer>(value: &Option<Vec<Vec<Rational>>>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(m) => serde_rational_matrix::serialize(m, serializer),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<Vec<Vec<Rational>>>, D::Error> {
        Ok(Option::<Owned>::deserialize(deserializer)?.map(|o| o.0))
    }
}

impl RuleFile {
    pub fn new(allocation: &Allocation, payments: Option<&PaymentRule>, seed: Option<u64>, colors: bool) -> Self {
        let n = allocation.rule.n();
        RuleFile {
            format: format_version(),
            n,
            seed,
            probabilities: allocation.rule.columns(),
            colors: colors.then(|| {
                SignalSet::all(n).map(|s| allocation.table.column(s).iter().map(|c| c.symbol()).collect()).collect()
            }),
            payments: payments.map(PaymentRule::columns),
        }
    }

    pub fn rule(&self) -> Result<AllocationRule, IoError> {
        AllocationRule::from_columns(self.n, self.probabilities.clone())
            .ok_or_else(|| IoError::Shape(format!("probabilities need 2^{} rows of {} entries", self.n, self.n)))
    }

    pub fn payment_rule(&self) -> Result<Option<PaymentRule>, IoError> {
        self.payments
            .clone()
            .map(|p| {
                PaymentRule::from_columns(self.n, p)
                    .ok_or_else(|| IoError::Shape(format!("payments need 2^{} rows of {} entries", self.n, self.n)))
            })
            .transpose()
    }
}

/// A failing grid instance from a simulation batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReproducerFile<'a> {
    pub format: String,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub scale: u32,
    pub batch_seed: u64,
    pub instance: u64,
    pub failure: &'a FailureDetail,
    #[serde(with = "serde_rational_matrix")]
    pub valuations: Vec<Vec<Rational>>,
}

impl<'a> ReproducerFile<'a> {
    pub fn new(r: &'a Reproducer, batch_seed: u64, scale: u32) -> Self {
        ReproducerFile {
            format: format_version(),
            n: r.setting.n,
            k: r.setting.k,
            seed: r.seed,
            scale,
            batch_seed,
            instance: r.instance,
            failure: &r.detail,
            valuations: r.setting.valuations.clone(),
        }
    }
}

/// Reads and parses a JSON artifact, rejecting other format versions.
pub fn read_json<T: DeserializeOwned + HasFormat>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: path.into(), source })?;
    let value: T = serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })?;
    if value.format() != FORMAT {
        return Err(IoError::Format(value.format().to_string()));
    }
    Ok(value)
}

pub trait HasFormat {
    fn format(&self) -> &str;
}

impl HasFormat for InstanceFile {
    fn format(&self) -> &str {
        &self.format
    }
}

impl HasFormat for RuleFile {
    fn format(&self) -> &str {
        &self.format
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    text
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Write { path: dir.into(), source })?;
    }
    fs::write(path, text).map_err(|source| IoError::Write { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &to_json(value))
}

/// Parses a signal set written as `{1,3}`, `1,3`, `{}` or an empty string
/// (1-based bidders).
pub fn parse_profile(text: &str, n: usize) -> Result<SignalSet, IoError> {
    let inner = text.trim().trim_start_matches('{').trim_end_matches('}');
    let mut set = SignalSet::default();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let b: usize = part.parse().map_err(|_| IoError::Shape(format!("bad bidder {part:?} in profile {text:?}")))?;
        if b == 0 || b > n {
            return Err(IoError::Shape(format!("bidder {b} outside 1..={n}")));
        }
        set = set.with(b - 1);
    }
    Ok(set)
}
