//! Exact rational values and their text encoding.
//!
//! Every value, probability and payment in this crate is a normalized
//! `i64` fraction. Text form is either a bare integer (`"7"`) or `"p/q"`.

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("malformed rational literal {0:?}")]
    Malformed(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let malformed = || ParseRationalError::Malformed(text.to_string());
    match text.split_once('/') {
        None => text.parse::<i64>().map(Rational::from_integer).map_err(|_| malformed()),
        Some((num, den)) => {
            let num = num.trim().parse::<i64>().map_err(|_| malformed())?;
            let den = den.trim().parse::<i64>().map_err(|_| malformed())?;
            if den == 0 {
                return Err(ParseRationalError::ZeroDenominator(text.to_string()));
            }
            Ok(Rational::new(num, den))
        }
    }
}

/// Canonical text form: `"3"` for integers, `"3/4"` otherwise.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Displays a rational in canonical text form.
pub struct Display<'a>(pub &'a Rational);

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_rational(self.0))
    }
}

/// Serde adapter: rationals are written as JSON integers when integral and as
/// `"p/q"` strings otherwise; both forms (and integer strings) are accepted.
pub mod serde_rational {
    use super::*;
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(value: &Rational, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_integer() {
            serializer.serialize_i64(*value.numer())
        } else {
            serializer.serialize_str(&format_rational(value))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        deserializer.deserialize_any(RationalVisitor)
    }

    pub(crate) struct RationalVisitor;

    impl Visitor<'_> for RationalVisitor {
        type Value = Rational;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("an integer or a \"p/q\" rational string")
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
            Ok(Rational::from_integer(v))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
            i64::try_from(v).map(Rational::from_integer).map_err(|_| E::custom(format!("integer {v} out of range")))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
            parse_rational(v).map_err(E::custom)
        }
    }
}

/// Serde adapter for `Vec<Rational>`, element encoding as in [`serde_rational`].
pub mod serde_rational_vec {
    use super::*;
    use serde::de::{Deserializer, SeqAccess, Visitor};
    use serde::ser::{SerializeSeq, Serializer};

    struct Item<'a>(&'a Rational);

    impl serde::Serialize for Item<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            serde_rational::serialize(self.0, s)
        }
    }

    struct OwnedItem(Rational);

    impl<'de> serde::Deserialize<'de> for OwnedItem {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            serde_rational::deserialize(d).map(OwnedItem)
        }
    }

    pub fn serialize<S: Serializer>(values: &[Rational], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&Item(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<Rational>, D::Error> {
        struct SeqVisitor;
        impl<'de> Visitor<'de> for SeqVisitor {
            type Value = Vec<Rational>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a list of rationals")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(OwnedItem(v)) = seq.next_element()? {
                    out.push(v);
                }
                Ok(out)
            }
        }
        deserializer.deserialize_seq(SeqVisitor)
    }
}

/// Serde adapter for a matrix of rationals (`Vec<Vec<Rational>>`).
pub mod serde_rational_matrix {
    use super::*;
    use serde::de::Deserializer;
    use serde::ser::{SerializeSeq, Serializer};
    use serde::Deserialize;

    struct Row<'a>(&'a [Rational]);

    impl serde::Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            serde_rational_vec::serialize(self.0, s)
        }
    }

    #[derive(Deserialize)]
    struct OwnedRow(#[serde(with = "serde_rational_vec")] Vec<Rational>);

    pub fn serialize<S: Serializer>(rows: &[Vec<Rational>], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(rows.len()))?;
        for row in rows {
            seq.serialize_element(&Row(row))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<Vec<Rational>>, D::Error> {
        let rows = Vec::<OwnedRow>::deserialize(deserializer)?;
        Ok(rows.into_iter().map(|r| r.0).collect())
    }
}

/// Serde adapter for `Option<Rational>`; `None` is `null`.
pub mod serde_rational_option {
    use super::*;
    use serde::de::Deserializer;
    use serde::ser::Serializer;
    use serde::Deserialize;

    #[derive(Deserialize)]
    struct Owned(#[serde(with = "serde_rational")] Rational);

    pub fn serialize<S: Serializer>(value: &Option<Rational>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serde_rational::serialize(v, serializer),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<Rational>, D::Error> {
        Ok(Option::<Owned>::deserialize(deserializer)?.map(|o| o.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integers_and_fractions() {
        assert_eq!(parse_rational("7").unwrap(), Rational::from_integer(7));
        assert_eq!(parse_rational(" 6/4 ").unwrap(), Rational::new(3, 2));
        assert_eq!(parse_rational("-1/2").unwrap(), Rational::new(-1, 2));
        assert!(matches!(parse_rational("1/0"), Err(ParseRationalError::ZeroDenominator(_))));
        assert!(matches!(parse_rational("x"), Err(ParseRationalError::Malformed(_))));
        assert_eq!(parse_rational(""), Err(ParseRationalError::Empty));
    }

    #[test]
    fn canonical_format() {
        assert_eq!(format_rational(&Rational::new(4, 2)), "2");
        assert_eq!(format_rational(&Rational::new(1, 2)), "1/2");
        assert_eq!(format_rational(&Rational::from_integer(0)), "0");
    }

    #[test]
    fn json_round_trip() {
        #[derive(serde::Serialize, serde::Deserialize, PartialEq, Debug)]
        struct Wrap(#[serde(with = "serde_rational_matrix")] Vec<Vec<Rational>>);
        let w = Wrap(vec![vec![Rational::new(1, 2), Rational::from_integer(3)]]);
        let text = serde_json::to_string(&w).unwrap();
        assert_eq!(text, r#"[["1/2",3]]"#);
        assert_eq!(serde_json::from_str::<Wrap>(&text).unwrap(), w);
        let loose: Wrap = serde_json::from_str(r#"[["4", "2/4", 1]]"#).unwrap();
        assert_eq!(loose.0[0], vec![Rational::from_integer(4), Rational::new(1, 2), Rational::from_integer(1)]);
    }
}
