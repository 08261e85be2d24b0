//! Fraction notation for numeric knobs: "16/255" is accepted anywhere a
//! float is, both on the command line and in config files. Serialization
//! always emits plain numbers, so configs round-trip losslessly.

use crate::error::{CiaError, Result};
use serde::de::{self, Deserializer};
use std::fmt;

/// Parse `"0.05"`, `"16/255"`, or `"1e-3"` into a float.
pub fn parse_float_token(s: &str) -> Result<f64> {
    let t = s.trim();
    let value = if let Some((num, den)) = t.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| CiaError::Config(format!("bad fraction numerator in '{s}'")))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| CiaError::Config(format!("bad fraction denominator in '{s}'")))?;
        if d == 0.0 {
            return Err(CiaError::Config(format!("zero denominator in '{s}'")));
        }
        n / d
    } else {
        t.parse()
            .map_err(|_| CiaError::Config(format!("'{s}' is not a number")))?
    };
    if !value.is_finite() {
        return Err(CiaError::Config(format!("'{s}' is not finite")));
    }
    Ok(value)
}

struct FloatOrFraction;

impl de::Visitor<'_> for FloatOrFraction {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number or a fraction string like \"16/255\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<f64, E> {
        parse_float_token(v).map_err(E::custom)
    }
}

/// Serde field deserializer: number or fraction string.
pub fn float_or_fraction<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<f64, D::Error> {
    d.deserialize_any(FloatOrFraction)
}

/// [`float_or_fraction`] lifted over `Option`.
pub fn opt_float_or_fraction<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<f64>, D::Error> {
    struct OptVisitor;

    impl<'de> de::Visitor<'de> for OptVisitor {
        type Value = Option<f64>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("null, a number, or a fraction string like \"16/255\"")
        }

        fn visit_none<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_unit<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_some<D2: Deserializer<'de>>(
            self,
            d: D2,
        ) -> std::result::Result<Self::Value, D2::Error> {
            float_or_fraction(d).map(Some)
        }
    }

    d.deserialize_option(OptVisitor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_float_token("0.05").unwrap(), 0.05);
        assert_eq!(parse_float_token("16/255").unwrap(), 16.0 / 255.0);
        assert_eq!(parse_float_token(" 8 / 255 ").unwrap(), 8.0 / 255.0);
        assert_eq!(parse_float_token("1e-3").unwrap(), 1e-3);
        assert_eq!(parse_float_token("16/255").unwrap(), 0.06274509803921569);
    }

    #[test]
    fn rejects_garbage_and_zero_denominators() {
        assert!(parse_float_token("abc").is_err());
        assert!(parse_float_token("1/0").is_err());
        assert!(parse_float_token("1/abc").is_err());
        assert!(parse_float_token("").is_err());
        assert!(parse_float_token("inf").is_err());
    }

    #[test]
    fn serde_accepts_both_forms() {
        #[derive(serde::Deserialize)]
        struct Knob {
            #[serde(deserialize_with = "float_or_fraction")]
            x: f64,
            #[serde(default, deserialize_with = "opt_float_or_fraction")]
            y: Option<f64>,
        }
        let k: Knob = serde_json::from_str(r#"{"x": 0.05, "y": null}"#).unwrap();
        assert_eq!(k.x, 0.05);
        assert_eq!(k.y, None);
        let k: Knob = serde_json::from_str(r#"{"x": "16/255", "y": "8/255"}"#).unwrap();
        assert_eq!(k.x, 16.0 / 255.0);
        assert_eq!(k.y, Some(8.0 / 255.0));
        let k: Knob = serde_json::from_str(r#"{"x": 2}"#).unwrap();
        assert_eq!(k.x, 2.0);
        assert!(serde_json::from_str::<Knob>(r#"{"x": "1/0"}"#).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fraction_strings_parse_to_exact_quotient(n in 0u32..100_000, d in 1u32..100_000) {
                let parsed = parse_float_token(&format!("{n}/{d}")).unwrap();
                prop_assert_eq!(parsed, f64::from(n) / f64::from(d));
            }

            #[test]
            fn arbitrary_input_never_panics(s in ".*") {
                let _ = parse_float_token(&s);
            }
        }
    }
}
