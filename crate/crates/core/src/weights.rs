//! Probability vectors over dyadic children, stored exactly when given as
//! rationals.

use num_rational::Ratio;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance for float weight vectors summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Rational(Ratio<i64>),
    Float(f64),
}

impl Weight {
    pub fn value(&self) -> f64 {
        match self {
            Weight::Rational(r) => *r.numer() as f64 / *r.denom() as f64,
            Weight::Float(x) => *x,
        }
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Weight::Rational(Ratio::new(num, den))
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad rational numerator in {s:?}")))?;
            let d: i64 = d
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad rational denominator in {s:?}")))?;
            if d == 0 {
                return Err(Error::Config(format!("zero denominator in {s:?}")));
            }
            return Ok(Weight::Rational(Ratio::new(n, d)));
        }
        if let Ok(n) = s.parse::<i64>() {
            return Ok(Weight::Rational(Ratio::from_integer(n)));
        }
        s.parse::<f64>()
            .map(Weight::Float)
            .map_err(|_| Error::Config(format!("cannot parse weight {s:?}")))
    }
}

impl std::fmt::Display for Weight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weight::Rational(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Weight::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Weight::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Weight::Rational(_) => s.serialize_str(&self.to_string()),
            Weight::Float(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = Weight;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or a rational string like \"9/25\"")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Weight, E> {
                Weight::parse(v).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Weight, E> {
                Ok(Weight::Float(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Weight, E> {
                Ok(Weight::Rational(Ratio::from_integer(v)))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Weight, E> {
                i64::try_from(v)
                    .map(|v| Weight::Rational(Ratio::from_integer(v)))
                    .map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// A validated probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    entries: Vec<Weight>,
    values: Vec<f64>,
}

impl WeightVector {
    pub fn new(entries: Vec<Weight>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("empty weight vector".into()));
        }
        let values: Vec<f64> = entries.iter().map(Weight::value).collect();
        if values.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("weights must be finite and >= 0: {values:?}")));
        }
        let all_rational = entries.iter().all(|w| matches!(w, Weight::Rational(_)));
        if all_rational {
            let sum = entries.iter().fold(Ratio::from_integer(0i64), |acc, w| match w {
                Weight::Rational(r) => acc + r,
                Weight::Float(_) => unreachable!(),
            });
            if sum != Ratio::from_integer(1) {
                return Err(Error::Config(format!("rational weights sum to {sum}, not 1")));
            }
        } else {
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Config(format!(
                    "weights sum to {sum:.15}, not 1 within {SUM_TOLERANCE:e}"
                )));
            }
        }
        Ok(WeightVector { entries, values })
    }

    pub fn from_floats(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Weight::Float(v)).collect())
    }

    pub fn from_rationals(pairs: &[(i64, i64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(n, d)| Weight::rational(n, d)).collect())
    }

    pub fn uniform(len: usize) -> Self {
        let w = Weight::rational(1, len as i64);
        WeightVector {
            values: vec![w.value(); len],
            entries: vec![w; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn entries(&self) -> &[Weight] {
        &self.entries
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_sum_must_be_exact() {
        assert!(WeightVector::from_rationals(&[(9, 25), (9, 25), (1, 5), (2, 25)]).is_ok());
        assert!(WeightVector::from_rationals(&[(1, 3), (1, 3), (1, 4)]).is_err());
    }

    #[test]
    fn float_sum_tolerance() {
        assert!(WeightVector::from_floats(&[0.36, 0.36, 0.2, 0.08]).is_ok());
        assert!(WeightVector::from_floats(&[0.36, 0.36, 0.2, 0.0800001]).is_err());
        assert!(WeightVector::from_floats(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn serde_keeps_rationals_exact() {
        let w = vec![Weight::rational(9, 25), Weight::Float(0.36), Weight::rational(1, 1)];
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"["9/25",0.36,"1"]"#);
        let back: Vec<Weight> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }
}
