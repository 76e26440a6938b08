//! Flat key-value experiment reports and their independent checker.
//!
//! Every check is stored as the keys of its operands, a relation and a
//! tolerance next to the recorded verdict, so a reader of the JSON document
//! can recompute each boolean from the stored numbers alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `lhs <= rhs + tol`.
    Le,
    /// `|lhs - rhs| <= tol`.
    Eq,
    /// `|lhs - rhs| <= tol |rhs|`.
    Rel,
    /// `lhs` is a sequence whose consecutive differences are `<= -rhs + tol`.
    Contraction,
}

impl Relation {
    fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.into())).ok()
    }

    fn as_str(&self) -> &'static str {
        match self {
            Relation::Le => "le",
            Relation::Eq => "eq",
            Relation::Rel => "rel",
            Relation::Contraction => "contraction",
        }
    }
}

/// Numbers are stored as JSON numbers; infinities and NaN as the strings
/// `inf`, `-inf`, `nan`.
fn num_value(x: f64) -> Value {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
    } else if x.is_nan() {
        Value::String("nan".into())
    } else if x > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

fn value_num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectrumReport {
    entries: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub stored: Option<bool>,
    pub recomputed: Result<bool>,
}

impl CheckOutcome {
    pub fn agrees(&self) -> bool {
        matches!((&self.recomputed, self.stored), (Ok(r), Some(s)) if *r == s)
    }
}

impl SpectrumReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &BTreeMap<String, Value> {
        &self.entries
    }

    pub fn set_num(&mut self, key: &str, x: f64) {
        self.entries.insert(key.into(), num_value(x));
    }

    pub fn set_nums(&mut self, key: &str, xs: &[f64]) {
        self.entries.insert(key.into(), Value::Array(xs.iter().map(|x| num_value(*x)).collect()));
    }

    pub fn set_str(&mut self, key: &str, s: impl Into<String>) {
        self.entries.insert(key.into(), Value::String(s.into()));
    }

    pub fn set_bool(&mut self, key: &str, b: bool) {
        self.entries.insert(key.into(), Value::Bool(b));
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        self.entries.get(key).and_then(value_num)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).and_then(Value::as_str)
    }

    fn nums(&self, key: &str) -> Option<Vec<f64>> {
        self.entries.get(key)?.as_array()?.iter().map(value_num).collect()
    }

    /// Records a check between the stored values under `lhs` and `rhs` and
    /// returns its verdict.
    pub fn add_check(&mut self, name: &str, lhs: &str, relation: Relation, rhs: &str, tolerance: f64) -> bool {
        let p = format!("check.{name}");
        self.set_str(&format!("{p}.lhs"), lhs);
        self.set_str(&format!("{p}.rhs"), rhs);
        self.set_str(&format!("{p}.relation"), relation.as_str());
        self.set_num(&format!("{p}.tolerance"), tolerance);
        let pass = self.evaluate(name).unwrap_or(false);
        self.set_bool(&format!("{p}.pass"), pass);
        pass
    }

    /// Names of all recorded checks.
    pub fn check_names(&self) -> Vec<String> {
        self.entries
            .keys()
            .filter_map(|k| k.strip_prefix("check.")?.strip_suffix(".relation"))
            .map(String::from)
            .collect()
    }

    fn evaluate(&self, name: &str) -> Result<bool> {
        let p = format!("check.{name}");
        let field = |f: &str| {
            self.str(&format!("{p}.{f}"))
                .ok_or_else(|| Error::Config(format!("{p}.{f} missing")))
        };
        let relation = Relation::parse(field("relation")?)
            .ok_or_else(|| Error::Config(format!("{p}.relation is not a known relation")))?;
        let tol = self
            .num(&format!("{p}.tolerance"))
            .ok_or_else(|| Error::Config(format!("{p}.tolerance missing")))?;
        let (lk, rk) = (field("lhs")?, field("rhs")?);
        let get = |k: &str| self.num(k).ok_or_else(|| Error::Config(format!("{p}: operand {k} missing")));
        let rhs = get(rk)?;
        Ok(match relation {
            Relation::Le => get(lk)? <= rhs + tol,
            Relation::Eq => (get(lk)? - rhs).abs() <= tol,
            Relation::Rel => (get(lk)? - rhs).abs() <= tol * rhs.abs(),
            Relation::Contraction => {
                let seq = self
                    .nums(lk)
                    .ok_or_else(|| Error::Config(format!("{p}: sequence {lk} missing")))?;
                seq.windows(2).all(|w| w[1] - w[0] <= -rhs + tol)
            }
        })
    }

    /// Recompute every check from the stored operands.
    pub fn recheck(&self) -> Vec<CheckOutcome> {
        self.check_names()
            .into_iter()
            .map(|name| CheckOutcome {
                stored: self
                    .entries
                    .get(&format!("check.{name}.pass"))
                    .and_then(Value::as_bool),
                recomputed: self.evaluate(&name),
                name,
            })
            .collect()
    }

    pub fn all_pass(&self) -> bool {
        self.recheck().iter().all(|c| matches!(c.recomputed, Ok(true)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Derived entries that the checker recomputes from their inputs.
pub fn recompute_derived(report: &SpectrumReport) -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    let (Some(d), Some(m), Some(dinf)) = (
        report.num("dimension"),
        report.num("dims.minkowski"),
        report.num("dims.infty"),
    ) else {
        return out;
    };
    if let Some(lower) = report.num("bounds.lower") {
        out.push(("bounds.lower".into(), lower, (d / 2.0).max(m / (m - d + 2.0))));
    }
    if let Some(upper) = report.num("bounds.upper") {
        out.push(("bounds.upper".into(), upper, dinf / (dinf - d + 2.0)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_roundtrip_and_recompute() {
        let mut r = SpectrumReport::new();
        r.set_num("a", 1.0);
        r.set_num("b", 1.05);
        r.set_num("c", f64::INFINITY);
        r.set_nums("seq", &[0.0, -2.0, -4.5]);
        r.set_num("step", 2.0);
        assert!(r.add_check("a_le_b", "a", Relation::Le, "b", 0.0));
        assert!(!r.add_check("a_eq_b", "a", Relation::Eq, "b", 0.01));
        assert!(r.add_check("a_rel_b", "a", Relation::Rel, "b", 0.05));
        assert!(r.add_check("b_le_c", "b", Relation::Le, "c", 0.0));
        assert!(r.add_check("shrinks", "seq", Relation::Contraction, "step", 0.0));
        assert!(!r.add_check("missing", "a", Relation::Le, "zzz", 0.0));
        let again = SpectrumReport::from_json(&r.to_json()).unwrap();
        assert_eq!(again, r);
        let outcomes = again.recheck();
        assert_eq!(outcomes.len(), 6);
        assert!(outcomes.iter().filter(|c| c.name != "missing").all(CheckOutcome::agrees));
        assert!(!again.all_pass());
    }

    #[test]
    fn tampered_verdict_is_detected() {
        let mut r = SpectrumReport::new();
        r.set_num("x", 3.0);
        r.set_num("y", 2.0);
        r.add_check("x_le_y", "x", Relation::Le, "y", 0.0);
        r.set_bool("check.x_le_y.pass", true);
        let c = &r.recheck()[0];
        assert!(!c.agrees());
    }
}
