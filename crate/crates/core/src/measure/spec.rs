//! Serializable measure descriptions (TOML, or JSON when the document
//! starts with `{`).

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::error::{Error, Result};
use crate::measure::{
    BlockSchedule, CascadeMeasure, DensityKind, DensityMeasure, Generator, MeasureModel,
    ProductMeasure, Schedule,
};
use crate::weights::{Weight, WeightVector};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

fn one() -> u32 {
    1
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureSpec {
    Cascade {
        dimension: usize,
        #[serde(default = "one")]
        refinement: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<Weight>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<ScheduleSpec>,
    },
    Density {
        dimension: usize,
        density_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    Product {
        factors: Vec<MeasureSpec>,
    },
    Builtin {
        name: String,
    },
    Scaled {
        factor: f64,
        measure: Box<MeasureSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ScheduleSpec {
    Periodic { generators: Vec<Vec<Weight>> },
    Block { upper: Weight, lower: Weight, unit: u64 },
}

fn rational(w: &Weight, field: &str) -> Result<Ratio<i64>> {
    match w {
        Weight::Rational(r) => Ok(*r),
        Weight::Float(x) => Err(Error::Config(format!(
            "schedule.{field} must be a rational like \"3/8\", got {x}"
        ))),
    }
}

impl MeasureSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            Ok(toml::from_str(text)?)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cascade(dimension: usize, refinement: u32, weights: Vec<Weight>) -> Self {
        MeasureSpec::Cascade {
            dimension,
            refinement,
            weights: Some(weights),
            schedule: None,
        }
    }

    pub fn build(&self) -> Result<MeasureModel> {
        match self {
            MeasureSpec::Cascade {
                dimension,
                refinement,
                weights,
                schedule,
            } => {
                let schedule = match (weights, schedule) {
                    (Some(w), None) => Schedule::SelfSimilar(Generator::new(
                        *dimension,
                        *refinement,
                        WeightVector::new(w.clone())?,
                    )?),
                    (None, Some(ScheduleSpec::Periodic { generators })) => Schedule::Periodic(
                        generators
                            .iter()
                            .map(|g| Generator::new(*dimension, *refinement, WeightVector::new(g.clone())?))
                            .collect::<Result<_>>()?,
                    ),
                    (None, Some(ScheduleSpec::Block { upper, lower, unit })) => {
                        if *dimension != 1 || *refinement != 1 {
                            return Err(Error::Config(
                                "block schedules are 1-dimensional with refinement 1".into(),
                            ));
                        }
                        Schedule::Block(BlockSchedule::new(
                            rational(upper, "upper")?,
                            rational(lower, "lower")?,
                            *unit,
                        )?)
                    }
                    _ => {
                        return Err(Error::Config(
                            "cascade needs exactly one of `weights` or `schedule`".into(),
                        ))
                    }
                };
                Ok(MeasureModel::Cascade(CascadeMeasure::new(schedule)?))
            }
            MeasureSpec::Density {
                dimension,
                density_id,
                beta,
                tolerance,
            } => {
                let kind = match density_id.as_str() {
                    "constant" => DensityKind::Constant,
                    "cusp-1" => DensityKind::Cusp1,
                    "cusp-2" => DensityKind::Cusp2,
                    "cusp-3" => DensityKind::Cusp3,
                    "power-law" => DensityKind::PowerLaw {
                        beta: beta.ok_or_else(|| {
                            Error::Config("density_id = \"power-law\" needs `beta`".into())
                        })?,
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "unknown density_id {other:?} (expected constant, cusp-1, cusp-2, cusp-3, power-law)"
                        )))
                    }
                };
                Ok(MeasureModel::Density(DensityMeasure::new(*dimension, kind, *tolerance)?))
            }
            MeasureSpec::Product { factors } => Ok(MeasureModel::Product(ProductMeasure::new(
                factors.iter().map(MeasureSpec::build).collect::<Result<_>>()?,
            )?)),
            MeasureSpec::Builtin { name } => catalog::lookup(name)?.spec.build(),
            MeasureSpec::Scaled { factor, measure } => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    return Err(Error::Config(format!("scale factor must be positive, got {factor}")));
                }
                Ok(measure.build()?.scaled(*factor))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_keeps_rationals() {
        let text = r#"
kind = "cascade"
dimension = 3
weights = ["9/25", "9/25", "1/5", 0, "2/25", 0, 0, 0]
"#;
        let spec = MeasureSpec::parse(text).unwrap();
        let again = MeasureSpec::parse(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(spec, again);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(MeasureSpec::parse(&json).unwrap(), spec);
        assert!(spec.build().is_ok());
    }

    #[test]
    fn rejects_bad_weights_and_schedules() {
        let bad = r#"{"kind":"cascade","dimension":1,"weights":["1/3","1/3"]}"#;
        assert!(matches!(MeasureSpec::parse(bad).unwrap().build(), Err(Error::Config(_))));
        let block = r#"
kind = "cascade"
dimension = 1
[schedule]
type = "block"
upper = 0.375
lower = "3/10"
unit = 40
"#;
        assert!(MeasureSpec::parse(block).unwrap().build().is_err());
    }

    #[test]
    fn block_and_product_specs() {
        let text = r#"
kind = "product"
[[factors]]
kind = "cascade"
dimension = 1
[factors.schedule]
type = "block"
upper = "3/8"
lower = "3/10"
unit = 40
[[factors]]
kind = "builtin"
name = "lebesgue-1"
"#;
        let m = MeasureSpec::parse(text).unwrap().build().unwrap();
        assert_eq!(m.dim(), 2);
    }
}
