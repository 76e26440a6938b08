//! Registry of built-in measures.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::spec::ScheduleSpec;
use crate::measure::MeasureSpec;
use crate::weights::Weight;

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub dimension: usize,
    pub description: &'static str,
    pub spec: MeasureSpec,
}

fn r(n: i64, d: i64) -> Weight {
    Weight::rational(n, d)
}

fn corner_weights(w: [Weight; 4]) -> Vec<Weight> {
    // Children 0, 1, 2, 4: the origin corner and its three axis neighbours.
    let [a, b, c, e] = w;
    vec![a, b, c, r(0, 1), e, r(0, 1), r(0, 1), r(0, 1)]
}

/// 4x4 generator (refinement 2) with the given weights on the inner 2x2
/// block, listed row-major in `(x, y)`.
fn inner_square(w: [Weight; 4]) -> Vec<Weight> {
    let mut out = vec![r(0, 1); 16];
    let [a, b, c, e] = w;
    out[1 + 4] = a;
    out[2 + 4] = b;
    out[1 + 8] = c;
    out[2 + 8] = e;
    out
}

/// 8x8 generator (refinement 3) with weight proportional to `i + j` on the
/// inner 6x6 block.
fn inner_square_fine() -> Vec<Weight> {
    let mut out = vec![r(0, 1); 64];
    for i in 1..7 {
        for j in 1..7 {
            out[i + 8 * j] = r((i + j) as i64, 252);
        }
    }
    out
}

fn lebesgue(d: usize) -> MeasureSpec {
    MeasureSpec::cascade(d, 1, vec![r(1, 1 << d); 1 << d])
}

fn density(id: &str) -> MeasureSpec {
    MeasureSpec::Density {
        dimension: 3,
        density_id: id.into(),
        beta: None,
        tolerance: 1e-10,
    }
}

fn block(upper: Weight, lower: Weight, unit: u64) -> MeasureSpec {
    MeasureSpec::Cascade {
        dimension: 1,
        refinement: 1,
        weights: None,
        schedule: Some(ScheduleSpec::Block { upper, lower, unit }),
    }
}

pub fn entries() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "lebesgue-1",
            dimension: 1,
            description: "Lebesgue measure on (0,1] as a uniform dyadic cascade",
            spec: lebesgue(1),
        },
        CatalogEntry {
            name: "lebesgue-2",
            dimension: 2,
            description: "Lebesgue measure on the unit square",
            spec: lebesgue(2),
        },
        CatalogEntry {
            name: "lebesgue-3",
            dimension: 3,
            description: "Lebesgue measure on the unit cube",
            spec: lebesgue(3),
        },
        CatalogEntry {
            name: "sierpinski-tetraeder",
            dimension: 3,
            description: "self-similar measure on the Sierpinski tetrahedron, weights (0.36,0.36,0.2,0.08) on the corner children",
            spec: MeasureSpec::cascade(3, 1, corner_weights([r(9, 25), r(9, 25), r(1, 5), r(2, 25)])),
        },
        CatalogEntry {
            name: "ahlfors-4of8",
            dimension: 3,
            description: "uniform cascade on 4 of 8 children; 2-Ahlfors-David regular",
            spec: MeasureSpec::cascade(3, 1, corner_weights([r(1, 4), r(1, 4), r(1, 4), r(1, 4)])),
        },
        CatalogEntry {
            name: "binomial-0.7",
            dimension: 1,
            description: "binomial cascade on (0,1] with weights (0.7, 0.3)",
            spec: MeasureSpec::cascade(1, 1, vec![r(7, 10), r(3, 10)]),
        },
        CatalogEntry {
            name: "open-square-uniform",
            dimension: 2,
            description: "cascade on the inner 2x2 block of a 4x4 grid, equal weights; support in the open square",
            spec: MeasureSpec::cascade(2, 2, inner_square([r(1, 4), r(1, 4), r(1, 4), r(1, 4)])),
        },
        CatalogEntry {
            name: "open-square-graded",
            dimension: 2,
            description: "cascade on the inner 2x2 block of a 4x4 grid, weights (0.1,0.2,0.3,0.4)",
            spec: MeasureSpec::cascade(2, 2, inner_square([r(1, 10), r(1, 5), r(3, 10), r(2, 5)])),
        },
        CatalogEntry {
            name: "open-square-skewed",
            dimension: 2,
            description: "cascade on the inner 2x2 block of a 4x4 grid, weights (0.5,0.25,0.15,0.1)",
            spec: MeasureSpec::cascade(2, 2, inner_square([r(1, 2), r(1, 4), r(3, 20), r(1, 10)])),
        },
        CatalogEntry {
            name: "open-square-fine",
            dimension: 2,
            description: "cascade on the inner 6x6 block of an 8x8 grid, weight proportional to i+j",
            spec: MeasureSpec::cascade(2, 3, inner_square_fine()),
        },
        CatalogEntry {
            name: "cusp-1",
            dimension: 3,
            description: "density z^-2 on the cusp 0 <= x,y <= z < 1/2 (embedding not compact)",
            spec: density("cusp-1"),
        },
        CatalogEntry {
            name: "cusp-2",
            dimension: 3,
            description: "density z^-2 (ln 1/z)^-4/3 on the cusp 0 <= x,y <= z < 1/2 (compact, spectral dimension 3/2)",
            spec: density("cusp-2"),
        },
        CatalogEntry {
            name: "cusp-3",
            dimension: 3,
            description: "density z^-2 ln(1/z) on the cusp 0 <= x,y <= z < 1/2 (embedding not continuous)",
            spec: density("cusp-3"),
        },
        CatalogEntry {
            name: "block-cantor",
            dimension: 1,
            description: "homogeneous Cantor measure whose branching exponent oscillates between 3/10 and 3/8",
            spec: block(r(3, 8), r(3, 10), 40),
        },
        CatalogEntry {
            name: "block-cantor-product",
            dimension: 3,
            description: "block-cantor x Lebesgue x Lebesgue; partition function without a limit",
            spec: MeasureSpec::Product {
                factors: vec![block(r(3, 8), r(3, 10), 40), lebesgue(1), lebesgue(1)],
            },
        },
    ]
}

pub fn lookup(name: &str) -> Result<CatalogEntry> {
    entries().into_iter().find(|e| e.name == name).ok_or_else(|| {
        let names: Vec<_> = entries().iter().map(|e| e.name).collect();
        Error::Config(format!("unknown builtin measure {name:?}; known: {}", names.join(", ")))
    })
}
