use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Maximum,
}

/// A stationary point of a 1-D objective. Minima carry a basin label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub kind: CriticalKind,
    pub basin: Option<usize>,
}

/// A 1-D objective with its derivative and labeled critical points.
#[derive(Debug, Clone)]
pub struct ScalarObjective {
    pub name: String,
    pub f: fn(f64) -> f64,
    pub f_prime: fn(f64) -> f64,
    pub critical_points: Vec<CriticalPoint>,
    /// Critical points are enumerated on `[-window, window]`.
    pub window: f64,
}

impl ScalarObjective {
    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.f_prime)(x)
    }

    pub fn minima(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.critical_points
            .iter()
            .filter(|c| c.kind == CriticalKind::Minimum)
    }
}

fn basin_cos(x: f64) -> f64 {
    0.1 * x * x + 1.0 - (x * x).cos()
}

fn basin_cos_prime(x: f64) -> f64 {
    x / 5.0 + 2.0 * x * (x * x).sin()
}

fn factor13_cos(x: f64) -> f64 {
    0.5 * x * x - 2.0 * x * (2.0 * x).sin() - (2.0 * x).cos() + 1.0
}

fn factor13_cos_prime(x: f64) -> f64 {
    x * (1.0 - 4.0 * (2.0 * x).cos())
}

/// Locate the zeros of `fp` on `[-window, window]` by a sign scan refined
/// with bisection, and classify them by the sign change.
fn find_critical_points(fp: fn(f64) -> f64, window: f64) -> Vec<CriticalPoint> {
    const CELLS: usize = 200_000;
    let h = 2.0 * window / CELLS as f64;
    let grid = |i: usize| -window + i as f64 * h;
    let mut out: Vec<(f64, CriticalKind)> = Vec::new();
    let mut i = 0;
    while i < CELLS {
        let (a, b) = (grid(i), grid(i + 1));
        let (fa, fb) = (fp(a), fp(b));
        if fa == 0.0 {
            // exact zero on a grid node: classify from neighbours
            let (l, r) = (fp(a - h), fp(a + h));
            if l < 0.0 && r > 0.0 {
                out.push((a, CriticalKind::Minimum));
            } else if l > 0.0 && r < 0.0 {
                out.push((a, CriticalKind::Maximum));
            }
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if fp(mid) * fp(lo) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let kind = if fa < 0.0 {
                CriticalKind::Minimum
            } else {
                CriticalKind::Maximum
            };
            let x = 0.5 * (lo + hi);
            out.push((if x.abs() < 1e-12 * window { 0.0 } else { x }, kind));
            if fb == 0.0 {
                i += 1;
            }
        }
        i += 1;
    }
    let mut basin = 0;
    out.into_iter()
        .map(|(x, kind)| {
            let label = (kind == CriticalKind::Minimum).then(|| {
                basin += 1;
                basin - 1
            });
            CriticalPoint {
                x,
                kind,
                basin: label,
            }
        })
        .collect()
}

/// Named 1-D objectives.
///
/// * `basin_cos`: `f(x) = x^2/10 + 1 - cos(x^2)`, global wide minimum at 0.
/// * `factor13_cos`: the objective with `f'(x) = x (1 - 4 cos 2x)`, normalised
///   so that `f(0) = 0`.
///
/// Critical points are labeled on `[-2 pi, 2 pi]`.
pub fn scalar_objective_catalog(name: &str) -> Result<ScalarObjective> {
    let window = 2.0 * PI;
    let (f, f_prime): (fn(f64) -> f64, fn(f64) -> f64) = match name {
        "basin_cos" => (basin_cos, basin_cos_prime),
        "factor13_cos" => (factor13_cos, factor13_cos_prime),
        _ => {
            return Err(Error::UnknownName {
                kind: "objective",
                name: name.to_string(),
            })
        }
    };
    Ok(ScalarObjective {
        name: name.to_string(),
        f,
        f_prime,
        critical_points: find_critical_points(f_prime, window),
        window,
    })
}
