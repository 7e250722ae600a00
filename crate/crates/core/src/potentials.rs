//! Declarative potentials and their classification into the short-range,
//! long-range and point-interaction classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

/// Description of `V`. Parameters are plain `f64`; sampling converts them to
/// the grid's scalar type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    /// `amplitude · ⟨x⟩^{-ρ}`, `ρ > 1`.
    ShortRange { rho: f64, amplitude: f64 },
    /// `-Z ⟨x⟩^{-μ}`, `μ ∈ (0, 1]`.
    LongRange {
        #[serde(rename = "z")]
        charge: f64,
        mu: f64,
    },
    /// `α g_w(x)` with `g_w` the unit-mass Gaussian of standard deviation `w`.
    DeltaApprox { alpha: f64, width: f64 },
    /// Exact point interaction `α δ`, realized by the `fd2-delta` scheme; its
    /// sampled potential is zero.
    Point { alpha: f64 },
    /// Values on the grid nodes.
    Table { samples: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleClass {
    ShortRange,
    LongRange,
    PointInteraction,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub example: ExampleClass,
    /// Whether the free dynamics must be replaced by a modified one.
    pub modifier_required: bool,
    /// Sobolev orders `s` for which the norm-equivalence and compactness
    /// hypotheses are licensed.
    pub sobolev_range: Option<(f64, f64)>,
    pub note: String,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        PotentialSpec::ShortRange {
            rho: 2.0,
            amplitude: 0.0,
        }
    }

    /// Pointwise value (not defined for `Table`, zero for `Point`).
    pub fn eval<T: Real>(&self, x: T) -> Option<T> {
        let one = T::one();
        match *self {
            PotentialSpec::ShortRange { rho, amplitude } => {
                Some(T::of(amplitude) * (one + x * x).powf(-T::of(rho) / T::of(2.0)))
            }
            PotentialSpec::LongRange { charge, mu } => {
                Some(-T::of(charge) * (one + x * x).powf(-T::of(mu) / T::of(2.0)))
            }
            PotentialSpec::DeltaApprox { alpha, width } => {
                let w = T::of(width);
                let norm = w * T::two_pi().sqrt();
                Some(T::of(alpha) * (-(x * x) / (T::of(2.0) * w * w)).exp() / norm)
            }
            PotentialSpec::Point { .. } => Some(T::zero()),
            PotentialSpec::Table { .. } => None,
        }
    }

    /// Samples `V` on the grid nodes.
    pub fn sample<T: Real>(&self, grid: &Grid<T>) -> Result<Vec<T>> {
        match self {
            PotentialSpec::Table { samples } => {
                if samples.len() != grid.n_points() {
                    return Err(Error::TableLength {
                        got: samples.len(),
                        expected: grid.n_points(),
                    });
                }
                Ok(samples.iter().map(|&v| T::of(v)).collect())
            }
            PotentialSpec::DeltaApprox { width, .. } => {
                let h = grid.spacing().f64();
                if *width < 2.0 * h {
                    return Err(Error::Resolution {
                        width: *width,
                        spacing: h,
                    });
                }
                Ok(grid
                    .nodes()
                    .into_iter()
                    .map(|x| self.eval(x).unwrap())
                    .collect())
            }
            _ => Ok(grid
                .nodes()
                .into_iter()
                .map(|x| self.eval(x).unwrap())
                .collect()),
        }
    }

    /// Strength of the point interaction, if this is one.
    pub fn point_alpha(&self) -> Option<f64> {
        match *self {
            PotentialSpec::Point { alpha } => Some(alpha),
            _ => None,
        }
    }

    pub fn classify(&self) -> Classification {
        match *self {
            PotentialSpec::ShortRange { rho, .. } if rho > 1.0 => Classification {
                example: ExampleClass::ShortRange,
                modifier_required: false,
                sobolev_range: Some((-1.0, 1.0)),
                note: format!("decay <x>^-{rho} with rho > 1: unmodified free dynamics"),
            },
            PotentialSpec::ShortRange { rho, .. } => Classification {
                example: ExampleClass::Unclassified,
                modifier_required: true,
                sobolev_range: None,
                note: format!("rho = {rho} <= 1 is not short-range"),
            },
            PotentialSpec::LongRange { mu, .. } if mu > 0.0 && mu <= 1.0 => Classification {
                example: ExampleClass::LongRange,
                modifier_required: true,
                sobolev_range: Some((-2.0, 2.0)),
                note: format!("long-range tail <x>^-{mu}: modified (Dollard) dynamics"),
            },
            PotentialSpec::LongRange { mu, .. } => Classification {
                example: ExampleClass::Unclassified,
                modifier_required: mu <= 1.0,
                sobolev_range: None,
                note: format!("mu = {mu} outside (0, 1]"),
            },
            PotentialSpec::DeltaApprox { .. } | PotentialSpec::Point { .. } => Classification {
                example: ExampleClass::PointInteraction,
                modifier_required: false,
                sobolev_range: Some((-1.0, 1.0)),
                note: "point interaction: unmodified free dynamics".into(),
            },
            PotentialSpec::Table { .. } => Classification {
                example: ExampleClass::Unclassified,
                modifier_required: false,
                sobolev_range: None,
                note: "tabulated potential".into(),
            },
        }
    }
}

/// Free function form of [`PotentialSpec::sample`].
pub fn sample_potential<T: Real>(spec: &PotentialSpec, grid: &Grid<T>) -> Result<Vec<T>> {
    spec.sample(grid)
}

/// Finite-difference decay constants `max_j |∂^α V(x_j)| ⟨x_j⟩^{μ+α}` for
/// `α = 0, 1, 2`.
pub fn decay_constants<T: Real>(spec: &PotentialSpec, grid: &Grid<T>, mu: T) -> [T; 3] {
    let h = grid.spacing();
    let mut out = [T::zero(); 3];
    for x in grid.nodes() {
        let v = |y: T| spec.eval(y).unwrap_or(T::zero());
        let d0 = v(x);
        let d1 = (v(x + h) - v(x - h)) / (T::of(2.0) * h);
        let d2 = (v(x + h) - T::of(2.0) * d0 + v(x - h)) / (h * h);
        let bracket = (T::one() + x * x).sqrt();
        for (a, d) in [d0, d1, d2].into_iter().enumerate() {
            let c = d.mag() * bracket.powf(mu + T::of(a as f64));
            if c > out[a] {
                out[a] = c;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_values() {
        let sr = PotentialSpec::ShortRange {
            rho: 2.0,
            amplitude: 1.0,
        };
        assert_eq!(sr.eval(0.0f64), Some(1.0));
        let lr = PotentialSpec::LongRange {
            charge: 1.0,
            mu: 1.0,
        };
        assert_eq!(lr.eval(0.0f64), Some(-1.0));
    }

    #[test]
    fn short_range_bound_holds_on_grid() {
        let g = Grid::<f64>::new(512, 80.0).unwrap();
        let sr = PotentialSpec::ShortRange {
            rho: 1.7,
            amplitude: -0.4,
        };
        for (x, v) in g.nodes().into_iter().zip(sr.sample(&g).unwrap()) {
            assert!(v.abs() <= 0.4 * (1.0 + x * x).powf(-0.85) * (1.0 + 1e-15));
        }
    }

    #[test]
    fn delta_approx_has_unit_mass() {
        let g = Grid::<f64>::new(1024, 200.0).unwrap();
        let d = PotentialSpec::DeltaApprox {
            alpha: 1.0,
            width: 0.4,
        };
        let v = d.sample(&g).unwrap();
        let mass: f64 = v.iter().sum::<f64>() * g.spacing();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn delta_width_must_be_resolved() {
        // spacing 200/1024 ≈ 0.195: width 0.1 is below two spacings
        let g = Grid::<f64>::new(1024, 200.0).unwrap();
        let d = PotentialSpec::DeltaApprox {
            alpha: 1.0,
            width: 0.1,
        };
        assert!(matches!(d.sample(&g), Err(Error::Resolution { .. })));
        let fine = Grid::<f64>::new(8192, 200.0).unwrap();
        let v = d.sample(&fine).unwrap();
        let mass: f64 = v.iter().sum::<f64>() * fine.spacing();
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn delta_converges_weakly_at_second_order() {
        let g = Grid::<f64>::new(8192, 40.0).unwrap();
        let f = |x: f64| (x * 0.7).cos() + 0.2 * x;
        let errs: Vec<f64> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&w| {
                let v = PotentialSpec::DeltaApprox {
                    alpha: 1.5,
                    width: w,
                }
                .sample(&g)
                .unwrap();
                let pair: f64 = g
                    .nodes()
                    .iter()
                    .zip(&v)
                    .map(|(&x, &vx)| vx * f(x))
                    .sum::<f64>()
                    * g.spacing();
                (pair - 1.5 * f(0.0)).abs()
            })
            .collect();
        assert!(
            errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5,
            "{errs:?}"
        );
    }

    #[test]
    fn table_length_checked() {
        let g = Grid::<f64>::new(16, 4.0).unwrap();
        let t = PotentialSpec::Table {
            samples: vec![0.0; 8],
        };
        assert!(matches!(
            t.sample(&g),
            Err(Error::TableLength {
                got: 8,
                expected: 16
            })
        ));
        let ok = PotentialSpec::Table {
            samples: vec![0.5; 16],
        };
        assert_eq!(ok.sample(&g).unwrap(), vec![0.5; 16]);
    }

    #[test]
    fn sampling_is_linear_in_strength() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let a = PotentialSpec::LongRange {
            charge: 1.0,
            mu: 0.5,
        }
        .sample(&g)
        .unwrap();
        let b = PotentialSpec::LongRange {
            charge: -2.5,
            mu: 0.5,
        }
        .sample(&g)
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y + 2.5 * x).abs() < 1e-15);
        }
    }

    #[test]
    fn long_range_decay_constants_grid_independent() {
        let spec = PotentialSpec::LongRange {
            charge: 1.0,
            mu: 0.8,
        };
        let c1 = decay_constants(&spec, &Grid::<f64>::new(1024, 400.0).unwrap(), 0.8);
        let c2 = decay_constants(&spec, &Grid::<f64>::new(4096, 1600.0).unwrap(), 0.8);
        for a in 0..3 {
            assert!(c1[a].is_finite() && c1[a] < 5.0);
            assert!(
                (c1[a] - c2[a]).abs() / c2[a] < 0.05,
                "{a}: {} {}",
                c1[a],
                c2[a]
            );
        }
    }

    #[test]
    fn classification_table() {
        let c = PotentialSpec::ShortRange {
            rho: 2.0,
            amplitude: 1.0,
        }
        .classify();
        assert_eq!(c.example, ExampleClass::ShortRange);
        assert!(!c.modifier_required);
        assert_eq!(c.sobolev_range, Some((-1.0, 1.0)));
        let c = PotentialSpec::LongRange {
            charge: 1.0,
            mu: 0.5,
        }
        .classify();
        assert_eq!(c.example, ExampleClass::LongRange);
        assert!(c.modifier_required);
        assert_eq!(c.sobolev_range, Some((-2.0, 2.0)));
        let c = PotentialSpec::DeltaApprox {
            alpha: 1.0,
            width: 0.3,
        }
        .classify();
        assert_eq!(c.example, ExampleClass::PointInteraction);
        assert!(!c.modifier_required);
        assert_eq!(c.sobolev_range, Some((-1.0, 1.0)));
        let c = PotentialSpec::Table { samples: vec![] }.classify();
        assert_eq!(c.example, ExampleClass::Unclassified);
    }

    #[test]
    fn toml_round_trip_uses_kind_tag() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Wrap {
            potential: PotentialSpec,
        }
        let text = "[potential]\nkind = \"long-range\"\nz = 1.0\nmu = 0.5\n";
        let w: Wrap = toml::from_str(text).unwrap();
        assert_eq!(
            w.potential,
            PotentialSpec::LongRange {
                charge: 1.0,
                mu: 0.5
            }
        );
        let again: Wrap = toml::from_str(&toml::to_string(&w).unwrap()).unwrap();
        assert_eq!(again, w);
    }
}
