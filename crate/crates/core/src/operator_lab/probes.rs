use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HermitianOperator;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Real;

/// Machine-readable probe output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub probe: String,
    pub params: BTreeMap<String, f64>,
    pub values: Vec<f64>,
    pub verdict: String,
}

/// Singular values of `⟨H_0⟩^{s/2}[(H_0 - z)^{-1} - (H - z)^{-1}]`.
#[derive(Clone, Debug)]
pub struct ResolventProbe {
    /// Decreasing.
    pub singular_values: Vec<f64>,
    /// `σ_k / σ_1` (all zero when `σ_1 = 0`).
    pub ratios: Vec<f64>,
    /// Number of `σ_k / σ_1 > 1e-6`.
    pub effective_rank: usize,
}

pub const EFFECTIVE_RANK_THRESHOLD: f64 = 1e-6;

impl ResolventProbe {
    pub fn ratio(&self, k: usize) -> f64 {
        self.ratios.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn record(&self, z: (f64, f64), s: f64) -> ProbeRecord {
        let mut params = BTreeMap::new();
        params.insert("z_re".into(), z.0);
        params.insert("z_im".into(), z.1);
        params.insert("s".into(), s);
        params.insert("effective_rank".into(), self.effective_rank as f64);
        params.insert("rank_threshold".into(), EFFECTIVE_RANK_THRESHOLD);
        let verdict = if self.singular_values.first().copied().unwrap_or(0.0) == 0.0 {
            "zero"
        } else if self.effective_rank <= 1 {
            "rank-one"
        } else {
            "decaying"
        };
        ProbeRecord {
            probe: "resolvent-difference".into(),
            params,
            values: self.singular_values.clone(),
            verdict: verdict.into(),
        }
    }
}

/// Applies the Sobolev multiplier to every column of `m`.
fn sobolev_columns<T: Real>(
    grid: &Grid<T>,
    m: &DMatrix<Complex<T>>,
    s: T,
) -> Result<DMatrix<Complex<T>>> {
    let w = grid.sobolev_weights(s);
    let n = m.nrows();
    let mut out = DMatrix::<Complex<T>>::zeros(n, m.ncols());
    for j in 0..m.ncols() {
        let col = Field::new(grid, m.column(j).iter().copied().collect())?;
        let mapped = col.apply_real_multiplier(&w);
        out.column_mut(j)
            .iter_mut()
            .zip(mapped.values())
            .for_each(|(o, v)| *o = *v);
    }
    Ok(out)
}

/// Compactness probe for the resolvent difference (the `ℋ → ℋ^s` variant).
pub fn resolvent_difference_probe<T: Real>(
    h0: &HermitianOperator<T>,
    h: &HermitianOperator<T>,
    z: Complex<T>,
    s: T,
) -> Result<ResolventProbe> {
    if z.im == T::zero() {
        return Err(Error::RealSpectralParameter { im: 0.0 });
    }
    if h0.grid() != h.grid() {
        return Err(Error::GridMismatch);
    }
    let diff = h0.resolvent_matrix(z)? - h.resolvent_matrix(z)?;
    let m = sobolev_columns(h.grid(), &diff, s)?;
    let mut sv: Vec<f64> = m.singular_values().iter().map(|x| x.f64()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let top = sv.first().copied().unwrap_or(0.0);
    let ratios: Vec<f64> = sv
        .iter()
        .map(|&x| if top > 0.0 { x / top } else { 0.0 })
        .collect();
    let effective_rank = ratios
        .iter()
        .filter(|&&r| r > EFFECTIVE_RANK_THRESHOLD)
        .count();
    Ok(ResolventProbe {
        singular_values: sv,
        ratios,
        effective_rank,
    })
}

#[derive(Clone, Debug)]
pub struct BoundState<T: Real> {
    pub energy: T,
    /// Unit L² norm.
    pub field: Field<T>,
    /// Mass outside `|x| ≤ L/4`.
    pub outer_mass: T,
    /// `outer_mass > 1e-6`: the domain is too small to hold the state.
    pub domain_too_small: bool,
}

/// Eigenpairs with `λ < -threshold`.
pub fn bound_states<T: Real>(op: &HermitianOperator<T>, threshold: T) -> Vec<BoundState<T>> {
    let quarter = op.grid().length() / T::of(4.0);
    op.eigenvalues()
        .iter()
        .enumerate()
        .take_while(|(_, &l)| l < -threshold)
        .map(|(j, &l)| {
            let field = op.eigenfield(j);
            let outer_mass = field.mass_outside(quarter);
            BoundState {
                energy: l,
                field,
                outer_mass,
                domain_too_small: outer_mass > T::of(1e-6),
            }
        })
        .collect()
}

/// `f ↦ f - Σ ⟨v_j, f⟩ v_j` over the bound states: the desk-scale `P_ac(H)`.
#[derive(Clone, Debug)]
pub struct AcProjector<T: Real> {
    states: Vec<Field<T>>,
}

impl<T: Real> AcProjector<T> {
    pub fn new(op: &HermitianOperator<T>, threshold: T) -> Self {
        Self {
            states: bound_states(op, threshold)
                .into_iter()
                .map(|b| b.field)
                .collect(),
        }
    }

    pub fn identity() -> Self {
        Self { states: Vec::new() }
    }

    pub fn n_bound(&self) -> usize {
        self.states.len()
    }

    pub fn apply(&self, f: &Field<T>) -> Result<Field<T>> {
        let mut out = f.clone();
        for v in &self.states {
            let c = v.inner(f)?;
            out = &out - &v.scaled_complex(c);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub min: f64,
    pub max: f64,
    pub ratios: Vec<f64>,
}

/// Draws `n_samples` random fields band-limited to `|ξ| ≤ band` and returns
/// the spread of `‖⟨H⟩^{s/2} f‖ / ‖⟨H_0⟩^{s/2} f‖`.
pub fn norm_equivalence_probe<T: Real>(
    h: &HermitianOperator<T>,
    s: T,
    n_samples: usize,
    seed: u64,
    band: T,
) -> Result<RatioStats> {
    if s.mag() > T::of(2.0) {
        return Err(Error::Config(format!(
            "norm equivalence probe needs |s| <= 2, got {s}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quarter = s / T::of(4.0);
    let mut ratios = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let f = Field::random_band_limited(h.grid(), band, &mut rng);
        let lhs = h
            .apply_real_function(|l| (T::one() + l * l).powf(quarter), &f)?
            .norm();
        let rhs = f.sobolev_norm(s);
        ratios.push((lhs / rhs).f64());
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RatioStats { min, max, ratios })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStats {
    pub coarse: RatioStats,
    pub fine: RatioStats,
    /// `|min_fine - min_coarse| / min_coarse`.
    pub min_change: f64,
    pub max_change: f64,
}

/// Runs the norm-equivalence probe on `n` and `2n` nodes at fixed length.
/// Samples coincide on both grids because the band and seed are shared.
pub fn norm_equivalence_refinement<T: Real>(
    n: usize,
    length: T,
    build: impl Fn(&Grid<T>) -> Result<HermitianOperator<T>>,
    s: T,
    n_samples: usize,
    seed: u64,
    band: T,
) -> Result<RefinementStats> {
    let coarse_grid = Grid::new(n, length)?;
    let fine_grid = Grid::new(2 * n, length)?;
    let coarse = norm_equivalence_probe(&build(&coarse_grid)?, s, n_samples, seed, band)?;
    let fine = norm_equivalence_probe(&build(&fine_grid)?, s, n_samples, seed, band)?;
    let min_change = (fine.min - coarse.min).abs() / coarse.min;
    let max_change = (fine.max - coarse.max).abs() / coarse.max;
    Ok(RefinementStats {
        coarse,
        fine,
        min_change,
        max_change,
    })
}
