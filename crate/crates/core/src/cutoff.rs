//! Energy cutoffs `φ_R`, `ψ_R` used by the Cauchy-budget decomposition.
//!
//! `φ(λ) = 1` for `|λ| ≤ 1`, `0` for `|λ| ≥ 2`, cubic Hermite in between;
//! `ψ(λ) = φ(λ/2)`, hence `ψφ = φ`. Both are C¹, which is all the pointwise
//! functional calculus needs.

use crate::scalar::Real;

pub fn smoothstep<T: Real>(lambda: T) -> T {
    let a = lambda.mag();
    if a <= T::one() {
        T::one()
    } else if a >= T::of(2.0) {
        T::zero()
    } else {
        let u = a - T::one();
        T::one() - u * u * (T::of(3.0) - T::of(2.0) * u)
    }
}

/// `φ_R(λ) = φ(λ/R)`.
pub fn phi_r<T: Real>(lambda: T, r: T) -> T {
    smoothstep(lambda / r)
}

/// `ψ_R(λ) = φ(λ/(2R))`.
pub fn psi_r<T: Real>(lambda: T, r: T) -> T {
    smoothstep(lambda / (T::of(2.0) * r))
}

/// Human-readable description embedded in reports.
pub const CUTOFF_DESCRIPTION: &str =
    "phi(l)=1 for |l|<=1, 0 for |l|>=2, 1-3u^2+2u^3 with u=|l|-1 between; psi(l)=phi(l/2); phi_R(l)=phi(l/R), psi_R(l)=psi(l/R)";
