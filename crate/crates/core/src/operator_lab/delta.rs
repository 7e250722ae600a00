//! Rank-one resolvent correction of the point interaction.
//!
//! `K_z = (H_α - z)^{-1} - (H_0 - z)^{-1}` has kernel
//! `c(z, α) e^{i√z(|x|+|x'|)}` with `Im √z > 0`. Two closed forms for the
//! prefactor circulate; both are reported next to the value fitted against
//! the dense `fd2-delta` oracle:
//!
//! * [`standard_prefactor`]: `α / (2√z (2√z + iα))`, from the free kernel
//!   `(i/(2√z)) e^{i√z|x-x'|}`;
//! * [`alternate_prefactor`]: `-2α√z (iα + 2√z)^{-1}` (differs by a factor `-4z`).

use nalgebra::DMatrix;
use num_complex::Complex;

use super::{build_free, build_hamiltonian, Scheme};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::{ComplexExt, Real};

/// Square root on the branch `Im √z > 0`.
pub fn upper_sqrt<T: Real>(z: Complex<T>) -> Complex<T> {
    let r = z.sqrt_c();
    if r.im < T::zero() {
        -r
    } else {
        r
    }
}

pub fn standard_prefactor<T: Real>(z: Complex<T>, alpha: T) -> Complex<T> {
    let k = upper_sqrt(z);
    let two = T::of(2.0);
    let a = Complex::new(alpha, T::zero());
    a / (k.scale(two) * (k.scale(two) + Complex::new(T::zero(), alpha)))
}

pub fn alternate_prefactor<T: Real>(z: Complex<T>, alpha: T) -> Complex<T> {
    let k = upper_sqrt(z);
    let two = T::of(2.0);
    -(k.scale(two * alpha)) / (Complex::new(T::zero(), alpha) + k.scale(two))
}

#[derive(Clone, Debug)]
pub struct DeltaKernel<T: Real> {
    /// `c · e^{i√z(|x_j|+|x_k|)} · h` with the calibrated `c`.
    pub kernel: DMatrix<Complex<T>>,
    pub calibrated: Complex<T>,
    pub standard: Complex<T>,
    pub alternate: Complex<T>,
    /// `‖oracle - c·outer‖_F / ‖oracle‖_F`.
    pub fit_residual: T,
    /// `calibrated / standard`.
    pub calibrated_over_standard: Complex<T>,
    /// `alternate / standard` (equals `-4z`).
    pub alternate_over_standard: Complex<T>,
    /// Set for `α = 0`, where the kernel vanishes.
    pub zero: bool,
}

/// Samples the rank-one kernel and calibrates its prefactor against the dense
/// resolvent difference of the `fd2-delta` discretization.
pub fn delta_resolvent_kernel<T: Real>(
    z: Complex<T>,
    alpha: T,
    grid: &Grid<T>,
) -> Result<DeltaKernel<T>> {
    if z.im == T::zero() {
        return Err(Error::RealSpectralParameter { im: 0.0 });
    }
    let n = grid.n_points();
    let zero_c = Complex::new(T::zero(), T::zero());
    let standard = standard_prefactor(z, alpha);
    let alternate = alternate_prefactor(z, alpha);
    let alternate_over_standard = if alpha == T::zero() {
        -z.scale(T::of(4.0))
    } else {
        alternate / standard
    };
    if alpha == T::zero() {
        return Ok(DeltaKernel {
            kernel: DMatrix::from_element(n, n, zero_c),
            calibrated: zero_c,
            standard,
            alternate,
            fit_residual: T::zero(),
            calibrated_over_standard: zero_c,
            alternate_over_standard,
            zero: true,
        });
    }
    let zeros = vec![T::zero(); n];
    let h0 = build_free(grid, Scheme::Fd2)?;
    let ha = build_hamiltonian(grid, Scheme::Fd2Delta { alpha: alpha.f64() }, &zeros)?;
    let oracle = ha.resolvent_matrix(z)? - h0.resolvent_matrix(z)?;

    let k = upper_sqrt(z);
    let h = grid.spacing();
    let profile: Vec<Complex<T>> = grid
        .nodes()
        .into_iter()
        .map(|x| (Complex::new(T::zero(), x.mag()) * k).exp_c())
        .collect();
    let outer = DMatrix::from_fn(n, n, |i, j| (profile[i] * profile[j]).scale(h));

    let mut num = zero_c;
    let mut den = T::zero();
    let mut oracle_sq = T::zero();
    for (o, e) in oracle.iter().zip(outer.iter()) {
        num += e.conj() * o;
        den += e.norm_sqr();
        oracle_sq += o.norm_sqr();
    }
    let calibrated = num.unscale(den);
    let mut resid = T::zero();
    for (o, e) in oracle.iter().zip(outer.iter()) {
        resid += (o - e * calibrated).norm_sqr();
    }
    let kernel = outer.map(|e| e * calibrated);
    Ok(DeltaKernel {
        kernel,
        calibrated,
        standard,
        alternate,
        fit_residual: (resid / oracle_sq).sqrt(),
        calibrated_over_standard: calibrated / standard,
        alternate_over_standard,
        zero: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_has_positive_imaginary_part() {
        for z in [
            Complex::new(0.0, 1.0),
            Complex::new(0.0, -1.0),
            Complex::new(-2.0, 0.1),
            Complex::new(3.0, -0.2),
        ] {
            let k = upper_sqrt(z);
            assert!(k.im > 0.0);
            assert!((k * k - z).norm() < 1e-14);
        }
    }

    #[test]
    fn prefactor_ratio_is_minus_four_z() {
        let z = Complex::new(0.3, 1.2);
        let r = alternate_prefactor(z, 0.7) / standard_prefactor(z, 0.7);
        assert!((r + z * 4.0).norm() < 1e-13);
    }

    #[test]
    fn zero_strength_gives_zero_kernel() {
        let g = Grid::<f64>::new(32, 10.0).unwrap();
        let k = delta_resolvent_kernel(Complex::new(0.0, 1.0), 0.0, &g).unwrap();
        assert!(k.zero);
        assert!(k.kernel.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn calibrated_close_to_standard_on_moderate_grid() {
        let g = Grid::<f64>::new(256, 50.0).unwrap();
        let k = delta_resolvent_kernel(Complex::new(0.0, 1.0), 1.0, &g).unwrap();
        assert!(k.fit_residual < 5e-2, "{}", k.fit_residual);
        assert!((k.calibrated_over_standard - Complex::new(1.0, 0.0)).norm() < 0.1);
    }
}
