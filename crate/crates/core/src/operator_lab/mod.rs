//! Dense Hermitian discretizations of `H = H_0 + V` and their functional
//! calculus by eigendecomposition.
//!
//! Every operator is diagonalized once at construction and is immutable
//! afterwards, so it can be shared between threads. `g(H) f` is
//! `Σ_j g(λ_j) ⟨v_j, f⟩ v_j`, exact for the discrete operator.

mod delta;
mod probes;

pub use delta::{
    delta_resolvent_kernel, alternate_prefactor, standard_prefactor, upper_sqrt, DeltaKernel,
};
pub use probes::{
    bound_states, norm_equivalence_probe, norm_equivalence_refinement, resolvent_difference_probe,
    AcProjector, BoundState, ProbeRecord, RatioStats, RefinementStats, ResolventProbe,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::propagators::Kinetic;
use crate::scalar::{polar, ComplexExt, Real};

/// Discretization of the kinetic part (and of the point interaction).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact multiplier `ξ²` plus diagonal `V`.
    Spectral,
    /// Periodic three-point Laplacian plus diagonal `V`.
    Fd2,
    /// `Fd2` with the jump condition `f'(0+) - f'(0-) = α f(0)` lumped into
    /// the origin row as `α/h`.
    Fd2Delta { alpha: f64 },
}

impl Scheme {
    pub fn kinetic(&self) -> Kinetic {
        match self {
            Scheme::Spectral => Kinetic::Exact,
            Scheme::Fd2 | Scheme::Fd2Delta { .. } => Kinetic::Fd2,
        }
    }

    /// The same scheme with the interaction removed.
    pub fn free(&self) -> Scheme {
        match self {
            Scheme::Fd2Delta { .. } => Scheme::Fd2,
            s => *s,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Spectral => "spectral",
            Scheme::Fd2 => "fd2",
            Scheme::Fd2Delta { .. } => "fd2-delta",
        }
    }
}

enum Basis<T: Real> {
    Real(DMatrix<T>),
    Complex(DMatrix<Complex<T>>),
}

/// Hermitian matrix on a grid together with its eigendecomposition.
pub struct HermitianOperator<T: Real> {
    grid: Grid<T>,
    matrix: DMatrix<Complex<T>>,
    scheme: Option<Scheme>,
    eigenvalues: Vec<T>,
    basis: Basis<T>,
}

impl<T: Real> std::fmt::Debug for HermitianOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HermitianOperator")
            .field("grid", &self.grid)
            .field("scheme", &self.scheme)
            .finish_non_exhaustive()
    }
}

/// Kinetic matrix of the given discretization (real symmetric).
fn kinetic_matrix<T: Real>(grid: &Grid<T>, kinetic: Kinetic) -> DMatrix<T> {
    let n = grid.n_points();
    let mut m = DMatrix::<T>::zeros(n, n);
    match kinetic {
        Kinetic::Fd2 => {
            let h2 = grid.spacing() * grid.spacing();
            let diag = T::of(2.0) / h2;
            let off = -T::one() / h2;
            for j in 0..n {
                m[(j, j)] = diag;
                m[(j, (j + 1) % n)] = off;
                m[((j + 1) % n, j)] = off;
            }
        }
        Kinetic::Exact => {
            // circulant: column 0 is H_0 applied to the unit vector at node 0
            let mut unit = Field::zeros(grid);
            unit.values_mut()[0] = Complex::new(T::one(), T::zero());
            let col = unit.apply_real_multiplier(&kinetic.symbol(grid));
            let c = col.values();
            for i in 0..n {
                for j in 0..n {
                    let a = c[(i + n - j) % n].re;
                    let b = c[(j + n - i) % n].re;
                    m[(i, j)] = (a + b) / T::of(2.0);
                }
            }
        }
    }
    m
}

/// Assembles `H` for the scheme with the sampled potential on the diagonal.
pub fn build_hamiltonian<T: Real>(
    grid: &Grid<T>,
    scheme: Scheme,
    potential: &[T],
) -> Result<HermitianOperator<T>> {
    if potential.len() != grid.n_points() {
        return Err(Error::TableLength {
            got: potential.len(),
            expected: grid.n_points(),
        });
    }
    let mut m = kinetic_matrix(grid, scheme.kinetic());
    for (j, &v) in potential.iter().enumerate() {
        m[(j, j)] += v;
    }
    if let Scheme::Fd2Delta { alpha } = scheme {
        let o = grid.origin_index();
        if grid.x(o) != T::zero() {
            return Err(Error::MissingOrigin);
        }
        m[(o, o)] += T::of(alpha) / grid.spacing();
    }
    let complex = m.map(|v| Complex::new(v, T::zero()));
    HermitianOperator::assemble(grid, complex, Some(scheme), Some(m))
}

/// `H_0` of the scheme: no potential, no point interaction.
pub fn build_free<T: Real>(grid: &Grid<T>, scheme: Scheme) -> Result<HermitianOperator<T>> {
    build_hamiltonian(grid, scheme.free(), &vec![T::zero(); grid.n_points()])
}

impl<T: Real> HermitianOperator<T> {
    /// Wraps an arbitrary Hermitian matrix.
    pub fn from_matrix(grid: &Grid<T>, matrix: DMatrix<Complex<T>>) -> Result<Self> {
        if matrix.nrows() != grid.n_points() || matrix.ncols() != grid.n_points() {
            return Err(Error::TableLength {
                got: matrix.nrows(),
                expected: grid.n_points(),
            });
        }
        let real = if matrix.iter().all(|c| c.im == T::zero()) {
            Some(matrix.map(|c| c.re))
        } else {
            None
        };
        Self::assemble(grid, matrix, None, real)
    }

    fn assemble(
        grid: &Grid<T>,
        matrix: DMatrix<Complex<T>>,
        scheme: Option<Scheme>,
        real: Option<DMatrix<T>>,
    ) -> Result<Self> {
        let n = matrix.nrows();
        let mut scale = T::zero();
        let mut defect = T::zero();
        for i in 0..n {
            for j in 0..n {
                scale = scale.max(matrix[(i, j)].mag());
                defect = defect.max((matrix[(i, j)] - matrix[(j, i)].conj()).mag());
            }
        }
        if defect > T::of(1e-12) * scale.max(T::eps()) {
            return Err(Error::NotHermitian {
                defect: defect.f64(),
            });
        }
        let (values, basis) = match real {
            Some(m) => {
                let eig = SymmetricEigen::new(m);
                let order = sorted_order(eig.eigenvalues.as_slice());
                let vals: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vecs = eig.eigenvectors.select_columns(&order);
                (vals, Basis::Real(vecs))
            }
            None => {
                let eig = SymmetricEigen::new(matrix.clone());
                let order = sorted_order(eig.eigenvalues.as_slice());
                let vals: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vecs = eig.eigenvectors.select_columns(&order);
                (vals, Basis::Complex(vecs))
            }
        };
        Ok(Self {
            grid: grid.clone(),
            matrix,
            scheme,
            eigenvalues: values,
            basis,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn scheme(&self) -> Option<Scheme> {
        self.scheme
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Eigenvector matrix (columns orthonormal, ordered like the eigenvalues).
    pub fn eigenvectors(&self) -> DMatrix<Complex<T>> {
        match &self.basis {
            Basis::Real(v) => v.map(|x| Complex::new(x, T::zero())),
            Basis::Complex(v) => v.clone(),
        }
    }

    /// Eigenvector `j` as a field normalized in the grid's L² norm.
    pub fn eigenfield(&self, j: usize) -> Field<T> {
        let scale = T::one() / self.grid.spacing().sqrt();
        let values = match &self.basis {
            Basis::Real(v) => v
                .column(j)
                .iter()
                .map(|&x| Complex::new(x * scale, T::zero()))
                .collect(),
            Basis::Complex(v) => v.column(j).iter().map(|&x| x.scale(scale)).collect(),
        };
        Field::new(&self.grid, values).expect("eigenvector length matches grid")
    }

    /// `M f`.
    pub fn apply(&self, f: &Field<T>) -> Result<Field<T>> {
        self.check_grid(f)?;
        let v = DVector::from_column_slice(f.values());
        let out = &self.matrix * v;
        Field::new(&self.grid, out.as_slice().to_vec())
    }

    fn check_grid(&self, f: &Field<T>) -> Result<()> {
        if f.grid() != &self.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    fn evaluate(&self, g: &impl Fn(T) -> Complex<T>) -> Result<Vec<Complex<T>>> {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let v = g(l);
                if v.re.is_finite() && v.im.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        eigenvalue: l.f64(),
                    })
                }
            })
            .collect()
    }

    /// `g(H) f`.
    pub fn apply_function(&self, g: impl Fn(T) -> Complex<T>, f: &Field<T>) -> Result<Field<T>> {
        self.check_grid(f)?;
        let gv = self.evaluate(&g)?;
        let values: Vec<Complex<T>> = match &self.basis {
            Basis::Real(v) => {
                let re = DVector::from_iterator(f.values().len(), f.values().iter().map(|c| c.re));
                let im = DVector::from_iterator(f.values().len(), f.values().iter().map(|c| c.im));
                let cr = v.tr_mul(&re);
                let ci = v.tr_mul(&im);
                let mut ar = DVector::<T>::zeros(cr.len());
                let mut ai = DVector::<T>::zeros(cr.len());
                for j in 0..cr.len() {
                    let c = Complex::new(cr[j], ci[j]) * gv[j];
                    ar[j] = c.re;
                    ai[j] = c.im;
                }
                let outr = v * ar;
                let outi = v * ai;
                outr.iter()
                    .zip(outi.iter())
                    .map(|(&a, &b)| Complex::new(a, b))
                    .collect()
            }
            Basis::Complex(v) => {
                let fv = DVector::from_column_slice(f.values());
                let mut c = v.ad_mul(&fv);
                for j in 0..c.len() {
                    c[j] *= gv[j];
                }
                (v * c).as_slice().to_vec()
            }
        };
        Field::new(&self.grid, values)
    }

    /// Real-valued convenience wrapper around [`apply_function`](Self::apply_function).
    pub fn apply_real_function(&self, g: impl Fn(T) -> T, f: &Field<T>) -> Result<Field<T>> {
        self.apply_function(|l| Complex::new(g(l), T::zero()), f)
    }

    /// Dense matrix of `g(H)`.
    pub fn function_matrix(&self, g: impl Fn(T) -> Complex<T>) -> Result<DMatrix<Complex<T>>> {
        let gv = self.evaluate(&g)?;
        Ok(match &self.basis {
            Basis::Real(v) => {
                let n = v.nrows();
                let mut left_r = v.clone();
                let mut left_i = v.clone();
                for j in 0..n {
                    let (gr, gi) = (gv[j].re, gv[j].im);
                    left_r.column_mut(j).scale_mut(gr);
                    left_i.column_mut(j).scale_mut(gi);
                }
                let a = &left_r * v.transpose();
                let b = &left_i * v.transpose();
                DMatrix::from_fn(n, n, |i, j| Complex::new(a[(i, j)], b[(i, j)]))
            }
            Basis::Complex(v) => {
                let mut left = v.clone();
                for j in 0..v.ncols() {
                    let g = gv[j];
                    left.column_mut(j).apply(|x| *x *= g);
                }
                left * v.adjoint()
            }
        })
    }

    /// Resolvent matrix `(H - z)^{-1}` for non-real `z`.
    pub fn resolvent_matrix(&self, z: Complex<T>) -> Result<DMatrix<Complex<T>>> {
        if z.im == T::zero() {
            return Err(Error::RealSpectralParameter { im: 0.0 });
        }
        self.function_matrix(|l| (Complex::new(l, T::zero()) - z).inv())
    }

    /// `e^{-itH} f`.
    pub fn propagate(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        if t == T::zero() {
            if f.grid() != &self.grid {
                return Err(Error::GridMismatch);
            }
            return Ok(f.clone());
        }
        self.apply_function(|l| polar(T::one(), -t * l), f)
    }

    /// Largest deviation of `V^† V` from the identity.
    pub fn orthonormality_defect(&self) -> T {
        let v = self.eigenvectors();
        let g = v.adjoint() * &v;
        let n = g.nrows();
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((g[(i, j)] - Complex::new(target, T::zero())).mag());
            }
        }
        worst
    }
}

fn sorted_order<T: Real>(vals: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| {
        vals[a]
            .partial_cmp(&vals[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// Free-function form of [`HermitianOperator::apply_function`].
pub fn apply_function<T: Real>(
    op: &HermitianOperator<T>,
    g: impl Fn(T) -> Complex<T>,
    f: &Field<T>,
) -> Result<Field<T>> {
    op.apply_function(g, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GaussianPacket;
    use crate::potentials::PotentialSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex<f64> {
        Complex::new(x, 0.0)
    }

    #[test]
    fn spectral_free_eigenvalues_are_xi_squared() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let op = build_free(&g, Scheme::Spectral).unwrap();
        let mut want: Vec<f64> = g.frequencies().iter().map(|x| x * x).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in op.eigenvalues().iter().zip(&want) {
            assert!((a - b).abs() < 1e-11 * (1.0 + b), "{a} vs {b}");
        }
    }

    #[test]
    fn fd2_free_eigenvalues_are_discrete_symbol() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let op = build_free(&g, Scheme::Fd2).unwrap();
        let h = g.spacing();
        let mut want: Vec<f64> = g
            .frequencies()
            .iter()
            .map(|x| (2.0 - 2.0 * (x * h).cos()) / (h * h))
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in op.eigenvalues().iter().zip(&want) {
            assert!((a - b).abs() < 1e-11 * (1.0 + b));
        }
    }

    #[test]
    fn hermitian_and_unitary_basis() {
        let g = Grid::<f64>::new(128, 30.0).unwrap();
        let v = PotentialSpec::ShortRange {
            rho: 2.0,
            amplitude: 0.7,
        }
        .sample(&g)
        .unwrap();
        let op = build_hamiltonian(&g, Scheme::Spectral, &v).unwrap();
        assert!(op.orthonormality_defect() < 1e-10);
        let m = op.matrix();
        let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let defect = (m - m.adjoint())
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(defect <= 1e-12 * scale);
    }

    #[test]
    fn rejects_non_hermitian() {
        let g = Grid::<f64>::new(8, 1.0).unwrap();
        let mut m = DMatrix::<Complex<f64>>::identity(8, 8);
        m[(0, 1)] = Complex::new(0.0, 1.0);
        assert!(matches!(
            HermitianOperator::from_matrix(&g, m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn complex_hermitian_path() {
        let g = Grid::<f64>::new(16, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(16, 16, |_, _| {
            Complex::new(rng.random::<f64>(), rng.random::<f64>())
        });
        let h = (&a + a.adjoint()).scale(0.5);
        let op = HermitianOperator::from_matrix(&g, h.clone()).unwrap();
        let f = Field::gaussian(
            &g,
            GaussianPacket {
                center: 0.3,
                width: 0.5,
                momentum: 2.0,
            },
        );
        let direct = op.apply(&f).unwrap();
        let via = op.apply_function(|l| c(l), &f).unwrap();
        assert!((&direct - &via).norm() < 1e-12 * direct.norm());
        assert!(op.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn functional_calculus_basics() {
        let g = Grid::<f64>::new(128, 40.0).unwrap();
        let v = PotentialSpec::ShortRange {
            rho: 2.0,
            amplitude: -1.0,
        }
        .sample(&g)
        .unwrap();
        let op = build_hamiltonian(&g, Scheme::Fd2, &v).unwrap();
        let f = Field::gaussian(
            &g,
            GaussianPacket {
                center: 1.0,
                width: 2.0,
                momentum: 0.5,
            },
        );
        let same = op.apply_function(|_| c(1.0), &f).unwrap();
        assert!((&same - &f).norm() < 1e-12 * f.norm());
        let hv = op.apply_function(c, &f).unwrap();
        let direct = op.apply(&f).unwrap();
        assert!((&hv - &direct).norm() <= 1e-10 * direct.norm());
        // homomorphism
        let gh = op
            .apply_function(
                |l| Complex::new(l.cos(), 0.0) * Complex::new(1.0 + l * l, 0.0).inv(),
                &f,
            )
            .unwrap();
        let inner = op
            .apply_function(|l| Complex::new(1.0 + l * l, 0.0).inv(), &f)
            .unwrap();
        let outer = op.apply_function(|l| c(l.cos()), &inner).unwrap();
        assert!((&gh - &outer).norm() < 1e-10 * gh.norm());
        assert!(matches!(
            op.apply_function(|_| c(f64::NAN), &f),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn resolvent_identity() {
        let g = Grid::<f64>::new(64, 20.0).unwrap();
        let v = PotentialSpec::ShortRange {
            rho: 2.0,
            amplitude: 0.5,
        }
        .sample(&g)
        .unwrap();
        let op = build_hamiltonian(&g, Scheme::Spectral, &v).unwrap();
        let z = Complex::new(0.3, 1.0);
        let w = Complex::new(-1.0, -0.5);
        let rz = op.resolvent_matrix(z).unwrap();
        let rw = op.resolvent_matrix(w).unwrap();
        let lhs = &rz - &rw;
        let rhs = (&rz * &rw).scale(1.0).map(|x| x * (z - w));
        let err = (&lhs - &rhs).iter().fold(0.0f64, |a, x| a.max(x.norm()));
        assert!(err < 1e-9);
        assert!(op.resolvent_matrix(Complex::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn fd2_delta_attractive_bound_state() {
        let g = Grid::<f64>::new(1024, 100.0).unwrap();
        let op = build_hamiltonian(&g, Scheme::Fd2Delta { alpha: -1.0 }, &vec![0.0; 1024]).unwrap();
        let neg: Vec<f64> = op
            .eigenvalues()
            .iter()
            .copied()
            .filter(|&l| l < 0.0)
            .collect();
        assert_eq!(neg.len(), 1);
        assert!((neg[0] + 0.25).abs() < 0.02 * 0.25, "{}", neg[0]);
    }

    #[test]
    fn propagator_is_unitary() {
        let g = Grid::<f64>::new(128, 40.0).unwrap();
        let v = PotentialSpec::ShortRange {
            rho: 2.0,
            amplitude: 1.0,
        }
        .sample(&g)
        .unwrap();
        let op = build_hamiltonian(&g, Scheme::Spectral, &v).unwrap();
        let f = Field::gaussian(
            &g,
            GaussianPacket {
                center: 0.0,
                width: 1.0,
                momentum: 1.0,
            },
        );
        let u = op.propagate(&f, 3.0).unwrap();
        assert!((u.norm() - f.norm()).abs() < 1e-12);
        let back = op.propagate(&u, -3.0).unwrap();
        assert!((&back - &f).norm() < 1e-12);
    }
}
