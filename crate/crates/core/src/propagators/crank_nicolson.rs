use num_complex::Complex;

use super::split_step::split_time;
use super::Propagator;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::Real;

/// Crank–Nicolson `(1 + iτH/2)^{-1}(1 - iτH/2)` for the periodic three-point
/// Laplacian plus `V` plus `α/h` on the origin node.
///
/// The Cayley transform is unitary for every `τ`, so the scheme conserves the
/// mass exactly and `evolve(·, -t)` inverts `evolve(·, t)`.
#[derive(Clone, Debug)]
pub struct CrankNicolson<T: Real> {
    grid: Grid<T>,
    diag: Vec<T>,
    off: T,
    dt: T,
}

impl<T: Real> CrankNicolson<T> {
    pub fn new(grid: &Grid<T>, alpha: T, potential: &[T], dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::StepSize(format!("dt must be positive, got {dt}")));
        }
        if potential.len() != grid.n_points() {
            return Err(Error::TableLength {
                got: potential.len(),
                expected: grid.n_points(),
            });
        }
        let h = grid.spacing();
        let mut diag: Vec<T> = potential
            .iter()
            .map(|&v| T::of(2.0) / (h * h) + v)
            .collect();
        diag[grid.origin_index()] += alpha / h;
        Ok(Self {
            grid: grid.clone(),
            diag,
            off: -T::one() / (h * h),
            dt,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    fn apply_h(&self, u: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = u.len();
        (0..n)
            .map(|j| {
                let l = u[(j + n - 1) % n];
                let r = u[(j + 1) % n];
                u[j].scale(self.diag[j]) + (l + r).scale(self.off)
            })
            .collect()
    }

    fn step(&self, u: &mut [Complex<T>], tau: T) {
        let half = Complex::new(T::zero(), tau / T::of(2.0));
        let hu = self.apply_h(u);
        let rhs: Vec<Complex<T>> = u.iter().zip(&hu).map(|(&a, &b)| a - half * b).collect();
        let b: Vec<Complex<T>> = self
            .diag
            .iter()
            .map(|&d| Complex::new(T::one(), T::zero()) + half.scale(d))
            .collect();
        let o = half.scale(self.off);
        let x = solve_cyclic(&b, o, &rhs);
        u.copy_from_slice(&x);
    }

    fn run(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let (n_full, rem) = split_time(t.mag(), self.dt);
        let dir = t.sign();
        let mut u = f.values().to_vec();
        if dir >= T::zero() {
            for _ in 0..n_full {
                self.step(&mut u, self.dt);
            }
            if rem > T::zero() {
                self.step(&mut u, rem);
            }
        } else {
            if rem > T::zero() {
                self.step(&mut u, -rem);
            }
            for _ in 0..n_full {
                self.step(&mut u, -self.dt);
            }
        }
        Field::new(&self.grid, u)
    }
}

impl<T: Real> Propagator<T> for CrankNicolson<T> {
    fn evolve(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        self.run(f, t)
    }
    fn evolve_adjoint(&self, f: &Field<T>, t: T) -> Result<Field<T>> {
        self.run(f, -t)
    }
}

/// Solves the cyclic tridiagonal system with diagonal `b` and constant
/// off-diagonal `o` (including both corners) by Sherman–Morrison.
fn solve_cyclic<T: Real>(b: &[Complex<T>], o: Complex<T>, r: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = b.len();
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= o * o / gamma;
    let x = solve_tridiagonal(&bb, o, r);
    let mut v = vec![Complex::new(T::zero(), T::zero()); n];
    v[0] = gamma;
    v[n - 1] = o;
    let z = solve_tridiagonal(&bb, o, &v);
    let fact = (x[0] + o * x[n - 1] / gamma)
        / (Complex::new(T::one(), T::zero()) + z[0] + o * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(&xi, &zi)| xi - fact * zi).collect()
}

fn solve_tridiagonal<T: Real>(
    b: &[Complex<T>],
    o: Complex<T>,
    r: &[Complex<T>],
) -> Vec<Complex<T>> {
    let n = b.len();
    let mut c = vec![Complex::new(T::zero(), T::zero()); n];
    let mut d = vec![Complex::new(T::zero(), T::zero()); n];
    c[0] = o / b[0];
    d[0] = r[0] / b[0];
    for i in 1..n {
        let m = b[i] - o * c[i - 1];
        c[i] = o / m;
        d[i] = (r[i] - o * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}

/// Crank–Nicolson evolution for the pure point interaction `H_0 + αδ`.
pub fn crank_nicolson_delta_evolve<T: Real>(
    f: &Field<T>,
    alpha: T,
    t: T,
    dt: T,
) -> Result<Field<T>> {
    let zeros = vec![T::zero(); f.grid().n_points()];
    CrankNicolson::new(f.grid(), alpha, &zeros, dt)?.evolve(f, t)
}
