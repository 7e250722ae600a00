//! Periodic grid on `[-L/2, L/2)`, the unitary discrete Fourier transform and
//! the Sobolev norms `‖f‖_s = ‖⟨H_0⟩^{s/2} f‖`.
//!
//! Conventions, fixed for the whole crate:
//!
//! * nodes `x_j = -L/2 + j·h`, `h = L/n`, `j = 0..n`; the origin is node `n/2`;
//! * frequencies `ξ_k = 2πk/L` stored in transform-native order
//!   `k = 0, 1, …, n/2-1, -n/2, …, -1` ([`Grid::monotone_order`] gives the
//!   permutation to increasing `ξ`);
//! * frequency coefficients are `c_k = ⟨e_k, f⟩` for the orthonormal plane
//!   waves `e_k(x) = e^{iξ_k x}/√L`, so `Σ|c_k|² = ‖f‖²` exactly;
//! * the inner product `⟨f, g⟩ = h Σ conj(f_j) g_j` is conjugate-linear in the
//!   first slot.

use std::fmt;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

struct GridData<T: Real> {
    n: usize,
    length: T,
    spacing: T,
    frequencies: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

/// Uniform periodic grid. Cloning is cheap (shared, immutable data).
#[derive(Clone)]
pub struct Grid<T: Real>(Arc<GridData<T>>);

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.0.n)
            .field("length", &self.0.length)
            .finish()
    }
}

impl<T: Real> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.n == other.0.n && self.0.length == other.0.length)
    }
}

impl<T: Real> Grid<T> {
    /// Builds a grid with `n_points` nodes (a power of two, at least 8) on a
    /// domain of the given length.
    pub fn new(n_points: usize, length: T) -> Result<Self> {
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid.n must be a power of two >= 8, got {n_points}"
            )));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::Config(format!(
                "grid.L must be positive and finite, got {length}"
            )));
        }
        let n = n_points;
        let spacing = length / T::of(n as f64);
        let dxi = T::two_pi() / length;
        let frequencies = (0..n)
            .map(|i| T::of(signed_index(i, n) as f64) * dxi)
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self(Arc::new(GridData {
            n,
            length,
            spacing,
            frequencies,
            forward,
            inverse,
        })))
    }

    pub fn n_points(&self) -> usize {
        self.0.n
    }

    pub fn length(&self) -> T {
        self.0.length
    }

    pub fn spacing(&self) -> T {
        self.0.spacing
    }

    /// Frequencies `ξ_k` in transform-native order.
    pub fn frequencies(&self) -> &[T] {
        &self.0.frequencies
    }

    /// Largest `|ξ_k|`, attained by the Nyquist mode `k = -n/2`.
    pub fn max_frequency(&self) -> T {
        T::pi() * T::of(self.0.n as f64) / self.0.length
    }

    /// Signed mode index `k` of native slot `i`.
    pub fn mode_index(&self, i: usize) -> i64 {
        signed_index(i, self.0.n)
    }

    /// Native slot of the signed mode `k`, if it is on this grid.
    pub fn slot_of_mode(&self, k: i64) -> Option<usize> {
        let half = (self.0.n / 2) as i64;
        if k < -half || k >= half {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.0.n as i64) as usize)
        }
    }

    /// Permutation `p` with `frequencies()[p[0]] < frequencies()[p[1]] < …`.
    pub fn monotone_order(&self) -> Vec<usize> {
        let n = self.0.n;
        (n / 2..n).chain(0..n / 2).collect()
    }

    pub fn x(&self, j: usize) -> T {
        -self.0.length / T::of(2.0) + T::of(j as f64) * self.0.spacing
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.0.n).map(|j| self.x(j)).collect()
    }

    /// Index of the node sitting exactly at `x = 0`.
    pub fn origin_index(&self) -> usize {
        self.0.n / 2
    }

    /// Multiplier `(1 + ξ⁴)^{s/4}`, i.e. `⟨H_0⟩^{s/2}` with `H_0 = ξ²`.
    pub fn sobolev_weights(&self, s: T) -> Vec<T> {
        let quarter = s / T::of(4.0);
        self.0
            .frequencies
            .iter()
            .map(|&xi| {
                let xi2 = xi * xi;
                (T::one() + xi2 * xi2).powf(quarter)
            })
            .collect()
    }

    fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        self.0.forward.process(buf);
        let scale = self.0.length.sqrt() / T::of(self.0.n as f64);
        for (i, c) in buf.iter_mut().enumerate() {
            let sc = if i % 2 == 0 { scale } else { -scale };
            *c = c.scale(sc);
        }
    }

    fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        let scale = T::one() / self.0.length.sqrt();
        for (i, c) in buf.iter_mut().enumerate() {
            let sc = if i % 2 == 0 { scale } else { -scale };
            *c = c.scale(sc);
        }
        self.0.inverse.process(buf);
    }
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Convenience constructor mirroring [`Grid::new`].
pub fn make_grid<T: Real>(n_points: usize, length: T) -> Result<Grid<T>> {
    Grid::new(n_points, length)
}

/// Sampled complex wavefunction in space representation.
#[derive(Clone, Debug)]
pub struct Field<T: Real> {
    grid: Grid<T>,
    values: Vec<Complex<T>>,
}

/// Frequency coefficients `c_k = ⟨e_k, f⟩` in transform-native order.
#[derive(Clone, Debug)]
pub struct Spectrum<T: Real> {
    grid: Grid<T>,
    coeffs: Vec<Complex<T>>,
}

/// Gaussian wave packet `exp(-(x-x0)²/(2w²) + i k0 x)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianPacket {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

impl<T: Real> Field<T> {
    pub fn new(grid: &Grid<T>, values: Vec<Complex<T>>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::TableLength {
                got: values.len(),
                expected: grid.n_points(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid<T>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex::new(T::zero(), T::zero()); grid.n_points()],
        }
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T) -> Complex<T>) -> Self {
        let values = (0..grid.n_points()).map(|j| f(grid.x(j))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_real(grid: &Grid<T>, values: &[T]) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&v| Complex::new(v, T::zero())).collect(),
        )
    }

    pub fn gaussian(grid: &Grid<T>, packet: GaussianPacket) -> Self {
        let (x0, w, k0) = (
            T::of(packet.center),
            T::of(packet.width),
            T::of(packet.momentum),
        );
        let two_w2 = T::of(2.0) * w * w;
        Self::from_fn(grid, |x| {
            let d = x - x0;
            let amp = (-(d * d) / two_w2).exp();
            let ph = k0 * x;
            Complex::new(amp * ph.cos(), amp * ph.sin())
        })
    }

    /// Random field whose coefficients are uniform in the unit square for
    /// `|ξ_k| ≤ band` and zero elsewhere. Modes are drawn in the order
    /// `k = -K..=K`, so two grids with the same length produce the same
    /// function for the same seed.
    pub fn random_band_limited<R: Rng>(grid: &Grid<T>, band: T, rng: &mut R) -> Self {
        let dxi = T::two_pi() / grid.length();
        let kmax = (band / dxi).floor().f64() as i64;
        let mut coeffs = vec![Complex::new(T::zero(), T::zero()); grid.n_points()];
        for k in -kmax..=kmax {
            let re = T::of(rng.random::<f64>() * 2.0 - 1.0);
            let im = T::of(rng.random::<f64>() * 2.0 - 1.0);
            if let Some(slot) = grid.slot_of_mode(k) {
                coeffs[slot] = Complex::new(re, im);
            }
        }
        Spectrum {
            grid: grid.clone(),
            coeffs,
        }
        .to_space()
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn to_frequency(&self) -> Spectrum<T> {
        let mut coeffs = self.values.clone();
        self.grid.forward_in_place(&mut coeffs);
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// `⟨self, other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Field<T>) -> Result<Complex<T>> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let sum = self
            .values
            .iter()
            .zip(&other.values)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| {
                acc + a.conj() * b
            });
        Ok(sum.scale(self.grid.spacing()))
    }

    pub fn norm_sqr(&self) -> T {
        let s = self
            .values
            .iter()
            .fold(T::zero(), |acc, v| acc + v.norm_sqr());
        s * self.grid.spacing()
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    /// `‖⟨H_0⟩^{s/2} f‖` with the exact multiplier `(1+ξ⁴)^{s/4}`.
    pub fn sobolev_norm(&self, s: T) -> T {
        self.to_frequency().sobolev_norm(s)
    }

    /// `⟨H_0⟩^{s/2} f`.
    pub fn sobolev_apply(&self, s: T) -> Field<T> {
        let w = self.grid.sobolev_weights(s);
        self.apply_real_multiplier(&w)
    }

    pub fn apply_multiplier(&self, m: &[Complex<T>]) -> Field<T> {
        debug_assert_eq!(m.len(), self.values.len());
        let mut buf = self.values.clone();
        self.grid.forward_in_place(&mut buf);
        for (c, w) in buf.iter_mut().zip(m) {
            *c *= *w;
        }
        self.grid.inverse_in_place(&mut buf);
        Field {
            grid: self.grid.clone(),
            values: buf,
        }
    }

    pub fn apply_real_multiplier(&self, m: &[T]) -> Field<T> {
        debug_assert_eq!(m.len(), self.values.len());
        let mut buf = self.values.clone();
        self.grid.forward_in_place(&mut buf);
        for (c, &w) in buf.iter_mut().zip(m) {
            *c = c.scale(w);
        }
        self.grid.inverse_in_place(&mut buf);
        Field {
            grid: self.grid.clone(),
            values: buf,
        }
    }

    /// In-place [`Field::apply_multiplier`].
    pub fn apply_multiplier_mut(&mut self, m: &[Complex<T>]) {
        debug_assert_eq!(m.len(), self.values.len());
        self.grid.forward_in_place(&mut self.values);
        for (c, w) in self.values.iter_mut().zip(m) {
            *c *= *w;
        }
        self.grid.inverse_in_place(&mut self.values);
    }

    /// Pointwise in-place multiplication by complex samples.
    pub fn multiply_complex_mut(&mut self, m: &[Complex<T>]) {
        for (c, w) in self.values.iter_mut().zip(m) {
            *c *= *w;
        }
    }

    /// Multiplies by `e^{-i·scale·phase_k}` in frequency.
    pub fn apply_phase(&self, phase: &[T], scale: T) -> Field<T> {
        let m: Vec<Complex<T>> = phase
            .iter()
            .map(|&p| {
                let a = -scale * p;
                Complex::new(a.cos(), a.sin())
            })
            .collect();
        self.apply_multiplier(&m)
    }

    /// Pointwise multiplication by a real function sampled on the grid.
    pub fn multiply_pointwise(&self, v: &[T]) -> Field<T> {
        let values = self
            .values
            .iter()
            .zip(v)
            .map(|(a, &b)| a.scale(b))
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn conj(&self) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn scaled(&self, a: T) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.scale(a)).collect(),
        }
    }

    pub fn scaled_complex(&self, a: Complex<T>) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * a).collect(),
        }
    }

    /// Rescales to unit L² norm (a zero field is returned unchanged).
    pub fn normalized(&self) -> Field<T> {
        let n = self.norm();
        if n > T::zero() {
            self.scaled(T::one() / n)
        } else {
            self.clone()
        }
    }

    /// Mass `∫_{|x|>radius} |f|²`.
    pub fn mass_outside(&self, radius: T) -> T {
        let s = (0..self.values.len())
            .filter(|&j| self.grid.x(j).mag() > radius)
            .fold(T::zero(), |acc, j| acc + self.values[j].norm_sqr());
        s * self.grid.spacing()
    }

    /// Smallest radius `r` (a node distance) holding all but a `tol` fraction
    /// of the mass.
    pub fn effective_radius(&self, tol: T) -> T {
        let mut pairs: Vec<(T, T)> = (0..self.values.len())
            .map(|j| (self.grid.x(j).mag(), self.values[j].norm_sqr()))
            .collect();
        tail_radius(&mut pairs, tol)
    }

    /// Smallest frequency radius `Ξ` holding all but a `tol` fraction of the
    /// mass.
    pub fn effective_band(&self, tol: T) -> T {
        self.to_frequency().effective_band(tol)
    }
}

fn tail_radius<T: Real>(pairs: &mut [(T, T)], tol: T) -> T {
    let total = pairs.iter().fold(T::zero(), |a, p| a + p.1);
    if total == T::zero() {
        return T::zero();
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut tail = T::zero();
    for (r, m) in pairs.iter() {
        if tail + *m > tol * total {
            return *r;
        }
        tail += *m;
    }
    T::zero()
}

impl<T: Real> Spectrum<T> {
    pub fn new(grid: &Grid<T>, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() != grid.n_points() {
            return Err(Error::TableLength {
                got: coeffs.len(),
                expected: grid.n_points(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn to_space(&self) -> Field<T> {
        let mut values = self.coeffs.clone();
        self.grid.inverse_in_place(&mut values);
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn norm(&self) -> T {
        self.coeffs
            .iter()
            .fold(T::zero(), |a, c| a + c.norm_sqr())
            .sqrt()
    }

    pub fn sobolev_norm(&self, s: T) -> T {
        let half = s / T::of(2.0);
        self.coeffs
            .iter()
            .zip(self.grid.frequencies())
            .fold(T::zero(), |acc, (c, &xi)| {
                let xi2 = xi * xi;
                acc + (T::one() + xi2 * xi2).powf(half) * c.norm_sqr()
            })
            .sqrt()
    }

    pub fn effective_band(&self, tol: T) -> T {
        let mut pairs: Vec<(T, T)> = self
            .coeffs
            .iter()
            .zip(self.grid.frequencies())
            .map(|(c, &xi)| (xi.mag(), c.norm_sqr()))
            .collect();
        tail_radius(&mut pairs, tol)
    }

    /// Zeroes every mode with `|ξ| > band`.
    pub fn band_limited(&self, band: T) -> Spectrum<T> {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.grid.frequencies())
            .map(|(&c, &xi)| {
                if xi.mag() > band {
                    Complex::new(T::zero(), T::zero())
                } else {
                    c
                }
            })
            .collect();
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }
}

fn assert_same_grid<T: Real>(a: &Grid<T>, b: &Grid<T>) {
    assert!(a == b, "field arithmetic across different grids");
}

impl<'a, T: Real> Add<&'a Field<T>> for &'a Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: &'a Field<T>) -> Field<T> {
        assert_same_grid(&self.grid, &rhs.grid);
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl<'a, T: Real> Sub<&'a Field<T>> for &'a Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: &'a Field<T>) -> Field<T> {
        assert_same_grid(&self.grid, &rhs.grid);
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl<T: Real> Mul<T> for &Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: T) -> Field<T> {
        self.scaled(rhs)
    }
}

// Serialization: CSV (x, re, im) and a little-endian binary dump
// [u64 n][f64 L][n x (f64 re, f64 im)].

impl<T: Real> Field<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,re,im")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e}",
                self.grid.x(j).f64(),
                v.re.f64(),
                v.im.f64()
            )?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.n_points() as u64).to_le_bytes())?;
        w.write_all(&self.grid.length().f64().to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.re.f64().to_le_bytes())?;
            w.write_all(&v.im.f64().to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a binary dump, rebuilding the grid from its header.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Field<T>> {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let length = f64::from_le_bytes(b8);
        let grid =
            Grid::new(n, T::of(length)).map_err(|e| Error::Format(format!("bad header: {e}")))?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            values.push(Complex::new(T::of(re), T::of(im)));
        }
        Field::new(&grid, values)
    }
}
