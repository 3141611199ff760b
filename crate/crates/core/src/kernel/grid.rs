use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Periodic grid on `prod_a [-R_a, R_a)` with `n_a` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    extent: Vec<f64>,
    resolution: Vec<usize>,
}

pub const MIN_RESOLUTION: usize = 16;

impl GridSpec {
    pub fn new(extent: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        if extent.is_empty() || extent.len() != resolution.len() {
            return Err(Error::arg("grid needs one extent and one resolution per axis"));
        }
        for (&r, &n) in extent.iter().zip(&resolution) {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::arg(format!("grid extent must be positive, got {r}")));
            }
            if n < MIN_RESOLUTION || !n.is_power_of_two() {
                return Err(Error::arg(format!(
                    "grid resolution must be a power of two >= {MIN_RESOLUTION}, got {n}"
                )));
            }
        }
        Ok(Self { extent, resolution })
    }

    /// Same extent and resolution on every axis.
    pub fn cube(dim: usize, extent: f64, resolution: usize) -> Result<Self> {
        Self::new(vec![extent; dim], vec![resolution; dim])
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.extent[axis] / self.resolution[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.extent.iter().map(|r| 2.0 * r).product()
    }

    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        -self.extent[axis] + j as f64 * self.spacing(axis)
    }

    /// Signed FFT index of position `k` along `axis`.
    pub fn signed_index(&self, axis: usize, k: usize) -> i64 {
        let n = self.resolution[axis];
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Angular frequency `pi k / R` of FFT position `k` along `axis`.
    pub fn frequency(&self, axis: usize, k: usize) -> f64 {
        std::f64::consts::PI * self.signed_index(axis, k) as f64 / self.extent[axis]
    }

    /// Largest representable frequency along `axis`.
    pub fn nyquist(&self, axis: usize) -> f64 {
        std::f64::consts::PI * (self.resolution[axis] / 2) as f64 / self.extent[axis]
    }

    /// Per-axis indices of a flat row-major index (last axis fastest).
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            let n = self.resolution[a];
            out[a] = flat % n;
            flat /= n;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &j)| self.coordinate(a, j))
            .collect()
    }

    /// Frequency vector of a flat spectral index.
    pub fn frequency_vector(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &k)| self.frequency(a, k))
            .collect()
    }

    /// True when some axis index sits on the Nyquist row.
    pub fn on_nyquist(&self, flat: usize) -> bool {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .any(|(a, &k)| k == self.resolution[a] / 2)
    }

    /// `(-1)^{sum k}`: phase of the shift from index 0 to coordinate `-R`.
    pub(crate) fn shift_sign(&self, flat: usize) -> f64 {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        if idx.iter().sum::<usize>() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// In-place unnormalized multidimensional FFT (`inverse` uses `e^{+i}`).
pub(crate) fn fft_nd(grid: &GridSpec, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let dims = grid.resolution();
    let total = grid.len();
    let mut stride = 1;
    for a in (0..dims.len()).rev() {
        let n = dims[a];
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let block = n * stride;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
        stride *= n;
    }
}

/// Real samples of a function on a [`GridSpec`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(format!(
                "grid has {} points but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("grid values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![c; n])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|v| v * c).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub(crate) fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::arg("grid functions live on different grids"));
        }
        Ok(())
    }

    /// Riemann sum with cell-volume weight.
    pub fn integral(&self) -> f64 {
        crate::numerics::pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    /// Grid `L^p` norm; `p = f64::INFINITY` gives the maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_of(&self.values, self.grid.cell_volume(), p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation; zero outside `[-R, R - h]` on any axis.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.grid.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let n = self.grid.resolution[a];
            let s = (x[a] + self.grid.extent[a]) / self.grid.spacing(a);
            if !(s >= 0.0 && s <= (n - 1) as f64) {
                return 0.0;
            }
            let j = (s.floor() as usize).min(n - 2);
            base[a] = j;
            frac[a] = s - j as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.grid.resolution[a] + base[a] + bit;
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }
}

pub(crate) fn lp_norm_of(values: &[f64], cell: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    // normalize first so large p does not overflow
    let terms: Vec<f64> = values.iter().map(|v| (v.abs() / scale).powf(p)).collect();
    scale * (crate::numerics::pairwise_sum(&terms) * cell).powf(1.0 / p)
}

/// Fourier coefficients of a grid function, reusable across multipliers.
#[derive(Debug, Clone)]
pub(crate) struct Spectrum {
    pub grid: GridSpec,
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(f: &GridFunction) -> Self {
        let mut coeffs: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&f.grid, &mut coeffs, false);
        Self {
            grid: f.grid.clone(),
            coeffs,
        }
    }

    /// Inverse transform of `coeffs * m(flat index)`; returns the real part
    /// and the largest discarded imaginary part.
    pub fn synthesize(&self, m: impl Fn(usize) -> Complex64) -> (Vec<f64>, f64) {
        let n = self.coeffs.len() as f64;
        let mut data: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * m(i))
            .collect();
        fft_nd(&self.grid, &mut data, true);
        let mut max_im = 0.0f64;
        let values = data
            .iter()
            .map(|c| {
                max_im = max_im.max((c.im / n).abs());
                c.re / n
            })
            .collect();
        (values, max_im)
    }
}
