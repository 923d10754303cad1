//! Uniform 1-D sampling grids and the sampled fields that live on them.

use std::f64::consts::PI;

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{invalid, require_positive, Error, Result};

/// Uniformly sampled transverse coordinate.
///
/// Sample `k` sits at `center + (k - n/2) * dx` (integer division), so an
/// even-sized grid centered at zero contains `x = 0` at index `n/2` and one
/// more negative sample than positive ones, matching the centered FFT layout.
/// Two grids are compatible only when `n`, `dx` and `center` compare exactly
/// equal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransverseGrid {
    n: usize,
    dx: f64,
    center: f64,
}

impl TransverseGrid {
    pub fn new(n: usize, dx: f64, center: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("need at least 2 samples, got {n}")));
        }
        require_positive("dx", dx)?;
        if !center.is_finite() {
            return Err(invalid("center", "must be finite"));
        }
        Ok(Self { n, dx, center })
    }

    /// Grid centered on `x = 0`.
    pub fn centered(n: usize, dx: f64) -> Result<Self> {
        Self::new(n, dx, 0.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    #[inline]
    pub fn x(&self, k: usize) -> f64 {
        self.center + (k as f64 - (self.n / 2) as f64) * self.dx
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.x(k)).collect()
    }

    /// Full window width `n * dx`.
    pub fn width(&self) -> f64 {
        self.n as f64 * self.dx
    }

    /// Cell boundaries `[x_0 - dx/2, x_{n-1} + dx/2]`.
    pub fn extent(&self) -> (f64, f64) {
        (self.x(0) - 0.5 * self.dx, self.x(self.n - 1) + 0.5 * self.dx)
    }

    /// Index of the cell containing `x`, or `None` outside [`extent`](Self::extent).
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.extent();
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let k = ((x - self.center) / self.dx).round() + (self.n / 2) as f64;
        Some((k.max(0.0) as usize).min(self.n - 1))
    }

    /// Index whose coordinate is exactly `x`, if any.
    pub fn exact_index(&self, x: f64) -> Option<usize> {
        self.nearest_index(x).filter(|&k| self.x(k) == x)
    }

    pub fn conjugate(&self) -> SpatialFrequencyGrid {
        SpatialFrequencyGrid {
            n: self.n,
            dq: 2.0 * PI / (self.n as f64 * self.dx),
        }
    }

    pub(crate) fn check_same(&self, other: &TransverseGrid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: (n={}, dx={:e}, center={:e}) vs (n={}, dx={:e}, center={:e})",
                self.n, self.dx, self.center, other.n, other.dx, other.center
            )))
        }
    }
}

pub fn make_grid(n: usize, dx: f64, center: f64) -> Result<TransverseGrid> {
    TransverseGrid::new(n, dx, center)
}

pub fn conjugate_frequency_grid(grid: &TransverseGrid) -> SpatialFrequencyGrid {
    grid.conjugate()
}

/// Uniform spatial-frequency samples `q_k = (k - n/2) * dq`, `qmax = dq * n / 2`.
///
/// For even `n` the samples `k >= 1` are symmetric about zero and `k = 0` is the
/// unpaired `-qmax` sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialFrequencyGrid {
    n: usize,
    dq: f64,
}

impl SpatialFrequencyGrid {
    pub fn new(n: usize, dq: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("need at least 2 samples, got {n}")));
        }
        require_positive("dq", dq)?;
        Ok(Self { n, dq })
    }

    /// Smallest even grid with step `dq` that reaches `qmax`.
    pub fn covering(qmax: f64, dq: f64) -> Result<Self> {
        require_positive("qmax", qmax)?;
        require_positive("dq", dq)?;
        let half = (qmax / dq).ceil() as usize;
        Self::new(2 * half.max(1), dq)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dq(&self) -> f64 {
        self.dq
    }

    pub fn qmax(&self) -> f64 {
        self.dq * self.n as f64 / 2.0
    }

    #[inline]
    pub fn q(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dq
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.q(k)).collect()
    }

    /// Index of `-q_k`.
    #[inline]
    pub fn mirror(&self, k: usize) -> Option<usize> {
        (2 * (self.n / 2)).checked_sub(k).filter(|&m| m < self.n)
    }

    /// Transverse grid paired with this one by the discrete Fourier transform.
    pub fn conjugate(&self) -> TransverseGrid {
        TransverseGrid {
            n: self.n,
            dx: 2.0 * PI / (self.n as f64 * self.dq),
            center: 0.0,
        }
    }
}

/// Complex amplitude sampled on a [`TransverseGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: TransverseGrid,
    samples: Array1<Complex64>,
}

impl ComplexField {
    pub fn new(grid: TransverseGrid, samples: Array1<Complex64>) -> Result<Self> {
        if samples.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.n()
            )));
        }
        if let Some(k) = samples.iter().position(|z| !z.is_finite()) {
            return Err(invalid("samples", format!("non-finite value at index {k}")));
        }
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: TransverseGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let samples = (0..grid.n()).map(|k| f(grid.x(k))).collect();
        Self::new(grid, samples)
    }

    pub fn from_real_fn(grid: TransverseGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn constant(grid: TransverseGrid, value: Complex64) -> Result<Self> {
        Self::new(grid, Array1::from_elem(grid.n(), value))
    }

    /// Discrete delta at the sample nearest `x0`: height `1/dx`, unit area.
    pub fn delta(grid: TransverseGrid, x0: f64) -> Result<Self> {
        let k = grid.nearest_index(x0).ok_or(Error::OutOfRange {
            name: "x0",
            value: x0,
            min: grid.extent().0,
            max: grid.extent().1,
        })?;
        let mut samples = Array1::zeros(grid.n());
        samples[k] = Complex64::new(1.0 / grid.dx(), 0.0);
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn samples(&self) -> &Array1<Complex64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array1<Complex64> {
        self.samples
    }

    /// `sum |f|^2 dx`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn intensity(&self) -> RealCurve {
        RealCurve {
            grid: self.grid,
            values: self.samples.mapv(|z| z.norm_sqr()),
        }
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, &z)| f(self.grid.x(k), z))
            .collect();
        Self::new(self.grid, samples)
    }
}

/// Real-valued function sampled on a grid (rates, intensities).
#[derive(Clone, Debug, PartialEq)]
pub struct RealCurve {
    pub grid: TransverseGrid,
    pub values: Array1<f64>,
}

impl RealCurve {
    pub fn new(grid: TransverseGrid, values: Array1<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {}",
                values.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy scaled so the peak equals one; an all-zero curve is returned as is.
    pub fn peak_normalized(&self) -> Self {
        let peak = self.max();
        let values = if peak > 0.0 {
            self.values.mapv(|v| v / peak)
        } else {
            self.values.clone()
        };
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
            .0
    }

    pub fn sum(&self) -> f64 {
        self.values.sum() * self.grid.dx()
    }
}
