//! Centered discrete approximation of the continuous Fourier pair
//!
//! ```text
//! F(q) = ∫ dx f(x) exp(-j q x),      f(x) = (1/2π) ∫ dq F(q) exp(+j q x)
//! ```
//!
//! on a [`TransverseGrid`] and its conjugate [`SpatialFrequencyGrid`].

use ndarray::Array1;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{ComplexField, SpatialFrequencyGrid, TransverseGrid};

/// Samples of `F(q)` on the conjugate grid of the field they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub grid: SpatialFrequencyGrid,
    /// Center of the transverse grid the spectrum is paired with.
    pub x_center: f64,
    pub samples: Array1<Complex64>,
}

impl Spectrum {
    /// `sum |F|^2 dq / 2π`, the Parseval partner of [`ComplexField::energy`].
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dq()
            / (2.0 * std::f64::consts::PI)
    }
}

/// In-place centered DFT: index `n/2` is the origin on both sides.
pub(crate) fn centered_fft(data: &mut [Complex64], fft: &dyn Fft<f64>) {
    let h = data.len() / 2;
    data.rotate_left(h);
    fft.process(data);
    data.rotate_right(h);
}

pub fn forward(field: &ComplexField) -> Spectrum {
    let grid = *field.grid();
    let n = grid.n();
    let qgrid = grid.conjugate();
    let mut data = field.samples().to_vec();
    let fft = FftPlanner::new().plan_fft_forward(n);
    centered_fft(&mut data, fft.as_ref());
    let dx = grid.dx();
    let samples = data
        .into_iter()
        .enumerate()
        .map(|(k, z)| z * dx * Complex64::from_polar(1.0, -qgrid.q(k) * grid.center()))
        .collect();
    Spectrum {
        grid: qgrid,
        x_center: grid.center(),
        samples,
    }
}

pub fn inverse(spectrum: &Spectrum) -> Result<ComplexField> {
    let n = spectrum.grid.n();
    let mut grid = spectrum.grid.conjugate();
    if spectrum.x_center != 0.0 {
        grid = TransverseGrid::new(n, grid.dx(), spectrum.x_center)?;
    }
    let mut data: Vec<Complex64> = spectrum
        .samples
        .iter()
        .enumerate()
        .map(|(k, &z)| z * Complex64::from_polar(1.0, spectrum.grid.q(k) * spectrum.x_center))
        .collect();
    let fft = FftPlanner::new().plan_fft_inverse(n);
    centered_fft(&mut data, fft.as_ref());
    let scale = 1.0 / (n as f64 * grid.dx());
    ComplexField::new(grid, data.into_iter().map(|z| z * scale).collect())
}
