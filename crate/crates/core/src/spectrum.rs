//! Wavelength bookkeeping for the pump/signal/idler triple and the spectral
//! quadrature over the biphoton bandwidth.

use std::f64::consts::PI;

use crate::error::{invalid, require_positive, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn omega_from_wavelength(lambda: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / lambda
}

pub fn wavelength_from_omega(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega
}

/// Vacuum wavelengths of a pump photon and the pair it splits into.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wavelengths {
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub lambda_i: f64,
}

impl Wavelengths {
    /// Signal and idler both at `2 * lambda_p`.
    pub fn degenerate(lambda_p: f64) -> Result<Self> {
        require_positive("lambda_p", lambda_p)?;
        Ok(Self {
            lambda_p,
            lambda_s: 2.0 * lambda_p,
            lambda_i: 2.0 * lambda_p,
        })
    }

    /// Idler fixed by energy conservation `1/λp = 1/λs + 1/λi`.
    pub fn from_signal(lambda_p: f64, lambda_s: f64) -> Result<Self> {
        require_positive("lambda_p", lambda_p)?;
        require_positive("lambda_s", lambda_s)?;
        if lambda_s <= lambda_p {
            return Err(invalid(
                "lambda_s",
                format!("signal wavelength {lambda_s:e} must exceed the pump wavelength {lambda_p:e}"),
            ));
        }
        if lambda_s == 2.0 * lambda_p {
            return Self::degenerate(lambda_p);
        }
        let lambda_i = 1.0 / (1.0 / lambda_p - 1.0 / lambda_s);
        Ok(Self {
            lambda_p,
            lambda_s,
            lambda_i,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.lambda_s == self.lambda_i
    }

    /// `|1/λp - 1/λs - 1/λi| * λp`.
    pub fn energy_residual(&self) -> f64 {
        (1.0 / self.lambda_p - 1.0 / self.lambda_s - 1.0 / self.lambda_i).abs() * self.lambda_p
    }
}

/// Signal-frequency quadrature over the band `ω_p/2 ± Ω/2`, `Ω = rho * ω_p`.
///
/// Samples are cell midpoints of `m` equal cells, each weighted by `Ω/m`.
/// With `rho == 0` the band collapses to the degenerate frequency and the
/// weights become `1/m`, so a narrowband run integrates to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralRange {
    omega_p: f64,
    rho: f64,
    m: usize,
}

impl SpectralRange {
    pub fn new(omega_p: f64, rho: f64, m: usize) -> Result<Self> {
        require_positive("omega_p", omega_p)?;
        if !(0.0..1.0).contains(&rho) {
            return Err(invalid("rho", format!("must lie in [0, 1), got {rho}")));
        }
        if m == 0 {
            return Err(invalid("m", "need at least one spectral sample"));
        }
        Ok(Self { omega_p, rho, m })
    }

    /// A single sample at the degenerate frequency.
    pub fn narrowband(omega_p: f64) -> Result<Self> {
        Self::new(omega_p, 0.0, 1)
    }

    pub fn omega_p(&self) -> f64 {
        self.omega_p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bandwidth(&self) -> f64 {
        self.rho * self.omega_p
    }

    pub fn with_m(&self, m: usize) -> Result<Self> {
        Self::new(self.omega_p, self.rho, m)
    }

    /// `(ω_s, weight)` pairs.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let band = self.bandwidth();
        let weight = if band > 0.0 {
            band / self.m as f64
        } else {
            1.0 / self.m as f64
        };
        let start = 0.5 * self.omega_p - 0.5 * band;
        (0..self.m)
            .map(|k| (start + (k as f64 + 0.5) * band / self.m as f64, weight))
            .collect()
    }

    pub fn idler(&self, omega_s: f64) -> f64 {
        self.omega_p - omega_s
    }
}
