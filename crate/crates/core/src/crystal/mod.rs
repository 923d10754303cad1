//! Type-I phase matching in a uniaxial nonlinear crystal.
//!
//! The pump is extraordinary at the cut angle, signal and idler are ordinary.
//! Longitudinal wavenumbers are `r(q, ω) = sqrt(n² ω²/c² - q²)` and the
//! mismatch is `Δr = r_p(q_s + q_i, ω_p) - r_s(q_s, ω_s) - r_i(q_i, ω_p - ω_s)`.

mod dispersion;

use std::f64::consts::PI;

use num_complex::Complex64;

pub use dispersion::{IndexModel, Sellmeier};

use crate::error::{invalid, require_positive, Error, Result};
use crate::grid::ComplexField;
use crate::spectrum::{wavelength_from_omega, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Polarization {
    Ordinary,
    /// Extraordinary wave propagating at `theta` from the optic axis.
    Extraordinary { theta: f64 },
}

/// Index from the uniaxial index ellipse
/// `1/n²(θ) = cos²θ/n_o² + sin²θ/n_e²`.
pub fn refractive_index(model: &IndexModel, lambda: f64, polarization: Polarization) -> Result<f64> {
    let n_o = model.n_o(lambda)?;
    match polarization {
        Polarization::Ordinary => Ok(n_o),
        Polarization::Extraordinary { theta } => {
            let n_e = model.n_e(lambda)?;
            let (s, c) = theta.sin_cos();
            Ok(1.0 / (c * c / (n_o * n_o) + s * s / (n_e * n_e)).sqrt())
        }
    }
}

/// `sqrt(n² ω²/c² - q²)`; transverse frequencies beyond the light cone are an error.
pub fn longitudinal_wavenumber(n: f64, omega: f64, q: f64) -> Result<f64> {
    let k = n * omega / SPEED_OF_LIGHT;
    let arg = k * k - q * q;
    if arg < 0.0 {
        return Err(Error::Evanescent { q, cutoff: k });
    }
    Ok(arg.sqrt())
}

/// Quadratic expansion `k - q²/(2k)` of [`longitudinal_wavenumber`].
pub fn longitudinal_wavenumber_paraxial(n: f64, omega: f64, q: f64) -> f64 {
    let k = n * omega / SPEED_OF_LIGHT;
    k - q * q / (2.0 * k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Dispersion {
    #[default]
    Exact,
    Paraxial,
}

/// Crystal slab cut for type-I interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct CrystalSpec {
    length: f64,
    cut_angle: f64,
    model: IndexModel,
    dispersion: Dispersion,
}

impl CrystalSpec {
    pub fn new(length: f64, cut_angle: f64, model: IndexModel) -> Result<Self> {
        require_positive("length", length)?;
        if !(cut_angle > 0.0 && cut_angle < 0.5 * PI) {
            return Err(invalid("cut_angle", format!("must lie in (0, π/2), got {cut_angle}")));
        }
        Ok(Self {
            length,
            cut_angle,
            model,
            dispersion: Dispersion::Exact,
        })
    }

    pub fn with_dispersion(mut self, dispersion: Dispersion) -> Self {
        self.dispersion = dispersion;
        self
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        require_positive("length", length)?;
        Ok(Self { length, ..self.clone() })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cut_angle(&self) -> f64 {
        self.cut_angle
    }

    pub fn model(&self) -> &IndexModel {
        &self.model
    }

    pub fn dispersion(&self) -> Dispersion {
        self.dispersion
    }

    /// Refractive indices of the three waves for a given signal frequency.
    pub fn wave_indices(&self, omega_s: f64, omega_p: f64) -> Result<WaveIndices> {
        let p = refractive_index(
            &self.model,
            wavelength_from_omega(omega_p),
            Polarization::Extraordinary {
                theta: self.cut_angle,
            },
        )?;
        let s = self.model.n_o(wavelength_from_omega(omega_s))?;
        let i = self.model.n_o(wavelength_from_omega(omega_p - omega_s))?;
        Ok(WaveIndices {
            pump: p,
            signal: s,
            idler: i,
            omega_s,
            omega_p,
            dispersion: self.dispersion,
        })
    }
}

/// Indices and frequencies of one pump/signal/idler triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveIndices {
    pub pump: f64,
    pub signal: f64,
    pub idler: f64,
    pub omega_s: f64,
    pub omega_p: f64,
    pub dispersion: Dispersion,
}

impl WaveIndices {
    pub fn omega_i(&self) -> f64 {
        self.omega_p - self.omega_s
    }

    fn r(&self, n: f64, omega: f64, q: f64) -> Result<f64> {
        match self.dispersion {
            Dispersion::Exact => longitudinal_wavenumber(n, omega, q),
            Dispersion::Paraxial => Ok(longitudinal_wavenumber_paraxial(n, omega, q)),
        }
    }

    pub fn r_pump(&self, q: f64) -> Result<f64> {
        self.r(self.pump, self.omega_p, q)
    }

    pub fn r_signal(&self, q: f64) -> Result<f64> {
        self.r(self.signal, self.omega_s, q)
    }

    pub fn r_idler(&self, q: f64) -> Result<f64> {
        self.r(self.idler, self.omega_i(), q)
    }

    pub fn delta_r(&self, q_s: f64, q_i: f64) -> Result<f64> {
        Ok(self.r_pump(q_s + q_i)? - self.r_signal(q_s)? - self.r_idler(q_i)?)
    }
}

pub fn delta_mismatch(spec: &CrystalSpec, q_s: f64, q_i: f64, omega_s: f64, omega_p: f64) -> Result<f64> {
    spec.wave_indices(omega_s, omega_p)?.delta_r(q_s, q_i)
}

/// `sin(πu)/(πu)`.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        let x = PI * u;
        x.sin() / x
    }
}

/// `ℓ sinc(ℓΔr/2π) exp(-jℓΔr/2)`, which equals `∫_0^ℓ exp(-jΔr z) dz`.
pub fn phase_matching(length: f64, delta_r: f64) -> Complex64 {
    let half = 0.5 * length * delta_r;
    if half == 0.0 {
        return Complex64::new(length, 0.0);
    }
    // ℓ sin(u)/u · e^{-ju} = (ℓ / 2u)(sin 2u - j(1 - cos 2u))
    let (s2, c2) = (2.0 * half).sin_cos();
    Complex64::new(s2, -(1.0 - c2)) * (length / (2.0 * half))
}

/// Transverse profile of the pump at the crystal entrance.
#[derive(Clone, Debug, PartialEq)]
pub enum PumpProfile {
    PlaneWave,
    /// `exp(-4x²/B²)`: `B` is the full width at 1/e² of the intensity.
    Gaussian { width: f64 },
    /// Uniform over `|x| <= B/2`.
    Rect { width: f64 },
    Sampled(ComplexField),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PumpSpec {
    pub lambda_p: f64,
    pub profile: PumpProfile,
}

impl PumpSpec {
    pub fn new(lambda_p: f64, profile: PumpProfile) -> Result<Self> {
        require_positive("lambda_p", lambda_p)?;
        match &profile {
            PumpProfile::Gaussian { width } | PumpProfile::Rect { width } => {
                require_positive("pump width", *width)?
            }
            _ => {}
        }
        Ok(Self { lambda_p, profile })
    }

    pub fn plane_wave(lambda_p: f64) -> Result<Self> {
        Self::new(lambda_p, PumpProfile::PlaneWave)
    }

    pub fn is_plane_wave(&self) -> bool {
        matches!(self.profile, PumpProfile::PlaneWave)
    }

    /// Field at the crystal entrance.
    pub fn field(&self, x: f64) -> Complex64 {
        match &self.profile {
            PumpProfile::PlaneWave => Complex64::new(1.0, 0.0),
            PumpProfile::Gaussian { width } => Complex64::new((-4.0 * x * x / (width * width)).exp(), 0.0),
            PumpProfile::Rect { width } => {
                Complex64::new(if x.abs() <= 0.5 * width { 1.0 } else { 0.0 }, 0.0)
            }
            PumpProfile::Sampled(f) => match f.grid().exact_index(x) {
                Some(k) => f.samples()[k],
                None => f
                    .grid()
                    .nearest_index(x)
                    .map(|k| f.samples()[k])
                    .unwrap_or_default(),
            },
        }
    }
}

/// Angular spectrum `Ẽ_p(q) = ∫ dx E_p(x) exp(-jqx)`.
///
/// A plane wave has `Ẽ_p = 2π δ(q)`, which callers handle by collapsing an
/// integral; it is reported as `None` rather than sampled.
pub fn pump_angular_spectrum(pump: &PumpSpec, q: f64) -> Option<Complex64> {
    match &pump.profile {
        PumpProfile::PlaneWave => None,
        PumpProfile::Gaussian { width } => {
            let b = *width;
            Some(Complex64::new(0.5 * b * PI.sqrt() * (-q * q * b * b / 16.0).exp(), 0.0))
        }
        PumpProfile::Rect { width } => Some(Complex64::new(width * sinc(q * width / (2.0 * PI)), 0.0)),
        PumpProfile::Sampled(f) => {
            let g = f.grid();
            let sum: Complex64 = f
                .samples()
                .iter()
                .enumerate()
                .map(|(k, &e)| e * Complex64::from_polar(1.0, -q * g.x(k)))
                .sum();
            Some(sum * g.dx())
        }
    }
}

/// Cut angle for collinear degenerate type-I matching, `n_e(θ, λ_p) = n_o(2λ_p)`,
/// by bisection over `(0, π/2)`.
pub fn solve_degenerate_angle(model: &IndexModel, lambda_p: f64) -> Result<f64> {
    require_positive("lambda_p", lambda_p)?;
    let target = model.n_o(2.0 * lambda_p)?;
    let mismatch = |theta: f64| -> Result<f64> {
        Ok(refractive_index(model, lambda_p, Polarization::Extraordinary { theta })? - target)
    };
    let (mut lo, mut hi) = (0.0, 0.5 * PI);
    let (f_lo, f_hi) = (mismatch(lo)?, mismatch(hi)?);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_lo * f_hi > 0.0 {
        return Err(Error::NoSignChange);
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let f_mid = mismatch(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
