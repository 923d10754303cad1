//! Finite-thickness, broadband engine.
//!
//! The spectral biphoton amplitude of a crystal of length `ℓ` is
//!
//! ```text
//! ψ̃(x₁, x₂; ω_s) = (1/2π)² ∫∫ dq_s dq_i Λ(q_s, q_i; ω_s) H_s(x₁, q_s; ω_s) H_i(x₂, q_i; ω_p - ω_s)
//! Λ = Ẽ_p(q_s + q_i) ξ̃(q_s, q_i; ω_s)
//! ```
//!
//! where `H` are transfer functions of the arms and `ξ̃` the phase-matching
//! function. Slow detectors see the incoherent sum `C = Σ_ω |ψ̃|² dω`.
//!
//! The resolution pipeline places a point object at distance `d_s` from the
//! crystal in the signal arm and a single lens (focal length `f`, rect
//! aperture `D = f/F#`) at `d_i` in the idler arm, with the detector `d₂`
//! behind the lens.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::crystal::{phase_matching, pump_angular_spectrum, CrystalSpec, PumpProfile, PumpSpec, WaveIndices};
use crate::elements::{transfer_function_on, OpticalSystem};
use crate::error::{invalid, require_positive, Error, Result};
use crate::fourier::centered_fft;
use crate::grid::{RealCurve, SpatialFrequencyGrid, TransverseGrid};
use crate::spectrum::{omega_from_wavelength, wavelength_from_omega, SpectralRange, SPEED_OF_LIGHT};
use crate::thin::lens_imaging_residual;

/// How `ξ̃` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PhaseMatching {
    /// `ℓ sinc(ℓΔr/2π) exp(-jℓΔr/2)` with the crystal's dispersion.
    #[default]
    Exact,
    /// `ξ̃ ≡ ℓ`: the thin-crystal limit, no angular or spectral filtering.
    Thin,
}

/// The two-photon source term `Λ(q_s, q_i; ω_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSource {
    pub crystal: CrystalSpec,
    pub pump: PumpSpec,
    pub mode: PhaseMatching,
}

impl SpectralSource {
    pub fn new(crystal: CrystalSpec, pump: PumpSpec, mode: PhaseMatching) -> Self {
        Self { crystal, pump, mode }
    }

    pub fn omega_p(&self) -> f64 {
        omega_from_wavelength(self.pump.lambda_p)
    }

    pub fn indices(&self, omega_s: f64) -> Result<WaveIndices> {
        self.crystal.wave_indices(omega_s, self.omega_p())
    }

    pub fn xi(&self, q_s: f64, q_i: f64, omega_s: f64) -> Result<Complex64> {
        let l = self.crystal.length();
        match self.mode {
            PhaseMatching::Thin => Ok(Complex64::new(l, 0.0)),
            PhaseMatching::Exact => Ok(phase_matching(l, self.indices(omega_s)?.delta_r(q_s, q_i)?)),
        }
    }

    /// `Λ`, or `None` for a plane-wave pump whose spectrum is `2π δ(q_s + q_i)`.
    pub fn lambda(&self, q_s: f64, q_i: f64, omega_s: f64) -> Result<Option<Complex64>> {
        match pump_angular_spectrum(&self.pump, q_s + q_i) {
            None => Ok(None),
            Some(e) => Ok(Some(e * self.xi(q_s, q_i, omega_s)?)),
        }
    }
}

/// `ψ̃(x₁, x₂; ω_s)` for each spectral sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralAmplitude {
    pub grid1: TransverseGrid,
    pub grid2: TransverseGrid,
    /// `(ω_s, weight)` pairs.
    pub omegas: Vec<(f64, f64)>,
    pub slices: Vec<Array2<Complex64>>,
}

impl SpectralAmplitude {
    /// All slices of `spectral`, each by [`spectral_amplitude`].
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        source: &SpectralSource,
        sys_s: &OpticalSystem,
        sys_i: &OpticalSystem,
        grid1: &TransverseGrid,
        grid2: &TransverseGrid,
        q: &SpatialFrequencyGrid,
        spectral: &SpectralRange,
    ) -> Result<Self> {
        let omegas = spectral.samples();
        let slices = omegas
            .iter()
            .map(|&(w, _)| spectral_amplitude(source, sys_s, sys_i, grid1, grid2, q, w))
            .collect::<Result<_>>()?;
        Ok(Self {
            grid1: *grid1,
            grid2: *grid2,
            omegas,
            slices,
        })
    }
}

/// One spectral slice by quadrature over `q`. Intermediate planes of the arms
/// are sampled on the conjugate grid of `q`.
pub fn spectral_amplitude(
    source: &SpectralSource,
    sys_s: &OpticalSystem,
    sys_i: &OpticalSystem,
    grid1: &TransverseGrid,
    grid2: &TransverseGrid,
    q: &SpatialFrequencyGrid,
    omega_s: f64,
) -> Result<Array2<Complex64>> {
    let omega_i = source.omega_p() - omega_s;
    if omega_i <= 0.0 {
        return Err(invalid("omega_s", "signal frequency must lie below the pump frequency"));
    }
    let plane = q.conjugate();
    let hs = transfer_function_on(sys_s, wavelength_from_omega(omega_s), grid1, q, &plane)?.values;
    let hi = transfer_function_on(sys_i, wavelength_from_omega(omega_i), grid2, q, &plane)?.values;
    let n = q.n();
    let dq = q.dq();
    if source.pump.is_plane_wave() {
        // q_s = -q_i collapses the double integral
        let mut w = Array2::<Complex64>::zeros((n, n));
        for k in 0..n {
            if let Some(m) = q.mirror(k) {
                w[[m, k]] = source.xi(q.q(m), q.q(k), omega_s)? * (dq / (2.0 * PI));
            }
        }
        return Ok(hs.dot(&w).dot(&hi.t()));
    }
    let mut lam = Array2::<Complex64>::zeros((n, n));
    let scale = (dq / (2.0 * PI)).powi(2);
    for a in 0..n {
        for b in 0..n {
            let v = source.lambda(q.q(a), q.q(b), omega_s)?.unwrap_or_default();
            lam[[a, b]] = v * scale;
        }
    }
    Ok(hs.dot(&lam).dot(&hi.t()))
}

/// `C(x₁, x₂) = Σ_ω |ψ̃(x₁, x₂; ω)|² w(ω)`.
pub fn time_averaged_map(psi: &SpectralAmplitude) -> Array2<f64> {
    let mut acc = Array2::<f64>::zeros((psi.grid1.n(), psi.grid2.n()));
    for (slice, &(_, w)) in psi.slices.iter().zip(psi.omegas.iter()) {
        acc.zip_mut_with(slice, |c, z| *c += z.norm_sqr() * w);
    }
    acc
}

/// `ℓ_eq = ℓ/(2λ_i) · (λ_s/n_s + λ_i/n_i)`.
pub fn equivalent_length(spec: &CrystalSpec, lambda_s: f64, lambda_i: f64) -> Result<f64> {
    let n_s = spec.model().n_o(lambda_s)?;
    let n_i = spec.model().n_o(lambda_i)?;
    Ok(spec.length() * (lambda_s / n_s + lambda_i / n_i) / (2.0 * lambda_i))
}

/// `d₁ = d_i + d_s λ_s/λ_i + ℓ_eq`.
pub fn modified_d1(d_s: f64, d_i: f64, lambda_s: f64, lambda_i: f64, l_eq: f64) -> f64 {
    d_i + d_s * lambda_s / lambda_i + l_eq
}

/// Full width at half maximum by linear interpolation between samples.
pub fn fwhm(curve: &RealCurve) -> Result<f64> {
    let v = &curve.values;
    let n = v.len();
    if n < 3 {
        return Err(Error::HalfLevelNotCrossed);
    }
    let peak = curve.argmax();
    let top = v[peak];
    if !(top > 0.0) || peak == 0 || peak == n - 1 {
        return Err(Error::HalfLevelNotCrossed);
    }
    let half = 0.5 * top;
    let dx = curve.grid.dx();
    let left = (0..peak).rev().find(|&k| v[k] < half).ok_or(Error::HalfLevelNotCrossed)?;
    let right = (peak + 1..n).find(|&k| v[k] < half).ok_or(Error::HalfLevelNotCrossed)?;
    let xl = curve.grid.x(left) + dx * (half - v[left]) / (v[left + 1] - v[left]);
    let xr = curve.grid.x(right) - dx * (half - v[right]) / (v[right - 1] - v[right]);
    Ok(xr - xl)
}

/// Point-object imaging through a single lens in the idler arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionScenario {
    pub crystal: CrystalSpec,
    pub pump: PumpSpec,
    pub spectral: SpectralRange,
    pub mode: PhaseMatching,
    pub d_s: f64,
    pub d_i: f64,
    pub d2: f64,
    pub f: f64,
    pub f_number: f64,
}

/// Quadrature controls of the resolution pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knobs {
    /// Samples across the detector window.
    pub grid_n: usize,
    /// Multiplier on the default transverse-frequency cutoff.
    pub qmax_scale: f64,
    /// Spectral samples; `None` keeps the scenario's own.
    pub omega_samples: Option<usize>,
}

impl Default for Knobs {
    fn default() -> Self {
        Self {
            grid_n: 400,
            qmax_scale: 1.0,
            omega_samples: None,
        }
    }
}

/// Pump widths beyond which the angular spectrum is below `exp(-40)`.
fn gaussian_cutoff(width: f64) -> f64 {
    (16.0 * 40.0f64).sqrt() / width
}

/// Half-width in `q` where `|sinc(ℓΔr/2π)|` drops to one half.
const SINC_HALF_ARG: f64 = 0.603_355_887_512_1;

impl ResolutionScenario {
    /// Degenerate imaging at unit magnification: `d₂ = 2f` and `d_s = d_i`
    /// chosen so that the modified `d₁` equals `2f`.
    pub fn unit_magnification(
        crystal: CrystalSpec,
        pump: PumpSpec,
        spectral: SpectralRange,
        mode: PhaseMatching,
        f: f64,
        f_number: f64,
    ) -> Result<Self> {
        require_positive("f", f)?;
        require_positive("f_number", f_number)?;
        let lo = 2.0 * pump.lambda_p;
        let l_eq = match mode {
            PhaseMatching::Exact => equivalent_length(&crystal, lo, lo)?,
            PhaseMatching::Thin => 0.0,
        };
        let half = 0.5 * (2.0 * f - l_eq);
        let scn = Self {
            crystal,
            pump,
            spectral,
            mode,
            d_s: half,
            d_i: half,
            d2: 2.0 * f,
            f,
            f_number,
        };
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_s", self.d_s),
            ("d_i", self.d_i),
            ("d2", self.d2),
            ("f", self.f),
            ("f_number", self.f_number),
        ] {
            require_positive(name, v)?;
        }
        if (self.spectral.omega_p() - self.omega_p()).abs() > 1e-12 * self.omega_p() {
            return Err(invalid("spectral", "band is not centred on the pump's degenerate frequency"));
        }
        Ok(())
    }

    pub fn omega_p(&self) -> f64 {
        omega_from_wavelength(self.pump.lambda_p)
    }

    pub fn lambda_o(&self) -> f64 {
        2.0 * self.pump.lambda_p
    }

    pub fn aperture(&self) -> f64 {
        self.f / self.f_number
    }

    /// Diffraction scale `x_c = 2 λ_o F#`.
    pub fn x_c(&self) -> f64 {
        2.0 * self.lambda_o() * self.f_number
    }

    pub fn source(&self) -> SpectralSource {
        SpectralSource::new(self.crystal.clone(), self.pump.clone(), self.mode)
    }

    /// Equivalent length used in the imaging bookkeeping (zero in thin mode).
    pub fn l_eq(&self, lambda_s: f64, lambda_i: f64) -> Result<f64> {
        match self.mode {
            PhaseMatching::Exact => equivalent_length(&self.crystal, lambda_s, lambda_i),
            PhaseMatching::Thin => Ok(0.0),
        }
    }

    /// `1/d₁ + 1/d₂ - 1/f` at the degenerate pair with the modified `d₁`.
    pub fn imaging_residual(&self) -> Result<f64> {
        let lo = self.lambda_o();
        let d1 = modified_d1(self.d_s, self.d_i, lo, lo, self.l_eq(lo, lo)?);
        Ok(lens_imaging_residual(d1, self.d2, self.f))
    }

    /// Default cutoff: the larger of 8× the phase-matching half-width and 4×
    /// the band the lens aperture accepts from the object.
    pub fn default_qmax(&self) -> Result<f64> {
        let lo = self.lambda_o();
        let k = 2.0 * PI / lo;
        let d1 = modified_d1(self.d_s, self.d_i, lo, lo, self.l_eq(lo, lo)?);
        let q_ap = k * self.aperture() / (2.0 * d1);
        let q_pm = match self.mode {
            PhaseMatching::Thin => 0.0,
            PhaseMatching::Exact => {
                // Δr ≈ q²/K along the plane-wave line q_s = -q_i
                let n = self.crystal.model().n_o(lo)?;
                let kc = n * k;
                (2.0 * PI * SINC_HALF_ARG * kc / self.crystal.length()).sqrt()
            }
        };
        Ok((8.0 * q_pm).max(4.0 * q_ap))
    }

    fn spectral_for(&self, knobs: &Knobs) -> Result<SpectralRange> {
        match knobs.omega_samples {
            Some(m) => self.spectral.with_m(m),
            None => Ok(self.spectral),
        }
    }
}

/// Transverse extent the pump adds to the lens-plane field.
fn pump_extent(pump: &PumpSpec) -> f64 {
    match &pump.profile {
        PumpProfile::PlaneWave => 0.0,
        PumpProfile::Gaussian { width } => 2.0 * width,
        PumpProfile::Rect { width } => *width,
        PumpProfile::Sampled(f) => f.grid().width(),
    }
}

fn fft_len(min: usize) -> usize {
    let mut best = min.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < best {
        let mut v = p3;
        while v < min {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

/// `h₃(x₂, 0; ω_s)` at each of `x2`, for a point object on the axis.
///
/// The pump and signal stages are reduced to the angular spectrum
/// `G(q_i) = (1/2π) ∫ dq_s Ẽ_p(q_s + q_i) ξ̃(q_s, q_i) H₂(0, q_s)` sent into
/// the idler arm. One FFT carries it to the lens plane, where the aperture
/// integral is done directly.
pub fn h3_spectral(scn: &ResolutionScenario, x2: &[f64], omega_s: f64, qmax: f64) -> Result<Vec<Complex64>> {
    require_positive("qmax", qmax)?;
    let source = scn.source();
    let omega_p = scn.omega_p();
    let omega_i = omega_p - omega_s;
    if omega_i <= 0.0 || omega_s <= 0.0 {
        return Err(invalid("omega_s", "signal frequency must lie inside (0, ω_p)"));
    }
    let (lambda_s, lambda_i) = (wavelength_from_omega(omega_s), wavelength_from_omega(omega_i));
    let (k_s, k_i) = (omega_s / SPEED_OF_LIGHT, omega_i / SPEED_OF_LIGHT);
    let aperture = scn.aperture();

    let d1 = modified_d1(scn.d_s, scn.d_i, lambda_s, lambda_i, scn.l_eq(lambda_s, lambda_i)?);
    let y_q = d1 * qmax / k_i;
    let window = 1.1 * (y_q + 0.5 * aperture + pump_extent(&scn.pump));
    let dy = PI / qmax;
    let n = fft_len((window / dy).ceil() as usize);
    let dq = 2.0 * PI / (n as f64 * dy);
    let qk = |k: usize| (k as f64 - (n / 2) as f64) * dq;

    let h2 = |q: f64| Complex64::from_polar(1.0, k_s * scn.d_s - scn.d_s * q * q / (2.0 * k_s));
    let indices = source.indices(omega_s)?;
    let length = scn.crystal.length();

    let mut g = vec![Complex64::default(); n];
    match &scn.pump.profile {
        PumpProfile::PlaneWave => {
            for (k, gk) in g.iter_mut().enumerate() {
                let q = qk(k);
                let xi = match scn.mode {
                    PhaseMatching::Exact => phase_matching(length, indices.delta_r(-q, q)?),
                    PhaseMatching::Thin => Complex64::new(length, 0.0),
                };
                *gk = xi * h2(-q);
            }
        }
        profile => {
            // offsets j index q_s + q_i = j dq
            let jmax = match profile {
                PumpProfile::Gaussian { width } => ((gaussian_cutoff(*width) / dq).ceil() as usize).min(n),
                _ => n,
            } as i64;
            let spec: Vec<Complex64> = (-jmax..=jmax)
                .map(|j| pump_angular_spectrum(&scn.pump, j as f64 * dq).unwrap_or_default())
                .collect();
            let exact = scn.mode == PhaseMatching::Exact;
            let (r_s, r_i, r_p) = if exact {
                let r_s = (0..n).map(|k| indices.r_signal(qk(k))).collect::<Result<Vec<_>>>()?;
                let r_i = (0..n).map(|k| indices.r_idler(qk(k))).collect::<Result<Vec<_>>>()?;
                let r_p = (-jmax..=jmax)
                    .map(|j| indices.r_pump(j as f64 * dq))
                    .collect::<Result<Vec<_>>>()?;
                (r_s, r_i, r_p)
            } else {
                (Vec::new(), Vec::new(), Vec::new())
            };
            let h2s: Vec<Complex64> = (0..n).map(|k| h2(qk(k))).collect();
            let half = (n / 2) as i64;
            for (ki, gk) in g.iter_mut().enumerate() {
                // q_s index ks satisfies ks + ki - 2·(n/2) = j
                let base = 2 * half - ki as i64;
                let lo = (base - jmax).max(0);
                let hi = (base + jmax).min(n as i64 - 1);
                let mut acc = Complex64::default();
                for ks in lo..=hi {
                    let j = (ks - base + jmax) as usize;
                    let xi = if exact {
                        phase_matching(length, r_p[j] - r_s[ks as usize] - r_i[ki])
                    } else {
                        Complex64::new(length, 0.0)
                    };
                    acc += spec[j] * xi * h2s[ks as usize];
                }
                *gk = acc * (dq / (2.0 * PI));
            }
        }
    }

    // free space d_i, with a raised-cosine roll-off over the last fifth of the band
    for (k, gk) in g.iter_mut().enumerate() {
        let q = qk(k);
        let a = q.abs() / qmax;
        let taper = if a <= 0.8 {
            1.0
        } else if a >= 1.0 {
            0.0
        } else {
            0.5 * (1.0 + (PI * (a - 0.8) / 0.2).cos())
        };
        *gk *= Complex64::from_polar(taper * dq / (2.0 * PI), k_i * scn.d_i - scn.d_i * q * q / (2.0 * k_i));
    }
    let fft = FftPlanner::new().plan_fft_inverse(n);
    centered_fft(&mut g, fft.as_ref());
    let lens_field = g;

    // aperture samples with fractional weights at the rect edges
    let half_d = 0.5 * aperture;
    let curvature = 0.5 * k_i * (1.0 / scn.d2 - 1.0 / scn.f);
    let mut ys = Vec::new();
    let mut amps = Vec::new();
    for (m, u) in lens_field.iter().enumerate() {
        let y = (m as f64 - (n / 2) as f64) * dy;
        let overlap = ((y + 0.5 * dy).min(half_d) - (y - 0.5 * dy).max(-half_d)).max(0.0);
        if overlap > 0.0 {
            ys.push(y);
            amps.push(u * Complex64::from_polar(overlap, curvature * y * y));
        }
    }
    if ys.is_empty() {
        return Err(invalid("qmax", "lens aperture is narrower than one quadrature cell"));
    }
    let prefactor = Complex64::from_polar(1.0, k_i * scn.d2) / (Complex64::new(0.0, lambda_i * scn.d2)).sqrt();
    Ok(x2
        .iter()
        .map(|&x| {
            let alpha = k_i * x / scn.d2;
            let step = Complex64::from_polar(1.0, -alpha * dy);
            let mut phasor = Complex64::from_polar(1.0, -alpha * ys[0]);
            let mut acc = Complex64::default();
            for (idx, a) in amps.iter().enumerate() {
                if idx % 256 == 0 {
                    phasor = Complex64::from_polar(1.0, -alpha * ys[idx]);
                }
                acc += a * phasor;
                phasor *= step;
            }
            prefactor * Complex64::from_polar(1.0, k_i * x * x / (2.0 * scn.d2)) * acc
        })
        .collect())
}

/// `Σ_ω |h₃(x₂, 0; ω)|² g(ω) w(ω)` over the scenario's spectral samples.
pub fn time_averaged_curve(
    scn: &ResolutionScenario,
    grid: &TransverseGrid,
    qmax: f64,
    spectral: &SpectralRange,
    weight: impl Fn(f64) -> f64,
) -> Result<RealCurve> {
    let xs = grid.coords();
    let mut acc = Array1::<f64>::zeros(grid.n());
    for (omega, w) in spectral.samples() {
        let g = weight(omega);
        if g == 0.0 {
            continue;
        }
        let h = h3_spectral(scn, &xs, omega, qmax)?;
        for (c, z) in acc.iter_mut().zip(h.iter()) {
            *c += z.norm_sqr() * w * g;
        }
    }
    RealCurve::new(*grid, acc)
}

/// Marginal rate `C(x₂)` for a point object with a uniform illumination arm,
/// whose spectral weight is flat.
pub fn time_averaged_marginal(scn: &ResolutionScenario, grid: &TransverseGrid, knobs: &Knobs) -> Result<RealCurve> {
    let qmax = scn.default_qmax()? * knobs.qmax_scale;
    time_averaged_curve(scn, grid, qmax, &scn.spectral_for(knobs)?, |_| 1.0)
}

/// Conditional rate `C₀(x₂)`; its spectral weight is also flat for a uniform
/// illumination arm, so it differs from the marginal only in scale.
pub fn time_averaged_conditional(scn: &ResolutionScenario, grid: &TransverseGrid, knobs: &Knobs) -> Result<RealCurve> {
    time_averaged_marginal(scn, grid, knobs)
}

/// A peak-normalized resolution curve and its width.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionCurve {
    pub curve: RealCurve,
    pub fwhm: f64,
    pub qmax: f64,
    pub omega_samples: usize,
}

/// Widest window tried, in units of `x_c`.
const MAX_HALF_WINDOW: f64 = 256.0;

fn curve_on(scn: &ResolutionScenario, grid: &TransverseGrid, qmax: f64, spectral: &SpectralRange) -> Result<ResolutionCurve> {
    let curve = time_averaged_curve(scn, grid, qmax, spectral, |_| 1.0)?.peak_normalized();
    let width = fwhm(&curve)?;
    Ok(ResolutionCurve {
        curve,
        fwhm: width,
        qmax,
        omega_samples: spectral.m(),
    })
}

/// Detector window of `knobs.grid_n` samples, widened until the curve has
/// fallen below a quarter of its peak near both edges.
pub fn resolution_curve(scn: &ResolutionScenario, knobs: &Knobs) -> Result<ResolutionCurve> {
    let qmax = scn.default_qmax()? * knobs.qmax_scale;
    let spectral = scn.spectral_for(knobs)?;
    let mut half_window = 3.0 * scn.x_c();
    loop {
        let grid = TransverseGrid::centered(knobs.grid_n, 2.0 * half_window / knobs.grid_n as f64)?;
        let res = curve_on(scn, &grid, qmax, &spectral);
        let edge = knobs.grid_n / 20;
        let settled = match &res {
            Ok(r) => {
                let v = &r.curve.values;
                v.iter().take(edge.max(1)).chain(v.iter().rev().take(edge.max(1))).all(|&x| x < 0.25)
            }
            Err(Error::HalfLevelNotCrossed) => false,
            Err(_) => return res,
        };
        if settled {
            return res;
        }
        half_window *= 2.0;
        if half_window > MAX_HALF_WINDOW * scn.x_c() {
            return Err(Error::HalfLevelNotCrossed);
        }
    }
}

/// Relative FWHM changes when each quadrature knob is doubled.
#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub base: ResolutionCurve,
    pub grid_n: f64,
    pub qmax: f64,
    pub omega_samples: f64,
}

/// [`resolution_curve`] plus the doubling check on `grid_n`, `qmax` and the
/// spectral sample count. Any change above `tolerance` is an error naming
/// the knob.
pub fn converged_resolution(scn: &ResolutionScenario, knobs: &Knobs, tolerance: f64) -> Result<Convergence> {
    let base = resolution_curve(scn, knobs)?;
    let grid = base.curve.grid;
    let spectral = scn.spectral_for(knobs)?;
    let rel = |other: f64| (other - base.fwhm).abs() / base.fwhm;

    let fine = TransverseGrid::centered(2 * grid.n(), 0.5 * grid.dx())?;
    let grid_n = rel(curve_on(scn, &fine, base.qmax, &spectral)?.fwhm);
    let qmax = rel(curve_on(scn, &grid, 2.0 * base.qmax, &spectral)?.fwhm);
    let omega_samples = if spectral.rho() > 0.0 {
        rel(curve_on(scn, &grid, base.qmax, &spectral.with_m(2 * spectral.m())?)?.fwhm)
    } else {
        0.0
    };
    for (knob, change) in [("grid-n", grid_n), ("qmax", qmax), ("omega-samples", omega_samples)] {
        if change > tolerance {
            return Err(Error::NonConvergent {
                knob,
                change,
                tolerance,
            });
        }
    }
    Ok(Convergence {
        base,
        grid_n,
        qmax,
        omega_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{solve_degenerate_angle, IndexModel};
    use crate::elements::{impulse_response, Aperture};
    use crate::grid::ComplexField;
    use crate::thin::object_in_signal_h3;

    const LP: f64 = 325e-9;

    fn crystal(length: f64) -> CrystalSpec {
        let m = IndexModel::bbo();
        CrystalSpec::new(length, solve_degenerate_angle(&m, LP).unwrap(), m).unwrap()
    }

    fn scenario(length: f64, mode: PhaseMatching, pump: PumpSpec, rho: f64, m: usize) -> ResolutionScenario {
        let spectral = SpectralRange::new(omega_from_wavelength(LP), rho, m).unwrap();
        ResolutionScenario::unit_magnification(crystal(length), pump, spectral, mode, 50e-3, 5.0).unwrap()
    }

    fn sinc2(u: f64) -> f64 {
        crate::crystal::sinc(u).powi(2)
    }

    #[test]
    fn equivalent_length_identities() {
        let c = crystal(1e-3);
        let lo = 2.0 * LP;
        let l_eq = equivalent_length(&c, lo, lo).unwrap();
        let n_o = c.model().n_o(lo).unwrap();
        assert!((l_eq - 1e-3 / n_o).abs() < 1e-18);
        // 1 mm / n_o(650 nm) with the Kato dataset
        assert!((l_eq - 5.998_218_268_474_201e-4).abs() < 1e-15, "{l_eq:.16e}");
        assert_eq!(modified_d1(0.03, 0.04, 600e-9, 700e-9, 0.0), crate::thin::equivalent_distance(0.04, 0.03, 600e-9, 700e-9));
    }

    #[test]
    fn fwhm_of_known_curves() {
        let g = TransverseGrid::centered(4000, 0.005).unwrap();
        let c = RealCurve::new(g, g.coords().iter().map(|&x| sinc2(x)).collect()).unwrap();
        assert!((fwhm(&c).unwrap() - 0.885_893).abs() < 1e-3 * 0.886);
        let s = 1.3;
        let c = RealCurve::new(g, g.coords().iter().map(|&x| (-x * x / (2.0 * s * s)).exp().powi(2)).collect()).unwrap();
        let root = s * (2.0f64.ln()).sqrt(); // exp(-x²/σ²) = 1/2
        assert!((fwhm(&c).unwrap() - 2.0 * root).abs() < 1e-5);
        let flat = RealCurve::new(g, Array1::from_elem(4000, 1.0)).unwrap();
        assert_eq!(fwhm(&flat), Err(Error::HalfLevelNotCrossed));
    }

    #[test]
    fn thin_narrowband_is_diffraction_limited() {
        let scn = scenario(1e-3, PhaseMatching::Thin, PumpSpec::plane_wave(LP).unwrap(), 0.0, 1);
        let xc = scn.x_c();
        let grid = TransverseGrid::centered(400, 8.0 * xc / 400.0).unwrap();
        let c = time_averaged_marginal(&scn, &grid, &Knobs::default()).unwrap().peak_normalized();
        let err = grid
            .coords()
            .iter()
            .zip(c.values.iter())
            .map(|(&x, &v)| (v - sinc2(x / xc)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn h3_is_even_at_degeneracy() {
        let scn = scenario(1e-3, PhaseMatching::Exact, PumpSpec::plane_wave(LP).unwrap(), 0.0, 1);
        let xs = [-20e-6, -7e-6, 7e-6, 20e-6];
        let h = h3_spectral(&scn, &xs, 0.5 * scn.omega_p(), scn.default_qmax().unwrap()).unwrap();
        assert!((h[0].norm() - h[3].norm()).abs() < 1e-9 * h[0].norm());
        assert!((h[1].norm() - h[2].norm()).abs() < 1e-9 * h[1].norm());
    }

    #[test]
    fn defocus_broadens() {
        let scn = scenario(0.1e-3, PhaseMatching::Thin, PumpSpec::plane_wave(LP).unwrap(), 0.0, 1);
        let mut off = scn.clone();
        off.d2 *= 1.1;
        let a = resolution_curve(&scn, &Knobs::default()).unwrap().fwhm;
        let b = resolution_curve(&off, &Knobs::default()).unwrap().fwhm;
        assert!(b > a * 1.05, "{a} {b}");
    }

    #[test]
    fn broad_gaussian_pump_approaches_plane_wave() {
        let plane = scenario(1e-3, PhaseMatching::Exact, PumpSpec::plane_wave(LP).unwrap(), 0.0, 1);
        let wide = PumpSpec::new(LP, PumpProfile::Gaussian { width: 8e-3 }).unwrap();
        let gauss = scenario(1e-3, PhaseMatching::Exact, wide, 0.0, 1);
        let a = resolution_curve(&plane, &Knobs::default()).unwrap();
        let b = resolution_curve(&gauss, &Knobs::default()).unwrap();
        assert!((a.fwhm - b.fwhm).abs() < 0.01 * a.fwhm, "{} {}", a.fwhm, b.fwhm);
    }

    #[test]
    fn time_averaged_map_sums_slices() {
        let g = TransverseGrid::centered(4, 1e-6).unwrap();
        let slice = Array2::from_shape_fn((4, 4), |(i, j)| Complex64::new(i as f64, j as f64));
        let one = SpectralAmplitude {
            grid1: g,
            grid2: g,
            omegas: vec![(1.0, 1.0)],
            slices: vec![slice.clone()],
        };
        let two = SpectralAmplitude {
            omegas: vec![(1.0, 1.0), (1.0, 1.0)],
            slices: vec![slice.clone(), slice.clone()],
            ..one.clone()
        };
        let a = time_averaged_map(&one);
        let b = time_averaged_map(&two);
        assert!(a.iter().zip(slice.iter()).all(|(c, z)| *c == z.norm_sqr()));
        assert!(a.iter().zip(b.iter()).all(|(x, y)| 2.0 * x == *y));

        // Gaussian slices exp(-x²/s²) over a flat band of widths s_k
        let widths = [1.0, 1.5, 2.0];
        let psi = SpectralAmplitude {
            grid1: g,
            grid2: g,
            omegas: widths.iter().map(|&s| (s, 0.25)).collect(),
            slices: widths
                .iter()
                .map(|&s| Array2::from_shape_fn((4, 4), |(i, j)| Complex64::new((-((i + j) as f64).powi(2) / (s * s)).exp(), 0.0)))
                .collect(),
        };
        let c = time_averaged_map(&psi);
        for ((i, j), v) in c.indexed_iter() {
            let r = ((i + j) as f64).powi(2);
            let expect: f64 = widths.iter().map(|s| 0.25 * (-2.0 * r / (s * s)).exp()).sum();
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_phase_matching_identity_arms_is_diagonal() {
        let src = SpectralSource::new(crystal(1e-3), PumpSpec::plane_wave(LP).unwrap(), PhaseMatching::Thin);
        let q = SpatialFrequencyGrid::new(64, 2e4).unwrap();
        let g = q.conjugate();
        let id = OpticalSystem::new("id");
        let psi = spectral_amplitude(&src, &id, &id, &g, &g, &q, 0.5 * src.omega_p()).unwrap();
        let diag = psi[[10, 10]].norm();
        for ((i, j), z) in psi.indexed_iter() {
            if i == j {
                assert!((z.norm() - diag).abs() < 1e-9 * diag);
            } else {
                assert!(z.norm() < 0.02 * diag);
            }
        }
    }

    #[test]
    fn thin_limit_matches_thin_engine() {
        // short focal length keeps the dense kernels small; F# and x_c are unchanged
        let (f, fnum, lambda) = (5e-3, 5.0, 2.0 * LP);
        let spectral = SpectralRange::narrowband(omega_from_wavelength(LP)).unwrap();
        let scn = ResolutionScenario::unit_magnification(
            crystal(1e-6),
            PumpSpec::plane_wave(LP).unwrap(),
            spectral,
            PhaseMatching::Thin,
            f,
            fnum,
        )
        .unwrap();
        let xs: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.25e-6).collect();
        let thick = h3_spectral(&scn, &xs, 0.5 * scn.omega_p(), scn.default_qmax().unwrap()).unwrap();

        let plane = TransverseGrid::centered(1024, 1.6e-6).unwrap();
        let obj = TransverseGrid::centered(2, 1e-6).unwrap();
        let out = TransverseGrid::new(xs.len(), 0.25e-6, 0.0).unwrap();
        let edge = 0.45 * plane.width();
        let pump = ComplexField::from_real_fn(plane, |x| (-(x / edge).powi(16)).exp()).unwrap();
        let h2 = impulse_response(&OpticalSystem::new("h2").free_space(scn.d_s).unwrap(), lambda, &obj, &plane).unwrap();
        let idler = OpticalSystem::new("idler")
            .free_space(scn.d_i)
            .unwrap()
            .lens(f, Aperture::Rect { width: f / fnum })
            .unwrap()
            .free_space(scn.d2)
            .unwrap();
        let h_i = impulse_response(&idler, lambda, &out, &plane).unwrap();
        let h3 = object_in_signal_h3(&pump, &h2, &h_i).unwrap();
        let k0 = obj.exact_index(0.0).unwrap();
        let thin: Vec<f64> = (0..xs.len()).map(|i| h3.values()[[i, k0]].norm_sqr()).collect();
        let thick: Vec<f64> = thick.iter().map(|z| z.norm_sqr()).collect();
        let (pt, pk) = (thin.iter().cloned().fold(0.0, f64::max), thick.iter().cloned().fold(0.0, f64::max));
        let err = thin.iter().zip(thick.iter()).map(|(a, b)| (a / pt - b / pk).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }
}
