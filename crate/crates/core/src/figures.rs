//! Parameter studies of point-object resolution: crystal length, biphoton
//! bandwidth and pump width.
//!
//! All three share a 325 nm pump, a BBO crystal cut for collinear degenerate
//! matching, a lens of `F# = 5` at unit magnification and peak-normalized
//! curves plotted against `x₂ / x_c` with `x_c = 2 λ_o F#`.

use std::fmt;
use std::str::FromStr;

use crate::crystal::{solve_degenerate_angle, CrystalSpec, IndexModel, PumpProfile, PumpSpec};
use crate::error::{invalid, Error, Result};
use crate::grid::{RealCurve, TransverseGrid};
use crate::spectrum::{omega_from_wavelength, SpectralRange};
use crate::thick::{converged_resolution, Convergence, Knobs, PhaseMatching, ResolutionScenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureId {
    /// Crystal length.
    Thickness,
    /// Spectral bandwidth.
    Bandwidth,
    /// Pump width.
    PumpWidth,
}

impl FigureId {
    pub fn number(self) -> u32 {
        match self {
            FigureId::Thickness => 9,
            FigureId::Bandwidth => 10,
            FigureId::PumpWidth => 11,
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "9" => Ok(FigureId::Thickness),
            "10" => Ok(FigureId::Bandwidth),
            "11" => Ok(FigureId::PumpWidth),
            other => Err(invalid("figure", format!("expected 9, 10 or 11, got `{other}`"))),
        }
    }
}

/// Fixed physical setup shared by the studies.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub lambda_p: f64,
    pub f: f64,
    pub f_number: f64,
    pub omega_samples: usize,
    pub model: IndexModel,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            lambda_p: 325e-9,
            f: 50e-3,
            f_number: 5.0,
            omega_samples: 64,
            model: IndexModel::bbo(),
        }
    }
}

impl Setup {
    pub fn cut_angle(&self) -> Result<f64> {
        solve_degenerate_angle(&self.model, self.lambda_p)
    }

    /// `length` in metres, `rho` the fractional bandwidth, `pump_width` in
    /// metres or `None` for a plane wave.
    pub fn scenario(&self, length: f64, rho: f64, pump_width: Option<f64>) -> Result<ResolutionScenario> {
        let crystal = CrystalSpec::new(length, self.cut_angle()?, self.model.clone())?;
        let profile = match pump_width {
            None => PumpProfile::PlaneWave,
            Some(width) => PumpProfile::Gaussian { width },
        };
        let pump = PumpSpec::new(self.lambda_p, profile)?;
        let omega_p = omega_from_wavelength(self.lambda_p);
        let spectral = if rho > 0.0 {
            SpectralRange::new(omega_p, rho, self.omega_samples)?
        } else {
            SpectralRange::narrowband(omega_p)?
        };
        ResolutionScenario::unit_magnification(crystal, pump, spectral, PhaseMatching::Exact, self.f, self.f_number)
    }
}

/// One curve of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureCase {
    /// Parameter name and value as printed in file names, e.g. `l=1mm`.
    pub label: String,
    pub parameter: &'static str,
    /// Parameter value in the unit of `label` (mm, or dimensionless for ρ).
    pub value: f64,
    pub scenario: ResolutionScenario,
}

pub fn cases(id: FigureId, setup: &Setup) -> Result<Vec<FigureCase>> {
    let mm = 1e-3;
    let case = |parameter: &'static str, value: f64, unit: &str, scenario| FigureCase {
        label: format!("{parameter}={value}{unit}"),
        parameter,
        value,
        scenario,
    };
    match id {
        FigureId::Thickness => [0.1, 1.0, 10.0]
            .iter()
            .map(|&l| Ok(case("l", l, "mm", setup.scenario(l * mm, 0.0, None)?)))
            .collect(),
        FigureId::Bandwidth => [0.001, 0.01, 0.02]
            .iter()
            .map(|&rho| Ok(case("rho", rho, "", setup.scenario(mm, rho, None)?)))
            .collect(),
        FigureId::PumpWidth => [2.0, 1.0, 0.5, 0.1]
            .iter()
            .map(|&b| Ok(case("B", b, "mm", setup.scenario(mm, 0.0, Some(b * mm))?)))
            .collect(),
    }
}

/// A converged, peak-normalized curve with `x` in units of `x_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureCurve {
    pub case: FigureCase,
    pub convergence: Convergence,
    /// The curve against `x₂ / x_c`.
    pub normalized: RealCurve,
    /// FWHM in units of `x_c`.
    pub fwhm: f64,
}

/// Relative FWHM change allowed when a quadrature knob is doubled.
pub const CONVERGENCE_TOLERANCE: f64 = 5e-3;

pub fn reproduce(id: FigureId, setup: &Setup, knobs: &Knobs) -> Result<Vec<FigureCurve>> {
    cases(id, setup)?
        .into_iter()
        .map(|case| {
            let xc = case.scenario.x_c();
            let convergence = converged_resolution(&case.scenario, knobs, CONVERGENCE_TOLERANCE)?;
            let curve = &convergence.base.curve;
            let grid = TransverseGrid::new(curve.grid.n(), curve.grid.dx() / xc, curve.grid.center() / xc)?;
            let normalized = RealCurve::new(grid, curve.values.clone())?;
            let fwhm = convergence.base.fwhm / xc;
            Ok(FigureCurve {
                case,
                convergence,
                normalized,
                fwhm,
            })
        })
        .collect()
}
