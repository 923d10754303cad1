//! Scenario files: one TOML document describing a single run.
//!
//! A scenario holds either a `[thin]` table (a thin-crystal configuration
//! built from element lists) or a `[resolution]` table (point-object imaging
//! through a finite crystal), plus optional `[[assert]]` imaging checks.
//! Lengths are in metres, wavelengths in metres and spatial frequencies in
//! rad/m.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Recorded in the manifest; the engines themselves are deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<ThinSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ResolutionSpec>,
    #[serde(default, rename = "assert", skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<Assertion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinSpec {
    pub lambda_p: f64,
    /// Signal wavelength; the idler follows from energy conservation.
    /// Defaults to the degenerate `2 λ_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<f64>,
    #[serde(default)]
    pub pump: PumpShape,
    #[serde(default)]
    pub detection: Detection,
    /// Crystal plane.
    pub grid: GridSpec,
    /// Object plane; defaults to `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_grid: Option<GridSpec>,
    /// Both detector planes; defaults to `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_grid: Option<GridSpec>,
    pub object: ObjectSpec,
    #[serde(default, skip_serializing_if = "Arms::is_empty")]
    pub arms: Arms,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<TripleSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub dx: f64,
    #[serde(default)]
    pub center: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PumpShape {
    #[default]
    PlaneWave,
    /// `exp(-4x²/B²)`.
    Gaussian { width: f64 },
    Rect { width: f64 },
}

/// Where the object sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Signal,
    Idler,
    Both,
    Pump,
    Detector,
    Triple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape {
    /// Unit-area spike at the object centre.
    Delta,
    Slit {
        width: f64,
    },
    DoubleSlit {
        width: f64,
        separation: f64,
    },
    Gaussian {
        sigma: f64,
    },
    /// One sample per line, `re` or `re im`, matching the grid it is placed
    /// on. Relative paths resolve against the scenario file.
    Sampled {
        file: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub placement: Placement,
    pub shape: Shape,
    #[serde(default)]
    pub center: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ElementSpec {
    FreeSpace {
        d: f64,
    },
    /// A thin lens with an optional slit pupil given by width or F-number.
    Lens {
        f: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aperture: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f_number: Option<f64>,
    },
    Mask {
        shape: Shape,
        #[serde(default)]
        center: f64,
    },
}

/// Element lists, each read from the crystal outwards.
///
/// `signal` and `idler` run from the crystal to the detectors, except that
/// with the object in an arm they stop at the object and `after_object`
/// continues to the detector. `pump` runs from the pump source plane to the
/// crystal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arms {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pump: Vec<ElementSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signal: Vec<ElementSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub idler: Vec<ElementSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub after_object: Vec<ElementSpec>,
}

impl Arms {
    pub fn is_empty(&self) -> bool {
        self.pump.is_empty() && self.signal.is_empty() && self.idler.is_empty() && self.after_object.is_empty()
    }
}

/// Pupils and focal lengths of the two 4-f systems around a triple
/// correlation. Pupils are sampled on the frequency grid conjugate to the
/// crystal grid, so their shapes are in rad/m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleSpec {
    pub f_s: f64,
    pub f_i: f64,
    pub pupil_s: Shape,
    pub pupil_i: Shape,
}

/// `map`, `marginal` or `conditional@<x1>`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Detection {
    #[default]
    Map,
    Marginal,
    Conditional { x1: f64 },
}

impl fmt::Display for Detection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detection::Map => f.write_str("map"),
            Detection::Marginal => f.write_str("marginal"),
            Detection::Conditional { x1 } => write!(f, "conditional@{x1:e}"),
        }
    }
}

impl FromStr for Detection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "map" => Ok(Detection::Map),
            "marginal" => Ok(Detection::Marginal),
            other => match other.strip_prefix("conditional@") {
                Some(x) => x
                    .trim()
                    .parse()
                    .map(|x1| Detection::Conditional { x1 })
                    .map_err(|_| format!("bad detector position `{x}` in `{other}`")),
                None => Err(format!("unknown detection `{other}`; expected map, marginal or conditional@<x1>")),
            },
        }
    }
}

impl TryFrom<String> for Detection {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Detection> for String {
    fn from(d: Detection) -> Self {
        d.to_string()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Full phase matching with the crystal's dispersion.
    #[default]
    Exact,
    /// `ξ̃ = 1`.
    Thin,
}

/// Point object imaged by a single idler-arm lens through a finite crystal.
/// Distances left out are filled in for unit magnification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSpec {
    pub lambda_p: f64,
    pub length: f64,
    /// A built-in dispersion dataset name or a path to a dataset file.
    #[serde(default = "default_model")]
    pub model: String,
    /// Cut angle in degrees; solved for collinear degenerate matching when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_angle_deg: Option<f64>,
    #[serde(default)]
    pub mode: Mode,
    /// Fractional bandwidth `Ω / ω_p`; zero means a single frequency.
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_omega_samples")]
    pub omega_samples: usize,
    pub f: f64,
    pub f_number: f64,
    #[serde(default)]
    pub pump: PumpShape,
    #[serde(default = "default_resolution_detection")]
    pub detection: Detection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<f64>,
    /// Run the doubling check on every quadrature knob.
    #[serde(default = "default_true")]
    pub converge: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qmax_scale: Option<f64>,
}

fn default_model() -> String {
    "bbo-kato1986".into()
}

fn default_omega_samples() -> usize {
    64
}

fn default_resolution_detection() -> Detection {
    Detection::Marginal
}

fn default_true() -> bool {
    true
}

/// An imaging condition the scenario claims to satisfy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Assertion {
    /// `1/d₁ + 1/d₂ = 1/f` for a lens in one arm.
    Lens {
        d1: f64,
        d2: f64,
        f: f64,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    /// `1/(λ_s d₁) + 1/(λ_i d₂) = 1/(λ_p r)` for a pump wavefront of radius
    /// `r`, using the scenario's wavelengths.
    PumpLens {
        d1: f64,
        d2: f64,
        r: f64,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    /// The resolution geometry images the object with the crystal's
    /// equivalent length included in `d₁`.
    ResolutionGeometry {
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
}

fn default_tolerance() -> f64 {
    1e-9
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario types always serialize")
    }

    /// Structural checks that need no physics: one configuration, positive
    /// sizes, referenced files present.
    pub fn check(&self, base_dir: &Path) -> Result<(), CliError> {
        match (&self.thin, &self.resolution) {
            (Some(t), None) => t.check(base_dir),
            (None, Some(r)) => r.check(),
            (None, None) => Err(CliError::validation("scenario needs a [thin] or a [resolution] table")),
            (Some(_), Some(_)) => Err(CliError::validation(
                "scenario has both [thin] and [resolution]; split it into two files",
            )),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::validation(format!("`{name}` must be positive and finite, got {v}")))
    }
}

fn check_grid(name: &str, g: &GridSpec) -> Result<(), CliError> {
    if g.n < 2 {
        return Err(CliError::validation(format!("`{name}.n` must be at least 2, got {}", g.n)));
    }
    positive(&format!("{name}.dx"), g.dx)?;
    if !g.center.is_finite() {
        return Err(CliError::validation(format!("`{name}.center` must be finite")));
    }
    Ok(())
}

fn check_shape(name: &str, s: &Shape, base_dir: &Path) -> Result<(), CliError> {
    match s {
        Shape::Delta => Ok(()),
        Shape::Slit { width } => positive(&format!("{name}.width"), *width),
        Shape::DoubleSlit { width, separation } => {
            positive(&format!("{name}.width"), *width)?;
            positive(&format!("{name}.separation"), *separation)?;
            if separation < width {
                return Err(CliError::validation(format!(
                    "`{name}`: slit separation {separation:e} is smaller than the slit width {width:e}"
                )));
            }
            Ok(())
        }
        Shape::Gaussian { sigma } => positive(&format!("{name}.sigma"), *sigma),
        Shape::Sampled { file } => {
            let path = base_dir.join(file);
            if path.is_file() {
                Ok(())
            } else {
                Err(CliError::validation(format!("`{name}.file`: {} does not exist", path.display())))
            }
        }
    }
}

fn check_elements(name: &str, elements: &[ElementSpec], base_dir: &Path) -> Result<(), CliError> {
    for (k, e) in elements.iter().enumerate() {
        let at = format!("arms.{name}[{k}]");
        match e {
            ElementSpec::FreeSpace { d } => positive(&format!("{at}.d"), *d)?,
            ElementSpec::Lens { f, aperture, f_number } => {
                if !f.is_finite() || *f == 0.0 {
                    return Err(CliError::validation(format!("`{at}.f` must be finite and non-zero")));
                }
                match (aperture, f_number) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::validation(format!(
                            "`{at}` gives both `aperture` and `f_number`; keep one"
                        )))
                    }
                    (Some(w), None) => positive(&format!("{at}.aperture"), *w)?,
                    (None, Some(n)) => positive(&format!("{at}.f_number"), *n)?,
                    (None, None) => {}
                }
            }
            ElementSpec::Mask { shape, .. } => check_shape(&format!("{at}.shape"), shape, base_dir)?,
        }
    }
    Ok(())
}

fn check_pump(name: &str, p: &PumpShape) -> Result<(), CliError> {
    match p {
        PumpShape::PlaneWave => Ok(()),
        PumpShape::Gaussian { width } | PumpShape::Rect { width } => positive(&format!("{name}.width"), *width),
    }
}

impl ThinSpec {
    fn check(&self, base_dir: &Path) -> Result<(), CliError> {
        positive("thin.lambda_p", self.lambda_p)?;
        if let Some(ls) = self.lambda_s {
            positive("thin.lambda_s", ls)?;
            if ls <= self.lambda_p {
                return Err(CliError::validation(format!(
                    "`thin.lambda_s` = {ls:e} must exceed the pump wavelength {:e}",
                    self.lambda_p
                )));
            }
        }
        check_pump("thin.pump", &self.pump)?;
        check_grid("thin.grid", &self.grid)?;
        if let Some(g) = &self.object_grid {
            check_grid("thin.object_grid", g)?;
        }
        if let Some(g) = &self.detector_grid {
            check_grid("thin.detector_grid", g)?;
        }
        check_shape("thin.object.shape", &self.object.shape, base_dir)?;
        for (name, list) in [
            ("pump", &self.arms.pump),
            ("signal", &self.arms.signal),
            ("idler", &self.arms.idler),
            ("after_object", &self.arms.after_object),
        ] {
            check_elements(name, list, base_dir)?;
        }
        let placement = self.object.placement;
        let uses_after = matches!(placement, Placement::Signal | Placement::Idler | Placement::Both);
        if !uses_after && !self.arms.after_object.is_empty() {
            return Err(CliError::validation(format!(
                "`arms.after_object` is only used with the object in an arm, not with placement `{}`",
                placement_name(placement)
            )));
        }
        match placement {
            Placement::Triple => {
                let t = self
                    .triple
                    .as_ref()
                    .ok_or_else(|| CliError::validation("placement `triple` needs a [thin.triple] table"))?;
                positive("thin.triple.f_s", t.f_s)?;
                positive("thin.triple.f_i", t.f_i)?;
                check_shape("thin.triple.pupil_s", &t.pupil_s, base_dir)?;
                check_shape("thin.triple.pupil_i", &t.pupil_i, base_dir)?;
                if !self.arms.is_empty() {
                    return Err(CliError::validation(
                        "placement `triple` takes its optics from [thin.triple]; remove [thin.arms]",
                    ));
                }
            }
            _ if self.triple.is_some() => {
                return Err(CliError::validation("[thin.triple] is only used with placement `triple`"))
            }
            Placement::Detector if self.detection != Detection::Map => {
                return Err(CliError::validation(
                    "placement `detector` always reports the diagonal G²(x₁, x₁); leave `detection` unset",
                ))
            }
            Placement::Both | Placement::Detector if !self.arms.idler.is_empty() => {
                return Err(CliError::validation(format!(
                    "placement `{}` uses identical arms from `arms.signal`; remove `arms.idler`",
                    placement_name(placement)
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s.unwrap_or(2.0 * self.lambda_p)
    }

    pub fn object_grid(&self) -> GridSpec {
        self.object_grid.unwrap_or(self.grid)
    }

    pub fn detector_grid(&self) -> GridSpec {
        self.detector_grid.unwrap_or(self.grid)
    }
}

pub fn placement_name(p: Placement) -> &'static str {
    match p {
        Placement::Signal => "signal",
        Placement::Idler => "idler",
        Placement::Both => "both",
        Placement::Pump => "pump",
        Placement::Detector => "detector",
        Placement::Triple => "triple",
    }
}

impl ResolutionSpec {
    fn check(&self) -> Result<(), CliError> {
        positive("resolution.lambda_p", self.lambda_p)?;
        positive("resolution.length", self.length)?;
        positive("resolution.f", self.f)?;
        positive("resolution.f_number", self.f_number)?;
        check_pump("resolution.pump", &self.pump)?;
        if !(0.0..1.0).contains(&self.rho) {
            return Err(CliError::validation(format!(
                "`resolution.rho` must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if self.omega_samples == 0 {
            return Err(CliError::validation("`resolution.omega_samples` must be at least 1"));
        }
        for (name, v) in [("d_s", self.d_s), ("d_i", self.d_i), ("d2", self.d2)] {
            if let Some(v) = v {
                positive(&format!("resolution.{name}"), v)?;
            }
        }
        let given = [self.d_s, self.d_i, self.d2].iter().filter(|v| v.is_some()).count();
        if given != 0 && given != 3 {
            return Err(CliError::validation(
                "give all of `d_s`, `d_i`, `d2` or none of them (none means unit magnification)",
            ));
        }
        match self.detection {
            Detection::Marginal => {}
            Detection::Conditional { x1 } if x1 == 0.0 => {}
            other => {
                return Err(CliError::validation(format!(
                    "`resolution.detection` = `{other}`: a point object supports `marginal` or `conditional@0`"
                )))
            }
        }
        if let Some(n) = self.grid_n {
            if n < 16 {
                return Err(CliError::validation(format!("`resolution.grid_n` must be at least 16, got {n}")));
            }
        }
        if let Some(s) = self.qmax_scale {
            positive("resolution.qmax_scale", s)?;
        }
        if let Some(a) = self.cut_angle_deg {
            if !(0.0..=90.0).contains(&a) {
                return Err(CliError::validation(format!(
                    "`resolution.cut_angle_deg` must lie in [0, 90], got {a}"
                )));
            }
        }
        Ok(())
    }
}
