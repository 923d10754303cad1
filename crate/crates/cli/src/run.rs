//! Turning scenarios into engine calls, data files and manifests.

use std::path::{Path, PathBuf};

use biphoton::crystal::{solve_degenerate_angle, CrystalSpec, IndexModel, PumpProfile, PumpSpec};
use biphoton::elements::{fresnel_sampling_ok, impulse_response, Aperture, Element, Kernel, OpticalSystem};
use biphoton::figures::{self, FigureId, Setup, CONVERGENCE_TOLERANCE};
use biphoton::grid::{ComplexField, RealCurve, TransverseGrid};
use biphoton::spectrum::{omega_from_wavelength, SpectralRange, Wavelengths};
use biphoton::thick::{converged_resolution, modified_d1, resolution_curve, Knobs, PhaseMatching, ResolutionScenario};
use biphoton::thin::{self, CoincidenceMap, TripleScales};
use num_complex::Complex64;
use toml::{Table, Value};

use crate::output;
use crate::scenario::{
    placement_name, Assertion, Detection, ElementSpec, GridSpec, Mode, Placement, PumpShape, ResolutionSpec, Shape,
    ThinSpec,
};
use crate::{CliError, Overrides, Scenario};

/// Computed data, before it is written anywhere.
#[derive(Clone, Debug, PartialEq)]
pub enum Data {
    Curve { header: Vec<String>, columns: Vec<Vec<f64>> },
    Map(CoincidenceMap),
}

impl Data {
    pub fn render(&self) -> String {
        match self {
            Data::Curve { header, columns } => {
                let h: Vec<&str> = header.iter().map(String::as_str).collect();
                let c: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
                output::curve_csv(&h, &c)
            }
            Data::Map(m) => output::matrix_text("G2", &m.grid1, &m.grid2, &m.g2),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            Data::Curve { .. } => "csv",
            Data::Map(_) => "matrix.txt",
        }
    }
}

/// A scenario with every default filled in, the numbers derived from it and
/// the resulting data.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub resolved: Scenario,
    pub derived: Table,
    pub data: Data,
}

/// Files written by [`run_scenario`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub data: PathBuf,
    pub manifest: PathBuf,
}

/// Parse, check, compute and write `<name>.<csv|matrix.txt>` plus
/// `<name>.manifest.toml` into `out_dir`.
pub fn run_scenario(path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<RunReport, CliError> {
    let scenario = Scenario::load(path)?;
    let base = base_dir(path);
    let eval = evaluate(&scenario, &base, overrides)?;
    create_dir(out_dir)?;
    let stem = file_stem(&scenario.name);
    let data = out_dir.join(format!("{stem}.{}", eval.data.extension()));
    output::write(&data, &eval.data.render())?;
    let manifest = out_dir.join(format!("{stem}.manifest.toml"));
    let file_name = data.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output::write(&manifest, &run_manifest(&eval, overrides, &file_name))?;
    Ok(RunReport { data, manifest })
}

/// Parse and check a scenario, including its imaging assertions, without
/// computing anything expensive.
pub fn validate_scenario(path: &Path) -> Result<Scenario, CliError> {
    let scenario = Scenario::load(path)?;
    scenario.check(&base_dir(path))?;
    check_assertions(&scenario, &base_dir(path))?;
    Ok(scenario)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() {
        "scenario".into()
    } else {
        s
    }
}

pub fn evaluate(scenario: &Scenario, base: &Path, overrides: &Overrides) -> Result<Evaluation, CliError> {
    scenario.check(base)?;
    check_assertions(scenario, base)?;
    let mut resolved = scenario.clone();
    if overrides.seed.is_some() {
        resolved.seed = overrides.seed;
    }
    let (derived, data) = match (&scenario.thin, &scenario.resolution) {
        (Some(t), _) => {
            let t = apply_thin_overrides(t, overrides);
            let (derived, data) = evaluate_thin(&t, base)?;
            resolved.thin = Some(resolved_thin(&t));
            (derived, data)
        }
        (None, Some(r)) => {
            let (spec, derived, data) = evaluate_resolution(r, base, overrides)?;
            resolved.resolution = Some(spec);
            (derived, data)
        }
        (None, None) => unreachable!("checked above"),
    };
    Ok(Evaluation { resolved, derived, data })
}

fn run_manifest(eval: &Evaluation, overrides: &Overrides, data_file: &str) -> String {
    let mut run = Table::new();
    run.insert("tool".into(), Value::from(concat!("biphoton ", env!("CARGO_PKG_VERSION"))));
    run.insert("data".into(), Value::from(data_file));
    if let Some(seed) = eval.resolved.seed {
        run.insert("seed".into(), Value::from(seed as i64));
    }
    run.insert("overrides".into(), Value::Table(overrides_table(overrides)));
    let mut doc = Table::new();
    doc.insert("run".into(), Value::Table(run));
    doc.insert(
        "scenario".into(),
        Value::Table(Table::try_from(&eval.resolved).expect("scenario serializes to a table")),
    );
    doc.insert("derived".into(), Value::Table(eval.derived.clone()));
    toml::to_string(&doc).expect("manifest serializes")
}

fn overrides_table(o: &Overrides) -> Table {
    let mut t = Table::new();
    if let Some(n) = o.grid_n {
        t.insert("grid_n".into(), Value::from(n as i64));
    }
    if let Some(m) = o.omega_samples {
        t.insert("omega_samples".into(), Value::from(m as i64));
    }
    if let Some(s) = o.qmax_scale {
        t.insert("qmax_scale".into(), Value::from(s));
    }
    if let Some(s) = o.seed {
        t.insert("seed".into(), Value::from(s as i64));
    }
    t
}

fn check_assertions(scenario: &Scenario, base: &Path) -> Result<(), CliError> {
    for a in &scenario.assertions {
        match *a {
            Assertion::Lens { d1, d2, f, tolerance } => {
                let rel = (thin::lens_imaging_residual(d1, d2, f) * f).abs();
                if !(rel <= tolerance) {
                    return Err(CliError::validation(format!(
                        "lens imaging condition 1/d1 + 1/d2 = 1/f does not hold: d1 = {d1:e} m, d2 = {d2:e} m, f = {f:e} m (relative residual {rel:.3e}, tolerance {tolerance:.1e})"
                    )));
                }
            }
            Assertion::PumpLens { d1, d2, r, tolerance } => {
                let w = scenario_wavelengths(scenario)?;
                let res = thin::pump_lens_imaging_residual(d1, d2, w.lambda_s, w.lambda_i, w.lambda_p, r);
                let rel = (res * w.lambda_p * r).abs();
                if !(rel <= tolerance) {
                    return Err(CliError::validation(format!(
                        "pump-lens imaging condition 1/(ls d1) + 1/(li d2) = 1/(lp r) does not hold: d1 = {d1:e} m, d2 = {d2:e} m, r = {r:e} m, ls = {:e} m, li = {:e} m, lp = {:e} m (relative residual {rel:.3e}, tolerance {tolerance:.1e})",
                        w.lambda_s, w.lambda_i, w.lambda_p
                    )));
                }
            }
            Assertion::ResolutionGeometry { tolerance } => {
                let r = scenario.resolution.as_ref().ok_or_else(|| {
                    CliError::validation("assertion `resolution-geometry` needs a [resolution] table")
                })?;
                let scn = resolution_scenario(r, base)?.0;
                let lo = scn.lambda_o();
                let d1 = modified_d1(scn.d_s, scn.d_i, lo, lo, scn.l_eq(lo, lo)?);
                let rel = (scn.imaging_residual()? * scn.f).abs();
                if !(rel <= tolerance) {
                    return Err(CliError::validation(format!(
                        "lens imaging condition 1/d1 + 1/d2 = 1/f does not hold with the crystal correction: d1 = {d1:e} m, d2 = {:e} m, f = {:e} m (relative residual {rel:.3e}, tolerance {tolerance:.1e})",
                        scn.d2, scn.f
                    )));
                }
            }
        }
    }
    Ok(())
}

fn scenario_wavelengths(scenario: &Scenario) -> Result<Wavelengths, CliError> {
    Ok(match (&scenario.thin, &scenario.resolution) {
        (Some(t), _) => Wavelengths::from_signal(t.lambda_p, t.lambda_s())?,
        (None, Some(r)) => Wavelengths::degenerate(r.lambda_p)?,
        (None, None) => return Err(CliError::validation("scenario needs a [thin] or a [resolution] table")),
    })
}

// ---------------------------------------------------------------- thin ----

fn apply_thin_overrides(t: &ThinSpec, o: &Overrides) -> ThinSpec {
    let mut t = t.clone();
    if let Some(n) = o.grid_n {
        // keep every window, change the sampling
        let rescale = |g: GridSpec| GridSpec {
            n,
            dx: g.dx * g.n as f64 / n as f64,
            center: g.center,
        };
        t.grid = rescale(t.grid);
        t.object_grid = t.object_grid.map(rescale);
        t.detector_grid = t.detector_grid.map(rescale);
    }
    t
}

fn resolved_thin(t: &ThinSpec) -> ThinSpec {
    let mut r = t.clone();
    r.lambda_s = Some(t.lambda_s());
    r.object_grid = Some(t.object_grid());
    r.detector_grid = Some(t.detector_grid());
    r
}

fn grid(g: &GridSpec) -> Result<TransverseGrid, CliError> {
    Ok(TransverseGrid::new(g.n, g.dx, g.center)?)
}

fn read_samples(path: &Path, g: &TransverseGrid) -> Result<ComplexField, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CliError::Parse(format!("{}, line {}: `{s}` is not a number", path.display(), k + 1)))
        };
        let z = match parts.as_slice() {
            [re] => Complex64::new(parse(re)?, 0.0),
            [re, im] => Complex64::new(parse(re)?, parse(im)?),
            _ => {
                return Err(CliError::Parse(format!(
                    "{}, line {}: expected `re` or `re im`",
                    path.display(),
                    k + 1
                )))
            }
        };
        values.push(z);
    }
    if values.len() != g.n() {
        return Err(CliError::validation(format!(
            "{} holds {} samples but the grid it is placed on has {}",
            path.display(),
            values.len(),
            g.n()
        )));
    }
    Ok(ComplexField::new(*g, values.into())?)
}

fn sample_shape(shape: &Shape, center: f64, g: &TransverseGrid, base: &Path) -> Result<ComplexField, CliError> {
    let one = |inside: bool| Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0);
    Ok(match shape {
        Shape::Delta => ComplexField::delta(*g, center)?,
        Shape::Slit { width } => ComplexField::from_fn(*g, |x| one((x - center).abs() <= 0.5 * width))?,
        Shape::DoubleSlit { width, separation } => {
            ComplexField::from_fn(*g, |x| one(((x - center).abs() - 0.5 * separation).abs() <= 0.5 * width))?
        }
        Shape::Gaussian { sigma } => {
            ComplexField::from_real_fn(*g, |x| (-(x - center) * (x - center) / (2.0 * sigma * sigma)).exp())?
        }
        Shape::Sampled { file } => read_samples(&base.join(file), g)?,
    })
}

fn pump_profile(p: &PumpShape) -> PumpProfile {
    match *p {
        PumpShape::PlaneWave => PumpProfile::PlaneWave,
        PumpShape::Gaussian { width } => PumpProfile::Gaussian { width },
        PumpShape::Rect { width } => PumpProfile::Rect { width },
    }
}

/// Elements with masks sampled on the plane each one sits in: planes before
/// the last free-space stage use `input`, the rest `out`.
fn system(
    label: &str,
    specs: &[ElementSpec],
    out: &TransverseGrid,
    input: &TransverseGrid,
    base: &Path,
) -> Result<OpticalSystem, CliError> {
    let last_free = specs.iter().rposition(|e| matches!(e, ElementSpec::FreeSpace { .. }));
    let mut elements = Vec::with_capacity(specs.len());
    for (k, e) in specs.iter().enumerate() {
        let plane = match last_free {
            Some(l) if k > l => out,
            _ => input,
        };
        elements.push(match e {
            ElementSpec::FreeSpace { d } => Element::free_space(*d)?,
            ElementSpec::Lens { f, aperture, f_number } => {
                let pupil = match (aperture, f_number) {
                    (Some(w), _) => Aperture::Rect { width: *w },
                    (None, Some(n)) => Aperture::from_f_number(*f, *n)?,
                    (None, None) => Aperture::Uniform,
                };
                Element::thin_lens(*f, pupil)?
            }
            ElementSpec::Mask { shape, center } => Element::mask(sample_shape(shape, *center, plane, base)?),
        });
    }
    Ok(OpticalSystem::from_elements(label, elements))
}

struct KernelBuilder<'a> {
    base: &'a Path,
    warnings: Vec<Value>,
}

impl KernelBuilder<'_> {
    fn kernel(
        &mut self,
        label: &str,
        specs: &[ElementSpec],
        lambda: f64,
        out: &TransverseGrid,
        input: &TransverseGrid,
    ) -> Result<Kernel, CliError> {
        let sys = system(label, specs, out, input, self.base)?;
        for e in sys.elements() {
            if let Element::FreeSpace { d } = e {
                if !fresnel_sampling_ok(*d, lambda, input) || !fresnel_sampling_ok(*d, lambda, out) {
                    self.warnings.push(Value::from(format!(
                        "{label}: free space d = {d:e} m at wavelength {lambda:e} m is undersampled (n dx^2 > wavelength * d)"
                    )));
                }
            }
        }
        impulse_response(&sys, lambda, out, input).map_err(|e| match e {
            biphoton::Error::GridMismatch(msg) => CliError::validation(format!(
                "{label}: {msg}; an arm without free space keeps its input grid, so its output grid must match"
            )),
            other => other.into(),
        })
    }
}

fn grid_table(g: &TransverseGrid) -> Value {
    let mut t = Table::new();
    t.insert("n".into(), Value::from(g.n() as i64));
    t.insert("dx".into(), Value::from(g.dx()));
    t.insert("center".into(), Value::from(g.center()));
    t.insert("first".into(), Value::from(g.x(0)));
    t.insert("last".into(), Value::from(g.x(g.n() - 1)));
    Value::Table(t)
}

fn evaluate_thin(t: &ThinSpec, base: &Path) -> Result<(Table, Data), CliError> {
    let w = Wavelengths::from_signal(t.lambda_p, t.lambda_s())?;
    let g = grid(&t.grid)?;
    let go = grid(&t.object_grid())?;
    let gd = grid(&t.detector_grid())?;
    let pump = PumpSpec::new(t.lambda_p, pump_profile(&t.pump))?;
    let mut kb = KernelBuilder {
        base,
        warnings: Vec::new(),
    };
    let placement = t.object.placement;
    let object_on = |plane: &TransverseGrid| sample_shape(&t.object.shape, t.object.center, plane, base);

    // pump field at the crystal; the object multiplies it at the pump source
    // plane when it sits in the pump
    let pump_source = if placement == Placement::Pump && !t.arms.pump.is_empty() { go } else { g };
    let mut e_src = ComplexField::from_fn(pump_source, |x| pump.field(x))?;
    if placement == Placement::Pump {
        let obj = object_on(&pump_source)?;
        e_src = ComplexField::new(pump_source, e_src.samples() * obj.samples())?;
    }
    let e_p = if t.arms.pump.is_empty() {
        e_src
    } else {
        kb.kernel("arms.pump", &t.arms.pump, t.lambda_p, &g, &pump_source)?.apply(&e_src)?
    };

    let identical_arms = || -> Result<(), CliError> {
        if w.is_degenerate() {
            Ok(())
        } else {
            Err(CliError::validation(format!(
                "placement `{}` needs identical arms, so signal and idler must be degenerate (lambda_s = {:e} m, lambda_i = {:e} m)",
                placement_name(placement),
                w.lambda_s,
                w.lambda_i
            )))
        }
    };

    let mut derived = Table::new();
    let map = match placement {
        Placement::Signal | Placement::Idler => {
            let (near, far, lam_obj, lam_other) = if placement == Placement::Signal {
                (("arms.signal", &t.arms.signal), ("arms.idler", &t.arms.idler), w.lambda_s, w.lambda_i)
            } else {
                (("arms.idler", &t.arms.idler), ("arms.signal", &t.arms.signal), w.lambda_i, w.lambda_s)
            };
            let h2 = kb.kernel(near.0, near.1, lam_obj, &go, &g)?;
            let h1 = kb.kernel("arms.after_object", &t.arms.after_object, lam_obj, &gd, &go)?;
            let h_other = kb.kernel(far.0, far.1, lam_other, &gd, &g)?;
            let h3 = thin::object_in_signal_h3(&e_p, &h2, &h_other)?;
            let obj = object_on(&go)?;
            let psi = thin::object_in_signal(&obj, &h1, &h3)?;
            let mut c = thin::g2(&psi);
            if placement == Placement::Idler {
                c = CoincidenceMap {
                    grid1: c.grid2,
                    grid2: c.grid1,
                    g2: c.g2.t().to_owned(),
                    provenance: c.provenance,
                };
            }
            c
        }
        Placement::Both => {
            identical_arms()?;
            let h1 = kb.kernel("arms.signal", &t.arms.signal, w.lambda_s, &go, &g)?;
            let h2 = kb.kernel("arms.after_object", &t.arms.after_object, w.lambda_s, &gd, &go)?;
            let obj = object_on(&go)?;
            thin::g2(&thin::object_in_both(&e_p, &h1, &h2, &obj)?)
        }
        Placement::Pump => {
            let h_s = kb.kernel("arms.signal", &t.arms.signal, w.lambda_s, &gd, &g)?;
            let h_i = kb.kernel("arms.idler", &t.arms.idler, w.lambda_i, &gd, &g)?;
            thin::object_in_pump(&e_p, &h_s, &h_i)?
        }
        Placement::Detector => {
            identical_arms()?;
            let h1 = kb.kernel("arms.signal", &t.arms.signal, w.lambda_s, &gd, &g)?;
            let obj = object_on(&gd)?;
            let t2 = RealCurve::new(gd, obj.samples().mapv(|z| z.norm()))?;
            let resp = thin::object_is_detector(&t2, &h1, &e_p)?;
            derived.insert("illumination_peak".into(), Value::from(resp.illumination.max()));
            derived.insert("signal_peak".into(), Value::from(resp.signal.max()));
            let data = Data::Curve {
                header: vec!["x1".into(), "g2_diagonal".into(), "illumination".into()],
                columns: vec![gd.coords(), resp.signal.values.to_vec(), resp.illumination.values.to_vec()],
            };
            return Ok((finish_thin(derived, &w, &g, &go, &gd, kb.warnings), data));
        }
        Placement::Triple => {
            let spec = t.triple.as_ref().expect("checked");
            let pupil_grid = TransverseGrid::centered(g.n(), g.conjugate().dq())?;
            let pupil_s = sample_shape(&spec.pupil_s, 0.0, &pupil_grid, base)?;
            let pupil_i = sample_shape(&spec.pupil_i, 0.0, &pupil_grid, base)?;
            let scales = TripleScales {
                lambda_s: w.lambda_s,
                f_s: spec.f_s,
                lambda_i: w.lambda_i,
                f_i: spec.f_i,
            };
            derived.insert("pupil_grid".into(), grid_table(&pupil_grid));
            let obj = object_on(&g)?;
            let t_p = ComplexField::new(g, e_p.samples() * obj.samples())?;
            thin::triple_correlation(&t_p, &pupil_s, &pupil_i, scales, &gd, &gd)?
        }
    };
    derived.insert("coincidence_total".into(), Value::from(map.total()));
    derived.insert("coincidence_peak".into(), Value::from(map.g2.iter().cloned().fold(0.0, f64::max)));
    let data = match t.detection {
        Detection::Map => Data::Map(map),
        Detection::Marginal => {
            let c = thin::marginal_rate(&map);
            Data::Curve {
                header: vec!["x2".into(), "marginal".into()],
                columns: vec![c.grid.coords(), c.values.to_vec()],
            }
        }
        Detection::Conditional { x1 } => {
            let c = thin::conditional_rate(&map, x1)?;
            let row = map.grid1.nearest_index(x1).map(|k| map.grid1.x(k)).unwrap_or(x1);
            derived.insert("conditional_x1".into(), Value::from(row));
            Data::Curve {
                header: vec!["x2".into(), "conditional".into()],
                columns: vec![c.grid.coords(), c.values.to_vec()],
            }
        }
    };
    Ok((finish_thin(derived, &w, &g, &go, &gd, kb.warnings), data))
}

fn finish_thin(
    mut derived: Table,
    w: &Wavelengths,
    g: &TransverseGrid,
    go: &TransverseGrid,
    gd: &TransverseGrid,
    warnings: Vec<Value>,
) -> Table {
    derived.insert("lambda_p".into(), Value::from(w.lambda_p));
    derived.insert("lambda_s".into(), Value::from(w.lambda_s));
    derived.insert("lambda_i".into(), Value::from(w.lambda_i));
    derived.insert("crystal_grid".into(), grid_table(g));
    derived.insert("object_grid".into(), grid_table(go));
    derived.insert("detector_grid".into(), grid_table(gd));
    derived.insert("sampling_warnings".into(), Value::Array(warnings));
    derived
}

// ---------------------------------------------------------- resolution ----

fn index_model(name: &str, base: &Path) -> Result<IndexModel, CliError> {
    match IndexModel::builtin(name) {
        Some(m) => Ok(m),
        None => {
            let path = base.join(name);
            if !path.is_file() {
                return Err(CliError::validation(format!(
                    "`resolution.model` = `{name}` is neither a built-in dataset (bbo-kato1986, bbo-eimerl1987) nor a file"
                )));
            }
            Ok(IndexModel::from_file(&path)?)
        }
    }
}

/// The engine scenario and the cut angle in radians.
fn resolution_scenario(r: &ResolutionSpec, base: &Path) -> Result<(ResolutionScenario, f64), CliError> {
    let model = index_model(&r.model, base)?;
    let angle = match r.cut_angle_deg {
        Some(deg) => deg.to_radians(),
        None => solve_degenerate_angle(&model, r.lambda_p)?,
    };
    let crystal = CrystalSpec::new(r.length, angle, model)?;
    let pump = PumpSpec::new(r.lambda_p, pump_profile(&r.pump))?;
    let omega_p = omega_from_wavelength(r.lambda_p);
    let spectral = if r.rho > 0.0 {
        SpectralRange::new(omega_p, r.rho, r.omega_samples)?
    } else {
        SpectralRange::narrowband(omega_p)?
    };
    let mode = match r.mode {
        Mode::Exact => PhaseMatching::Exact,
        Mode::Thin => PhaseMatching::Thin,
    };
    let scn = match (r.d_s, r.d_i, r.d2) {
        (Some(d_s), Some(d_i), Some(d2)) => {
            let scn = ResolutionScenario {
                crystal,
                pump,
                spectral,
                mode,
                d_s,
                d_i,
                d2,
                f: r.f,
                f_number: r.f_number,
            };
            scn.validate()?;
            scn
        }
        _ => ResolutionScenario::unit_magnification(crystal, pump, spectral, mode, r.f, r.f_number)?,
    };
    Ok((scn, angle))
}

fn evaluate_resolution(
    r: &ResolutionSpec,
    base: &Path,
    o: &Overrides,
) -> Result<(ResolutionSpec, Table, Data), CliError> {
    let mut r = r.clone();
    if let Some(m) = o.omega_samples {
        r.omega_samples = m;
    }
    let knobs = Knobs {
        grid_n: o.grid_n.or(r.grid_n).unwrap_or(Knobs::default().grid_n),
        qmax_scale: o.qmax_scale.or(r.qmax_scale).unwrap_or(1.0),
        omega_samples: None,
    };
    let (scn, angle) = resolution_scenario(&r, base)?;
    let mut derived = Table::new();
    let (curve, conv) = if r.converge {
        let c = converged_resolution(&scn, &knobs, CONVERGENCE_TOLERANCE)?;
        let mut t = Table::new();
        t.insert("tolerance".into(), Value::from(CONVERGENCE_TOLERANCE));
        t.insert("grid_n_change".into(), Value::from(c.grid_n));
        t.insert("qmax_change".into(), Value::from(c.qmax));
        t.insert("omega_samples_change".into(), Value::from(c.omega_samples));
        (c.base, Some(t))
    } else {
        (resolution_curve(&scn, &knobs)?, None)
    };
    if let Some(t) = conv {
        derived.insert("convergence".into(), Value::Table(t));
    }
    let lo = scn.lambda_o();
    let l_eq = scn.l_eq(lo, lo)?;
    let xc = scn.x_c();
    for (k, v) in [
        ("cut_angle_rad", angle),
        ("lambda_o", lo),
        ("n_o_lambda_o", scn.crystal.model().n_o(lo)?),
        ("n_e_lambda_p", scn.crystal.model().n_e(scn.pump.lambda_p)?),
        ("l_eq", l_eq),
        ("d1_modified", modified_d1(scn.d_s, scn.d_i, lo, lo, l_eq)),
        ("imaging_residual", scn.imaging_residual()?),
        ("aperture", scn.aperture()),
        ("x_c", xc),
        ("qmax", curve.qmax),
        ("window_dx", curve.curve.grid.dx()),
        ("fwhm", curve.fwhm),
        ("fwhm_over_x_c", curve.fwhm / xc),
    ] {
        derived.insert(k.into(), Value::from(v));
    }
    derived.insert("window_n".into(), Value::from(curve.curve.grid.n() as i64));
    derived.insert("omega_samples_used".into(), Value::from(curve.omega_samples as i64));

    r.cut_angle_deg = Some(angle.to_degrees());
    r.d_s = Some(scn.d_s);
    r.d_i = Some(scn.d_i);
    r.d2 = Some(scn.d2);
    r.grid_n = Some(knobs.grid_n);
    r.qmax_scale = Some(knobs.qmax_scale);

    let xs = curve.curve.grid.coords();
    let data = Data::Curve {
        header: vec!["x2".into(), "x2_over_x_c".into(), "c_normalized".into()],
        columns: vec![xs.clone(), xs.iter().map(|x| x / xc).collect(), curve.curve.values.to_vec()],
    };
    Ok((r, derived, data))
}

// -------------------------------------------------------------- figures ----

/// Files written by [`reproduce_figure`].
#[derive(Clone, Debug, PartialEq)]
pub struct FigureReport {
    pub curves: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub fwhm: Vec<(String, f64)>,
}

pub fn figure_setup(o: &Overrides) -> Setup {
    let mut setup = Setup::default();
    if let Some(m) = o.omega_samples {
        setup.omega_samples = m;
    }
    setup
}

pub fn figure_knobs(o: &Overrides) -> Knobs {
    Knobs {
        grid_n: o.grid_n.unwrap_or(Knobs::default().grid_n),
        qmax_scale: o.qmax_scale.unwrap_or(1.0),
        omega_samples: None,
    }
}

/// One `fig<N>_<label>.csv` per parameter value with columns `x2/x_c` and
/// the peak-normalized rate, plus `fig<N>.manifest.toml`.
pub fn reproduce_figure(id: FigureId, out_dir: &Path, o: &Overrides) -> Result<FigureReport, CliError> {
    let setup = figure_setup(o);
    let knobs = figure_knobs(o);
    let curves = figures::reproduce(id, &setup, &knobs)?;
    create_dir(out_dir)?;

    let mut doc = Table::new();
    let mut run = Table::new();
    run.insert("tool".into(), Value::from(concat!("biphoton ", env!("CARGO_PKG_VERSION"))));
    run.insert("figure".into(), Value::from(id.number() as i64));
    run.insert("overrides".into(), Value::Table(overrides_table(o)));
    doc.insert("run".into(), Value::Table(run));

    let cut = setup.cut_angle()?;
    let mut s = Table::new();
    for (k, v) in [
        ("lambda_p", setup.lambda_p),
        ("lambda_o", 2.0 * setup.lambda_p),
        ("f", setup.f),
        ("f_number", setup.f_number),
        ("aperture", setup.f / setup.f_number),
        ("cut_angle_rad", cut),
        ("cut_angle_deg", cut.to_degrees()),
        ("convergence_tolerance", CONVERGENCE_TOLERANCE),
        ("qmax_scale", knobs.qmax_scale),
    ] {
        s.insert(k.into(), Value::from(v));
    }
    s.insert("model".into(), Value::from(setup.model.name.clone()));
    s.insert("omega_samples".into(), Value::from(setup.omega_samples as i64));
    s.insert("grid_n".into(), Value::from(knobs.grid_n as i64));
    doc.insert("setup".into(), Value::Table(s));

    let mut cases = Vec::new();
    let mut paths = Vec::new();
    let mut fwhm = Vec::new();
    for c in &curves {
        let file = format!("fig{}_{}.csv", id.number(), c.case.label);
        let path = out_dir.join(&file);
        let x = c.normalized.grid.coords();
        output::write(&path, &output::curve_csv(&["x2_over_x_c", "c_normalized"], &[&x, c.normalized.values.as_slice().expect("contiguous")]))?;
        let scn = &c.case.scenario;
        let lo = scn.lambda_o();
        let l_eq = scn.l_eq(lo, lo)?;
        let mut t = Table::new();
        t.insert("label".into(), Value::from(c.case.label.clone()));
        t.insert("file".into(), Value::from(file));
        t.insert("parameter".into(), Value::from(c.case.parameter));
        for (k, v) in [
            ("value", c.case.value),
            ("length", scn.crystal.length()),
            ("rho", scn.spectral.rho()),
            ("pump_width", match scn.pump.profile {
                PumpProfile::Gaussian { width } => width,
                _ => 0.0,
            }),
            ("d_s", scn.d_s),
            ("d_i", scn.d_i),
            ("d2", scn.d2),
            ("l_eq", l_eq),
            ("d1_modified", modified_d1(scn.d_s, scn.d_i, lo, lo, l_eq)),
            ("x_c", scn.x_c()),
            ("qmax", c.convergence.base.qmax),
            ("window_dx_over_x_c", c.normalized.grid.dx()),
            ("fwhm_over_x_c", c.fwhm),
            ("grid_n_change", c.convergence.grid_n),
            ("qmax_change", c.convergence.qmax),
            ("omega_samples_change", c.convergence.omega_samples),
        ] {
            t.insert(k.into(), Value::from(v));
        }
        t.insert("spectral_samples".into(), Value::from(c.convergence.base.omega_samples as i64));
        cases.push(Value::Table(t));
        paths.push(path);
        fwhm.push((c.case.label.clone(), c.fwhm));
    }
    doc.insert("case".into(), Value::Array(cases));
    let manifest = out_dir.join(format!("fig{}.manifest.toml", id.number()));
    output::write(&manifest, &toml::to_string(&doc).expect("manifest serializes"))?;
    Ok(FigureReport {
        curves: paths,
        manifest,
        fwhm,
    })
}

/// Cut angle in degrees for collinear degenerate type-I matching.
pub fn solve_angle(model: &str, lambda_p: f64) -> Result<f64, CliError> {
    let m = index_model(model, Path::new("."))?;
    Ok(solve_degenerate_angle(&m, lambda_p)?.to_degrees())
}
