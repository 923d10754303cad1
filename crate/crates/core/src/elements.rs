//! Paraxial Fourier-optics element algebra.
//!
//! Systems are ordered lists of elements evaluated input to output. A
//! [`Kernel`] is the sampled impulse response `h(x_out, x_in)` with the
//! convention `field_out = K · field_in · dx_in`; the identity system is the
//! discrete delta `1/dx` on the diagonal.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis, Zip};
use num_complex::Complex64;

use crate::error::{invalid, require_positive, Error, Result};
use crate::fourier;
use crate::grid::{ComplexField, SpatialFrequencyGrid, TransverseGrid};

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Transmission of a lens pupil.
#[derive(Clone, Debug, PartialEq)]
pub enum Aperture {
    /// Unbounded pupil; the sampling window is the only limit.
    Uniform,
    /// Hard-edged slit `|x| <= width/2`.
    Rect { width: f64 },
    /// Arbitrary pupil on the plane grid of the lens.
    Sampled(ComplexField),
}

impl Aperture {
    /// Rectangular pupil of width `f / f_number`.
    pub fn from_f_number(f: f64, f_number: f64) -> Result<Self> {
        require_positive("f_number", f_number)?;
        Ok(Aperture::Rect {
            width: f.abs() / f_number,
        })
    }

    pub fn transmission(&self, grid: &TransverseGrid) -> Result<Array1<Complex64>> {
        match self {
            Aperture::Uniform => Ok(Array1::from_elem(grid.n(), Complex64::new(1.0, 0.0))),
            Aperture::Rect { width } => Ok((0..grid.n())
                .map(|k| {
                    if grid.x(k).abs() <= 0.5 * width {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()),
            Aperture::Sampled(p) => {
                p.grid().check_same(grid, "lens aperture vs lens plane")?;
                Ok(p.samples().clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    FreeSpace { d: f64 },
    ThinLens { f: f64, aperture: Aperture },
    Mask { t: ComplexField },
}

impl Element {
    pub fn free_space(d: f64) -> Result<Self> {
        require_positive("d", d)?;
        Ok(Element::FreeSpace { d })
    }

    pub fn thin_lens(f: f64, aperture: Aperture) -> Result<Self> {
        if !f.is_finite() || f == 0.0 {
            return Err(invalid("f", format!("focal length must be finite and non-zero, got {f}")));
        }
        if let Aperture::Rect { width } = aperture {
            require_positive("aperture width", width)?;
        }
        Ok(Element::ThinLens { f, aperture })
    }

    /// Transmittance mask. Gain (`|t| > 1`) is allowed but logged.
    pub fn mask(t: ComplexField) -> Self {
        if t.samples().iter().any(|z| z.norm() > 1.0 + 1e-12) {
            log::warn!("mask transmittance exceeds unity somewhere");
        }
        Element::Mask { t }
    }

    fn is_free_space(&self) -> bool {
        matches!(self, Element::FreeSpace { .. })
    }

    /// Multiplicative factor of a pointwise element on `grid`.
    fn pointwise(&self, lambda: f64, grid: &TransverseGrid) -> Result<Array1<Complex64>> {
        match self {
            Element::FreeSpace { .. } => unreachable!("free space is not pointwise"),
            Element::ThinLens { f, aperture } => {
                let mut p = aperture.transmission(grid)?;
                for (k, v) in p.iter_mut().enumerate() {
                    let x = grid.x(k);
                    *v *= Complex64::from_polar(1.0, -PI * x * x / (lambda * f));
                }
                Ok(p)
            }
            Element::Mask { t } => {
                t.grid().check_same(grid, "mask vs plane")?;
                Ok(t.samples().clone())
            }
        }
    }
}

/// Ordered cascade of elements. The empty system is the identity.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OpticalSystem {
    elements: Vec<Element>,
    label: String,
}

impl OpticalSystem {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            elements: Vec::new(),
            label: label.into(),
        }
    }

    pub fn from_elements(label: impl Into<String>, elements: Vec<Element>) -> Self {
        Self {
            elements,
            label: label.into(),
        }
    }

    pub fn then(mut self, element: Element) -> Self {
        self.elements.push(element);
        self
    }

    pub fn free_space(self, d: f64) -> Result<Self> {
        Ok(self.then(Element::free_space(d)?))
    }

    pub fn lens(self, f: f64, aperture: Aperture) -> Result<Self> {
        Ok(self.then(Element::thin_lens(f, aperture)?))
    }

    pub fn mask(self, t: ComplexField) -> Self {
        self.then(Element::mask(t))
    }

    /// `f` of free space, a lens of focal length `f`, and `f` of free space.
    pub fn two_f(label: impl Into<String>, f: f64, aperture: Aperture) -> Result<Self> {
        Self::new(label).free_space(f)?.lens(f, aperture)?.free_space(f)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_identity(&self) -> bool {
        self.elements.is_empty()
    }

    /// Total distance when every element is free space.
    pub fn pure_free_space_distance(&self) -> Option<f64> {
        self.elements.iter().try_fold(0.0, |acc, e| match e {
            Element::FreeSpace { d } => Some(acc + d),
            _ => None,
        })
    }
}

/// `a` followed by `b`.
pub fn compose(a: &OpticalSystem, b: &OpticalSystem) -> OpticalSystem {
    let label = match (a.label.is_empty(), b.label.is_empty()) {
        (true, _) => b.label.clone(),
        (_, true) => a.label.clone(),
        _ => format!("{} + {}", a.label, b.label),
    };
    let mut elements = a.elements.clone();
    elements.extend(b.elements.iter().cloned());
    OpticalSystem { elements, label }
}

/// Sampled impulse response `h(x_out, x_in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    out: TransverseGrid,
    input: TransverseGrid,
    values: Array2<Complex64>,
}

impl Kernel {
    pub fn new(out: TransverseGrid, input: TransverseGrid, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != (out.n(), input.n()) {
            return Err(Error::GridMismatch(format!(
                "kernel of shape {:?} for grids {} x {}",
                values.dim(),
                out.n(),
                input.n()
            )));
        }
        Ok(Self { out, input, values })
    }

    pub fn from_fn(
        out: TransverseGrid,
        input: TransverseGrid,
        h: impl Fn(f64, f64) -> Complex64,
    ) -> Self {
        let values = Array2::from_shape_fn((out.n(), input.n()), |(i, j)| h(out.x(i), input.x(j)));
        Self { out, input, values }
    }

    /// Discrete delta kernel `1/dx` on the diagonal.
    pub fn identity(grid: TransverseGrid) -> Self {
        let mut values = Array2::zeros((grid.n(), grid.n()));
        values.diag_mut().fill(Complex64::new(1.0 / grid.dx(), 0.0));
        Self {
            out: grid,
            input: grid,
            values,
        }
    }

    pub fn out(&self) -> &TransverseGrid {
        &self.out
    }

    pub fn input(&self) -> &TransverseGrid {
        &self.input
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn apply(&self, field: &ComplexField) -> Result<ComplexField> {
        field.grid().check_same(&self.input, "field vs kernel input")?;
        let out = self.values.dot(field.samples()) * Complex64::new(self.input.dx(), 0.0);
        ComplexField::new(self.out, out)
    }

    /// Cascade `next ∘ self` with the intermediate quadrature weight.
    pub fn then(&self, next: &Kernel) -> Result<Kernel> {
        self.out.check_same(&next.input, "cascaded kernels")?;
        let values = next.values.dot(&self.values) * Complex64::new(self.out.dx(), 0.0);
        Kernel::new(next.out, self.input, values)
    }
}

/// Fresnel free-space kernel
/// `exp(j2πd/λ)/sqrt(jλd) · exp(jπ(x_out - x_in)^2 / (λd))`.
pub fn free_space_kernel(d: f64, lambda: f64, out: &TransverseGrid, input: &TransverseGrid) -> Kernel {
    let prefactor = Complex64::from_polar(1.0, 2.0 * PI * d / lambda) / (J * lambda * d).sqrt();
    let a = PI / (lambda * d);
    Kernel::from_fn(*out, *input, |xo, xi| {
        let dx = xo - xi;
        prefactor * Complex64::from_polar(1.0, a * dx * dx)
    })
}

/// Whether the dense Fresnel kernel resolves its own chirp across the window:
/// `n * dx^2 <= λ d`. Coarser grids alias the kernel into ghost replicas
/// spaced `λ d / dx` apart.
pub fn fresnel_sampling_ok(d: f64, lambda: f64, grid: &TransverseGrid) -> bool {
    grid.n() as f64 * grid.dx() * grid.dx() <= lambda * d * (1.0 + 1e-9)
}

fn check_wavelength(lambda: f64) -> Result<()> {
    require_positive("lambda", lambda)
}

/// Dense impulse response of `sys` at wavelength `lambda`.
///
/// Planes between two free-space stages are sampled on `input`; the plane
/// after the last free-space stage is `out`. Pointwise elements act on
/// whatever plane they sit in, so a system without free space requires
/// `out == input`.
pub fn impulse_response(
    sys: &OpticalSystem,
    lambda: f64,
    out: &TransverseGrid,
    input: &TransverseGrid,
) -> Result<Kernel> {
    check_wavelength(lambda)?;
    let mut plane = *input;
    let mut acc: Option<Array2<Complex64>> = None;
    for (idx, element) in sys.elements.iter().enumerate() {
        match element {
            Element::FreeSpace { d } => {
                let more = sys.elements[idx + 1..].iter().any(Element::is_free_space);
                let next = if more { *input } else { *out };
                if !fresnel_sampling_ok(*d, lambda, &plane) || !fresnel_sampling_ok(*d, lambda, &next) {
                    log::warn!(
                        "free space d={d:e} at λ={lambda:e}: grid too coarse for the dense Fresnel kernel (n dx² > λd)"
                    );
                }
                let step = free_space_kernel(*d, lambda, &next, &plane).into_values();
                acc = Some(match acc {
                    None => step,
                    Some(m) => step.dot(&m) * Complex64::new(plane.dx(), 0.0),
                });
                plane = next;
            }
            _ => {
                let factors = element.pointwise(lambda, &plane)?;
                match acc.as_mut() {
                    None => {
                        let mut m = Array2::zeros((plane.n(), plane.n()));
                        Zip::from(m.diag_mut())
                            .and(&factors)
                            .for_each(|d, &t| *d = t / plane.dx());
                        acc = Some(m);
                    }
                    Some(m) => {
                        for (mut row, &t) in m.axis_iter_mut(Axis(0)).zip(factors.iter()) {
                            row.mapv_inplace(|z| z * t);
                        }
                    }
                }
            }
        }
    }
    plane.check_same(out, "system output plane vs requested output grid")?;
    match acc {
        Some(values) => Kernel::new(*out, *input, values),
        None => Ok(Kernel::identity(*input)),
    }
}

/// Sampled transfer function `H(x_out, q) = ∫ dx_in h(x_out, x_in) exp(j q x_in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub out: TransverseGrid,
    pub q: SpatialFrequencyGrid,
    pub values: Array2<Complex64>,
}

/// Transfer function with intermediate planes on the conjugate grid of `q`.
pub fn transfer_function(
    sys: &OpticalSystem,
    lambda: f64,
    out: &TransverseGrid,
    q: &SpatialFrequencyGrid,
) -> Result<TransferMatrix> {
    transfer_function_on(sys, lambda, out, q, &q.conjugate())
}

/// Transfer function with intermediate planes sampled on `plane`.
///
/// Leading free-space stages map a plane wave to a plane wave and are applied
/// in closed form, `exp(jkd) exp(-j d q²/2k) exp(j q x)`; everything after the
/// first pointwise element is evaluated by quadrature of the dense kernel.
pub fn transfer_function_on(
    sys: &OpticalSystem,
    lambda: f64,
    out: &TransverseGrid,
    q: &SpatialFrequencyGrid,
    plane: &TransverseGrid,
) -> Result<TransferMatrix> {
    check_wavelength(lambda)?;
    let k = 2.0 * PI / lambda;
    let split = sys
        .elements
        .iter()
        .position(|e| !e.is_free_space())
        .unwrap_or(sys.elements.len());
    let lead: f64 = sys.elements[..split]
        .iter()
        .map(|e| match e {
            Element::FreeSpace { d } => *d,
            _ => 0.0,
        })
        .sum();
    let plane_wave = |x: f64, qq: f64| {
        Complex64::from_polar(1.0, k * lead - lead * qq * qq / (2.0 * k) + qq * x)
    };
    if split == sys.elements.len() {
        let values = Array2::from_shape_fn((out.n(), q.n()), |(i, j)| plane_wave(out.x(i), q.q(j)));
        return Ok(TransferMatrix {
            out: *out,
            q: *q,
            values,
        });
    }
    let rest = OpticalSystem::from_elements("", sys.elements[split..].to_vec());
    let kernel = impulse_response(&rest, lambda, out, plane)?;
    let incident = Array2::from_shape_fn((plane.n(), q.n()), |(i, j)| plane_wave(plane.x(i), q.q(j)));
    let values = kernel.values.dot(&incident) * Complex64::new(plane.dx(), 0.0);
    Ok(TransferMatrix {
        out: *out,
        q: *q,
        values,
    })
}

/// Apply `sys` to `field` by dense quadrature. The identity system returns the
/// input unchanged when `out` equals the field grid.
pub fn propagate(
    field: &ComplexField,
    sys: &OpticalSystem,
    lambda: f64,
    out: &TransverseGrid,
) -> Result<ComplexField> {
    if sys.is_identity() {
        field.grid().check_same(out, "identity system")?;
        return Ok(field.clone());
    }
    impulse_response(sys, lambda, out, field.grid())?.apply(field)
}

/// Free-space propagation through the Fresnel transfer function by FFT on the
/// field's own (periodic) window.
pub fn propagate_fresnel_fft(field: &ComplexField, d: f64, lambda: f64) -> Result<ComplexField> {
    check_wavelength(lambda)?;
    require_positive("d", d)?;
    let k = 2.0 * PI / lambda;
    let mut spectrum = fourier::forward(field);
    for (j, v) in spectrum.samples.iter_mut().enumerate() {
        let q = spectrum.grid.q(j);
        *v *= Complex64::from_polar(1.0, k * d - d * q * q / (2.0 * k));
    }
    let out = fourier::inverse(&spectrum)?;
    ComplexField::new(*field.grid(), out.into_samples())
}
