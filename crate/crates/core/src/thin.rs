//! Thin-crystal, narrowband biphoton engine.
//!
//! With a thin crystal and narrowband filters the biphoton amplitude is
//!
//! ```text
//! ψ(x₁, x₂) = ∫ dx E_p(x) h_s(x₁, x) h_i(x₂, x)
//! ```
//!
//! and the coincidence rate is `G²(x₁, x₂) = |ψ(x₁, x₂)|²`. Every kernel here
//! follows the [`Kernel`] convention, so the integral becomes a matrix product
//! `h_s · diag(E_p dx) · h_iᵀ`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use crate::elements::Kernel;
use crate::error::{invalid, Error, Result};
use crate::grid::{ComplexField, RealCurve, TransverseGrid};

/// Largest dense map side. Bigger requests go through [`FactoredAmplitude`].
pub const DENSE_LIMIT: usize = 4096;

/// Where a map came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub scenario: String,
    pub lambda_s: Option<f64>,
    pub lambda_i: Option<f64>,
    pub signal_label: String,
    pub idler_label: String,
}

/// Sampled `ψ(x₁, x₂)`: rows follow `grid1`, columns `grid2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiphotonAmplitude {
    pub grid1: TransverseGrid,
    pub grid2: TransverseGrid,
    pub psi: Array2<Complex64>,
    pub provenance: Provenance,
}

impl BiphotonAmplitude {
    pub fn new(grid1: TransverseGrid, grid2: TransverseGrid, psi: Array2<Complex64>) -> Result<Self> {
        check_dense(grid1.n(), grid2.n())?;
        if psi.dim() != (grid1.n(), grid2.n()) {
            return Err(Error::GridMismatch(format!(
                "amplitude of shape {:?} for grids {} x {}",
                psi.dim(),
                grid1.n(),
                grid2.n()
            )));
        }
        if psi.iter().any(|z| !z.is_finite()) {
            return Err(invalid("psi", "non-finite sample"));
        }
        Ok(Self {
            grid1,
            grid2,
            psi,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Singular values above `rel_threshold` times the largest one.
    pub fn numerical_rank(&self, rel_threshold: f64) -> usize {
        numerical_rank(&self.psi, rel_threshold)
    }
}

/// Sampled `G²(x₁, x₂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceMap {
    pub grid1: TransverseGrid,
    pub grid2: TransverseGrid,
    pub g2: Array2<f64>,
    pub provenance: Provenance,
}

impl CoincidenceMap {
    pub fn total(&self) -> f64 {
        self.g2.sum() * self.grid1.dx() * self.grid2.dx()
    }
}

fn check_dense(rows: usize, cols: usize) -> Result<()> {
    if rows > DENSE_LIMIT || cols > DENSE_LIMIT {
        return Err(Error::TooLarge {
            rows,
            cols,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

pub(crate) fn numerical_rank(m: &Array2<Complex64>, rel_threshold: f64) -> usize {
    let (r, c) = m.dim();
    let dm = DMatrix::from_fn(r, c, |i, j| m[[i, j]]);
    let sv = dm.singular_values();
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_threshold * largest).count()
}

/// `a · diag(w · dx) · bᵀ`, the shared shape of every thin-crystal integral.
fn weighted_product(a: &Array2<Complex64>, w: &Array1<Complex64>, dx: f64, b: &Array2<Complex64>) -> Array2<Complex64> {
    let mut scaled = a.clone();
    for (mut col, &wk) in scaled.axis_iter_mut(Axis(1)).zip(w.iter()) {
        let s = wk * dx;
        col.mapv_inplace(|z| z * s);
    }
    scaled.dot(&b.t())
}

/// `ψ(x₁, x₂) = Σ_x E_p(x) h_s(x₁, x) h_i(x₂, x) dx`.
pub fn biphoton_amplitude(e_p: &ComplexField, h_s: &Kernel, h_i: &Kernel) -> Result<BiphotonAmplitude> {
    e_p.grid().check_same(h_s.input(), "pump vs signal kernel input")?;
    e_p.grid().check_same(h_i.input(), "pump vs idler kernel input")?;
    check_dense(h_s.out().n(), h_i.out().n())?;
    let psi = weighted_product(h_s.values(), e_p.samples(), e_p.grid().dx(), h_i.values());
    BiphotonAmplitude::new(*h_s.out(), *h_i.out(), psi)
}

/// Rank-one amplitude `ψ(x₁, x₂) = a(x₁) b(x₂)`, stored as its two factors.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredAmplitude {
    pub a: ComplexField,
    pub b: ComplexField,
}

impl FactoredAmplitude {
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.a.samples()[i] * self.b.samples()[j]
    }

    /// `(Σ |a|² dx₁) |b(x₂)|²`.
    pub fn marginal(&self) -> RealCurve {
        let scale = self.a.energy();
        RealCurve {
            grid: *self.b.grid(),
            values: self.b.samples().mapv(|z| z.norm_sqr() * scale),
        }
    }

    pub fn conditional(&self, x10: f64) -> Result<RealCurve> {
        let i = lookup(self.a.grid(), x10)?;
        let s = self.a.samples()[i].norm_sqr();
        Ok(RealCurve {
            grid: *self.b.grid(),
            values: self.b.samples().mapv(|z| z.norm_sqr() * s),
        })
    }

    pub fn to_dense(&self) -> Result<BiphotonAmplitude> {
        let (ga, gb) = (*self.a.grid(), *self.b.grid());
        check_dense(ga.n(), gb.n())?;
        let psi = Array2::from_shape_fn((ga.n(), gb.n()), |(i, j)| self.at(i, j));
        BiphotonAmplitude::new(ga, gb, psi)
    }
}

/// Amplitude for a point pump `E_p = weight · δ(x - x0)`, without forming the map.
pub fn point_pump_amplitude(weight: Complex64, x0: f64, h_s: &Kernel, h_i: &Kernel) -> Result<FactoredAmplitude> {
    h_s.input().check_same(h_i.input(), "signal vs idler kernel input")?;
    let k = lookup(h_s.input(), x0)?;
    let a = h_s.values().column(k).mapv(|z| z * weight);
    let b = h_i.values().column(k).to_owned();
    Ok(FactoredAmplitude {
        a: ComplexField::new(*h_s.out(), a)?,
        b: ComplexField::new(*h_i.out(), b)?,
    })
}

pub fn g2(psi: &BiphotonAmplitude) -> CoincidenceMap {
    CoincidenceMap {
        grid1: psi.grid1,
        grid2: psi.grid2,
        g2: psi.psi.mapv(|z| z.norm_sqr()),
        provenance: psi.provenance.clone(),
    }
}

/// `I²(x₂) = Σ_{x₁} G²(x₁, x₂) dx₁`, a bucket detector over the whole grid.
pub fn marginal_rate(c: &CoincidenceMap) -> RealCurve {
    let values = c.g2.sum_axis(Axis(0)) * c.grid1.dx();
    RealCurve {
        grid: c.grid2,
        values,
    }
}

/// Bucket detector of finite extent: `mask(x₁)` weights each row before summing.
pub fn marginal_rate_masked(c: &CoincidenceMap, mask: impl Fn(f64) -> f64) -> RealCurve {
    let mut values = Array1::zeros(c.grid2.n());
    for (i, row) in c.g2.axis_iter(Axis(0)).enumerate() {
        let m = mask(c.grid1.x(i));
        if m != 0.0 {
            values.scaled_add(m * c.grid1.dx(), &row);
        }
    }
    RealCurve {
        grid: c.grid2,
        values,
    }
}

fn lookup(grid: &TransverseGrid, x: f64) -> Result<usize> {
    if let Some(k) = grid.exact_index(x) {
        return Ok(k);
    }
    grid.nearest_index(x).ok_or_else(|| {
        let (min, max) = grid.extent();
        Error::OutOfRange {
            name: "x1",
            value: x,
            min,
            max,
        }
    })
}

/// `G²(x₁₀, x₂)` at the grid row nearest `x₁₀`.
pub fn conditional_rate(c: &CoincidenceMap, x10: f64) -> Result<RealCurve> {
    let i = lookup(&c.grid1, x10)?;
    Ok(RealCurve {
        grid: c.grid2,
        values: c.g2.row(i).to_owned(),
    })
}

/// `h₃(x₂, x') = Σ_x E_p(x) h_i(x₂, x) h₂(x', x) dx`: the reversed `h₂`, the
/// pump aperture and the idler system in cascade.
pub fn object_in_signal_h3(e_p: &ComplexField, h2: &Kernel, h_i: &Kernel) -> Result<Kernel> {
    e_p.grid().check_same(h2.input(), "pump vs h2 input")?;
    e_p.grid().check_same(h_i.input(), "pump vs idler kernel input")?;
    let values = weighted_product(h_i.values(), e_p.samples(), e_p.grid().dx(), h2.values());
    Kernel::new(*h_i.out(), *h2.out(), values)
}

/// `ψ(x₁, x₂) = Σ_{x'} t(x') h₁(x₁, x') h₃(x₂, x') dx'`.
pub fn object_in_signal(t: &ComplexField, h1: &Kernel, h3: &Kernel) -> Result<BiphotonAmplitude> {
    biphoton_amplitude(t, h1, h3)
}

/// `g(x', x'') = Σ_{x₁} h₁*(x₁, x') h₁(x₁, x'') dx₁`.
pub fn coherence_function(h1: &Kernel) -> Array2<Complex64> {
    let h = h1.values();
    let mut g = h.t().mapv(|z| z.conj()).dot(h) * h1.out().dx();
    // Hermitian by construction; pin the diagonal to the real axis.
    for d in g.diag_mut() {
        *d = Complex64::new(d.re, 0.0);
    }
    g
}

/// Partially coherent marginal rate
/// `I²(x₂) = ΣΣ t*(x') t(x'') g(x', x'') h₃*(x₂, x') h₃(x₂, x'') dx' dx''`.
pub fn marginal_from_coherence(t: &ComplexField, g: &Array2<Complex64>, h3: &Kernel) -> Result<RealCurve> {
    t.grid().check_same(h3.input(), "object vs h3 input")?;
    if g.dim() != (t.grid().n(), t.grid().n()) {
        return Err(Error::GridMismatch("coherence function vs object grid".into()));
    }
    let dx = t.grid().dx();
    // a(x₂, x') = t(x') h₃(x₂, x') dx
    let mut a = h3.values().clone();
    for (mut col, &tk) in a.axis_iter_mut(Axis(1)).zip(t.samples().iter()) {
        col.mapv_inplace(|z| z * tk * dx);
    }
    let ag = a.mapv(|z| z.conj()).dot(g);
    let values = Array1::from_iter(
        ag.axis_iter(Axis(0))
            .zip(a.axis_iter(Axis(0)))
            .map(|(l, r)| l.iter().zip(r.iter()).map(|(x, y)| x * y).sum::<Complex64>().re),
    );
    RealCurve::new(*h3.out(), values)
}

/// Incoherent limit `I²(x₂) = Σ |t(x')|² |h₃(x₂, x')|² dx'`.
pub fn incoherent_marginal(t: &ComplexField, h3: &Kernel) -> Result<RealCurve> {
    t.grid().check_same(h3.input(), "object vs h3 input")?;
    let w = t.samples().mapv(|z| z.norm_sqr() * t.grid().dx());
    let values = h3.values().mapv(|z| z.norm_sqr()).dot(&w);
    RealCurve::new(*h3.out(), values)
}

/// Coherent limit `I²(x₂) = |Σ t(x') f(x') h₃(x₂, x') dx'|²`.
pub fn coherent_marginal(t: &ComplexField, f: &ComplexField, h3: &Kernel) -> Result<RealCurve> {
    t.grid().check_same(h3.input(), "object vs h3 input")?;
    f.grid().check_same(t.grid(), "illumination vs object")?;
    let w = (t.samples() * f.samples()).mapv(|z| z * t.grid().dx());
    let values = h3.values().dot(&w).mapv(|z| z.norm_sqr());
    RealCurve::new(*h3.out(), values)
}

/// Identical arms `h₁ → t → h₂` around a shared object:
/// `ψ = ΣΣ t(x') t(x'') ψ_c(x', x'') h₂(x₁, x') h₂(x₂, x'') dx' dx''` with
/// `ψ_c(x', x'') = Σ E_p(x) h₁(x', x) h₁(x'', x) dx`.
///
/// The result is symmetric in `(x₁, x₂)` exactly: the lower triangle is a
/// mirror of the upper one.
pub fn object_in_both(e_p: &ComplexField, h1: &Kernel, h2: &Kernel, t: &ComplexField) -> Result<BiphotonAmplitude> {
    e_p.grid().check_same(h1.input(), "pump vs h1 input")?;
    t.grid().check_same(h1.out(), "object vs h1 output")?;
    t.grid().check_same(h2.input(), "object vs h2 input")?;
    check_dense(h2.out().n(), h2.out().n())?;
    let psi_c = weighted_product(h1.values(), e_p.samples(), e_p.grid().dx(), h1.values());
    let dx = t.grid().dx();
    let mut a = h2.values().clone();
    for (mut col, &tk) in a.axis_iter_mut(Axis(1)).zip(t.samples().iter()) {
        col.mapv_inplace(|z| z * tk * dx);
    }
    let mut psi = a.dot(&psi_c).dot(&a.t());
    let n = psi.nrows();
    for i in 0..n {
        for j in 0..i {
            psi[[i, j]] = psi[[j, i]];
        }
    }
    BiphotonAmplitude::new(*h2.out(), *h2.out(), psi)
}

/// Object in the pump under uniform illumination:
/// `G²(x₁, x₂) = |Σ t(x) h_s(x₁, x) h_i(x₂, x) dx|²`.
pub fn object_in_pump(t: &ComplexField, h_s: &Kernel, h_i: &Kernel) -> Result<CoincidenceMap> {
    Ok(g2(&biphoton_amplitude(t, h_s, h_i)?))
}

/// Two-photon absorber as detector: `G²(x₁, x₁) = t₂(x₁) S(x₁)` with identical
/// arms and `S(x₁) = |Σ E_p(x) h₁(x₁, x)² dx|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorResponse {
    pub signal: RealCurve,
    pub illumination: RealCurve,
}

/// Object recovered by dividing out the illumination. Samples where the
/// illumination is below threshold are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    pub grid: TransverseGrid,
    pub values: Vec<Option<f64>>,
}

impl Recovery {
    pub fn below_threshold(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// The recovered curve, or an error if any sample was not recoverable.
    pub fn complete(&self) -> Result<RealCurve> {
        let missing = self.below_threshold();
        if missing > 0 {
            return Err(Error::BelowThreshold { count: missing });
        }
        RealCurve::new(self.grid, self.values.iter().map(|v| v.unwrap_or(0.0)).collect())
    }
}

impl DetectorResponse {
    /// Divide by `S` wherever `S > threshold · max S`.
    pub fn recover(&self, threshold: f64) -> Recovery {
        let cut = threshold * self.illumination.max();
        let values = self
            .signal
            .values
            .iter()
            .zip(self.illumination.values.iter())
            .map(|(&g, &s)| if s > cut && s > 0.0 { Some(g / s) } else { None })
            .collect();
        Recovery {
            grid: self.signal.grid,
            values,
        }
    }
}

pub fn object_is_detector(t2: &RealCurve, h1: &Kernel, e_p: &ComplexField) -> Result<DetectorResponse> {
    e_p.grid().check_same(h1.input(), "pump vs h1 input")?;
    t2.grid.check_same(h1.out(), "absorber vs h1 output")?;
    let w = e_p.samples().mapv(|z| z * e_p.grid().dx());
    let s = h1.values().mapv(|z| z * z).dot(&w).mapv(|z| z.norm_sqr());
    let signal = &t2.values * &s;
    Ok(DetectorResponse {
        signal: RealCurve::new(t2.grid, signal)?,
        illumination: RealCurve::new(*h1.out(), s)?,
    })
}

/// Focal lengths and wavelengths of the 4-f systems around a triple correlation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripleScales {
    pub lambda_s: f64,
    pub f_s: f64,
    pub lambda_i: f64,
    pub f_i: f64,
}

/// Linear interpolation on `field`, zero outside its window.
pub(crate) fn sample_padded(field: &ComplexField, u: f64) -> Complex64 {
    let g = field.grid();
    let pos = (u - g.x(0)) / g.dx();
    if !(pos >= 0.0 && pos <= (g.n() - 1) as f64) {
        return Complex64::default();
    }
    let k = (pos.floor() as usize).min(g.n() - 1);
    let frac = pos - k as f64;
    let s = field.samples();
    if frac == 0.0 || k + 1 == g.n() {
        s[k]
    } else {
        s[k] * (1.0 - frac) + s[k + 1] * frac
    }
}

/// `G²(x₁, x₂) = |Σ t_p(x) T_s(2π(x - x₁)/(λ_s f_s)) T_i(2π(x - x₂)/(λ_i f_i)) dx|²`.
///
/// The pupils `T_s`, `T_i` are sampled on their own frequency grids and read
/// by linear interpolation; outside those grids they are zero.
pub fn triple_correlation(
    t_p: &ComplexField,
    pupil_s: &ComplexField,
    pupil_i: &ComplexField,
    scales: TripleScales,
    grid1: &TransverseGrid,
    grid2: &TransverseGrid,
) -> Result<CoincidenceMap> {
    for (name, v) in [
        ("lambda_s", scales.lambda_s),
        ("f_s", scales.f_s),
        ("lambda_i", scales.lambda_i),
        ("f_i", scales.f_i),
    ] {
        crate::error::require_positive(name, v)?;
    }
    check_dense(grid1.n(), grid2.n())?;
    let g = t_p.grid();
    let ks = 2.0 * PI / (scales.lambda_s * scales.f_s);
    let ki = 2.0 * PI / (scales.lambda_i * scales.f_i);
    let a = Array2::from_shape_fn((grid1.n(), g.n()), |(i, k)| {
        sample_padded(pupil_s, ks * (g.x(k) - grid1.x(i)))
    });
    let b = Array2::from_shape_fn((grid2.n(), g.n()), |(j, k)| {
        sample_padded(pupil_i, ki * (g.x(k) - grid2.x(j)))
    });
    let psi = weighted_product(&a, t_p.samples(), g.dx(), &b);
    Ok(CoincidenceMap {
        grid1: *grid1,
        grid2: *grid2,
        g2: psi.mapv(|z| z.norm_sqr()),
        provenance: Provenance::default(),
    })
}

/// `C_n = |Σ h_s(-x) h_n(x) dx|²` for each reference response `h_n`.
///
/// `reflected` holds the samples of `h_s(-x)` on the shared grid.
pub fn system_identification(reflected: &ComplexField, basis: &[ComplexField]) -> Result<Vec<f64>> {
    basis
        .iter()
        .map(|h| {
            h.grid().check_same(reflected.grid(), "basis vs unknown response")?;
            let s: Complex64 = reflected
                .samples()
                .iter()
                .zip(h.samples().iter())
                .map(|(a, b)| a * b)
                .sum();
            Ok((s * reflected.grid().dx()).norm_sqr())
        })
        .collect()
}

/// Shifted deltas `h_n(x) = δ(x + x_n)`, for which `C_n = |h_s(x_n)|²`.
pub fn delta_basis(grid: &TransverseGrid, points: &[f64]) -> Result<Vec<ComplexField>> {
    points.iter().map(|&xn| ComplexField::delta(*grid, -xn)).collect()
}

/// Equivalent idler-side distance of free space `d_s` at `λ_s` followed by
/// `d_i` at `λ_i`: `d₁ = d_i + d_s λ_s/λ_i`.
pub fn equivalent_distance(d_i: f64, d_s: f64, lambda_s: f64, lambda_i: f64) -> f64 {
    d_i + d_s * lambda_s / lambda_i
}

/// `1/d₁ + 1/d₂ - 1/f`, zero when the single-lens system images.
pub fn lens_imaging_residual(d1: f64, d2: f64, f: f64) -> f64 {
    1.0 / d1 + 1.0 / d2 - 1.0 / f
}

/// `1/(λ_s d₁) + 1/(λ_i d₂) - 1/(λ_p R)`, zero when a pump of wavefront
/// radius `R` images.
pub fn pump_lens_imaging_residual(d1: f64, d2: f64, lambda_s: f64, lambda_i: f64, lambda_p: f64, r: f64) -> f64 {
    1.0 / (lambda_s * d1) + 1.0 / (lambda_i * d2) - 1.0 / (lambda_p * r)
}

/// Wavefront radius that makes a pump-lens system image.
pub fn pump_radius_for_imaging(d1: f64, d2: f64, lambda_s: f64, lambda_i: f64, lambda_p: f64) -> f64 {
    1.0 / (lambda_p * (1.0 / (lambda_s * d1) + 1.0 / (lambda_i * d2)))
}

pub fn lens_magnification(d1: f64, d2: f64) -> f64 {
    -d2 / d1
}

pub fn pump_lens_magnification(d1: f64, d2: f64, lambda_s: f64, lambda_i: f64) -> f64 {
    -d2 * lambda_i / (d1 * lambda_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::{impulse_response, Aperture, OpticalSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

    fn grid(n: usize, dx: f64) -> TransverseGrid {
        TransverseGrid::centered(n, dx).unwrap()
    }

    fn random_kernel(rng: &mut ChaCha8Rng, out: TransverseGrid, input: TransverseGrid) -> Kernel {
        let values = Array2::from_shape_fn((out.n(), input.n()), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        Kernel::new(out, input, values).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, g: TransverseGrid) -> ComplexField {
        let values = (0..g.n())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexField::new(g, values).unwrap()
    }

    fn max_rel(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn uniform_pump_identity_arms_is_diagonal() {
        let g = grid(16, 1e-6);
        let e = ComplexField::constant(g, ONE).unwrap();
        let id = Kernel::identity(g);
        let psi = biphoton_amplitude(&e, &id, &id).unwrap().psi;
        for ((i, j), z) in psi.indexed_iter() {
            if i == j {
                assert!((z.re - 1e6).abs() < 1e-6);
            } else {
                assert_eq!(*z, Complex64::default());
            }
        }
    }

    #[test]
    fn point_pump_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = grid(20, 1e-6);
        let (h_s, h_i) = (random_kernel(&mut rng, g, g), random_kernel(&mut rng, g, g));
        let e = ComplexField::delta(g, 0.0).unwrap();
        let psi = biphoton_amplitude(&e, &h_s, &h_i).unwrap();
        let k = g.exact_index(0.0).unwrap();
        for ((i, j), z) in psi.psi.indexed_iter() {
            assert!((z - h_s.values()[[i, k]] * h_i.values()[[j, k]]).norm() < 1e-12);
        }
        assert_eq!(psi.numerical_rank(1e-8), 1);
        let fac = point_pump_amplitude(ONE, 0.0, &h_s, &h_i).unwrap();
        assert!(max_rel(&fac.to_dense().unwrap().psi, &psi.psi) < 1e-14);
        let dense_marginal = marginal_rate(&g2(&psi));
        for (a, b) in fac.marginal().values.iter().zip(dense_marginal.values.iter()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn g2_elementary_cases() {
        let g = grid(8, 1e-6);
        let zero = BiphotonAmplitude::new(g, g, Array2::zeros((8, 8))).unwrap();
        assert!(g2(&zero).g2.iter().all(|&v| v == 0.0));
        let unit = BiphotonAmplitude::new(g, g, Array2::from_shape_fn((8, 8), |(i, j)| {
            Complex64::from_polar(1.0, i as f64 * 0.3 - j as f64)
        }))
        .unwrap();
        assert!(g2(&unit).g2.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rank_one_rates() {
        let g = grid(12, 2e-6);
        let a = ComplexField::from_real_fn(g, |x| 1.0 + x * 1e5).unwrap();
        let b = ComplexField::from_real_fn(g, |x| (x * 3e5).cos()).unwrap();
        let fac = FactoredAmplitude { a: a.clone(), b: b.clone() };
        let map = g2(&fac.to_dense().unwrap());
        let marginal = marginal_rate(&map);
        let scale = a.energy();
        for (k, v) in marginal.values.iter().enumerate() {
            assert!((v - scale * b.samples()[k].norm_sqr()).abs() < 1e-12 * scale);
        }
        let cond = conditional_rate(&map, 0.0).unwrap();
        for (k, v) in cond.values.iter().enumerate() {
            assert!((v - b.samples()[k].norm_sqr()).abs() < 1e-15);
        }
        assert!(conditional_rate(&map, 1.0).is_err());
        // total is independent of the summation order
        let total: f64 = marginal.values.sum() * g.dx();
        assert!((total - map.total()).abs() < 1e-12 * total);
    }

    #[test]
    fn conditional_of_diagonal_map_is_a_spike() {
        let g = grid(16, 1e-6);
        let e = ComplexField::constant(g, ONE).unwrap();
        let id = Kernel::identity(g);
        let map = g2(&biphoton_amplitude(&e, &id, &id).unwrap());
        let c = conditional_rate(&map, 3e-6).unwrap();
        let spike = g.exact_index(3e-6).unwrap();
        assert!(c.values.iter().enumerate().all(|(k, &v)| (v > 0.0) == (k == spike)));
    }

    #[test]
    fn object_in_signal_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (gx, gobj, g1, g2g) = (grid(14, 1e-6), grid(12, 1.5e-6), grid(10, 2e-6), grid(9, 1e-6));
        let e = random_field(&mut rng, gx);
        let t = random_field(&mut rng, gobj);
        let h1 = random_kernel(&mut rng, g1, gobj);
        let h2 = random_kernel(&mut rng, gobj, gx);
        let h_i = random_kernel(&mut rng, g2g, gx);
        // full signal system x → x' → t → x₁
        let mut h_obj = h2.clone().into_values();
        for (mut row, &tk) in h_obj.axis_iter_mut(Axis(0)).zip(t.samples().iter()) {
            row.mapv_inplace(|z| z * tk);
        }
        let h_obj = Kernel::new(gobj, gx, h_obj).unwrap();
        let h_s = h_obj.then(&h1).unwrap();
        let full = biphoton_amplitude(&e, &h_s, &h_i).unwrap();
        let h3 = object_in_signal_h3(&e, &h2, &h_i).unwrap();
        let split = object_in_signal(&t, &h1, &h3).unwrap();
        assert!(max_rel(&split.psi, &full.psi) < 1e-10);

        // bucket detector in the signal arm
        let direct = marginal_rate(&g2(&full));
        let g = coherence_function(&h1);
        let via_g = marginal_from_coherence(&t, &g, &h3).unwrap();
        let scale = direct.max();
        for (a, b) in via_g.values.iter().zip(direct.values.iter()) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn uniform_pump_identity_arms_give_delta_h3() {
        let g = grid(10, 1e-6);
        let e = ComplexField::constant(g, ONE).unwrap();
        let id = Kernel::identity(g);
        let h3 = object_in_signal_h3(&e, &id, &id).unwrap();
        assert!(max_rel(h3.values(), id.values()) < 1e-15);
    }

    #[test]
    fn coherence_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = grid(16, 1e-6);
        let t = random_field(&mut rng, g);
        let h3 = random_kernel(&mut rng, grid(12, 1e-6), g);

        let g_delta = coherence_function(&Kernel::identity(g));
        let partial = marginal_from_coherence(&t, &g_delta, &h3).unwrap();
        let incoherent = incoherent_marginal(&t, &h3).unwrap();
        for (a, b) in partial.values.iter().zip(incoherent.values.iter()) {
            assert!((a - b).abs() < 1e-10 * incoherent.max());
        }

        // a point detector behind an arbitrary system: h₁(x₁, x') = δ-row times f(x')
        let f = random_field(&mut rng, g);
        let rows = grid(2, 1e-6);
        let scale = Complex64::new(1.0 / rows.dx().sqrt(), 0.0);
        let h1 = Kernel::new(
            rows,
            g,
            Array2::from_shape_fn((2, g.n()), |(i, j)| if i == 0 { f.samples()[j] * scale } else { Complex64::default() }),
        )
        .unwrap();
        let g_rank1 = coherence_function(&h1);
        for ((i, j), z) in g_rank1.indexed_iter() {
            assert!((z - f.samples()[i].conj() * f.samples()[j]).norm() < 1e-12);
        }
        let partial = marginal_from_coherence(&t, &g_rank1, &h3).unwrap();
        let coherent = coherent_marginal(&t, &f, &h3).unwrap();
        for (a, b) in partial.values.iter().zip(coherent.values.iter()) {
            assert!((a - b).abs() < 1e-10 * coherent.max());
        }
    }

    #[test]
    fn two_f_illumination_is_incoherent() {
        let (n, lambda, f) = (256usize, 650e-9, 5e-3);
        let dx = (lambda * f / n as f64).sqrt();
        let g = grid(n, dx);
        let sys = OpticalSystem::two_f("h1", f, Aperture::Uniform).unwrap();
        let h1 = impulse_response(&sys, lambda, &g, &g).unwrap();
        let c = coherence_function(&h1);
        let diag = 1.0 / dx;
        for ((i, j), z) in c.indexed_iter() {
            let expect = if i == j { diag } else { 0.0 };
            assert!((z - expect).norm() < 1e-8 * diag, "{i} {j} {z}");
        }
    }

    /// `|h₃(x₂, x')|` for a point at `x'`, maximised over `x₂`.
    fn image_of(h3: &Kernel, x_obj: f64) -> f64 {
        let j = h3.input().exact_index(x_obj).unwrap();
        let col = h3.values().column(j);
        let best = (0..col.len()).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
        h3.out().x(best)
    }

    #[test]
    fn single_lens_images_with_unit_inversion() {
        let (lambda, f) = (650e-9, 5e-3);
        let (d_s, d_i, d2) = (5e-3, 5e-3, 10e-3);
        let g = grid(256, 3e-6);
        let e = ComplexField::constant(g, ONE).unwrap();
        let h2 = impulse_response(&OpticalSystem::new("h2").free_space(d_s).unwrap(), lambda, &g, &g).unwrap();
        let idler = OpticalSystem::new("idler")
            .free_space(d_i)
            .unwrap()
            .lens(f, Aperture::Uniform)
            .unwrap()
            .free_space(d2)
            .unwrap();
        let h_i = impulse_response(&idler, lambda, &g, &g).unwrap();
        let h3 = object_in_signal_h3(&e, &h2, &h_i).unwrap();
        let d1 = equivalent_distance(d_i, d_s, lambda, lambda);
        assert!(lens_imaging_residual(d1, d2, f).abs() < 1e-9);
        let m = lens_magnification(d1, d2);
        for offset in [-20i64, -7, 0, 10, 30] {
            let x = g.x((128 + offset) as usize);
            assert!((image_of(&h3, x) - m * x).abs() <= g.dx() * 1.0001, "{x}");
        }
    }

    #[test]
    fn object_in_both_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid(16, 1e-6);
        let t = random_field(&mut rng, g);
        let h2 = random_kernel(&mut rng, grid(12, 1e-6), g);
        let h1 = random_kernel(&mut rng, g, g);

        let point = ComplexField::delta(g, 0.0).unwrap();
        let psi = object_in_both(&point, &h1, &h2, &t).unwrap();
        assert_eq!(psi.numerical_rank(1e-8), 1);
        assert!(psi.psi.indexed_iter().all(|((i, j), z)| *z == psi.psi[[j, i]]));

        let broad = ComplexField::constant(g, ONE).unwrap();
        let psi = object_in_both(&broad, &Kernel::identity(g), &h2, &t).unwrap();
        assert!(psi.numerical_rank(1e-8) > 1);
        let t2 = t.samples().mapv(|z| z * z);
        let expect = weighted_product(h2.values(), &t2, g.dx(), h2.values());
        assert!(max_rel(&psi.psi, &expect) < 1e-12);
    }

    #[test]
    fn object_in_pump_specializations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = grid(12, 1e-6);
        let t = random_field(&mut rng, g);
        let id = Kernel::identity(g);
        let map = object_in_pump(&ComplexField::constant(g, ONE).unwrap(), &id, &id).unwrap();
        assert!(map.g2.indexed_iter().all(|((i, j), &v)| (v > 0.0) == (i == j)));

        // signal row through x₁ = 0 is uniform: coherent imaging through h_i
        let h_i = random_kernel(&mut rng, g, g);
        let mut hs = random_kernel(&mut rng, g, g).into_values();
        let row0 = g.exact_index(0.0).unwrap();
        hs.row_mut(row0).fill(ONE);
        let h_s = Kernel::new(g, g, hs).unwrap();
        let c = conditional_rate(&object_in_pump(&t, &h_s, &h_i).unwrap(), 0.0).unwrap();
        let expect = h_i.values().dot(&t.samples().mapv(|z| z * g.dx())).mapv(|z| z.norm_sqr());
        for (a, b) in c.values.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12 * b.max(1e-12));
        }

        // identical arms, coincident detection
        let map = object_in_pump(&t, &h_i, &h_i).unwrap();
        let sq = h_i.values().mapv(|z| z * z).dot(&t.samples().mapv(|z| z * g.dx()));
        for (k, z) in sq.iter().enumerate() {
            assert!((map.g2[[k, k]] - z.norm_sqr()).abs() < 1e-12 * z.norm_sqr().max(1e-12));
        }
    }

    #[test]
    fn two_f_arms_give_pump_transform_along_diagonals() {
        let (n, lambda, f) = (128usize, 650e-9, 5e-3);
        let dx = (lambda * f / n as f64).sqrt();
        let g = grid(n, dx);
        let arm = impulse_response(&OpticalSystem::two_f("arm", f, Aperture::Uniform).unwrap(), lambda, &g, &g).unwrap();
        let (w, s) = (4.0 * dx, 16.0 * dx);
        let slit = |x: f64| ((x - s / 2.0).abs() < w / 2.0 || (x + s / 2.0).abs() < w / 2.0) as u8 as f64;
        let t = ComplexField::from_real_fn(g, slit).unwrap();
        let map = object_in_pump(&t, &arm, &arm).unwrap();
        let peak = map.g2.iter().cloned().fold(0.0, f64::max);
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                assert!((map.g2[[i, j]] - map.g2[[i + 1, j - 1]]).abs() < 1e-9 * peak);
            }
        }
        // along x₁ = 0: |T(2π x₂/(λf))|² of the discrete double slit, up to scale
        let row = conditional_rate(&map, 0.0).unwrap().peak_normalized();
        let transform = |q: f64| -> f64 {
            let z: Complex64 = (0..n).map(|k| Complex64::from_polar(slit(g.x(k)), -q * g.x(k))).sum();
            z.norm_sqr()
        };
        let t0 = transform(0.0);
        for (k, v) in row.values.iter().enumerate() {
            let q = 2.0 * PI * g.x(k) / (lambda * f);
            assert!((v - transform(q) / t0).abs() < 1e-9);
        }
    }

    #[test]
    fn relayed_pump_object_is_magnified() {
        // E_p(x) = T(2πx/(λ_p f_o)) with 2-f arms: I₀²(x₂) = |t(-x₂/M)|², M = λ f/(λ_p f_o)
        let (n, lambda_p, f, f_o) = (128usize, 325e-9, 5e-3, 5e-3);
        let lambda = 2.0 * lambda_p;
        let dx = (lambda * f / n as f64).sqrt();
        let g = grid(n, dx);
        let m = lambda * f / (lambda_p * f_o);
        let gu = grid(n, lambda_p * f_o / (n as f64 * dx));
        let bumps = [(-5.0, 1.0), (3.0, 0.6), (9.0, 0.3)];
        let t = ComplexField::from_real_fn(gu, |u| {
            bumps
                .iter()
                .map(|&(c, a)| if (u / gu.dx() - c).abs() < 0.5 { a } else { 0.0 })
                .sum()
        })
        .unwrap();
        let e_p = ComplexField::from_fn(g, |x| {
            let q = 2.0 * PI * x / (lambda_p * f_o);
            (0..n).map(|k| t.samples()[k] * Complex64::from_polar(gu.dx(), -q * gu.x(k))).sum()
        })
        .unwrap();
        let arm = impulse_response(&OpticalSystem::two_f("arm", f, Aperture::Uniform).unwrap(), lambda, &g, &g).unwrap();
        let map = g2(&biphoton_amplitude(&e_p, &arm, &arm).unwrap());
        let row = conditional_rate(&map, 0.0).unwrap().peak_normalized();
        for &(c, a) in &bumps {
            let x2 = -m * c * gu.dx();
            let k = g.nearest_index(x2).unwrap();
            assert!((row.values[k] - a * a).abs() < 1e-9, "{c}: {} vs {}", row.values[k], a * a);
        }
        let lit = row.values.iter().filter(|&&v| v > 1e-9).count();
        assert_eq!(lit, bumps.len());
    }

    #[test]
    fn detector_illumination_narrows_with_pump_width() {
        let (n, lambda, f) = (256usize, 650e-9, 5e-3);
        let dx = (lambda * f / n as f64).sqrt();
        let g = grid(n, dx);
        let arm = impulse_response(&OpticalSystem::two_f("arm", f, Aperture::Uniform).unwrap(), lambda, &g, &g).unwrap();
        let t2 = RealCurve::new(g, Array1::from_elem(n, 0.5)).unwrap();
        let width = |b: f64| {
            let e = ComplexField::from_real_fn(g, |x| (-4.0 * x * x / (b * b)).exp()).unwrap();
            let r = object_is_detector(&t2, &arm, &e).unwrap();
            // h₁² doubles the spatial frequency, so S repeats at the window edge; keep the centre
            let centre = grid(n / 2, dx);
            let values = r.illumination.values.slice(ndarray::s![n / 4..3 * n / 4]).to_owned();
            crate::thick::fwhm(&RealCurve::new(centre, values).unwrap()).unwrap()
        };
        let (narrow_pump, broad_pump) = (width(20.0 * dx), width(60.0 * dx));
        assert!(broad_pump < narrow_pump);

        let e = ComplexField::constant(g, ONE).unwrap();
        let zero = RealCurve::new(g, Array1::zeros(n)).unwrap();
        let r = object_is_detector(&zero, &arm, &e).unwrap();
        assert!(r.signal.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detector_recovery_flags_dark_samples() {
        let g = grid(16, 1e-6);
        let e = ComplexField::constant(g, ONE).unwrap();
        let t2 = RealCurve::new(g, Array1::from_shape_fn(16, |k| 0.1 * k as f64)).unwrap();
        let r = object_is_detector(&t2, &Kernel::identity(g), &e).unwrap();
        let rec = r.recover(1e-6).complete().unwrap();
        for (a, b) in rec.values.iter().zip(t2.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut e2 = e.samples().clone();
        e2[3] = Complex64::default();
        let dark = object_is_detector(&t2, &Kernel::identity(g), &ComplexField::new(g, e2).unwrap()).unwrap();
        let rec = dark.recover(1e-6);
        assert_eq!(rec.values[3], None);
        assert_eq!(rec.complete(), Err(Error::BelowThreshold { count: 1 }));
    }

    #[test]
    fn triple_correlation_point_pump_sifts() {
        let g = grid(33, 1e-6);
        let gu = grid(401, 2e4);
        let ts = ComplexField::from_real_fn(gu, |u| (-u * u / 2e12).exp()).unwrap();
        let ti = ComplexField::from_real_fn(gu, |u| 1.0 / (1.0 + u * u / 1e12)).unwrap();
        let scales = TripleScales {
            lambda_s: 650e-9,
            f_s: 0.1,
            lambda_i: 650e-9,
            f_i: 0.2,
        };
        let delta = ComplexField::delta(g, 0.0).unwrap();
        let map = triple_correlation(&delta, &ts, &ti, scales, &g, &g).unwrap();
        let ks = 2.0 * PI / (scales.lambda_s * scales.f_s);
        let ki = 2.0 * PI / (scales.lambda_i * scales.f_i);
        for ((i, j), &v) in map.g2.indexed_iter() {
            let expect = (sample_padded(&ts, -ks * g.x(i)) * sample_padded(&ti, -ki * g.x(j))).norm_sqr();
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn triple_correlation_of_gaussians() {
        let (a, b, c) = (8e-6, 5e-6, 6e-6);
        let scales = TripleScales {
            lambda_s: 650e-9,
            f_s: 0.05,
            lambda_i: 700e-9,
            f_i: 0.04,
        };
        let ks = 2.0 * PI / (scales.lambda_s * scales.f_s);
        let ki = 2.0 * PI / (scales.lambda_i * scales.f_i);
        // pupil widths in q chosen so their x-images have standard deviations b and c
        let (bq, cq) = (b * ks, c * ki);
        let gx = grid(512, 0.25e-6);
        let gq = |w: f64| grid(4001, 12.0 * w / 4000.0);
        let tp = ComplexField::from_real_fn(gx, |x| (-x * x / (2.0 * a * a)).exp()).unwrap();
        let ts = ComplexField::from_real_fn(gq(bq), |q| (-q * q / (2.0 * bq * bq)).exp()).unwrap();
        let ti = ComplexField::from_real_fn(gq(cq), |q| (-q * q / (2.0 * cq * cq)).exp()).unwrap();
        let out = grid(41, 1e-6);
        let map = triple_correlation(&tp, &ts, &ti, scales, &out, &out).unwrap();
        let p = 1.0 / (a * a) + 1.0 / (b * b) + 1.0 / (c * c);
        let analytic = |x1: f64, x2: f64| {
            let lin = x1 / (b * b) + x2 / (c * c);
            let amp = (2.0 * PI / p).sqrt() * (-0.5 * (x1 * x1 / (b * b) + x2 * x2 / (c * c) - lin * lin / p)).exp();
            amp * amp
        };
        let peak = analytic(0.0, 0.0);
        for ((i, j), &v) in map.g2.indexed_iter() {
            assert!((v - analytic(out.x(i), out.x(j))).abs() < 1e-2 * peak);
        }
    }

    #[test]
    fn system_identification_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(16, 1e-6);
        let h = random_field(&mut rng, g);
        // reflected samples h(-x); the grid is centred so -x_k = x_{n-k}
        let reflected = ComplexField::from_fn(g, |x| match g.exact_index(-x) {
            Some(k) => h.samples()[k],
            None => Complex64::default(),
        })
        .unwrap();
        let points: Vec<f64> = (1..16).map(|k| g.x(k)).collect();
        let c = system_identification(&reflected, &delta_basis(&g, &points).unwrap()).unwrap();
        for (k, v) in (1..16).zip(c.iter()) {
            assert!((v - h.samples()[k].norm_sqr()).abs() < 1e-12);
        }

        // an orthonormal discrete Fourier basis captures all the energy
        let n = g.n();
        let basis: Vec<ComplexField> = (0..n)
            .map(|m| {
                let s = 1.0 / (n as f64 * g.dx()).sqrt();
                ComplexField::new(g, (0..n).map(|k| Complex64::from_polar(s, 2.0 * PI * (m * k) as f64 / n as f64)).collect())
                    .unwrap()
            })
            .collect();
        let c = system_identification(&reflected, &basis).unwrap();
        let total: f64 = c.iter().sum();
        assert!((total - reflected.energy()).abs() < 1e-10 * total);

        let zero = ComplexField::constant(g, Complex64::default()).unwrap();
        assert!(system_identification(&zero, &basis).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_cap() {
        let big = grid(DENSE_LIMIT + 1, 1e-6);
        let small = grid(2, 1e-6);
        assert!(matches!(
            BiphotonAmplitude::new(big, small, Array2::zeros((DENSE_LIMIT + 1, 2))),
            Err(Error::TooLarge { .. })
        ));
    }
}
