//! Slow, direct references for the engines.
//!
//! Each function evaluates a defining sum with explicit loops and no
//! factorization, so a disagreement points at the engine. Nothing here is
//! meant for production sizes.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;

use crate::elements::{Kernel, TransferMatrix};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, RealCurve, TransverseGrid};
use crate::thin::{BiphotonAmplitude, TripleScales};

/// Hermitian tolerance relative to the largest entry.
const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// `q(x₁; x', x'')` of a classical bilinear system
/// `g(x₁) = ΣΣ f*(x') f(x'') q(x₁; x', x'') dx' dx''`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleImpulseResponse {
    out: TransverseGrid,
    input: TransverseGrid,
    values: Array3<Complex64>,
}

impl DoubleImpulseResponse {
    /// Rejects kernels without `q(x₁; x', x'') = q*(x₁; x'', x')`, the
    /// condition for a real output.
    pub fn new(out: TransverseGrid, input: TransverseGrid, values: Array3<Complex64>) -> Result<Self> {
        if values.dim() != (out.n(), input.n(), input.n()) {
            return Err(Error::GridMismatch(format!(
                "double impulse response of shape {:?} for grids {} x {}",
                values.dim(),
                out.n(),
                input.n()
            )));
        }
        let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut residual = 0.0f64;
        for ((a, b, c), z) in values.indexed_iter() {
            residual = residual.max((z - values[[a, c, b]].conj()).norm());
        }
        if residual > HERMITIAN_TOLERANCE * scale {
            return Err(Error::NotHermitian { residual });
        }
        Ok(Self { out, input, values })
    }

    /// `δ(x₁ - x') δ(x₁ - x'')`: output is `|f|²`.
    pub fn squarer(grid: TransverseGrid) -> Self {
        let n = grid.n();
        let mut values = Array3::zeros((n, n, n));
        for k in 0..n {
            values[[k, k, k]] = Complex64::new(1.0 / (grid.dx() * grid.dx()), 0.0);
        }
        Self {
            out: grid,
            input: grid,
            values,
        }
    }

    /// `γ(x', x'') h*(x₁, x') h(x₁, x'')`; `γ` must be Hermitian.
    pub fn partially_coherent(h: &Kernel, gamma: &Array2<Complex64>) -> Result<Self> {
        let (out, input) = (*h.out(), *h.input());
        if gamma.dim() != (input.n(), input.n()) {
            return Err(Error::GridMismatch("coherence function vs kernel input".into()));
        }
        let hv = h.values();
        let values = Array3::from_shape_fn((out.n(), input.n(), input.n()), |(a, b, c)| {
            gamma[[b, c]] * hv[[a, b]].conj() * hv[[a, c]]
        });
        Self::new(out, input, values)
    }

    /// Fully coherent: `γ ≡ 1`.
    pub fn coherent(h: &Kernel) -> Result<Self> {
        let n = h.input().n();
        Self::partially_coherent(h, &Array2::from_elem((n, n), Complex64::new(1.0, 0.0)))
    }

    /// Fully incoherent: `γ = δ(x' - x'')`.
    pub fn incoherent(h: &Kernel) -> Result<Self> {
        let n = h.input().n();
        let mut gamma = Array2::zeros((n, n));
        gamma.diag_mut().fill(Complex64::new(1.0 / h.input().dx(), 0.0));
        Self::partially_coherent(h, &gamma)
    }

    pub fn out(&self) -> &TransverseGrid {
        &self.out
    }

    pub fn input(&self) -> &TransverseGrid {
        &self.input
    }
}

/// Complex output of the bilinear sum, before discarding the imaginary part.
pub fn bilinear_sum(f: &ComplexField, dir: &DoubleImpulseResponse) -> Result<Array1<Complex64>> {
    f.grid().check_same(&dir.input, "field vs double impulse response")?;
    let (n1, n) = (dir.out.n(), dir.input.n());
    let dx = f.grid().dx();
    let fs = f.samples();
    let mut out = Array1::zeros(n1);
    for a in 0..n1 {
        let mut acc = Complex64::default();
        for b in 0..n {
            for c in 0..n {
                acc += fs[b].conj() * fs[c] * dir.values[[a, b, c]];
            }
        }
        out[a] = acc * dx * dx;
    }
    Ok(out)
}

/// `g(x₁) = ΣΣ f*(x') f(x'') q(x₁; x', x'') dx' dx''`.
pub fn bilinear_transform(f: &ComplexField, dir: &DoubleImpulseResponse) -> Result<RealCurve> {
    let out = bilinear_sum(f, dir)?;
    RealCurve::new(dir.out, out.mapv(|z| z.re))
}

/// `ψ(x₁, x₂) = Σ_x E_p(x) h_s(x₁, x) h_i(x₂, x) dx` by a triple loop.
pub fn brute_force_biphoton(
    e_p: &ComplexField,
    h_s: impl Fn(f64, f64) -> Complex64,
    h_i: impl Fn(f64, f64) -> Complex64,
    grid1: &TransverseGrid,
    grid2: &TransverseGrid,
) -> Result<BiphotonAmplitude> {
    let g = e_p.grid();
    let mut psi = Array2::zeros((grid1.n(), grid2.n()));
    for i in 0..grid1.n() {
        for j in 0..grid2.n() {
            let mut acc = Complex64::default();
            for k in 0..g.n() {
                acc += e_p.samples()[k] * h_s(grid1.x(i), g.x(k)) * h_i(grid2.x(j), g.x(k));
            }
            psi[[i, j]] = acc * g.dx();
        }
    }
    BiphotonAmplitude::new(*grid1, *grid2, psi)
}

/// `ψ(x₁, x₂) = ΣΣ t(x') t(x'') ψ_c(x', x'') h₂(x₁, x') h₂(x₂, x'') dx' dx''`
/// with `ψ_c` itself summed directly.
pub fn brute_force_object_in_both(
    e_p: &ComplexField,
    h1: impl Fn(f64, f64) -> Complex64,
    h2: impl Fn(f64, f64) -> Complex64,
    t: &ComplexField,
    out: &TransverseGrid,
) -> Result<BiphotonAmplitude> {
    let (gp, go) = (e_p.grid(), t.grid());
    let mut psi_c = Array2::zeros((go.n(), go.n()));
    for a in 0..go.n() {
        for b in 0..go.n() {
            let mut acc = Complex64::default();
            for k in 0..gp.n() {
                acc += e_p.samples()[k] * h1(go.x(a), gp.x(k)) * h1(go.x(b), gp.x(k));
            }
            psi_c[[a, b]] = acc * gp.dx();
        }
    }
    let mut psi = Array2::zeros((out.n(), out.n()));
    for i in 0..out.n() {
        for j in 0..out.n() {
            let mut acc = Complex64::default();
            for a in 0..go.n() {
                for b in 0..go.n() {
                    acc += t.samples()[a] * t.samples()[b] * psi_c[[a, b]] * h2(out.x(i), go.x(a)) * h2(out.x(j), go.x(b));
                }
            }
            psi[[i, j]] = acc * go.dx() * go.dx();
        }
    }
    BiphotonAmplitude::new(*out, *out, psi)
}

/// Piecewise-linear reading of a sampled pupil, zero outside its grid.
fn pupil_at(p: &ComplexField, u: f64) -> Complex64 {
    let g = p.grid();
    let (lo, hi) = (g.x(0), g.x(g.n() - 1));
    if u < lo || u > hi {
        return Complex64::default();
    }
    let s = (u - lo) / g.dx();
    let k = s.floor() as usize;
    if k + 1 >= g.n() {
        return p.samples()[g.n() - 1];
    }
    let w = s - k as f64;
    p.samples()[k] * (1.0 - w) + p.samples()[k + 1] * w
}

/// `|Σ t_p(x) T_s(2π(x - x₁)/(λ_s f_s)) T_i(2π(x - x₂)/(λ_i f_i)) dx|²`.
pub fn brute_force_triple(
    t_p: &ComplexField,
    pupil_s: &ComplexField,
    pupil_i: &ComplexField,
    scales: TripleScales,
    grid1: &TransverseGrid,
    grid2: &TransverseGrid,
) -> Array2<f64> {
    let g = t_p.grid();
    let mut out = Array2::zeros((grid1.n(), grid2.n()));
    for i in 0..grid1.n() {
        for j in 0..grid2.n() {
            let mut acc = Complex64::default();
            for k in 0..g.n() {
                let x = g.x(k);
                let us = 2.0 * PI * (x - grid1.x(i)) / (scales.lambda_s * scales.f_s);
                let ui = 2.0 * PI * (x - grid2.x(j)) / (scales.lambda_i * scales.f_i);
                acc += t_p.samples()[k] * pupil_at(pupil_s, us) * pupil_at(pupil_i, ui);
            }
            out[[i, j]] = (acc * g.dx()).norm_sqr();
        }
    }
    out
}

/// `(1/2π)² ΣΣ Λ(q_s, q_i) H_s(x₁, q_s) H_i(x₂, q_i) dq_s dq_i` for one
/// spectral slice of a finite pump.
pub fn brute_force_spectral(
    lambda: impl Fn(f64, f64) -> Complex64,
    h_s: &TransferMatrix,
    h_i: &TransferMatrix,
) -> Array2<Complex64> {
    let (qs, qi) = (h_s.q, h_i.q);
    let lam = Array2::from_shape_fn((qs.n(), qi.n()), |(a, b)| lambda(qs.q(a), qi.q(b)));
    let mut out = Array2::zeros((h_s.out.n(), h_i.out.n()));
    for i in 0..h_s.out.n() {
        for j in 0..h_i.out.n() {
            let mut acc = Complex64::default();
            for a in 0..qs.n() {
                for b in 0..qi.n() {
                    acc += lam[[a, b]] * h_s.values[[i, a]] * h_i.values[[j, b]];
                }
            }
            out[[i, j]] = acc * (qs.dq() * qi.dq() / (4.0 * PI * PI));
        }
    }
    out
}

/// Plane-wave pump: `(1/2π) Σ ξ̃(-q, q) H_s(x₁, -q) H_i(x₂, q) dq`, pairing
/// each `q` on the idler grid with the signal sample at `-q`.
pub fn brute_force_spectral_plane_wave(
    xi: impl Fn(f64, f64) -> Complex64,
    h_s: &TransferMatrix,
    h_i: &TransferMatrix,
) -> Array2<Complex64> {
    let (qs, qi) = (h_s.q, h_i.q);
    let mut out = Array2::zeros((h_s.out.n(), h_i.out.n()));
    for b in 0..qi.n() {
        let q = qi.q(b);
        let Some(a) = (0..qs.n()).find(|&a| (qs.q(a) + q).abs() <= 1e-9 * qs.dq()) else {
            continue;
        };
        let w = xi(-q, q) * (qi.dq() / (2.0 * PI));
        for i in 0..h_s.out.n() {
            for j in 0..h_i.out.n() {
                out[[i, j]] += w * h_s.values[[i, a]] * h_i.values[[j, b]];
            }
        }
    }
    out
}
