//! Periodic grid fields and the spectral operator toolbox.
//!
//! Fields are sampled on the uniform `n^3` grid of the unit cell with z the
//! fastest index. Periodic fields use standard discrete Fourier calculus with
//! wave vectors `xi_k = 2 pi k`, `k` on the symmetric integer lattice; the
//! unpaired Nyquist frequency of even grids is treated as having zero wave
//! number in differentiation so real fields stay real. Zero-trace
//! (`zero_dirichlet`) fields share the same storage with the convention that
//! the index-0 planes represent both faces of the cell and are pinned to
//! zero.
//!
//! Operators:
//! * [`divergence`] — spectral divergence of a periodic vector field.
//! * [`project_div_free`] — Leray projection `P B = B - grad v`,
//!   `lap v = div B`, leaving the mean untouched.
//! * [`dual_norm_div`] — the negative-order norm
//!   `( sum_{k!=0} |xi_k . B^(k)|^2 / (1+|xi_k|^2) )^{1/2}`, the natural
//!   right-hand side of the projection error estimate
//!   `||B - P B|| <= sqrt(1 + 4 pi^2) * dual_norm_div(B)`.
//! * [`gradient_dirichlet`] — second-order gradients of zero-trace fields
//!   (central differences inside, one-sided second-order stencils through the
//!   zero trace at the boundary planes).

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::{Error, Result};

/// Boundary interpretation of a grid field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    ZeroDirichlet,
}

/// Scalar samples on the uniform `n^3` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScalarField {
    pub n: usize,
    pub data: Vec<f64>,
}

impl GridScalarField {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }
}

/// Vector-valued samples on the uniform `n^3` grid, stored component-major
/// (three contiguous `n^3` blocks, z fastest within each block).
#[derive(Debug, Clone, PartialEq)]
pub struct GridVectorField {
    pub n: usize,
    pub boundary: Boundary,
    pub data: Vec<f64>,
}

impl GridVectorField {
    pub fn zeros(n: usize, boundary: Boundary) -> Self {
        Self {
            n,
            boundary,
            data: vec![0.0; 3 * n * n * n],
        }
    }

    /// Sample an analytic field at the periodic grid nodes `i/n`.
    pub fn from_fn_nodes(
        n: usize,
        boundary: Boundary,
        f: impl Fn([f64; 3]) -> [f64; 3],
    ) -> Self {
        let mut field = Self::zeros(n, boundary);
        let h = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = f([i as f64 * h, j as f64 * h, k as f64 * h]);
                    for c in 0..3 {
                        let idx = field.idx(c, i, j, k);
                        field.data[idx] = v[c];
                    }
                }
            }
        }
        field
    }

    #[inline]
    pub fn idx(&self, c: usize, i: usize, j: usize, k: usize) -> usize {
        ((c * self.n + i) * self.n + j) * self.n + k
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(c, i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx(c, i, j, k);
        self.data[idx] = v;
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let m = self.n * self.n * self.n;
        &self.data[c * m..(c + 1) * m]
    }

    /// L2 norm under the cell quadrature `(1/n^3) sum |B|^2`.
    pub fn l2_norm(&self) -> f64 {
        let m = (self.n * self.n * self.n) as f64;
        (self.data.iter().map(|x| x * x).sum::<f64>() / m).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Mean over the grid, componentwise.
    pub fn mean(&self) -> [f64; 3] {
        let m = (self.n * self.n * self.n) as f64;
        let mut out = [0.0; 3];
        for (c, item) in out.iter_mut().enumerate() {
            *item = self.component(c).iter().sum::<f64>() / m;
        }
        out
    }

    /// Subtract the mean in place and return the removed vector.
    pub fn zero_mean(&mut self) -> [f64; 3] {
        let mean = self.mean();
        let m = self.n * self.n * self.n;
        for c in 0..3 {
            for v in &mut self.data[c * m..(c + 1) * m] {
                *v -= mean[c];
            }
        }
        mean
    }

    /// Check the zero-trace convention: index-0 planes vanish.
    pub fn dirichlet_planes_are_zero(&self) -> bool {
        let n = self.n;
        for c in 0..3 {
            for a in 0..n {
                for b in 0..n {
                    if self.get(c, 0, a, b) != 0.0
                        || self.get(c, a, 0, b) != 0.0
                        || self.get(c, a, b, 0) != 0.0
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Raw little-endian f64 dump, component-major, z fastest.
    pub fn export_raw(&self) -> Vec<u8> {
        self.data.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    /// JSON sidecar describing a raw dump.
    pub fn sidecar(&self) -> FieldSidecar {
        FieldSidecar {
            n: self.n,
            components: 3,
            boundary: self.boundary,
        }
    }

    pub fn import_raw(bytes: &[u8], sidecar: &FieldSidecar) -> Result<Self> {
        let n = sidecar.n;
        let expected = 8 * sidecar.components * n * n * n;
        if sidecar.components != 3 {
            return Err(Error::InvalidParams(format!(
                "vector field dump needs 3 components, sidecar says {}",
                sidecar.components
            )));
        }
        if bytes.len() != expected {
            return Err(Error::InvalidParams(format!(
                "field dump has {} bytes, sidecar implies {expected}",
                bytes.len()
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: "field dump payload".into(),
            });
        }
        Ok(Self {
            n,
            boundary: sidecar.boundary,
            data,
        })
    }
}

/// Metadata accompanying raw field dumps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct FieldSidecar {
    pub n: usize,
    pub components: usize,
    pub boundary: Boundary,
}

/// 3x3-tensor samples on the grid (component-major, 9 blocks, row-major
/// component order `T11, T12, T13, T21, ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensorField {
    pub n: usize,
    pub data: Vec<f64>,
}

impl GridTensorField {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; 9 * n * n * n],
        }
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, i: usize, j: usize, k: usize) -> usize {
        (((row * 3 + col) * self.n + i) * self.n + j) * self.n + k
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(row, col, i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx(row, col, i, j, k);
        self.data[idx] = v;
    }
}

/// Reusable FFT plans and scratch for one grid resolution.
///
/// Not internally synchronized: use one workspace per thread.
pub struct SpectralWorkspace {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    lane: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectralWorkspace {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            lane: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Signed integer frequency for index `i` on the symmetric lattice.
    #[inline]
    pub fn freq(n: usize, i: usize) -> i64 {
        if 2 * i < n + 1 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// Wave number `xi = 2 pi k` with the unpaired Nyquist mode of even grids
    /// mapped to zero (differentiation convention preserving real fields).
    #[inline]
    pub fn xi(n: usize, i: usize) -> f64 {
        if n % 2 == 0 && i == n / 2 {
            0.0
        } else {
            2.0 * std::f64::consts::PI * Self::freq(n, i) as f64
        }
    }

    fn transform_axes(&mut self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n * n * n);
        let plan = if inverse {
            self.inverse.clone()
        } else {
            self.forward.clone()
        };
        // Axis 2 (z): contiguous lanes.
        for lane in buf.chunks_exact_mut(n) {
            plan.process_with_scratch(lane, &mut self.scratch);
        }
        // Axis 1 (y): stride n within each i-plane.
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    self.lane[j] = buf[(i * n + j) * n + k];
                }
                plan.process_with_scratch(&mut self.lane, &mut self.scratch);
                for j in 0..n {
                    buf[(i * n + j) * n + k] = self.lane[j];
                }
            }
        }
        // Axis 0 (x): stride n^2.
        for j in 0..n {
            for k in 0..n {
                for i in 0..n {
                    self.lane[i] = buf[(i * n + j) * n + k];
                }
                plan.process_with_scratch(&mut self.lane, &mut self.scratch);
                for i in 0..n {
                    buf[(i * n + j) * n + k] = self.lane[i];
                }
            }
        }
    }

    /// Forward transform of real samples into normalized Fourier
    /// coefficients `B^(k) = n^{-3} sum_j B_j e^{-2 pi i k.j/n}`.
    pub fn to_coefficients(&mut self, samples: &[f64]) -> Vec<Complex64> {
        let m = samples.len();
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform_axes(&mut buf, false);
        let scale = 1.0 / m as f64;
        for v in &mut buf {
            *v *= scale;
        }
        buf
    }

    /// Evaluate normalized coefficients back on the grid, discarding the
    /// (roundoff-level) imaginary part.
    pub fn to_samples(&mut self, mut coeffs: Vec<Complex64>) -> Vec<f64> {
        self.transform_axes(&mut coeffs, true);
        coeffs.into_iter().map(|v| v.re).collect()
    }
}

fn require_periodic(field: &GridVectorField, op: &str) -> Result<()> {
    if field.boundary != Boundary::Periodic {
        return Err(Error::InvalidParams(format!(
            "{op} requires a periodic field"
        )));
    }
    if field.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: format!("{op} input field"),
        });
    }
    Ok(())
}

/// Spectral divergence of a periodic vector field.
pub fn divergence(field: &GridVectorField, ws: &mut SpectralWorkspace) -> Result<GridScalarField> {
    require_periodic(field, "divergence")?;
    let n = field.n;
    assert_eq!(ws.resolution(), n);
    let hats: Vec<Vec<Complex64>> = (0..3)
        .map(|c| ws.to_coefficients(field.component(c)))
        .collect();
    let mut div_hat = vec![Complex64::new(0.0, 0.0); n * n * n];
    for i in 0..n {
        let xi0 = SpectralWorkspace::xi(n, i);
        for j in 0..n {
            let xi1 = SpectralWorkspace::xi(n, j);
            for k in 0..n {
                let xi2 = SpectralWorkspace::xi(n, k);
                let idx = (i * n + j) * n + k;
                let dot = xi0 * hats[0][idx] + xi1 * hats[1][idx] + xi2 * hats[2][idx];
                div_hat[idx] = Complex64::new(0.0, 1.0) * dot;
            }
        }
    }
    Ok(GridScalarField {
        n,
        data: ws.to_samples(div_hat),
    })
}

/// Leray projection onto (discretely) divergence-free fields:
/// `P B = B - grad v` with `lap v = div B`. The mean (k = 0 mode) passes
/// through unchanged.
pub fn project_div_free(
    field: &GridVectorField,
    ws: &mut SpectralWorkspace,
) -> Result<GridVectorField> {
    require_periodic(field, "project_div_free")?;
    let n = field.n;
    assert_eq!(ws.resolution(), n);
    let mut hats: Vec<Vec<Complex64>> = (0..3)
        .map(|c| ws.to_coefficients(field.component(c)))
        .collect();
    apply_leray(&mut hats, n, false);
    let mut out = GridVectorField::zeros(n, Boundary::Periodic);
    let m = n * n * n;
    for c in 0..3 {
        let samples = ws.to_samples(std::mem::take(&mut hats[c]));
        out.data[c * m..(c + 1) * m].copy_from_slice(&samples);
    }
    Ok(out)
}

/// Leray projection combined with mean removal: the k = 0 mode is zeroed in
/// addition to removing the gradient part. This is the parameterization used
/// by the cell solver for induction fluctuations.
pub fn project_div_free_zero_mean(
    field: &GridVectorField,
    ws: &mut SpectralWorkspace,
) -> Result<GridVectorField> {
    require_periodic(field, "project_div_free_zero_mean")?;
    let n = field.n;
    let mut hats: Vec<Vec<Complex64>> = (0..3)
        .map(|c| ws.to_coefficients(field.component(c)))
        .collect();
    apply_leray(&mut hats, n, true);
    let mut out = GridVectorField::zeros(n, Boundary::Periodic);
    let m = n * n * n;
    for c in 0..3 {
        let samples = ws.to_samples(std::mem::take(&mut hats[c]));
        out.data[c * m..(c + 1) * m].copy_from_slice(&samples);
    }
    Ok(out)
}

fn apply_leray(hats: &mut [Vec<Complex64>], n: usize, zero_mean: bool) {
    for i in 0..n {
        let xi0 = SpectralWorkspace::xi(n, i);
        for j in 0..n {
            let xi1 = SpectralWorkspace::xi(n, j);
            for k in 0..n {
                let xi2 = SpectralWorkspace::xi(n, k);
                let idx = (i * n + j) * n + k;
                if i == 0 && j == 0 && k == 0 {
                    if zero_mean {
                        for hat in hats.iter_mut() {
                            hat[idx] = Complex64::new(0.0, 0.0);
                        }
                    }
                    continue;
                }
                let norm2 = xi0 * xi0 + xi1 * xi1 + xi2 * xi2;
                if norm2 == 0.0 {
                    // Pure Nyquist mode: zero wave number by convention, so
                    // its divergence vanishes and the mode passes through.
                    continue;
                }
                let dot = (xi0 * hats[0][idx] + xi1 * hats[1][idx] + xi2 * hats[2][idx]) / norm2;
                hats[0][idx] -= xi0 * dot;
                hats[1][idx] -= xi1 * dot;
                hats[2][idx] -= xi2 * dot;
            }
        }
    }
}

/// Dual (negative-order) norm of the divergence:
/// `( sum_{k != 0} |xi_k . B^(k)|^2 / (1 + |xi_k|^2) )^{1/2}`.
pub fn dual_norm_div(field: &GridVectorField, ws: &mut SpectralWorkspace) -> Result<f64> {
    require_periodic(field, "dual_norm_div")?;
    let n = field.n;
    let hats: Vec<Vec<Complex64>> = (0..3)
        .map(|c| ws.to_coefficients(field.component(c)))
        .collect();
    let mut sum = 0.0;
    for i in 0..n {
        let xi0 = SpectralWorkspace::xi(n, i);
        for j in 0..n {
            let xi1 = SpectralWorkspace::xi(n, j);
            for k in 0..n {
                if i == 0 && j == 0 && k == 0 {
                    continue;
                }
                let xi2 = SpectralWorkspace::xi(n, k);
                let idx = (i * n + j) * n + k;
                let dot = xi0 * hats[0][idx] + xi1 * hats[1][idx] + xi2 * hats[2][idx];
                let norm2 = xi0 * xi0 + xi1 * xi1 + xi2 * xi2;
                sum += dot.norm_sqr() / (1.0 + norm2);
            }
        }
    }
    Ok(sum.sqrt())
}

/// Constant of the discrete projection error estimate
/// `||B - P B||_{L2} <= C * dual_norm_div(B)` (worst case at |k| = 1).
pub fn projection_error_constant() -> f64 {
    (1.0 + 4.0 * std::f64::consts::PI * std::f64::consts::PI).sqrt()
}

/// Second-order gradient of a zero-trace field.
///
/// Interior nodes use central differences; nodes on the index-0 planes
/// (which carry the zero trace) use the one-sided three-point stencil exact
/// for quadratics vanishing at the face. The result is the full Jacobian
/// `T_ij = d phi_i / d z_j` at the grid nodes, with index 0 interpreted as
/// the face `z = 0`.
pub fn gradient_dirichlet(field: &GridVectorField) -> Result<GridTensorField> {
    if field.boundary != Boundary::ZeroDirichlet {
        return Err(Error::InvalidParams(
            "gradient_dirichlet requires a zero_dirichlet field".into(),
        ));
    }
    if !field.dirichlet_planes_are_zero() {
        return Err(Error::InvalidParams(
            "zero_dirichlet field has nonzero boundary plane values".into(),
        ));
    }
    let n = field.n;
    let h = 1.0 / n as f64;
    let mut out = GridTensorField::zeros(n);
    // One-dimensional derivative along `axis` at node index `pos` given a
    // lookup of neighboring values; the index-0 plane wraps to represent the
    // far face with value zero.
    for c in 0..3 {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let at = |ii: usize, jj: usize, kk: usize| field.get(c, ii % n, jj % n, kk % n);
                    for (axis, pos) in [(0usize, i), (1, j), (2, k)] {
                        let sample = |p: usize| match axis {
                            0 => at(p, j, k),
                            1 => at(i, p, k),
                            _ => at(i, j, p),
                        };
                        let d = if pos == 0 {
                            // Face node: derivative taken one-sided into the
                            // domain, exact for quadratics vanishing at z=0:
                            // f'(0) ~ (4 f(h) - f(2h)) / (2h).
                            (4.0 * sample(1) - sample(2)) / (2.0 * h)
                        } else if pos == n - 1 {
                            // Last interior node: the wrap neighbor is the
                            // face itself (value 0), so the central stencil
                            // remains valid and second order.
                            (0.0 - sample(n - 2)) / (2.0 * h)
                        } else {
                            (sample(pos + 1) - sample(pos - 1)) / (2.0 * h)
                        };
                        out.set(c, axis, i, j, k, d);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(n: usize, rng: &mut impl Rng) -> GridVectorField {
        let mut f = GridVectorField::zeros(n, Boundary::Periodic);
        for v in &mut f.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn fft_roundtrip_and_parseval() {
        let n = 16;
        let mut ws = SpectralWorkspace::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_field(n, &mut rng);
        let coeffs = ws.to_coefficients(f.component(0));
        let back = ws.to_samples(coeffs.clone());
        for (a, b) in f.component(0).iter().zip(back.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let spatial: f64 =
            f.component(0).iter().map(|x| x * x).sum::<f64>() / (n * n * n) as f64;
        let spectral: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
        assert_relative_eq!(spatial, spectral, epsilon = 1e-12);
    }

    #[test]
    fn divergence_of_single_mode_matches_analytic() {
        let n = 32;
        let mut ws = SpectralWorkspace::new(n);
        let f = GridVectorField::from_fn_nodes(n, Boundary::Periodic, |z| {
            [(2.0 * PI * z[0]).sin(), 0.0, 0.0]
        });
        let div = divergence(&f, &mut ws).unwrap();
        let h = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let exact = 2.0 * PI * (2.0 * PI * i as f64 * h).cos();
                    assert_relative_eq!(div.data[div.idx(i, j, k)], exact, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn dual_norm_of_single_mode() {
        // B = (sin(2 pi z1), 0, 0): coefficients 1/(2i) at k = +-e1, so the
        // dual norm is sqrt(2 pi^2 / (1 + 4 pi^2)) = pi sqrt2 / sqrt(1+4pi^2).
        let n = 16;
        let mut ws = SpectralWorkspace::new(n);
        let f = GridVectorField::from_fn_nodes(n, Boundary::Periodic, |z| {
            [(2.0 * PI * z[0]).sin(), 0.0, 0.0]
        });
        let got = dual_norm_div(&f, &mut ws).unwrap();
        let expected = PI * 2.0f64.sqrt() / (1.0 + 4.0 * PI * PI).sqrt();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        // Same number with the projection removed: the field is a pure
        // gradient, so the projection annihilates it.
        let proj = project_div_free(&f, &mut ws).unwrap();
        assert!(proj.max_abs() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_div_free_and_mean_preserving() {
        let n = 16;
        let mut ws = SpectralWorkspace::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let f = random_field(n, &mut rng);
            let p = project_div_free(&f, &mut ws).unwrap();
            let div = divergence(&p, &mut ws).unwrap();
            assert!(div.max_abs() < 1e-10, "div = {}", div.max_abs());
            let pp = project_div_free(&p, &mut ws).unwrap();
            let mut diff: f64 = 0.0;
            for (a, b) in p.data.iter().zip(pp.data.iter()) {
                diff = diff.max((a - b).abs());
            }
            assert!(diff <= 1e-12 * f.max_abs().max(1.0));
            let m0 = f.mean();
            let m1 = p.mean();
            for c in 0..3 {
                assert_relative_eq!(m0[c], m1[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn projection_error_bounded_by_dual_norm() {
        let n = 16;
        let mut ws = SpectralWorkspace::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let f = random_field(n, &mut rng);
            let p = project_div_free(&f, &mut ws).unwrap();
            let mut err2 = 0.0;
            for (a, b) in f.data.iter().zip(p.data.iter()) {
                err2 += (a - b) * (a - b);
            }
            let err = (err2 / (n * n * n) as f64).sqrt();
            let dual = dual_norm_div(&f, &mut ws).unwrap();
            assert!(err <= projection_error_constant() * dual + 1e-12);
            // The sharp discrete constant is sqrt(1+4pi^2)/(2pi).
            assert!(err <= projection_error_constant() / (2.0 * PI) * dual + 1e-12);
        }
    }

    #[test]
    fn projection_fixes_divergence_free_fields() {
        let n = 16;
        let mut ws = SpectralWorkspace::new(n);
        // A curl field is divergence free: B = curl(0, 0, sin(2pi z1) sin(2pi z2)).
        let f = GridVectorField::from_fn_nodes(n, Boundary::Periodic, |z| {
            let a = 2.0 * PI;
            [
                a * (a * z[0]).sin() * (a * z[1]).cos(),
                -a * (a * z[0]).cos() * (a * z[1]).sin(),
                0.0,
            ]
        });
        let p = project_div_free(&f, &mut ws).unwrap();
        let mut diff: f64 = 0.0;
        for (a, b) in f.data.iter().zip(p.data.iter()) {
            diff = diff.max((a - b).abs());
        }
        assert!(diff < 1e-10, "diff = {diff}");
    }

    #[test]
    fn zero_mean_projection_kills_mean() {
        let n = 8;
        let mut ws = SpectralWorkspace::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_field(n, &mut rng);
        let p = project_div_free_zero_mean(&f, &mut ws).unwrap();
        for c in p.mean() {
            assert!(c.abs() < 1e-13);
        }
        let div = divergence(&p, &mut ws).unwrap();
        assert!(div.max_abs() < 1e-10);
    }

    #[test]
    fn mean_and_zero_mean() {
        let n = 8;
        let mut f = GridVectorField::zeros(n, Boundary::Periodic);
        for (idx, v) in f.data.iter_mut().enumerate() {
            *v = (idx % 7) as f64;
        }
        let mean = f.mean();
        let removed = f.zero_mean();
        assert_eq!(mean, removed);
        for c in f.mean() {
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn bubble_gradient_second_order() {
        // phi = prod_i sin(pi z_i) e1 vanishes on the boundary; the discrete
        // gradient converges at second order in the max norm.
        let errs: Vec<f64> = [16usize, 32]
            .iter()
            .map(|&n| {
                let f = GridVectorField::from_fn_nodes(n, Boundary::ZeroDirichlet, |z| {
                    [
                        (PI * z[0]).sin() * (PI * z[1]).sin() * (PI * z[2]).sin(),
                        0.0,
                        0.0,
                    ]
                });
                let grad = gradient_dirichlet(&f).unwrap();
                let h = 1.0 / n as f64;
                let mut err: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let z = [i as f64 * h, j as f64 * h, k as f64 * h];
                            let exact = [
                                PI * (PI * z[0]).cos() * (PI * z[1]).sin() * (PI * z[2]).sin(),
                                PI * (PI * z[0]).sin() * (PI * z[1]).cos() * (PI * z[2]).sin(),
                                PI * (PI * z[0]).sin() * (PI * z[1]).sin() * (PI * z[2]).cos(),
                            ];
                            for (axis, &e) in exact.iter().enumerate() {
                                err = err.max((grad.get(0, axis, i, j, k) - e).abs());
                            }
                        }
                    }
                }
                err
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.9, "observed order {order}, errors {errs:?}");
    }

    #[test]
    fn gradient_dirichlet_rejects_nonzero_trace() {
        let mut f = GridVectorField::zeros(8, Boundary::ZeroDirichlet);
        f.set(0, 0, 3, 3, 1.0);
        assert!(gradient_dirichlet(&f).is_err());
        let p = GridVectorField::zeros(8, Boundary::Periodic);
        assert!(gradient_dirichlet(&p).is_err());
    }

    #[test]
    fn field_dump_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(8, &mut rng);
        let bytes = f.export_raw();
        let sidecar = f.sidecar();
        let back = GridVectorField::import_raw(&bytes, &sidecar).unwrap();
        assert_eq!(back, f);
        assert!(GridVectorField::import_raw(&bytes[..100], &sidecar).is_err());
    }

    #[test]
    fn odd_sized_grids_supported() {
        // Multi-cell grids are k*N with k up to 3, so non-power-of-two sizes
        // like 24 must work end to end.
        let n = 24;
        let mut ws = SpectralWorkspace::new(n);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = random_field(n, &mut rng);
        let p = project_div_free(&f, &mut ws).unwrap();
        let div = divergence(&p, &mut ws).unwrap();
        assert!(div.max_abs() < 1e-10);
    }
}
