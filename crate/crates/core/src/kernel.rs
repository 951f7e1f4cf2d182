//! Interlayer dipole-dipole kernel of the multilayer array and the linear drift
//! of the layer dipoles.
//!
//! Each layer couples to the others through the propagating zeroth diffraction
//! order, `(Gamma0/2) exp(i k a_z |n - m|)`, and through the evanescent higher
//! orders, which add the real, exponentially short-ranged term `i eps_{nm}`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::analytic::DetuningSpec;
use crate::error::{domain, Error, Result};
use crate::linalg::{CMatrix, SchurForm};
use crate::rates::{ArrayGeometry, RateSet};

pub const DEFAULT_TOL: f64 = 1e-14;
pub const DEFAULT_MAX_ORDER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Relative truncation tolerance of the diffraction-order sum.
    pub tol: f64,
    /// Largest `|m_perp|` allowed before the sum is declared divergent.
    pub max_order: usize,
    /// When false the evanescent orders are dropped entirely.
    pub evanescent: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_order: DEFAULT_MAX_ORDER,
            evanescent: true,
        }
    }
}

impl KernelOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn propagating_only() -> Self {
        Self {
            evanescent: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Truncation {
    pub tol: f64,
    /// Largest shell radius `ceil(|m_perp|)` summed.
    pub max_order: usize,
    pub terms_summed: usize,
}

/// Evanescent coupling at one layer separation, with truncation metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvanescentSum {
    pub value: f64,
    pub truncation: Truncation,
}

/// Lattice points `m` with `|m|^2 = r2`.
fn shell(r2: u64) -> Vec<(i64, i64)> {
    let r = (r2 as f64).sqrt().floor() as i64 + 1;
    let mut pts = Vec::new();
    for mx in -r..=r {
        let rem = r2 as i64 - mx * mx;
        if rem < 0 {
            continue;
        }
        let my = (rem as f64).sqrt().round() as i64;
        if my * my == rem {
            pts.push((mx, my));
            if my != 0 {
                pts.push((mx, -my));
            }
        }
    }
    pts
}

/// `eps` at layer separation `separation` (in layers), in units of the
/// single-atom decay rate.
pub fn evanescent_series(
    geom: &ArrayGeometry,
    separation: usize,
    opts: &KernelOptions,
) -> Result<EvanescentSum> {
    geom.validate()?;
    if separation == 0 {
        return domain("evanescent coupling is defined only between distinct layers");
    }
    let inv_a2 = 1.0 / (geom.lattice_const * geom.lattice_const);
    let [dx, dy] = geom.dipole_orientation;
    let decay = 2.0 * PI * geom.layer_spacing * separation as f64;
    let kappa = |r2: f64| (inv_a2 * r2 - 1.0).sqrt();

    let mut sum = 0.0;
    let mut terms = 0usize;
    let mut r2: u64 = 1;
    loop {
        let radius = (r2 as f64).sqrt();
        if radius > opts.max_order as f64 {
            return Err(Error::Convergence {
                max_order: opts.max_order,
                partial: sum,
            });
        }
        let q = kappa(r2 as f64);
        let damp = (-decay * q).exp();
        for (mx, my) in shell(r2) {
            let proj = mx as f64 * dx + my as f64 * dy;
            sum += (inv_a2 * proj * proj - 1.0) / q * damp;
            terms += 1;
        }
        let next = (r2 + 1) as f64;
        let next_weight = (inv_a2 * next + 1.0) / kappa(next);
        if (-decay * kappa(next)).exp() * next_weight < opts.tol * (sum.abs() + 1e-300) {
            return Ok(EvanescentSum {
                value: 0.5 * geom.gamma0() * sum,
                truncation: Truncation {
                    tol: opts.tol,
                    max_order: radius.ceil() as usize,
                    terms_summed: terms,
                },
            });
        }
        r2 += 1;
    }
}

/// `eps_{nm}` between layers `n` and `m`.
pub fn evanescent_eps(geom: &ArrayGeometry, n: usize, m: usize, tol: f64) -> Result<f64> {
    if n == m {
        return Ok(0.0);
    }
    Ok(evanescent_series(geom, n.abs_diff(m), &KernelOptions::with_tol(tol))?.value)
}

/// Decay length `a / (2 pi sqrt(|m|^2 - (a/lambda)^2))` of diffraction order `m`.
pub fn evanescent_range(geom: &ArrayGeometry, order: [i64; 2]) -> Result<f64> {
    let m2 = (order[0] * order[0] + order[1] * order[1]) as f64;
    if m2 == 0.0 {
        return domain("the zeroth diffraction order propagates");
    }
    let a = geom.lattice_const;
    Ok(a / (2.0 * PI * (m2 - a * a).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerKernel {
    /// `D_{nm}`, zero on the diagonal.
    pub d_matrix: CMatrix,
    pub eps_matrix: DMatrix<f64>,
    pub truncation: Truncation,
}

impl LayerKernel {
    pub fn dim(&self) -> usize {
        self.d_matrix.nrows()
    }
}

pub fn interaction_kernel(
    geom: &ArrayGeometry,
    rates: &RateSet,
    opts: &KernelOptions,
) -> Result<LayerKernel> {
    geom.validate()?;
    let nz = geom.n_layers;
    // eps depends only on |n - m|; one value per separation keeps the matrix exactly Toeplitz.
    let per_sep: Vec<EvanescentSum> = if opts.evanescent {
        (1..nz)
            .into_par_iter()
            .map(|s| evanescent_series(geom, s, opts))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    // evanescent_series works with the geometric Gamma0; rescale to the rate set's.
    let scale = rates.gamma0 / geom.gamma0();
    let eps_at = |s: usize| {
        if s == 0 || !opts.evanescent {
            0.0
        } else {
            per_sep[s - 1].value * scale
        }
    };
    let ka = geom.layer_phase();
    let half = 0.5 * rates.gamma0;
    let eps_matrix = DMatrix::from_fn(nz, nz, |i, j| eps_at(i.abs_diff(j)));
    let d_matrix = CMatrix::from_fn(nz, nz, |i, j| {
        let s = i.abs_diff(j);
        if s == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(half, ka * s as f64) + Complex64::new(0.0, eps_at(s))
        }
    });
    let truncation = per_sep.iter().fold(
        Truncation {
            tol: opts.tol,
            ..Truncation::default()
        },
        |acc, e| Truncation {
            tol: acc.tol,
            max_order: acc.max_order.max(e.truncation.max_order),
            terms_summed: acc.terms_summed + e.truncation.terms_summed,
        },
    );
    Ok(LayerKernel {
        d_matrix,
        eps_matrix,
        truncation,
    })
}

/// Linear drift of the layer dipoles, `dP/dt = A P + noise`.
#[derive(Debug, Clone)]
pub struct DriftMatrix {
    pub a_matrix: CMatrix,
    schur: SchurForm,
}

impl DriftMatrix {
    /// Builds the drift from an explicit matrix, checking stability.
    pub fn from_matrix(a_matrix: CMatrix, gamma0: f64) -> Result<Self> {
        let schur = SchurForm::new(&a_matrix)?;
        let max_real = schur.spectral_abscissa();
        if !(max_real < -1e-12 * gamma0) {
            return Err(Error::Unstable { max_real });
        }
        Ok(Self { a_matrix, schur })
    }

    pub fn dim(&self) -> usize {
        self.a_matrix.nrows()
    }

    pub fn schur(&self) -> &SchurForm {
        &self.schur
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.schur.eigenvalues()
    }
}

pub fn drift_matrix(kernel: &LayerKernel, rates: &RateSet, det: &DetuningSpec) -> Result<DriftMatrix> {
    if kernel.dim() != rates.n_layers {
        return domain(format!(
            "kernel has {} layers but rates were computed for {}",
            kernel.dim(),
            rates.n_layers
        ));
    }
    let diag = Complex64::new(-0.5 * (rates.gamma_s + rates.gamma0), det.eff_detuning);
    let a = CMatrix::from_fn(kernel.dim(), kernel.dim(), |i, j| {
        if i == j {
            diag
        } else {
            -kernel.d_matrix[(i, j)]
        }
    });
    DriftMatrix::from_matrix(a, rates.gamma0)
}

/// First-order evanescent shift `(1/N_z) sum_n sum_{m != n} eps_{nm} exp(i k a_z (n - m))`.
pub fn delta_prime(geom: &ArrayGeometry, rates: &RateSet, opts: &KernelOptions) -> Result<f64> {
    let kernel = interaction_kernel(geom, rates, opts)?;
    delta_prime_from_kernel(&kernel, geom)
}

pub fn delta_prime_from_kernel(kernel: &LayerKernel, geom: &ArrayGeometry) -> Result<f64> {
    let nz = kernel.dim();
    let ka = geom.layer_phase();
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..nz {
        for m in 0..nz {
            if n != m {
                acc += Complex64::from_polar(kernel.eps_matrix[(n, m)], ka * (n as f64 - m as f64));
            }
        }
    }
    acc /= nz as f64;
    let scale = kernel.eps_matrix.iter().fold(0.0f64, |s, e| s.max(e.abs())).max(1.0);
    if acc.im.abs() > 1e-10 * scale {
        return Err(Error::Unphysical(format!(
            "first-order shift has imaginary part {:e}",
            acc.im
        )));
    }
    Ok(acc.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates_for(geom: &ArrayGeometry) -> RateSet {
        let g0 = geom.gamma0();
        RateSet::from_parts(g0, 0.99, geom.n_layers, 0.1 * g0).unwrap()
    }

    /// Direct sum over the square |m_x|, |m_y| <= cutoff.
    fn brute_force_eps(geom: &ArrayGeometry, sep: usize, cutoff: i64) -> f64 {
        let inv = 1.0 / geom.lattice_const;
        let mut total = 0.0;
        for mx in -cutoff..=cutoff {
            for my in -cutoff..=cutoff {
                if mx == 0 && my == 0 {
                    continue;
                }
                let proj = mx as f64 * geom.dipole_orientation[0] + my as f64 * geom.dipole_orientation[1];
                let q = (inv * inv * (mx * mx + my * my) as f64 - 1.0).sqrt();
                total += (inv * inv * proj * proj - 1.0) / q
                    * (-2.0 * PI * geom.layer_spacing * sep as f64 * q).exp();
            }
        }
        0.5 * geom.gamma0() * total
    }

    #[test]
    fn shells_enumerate_lattice_points() {
        assert_eq!(shell(1).len(), 4);
        assert_eq!(shell(2).len(), 4);
        assert_eq!(shell(3).len(), 0);
        assert_eq!(shell(25).len(), 12);
        for r2 in 1..200u64 {
            for (x, y) in shell(r2) {
                assert_eq!((x * x + y * y) as u64, r2);
            }
        }
    }

    #[test]
    fn eps_matches_brute_force() {
        for (a, az, d) in [(0.95, 1.0, [1.0, 0.0]), (0.68, 1.0, [0.6, 0.8]), (0.8, 0.7, [0.0, 1.0])] {
            let geom = ArrayGeometry::new(10, a, 6, az).unwrap().with_dipole(d).unwrap();
            for sep in 1..4 {
                let fast = evanescent_eps(&geom, 0, sep, 1e-15).unwrap();
                let brute = brute_force_eps(&geom, sep, 50);
                assert!(
                    ((fast - brute) / brute).abs() < 1e-12,
                    "a={a} sep={sep}: {fast} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn eps_decays_like_lowest_order() {
        let geom = ArrayGeometry::new(10, 0.9, 8, 0.6).unwrap();
        let q1 = (1.0 / (0.9 * 0.9) - 1.0f64).sqrt();
        let base = 2.0 * PI * 0.6 * q1;
        let ratios: Vec<f64> = (1..=5)
            .map(|s| evanescent_eps(&geom, 0, s, DEFAULT_TOL).unwrap().abs() / (-base * s as f64).exp())
            .collect();
        for r in &ratios {
            assert!(*r < 2.0 * ratios[0] && *r > 0.0);
        }
        // Higher orders die out, leaving the |m| = 1 prefactor.
        let lead = 0.5 * geom.gamma0() * 2.0 * ((1.0 / 0.81 - 1.0) - 1.0) / q1;
        assert!((ratios[4] / lead.abs() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn diagonal_is_excluded() {
        let geom = ArrayGeometry::new(10, 0.9, 3, 1.0).unwrap();
        assert_eq!(evanescent_eps(&geom, 2, 2, DEFAULT_TOL).unwrap(), 0.0);
        assert!(evanescent_series(&geom, 0, &KernelOptions::default()).is_err());
    }

    #[test]
    fn nonconvergent_sum_is_reported() {
        let geom = ArrayGeometry::new(10, 0.9, 3, 1e-4).unwrap();
        let opts = KernelOptions {
            max_order: 20,
            ..KernelOptions::default()
        };
        assert!(matches!(evanescent_series(&geom, 1, &opts), Err(Error::Convergence { .. })));
    }

    #[test]
    fn kernel_is_toeplitz_with_zero_diagonal() {
        let geom = ArrayGeometry::new(10, 0.9, 7, 1.1).unwrap();
        let k = interaction_kernel(&geom, &rates_for(&geom), &KernelOptions::default()).unwrap();
        for i in 0..7 {
            assert_eq!(k.d_matrix[(i, i)], Complex64::new(0.0, 0.0));
            for j in 0..7 {
                let s = i.abs_diff(j);
                assert_eq!(k.d_matrix[(i, j)], k.d_matrix[(0, s)]);
                assert_eq!(k.eps_matrix[(i, j)], k.eps_matrix[(j, i)]);
            }
        }
        assert!(k.truncation.terms_summed > 0);
    }

    #[test]
    fn phase_matched_kernel_is_uniform() {
        let geom = ArrayGeometry::new(10, 0.68, 6, 1.0).unwrap();
        let r = rates_for(&geom);
        let k = interaction_kernel(&geom, &r, &KernelOptions::default()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!((k.d_matrix[(i, j)] - Complex64::new(0.5 * r.gamma0, 0.0)).norm() < 1e-3 * r.gamma0);
                }
            }
        }
    }

    #[test]
    fn single_layer_kernel_is_empty() {
        let geom = ArrayGeometry::new(10, 0.95, 1, 1.0).unwrap();
        let r = rates_for(&geom);
        let k = interaction_kernel(&geom, &r, &KernelOptions::default()).unwrap();
        assert_eq!(k.d_matrix.shape(), (1, 1));
        assert_eq!(k.d_matrix[(0, 0)].norm(), 0.0);
        assert_eq!(delta_prime(&geom, &r, &KernelOptions::default()).unwrap(), 0.0);
        let det = DetuningSpec::new(0.4);
        let a = drift_matrix(&k, &r, &det).unwrap();
        assert_eq!(a.a_matrix[(0, 0)], Complex64::new(-0.5 * (r.gamma0 + r.gamma_s), 0.4));
    }

    #[test]
    fn uniform_mode_collects_collective_decay() {
        let nz = 8;
        let geom = ArrayGeometry::new(10, 0.68, nz, 1.0).unwrap();
        let r = rates_for(&geom);
        let k = interaction_kernel(&geom, &r, &KernelOptions::propagating_only()).unwrap();
        let ka = geom.layer_phase();
        let v: Vec<Complex64> = (0..nz)
            .map(|n| Complex64::from_polar(1.0 / (nz as f64).sqrt(), ka * n as f64))
            .collect();
        for n in 0..nz {
            let s: Complex64 = v.iter().enumerate().map(|(m, vm)| k.d_matrix[(n, m)] * vm).sum();
            assert!((s - v[n] * (0.5 * r.gamma0 * (nz as f64 - 1.0))).norm() < 1e-12);
        }
        let det = DetuningSpec::new(0.0);
        let drift = drift_matrix(&k, &r, &det).unwrap();
        let target = -0.5 * (r.gamma0 * nz as f64 + r.gamma_s);
        let best = drift
            .eigenvalues()
            .iter()
            .map(|z| (z - Complex64::new(target, 0.0)).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-12);
        // Gamma + gamma_loss of the beam-splitter model with eta = 1.
        let bs = RateSet::from_parts(r.gamma0, 1.0, nz, r.gamma_s).unwrap();
        assert!((bs.total_width() + 2.0 * target).abs() < 1e-12);
    }

    #[test]
    fn symmetric_mode_shift_tracks_delta_prime() {
        let geom = ArrayGeometry::new(10, 0.95, 10, 1.0).unwrap();
        let r = rates_for(&geom);
        let k = interaction_kernel(&geom, &r, &KernelOptions::default()).unwrap();
        let dp = delta_prime_from_kernel(&k, &geom).unwrap() / r.gamma0;
        let drift = drift_matrix(&k, &r, &DetuningSpec::new(0.0)).unwrap();
        // The superradiant eigenvalue is the one with the most negative real part.
        let sr = drift
            .eigenvalues()
            .into_iter()
            .min_by(|a, b| a.re.partial_cmp(&b.re).unwrap())
            .unwrap();
        let shift = -sr.im / r.gamma0;
        assert!((shift - dp).abs() < 0.05 * dp.abs(), "{shift} vs {dp}");
    }

    #[test]
    fn delta_prime_is_real_and_scales_with_gamma0() {
        let geom = ArrayGeometry::new(10, 0.8, 5, 0.9).unwrap();
        let r1 = rates_for(&geom);
        let mut r2 = r1.clone();
        r2.gamma0 *= 2.0;
        let d1 = delta_prime(&geom, &r1, &KernelOptions::default()).unwrap();
        let d2 = delta_prime(&geom, &r2, &KernelOptions::default()).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-14 * d1.abs().max(1.0));
    }

    #[test]
    fn unstable_drift_is_rejected() {
        let a = CMatrix::from_diagonal_element(2, 2, Complex64::new(0.1, 0.0));
        assert!(matches!(DriftMatrix::from_matrix(a, 1.0), Err(Error::Unstable { .. })));
    }

    #[test]
    fn evanescent_range_uses_wavelength_ratio() {
        let geom = ArrayGeometry::new(10, 0.95, 2, 1.0).unwrap();
        let z = evanescent_range(&geom, [1, 0]).unwrap();
        assert!((z - 0.95 / (2.0 * PI * (1.0 - 0.9025f64).sqrt())).abs() < 1e-15);
        // Same as 1/(k * kappa) in lambda units, kappa = sqrt((lambda/a)^2 - 1).
        let kappa = (1.0 / (0.95 * 0.95) - 1.0f64).sqrt();
        assert!((z - 1.0 / (2.0 * PI * kappa)).abs() < 1e-14);
        assert!(evanescent_range(&geom, [0, 0]).is_err());
    }
}
