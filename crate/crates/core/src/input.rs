//! Squeezed-vacuum input statistics and the layer noise correlations they induce.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::linalg::CMatrix;
use crate::rates::{ArrayGeometry, RateSet};

/// Squeezed vacuum characterized by its photon number and purity.
///
/// The anomalous correlation is taken real, so the squeezing phase is fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezedVacuumSpec {
    pub n_photons: f64,
    pub purity: f64,
}

impl SqueezedVacuumSpec {
    pub fn new(n_photons: f64, purity: f64) -> Result<Self> {
        let s = Self { n_photons, purity };
        s.validate()?;
        Ok(s)
    }

    pub fn vacuum() -> Self {
        Self {
            n_photons: 0.0,
            purity: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_photons >= 0.0 && self.n_photons.is_finite()) {
            return domain(format!("photon number must be non-negative, got {}", self.n_photons));
        }
        if !(0.0..=1.0).contains(&self.purity) {
            return domain(format!("purity must lie in [0, 1], got {}", self.purity));
        }
        Ok(())
    }

    /// `sqrt(N (N + 1))`, the largest anomalous correlation allowed for `N` photons.
    pub fn max_anomalous(&self) -> f64 {
        (self.n_photons * (self.n_photons + 1.0)).sqrt()
    }

    pub fn m_param(&self) -> f64 {
        self.purity * self.max_anomalous()
    }

    /// Minimal quadrature noise of the field, `1 + 2(N - M)`.
    pub fn xi_f2(&self) -> f64 {
        1.0 + 2.0 * (self.n_photons - self.m_param())
    }
}

/// Returns `(M, xi_F^2)`.
pub fn field_moments(spec: &SqueezedVacuumSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    Ok((spec.m_param(), spec.xi_f2()))
}

/// White-noise correlations of the total noise `F_n` driving layer `n`.
///
/// * `s_n[n, m] = <F_n^dag F_m>` (normal order)
/// * `s_m[n, m] = <F_n F_m>`
/// * `comm[n, m] = [F_n, F_m^dag]`
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSet {
    pub s_n: CMatrix,
    pub s_m: CMatrix,
    pub comm: CMatrix,
}

impl DiffusionSet {
    pub fn dim(&self) -> usize {
        self.s_n.nrows()
    }

    /// Symmetrically ordered `<F F^dag>` kernel, `s_n^T + comm / 2`.
    pub fn symmetric(&self) -> CMatrix {
        self.s_n.transpose() + self.comm.scale(0.5)
    }

    /// Anti-normally ordered `<F F^dag>` kernel, `s_n^T + comm`.
    pub fn anti_normal(&self) -> CMatrix {
        self.s_n.transpose() + &self.comm
    }
}

pub fn noise_diffusions(
    spec: &SqueezedVacuumSpec,
    geom: &ArrayGeometry,
    rates: &RateSet,
) -> Result<DiffusionSet> {
    spec.validate()?;
    geom.validate()?;
    if geom.n_layers != rates.n_layers {
        return domain(format!(
            "geometry has {} layers but rates were computed for {}",
            geom.n_layers, rates.n_layers
        ));
    }
    let nz = geom.n_layers;
    let ka = geom.layer_phase();
    let drive = rates.eta * rates.gamma0;
    let n_amp = drive * spec.n_photons;
    let m_amp = drive * spec.m_param();

    let cos_diff = |i: usize, j: usize| (ka * (i as f64 - j as f64)).cos();
    let cos_sum = |i: usize, j: usize| (ka * (i + j) as f64).cos();

    let s_n = DMatrix::from_fn(nz, nz, |i, j| Complex64::new(n_amp * cos_diff(i, j), 0.0));
    // The drive enters as i sqrt(eta Gamma0) E_n, so <F F> picks up i^2 = -1.
    let s_m = DMatrix::from_fn(nz, nz, |i, j| Complex64::new(-m_amp * cos_sum(i, j), 0.0));
    let comm = DMatrix::from_fn(nz, nz, |i, j| {
        let diag = if i == j { rates.gamma_s } else { 0.0 };
        Complex64::new(rates.gamma0 * cos_diff(i, j) + diag, 0.0)
    });
    Ok(DiffusionSet { s_n, s_m, comm })
}
