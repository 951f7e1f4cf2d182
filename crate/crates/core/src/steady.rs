//! Stationary second moments of the linearized multilayer dipoles.
//!
//! With `dP/dt = A P + F`, the normal-ordered moments `N = <P^dag P>` and
//! `M = <P P>` satisfy the Lyapunov-type equations
//!
//! ```text
//! conj(A) N + N A^T + s_n = 0
//!       A M + M A^T + s_m = 0
//! ```

use num_complex::Complex64;

use crate::analytic::{DetuningSpec, SqueezingResult};
use crate::error::{Error, Result};
use crate::input::{noise_diffusions, DiffusionSet, SqueezedVacuumSpec};
use crate::kernel::{drift_matrix, interaction_kernel, DriftMatrix, KernelOptions, LayerKernel};
use crate::linalg::{
    hermitian_min_eigenvalue, is_hermitian, is_symmetric, solve_sylvester_eigen,
    solve_sylvester_kron, solve_sylvester_schur, sylvester_residual, CMatrix, EigenForm, SchurForm,
};
use crate::rates::{ArrayGeometry, RateSet};

/// Largest relative residual accepted from any solver.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Bartels-Stewart on the complex Schur form.
    #[default]
    Schur,
    /// Dense solve of the `N_z^2`-dimensional vectorized system.
    Kronecker,
    /// Diagonalization of the drift; requires a well-conditioned eigenbasis.
    Eigenbasis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateMoments {
    pub n_matrix: CMatrix,
    pub m_matrix: CMatrix,
    pub residual_n: f64,
    pub residual_m: f64,
}

impl SteadyStateMoments {
    /// `<P^dag P>` and `<P P>` of the phase-matched collective mode.
    pub fn collective(&self, geom: &ArrayGeometry) -> (f64, Complex64) {
        let nz = self.n_matrix.nrows();
        let ka = geom.layer_phase();
        let mut n_coll = Complex64::new(0.0, 0.0);
        let mut m_coll = Complex64::new(0.0, 0.0);
        for n in 0..nz {
            for m in 0..nz {
                let (fn_, fm) = (n as f64, m as f64);
                n_coll += Complex64::from_polar(1.0, ka * (fm - fn_)) * self.n_matrix[(n, m)];
                m_coll += Complex64::from_polar(1.0, ka * (fn_ + fm)) * self.m_matrix[(n, m)];
            }
        }
        (n_coll.re / nz as f64, m_coll / nz as f64)
    }

    /// Smallest eigenvalue of `[[I + N^T, M], [conj(M), N]]`, the covariance of
    /// `(P, P^dag)`; negative values violate the uncertainty relation.
    pub fn uncertainty_margin(&self) -> f64 {
        let nz = self.n_matrix.nrows();
        let mut big = CMatrix::zeros(2 * nz, 2 * nz);
        let upper = CMatrix::identity(nz, nz) + self.n_matrix.transpose();
        big.view_mut((0, 0), (nz, nz)).copy_from(&upper);
        big.view_mut((0, nz), (nz, nz)).copy_from(&self.m_matrix);
        big.view_mut((nz, 0), (nz, nz)).copy_from(&self.m_matrix.map(|z| z.conj()));
        big.view_mut((nz, nz), (nz, nz)).copy_from(&self.n_matrix);
        hermitian_min_eigenvalue(&big)
    }

    /// Checks the structural properties every stationary state must have.
    pub fn check_physical(&self) -> Result<()> {
        let scale = self.n_matrix.norm().max(self.m_matrix.norm()).max(1.0);
        let tol = 1e-9 * scale;
        if !is_hermitian(&self.n_matrix, tol) {
            return Err(Error::Unphysical("<P^dag P> is not Hermitian".into()));
        }
        if !is_symmetric(&self.m_matrix, tol) {
            return Err(Error::Unphysical("<P P> is not symmetric".into()));
        }
        let min_n = hermitian_min_eigenvalue(&self.n_matrix);
        if min_n < -tol {
            return Err(Error::NotPsd { min_eig: min_n });
        }
        let margin = self.uncertainty_margin();
        if margin < -tol {
            return Err(Error::NotPsd { min_eig: margin });
        }
        Ok(())
    }
}

/// Drift of a fixed array and detuning, factorized once for repeated solves.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub geom: ArrayGeometry,
    pub rates: RateSet,
    pub kernel: LayerKernel,
    pub drift: DriftMatrix,
    schur_t: SchurForm,
}

impl LinearModel {
    pub fn new(
        geom: &ArrayGeometry,
        rates: &RateSet,
        det: &DetuningSpec,
        opts: &KernelOptions,
    ) -> Result<Self> {
        let kernel = interaction_kernel(geom, rates, opts)?;
        let drift = drift_matrix(&kernel, rates, det)?;
        let schur_t = SchurForm::new(&drift.a_matrix.transpose())?;
        Ok(Self {
            geom: geom.clone(),
            rates: rates.clone(),
            kernel,
            drift,
            schur_t,
        })
    }

    pub fn diffusions(&self, spec: &SqueezedVacuumSpec) -> Result<DiffusionSet> {
        noise_diffusions(spec, &self.geom, &self.rates)
    }

    pub fn solve(&self, spec: &SqueezedVacuumSpec, method: SolverMethod) -> Result<SteadyStateMoments> {
        let diff = self.diffusions(spec)?;
        let a = &self.drift.a_matrix;
        let a_conj = a.map(|z| z.conj());
        let a_t = a.transpose();
        let rhs_n = -&diff.s_n;
        let rhs_m = -&diff.s_m;
        let (n_matrix, m_matrix) = match method {
            SolverMethod::Schur => {
                let s = self.drift.schur();
                (
                    solve_sylvester_schur(&s.conj(), &self.schur_t, &rhs_n)?,
                    solve_sylvester_schur(s, &self.schur_t, &rhs_m)?,
                )
            }
            SolverMethod::Kronecker => (
                solve_sylvester_kron(&a_conj, &a_t, &rhs_n)?,
                solve_sylvester_kron(a, &a_t, &rhs_m)?,
            ),
            SolverMethod::Eigenbasis => {
                let e = EigenForm::new(a)?;
                let e_conj = EigenForm {
                    values: e.values.iter().map(|z| z.conj()).collect(),
                    vectors: e.vectors.map(|z| z.conj()),
                    inverse: e.inverse.map(|z| z.conj()),
                };
                let e_t = EigenForm {
                    values: e.values.clone(),
                    vectors: e.inverse.transpose(),
                    inverse: e.vectors.transpose(),
                };
                (
                    solve_sylvester_eigen(&e_conj, &e_t, &rhs_n)?,
                    solve_sylvester_eigen(&e, &e_t, &rhs_m)?,
                )
            }
        };
        let residual_n = sylvester_residual(&a_conj, &a_t, &n_matrix, &rhs_n);
        let residual_m = sylvester_residual(a, &a_t, &m_matrix, &rhs_m);
        let worst = residual_n.max(residual_m);
        if !(worst <= RESIDUAL_LIMIT) {
            return Err(Error::Residual {
                residual: worst,
                limit: RESIDUAL_LIMIT,
            });
        }
        Ok(SteadyStateMoments {
            n_matrix,
            m_matrix,
            residual_n,
            residual_m,
        })
    }

    pub fn xi2(&self, spec: &SqueezedVacuumSpec, method: SolverMethod) -> Result<SqueezingResult> {
        let moments = self.solve(spec, method)?;
        Ok(xi2_numeric(&moments, &self.geom))
    }
}

/// Solves for the stationary moments of one configuration.
pub fn solve_moments(
    geom: &ArrayGeometry,
    rates: &RateSet,
    spec: &SqueezedVacuumSpec,
    det: &DetuningSpec,
    opts: &KernelOptions,
    method: SolverMethod,
) -> Result<SteadyStateMoments> {
    LinearModel::new(geom, rates, det, opts)?.solve(spec, method)
}

/// Squeezing of the collective mode, optimized over the quadrature angle.
pub fn xi2_numeric(moments: &SteadyStateMoments, geom: &ArrayGeometry) -> SqueezingResult {
    let (n_coll, m_coll) = moments.collective(geom);
    SqueezingResult::from_moments(n_coll, m_coll)
        .with("n_coll", n_coll)
        .with("m_coll_re", m_coll.re)
        .with("m_coll_im", m_coll.im)
        .with("residual", moments.residual_n.max(moments.residual_m))
}
