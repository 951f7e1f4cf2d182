//! Phase-space Monte Carlo for the stationary collective squeezing.
//!
//! The c-number dipoles obey `dp = A p dt + dW` with symmetrically ordered
//! noise, so time averages of `|c|^2` and `c^2` for the collective amplitude `c`
//! give the quadrature variances directly.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analytic::SqueezingResult;
use crate::error::{domain, Error, Result};
use crate::input::DiffusionSet;
use crate::kernel::DriftMatrix;
use crate::linalg::{expm, psd_sqrt, CMatrix};
use crate::rates::ArrayGeometry;

/// Largest `dt * ||A||_inf` accepted by the explicit integrator.
pub const EM_STABILITY_MARGIN: f64 = 0.1;
/// Most negative eigenvalue tolerated in the stacked noise covariance.
pub const PSD_TOLERANCE: f64 = 1e-8;
const DIVERGENCE_CHECK: usize = 1024;
const DIVERGENCE_LIMIT: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    EulerMaruyama,
    /// Exact transition of the linear process over one step.
    ExactOu,
}

/// Times are in the units of the rates in the drift matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams {
    pub dt: f64,
    pub t_burn: f64,
    pub t_avg: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub integrator: Integrator,
    /// Each trajectory's averaging window is cut into this many batches.
    pub batches_per_traj: usize,
}

impl McParams {
    pub fn new(dt: f64, t_burn: f64, t_avg: f64, n_traj: usize, seed: u64) -> Self {
        Self {
            dt,
            t_burn,
            t_avg,
            n_traj,
            seed,
            integrator: Integrator::EulerMaruyama,
            batches_per_traj: 4,
        }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    /// Burn-in of `relax` e-folds of the slowest mode, averaging window of
    /// `samples` correlation times of the fastest mode, and `dt` a fraction
    /// `dt_frac` of the fastest time scale.
    pub fn for_drift(
        drift: &DriftMatrix,
        integrator: Integrator,
        dt_frac: f64,
        relax: f64,
        samples: f64,
        n_traj: usize,
        seed: u64,
    ) -> Self {
        let eig = drift.eigenvalues();
        let slow = eig.iter().map(|z| -z.re).fold(f64::INFINITY, f64::min);
        let fast = inf_norm(&drift.a_matrix);
        let mut p = Self::new(
            dt_frac / fast,
            relax / slow,
            samples / fast / n_traj as f64,
            n_traj,
            seed,
        );
        p.integrator = integrator;
        p
    }

    pub fn validate(&self, drift: &DriftMatrix) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return domain(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.t_burn >= 0.0 && self.t_avg > 0.0) {
            return domain("burn-in must be non-negative and the averaging time positive");
        }
        if self.n_traj == 0 || self.batches_per_traj == 0 {
            return domain("need at least one trajectory and one batch");
        }
        if self.n_traj * self.batches_per_traj < 2 {
            return domain("a standard error needs at least two batches");
        }
        if self.integrator == Integrator::EulerMaruyama {
            let margin = self.dt * inf_norm(&drift.a_matrix);
            if !(margin < EM_STABILITY_MARGIN) {
                return domain(format!(
                    "dt * ||A|| = {margin} exceeds the explicit-integrator margin {EM_STABILITY_MARGIN}"
                ));
            }
        }
        if self.avg_steps() < self.batches_per_traj {
            return domain("averaging window is shorter than one step per batch");
        }
        Ok(())
    }

    fn burn_steps(&self) -> usize {
        (self.t_burn / self.dt).ceil() as usize
    }

    fn avg_steps(&self) -> usize {
        (self.t_avg / self.dt).ceil() as usize
    }
}

fn inf_norm(a: &CMatrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Real covariance of `(Re w, Im w)` for a complex Gaussian `w` with
/// `<w w^dag> = sigma` and `<w w^T> = pseudo`.
pub fn stacked_covariance(sigma: &CMatrix, pseudo: &CMatrix) -> DMatrix<f64> {
    let n = sigma.nrows();
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (s, r) = (sigma[(i, j)], pseudo[(i, j)]);
            c[(i, j)] = 0.5 * (s.re + r.re);
            c[(n + i, n + j)] = 0.5 * (s.re - r.re);
            c[(i, n + j)] = 0.5 * (r.im - s.im);
            c[(n + i, j)] = 0.5 * (r.im + s.im);
        }
    }
    c
}

/// Draws correlated complex Gaussian vectors from a factorized stacked covariance.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    n: usize,
    /// Row-major `2n x 2n` square root.
    root: Vec<f64>,
    pub min_eigenvalue: f64,
}

impl NoiseSampler {
    pub fn new(sigma: &CMatrix, pseudo: &CMatrix) -> Result<Self> {
        let n = sigma.nrows();
        if sigma.shape() != pseudo.shape() || sigma.ncols() != n {
            return domain("noise matrices must be square and of equal size");
        }
        let stacked = stacked_covariance(sigma, pseudo);
        let clamp = 1e-12 * sigma.norm();
        let (root, min_eigenvalue) = psd_sqrt(&stacked, clamp);
        if min_eigenvalue < -PSD_TOLERANCE {
            return Err(Error::NotPsd {
                min_eig: min_eigenvalue,
            });
        }
        let root = (0..2 * n)
            .flat_map(|i| (0..2 * n).map(move |j| (i, j)))
            .map(|(i, j)| root[(i, j)])
            .collect();
        Ok(Self {
            n,
            root,
            min_eigenvalue,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Writes one sample scaled by `scale` into `out`, using `gauss` as scratch.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, scale: f64, gauss: &mut [f64], out: &mut [Complex64]) {
        let n2 = 2 * self.n;
        for g in gauss.iter_mut() {
            *g = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row_re = &self.root[i * n2..(i + 1) * n2];
            let row_im = &self.root[(self.n + i) * n2..(self.n + i + 1) * n2];
            let re: f64 = row_re.iter().zip(gauss.iter()).map(|(a, b)| a * b).sum();
            let im: f64 = row_im.iter().zip(gauss.iter()).map(|(a, b)| a * b).sum();
            *o = Complex64::new(re * scale, im * scale);
        }
    }
}

/// One-step map `p -> G p + w`.
#[derive(Debug, Clone)]
struct Propagator {
    n: usize,
    /// Row-major `n x n`.
    gain: Vec<Complex64>,
    noise: NoiseSampler,
    noise_scale: f64,
}

impl Propagator {
    fn new(drift: &DriftMatrix, diff: &DiffusionSet, params: &McParams) -> Result<Self> {
        let a = &drift.a_matrix;
        let n = a.nrows();
        let sigma = diff.symmetric();
        let (gain, noise, noise_scale) = match params.integrator {
            Integrator::EulerMaruyama => {
                let g = CMatrix::identity(n, n) + a.scale(params.dt);
                (g, NoiseSampler::new(&sigma, &diff.s_m)?, params.dt.sqrt())
            }
            Integrator::ExactOu => {
                let g = expm(&a.scale(params.dt));
                let s_dt = van_loan(a, &a.adjoint(), &sigma, params.dt, &g);
                let r_dt = van_loan(a, &a.transpose(), &diff.s_m, params.dt, &g);
                let s_dt = (&s_dt + s_dt.adjoint()).scale(0.5);
                let r_dt = (&r_dt + r_dt.transpose()).scale(0.5);
                (g, NoiseSampler::new(&s_dt, &r_dt)?, 1.0)
            }
        };
        let gain = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| gain[(i, j)])
            .collect();
        Ok(Self {
            n,
            gain,
            noise,
            noise_scale,
        })
    }

    fn step<R: Rng>(&self, rng: &mut R, x: &mut [Complex64], tmp: &mut [Complex64], gauss: &mut [f64], w: &mut [Complex64]) {
        self.noise.sample_into(rng, self.noise_scale, gauss, w);
        for i in 0..self.n {
            let row = &self.gain[i * self.n..(i + 1) * self.n];
            let mut acc = w[i];
            for (g, xj) in row.iter().zip(x.iter()) {
                acc += g * xj;
            }
            tmp[i] = acc;
        }
        x.copy_from_slice(tmp);
    }
}

/// `int_0^dt exp(A s) q exp(B s) ds` from the exponential of `[[-A, q], [0, B]] dt`.
fn van_loan(a: &CMatrix, b: &CMatrix, q: &CMatrix, dt: f64, exp_a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut block = CMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(q);
    block.view_mut((n, n), (n, n)).copy_from(b);
    let f = expm(&block.scale(dt));
    exp_a * f.view((0, n), (n, n))
}

#[derive(Debug, Clone, Copy, Default)]
struct Batch {
    abs2: f64,
    sq: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub xi2: f64,
    pub std_error: f64,
    pub xi2_anti: f64,
    pub theta_opt: f64,
    /// Symmetrically ordered `<|c|^2>`.
    pub sym_abs2: f64,
    pub sym_sq: Complex64,
    pub n_batches: usize,
    pub steps_per_traj: usize,
}

impl McEstimate {
    pub fn as_result(&self) -> SqueezingResult {
        SqueezingResult {
            xi2: self.xi2,
            theta_opt: self.theta_opt,
            xi2_anti: self.xi2_anti,
            aux: Default::default(),
        }
        .with("std_error", self.std_error)
    }
}

fn xi2_of(abs2: f64, sq: Complex64) -> f64 {
    2.0 * abs2 - 2.0 * sq.norm()
}

fn run_trajectory(
    prop: &Propagator,
    weights: &[Complex64],
    params: &McParams,
    traj: usize,
) -> Result<Vec<Batch>> {
    let n = prop.n;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(traj as u64);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut tmp = x.clone();
    let mut w = x.clone();
    let mut gauss = vec![0.0; 2 * n];
    let check = |x: &[Complex64], step: usize| -> Result<()> {
        let norm: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        if !(norm < DIVERGENCE_LIMIT) {
            return Err(Error::Diverged { traj, step });
        }
        Ok(())
    };
    let burn = params.burn_steps();
    for step in 0..burn {
        prop.step(&mut rng, &mut x, &mut tmp, &mut gauss, &mut w);
        if step % DIVERGENCE_CHECK == 0 {
            check(&x, step)?;
        }
    }
    let total = params.avg_steps();
    let nb = params.batches_per_traj;
    let mut batches = Vec::with_capacity(nb);
    for b in 0..nb {
        let (lo, hi) = (b * total / nb, (b + 1) * total / nb);
        let mut acc = Batch::default();
        for step in lo..hi {
            prop.step(&mut rng, &mut x, &mut tmp, &mut gauss, &mut w);
            if step % DIVERGENCE_CHECK == 0 {
                check(&x, burn + step)?;
            }
            let c: Complex64 = weights.iter().zip(x.iter()).map(|(u, p)| u * p).sum();
            acc.abs2 += c.norm_sqr();
            acc.sq += c * c;
        }
        let len = (hi - lo) as f64;
        acc.abs2 /= len;
        acc.sq /= len;
        batches.push(acc);
    }
    check(&x, burn + total)?;
    Ok(batches)
}

/// Estimates the collective squeezing and its standard error (jackknife over batches).
pub fn simulate_xi2(
    drift: &DriftMatrix,
    diff: &DiffusionSet,
    geom: &ArrayGeometry,
    params: &McParams,
) -> Result<McEstimate> {
    params.validate(drift)?;
    let n = drift.dim();
    if diff.dim() != n {
        return domain(format!("noise has dimension {} but the drift {}", diff.dim(), n));
    }
    let prop = Propagator::new(drift, diff, params)?;
    let ka = geom.layer_phase();
    let norm = 1.0 / (n as f64).sqrt();
    let weights: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(norm, ka * k as f64)).collect();

    let per_traj: Vec<Vec<Batch>> = (0..params.n_traj)
        .into_par_iter()
        .map(|t| run_trajectory(&prop, &weights, params, t))
        .collect::<Result<_>>()?;
    let batches: Vec<Batch> = per_traj.into_iter().flatten().collect();

    let nb = batches.len() as f64;
    let sum_abs2: f64 = batches.iter().map(|b| b.abs2).sum();
    let sum_sq: Complex64 = batches.iter().map(|b| b.sq).sum();
    let abs2 = sum_abs2 / nb;
    let sq = sum_sq / nb;
    let xi2 = xi2_of(abs2, sq);

    let loo: Vec<f64> = batches
        .iter()
        .map(|b| xi2_of((sum_abs2 - b.abs2) / (nb - 1.0), (sum_sq - b.sq) / (nb - 1.0)))
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nb;
    let var = (nb - 1.0) / nb * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>();

    let theta_opt = SqueezingResult::from_moments(0.0, sq).theta_opt;
    Ok(McEstimate {
        xi2,
        std_error: var.sqrt(),
        xi2_anti: 2.0 * abs2 + 2.0 * sq.norm(),
        theta_opt,
        sym_abs2: abs2,
        sym_sq: sq,
        n_batches: batches.len(),
        steps_per_traj: params.burn_steps() + params.avg_steps(),
    })
}
