//! Closed-form squeezing of the collective dipole in the beam-splitter picture.
//!
//! The collective mode is fed by the squeezed input with weight `r0` and by
//! vacuum with weight `1 - r0`, giving
//! `xi^2 = 1 + 2 r0 (N - alpha_eff sqrt(N (N + 1)))`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::input::SqueezedVacuumSpec;
use crate::rates::{discrete_overlap, lattice_sum, ArrayGeometry, BeamKind, BeamProfile, RateSet};

/// Detuning of the drive from the cooperatively shifted resonance, `delta - Delta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetuningSpec {
    pub eff_detuning: f64,
}

impl DetuningSpec {
    pub fn new(eff_detuning: f64) -> Self {
        Self { eff_detuning }
    }

    pub fn on_resonance() -> Self {
        Self::default()
    }
}

/// Lambda scheme coupling the optical coherence to a stable level `|s>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevelSpec {
    pub rabi: Complex64,
    /// Two-photon detuning `delta - delta_c`.
    pub two_photon_detuning: f64,
    /// Decay `|e> -> |s>`, added to the non-collective loss.
    pub gamma_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezingResult {
    /// Minimal quadrature variance.
    pub xi2: f64,
    pub theta_opt: f64,
    /// Maximal quadrature variance.
    pub xi2_anti: f64,
    pub aux: BTreeMap<String, f64>,
}

impl SqueezingResult {
    /// Result for normal-ordered collective moments `<P^dag P>` and `<P P>`.
    pub fn from_moments(n_coll: f64, m_coll: Complex64) -> Self {
        let theta_opt = if m_coll.norm() == 0.0 {
            0.0
        } else {
            wrap_pi(0.5 * (PI - m_coll.arg()))
        };
        Self {
            xi2: 1.0 + 2.0 * n_coll - 2.0 * m_coll.norm(),
            theta_opt,
            xi2_anti: 1.0 + 2.0 * n_coll + 2.0 * m_coll.norm(),
            aux: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.aux.insert(key.to_string(), value);
        self
    }

    /// Quadrature variance at angle `theta`.
    pub fn variance_at(&self, theta: f64) -> f64 {
        let mid = 0.5 * (self.xi2 + self.xi2_anti);
        let half = 0.5 * (self.xi2_anti - self.xi2);
        mid - half * (2.0 * (theta - self.theta_opt)).cos()
    }
}

fn wrap_pi(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if (PI - t).abs() < 1e-15 {
        0.0
    } else {
        t
    }
}

/// Beam-splitter transfer with coupling `r0` and complex anomalous coefficient
/// `coeff`, so that `<P^dag P> = r0 N` and `<P P> = -r0 coeff sqrt(N (N + 1))`.
fn beam_splitter(r0: f64, n_photons: f64, coeff: Complex64) -> SqueezingResult {
    let root = (n_photons * (n_photons + 1.0)).sqrt();
    let n_coll = r0 * n_photons;
    let m_coll = -coeff * (r0 * root);
    let mut res = SqueezingResult::from_moments(n_coll, m_coll);
    // Keep the printed form exactly: 1 + 2 r0 (N -+ |coeff| root).
    res.xi2 = 1.0 + 2.0 * r0 * (n_photons - coeff.norm() * root);
    res.xi2_anti = 1.0 + 2.0 * r0 * (n_photons + coeff.norm() * root);
    res
}

/// Array reflectivity `r = r0 / (1 + 2 i (delta - Delta) r0 / Gamma)`.
pub fn reflectivity_complex(rates: &RateSet, det: &DetuningSpec) -> Result<Complex64> {
    if !(rates.gamma_coll > 0.0) {
        return domain("collective rate must be positive");
    }
    let denom = Complex64::new(1.0, 2.0 * det.eff_detuning * rates.r0 / rates.gamma_coll);
    Ok(Complex64::new(rates.r0, 0.0) / denom)
}

fn effective_purity(
    rates: &RateSet,
    spec: &SqueezedVacuumSpec,
    det: &DetuningSpec,
    alpha_override: Option<f64>,
) -> Result<(f64, Complex64)> {
    spec.validate()?;
    let r = reflectivity_complex(rates, det)?;
    let alpha_eff = match alpha_override {
        Some(a) => a,
        None => spec.purity * r.norm() / rates.r0,
    };
    if !(0.0..=1.0).contains(&alpha_eff) {
        return domain(format!("effective purity must lie in [0, 1], got {alpha_eff}"));
    }
    Ok((alpha_eff, r))
}

/// Squeezing of the collective dipole for a squeezed-vacuum drive.
///
/// `alpha_override` replaces `alpha |r| / r0` altogether.
pub fn xi2_analytic(
    rates: &RateSet,
    spec: &SqueezedVacuumSpec,
    det: &DetuningSpec,
    alpha_override: Option<f64>,
) -> Result<SqueezingResult> {
    let (alpha_eff, r) = effective_purity(rates, spec, det, alpha_override)?;
    // <P P> is proportional to conj(r); an override carries no phase.
    let coeff = match alpha_override {
        Some(_) => Complex64::new(alpha_eff, 0.0),
        None => r.conj() * (spec.purity / rates.r0),
    };
    let mut res = beam_splitter(rates.r0, spec.n_photons, coeff);
    res.xi2 = 1.0 + 2.0 * rates.r0 * (spec.n_photons - alpha_eff * spec.max_anomalous());
    res.xi2_anti = 1.0 + 2.0 * rates.r0 * (spec.n_photons + alpha_eff * spec.max_anomalous());
    Ok(res
        .with("r0", rates.r0)
        .with("r_re", r.re)
        .with("r_im", r.im)
        .with("alpha_eff", alpha_eff))
}

/// Optimum over the photon number for fixed `alpha_eff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalSqueezing {
    pub xi2_min: f64,
    /// Infinite when `alpha_eff = 1`.
    pub n_photons_opt: f64,
}

pub fn xi2_min(rates: &RateSet, alpha_eff: f64) -> Result<OptimalSqueezing> {
    if !(0.0..=1.0).contains(&alpha_eff) {
        return domain(format!("effective purity must lie in [0, 1], got {alpha_eff}"));
    }
    let s = (1.0 - alpha_eff * alpha_eff).sqrt();
    let n_photons_opt = if s == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (1.0 / s - 1.0)
    };
    Ok(OptimalSqueezing {
        xi2_min: 1.0 - rates.r0 + rates.r0 * s,
        n_photons_opt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerScanRow {
    pub n_layers: usize,
    pub r0: f64,
    pub xi2_min: f64,
    pub n_photons_opt: f64,
    /// `(gamma_s / Gamma0) / N_z`, the few-layer asymptote.
    pub asymptote_small: f64,
    /// `1 - eta`, the many-layer asymptote.
    pub asymptote_large: f64,
}

/// Optimal squeezing as a function of the layer count, all other rates fixed.
pub fn xi2_min_vs_layers(
    template: &RateSet,
    alpha_eff: f64,
    n_layers_list: &[usize],
) -> Result<Vec<LayerScanRow>> {
    n_layers_list
        .iter()
        .map(|&nz| {
            let rates = template.with_layers(nz)?;
            let opt = xi2_min(&rates, alpha_eff)?;
            Ok(LayerScanRow {
                n_layers: nz,
                r0: rates.r0,
                xi2_min: opt.xi2_min,
                n_photons_opt: opt.n_photons_opt,
                asymptote_small: rates.gamma_s / rates.gamma0 / nz as f64,
                asymptote_large: 1.0 - rates.eta,
            })
        })
        .collect()
}

/// Effective dynamics of the stable-level coherence after eliminating the
/// optical coherence.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeLevelParams {
    pub rho: f64,
    pub gamma_s_coll: f64,
    pub gamma_s_loss: f64,
    pub delta_s: f64,
    /// Rates with `gamma_se` folded into the non-collective loss.
    pub rates: RateSet,
}

pub fn three_level_effective(
    rates: &RateSet,
    det: &DetuningSpec,
    tls: &ThreeLevelSpec,
) -> Result<ThreeLevelParams> {
    if !(tls.gamma_se >= 0.0) {
        return domain(format!("gamma_se must be non-negative, got {}", tls.gamma_se));
    }
    if !(tls.rabi.norm().is_finite()) {
        return domain("Rabi frequency must be finite");
    }
    let aug = rates.with_extra_loss(tls.gamma_se)?;
    let half_width = 0.5 * (aug.gamma_loss + aug.gamma_coll);
    let denom = half_width * half_width + det.eff_detuning * det.eff_detuning;
    if denom == 0.0 {
        return domain("optical coherence has zero width on resonance");
    }
    let rho = tls.rabi.norm_sqr() / denom;
    Ok(ThreeLevelParams {
        rho,
        gamma_s_coll: rho * aug.gamma_coll,
        gamma_s_loss: rho * aug.gamma_loss,
        delta_s: rho * det.eff_detuning,
        rates: aug,
    })
}

/// Squeezing of the stable-level coherence of three-level atoms.
pub fn xi2_three_level(
    rates: &RateSet,
    spec: &SqueezedVacuumSpec,
    det: &DetuningSpec,
    tls: &ThreeLevelSpec,
    alpha_override: Option<f64>,
) -> Result<SqueezingResult> {
    let eff = three_level_effective(rates, det, tls)?;
    let r0 = eff.rates.r0;
    if eff.rho == 0.0 {
        // The stable coherence is decoupled from the light and stays in vacuum.
        return Ok(SqueezingResult::from_moments(0.0, Complex64::new(0.0, 0.0))
            .with("rho", 0.0)
            .with("r0", r0));
    }
    let (alpha_eff, _) = effective_purity(&eff.rates, spec, det, alpha_override)?;
    let factor = if tls.two_photon_detuning == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        let width = Complex64::new(0.5 * (eff.gamma_s_coll + eff.gamma_s_loss), eff.delta_s);
        let ratio = Complex64::new(0.0, tls.two_photon_detuning) / width;
        Complex64::new(1.0, 0.0) / (Complex64::new(1.0, 0.0) - ratio)
    };
    let coeff = factor * alpha_eff;
    let res = beam_splitter(r0, spec.n_photons, coeff);
    Ok(res
        .with("rho", eff.rho)
        .with("gamma_s_coll", eff.gamma_s_coll)
        .with("gamma_s_loss", eff.gamma_s_loss)
        .with("delta_s", eff.delta_s)
        .with("r0", r0)
        .with("alpha_eff", alpha_eff)
        .with("factor_re", factor.re)
        .with("factor_im", factor.im))
}

/// Continuum overlap `int f u d^2r` of two normalized gaussian modes.
fn gaussian_overlap_integral(f: &BeamProfile, u: &BeamProfile) -> f64 {
    let (w1, w2) = (f.waist, u.waist);
    let s = w1 * w1 + w2 * w2;
    let dx = f.center[0] - u.center[0];
    let dy = f.center[1] - u.center[1];
    2.0 * w1 * w2 / s * (-(dx * dx + dy * dy) / s).exp()
}

/// Overlap parameter between the readout mode `f` and the input mode `u`.
pub fn overlap_chi(readout: &BeamProfile, input: &BeamProfile, geom: &ArrayGeometry) -> Result<f64> {
    readout.validate()?;
    input.validate()?;
    geom.validate()?;
    let numerator = match (readout.kind, input.kind) {
        (BeamKind::Gaussian, BeamKind::Gaussian) => {
            gaussian_overlap_integral(readout, input) / geom.lattice_const
        }
    };
    let input_sum = discrete_overlap(geom, input);
    let readout_sum = lattice_sum(geom, |x, y| {
        let f = readout.amplitude(x, y);
        f * f
    });
    let denom = (input_sum * readout_sum).sqrt();
    if !(denom > 0.0) {
        return domain("readout or input mode has no weight on the array");
    }
    Ok(numerator / denom)
}

/// Squeezing seen through a readout mode with overlap `chi` to the input mode.
pub fn xi2_mismatch(
    rates: &RateSet,
    spec: &SqueezedVacuumSpec,
    det: &DetuningSpec,
    chi: f64,
) -> Result<SqueezingResult> {
    if !(0.0..=1.0).contains(&chi) {
        return domain(format!("overlap chi must lie in [0, 1], got {chi}"));
    }
    let (alpha_eff, r) = effective_purity(rates, spec, det, None)?;
    let coupling = rates.r0 * chi * chi;
    let coeff = r.conj() * (spec.purity / rates.r0);
    let mut res = beam_splitter(coupling, spec.n_photons, coeff);
    res.xi2 = 1.0 + 2.0 * coupling * (spec.n_photons - alpha_eff * spec.max_anomalous());
    res.xi2_anti = 1.0 + 2.0 * coupling * (spec.n_photons + alpha_eff * spec.max_anomalous());
    Ok(res.with("chi", chi).with("alpha_eff", alpha_eff).with("r0", rates.r0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const R0_FIG3: f64 = 0.98019801980198019802;

    fn fig3() -> RateSet {
        RateSet::from_parts(1.0, 0.99, 10, 0.1).unwrap()
    }

    fn sv(n: f64, a: f64) -> SqueezedVacuumSpec {
        SqueezedVacuumSpec::new(n, a).unwrap()
    }

    #[test]
    fn reflectivity_cases() {
        let r = fig3();
        let on = reflectivity_complex(&r, &DetuningSpec::on_resonance()).unwrap();
        assert_eq!(on, Complex64::new(r.r0, 0.0));
        let d = r.gamma_coll / (2.0 * r.r0);
        let half = reflectivity_complex(&r, &DetuningSpec::new(d)).unwrap();
        assert!((half - Complex64::new(r.r0, 0.0) / Complex64::new(1.0, 1.0)).norm() < 1e-15);
        assert!((half.norm() - r.r0 / 2f64.sqrt()).abs() < 1e-15);
        let far = reflectivity_complex(&r, &DetuningSpec::new(1e12)).unwrap();
        assert!(far.norm() < 1e-10);
    }

    #[test]
    fn vacuum_gives_coherent_state() {
        let res = xi2_analytic(&fig3(), &SqueezedVacuumSpec::vacuum(), &DetuningSpec::default(), None).unwrap();
        assert_eq!(res.xi2, 1.0);
        assert_eq!(res.xi2_anti, 1.0);
    }

    #[test]
    fn fig3a_single_photon() {
        let res = xi2_analytic(&fig3(), &sv(1.0, 1.0), &DetuningSpec::default(), None).unwrap();
        // 1 - 2 r0 (sqrt 2 - 1) in 30-digit arithmetic.
        assert!((res.xi2 - 0.18797737277353643898).abs() < 1e-14);
        assert_eq!(res.theta_opt, 0.0);
    }

    #[test]
    fn large_photon_asymptote_is_one_minus_r0() {
        let res = xi2_analytic(&fig3(), &sv(1e8, 1.0), &DetuningSpec::default(), None).unwrap();
        assert!((res.xi2 - (1.0 - R0_FIG3)).abs() < 1e-7);
    }

    #[test]
    fn optimum_closed_form() {
        let opt = xi2_min(&fig3(), 0.999).unwrap();
        assert!((opt.xi2_min - 0.063626807954548664413).abs() < 1e-14);
        assert!((opt.n_photons_opt - 10.683136021064610855).abs() < 1e-11);
        let at = xi2_analytic(&fig3(), &sv(opt.n_photons_opt, 1.0), &DetuningSpec::default(), Some(0.999)).unwrap();
        assert!((at.xi2 - opt.xi2_min).abs() < 1e-10);
        let none = xi2_min(&fig3(), 0.0).unwrap();
        assert_eq!((none.xi2_min, none.n_photons_opt), (1.0, 0.0));
        let pure = xi2_min(&fig3(), 1.0).unwrap();
        assert!(pure.n_photons_opt.is_infinite());
        assert!((pure.xi2_min - (1.0 - R0_FIG3)).abs() < 1e-15);
    }

    #[test]
    fn optimum_matches_golden_section() {
        let rates = fig3();
        for alpha in [0.5, 0.9, 0.999, 0.99999] {
            let f = |ln_n: f64| {
                xi2_analytic(&rates, &sv(ln_n.exp(), 1.0), &DetuningSpec::default(), Some(alpha))
                    .unwrap()
                    .xi2
            };
            let (mut lo, mut hi) = (-20.0f64, 20.0f64);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            while hi - lo > 1e-10 {
                let x1 = hi - g * (hi - lo);
                let x2 = lo + g * (hi - lo);
                if f(x1) < f(x2) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            let opt = xi2_min(&rates, alpha).unwrap();
            assert!((f(0.5 * (lo + hi)) - opt.xi2_min).abs() < 1e-10);
            assert!(((0.5 * (lo + hi)).exp() / opt.n_photons_opt - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn layer_scan_limits() {
        let rows = xi2_min_vs_layers(&fig3(), 0.9999, &[1, 10, 10_000]).unwrap();
        assert!((rows[0].asymptote_small - 0.1).abs() < 1e-15);
        assert!((rows[2].asymptote_large - 0.01).abs() < 1e-12);
        assert!((rows[2].xi2_min - 0.024).abs() < 5e-4);
        let perfect = RateSet::from_parts(1.0, 1.0, 1, 0.0).unwrap();
        for row in xi2_min_vs_layers(&perfect, 0.8, &[1, 3, 50]).unwrap() {
            assert!((row.xi2_min - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn three_level_reductions() {
        let rates = fig3();
        let half = 0.5 * (rates.gamma_coll + rates.gamma_loss);
        let on = DetuningSpec::default();
        let p = three_level_effective(&rates, &on, &ThreeLevelSpec { rabi: Complex64::new(half, 0.0), two_photon_detuning: 0.0, gamma_se: 0.0 }).unwrap();
        assert!((p.rho - 1.0).abs() < 1e-15);
        assert!((p.gamma_s_coll - rates.gamma_coll).abs() < 1e-12);
        let p = three_level_effective(&rates, &DetuningSpec::new(half), &ThreeLevelSpec { rabi: Complex64::new(0.0, half), two_photon_detuning: 0.0, gamma_se: 0.0 }).unwrap();
        assert!((p.rho - 0.5).abs() < 1e-15);
        let off = ThreeLevelSpec { rabi: Complex64::new(0.0, 0.0), two_photon_detuning: 0.3, gamma_se: 0.0 };
        let p = three_level_effective(&rates, &on, &off).unwrap();
        assert_eq!((p.rho, p.gamma_s_coll, p.gamma_s_loss, p.delta_s), (0.0, 0.0, 0.0, 0.0));
        let res = xi2_three_level(&rates, &sv(3.0, 1.0), &on, &off, None).unwrap();
        assert_eq!(res.xi2, 1.0);
    }

    #[test]
    fn three_level_on_two_photon_resonance_is_beam_splitter() {
        let rates = fig3();
        let tls = ThreeLevelSpec { rabi: Complex64::new(0.7, 0.2), two_photon_detuning: 0.0, gamma_se: 0.1 };
        let det = DetuningSpec::new(0.4);
        let a = xi2_three_level(&rates, &sv(2.0, 0.97), &det, &tls, None).unwrap();
        let b = xi2_analytic(&rates.with_extra_loss(0.1).unwrap(), &sv(2.0, 0.97), &det, None).unwrap();
        assert_eq!(a.xi2, b.xi2);
        assert!(rates.with_extra_loss(0.1).unwrap().r0 < rates.r0);
    }

    #[test]
    fn three_level_two_photon_detuning_reduces_squeezing() {
        let rates = fig3();
        let tls = |d2| ThreeLevelSpec { rabi: Complex64::new(1.0, 0.0), two_photon_detuning: d2, gamma_se: 0.0 };
        let on = DetuningSpec::default();
        let x0 = xi2_three_level(&rates, &sv(1.0, 1.0), &on, &tls(0.0), None).unwrap();
        let x1 = xi2_three_level(&rates, &sv(1.0, 1.0), &on, &tls(0.05), None).unwrap();
        assert!(x1.xi2 > x0.xi2);
        assert!(x1.theta_opt != 0.0);
        assert!(x1.xi2 * x1.xi2_anti >= 1.0 - 1e-9);
    }

    #[test]
    fn chi_identical_modes() {
        let geom = ArrayGeometry::new(101, 0.5, 1, 1.0).unwrap();
        let beam = BeamProfile::gaussian(5.0).unwrap();
        let chi = overlap_chi(&beam, &beam, &geom).unwrap();
        assert!((chi - 1.0).abs() < 1e-9, "{chi}");
    }

    #[test]
    fn chi_width_and_offset_mismatch() {
        let geom = ArrayGeometry::new(161, 0.5, 1, 1.0).unwrap();
        let u = BeamProfile::gaussian(4.0).unwrap();
        let f = BeamProfile::gaussian(8.0).unwrap();
        assert!((overlap_chi(&f, &u, &geom).unwrap() - 0.8).abs() < 1e-6);
        let shifted = BeamProfile::gaussian(4.0).unwrap().offset(4.0, 0.0);
        assert!((overlap_chi(&shifted, &u, &geom).unwrap() - (-0.5f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn closed_form_overlap_matches_quadrature() {
        let f = BeamProfile::gaussian(1.3).unwrap().offset(0.4, -0.7);
        let u = BeamProfile::gaussian(2.1).unwrap();
        // Composite Simpson over a box much larger than both modes.
        let (lo, hi, n) = (-15.0, 15.0, 600);
        let h = (hi - lo) / n as f64;
        let w = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            for j in 0..=n {
                let y = lo + j as f64 * h;
                total += w(i) * w(j) * f.amplitude(x, y) * u.amplitude(x, y);
            }
        }
        total *= h * h / 9.0;
        assert!((total - gaussian_overlap_integral(&f, &u)).abs() < 1e-10);
    }

    #[test]
    fn mismatch_limits() {
        let rates = fig3();
        let det = DetuningSpec::default();
        let spec = sv(1.0, 1.0);
        let full = xi2_mismatch(&rates, &spec, &det, 1.0).unwrap();
        assert_eq!(full.xi2, xi2_analytic(&rates, &spec, &det, None).unwrap().xi2);
        assert_eq!(xi2_mismatch(&rates, &spec, &det, 0.0).unwrap().xi2, 1.0);
        let partial = xi2_mismatch(&rates, &spec, &det, 0.8).unwrap();
        assert!((partial.xi2 - 0.48030551857506332095).abs() < 1e-13);
        assert!(xi2_mismatch(&rates, &spec, &det, 1.2).is_err());
    }

    #[test]
    fn detuning_acts_through_alpha_eff() {
        let rates = fig3();
        let c = 0.8;
        // |r|/r0 = c  <=>  2 (delta - Delta) r0 / Gamma = sqrt(1/c^2 - 1)
        let det = DetuningSpec::new((1.0 / (c * c) - 1.0f64).sqrt() * rates.gamma_coll / (2.0 * rates.r0));
        let spec = sv(2.5, 0.95);
        let a = xi2_analytic(&rates, &spec, &det, None).unwrap();
        let b = xi2_analytic(&rates, &spec, &DetuningSpec::default(), Some(0.95 * c)).unwrap();
        assert!((a.xi2 - b.xi2).abs() < 1e-14);
        assert!((a.aux["alpha_eff"] - 0.95 * c).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn bounded_below_by_leakage(
            eta in 0.05f64..=1.0, nz in 1usize..200, gs in 0.0f64..2.0,
            n in 0.0f64..1e4, alpha in 0.0f64..=1.0, det in -5.0f64..5.0,
        ) {
            let rates = RateSet::from_parts(1.0, eta, nz, gs).unwrap();
            let res = xi2_analytic(&rates, &sv(n, alpha), &DetuningSpec::new(det), None).unwrap();
            prop_assert!(res.xi2 >= 1.0 - rates.r0 - 1e-9);
            prop_assert!(res.xi2 <= res.xi2_anti);
            prop_assert!(res.xi2 * res.xi2_anti >= 1.0 - 1e-9);
        }

        #[test]
        fn optimum_monotone(r_lo in 0.01f64..0.98, bump in 0.001f64..0.02, alpha in 0.0f64..0.9999) {
            // r0 rises with layers; compare two layer counts on a fixed template.
            let lo = RateSet::from_parts(1.0, 1.0, 1, (1.0 - r_lo) / r_lo).unwrap();
            let hi = RateSet::from_parts(1.0, 1.0, 1, (1.0 - r_lo - bump) / (r_lo + bump)).unwrap();
            prop_assert!(xi2_min(&hi, alpha).unwrap().xi2_min <= xi2_min(&lo, alpha).unwrap().xi2_min + 1e-15);
            let less_pure = (alpha * 0.9).max(0.0);
            prop_assert!(xi2_min(&lo, less_pure).unwrap().xi2_min >= xi2_min(&lo, alpha).unwrap().xi2_min - 1e-15);
        }

        #[test]
        fn three_level_reduces_exactly(
            eta in 0.1f64..=1.0, nz in 1usize..50, gs in 0.0f64..1.0, gse in 0.0f64..0.5,
            n in 0.0f64..100.0, alpha in 0.0f64..=1.0, det in -3.0f64..3.0,
            om_re in 0.01f64..3.0, om_im in -3.0f64..3.0,
        ) {
            let rates = RateSet::from_parts(0.8, eta, nz, gs).unwrap();
            let tls = ThreeLevelSpec { rabi: Complex64::new(om_re, om_im), two_photon_detuning: 0.0, gamma_se: gse };
            let d = DetuningSpec::new(det);
            let a = xi2_three_level(&rates, &sv(n, alpha), &d, &tls, None).unwrap();
            let b = xi2_analytic(&rates.with_extra_loss(gse).unwrap(), &sv(n, alpha), &d, None).unwrap();
            prop_assert!((a.xi2 - b.xi2).abs() <= 1e-12 * b.xi2.abs());
        }
    }
}
