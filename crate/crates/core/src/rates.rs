//! Array geometry, beam profile, and the derived collective rates.
//!
//! Lengths are measured in units of the carrier wavelength and rates in units
//! of the single-atom decay rate.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, Result};
use crate::special::erf;

/// Multilayer square-lattice array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// Atoms per side of each square layer.
    pub n_side: usize,
    /// In-plane lattice constant `a / lambda`.
    pub lattice_const: f64,
    pub n_layers: usize,
    /// Interlayer spacing `a_z / lambda`.
    pub layer_spacing: f64,
    /// In-plane unit dipole orientation.
    pub dipole_orientation: [f64; 2],
}

impl ArrayGeometry {
    /// Geometry with the dipole along the x lattice axis.
    pub fn new(n_side: usize, lattice_const: f64, n_layers: usize, layer_spacing: f64) -> Result<Self> {
        let g = Self {
            n_side,
            lattice_const,
            n_layers,
            layer_spacing,
            dipole_orientation: [1.0, 0.0],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_dipole(mut self, d: [f64; 2]) -> Result<Self> {
        self.dipole_orientation = d;
        self.validate()?;
        Ok(self)
    }

    pub fn with_layers(&self, n_layers: usize) -> Result<Self> {
        let mut g = self.clone();
        g.n_layers = n_layers;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_side == 0 {
            return domain("n_side must be at least 1");
        }
        if self.n_layers == 0 {
            return domain("n_layers must be at least 1");
        }
        if !(self.lattice_const > 0.0 && self.lattice_const.is_finite()) {
            return domain(format!("lattice constant must be positive, got {}", self.lattice_const));
        }
        if !(self.layer_spacing > 0.0 && self.layer_spacing.is_finite()) {
            return domain(format!("layer spacing must be positive, got {}", self.layer_spacing));
        }
        if self.lattice_const >= 1.0 {
            return domain(format!(
                "lattice constant a/lambda = {} is not subwavelength",
                self.lattice_const
            ));
        }
        let [dx, dy] = self.dipole_orientation;
        if ((dx * dx + dy * dy).sqrt() - 1.0).abs() > 1e-12 {
            return domain("dipole orientation must be a unit vector");
        }
        Ok(())
    }

    /// `k a_z`, the propagation phase between neighbouring layers.
    pub fn layer_phase(&self) -> f64 {
        2.0 * PI * self.layer_spacing
    }

    /// Cooperative emission rate of an infinite layer, `(3/4pi)(lambda/a)^2`.
    pub fn gamma0(&self) -> f64 {
        3.0 / (4.0 * PI) / (self.lattice_const * self.lattice_const)
    }

    /// Side length `N a` of a layer.
    pub fn layer_width(&self) -> f64 {
        self.n_side as f64 * self.lattice_const
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamKind {
    Gaussian,
}

/// Normalized transverse mode `u(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamProfile {
    pub waist: f64,
    /// Offset of the beam axis from the array's geometric center.
    pub center: [f64; 2],
    pub kind: BeamKind,
}

impl BeamProfile {
    pub fn gaussian(waist: f64) -> Result<Self> {
        let b = Self {
            waist,
            center: [0.0, 0.0],
            kind: BeamKind::Gaussian,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn offset(mut self, dx: f64, dy: f64) -> Self {
        self.center = [dx, dy];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.waist > 0.0 && self.waist.is_finite()) {
            return domain(format!("beam waist must be positive, got {}", self.waist));
        }
        Ok(())
    }

    /// Mode amplitude at a point measured from the array center.
    pub fn amplitude(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            BeamKind::Gaussian => {
                let w2 = self.waist * self.waist;
                let dx = x - self.center[0];
                let dy = y - self.center[1];
                (2.0 / (PI * w2)).sqrt() * (-(dx * dx + dy * dy) / w2).exp()
            }
        }
    }

    /// Rayleigh range `pi w^2 / lambda`.
    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist
    }
}

/// Rates derived from the geometry and the beam-array overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    pub gamma0: f64,
    pub eta: f64,
    pub n_layers: usize,
    pub gamma_coll: f64,
    pub gamma_loss: f64,
    pub gamma_s: f64,
    pub r0: f64,
}

impl RateSet {
    /// Assembles the rate set from its independent parameters.
    pub fn from_parts(gamma0: f64, eta: f64, n_layers: usize, gamma_s: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return domain(format!("gamma0 must be positive, got {gamma0}"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return domain(format!("overlap eta must lie in (0, 1], got {eta}"));
        }
        if n_layers == 0 {
            return domain("n_layers must be at least 1");
        }
        if !(gamma_s >= 0.0 && gamma_s.is_finite()) {
            return domain(format!("gamma_s must be non-negative, got {gamma_s}"));
        }
        let nz = n_layers as f64;
        let gamma_coll = eta * nz * gamma0;
        let gamma_loss = (1.0 - eta) * gamma0 * nz + gamma_s;
        Ok(Self {
            gamma0,
            eta,
            n_layers,
            gamma_coll,
            gamma_loss,
            gamma_s,
            r0: gamma_coll / (gamma_coll + gamma_loss),
        })
    }

    pub fn with_layers(&self, n_layers: usize) -> Result<Self> {
        Self::from_parts(self.gamma0, self.eta, n_layers, self.gamma_s)
    }

    /// Adds a further non-collective decay channel (e.g. `|e> -> |s>`).
    pub fn with_extra_loss(&self, extra: f64) -> Result<Self> {
        if !(extra >= 0.0) {
            return domain(format!("extra loss must be non-negative, got {extra}"));
        }
        Self::from_parts(self.gamma0, self.eta, self.n_layers, self.gamma_s + extra)
    }

    pub fn total_width(&self) -> f64 {
        self.gamma_coll + self.gamma_loss
    }
}

/// Continuum overlap of the beam intensity with the array footprint.
///
/// For a centered beam this is `erf^2(N a / (sqrt(2) w))`.
pub fn continuum_overlap(geom: &ArrayGeometry, beam: &BeamProfile) -> f64 {
    let half = 0.5 * geom.layer_width();
    let s = SQRT_2 / beam.waist;
    let axis = |c: f64| 0.5 * (erf(s * (half - c)) + erf(s * (half + c)));
    axis(beam.center[0]) * axis(beam.center[1])
}

pub fn compute_rates(geom: &ArrayGeometry, beam: &BeamProfile, gamma_s: f64) -> Result<RateSet> {
    geom.validate()?;
    beam.validate()?;
    RateSet::from_parts(geom.gamma0(), continuum_overlap(geom, beam), geom.n_layers, gamma_s)
}

/// Lattice coordinate of site `i` along one axis, measured from the array center.
pub(crate) fn site_coordinate(geom: &ArrayGeometry, i: usize) -> f64 {
    (i as f64 - 0.5 * (geom.n_side as f64 - 1.0)) * geom.lattice_const
}

/// `sum_n f(r_n)` over the sites of one layer.
pub(crate) fn lattice_sum(geom: &ArrayGeometry, f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut total = 0.0;
    for ix in 0..geom.n_side {
        let x = site_coordinate(geom, ix);
        let mut row = 0.0;
        for iy in 0..geom.n_side {
            row += f(x, site_coordinate(geom, iy));
        }
        total += row;
    }
    total
}

/// Discrete overlap `a^2 sum_n u^2(r_n)` of the beam with one layer.
pub fn discrete_overlap(geom: &ArrayGeometry, beam: &BeamProfile) -> f64 {
    let a2 = geom.lattice_const * geom.lattice_const;
    a2 * lattice_sum(geom, |x, y| {
        let u = beam.amplitude(x, y);
        u * u
    })
}

/// Regime diagnostics for the one-dimensional beam-splitter description.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub layer_size_ok: bool,
    /// `N a / lambda`.
    pub layer_size_margin: f64,
    pub rayleigh_ok: bool,
    /// `(N_z - 1) a_z / z_R`.
    pub rayleigh_margin: f64,
    pub phase_match_ok: bool,
    pub evanescent_ok: bool,
    pub linearization_ok: bool,
    pub n_eff: f64,
    pub heisenberg_floor: f64,
}

impl ValidityReport {
    pub fn all_ok(&self) -> bool {
        self.layer_size_ok
            && self.rayleigh_ok
            && self.phase_match_ok
            && self.evanescent_ok
            && self.linearization_ok
    }
}

/// Advisory only: violated conditions are reported, never raised.
pub fn validity_report(
    geom: &ArrayGeometry,
    beam: &BeamProfile,
    n_photons: f64,
    rates: &RateSet,
) -> ValidityReport {
    let layer_size_margin = geom.layer_width();
    let rayleigh_margin =
        (geom.n_layers as f64 - 1.0) * geom.layer_spacing / beam.rayleigh_range();
    let w_over_a = beam.waist / geom.lattice_const;
    let n_eff = rates.eta * 2.0 * PI * w_over_a * w_over_a * geom.n_layers as f64;
    let n = geom.n_side as f64;
    ValidityReport {
        layer_size_ok: layer_size_margin > 1.0,
        layer_size_margin,
        rayleigh_ok: rayleigh_margin < 1.0,
        rayleigh_margin,
        phase_match_ok: (geom.layer_spacing - geom.layer_spacing.round()).abs() <= 1e-9
            && geom.layer_spacing.round() >= 1.0,
        evanescent_ok: geom.layer_spacing >= geom.lattice_const,
        linearization_ok: n_photons < n_eff,
        n_eff,
        heisenberg_floor: 1.0 / (n * n * geom.n_layers as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3_rates(n_layers: usize) -> RateSet {
        RateSet::from_parts(1.0, 0.99, n_layers, 0.1).unwrap()
    }

    #[test]
    fn gamma0_at_fig3_lattice() {
        let g = ArrayGeometry::new(20, 0.68, 10, 1.0).unwrap();
        // (3/4pi)/0.68^2 to 20 digits.
        assert!((g.gamma0() - 0.51628982404377812209).abs() < 1e-14);
    }

    #[test]
    fn eta_from_erf() {
        let geom = ArrayGeometry::new(100, 0.5, 1, 1.0).unwrap();
        // N a / (sqrt 2 w) = 2
        let w = geom.layer_width() / (2.0 * SQRT_2);
        let beam = BeamProfile::gaussian(w).unwrap();
        let rates = compute_rates(&geom, &beam, 0.0).unwrap();
        assert!((rates.eta - 0.99066641124245838159).abs() < 1e-13);
    }

    #[test]
    fn fig3_reflectivity() {
        let r = fig3_rates(10);
        assert!((r.r0 - 9.9 / 10.1).abs() < 1e-15);
        assert_eq!(r.gamma_coll, 0.99 * 10.0);
    }

    #[test]
    fn lossless_limit_is_perfect_mirror() {
        let r = RateSet::from_parts(0.7, 1.0, 3, 0.0).unwrap();
        assert_eq!(r.r0, 1.0);
    }

    #[test]
    fn r0_grows_with_layers_toward_eta() {
        let mut prev = 0.0;
        for nz in [1, 2, 5, 10, 100, 1000] {
            let r = fig3_rates(nz);
            assert!(r.r0 > prev);
            assert!(r.r0 <= r.eta);
            prev = r.r0;
        }
        assert!((fig3_rates(10_000).r0 - 0.99).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ArrayGeometry::new(10, 1.0, 1, 1.0).is_err());
        assert!(ArrayGeometry::new(10, 1.2, 1, 1.0).is_err());
        assert!(ArrayGeometry::new(10, -0.5, 1, 1.0).is_err());
        assert!(ArrayGeometry::new(10, 0.5, 1, 0.0).is_err());
        assert!(ArrayGeometry::new(0, 0.5, 1, 1.0).is_err());
        assert!(ArrayGeometry::new(10, 0.5, 0, 1.0).is_err());
        let g = ArrayGeometry::new(10, 0.5, 1, 1.0).unwrap();
        assert!(g.clone().with_dipole([0.6, 0.8]).is_ok());
        assert!(g.with_dipole([1.0, 1.0]).is_err());
        assert!(BeamProfile::gaussian(0.0).is_err());
    }

    #[test]
    fn single_site_overlap() {
        let geom = ArrayGeometry::new(1, 0.6, 1, 1.0).unwrap();
        for w in [0.3, 1.0, 7.0] {
            let beam = BeamProfile::gaussian(w).unwrap();
            let expect = 2.0 * 0.36 / (PI * w * w);
            assert!((discrete_overlap(&geom, &beam) - expect).abs() < 1e-15 * expect.max(1.0));
        }
    }

    #[test]
    fn narrow_beam_overlap_dominated_by_center_site() {
        let geom = ArrayGeometry::new(11, 0.6, 1, 1.0).unwrap();
        let w = 0.05;
        let beam = BeamProfile::gaussian(w).unwrap();
        let center = 2.0 * 0.36 / (PI * w * w);
        assert!((discrete_overlap(&geom, &beam) / center - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_overlap_converges_to_erf_squared() {
        // w/a = 20, N = 200 gives N a / (sqrt2 w) = 7.07
        let geom = ArrayGeometry::new(200, 0.5, 1, 1.0).unwrap();
        let beam = BeamProfile::gaussian(20.0 * 0.5).unwrap();
        let d = discrete_overlap(&geom, &beam);
        let c = continuum_overlap(&geom, &beam);
        assert!((d - c).abs() < 1e-3);
        // Fixed N a / w = 3 with growing w/a.
        for wa in [20.0, 30.0, 40.0] {
            let n = (3.0 * wa) as usize;
            let geom = ArrayGeometry::new(n, 0.5, 1, 1.0).unwrap();
            let beam = BeamProfile::gaussian(wa * 0.5).unwrap();
            let d = discrete_overlap(&geom, &beam);
            let c = continuum_overlap(&geom, &beam);
            assert!(((d - c) / c).abs() < 1e-3, "w/a={wa}: {d} vs {c}");
        }
    }

    #[test]
    fn validity_flags() {
        let beam = BeamProfile::gaussian(30.0).unwrap();
        let rates = fig3_rates(10);
        let g = ArrayGeometry::new(200, 0.68, 10, 1.0).unwrap();
        let rep = validity_report(&g, &beam, 100.0, &rates);
        assert!(rep.phase_match_ok && rep.evanescent_ok && rep.layer_size_ok);
        let g = ArrayGeometry::new(200, 0.68, 10, 1.3).unwrap();
        assert!(!validity_report(&g, &beam, 1.0, &rates).phase_match_ok);
        let g = ArrayGeometry::new(200, 0.68, 10, 0.5).unwrap();
        let rep = validity_report(&g, &beam, 1.0, &rates);
        assert!(!rep.phase_match_ok && !rep.evanescent_ok);
        assert!(!validity_report(&g, &beam, 1e12, &rates).linearization_ok);
    }

    #[test]
    fn n_eff_formula() {
        let wa = 200.0 / (2.0 * 1.985);
        let a = 0.68;
        let g = ArrayGeometry::new(200, a, 10, 1.0).unwrap();
        let beam = BeamProfile::gaussian(wa * a).unwrap();
        let rates = fig3_rates(10);
        let rep = validity_report(&g, &beam, 100.0, &rates);
        let expect = 0.99 * 2.0 * PI * wa * wa * 10.0;
        assert!((rep.n_eff - expect).abs() < 1e-9 * expect);
        assert!(rep.linearization_ok);
        assert!((rep.heisenberg_floor - 1.0 / (200.0 * 200.0 * 10.0)).abs() < 1e-20);
    }
}
