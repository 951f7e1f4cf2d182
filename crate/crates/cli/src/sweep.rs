//! Grid sweeps over photon number and layer count.

use rayon::prelude::*;

use spinsq_core::analytic::{xi2_analytic, DetuningSpec};
use spinsq_core::kernel::delta_prime;
use spinsq_core::mc::{simulate_xi2, McParams};
use spinsq_core::rates::{compute_rates, validity_report, RateSet};
use spinsq_core::{ArrayGeometry, LinearModel, SqueezedVacuumSpec};

use crate::config::{DetuningMode, ExperimentConfig};
use crate::table::{Cell, Table};

pub const SWEEP_COLUMNS: &[&str] = &[
    "label",
    "n_layers",
    "n_photons",
    "detuning_numeric",
    "delta_prime",
    "r0",
    "alpha_eff",
    "xi2_field",
    "xi2_analytic",
    "theta_analytic",
    "xi2_numeric",
    "theta_numeric",
    "residual",
    "xi2_mc",
    "xi2_mc_stderr",
    "validity",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub table: Table,
    pub n_errors: usize,
}

impl SweepOutput {
    pub fn all_failed(&self) -> bool {
        !self.table.rows.is_empty() && self.n_errors == self.table.rows.len()
    }
}

struct LayerContext {
    geom: ArrayGeometry,
    rates: Result<RateSet, String>,
    /// `delta - Delta` in units of the single-atom rate.
    analytic_det: f64,
    numeric_det: f64,
    delta_prime: Option<f64>,
    model: Option<Result<LinearModel, String>>,
}

pub fn rates_for(cfg: &ExperimentConfig, geom: &ArrayGeometry) -> spinsq_core::Result<RateSet> {
    let gamma_s = cfg.gamma_s_rel * geom.gamma0();
    match cfg.eta {
        Some(eta) => RateSet::from_parts(geom.gamma0(), eta, geom.n_layers, gamma_s),
        None => compute_rates(geom, &cfg.beam, gamma_s),
    }
}

fn layer_context(cfg: &ExperimentConfig, nz: usize) -> LayerContext {
    let geom = match cfg.geometry.with_layers(nz) {
        Ok(g) => g,
        Err(e) => {
            return LayerContext {
                geom: cfg.geometry.clone(),
                rates: Err(e.to_string()),
                analytic_det: 0.0,
                numeric_det: 0.0,
                delta_prime: None,
                model: None,
            }
        }
    };
    let rates = rates_for(cfg, &geom).map_err(|e| e.to_string());
    let gamma0 = geom.gamma0();
    let mut ctx = LayerContext {
        geom,
        rates,
        analytic_det: 0.0,
        numeric_det: 0.0,
        delta_prime: None,
        model: None,
    };
    let Ok(rates) = ctx.rates.clone() else {
        return ctx;
    };
    match cfg.detuning {
        DetuningMode::OnResonance => {}
        DetuningMode::Fixed(v) => {
            ctx.analytic_det = v * gamma0;
            ctx.numeric_det = v * gamma0;
        }
        DetuningMode::DeltaPrime => match delta_prime(&ctx.geom, &rates, &cfg.kernel) {
            Ok(dp) => {
                ctx.delta_prime = Some(dp);
                ctx.numeric_det = dp;
            }
            Err(e) => {
                ctx.model = Some(Err(format!("delta prime: {e}")));
                return ctx;
            }
        },
    }
    if cfg.model.numeric() {
        let det = DetuningSpec::new(ctx.numeric_det);
        ctx.model = Some(LinearModel::new(&ctx.geom, &rates, &det, &cfg.kernel).map_err(|e| e.to_string()));
    }
    ctx
}

fn flags(cfg: &ExperimentConfig, geom: &ArrayGeometry, rates: &RateSet, n: f64) -> String {
    let v = validity_report(geom, &cfg.beam, n, rates);
    let failed: Vec<&str> = [
        (v.layer_size_ok, "layer-size"),
        (v.rayleigh_ok, "rayleigh"),
        (v.phase_match_ok, "phase-match"),
        (v.evanescent_ok, "evanescent"),
        (v.linearization_ok, "linearization"),
    ]
    .iter()
    .filter(|(ok, _)| !ok)
    .map(|(_, name)| *name)
    .collect();
    if failed.is_empty() {
        "ok".into()
    } else {
        failed.join(";")
    }
}

fn point_row(cfg: &ExperimentConfig, ctx: &LayerContext, n: f64, index: usize) -> Vec<Cell> {
    let gamma0 = ctx.geom.gamma0();
    let mut row = vec![
        Cell::Text(cfg.label.clone()),
        Cell::Int(ctx.geom.n_layers as i64),
        Cell::Num(n),
        Cell::Num(ctx.numeric_det / gamma0),
        Cell::opt(ctx.delta_prime.map(|d| d / gamma0)),
    ];
    let mut errors: Vec<String> = Vec::new();
    let blank = |row: &mut Vec<Cell>| row.resize(SWEEP_COLUMNS.len() - 2, Cell::Empty);

    let rates = match &ctx.rates {
        Ok(r) => r,
        Err(e) => {
            blank(&mut row);
            row.push(Cell::Empty);
            row.push(Cell::Text(format!("rates: {e}")));
            return row;
        }
    };
    let spec = match SqueezedVacuumSpec::new(n, cfg.purity) {
        Ok(s) => s,
        Err(e) => {
            blank(&mut row);
            row.push(Cell::Empty);
            row.push(Cell::Text(format!("input: {e}")));
            return row;
        }
    };
    row.push(Cell::Num(rates.r0));
    match xi2_analytic(rates, &spec, &DetuningSpec::new(ctx.analytic_det), cfg.alpha_eff) {
        Ok(a) => {
            row.push(Cell::Num(a.aux["alpha_eff"]));
            row.push(Cell::Num(spec.xi_f2()));
            row.push(Cell::Num(a.xi2));
            row.push(Cell::Num(a.theta_opt));
        }
        Err(e) => {
            errors.push(format!("analytic: {e}"));
            row.extend([Cell::Empty, Cell::Num(spec.xi_f2()), Cell::Empty, Cell::Empty]);
        }
    }

    let mut numeric_cells = [Cell::Empty, Cell::Empty, Cell::Empty];
    let mut mc_cells = [Cell::Empty, Cell::Empty];
    if let Some(model) = &ctx.model {
        match model {
            Err(e) => errors.push(format!("numeric: {e}")),
            Ok(model) => match model.xi2(&spec, cfg.solver) {
                Err(e) => errors.push(format!("numeric: {e}")),
                Ok(x) => {
                    numeric_cells = [Cell::Num(x.xi2), Cell::Num(x.theta_opt), Cell::Num(x.aux["residual"])];
                    if cfg.model.mc() {
                        let m = &cfg.mc;
                        let params = McParams::for_drift(
                            &model.drift,
                            m.integrator,
                            m.dt_frac,
                            m.relax,
                            m.samples,
                            m.n_traj,
                            m.seed.wrapping_add(index as u64),
                        );
                        match model
                            .diffusions(&spec)
                            .and_then(|d| simulate_xi2(&model.drift, &d, &model.geom, &params))
                        {
                            Ok(est) => mc_cells = [Cell::Num(est.xi2), Cell::Num(est.std_error)],
                            Err(e) => errors.push(format!("mc: {e}")),
                        }
                    }
                }
            },
        }
    }
    row.extend(numeric_cells);
    row.extend(mc_cells);
    row.push(Cell::Text(flags(cfg, &ctx.geom, rates, n)));
    row.push(if errors.is_empty() { Cell::Empty } else { Cell::Text(errors.join("; ")) });
    row
}

fn run_inner(cfg: &ExperimentConfig) -> SweepOutput {
    let contexts: Vec<LayerContext> = cfg.layers.par_iter().map(|&nz| layer_context(cfg, nz)).collect();
    let tasks: Vec<(usize, f64)> = (0..contexts.len())
        .flat_map(|l| cfg.n_photons.iter().map(move |&n| (l, n)))
        .collect();
    let rows: Vec<Vec<Cell>> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, &(l, n))| point_row(cfg, &contexts[l], n, i))
        .collect();
    let mut table = Table::new(SWEEP_COLUMNS);
    let err_col = SWEEP_COLUMNS.len() - 1;
    let n_errors = rows.iter().filter(|r| r[err_col] != Cell::Empty).count();
    for r in rows {
        table.push(r);
    }
    SweepOutput { table, n_errors }
}

/// Runs every grid point; solver failures go to the `error` column.
pub fn run_sweep(cfg: &ExperimentConfig) -> SweepOutput {
    with_workers(cfg.workers, || run_inner(cfg))
}

/// Runs `f` on a pool of `workers` threads, or the global pool when unset.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
