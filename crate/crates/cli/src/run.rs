use escape_spectral::asymptotics::{fit_asymptotics, PowerLawFit};
use escape_spectral::closed_form::{
    bounds_point_target, d2_crit, met_bulk_only, met_diagonal_approx, met_point_target,
    met_surface_only, met_transportation_limit, DEFAULT_BULK_TERMS, DEFAULT_SERIES_TERMS,
};
use escape_spectral::montecarlo::{simulate_met, BulkMode, SimConfig};
use escape_spectral::operator::{AssemblyOptions, DEFAULT_MAX_TRUNCATION, DEFAULT_TRUNCATION};
use escape_spectral::{
    assemble_vtv_with, decompose, met_curve, met_limit, MetResult, ModelParams, OperatorMatrix,
    SpectralData,
};

use crate::config::{BulkArg, ClosedFormKind, CommandKind, RunConfig};
use crate::output::{Cell, Table};
use crate::CliError;

const DEFAULT_PATHS: usize = 100_000;
const DEFAULT_COMPARE_PATHS: usize = 20_000;

pub fn execute(cfg: &RunConfig) -> Result<Table, CliError> {
    match cfg.command {
        CommandKind::Solve => solve(cfg),
        CommandKind::Spectrum => spectrum(cfg),
        CommandKind::Limit => limit(cfg),
        CommandKind::Asymptotics => asymptotics(cfg),
        CommandKind::ClosedForm(kind) => closed_form(cfg, kind),
        CommandKind::Simulate => simulate(cfg),
        CommandKind::Compare => compare(cfg),
    }
}

fn params(cfg: &RunConfig, lambda: f64) -> Result<ModelParams, CliError> {
    let a = cfg.require("a", cfg.a)?;
    let eps = cfg.require("eps", cfg.eps)?;
    Ok(ModelParams::new(a, eps, cfg.d1, cfg.d2, lambda)?)
}

fn load_matrix(cfg: &RunConfig, p: &ModelParams) -> Result<OperatorMatrix, CliError> {
    let n = cfg.n_trunc.unwrap_or(DEFAULT_TRUNCATION);
    let opts = AssemblyOptions {
        max_n: cfg.max_n.unwrap_or(DEFAULT_MAX_TRUNCATION),
    };
    let Some(path) = &cfg.cache else {
        return Ok(assemble_vtv_with(p, n, opts)?);
    };
    if path.exists() {
        let m = OperatorMatrix::read_cache(path, p)?;
        if m.n_trunc() == n {
            return Ok(m);
        }
    }
    let m = assemble_vtv_with(p, n, opts)?;
    m.write_cache(path)?;
    Ok(m)
}

fn spectral(cfg: &RunConfig) -> Result<SpectralData, CliError> {
    let p = params(cfg, 0.0)?;
    let m = load_matrix(cfg, &p)?;
    Ok(decompose(&m)?)
}

fn solve(cfg: &RunConfig) -> Result<Table, CliError> {
    let lambdas = cfg.lambdas()?;
    let s = spectral(cfg)?;
    let curve = met_curve(&s, &lambdas)?;
    let mut t = Table::new("solve", &["lambda", "met", "residual_estimate"]);
    for i in 0..curve.len() {
        t.push(vec![
            curve.lambdas[i].into(),
            curve.values[i].into(),
            curve.residual_estimates[i].into(),
        ]);
    }
    Ok(t)
}

fn spectrum(cfg: &RunConfig) -> Result<Table, CliError> {
    let s = spectral(cfg)?;
    let mut t = Table::new("spectrum", &["n", "lambda_n", "psi_n_sq"]);
    for (i, (l, w)) in s.eigenvalues.iter().zip(&s.weights).enumerate() {
        t.push(vec![(i + 1).into(), (*l).into(), (*w).into()]);
    }
    Ok(t)
}

fn limit(cfg: &RunConfig) -> Result<Table, CliError> {
    let s = spectral(cfg)?;
    let lim = met_limit(&s)?;
    let c1 = fit_asymptotics(&s).ok().and_then(|f| f.c1);
    let mut t = Table::new("limit", &["quantity", "value", "residual_estimate"]);
    t.push(vec!["T".into(), lim.value.into(), lim.residual_estimate.into()]);
    t.push(vec!["C1".into(), c1.into(), Cell::Missing]);
    Ok(t)
}

fn fit_row(name: &str, fit: Option<PowerLawFit>) -> Vec<Cell> {
    match fit {
        Some(f) => vec![
            name.into(),
            f.window.0.into(),
            f.window.1.into(),
            f.nominal_exponent.into(),
            f.coefficient.into(),
            f.free_exponent.into(),
            f.residual.into(),
        ],
        None => {
            let mut row = vec![name.into()];
            row.extend(std::iter::repeat(Cell::Missing).take(6));
            row
        }
    }
}

fn asymptotics(cfg: &RunConfig) -> Result<Table, CliError> {
    let s = spectral(cfg)?;
    let fit = fit_asymptotics(&s)?;
    let mut t = Table::new(
        "asymptotics",
        &["regime", "window_lo", "window_hi", "nominal_exponent", "coefficient", "free_exponent", "residual"],
    );
    t.push(fit_row("eigenvalue_head", fit.eigenvalues.head));
    t.push(fit_row("eigenvalue_tail", Some(fit.eigenvalues.tail)));
    t.push(fit_row("weight_head", fit.weights.head));
    t.push(fit_row("weight_intermediate", fit.weights.intermediate));
    t.push(fit_row("weight_tail", fit.weights.tail));
    let mut c1 = vec!["c1".into(), Cell::Missing, Cell::Missing, Cell::Missing];
    c1.push(fit.c1.into());
    c1.extend([Cell::Missing, Cell::Missing]);
    t.push(c1);
    Ok(t)
}

fn result_row(name: &str, lambda: Option<f64>, r: &MetResult) -> Vec<Cell> {
    vec![name.into(), lambda.into(), r.value.into(), r.residual_estimate.into()]
}

fn closed_form(cfg: &RunConfig, kind: ClosedFormKind) -> Result<Table, CliError> {
    use ClosedFormKind as K;
    let mut t = Table::new("closed-form", &["name", "lambda", "value", "residual_estimate"]);
    let eps = cfg.require("eps", cfg.eps)?;
    let all = kind == K::All;
    let point = eps == 0.0;
    // `all` evaluates whatever the supplied parameters make meaningful.
    let want = |k: K, applicable: bool| kind == k || (all && applicable);

    if want(K::Surface, true) {
        // Independent of a.
        let p = ModelParams::new(cfg.a.unwrap_or(1.0), eps, cfg.d1, cfg.d2, 0.0)?;
        t.push(result_row("surface", None, &met_surface_only(&p)?));
    }
    if want(K::Bulk, !point) {
        t.push(result_row("bulk", None, &met_bulk_only(eps, cfg.d2, DEFAULT_BULK_TERMS)?));
    }
    if want(K::Transportation, !point) {
        t.push(result_row("transportation", None, &met_transportation_limit(eps, cfg.d2)?));
    }
    let has_a = cfg.a.is_some();
    if want(K::D2crit, has_a) {
        let p = params(cfg, 0.0)?;
        let v = d2_crit(&p, DEFAULT_SERIES_TERMS)?;
        t.push(vec!["d2crit".into(), Cell::Missing, v.into(), Cell::Missing]);
    }
    let has_grid = cfg.lambda_grid.is_some() || cfg.lambda.is_some();
    if want(K::Point, has_a && point && has_grid) {
        for l in cfg.lambdas()? {
            let r = met_point_target(&params(cfg, l)?, DEFAULT_SERIES_TERMS)?;
            t.push(result_row("point", Some(l), &r));
        }
    }
    if want(K::Bounds, has_a && point && has_grid && cfg.a < Some(1.0)) {
        for l in cfg.lambdas()? {
            if all && l == 0.0 {
                continue;
            }
            let b = bounds_point_target(&params(cfg, l)?)?;
            t.push(vec!["bounds_lower".into(), l.into(), b.lower.into(), Cell::Missing]);
            t.push(vec!["bounds_upper".into(), l.into(), b.upper.into(), Cell::Missing]);
        }
    }
    if want(K::Diagonal, has_a && has_grid) {
        for l in cfg.lambdas()? {
            let r = met_diagonal_approx(&params(cfg, l)?, DEFAULT_SERIES_TERMS)?;
            t.push(result_row("diagonal", Some(l), &r));
        }
    }
    Ok(t)
}

fn sim_config(cfg: &RunConfig, p: ModelParams, default_paths: usize) -> SimConfig {
    let mut sc = SimConfig::new(p, cfg.paths.unwrap_or(default_paths), cfg.seed);
    sc.bulk_mode = match cfg.bulk_mode {
        BulkArg::ExactJump => BulkMode::ExactJump,
        BulkArg::Euler => BulkMode::Euler,
    };
    if let Some(dt) = cfg.dt_surface {
        sc.dt_surface = dt;
    }
    if let Some(dt) = cfg.dt_bulk {
        sc.dt_bulk = dt;
    }
    sc
}

fn simulate(cfg: &RunConfig) -> Result<Table, CliError> {
    let lambdas = cfg.lambdas()?;
    let mut t = Table::new(
        "simulate",
        &["lambda", "mean", "stderr", "n_paths", "seed", "dt_surface", "coarse"],
    );
    for l in lambdas {
        let sc = sim_config(cfg, params(cfg, l)?, DEFAULT_PATHS);
        let est = simulate_met(&sc)?;
        t.push(vec![
            l.into(),
            est.mean.into(),
            est.stderr.into(),
            est.n_paths.into(),
            Cell::Int(sc.seed),
            sc.dt_surface.into(),
            sc.is_coarse().into(),
        ]);
    }
    Ok(t)
}

fn compare(cfg: &RunConfig) -> Result<Table, CliError> {
    let lambdas = cfg.lambdas()?;
    let s = spectral(cfg)?;
    let curve = met_curve(&s, &lambdas)?;
    let mut t = Table::new(
        "compare",
        &[
            "lambda",
            "spectral",
            "spectral_residual",
            "diagonal",
            "diagonal_rel_gap",
            "mc_mean",
            "mc_stderr",
            "agreement",
        ],
    );
    for (i, &l) in lambdas.iter().enumerate() {
        let p = params(cfg, l)?;
        let spectral_value = curve.values[i];
        let diag = met_diagonal_approx(&p, DEFAULT_SERIES_TERMS)?.value;
        let gap = if spectral_value == 0.0 {
            0.0
        } else {
            (diag - spectral_value).abs() / spectral_value.abs()
        };
        let est = simulate_met(&sim_config(cfg, p, DEFAULT_COMPARE_PATHS))?;
        let agree = (spectral_value - est.mean).abs() <= 3.0 * est.stderr;
        t.push(vec![
            l.into(),
            spectral_value.into(),
            curve.residual_estimates[i].into(),
            diag.into(),
            gap.into(),
            est.mean.into(),
            est.stderr.into(),
            (if agree { "PASS" } else { "FAIL" }).into(),
        ]);
    }
    Ok(t)
}
