use std::f64::consts::PI;
use std::time::Instant;

use loopint::bismut::{integrate_bch_odd, BchConfig, S_NODES};
use loopint::bundles::{GaugeMap, OdeConfig, TwistBundle};
use loopint::error::Error;
use loopint::integrator::{integrate_mc, integrate_spectral, refinement_sweep, McConfig, SpectralConfig};
use loopint::localization::{landau_spectrum, localization_check_even, localization_check_odd, LocalizationReport};
use loopint::spectral::{zeta_det_toy, CircleFamily};
use loopint::suites::{clifford_suite, measure_suite, q_suite, SuiteResult};
use loopint::wiener::McOptions;
use loopint::wiener_checks::{convolution_check, feynman_kac_check, mass_checks, trace_relation_check, WienerCheck};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::expr::parse_poly;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub struct Outcome {
    pub passed: bool,
    pub results: Value,
    /// `(file name, CSV text)`.
    pub tables: Vec<(String, String)>,
    pub diagnostics: Vec<String>,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Self { passed: true, results, tables: Vec::new(), diagnostics: Vec::new() }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.passed = false;
            self.diagnostics.push(what());
        }
    }
}

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub verbose: bool,
}

impl Context<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn mc(&self, grid: usize, samples: u64, offset: u64) -> McConfig {
        let mut c = McConfig::new(grid, samples, self.config.seed.wrapping_add(offset));
        c.options.workers = self.config.workers;
        c
    }

    fn options(&self, offset: u64) -> McOptions {
        let mut o = McOptions::seeded(self.config.seed.wrapping_add(offset));
        o.workers = self.config.workers;
        o
    }
}

fn table<R: Serialize>(rows: &[R]) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn z(stderr: f64, d: f64) -> f64 {
    if stderr > 0.0 {
        d / stderr
    } else if d <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Serialize)]
struct SuiteRow {
    suite: &'static str,
    check: String,
    cases: usize,
    worst: f64,
    tolerance: f64,
    passed: bool,
}

pub fn invariants(ctx: &Context) -> Result<Outcome, RunError> {
    let c = &ctx.config.suites;
    let seed = ctx.config.seed;
    let runs: [(&'static str, Vec<SuiteResult>); 3] = [
        ("clifford", clifford_suite(c.clifford_cases, seed)?),
        ("loopforms", measure_suite(c.measure_cases, seed.wrapping_add(1))?),
        ("qfunctional", q_suite(c.q_cases, seed.wrapping_add(2))?),
    ];
    let mut rows = Vec::new();
    for (suite, results) in runs {
        for r in results {
            ctx.log(format!("{suite}/{}: worst {:.2e} in {:.2} s", r.name, r.worst, r.seconds));
            rows.push(SuiteRow { suite, check: r.name, cases: r.cases, worst: r.worst, tolerance: r.tolerance, passed: r.passed });
        }
    }
    let mut out = Outcome::new(json!({ "checks": &rows }));
    for r in &rows {
        out.expect(r.passed, || format!("{}/{}: worst {:e} exceeds {:e}", r.suite, r.check, r.worst, r.tolerance));
    }
    out.tables.push(("invariants.csv".into(), table(&rows)?));
    Ok(out)
}

pub fn wiener_checks(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.config;
    let w = &cfg.wiener;
    let torus = cfg.torus()?;
    let n = torus.dim();
    let x = vec![0.1; n];
    let y: Vec<f64> = (0..n).map(|i| 0.7 - 0.2 * i as f64).collect();
    let mut k = vec![0i64; n];
    k[0] = 1;
    let potential = parse_poly(&w.potential, n).map_err(ConfigError::from)?;
    let mut checks: Vec<WienerCheck> = mass_checks(&torus, w.t, w.grid, w.samples, &ctx.options(0))?;
    ctx.log("mass checks done");
    checks.push(convolution_check(&torus, w.t, &x, &y, &k, w.split_node, w.grid, w.samples, &ctx.options(1))?);
    checks.push(trace_relation_check(&torus, w.t, &k, w.grid, w.samples, &ctx.options(2))?);
    ctx.log("convolution and trace relation done");
    checks.push(feynman_kac_check(&torus, w.t, &potential, w.fk_grid, w.fk_cutoff, w.samples, &ctx.options(3))?);
    let z_max = cfg.tolerance.z_max;
    let mut out = Outcome::new(json!({ "checks": &checks }));
    for c in &checks {
        out.expect(c.z < z_max, || format!("{}: z = {:.2}", c.name, c.z));
    }
    out.tables.push(("wiener_checks.csv".into(), table(&checks)?));
    Ok(out)
}

#[derive(Serialize)]
struct CompareRow {
    form: usize,
    t: f64,
    spectral: f64,
    spectral_refined: f64,
    cutoff_defect: f64,
    mc: f64,
    stderr: f64,
    z: f64,
    passed: bool,
}

pub fn compare(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.config;
    let c = &cfg.compare;
    let torus = cfg.torus()?;
    let forms = cfg.forms()?;
    let mut rows = Vec::new();
    for (i, theta) in forms.iter().enumerate() {
        for (j, &t) in cfg.times.iter().enumerate() {
            let spectral = integrate_spectral(&torus, theta, t, &SpectralConfig { cutoff: c.cutoff, nodes: c.nodes })?.value;
            let refined =
                integrate_spectral(&torus, theta, t, &SpectralConfig { cutoff: c.cutoff + c.cutoff_step, nodes: c.nodes })?.value;
            let e = integrate_mc(&torus, theta, t, &ctx.mc(c.grid, c.samples, (i * cfg.times.len() + j) as u64))?;
            let zv = z(e.stderr, (e.value - refined).abs());
            let defect = (spectral - refined).abs();
            ctx.log(format!("form {i}, T = {t}: spectral {refined:.6}, mc {:.6} ± {:.6}", e.value, e.stderr));
            rows.push(CompareRow {
                form: i,
                t,
                spectral,
                spectral_refined: refined,
                cutoff_defect: defect,
                mc: e.value,
                stderr: e.stderr,
                z: zv,
                passed: zv < cfg.tolerance.z_max && defect < cfg.tolerance.exact,
            });
        }
    }
    let mut out = Outcome::new(json!({ "forms": &cfg.forms, "rows": &rows }));
    for r in &rows {
        out.expect(r.passed, || format!("form {} at T = {}: z = {:.2}, cutoff defect {:.1e}", r.form, r.t, r.z, r.cutoff_defect));
    }
    out.tables.push(("compare.csv".into(), table(&rows)?));
    Ok(out)
}

#[derive(Serialize)]
struct LevelRow {
    flux: i64,
    level: usize,
    eigenvalue: f64,
    plus: usize,
    minus: usize,
}

fn two_torus(ctx: &Context) -> Result<loopint::geometry::FlatTorus, RunError> {
    if ctx.config.torus.dim != 2 {
        return Err(ConfigError::Invalid("flux bundles need torus.dim = 2".into()).into());
    }
    Ok(ctx.config.torus()?)
}

pub fn index(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.config;
    let s = &cfg.index;
    let torus = two_torus(ctx)?;
    let bch = BchConfig { ode: OdeConfig { substeps: 1, richardson: false }, scal: None };
    let mut reports: Vec<LocalizationReport> = Vec::new();
    let mut levels = Vec::new();
    for (i, &k) in s.fluxes.iter().enumerate() {
        let bundle = TwistBundle::flux_line(&torus, k)?;
        let mc = ctx.mc(s.grid, s.samples, i as u64);
        let mut r = localization_check_even(&bundle, s.t, Some((&mc, &bch)))?;
        r.z_max = cfg.tolerance.z_max;
        r.tolerance = cfg.tolerance.exact;
        r.passed = r.spectral_rhs_defect < r.tolerance && r.mc_z.is_none_or(|z| z < r.z_max) && r.integer == -k;
        ctx.log(format!("flux {k}: index {}, mc z {:?}", r.integer, r.mc_z));
        for (j, l) in landau_spectrum(&bundle, s.t)?.levels().iter().take(s.table_levels).enumerate() {
            levels.push(LevelRow { flux: k, level: j, eigenvalue: l.eigenvalue, plus: l.plus, minus: l.minus });
        }
        reports.push(r);
    }
    let mut out = Outcome::new(json!({ "fluxes": &s.fluxes, "reports": &reports }));
    for r in &reports {
        out.expect(r.passed, || format!("{}: index {}, defect {:.1e}, mc z {:?}", r.label, r.integer, r.spectral_rhs_defect, r.mc_z));
    }
    out.tables.push(("landau_levels.csv".into(), table(&levels)?));
    Ok(out)
}

#[derive(Serialize)]
struct FlowRow {
    winding: i64,
    spectral_flow: i64,
    getzler: f64,
    mc_scaled: f64,
    mc_scaled_stderr: f64,
    z: f64,
    localization_defect: f64,
    passed: bool,
}

#[derive(Serialize)]
struct BranchRow {
    winding: i64,
    s: f64,
    eigenvalue: f64,
}

pub fn spectral_flow(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.config;
    let f = &cfg.flow;
    let scale = (f.t / (2.0 * PI)).sqrt();
    let mut rows = Vec::new();
    let mut branches = Vec::new();
    for (i, &m) in f.windings.iter().enumerate() {
        let g = GaugeMap::circle_winding(f.length, m)?;
        let fam = CircleFamily::new(&g, f.spin, f.cutoff)?;
        let sf = fam.spectral_flow(f.steps)?;
        let getzler = fam.getzler_flow_integral(f.t, f.getzler_nodes)?;
        let e = integrate_bch_odd(&g, f.spin, f.t, &ctx.mc(f.grid, f.samples, i as u64), S_NODES)?;
        let zv = e.z_score(Complex64::new(0.0, sf as f64 / scale));
        let loc = localization_check_odd(&g, f.spin, f.t, None)?;
        let v = e.im.value * scale;
        let signed = sf == 0 || v.signum() == sf.signum() as f64;
        ctx.log(format!("winding {m}: sf {sf}, getzler {getzler:.6}, scaled mc {v:.4}"));
        rows.push(FlowRow {
            winding: m,
            spectral_flow: sf,
            getzler,
            mc_scaled: v,
            mc_scaled_stderr: e.im.stderr * scale,
            z: zv,
            localization_defect: loc.spectral_rhs_defect,
            passed: sf == m
                && (getzler - m as f64).abs() < cfg.tolerance.getzler
                && zv < cfg.tolerance.z_max
                && signed
                && loc.spectral_rhs_defect < cfg.tolerance.exact,
        });
        let window = 2.0 * PI * (m.abs() + 1) as f64 / f.length;
        for j in 0..=16 {
            let s = j as f64 / 16.0;
            for ev in fam.eigenvalues(s).into_iter().filter(|x| x.abs() <= window) {
                branches.push(BranchRow { winding: m, s, eigenvalue: ev });
            }
        }
    }
    let mut out = Outcome::new(json!({ "t": f.t, "rows": &rows }));
    for r in &rows {
        out.expect(r.passed, || {
            format!("winding {}: sf {}, getzler {:.6}, mc z {:.2}", r.winding, r.spectral_flow, r.getzler, r.z)
        });
    }
    out.tables.push(("spectral_flow.csv".into(), table(&rows)?));
    out.tables.push(("eigenvalue_branches.csv".into(), table(&branches)?));
    Ok(out)
}

#[derive(Serialize)]
struct LocalizationRow {
    kind: &'static str,
    parameter: i64,
    t: f64,
    spectral_re: f64,
    spectral_im: f64,
    rhs_re: f64,
    rhs_im: f64,
    /// RHS with the time dependence stripped (odd case: times `(T/2π)^{1/2}`).
    normalized_rhs_im: f64,
    defect: f64,
    drift: f64,
    passed: bool,
}

fn localization_rows(
    kind: &'static str,
    parameter: i64,
    reports: Vec<LocalizationReport>,
    normalize: impl Fn(&LocalizationReport) -> Complex64,
    exact: f64,
) -> Vec<LocalizationRow> {
    let base = normalize(&reports[0]);
    reports
        .iter()
        .map(|r| {
            let n = normalize(r);
            let drift = (n - base).norm();
            LocalizationRow {
                kind,
                parameter,
                t: r.t,
                spectral_re: r.spectral.re,
                spectral_im: r.spectral.im,
                rhs_re: r.rhs.re,
                rhs_im: r.rhs.im,
                normalized_rhs_im: n.im,
                defect: r.spectral_rhs_defect,
                drift,
                passed: r.spectral_rhs_defect < exact && drift < 1e-12,
            }
        })
        .collect()
}

pub fn localization(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.config;
    let torus = two_torus(ctx)?;
    let exact = cfg.tolerance.exact;
    let mut rows = Vec::new();
    for &k in &cfg.index.fluxes {
        let bundle = TwistBundle::flux_line(&torus, k)?;
        let reports = cfg.times.iter().map(|&t| localization_check_even(&bundle, t, None)).collect::<Result<Vec<_>, _>>()?;
        rows.extend(localization_rows("even", k, reports, |r| r.rhs, exact));
    }
    for &m in &cfg.flow.windings {
        let g = GaugeMap::circle_winding(cfg.flow.length, m)?;
        let reports =
            cfg.times.iter().map(|&t| localization_check_odd(&g, cfg.flow.spin, t, None)).collect::<Result<Vec<_>, _>>()?;
        rows.extend(localization_rows("odd", m, reports, |r| r.rhs * (r.t / (2.0 * PI)).sqrt(), exact));
    }
    ctx.log(format!("{} localization rows", rows.len()));
    let mut out = Outcome::new(json!({ "rows": &rows }));
    for r in &rows {
        out.expect(r.passed, || {
            format!("{} {} at T = {}: defect {:.1e}, T-drift {:.1e}", r.kind, r.parameter, r.t, r.defect, r.drift)
        });
    }
    out.tables.push(("localization.csv".into(), table(&rows)?));
    Ok(out)
}

#[derive(Serialize)]
struct RefineRow {
    grid: usize,
    estimate: f64,
    stderr: f64,
    step: Option<f64>,
    step_stderr: Option<f64>,
}

pub fn refine(ctx: &Context) -> Result<Outcome, RunError> {
    let cfg = ctx.config;
    let r = &cfg.refine;
    let torus = two_torus(ctx)?;
    let bundle = TwistBundle::flux_line(&torus, r.flux)?;
    let b = bundle.field_strengths()[0];
    // Tr exp(-T ∇*∇/2) over Landau levels |b|(l + 1/2), degeneracy |k|
    let exact: f64 = (0..10_000)
        .map(|l| r.flux.unsigned_abs() as f64 * (-r.t * b.abs() * (l as f64 + 0.5)).exp())
        .take_while(|&x| x > 0.0)
        .sum();
    let s = refinement_sweep(&torus, r.t, &r.grids, r.samples, &ctx.options(0), |lp| Ok(bundle.loop_holonomy(lp).trace().re))?;
    let rows: Vec<RefineRow> = s
        .grids
        .iter()
        .enumerate()
        .map(|(i, &g)| RefineRow {
            grid: g,
            estimate: s.estimates[i].value,
            stderr: s.estimates[i].stderr,
            step: i.checked_sub(1).map(|j| s.differences[j].value),
            step_stderr: i.checked_sub(1).map(|j| s.differences[j].stderr),
        })
        .collect();
    let decreasing = s.differences.windows(2).all(|w| w[1].value.abs() < w[0].value.abs());
    let zv = z(s.stderr, (s.value - exact).abs());
    ctx.log(format!("finest {:.6} ± {:.6}, Landau trace {exact:.6}", s.value, s.stderr));
    let mut out = Outcome::new(json!({
        "landau_trace": exact,
        "finest": s.value,
        "stderr": s.stderr,
        "extrapolated": s.extrapolated,
        "slope": s.slope,
        "z": zv,
        "decreasing": decreasing,
        "rows": &rows,
    }));
    out.expect(decreasing, || "grid-to-grid differences do not decrease".into());
    out.expect(zv < cfg.tolerance.z_max, || format!("finest grid is {zv:.2} stderr from the Landau trace"));
    out.tables.push(("refine.csv".into(), table(&rows)?));
    Ok(out)
}

#[derive(Serialize)]
struct ZetaRow {
    alpha: f64,
    lhs: f64,
    rhs: f64,
    defect: f64,
}

pub fn zeta_toy(ctx: &Context) -> Result<Outcome, RunError> {
    let n = ctx.config.zeta.points;
    let start = Instant::now();
    let rows = (0..n)
        .map(|j| {
            let alpha = 2.0 * PI * (j as f64 + 0.5) / n as f64;
            let (lhs, rhs) = zeta_det_toy(alpha)?;
            Ok(ZetaRow { alpha, lhs, rhs, defect: (lhs - rhs).abs() })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    ctx.log(format!("zeta sweep in {:.3} s", start.elapsed().as_secs_f64()));
    let worst = rows.iter().map(|r| r.defect).fold(0.0, f64::max);
    let mut out = Outcome::new(json!({ "worst": worst, "rows": &rows }));
    out.expect(worst < 1e-10, || format!("worst defect {worst:e}"));
    out.tables.push(("zeta_toy.csv".into(), table(&rows)?));
    Ok(out)
}
