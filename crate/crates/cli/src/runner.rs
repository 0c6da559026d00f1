//! Executes one configured experiment and writes its files.

use std::path::{Path, PathBuf};

use laplace_cauchy::carleman::{continue_edge, EdgeTrace};
use laplace_cauchy::geometry::{CylinderDomain, TriangleGeometry};
use laplace_cauchy::numeric::{cexp, Real, C64};
use laplace_cauchy::oracles::{add_noise, library_solution, CauchyData, ManufacturedSolution};
use laplace_cauchy::reconstruct::{field_grid, solve_point, ReconstructionResult};
use laplace_cauchy::wavetrace::{symmetric_grid, TraceFormula, WaveTrace};
use num_complex::Complex;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{DataSource, EdgeFunction, Experiment, ExperimentConfig, Format};
use crate::output::{config_hash, fmt_f64, json_bytes, json_f64, write_file, Table};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Solver(#[from] laplace_cauchy::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// One line for the terminal.
    pub summary: String,
    /// False when a configured threshold was missed.
    pub passed: bool,
}

/// What an experiment produced before it is written out.
struct Report {
    table: Table,
    results: Value,
    summary: String,
    passed: bool,
}

/// Runs `cfg`, writing into `out_dir`. Relative data paths are resolved
/// against `config_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, config_dir: &Path) -> Result<RunOutcome, RunError> {
    let report = match cfg.experiment {
        Experiment::Carleman1d => carleman_1d(cfg)?,
        e => {
            let setup = Setup::new(cfg, config_dir)?;
            match e {
                Experiment::TraceCheck => trace_check(cfg, &setup)?,
                Experiment::Reconstruct => reconstruct(cfg, &setup)?,
                Experiment::Convergence => convergence(cfg, &setup)?,
                Experiment::NoiseSweep => noise_sweep(cfg, &setup)?,
                Experiment::Field => field(cfg, &setup)?,
                Experiment::Carleman1d => unreachable!(),
            }
        }
    };
    let hash = config_hash(cfg);
    let mut files = vec![];
    let io = |path: PathBuf| move |source| RunError::Io { path, source };
    if cfg.output.formats.contains(&Format::Csv) {
        let name = format!("{}.csv", cfg.experiment);
        let bytes = report.table.to_csv(&hash).map_err(io(out_dir.join(&name)))?;
        files.push(write_file(out_dir, &name, &bytes).map_err(io(out_dir.join(&name)))?);
    }
    if cfg.output.formats.contains(&Format::Json) {
        let summary = json!({
            "experiment": cfg.experiment.name(),
            "config_hash": hash,
            "seed": cfg.seed,
            "passed": report.passed,
            "results": report.results,
        });
        let name = "summary.json";
        files.push(write_file(out_dir, name, &json_bytes(&summary)).map_err(io(out_dir.join(name)))?);
    }
    Ok(RunOutcome { files, summary: report.summary, passed: report.passed })
}

struct Setup {
    domain: CylinderDomain,
    data: CauchyData,
    /// Clean closed form, when the data come from the catalog.
    exact: Option<ManufacturedSolution>,
}

impl Setup {
    fn new(cfg: &ExperimentConfig, config_dir: &Path) -> laplace_cauchy::Result<Self> {
        let domain = cfg.domain.as_ref().expect("validated config has a domain").build()?;
        let dc = cfg.data.as_ref().expect("validated config has data");
        let (data, exact) = match &dc.source {
            DataSource::Oracle(name) => {
                let sol = library_solution(name, domain.dim())?;
                (CauchyData::analytic(sol.clone()), Some(sol))
            }
            DataSource::Csv(path) => (CauchyData::from_csv_path(config_dir.join(path), domain.dim())?, None),
        };
        let data = if dc.noise > 0.0 { add_noise(&data, &domain, dc.noise_points, dc.noise, cfg.seed)? } else { data };
        Ok(Setup { domain, data, exact })
    }

    fn error(&self, x: &[f64], v: C64) -> f64 {
        self.exact.as_ref().map_or(f64::NAN, |s| (v.re - s.value(x)).abs())
    }
}

fn status<T>(r: &laplace_cauchy::Result<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.to_string(),
    }
}

fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("x{k}")).collect()
}

fn coords(x: &[f64]) -> Vec<String> {
    x.iter().map(|v| fmt_f64(*v)).collect()
}

fn nan() -> C64 {
    C64::new(f64::NAN, f64::NAN)
}

fn trace_check(cfg: &ExperimentConfig, s: &Setup) -> Result<Report, RunError> {
    let xp = &cfg.run.trace_point;
    let sol = s.exact.as_ref().expect("validated trace-check has an oracle");
    let formula = TraceFormula::for_dim(s.domain.dim())?;
    let quad = cfg.params.carleman().quad;
    let trace = WaveTrace::new(&s.domain, &s.data, xp, formula, quad)?;
    let t = trace.top();
    let mut table = Table::new(["y", "re_u", "im_u", "oracle_re", "oracle_im", "abs_error", "status"]);
    let mut max_err: f64 = 0.0;
    let mut failures = 0;
    for y in symmetric_grid(trace.epsilon(), cfg.run.grid_size) {
        let r = trace.value(y);
        let v = *r.as_ref().unwrap_or(&nan());
        let o = sol.extend(xp, C64::new(t, y));
        let e = (v - o).norm();
        match r {
            Ok(_) => max_err = max_err.max(e),
            Err(_) => failures += 1,
        }
        table.push(vec![fmt_f64(y), fmt_f64(v.re), fmt_f64(v.im), fmt_f64(o.re), fmt_f64(o.im), fmt_f64(e), status(&r)]);
    }
    let threshold = cfg.run.threshold.expect("validated trace-check has a threshold");
    let passed = failures == 0 && max_err < threshold;
    Ok(Report {
        summary: format!(
            "trace-check: {} trace, max error {:.3e} over {} nodes, threshold {:.1e}: {}",
            formula.name(),
            max_err,
            cfg.run.grid_size,
            threshold,
            if passed { "PASS" } else { "FAIL" }
        ),
        results: json!({
            "formula": formula.name(),
            "trace_point": xp,
            "epsilon": json_f64(trace.epsilon()),
            "max_error": json_f64(max_err),
            "failed_nodes": failures,
            "threshold": json_f64(threshold),
        }),
        table,
        passed,
    })
}

/// `f(top + i y)`, evaluated at the working precision of the edge sum:
/// cancellation in the sum eats far more than double precision.
struct TestEdge {
    f: EdgeFunction,
    top: f64,
}

impl TestEdge {
    fn at<T: Real>(&self, z: Complex<T>) -> Complex<T> {
        match self.f {
            EdgeFunction::Exp => cexp(&z),
            EdgeFunction::One => Complex::new(T::from_f64(1.0), T::zero()),
            EdgeFunction::Z2 => z.clone() * z,
        }
    }
}

impl EdgeTrace for TestEdge {
    fn eval<T: Real>(&self, y: &T) -> laplace_cauchy::Result<Complex<T>> {
        Ok(self.at(Complex::new(T::from_f64(self.top), y.clone())))
    }

    fn reflection_symmetric(&self) -> bool {
        true
    }
}

fn carleman_1d(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    let (z0, top, eps) = cfg.run.triangle;
    let tri = TriangleGeometry::new(z0, top, eps)?;
    let f = cfg.run.function;
    let g = TestEdge { f, top };
    let target = cfg.run.target;
    let exact = g.at(C64::new(target, 0.0));
    let params = cfg.params.carleman();
    let mut table = Table::new(["n", "re", "im", "abs_error", "mass_re", "mass_im", "bits", "nodes", "status"]);
    let mut errors = vec![];
    for &n in &params.schedule {
        let r = continue_edge(&g, &tri, target, n, &params);
        let (v, m, bits, nodes) = match &r {
            Ok(ev) => (ev.value, ev.kernel_mass, ev.plan.bits.to_string(), ev.plan.nodes.to_string()),
            Err(_) => (nan(), nan(), String::new(), String::new()),
        };
        let e = (v - exact).norm();
        errors.push(e);
        table.push(vec![
            n.to_string(),
            fmt_f64(v.re),
            fmt_f64(v.im),
            fmt_f64(e),
            fmt_f64(m.re),
            fmt_f64(m.im),
            bits,
            nodes,
            status(&r),
        ]);
    }
    let best = argmin(&errors);
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(Report {
        summary: format!(
            "carleman-1d: {} at {}, best N = {} with error {:.3e}, strictly decreasing: {}",
            f.name(),
            target,
            best.map_or("-".into(), |i| params.schedule[i].to_string()),
            best.map_or(f64::NAN, |i| errors[i]),
            decreasing
        ),
        results: json!({
            "function": f.name(),
            "target": json_f64(target),
            "exact": json_f64(exact.re),
            "best_n": best.map(|i| params.schedule[i]),
            "best_error": json_f64(best.map_or(f64::NAN, |i| errors[i])),
            "strictly_decreasing": decreasing,
        }),
        table,
        passed: true,
    })
}

/// Index of the smallest finite entry.
fn argmin(v: &[f64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, e)| e.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

fn point_json(s: &Setup, x: &[f64], r: &laplace_cauchy::Result<ReconstructionResult>) -> Value {
    match r {
        Ok(res) => json!({
            "point": x,
            "value": json_f64(res.chosen.re),
            "im_residual": json_f64(res.im_residual),
            "chosen_n": res.chosen_n(),
            "converged": res.converged,
            "abs_error": json_f64(s.error(x, res.chosen)),
            "status": "ok",
        }),
        Err(e) => json!({ "point": x, "status": e.to_string() }),
    }
}

fn chosen_row(s: &Setup, x: &[f64], r: &laplace_cauchy::Result<ReconstructionResult>) -> Vec<String> {
    let mut row = coords(x);
    match r {
        Ok(res) => row.extend([
            res.chosen_n().to_string(),
            fmt_f64(res.chosen.re),
            fmt_f64(res.chosen.im),
            fmt_f64(s.error(x, res.chosen)),
            res.converged.to_string(),
        ]),
        Err(_) => row.extend([String::new(), fmt_f64(f64::NAN), fmt_f64(f64::NAN), fmt_f64(f64::NAN), "false".into()]),
    }
    row.push(status(r));
    row
}

fn chosen_header(dim: usize) -> Table {
    let mut h = coord_header(dim);
    h.extend(["n", "re", "im", "abs_error", "converged", "status"].map(String::from));
    Table::new(h)
}

fn reconstruct(cfg: &ExperimentConfig, s: &Setup) -> Result<Report, RunError> {
    let params = cfg.params.carleman();
    let mut table = chosen_header(s.domain.dim());
    let mut results = vec![];
    let mut worst: f64 = 0.0;
    let mut ok = 0;
    for x in &cfg.run.points {
        let r = solve_point(x, &s.domain, &s.data, &params, cfg.params.path);
        if let Ok(res) = &r {
            ok += 1;
            worst = worst.max(s.error(x, res.chosen));
        }
        table.push(chosen_row(s, x, &r));
        results.push(point_json(s, x, &r));
    }
    Ok(Report {
        summary: format!(
            "reconstruct: {ok}/{} points solved ({} path), largest oracle error {:.3e}",
            cfg.run.points.len(),
            cfg.params.path,
            worst
        ),
        results: Value::Array(results),
        table,
        passed: true,
    })
}

fn convergence(cfg: &ExperimentConfig, s: &Setup) -> Result<Report, RunError> {
    let params = cfg.params.carleman();
    let mut h = coord_header(s.domain.dim());
    h.extend(["n", "re", "im", "abs_error", "mass_re", "mass_im", "chosen", "status"].map(String::from));
    let mut table = Table::new(h);
    let mut results = vec![];
    let mut passed = true;
    let mut finals = vec![];
    for x in &cfg.run.points {
        let r = solve_point(x, &s.domain, &s.data, &params, cfg.params.path);
        match &r {
            Ok(res) => {
                let d = &res.diagnostics;
                for (i, n) in params.schedule.iter().enumerate() {
                    let (v, m) = (d.values[i], d.kernel_mass[i]);
                    let mut row = coords(x);
                    row.extend([
                        n.to_string(),
                        fmt_f64(v.re),
                        fmt_f64(v.im),
                        fmt_f64(s.error(x, v)),
                        fmt_f64(m.re),
                        fmt_f64(m.im),
                        (i == d.chosen_index).to_string(),
                        if v.re.is_finite() { "ok".into() } else { "precision budget exceeded".into() },
                    ]);
                    table.push(row);
                }
                let last = d.values.iter().rposition(|v| v.re.is_finite());
                let final_err = last.map_or(f64::NAN, |i| s.error(x, d.values[i]));
                finals.push(final_err);
                if let Some(th) = cfg.run.threshold {
                    passed &= final_err < th;
                }
                let errors: Vec<_> = d.values.iter().map(|v| json_f64(s.error(x, *v))).collect();
                results.push(json!({
                    "point": x,
                    "errors": errors,
                    "final_error": json_f64(final_err),
                    "chosen_n": res.chosen_n(),
                    "converged": res.converged,
                    "status": "ok",
                }));
            }
            Err(e) => {
                passed &= cfg.run.threshold.is_none();
                let mut row = coords(x);
                row.extend([String::new(), fmt_f64(f64::NAN), fmt_f64(f64::NAN), fmt_f64(f64::NAN)]);
                row.extend([fmt_f64(f64::NAN), fmt_f64(f64::NAN), "false".into(), e.to_string()]);
                table.push(row);
                results.push(json!({ "point": x, "status": e.to_string() }));
            }
        }
    }
    let worst = finals.iter().cloned().fold(f64::NAN, f64::max);
    let verdict = match cfg.run.threshold {
        Some(th) => format!(", threshold {th:.1e}: {}", if passed { "PASS" } else { "FAIL" }),
        None => String::new(),
    };
    Ok(Report {
        summary: format!(
            "convergence: {} points over N = {:?}, largest final error {:.3e}{verdict}",
            cfg.run.points.len(),
            params.schedule,
            worst
        ),
        results: Value::Array(results),
        table,
        passed,
    })
}

fn noise_sweep(cfg: &ExperimentConfig, s: &Setup) -> Result<Report, RunError> {
    let params = cfg.params.carleman();
    let dc = cfg.data.as_ref().expect("validated config has data");
    let clean = CauchyData::analytic(s.exact.clone().expect("validated noise-sweep has an oracle"));
    let mut h = vec!["delta".to_string()];
    h.extend(coord_header(s.domain.dim()));
    h.extend(["n", "re", "im", "abs_error", "minimizer", "status"].map(String::from));
    let mut table = Table::new(h);
    let mut results = vec![];
    let mut interior = 0;
    let mut total = 0;
    for &delta in &cfg.run.deltas {
        let noisy = add_noise(&clean, &s.domain, dc.noise_points, delta, cfg.seed)?;
        for x in &cfg.run.points {
            total += 1;
            let r = solve_point(x, &s.domain, &noisy, &params, cfg.params.path);
            let values = match &r {
                Ok(res) => res.diagnostics.values.clone(),
                Err(_) => vec![nan(); params.schedule.len()],
            };
            let errors: Vec<f64> = values.iter().map(|v| s.error(x, *v)).collect();
            let star = argmin(&errors);
            for (i, n) in params.schedule.iter().enumerate() {
                let mut row = vec![fmt_f64(delta)];
                row.extend(coords(x));
                row.extend([
                    n.to_string(),
                    fmt_f64(values[i].re),
                    fmt_f64(values[i].im),
                    fmt_f64(errors[i]),
                    (star == Some(i)).to_string(),
                    status(&r),
                ]);
                table.push(row);
            }
            let last = errors.len() - 1;
            let is_interior = star.is_some_and(|i| i > 0 && i < last);
            interior += is_interior as usize;
            results.push(json!({
                "delta": json_f64(delta),
                "point": x,
                "errors": errors.iter().map(|e| json_f64(*e)).collect::<Vec<_>>(),
                "n_star": star.map(|i| params.schedule[i]),
                "error_star": json_f64(star.map_or(f64::NAN, |i| errors[i])),
                "error_last": json_f64(errors[last]),
                "interior_minimizer": is_interior,
                "status": status(&r),
            }));
        }
    }
    Ok(Report {
        summary: format!(
            "noise-sweep: {} noise levels x {} points, interior error minimizer in {interior}/{total} curves",
            cfg.run.deltas.len(),
            cfg.run.points.len()
        ),
        results: Value::Array(results),
        table,
        passed: true,
    })
}

fn field(cfg: &ExperimentConfig, s: &Setup) -> Result<Report, RunError> {
    let params = cfg.params.carleman();
    let grid = field_grid(&s.domain, &s.data, &params, &cfg.run.axes, cfg.params.path)?;
    let mut table = chosen_header(s.domain.dim());
    let mut results = vec![];
    let mut ok = 0;
    for entry in &grid {
        ok += entry.result.is_ok() as usize;
        table.push(chosen_row(s, &entry.point, &entry.result));
        results.push(point_json(s, &entry.point, &entry.result));
    }
    Ok(Report {
        summary: format!("field: {ok}/{} grid points solved ({} path)", grid.len(), cfg.params.path),
        results: Value::Array(results),
        table,
        passed: true,
    })
}
