use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bimembrane::diagnose::{self, Diagnosis};
use bimembrane::flatness::flatness_decay_trace;
use bimembrane::frequency::{cubic_height_check, default_c_grid, lower_bound_check, monotonicity_report};
use bimembrane::gridio::{fmt_real, load_grid, save_grid};
use bimembrane::solver::{solve, BoundaryData};
use bimembrane::thin_limits::{
    coarse_sup_diff, complementarity_audit, solve_transmission, solve_two_membrane, write_convergence_csv,
    ConvergenceRow, MembraneMode, MembranePair,
};
use bimembrane::{Domain, FieldPair, GridSpec, ScalarField};
use serde_json::{json, Map, Value};

use crate::config::{BoundaryConfig, ConfigError, LinearizedConfig, Resolved, RunConfig};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
    Checks(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Checks(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Numerical(m) => f.write_str(m),
            CliError::Checks(names) => write!(f, "required checks failed: {}", names.join(", ")),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<bimembrane::Error> for CliError {
    fn from(e: bimembrane::Error) -> Self {
        use bimembrane::Error as E;
        match e {
            E::Io(_) | E::Parse(_) => CliError::Io(e.to_string()),
            E::InvalidGrid(_) | E::InvalidParams(_) | E::InfeasibleData(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// A validated config together with its output directory.
pub struct Run {
    pub config: RunConfig,
    pub resolved: Resolved,
    pub out: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        let p = self.path(name);
        File::create(&p).map(BufWriter::new).map_err(|e| io_err(&p, e))
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
        let p = self.path(name);
        let mut w = self.create(name)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&p, e))
    }

    fn write_json(&self, name: &str, v: &Value) -> CliResult<()> {
        let text = serde_json::to_string_pretty(v).expect("serializable");
        self.write_with(name, |w| writeln!(w, "{text}"))
    }

    fn save(&self, name: &str, f: &ScalarField) -> CliResult<()> {
        save_grid(f, self.path(name)).map_err(|e| io_err(&self.path(name), e))
    }

    fn domain(&self) -> Domain {
        self.config.domain
    }

    /// Merges top-level entries into `summary.json`, keeping those written by other commands.
    fn update_summary(&self, entries: Value) -> CliResult<()> {
        let p = self.path("summary.json");
        let mut root = match fs::read_to_string(&p) {
            Ok(text) => match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                _ => Map::new(),
            },
            Err(_) => Map::new(),
        };
        root.insert(
            "config".into(),
            serde_json::to_value(self.config.resolved(&self.resolved)).expect("serializable"),
        );
        if let Value::Object(m) = entries {
            root.extend(m);
        }
        self.write_json("summary.json", &Value::Object(root))
    }

    /// Planted analyses run on zero fields of the configured grid.
    fn fields_or_planted(&self, dir: Option<&Path>) -> CliResult<FieldPair> {
        if self.config.diagnostics.frequency.planted.is_none() {
            return self.load_fields(dir);
        }
        let (spec, d) = (self.resolved.spec, self.domain());
        Ok(FieldPair::new(ScalarField::zeros(spec, d), ScalarField::zeros(spec, d), self.resolved.params)?)
    }

    fn load_fields(&self, dir: Option<&Path>) -> CliResult<FieldPair> {
        let dir = dir.unwrap_or(&self.out);
        let load = |name: &str| {
            let p = dir.join(name);
            load_grid(&p).map_err(|e| io_err(&p, e))
        };
        let (u, v) = (load("u.grid")?, load("v.grid")?);
        FieldPair::new(u, v, self.resolved.params)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
    }
}

fn section(name: &str, body: Value) -> Value {
    json!({ name: body })
}

pub fn prepare(config: RunConfig, out: PathBuf) -> CliResult<Run> {
    let resolved = config.validate()?;
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let mut config = config;
    config.output_dir = Some(out.clone());
    Ok(Run { config, resolved, out })
}

fn boundary_data(run: &Run) -> CliResult<BoundaryData> {
    let spec = run.resolved.spec;
    match &run.config.boundary {
        BoundaryConfig::Preset(p) => Ok(p.data(spec, run.domain(), run.resolved.params)),
        BoundaryConfig::File(files) => {
            let load = |p: &Path| load_grid(p).map_err(|e| io_err(p, e));
            let (u0, v0) = (load(&files.u)?, load(&files.v)?);
            for (name, f) in [("boundary.file.u", &u0), ("boundary.file.v", &v0)] {
                if *f.spec() != spec || f.domain() != run.domain() {
                    return Err(ConfigError::new(name, "grid file does not match grid and domain").into());
                }
            }
            Ok(BoundaryData { u0, v0 })
        }
    }
}

pub fn cmd_solve(run: &Run) -> CliResult<()> {
    let data = boundary_data(run)?;
    data.validate().map_err(|e| CliError::Config(format!("config: boundary: {e}")))?;
    let res = solve(&data, run.resolved.params, &run.resolved.solve)?;
    run.save("u.grid", &res.pair.u)?;
    run.save("v.grid", &res.pair.v)?;
    run.write_with("energy_trace.csv", |w| {
        writeln!(w, "iter,delta,total_smoothed,total_sharp")?;
        for r in &res.energy_trace {
            writeln!(w, "{},{},{},{}", r.iter, fmt_real(r.delta), fmt_real(r.total_smoothed), fmt_real(r.total_sharp))?;
        }
        Ok(())
    })?;
    let last = res.energy_trace.last();
    let body = json!({
        "converged": res.converged,
        "iterations": res.iterations,
        "line_search_failures": res.line_search_failures,
        "energy_sharp": last.map(|r| r.total_sharp),
        "energy_smoothed": last.map(|r| r.total_smoothed),
    });
    run.update_summary(body.clone())?;
    if !res.converged {
        eprintln!("warning: solver stopped at the iteration cap without converging");
    }
    println!("{}", serde_json::to_string(&body).expect("serializable"));
    Ok(())
}

fn write_diagnosis_csvs(run: &Run, d: &Diagnosis) -> CliResult<()> {
    run.write_with("boundary.csv", |w| d.boundary.write_csv(w).map_err(std::io::Error::other))?;
    run.write_with("flatness_trace.csv", |w| match &d.flatness {
        Some(r) => r.write_csv(w).map_err(std::io::Error::other),
        None => writeln!(w, "r,eps,nu_x,nu_y,gamma_u,floor_flag"),
    })?;
    run.write_with("frequency_trace.csv", |w| match &d.frequency {
        Some(t) => t.write_csv(w).map_err(std::io::Error::other),
        None => writeln!(w, "r,H,A,B,Htilde,dHtilde_bulk,dHtilde_diff,Ntilde,truncated"),
    })
}

pub fn cmd_diagnose(run: &Run, fields: Option<&Path>) -> CliResult<()> {
    let pair = run.fields_or_planted(fields)?;
    let d = diagnose::diagnose(&pair, &run.config.diagnostics)?;
    write_diagnosis_csvs(run, &d)?;
    let (bmax, _) = d.boundary.max_residual(bimembrane::free_boundary::Phase::TwoPhase);
    let prop = d.check("proportionality");
    let checks = json!({
        "point": d.point.map(|s| json!({"x": s.location.x, "y": s.location.y, "nu_x": s.normal.x, "nu_y": s.normal.y})),
        "samples": d.boundary.samples.len(),
        "bernoulli_max_residual": d.check("bernoulli").and_then(|c| c.value).map(|_| bmax),
        "proportionality_c": prop.and_then(|c| c.measured.get("c_min").map(|lo| json!([lo, c.measured["c_max"]]))),
        "checks": d.checks,
        "required_failed": d.required_failures(),
    });
    run.write_json("checks.json", &checks)?;
    let statuses: Map<String, Value> =
        d.checks.iter().map(|c| (c.name.clone(), serde_json::to_value(c.status).expect("ok"))).collect();
    run.update_summary(section("diagnose", Value::Object(statuses)))?;
    for c in &d.checks {
        let v = c.value.map(fmt_real).unwrap_or_else(|| "-".into());
        let req = if c.required { " (required)" } else { "" };
        println!("{:<22} {:<8} value={v}{req}", c.name, format!("{:?}", c.status).to_lowercase());
    }
    let failed = d.required_failures();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Checks(failed.into_iter().map(String::from).collect()))
    }
}

pub fn cmd_flatness(run: &Run, fields: Option<&Path>) -> CliResult<()> {
    let pair = run.load_fields(fields)?;
    let opts = &run.config.diagnostics;
    let boundary = diagnose::extract(&pair, opts);
    let point = diagnose::analysis_point(&pair, &boundary, opts.center_hint, opts.margin)
        .ok_or_else(|| CliError::Numerical("no interior two-phase point to analyse".into()))?;
    let report = flatness_decay_trace(&pair, point.location, &opts.flatness_radii)?;
    run.write_with("flatness_trace.csv", |w| report.write_csv(w).map_err(std::io::Error::other))?;
    let body = serde_json::to_value(&report).expect("serializable");
    run.write_json("flatness.json", &body)?;
    run.update_summary(section("flatness", json!({"start_flat": report.start_flat, "slope": report.slope})))?;
    for c in &report.certificates {
        println!("r={} eps={}", fmt_real(c.r), fmt_real(c.epsilon));
    }
    Ok(())
}

pub fn cmd_frequency(run: &Run, fields: Option<&Path>) -> CliResult<()> {
    let opts = &run.config.diagnostics;
    let pair = run.fields_or_planted(fields)?;
    let boundary = diagnose::extract(&pair, opts);
    let point = diagnose::analysis_point(&pair, &boundary, opts.center_hint, opts.margin);
    let wf = diagnose::frequency_fields(&pair, &boundary, point.as_ref(), opts)?
        .ok_or_else(|| CliError::Numerical("no interior two-phase point to analyse".into()))?;
    let trace = diagnose::run_frequency(&wf, opts)?;
    run.write_with("frequency_trace.csv", |w| trace.write_csv(w).map_err(std::io::Error::other))?;
    let lb = lower_bound_check(&trace);
    let cubic = cubic_height_check(&trace).ok();
    let mono = monotonicity_report(&trace, &default_c_grid());
    let body = json!({
        "center": trace.center,
        "nu": trace.nu,
        "lower_bound": lb,
        "cubic_height": cubic,
        "monotonicity": mono,
        "derivative_mismatch": trace.derivative_mismatch,
        "tail_bound": trace.tail_bound,
    });
    run.write_json("frequency.json", &body)?;
    run.update_summary(section("frequency", body))?;
    for w in &trace.rows {
        println!("r={} Ntilde={} truncated={}", fmt_real(w.r), fmt_real(w.ntilde), w.truncated);
    }
    Ok(())
}

fn solve_linear(cfg: &LinearizedConfig, spec: GridSpec) -> CliResult<MembranePair> {
    let (dh, dw) = cfg.preset.data(spec, cfg.lambda_h, cfg.lambda_w)?;
    let f = match cfg.preset.mode() {
        MembraneMode::TwoMembrane => solve_two_membrane,
        MembraneMode::Transmission => solve_transmission,
    };
    Ok(f(&dh, &dw, cfg.lambda_h, cfg.lambda_w, &cfg.options)?)
}

/// Sup error against the exact pair when one is known, else against the `h/4` solution.
fn convergence(cfg: &LinearizedConfig) -> CliResult<Vec<ConvergenceRow>> {
    cfg.spacings
        .iter()
        .map(|&h| {
            let spec = GridSpec::centered(1.0, h)?;
            let sol = solve_linear(cfg, spec)?;
            let err = match cfg.preset.exact(spec, cfg.lambda_h, cfg.lambda_w)? {
                Some(ex) => sol.h.sup_diff(&ex.h).max(sol.w.sup_diff(&ex.w)),
                None => {
                    let fine = solve_linear(cfg, GridSpec::centered(1.0, h / 4.0)?)?;
                    coarse_sup_diff(&sol.h, &fine.h)?.max(coarse_sup_diff(&sol.w, &fine.w)?)
                }
            };
            Ok(ConvergenceRow { h, sup_error: err, sweeps: sol.sweeps })
        })
        .collect()
}

pub fn cmd_linearized(run: &Run) -> CliResult<()> {
    let cfg = run
        .config
        .linearized
        .as_ref()
        .ok_or_else(|| CliError::from(ConfigError::new("linearized", "section required by this command")))?;
    if run.domain() != (Domain::HalfDisk { radius: 1.0 }) {
        return Err(ConfigError::new("domain", "linearized problems live on the unit half_disk").into());
    }
    let pair = solve_linear(cfg, run.resolved.spec)?;
    run.save("h.grid", &pair.h)?;
    run.save("w.grid", &pair.w)?;
    let audit = complementarity_audit(&pair)?;
    run.write_with("complementarity.csv", |w| audit.write_csv(w))?;
    let rows = convergence(cfg)?;
    run.write_with("convergence.csv", |w| write_convergence_csv(&rows, &mut *w))?;
    let monotone = rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error);
    let body = json!({
        "preset": cfg.preset.name(),
        "mode": pair.mode.name(),
        "sweeps": pair.sweeps,
        "residual": pair.residual,
        "audit_max": audit.max,
        "audit_pass": audit.passes(cfg.audit_tol),
        "convergence": rows.iter().map(|r| json!({"h": r.h, "sup_error": r.sup_error, "sweeps": r.sweeps})).collect::<Vec<_>>(),
        "convergence_monotone": monotone,
    });
    run.update_summary(section("linearized", body))?;
    println!(
        "{} ({}): sweeps={} audit_max={}",
        cfg.preset.name(),
        pair.mode.name(),
        pair.sweeps,
        fmt_real(audit.max)
    );
    for r in &rows {
        println!("h={} sup_error={}", fmt_real(r.h), fmt_real(r.sup_error));
    }
    if !audit.passes(cfg.audit_tol) {
        return Err(CliError::Checks(vec!["complementarity".into()]));
    }
    Ok(())
}
