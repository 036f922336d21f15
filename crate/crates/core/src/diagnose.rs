//! End-to-end diagnostics of a solved pair: boundary extraction followed by
//! pass/fail checks of the regularity surrogates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatness::{flatness_decay_trace, DecayReport};
use crate::free_boundary::{
    extract_boundaries_with, nondegeneracy_scan, proportionality_fit, BoundarySet, ExtractOptions,
    FreeBoundarySample, Phase, KAPPA,
};
use crate::frequency::{
    cubic_height_check, default_c_grid, default_radii, frequency_trace, lower_bound_check, monotonicity_report,
    planted_profile, w_fields_with, FrequencyTrace, WFields, FLOOR_CELLS, SIGMA,
};
use crate::grid::{ball_inside, Vec2};
use crate::pair::FieldPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedOptions {
    pub lambda: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyOptions {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Increasing radii; defaults to the geometric 0.85 schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Analyse a planted homogeneous profile about `center_hint` instead of the fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<PlantedOptions>,
    /// Allowed `|Ñ − λ|` for the planted calibration check.
    #[serde(default = "default_calibration_tol")]
    pub calibration_tol: f64,
    /// Largest radius used by the calibration check.
    #[serde(default = "default_calibration_rmax")]
    pub calibration_rmax: f64,
}

impl Default for FrequencyOptions {
    fn default() -> Self {
        from_empty()
    }
}

fn default_sigma() -> f64 {
    SIGMA
}
fn default_calibration_tol() -> f64 {
    0.05
}
fn default_calibration_rmax() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseOptions {
    /// The analysis point is the interior two-phase sample nearest to this.
    #[serde(default)]
    pub center_hint: Vec2,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Gradient probe length in cells.
    #[serde(default = "default_probe_cells")]
    pub probe_cells: f64,
    /// Samples closer than this to the domain edge are not checked.
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_bernoulli_tol")]
    pub bernoulli_tol: f64,
    /// Raised to `8h` on coarse grids.
    #[serde(default = "default_prop_radius")]
    pub proportionality_radius: f64,
    /// Bound on both the relative deviation of `c` and the fit residual.
    #[serde(default = "default_prop_tol")]
    pub proportionality_tol: f64,
    #[serde(default = "default_nondeg_radii")]
    pub nondegeneracy_radii: Vec<f64>,
    #[serde(default = "default_nondeg_min")]
    pub nondegeneracy_min: f64,
    /// Strictly decreasing radii for the flatness decay trace.
    #[serde(default = "default_flat_radii")]
    pub flatness_radii: Vec<f64>,
    /// `C` in `|ν(r') − ν(r)| ≤ C ε(r)`.
    #[serde(default = "default_normal_drift")]
    pub normal_drift_c: f64,
    #[serde(default)]
    pub frequency: FrequencyOptions,
    /// Checks whose failure counts as a failed run.
    #[serde(default = "default_required")]
    pub required: Vec<String>,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        from_empty()
    }
}

fn from_empty<T: serde::de::DeserializeOwned>() -> T {
    serde_json::from_value(serde_json::Value::Object(Default::default())).expect("all fields defaulted")
}

fn default_kappa() -> f64 {
    KAPPA
}
fn default_probe_cells() -> f64 {
    4.0
}
fn default_margin() -> f64 {
    0.1
}
fn default_bernoulli_tol() -> f64 {
    0.05
}
fn default_prop_radius() -> f64 {
    0.1
}
fn default_prop_tol() -> f64 {
    0.05
}
fn default_nondeg_radii() -> Vec<f64> {
    vec![0.1, 0.2]
}
fn default_nondeg_min() -> f64 {
    0.1
}
fn default_flat_radii() -> Vec<f64> {
    vec![0.4, 0.28, 0.196]
}
fn default_normal_drift() -> f64 {
    1.0
}
fn default_required() -> Vec<String> {
    vec!["bernoulli".into(), "proportionality".into(), "nondegeneracy".into()]
}

pub const CHECK_NAMES: [&str; 10] = [
    "bernoulli",
    "one_phase",
    "proportionality",
    "nondegeneracy",
    "flatness_decay",
    "normal_drift",
    "frequency_lower_bound",
    "frequency_calibration",
    "cubic_height",
    "monotonicity",
];

impl DiagnoseOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        for (name, v) in [
            ("kappa", self.kappa),
            ("probe_cells", self.probe_cells),
            ("bernoulli_tol", self.bernoulli_tol),
            ("proportionality_radius", self.proportionality_radius),
            ("proportionality_tol", self.proportionality_tol),
            ("normal_drift_c", self.normal_drift_c),
            ("frequency.calibration_tol", self.frequency.calibration_tol),
            ("frequency.calibration_rmax", self.frequency.calibration_rmax),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.margin >= 0.0) {
            return bad("margin must be nonnegative".into());
        }
        if self.nondegeneracy_radii.iter().any(|&r| !(r > 0.0)) {
            return bad("nondegeneracy_radii must be positive".into());
        }
        if self.flatness_radii.is_empty() || self.flatness_radii.windows(2).any(|w| w[1] >= w[0]) {
            return bad("flatness_radii must be nonempty and strictly decreasing".into());
        }
        let f = &self.frequency;
        if !(f.sigma > 0.0 && f.sigma < 0.25) {
            return bad("frequency.sigma must lie in (0, 1/4)".into());
        }
        if let Some(r) = &f.radii {
            if r.is_empty() || r.windows(2).any(|w| w[1] <= w[0]) {
                return bad("frequency.radii must be nonempty and strictly increasing".into());
            }
        }
        if let Some(p) = &f.planted {
            if !(p.lambda > 0.0 && p.amplitude > 0.0) {
                return bad("frequency.planted lambda and amplitude must be positive".into());
            }
        }
        for name in &self.required {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return bad(format!("unknown check `{name}`; expected one of {}", CHECK_NAMES.join(", ")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Nothing to test: no samples of the relevant kind.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub required: bool,
    /// Headline measurement compared against `threshold`.
    pub value: Option<f64>,
    pub threshold: f64,
    /// Number of samples, rows or ratios the check looked at.
    pub count: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub measured: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    fn new(name: &str, threshold: f64) -> Self {
        Check {
            name: name.into(),
            status: CheckStatus::Vacuous,
            required: false,
            value: None,
            threshold,
            count: 0,
            measured: BTreeMap::new(),
            detail: String::new(),
        }
    }

    fn judged(mut self, value: f64, count: usize, pass: bool) -> Self {
        self.value = Some(value);
        self.count = count;
        self.status = if pass { CheckStatus::Pass } else { CheckStatus::Fail };
        self
    }

    fn failed(mut self, detail: impl Into<String>) -> Self {
        self.status = CheckStatus::Fail;
        self.detail = detail.into();
        self
    }

    fn vacuous(mut self, detail: impl Into<String>) -> Self {
        self.status = CheckStatus::Vacuous;
        self.detail = detail.into();
        self
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.measured.insert(key.into(), v);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub boundary: BoundarySet,
    /// Interior two-phase sample nearest the hint.
    pub point: Option<FreeBoundarySample>,
    pub flatness: Option<DecayReport>,
    pub frequency: Option<FrequencyTrace>,
    pub checks: Vec<Check>,
}

impl Diagnosis {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Names of required checks that failed.
    pub fn required_failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.required && c.status == CheckStatus::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn interior(pair: &FieldPair, s: &FreeBoundarySample, margin: f64) -> bool {
    ball_inside(&pair.u, s.location, margin)
}

/// The interior two-phase sample nearest to `hint`.
pub fn analysis_point(pair: &FieldPair, boundary: &BoundarySet, hint: Vec2, margin: f64) -> Option<FreeBoundarySample> {
    boundary
        .of_phase(Phase::TwoPhase)
        .filter(|s| interior(pair, s, margin))
        .min_by(|a, b| a.location.dist(hint).total_cmp(&b.location.dist(hint)))
        .copied()
}

pub fn extract(pair: &FieldPair, opts: &DiagnoseOptions) -> BoundarySet {
    let eo = ExtractOptions { kappa: opts.kappa, probe: opts.probe_cells, ..ExtractOptions::default() };
    extract_boundaries_with(pair, &eo)
}

fn residual_check(name: &str, pair: &FieldPair, boundary: &BoundarySet, phases: &[Phase], opts: &DiagnoseOptions) -> Check {
    let chk = Check::new(name, opts.bernoulli_tol);
    let res: Vec<f64> = boundary
        .samples
        .iter()
        .filter(|s| phases.contains(&s.phase) && interior(pair, s, opts.margin))
        .map(|s| s.residual)
        .collect();
    if res.is_empty() {
        return chk.vacuous("no interior samples of this phase");
    }
    let finite: Vec<f64> = res.iter().copied().filter(|r| r.is_finite()).collect();
    let max = finite.iter().copied().fold(0.0, f64::max);
    let skipped = res.len() - finite.len();
    chk.judged(max, finite.len(), skipped == 0 && max <= opts.bernoulli_tol)
        .with("unprobed", skipped as f64)
}

fn proportionality_check(pair: &FieldPair, boundary: &BoundarySet, opts: &DiagnoseOptions) -> Check {
    let c0 = (pair.params.lambda_u / pair.params.lambda_v).sqrt();
    let chk = Check::new("proportionality", opts.proportionality_tol).with("c_expected", c0);
    // the fit needs at least 8 cells across
    let r = opts.proportionality_radius.max(8.0 * boundary.h);
    let chk = chk.with("radius", r);
    let mut fits = Vec::new();
    for s in boundary.of_phase(Phase::TwoPhase) {
        if !interior(pair, s, opts.margin.max(r)) {
            continue;
        }
        match proportionality_fit(pair, s.location, r) {
            Ok(f) => fits.push(f),
            Err(e) => return chk.failed(format!("fit at ({}, {}): {e}", s.location.x, s.location.y)),
        }
    }
    if fits.is_empty() {
        return chk.vacuous("no interior two-phase samples");
    }
    let dev = fits.iter().map(|(c, _)| (c / c0 - 1.0).abs()).fold(0.0, f64::max);
    let res = fits.iter().map(|(_, rr)| *rr).fold(0.0, f64::max);
    let (cmin, cmax) = fits.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, _)| (a.min(*c), b.max(*c)));
    let tol = opts.proportionality_tol;
    chk.judged(dev, fits.len(), dev <= tol && res <= tol)
        .with("max_residual", res)
        .with("c_min", cmin)
        .with("c_max", cmax)
}

fn nondegeneracy_check(pair: &FieldPair, boundary: &BoundarySet, opts: &DiagnoseOptions) -> Check {
    let chk = Check::new("nondegeneracy", opts.nondegeneracy_min);
    let scan = nondegeneracy_scan(pair, boundary, &opts.nondegeneracy_radii);
    if scan.rows.is_empty() {
        return chk.vacuous("no sample balls inside the domain");
    }
    chk.judged(scan.min_ratio, scan.rows.len(), scan.min_ratio >= opts.nondegeneracy_min)
        .with("skipped", scan.skipped as f64)
}

/// Ratios and normal steps between consecutive radii where both lie above the floor.
fn decay_checks(report: &DecayReport, opts: &DiagnoseOptions) -> (Check, Check) {
    let mut decay = Check::new("flatness_decay", 1.0).with("start_flat", f64::from(u8::from(report.start_flat)));
    if let Some(s) = report.slope {
        decay = decay.with("slope", s);
    }
    let drift = Check::new("normal_drift", opts.normal_drift_c);
    let c = &report.certificates;
    let usable: Vec<usize> = (0..c.len().saturating_sub(1))
        .filter(|&k| {
            !report.floor[k] && !report.floor[k + 1] && c[k].epsilon.is_finite() && c[k + 1].epsilon.is_finite()
        })
        .collect();
    if usable.is_empty() {
        let why = "no consecutive radii above the floor";
        return (decay.vacuous(why), drift.vacuous(why));
    }
    let max_ratio = usable.iter().map(|&k| report.ratios[k]).fold(0.0, f64::max);
    let max_drift = usable
        .iter()
        .map(|&k| report.normal_steps[k] / c[k].epsilon.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    (
        decay.judged(max_ratio, usable.len(), max_ratio <= 1.0),
        drift.judged(max_drift, usable.len(), max_drift <= opts.normal_drift_c),
    )
}

fn frequency_checks(trace: &FrequencyTrace, opts: &DiagnoseOptions) -> Vec<Check> {
    let lb = lower_bound_check(trace);
    let mut lower = Check::new("frequency_lower_bound", 1.5 - lb.tol);
    lower = match lb.min_ntilde {
        Some(m) => lower.judged(m, lb.rows_used, lb.pass),
        None => lower.failed("every row is truncated or below the floor"),
    };
    let cubic = match cubic_height_check(trace) {
        Ok(c) => Check::new("cubic_height", 2.7).judged(c.slope, c.rows_used, c.pass),
        Err(e) => Check::new("cubic_height", 2.7).failed(e.to_string()),
    };
    let m = monotonicity_report(trace, &default_c_grid());
    let mono = Check::new("monotonicity", f64::INFINITY)
        .judged(m.c, trace.rows.len(), m.c.is_finite())
        .with("max_drop", m.max_drop);
    let mut out = vec![lower, cubic, mono];
    if let Some(p) = &opts.frequency.planted {
        let f = &opts.frequency;
        let floor = FLOOR_CELLS * trace.grid_h;
        let rows: Vec<f64> = trace
            .rows
            .iter()
            .filter(|w| w.r >= floor - 1e-12 && w.r <= f.calibration_rmax + 1e-12)
            .map(|w| w.ntilde)
            .collect();
        let chk = Check::new("frequency_calibration", f.calibration_tol).with("lambda", p.lambda);
        out.push(if rows.is_empty() {
            chk.failed("no rows between the floor and calibration_rmax")
        } else {
            let dev = rows.iter().map(|n| (n - p.lambda).abs()).fold(0.0, f64::max);
            chk.judged(dev, rows.len(), dev <= f.calibration_tol)
        });
    }
    out
}

/// `W` fields for the frequency analysis: planted, or about the analysis point.
pub fn frequency_fields(
    pair: &FieldPair,
    boundary: &BoundarySet,
    point: Option<&FreeBoundarySample>,
    opts: &DiagnoseOptions,
) -> Result<Option<WFields>> {
    if let Some(p) = &opts.frequency.planted {
        let u = &pair.u;
        return planted_profile(p.lambda, p.amplitude, *u.spec(), u.domain(), pair.params, opts.center_hint, Vec2::E_Y)
            .map(Some);
    }
    match point {
        Some(s) => w_fields_with(pair, s.location, s.normal, boundary).map(Some),
        None => Ok(None),
    }
}

pub fn run_frequency(wf: &WFields, opts: &DiagnoseOptions) -> Result<FrequencyTrace> {
    let radii = opts.frequency.radii.clone().unwrap_or_else(|| default_radii(wf.spec().h));
    frequency_trace(wf, &radii, opts.frequency.sigma)
}

/// Every check, with `required` flags applied.
pub fn diagnose(pair: &FieldPair, opts: &DiagnoseOptions) -> Result<Diagnosis> {
    opts.validate()?;
    let boundary = extract(pair, opts);
    let point = analysis_point(pair, &boundary, opts.center_hint, opts.margin);
    let mut checks = vec![
        residual_check("bernoulli", pair, &boundary, &[Phase::TwoPhase], opts),
        residual_check("one_phase", pair, &boundary, &[Phase::OnePhaseU, Phase::OnePhaseV], opts),
        proportionality_check(pair, &boundary, opts),
        nondegeneracy_check(pair, &boundary, opts),
    ];

    let flatness = match &point {
        Some(s) => match flatness_decay_trace(pair, s.location, &opts.flatness_radii) {
            Ok(r) => {
                let (a, b) = decay_checks(&r, opts);
                checks.extend([a, b]);
                Some(r)
            }
            Err(e) => {
                let msg = e.to_string();
                checks.push(Check::new("flatness_decay", 1.0).failed(msg.clone()));
                checks.push(Check::new("normal_drift", opts.normal_drift_c).failed(msg));
                None
            }
        },
        None => {
            let why = "no interior two-phase point";
            checks.push(Check::new("flatness_decay", 1.0).vacuous(why));
            checks.push(Check::new("normal_drift", opts.normal_drift_c).vacuous(why));
            None
        }
    };

    let frequency = match frequency_fields(pair, &boundary, point.as_ref(), opts)? {
        Some(wf) => {
            let t = run_frequency(&wf, opts)?;
            checks.extend(frequency_checks(&t, opts));
            Some(t)
        }
        None => {
            let why = "no interior two-phase point";
            for (n, t) in [("frequency_lower_bound", 1.4), ("cubic_height", 2.7), ("monotonicity", f64::INFINITY)] {
                checks.push(Check::new(n, t).vacuous(why));
            }
            None
        }
    };
    if opts.frequency.planted.is_none() {
        checks.push(Check::new("frequency_calibration", opts.frequency.calibration_tol).vacuous("no planted profile"));
    }

    for c in &mut checks {
        c.required = opts.required.contains(&c.name);
    }
    Ok(Diagnosis { boundary, point, flatness, frequency, checks })
}
