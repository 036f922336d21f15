//! Linearized limit problems on the half-disk: the one-sided two-membrane
//! problem, the transmission problem, and the Signorini reference pair.
//!
//! Both solvers minimise `Λ_h Σ|∇h|² + Λ_w Σ|∇w|²` in edge form. Edges lying on
//! the thin row `y = 0` carry weight 1/2, which reproduces the ghost-reflection
//! Neumann stencil `(f_l + f_r + 2 f_up) / 4` at thin nodes.

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridSpec, ScalarField, Vec2};
use crate::solver::{colour, sor_factor, sweep, SweepOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembraneMode {
    TwoMembrane,
    Transmission,
}

impl MembraneMode {
    pub fn name(self) -> &'static str {
        match self {
            MembraneMode::TwoMembrane => "two_membrane",
            MembraneMode::Transmission => "transmission",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MembranePair {
    pub h: ScalarField,
    pub w: ScalarField,
    pub lambda_h: f64,
    pub lambda_w: f64,
    pub mode: MembraneMode,
    /// Sweeps used (0 for analytic pairs).
    pub sweeps: usize,
    /// Largest Gauss–Seidel correction in the final sweep.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearOptions {
    /// Stop once the largest nodal correction is below `tol · max(1, ‖data‖∞)`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub order: SweepOrder,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions { tol: 1e-9, max_sweeps: 200_000, order: SweepOrder::Lexicographic }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Fixed,
    Interior,
    Thin,
}

#[derive(Clone, Copy)]
enum Constraint {
    Free,
    Ordered,
    Shared,
}

/// Node classification for the half-disk layout.
struct Layout {
    kinds: Vec<Kind>,
    unknown: Vec<usize>,
    nx: usize,
}

fn is_thin_row(spec: &GridSpec, j: usize) -> bool {
    spec.node(0, j).y.abs() < 1e-9 * spec.h
}

fn layout(f: &ScalarField) -> Result<Layout> {
    if !matches!(f.domain(), Domain::HalfDisk { .. }) {
        return Err(Error::InvalidGrid(format!(
            "thin-limit problems need a halfdisk domain, got {}",
            f.domain().name()
        )));
    }
    let spec = *f.spec();
    let nx = spec.nx;
    let mut kinds = vec![Kind::Fixed; spec.len()];
    let mut unknown = Vec::new();
    let mut thin_rows = 0;
    for (k, i, j) in f.masked_nodes() {
        if f.is_interior(i, j) {
            kinds[k] = Kind::Interior;
        } else if is_thin_row(&spec, j)
            && i > 0
            && i + 1 < nx
            && j + 1 < spec.ny
            && f.is_masked(i - 1, j)
            && f.is_masked(i + 1, j)
            && f.is_masked(i, j + 1)
        {
            kinds[k] = Kind::Thin;
            thin_rows += 1;
        } else {
            continue;
        }
        unknown.push(k);
    }
    if thin_rows == 0 {
        return Err(Error::InvalidGrid("no thin-set nodes on the row y = 0".into()));
    }
    Ok(Layout { kinds, unknown, nx })
}

fn check_lambdas(lh: f64, lw: f64) -> Result<()> {
    if !(lh.is_finite() && lw.is_finite() && lh > 0.0 && lw > 0.0) {
        return Err(Error::InvalidParams(format!(
            "membrane weights must be positive and finite, got ({lh}, {lw})"
        )));
    }
    Ok(())
}

fn check_data(name: &str, f: &ScalarField, lay: &Layout) -> Result<()> {
    for (k, _, _) in f.masked_nodes() {
        if lay.kinds[k] == Kind::Fixed && !f.get(k).is_finite() {
            return Err(Error::InfeasibleData(format!("{name} is not finite at node {k}")));
        }
    }
    Ok(())
}

struct Pair {
    h: Vec<f64>,
    w: Vec<f64>,
}

type Solved = (ScalarField, ScalarField, usize, f64);

fn run(
    data_h: &ScalarField,
    data_w: &ScalarField,
    lh: f64,
    lw: f64,
    constraint: Constraint,
    opts: &LinearOptions,
) -> Result<Solved> {
    match run_inner(data_h, data_w, lh, lw, constraint, opts)? {
        (out, true) => Ok(out),
        ((_, _, it, res), false) => Err(Error::NoConvergence { iterations: it, residual: res }),
    }
}

fn run_inner(
    data_h: &ScalarField,
    data_w: &ScalarField,
    lh: f64,
    lw: f64,
    constraint: Constraint,
    opts: &LinearOptions,
) -> Result<(Solved, bool)> {
    check_lambdas(lh, lw)?;
    if !data_h.same_layout(data_w) {
        return Err(Error::InvalidGrid("data_h and data_w layouts differ".into()));
    }
    if !(opts.tol > 0.0) || opts.max_sweeps == 0 {
        return Err(Error::InvalidParams("tol must be positive and max_sweeps nonzero".into()));
    }
    let lay = layout(data_h)?;
    check_data("data_h", data_h, &lay)?;
    check_data("data_w", data_w, &lay)?;

    let mut st = Pair { h: data_h.values().to_vec(), w: data_w.values().to_vec() };
    for &k in &lay.unknown {
        st.h[k] = 0.0;
        st.w[k] = 0.0;
    }
    let scale = lay
        .kinds
        .iter()
        .enumerate()
        .filter(|(k, &kd)| kd == Kind::Fixed && data_h.mask()[*k])
        .map(|(k, _)| st.h[k].abs().max(st.w[k].abs()))
        .fold(1.0, f64::max);
    let tol = opts.tol * scale;
    let spec = data_h.spec();
    let omega = sor_factor(spec.h, 2.0 * data_h.domain().param());
    let nx = lay.nx;
    let kinds = &lay.kinds;
    let colours = colour(&lay.unknown, nx);
    let s = lh + lw;

    let compute = |p: &Pair, k: usize| -> Option<(f64, f64, f64)> {
        let (h0, w0) = (p.h[k], p.w[k]);
        match kinds[k] {
            Kind::Fixed => None,
            Kind::Interior => {
                let hs = 0.25 * (p.h[k - 1] + p.h[k + 1] + p.h[k - nx] + p.h[k + nx]);
                let ws = 0.25 * (p.w[k - 1] + p.w[k + 1] + p.w[k - nx] + p.w[k + nx]);
                let corr = (hs - h0).abs().max((ws - w0).abs());
                Some((h0 + omega * (hs - h0), w0 + omega * (ws - w0), corr))
            }
            Kind::Thin => {
                let hs = 0.25 * (p.h[k - 1] + p.h[k + 1] + 2.0 * p.h[k + nx]);
                let ws = 0.25 * (p.w[k - 1] + p.w[k + 1] + 2.0 * p.w[k + nx]);
                let (hc, wc) = match constraint {
                    Constraint::Free => (hs, ws),
                    Constraint::Ordered if hs >= ws => (hs, ws),
                    Constraint::Ordered | Constraint::Shared => {
                        let t = (lh * hs + lw * ws) / s;
                        (t, t)
                    }
                };
                let corr = (hc - h0).abs().max((wc - w0).abs());
                let (ho, wo) = (h0 + omega * (hc - h0), w0 + omega * (wc - w0));
                let q = |a: f64, b: f64| lh * (a - hs).powi(2) + lw * (b - ws).powi(2);
                let keep = match constraint {
                    Constraint::Ordered => ho >= wo && q(ho, wo) <= q(h0, w0),
                    _ => true,
                };
                if keep {
                    Some((ho, wo, corr))
                } else {
                    Some((hc, wc, corr))
                }
            }
        }
    };

    let worst = Cell::new(0.0f64);
    for it in 1..=opts.max_sweeps {
        worst.set(0.0);
        sweep(&mut st, &lay.unknown, &colours, opts.order, compute, |p, k, (a, b, c)| {
            p.h[k] = a;
            p.w[k] = b;
            worst.set(worst.get().max(c));
        });
        if !worst.get().is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: worst.get() });
        }
        if worst.get() <= tol || it == opts.max_sweeps {
            let done = worst.get() <= tol;
            let h = ScalarField::from_values(*spec, data_h.domain(), mask_nan(st.h, data_h.mask()))?;
            let w = ScalarField::from_values(*spec, data_h.domain(), mask_nan(st.w, data_h.mask()))?;
            return Ok(((h, w, it, worst.get()), done));
        }
    }
    unreachable!("max_sweeps is nonzero")
}

fn mask_nan(mut v: Vec<f64>, mask: &[bool]) -> Vec<f64> {
    for (x, &m) in v.iter_mut().zip(mask) {
        if !m {
            *x = f64::NAN;
        }
    }
    v
}

/// Minimises the weighted Dirichlet energy over pairs with `h >= w` on the
/// thin set. Values of `data_h`, `data_w` at non-thin boundary nodes are the
/// Dirichlet data; everything else is ignored.
pub fn solve_two_membrane(
    data_h: &ScalarField,
    data_w: &ScalarField,
    lambda_h: f64,
    lambda_w: f64,
    opts: &LinearOptions,
) -> Result<MembranePair> {
    let (h, w, sweeps, residual) =
        run(data_h, data_w, lambda_h, lambda_w, Constraint::Ordered, opts)?;
    Ok(MembranePair { h, w, lambda_h, lambda_w, mode: MembraneMode::TwoMembrane, sweeps, residual })
}

/// Transmission problem: `h = w` on the thin set with balanced weighted fluxes.
pub fn solve_transmission(
    data_h: &ScalarField,
    data_w: &ScalarField,
    lambda_h: f64,
    lambda_w: f64,
    opts: &LinearOptions,
) -> Result<MembranePair> {
    let lay = layout(data_h)?;
    // the thin-set endpoints are Dirichlet nodes shared by both fields
    let spec = data_h.spec();
    for (k, i, j) in data_h.masked_nodes() {
        if lay.kinds[k] == Kind::Fixed && is_thin_row(spec, j) {
            let (a, b) = (data_h.get(k), data_w.get(k));
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::InfeasibleData(format!(
                    "traces differ at thin-set endpoint x = {}: {a} vs {b}",
                    spec.node(i, j).x
                )));
            }
        }
    }
    let (h, w, sweeps, residual) =
        run(data_h, data_w, lambda_h, lambda_w, Constraint::Shared, opts)?;
    Ok(MembranePair { h, w, lambda_h, lambda_w, mode: MembraneMode::Transmission, sweeps, residual })
}

/// Single harmonic field with Dirichlet data on the arc and zero Neumann
/// data on the thin set.
pub fn solve_mixed(data: &ScalarField, opts: &LinearOptions) -> Result<ScalarField> {
    Ok(run(data, data, 1.0, 1.0, Constraint::Free, opts)?.0)
}

/// `Λ_h E(h) + Λ_w E(w)` with the half-weighted thin row.
pub fn membrane_energy(pair: &MembranePair) -> f64 {
    pair.lambda_h * edge_energy(&pair.h) + pair.lambda_w * edge_energy(&pair.w)
}

fn edge_energy(f: &ScalarField) -> f64 {
    let spec = f.spec();
    let mut e = 0.0;
    for (k, i, j) in f.masked_nodes() {
        if i + 1 < spec.nx && f.is_masked(i + 1, j) {
            let wgt = if is_thin_row(spec, j) { 0.5 } else { 1.0 };
            e += wgt * (f.get(k + 1) - f.get(k)).powi(2);
        }
        if j + 1 < spec.ny && f.is_masked(i, j + 1) {
            e += (f.get(k + spec.nx) - f.get(k)).powi(2);
        }
    }
    e
}

/// `w₁ = r^{3/2} cos(3θ/2)`, `w₂ = 0`, recombined into `(h, w)` on the
/// half-disk of the given radius.
pub fn reference_signorini_pair(
    lambda_h: f64,
    lambda_w: f64,
    spec: GridSpec,
    radius: f64,
) -> Result<MembranePair> {
    check_lambdas(lambda_h, lambda_w)?;
    spec.validate()?;
    let domain = Domain::HalfDisk { radius };
    let w1 = ScalarField::from_fn(spec, domain, signorini_w1);
    let w2 = ScalarField::zeros(spec, domain);
    let mut pair = recombine(&w1, &w2, lambda_h, lambda_w)?;
    pair.mode = MembraneMode::TwoMembrane;
    Ok(pair)
}

/// Lowest homogeneous Signorini solution on the upper half-plane.
pub fn signorini_w1(p: Vec2) -> f64 {
    let r = p.norm();
    if r == 0.0 {
        return 0.0;
    }
    let theta = p.y.max(0.0).atan2(p.x).clamp(0.0, PI);
    r.powf(1.5) * (1.5 * theta).cos()
}

/// `(w₁, w₂) = (h − w, Λ_h h + Λ_w w)`.
pub fn split(pair: &MembranePair) -> (ScalarField, ScalarField) {
    let (lh, lw) = (pair.lambda_h, pair.lambda_w);
    let w1 = pair.h.map_nodes(|k, _, a| a - pair.w.get(k));
    let w2 = pair.h.map_nodes(|k, _, a| lh * a + lw * pair.w.get(k));
    (w1, w2)
}

/// Inverse of [`split`].
pub fn recombine(
    w1: &ScalarField,
    w2: &ScalarField,
    lambda_h: f64,
    lambda_w: f64,
) -> Result<MembranePair> {
    check_lambdas(lambda_h, lambda_w)?;
    if !w1.same_layout(w2) {
        return Err(Error::InvalidGrid("w1 and w2 layouts differ".into()));
    }
    let s = lambda_h + lambda_w;
    let h = w1.map_nodes(|k, _, a| (w2.get(k) + lambda_w * a) / s);
    let w = w1.map_nodes(|k, _, a| (w2.get(k) - lambda_h * a) / s);
    Ok(MembranePair {
        h,
        w,
        lambda_h,
        lambda_w,
        mode: MembraneMode::TwoMembrane,
        sweeps: 0,
        residual: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditRow {
    pub x: f64,
    pub gap: f64,
    pub dn_h: f64,
    pub dn_w: f64,
    pub flux_sum: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementarityAudit {
    pub rows: Vec<AuditRow>,
    pub max: f64,
}

impl ComplementarityAudit {
    pub fn passes(&self, tol: f64) -> bool {
        self.max <= tol
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        use crate::gridio::fmt_real;
        writeln!(out, "x,gap,dn_h,dn_w,flux_sum,audit")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_real(r.x),
                fmt_real(r.gap),
                fmt_real(r.dn_h),
                fmt_real(r.dn_w),
                fmt_real(r.flux_sum),
                fmt_real(r.value)
            )?;
        }
        Ok(())
    }
}

/// Discrete inner-normal derivative at a thin node from the ghost-reflection
/// stencil (assumes the field is discrete harmonic there).
fn normal_derivative(f: &ScalarField, k: usize) -> f64 {
    let spec = f.spec();
    let nx = spec.nx;
    (f.get(k - 1) + f.get(k + 1) + 2.0 * f.get(k + nx) - 4.0 * f.get(k)) / (2.0 * spec.h)
}

/// Per thin node, the complementarity defect. Two-membrane mode checks
/// `|min(h − w, −∂_N h)|`, `|min(h − w, ∂_N w)|` and, on contact, the flux
/// balance; transmission mode checks the flux balance alone.
pub fn complementarity_audit(pair: &MembranePair) -> Result<ComplementarityAudit> {
    let lay = layout(&pair.h)?;
    let spec = pair.h.spec();
    let mut rows = Vec::new();
    for (k, i, j) in pair.h.masked_nodes() {
        if lay.kinds[k] != Kind::Thin {
            continue;
        }
        let gap = pair.h.get(k) - pair.w.get(k);
        let dn_h = normal_derivative(&pair.h, k);
        let dn_w = normal_derivative(&pair.w, k);
        let flux_sum = pair.lambda_h * dn_h + pair.lambda_w * dn_w;
        let value = match pair.mode {
            MembraneMode::Transmission => flux_sum.abs().max(gap.abs()),
            MembraneMode::TwoMembrane => {
                let a = gap.min(-dn_h).abs();
                let b = gap.min(dn_w).abs();
                let c = if gap <= 0.0 { flux_sum.abs() } else { 0.0 };
                a.max(b).max(c)
            }
        };
        rows.push(AuditRow { x: spec.node(i, j).x, gap, dn_h, dn_w, flux_sum, value });
    }
    let max = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    Ok(ComplementarityAudit { rows, max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub sup_error: f64,
    pub sweeps: usize,
}

/// Sup-norm error of [`solve_two_membrane`] against the Signorini reference
/// pair, one row per grid spacing.
pub fn signorini_refinement(
    lambda_h: f64,
    lambda_w: f64,
    spacings: &[f64],
    opts: &LinearOptions,
) -> Result<Vec<ConvergenceRow>> {
    spacings
        .iter()
        .map(|&h| {
            let spec = GridSpec::centered(1.0, h)?;
            let reference = reference_signorini_pair(lambda_h, lambda_w, spec, 1.0)?;
            let sol = solve_two_membrane(&reference.h, &reference.w, lambda_h, lambda_w, opts)?;
            let err = sol.h.sup_diff(&reference.h).max(sol.w.sup_diff(&reference.w));
            Ok(ConvergenceRow { h, sup_error: err, sweeps: sol.sweeps })
        })
        .collect()
}

pub fn write_convergence_csv(rows: &[ConvergenceRow], mut out: impl std::io::Write) -> std::io::Result<()> {
    use crate::gridio::fmt_real;
    writeln!(out, "h,sup_error,sweeps")?;
    for r in rows {
        writeln!(out, "{},{},{}", fmt_real(r.h), fmt_real(r.sup_error), r.sweeps)?;
    }
    Ok(())
}

/// Largest difference between two solutions at the nodes of the coarser one.
/// The finer grid must refine the coarser by an integer factor.
pub fn coarse_sup_diff(coarse: &ScalarField, fine: &ScalarField) -> Result<f64> {
    let (cs, fs) = (coarse.spec(), fine.spec());
    let ratio = cs.h / fs.h;
    let m = ratio.round() as usize;
    if m == 0 || (ratio - m as f64).abs() > 1e-9 {
        return Err(Error::InvalidGrid(format!("spacing ratio {ratio} is not an integer")));
    }
    let mut worst = 0.0f64;
    for (k, i, j) in coarse.masked_nodes() {
        let p = cs.node(i, j);
        let (fi, fj) = fs.to_lattice(p);
        let (fi, fj) = (fi.round(), fj.round());
        if fi < 0.0 || fj < 0.0 || fi as usize >= fs.nx || fj as usize >= fs.ny {
            return Err(Error::OutsideDomain(format!("({}, {}) not on the fine grid", p.x, p.y)));
        }
        let (fi, fj) = (fi as usize, fj as usize);
        if !fine.is_masked(fi, fj) {
            continue;
        }
        worst = worst.max((coarse.get(k) - fine.at(fi, fj)).abs());
    }
    Ok(worst)
}
