//! Minimisation of the two-phase functional over the ordered cone.
//!
//! Each smoothing stage alternates a projected gradient step (backtracking on
//! the smoothed energy) with relaxation sweeps over the current positivity
//! sets. Relaxation is exact nodewise minimisation of the smoothed energy,
//! over-relaxed where that still lowers the local energy, so every sweep is
//! monotone. A terminal sharp stage (`δ = 0`) minimises the node-counting
//! energy blockwise in `(u_k, v_k)`, which produces exact zero phases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{energy, energy_phased, first_variation_phased, project_cone, sharp_threshold, SmoothingSpec, StepKind};
use crate::error::{Error, Result};
use crate::grid::{Domain, GridSpec, ScalarField, Vec2};
use crate::pair::{FieldPair, Params};

/// Node visiting order for relaxation sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    /// Sequential row-major Gauss–Seidel.
    #[default]
    Lexicographic,
    /// Red–black colouring; each colour is updated in parallel.
    RedBlack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    pub delta_schedule: Vec<f64>,
    pub step0: f64,
    pub max_outer: usize,
    pub tol_energy: f64,
    pub tol_step: f64,
    pub relax_sweeps: usize,
    pub seed: u64,
    /// Run the terminal sharp stage after the smoothing schedule.
    #[serde(default = "default_true")]
    pub sharp_stage: bool,
    /// Smoothing width `δ·√Λ` per phase instead of a common `δ`, so that
    /// pairs with `u = c v`, `c = √(Λ_u/Λ_v)`, stay proportional.
    #[serde(default = "default_true")]
    pub phase_scaled: bool,
    #[serde(default)]
    pub order: SweepOrder,
}

fn default_true() -> bool {
    true
}

impl SolveOptions {
    /// `δ ∈ {8h, 4h, 2h}`, `step0 = h²/8`, 50 relaxation sweeps.
    pub fn for_spacing(h: f64) -> Self {
        SolveOptions {
            delta_schedule: vec![8.0 * h, 4.0 * h, 2.0 * h],
            step0: h * h / 8.0,
            max_outer: 400,
            tol_energy: 1e-10,
            tol_step: 1e-10,
            relax_sweeps: 50,
            seed: 0,
            sharp_stage: true,
            phase_scaled: true,
            order: SweepOrder::Lexicographic,
        }
    }

    pub fn validate(&self, tau: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.delta_schedule.is_empty() {
            return bad("delta_schedule must not be empty".into());
        }
        if self.delta_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("delta_schedule must be strictly decreasing".into());
        }
        let last = *self.delta_schedule.last().unwrap();
        if !(last >= 2.0 * tau) {
            return bad(format!("last delta {last} must be >= 2 tau = {}", 2.0 * tau));
        }
        for (name, v) in [("step0", self.step0), ("tol_energy", self.tol_energy), ("tol_step", self.tol_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.max_outer == 0 {
            return bad("max_outer must be positive".into());
        }
        Ok(())
    }
}

/// Dirichlet data; only values at boundary nodes of the mask are read.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub u0: ScalarField,
    pub v0: ScalarField,
}

impl BoundaryData {
    pub fn from_fns(
        spec: GridSpec,
        domain: Domain,
        u0: impl Fn(Vec2) -> f64,
        v0: impl Fn(Vec2) -> f64,
    ) -> Self {
        BoundaryData {
            u0: ScalarField::from_fn(spec, domain, u0),
            v0: ScalarField::from_fn(spec, domain, v0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.u0.same_layout(&self.v0) {
            return Err(Error::InfeasibleData("u0 and v0 layouts differ".into()));
        }
        for k in self.u0.boundary_nodes() {
            let (a, b) = (self.u0.get(k), self.v0.get(k));
            if !(a.is_finite() && b.is_finite()) || a < b || b < 0.0 {
                let p = self.u0.spec().node(k % self.u0.spec().nx, k / self.u0.spec().nx);
                return Err(Error::InfeasibleData(format!(
                    "need u0 >= v0 >= 0 at boundary node ({}, {}), got u0={a}, v0={b}",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    /// Smoothing width; zero marks the sharp stage.
    pub delta: f64,
    pub total_smoothed: f64,
    pub total_sharp: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub pair: FieldPair,
    pub energy_trace: Vec<TraceRow>,
    pub converged: bool,
    pub iterations: usize,
    /// Backtracking failures (no admissible step found).
    pub line_search_failures: usize,
}

/// Optimal SOR factor for the five-point Laplacian on a domain `diam` across.
pub(crate) fn sor_factor(h: f64, diam: f64) -> f64 {
    2.0 / (1.0 + (std::f64::consts::PI * h / diam).sin())
}

fn domain_diameter(f: &ScalarField) -> f64 {
    match f.domain() {
        Domain::Disk { radius } | Domain::HalfDisk { radius } => 2.0 * radius,
        Domain::Rectangle => {
            let s = f.spec();
            ((s.nx - 1) as f64 * s.h).max((s.ny - 1) as f64 * s.h)
        }
    }
}

#[inline]
fn neighbour_sum(f: &ScalarField, k: usize, nx: usize) -> f64 {
    f.get(k - 1) + f.get(k + 1) + f.get(k - nx) + f.get(k + nx)
}

/// Red and black node lists (by parity of `i + j`).
pub(crate) fn colour(nodes: &[usize], nx: usize) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for &k in nodes {
        out[(k % nx + k / nx) % 2].push(k);
    }
    out
}

/// One pass over `nodes`: `compute` proposes an update from the current state.
pub(crate) fn sweep<S: Sync, T: Send>(
    state: &mut S,
    nodes: &[usize],
    colours: &[Vec<usize>; 2],
    order: SweepOrder,
    compute: impl Fn(&S, usize) -> Option<T> + Sync,
    apply: impl Fn(&mut S, usize, T),
) {
    match order {
        SweepOrder::Lexicographic => {
            for &k in nodes {
                if let Some(t) = compute(state, k) {
                    apply(state, k, t);
                }
            }
        }
        SweepOrder::RedBlack => {
            for c in colours {
                let st: &S = state;
                let ups: Vec<(usize, T)> = c
                    .par_iter()
                    .filter_map(|&k| compute(st, k).map(|t| (k, t)))
                    .collect();
                for (k, t) in ups {
                    apply(state, k, t);
                }
            }
        }
    }
}

/// Solves `Δ_h f = 0` at the `unknown` nodes, all other masked nodes fixed.
///
/// Unknown nodes must be interior. Iterates SOR until the largest nodal
/// correction `|avg - f|` is at most `1e-10 · max(‖data‖∞, 1e-300)`.
pub fn harmonic_solve(data: &ScalarField, unknown: &[bool]) -> Result<ScalarField> {
    harmonic_solve_ordered(data, unknown, SweepOrder::Lexicographic)
}

pub fn harmonic_solve_ordered(
    data: &ScalarField,
    unknown: &[bool],
    order: SweepOrder,
) -> Result<ScalarField> {
    let spec = *data.spec();
    let nx = spec.nx;
    let nodes: Vec<usize> = (0..spec.len())
        .filter(|&k| unknown[k])
        .collect();
    for &k in &nodes {
        if !data.is_interior(k % nx, k / nx) {
            return Err(Error::InvalidGrid(format!("unknown node {k} is not interior")));
        }
    }
    let mut f = data.clone();
    if nodes.is_empty() {
        return Ok(f);
    }
    let colours = colour(&nodes, nx);
    let scale = data
        .masked_nodes()
        .filter(|&(k, _, _)| !unknown[k])
        .map(|(k, _, _)| data.get(k).abs())
        .fold(0.0, f64::max);
    let tol = 1e-10 * scale.max(1e-300);
    // Warm start from the mean of the data keeps the first sweeps useful.
    let omega = sor_factor(spec.h, domain_diameter(data));
    let cap = 50 * (spec.nx + spec.ny) + 20_000;
    for it in 0..cap {
        sweep(
            &mut f,
            &nodes,
            &colours,
            order,
            |f, k| {
                let avg = 0.25 * neighbour_sum(f, k, nx);
                Some(f.get(k) + omega * (avg - f.get(k)))
            },
            |f, k, v| f.set(k, v),
        );
        if it % 10 == 9 || it + 1 == cap {
            let res = nodes
                .iter()
                .map(|&k| (0.25 * neighbour_sum(&f, k, nx) - f.get(k)).abs())
                .fold(0.0, f64::max);
            if res <= tol {
                return Ok(f);
            }
            if it + 1 == cap {
                return Err(Error::NoConvergence { iterations: cap, residual: res });
            }
        }
    }
    unreachable!()
}

/// Local energy of one node: `4t² - 2tΣ + Λh² S(t)` (constants dropped).
#[derive(Clone, Copy)]
struct Local<'a> {
    sum: f64,
    lh2: f64,
    smoothing: &'a SmoothingSpec,
}

impl Local<'_> {
    #[inline]
    fn value(&self, t: f64) -> f64 {
        4.0 * t * t - 2.0 * t * self.sum + self.lh2 * self.smoothing.step(t)
    }

    #[inline]
    fn deriv(&self, t: f64) -> f64 {
        8.0 * t - 2.0 * self.sum + self.lh2 * self.smoothing.step_deriv(t)
    }

    /// Minimiser over `[lo, hi]` (`hi` may be infinite), never worse than `cur`.
    fn minimise(&self, lo: f64, hi: f64, cur: f64) -> f64 {
        let delta = self.smoothing.delta;
        let free = 0.25 * self.sum;
        // Above δ + √(Λ) h / 2 the quadratic branch is the global minimiser.
        if free >= delta + 0.5 * self.lh2.sqrt() && free >= lo && free <= hi {
            return free;
        }
        let mut best = cur;
        let mut best_e = self.value(cur);
        let mut consider = |t: f64| {
            let e = self.value(t);
            if e < best_e {
                best = t;
                best_e = e;
            }
        };
        consider(lo);
        if hi.is_finite() {
            consider(hi);
        }
        let qlo = lo.max(delta);
        if qlo <= hi {
            consider(free.clamp(qlo, hi));
        }
        let (a, b) = (lo.max(0.0), hi.min(delta));
        if a < b && self.smoothing.kind == StepKind::Polynomial {
            // E' = -c t² + (8 + cδ) t - 2Σ; the local minimum is the smaller root
            let c = 6.0 * self.lh2 / (delta * delta * delta);
            let bq = 8.0 + c * delta;
            let disc = bq * bq - 8.0 * c * self.sum;
            if disc >= 0.0 {
                let t = 4.0 * self.sum / (bq + disc.sqrt());
                if t >= a && t <= b {
                    consider(t);
                }
            }
        } else if a < b {
            const PIECES: usize = 16;
            let w = (b - a) / PIECES as f64;
            let mut ta = a;
            let mut da = self.deriv(ta);
            for p in 1..=PIECES {
                let tb = if p == PIECES { b } else { a + p as f64 * w };
                let db = self.deriv(tb);
                if da < 0.0 && db >= 0.0 {
                    let (mut l, mut r) = (ta, tb);
                    for _ in 0..60 {
                        let m = 0.5 * (l + r);
                        if self.deriv(m) < 0.0 {
                            l = m;
                        } else {
                            r = m;
                        }
                    }
                    consider(0.5 * (l + r));
                }
                ta = tb;
                da = db;
            }
        }
        best
    }
}

struct Workspace {
    interior: Vec<usize>,
    colours: [Vec<usize>; 2],
    omega: f64,
    order: SweepOrder,
}

impl Workspace {
    fn new(f: &ScalarField, order: SweepOrder) -> Self {
        let interior = f.interior_nodes();
        let colours = colour(&interior, f.spec().nx);
        Workspace {
            interior,
            colours,
            omega: sor_factor(f.spec().h, domain_diameter(f)),
            order,
        }
    }
}

/// Relaxation sweeps of the smoothed energy on `{u > τ}` and `{v > τ}`.
fn relax_smoothed(
    pair: &mut FieldPair,
    ws: &Workspace,
    (smooth_u, smooth_v): (&SmoothingSpec, &SmoothingSpec),
    sweeps: usize,
) {
    let nx = pair.spec().nx;
    let h2 = pair.spec().h * pair.spec().h;
    let (lu, lv) = (pair.params.lambda_u * h2, pair.params.lambda_v * h2);
    let tau_u = sharp_threshold(&pair.u);
    let tau_v = sharp_threshold(&pair.v);
    let u_nodes: Vec<usize> = ws.interior.iter().copied().filter(|&k| pair.u.get(k) > tau_u).collect();
    let v_nodes: Vec<usize> = ws.interior.iter().copied().filter(|&k| pair.v.get(k) > tau_v).collect();
    let u_col = colour(&u_nodes, nx);
    let v_col = colour(&v_nodes, nx);
    let omega = ws.omega;
    let over = |loc: &Local, lo: f64, hi: f64, cur: f64| -> f64 {
        let best = loc.minimise(lo, hi, cur);
        let t = cur + omega * (best - cur);
        if t >= lo && t <= hi && loc.value(t) <= loc.value(cur) {
            t
        } else {
            best
        }
    };
    for _ in 0..sweeps {
        sweep(
            pair,
            &u_nodes,
            &u_col,
            ws.order,
            |p, k| {
                let loc = Local { sum: neighbour_sum(&p.u, k, nx), lh2: lu, smoothing: smooth_u };
                Some(over(&loc, p.v.get(k), f64::INFINITY, p.u.get(k)))
            },
            |p, k, t| p.u.set(k, t),
        );
        sweep(
            pair,
            &v_nodes,
            &v_col,
            ws.order,
            |p, k| {
                let loc = Local { sum: neighbour_sum(&p.v, k, nx), lh2: lv, smoothing: smooth_v };
                Some(over(&loc, 0.0, p.u.get(k), p.v.get(k)))
            },
            |p, k, t| p.v.set(k, t),
        );
    }
}

/// Sharp local energy of the block `(a, b)` given neighbour sums.
#[inline]
fn sharp_local(a: f64, b: f64, su: f64, sv: f64, lu: f64, lv: f64) -> f64 {
    let mut e = 4.0 * a * a - 2.0 * a * su + 4.0 * b * b - 2.0 * b * sv;
    if a > 0.0 {
        e += lu;
    }
    if b > 0.0 {
        e += lv;
    }
    e
}

/// Exact blockwise minimiser of the sharp local energy over `a >= b >= 0`.
fn sharp_block(su: f64, sv: f64, lu: f64, lv: f64) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    let mut best_e = 0.0;
    let mut consider = |a: f64, b: f64| {
        let e = sharp_local(a, b, su, sv, lu, lv);
        if e < best_e {
            best = (a, b);
            best_e = e;
        }
    };
    if su > 0.0 {
        consider(0.25 * su, 0.0);
    }
    let (a, b) = if su >= sv {
        (0.25 * su, 0.25 * sv)
    } else {
        let m = 0.125 * (su + sv);
        (m, m)
    };
    if b > 0.0 {
        consider(a, b);
    }
    best
}

fn relax_sharp(pair: &mut FieldPair, ws: &Workspace, sweeps: usize) {
    let nx = pair.spec().nx;
    let h2 = pair.spec().h * pair.spec().h;
    let (lu, lv) = (pair.params.lambda_u * h2, pair.params.lambda_v * h2);
    let omega = ws.omega;
    for _ in 0..sweeps {
        sweep(
            pair,
            &ws.interior,
            &ws.colours,
            ws.order,
            |p, k| {
                let (su, sv) = (neighbour_sum(&p.u, k, nx), neighbour_sum(&p.v, k, nx));
                let (ca, cb) = (p.u.get(k), p.v.get(k));
                if ca == 0.0 && su == 0.0 {
                    return None;
                }
                let cur_e = sharp_local(ca, cb, su, sv, lu, lv);
                let (ba, bb) = sharp_block(su, sv, lu, lv);
                let best_e = sharp_local(ba, bb, su, sv, lu, lv);
                let (mut a, mut b) = if best_e <= cur_e { (ba, bb) } else { (ca, cb) };
                let same_support = (ca > 0.0) == (a > 0.0) && (cb > 0.0) == (b > 0.0);
                if same_support {
                    let oa = ca + omega * (a - ca);
                    let ob = cb + omega * (b - cb);
                    let ok = oa >= ob
                        && ob >= 0.0
                        && (oa > 0.0) == (a > 0.0)
                        && (ob > 0.0) == (b > 0.0)
                        && sharp_local(oa, ob, su, sv, lu, lv) <= cur_e;
                    if ok {
                        a = oa;
                        b = ob;
                    }
                }
                Some((a, b))
            },
            |p, k, (a, b)| {
                p.u.set(k, a);
                p.v.set(k, b);
            },
        );
    }
}

fn weighted_norm(a: &ScalarField, b: &ScalarField, nodes: &[usize]) -> f64 {
    nodes.iter().map(|&k| (a.get(k) - b.get(k)).powi(2)).sum::<f64>()
}

fn sup_change(p: &FieldPair, q: &FieldPair) -> f64 {
    p.u.sup_diff(&q.u).max(p.v.sup_diff(&q.v))
}

/// Harmonic extension of the data followed by the cone projection.
pub fn initial_guess(data: &BoundaryData, params: Params, order: SweepOrder) -> Result<FieldPair> {
    let unknown: Vec<bool> = {
        let f = &data.u0;
        (0..f.spec().len())
            .map(|k| f.mask()[k] && f.is_interior(k % f.spec().nx, k / f.spec().nx))
            .collect()
    };
    let u = harmonic_solve_ordered(&data.u0, &unknown, order)?;
    let v = harmonic_solve_ordered(&data.v0, &unknown, order)?;
    let pair = FieldPair::new(u, v, params)?;
    Ok(crate::energy::project_pair(&pair))
}

/// Minimises the functional with Dirichlet data over the ordered cone.
pub fn solve(data: &BoundaryData, params: Params, opts: &SolveOptions) -> Result<SolveResult> {
    data.validate()?;
    params.validate()?;
    let spec = *data.u0.spec();
    spec.validate()?;
    let scale = data.u0.sup_norm().max(1.0);
    let (fu, fv) = if opts.phase_scaled {
        (params.lambda_u.sqrt(), params.lambda_v.sqrt())
    } else {
        (1.0, 1.0)
    };
    opts.validate(1e-8 * scale / fu.min(fv))?;

    let mut pair = initial_guess(data, params, opts.order)?;
    let ws = Workspace::new(&pair.u, opts.order);
    let h2 = spec.h * spec.h;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut failures = 0;
    let mut converged = false;

    for &delta in &opts.delta_schedule {
        let smooth_u = SmoothingSpec::polynomial(delta).scaled(fu);
        let smooth_v = SmoothingSpec::polynomial(delta).scaled(fv);
        let energy = |p: &FieldPair| energy_phased(p, &smooth_u, &smooth_v);
        let mut e_cur = energy(&pair);
        let mut step = opts.step0;
        converged = false;
        for _ in 0..opts.max_outer {
            iterations += 1;
            let before = pair.clone();
            let e0 = e_cur.total_smoothed;

            // projected gradient step with backtracking
            let (gu, gv) = first_variation_phased(&pair, &smooth_u, &smooth_v);
            let mut s = (2.0 * step).min(opts.step0);
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial = pair.clone();
                for &k in &ws.interior {
                    let (a, b) = project_cone(pair.u.get(k) - s * gu.get(k), pair.v.get(k) - s * gv.get(k));
                    trial.u.set(k, a);
                    trial.v.set(k, b);
                }
                let moved = (weighted_norm(&trial.u, &pair.u, &ws.interior)
                    + weighted_norm(&trial.v, &pair.v, &ws.interior))
                    * h2;
                let e_trial = energy(&trial);
                if e_trial.total_smoothed <= e0 - 1e-4 * moved / s {
                    pair = trial;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if accepted {
                step = s;
            } else {
                failures += 1;
            }

            relax_smoothed(&mut pair, &ws, (&smooth_u, &smooth_v), opts.relax_sweeps);
            e_cur = energy(&pair);
            trace.push(TraceRow {
                iter: iterations,
                delta,
                total_smoothed: e_cur.total_smoothed,
                total_sharp: e_cur.total_sharp,
            });
            let rel = (e0 - e_cur.total_smoothed) / e_cur.total_smoothed.abs().max(1e-300);
            let change = sup_change(&pair, &before);
            if rel < opts.tol_energy || change < opts.tol_step {
                converged = true;
                break;
            }
        }
    }

    if opts.sharp_stage {
        converged = false;
        let zero = SmoothingSpec::polynomial(f64::MIN_POSITIVE);
        let mut e_prev = energy(&pair, &zero).total_sharp;
        for _ in 0..opts.max_outer * 4 {
            iterations += 1;
            let before = pair.clone();
            relax_sharp(&mut pair, &ws, opts.relax_sweeps);
            let e = energy(&pair, &zero);
            trace.push(TraceRow {
                iter: iterations,
                delta: 0.0,
                total_smoothed: e.total_sharp,
                total_sharp: e.total_sharp,
            });
            let rel = (e_prev - e.total_sharp) / e.total_sharp.abs().max(1e-300);
            let change = sup_change(&pair, &before);
            e_prev = e.total_sharp;
            if rel < opts.tol_energy && change < opts.tol_step.max(1e-9 * scale) {
                converged = true;
                break;
            }
        }
    }

    debug_assert!(pair.is_ordered());
    Ok(SolveResult {
        pair,
        energy_trace: trace,
        converged,
        iterations,
        line_search_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair::reference_plane_pair;

    fn params() -> Params {
        Params::new(0.7, 0.3).unwrap()
    }

    #[test]
    fn harmonic_solve_constant_and_linear() {
        let spec = GridSpec::centered(1.0, 1.0 / 16.0).unwrap();
        let d = Domain::Disk { radius: 1.0 };
        let c = ScalarField::from_fn(spec, d, |_| 2.5);
        let unknown: Vec<bool> = (0..spec.len()).map(|k| c.mask()[k] && c.is_interior(k % spec.nx, k / spec.nx)).collect();
        let mut start = c.clone();
        for k in c.interior_nodes() {
            start.set(k, 0.0);
        }
        let out = harmonic_solve(&start, &unknown).unwrap();
        assert!(out.sup_diff(&c) < 1e-9);

        let sq = GridSpec::centered(1.0, 1.0 / 16.0).unwrap();
        let lin = ScalarField::from_fn(sq, Domain::Rectangle, |p| p.y);
        let unknown: Vec<bool> = (0..sq.len()).map(|k| lin.is_interior(k % sq.nx, k / sq.nx)).collect();
        let mut start = lin.clone();
        for k in lin.interior_nodes() {
            start.set(k, 0.0);
        }
        let out = harmonic_solve(&start, &unknown).unwrap();
        assert!(out.sup_diff(&lin) < 1e-9);
    }

    #[test]
    fn harmonic_solve_quadratic_harmonic_on_disk() {
        for order in [SweepOrder::Lexicographic, SweepOrder::RedBlack] {
            let spec = GridSpec::centered(1.0, 1.0 / 32.0).unwrap();
            let g = ScalarField::from_fn(spec, Domain::Disk { radius: 1.0 }, |p| p.x * p.x - p.y * p.y);
            let unknown: Vec<bool> = (0..spec.len()).map(|k| g.mask()[k] && g.is_interior(k % spec.nx, k / spec.nx)).collect();
            let mut start = g.clone();
            for k in g.interior_nodes() {
                start.set(k, 0.0);
            }
            let out = harmonic_solve_ordered(&start, &unknown, order).unwrap();
            // x² - y² is discrete harmonic, so the match is to solver tolerance
            assert!(out.sup_diff(&g) < 1e-8, "{order:?}");
        }
    }

    #[test]
    fn local_minimiser_never_worse() {
        let s = SmoothingSpec::polynomial(0.1);
        for sum in [-0.5, 0.0, 0.05, 0.2, 0.41, 0.8, 2.0] {
            let loc = Local { sum, lh2: 0.7 * 0.01, smoothing: &s };
            for cur in [0.0, 0.02, 0.09, 0.3] {
                let t = loc.minimise(0.0, f64::INFINITY, cur);
                assert!(loc.value(t) <= loc.value(cur) + 1e-15);
                // brute-force scan
                let brute = (0..=20000).map(|i| i as f64 * 1e-4).map(|x| loc.value(x)).fold(f64::INFINITY, f64::min);
                assert!(loc.value(t) <= brute + 1e-9, "sum {sum} cur {cur}");
            }
        }
    }

    #[test]
    fn sharp_block_matches_brute_force() {
        let (lu, lv) = (0.7e-2, 0.3e-2);
        for su in [-0.1, 0.0, 0.05, 0.1, 0.3, 1.0] {
            for sv in [-0.1, 0.0, 0.03, 0.2, 0.5, 1.2] {
                let (a, b) = sharp_block(su, sv, lu, lv);
                assert!(a >= b && b >= 0.0);
                let e = sharp_local(a, b, su, sv, lu, lv);
                let mut brute = f64::INFINITY;
                for i in 0..=400 {
                    for j in 0..=i {
                        let (x, y) = (i as f64 * 1e-3, j as f64 * 1e-3);
                        brute = brute.min(sharp_local(x, y, su, sv, lu, lv));
                    }
                }
                assert!(e <= brute + 1e-12, "su {su} sv {sv}: {e} vs {brute}");
            }
        }
    }

    #[test]
    fn rejects_infeasible_data() {
        let spec = GridSpec::centered(1.0, 0.125).unwrap();
        let data = BoundaryData::from_fns(spec, Domain::Disk { radius: 1.0 }, |_| 0.1, |_| 0.2);
        assert!(matches!(
            solve(&data, params(), &SolveOptions::for_spacing(spec.h)),
            Err(Error::InfeasibleData(_))
        ));
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let spec = GridSpec::centered(1.0, 1.0 / 16.0).unwrap();
        let data = BoundaryData::from_fns(spec, Domain::Disk { radius: 1.0 }, |_| 0.0, |_| 0.0);
        let res = solve(&data, params(), &SolveOptions::for_spacing(spec.h)).unwrap();
        assert_eq!(res.pair.u.sup_norm(), 0.0);
        assert_eq!(res.pair.v.sup_norm(), 0.0);
        assert!(res.converged);
        assert_eq!(res.energy_trace.last().unwrap().total_sharp, 0.0);
    }

    #[test]
    fn plane_is_recovered_on_coarse_grid() {
        let h = 1.0 / 32.0;
        let spec = GridSpec::centered(1.0, h).unwrap();
        let d = Domain::Disk { radius: 1.0 };
        let exact = reference_plane_pair(params(), Vec2::E_Y, spec, d);
        let data = BoundaryData { u0: exact.u.clone(), v0: exact.v.clone() };
        let res = solve(&data, params(), &SolveOptions::for_spacing(h)).unwrap();
        assert!(res.pair.is_ordered());
        let err = res.pair.u.sup_diff(&exact.u).max(res.pair.v.sup_diff(&exact.v));
        assert!(err < 0.1, "err {err}");
    }

    #[test]
    fn smoothed_energy_is_monotone_within_stages() {
        let h = 1.0 / 24.0;
        let spec = GridSpec::centered(1.0, h).unwrap();
        let data = BoundaryData::from_fns(
            spec,
            Domain::Disk { radius: 1.0 },
            |p| 0.7f64.sqrt() * (p.y + 0.2 * p.x * p.x).max(0.0),
            |p| 0.3f64.sqrt() * (p.y - 0.2).max(0.0),
        );
        let res = solve(&data, params(), &SolveOptions::for_spacing(h)).unwrap();
        for w in res.energy_trace.windows(2) {
            if w[0].delta == w[1].delta {
                assert!(w[1].total_smoothed <= w[0].total_smoothed + 1e-12, "{w:?}");
            }
        }
        assert!(res.pair.is_ordered());
    }

    #[test]
    fn deterministic() {
        let h = 1.0 / 16.0;
        let spec = GridSpec::centered(1.0, h).unwrap();
        let data = BoundaryData::from_fns(spec, Domain::Disk { radius: 1.0 }, |p| 0.5 + 0.2 * p.x, |p| (0.1 * p.y).max(0.0));
        let a = solve(&data, params(), &SolveOptions::for_spacing(h)).unwrap();
        let b = solve(&data, params(), &SolveOptions::for_spacing(h)).unwrap();
        assert!(a.pair.u.values().iter().zip(b.pair.u.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.energy_trace, b.energy_trace);
    }
}
