//! Height function, correction terms and the truncated frequency.
//!
//! Everything is computed from [`WFields`]: the `w` functions extended to the
//! whole grid, the phase functions whose `τ`-superlevel sets are `{u > 0}` and
//! `{v > 0}`, and quadrature elements along the free boundaries.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::sharp_threshold;
use crate::error::{Error, Result};
use crate::flatness::fit_slope;
use crate::free_boundary::{estimate_normal, marching_squares, BoundarySet, Polyline};
use crate::grid::{ball_inside, gradient, Domain, GridSpec, ScalarField, Vec2};
use crate::gridio::fmt_real;
use crate::pair::{FieldPair, Params};

pub const SIGMA: f64 = 0.1;
pub const BETA: f64 = 0.3;
/// Rows with `r` below this many grid spacings are treated as under-resolved.
pub const FLOOR_CELLS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct FbElement {
    a: Vec2,
    b: Vec2,
    normal: Vec2,
    lambda: f64,
    /// `w ∂_ν w` at the midpoint.
    w_dw: f64,
    v_phase: bool,
}

/// One phase of the w-description: `w`, its phase function and boundary.
#[derive(Debug, Clone)]
pub struct PhaseW {
    pub lambda: f64,
    /// `w` on every masked node; only `{phase > tau}` is meaningful.
    pub w: ScalarField,
    pub phase: ScalarField,
    pub tau: f64,
    pub boundary: Vec<Polyline>,
    grad_x: ScalarField,
    grad_y: ScalarField,
}

impl PhaseW {
    fn new(lambda: f64, w: ScalarField, phase: ScalarField, boundary: Option<Vec<Polyline>>) -> Result<Self> {
        let tau = sharp_threshold(&phase);
        let boundary = boundary.unwrap_or_else(|| marching_squares(&phase, tau));
        let g = gradient(&w)?;
        let grad_x = ScalarField::from_values(*w.spec(), w.domain(), g.gx)?;
        let grad_y = ScalarField::from_values(*w.spec(), w.domain(), g.gy)?;
        Ok(PhaseW { lambda, w, phase, tau, boundary, grad_x, grad_y })
    }

    fn inside(&self, p: Vec2) -> Option<bool> {
        self.phase.sample(p).map(|f| f > self.tau)
    }
}

#[derive(Debug, Clone)]
pub struct WFields {
    pub center: Vec2,
    pub nu: Vec2,
    pub u: PhaseW,
    pub v: PhaseW,
    elements: Vec<FbElement>,
}

/// One-sided slope along `n`, Richardson-extrapolated from `p/2` and `p`.
fn probe_slope(f: &ScalarField, x: Vec2, n: Vec2, p: f64) -> Option<f64> {
    let f0 = f.sample(x)?;
    let s1 = (f.sample(x + n * (0.5 * p))? - f0) / (0.5 * p);
    let s2 = (f.sample(x + n * p)? - f0) / p;
    Some(2.0 * s1 - s2)
}

impl WFields {
    fn assemble(center: Vec2, nu: Vec2, u: PhaseW, v: PhaseW) -> Self {
        let h = u.w.spec().h;
        let mut elements = Vec::new();
        for (ph, v_phase) in [(&u, false), (&v, true)] {
            for line in &ph.boundary {
                for (a, b) in line.segments() {
                    let m = (a + b) * 0.5;
                    let left = (b - a).perp();
                    if left.norm() == 0.0 {
                        continue;
                    }
                    let normal = estimate_normal(line, m, 4.0 * h).unwrap_or_else(|_| left.normalized());
                    let (Some(w), Some(dw)) = (ph.w.sample(m), probe_slope(&ph.w, m, normal, 4.0 * h)) else {
                        continue;
                    };
                    elements.push(FbElement { a, b, normal, lambda: ph.lambda, w_dw: w * dw, v_phase });
                }
            }
        }
        WFields { center, nu, u, v, elements }
    }

    pub fn spec(&self) -> &GridSpec {
        self.u.w.spec()
    }

    /// `H(r) = (1/r) ∫_{∂B_r} Λ_u w_u² 1{u>0} + Λ_v w_v² 1{v>0}`.
    ///
    /// Trapezoid rule over `max(64, ⌈2πr/h⌉)` angles; intervals cut by a
    /// phase boundary are split at the crossing.
    pub fn height(&self, r: f64) -> Result<f64> {
        let m = (2.0 * PI * r / self.spec().h).ceil().max(64.0) as usize;
        self.height_with(r, m)
    }

    pub fn height_with(&self, r: f64, angles: usize) -> Result<f64> {
        self.check_ball(r)?;
        let c = self.center;
        let point = |t: f64| c + Vec2::from_angle(t) * r;
        let dt = 2.0 * PI / angles as f64;
        let mut total = 0.0;
        for ph in [&self.u, &self.v] {
            let integrand = |t: f64| -> Result<f64> {
                let w = ph.w.sample(point(t)).ok_or_else(|| outside(point(t)))?;
                Ok(ph.lambda * w * w)
            };
            let inside = |t: f64| ph.inside(point(t)).ok_or_else(|| outside(point(t)));
            let mut t0 = 0.0;
            let mut in0 = inside(t0)?;
            let mut f0 = if in0 { integrand(t0)? } else { 0.0 };
            for k in 1..=angles {
                let t1 = k as f64 * dt;
                let in1 = inside(t1)?;
                let f1 = if in1 { integrand(t1)? } else { 0.0 };
                if in0 && in1 {
                    total += 0.5 * (f0 + f1) * dt;
                } else if in0 != in1 {
                    let (mut lo, mut hi) = (t0, t1);
                    for _ in 0..40 {
                        let mid = 0.5 * (lo + hi);
                        if inside(mid)? == in0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let ts = 0.5 * (lo + hi);
                    let fs = integrand(ts)?;
                    total += if in0 { 0.5 * (f0 + fs) * (ts - t0) } else { 0.5 * (fs + f1) * (t1 - ts) };
                }
                t0 = t1;
                in0 = in1;
                f0 = f1;
            }
        }
        // (1/r) · r dθ
        Ok(total)
    }

    /// `(A(r), B(r))` by polyline quadrature.
    pub fn correction_terms(&self, r: f64) -> (f64, f64) {
        let c = self.center;
        let mut a_sum = 0.0;
        let mut b_sum = 0.0;
        for e in &self.elements {
            let (t0, t1) = clip_to_disk(e.a - c, e.b - c, r);
            if t1 > t0 {
                a_sum += e.lambda * e.w_dw * (e.b - e.a).norm() * (t1 - t0);
            }
            // B: crossings of the free boundary with the circle
            for t in circle_crossings(e.a - c, e.b - c, r) {
                let x = e.a + (e.b - e.a) * t;
                let ph = if e.v_phase { &self.v } else { &self.u };
                if let Some(w) = ph.w.sample(x) {
                    b_sum += e.lambda * w * w * (x - c).dot(e.normal);
                }
            }
        }
        (2.0 * a_sum / r, b_sum / (r * r))
    }

    /// `(2/r) ∫_{B_r} Λ_u |∇w_u|² 1{u>0} + Λ_v |∇w_v|² 1{v>0}` by polar quadrature.
    pub fn bulk_derivative(&self, r: f64) -> Result<f64> {
        self.check_ball(r)?;
        let h = self.spec().h;
        let nr = ((2.0 * r / h).ceil() as usize).max(32);
        let na = ((2.0 * PI * r / h).ceil() as usize).max(64);
        let (dr, dt) = (r / nr as f64, 2.0 * PI / na as f64);
        let mut total = 0.0;
        for i in 0..nr {
            let rho = (i as f64 + 0.5) * dr;
            for k in 0..na {
                let p = self.center + Vec2::from_angle(k as f64 * dt) * rho;
                for ph in [&self.u, &self.v] {
                    if ph.inside(p) == Some(true) {
                        let gx = ph.grad_x.sample(p).unwrap_or(0.0);
                        let gy = ph.grad_y.sample(p).unwrap_or(0.0);
                        total += ph.lambda * (gx * gx + gy * gy) * rho * dr * dt;
                    }
                }
            }
        }
        Ok(2.0 * total / r)
    }

    fn check_ball(&self, r: f64) -> Result<()> {
        if ball_inside(&self.u.w, self.center, r) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(format!(
                "B_{r}({}, {}) leaves the domain",
                self.center.x, self.center.y
            )))
        }
    }
}

fn outside(p: Vec2) -> Error {
    Error::OutsideDomain(format!("sample point ({}, {}) outside mask", p.x, p.y))
}

/// Parameter interval of `a + t(b - a)`, `t ∈ [0, 1]`, inside the disk of radius `r`.
fn clip_to_disk(a: Vec2, b: Vec2, r: f64) -> (f64, f64) {
    let d = b - a;
    let qa = d.dot(d);
    let qb = 2.0 * a.dot(d);
    let qc = a.dot(a) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if qa == 0.0 || disc <= 0.0 {
        return (0.0, 0.0);
    }
    let s = disc.sqrt();
    let t0 = ((-qb - s) / (2.0 * qa)).max(0.0);
    let t1 = ((-qb + s) / (2.0 * qa)).min(1.0);
    (t0, t1.max(t0))
}

fn circle_crossings(a: Vec2, b: Vec2, r: f64) -> Vec<f64> {
    let d = b - a;
    let qa = d.dot(d);
    let qb = 2.0 * a.dot(d);
    let qc = a.dot(a) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if qa == 0.0 || disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    // half-open in t so a crossing at a shared vertex is counted once
    [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)]
        .into_iter()
        .filter(|t| (0.0..1.0).contains(t))
        .collect()
}

/// `w_u = u/√Λ_u - x_N`, `w_v = v/√Λ_v - x_N` with `x_N = (x - center)·ν`.
pub fn w_fields(pair: &FieldPair, center: Vec2, nu: Vec2) -> Result<WFields> {
    build(pair, center, nu, None)
}

/// As [`w_fields`], reusing already extracted free boundaries.
pub fn w_fields_with(pair: &FieldPair, center: Vec2, nu: Vec2, boundary: &BoundarySet) -> Result<WFields> {
    build(pair, center, nu, Some(boundary))
}

fn build(pair: &FieldPair, center: Vec2, nu: Vec2, boundary: Option<&BoundarySet>) -> Result<WFields> {
    let nu = nu.normalized();
    let (gu, gv) = (pair.params.gamma_u(), pair.params.gamma_v());
    let spec = *pair.spec();
    let xn = |i: usize, j: usize| (spec.node(i, j) - center).dot(nu);
    let wu = pair.u.map_nodes(|k, _, a| a / gu - xn(k % spec.nx, k / spec.nx));
    let wv = pair.v.map_nodes(|k, _, a| a / gv - xn(k % spec.nx, k / spec.nx));
    let u = PhaseW::new(pair.params.lambda_u, wu, pair.u.clone(), boundary.map(|b| b.polyline_u.clone()))?;
    let v = PhaseW::new(pair.params.lambda_v, wv, pair.v.clone(), boundary.map(|b| b.polyline_v.clone()))?;
    Ok(WFields::assemble(center, nu, u, v))
}

pub fn height(pair: &FieldPair, center: Vec2, nu: Vec2, r: f64) -> Result<f64> {
    w_fields(pair, center, nu)?.height(r)
}

pub fn correction_terms(pair: &FieldPair, center: Vec2, nu: Vec2, r: f64, boundary: &BoundarySet) -> Result<(f64, f64)> {
    Ok(w_fields_with(pair, center, nu, boundary)?.correction_terms(r))
}

/// Angle in `(-π/2, 3π/2]` measured from `e_1` in the frame where `ν = e_2`.
fn frame_angle(d: Vec2, nu: Vec2) -> f64 {
    let x = d.dot(-nu.perp());
    let y = d.dot(nu);
    let t = y.atan2(x);
    if t <= -PI / 2.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

/// `w_u = w_v = a r^λ cos(λθ)` planted on the half-plane `{x·ν > 0}` through `center`.
///
/// The profile satisfies `∂_ν w = 0` on the ray `θ = 0` and either `w = 0`
/// (half-integer λ) or `∂_ν w = 0` on `θ = π`, so `A = B = 0`, and
/// `H(r) = (π/2) a² r^{2λ}`.
pub fn planted_profile(
    lambda: f64,
    amplitude: f64,
    spec: GridSpec,
    domain: Domain,
    params: Params,
    center: Vec2,
    nu: Vec2,
) -> Result<WFields> {
    let nu = nu.normalized();
    let w = ScalarField::from_fn(spec, domain, |p| {
        let d = p - center;
        let r = d.norm();
        if r == 0.0 {
            0.0
        } else {
            amplitude * r.powf(lambda) * (lambda * frame_angle(d, nu)).cos()
        }
    });
    let phase = ScalarField::from_fn(spec, domain, |p| (p - center).dot(nu));
    let u = PhaseW::new(params.lambda_u, w.clone(), phase.clone(), None)?;
    let v = PhaseW::new(params.lambda_v, w, phase, None)?;
    Ok(WFields::assemble(center, nu, u, v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub r: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub htilde: f64,
    pub dhtilde_bulk: f64,
    pub dhtilde_diff: f64,
    pub ntilde: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    pub center: Vec2,
    pub nu: Vec2,
    pub sigma: f64,
    pub rows: Vec<FrequencyRow>,
    /// Bound on the omitted `∫_0^{r_min} |A + B|`.
    pub tail_bound: f64,
    /// Largest relative gap between the two `dH̃/dr` estimators above the floor.
    pub derivative_mismatch: f64,
    pub grid_h: f64,
}

impl FrequencyTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,H,A,B,Htilde,dHtilde_bulk,dHtilde_diff,Ntilde,truncated")?;
        for w in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_real(w.r),
                fmt_real(w.h),
                fmt_real(w.a),
                fmt_real(w.b),
                fmt_real(w.htilde),
                fmt_real(w.dhtilde_bulk),
                fmt_real(w.dhtilde_diff),
                fmt_real(w.ntilde),
                u8::from(w.truncated)
            )?;
        }
        Ok(())
    }

    pub fn floor_radius(&self) -> f64 {
        FLOOR_CELLS * self.grid_h
    }

    fn usable(&self) -> impl Iterator<Item = &FrequencyRow> {
        let floor = self.floor_radius();
        self.rows.iter().filter(move |w| !w.truncated && w.r >= floor - 1e-12)
    }
}

/// Geometric radii with ratio 0.85 from 0.45 down to `max(6h, 0.02)`, increasing.
pub fn default_radii(h: f64) -> Vec<f64> {
    let lo = (6.0 * h).max(0.02);
    let mut out = Vec::new();
    let mut r = 0.45;
    while r >= lo {
        out.push(r);
        r *= 0.85;
    }
    out.reverse();
    out
}

/// Rows through `H̃` and both derivative estimates; `Ñ` is left as `NaN`.
pub fn modified_height_trace(wf: &WFields, radii: &[f64], sigma: f64) -> Result<FrequencyTrace> {
    let h = wf.spec().h;
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("radii must be strictly increasing".into()));
    }
    if radii.is_empty() || radii[0] < 4.0 * h - 1e-12 {
        return Err(Error::InvalidParams("need radii >= 4h".into()));
    }
    if !(sigma > 0.0 && sigma < 0.25) {
        return Err(Error::InvalidParams(format!("sigma {sigma} outside (0, 1/4)")));
    }
    let raw: Vec<(f64, f64, f64, f64)> = radii
        .par_iter()
        .map(|&r| {
            let hv = wf.height(r)?;
            let (a, b) = wf.correction_terms(r);
            let bulk = wf.bulk_derivative(r)?;
            Ok((hv, a, b, bulk))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<FrequencyRow> = Vec::with_capacity(radii.len());
    let mut integral = 0.0;
    for (k, (&r, &(hv, a, b, bulk))) in radii.iter().zip(&raw).enumerate() {
        if k > 0 {
            let (rp, (_, ap, bp, _)) = (radii[k - 1], raw[k - 1]);
            integral += 0.5 * ((ap + bp) + (a + b)) * (r - rp);
        }
        let htilde = hv - integral;
        rows.push(FrequencyRow {
            r,
            h: hv,
            a,
            b,
            htilde,
            dhtilde_bulk: bulk,
            dhtilde_diff: f64::NAN,
            ntilde: f64::NAN,
            truncated: htilde < r.powf(3.0 + sigma),
        });
    }
    let n = rows.len();
    for k in 0..n {
        let (i, j) = if n == 1 { (k, k) } else if k == 0 { (0, 1) } else if k == n - 1 { (n - 2, n - 1) } else { (k - 1, k + 1) };
        if i != j {
            let (wi, wj) = (rows[i], rows[j]);
            rows[k].dhtilde_diff = if wi.htilde > 0.0 && wj.htilde > 0.0 && rows[k].htilde > 0.0 {
                // difference in log coordinates, exact on power laws
                rows[k].htilde / rows[k].r * (wj.htilde / wi.htilde).ln() / (wj.r / wi.r).ln()
            } else {
                (wj.htilde - wi.htilde) / (wj.r - wi.r)
            };
        }
    }
    // |A + B| ≤ C r^{1+3β} fitted on the trace bounds the omitted tail
    let c = rows
        .iter()
        .map(|w| (w.a + w.b).abs() / w.r.powf(1.0 + 3.0 * BETA))
        .fold(0.0, f64::max);
    let tail_bound = c * radii[0].powf(2.0 + 3.0 * BETA) / (2.0 + 3.0 * BETA);
    let mut trace = FrequencyTrace {
        center: wf.center,
        nu: wf.nu,
        sigma,
        rows,
        tail_bound,
        derivative_mismatch: 0.0,
        grid_h: h,
    };
    trace.derivative_mismatch = trace
        .usable()
        .filter(|w| w.dhtilde_diff.is_finite())
        .map(|w| (w.dhtilde_bulk - w.dhtilde_diff).abs() / w.dhtilde_diff.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(trace)
}

/// Fills `Ñ = (r/2) d/dr ln max(H̃, r^{3+σ})`.
///
/// The derivative is a centred difference in `ln r` of the logarithm of the
/// truncated height, which is exact on power laws; truncated rows take the
/// exact branch value `(3+σ)/2`.
pub fn truncated_frequency(mut trace: FrequencyTrace) -> FrequencyTrace {
    let s = trace.sigma;
    let logm: Vec<f64> = trace
        .rows
        .iter()
        .map(|w| w.htilde.max(w.r.powf(3.0 + s)).ln())
        .collect();
    let n = trace.rows.len();
    for k in 0..n {
        if trace.rows[k].truncated {
            trace.rows[k].ntilde = 0.5 * (3.0 + s);
            continue;
        }
        let (i, j) = if n == 1 { (k, k) } else if k == 0 { (0, 1) } else if k == n - 1 { (n - 2, n - 1) } else { (k - 1, k + 1) };
        trace.rows[k].ntilde = if i == j {
            f64::NAN
        } else {
            0.5 * (logm[j] - logm[i]) / (trace.rows[j].r.ln() - trace.rows[i].r.ln())
        };
    }
    trace
}

/// Trace with `Ñ` at the given radii.
pub fn frequency_trace(wf: &WFields, radii: &[f64], sigma: f64) -> Result<FrequencyTrace> {
    Ok(truncated_frequency(modified_height_trace(wf, radii, sigma)?))
}

/// 25 constants log-spaced over `[1e-3, 1e3]`.
pub fn default_c_grid() -> Vec<f64> {
    (0..25).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Smallest admissible constant, `+∞` if none in the grid works.
    pub c: f64,
    pub slack: f64,
    /// Largest drop of `Ñ` between consecutive rows (radius increasing).
    pub max_drop: f64,
}

pub fn monotonicity_report(trace: &FrequencyTrace, c_grid: &[f64]) -> MonotonicityReport {
    const SLACK: f64 = 1e-3;
    let rows: Vec<(f64, f64)> = trace.rows.iter().filter(|w| w.ntilde.is_finite()).map(|w| (w.r, w.ntilde)).collect();
    let ok = |c: f64| {
        rows.windows(2).all(|p| {
            let m0 = (1.0 + c * p[0].0.powf(trace.sigma)) * p[0].1;
            let m1 = (1.0 + c * p[1].0.powf(trace.sigma)) * p[1].1;
            m1 >= m0 - SLACK
        })
    };
    let mut grid = c_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let c = grid.into_iter().find(|&c| ok(c)).unwrap_or(f64::INFINITY);
    let max_drop = rows.windows(2).map(|p| p[0].1 - p[1].1).fold(0.0, f64::max);
    MonotonicityReport { c, slack: SLACK, max_drop }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub min_ntilde: Option<f64>,
    pub tol: f64,
    pub rows_used: usize,
    pub pass: bool,
}

/// `min Ñ ≥ 3/2 - tol` over non-truncated rows above the floor, `tol = 0.1 + h/r_min`.
pub fn lower_bound_check(trace: &FrequencyTrace) -> LowerBoundReport {
    let used: Vec<&FrequencyRow> = trace.usable().filter(|w| w.ntilde.is_finite()).collect();
    let min_ntilde = used.iter().map(|w| w.ntilde).reduce(f64::min);
    let r_min = used.iter().map(|w| w.r).fold(f64::INFINITY, f64::min);
    let tol = 0.1 + if r_min.is_finite() { trace.grid_h / r_min } else { 0.0 };
    LowerBoundReport {
        min_ntilde,
        tol,
        rows_used: used.len(),
        pass: min_ntilde.is_some_and(|m| m >= 1.5 - tol),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicReport {
    pub slope: f64,
    pub rows_used: usize,
    pub pass: bool,
}

/// Log-log slope of `H̃` against `r`; passes when at least `2.7`.
pub fn cubic_height_check(trace: &FrequencyTrace) -> Result<CubicReport> {
    let pts: Vec<(f64, f64)> = trace
        .usable()
        .filter(|w| w.htilde > 0.0)
        .map(|w| (w.r.ln(), w.htilde.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::TooFewSamples(format!("{} usable rows, need 4", pts.len())));
    }
    let slope = fit_slope(&pts).unwrap_or(f64::NAN);
    Ok(CubicReport { slope, rows_used: pts.len(), pass: slope >= 3.0 - 0.3 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub radii: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Value at `r = 0` of the least-squares line through `λ(r)`.
    pub extrapolated: f64,
}

/// Almgren quotient `λ(r) = r ∫_{B_r⁺} |∇f|² / ∫_{∂B_r ∩ {y ≥ y_c}} f²`.
pub fn estimate_homogeneity(field: &ScalarField, center: Vec2, radii: &[f64]) -> Result<HomogeneityReport> {
    let h = field.spec().h;
    let g = gradient(field)?;
    let gx = ScalarField::from_values(*field.spec(), field.domain(), g.gx)?;
    let gy = ScalarField::from_values(*field.spec(), field.domain(), g.gy)?;
    let mut lambda = Vec::with_capacity(radii.len());
    for &r in radii {
        let na = ((PI * r / h).ceil() as usize).max(64);
        let nr = ((2.0 * r / h).ceil() as usize).max(32);
        let dt = PI / na as f64;
        let trap = |k: usize| if k == 0 || k == na { 0.5 } else { 1.0 };
        let at = |f: &ScalarField, p: Vec2| f.sample(p).ok_or_else(|| outside(p));
        let mut hf = 0.0;
        for k in 0..=na {
            let p = center + Vec2::from_angle(k as f64 * dt) * r;
            hf += trap(k) * at(field, p)?.powi(2) * r * dt;
        }
        let dr = r / nr as f64;
        let mut e = 0.0;
        for i in 0..nr {
            let rho = (i as f64 + 0.5) * dr;
            for k in 0..=na {
                let p = center + Vec2::from_angle(k as f64 * dt) * rho;
                let (a, b) = (at(&gx, p)?, at(&gy, p)?);
                e += trap(k) * (a * a + b * b) * rho * dr * dt;
            }
        }
        if hf == 0.0 {
            return Err(Error::InvalidParams(format!("boundary L2 norm vanishes at r = {r}")));
        }
        lambda.push(r * e / hf);
    }
    let n = radii.len() as f64;
    let extrapolated = if radii.len() >= 2 {
        let mr = radii.iter().sum::<f64>() / n;
        let ml = lambda.iter().sum::<f64>() / n;
        let sxx: f64 = radii.iter().map(|r| (r - mr).powi(2)).sum();
        let sxy: f64 = radii.iter().zip(&lambda).map(|(r, l)| (r - mr) * (l - ml)).sum();
        ml - sxy / sxx * mr
    } else {
        lambda.first().copied().unwrap_or(f64::NAN)
    };
    Ok(HomogeneityReport { radii: radii.to_vec(), lambda, extrapolated })
}
