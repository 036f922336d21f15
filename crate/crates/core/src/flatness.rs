//! ε-flatness certificates and their decay under shrinking radii.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::sharp_threshold;
use crate::error::{Error, Result};
use crate::free_boundary::{estimate_normal, marching_squares};
use crate::grid::{ball_inside, Vec2};
use crate::gridio::fmt_real;
use crate::pair::FieldPair;

const ANGLE_BRACKET: f64 = 0.3;
const GAMMA_RANGE: (f64, f64) = (0.2, 0.98);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessCertificate {
    pub center: Vec2,
    pub r: f64,
    pub nu: Vec2,
    pub gamma_u: f64,
    pub gamma_v: f64,
    /// Sandwich width per unit radius; `+∞` when no candidate reaches 1.
    pub epsilon: f64,
}

impl FlatnessCertificate {
    pub fn is_flat(&self) -> bool {
        self.epsilon.is_finite()
    }

    /// Below `2h/r` the width is indistinguishable from the lattice staircase.
    pub fn at_floor(&self, h: f64) -> bool {
        self.epsilon < 2.0 * h / self.r
    }
}

/// Nodes of the ball as `(offset from center, u, v)`.
struct Ball {
    nodes: Vec<(Vec2, f64, f64)>,
    r: f64,
}

impl Ball {
    fn new(pair: &FieldPair, center: Vec2, r: f64) -> Self {
        let tu = sharp_threshold(&pair.u);
        let tv = sharp_threshold(&pair.v);
        let clip = |x: f64, t: f64| if x > t { x } else { 0.0 };
        let nodes = pair
            .u
            .masked_nodes()
            .filter_map(|(k, i, j)| {
                let d = pair.spec().node(i, j) - center;
                (d.norm() <= r).then(|| (d, clip(pair.u.get(k), tu), clip(pair.v.get(k), tv)))
            })
            .collect();
        Ball { nodes, r }
    }

    /// Smallest admissible width for fixed `(ν, Γ_u)`.
    fn width(&self, nu: Vec2, gu: f64) -> f64 {
        let gv = (1.0 - gu * gu).max(0.0).sqrt();
        let mut eps = 0.0f64;
        for &(d, u, v) in &self.nodes {
            let s = d.dot(nu);
            eps = eps.max(s - u / gu);
            eps = eps.max(s - v / gv);
            if u > 0.0 {
                eps = eps.max(u / gu - s);
            }
            if v > 0.0 {
                eps = eps.max(v / gv - s);
            }
        }
        eps / self.r
    }
}

/// Golden-section minimum of `f` on `[a, b]`, seeded by a coarse scan.
fn minimise_1d(f: impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    const SCAN: usize = 12;
    let step = (b - a) / SCAN as f64;
    let (mut best, mut best_f) = (a, f(a));
    for n in 1..=SCAN {
        let x = a + n as f64 * step;
        let fx = f(x);
        if fx < best_f {
            best = x;
            best_f = fx;
        }
    }
    let (mut lo, mut hi) = ((best - step).max(a), (best + step).min(b));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..40 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if fx < best_f {
            best = x;
            best_f = fx;
        }
    }
    (best, best_f)
}

/// Normal of `∂{u > τ}` near `center` from the closest level-set chain.
pub fn initial_normal(pair: &FieldPair, center: Vec2, window: f64) -> Result<Vec2> {
    let lines = marching_squares(&pair.u, sharp_threshold(&pair.u));
    let line = lines
        .iter()
        .min_by(|a, b| a.distance(center).total_cmp(&b.distance(center)))
        .ok_or_else(|| Error::EmptySet("u has no free boundary".into()))?;
    estimate_normal(line, center, window)
}

pub fn measure_flatness(pair: &FieldPair, center: Vec2, r: f64) -> Result<FlatnessCertificate> {
    let h = pair.spec().h;
    let nu0 = initial_normal(pair, center, (4.0 * h).max(0.25 * r))?;
    measure_flatness_from(pair, center, r, nu0)
}

/// As [`measure_flatness`] with the angular bracket centred on `nu0`.
pub fn measure_flatness_from(pair: &FieldPair, center: Vec2, r: f64, nu0: Vec2) -> Result<FlatnessCertificate> {
    if !ball_inside(&pair.u, center, r) {
        return Err(Error::OutsideDomain(format!("B_{r}({}, {}) leaves the domain", center.x, center.y)));
    }
    let ball = Ball::new(pair, center, r);
    let theta0 = nu0.angle();
    let best_gamma = |theta: f64| {
        let nu = Vec2::from_angle(theta);
        minimise_1d(|g| ball.width(nu, g), GAMMA_RANGE.0, GAMMA_RANGE.1)
    };
    let (theta, eps) = minimise_1d(|t| best_gamma(t).1, theta0 - ANGLE_BRACKET, theta0 + ANGLE_BRACKET);
    let (gamma_u, _) = best_gamma(theta);
    let gamma_v = (1.0 - gamma_u * gamma_u).sqrt();
    Ok(FlatnessCertificate {
        center,
        r,
        nu: Vec2::from_angle(theta),
        gamma_u,
        gamma_v,
        epsilon: if eps <= 1.0 { eps } else { f64::INFINITY },
    })
}

/// Largest violation of the certificate's sandwich over the ball, in field units.
///
/// Values at or below the sharp threshold count as zero, matching the
/// positivity sets used everywhere else. Zero means the sandwich holds.
pub fn audit_certificate(pair: &FieldPair, cert: &FlatnessCertificate) -> f64 {
    let tu = sharp_threshold(&pair.u);
    let tv = sharp_threshold(&pair.v);
    let w = cert.epsilon * cert.r;
    let mut worst = 0.0f64;
    for (k, i, j) in pair.u.masked_nodes() {
        let d = pair.spec().node(i, j) - cert.center;
        if d.norm() > cert.r {
            continue;
        }
        let s = d.dot(cert.nu);
        for (f, g, t) in [(pair.u.get(k), cert.gamma_u, tu), (pair.v.get(k), cert.gamma_v, tv)] {
            let f = if f > t { f } else { 0.0 };
            let lower = g * (s - w).max(0.0);
            let upper = g * (s + w).max(0.0);
            worst = worst.max(lower - f).max(f - upper);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub certificates: Vec<FlatnessCertificate>,
    /// Fitted slope of `log ε` against `log r` over finite, non-floor entries.
    pub slope: Option<f64>,
    /// `ε(r_{k+1}) / ε(r_k)`.
    pub ratios: Vec<f64>,
    /// `|ν(r_{k+1}) - ν(r_k)|`.
    pub normal_steps: Vec<f64>,
    pub floor: Vec<bool>,
    /// Whether the largest radius satisfies `ε ≤ 0.1`.
    pub start_flat: bool,
    pub h: f64,
}

impl DecayReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "r,eps,nu_x,nu_y,gamma_u,floor_flag")?;
        for (c, fl) in self.certificates.iter().zip(&self.floor) {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_real(c.r),
                fmt_real(c.epsilon),
                fmt_real(c.nu.x),
                fmt_real(c.nu.y),
                fmt_real(c.gamma_u),
                u8::from(*fl)
            )?;
        }
        Ok(())
    }
}

pub fn flatness_decay_trace(pair: &FieldPair, center: Vec2, radii: &[f64]) -> Result<DecayReport> {
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParams("radii must be strictly decreasing".into()));
    }
    let h = pair.spec().h;
    let first = radii.first().ok_or_else(|| Error::InvalidParams("no radii".into()))?;
    let nu0 = initial_normal(pair, center, (4.0 * h).max(0.25 * first))?;
    let certificates: Vec<FlatnessCertificate> = radii
        .par_iter()
        .map(|&r| measure_flatness_from(pair, center, r, nu0))
        .collect::<Result<_>>()?;
    let floor: Vec<bool> = certificates.iter().map(|c| c.at_floor(h)).collect();
    let ratios = certificates.windows(2).map(|w| w[1].epsilon / w[0].epsilon).collect();
    let normal_steps = certificates.windows(2).map(|w| w[1].nu.dist(w[0].nu)).collect();
    let pts: Vec<(f64, f64)> = certificates
        .iter()
        .zip(&floor)
        .filter(|(c, fl)| c.epsilon.is_finite() && c.epsilon > 0.0 && !**fl)
        .map(|(c, _)| (c.r.ln(), c.epsilon.ln()))
        .collect();
    let slope = fit_slope(&pts);
    Ok(DecayReport {
        start_flat: certificates[0].epsilon <= 0.1,
        certificates,
        slope,
        ratios,
        normal_steps,
        floor,
        h,
    })
}

/// Least-squares slope; `None` for fewer than two points.
pub(crate) fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
