//! Free-boundary extraction and the Bernoulli / blow-up diagnostics.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::sharp_threshold;
use crate::error::{Error, Result};
use crate::grid::{ball_inside, ScalarField, Vec2};
use crate::gridio::fmt_real;
use crate::pair::FieldPair;

pub const KAPPA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    OnePhaseU,
    OnePhaseV,
    TwoPhase,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::OnePhaseU => "OnePhaseU",
            Phase::OnePhaseV => "OnePhaseV",
            Phase::TwoPhase => "TwoPhase",
        }
    }
}

/// Which level set a sample was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    U,
    V,
}

/// Marching-squares chain, oriented with the positive phase on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl Polyline {
    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.points.len();
        let extra = usize::from(self.closed && n > 2);
        (0..(n.saturating_sub(1) + extra)).map(move |s| (self.points[s], self.points[(s + 1) % n]))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `p` to the chain.
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.points.len() == 1 {
            return p.dist(self.points[0]);
        }
        self.segments().map(|(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let l2 = d.dot(d);
    if l2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / l2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

pub fn distance_to_set(lines: &[Polyline], p: Vec2) -> f64 {
    lines.iter().map(|l| l.distance(p)).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundarySample {
    pub location: Vec2,
    pub phase: Phase,
    pub source: Component,
    /// Unit inner normal, pointing into the positivity set.
    pub normal: Vec2,
    pub grad_u: f64,
    pub grad_v: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub samples: Vec<FreeBoundarySample>,
    pub polyline_u: Vec<Polyline>,
    pub polyline_v: Vec<Polyline>,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub kappa: f64,
    /// Probe length in units of `h`.
    pub probe: f64,
    /// Normal-fit window in units of `h`.
    pub window: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { kappa: KAPPA, probe: 4.0, window: 4.0 }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct EdgeKey {
    vertical: bool,
    i: usize,
    j: usize,
}

/// Oriented chains of the level set `{f = level}` with `{f > level}` on the left.
///
/// Only cells whose four corners are masked contribute. Saddle cells are
/// resolved by the sign of the cell average.
pub fn marching_squares(f: &ScalarField, level: f64) -> Vec<Polyline> {
    let s = *f.spec();
    let mut segs: Vec<(EdgeKey, EdgeKey, Vec2, Vec2)> = Vec::new();
    for j in 0..s.ny - 1 {
        for i in 0..s.nx - 1 {
            let ids = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            if !ids.iter().all(|&(a, b)| f.is_masked(a, b)) {
                continue;
            }
            let vals = ids.map(|(a, b)| f.at(a, b));
            let inside = vals.map(|v| v > level);
            if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                continue;
            }
            let edges = [
                EdgeKey { vertical: false, i, j },
                EdgeKey { vertical: true, i: i + 1, j },
                EdgeKey { vertical: false, i, j: j + 1 },
                EdgeKey { vertical: true, i, j },
            ];
            // crossings in counter-clockwise order: (edge, point, exits the inside)
            let mut cross: Vec<(EdgeKey, Vec2, bool)> = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if inside[a] != inside[b] {
                    let t = (level - vals[a]) / (vals[b] - vals[a]);
                    let pa = s.node(ids[a].0, ids[a].1);
                    let pb = s.node(ids[b].0, ids[b].1);
                    cross.push((edges[e], pa + (pb - pa) * t, inside[a]));
                }
            }
            let n = cross.len();
            let connected = n == 4 && vals.iter().sum::<f64>() / 4.0 > level;
            for c in 0..n {
                if !cross[c].2 {
                    continue;
                }
                // an exit pairs with the next entry when the inside is connected
                // through the cell, otherwise with the previous one
                let partner = if n == 2 || connected { (c + 1) % n } else { (c + n - 1) % n };
                segs.push((cross[c].0, cross[partner].0, cross[c].1, cross[partner].1));
            }
        }
    }
    chain(segs)
}

fn chain(segs: Vec<(EdgeKey, EdgeKey, Vec2, Vec2)>) -> Vec<Polyline> {
    let by_start: HashMap<EdgeKey, usize> = segs.iter().enumerate().map(|(n, s)| (s.0, n)).collect();
    let has_pred: std::collections::HashSet<EdgeKey> = segs.iter().map(|s| s.1).collect();
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| {
        let mut pts = vec![segs[start].2];
        let mut cur = start;
        let mut closed = false;
        loop {
            used[cur] = true;
            pts.push(segs[cur].3);
            match by_start.get(&segs[cur].1) {
                Some(&next) if next == start => {
                    closed = true;
                    pts.pop();
                    break;
                }
                Some(&next) if !used[next] => cur = next,
                _ => break,
            }
        }
        Polyline { points: pts, closed }
    };
    // open chains first, from segments without a predecessor
    for n in 0..segs.len() {
        if !used[n] && !has_pred.contains(&segs[n].0) {
            out.push(walk(n, &mut used));
        }
    }
    for n in 0..segs.len() {
        if !used[n] {
            out.push(walk(n, &mut used));
        }
    }
    out
}

/// Least-squares normal of the polyline near `location`.
///
/// Fits a line through the vertices within `window`; the normal points to the
/// left of the chain, which is the positive phase.
pub fn estimate_normal(polyline: &Polyline, location: Vec2, window: f64) -> Result<Vec2> {
    let pts: Vec<Vec2> = polyline.points.iter().copied().filter(|p| p.dist(location) <= window).collect();
    if pts.len() < 3 {
        return Err(Error::TooFewSamples(format!(
            "{} polyline vertices within {window}, need 3",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in &pts {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    // principal direction of the scatter matrix
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let tangent = Vec2::from_angle(theta);
    let normal = tangent.perp();
    Ok(if normal.dot(local_left(polyline, location)) < 0.0 { -normal } else { normal })
}

/// Left normal of the segment closest to `p`.
fn local_left(polyline: &Polyline, p: Vec2) -> Vec2 {
    polyline
        .segments()
        .map(|(a, b)| (segment_distance(p, a, b), b - a))
        .filter(|(_, d)| d.norm() > 0.0)
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, d)| d.perp().normalized())
        .unwrap_or(Vec2::E_Y)
}

/// One-sided slope along `+normal`, Richardson-extrapolated from `probe/2` and `probe`.
pub fn boundary_gradient(field: &ScalarField, sample: &FreeBoundarySample, probe: f64) -> Result<f64> {
    let h = field.spec().h;
    if probe < 2.0 * h - 1e-12 || probe > 10.0 * h + 1e-12 {
        return Err(Error::InvalidParams(format!("probe {probe} outside [2h, 10h]")));
    }
    let x = sample.location;
    let at = |p: Vec2| {
        field
            .sample(p)
            .ok_or_else(|| Error::OutsideDomain(format!("probe point ({}, {}) outside mask", p.x, p.y)))
    };
    let f0 = at(x)?;
    let s1 = (at(x + sample.normal * (0.5 * probe))? - f0) / (0.5 * probe);
    let s2 = (at(x + sample.normal * probe)? - f0) / probe;
    Ok(2.0 * s1 - s2)
}

pub fn bernoulli_residual(pair: &FieldPair, sample: &FreeBoundarySample) -> f64 {
    let (gu, gv) = (sample.grad_u, sample.grad_v);
    match sample.phase {
        Phase::OnePhaseU => (gu * gu - pair.params.lambda_u).abs(),
        Phase::OnePhaseV => (gv * gv - pair.params.lambda_v).abs(),
        Phase::TwoPhase => (gu * gu + gv * gv - 1.0).abs(),
    }
}

pub fn extract_boundaries(pair: &FieldPair) -> BoundarySet {
    extract_boundaries_with(pair, &ExtractOptions::default())
}

pub fn extract_boundaries_with(pair: &FieldPair, opts: &ExtractOptions) -> BoundarySet {
    let h = pair.spec().h;
    let polyline_u = marching_squares(&pair.u, sharp_threshold(&pair.u));
    let polyline_v = marching_squares(&pair.v, sharp_threshold(&pair.v));
    let pairing = opts.kappa * h;

    let mut seeds = Vec::new();
    for (comp, own) in [(Component::U, &polyline_u), (Component::V, &polyline_v)] {
        for line in own.iter() {
            for (a, b) in line.segments() {
                seeds.push((comp, line, (a + b) * 0.5, (b - a).perp()));
            }
        }
    }
    let samples = seeds
        .par_iter()
        .map(|&(comp, line, loc, left)| {
            let other = if comp == Component::U { &polyline_v } else { &polyline_u };
            let two = distance_to_set(other, loc) <= pairing;
            let phase = match (two, comp) {
                (true, _) => Phase::TwoPhase,
                (false, Component::U) => Phase::OnePhaseU,
                (false, Component::V) => Phase::OnePhaseV,
            };
            let normal = estimate_normal(line, loc, opts.window * h).unwrap_or_else(|_| {
                if left.norm() > 0.0 { left.normalized() } else { Vec2::E_Y }
            });
            let mut s = FreeBoundarySample {
                location: loc,
                phase,
                source: comp,
                normal,
                grad_u: f64::NAN,
                grad_v: f64::NAN,
                residual: f64::NAN,
            };
            let probe = opts.probe * h;
            s.grad_u = boundary_gradient(&pair.u, &s, probe).unwrap_or(f64::NAN);
            s.grad_v = if phase == Phase::OnePhaseU {
                0.0
            } else {
                boundary_gradient(&pair.v, &s, probe).unwrap_or(f64::NAN)
            };
            s.residual = bernoulli_residual(pair, &s);
            s
        })
        .collect();
    BoundarySet { samples, polyline_u, polyline_v, h }
}

impl BoundarySet {
    pub fn of_phase(&self, phase: Phase) -> impl Iterator<Item = &FreeBoundarySample> {
        self.samples.iter().filter(move |s| s.phase == phase)
    }

    /// Largest finite residual among samples of `phase`, with the count of samples used.
    pub fn max_residual(&self, phase: Phase) -> (f64, usize) {
        self.of_phase(phase)
            .filter(|s| s.residual.is_finite())
            .fold((0.0, 0), |(m, n), s| (f64::max(m, s.residual), n + 1))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,phase,nx,ny,grad_u,grad_v,residual")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_real(s.location.x),
                fmt_real(s.location.y),
                s.phase.name(),
                fmt_real(s.normal.x),
                fmt_real(s.normal.y),
                fmt_real(s.grad_u),
                fmt_real(s.grad_v),
                fmt_real(s.residual)
            )?;
        }
        Ok(())
    }

    /// One line per segment: `component chain x0 y0 x1 y1`.
    pub fn segments_text(&self) -> String {
        let mut out = String::new();
        for (name, lines) in [("u", &self.polyline_u), ("v", &self.polyline_v)] {
            for (c, line) in lines.iter().enumerate() {
                for (a, b) in line.segments() {
                    let _ = writeln!(
                        out,
                        "{name} {c} {} {} {} {}",
                        fmt_real(a.x),
                        fmt_real(a.y),
                        fmt_real(b.x),
                        fmt_real(b.y)
                    );
                }
            }
        }
        out
    }
}

/// `m = √(u² + v²)` and `q = √Λ_u u + √Λ_v v`.
pub fn competitor_fields(pair: &FieldPair) -> (ScalarField, ScalarField) {
    let (gu, gv) = (pair.params.gamma_u(), pair.params.gamma_v());
    let m = pair.u.map_nodes(|k, _, a| a.hypot(pair.v.get(k)));
    let q = pair.u.map_nodes(|k, _, a| gu * a + gv * pair.v.get(k));
    (m, q)
}

/// Boundary slopes of the competitors at a sample: `(|∇m|, |∇q|)`.
pub fn competitor_gradients(pair: &FieldPair, sample: &FreeBoundarySample, probe: f64) -> Result<(f64, f64)> {
    let (m, q) = competitor_fields(pair);
    Ok((boundary_gradient(&m, sample, probe)?, boundary_gradient(&q, sample, probe)?))
}

/// Least-squares `c` in `u ≈ c v` over `B_r(center) ∩ {v > τ}`.
pub fn proportionality_fit(pair: &FieldPair, center: Vec2, r: f64) -> Result<(f64, f64)> {
    let h = pair.spec().h;
    if r < 8.0 * h - 1e-12 {
        return Err(Error::InvalidParams(format!("radius {r} below 8h")));
    }
    if !ball_inside(&pair.u, center, r) {
        return Err(Error::OutsideDomain(format!("B_{r}({}, {}) leaves the domain", center.x, center.y)));
    }
    let tau = sharp_threshold(&pair.v);
    let nodes: Vec<(f64, f64)> = pair
        .u
        .masked_nodes()
        .filter(|&(k, i, j)| pair.spec().node(i, j).dist(center) <= r && pair.v.get(k) > tau)
        .map(|(k, _, _)| (pair.u.get(k), pair.v.get(k)))
        .collect();
    if nodes.is_empty() {
        return Err(Error::EmptySet("{v > tau} does not meet the ball".into()));
    }
    let uv: f64 = nodes.iter().map(|(a, b)| a * b).sum();
    let vv: f64 = nodes.iter().map(|(_, b)| b * b).sum();
    let uu: f64 = nodes.iter().map(|(a, _)| a * a).sum();
    let c = uv / vv;
    let rr: f64 = nodes.iter().map(|(a, b)| (a - c * b).powi(2)).sum();
    Ok((c, (rr / uu).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyRow {
    pub sample: usize,
    pub r: f64,
    pub ratio_u: f64,
    pub ratio_v: f64,
}

impl NondegeneracyRow {
    /// Ratio of the component whose boundary carries the sample.
    pub fn own_ratio(&self, set: &BoundarySet) -> f64 {
        match set.samples[self.sample].source {
            Component::U => self.ratio_u,
            Component::V => self.ratio_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyScan {
    pub rows: Vec<NondegeneracyRow>,
    /// Minimum of the sample's own-component ratio over the table.
    pub min_ratio: f64,
    /// (sample, radius) pairs skipped because the ball left the domain.
    pub skipped: usize,
}

pub fn nondegeneracy_scan(pair: &FieldPair, boundary: &BoundarySet, radii: &[f64]) -> NondegeneracyScan {
    let spec = *pair.spec();
    let rows: Vec<Option<NondegeneracyRow>> = boundary
        .samples
        .par_iter()
        .enumerate()
        .flat_map_iter(|(n, s)| {
            radii.iter().map(move |&r| {
                if !ball_inside(&pair.u, s.location, r) {
                    return None;
                }
                let (lx, ly) = spec.to_lattice(s.location);
                let w = (r / spec.h).ceil() as isize + 1;
                let (mut su, mut sv) = (0.0f64, 0.0f64);
                for j in (ly as isize - w).max(0)..=(ly as isize + w).min(spec.ny as isize - 1) {
                    for i in (lx as isize - w).max(0)..=(lx as isize + w).min(spec.nx as isize - 1) {
                        let (i, j) = (i as usize, j as usize);
                        if pair.u.is_masked(i, j) && spec.node(i, j).dist(s.location) <= r {
                            su = su.max(pair.u.at(i, j));
                            sv = sv.max(pair.v.at(i, j));
                        }
                    }
                }
                Some(NondegeneracyRow { sample: n, r, ratio_u: su / r, ratio_v: sv / r })
            })
        })
        .collect();
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let rows: Vec<NondegeneracyRow> = rows.into_iter().flatten().collect();
    let min_ratio = rows.iter().map(|r| r.own_ratio(boundary)).fold(f64::INFINITY, f64::min);
    NondegeneracyScan { rows, min_ratio, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, GridSpec};
    use crate::pair::{reference_plane_pair, Params};

    fn params() -> Params {
        Params::new(0.7, 0.3).unwrap()
    }

    fn plane(h: f64) -> FieldPair {
        let spec = GridSpec::centered(1.0, h).unwrap();
        reference_plane_pair(params(), Vec2::E_Y, spec, Domain::Disk { radius: 1.0 })
    }

    #[test]
    fn plane_boundaries_coincide_and_are_two_phase() {
        let h = 1.0 / 32.0;
        let set = extract_boundaries(&plane(h));
        assert!(!set.polyline_u.is_empty() && !set.polyline_v.is_empty());
        for l in set.polyline_u.iter().chain(&set.polyline_v) {
            assert!(l.points.iter().all(|p| p.y.abs() <= h));
        }
        assert!(!set.samples.is_empty());
        assert!(set.samples.iter().all(|s| s.phase == Phase::TwoPhase));
        for s in &set.samples {
            assert!((s.normal.norm() - 1.0).abs() < 1e-12);
            if s.location.x.abs() < 0.8 {
                assert!(s.normal.dist(Vec2::E_Y) < 1e-9, "{:?}", s.normal);
                assert!((s.grad_u - 0.7f64.sqrt()).abs() < 1e-6);
                assert!((s.grad_v - 0.3f64.sqrt()).abs() < 1e-6);
                assert!(s.residual < 1e-6);
            }
        }
    }

    #[test]
    fn shifted_planes_are_one_phase() {
        let spec = GridSpec::centered(1.0, 1.0 / 32.0).unwrap();
        let d = Domain::Disk { radius: 1.0 };
        let u = ScalarField::from_fn(spec, d, |p| 0.7f64.sqrt() * p.y.max(0.0));
        let v = ScalarField::from_fn(spec, d, |p| 0.3f64.sqrt() * (p.y - 0.3).max(0.0));
        let set = extract_boundaries(&FieldPair::new(u, v, params()).unwrap());
        assert!(set.samples.iter().all(|s| s.phase != Phase::TwoPhase));
        let dist = distance_to_set(&set.polyline_v, Vec2::new(0.0, 0.0));
        assert!((dist - 0.3).abs() < 1.0 / 32.0);
        for s in set.of_phase(Phase::OnePhaseU) {
            assert_eq!(s.grad_v, 0.0);
        }
    }

    #[test]
    fn positive_fields_have_no_boundary() {
        let spec = GridSpec::centered(1.0, 1.0 / 16.0).unwrap();
        let d = Domain::Disk { radius: 1.0 };
        let u = ScalarField::from_fn(spec, d, |_| 1.0);
        let v = ScalarField::zeros(spec, d);
        let set = extract_boundaries(&FieldPair::new(u, v, params()).unwrap());
        assert!(set.polyline_u.is_empty() && set.polyline_v.is_empty() && set.samples.is_empty());
    }

    #[test]
    fn circle_is_closed_with_outward_normals() {
        let spec = GridSpec::centered(1.0, 1.0 / 64.0).unwrap();
        let f = ScalarField::from_fn(spec, Domain::Rectangle, |p| p.norm() - 0.5);
        let lines = marching_squares(&f, 1e-8);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        for &p in lines[0].points.iter().step_by(7) {
            let n = estimate_normal(&lines[0], p, 4.0 / 64.0).unwrap();
            assert!(n.dist(p.normalized()) < 0.02, "{n:?} at {p:?}");
        }
    }

    #[test]
    fn saddle_cells_follow_the_average() {
        // checkerboard 2x2 cell: average above the level connects the inside
        let spec = GridSpec::new(3, 3, 1.0, Vec2::ZERO).unwrap();
        let x = -5.0;
        let hi = ScalarField::from_values(spec, Domain::Rectangle, vec![1.0, -0.2, x, -0.2, 1.0, x, x, x, x]).unwrap();
        let lo = ScalarField::from_values(spec, Domain::Rectangle, vec![0.2, -1.0, x, -1.0, 0.2, x, x, x, x]).unwrap();
        let c = Vec2::new(0.5, 0.5);
        let in_cell = |a: Vec2, b: Vec2| {
            let m = (a + b) * 0.5;
            m.x > 0.0 && m.x < 1.0 && m.y > 0.0 && m.y < 1.0
        };
        let cell_segs = |f: &ScalarField| -> Vec<(Vec2, Vec2)> {
            marching_squares(f, 0.0)
                .iter()
                .flat_map(|l| l.segments().collect::<Vec<_>>())
                .filter(|&(a, b)| in_cell(a, b))
                .collect()
        };
        let (shi, slo) = (cell_segs(&hi), cell_segs(&lo));
        assert_eq!(shi.len(), 2);
        assert_eq!(slo.len(), 2);
        // connected inside: the centre is on the positive (left) side of both cuts
        let left_of = |(a, b): (Vec2, Vec2)| (b - a).perp().dot(c - a);
        assert!(shi.into_iter().all(|s| left_of(s) > 0.0));
        assert!(slo.into_iter().all(|s| left_of(s) < 0.0));
    }

    #[test]
    fn jittered_line_normal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 1.0 / 64.0;
        let pts: Vec<Vec2> = (0..40)
            .map(|n| Vec2::new(-0.3 + n as f64 * h, rng.gen_range(-0.25..0.25) * h))
            .collect();
        let line = Polyline { points: pts, closed: false };
        for x in [-0.2, 0.0, 0.2] {
            let n = estimate_normal(&line, Vec2::new(x, 0.0), 4.0 * h).unwrap();
            assert!(n.angle() - std::f64::consts::FRAC_PI_2 < 0.1);
            assert!(n.y > 0.0);
        }
    }

    #[test]
    fn too_few_vertices() {
        let line = Polyline { points: vec![Vec2::ZERO, Vec2::E_X], closed: false };
        assert!(matches!(estimate_normal(&line, Vec2::ZERO, 2.0), Err(Error::TooFewSamples(_))));
    }

    #[test]
    fn boundary_gradient_examples() {
        let h = 1.0 / 32.0;
        let p = plane(h);
        let s = FreeBoundarySample {
            location: Vec2::new(0.1, 0.0),
            phase: Phase::TwoPhase,
            source: Component::U,
            normal: Vec2::E_Y,
            grad_u: 0.0,
            grad_v: 0.0,
            residual: 0.0,
        };
        assert!((boundary_gradient(&p.u, &s, 4.0 * h).unwrap() - 0.836660).abs() < 1e-6);
        assert!((boundary_gradient(&p.v, &s, 4.0 * h).unwrap() - 0.547723).abs() < 1e-6);
        let down = FreeBoundarySample { normal: -Vec2::E_Y, ..s };
        assert_eq!(boundary_gradient(&p.u, &down, 4.0 * h).unwrap(), 0.0);
        assert!(boundary_gradient(&p.u, &s, h).is_err());
        let edge = FreeBoundarySample { location: Vec2::new(0.0, 0.99), ..s };
        assert!(matches!(boundary_gradient(&p.u, &edge, 4.0 * h), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn bernoulli_residual_examples() {
        let spec = GridSpec::centered(1.0, 1.0 / 16.0).unwrap();
        let d = Domain::Disk { radius: 1.0 };
        let z = ScalarField::zeros(spec, d);
        let pair = FieldPair::new(z.clone(), z, params()).unwrap();
        let mut s = FreeBoundarySample {
            location: Vec2::ZERO,
            phase: Phase::OnePhaseU,
            source: Component::U,
            normal: Vec2::E_Y,
            grad_u: 2.0,
            grad_v: 0.0,
            residual: 0.0,
        };
        assert!((bernoulli_residual(&pair, &s) - 3.3).abs() < 1e-12);
        s.grad_u = 0.7f64.sqrt();
        assert!(bernoulli_residual(&pair, &s) < 1e-12);
    }

    #[test]
    fn competitor_examples() {
        let p = plane(1.0 / 16.0);
        let (m, q) = competitor_fields(&p);
        for (k, i, j) in m.masked_nodes() {
            let y = p.spec().node(i, j).y.max(0.0);
            assert!((m.get(k) - y).abs() < 1e-12);
            assert!((q.get(k) - y).abs() < 1e-12);
        }
        let same = FieldPair::new(p.u.clone(), p.u.clone(), params()).unwrap();
        let (m, q) = competitor_fields(&same);
        for k in m.interior_nodes() {
            assert!((m.get(k) - 2f64.sqrt() * p.u.get(k)).abs() < 1e-12);
            assert!((q.get(k) - (0.7f64.sqrt() + 0.3f64.sqrt()) * p.u.get(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn proportionality_examples() {
        let p = plane(1.0 / 32.0);
        let (c, res) = proportionality_fit(&p, Vec2::ZERO, 0.3).unwrap();
        assert!((c - 1.527525).abs() < 1e-6);
        assert!(res < 1e-12);
        let triple = FieldPair::new(p.v.map(|x| 3.0 * x), p.v.clone(), params()).unwrap();
        let (c, res) = proportionality_fit(&triple, Vec2::ZERO, 0.3).unwrap();
        assert!((c - 3.0).abs() < 1e-12 && res < 1e-7);
        assert!(matches!(proportionality_fit(&p, Vec2::new(0.0, -0.5), 0.3), Err(Error::EmptySet(_))));
        assert!(proportionality_fit(&p, Vec2::ZERO, 0.1).is_err());
    }

    #[test]
    fn nondegeneracy_on_plane() {
        let p = plane(1.0 / 32.0);
        let set = extract_boundaries(&p);
        let scan = nondegeneracy_scan(&p, &set, &[0.1, 0.2]);
        assert!(!scan.rows.is_empty());
        for row in &scan.rows {
            // sup over lattice nodes within r of a sample just above y = 0
            assert!(row.ratio_u <= 0.7f64.sqrt() + 1e-9);
            assert!(row.ratio_u > 0.7f64.sqrt() * 0.7);
        }
        assert!(scan.min_ratio > 0.3);
    }

    #[test]
    fn csv_header_and_rows() {
        let set = extract_boundaries(&plane(1.0 / 16.0));
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,y,phase,nx,ny,grad_u,grad_v,residual");
        assert_eq!(lines.count(), set.samples.len());
        assert!(set.segments_text().lines().all(|l| l.split(' ').count() == 6));
    }
}
