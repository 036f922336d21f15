//! The two-phase functional, its smoothed surrogate and the ordered-cone projection.
//!
//! The Dirichlet term is the edge form `Σ_edges (f_a - f_b)^2`, whose exact
//! gradient is `-2 h^2 Δ_h f` with the five-point Laplacian. Measures are
//! node counts times `h^2`.

use serde::{Deserialize, Serialize};

use crate::grid::ScalarField;
use crate::pair::FieldPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// `3s^2 - 2s^3`
    Polynomial,
    /// `(1 - cos(π s)) / 2`
    Cosine,
}

/// Smooth step `S_δ`: zero for `t <= 0`, one for `t >= δ`, monotone and C¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub delta: f64,
    pub kind: StepKind,
}

impl SmoothingSpec {
    pub fn polynomial(delta: f64) -> Self {
        SmoothingSpec { delta, kind: StepKind::Polynomial }
    }

    pub fn scaled(self, factor: f64) -> Self {
        SmoothingSpec { delta: self.delta * factor, ..self }
    }

    #[inline]
    pub fn step(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.delta {
            return 1.0;
        }
        let s = t / self.delta;
        match self.kind {
            StepKind::Polynomial => s * s * (3.0 - 2.0 * s),
            StepKind::Cosine => 0.5 * (1.0 - (std::f64::consts::PI * s).cos()),
        }
    }

    #[inline]
    pub fn step_deriv(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.delta {
            return 0.0;
        }
        let s = t / self.delta;
        match self.kind {
            StepKind::Polynomial => 6.0 * s * (1.0 - s) / self.delta,
            StepKind::Cosine => {
                0.5 * std::f64::consts::PI * (std::f64::consts::PI * s).sin() / self.delta
            }
        }
    }
}

/// Energy breakdown. `measure_*` are the sharp, Λ-weighted measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dirichlet_u: f64,
    pub dirichlet_v: f64,
    pub measure_u: f64,
    pub measure_v: f64,
    pub total_smoothed: f64,
    pub total_sharp: f64,
}

/// Threshold separating the zero phase from round-off.
pub fn sharp_threshold(f: &ScalarField) -> f64 {
    1e-8 * f.sup_norm().max(1.0)
}

/// `Σ_edges (f_a - f_b)^2` over lattice edges joining two masked nodes.
pub fn dirichlet(f: &ScalarField) -> f64 {
    let s = f.spec();
    let mut acc = 0.0;
    for j in 0..s.ny {
        for i in 0..s.nx {
            if !f.is_masked(i, j) {
                continue;
            }
            let a = f.at(i, j);
            if i + 1 < s.nx && f.is_masked(i + 1, j) {
                acc += (a - f.at(i + 1, j)).powi(2);
            }
            if j + 1 < s.ny && f.is_masked(i, j + 1) {
                acc += (a - f.at(i, j + 1)).powi(2);
            }
        }
    }
    acc
}

/// `(|{f > τ}|, Σ S_δ(f) h^2)`
fn measures(f: &ScalarField, smoothing: &SmoothingSpec) -> (f64, f64) {
    let h2 = f.spec().h * f.spec().h;
    let tau = sharp_threshold(f);
    let (mut sharp, mut smooth) = (0.0, 0.0);
    for (k, _, _) in f.masked_nodes() {
        let v = f.get(k);
        if v > tau {
            sharp += h2;
        }
        smooth += smoothing.step(v) * h2;
    }
    (sharp, smooth)
}

pub fn energy(pair: &FieldPair, smoothing: &SmoothingSpec) -> EnergyReport {
    energy_phased(pair, smoothing, smoothing)
}

/// As [`energy`], with separate smoothing widths for `u` and `v`.
pub fn energy_phased(pair: &FieldPair, smooth_u: &SmoothingSpec, smooth_v: &SmoothingSpec) -> EnergyReport {
    let (lu, lv) = (pair.params.lambda_u, pair.params.lambda_v);
    let du = dirichlet(&pair.u);
    let dv = dirichlet(&pair.v);
    let (su, mu) = measures(&pair.u, smooth_u);
    let (sv, mv) = measures(&pair.v, smooth_v);
    EnergyReport {
        dirichlet_u: du,
        dirichlet_v: dv,
        measure_u: lu * su,
        measure_v: lv * sv,
        total_smoothed: du + dv + lu * mu + lv * mv,
        total_sharp: du + dv + lu * su + lv * sv,
    }
}

fn variation_of(f: &ScalarField, lambda: f64, smoothing: &SmoothingSpec) -> ScalarField {
    let s = *f.spec();
    let h2 = s.h * s.h;
    f.map_nodes(|k, _, v| {
        let (i, j) = (k % s.nx, k / s.nx);
        if f.is_interior(i, j) {
            let lap = (f.at(i + 1, j) + f.at(i - 1, j) + f.at(i, j + 1) + f.at(i, j - 1)
                - 4.0 * v)
                / h2;
            -2.0 * lap + lambda * smoothing.step_deriv(v)
        } else {
            0.0
        }
    })
}

/// L²-gradient of the smoothed energy; zero on pinned boundary nodes.
///
/// Paired with [`inner`], `⟨first_variation, φ⟩` is the exact directional
/// derivative of `total_smoothed` along any `φ` vanishing on boundary nodes.
pub fn first_variation(pair: &FieldPair, smoothing: &SmoothingSpec) -> (ScalarField, ScalarField) {
    first_variation_phased(pair, smoothing, smoothing)
}

pub fn first_variation_phased(
    pair: &FieldPair,
    smooth_u: &SmoothingSpec,
    smooth_v: &SmoothingSpec,
) -> (ScalarField, ScalarField) {
    (
        variation_of(&pair.u, pair.params.lambda_u, smooth_u),
        variation_of(&pair.v, pair.params.lambda_v, smooth_v),
    )
}

/// Discrete L² inner product `h^2 Σ a b` over interior nodes.
pub fn inner(a: &ScalarField, b: &ScalarField) -> f64 {
    let h2 = a.spec().h * a.spec().h;
    a.interior_nodes().into_iter().map(|k| a.get(k) * b.get(k)).sum::<f64>() * h2
}

/// Nearest point of the cone `{(a, b) : a >= b >= 0}`.
#[inline]
pub fn project_cone(a: f64, b: f64) -> (f64, f64) {
    if a >= b && b >= 0.0 {
        (a, b)
    } else if b > a {
        let m = 0.5 * (a + b);
        if m >= 0.0 {
            (m, m)
        } else {
            (0.0, 0.0)
        }
    } else {
        // b < 0 and b <= a
        (a.max(0.0), 0.0)
    }
}

/// Applies [`project_cone`] at every masked node.
pub fn project_pair(pair: &FieldPair) -> FieldPair {
    let mut out = pair.clone();
    project_pair_in_place(&mut out);
    out
}

pub fn project_pair_in_place(pair: &mut FieldPair) {
    let nodes: Vec<usize> = pair.u.masked_nodes().map(|(k, _, _)| k).collect();
    for k in nodes {
        let (a, b) = project_cone(pair.u.get(k), pair.v.get(k));
        pair.u.set(k, a);
        pair.v.set(k, b);
    }
}
