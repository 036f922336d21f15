//! Named boundary-data generators shared by the CLI, tests and benches.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Domain, GridSpec, ScalarField, Vec2};
use crate::pair::{reference_plane_pair, FieldPair, Params};
use crate::solver::BoundaryData;
use crate::thin_limits::{reference_signorini_pair, MembraneMode, MembranePair};

fn default_amplitude() -> f64 {
    0.2
}

/// Dirichlet data for the two-phase problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryPreset {
    /// Plane pair `(Γ_u (x·ν)⁺, Γ_v (x·ν)⁺)`, `ν` at `angle` radians from `e_y`.
    Plane {
        #[serde(default)]
        angle: f64,
    },
    /// `u = √Λ_u y⁺`, `v ≡ 0`.
    OnePhase,
    /// `ψ = y + a (x² − y²)`, `u = √Λ_u ψ⁺`, `v = √Λ_v ψ⁺`.
    PerturbedPlane {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    Zero,
}

impl BoundaryPreset {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryPreset::Plane { .. } => "plane",
            BoundaryPreset::OnePhase => "one_phase",
            BoundaryPreset::PerturbedPlane { .. } => "perturbed_plane",
            BoundaryPreset::Zero => "zero",
        }
    }

    pub fn normal(&self) -> Vec2 {
        match *self {
            BoundaryPreset::Plane { angle } => Vec2::E_Y.rotated(angle),
            _ => Vec2::E_Y,
        }
    }

    pub fn data(&self, spec: GridSpec, domain: Domain, params: Params) -> BoundaryData {
        let (gu, gv) = (params.gamma_u(), params.gamma_v());
        match *self {
            BoundaryPreset::Plane { .. } => {
                let p = reference_plane_pair(params, self.normal(), spec, domain);
                BoundaryData { u0: p.u, v0: p.v }
            }
            BoundaryPreset::OnePhase => {
                BoundaryData::from_fns(spec, domain, |p| gu * p.y.max(0.0), |_| 0.0)
            }
            BoundaryPreset::PerturbedPlane { amplitude } => {
                let psi = move |p: Vec2| (p.y + amplitude * (p.x * p.x - p.y * p.y)).max(0.0);
                BoundaryData::from_fns(spec, domain, |p| gu * psi(p), |p| gv * psi(p))
            }
            BoundaryPreset::Zero => BoundaryData::from_fns(spec, domain, |_| 0.0, |_| 0.0),
        }
    }

    /// Closed-form minimiser, where one is known.
    pub fn exact(&self, spec: GridSpec, domain: Domain, params: Params) -> Option<FieldPair> {
        match self {
            BoundaryPreset::Plane { .. } => Some(reference_plane_pair(params, self.normal(), spec, domain)),
            BoundaryPreset::OnePhase | BoundaryPreset::Zero => {
                let d = self.data(spec, domain, params);
                Some(FieldPair { u: d.u0, v: d.v0, params })
            }
            BoundaryPreset::PerturbedPlane { .. } => None,
        }
    }
}

/// Data for the thin-limit problems on the unit half-disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearPreset {
    /// Two-membrane data from the Signorini reference pair.
    Signorini,
    /// `h ≡ 1`, `w ≡ 0`: the constraint never binds.
    Separated,
    /// Transmission with `data_h = data_w = x² − y²`.
    TransmissionSymmetric,
    /// Transmission with `data_h = −data_w = y (1 + x)`.
    TransmissionAntisymmetric,
    /// Transmission with `e^x (cos y + a sin y)` data, `Λ_h a_h + Λ_w a_w = 0`.
    TransmissionMixed,
}

impl LinearPreset {
    pub const ALL: [LinearPreset; 5] = [
        LinearPreset::Signorini,
        LinearPreset::Separated,
        LinearPreset::TransmissionSymmetric,
        LinearPreset::TransmissionAntisymmetric,
        LinearPreset::TransmissionMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinearPreset::Signorini => "signorini",
            LinearPreset::Separated => "separated",
            LinearPreset::TransmissionSymmetric => "transmission_symmetric",
            LinearPreset::TransmissionAntisymmetric => "transmission_antisymmetric",
            LinearPreset::TransmissionMixed => "transmission_mixed",
        }
    }

    pub fn mode(self) -> MembraneMode {
        match self {
            LinearPreset::Signorini | LinearPreset::Separated => MembraneMode::TwoMembrane,
            _ => MembraneMode::Transmission,
        }
    }

    /// `(data_h, data_w)` sampled on every node of the half-disk.
    pub fn data(self, spec: GridSpec, lambda_h: f64, lambda_w: f64) -> Result<(ScalarField, ScalarField)> {
        let d = Domain::HalfDisk { radius: 1.0 };
        let pair = |fh: &dyn Fn(Vec2) -> f64, fw: &dyn Fn(Vec2) -> f64| {
            (ScalarField::from_fn(spec, d, fh), ScalarField::from_fn(spec, d, fw))
        };
        Ok(match self {
            LinearPreset::Signorini => {
                let r = reference_signorini_pair(lambda_h, lambda_w, spec, 1.0)?;
                (r.h, r.w)
            }
            LinearPreset::Separated => pair(&|_| 1.0, &|_| 0.0),
            LinearPreset::TransmissionSymmetric => {
                let f = |p: Vec2| p.x * p.x - p.y * p.y;
                pair(&f, &f)
            }
            LinearPreset::TransmissionAntisymmetric => {
                pair(&|p: Vec2| p.y * (1.0 + p.x), &|p: Vec2| -p.y * (1.0 + p.x))
            }
            LinearPreset::TransmissionMixed => {
                let (ah, aw) = mixed_slopes(lambda_h, lambda_w);
                pair(&move |p: Vec2| mixed(ah, p), &move |p: Vec2| mixed(aw, p))
            }
        })
    }

    /// Exact solution where one is known in closed form.
    pub fn exact(self, spec: GridSpec, lambda_h: f64, lambda_w: f64) -> Result<Option<MembranePair>> {
        let mode = self.mode();
        Ok(match self {
            LinearPreset::Signorini => Some(reference_signorini_pair(lambda_h, lambda_w, spec, 1.0)?),
            LinearPreset::TransmissionAntisymmetric if lambda_h != lambda_w => None,
            _ => {
                let (h, w) = self.data(spec, lambda_h, lambda_w)?;
                Some(MembranePair { h, w, lambda_h, lambda_w, mode, sweeps: 0, residual: 0.0 })
            }
        })
    }
}

/// Normal slopes `(a_h, a_w)` with `Λ_h a_h + Λ_w a_w = 0`.
fn mixed_slopes(lambda_h: f64, lambda_w: f64) -> (f64, f64) {
    let s = lambda_h + lambda_w;
    (lambda_w / s, -lambda_h / s)
}

fn mixed(a: f64, p: Vec2) -> f64 {
    p.x.exp() * (p.y.cos() + a * p.y.sin())
}
