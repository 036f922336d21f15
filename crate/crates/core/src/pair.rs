//! Coefficients, the ordered field pair, and the two-phase plane solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridSpec, ScalarField, Vec2};

/// Bernoulli coefficients `(Λ_u, Λ_v)`, normalised to sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lambda_u: f64,
    pub lambda_v: f64,
}

impl Params {
    /// Positive coefficients summing to one; no ordering required.
    pub fn new(lambda_u: f64, lambda_v: f64) -> Result<Self> {
        let p = Params { lambda_u, lambda_v };
        p.validate()?;
        Ok(p)
    }

    /// Coefficients for the variational existence mode (`Λ_u >= Λ_v`).
    pub fn variational(lambda_u: f64, lambda_v: f64) -> Result<Self> {
        let p = Params::new(lambda_u, lambda_v)?;
        if lambda_u < lambda_v {
            return Err(Error::InvalidParams(format!(
                "lambda_u ({lambda_u}) must be >= lambda_v ({lambda_v})"
            )));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_u > 0.0 && self.lambda_u.is_finite()) {
            return Err(Error::InvalidParams(format!("lambda_u must be positive, got {}", self.lambda_u)));
        }
        if !(self.lambda_v > 0.0 && self.lambda_v.is_finite()) {
            return Err(Error::InvalidParams(format!("lambda_v must be positive, got {}", self.lambda_v)));
        }
        let sum = self.lambda_u + self.lambda_v;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("lambda_u + lambda_v must equal 1, got {sum}")));
        }
        Ok(())
    }

    pub fn gamma_u(&self) -> f64 {
        self.lambda_u.sqrt()
    }

    pub fn gamma_v(&self) -> f64 {
        self.lambda_v.sqrt()
    }
}

/// The solution state: `u >= v >= 0` on a shared grid and mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub u: ScalarField,
    pub v: ScalarField,
    pub params: Params,
}

impl FieldPair {
    pub fn new(u: ScalarField, v: ScalarField, params: Params) -> Result<Self> {
        if !u.same_layout(&v) {
            return Err(Error::InvalidGrid("u and v must share grid and mask".into()));
        }
        params.validate()?;
        Ok(FieldPair { u, v, params })
    }

    pub fn spec(&self) -> &GridSpec {
        self.u.spec()
    }

    /// Whether `u >= v >= 0` holds at every masked node.
    pub fn is_ordered(&self) -> bool {
        self.u
            .masked_nodes()
            .all(|(k, _, _)| self.u.get(k) >= self.v.get(k) && self.v.get(k) >= 0.0)
    }

    /// Swaps the roles of the two fields (the result need not be ordered).
    pub fn swapped(&self) -> FieldPair {
        FieldPair { u: self.v.clone(), v: self.u.clone(), params: self.params }
    }
}

/// Samples `u = √Λ_u (x·ν)⁺`, `v = √Λ_v (x·ν)⁺`.
pub fn reference_plane_pair(params: Params, nu: Vec2, spec: GridSpec, domain: Domain) -> FieldPair {
    let nu = nu.normalized();
    let (gu, gv) = (params.gamma_u(), params.gamma_v());
    let u = ScalarField::from_fn(spec, domain, |p| gu * p.dot(nu).max(0.0));
    let v = ScalarField::from_fn(spec, domain, |p| gv * p.dot(nu).max(0.0));
    FieldPair { u, v, params }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn params_validation() {
        assert!(Params::new(0.7, 0.3).is_ok());
        assert!(Params::new(0.7, 0.5).is_err());
        assert!(Params::new(1.0, 0.0).is_err());
        assert!(Params::new(0.3, 0.7).is_ok());
        assert!(Params::variational(0.3, 0.7).is_err());
    }

    #[test]
    fn plane_pair_gammas() {
        let p = Params::new(0.7, 0.3).unwrap();
        assert_abs_diff_eq!(p.gamma_u().powi(2) + p.gamma_v().powi(2), 1.0, epsilon = 1e-15);
        let spec = GridSpec::centered(1.0, 0.25).unwrap();
        let pair = reference_plane_pair(p, Vec2::E_Y, spec, Domain::Disk { radius: 1.0 });
        assert!(pair.is_ordered());
        let top = pair.u.at(4, 8);
        assert_abs_diff_eq!(top, 0.7f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(pair.v.at(4, 8), 0.3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn symmetric_plane_pair() {
        let p = Params::new(0.5, 0.5).unwrap();
        let spec = GridSpec::centered(1.0, 0.25).unwrap();
        let pair = reference_plane_pair(p, Vec2::E_Y, spec, Domain::Rectangle);
        assert_eq!(pair.u, pair.v);
    }

    #[test]
    fn vertical_boundary() {
        let p = Params::new(0.7, 0.3).unwrap();
        let spec = GridSpec::centered(1.0, 0.25).unwrap();
        let pair = reference_plane_pair(p, Vec2::E_X, spec, Domain::Rectangle);
        for (k, i, j) in pair.u.masked_nodes() {
            let x = spec.node(i, j).x;
            assert_eq!(pair.u.get(k) > 0.0, x > 0.0);
        }
    }
}
