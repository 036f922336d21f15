//! Lattices, masked scalar fields and finite-difference calculus.
//!
//! Node `(i, j)` sits at `origin + (i * h, j * h)`; storage is row-major with
//! `i` running fastest. Nodes outside the computational domain are unmasked
//! and carry `NaN`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };
    pub const E_X: Vec2 = Vec2 { x: 1.0, y: 0.0 };
    pub const E_Y: Vec2 = Vec2 { x: 0.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counter-clockwise rotation by a right angle.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Rectangular lattice: `nx * ny` nodes with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Vec2,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, h: f64, origin: Vec2) -> Result<Self> {
        let spec = GridSpec { nx, ny, h, origin };
        spec.validate()?;
        Ok(spec)
    }

    /// Square lattice covering `[-half, half]^2` with a node on both axes.
    pub fn centered(half_width: f64, h: f64) -> Result<Self> {
        let cells = (2.0 * half_width / h).round() as usize;
        let n = cells + 1;
        let half = cells as f64 * h / 2.0;
        GridSpec::new(n, n, h, Vec2::new(-half, -half))
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3x3 nodes, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {}", self.h)));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + i as f64 * self.h,
            self.origin.y + j as f64 * self.h,
        )
    }

    /// Fractional lattice coordinates of a physical point.
    #[inline]
    pub fn to_lattice(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.origin.x) / self.h, (p.y - self.origin.y) / self.h)
    }
}

/// Computational domain selecting the masked nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// Disk of the given radius about the physical origin.
    Disk { radius: f64 },
    /// Upper half of the disk, `y >= 0`; the thin set is the row `y = 0`.
    HalfDisk { radius: f64 },
    /// Every node of the lattice.
    Rectangle,
}

impl Domain {
    pub fn contains(&self, p: Vec2, h: f64) -> bool {
        let slack = 1e-9 * h;
        match *self {
            Domain::Disk { radius } => p.norm() <= radius + slack,
            Domain::HalfDisk { radius } => p.norm() <= radius + slack && p.y >= -slack,
            Domain::Rectangle => true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::Disk { .. } => "disk",
            Domain::HalfDisk { .. } => "halfdisk",
            Domain::Rectangle => "rect",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            Domain::Disk { radius } | Domain::HalfDisk { radius } => radius,
            Domain::Rectangle => 0.0,
        }
    }

    pub fn parse(kind: &str, param: f64) -> Result<Self> {
        match kind {
            "disk" => Ok(Domain::Disk { radius: param }),
            "halfdisk" => Ok(Domain::HalfDisk { radius: param }),
            "rect" | "rectangle" => Ok(Domain::Rectangle),
            other => Err(Error::Parse(format!("unknown domain kind `{other}`"))),
        }
    }
}

/// Grid-sampled real function with a node mask.
#[derive(Debug, Clone)]
pub struct ScalarField {
    spec: GridSpec,
    domain: Domain,
    values: Vec<f64>,
    mask: Vec<bool>,
}

/// Equality ignores the sentinel stored at unmasked nodes.
impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.domain == other.domain
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &m)| !m || a == b)
    }
}

impl ScalarField {
    /// Samples `f` at every node inside `domain`.
    pub fn from_fn(spec: GridSpec, domain: Domain, f: impl Fn(Vec2) -> f64) -> Self {
        let mut values = vec![f64::NAN; spec.len()];
        let mut mask = vec![false; spec.len()];
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let p = spec.node(i, j);
                if domain.contains(p, spec.h) {
                    let k = spec.idx(i, j);
                    mask[k] = true;
                    values[k] = f(p);
                }
            }
        }
        ScalarField { spec, domain, values, mask }
    }

    pub fn zeros(spec: GridSpec, domain: Domain) -> Self {
        ScalarField::from_fn(spec, domain, |_| 0.0)
    }

    /// Builds a field from raw parts; `NaN` entries become unmasked.
    pub fn from_values(spec: GridSpec, domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        let mask = values.iter().map(|v| !v.is_nan()).collect();
        Ok(ScalarField { spec, domain, values, mask })
    }

    /// Same grid and mask, new values from a per-node closure.
    pub fn map_nodes(&self, f: impl Fn(usize, Vec2, f64) -> f64) -> Self {
        let mut out = self.clone();
        for j in 0..self.spec.ny {
            for i in 0..self.spec.nx {
                let k = self.spec.idx(i, j);
                if self.mask[k] {
                    out.values[k] = f(k, self.spec.node(i, j), self.values[k]);
                }
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.map_nodes(|_, _, v| f(v))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.idx(i, j)]
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Writes a masked node. Unmasked nodes are left untouched.
    #[inline]
    pub fn set(&mut self, k: usize, v: f64) {
        debug_assert!(self.mask[k], "write to unmasked node {k}");
        debug_assert!(v.is_finite(), "non-finite value at node {k}");
        if self.mask[k] {
            self.values[k] = v;
        }
    }

    #[inline]
    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[self.spec.idx(i, j)]
    }

    fn masked_at(&self, i: isize, j: isize) -> bool {
        i >= 0
            && j >= 0
            && (i as usize) < self.spec.nx
            && (j as usize) < self.spec.ny
            && self.mask[self.spec.idx(i as usize, j as usize)]
    }

    /// Masked node with all four lattice neighbours masked.
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        let (i, j) = (i as isize, j as isize);
        self.masked_at(i, j)
            && self.masked_at(i - 1, j)
            && self.masked_at(i + 1, j)
            && self.masked_at(i, j - 1)
            && self.masked_at(i, j + 1)
    }

    /// Masked node with at least one unmasked (or missing) neighbour.
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        self.is_masked(i, j) && !self.is_interior(i, j)
    }

    pub fn same_layout(&self, other: &ScalarField) -> bool {
        self.spec == other.spec && self.mask == other.mask
    }

    /// Iterator over `(flat index, i, j)` of masked nodes.
    pub fn masked_nodes(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let nx = self.spec.nx;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| (k, k % nx, k / nx))
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        self.masked_nodes()
            .filter(|&(_, i, j)| self.is_interior(i, j))
            .map(|(k, _, _)| k)
            .collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.masked_nodes()
            .filter(|&(_, i, j)| !self.is_interior(i, j))
            .map(|(k, _, _)| k)
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.masked_nodes().map(|(k, _, _)| self.values[k].abs()).fold(0.0, f64::max)
    }

    /// Largest nodewise difference over nodes masked in both fields.
    pub fn sup_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.mask.iter().zip(&other.mask))
            .filter(|(_, (a, b))| **a && **b)
            .map(|((x, y), _)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear interpolation; `None` unless all four cell corners are masked.
    pub fn sample(&self, p: Vec2) -> Option<f64> {
        let (fx, fy) = self.spec.to_lattice(p);
        let eps = 1e-9;
        if fx < -eps || fy < -eps {
            return None;
        }
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut i0 = fx.floor() as usize;
        let mut j0 = fy.floor() as usize;
        if i0 + 1 >= nx {
            if fx <= (nx - 1) as f64 + eps {
                i0 = nx - 2;
            } else {
                return None;
            }
        }
        if j0 + 1 >= ny {
            if fy <= (ny - 1) as f64 + eps {
                j0 = ny - 2;
            } else {
                return None;
            }
        }
        let tx = (fx - i0 as f64).clamp(0.0, 1.0);
        let ty = (fy - j0 as f64).clamp(0.0, 1.0);
        let s = &self.spec;
        let k00 = s.idx(i0, j0);
        let k10 = s.idx(i0 + 1, j0);
        let k01 = s.idx(i0, j0 + 1);
        let k11 = s.idx(i0 + 1, j0 + 1);
        // Weights that vanish let a corner sit outside the mask.
        let corners = [
            (k00, (1.0 - tx) * (1.0 - ty)),
            (k10, tx * (1.0 - ty)),
            (k01, (1.0 - tx) * ty),
            (k11, tx * ty),
        ];
        let mut acc = 0.0;
        for (k, w) in corners {
            if w > 1e-12 {
                if !self.mask[k] {
                    return None;
                }
                acc += w * self.values[k];
            }
        }
        Some(acc)
    }
}

/// Nodal gradient samples; `NaN` where no stencil is available.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub spec: GridSpec,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl VectorField {
    pub fn at(&self, k: usize) -> Vec2 {
        Vec2::new(self.gx[k], self.gy[k])
    }
}

fn ensure_interior(f: &ScalarField) -> Result<()> {
    let any = f.masked_nodes().any(|(_, i, j)| f.is_interior(i, j));
    if any {
        Ok(())
    } else {
        Err(Error::NoInteriorNodes)
    }
}

/// One partial derivative at `(i, j)` along the lattice axis `(di, dj)`.
fn axis_derivative(f: &ScalarField, i: usize, j: usize, di: isize, dj: isize) -> f64 {
    let (ii, jj) = (i as isize, j as isize);
    let h = f.spec.h;
    let val = |a: isize, b: isize| f.at(a as usize, b as usize);
    let fwd = f.masked_at(ii + di, jj + dj);
    let bwd = f.masked_at(ii - di, jj - dj);
    if fwd && bwd {
        (val(ii + di, jj + dj) - val(ii - di, jj - dj)) / (2.0 * h)
    } else if fwd && f.masked_at(ii + 2 * di, jj + 2 * dj) {
        (-3.0 * val(ii, jj) + 4.0 * val(ii + di, jj + dj) - val(ii + 2 * di, jj + 2 * dj))
            / (2.0 * h)
    } else if bwd && f.masked_at(ii - 2 * di, jj - 2 * dj) {
        (3.0 * val(ii, jj) - 4.0 * val(ii - di, jj - dj) + val(ii - 2 * di, jj - 2 * dj))
            / (2.0 * h)
    } else {
        f64::NAN
    }
}

/// Central differences, falling back to second-order one-sided differences
/// next to unmasked nodes.
pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    ensure_interior(f)?;
    let spec = f.spec;
    let mut gx = vec![f64::NAN; spec.len()];
    let mut gy = vec![f64::NAN; spec.len()];
    for (k, i, j) in f.masked_nodes() {
        gx[k] = axis_derivative(f, i, j, 1, 0);
        gy[k] = axis_derivative(f, i, j, 0, 1);
    }
    Ok(VectorField { spec, gx, gy })
}

/// Five-point Laplacian at interior nodes; `NaN` elsewhere.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    ensure_interior(f)?;
    let spec = f.spec;
    let h2 = spec.h * spec.h;
    let mut out = f.clone();
    out.values.iter_mut().for_each(|v| *v = f64::NAN);
    for (k, i, j) in f.masked_nodes() {
        if f.is_interior(i, j) {
            let s = f.at(i + 1, j) + f.at(i - 1, j) + f.at(i, j + 1) + f.at(i, j - 1);
            out.values[k] = (s - 4.0 * f.values[k]) / h2;
        }
    }
    Ok(out)
}

/// Whether the closed ball `B_r(center)` lies inside the domain of `f`.
pub fn ball_inside(f: &ScalarField, center: Vec2, r: f64) -> bool {
    let slack = 1e-9;
    match f.domain {
        Domain::Disk { radius } => center.norm() + r <= radius + slack,
        Domain::HalfDisk { radius } => {
            center.norm() + r <= radius + slack && center.y - r >= -slack
        }
        Domain::Rectangle => {
            let s = &f.spec;
            let max = s.node(s.nx - 1, s.ny - 1);
            center.x - r >= s.origin.x - slack
                && center.y - r >= s.origin.y - slack
                && center.x + r <= max.x + slack
                && center.y + r <= max.y + slack
        }
    }
}

/// The 1-homogeneous rescaling `x -> f(center + r x) / r` sampled on `out_spec`.
///
/// Output nodes whose preimage cannot be interpolated are unmasked.
pub fn blowup_rescale(
    f: &ScalarField,
    center: Vec2,
    r: f64,
    out_spec: GridSpec,
) -> Result<ScalarField> {
    out_spec.validate()?;
    if !(r > 0.0) || !ball_inside(f, center, r) {
        return Err(Error::OutsideDomain(format!(
            "ball of radius {r} about ({}, {}) leaves the domain",
            center.x, center.y
        )));
    }
    let mut values = vec![f64::NAN; out_spec.len()];
    for j in 0..out_spec.ny {
        for i in 0..out_spec.nx {
            let x = out_spec.node(i, j);
            if let Some(v) = f.sample(center + x * r) {
                values[out_spec.idx(i, j)] = v / r;
            }
        }
    }
    let domain = match f.domain {
        Domain::Disk { radius } | Domain::HalfDisk { radius } if center == Vec2::ZERO => {
            Domain::Disk { radius: radius / r }
        }
        _ => Domain::Rectangle,
    };
    ScalarField::from_values(out_spec, domain, values)
}
