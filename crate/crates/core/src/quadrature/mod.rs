//! Fixed-order integration rules: Gauss-Legendre and Clenshaw-Curtis on
//! segments, product rules on spheres, and the two weakly singular integrals
//! that show up in the wave-equation traces.

mod rules;
mod sphere;

pub use rules::{circle_points, clenshaw_cumulative, clenshaw_curtis, gauss_legendre, smooth_size, Rule};
pub use sphere::{disk_nodes, sphere_area, sphere_nodes, NodeSet};

use crate::error::{Error, Result};
use crate::numeric::C64;

/// Quadrature orders used by traces and combined formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    /// Gauss-Legendre order for one-dimensional integrals.
    pub nodes_1d: usize,
    /// (polar, azimuthal) sizes of the product rules on spheres and disks.
    pub sphere_rule: (usize, usize),
    /// Use the cosh substitution in [`singular_sqrt`].
    pub singular_substitution: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_1d: 32,
            sphere_rule: (24, 48),
            singular_substitution: true,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_1d < 8 {
            return Err(Error::InvalidArgument(format!(
                "nodes_1d must be at least 8, got {}",
                self.nodes_1d
            )));
        }
        let (a, b) = self.sphere_rule;
        if a < 8 || b < 8 {
            return Err(Error::InvalidArgument(format!(
                "sphere rule sizes must be at least 8, got ({a}, {b})"
            )));
        }
        Ok(())
    }
}

fn check_finite(v: C64, at: f64) -> Result<C64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { location: at })
    }
}

/// `m`-point Gauss-Legendre approximation of the integral of `f` over [a, b].
pub fn gauss_segment(f: impl Fn(f64) -> C64, a: f64, b: f64, m: usize) -> Result<C64> {
    if !(a <= b) {
        return Err(Error::InvalidArgument(format!("need a <= b, got [{a}, {b}]")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    let rule = gauss_legendre::<f64>(m);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut acc = C64::new(0.0, 0.0);
    for (x, w) in rule.nodes().iter().zip(rule.weights()) {
        let y = mid + half * x;
        acc += check_finite(f(y), y)? * (w * half);
    }
    Ok(acc)
}

/// Integral of `g(y) / sqrt(y^2 - r^2)` over [r, eps].
///
/// With `r > 0` the substitution `y = r cosh(tau)` removes the endpoint
/// singularity. At `r = 0` the weight becomes `1/y` and the integral of
/// `g(y)/y` is taken with plain Gauss nodes, which is only meaningful when
/// `g` vanishes at the origin.
pub fn singular_sqrt(g: impl Fn(f64) -> f64, r: f64, eps: f64, m: usize) -> Result<f64> {
    singular_sqrt_with(g, r, eps, m, true)
}

pub(crate) fn singular_sqrt_with(
    g: impl Fn(f64) -> f64,
    r: f64,
    eps: f64,
    m: usize,
    substitute: bool,
) -> Result<f64> {
    if !(r >= 0.0) || !(r < eps) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= r < eps, got r={r}, eps={eps}"
        )));
    }
    let lift = |f: f64| C64::new(f, 0.0);
    if r == 0.0 {
        return Ok(gauss_segment(|y| lift(g(y) / y), 0.0, eps, m)?.re);
    }
    if !substitute {
        return Ok(gauss_segment(|y| lift(g(y) / (y * y - r * r).sqrt()), r, eps, m)?.re);
    }
    let top = (eps / r).acosh();
    Ok(gauss_segment(|tau| lift(g(r * tau.cosh())), 0.0, top, m)?.re)
}

/// Raw surface integral of `f` over the sphere of the given radius around
/// `center`, for centers in two (circle) or three dimensions.
pub fn sphere_mean(
    f: impl Fn(&[f64]) -> f64,
    center: &[f64],
    radius: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let d = center.len();
    if d != 2 && d != 3 {
        return Err(Error::Unsupported(format!(
            "sphere integrals are provided for dimension 2 or 3, got {d}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let nodes = sphere_nodes::<f64>(d, spec.sphere_rule);
    let mut p = vec![0.0; d];
    let mut acc = 0.0;
    for (omega, w) in nodes.iter() {
        for k in 0..d {
            p[k] = center[k] + radius * omega[k];
        }
        let v = f(&p);
        if !v.is_finite() {
            return Err(Error::NonFinite { location: p[0] });
        }
        acc += v * w;
    }
    Ok(acc * radius.powi(d as i32 - 1))
}

/// Integral of `f(x) / sqrt(R^2 - |x - c|^2)` over the disk `|x - c| < R`.
///
/// Polar coordinates with `rho = R sin(theta)` turn the rim singularity into
/// the smooth weight `R sin(theta)`; `m` Gauss nodes in theta, the azimuthal
/// size comes from `spec`.
pub fn disk_singular(
    f: impl Fn(&[f64]) -> f64,
    center: &[f64],
    radius: f64,
    m: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if center.len() != 2 {
        return Err(Error::Dimension { expected: 2, got: center.len() });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let nodes = disk_nodes::<f64>(m, spec.sphere_rule.1);
    let mut acc = 0.0;
    for (node, w) in nodes.iter() {
        let (s, ox, oy) = (node[0], node[1], node[2]);
        let p = [center[0] + radius * s * ox, center[1] + radius * s * oy];
        let v = f(&p);
        if !v.is_finite() {
            return Err(Error::NonFinite { location: p[0] });
        }
        acc += v * s * w;
    }
    Ok(acc * radius)
}
