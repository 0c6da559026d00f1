//! Manufactured solutions with closed-form holomorphic extensions, and the
//! Cauchy data providers built from them (or from callbacks, or samples).

mod data;
mod spline;

pub use data::{
    add_noise, cauchy_data_from, CauchyData, GradientCallback, Representation, ScalarCallback,
    SourceCallback,
};
pub use spline::TensorSpline;

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numeric::{cexp, cpowi, csqrt, lift, lower, Real, C64};

/// Names accepted by [`library_solution`].
pub const CATALOG: &[&str] = &[
    "const1",
    "re_z1",
    "re_z2",
    "re_z3",
    "re_z4",
    "re_z5",
    "re_z6",
    "exp_cos",
    "saddle",
    "saddle3d",
    "saddle4d",
    "point_source",
    "poisson_poly",
];

#[derive(Debug, Clone, PartialEq)]
pub enum SolutionKind {
    /// `u = c`
    Constant(f64),
    /// `u = Re (x_1 + i x_2)^k`, n = 2
    ReZk(u32),
    /// `u = exp(k x_n) cos(k x_1)`
    ExpCos(f64),
    /// `u = x_1^2 - x_n^2`
    Saddle,
    /// `u = |x - p|^(2 - n)`, n >= 3
    PointSource(Vec<f64>),
    /// `u = x_1^2 x_2` with `Delta u = 2 x_2`, n = 2
    PoissonPoly,
}

/// A solution of `Delta u = f` known in closed form, together with its
/// continuation `u(x', z_n)` to complex `z_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedSolution {
    name: String,
    dim: usize,
    kind: SolutionKind,
}

/// Looks up a catalog solution by name.
pub fn library_solution(name: &str, dim: usize) -> Result<ManufacturedSolution> {
    let need = |want: usize| -> Result<()> {
        if dim == want {
            Ok(())
        } else {
            Err(Error::Dimension { expected: want, got: dim })
        }
    };
    if dim < 2 {
        return Err(Error::Dimension { expected: 2, got: dim });
    }
    let kind = match name {
        "const1" => SolutionKind::Constant(1.0),
        "exp_cos" => SolutionKind::ExpCos(1.0),
        "saddle" => SolutionKind::Saddle,
        "saddle3d" => {
            need(3)?;
            SolutionKind::Saddle
        }
        "saddle4d" => {
            need(4)?;
            SolutionKind::Saddle
        }
        "point_source" => {
            if dim < 3 {
                return Err(Error::Dimension { expected: 3, got: dim });
            }
            let mut p = vec![0.0; dim];
            p[dim - 1] = 3.0;
            SolutionKind::PointSource(p)
        }
        "poisson_poly" => {
            need(2)?;
            SolutionKind::PoissonPoly
        }
        _ => match name.strip_prefix("re_z").and_then(|k| k.parse::<u32>().ok()) {
            Some(k) if (1..=6).contains(&k) => {
                need(2)?;
                SolutionKind::ReZk(k)
            }
            _ => return Err(Error::Catalog(name.to_string())),
        },
    };
    Ok(ManufacturedSolution { name: name.to_string(), dim, kind })
}

impl ManufacturedSolution {
    pub fn constant(dim: usize, c: f64) -> Self {
        ManufacturedSolution { name: format!("const({c})"), dim, kind: SolutionKind::Constant(c) }
    }

    pub fn exp_cos(dim: usize, k: f64) -> Self {
        ManufacturedSolution { name: format!("exp_cos({k})"), dim, kind: SolutionKind::ExpCos(k) }
    }

    /// Point source at `p`; the caller keeps `p` away from the closed domain.
    pub fn point_source_at(p: Vec<f64>) -> Result<Self> {
        if p.len() < 3 {
            return Err(Error::Dimension { expected: 3, got: p.len() });
        }
        Ok(ManufacturedSolution {
            name: "point_source".into(),
            dim: p.len(),
            kind: SolutionKind::PointSource(p),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SolutionKind {
        &self.kind
    }

    pub fn has_source(&self) -> bool {
        matches!(self.kind, SolutionKind::PoissonPoly)
    }

    /// `u(x)`.
    pub fn u<T: Real>(&self, x: &[T]) -> T {
        let (xp, xn) = x.split_at(self.dim - 1);
        self.extension(xp, &Complex::new(xn[0].clone(), T::zero())).re
    }

    /// Gradient of `u` in all `n` variables.
    pub fn grad<T: Real>(&self, x: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut g = vec![T::zero(); n];
        match &self.kind {
            SolutionKind::Constant(_) => {}
            SolutionKind::ReZk(k) => {
                let z = Complex::new(x[0].clone(), x[1].clone());
                let w = cpowi(&z, *k as i32 - 1) * T::from_f64(*k as f64);
                g[0] = w.re.clone();
                g[1] = -w.im;
            }
            SolutionKind::ExpCos(k) => {
                let e = (x[n - 1].clone() * *k).exp();
                let (s, c) = (x[0].clone() * *k).sin_cos();
                g[0] = -(e.clone() * s * *k);
                g[n - 1] = e * c * *k;
            }
            SolutionKind::Saddle => {
                g[0] = x[0].clone() * 2.0;
                g[n - 1] = -(x[n - 1].clone() * 2.0);
            }
            SolutionKind::PointSource(p) => {
                let r2 = x.iter().zip(p).fold(T::zero(), |acc, (xi, pi)| {
                    let d = xi.clone() - *pi;
                    acc + d.clone() * d
                });
                let scale = r2.sqrt().powi(-(n as i32)) * (2.0 - n as f64);
                for (gi, (xi, pi)) in g.iter_mut().zip(x.iter().zip(p)) {
                    *gi = scale.clone() * (xi.clone() - *pi);
                }
            }
            SolutionKind::PoissonPoly => {
                g[0] = x[0].clone() * &x[1] * 2.0;
                g[1] = x[0].clone() * &x[0];
            }
        }
        g
    }

    /// Holomorphic continuation `u(x', z_n)` in the last variable.
    pub fn extension<T: Real>(&self, xp: &[T], z: &Complex<T>) -> Complex<T> {
        match &self.kind {
            SolutionKind::Constant(c) => Complex::new(T::from_f64(*c), T::zero()),
            SolutionKind::ReZk(k) => {
                // (x_1 + i z)^k and (x_1 - i z)^k averaged: real for real z.
                let iz = Complex::new(-z.im.clone(), z.re.clone());
                let x1 = Complex::new(xp[0].clone(), T::zero());
                let a = cpowi(&(x1.clone() + iz.clone()), *k as i32);
                let b = cpowi(&(x1 - iz), *k as i32);
                (a + b) * T::from_f64(0.5)
            }
            SolutionKind::ExpCos(k) => {
                let c = (xp[0].clone() * *k).cos();
                cexp(&(z.clone() * T::from_f64(*k))) * c
            }
            SolutionKind::Saddle => {
                let x1 = xp[0].clone();
                Complex::new(x1.clone() * x1, T::zero()) - z.clone() * z.clone()
            }
            SolutionKind::PointSource(p) => {
                let n = self.dim;
                let r2 = xp.iter().zip(p).fold(T::zero(), |acc, (xi, pi)| {
                    let d = xi.clone() - *pi;
                    acc + d.clone() * d
                });
                let dz = z.clone() - Complex::new(T::from_f64(p[n - 1]), T::zero());
                let q = dz.clone() * dz + Complex::new(r2, T::zero());
                if n % 2 == 0 {
                    cpowi(&q, -((n as i32 - 2) / 2))
                } else {
                    cpowi(&q, -((n as i32 - 3) / 2)) / csqrt(&q)
                }
            }
            SolutionKind::PoissonPoly => z.clone() * (xp[0].clone() * &xp[0]),
        }
    }

    /// Right-hand side `f(x', z_n)` of `Delta u = f`, continued in `z_n`.
    pub fn source<T: Real>(&self, _xp: &[T], z: &Complex<T>) -> Complex<T> {
        match &self.kind {
            SolutionKind::PoissonPoly => z.clone() * T::from_f64(2.0),
            _ => Complex::zero(),
        }
    }

    /// `u(x)` in double precision.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.u::<f64>(x)
    }

    /// Extension in double precision.
    pub fn extend(&self, xp: &[f64], z: C64) -> C64 {
        self.extension::<f64>(xp, &z)
    }

    /// Extension evaluated at working precision `T` from double inputs.
    pub fn extend_as<T: Real>(&self, xp: &[f64], z: C64) -> C64 {
        let xp: Vec<T> = xp.iter().map(|v| T::from_f64(*v)).collect();
        lower(&self.extension::<T>(&xp, &lift(z)))
    }
}

/// Converts a normal derivative on `S` into `u'_{x_n}`:
/// `u'_{x_n} = sqrt(|grad t|^2 + 1) du/dnu + <grad t, grad' u0>`, where
/// `grad' u0` is the gradient of `u0(x', x_n)` in `x'` at fixed `x_n = t(x')`.
pub fn neumann_to_xn(
    u1_normal: impl Fn(&[f64]) -> f64,
    grad_u0: impl Fn(&[f64]) -> Vec<f64>,
    grad_t: impl Fn(&[f64]) -> Vec<f64>,
) -> impl Fn(&[f64]) -> f64 {
    move |xp| {
        let gt = grad_t(xp);
        let gu = grad_u0(xp);
        let norm = (gt.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt();
        norm * u1_normal(xp) + gt.iter().zip(&gu).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Inverse of [`neumann_to_xn`].
pub fn xn_to_neumann(
    u1: impl Fn(&[f64]) -> f64,
    grad_u0: impl Fn(&[f64]) -> Vec<f64>,
    grad_t: impl Fn(&[f64]) -> Vec<f64>,
) -> impl Fn(&[f64]) -> f64 {
    move |xp| {
        let gt = grad_t(xp);
        let gu = grad_u0(xp);
        let norm = (gt.iter().map(|v| v * v).sum::<f64>() + 1.0).sqrt();
        (u1(xp) - gt.iter().zip(&gu).map(|(a, b)| a * b).sum::<f64>()) / norm
    }
}
