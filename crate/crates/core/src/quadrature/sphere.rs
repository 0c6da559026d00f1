//! Product rules on unit spheres and on the unit disk in polar form.

use std::sync::Arc;

use super::rules::{circle_points, gauss_legendre};
use crate::numeric::{cached_table, Real};

const KIND_SPHERE: u8 = 10;
const KIND_DISK: u8 = 20;

/// Flat list of quadrature nodes with `dim` coordinates each.
#[derive(Debug, Clone)]
pub struct NodeSet<T> {
    dim: usize,
    table: Arc<Vec<Vec<T>>>,
}

impl<T: Real> NodeSet<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], &T)> {
        self.table[0].chunks(self.dim).zip(self.table[1].iter())
    }
}

fn size_key(a: usize, b: usize) -> usize {
    (a << 24) | b
}

/// Area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// Nodes on the unit sphere of `R^d` (d = 2, 3 or 5) whose weights integrate
/// the surface measure. `orders` is (polar size, azimuthal size).
pub fn sphere_nodes<T: Real>(d: usize, orders: (usize, usize)) -> NodeSet<T> {
    assert!(matches!(d, 2 | 3 | 5), "sphere rules exist for d = 2, 3, 5");
    let (mt, mp) = orders;
    let table = cached_table::<T>(KIND_SPHERE + d as u8, size_key(mt, mp), || match d {
        2 => build_circle(mp),
        3 => build_s2(mt, mp),
        _ => build_s4(mt, mp),
    });
    NodeSet { dim: d, table }
}

fn build_circle<T: Real>(mp: usize) -> Vec<Vec<T>> {
    let circle = circle_points::<T>(mp);
    let w = T::pi() * 2.0 / T::from_usize(mp);
    let mut coords = Vec::with_capacity(2 * mp);
    for j in 0..mp {
        coords.push(circle[0][j].clone());
        coords.push(circle[1][j].clone());
    }
    vec![coords, vec![w; mp]]
}

fn build_s2<T: Real>(mt: usize, mp: usize) -> Vec<Vec<T>> {
    let gl = gauss_legendre::<T>(mt);
    let circle = circle_points::<T>(mp);
    let dphi = T::pi() * 2.0 / T::from_usize(mp);
    let mut coords = Vec::with_capacity(3 * mt * mp);
    let mut weights = Vec::with_capacity(mt * mp);
    for (u, wu) in gl.nodes().iter().zip(gl.weights()) {
        let s = (T::one() - u.clone() * u).sqrt();
        for j in 0..mp {
            coords.push(s.clone() * &circle[0][j]);
            coords.push(s.clone() * &circle[1][j]);
            coords.push(u.clone());
            weights.push(wu.clone() * &dphi);
        }
    }
    vec![coords, weights]
}

fn build_s4<T: Real>(mt: usize, mp: usize) -> Vec<Vec<T>> {
    // Hyperspherical angles with measure sin^3 t1 sin^2 t2 sin t3 dt1 dt2 dt3 dphi.
    // t1 and t3 are integrated in their cosines with Gauss-Legendre; for t2 the
    // weight sin^2 becomes sqrt(1 - u^2) du, which Gauss-Chebyshev of the
    // second kind integrates exactly.
    let gl = gauss_legendre::<T>(mt);
    let circle = circle_points::<T>(mp);
    let dphi = T::pi() * 2.0 / T::from_usize(mp);
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let step = T::pi() / T::from_usize(mt + 1);
    let theta2: Vec<(T, T, T)> = (1..=mt)
        .map(|k| {
            let (s, c) = (step.clone() * T::from_usize(k)).sin_cos();
            (c, s.clone(), step.clone() * s.clone() * s)
        })
        .collect();
    for (u1, w1) in gl.nodes().iter().zip(gl.weights()) {
        let s1sq = T::one() - u1.clone() * u1;
        let s1 = s1sq.clone().sqrt();
        let w1 = w1.clone() * &s1sq;
        for (c2, s2, w2) in &theta2 {
            for (u3, w3) in gl.nodes().iter().zip(gl.weights()) {
                let s3 = (T::one() - u3.clone() * u3).sqrt();
                let a = s1.clone() * s2;
                let b = a.clone() * &s3;
                let w = w1.clone() * w2 * w3 * &dphi;
                for j in 0..mp {
                    coords.push(u1.clone());
                    coords.push(s1.clone() * c2);
                    coords.push(a.clone() * u3);
                    coords.push(b.clone() * &circle[0][j]);
                    coords.push(b.clone() * &circle[1][j]);
                    weights.push(w.clone());
                }
            }
        }
    }
    vec![coords, weights]
}

/// Nodes `(sin theta, cos phi, sin phi)` for theta in [0, pi/2] and phi in
/// [0, 2 pi) with weights for `d theta d phi`.
pub fn disk_nodes<T: Real>(mt: usize, mp: usize) -> NodeSet<T> {
    let table = cached_table::<T>(KIND_DISK, size_key(mt, mp), || {
        let gl = gauss_legendre::<T>(mt);
        let circle = circle_points::<T>(mp);
        let quarter = T::pi() / 4.0;
        let dphi = T::pi() * 2.0 / T::from_usize(mp);
        let mut coords = Vec::with_capacity(3 * mt * mp);
        let mut weights = Vec::with_capacity(mt * mp);
        for (x, w) in gl.nodes().iter().zip(gl.weights()) {
            let s = (quarter.clone() * (x.clone() + T::one())).sin();
            let w = w.clone() * &quarter * &dphi;
            for j in 0..mp {
                coords.push(s.clone());
                coords.push(circle[0][j].clone());
                coords.push(circle[1][j].clone());
                weights.push(w.clone());
            }
        }
        vec![coords, weights]
    });
    NodeSet { dim: 3, table }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn integrate(d: usize, orders: (usize, usize), f: impl Fn(&[f64]) -> f64) -> f64 {
        sphere_nodes::<f64>(d, orders).iter().map(|(x, w)| f(x) * w).sum()
    }

    #[test]
    fn areas() {
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
        for d in [2, 3, 5] {
            let a = integrate(d, (8, 8), |_| 1.0);
            assert!((a - sphere_area(d)).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn nodes_lie_on_sphere() {
        for d in [2, 3, 5] {
            for (x, _) in sphere_nodes::<f64>(d, (8, 10)).iter() {
                let r: f64 = x.iter().map(|v| v * v).sum();
                assert!((r - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn second_moments_are_isotropic() {
        for d in [3, 5] {
            for k in 0..d {
                let m = integrate(d, (10, 12), |x| x[k] * x[k]);
                assert!((m - sphere_area(d) / d as f64).abs() < 1e-12, "d={d} k={k}");
            }
        }
    }
}
