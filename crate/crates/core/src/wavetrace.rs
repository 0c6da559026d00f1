//! Traces `U(x', t(x'), y)` of the continuation of `u` in `x_n`, computed
//! from the Cauchy data by the representation formulas of the wave equation
//! `U_yy - Delta' U = -f(x', t + i y)`.
//!
//! All integrals are rescaled to fixed reference sets (`x'' = x' + y xi`),
//! so every formula is an analytic expression in `y` valid for both signs.
//! The `d/dy` in the Poisson and Kirchhoff formulas is taken under the
//! integral sign with the spatial gradient of `u0`; sampled data use
//! central differences with step `1e-4 eps` instead.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Mutex;

use num_complex::Complex;
use num_traits::Zero;

use crate::carleman::EdgeTrace;
use crate::error::{Error, Result};
use crate::geometry::{BaseShape, CylinderDomain};
use crate::numeric::{with_precision, Mp, Real, C64};
use crate::oracles::CauchyData;
use crate::quadrature::{disk_nodes, gauss_legendre, sphere_nodes, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceFormula {
    /// n = 2, with the Duhamel term for a source.
    Dalembert,
    /// n = 3
    Poisson,
    /// n = 4
    Kirchhoff,
    /// Closed-form extension of a catalog solution.
    Oracle,
}

impl TraceFormula {
    /// The representation formula for dimension `n`.
    pub fn for_dim(n: usize) -> Result<Self> {
        match n {
            2 => Ok(TraceFormula::Dalembert),
            3 => Ok(TraceFormula::Poisson),
            4 => Ok(TraceFormula::Kirchhoff),
            _ => Err(Error::Unsupported(format!("no trace formula for n = {n}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TraceFormula::Dalembert => "dalembert",
            TraceFormula::Poisson => "poisson",
            TraceFormula::Kirchhoff => "kirchhoff",
            TraceFormula::Oracle => "oracle",
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            TraceFormula::Dalembert => Some(2),
            TraceFormula::Poisson => Some(3),
            TraceFormula::Kirchhoff => Some(4),
            TraceFormula::Oracle => None,
        }
    }
}

impl fmt::Display for TraceFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraceFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dalembert" => Ok(TraceFormula::Dalembert),
            "poisson" => Ok(TraceFormula::Poisson),
            "kirchhoff" => Ok(TraceFormula::Kirchhoff),
            "oracle" => Ok(TraceFormula::Oracle),
            _ => Err(Error::InvalidArgument(format!("unknown trace formula {s:?}"))),
        }
    }
}

/// Quadrature orders for one trace evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Orders {
    line: usize,
    sphere: (usize, usize),
}

impl Orders {
    fn from_spec(q: &QuadratureSpec) -> Self {
        Orders { line: q.nodes_1d, sphere: q.sphere_rule }
    }

    fn doubled(self) -> Self {
        Orders { line: 2 * self.line, sphere: (2 * self.sphere.0, 2 * self.sphere.1) }
    }
}

fn check_reach(base: &BaseShape, xp: &[f64], y: f64) -> Result<()> {
    if xp.len() != base.dim() {
        return Err(Error::Dimension { expected: base.dim(), got: xp.len() });
    }
    let d = base.signed_distance(xp);
    if y.abs() <= d * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(Error::Domain(format!("|y| = {} reaches outside the base (distance {d})", y.abs())))
    }
}

fn finite<T: Real>(v: Complex<T>, y: &T) -> Result<Complex<T>> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { location: y.to_f64() })
    }
}

/// `-(y^2/2) int_0^1 s ds int_{-1}^{1} f(x1 + y s xi, t + i y (1 - s)) dxi`
fn duhamel_line<T: Real>(x1: &T, y: &T, t: &T, m: usize, f: impl Fn(&T, &Complex<T>) -> Complex<T>) -> Complex<T> {
    let gl = gauss_legendre::<T>(m);
    let half = T::from_f64(0.5);
    let mut acc = Complex::<T>::zero();
    for (sn, sw) in gl.nodes().iter().zip(gl.weights()) {
        let s = (sn.clone() + T::one()) * &half;
        let ws = sw.clone() * &half * &s;
        let z = Complex::new(t.clone(), y.clone() * (T::one() - s.clone()));
        let ys = y.clone() * &s;
        let mut inner = Complex::<T>::zero();
        for (xn, xw) in gl.nodes().iter().zip(gl.weights()) {
            inner = inner + f(&(x1.clone() + ys.clone() * xn), &z) * xw.clone();
        }
        acc = acc + inner * ws;
    }
    acc * -(y.clone() * y * &half)
}

fn dalembert<T: Real>(data: &CauchyData, x1: &T, y: &T, t: &T, o: Orders) -> Complex<T> {
    if y.is_zero() {
        return Complex::new(data.u0(std::slice::from_ref(x1), t), T::zero());
    }
    let half = T::from_f64(0.5);
    let a = (data.u0(&[x1.clone() + y], t) + data.u0(&[x1.clone() - y], t)) * &half;
    let gl = gauss_legendre::<T>(o.line);
    let mut int_u1 = T::zero();
    for (xn, xw) in gl.nodes().iter().zip(gl.weights()) {
        int_u1 = int_u1 + data.u1(&[x1.clone() + y.clone() * xn], t) * xw;
    }
    let mut u = Complex::new(a, int_u1 * y * &half);
    if data.has_source() {
        u = u + duhamel_line(x1, y, t, o.line, |x, z| {
            data.source(std::slice::from_ref(x), z).expect("source present")
        });
    }
    u
}

/// Directional derivative `omega . grad' u0` at `p`.
struct Gradient<'a> {
    data: &'a CauchyData,
    /// Step for the difference fallback, and the box it may not leave.
    step: f64,
    bounds: (Vec<f64>, Vec<f64>),
}

impl Gradient<'_> {
    fn directional<T: Real>(&self, p: &[T], omega: &[T], t: &T) -> T {
        if let Some(g) = self.data.grad_u0(p, t) {
            return g.iter().zip(omega).fold(T::zero(), |acc, (a, b)| acc + a.clone() * b);
        }
        let h = T::from_f64(self.step);
        let shift = |s: f64| -> Vec<T> {
            p.iter().zip(omega).map(|(x, w)| x.clone() + h.clone() * w * s).collect()
        };
        let inside = |q: &[T]| {
            q.iter()
                .zip(self.bounds.0.iter().zip(&self.bounds.1))
                .all(|(x, (lo, hi))| *lo <= x.to_f64() && x.to_f64() <= *hi)
        };
        let (fwd, bwd) = (shift(1.0), shift(-1.0));
        let u = |q: &[T]| self.data.u0(q, t);
        if inside(&fwd) && inside(&bwd) {
            (u(&fwd) - u(&bwd)) / (h * 2.0)
        } else if inside(&bwd) {
            (u(p) * 3.0 - u(&bwd) * 4.0 + u(&shift(-2.0))) / (h * 2.0)
        } else {
            -(u(p) * 3.0 - u(&fwd) * 4.0 + u(&shift(2.0))) / (h * 2.0)
        }
    }
}

fn poisson<T: Real>(data: &CauchyData, grad: &Gradient<'_>, xp: &[T], y: &T, t: &T, o: Orders) -> Complex<T> {
    if y.is_zero() {
        return Complex::new(data.u0(xp, t), T::zero());
    }
    // Disk of radius |y| in coordinates x'' = x' + y sin(theta) omega.
    let disk = disk_nodes::<T>(o.sphere.0, o.sphere.1);
    let (mut a, mut b, mut c) = (T::zero(), T::zero(), T::zero());
    let mut p = vec![T::zero(); 2];
    for (node, w) in disk.iter() {
        let (s, omega) = (&node[0], &node[1..3]);
        let r = y.clone() * s;
        p[0] = xp[0].clone() + r.clone() * &omega[0];
        p[1] = xp[1].clone() + r * &omega[1];
        let ws = w.clone() * s;
        a = a + data.u0(&p, t) * &ws;
        b = b + grad.directional(&p, omega, t) * &ws * s;
        c = c + data.u1(&p, t) * &ws;
    }
    let two_pi = T::pi() * 2.0;
    let mut u = Complex::new((a + y.clone() * b) / &two_pi, c * y / &two_pi);
    if data.has_source() {
        let gl = gauss_legendre::<T>(o.line);
        let half = T::from_f64(0.5);
        let mut acc = Complex::<T>::zero();
        for (sn, sw) in gl.nodes().iter().zip(gl.weights()) {
            let s = (sn.clone() + T::one()) * &half;
            let z = Complex::new(t.clone(), y.clone() * (T::one() - s.clone()));
            let ys = y.clone() * &s;
            let mut inner = Complex::<T>::zero();
            for (node, w) in disk.iter() {
                let r = ys.clone() * &node[0];
                p[0] = xp[0].clone() + r.clone() * &node[1];
                p[1] = xp[1].clone() + r * &node[2];
                inner = inner + data.source(&p, &z).expect("source present") * (w.clone() * &node[0]);
            }
            acc = acc + inner * (sw.clone() * &half * &s);
        }
        u = u - acc * (y.clone() * y / &two_pi);
    }
    u
}

fn kirchhoff<T: Real>(data: &CauchyData, grad: &Gradient<'_>, xp: &[T], y: &T, t: &T, o: Orders) -> Complex<T> {
    if y.is_zero() {
        return Complex::new(data.u0(xp, t), T::zero());
    }
    let sphere = sphere_nodes::<T>(3, o.sphere);
    let (mut q, mut g, mut c) = (T::zero(), T::zero(), T::zero());
    let mut p = vec![T::zero(); 3];
    for (omega, w) in sphere.iter() {
        for k in 0..3 {
            p[k] = xp[k].clone() + y.clone() * &omega[k];
        }
        q = q + data.u0(&p, t) * w;
        g = g + grad.directional(&p, omega, t) * w;
        c = c + data.u1(&p, t) * w;
    }
    let four_pi = T::pi() * 4.0;
    let mut u = Complex::new((q + y.clone() * g) / &four_pi, c * y / &four_pi);
    if data.has_source() {
        let gl = gauss_legendre::<T>(o.line);
        let half = T::from_f64(0.5);
        let mut acc = Complex::<T>::zero();
        for (sn, sw) in gl.nodes().iter().zip(gl.weights()) {
            let s = (sn.clone() + T::one()) * &half;
            let z = Complex::new(t.clone(), y.clone() * (T::one() - s.clone()));
            let ys = y.clone() * &s;
            let mut inner = Complex::<T>::zero();
            for (omega, w) in sphere.iter() {
                for k in 0..3 {
                    p[k] = xp[k].clone() + ys.clone() * &omega[k];
                }
                inner = inner + data.source(&p, &z).expect("source present") * w.clone();
            }
            acc = acc + inner * (sw.clone() * &half * &s);
        }
        u = u - acc * (y.clone() * y / &four_pi);
    }
    u
}

/// Trace of one data set over one base point, evaluable at any precision.
pub struct WaveTrace<'a> {
    data: &'a CauchyData,
    xp: Vec<f64>,
    t: f64,
    epsilon: f64,
    formula: TraceFormula,
    quad: QuadratureSpec,
    bounds: (Vec<f64>, Vec<f64>),
    calibrated: Mutex<HashMap<u32, Orders>>,
}

impl fmt::Debug for WaveTrace<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveTrace")
            .field("xp", &self.xp)
            .field("t", &self.t)
            .field("epsilon", &self.epsilon)
            .field("formula", &self.formula)
            .finish()
    }
}

impl<'a> WaveTrace<'a> {
    pub fn new(
        domain: &CylinderDomain,
        data: &'a CauchyData,
        xp: &[f64],
        formula: TraceFormula,
        quad: QuadratureSpec,
    ) -> Result<Self> {
        quad.validate()?;
        if data.dim() != domain.dim() {
            return Err(Error::Dimension { expected: domain.dim(), got: data.dim() });
        }
        if let Some(n) = formula.dim() {
            if n != domain.dim() {
                return Err(Error::Dimension { expected: n, got: domain.dim() });
            }
        }
        if formula == TraceFormula::Oracle && data.solution().is_none() {
            return Err(Error::Unsupported("the oracle trace needs catalog data".into()));
        }
        if !data.is_analytic() && !domain.top().is_constant() {
            return Err(Error::Unsupported(
                "sampled data are only known on the surface; a curved top needs analytic data".into(),
            ));
        }
        let epsilon = domain.epsilon(xp)?;
        Ok(WaveTrace {
            data,
            xp: xp.to_vec(),
            t: domain.top().value(xp),
            epsilon,
            formula,
            quad,
            bounds: domain.base().bounding_box(),
            calibrated: Mutex::new(HashMap::new()),
        })
    }

    pub fn xp(&self) -> &[f64] {
        &self.xp
    }

    /// `t(x')`
    pub fn top(&self) -> f64 {
        self.t
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn formula(&self) -> TraceFormula {
        self.formula
    }

    /// Double-precision trace at `y`.
    pub fn value(&self, y: f64) -> Result<C64> {
        self.eval::<f64>(&y)
    }

    fn raw<T: Real>(&self, y: &T, o: Orders) -> Complex<T> {
        let xp: Vec<T> = self.xp.iter().map(|v| T::from_f64(*v)).collect();
        let t = T::from_f64(self.t);
        let grad = Gradient { data: self.data, step: 1e-4 * self.epsilon, bounds: self.bounds.clone() };
        match self.formula {
            TraceFormula::Dalembert => dalembert(self.data, &xp[0], y, &t, o),
            TraceFormula::Poisson => poisson(self.data, &grad, &xp, y, &t, o),
            TraceFormula::Kirchhoff => kirchhoff(self.data, &grad, &xp, y, &t, o),
            TraceFormula::Oracle => {
                let sol = self.data.solution().expect("checked at construction");
                sol.extension(&xp, &Complex::new(t, y.clone()))
            }
        }
    }

    /// Orders for precision `T`: the configured ones in double precision or
    /// for data only known to double precision, otherwise those calibrated
    /// for the nearest precision at or above `T`'s.
    fn orders<T: Real>(&self) -> Orders {
        let base = Orders::from_spec(&self.quad);
        let bits = T::bits();
        if !self.calibrates(bits) {
            return base;
        }
        let found = {
            let cache = self.calibrated.lock().expect("calibration cache poisoned");
            cache.iter().filter(|(b, _)| **b >= bits).min_by_key(|(b, _)| **b).map(|(_, o)| *o)
        };
        found.unwrap_or_else(|| self.calibrate::<T>())
    }

    fn calibrates(&self, bits: u32) -> bool {
        bits > 64 && self.data.solution().is_some() && self.formula != TraceFormula::Oracle
    }

    /// Smallest orders, found by doubling or halving the configured ones,
    /// at which two successive orders agree to the working precision at the
    /// end of the edge.
    fn calibrate<T: Real>(&self) -> Orders {
        let base = Orders::from_spec(&self.quad);
        let y = T::from_f64(self.epsilon);
        let tol = T::from_f64(2.0).powi(10 - T::bits() as i32);
        let agree = |a: &Complex<T>, b: &Complex<T>| {
            let scale = T::one() + crate::numeric::cabs(b);
            crate::numeric::cabs(&(a.clone() - b.clone())) <= tol.clone() * scale
        };
        let halved = |o: Orders| Orders { line: o.line / 2, sphere: (o.sphere.0 / 2, o.sphere.1 / 2) };
        let mut o = base;
        let mut cur = self.raw(&y, o);
        let mut next = self.raw(&y, o.doubled());
        let mut steps = 0;
        while !agree(&cur, &next) && steps < 6 {
            o = o.doubled();
            cur = next;
            next = self.raw(&y, o.doubled());
            steps += 1;
        }
        if steps == 0 {
            while o.line >= 4 && o.sphere.0 >= 8 && o.sphere.1 >= 8 {
                let lower = self.raw(&y, halved(o));
                if !agree(&lower, &cur) {
                    break;
                }
                o = halved(o);
                cur = lower;
            }
        }
        self.calibrated.lock().expect("calibration cache poisoned").insert(T::bits(), o);
        o
    }
}

impl EdgeTrace for WaveTrace<'_> {
    fn eval<T: Real>(&self, y: &T) -> Result<Complex<T>> {
        let yf = y.to_f64();
        if !(yf.abs() <= self.epsilon * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("|y| = {} exceeds eps = {}", yf.abs(), self.epsilon)));
        }
        let o = self.orders::<T>();
        finite(self.raw(y, o), y)
    }

    fn reflection_symmetric(&self) -> bool {
        self.data.is_reflection_symmetric()
    }

    fn prepare(&self, bits: u32) -> Result<()> {
        if self.calibrates(bits) {
            with_precision(bits, || self.orders::<Mp>());
        }
        Ok(())
    }
}

/// d'Alembert trace at `(x1, t_val + i y)`; `x1 +- y` must stay in `base`.
pub fn dalembert_trace(
    base: &BaseShape,
    x1: f64,
    y: f64,
    data: &CauchyData,
    t_val: f64,
    quad: &QuadratureSpec,
) -> Result<C64> {
    check_reach(base, &[x1], y)?;
    if data.dim() != 2 {
        return Err(Error::Dimension { expected: 2, got: data.dim() });
    }
    finite(dalembert(data, &x1, &y, &t_val, Orders::from_spec(quad)), &y)
}

/// Duhamel term `-(1/2) int_0^y int_{x1-y'}^{x1+y'} f(s, t + i (y - y')) ds dy'`
/// for a source given as `f(x1, z)`.
pub fn gf_term(x1: f64, y: f64, f: impl Fn(f64, C64) -> C64, t_val: f64, m: usize) -> Result<C64> {
    finite(duhamel_line(&x1, &y, &t_val, m, |x, z| f(*x, *z)), &y)
}

/// Poisson trace at `(x', t_val + i y)` for n = 3.
pub fn poisson_trace(
    base: &BaseShape,
    xp: &[f64],
    y: f64,
    data: &CauchyData,
    t_val: f64,
    quad: &QuadratureSpec,
) -> Result<C64> {
    check_reach(base, xp, y)?;
    if data.dim() != 3 {
        return Err(Error::Dimension { expected: 3, got: data.dim() });
    }
    let grad = Gradient { data, step: 1e-4 * base.signed_distance(xp), bounds: base.bounding_box() };
    finite(poisson(data, &grad, xp, &y, &t_val, Orders::from_spec(quad)), &y)
}

/// Kirchhoff trace at `(x', t_val + i y)` for n = 4.
pub fn kirchhoff_trace(
    base: &BaseShape,
    xp: &[f64],
    y: f64,
    data: &CauchyData,
    t_val: f64,
    quad: &QuadratureSpec,
) -> Result<C64> {
    check_reach(base, xp, y)?;
    if data.dim() != 4 {
        return Err(Error::Dimension { expected: 4, got: data.dim() });
    }
    let grad = Gradient { data, step: 1e-4 * base.signed_distance(xp), bounds: base.bounding_box() };
    finite(kirchhoff(data, &grad, xp, &y, &t_val, Orders::from_spec(quad)), &y)
}

/// Trace values on a symmetric grid over `[-eps, eps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTrace {
    pub xp: Vec<f64>,
    pub epsilon: f64,
    pub y_grid: Vec<f64>,
    pub values: Vec<C64>,
    pub provenance: TraceFormula,
}

impl ComplexTrace {
    /// Largest `|U(-y) - conj U(y)|` over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.values.len();
        (0..n).map(|i| (self.values[n - 1 - i] - self.values[i].conj()).norm()).fold(0.0, f64::max)
    }

    /// Writes `y,re,im` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "y,re,im")?;
        for (y, v) in self.y_grid.iter().zip(&self.values) {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", y, v.re, v.im)?;
        }
        Ok(())
    }
}

/// `grid_size` equispaced nodes from `-eps` to `eps`, exactly symmetric.
pub fn symmetric_grid(epsilon: f64, grid_size: usize) -> Vec<f64> {
    let m = (grid_size - 1) as f64;
    (0..grid_size).map(|k| epsilon * (2.0 * k as f64 - m) / m).collect()
}

pub fn trace_grid(
    xp: &[f64],
    domain: &CylinderDomain,
    data: &CauchyData,
    formula: TraceFormula,
    grid_size: usize,
    quad: &QuadratureSpec,
) -> Result<ComplexTrace> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!("trace grid needs at least 2 nodes, got {grid_size}")));
    }
    let trace = WaveTrace::new(domain, data, xp, formula, *quad)?;
    let y_grid = symmetric_grid(trace.epsilon(), grid_size);
    let values = y_grid.iter().map(|y| trace.value(*y)).collect::<Result<Vec<_>>>()?;
    Ok(ComplexTrace { xp: xp.to_vec(), epsilon: trace.epsilon(), y_grid, values, provenance: formula })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Profile;
    use crate::oracles::{library_solution, ManufacturedSolution};

    fn square() -> CylinderDomain {
        CylinderDomain::flat(BaseShape::Interval { a: 0.0, b: 1.0 }, 0.0, 1.0).unwrap()
    }

    fn disk3() -> CylinderDomain {
        CylinderDomain::flat(BaseShape::Ball { center: vec![0.0, 0.0], radius: 1.0 }, 0.0, 1.0).unwrap()
    }

    fn ball4() -> CylinderDomain {
        CylinderDomain::flat(BaseShape::Ball { center: vec![0.0; 3], radius: 1.0 }, 0.0, 1.0).unwrap()
    }

    fn max_oracle_error(domain: &CylinderDomain, sol: &ManufacturedSolution, xp: &[f64]) -> f64 {
        let data = CauchyData::analytic(sol.clone());
        let formula = TraceFormula::for_dim(domain.dim()).unwrap();
        let tr = trace_grid(xp, domain, &data, formula, 33, &QuadratureSpec::default()).unwrap();
        let t = domain.top().value(xp);
        tr.y_grid
            .iter()
            .zip(&tr.values)
            .map(|(y, v)| (v - sol.extend(xp, C64::new(t, *y))).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn dalembert_examples() {
        let q = QuadratureSpec::default();
        let base = BaseShape::Interval { a: 0.0, b: 1.0 };
        let sol = library_solution("re_z2", 2).unwrap();
        let data = CauchyData::analytic(sol.clone());
        assert_eq!(dalembert_trace(&base, 0.4, 0.0, &data, 1.0, &q).unwrap(), C64::new(sol.value(&[0.4, 1.0]), 0.0));
        let v = dalembert_trace(&base, 0.4, 0.3, &data, 1.0, &q).unwrap();
        let expected = C64::new(0.4 * 0.4, 0.0) - C64::new(1.0, 0.3).powi(2);
        assert!((v - expected).norm() < 1e-12);
        let lin = CauchyData::from_callbacks(2, |_, _| 0.0, |_, _| 1.0);
        let v = dalembert_trace(&base, 0.5, 0.2, &lin, 1.0, &q).unwrap();
        assert!((v - C64::new(0.0, 0.2)).norm() < 1e-14);
        assert!(matches!(dalembert_trace(&base, 0.2, 0.3, &data, 1.0, &q), Err(Error::Domain(_))));
    }

    #[test]
    fn gf_examples() {
        assert_eq!(gf_term(0.3, 0.2, |_, _| C64::new(0.0, 0.0), 1.0, 16).unwrap(), C64::new(0.0, 0.0));
        let v = gf_term(0.3, 0.2, |_, _| C64::new(3.0, 0.0), 1.0, 16).unwrap();
        assert!((v - C64::new(-1.5 * 0.04, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn source_trace_matches_extension() {
        let sol = library_solution("poisson_poly", 2).unwrap();
        assert!(max_oracle_error(&square(), &sol, &[0.5]) < 1e-12);
        assert!(max_oracle_error(&square(), &sol, &[0.3]) < 1e-12);
    }

    #[test]
    fn planar_traces_match_extensions() {
        for name in ["re_z1", "re_z2", "re_z3", "re_z4", "exp_cos", "saddle", "const1"] {
            let sol = library_solution(name, 2).unwrap();
            for x1 in [0.25, 0.5, 0.7] {
                let err = max_oracle_error(&square(), &sol, &[x1]);
                assert!(err < 1e-12, "{name} at {x1}: {err}");
            }
        }
    }

    #[test]
    fn poisson_examples() {
        let q = QuadratureSpec::default();
        let base = BaseShape::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let one = CauchyData::from_callbacks(3, |_, _| 1.0, |_, _| 0.0);
        let v = poisson_trace(&base, &[0.1, 0.2], 0.4, &one, 1.0, &q).unwrap();
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
        let lin = CauchyData::from_callbacks(3, |_, _| 0.0, |_, _| 1.0);
        let v = poisson_trace(&base, &[0.1, 0.2], -0.4, &lin, 1.0, &q).unwrap();
        assert!((v - C64::new(0.0, -0.4)).norm() < 1e-12);
        assert!(poisson_trace(&base, &[0.5, 0.5], 0.4, &one, 1.0, &q).is_err());
    }

    #[test]
    fn spatial_traces_match_extensions() {
        let cases = [
            (disk3(), library_solution("saddle3d", 3).unwrap(), vec![0.1, -0.2]),
            (disk3(), library_solution("point_source", 3).unwrap(), vec![0.2, 0.1]),
            (disk3(), ManufacturedSolution::exp_cos(3, 1.5), vec![0.0, 0.3]),
            (ball4(), library_solution("saddle4d", 4).unwrap(), vec![0.1, 0.0, -0.2]),
            (ball4(), library_solution("point_source", 4).unwrap(), vec![0.2, 0.1, 0.0]),
        ];
        for (domain, sol, xp) in cases {
            let err = max_oracle_error(&domain, &sol, &xp);
            assert!(err < 1e-6, "{} n={}: {err}", sol.name(), domain.dim());
        }
    }

    #[test]
    fn kirchhoff_examples() {
        let q = QuadratureSpec::default();
        let base = BaseShape::Ball { center: vec![0.0; 3], radius: 1.0 };
        let one = CauchyData::from_callbacks(4, |_, _| 1.0, |_, _| 0.0);
        let v = kirchhoff_trace(&base, &[0.0, 0.1, 0.2], 0.5, &one, 1.0, &q).unwrap();
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
        let lin = CauchyData::from_callbacks(4, |_, _| 0.0, |_, _| 1.0);
        let v = kirchhoff_trace(&base, &[0.0, 0.1, 0.2], 0.5, &lin, 1.0, &q).unwrap();
        assert!((v - C64::new(0.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn source_terms_in_three_and_four_dimensions() {
        // u = x_n^3 / 6 has Delta u = x_n and extension z^3 / 6.
        let cubic = |n: usize| {
            CauchyData::from_callbacks(n, |_, xn| xn.powi(3) / 6.0, |_, xn| xn * xn / 2.0)
                .with_gradient(move |_, _| vec![0.0; n - 1])
                .with_source(|_, z| z)
        };
        let q = QuadratureSpec::default();
        let z = C64::new(1.0, 0.3);
        let expected = z.powi(3) / 6.0;
        let d3 = cubic(3);
        let v = poisson_trace(&BaseShape::Ball { center: vec![0.0, 0.0], radius: 1.0 }, &[0.0, 0.0], 0.3, &d3, 1.0, &q)
            .unwrap();
        assert!((v - expected).norm() < 1e-12, "{v}");
        let d4 = cubic(4);
        let v = kirchhoff_trace(&BaseShape::Ball { center: vec![0.0; 3], radius: 1.0 }, &[0.0; 3], 0.3, &d4, 1.0, &q)
            .unwrap();
        assert!((v - expected).norm() < 1e-12, "{v}");
    }

    #[test]
    fn grid_shape_and_symmetry() {
        let data = CauchyData::analytic(library_solution("const1", 2).unwrap());
        let tr = trace_grid(&[0.5], &square(), &data, TraceFormula::Dalembert, 9, &QuadratureSpec::default()).unwrap();
        assert_eq!(tr.values.len(), 9);
        assert_eq!(tr.y_grid[0], -0.5);
        assert_eq!(tr.y_grid[8], 0.5);
        assert!(tr.values.iter().all(|v| (v - 1.0).norm() < 1e-14));
        let data = CauchyData::analytic(library_solution("re_z2", 2).unwrap());
        let tr = trace_grid(&[0.4], &square(), &data, TraceFormula::Dalembert, 33, &QuadratureSpec::default()).unwrap();
        assert!(tr.hermitian_defect() < 1e-10);
        let mut out = vec![];
        tr.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 34);
    }

    #[test]
    fn initial_conditions() {
        let h = 1e-5;
        let cases = [
            (square(), library_solution("exp_cos", 2).unwrap(), vec![0.4]),
            (disk3(), library_solution("point_source", 3).unwrap(), vec![0.1, 0.2]),
            (ball4(), library_solution("saddle4d", 4).unwrap(), vec![0.1, 0.0, 0.2]),
        ];
        for (domain, sol, xp) in cases {
            let data = CauchyData::analytic(sol.clone());
            let formula = TraceFormula::for_dim(domain.dim()).unwrap();
            let tr = WaveTrace::new(&domain, &data, &xp, formula, QuadratureSpec::default()).unwrap();
            let t = tr.top();
            assert_eq!(tr.value(0.0).unwrap(), C64::new(data.u0_at(&xp, t), 0.0));
            let d = (tr.value(h).unwrap() - tr.value(-h).unwrap()) / (2.0 * h);
            let u1 = data.u1_at(&xp, t);
            assert!((d - C64::new(0.0, u1)).norm() < 1e-6 * (1.0 + u1.abs()), "{}: {d}", sol.name());
        }
    }

    #[test]
    fn planar_wave_residual() {
        // U_yy = U_x1x1 away from sources, by second differences.
        let sol = library_solution("exp_cos", 2).unwrap();
        let data = CauchyData::analytic(sol);
        let domain = square();
        let h = 1e-3;
        let trace_at = |x1: f64, y: f64| {
            WaveTrace::new(&domain, &data, &[x1], TraceFormula::Dalembert, QuadratureSpec::default())
                .unwrap()
                .value(y)
                .unwrap()
        };
        for y in [-0.2, 0.05, 0.2] {
            let x1 = 0.5;
            let uyy = (trace_at(x1, y + h) - trace_at(x1, y) * 2.0 + trace_at(x1, y - h)) / (h * h);
            let uxx = (trace_at(x1 + h, y) - trace_at(x1, y) * 2.0 + trace_at(x1 - h, y)) / (h * h);
            let scale = trace_at(x1, y).norm().max(1.0);
            assert!((uyy - uxx).norm() < 1e-4 * scale, "y={y}: {uyy} vs {uxx}");
        }
    }

    #[test]
    fn sampled_data_need_flat_top() {
        let axes = vec![vec![0.0, 0.25, 0.5, 0.75, 1.0]];
        let data = CauchyData::from_samples(axes, vec![0.0; 5], vec![1.0; 5]).unwrap();
        let curved = CylinderDomain::new(
            2,
            BaseShape::Interval { a: 0.0, b: 1.0 },
            Profile::Constant(0.0),
            Profile::Affine { offset: 1.0, slope: vec![0.2] },
        )
        .unwrap();
        assert!(matches!(
            WaveTrace::new(&curved, &data, &[0.5], TraceFormula::Dalembert, QuadratureSpec::default()),
            Err(Error::Unsupported(_))
        ));
        let tr = WaveTrace::new(&square(), &data, &[0.5], TraceFormula::Dalembert, QuadratureSpec::default()).unwrap();
        assert!((tr.value(0.3).unwrap() - C64::new(0.0, 0.3)).norm() < 1e-12);
    }

    #[test]
    fn sampled_gradient_fallback() {
        let sol = library_solution("saddle3d", 3).unwrap();
        let analytic = CauchyData::analytic(sol.clone());
        let axes: Vec<Vec<f64>> = (0..2).map(|_| (0..81).map(|i| -1.0 + i as f64 / 40.0).collect()).collect();
        let (u0, u1) = analytic.sample_on(&disk3(), &axes);
        let sampled = CauchyData::from_samples(axes, u0, u1).unwrap();
        let tr = WaveTrace::new(&disk3(), &sampled, &[0.1, 0.0], TraceFormula::Poisson, QuadratureSpec::default()).unwrap();
        let v = tr.value(0.5).unwrap();
        let expected = sol.extend(&[0.1, 0.0], C64::new(1.0, 0.5));
        assert!((v - expected).norm() < 1e-5, "{v} vs {expected}");
    }

    #[test]
    fn curved_top_uses_off_surface_data() {
        let domain = CylinderDomain::new(
            2,
            BaseShape::Interval { a: 0.0, b: 1.0 },
            Profile::Constant(0.0),
            Profile::Affine { offset: 1.0, slope: vec![0.3] },
        )
        .unwrap();
        let sol = library_solution("re_z3", 2).unwrap();
        assert!(max_oracle_error(&domain, &sol, &[0.6]) < 1e-12);
    }

    #[test]
    fn high_precision_trace_is_calibrated() {
        let sol = ManufacturedSolution::exp_cos(2, 3.0);
        let data = CauchyData::analytic(sol.clone());
        let tr = WaveTrace::new(&square(), &data, &[0.5], TraceFormula::Dalembert, QuadratureSpec::default()).unwrap();
        with_precision(320, || {
            let y = Mp::from_f64(0.45);
            let v = tr.eval(&y).unwrap();
            let exact = sol.extension(&[Mp::from_f64(0.5)], &Complex::new(Mp::from_f64(1.0), y));
            let err = crate::numeric::cabs(&(v - exact)).to_f64();
            assert!(err < 1e-85, "{err:e}");
        });
    }
}
