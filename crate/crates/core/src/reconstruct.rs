//! Recovery of `u(x)` inside the cylinder.
//!
//! The compositional path feeds the wave trace over `x'` to the edge
//! integral of [`crate::carleman`]. The combined path integrates the Cauchy
//! data directly against kernels built from `K_N`; at each N it is the same
//! integral with the order of integration exchanged, so the two paths agree
//! up to quadrature error. Unlike the limit formulas, the combined forms
//! here keep the boundary terms at `y = eps` from the integrations by parts.
//! Those terms carry a factor `K_N(eps)`, of modulus about `exp(-N)`, and
//! keeping them makes the agreement hold at every N, not only in the limit.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::Zero;

use crate::carleman::{
    continue_edge_with_plan, continue_limit, plan_edge, settle, CarlemanParams, ConstantEdge,
    ContinuationDiagnostics, EdgePlan, KernelFrame,
};
use crate::error::{Error, Result};
use crate::geometry::{triangle_at, CylinderDomain, TriangleGeometry};
use crate::numeric::{lower, with_precision, Mp, Real, C64};
use crate::oracles::CauchyData;
use crate::quadrature::{clenshaw_cumulative, clenshaw_curtis, smooth_size, sphere_nodes, NodeSet};
use crate::wavetrace::{TraceFormula, WaveTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Path {
    /// Wave trace, then the edge integral.
    Compositional,
    /// Data against the pre-composed kernels.
    Combined,
}

impl Path {
    pub fn name(&self) -> &'static str {
        match self {
            Path::Compositional => "compositional",
            Path::Combined => "combined",
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Path {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compositional" => Ok(Path::Compositional),
            "combined" => Ok(Path::Combined),
            _ => Err(Error::InvalidArgument(format!("unknown path {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub point: Vec<f64>,
    pub schedule: Vec<u32>,
    pub values_by_n: Vec<C64>,
    /// Value picked by the stop rule; its real part is the reconstruction.
    pub chosen: C64,
    pub converged: bool,
    /// `|Im chosen|`
    pub im_residual: f64,
    /// `|Re chosen - u(x)|` when the data come from a catalog solution.
    pub oracle_error: Option<f64>,
    /// `|Re value - u(x)|` per scheduled N, same condition.
    pub oracle_errors: Option<Vec<f64>>,
    pub path: Path,
    pub diagnostics: ContinuationDiagnostics,
}

impl ReconstructionResult {
    pub fn value(&self) -> f64 {
        self.chosen.re
    }

    pub fn chosen_n(&self) -> u32 {
        self.schedule[self.diagnostics.chosen_index]
    }
}

/// Point checks shared by both paths; returns the triangle over `x'`.
fn check_point(x: &[f64], domain: &CylinderDomain, data: &CauchyData) -> Result<TriangleGeometry> {
    let n = domain.dim();
    if x.len() != n {
        return Err(Error::Dimension { expected: n, got: x.len() });
    }
    if data.dim() != n {
        return Err(Error::Dimension { expected: n, got: data.dim() });
    }
    if !domain.contains(x) {
        return Err(Error::Domain(format!("{x:?} is not strictly inside the cylinder")));
    }
    triangle_at(domain, &x[..n - 1])
}

/// Reconstructs `u(x)` over the schedule of `params`.
pub fn solve_point(
    x: &[f64],
    domain: &CylinderDomain,
    data: &CauchyData,
    params: &CarlemanParams,
    path: Path,
) -> Result<ReconstructionResult> {
    params.validate()?;
    let tri = check_point(x, domain, data)?;
    let n = domain.dim();
    let x_n = x[n - 1];
    let (chosen, diagnostics) = match path {
        Path::Compositional => {
            let formula = TraceFormula::for_dim(n)?;
            let trace = WaveTrace::new(domain, data, &x[..n - 1], formula, params.quad)?;
            continue_limit(&trace, &tri, x_n, params)?
        }
        Path::Combined => {
            let kind = Kind::for_dim(n)?;
            let nan = C64::new(f64::NAN, f64::NAN);
            let mut values = vec![];
            let mut masses = vec![];
            let mut plans = vec![];
            for &big_n in &params.schedule {
                match combined(x, domain, data, big_n, params, kind) {
                    Ok(c) => {
                        values.push(c.value);
                        masses.push(c.kernel_mass);
                        plans.push(Some(c.plan));
                    }
                    Err(Error::PrecisionBudget { .. }) => {
                        values.push(nan);
                        masses.push(nan);
                        plans.push(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            settle(params, values, masses, plans)
        }
    };
    let exact = data.solution().map(|s| s.value(x));
    Ok(ReconstructionResult {
        point: x.to_vec(),
        schedule: params.schedule.clone(),
        values_by_n: diagnostics.values.clone(),
        chosen,
        converged: diagnostics.converged,
        im_residual: chosen.im.abs(),
        oracle_error: exact.map(|u| (chosen.re - u).abs()),
        oracle_errors: exact.map(|u| diagnostics.values.iter().map(|v| (v.re - u).abs()).collect()),
        path,
        diagnostics,
    })
}

/// One grid entry: the point and either its result or the error it raised.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub point: Vec<f64>,
    pub result: Result<ReconstructionResult>,
}

/// [`solve_point`] over the tensor grid of `axes` (one axis per coordinate,
/// last coordinate varying fastest). Failures are recorded per point.
pub fn field_grid(
    domain: &CylinderDomain,
    data: &CauchyData,
    params: &CarlemanParams,
    axes: &[Vec<f64>],
    path: Path,
) -> Result<Vec<GridEntry>> {
    if axes.len() != domain.dim() {
        return Err(Error::Dimension { expected: domain.dim(), got: axes.len() });
    }
    if axes.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("grid axes must be nonempty".into()));
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut point = vec![0.0; axes.len()];
        let mut r = idx;
        for k in (0..axes.len()).rev() {
            point[k] = axes[k][r % axes[k].len()];
            r /= axes[k].len();
        }
        let result = solve_point(&point, domain, data, params, path);
        out.push(GridEntry { point, result });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Dalembert,
    Poisson,
    Kirchhoff,
    EvenN(usize),
}

impl Kind {
    fn for_dim(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Kind::Dalembert),
            3 => Ok(Kind::Poisson),
            4 => Ok(Kind::Kirchhoff),
            6 => Ok(Kind::EvenN(6)),
            _ => Err(Error::Unsupported(format!("no combined formula for n = {n}"))),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Kind::Dalembert => 2,
            Kind::Poisson => 3,
            Kind::Kirchhoff => 4,
            Kind::EvenN(n) => *n,
        }
    }
}

struct Combined {
    value: C64,
    kernel_mass: C64,
    plan: EdgePlan,
}

/// Inputs of a combined evaluation at one N.
struct Flat<'a> {
    data: &'a CauchyData,
    xp: Vec<f64>,
    t: f64,
    x_n: f64,
    tri: TriangleGeometry,
    n: u32,
    tau: f64,
    log_peak: f64,
}

fn run<R>(bits: u32, double: impl FnOnce() -> R, multi: impl FnOnce() -> R) -> R {
    if bits == 53 {
        double()
    } else {
        with_precision(bits, multi)
    }
}

fn combined(
    x: &[f64],
    domain: &CylinderDomain,
    data: &CauchyData,
    n: u32,
    params: &CarlemanParams,
    kind: Kind,
) -> Result<Combined> {
    params.validate()?;
    if domain.dim() != kind.dim() {
        return Err(Error::Dimension { expected: kind.dim(), got: domain.dim() });
    }
    let tri = check_point(x, domain, data)?;
    if !domain.top().is_constant() {
        return Err(Error::Unsupported("combined formulas need a flat top".into()));
    }
    if data.has_source() {
        return Err(Error::Unsupported("combined formulas need a zero right-hand side".into()));
    }
    let dim = kind.dim();
    let xp = x[..dim - 1].to_vec();
    let x_n = x[dim - 1];
    let plan = plan_edge(&tri, x_n, n, params)?;
    let t = domain.top().value(&xp);
    let flat = Flat { data, t, xp, x_n, tri, n, tau: plan.tau, log_peak: plan.log_peak };
    // Derivative kernels are larger than K_N by a few powers of N.
    let bits = if plan.is_double() { 53 } else { plan.bits + 64 };
    let m = plan.nodes;
    let orders = params.quad.sphere_rule;
    let (value, kernel_mass) = match kind {
        Kind::Dalembert => run(bits, || dalembert_at::<f64>(&flat, m), || dalembert_at::<Mp>(&flat, m))?,
        Kind::Poisson => {
            let m = smooth_size((m / 2).max(params.quad.nodes_1d));
            let v = run(bits, || poisson_at::<f64>(&flat, m, orders), || poisson_at::<Mp>(&flat, m, orders))?;
            let mass = continue_edge_with_plan(&ConstantEdge(C64::new(1.0, 0.0)), &tri, flat.x_n, plan)?;
            (v, mass.value)
        }
        Kind::Kirchhoff => run(bits, || kirchhoff_at::<f64>(&flat, m, orders), || kirchhoff_at::<Mp>(&flat, m, orders))?,
        Kind::EvenN(d) => run(bits, || even_at::<f64>(&flat, d, m, orders), || even_at::<Mp>(&flat, d, m, orders))?,
    };
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NonFinite { location: flat.x_n });
    }
    Ok(Combined { value, kernel_mass, plan })
}

/// `int u0(s) Re K_N(x1 - s) ds - int u1(s) (int_{|s - x1|}^{eps} Im K_N dy) ds`
/// over `|s - x1| < eps`, for n = 2 and a flat top.
pub fn combined_dalembert(
    x: &[f64],
    domain: &CylinderDomain,
    data: &CauchyData,
    n: u32,
    params: &CarlemanParams,
) -> Result<C64> {
    Ok(combined(x, domain, data, n, params, Kind::Dalembert)?.value)
}

/// Combined formula for n = 3: disk integrals of the data against
/// `int_r^eps (d/dy Re K_N) / sqrt(y^2 - r^2) dy` and the same with `Im K_N`.
pub fn combined_poisson(
    x: &[f64],
    domain: &CylinderDomain,
    data: &CauchyData,
    n: u32,
    params: &CarlemanParams,
) -> Result<C64> {
    Ok(combined(x, domain, data, n, params, Kind::Poisson)?.value)
}

/// Combined formula for n = 4: ball integral of
/// `-(1/2 pi) (u0 (d/dy Re K_N)(r) + u1 Im K_N(r)) / r`, `r = |x'' - x'|`.
pub fn combined_kirchhoff(
    x: &[f64],
    domain: &CylinderDomain,
    data: &CauchyData,
    n: u32,
    params: &CarlemanParams,
) -> Result<C64> {
    Ok(combined(x, domain, data, n, params, Kind::Kirchhoff)?.value)
}

/// Combined formula for even `dim` (4 or 6), with the operators
/// `(d/dy 1/y)^k (y Re K_N)` and `(d/dy 1/y)^(k-1) Im K_N`, `k = (dim - 2)/2`,
/// and the constant `(-1)^k 2 / (|S^(dim-2)| 1 3 ... (dim - 3))`.
pub fn combined_even_n(
    x: &[f64],
    domain: &CylinderDomain,
    data: &CauchyData,
    n: u32,
    dim: usize,
    params: &CarlemanParams,
) -> Result<C64> {
    if !matches!(dim, 4 | 6) {
        return Err(Error::Unsupported(format!("the even-dimensional formula covers n = 4 and 6, got {dim}")));
    }
    Ok(combined(x, domain, data, n, params, Kind::EvenN(dim))?.value)
}

fn finite<T: Real>(v: &T, at: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { location: at })
    }
}

fn dalembert_at<T: Real>(f: &Flat<'_>, m: usize) -> Result<(C64, C64)> {
    let frame = KernelFrame::<T>::new(&f.tri, f.x_n, f.n as f64)?;
    let rule = clenshaw_curtis::<T>(m);
    let eps = T::from_f64(f.tri.epsilon);
    let mut ks = vec![Complex::<T>::zero(); m + 1];
    for i in 0..=m / 2 {
        let k = frame.kernel(&(rule.nodes()[i].clone() * &eps))?;
        ks[m - i] = k.conj();
        ks[i] = k;
    }
    // int_y^eps K, analytic in y; its imaginary part is even.
    let tail = clenshaw_cumulative(m, &ks);
    let x1 = T::from_f64(f.xp[0]);
    let t = T::from_f64(f.t);
    let mut value = T::zero();
    let mut mass = Complex::<T>::zero();
    for j in 0..=m {
        let y = rule.nodes()[j].clone() * &eps;
        let w = rule.weights()[j].clone() * &eps;
        let s = [x1.clone() + &y];
        let g = tail[j].im.clone() * &eps;
        let term = f.data.u0(&s, &t) * &ks[j].re - f.data.u1(&s, &t) * &g;
        finite(&term, y.to_f64())?;
        value = value + term * &w;
        mass = mass + ks[j].clone() * w;
    }
    Ok((C64::new(value.to_f64(), 0.0), lower(&mass)))
}

/// `(sum w u0(x' + rho omega), sum w u1(x' + rho omega))` over a sphere rule.
fn sphere_sums<T: Real>(data: &CauchyData, nodes: &NodeSet<T>, xp: &[T], rho: &T, t: &T) -> (T, T) {
    let mut p = vec![T::zero(); xp.len()];
    let (mut a, mut b) = (T::zero(), T::zero());
    for (omega, w) in nodes.iter() {
        for k in 0..xp.len() {
            p[k] = xp[k].clone() + rho.clone() * &omega[k];
        }
        a = a + data.u0(&p, t) * w;
        b = b + data.u1(&p, t) * w;
    }
    (a, b)
}

/// Sphere integrals of the data around `x'`. They only need a relative
/// accuracy of about `tau exp(-log_peak)`; when that is within double
/// precision they are evaluated in `f64` whatever the working precision.
struct Sums<'a> {
    data: &'a CauchyData,
    d: usize,
    xp: Vec<f64>,
    t: f64,
    orders: (usize, usize),
    double: bool,
}

impl<'a> Sums<'a> {
    /// Catalog data are known to any precision, so above double the
    /// configured orders are doubled until two successive ones agree to the
    /// target at the rim.
    fn new<T: Real>(f: &Flat<'a>, d: usize, base: (usize, usize)) -> Self {
        let ln_tol = f.tau.ln() - f.log_peak.max(0.0) - (4.0 * (1.0 + f.n as f64).powi(2)).ln();
        let double = T::bits() == 53 || ln_tol >= -48.0 * std::f64::consts::LN_2;
        let mut sums = Sums { data: f.data, d, xp: f.xp.clone(), t: f.t, orders: base, double };
        if T::bits() == 53 || f.data.solution().is_none() {
            return sums;
        }
        let eps = T::from_f64(f.tri.epsilon);
        let tol = if double { T::from_f64(ln_tol.exp().max(1e-15)) } else { T::from_f64(ln_tol).exp() };
        let mut cur = sums.at(&eps);
        // Product rules on S^4 grow with the cube of the order.
        let steps = if d == 5 { 1 } else { 6 };
        for _ in 0..steps {
            let o = sums.orders;
            sums.orders = (2 * o.0, 2 * o.1);
            let next = sums.at(&eps);
            let close = |a: &T, b: &T| (a.clone() - b).abs() <= tol.clone() * (b.abs() + 1.0);
            if close(&cur.0, &next.0) && close(&cur.1, &next.1) {
                sums.orders = o;
                break;
            }
            cur = next;
        }
        sums
    }

    fn at<T: Real>(&self, rho: &T) -> (T, T) {
        if self.double {
            let nodes = sphere_nodes::<f64>(self.d, self.orders);
            let (a, b) = sphere_sums(self.data, &nodes, &self.xp, &rho.to_f64(), &self.t);
            (T::from_f64(a), T::from_f64(b))
        } else {
            let nodes = sphere_nodes::<T>(self.d, self.orders);
            sphere_sums(self.data, &nodes, &lift_point::<T>(&self.xp), rho, &T::from_f64(self.t))
        }
    }

    /// `d/drho int u0(x' + rho omega) d omega`
    fn radial<T: Real>(&self, rho: &T) -> T {
        if self.double {
            let nodes = sphere_nodes::<f64>(self.d, self.orders);
            T::from_f64(radial_derivative(self.data, &nodes, &self.xp, &rho.to_f64(), &self.t))
        } else {
            let nodes = sphere_nodes::<T>(self.d, self.orders);
            radial_derivative(self.data, &nodes, &lift_point::<T>(&self.xp), rho, &T::from_f64(self.t))
        }
    }
}

fn lift_point<T: Real>(xp: &[f64]) -> Vec<T> {
    xp.iter().map(|v| T::from_f64(*v)).collect()
}

fn poisson_at<T: Real>(f: &Flat<'_>, m: usize, orders: (usize, usize)) -> Result<C64> {
    let frame = KernelFrame::<T>::new(&f.tri, f.x_n, f.n as f64)?;
    let circle = Sums::new::<T>(f, 2, orders);
    let rule = clenshaw_curtis::<T>(m);
    let eps = T::from_f64(f.tri.epsilon);
    let quarter = T::pi() / 4.0;
    // x'' = x' + r omega with r = eps sin(theta): the rim singularity of
    // the inner integrals becomes the smooth factor cos(theta).
    let (mut rim, mut acc) = (T::zero(), T::zero());
    for (x, w) in rule.nodes().iter().zip(rule.weights()) {
        let theta = (x.clone() + T::one()) * &quarter;
        let wt = w.clone() * &quarter;
        let (s, c) = theta.sin_cos();
        let r = eps.clone() * &s;
        let (a0, a1) = circle.at(&r);
        rim = rim + a0.clone() * &s * &wt;
        if s <= T::zero() || c <= T::zero() {
            continue;
        }
        // y = r cosh(tau), tau up to acosh(1 / sin(theta)).
        let top = ((c.clone() + T::one()) / &s).ln();
        let half = top / 2.0;
        let (mut ib, mut ic) = (T::zero(), T::zero());
        for (u, v) in rule.nodes().iter().zip(rule.weights()) {
            let tau = (u.clone() + T::one()) * &half;
            let e = tau.exp();
            let y = r.clone() * ((e.clone() + T::one() / e) / 2.0);
            let k = frame.derivatives(&y, 1)?;
            let wv = v.clone() * &half;
            ib = ib + k[1].re.clone() * &wv;
            ic = ic + k[0].im.clone() * &wv;
        }
        let term = (a0 * ib + a1 * ic) * &s * &c;
        finite(&term, r.to_f64())?;
        acc = acc + term * &wt;
    }
    let k_eps = frame.kernel(&eps)?;
    let value = (rim * &eps * &k_eps.re - acc * &eps * &eps) / T::pi();
    Ok(C64::new(value.to_f64(), 0.0))
}

fn kirchhoff_at<T: Real>(f: &Flat<'_>, m: usize, orders: (usize, usize)) -> Result<(C64, C64)> {
    let frame = KernelFrame::<T>::new(&f.tri, f.x_n, f.n as f64)?;
    let sphere = Sums::new::<T>(f, 3, orders);
    let rule = clenshaw_curtis::<T>(m);
    let eps = T::from_f64(f.tri.epsilon);
    let mut acc = T::zero();
    let mut mass = Complex::<T>::zero();
    let mut rim = T::zero();
    // The integrand in rho is even: sum over rho >= 0 only.
    for i in 0..=m / 2 {
        let rho = rule.nodes()[i].clone() * &eps;
        let centre = 2 * i == m;
        let w = rule.weights()[i].clone() * &eps;
        let k = frame.derivatives(&rho, 1)?;
        let (q0, q1) = sphere.at(&rho);
        if i == 0 {
            rim = q0.clone() * &k[0].re;
        }
        let term = (k[1].re.clone() * q0 + k[0].im.clone() * q1) * &rho;
        finite(&term, rho.to_f64())?;
        if centre {
            acc = acc + term * (w.clone() / 2.0);
            mass = mass + k[0].clone() * w;
        } else {
            acc = acc + term * &w;
            mass = mass + Complex::new(k[0].re.clone() * (w * 2.0), T::zero());
        }
    }
    let two_pi = T::pi() * 2.0;
    let value = (rim * &eps - acc) / two_pi;
    Ok((C64::new(value.to_f64(), 0.0), lower(&mass)))
}

/// `coef * y^power * F^(order)(y)`
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    coef: f64,
    power: i32,
    order: usize,
}

/// Applies `(d/dy 1/y)^k` to a sum of terms.
fn descent(terms: Vec<Term>, k: usize) -> Vec<Term> {
    let mut cur = terms;
    for _ in 0..k {
        let mut next: Vec<Term> = vec![];
        let mut push = |t: Term| {
            if t.coef == 0.0 {
                return;
            }
            match next.iter_mut().find(|s| s.power == t.power && s.order == t.order) {
                Some(s) => s.coef += t.coef,
                None => next.push(t),
            }
        };
        for t in cur {
            push(Term { coef: t.coef * (t.power - 1) as f64, power: t.power - 2, order: t.order });
            push(Term { coef: t.coef, power: t.power - 1, order: t.order + 1 });
        }
        next.retain(|t| t.coef != 0.0);
        cur = next;
    }
    cur
}

/// `sum coef rho^(power + shift) part(F^(order)(rho))`, `power + shift >= 0`.
fn eval_terms<T: Real>(terms: &[Term], shift: i32, rho: &T, values: &[T]) -> T {
    terms.iter().fold(T::zero(), |acc, t| {
        let e = t.power + shift;
        debug_assert!(e >= 0);
        let p = if e == 0 { T::one() } else { rho.powi(e) };
        acc + p * &values[t.order] * t.coef
    })
}

fn sphere_area_t<T: Real>(d: usize) -> T {
    match d {
        1 => T::from_f64(2.0),
        2 => T::pi() * 2.0,
        _ => T::pi() * 2.0 / T::from_usize(d - 2) * sphere_area_t::<T>(d - 2),
    }
}

fn radial_derivative<T: Real>(data: &CauchyData, sphere: &NodeSet<T>, xp: &[T], rho: &T, t: &T) -> T {
    let mut p = vec![T::zero(); xp.len()];
    let mut acc = T::zero();
    for (omega, w) in sphere.iter() {
        for k in 0..xp.len() {
            p[k] = xp[k].clone() + rho.clone() * &omega[k];
        }
        match data.grad_u0(&p, t) {
            Some(g) => {
                let dir = g.iter().zip(omega).fold(T::zero(), |a, (gi, oi)| a + gi.clone() * oi);
                acc = acc + dir * w;
            }
            None => {
                // One-sided difference inwards; the rim may touch the boundary.
                let h = rho.clone() * 1e-4;
                let q = |r: T| sphere_sums(data, sphere, xp, &r, t).0;
                let three = q(rho.clone()) * 3.0 - q(rho.clone() - &h) * 4.0 + q(rho.clone() - h.clone() * 2.0);
                return three / (h * 2.0);
            }
        }
    }
    acc
}

fn even_at<T: Real>(f: &Flat<'_>, dim: usize, m: usize, orders: (usize, usize)) -> Result<(C64, C64)> {
    let d = dim - 1;
    let k = (dim - 2) / 2;
    let shift = d as i32 - 2;
    let re_terms = descent(vec![Term { coef: 1.0, power: 1, order: 0 }], k);
    let im_terms = descent(vec![Term { coef: 1.0, power: 0, order: 0 }], k - 1);
    let frame = KernelFrame::<T>::new(&f.tri, f.x_n, f.n as f64)?;
    let base = if d == 5 { ((orders.0 / 3).max(8), (orders.1 / 3).max(8)) } else { orders };
    let sphere = Sums::new::<T>(f, d, base);
    let rule = clenshaw_curtis::<T>(m);
    let eps = T::from_f64(f.tri.epsilon);
    let mut acc = T::zero();
    let mut mass = Complex::<T>::zero();
    let mut rim = None;
    for i in 0..=m / 2 {
        let rho = rule.nodes()[i].clone() * &eps;
        let w = rule.weights()[i].clone() * &eps;
        let ks = frame.derivatives(&rho, k)?;
        let re: Vec<T> = ks.iter().map(|z| z.re.clone()).collect();
        let im: Vec<T> = ks.iter().map(|z| z.im.clone()).collect();
        let (q0, q1) = sphere.at(&rho);
        if i == 0 {
            rim = Some((q0.clone(), q1.clone(), ks.clone()));
        }
        let term = eval_terms(&re_terms, shift, &rho, &re) * q0 + eval_terms(&im_terms, shift, &rho, &im) * q1;
        finite(&term, rho.to_f64())?;
        if 2 * i == m {
            acc = acc + term * (w.clone() / 2.0);
            mass = mass + ks[0].clone() * w;
        } else {
            acc = acc + term * &w;
            mass = mass + Complex::new(re[0].clone() * (w * 2.0), T::zero());
        }
    }
    let sigma = sphere_area_t::<T>(d);
    let gamma = T::from_usize((1..=dim - 3).step_by(2).product());
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let c = T::from_f64(2.0 * sign) / (gamma.clone() * &sigma);

    // Boundary terms at y = eps: with Phi_j = eps^(d-2) M_j (spherical means
    // M_j) and L = (1/y) d/dy, they are L^(k-1) Phi_0 Re K, minus
    // Phi_0 (d/dy Re K) / eps and Phi_1 Im K / eps when k = 2.
    let (q0, q1, ks) = rim.expect("rule has a rim node");
    let scale = eps.powi(shift);
    let phi0 = scale.clone() * &q0 / &sigma;
    let phi1 = scale * &q1 / &sigma;
    let boundary = match k {
        1 => phi0 * &ks[0].re,
        2 => {
            let dq0 = sphere.radial(&eps);
            let dphi0 = (eps.powi(shift - 1) * &q0 * T::from_usize(d - 2) + eps.powi(shift) * &dq0) / &sigma;
            dphi0 / &eps * &ks[0].re - phi0 * &ks[1].re / &eps - phi1 * &ks[0].im / &eps
        }
        _ => return Err(Error::Unsupported(format!("no boundary terms for n = {dim}"))),
    };
    let value = c * acc + boundary * T::from_f64(2.0) / gamma;
    Ok((C64::new(value.to_f64(), 0.0), lower(&mass)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BaseShape;
    use crate::oracles::library_solution;

    fn square() -> CylinderDomain {
        CylinderDomain::flat(BaseShape::Interval { a: 0.0, b: 1.0 }, 0.0, 1.0).unwrap()
    }

    fn ball(dim: usize) -> CylinderDomain {
        let base = BaseShape::Ball { center: vec![0.0; dim - 1], radius: 1.0 };
        CylinderDomain::flat(base, 0.0, 1.0).unwrap()
    }

    fn catalog(name: &str, dim: usize) -> CauchyData {
        CauchyData::analytic(library_solution(name, dim).unwrap())
    }

    fn short(schedule: Vec<u32>) -> CarlemanParams {
        CarlemanParams::with_schedule(schedule)
    }

    #[test]
    fn descent_operators() {
        // (d/dy 1/y)(y F) = F'
        let one = descent(vec![Term { coef: 1.0, power: 1, order: 0 }], 1);
        assert_eq!(one, vec![Term { coef: 1.0, power: 0, order: 1 }]);
        // (d/dy 1/y)^2 (y F) = F''/y - F'/y^2
        let two = descent(vec![Term { coef: 1.0, power: 1, order: 0 }], 2);
        assert!(two.contains(&Term { coef: -1.0, power: -2, order: 1 }));
        assert!(two.contains(&Term { coef: 1.0, power: -1, order: 2 }));
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn dalembert_matches_compositional() {
        let dom = square();
        let data = catalog("re_z2", 2);
        let p = short(vec![1, 2, 4, 8]);
        let x = [0.5, 0.8];
        let comp = solve_point(&x, &dom, &data, &p, Path::Compositional).unwrap();
        for (i, &n) in p.schedule.iter().enumerate() {
            let c = combined_dalembert(&x, &dom, &data, n, &p).unwrap();
            let r = comp.values_by_n[i];
            assert!((c - r).norm() <= 1e-10 * (1.0 + r.norm()), "N={n}: {c} vs {r}");
        }
    }

    #[test]
    fn poisson_matches_compositional() {
        let dom = ball(3);
        let data = catalog("saddle3d", 3);
        let p = short(vec![1, 2, 4]);
        let x = [0.1, -0.2, 0.8];
        let comp = solve_point(&x, &dom, &data, &p, Path::Compositional).unwrap();
        for (i, &n) in p.schedule.iter().enumerate() {
            let c = combined_poisson(&x, &dom, &data, n, &p).unwrap();
            let r = comp.values_by_n[i];
            assert!((c - r).norm() <= 1e-8 * (1.0 + r.norm()), "N={n}: {c} vs {r}");
        }
    }

    #[test]
    fn kirchhoff_matches_compositional_and_even_n() {
        let dom = ball(4);
        let data = catalog("saddle4d", 4);
        let p = short(vec![1, 2, 4]);
        let x = [0.1, -0.2, 0.05, 0.8];
        let comp = solve_point(&x, &dom, &data, &p, Path::Compositional).unwrap();
        for (i, &n) in p.schedule.iter().enumerate() {
            let c = combined_kirchhoff(&x, &dom, &data, n, &p).unwrap();
            let e = combined_even_n(&x, &dom, &data, n, 4, &p).unwrap();
            let r = comp.values_by_n[i];
            assert!((c - r).norm() <= 1e-8 * (1.0 + r.norm()), "N={n}: {c} vs {r}");
            assert!((c - e).norm() <= 1e-12, "N={n}: {c} vs {e}");
        }
    }

    #[test]
    fn constant_data_approach_one() {
        let p = short(vec![4, 8, 16]);
        let d2 = combined_dalembert(&[0.5, 0.5], &square(), &catalog("const1", 2), 16, &p).unwrap();
        assert!((d2.re - 1.0).abs() < 1e-6, "{d2}");
        let d6 = ball(6);
        let data6 = catalog("const1", 6);
        let mut prev = f64::INFINITY;
        for n in [2, 4, 8, 16] {
            let v = combined_even_n(&[0.1, 0.0, 0.0, 0.0, -0.1, 0.8], &d6, &data6, n, 6, &p).unwrap();
            let err = (v.re - 1.0).abs();
            assert!(err < prev, "N={n}: {v}");
            prev = err;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn six_dimensional_formula_matches_exact_trace() {
        let dom = ball(6);
        let p = short(vec![1, 2, 4]);
        let x = [0.1, 0.0, -0.05, 0.0, 0.1, 0.8];
        let tri = triangle_at(&dom, &x[..5]).unwrap();
        for name in ["saddle", "point_source", "exp_cos"] {
            let data = catalog(name, 6);
            let trace = WaveTrace::new(&dom, &data, &x[..5], TraceFormula::Oracle, p.quad).unwrap();
            for &n in &p.schedule {
                let exact = crate::carleman::continue_edge(&trace, &tri, x[5], n, &p).unwrap().value;
                let v = combined_even_n(&x, &dom, &data, n, 6, &p).unwrap();
                assert!((v - exact).norm() <= 1e-8 * (1.0 + exact.norm()), "{name} N={n}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn odd_data_drop_out_of_the_u0_term() {
        // u0 = x1 on the disk centred at x' = 0, u1 = 0.
        let dom = ball(3);
        let data = CauchyData::from_callbacks(3, |xp, _| xp[0], |_, _| 0.0);
        let v = combined_poisson(&[0.0, 0.0, 0.5], &dom, &data, 4, &short(vec![4])).unwrap();
        assert!(v.norm() <= 1e-10, "{v}");
    }

    #[test]
    fn rejects_unsupported_cases() {
        let p = short(vec![1]);
        let data = catalog("const1", 5);
        let dom5 = ball(5);
        let x5 = [0.0, 0.0, 0.0, 0.0, 0.5];
        assert!(matches!(combined_even_n(&x5, &dom5, &data, 1, 5, &p), Err(Error::Unsupported(_))));
        assert!(matches!(solve_point(&x5, &dom5, &data, &p, Path::Combined), Err(Error::Unsupported(_))));
        let on_top = solve_point(&[0.5, 1.0], &square(), &catalog("re_z2", 2), &p, Path::Compositional);
        assert!(matches!(on_top, Err(Error::Domain(_))));
        let src = catalog("poisson_poly", 2);
        assert!(matches!(combined_dalembert(&[0.5, 0.5], &square(), &src, 1, &p), Err(Error::Unsupported(_))));
        let curved = CylinderDomain::new(
            2,
            BaseShape::Interval { a: 0.0, b: 1.0 },
            crate::geometry::Profile::Constant(0.0),
            crate::geometry::Profile::custom(|x| 1.0 + 0.1 * x[0]),
        )
        .unwrap();
        let r = combined_dalembert(&[0.5, 0.5], &curved, &catalog("exp_cos", 2), 1, &p);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_n_is_finite() {
        let v = combined_dalembert(&[0.5, 0.5], &square(), &catalog("re_z2", 2), 0, &short(vec![1])).unwrap();
        assert!(v.re.is_finite());
    }

    #[test]
    fn grid_records_errors_per_point() {
        let dom = square();
        let data = catalog("const1", 2);
        let p = short(vec![4, 8, 16]);
        let axes = vec![vec![0.4, 0.5, 0.6], vec![0.5, 0.7, 1.5]];
        let grid = field_grid(&dom, &data, &p, &axes, Path::Compositional).unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[1].point, vec![0.4, 0.7]);
        for e in &grid {
            if e.point[1] > 1.0 {
                assert!(matches!(e.result, Err(Error::Domain(_))));
            } else {
                let r = e.result.as_ref().unwrap();
                assert!((r.value() - 1.0).abs() < 0.05);
                assert!(r.oracle_error.is_some());
            }
        }
    }

    #[test]
    fn path_names_round_trip() {
        for p in [Path::Compositional, Path::Combined] {
            assert_eq!(p.name().parse::<Path>().unwrap(), p);
        }
        assert!("other".parse::<Path>().is_err());
    }
}
