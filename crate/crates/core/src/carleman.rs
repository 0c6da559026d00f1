//! The Carleman kernel
//!
//! `K_N(y) = exp(N (w^(1/alpha) - 1)) / (2 pi (t - x_n + i y))`,
//! `w = (t - b + i y) / (x_n - b)`,
//!
//! and the edge integral `int_{-eps}^{eps} g(y) K_N(y) dy` that continues the
//! edge values `g` of a holomorphic function to the point `x_n` of the
//! triangle's bisectrix.
//!
//! On the reference triangle the integrand reaches `exp(9.5 N)` in the middle
//! of the edge while the integral stays of order one, so beyond a handful of
//! N the sum cancels far below double precision. Each edge integral therefore
//! gets a plan: a Clenshaw-Curtis size chosen from the kernel's growth on
//! Bernstein ellipses, and a working precision large enough to absorb the
//! cancellation. Double precision is used whenever it suffices.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::geometry::TriangleGeometry;
use crate::numeric::{cexp, cln, lift, lower, with_precision, Mp, Real, C64};
use crate::quadrature::{clenshaw_curtis, smooth_size, QuadratureSpec};

/// Principal branch of `w^(inv_alpha)`, slit along the negative real axis.
pub fn branch_power(w: C64, inv_alpha: f64) -> Result<C64> {
    branch_power_t(&w, &inv_alpha)
}

pub(crate) fn branch_power_t<T: Real>(w: &Complex<T>, inv_alpha: &T) -> Result<Complex<T>> {
    if w.im.is_zero() && w.re <= T::zero() {
        return Err(Error::Branch(format!("w = {} lies on the slit", w.re.to_f64())));
    }
    if w.re.is_one() && w.im.is_zero() {
        return Ok(Complex::one());
    }
    Ok(cexp(&(cln(w) * inv_alpha.clone())))
}

/// Kernel at a fixed triangle, height and N, at working precision `T`.
#[derive(Debug, Clone)]
pub struct KernelFrame<T> {
    zeta0: T,
    top: T,
    x_n: T,
    inv_alpha: T,
    n: T,
    two_pi: T,
}

impl<T: Real> KernelFrame<T> {
    pub fn new(tri: &TriangleGeometry, x_n: f64, n: f64) -> Result<Self> {
        tri.check_height(x_n)?;
        Ok(KernelFrame {
            zeta0: T::from_f64(tri.zeta0),
            top: T::from_f64(tri.top),
            x_n: T::from_f64(x_n),
            // Recomputed at working precision so that the legs map exactly to
            // the imaginary axis.
            inv_alpha: T::pi() / (T::from_f64(tri.epsilon).atan2(&(T::from_f64(tri.top) - &T::from_f64(tri.zeta0))) * 2.0),
            n: T::from_f64(n),
            two_pi: T::pi() * 2.0,
        })
    }

    fn zeta(&self, y: &T) -> Complex<T> {
        Complex::new(self.top.clone(), y.clone())
    }

    /// `w^(1/alpha)`
    fn power(&self, y: &T) -> Result<Complex<T>> {
        let scale = self.x_n.clone() - &self.zeta0;
        let w = Complex::new((self.top.clone() - &self.zeta0) / &scale, y.clone() / &scale);
        branch_power_t(&w, &self.inv_alpha)
    }

    /// The quenching factor `exp(N (w^(1/alpha) - 1))`.
    pub fn quench(&self, y: &T) -> Result<Complex<T>> {
        let v = self.power(y)?;
        Ok(cexp(&((v - Complex::one()) * self.n.clone())))
    }

    pub fn kernel(&self, y: &T) -> Result<Complex<T>> {
        let e = self.quench(y)?;
        let d = (self.zeta(y) - Complex::new(self.x_n.clone(), T::zero())) * self.two_pi.clone();
        Ok(e / d)
    }

    /// `d^j/dy^j K_N` for `j = 0..=k`.
    pub fn derivatives(&self, y: &T, k: usize) -> Result<Vec<Complex<T>>> {
        // With zeta = t + i y, d/dy = i d/dzeta. In zeta: v = ((zeta - b)/(x_n - b))^a,
        // v^(j) = a (a-1) ... (a-j+1) v / (zeta - b)^j, E = exp(N (v - 1)) with
        // E^(k) = N sum_j C(k-1, j) v^(j+1) E^(k-1-j), h = 1/(zeta - x_n).
        let zeta = self.zeta(y);
        let v = self.power(y)?;
        let shifted = zeta.clone() - Complex::new(self.zeta0.clone(), T::zero());
        let inv_shift = Complex::<T>::one() / shifted;
        let mut vd = vec![v.clone()];
        for j in 1..=k {
            let last = vd[j - 1].clone();
            vd.push(last * inv_shift.clone() * (self.inv_alpha.clone() - T::from_usize(j - 1)));
        }
        let mut e = vec![cexp(&((v - Complex::one()) * self.n.clone()))];
        for m in 1..=k {
            let mut acc = Complex::<T>::zero();
            for j in 0..m {
                acc = acc + vd[j + 1].clone() * e[m - 1 - j].clone() * T::from_f64(binomial(m - 1, j));
            }
            e.push(acc * self.n.clone());
        }
        let inv_gap = Complex::<T>::one() / (zeta - Complex::new(self.x_n.clone(), T::zero()));
        let mut h = vec![inv_gap.clone()];
        for j in 1..=k {
            let last = h[j - 1].clone();
            h.push(-(last * inv_gap.clone()) * T::from_usize(j));
        }
        let mut out = Vec::with_capacity(k + 1);
        let mut ipow = Complex::<T>::one();
        let i = Complex::new(T::zero(), T::one());
        for m in 0..=k {
            let mut f = Complex::<T>::zero();
            for j in 0..=m {
                f = f + e[j].clone() * h[m - j].clone() * T::from_f64(binomial(m, j));
            }
            out.push(ipow.clone() * f / self.two_pi.clone());
            ipow = ipow * i.clone();
        }
        Ok(out)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn check_edge(tri: &TriangleGeometry, y: f64) -> Result<()> {
    if y.abs() <= tri.epsilon * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(Error::Domain(format!("|y| = {} exceeds the edge half-length {}", y.abs(), tri.epsilon)))
    }
}

/// Bits lost to cancellation when `exp(N (v - 1))` is formed from a
/// rounded `v = w^(1/alpha)` of modulus `|w|^(1/alpha)`.
fn lost_bits(tri: &TriangleGeometry, x_n: f64, y: f64, n: u32) -> f64 {
    let w = C64::new(tri.top - tri.zeta0, y) / (x_n - tri.zeta0);
    ((n.max(1) as f64).ln() + w.norm().ln() * tri.inv_alpha()) / std::f64::consts::LN_2
}

/// Evaluates `f` on a frame in double precision when that is accurate to
/// about 1e-13, and at a precision covering the cancellation otherwise.
fn point_eval<R>(
    tri: &TriangleGeometry,
    x_n: f64,
    y: f64,
    n: u32,
    f64_path: impl FnOnce(&KernelFrame<f64>) -> Result<R>,
    mp_path: impl FnOnce(&KernelFrame<Mp>, &Mp) -> Result<R>,
) -> Result<R> {
    check_edge(tri, y)?;
    let lost = lost_bits(tri, x_n, y, n);
    if lost <= 8.0 {
        return f64_path(&KernelFrame::new(tri, x_n, n as f64)?);
    }
    let bits = lost.ceil() as u32 + 96;
    with_precision(bits, || mp_path(&KernelFrame::new(tri, x_n, n as f64)?, &Mp::from_f64(y)))
}

/// `K_N(x', x_n, y)`.
pub fn kernel_kn(tri: &TriangleGeometry, x_n: f64, y: f64, n: u32) -> Result<C64> {
    point_eval(tri, x_n, y, n, |f| f.kernel(&y), |f, my| Ok(lower(&f.kernel(my)?)))
}

/// The quenching factor `exp(N (w^(1/alpha) - 1))` alone.
pub fn quench_factor(tri: &TriangleGeometry, x_n: f64, y: f64, n: u32) -> Result<C64> {
    point_eval(tri, x_n, y, n, |f| f.quench(&y), |f, my| Ok(lower(&f.quench(my)?)))
}

/// `d^k/dy^k K_N(x', x_n, y)` in closed form, `k <= 4`.
pub fn kernel_kn_dy(tri: &TriangleGeometry, x_n: f64, y: f64, n: u32, k: usize) -> Result<C64> {
    if k > 4 {
        return Err(Error::Unsupported(format!("kernel derivatives up to order 4, got {k}")));
    }
    point_eval(
        tri,
        x_n,
        y,
        n,
        |f| Ok(f.derivatives(&y, k)?[k]),
        |f, my| Ok(lower(&f.derivatives(my, k)?[k])),
    )
}

/// Edge values `g(y)` for `y` in `[-eps, eps]`, evaluable at any precision.
pub trait EdgeTrace {
    fn eval<T: Real>(&self, y: &T) -> Result<Complex<T>>;

    /// True when `g(-y) = conj g(y)`, which halves the work.
    fn reflection_symmetric(&self) -> bool {
        false
    }

    /// Called before a sum at `bits` of precision (or fewer).
    fn prepare(&self, _bits: u32) -> Result<()> {
        Ok(())
    }
}

/// Double-precision closure as an edge trace; higher working precisions
/// only see its double-precision values.
pub struct FnEdge<F>(pub F);

impl<F: Fn(f64) -> C64> EdgeTrace for FnEdge<F> {
    fn eval<T: Real>(&self, y: &T) -> Result<Complex<T>> {
        let v = (self.0)(y.to_f64());
        if v.re.is_finite() && v.im.is_finite() {
            Ok(lift(v))
        } else {
            Err(Error::NonFinite { location: y.to_f64() })
        }
    }
}

/// Constant edge values.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEdge(pub C64);

impl EdgeTrace for ConstantEdge {
    fn eval<T: Real>(&self, _y: &T) -> Result<Complex<T>> {
        Ok(lift(self.0))
    }

    fn reflection_symmetric(&self) -> bool {
        self.0.im == 0.0
    }
}

/// How the working precision of edge integrals is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// Double precision when it meets the accuracy target, MPFR otherwise.
    Auto,
    /// Always double precision, whatever the cancellation.
    Double,
    /// Fixed number of mantissa bits.
    Bits(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanParams {
    /// Increasing values of N.
    pub schedule: Vec<u32>,
    /// Relative change below which consecutive values count as settled.
    pub stop_threshold: f64,
    /// Number of consecutive values that must be settled.
    pub stop_window: usize,
    pub quad: QuadratureSpec,
    pub precision: Precision,
    /// Absolute accuracy asked of each edge integral; tightened to
    /// `1e-3 exp(-N)` so that the discretisation stays below the
    /// regularisation error.
    pub accuracy: f64,
    /// Refuse plans that need more bits than this.
    pub max_bits: u32,
}

impl Default for CarlemanParams {
    fn default() -> Self {
        CarlemanParams {
            schedule: (0..=8).map(|k| 1 << k).collect(),
            stop_threshold: 1e-4,
            stop_window: 3,
            quad: QuadratureSpec::default(),
            precision: Precision::Auto,
            accuracy: 1e-12,
            max_bits: 8192,
        }
    }
}

impl CarlemanParams {
    pub fn with_schedule(schedule: Vec<u32>) -> Self {
        CarlemanParams { schedule, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidArgument("schedule is empty".into()));
        }
        if self.schedule[0] < 1 || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "schedule must be strictly increasing with N >= 1, got {:?}",
                self.schedule
            )));
        }
        if !(self.stop_threshold > 0.0) {
            return Err(Error::InvalidArgument("stop threshold must be positive".into()));
        }
        if self.stop_window < 2 {
            return Err(Error::InvalidArgument("stop window must be at least 2".into()));
        }
        if !(self.accuracy > 0.0) {
            return Err(Error::InvalidArgument("accuracy must be positive".into()));
        }
        if let Precision::Bits(b) = self.precision {
            if b < 53 {
                return Err(Error::InvalidArgument(format!("precision of {b} bits is below double")));
            }
        }
        self.quad.validate()
    }
}

/// Discretisation chosen for one edge integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePlan {
    pub n: u32,
    /// Largest `ln |K_N|` on the edge.
    pub log_peak: f64,
    /// Clenshaw-Curtis size (the rule has `nodes + 1` points).
    pub nodes: usize,
    /// Working precision in bits; 53 means double.
    pub bits: u32,
    /// Absolute accuracy target.
    pub tau: f64,
}

impl EdgePlan {
    pub fn is_double(&self) -> bool {
        self.bits == 53
    }
}

fn log_abs_kernel(tri: &TriangleGeometry, x_n: f64, n: f64, y: C64) -> f64 {
    let i = C64::new(0.0, 1.0);
    let zeta = tri.top + i * y;
    let w = (zeta - tri.zeta0) / (x_n - tri.zeta0);
    let v = (w.ln() / tri.alpha).exp();
    n * (v.re - 1.0) - (2.0 * std::f64::consts::PI * (zeta - x_n).norm()).ln()
}

/// Chooses node count and precision for `int g K_N dy` to absolute
/// accuracy `tau`, assuming `|g| = O(1)` near the edge.
pub fn plan_edge(tri: &TriangleGeometry, x_n: f64, n: u32, params: &CarlemanParams) -> Result<EdgePlan> {
    tri.check_height(x_n)?;
    let nf = n as f64;
    let tau = params.accuracy.min(1e-3 * (-nf).exp());
    let eps = tri.epsilon;

    let samples = 512;
    let log_peak = (0..=samples)
        .map(|k| log_abs_kernel(tri, x_n, nf, C64::new(eps * k as f64 / samples as f64, 0.0)))
        .fold(f64::NEG_INFINITY, f64::max);

    // Bernstein ellipses around [-eps, eps]; the pole of the Cauchy factor
    // sits at y = i (t - x_n).
    let d = (tri.top - x_n) / eps;
    let rho_max = d + (d * d + 1.0).sqrt();
    let mut best = f64::INFINITY;
    let steps = 48;
    for s in 1..steps {
        let rho = 1.0 + (rho_max - 1.0) * s as f64 / steps as f64;
        let mut log_m = f64::NEG_INFINITY;
        let angles = 256;
        for a in 0..angles {
            let th = 2.0 * std::f64::consts::PI * (a as f64 + 0.5) / angles as f64;
            let x = 0.5 * (C64::from_polar(rho, th) + C64::from_polar(1.0 / rho, -th));
            log_m = log_m.max(log_abs_kernel(tri, x_n, nf, x * eps));
        }
        let bound = log_m + (64.0f64 / 15.0).ln() + eps.ln() - (rho * rho - 1.0).ln() - tau.ln();
        best = best.min(bound.max(0.0) / rho.ln());
    }
    let nodes = smooth_size(((1.15 * best).ceil() as usize + 8).max(16));

    let needed = log_peak.max(0.0) + eps.ln().max(0.0) + (nodes as f64).ln() - tau.ln();
    let fits_double = needed + 3.0 * std::f64::consts::LN_2 <= 52.0 * std::f64::consts::LN_2;
    let bits = match params.precision {
        Precision::Double => 53,
        Precision::Bits(b) => b,
        Precision::Auto if fits_double => 53,
        Precision::Auto => {
            let b = (needed / std::f64::consts::LN_2).ceil() as u32 + 32;
            b.div_ceil(64) * 64
        }
    };
    if bits > params.max_bits {
        return Err(Error::PrecisionBudget { needed: bits, limit: params.max_bits });
    }
    Ok(EdgePlan { n, log_peak, nodes, bits, tau })
}

/// Value and kernel mass of one edge integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeValue {
    pub value: C64,
    pub kernel_mass: C64,
    pub plan: EdgePlan,
}

/// Weighted contributions of the node `y` and its mirror `-y` (or of `y`
/// alone when `single`): `(sum w g K, sum w K)`.
fn node_pair<T: Real, G: EdgeTrace + ?Sized>(
    g: &G,
    frame: &KernelFrame<T>,
    y: &T,
    w: &T,
    single: bool,
) -> Result<(Complex<T>, Complex<T>)> {
    let finite = |v: &Complex<T>, at: &T| {
        if v.re.is_finite() && v.im.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { location: at.to_f64() })
        }
    };
    let k = frame.kernel(y)?;
    let gk = g.eval(y)? * k.clone();
    finite(&gk, y)?;
    if single {
        return Ok((gk * w.clone(), k * w.clone()));
    }
    // K(-y) = conj K(y) because the vertex lies on the real axis.
    let k_mirror = k.conj();
    let gk_mirror = if g.reflection_symmetric() {
        gk.conj()
    } else {
        let my = -y.clone();
        let v = g.eval(&my)? * k_mirror.clone();
        finite(&v, &my)?;
        v
    };
    Ok(((gk + gk_mirror) * w.clone(), (k + k_mirror) * w.clone()))
}

fn edge_sum_f64<G: EdgeTrace + ?Sized>(g: &G, tri: &TriangleGeometry, x_n: f64, plan: &EdgePlan) -> Result<(C64, C64)> {
    let rule = clenshaw_curtis::<f64>(plan.nodes);
    let frame = KernelFrame::<f64>::new(tri, x_n, plan.n as f64)?;
    let len = rule.len();
    let mut value = C64::zero();
    let mut mass = C64::zero();
    for i in 0..len.div_ceil(2) {
        let y = rule.nodes()[i] * tri.epsilon;
        let w = rule.weights()[i] * tri.epsilon;
        let (a, b) = node_pair(g, &frame, &y, &w, 2 * i + 1 == len)?;
        value += a;
        mass += b;
    }
    Ok((value, mass))
}

const TIER: u32 = 128;

/// Multiprecision sum. Each node is evaluated with just enough bits for its
/// term to be accurate to `tau / len` in absolute terms; the sum itself is
/// accumulated at the plan's precision.
fn edge_sum_mp<G: EdgeTrace + ?Sized>(g: &G, tri: &TriangleGeometry, x_n: f64, plan: &EdgePlan) -> Result<(C64, C64)> {
    g.prepare(plan.bits)?;
    with_precision(plan.bits, || {
        let rule = clenshaw_curtis::<Mp>(plan.nodes);
        let len = rule.len();
        let eps = Mp::from_f64(tri.epsilon);
        let nf = plan.n as f64;
        let slack = (len as f64).ln() - plan.tau.ln();
        let mut frames: Vec<Option<KernelFrame<Mp>>> = vec![None; plan.bits.div_ceil(TIER) as usize + 1];
        let mut value = Complex::<Mp>::zero();
        let mut mass = Complex::<Mp>::zero();
        for i in 0..len.div_ceil(2) {
            let y = rule.nodes()[i].clone() * &eps;
            let w = rule.weights()[i].clone() * &eps;
            let log_term = log_abs_kernel(tri, x_n, nf, C64::new(y.to_f64(), 0.0)) + w.to_f64().ln();
            let need = ((log_term.max(0.0) + slack) / std::f64::consts::LN_2).ceil() as u32 + 32;
            let tier = need.div_ceil(TIER).clamp(1, plan.bits.div_ceil(TIER));
            let bits = (tier * TIER).min(plan.bits);
            let (a, b) = with_precision(bits, || {
                let slot = &mut frames[tier as usize];
                if slot.is_none() {
                    *slot = Some(KernelFrame::<Mp>::new(tri, x_n, nf)?);
                }
                let frame = slot.as_ref().expect("just filled");
                node_pair(g, frame, &y.rounded(bits), &w.rounded(bits), 2 * i + 1 == len)
            })?;
            value = value + a;
            mass = mass + b;
        }
        Ok((lower(&value), lower(&mass)))
    })
}

/// `int_{-eps}^{eps} g(y) K_N(y) dy` at fixed N, discretised per [`plan_edge`].
pub fn continue_edge<G: EdgeTrace + ?Sized>(
    g: &G,
    tri: &TriangleGeometry,
    x_n: f64,
    n: u32,
    params: &CarlemanParams,
) -> Result<EdgeValue> {
    let plan = plan_edge(tri, x_n, n, params)?;
    continue_edge_with_plan(g, tri, x_n, plan)
}

pub fn continue_edge_with_plan<G: EdgeTrace + ?Sized>(
    g: &G,
    tri: &TriangleGeometry,
    x_n: f64,
    plan: EdgePlan,
) -> Result<EdgeValue> {
    let (value, kernel_mass) = if plan.is_double() {
        edge_sum_f64(g, tri, x_n, &plan)?
    } else {
        edge_sum_mp(g, tri, x_n, &plan)?
    };
    Ok(EdgeValue { value, kernel_mass, plan })
}

/// Per-N record of a schedule sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationDiagnostics {
    pub schedule: Vec<u32>,
    /// One value per N; NaN where the plan exceeded the precision budget.
    pub values: Vec<C64>,
    pub kernel_mass: Vec<C64>,
    pub converged: bool,
    /// Index of the reported value.
    pub chosen_index: usize,
    /// Relative change between the reported value and its predecessor.
    pub last_rel_change: f64,
    pub plans: Vec<Option<EdgePlan>>,
}

fn rel_change(a: C64, b: C64) -> f64 {
    (b - a).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// First index at which the last `window` values have settled to relative
/// changes below `threshold`.
pub fn stop_index(values: &[C64], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(2);
    (window - 1..values.len()).find(|&i| {
        (i + 2 - window..=i).all(|k| {
            let r = rel_change(values[k - 1], values[k]);
            r.is_finite() && r < threshold
        })
    })
}

/// Runs [`continue_edge`] over the schedule and applies the stop rule.
pub fn continue_limit<G: EdgeTrace + ?Sized>(
    g: &G,
    tri: &TriangleGeometry,
    x_n: f64,
    params: &CarlemanParams,
) -> Result<(C64, ContinuationDiagnostics)> {
    params.validate()?;
    tri.check_height(x_n)?;
    let nan = C64::new(f64::NAN, f64::NAN);
    let mut values = Vec::with_capacity(params.schedule.len());
    let mut masses = Vec::with_capacity(params.schedule.len());
    let mut plans = Vec::with_capacity(params.schedule.len());
    for &n in &params.schedule {
        match continue_edge(g, tri, x_n, n, params) {
            Ok(ev) => {
                values.push(ev.value);
                masses.push(ev.kernel_mass);
                plans.push(Some(ev.plan));
            }
            Err(Error::PrecisionBudget { .. }) => {
                values.push(nan);
                masses.push(nan);
                plans.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(settle(params, values, masses, plans))
}

/// Applies the stop rule to one value per scheduled N. Entries without a
/// plan (budget exceeded) are NaN.
pub fn settle(
    params: &CarlemanParams,
    values: Vec<C64>,
    kernel_mass: Vec<C64>,
    plans: Vec<Option<EdgePlan>>,
) -> (C64, ContinuationDiagnostics) {
    let stop = stop_index(&values, params.stop_threshold, params.stop_window);
    let chosen_index = match stop {
        Some(i) => i,
        None => values.iter().rposition(|v| v.re.is_finite()).unwrap_or(values.len() - 1),
    };
    let last_rel_change = if chosen_index == 0 {
        f64::NAN
    } else {
        rel_change(values[chosen_index - 1], values[chosen_index])
    };
    let chosen = values[chosen_index];
    let diag = ContinuationDiagnostics {
        schedule: params.schedule.clone(),
        values,
        kernel_mass,
        converged: stop.is_some(),
        chosen_index,
        last_rel_change,
        plans,
    };
    (chosen, diag)
}
