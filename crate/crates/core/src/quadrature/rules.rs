//! Node/weight tables on [-1, 1], cached per (size, precision).

use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;

use crate::numeric::{cached_table, Real};

const KIND_GAUSS: u8 = 1;
const KIND_CLENSHAW: u8 = 2;
const KIND_CIRCLE: u8 = 3;

/// Interpolatory rule on [-1, 1]. Nodes are sorted in decreasing order, so
/// node `i` and node `len - 1 - i` are mirror images.
#[derive(Debug, Clone)]
pub struct Rule<T> {
    table: Arc<Vec<Vec<T>>>,
}

impl<T: Real> Rule<T> {
    pub fn nodes(&self) -> &[T] {
        &self.table[0]
    }

    pub fn weights(&self) -> &[T] {
        &self.table[1]
    }

    pub fn len(&self) -> usize {
        self.table[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integrates `f` over [a, b].
    pub fn integrate<V, F>(&self, a: &T, b: &T, mut f: F) -> V
    where
        V: Zero + std::ops::Mul<T, Output = V>,
        F: FnMut(&T) -> V,
    {
        let half = (b.clone() - a) / 2.0;
        let mid = (b.clone() + a) / 2.0;
        let mut acc = V::zero();
        for (x, w) in self.nodes().iter().zip(self.weights()) {
            let y = mid.clone() + half.clone() * x;
            acc = acc + f(&y) * (w.clone() * &half);
        }
        acc
    }
}

/// Gauss-Legendre rule with `m` nodes.
pub fn gauss_legendre<T: Real>(m: usize) -> Rule<T> {
    assert!(m >= 1, "Gauss-Legendre rule needs at least one node");
    let table = cached_table::<T>(KIND_GAUSS, m, || build_gauss(m));
    Rule { table }
}

fn legendre<T: Real>(m: usize, x: &T) -> (T, T) {
    // Returns (P_m(x), P_m'(x)).
    let mut p0 = T::one();
    let mut p1 = x.clone();
    for k in 2..=m {
        let kf = k as f64;
        let p2 = (x.clone() * &p1 * (2.0 * kf - 1.0) - p0 * (kf - 1.0)) / kf;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (T::one(), T::zero());
    }
    let dp = (x.clone() * &p1 - p0) * (m as f64) / (x.clone() * x - 1.0);
    (p1, dp)
}

fn build_gauss<T: Real>(m: usize) -> Vec<Vec<T>> {
    let mut nodes = vec![T::zero(); m];
    let mut weights = vec![T::zero(); m];
    let tol = T::epsilon() * 8.0;
    for i in 0..m.div_ceil(2) {
        let mut xf = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..3 {
            let (p, dp) = legendre::<f64>(m, &xf);
            xf -= p / dp;
        }
        let mut x = T::from_f64(xf);
        let mut dp = T::one();
        for _ in 0..64 {
            let (p, d) = legendre(m, &x);
            let dx = p / &d;
            x = x - &dx;
            dp = d;
            if dx.abs() <= tol {
                let (_, d) = legendre(m, &x);
                dp = d;
                break;
            }
        }
        let w = T::from_f64(2.0) / ((T::one() - x.clone() * &x) * dp.clone() * dp);
        nodes[i] = x.clone();
        nodes[m - 1 - i] = -x;
        weights[i] = w.clone();
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = T::zero();
    }
    vec![nodes, weights]
}

/// Smallest even 5-smooth integer that is at least `n`.
pub fn smooth_size(n: usize) -> usize {
    let mut k = n.max(2);
    loop {
        if k % 2 == 0 {
            let mut r = k;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return k;
            }
        }
        k += 1;
    }
}

/// Clenshaw-Curtis rule on the `n + 1` Chebyshev extreme points.
/// `n` must be an even 5-smooth number (see [`smooth_size`]).
pub fn clenshaw_curtis<T: Real>(n: usize) -> Rule<T> {
    assert!(n >= 2 && n % 2 == 0, "Clenshaw-Curtis size must be even");
    assert_eq!(smooth_size(n), n, "Clenshaw-Curtis size must be 5-smooth");
    let table = cached_table::<T>(KIND_CLENSHAW, n, || build_clenshaw(n));
    Rule { table }
}

fn build_clenshaw<T: Real>(n: usize) -> Vec<Vec<T>> {
    // cos(j pi / n) for j <= n; everything else follows by symmetry.
    let half = n / 2;
    let mut c = vec![T::zero(); n + 1];
    let roots = unit_roots::<T>(2 * n, half + 1);
    for (j, r) in roots.into_iter().enumerate() {
        c[j] = r.re;
    }
    for j in half + 1..=n {
        c[j] = -c[n - j].clone();
    }
    // exp(-i pi j / n) for any j.
    let unit = |j: usize| -> Complex<T> {
        let j = j % (2 * n);
        if j <= n {
            Complex::new(c[j].clone(), -c[half.abs_diff(j)].clone())
        } else {
            let k = 2 * n - j;
            Complex::new(c[k].clone(), c[half.abs_diff(k)].clone())
        }
    };

    // The weights are n^-1 X_k with X_k = sum_m e_m x_m cos(pi m k / M),
    // M = n/2, x_m = 2/(1 - 4m^2), e_m = 1 at the ends and 2 inside: the
    // DFT of the even extension y of x, of length n. y is real, so it is
    // packed into z_j = y_2j + i y_2j+1 and transformed at length M.
    let m = half;
    let x = |k: usize| T::from_f64(2.0) / T::from_f64(1.0 - 4.0 * (k * k) as f64);
    let y = |k: usize| if k <= m { x(k) } else { x(n - k) };
    let z: Vec<Complex<T>> = (0..m).map(|j| Complex::new(y(2 * j), y(2 * j + 1))).collect();
    let twiddles: Vec<Complex<T>> = (0..m).map(|j| unit(4 * j)).collect();
    let spec = fft(&z, &twiddles);
    let half_t = T::from_f64(0.5);
    let scale = T::one() / T::from_usize(n);
    let mut weights = vec![T::zero(); n + 1];
    for k in 0..=m {
        let a = spec[k % m].clone();
        let b = spec[(m - k % m) % m].conj();
        let even = (a.clone() + b.clone()) * half_t.clone();
        // (a - b) / (2i)
        let d = (a - b) * half_t.clone();
        let odd = Complex::new(d.im, -d.re);
        let xk = even + unit(2 * k) * odd;
        let w = xk.re * &scale;
        weights[n - k] = w.clone();
        weights[k] = w;
    }
    weights[0] = weights[0].clone() / 2.0;
    weights[n] = weights[n].clone() / 2.0;
    vec![c, weights]
}

/// Given values `f_j` at the nodes `x_j` of [`clenshaw_curtis`]`(n)`,
/// returns `int_{x_j}^{1} p(s) ds` for the polynomial interpolant `p`.
pub fn clenshaw_cumulative<T: Real>(n: usize, values: &[Complex<T>]) -> Vec<Complex<T>> {
    assert_eq!(values.len(), n + 1, "one value per node");
    let rule = clenshaw_curtis::<T>(n);
    let len = 2 * n;
    let twiddles: Vec<Complex<T>> = unit_roots::<T>(len, len).into_iter().map(|z| z.conj()).collect();
    // 2 sum'' v_j cos(pi j k / n) for k <= n, via the even extension.
    let dct = |v: &[Complex<T>]| -> Vec<Complex<T>> {
        let ext: Vec<Complex<T>> = (0..len).map(|j| v[if j <= n { j } else { len - j }].clone()).collect();
        let mut out = fft(&ext, &twiddles);
        out.truncate(n + 1);
        out
    };
    // Chebyshev coefficients of p.
    let inv_n = T::one() / T::from_usize(n);
    let mut a: Vec<Complex<T>> = dct(values).into_iter().map(|x| x * inv_n.clone()).collect();
    let two = T::from_f64(2.0);
    a[0] = a[0].clone() / two.clone();
    a[n] = a[n].clone() / two.clone();
    let coef = |k: usize| if k <= n { a[k].clone() } else { Complex::zero() };
    // Coefficients of the antiderivative, degree n + 1.
    let mut b = vec![Complex::<T>::zero(); n + 2];
    b[1] = coef(0) - coef(2) / two.clone();
    for (k, bk) in b.iter_mut().enumerate().skip(2) {
        *bk = (coef(k - 1) - coef(k + 1)) / T::from_usize(2 * k);
    }
    let top = b[n + 1].clone();
    b.truncate(n + 1);
    b[n] = b[n].clone() * two.clone();
    let sums = dct(&b);
    // T_{n+1}(x_j) = (-1)^j x_j
    let f: Vec<Complex<T>> = sums
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            let x = rule.nodes()[j].clone();
            let tail = top.clone() * if j % 2 == 0 { x } else { -x };
            s / two.clone() + tail
        })
        .collect();
    f.iter().map(|fj| f[0].clone() - fj.clone()).collect()
}

/// `exp(2 pi i j / len)` for `j < count`, as products of two tables of
/// about `sqrt(count)` directly evaluated roots.
fn unit_roots<T: Real>(len: usize, count: usize) -> Vec<Complex<T>> {
    let block = (count as f64).sqrt().ceil().max(1.0) as usize;
    let angle = |j: usize| {
        let (s, c) = (T::pi() * 2.0 * T::from_usize(j) / T::from_usize(len)).sin_cos();
        Complex::new(c, s)
    };
    let fine: Vec<Complex<T>> = (0..block).map(angle).collect();
    let coarse: Vec<Complex<T>> = (0..count.div_ceil(block)).map(|k| angle(k * block)).collect();
    (0..count).map(|j| coarse[j / block].clone() * fine[j % block].clone()).collect()
}

/// Mixed-radix DFT, `out_k = sum_j x_j w^(jk)` with `twiddles[j] = w^j`.
pub(crate) fn fft<T: Real>(x: &[Complex<T>], twiddles: &[Complex<T>]) -> Vec<Complex<T>> {
    let len = x.len();
    assert_eq!(twiddles.len(), len);
    let mut out = vec![Complex::<T>::zero(); len];
    fft_rec(x, 0, 1, len, twiddles, 1, &mut out);
    out
}

fn fft_rec<T: Real>(
    x: &[Complex<T>],
    offset: usize,
    stride: usize,
    len: usize,
    tw: &[Complex<T>],
    tw_step: usize,
    out: &mut [Complex<T>],
) {
    if len == 1 {
        out[0] = x[offset].clone();
        return;
    }
    let p = (2..=len).find(|p| len % p == 0).unwrap_or(len);
    let m = len / p;
    let mut subs: Vec<Vec<Complex<T>>> = Vec::with_capacity(p);
    for r in 0..p {
        let mut sub = vec![Complex::<T>::zero(); m];
        fft_rec(x, offset + r * stride, stride * p, m, tw, tw_step * p, &mut sub);
        subs.push(sub);
    }
    let root = |e: usize| &tw[(e % len) * tw_step];
    let half = T::from_f64(0.5);
    for k in 0..m {
        // t_r = sub_r[k] w^(r k), then a length-p DFT of the t_r.
        let t: Vec<Complex<T>> = (0..p)
            .map(|r| {
                let v = std::mem::replace(&mut subs[r][k], Complex::zero());
                if r == 0 || k == 0 { v } else { v * root(r * k).clone() }
            })
            .collect();
        match p {
            2 => {
                out[k] = t[0].clone() + t[1].clone();
                out[k + m] = t[0].clone() - t[1].clone();
            }
            3 => {
                // w^m = -1/2 - i sqrt(3)/2 up to the sign of the transform.
                let s3 = root(m).im.clone();
                let sum = t[1].clone() + t[2].clone();
                let diff = t[1].clone() - t[2].clone();
                let base = t[0].clone() - sum.clone() * half.clone();
                let rot = Complex::new(-(diff.im.clone() * &s3), diff.re * &s3);
                out[k] = t[0].clone() + sum;
                out[k + m] = base.clone() + rot.clone();
                out[k + 2 * m] = base - rot;
            }
            _ => {
                for q in 0..p {
                    let mut acc = t[0].clone();
                    for (r, tr) in t.iter().enumerate().skip(1) {
                        acc = acc + tr.clone() * root(r * q * m).clone();
                    }
                    out[k + q * m] = acc;
                }
            }
        }
    }
}

/// Equispaced angles on the circle: returns (cos, sin) of `2 pi j / m`.
pub fn circle_points<T: Real>(m: usize) -> Arc<Vec<Vec<T>>> {
    cached_table::<T>(KIND_CIRCLE, m, || {
        let two_pi = T::pi() * 2.0;
        let mut cos = Vec::with_capacity(m);
        let mut sin = Vec::with_capacity(m);
        for j in 0..m {
            let (s, c) = (two_pi.clone() * T::from_usize(j) / T::from_usize(m)).sin_cos();
            cos.push(c);
            sin.push(s);
        }
        vec![cos, sin]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{with_precision, Mp};
    use num_traits::One;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        for m in [1usize, 2, 5, 16, 64] {
            let r = gauss_legendre::<f64>(m);
            for deg in 0..(2 * m) {
                let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
                let got: f64 = r.integrate(&-1.0, &1.0, |x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "m={m} deg={deg}");
            }
        }
    }

    #[test]
    fn gauss_nodes_are_mirrored() {
        let r = gauss_legendre::<f64>(9);
        for i in 0..9 {
            assert!((r.nodes()[i] + r.nodes()[8 - i]).abs() < 1e-15);
            assert!(r.nodes()[i] > r.nodes().get(i + 1).copied().unwrap_or(-2.0));
        }
    }

    #[test]
    fn clenshaw_small_cases_match_closed_form() {
        let r = clenshaw_curtis::<f64>(2);
        let w = r.weights();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 4.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn clenshaw_converges_on_smooth_function() {
        for n in [30usize, 60, 90] {
            let r = clenshaw_curtis::<f64>(n);
            let got: f64 = r.integrate(&0.0, &2.0, |x| x.exp());
            assert!((got - (2f64.exp() - 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn clenshaw_high_precision() {
        let err = with_precision(400, || {
            let r = clenshaw_curtis::<Mp>(180);
            let got: Mp = r.integrate(&Mp::from_f64(-1.0), &Mp::from_f64(1.0), |x| x.exp());
            let e = Mp::from_f64(1.0).exp();
            let exact = e.clone() - Mp::one() / e;
            (got - exact).abs().to_f64()
        });
        assert!(err < 1e-110, "{err}");
    }

    #[test]
    fn fft_matches_naive_dft() {
        let len = 60;
        let x: Vec<Complex<f64>> = (0..len)
            .map(|j| Complex::new((j as f64 * 0.37).sin(), (j as f64 * 0.11).cos()))
            .collect();
        let tw: Vec<Complex<f64>> = (0..len)
            .map(|j| Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * j as f64 / len as f64))
            .collect();
        let fast = fft(&x, &tw);
        for k in 0..len {
            let mut acc = Complex::new(0.0, 0.0);
            for j in 0..len {
                acc += x[j] * tw[(j * k) % len];
            }
            assert!((acc - fast[k]).norm() < 1e-11);
        }
    }

    #[test]
    fn cumulative_integrals() {
        let n = 30;
        let r = clenshaw_curtis::<f64>(n);
        let lift_all = |f: &dyn Fn(f64) -> f64| -> Vec<Complex<f64>> {
            r.nodes().iter().map(|x| Complex::new(f(*x), 0.0)).collect()
        };
        let ones = clenshaw_cumulative(n, &lift_all(&|_| 1.0));
        let cubes = clenshaw_cumulative(n, &lift_all(&|x| x.powi(3)));
        let exps = clenshaw_cumulative(n, &lift_all(&f64::exp));
        for (j, x) in r.nodes().iter().enumerate() {
            assert!((ones[j].re - (1.0 - x)).abs() < 1e-14);
            assert!((cubes[j].re - (1.0 - x.powi(4)) / 4.0).abs() < 1e-14);
            assert!((exps[j].re - (1f64.exp() - x.exp())).abs() < 1e-14);
        }
        let total: f64 = r.weights().iter().zip(r.nodes()).map(|(w, x)| w * x.exp()).sum();
        assert!((exps[n].re - total).abs() < 1e-14);
    }

    #[test]
    fn cumulative_high_precision() {
        let err = with_precision(300, || {
            let n = 120;
            let r = clenshaw_curtis::<Mp>(n);
            let v: Vec<Complex<Mp>> = r.nodes().iter().map(|x| Complex::new(x.sin(), x.cos())).collect();
            let c = clenshaw_cumulative(n, &v);
            let one = Mp::one();
            r.nodes()
                .iter()
                .zip(&c)
                .map(|(x, cj)| {
                    let re = x.cos() - one.cos() - &cj.re;
                    let im = one.sin() - x.sin() - &cj.im;
                    re.abs().to_f64().max(im.abs().to_f64())
                })
                .fold(0.0, f64::max)
        });
        assert!(err < 1e-80, "{err}");
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(14), 16);
        assert_eq!(smooth_size(31), 32);
        assert_eq!(smooth_size(97), 100);
        assert_eq!(smooth_size(11000), 11250);
    }
}
