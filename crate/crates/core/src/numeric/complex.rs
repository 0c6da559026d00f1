//! Elementary complex functions over any [`Real`].
//!
//! `num_complex` only offers these for `Float` types, which MPFR numbers are
//! not, so the handful we need are written out here.

use num_complex::Complex;
use num_traits::{One, Zero};

use super::Real;

pub type C64 = Complex<f64>;

pub fn lift<T: Real>(z: C64) -> Complex<T> {
    Complex::new(T::from_f64(z.re), T::from_f64(z.im))
}

pub fn lower<T: Real>(z: &Complex<T>) -> C64 {
    Complex::new(z.re.to_f64(), z.im.to_f64())
}

pub fn cabs<T: Real>(z: &Complex<T>) -> T {
    z.re.hypot(&z.im)
}

pub fn cexp<T: Real>(z: &Complex<T>) -> Complex<T> {
    let m = z.re.exp();
    let (s, c) = z.im.sin_cos();
    Complex::new(m.clone() * c, m * s)
}

/// Principal logarithm, imaginary part in (-pi, pi].
pub fn cln<T: Real>(z: &Complex<T>) -> Complex<T> {
    Complex::new(cabs(z).ln(), z.im.atan2(&z.re))
}

/// Principal square root.
pub fn csqrt<T: Real>(z: &Complex<T>) -> Complex<T> {
    if z.re.is_zero() && z.im.is_zero() {
        return Complex::zero();
    }
    let r = cabs(z);
    let two = T::from_f64(2.0);
    if z.re >= T::zero() {
        let s = ((r + &z.re) / &two).sqrt();
        let im = z.im.clone() / (s.clone() * &two);
        Complex::new(s, im)
    } else {
        let s = ((r - &z.re) / &two).sqrt();
        let re = z.im.abs() / (s.clone() * &two);
        let im = if z.im < T::zero() { -s } else { s };
        Complex::new(re, im)
    }
}

/// Integer power by repeated squaring; negative exponents invert.
pub fn cpowi<T: Real>(z: &Complex<T>, k: i32) -> Complex<T> {
    let mut base = z.clone();
    let mut e = k.unsigned_abs();
    let mut acc = Complex::<T>::one();
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base.clone();
        }
        base = base.clone() * base;
        e >>= 1;
    }
    if k < 0 {
        Complex::<T>::one() / acc
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{with_precision, Mp};

    #[test]
    fn f64_matches_num_complex() {
        for &(re, im) in &[(0.3, 0.4), (-1.2, 0.5), (-2.0, -0.1), (0.0, -3.0), (5.0, 0.0)] {
            let z = C64::new(re, im);
            assert!((cexp(&z) - z.exp()).norm() < 1e-13);
            assert!((cln(&z) - z.ln()).norm() < 1e-13);
            assert!((csqrt(&z) - z.sqrt()).norm() < 1e-13);
            assert!((cpowi(&z, 5) - z.powi(5)).norm() < 1e-11);
            assert!((cpowi(&z, -2) - z.powi(-2)).norm() < 1e-12);
        }
    }

    #[test]
    fn mp_log_exp_inverse() {
        with_precision(256, || {
            let z: Complex<Mp> = lift(C64::new(-0.7, 1.9));
            let back = cexp(&cln(&z));
            let err = cabs(&(back - z)).to_f64();
            assert!(err < 1e-70, "{err}");
        });
    }

    #[test]
    fn negative_real_axis_is_on_upper_side() {
        let z = C64::new(-4.0, 0.0);
        assert!((cln(&z).im - std::f64::consts::PI).abs() < 1e-15);
        assert!((csqrt(&z) - C64::new(0.0, 2.0)).norm() < 1e-15);
    }
}
