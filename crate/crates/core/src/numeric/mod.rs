//! Scalar abstraction shared by the double-precision and MPFR-backed code paths.
//!
//! Everything numerically delicate (the Carleman kernel, quadrature rules, the
//! catalog solutions) is written once against [`Real`] and instantiated either
//! with `f64` or with [`Mp`], whose precision is taken from a thread-local
//! setting installed by [`with_precision`].

mod complex;
mod mp;

pub use complex::{cabs, cexp, cln, csqrt, cpowi, lift, lower, C64};
pub use mp::{with_precision, working_precision, Mp};

use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex};

use num_traits::Num;

/// Cache of precomputed node/weight tables, keyed by (kind, size, bits).
pub type TableCache<T> = Mutex<HashMap<(u8, usize, u32), Arc<Vec<Vec<T>>>>>;

pub trait Real:
    Num
    + Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn pi() -> Self;
    /// Mantissa bits of the current working precision.
    fn bits() -> u32;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sin_cos(&self) -> (Self, Self);
    fn atan2(&self, x: &Self) -> Self;
    fn abs(&self) -> Self;
    fn hypot(&self, other: &Self) -> Self;
    fn powf(&self, e: &Self) -> Self;
    fn powi(&self, k: i32) -> Self;
    fn is_finite(&self) -> bool;
    fn tables() -> &'static TableCache<Self>;

    fn cos(&self) -> Self {
        self.sin_cos().1
    }
    fn sin(&self) -> Self {
        self.sin_cos().0
    }
    /// Relative spacing of representable numbers at the working precision.
    /// `2^-bits`, in `Self` so that it does not underflow at high precision.
    fn epsilon() -> Self {
        Self::from_f64(2.0).powi(-(Self::bits() as i32))
    }
    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }
}

static F64_TABLES: std::sync::LazyLock<TableCache<f64>> = std::sync::LazyLock::new(Default::default);

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
    fn bits() -> u32 {
        53
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sin_cos(&self) -> (Self, Self) {
        f64::sin_cos(*self)
    }
    fn atan2(&self, x: &Self) -> Self {
        f64::atan2(*self, *x)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn hypot(&self, other: &Self) -> Self {
        f64::hypot(*self, *other)
    }
    fn powf(&self, e: &Self) -> Self {
        f64::powf(*self, *e)
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn tables() -> &'static TableCache<Self> {
        &F64_TABLES
    }
}

/// Fetches a cached table or builds and stores it.
pub(crate) fn cached_table<T: Real>(
    kind: u8,
    size: usize,
    build: impl FnOnce() -> Vec<Vec<T>>,
) -> Arc<Vec<Vec<T>>> {
    let key = (kind, size, T::bits());
    if let Some(t) = T::tables().lock().expect("table cache poisoned").get(&key) {
        return t.clone();
    }
    let table = Arc::new(build());
    T::tables()
        .lock()
        .expect("table cache poisoned")
        .entry(key)
        .or_insert(table)
        .clone()
}
