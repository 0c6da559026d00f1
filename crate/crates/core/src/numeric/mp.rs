use std::cell::Cell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};
use std::sync::LazyLock;

use num_traits::{Num, One, Zero};
use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;

use super::{Real, TableCache};

thread_local! {
    static PRECISION: Cell<u32> = const { Cell::new(128) };
}

/// Current working precision (mantissa bits) for [`Mp`] on this thread.
pub fn working_precision() -> u32 {
    PRECISION.with(|p| p.get())
}

/// Runs `f` with the [`Mp`] working precision set to `bits`, restoring the
/// previous setting afterwards (also on unwind).
pub fn with_precision<R>(bits: u32, f: impl FnOnce() -> R) -> R {
    struct Restore(u32);
    impl Drop for Restore {
        fn drop(&mut self) {
            PRECISION.with(|p| p.set(self.0));
        }
    }
    let bits = bits.max(rug::float::prec_min());
    let _guard = Restore(PRECISION.with(|p| p.replace(bits)));
    f()
}

/// MPFR float at the thread's working precision.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct Mp(Float);

impl Mp {
    pub fn from_float(f: Float) -> Self {
        Mp(f)
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    /// Copy rounded to `bits` of mantissa.
    pub fn rounded(&self, bits: u32) -> Self {
        Mp(Float::with_val(bits.max(rug::float::prec_min()), &self.0))
    }

    fn new_val<V>(v: V) -> Self
    where
        Float: rug::Assign<V>,
    {
        Mp(Float::with_val(working_precision(), v))
    }
}

impl fmt::Debug for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mp({:e}, {} bits)", self.0.to_f64(), self.0.prec())
    }
}

impl fmt::Display for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0.to_f64(), f)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident) => {
        impl $tr for Mp {
            type Output = Mp;
            fn $m(self, rhs: Mp) -> Mp {
                Mp($tr::$m(self.0, &rhs.0))
            }
        }
        impl<'a> $tr<&'a Mp> for Mp {
            type Output = Mp;
            fn $m(self, rhs: &'a Mp) -> Mp {
                Mp($tr::$m(self.0, &rhs.0))
            }
        }
        impl $tr<f64> for Mp {
            type Output = Mp;
            fn $m(self, rhs: f64) -> Mp {
                Mp($tr::$m(self.0, rhs))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Rem for Mp {
    type Output = Mp;
    fn rem(self, rhs: Mp) -> Mp {
        let q = (self.0.clone() / &rhs.0).trunc();
        Mp(self.0 - q * &rhs.0)
    }
}

impl Neg for Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp(-self.0)
    }
}

impl Zero for Mp {
    fn zero() -> Self {
        Mp::new_val(0)
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for Mp {
    fn one() -> Self {
        Mp::new_val(1)
    }
}

impl Num for Mp {
    type FromStrRadixErr = rug::float::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        let parsed = Float::parse_radix(s, radix as i32)?;
        Ok(Mp::new_val(parsed))
    }
}

static MP_TABLES: LazyLock<TableCache<Mp>> = LazyLock::new(Default::default);

impl Real for Mp {
    fn from_f64(x: f64) -> Self {
        Mp::new_val(x)
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }
    fn pi() -> Self {
        Mp::new_val(Constant::Pi)
    }
    fn bits() -> u32 {
        working_precision()
    }
    fn exp(&self) -> Self {
        Mp(self.0.clone().exp())
    }
    fn ln(&self) -> Self {
        Mp(self.0.clone().ln())
    }
    fn sqrt(&self) -> Self {
        Mp(self.0.clone().sqrt())
    }
    fn sin_cos(&self) -> (Self, Self) {
        let (s, c) = self.0.clone().sin_cos(Float::new(self.0.prec()));
        (Mp(s), Mp(c))
    }
    fn atan2(&self, x: &Self) -> Self {
        Mp(self.0.clone().atan2(&x.0))
    }
    fn abs(&self) -> Self {
        Mp(self.0.clone().abs())
    }
    fn hypot(&self, other: &Self) -> Self {
        Mp(self.0.clone().hypot(&other.0))
    }
    fn powf(&self, e: &Self) -> Self {
        Mp(self.0.clone().pow(&e.0))
    }
    fn powi(&self, k: i32) -> Self {
        Mp(self.0.clone().pow(k))
    }
    fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
    fn tables() -> &'static TableCache<Self> {
        &MP_TABLES
    }
}

impl PartialEq<f64> for Mp {
    fn eq(&self, other: &f64) -> bool {
        self.0 == *other
    }
}

impl PartialOrd<f64> for Mp {
    fn partial_cmp(&self, other: &f64) -> Option<Ordering> {
        self.0.partial_cmp(other)
    }
}
