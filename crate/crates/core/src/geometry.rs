//! Cylindrical domains `{x' in B, b(x') < x_n < t(x')}` and the complex
//! triangle attached to each base point.

use std::f64::consts::FRAC_2_PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Cross-section `B` of the cylinder.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseShape {
    /// Open interval `(a, b)`, used when `n = 2`.
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box `prod (lo_i, hi_i)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl BaseShape {
    pub fn dim(&self) -> usize {
        match self {
            BaseShape::Interval { .. } => 1,
            BaseShape::Ball { center, .. } => center.len(),
            BaseShape::Box { lo, .. } => lo.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            BaseShape::Interval { a, b } => a.is_finite() && b.is_finite() && a < b,
            BaseShape::Ball { center, radius } => {
                !center.is_empty() && center.iter().all(|c| c.is_finite()) && radius.is_finite() && *radius > 0.0
            }
            BaseShape::Box { lo, hi } => {
                !lo.is_empty()
                    && lo.len() == hi.len()
                    && lo.iter().zip(hi).all(|(l, h)| l.is_finite() && h.is_finite() && l < h)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!("empty or unbounded base {self:?}")))
        }
    }

    /// Bounding box of the closed base.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            BaseShape::Interval { a, b } => (vec![*a], vec![*b]),
            BaseShape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            BaseShape::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Signed distance to the boundary: positive inside, negative outside
    /// (outside a box this is only the largest face violation, which is
    /// enough to decide membership).
    pub fn signed_distance(&self, xp: &[f64]) -> f64 {
        match self {
            BaseShape::Interval { a, b } => (xp[0] - a).min(b - xp[0]),
            BaseShape::Ball { center, radius } => {
                let r: f64 = xp.iter().zip(center).map(|(x, c)| (x - c).powi(2)).sum::<f64>().sqrt();
                radius - r
            }
            BaseShape::Box { lo, hi } => xp
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| (x - l).min(h - x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, xp: &[f64]) -> bool {
        xp.len() == self.dim() && self.signed_distance(xp) > 0.0
    }

    pub fn contains_closed(&self, xp: &[f64]) -> bool {
        xp.len() == self.dim() && self.signed_distance(xp) >= 0.0
    }
}

type Field = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar function of `x'` describing the bottom or top of the cylinder.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    /// `offset + slope . x'`
    Affine { offset: f64, slope: Vec<f64> },
    Custom { value: Field, gradient: Option<GradField> },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::Affine { offset, slope } => write!(f, "Affine({offset}, {slope:?})"),
            Profile::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Profile {
    pub fn custom(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Custom { value: Arc::new(value), gradient: None }
    }

    pub fn custom_with_gradient(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Profile::Custom { value: Arc::new(value), gradient: Some(Arc::new(gradient)) }
    }

    pub fn value(&self, xp: &[f64]) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Affine { offset, slope } => offset + slope.iter().zip(xp).map(|(s, x)| s * x).sum::<f64>(),
            Profile::Custom { value, .. } => value(xp),
        }
    }

    pub fn gradient(&self, xp: &[f64]) -> Option<Vec<f64>> {
        match self {
            Profile::Constant(_) => Some(vec![0.0; xp.len()]),
            Profile::Affine { slope, .. } => Some(slope.clone()),
            Profile::Custom { gradient, .. } => gradient.as_ref().map(|g| g(xp)),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Profile::Constant(_) => true,
            Profile::Affine { slope, .. } => slope.iter().all(|s| *s == 0.0),
            Profile::Custom { .. } => false,
        }
    }
}

/// `X = {x' in B, b(x') < x_n < t(x')}` in `R^n`.
#[derive(Debug, Clone)]
pub struct CylinderDomain {
    dim: usize,
    base: BaseShape,
    bottom: Profile,
    top: Profile,
}

/// Points per axis of the grid on which `t > b` is checked.
const CHECK_POINTS: usize = 64;
/// Cap on the total size of that grid.
const CHECK_BUDGET: usize = 1 << 20;

impl CylinderDomain {
    pub fn new(dim: usize, base: BaseShape, bottom: Profile, top: Profile) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Geometry(format!("dimension must be at least 2, got {dim}")));
        }
        base.validate()?;
        if base.dim() != dim - 1 {
            return Err(Error::Dimension { expected: dim - 1, got: base.dim() });
        }
        if dim == 2 && !matches!(base, BaseShape::Interval { .. }) {
            return Err(Error::Geometry("a two-dimensional domain needs an interval base".into()));
        }
        if dim > 2 && matches!(base, BaseShape::Interval { .. }) {
            return Err(Error::Geometry("an interval base only fits n = 2".into()));
        }
        for prof in [&bottom, &top] {
            if let Profile::Affine { slope, .. } = prof {
                if slope.len() != dim - 1 {
                    return Err(Error::Dimension { expected: dim - 1, got: slope.len() });
                }
            }
        }
        let domain = CylinderDomain { dim, base, bottom, top };
        domain.check_heights()?;
        Ok(domain)
    }

    /// Flat-topped cylinder over `base` with constant bottom and top.
    pub fn flat(base: BaseShape, bottom: f64, top: f64) -> Result<Self> {
        let dim = base.dim() + 1;
        CylinderDomain::new(dim, base, Profile::Constant(bottom), Profile::Constant(top))
    }

    fn check_heights(&self) -> Result<()> {
        let (lo, hi) = self.base.bounding_box();
        let d = lo.len();
        let mut per_axis = CHECK_POINTS;
        while per_axis > 2 && per_axis.pow(d as u32) > CHECK_BUDGET {
            per_axis /= 2;
        }
        let total = per_axis.pow(d as u32);
        let mut p = vec![0.0; d];
        for idx in 0..total {
            let mut r = idx;
            for k in 0..d {
                let i = r % per_axis;
                r /= per_axis;
                p[k] = lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64;
            }
            if !self.base.contains_closed(&p) {
                continue;
            }
            let (b, t) = (self.bottom.value(&p), self.top.value(&p));
            if !(t > b) {
                return Err(Error::Geometry(format!(
                    "top {t} does not exceed bottom {b} at x' = {p:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> &BaseShape {
        &self.base
    }

    pub fn bottom(&self) -> &Profile {
        &self.bottom
    }

    pub fn top(&self) -> &Profile {
        &self.top
    }

    /// Whether `x` lies in the open cylinder.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim {
            return false;
        }
        let (xp, xn) = x.split_at(self.dim - 1);
        self.base.contains(xp) && self.bottom.value(xp) < xn[0] && xn[0] < self.top.value(xp)
    }

    /// Half-length of the edge of the triangle over `x'`.
    pub fn epsilon(&self, xp: &[f64]) -> Result<f64> {
        match &self.base {
            BaseShape::Interval { a, b } => {
                if xp.len() != 1 {
                    return Err(Error::Dimension { expected: 1, got: xp.len() });
                }
                epsilon_cone(xp[0], *a, *b)
            }
            base => epsilon_distance(xp, base),
        }
    }
}

/// Half-width of the largest interval centred at `x1` inside `(a, b)`.
pub fn epsilon_cone(x1: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < x1 && x1 < b) {
        return Err(Error::Domain(format!("x1 = {x1} is not inside ({a}, {b})")));
    }
    Ok((b - a) / 2.0 - (x1 - (a + b) / 2.0).abs())
}

/// Euclidean distance from `xp` to the boundary of `base`.
pub fn epsilon_distance(xp: &[f64], base: &BaseShape) -> Result<f64> {
    if xp.len() != base.dim() {
        return Err(Error::Dimension { expected: base.dim(), got: xp.len() });
    }
    let d = base.signed_distance(xp);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::Domain(format!("x' = {xp:?} is not inside the base")))
    }
}

/// Triangle with vertex `zeta0 = b(x')` on the real axis and the vertical
/// edge `{top + i y : |y| <= epsilon}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub zeta0: f64,
    pub top: f64,
    pub epsilon: f64,
    /// Vertex angle divided by pi.
    pub alpha: f64,
}

impl TriangleGeometry {
    pub fn new(zeta0: f64, top: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Geometry(format!("edge half-length must be positive, got {epsilon}")));
        }
        if !(top > zeta0) || !top.is_finite() || !zeta0.is_finite() {
            return Err(Error::Geometry(format!("top {top} must exceed the vertex {zeta0}")));
        }
        let alpha = FRAC_2_PI * (epsilon / (top - zeta0)).atan();
        Ok(TriangleGeometry { zeta0, top, epsilon, alpha })
    }

    pub fn inv_alpha(&self) -> f64 {
        1.0 / self.alpha
    }

    /// Checks `zeta0 < x_n < top`.
    pub fn check_height(&self, x_n: f64) -> Result<()> {
        if self.zeta0 < x_n && x_n < self.top {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "x_n = {x_n} is not strictly between {} and {}",
                self.zeta0, self.top
            )))
        }
    }
}

/// The triangle over the base point `xp`.
pub fn triangle_at(domain: &CylinderDomain, xp: &[f64]) -> Result<TriangleGeometry> {
    let eps = domain.epsilon(xp)?;
    TriangleGeometry::new(domain.bottom.value(xp), domain.top.value(xp), eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn cone_examples() {
        assert_eq!(epsilon_cone(0.5, 0.0, 1.0).unwrap(), 0.5);
        assert!(epsilon_cone(0.0, 0.0, 1.0).is_err());
        assert_relative_eq!(epsilon_cone(0.25, 0.0, 1.0).unwrap(), 0.25);
    }

    #[test]
    fn distance_examples() {
        let ball = BaseShape::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        assert_eq!(epsilon_distance(&[0.0, 0.0], &ball).unwrap(), 1.0);
        assert_relative_eq!(epsilon_distance(&[0.5, 0.0], &ball).unwrap(), 0.5);
        let bx = BaseShape::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        assert_relative_eq!(epsilon_distance(&[0.2, 0.3], &bx).unwrap(), 0.2);
        assert!(epsilon_distance(&[1.2, 0.3], &bx).is_err());
    }

    #[test]
    fn triangle_examples() {
        let dom = CylinderDomain::flat(BaseShape::Interval { a: 0.0, b: 1.0 }, 0.0, 1.0).unwrap();
        let tri = triangle_at(&dom, &[0.5]).unwrap();
        assert_eq!(tri.zeta0, 0.0);
        assert_eq!(tri.top, 1.0);
        assert_eq!(tri.epsilon, 0.5);
        assert_relative_eq!(tri.alpha, FRAC_2_PI * 0.5f64.atan(), epsilon = 1e-15);

        let ball = BaseShape::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        let dom = CylinderDomain::flat(ball, 0.0, 2.0).unwrap();
        let tri = triangle_at(&dom, &[0.0, 0.0]).unwrap();
        assert_eq!(tri.epsilon, 1.0);
        assert_relative_eq!(tri.alpha, FRAC_2_PI * 0.5f64.atan(), epsilon = 1e-15);
    }

    #[test]
    fn degenerate_heights_rejected() {
        let base = BaseShape::Interval { a: 0.0, b: 1.0 };
        assert!(CylinderDomain::flat(base.clone(), 1.0, 1.0).is_err());
        assert!(TriangleGeometry::new(1.0, 1.0, 0.5).is_err());
        let dipping = Profile::custom(|x| 0.5 - x[0]);
        assert!(CylinderDomain::new(2, base, Profile::Constant(0.0), dipping).is_err());
    }

    #[test]
    fn dimension_and_shape_checks() {
        let ball = BaseShape::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        assert!(CylinderDomain::new(4, ball.clone(), Profile::Constant(0.0), Profile::Constant(1.0)).is_err());
        assert!(CylinderDomain::new(2, ball, Profile::Constant(0.0), Profile::Constant(1.0)).is_err());
        let bad = BaseShape::Box { lo: vec![0.0, 1.0], hi: vec![1.0, 1.0] };
        assert!(CylinderDomain::flat(bad, 0.0, 1.0).is_err());
    }

    #[test]
    fn containment() {
        let dom = CylinderDomain::new(
            2,
            BaseShape::Interval { a: 0.0, b: 1.0 },
            Profile::Constant(0.0),
            Profile::Affine { offset: 1.0, slope: vec![0.5] },
        )
        .unwrap();
        assert!(dom.contains(&[0.5, 1.2]));
        assert!(!dom.contains(&[0.5, 1.3]));
        assert!(!dom.contains(&[1.5, 0.5]));
        assert!(!dom.top().is_constant());
    }

    proptest! {
        #[test]
        fn alpha_in_unit_interval(b in -2.0f64..2.0, h in 0.01f64..5.0, eps in 0.001f64..10.0) {
            let tri = TriangleGeometry::new(b, b + h, eps).unwrap();
            prop_assert!(tri.alpha > 0.0 && tri.alpha < 1.0);
            prop_assert!((tri.alpha - FRAC_2_PI * (eps / h).atan()).abs() < 1e-15);
        }

        #[test]
        fn cone_is_symmetric(a in -3.0f64..3.0, len in 0.1f64..4.0, s in 0.0f64..0.999) {
            let b = a + len;
            let m = 0.5 * (a + b);
            let off = s * len / 2.0;
            let left = epsilon_cone(m - off, a, b).unwrap();
            let right = epsilon_cone(m + off, a, b).unwrap();
            prop_assert!((left - right).abs() < 1e-12);
            prop_assert!(left > 0.0);
        }

        #[test]
        fn ball_distance_complements_radius(r in 0.1f64..3.0, fx in -0.99f64..0.99, angle in 0.0f64..6.28) {
            let ball = BaseShape::Ball { center: vec![0.3, -0.2], radius: r };
            let p = [0.3 + fx * r * angle.cos(), -0.2 + fx * r * angle.sin()];
            let d = epsilon_distance(&p, &ball).unwrap();
            let nearest_gap = fx.abs() * r;
            prop_assert!((d + nearest_gap - r).abs() < 1e-12);
        }
    }
}
