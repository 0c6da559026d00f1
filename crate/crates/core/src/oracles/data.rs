use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spline::TensorSpline;
use super::ManufacturedSolution;
use crate::error::{Error, Result};
use crate::geometry::CylinderDomain;
use crate::numeric::{lift, lower, Real, C64};

pub type ScalarCallback = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type GradientCallback = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
pub type SourceCallback = Arc<dyn Fn(&[f64], C64) -> C64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Catalog(ManufacturedSolution),
    Callback(SourceCallback),
}

#[derive(Clone)]
enum Repr {
    Analytic(ManufacturedSolution),
    Callbacks {
        u0: ScalarCallback,
        u1: ScalarCallback,
        grad_u0: Option<GradientCallback>,
    },
    Sampled {
        u0: Arc<TensorSpline>,
        u1: Arc<TensorSpline>,
    },
}

/// How the data can be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// Closed form or callbacks, evaluable off the surface.
    Analytic,
    /// Values on a tensor grid over the base, interpolated by cubic splines.
    Sampled { spacing: Vec<f64>, order: u32 },
}

/// Cauchy data `u0 = u`, `u1 = du/dx_n` on the top surface, plus an optional
/// right-hand side `f(x', z_n)`.
#[derive(Clone)]
pub struct CauchyData {
    dim: usize,
    repr: Repr,
    source: Option<Source>,
}

impl fmt::Debug for CauchyData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let repr = match &self.repr {
            Repr::Analytic(s) => format!("Analytic({})", s.name()),
            Repr::Callbacks { .. } => "Callbacks".to_string(),
            Repr::Sampled { u0, .. } => format!("Sampled({:?})", u0.spacing()),
        };
        f.debug_struct("CauchyData")
            .field("dim", &self.dim)
            .field("repr", &repr)
            .field("source", &self.source.is_some())
            .finish()
    }
}

/// Data generated from a manufactured solution on `domain`.
pub fn cauchy_data_from(sol: &ManufacturedSolution, domain: &CylinderDomain) -> Result<CauchyData> {
    if sol.dim() != domain.dim() {
        return Err(Error::Dimension { expected: domain.dim(), got: sol.dim() });
    }
    Ok(CauchyData::analytic(sol.clone()))
}

impl CauchyData {
    pub fn analytic(sol: ManufacturedSolution) -> Self {
        let source = sol.has_source().then(|| Source::Catalog(sol.clone()));
        CauchyData { dim: sol.dim(), repr: Repr::Analytic(sol), source }
    }

    /// Data from callbacks `(x', x_n) -> value`.
    pub fn from_callbacks(
        dim: usize,
        u0: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        u1: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CauchyData {
            dim,
            repr: Repr::Callbacks { u0: Arc::new(u0), u1: Arc::new(u1), grad_u0: None },
            source: None,
        }
    }

    /// Attaches the `x'`-gradient of `u0`; only meaningful for callback data.
    pub fn with_gradient(mut self, g: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        if let Repr::Callbacks { grad_u0, .. } = &mut self.repr {
            *grad_u0 = Some(Arc::new(g));
        }
        self
    }

    pub fn with_source(mut self, f: impl Fn(&[f64], C64) -> C64 + Send + Sync + 'static) -> Self {
        self.source = Some(Source::Callback(Arc::new(f)));
        self
    }

    /// Sampled data on the tensor grid `axes` over the base; values are
    /// listed with the last axis varying fastest.
    pub fn from_samples(axes: Vec<Vec<f64>>, u0: Vec<f64>, u1: Vec<f64>) -> Result<Self> {
        let dim = axes.len() + 1;
        let u0 = TensorSpline::new(axes.clone(), u0)?;
        let u1 = TensorSpline::new(axes, u1)?;
        Ok(CauchyData {
            dim,
            repr: Repr::Sampled { u0: Arc::new(u0), u1: Arc::new(u1) },
            source: None,
        })
    }

    /// Reads sampled data from CSV with columns `x'_1, ..., x'_{n-1}, x_n,
    /// u0, u1` and one header row. The points must form a full tensor grid.
    pub fn from_csv_reader<R: Read>(reader: R, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Dimension { expected: 2, got: dim });
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(reader);
        let mut rows: Vec<Vec<f64>> = vec![];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            if rec.len() != dim + 2 {
                return Err(Error::Data(format!(
                    "row {}: expected {} columns, found {}",
                    i + 2,
                    dim + 2,
                    rec.len()
                )));
            }
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Data(format!("row {}: {e}", i + 2)))?;
            rows.push(row);
        }
        let d = dim - 1;
        let mut axes: Vec<Vec<f64>> = vec![vec![]; d];
        for (k, axis) in axes.iter_mut().enumerate() {
            let mut v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            *axis = v;
        }
        let total: usize = axes.iter().map(Vec::len).product();
        if total != rows.len() {
            return Err(Error::Data(format!(
                "{} rows do not form a full tensor grid ({total} points)",
                rows.len()
            )));
        }
        let mut u0 = vec![f64::NAN; total];
        let mut u1 = vec![f64::NAN; total];
        for r in &rows {
            let mut idx = 0;
            for k in 0..d {
                let pos = axes[k].binary_search_by(|v| v.total_cmp(&r[k])).expect("value from axis");
                idx = idx * axes[k].len() + pos;
            }
            if !u0[idx].is_nan() {
                return Err(Error::Data(format!("duplicate grid point {:?}", &r[..d])));
            }
            u0[idx] = r[d + 1];
            u1[idx] = r[d + 2];
        }
        CauchyData::from_samples(axes, u0, u1)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Data(format!("{}: {e}", path.as_ref().display())))?;
        CauchyData::from_csv_reader(file, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn representation(&self) -> Representation {
        match &self.repr {
            Repr::Sampled { u0, .. } => Representation::Sampled { spacing: u0.spacing(), order: 3 },
            _ => Representation::Analytic,
        }
    }

    /// Whether `u0`, `u1` can be evaluated away from the top surface.
    pub fn is_analytic(&self) -> bool {
        !matches!(self.repr, Repr::Sampled { .. })
    }

    /// The generating solution, when the data come from the catalog.
    pub fn solution(&self) -> Option<&ManufacturedSolution> {
        match &self.repr {
            Repr::Analytic(s) => Some(s),
            _ => None,
        }
    }

    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    /// Whether the traces are guaranteed to satisfy `U(-y) = conj U(y)`:
    /// real data with no source, or a catalog source that is real on the
    /// real axis.
    pub fn is_reflection_symmetric(&self) -> bool {
        !matches!(self.source, Some(Source::Callback(_)))
    }

    pub fn u0<T: Real>(&self, xp: &[T], xn: &T) -> T {
        match &self.repr {
            Repr::Analytic(s) => s.u(&join(xp, xn)),
            Repr::Callbacks { u0, .. } => T::from_f64(u0(&lower_all(xp), xn.to_f64())),
            Repr::Sampled { u0, .. } => T::from_f64(u0.eval(&lower_all(xp))),
        }
    }

    pub fn u1<T: Real>(&self, xp: &[T], xn: &T) -> T {
        match &self.repr {
            Repr::Analytic(s) => s.grad(&join(xp, xn)).pop().expect("dim >= 2"),
            Repr::Callbacks { u1, .. } => T::from_f64(u1(&lower_all(xp), xn.to_f64())),
            Repr::Sampled { u1, .. } => T::from_f64(u1.eval(&lower_all(xp))),
        }
    }

    /// Gradient of `u0(x', x_n)` in `x'`, when available in closed form.
    pub fn grad_u0<T: Real>(&self, xp: &[T], xn: &T) -> Option<Vec<T>> {
        match &self.repr {
            Repr::Analytic(s) => {
                let mut g = s.grad(&join(xp, xn));
                g.pop();
                Some(g)
            }
            Repr::Callbacks { grad_u0: Some(g), .. } => {
                Some(g(&lower_all(xp), xn.to_f64()).into_iter().map(T::from_f64).collect())
            }
            _ => None,
        }
    }

    pub fn source<T: Real>(&self, xp: &[T], z: &Complex<T>) -> Option<Complex<T>> {
        match self.source.as_ref()? {
            Source::Catalog(s) => Some(s.source(xp, z)),
            Source::Callback(f) => Some(lift(f(&lower_all(xp), lower(z)))),
        }
    }

    pub fn u0_at(&self, xp: &[f64], xn: f64) -> f64 {
        self.u0::<f64>(xp, &xn)
    }

    pub fn u1_at(&self, xp: &[f64], xn: f64) -> f64 {
        self.u1::<f64>(xp, &xn)
    }

    /// Samples of `(u0, u1)` on the top surface, tensor grid over `axes`.
    pub fn sample_on(&self, domain: &CylinderDomain, axes: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let total: usize = axes.iter().map(Vec::len).product();
        let mut u0 = Vec::with_capacity(total);
        let mut u1 = Vec::with_capacity(total);
        let mut p = vec![0.0; axes.len()];
        for idx in 0..total {
            let mut r = idx;
            for k in (0..axes.len()).rev() {
                p[k] = axes[k][r % axes[k].len()];
                r /= axes[k].len();
            }
            let t = domain.top().value(&p);
            u0.push(self.u0_at(&p, t));
            u1.push(self.u1_at(&p, t));
        }
        (u0, u1)
    }
}

fn join<T: Real>(xp: &[T], xn: &T) -> Vec<T> {
    let mut x = xp.to_vec();
    x.push(xn.clone());
    x
}

fn lower_all<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(Real::to_f64).collect()
}

/// Samples `data` on a `points_per_axis` grid over the bounding box of the
/// base, at `x_n = t(x')`, and adds independent uniform noise in
/// `[-delta, delta]` to every `u0` and `u1` sample. The source term, if any,
/// is kept as is.
pub fn add_noise(
    data: &CauchyData,
    domain: &CylinderDomain,
    points_per_axis: usize,
    delta: f64,
    seed: u64,
) -> Result<CauchyData> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {delta}")));
    }
    if points_per_axis < 2 {
        return Err(Error::InvalidArgument("noise grid needs at least two points per axis".into()));
    }
    if data.dim() != domain.dim() {
        return Err(Error::Dimension { expected: domain.dim(), got: data.dim() });
    }
    let (lo, hi) = domain.base().bounding_box();
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| {
            (0..points_per_axis)
                .map(|i| a + (b - a) * i as f64 / (points_per_axis - 1) as f64)
                .collect()
        })
        .collect();
    let (mut u0, mut u1) = data.sample_on(domain, &axes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (a, b) in u0.iter_mut().zip(u1.iter_mut()) {
        *a += delta * rng.random_range(-1.0..=1.0);
        *b += delta * rng.random_range(-1.0..=1.0);
    }
    let mut noisy = CauchyData::from_samples(axes, u0, u1)?;
    noisy.source = data.source.clone();
    Ok(noisy)
}
