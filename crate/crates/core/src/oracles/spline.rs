//! Natural cubic splines on tensor grids.

use crate::error::{Error, Result};

/// Second derivatives of the natural cubic spline through `(x, y)`.
fn second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system for the interior knots, Thomas algorithm.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let cc = h1 / 6.0;
        let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (rhs - a * d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

fn eval_1d(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let n = x.len();
    if n == 1 {
        return y[0];
    }
    let i = match x.partition_point(|v| *v <= t) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let h = x[i + 1] - x[i];
    let a = (x[i + 1] - t) / h;
    let b = (t - x[i]) / h;
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
}

/// Natural cubic spline interpolant of values on a tensor grid, evaluated
/// one axis at a time (last axis fastest in `values`).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpline {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    line_second: Vec<f64>,
}

impl TensorSpline {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Data("a spline needs at least one axis".into()));
        }
        for (k, ax) in axes.iter().enumerate() {
            if ax.len() < 2 {
                return Err(Error::Data(format!("axis {k} needs at least two knots")));
            }
            if ax.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Data(format!("axis {k} knots must be strictly increasing")));
            }
        }
        let total: usize = axes.iter().map(Vec::len).product();
        if total != values.len() {
            return Err(Error::Data(format!(
                "grid has {total} points but {} values were given",
                values.len()
            )));
        }
        let last = axes.last().expect("nonempty");
        let mut line_second = Vec::with_capacity(values.len());
        for line in values.chunks(last.len()) {
            line_second.extend(second_derivatives(last, line));
        }
        Ok(TensorSpline { axes, values, line_second })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Knot spacing per axis (the first gap; grids from this crate are uniform).
    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a[1] - a[0]).collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_level(0, 0, x)
    }

    fn eval_level(&self, level: usize, offset: usize, x: &[f64]) -> f64 {
        let d = self.axes.len();
        let axis = &self.axes[level];
        if level == d - 1 {
            let n = axis.len();
            return eval_1d(
                axis,
                &self.values[offset..offset + n],
                &self.line_second[offset..offset + n],
                x[level],
            );
        }
        let stride: usize = self.axes[level + 1..].iter().map(Vec::len).product();
        let line: Vec<f64> = (0..axis.len())
            .map(|i| self.eval_level(level + 1, offset + i * stride, x))
            .collect();
        let m = second_derivatives(axis, &line);
        eval_1d(axis, &line, &m, x[level])
    }
}
