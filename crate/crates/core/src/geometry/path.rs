use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::interp::{lerp, slerp};
use crate::error::{Error, Result};

/// A discretized curve `x^{u_0}, ..., x^{u_N}` at a fixed timestep with uniform
/// parameters `u_i = i / N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    timestep: usize,
    points: Array2<f64>,
}

impl Path {
    pub fn new(timestep: usize, points: Array2<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a path needs at least 2 points, got {}",
                points.nrows()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path points"));
        }
        Ok(Self { timestep, points })
    }

    /// Straight line with `n_segments + 1` equally spaced points.
    pub fn lerp(timestep: usize, x0: ArrayView1<f64>, x1: ArrayView1<f64>, n_segments: usize) -> Result<Self> {
        Self::from_fn(timestep, x0.len(), n_segments, |u| Ok(lerp(x0, x1, u)))
    }

    /// Great-circle arc with `n_segments + 1` points equally spaced in angle.
    pub fn slerp(timestep: usize, x0: ArrayView1<f64>, x1: ArrayView1<f64>, n_segments: usize) -> Result<Self> {
        Self::from_fn(timestep, x0.len(), n_segments, |u| slerp(x0, x1, u))
    }

    fn from_fn(
        timestep: usize,
        dim: usize,
        n_segments: usize,
        mut f: impl FnMut(f64) -> Result<ndarray::Array1<f64>>,
    ) -> Result<Self> {
        if n_segments == 0 {
            return Err(Error::InvalidArgument("a path needs at least one segment".into()));
        }
        let mut points = Array2::zeros((n_segments + 1, dim));
        for i in 0..=n_segments {
            points.row_mut(i).assign(&f(i as f64 / n_segments as f64)?);
        }
        // pin the endpoints exactly; the interpolation formulas may round at u = 0, 1
        points.row_mut(0).assign(&f(0.0)?);
        points.row_mut(n_segments).assign(&f(1.0)?);
        Self::new(timestep, points)
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    pub(crate) fn points_mut(&mut self) -> &mut Array2<f64> {
        &mut self.points
    }

    pub fn n_segments(&self) -> usize {
        self.points.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn delta_u(&self) -> f64 {
        1.0 / self.n_segments() as f64
    }

    pub fn u(&self, i: usize) -> f64 {
        i as f64 / self.n_segments() as f64
    }

    pub fn start(&self) -> ArrayView1<'_, f64> {
        self.points.row(0)
    }

    pub fn end(&self) -> ArrayView1<'_, f64> {
        self.points.row(self.n_segments())
    }

    /// The same curve traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.invert_axis(ndarray::Axis(0));
        Self { timestep: self.timestep, points: points.as_standard_layout().into_owned() }
    }

    /// CSV with a `# key=value,...` metadata line, the header `u,x0,x1,...` and one
    /// row per point. `extra` columns are appended after the coordinates.
    pub fn to_csv(&self, meta: &PathMeta, extra: &[(&str, &[f64])]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# method={},tau={},n={},seed={}",
            meta.method,
            self.timestep,
            self.n_segments(),
            meta.seed
        );
        out.push('u');
        for k in 0..self.dim() {
            let _ = write!(out, ",x{k}");
        }
        for (name, col) in extra {
            assert_eq!(col.len(), self.points.nrows(), "extra column `{name}` has the wrong length");
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (i, row) in self.points.rows().into_iter().enumerate() {
            let _ = write!(out, "{}", self.u(i));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            for (_, col) in extra {
                let _ = write!(out, ",{}", col[i]);
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`Path::to_csv`] output; extra columns are ignored.
    pub fn from_csv(text: &str) -> Result<(Self, PathMeta)> {
        let bad = |detail: String| Error::Format { what: "path CSV", detail };
        let mut lines = text.lines();
        let meta_line = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let meta_body = meta_line.strip_prefix("# ").ok_or_else(|| bad("missing metadata line".into()))?;
        let mut method = None;
        let mut tau = None;
        let mut seed = None;
        for field in meta_body.split(',') {
            match field.split_once('=') {
                Some(("method", v)) => method = Some(v.to_string()),
                Some(("tau", v)) => tau = v.parse::<usize>().ok(),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("n", _)) => {}
                _ => return Err(bad(format!("bad metadata field `{field}`"))),
            }
        }
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let dim = header.split(',').filter(|c| c.starts_with('x')).count();
        if !header.starts_with("u,") || dim == 0 {
            return Err(bad(format!("bad header `{header}`")));
        }
        let mut flat = Vec::new();
        let mut rows = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < dim + 1 {
                return Err(bad(format!("row {rows}: too few columns")));
            }
            for c in &cols[1..=dim] {
                flat.push(c.trim().parse::<f64>().map_err(|e| bad(format!("row {rows}: {e}")))?);
            }
            rows += 1;
        }
        let points = Array2::from_shape_vec((rows, dim), flat).expect("dim values per row");
        let meta = PathMeta {
            method: method.ok_or_else(|| bad("missing method".into()))?,
            seed: seed.ok_or_else(|| bad("missing seed".into()))?,
        };
        Ok((Self::new(tau.ok_or_else(|| bad("missing tau".into()))?, points)?, meta))
    }
}

/// Metadata written alongside a path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMeta {
    pub method: String,
    pub seed: u64,
}
