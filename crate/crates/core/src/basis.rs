//! Deformation bases on the initial circle and the first-order far-field
//! sensitivity to a normal boundary perturbation.
//!
//! Basis rows are dimensionless and orthonormal for the mean over the circle,
//! `<f, g> = (1 / |dOmega_0|) int f g ds`, so a unit coefficient is a unit RMS
//! change of `h / r0`. A coefficient vector `c` deforms the circle with
//! `h = r0 * sum_j c_j Psi_j`.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::forward::{
    assemble, far_field_prefactor, BoundaryDensity, DirectionSet, ForwardError, SingleLayerSystem,
    WaveContext,
};
use crate::geometry::{make_circle, node_parameter, GeometryError, InitialDisk, Point, StarShapedDomain};

/// Vectors whose norm after projection falls below this fraction of the
/// largest raw norm are dropped.
pub const DEFAULT_DROP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BasisError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("all candidate basis vectors are degenerate")]
    Degenerate,
    #[error("need at least one mode, got {0}")]
    NoModes(usize),
    #[error("{nodes} nodes cannot resolve {modes} Fourier modes")]
    Aliased { nodes: usize, modes: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    #[default]
    Derived,
    Fourier,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Derived => "derived",
            BasisKind::Fourier => "fourier",
        })
    }
}

impl FromStr for BasisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "derived" | "new" => Ok(BasisKind::Derived),
            "fourier" => Ok(BasisKind::Fourier),
            _ => Err(format!("unknown basis kind '{s}'")),
        }
    }
}

/// Coefficients of a deformation in a `ShapeBasis`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCoefficients(pub Vec<f64>);

impl ShapeCoefficients {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Deformation functions sampled at the nodes of the initial circle.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeBasis {
    pub base: InitialDisk,
    pub kind: BasisKind,
    /// One row per basis function, one column per node.
    pub functions: DMatrix<f64>,
    pub weights: Vec<f64>,
    /// Norm of each row before normalisation relative to the largest raw
    /// norm (for the Fourier basis, the row norm itself).
    pub pivot_norms: Vec<f64>,
}

impl ShapeBasis {
    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.functions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_count(&self) -> usize {
        self.functions.ncols()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.functions.row(j).iter().copied().collect()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..self.len()).map(|j| self.row(j)).collect();
        DMatrix::from_fn(self.len(), self.len(), |i, j| self.inner(&rows[i], &rows[j]))
    }

    /// Norm of `v` minus its projection onto the span of the rows, for
    /// orthonormal bases.
    pub fn projection_residual(&self, v: &[f64]) -> f64 {
        let mut r = v.to_vec();
        for j in 0..self.len() {
            let q = self.row(j);
            let c = self.inner(&r, &q);
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= c * qi;
            }
        }
        self.inner(&r, &r).sqrt()
    }

    /// Normal displacement `h = r0 sum_j c_j Psi_j` at the nodes.
    pub fn deformation(&self, c: &ShapeCoefficients) -> Result<Vec<f64>, BasisError> {
        if c.len() != self.len() {
            return Err(BasisError::LengthMismatch {
                expected: self.len(),
                actual: c.len(),
            });
        }
        let mut h = vec![0.0; self.node_count()];
        for (j, &cj) in c.0.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            for (i, hi) in h.iter_mut().enumerate() {
                *hi += cj * self.functions[(j, i)];
            }
        }
        let r0 = self.base.radius;
        h.iter_mut().for_each(|v| *v *= r0);
        Ok(h)
    }

    pub fn domain(&self, c: &ShapeCoefficients) -> Result<StarShapedDomain, BasisError> {
        Ok(StarShapedDomain::new(self.base, self.deformation(c)?)?)
    }

    /// Keeps the first `n` functions.
    pub fn truncated(&self, n: usize) -> Result<Self, BasisError> {
        if n == 0 || n > self.len() {
            return Err(BasisError::NoModes(n));
        }
        Ok(Self {
            functions: self.functions.rows(0, n).into_owned(),
            pivot_norms: self.pivot_norms[..n].to_vec(),
            ..self.clone()
        })
    }

    /// First-order monostatic response to a unit coefficient in each row:
    /// `S_j = sum_k |du_inf(x_k, -x_k)|^2` for `h = r0 Psi_j`.
    pub fn monostatic_sensitivity(
        &self,
        wave: &WaveContext,
        dirs: &DirectionSet,
    ) -> Result<Vec<f64>, BasisError> {
        let system = circle_system(self.base, wave, self.node_count())?;
        let units = dirs.units();
        let densities = system.solve_densities(&units.iter().map(|x| -x).collect::<Vec<_>>())?;
        let w = system.curve.parameter_weight();
        let pre = far_field_prefactor(wave.wavenumber);
        let r0 = self.base.radius;
        Ok((0..self.len())
            .into_par_iter()
            .map(|j| {
                densities
                    .iter()
                    .map(|psi| {
                        let integral: Complex64 = (0..self.node_count())
                            .map(|i| psi.values[i] * psi.values[i] * (r0 * self.functions[(j, i)] * w * system.curve.speed[i]))
                            .sum();
                        (pre * integral).norm_sqr()
                    })
                    .sum()
            })
            .collect())
    }

    /// Rows whose sensitivity is at least `floor`, most sensitive first.
    pub fn select_sensitive(
        &self,
        wave: &WaveContext,
        dirs: &DirectionSet,
        floor: f64,
    ) -> Result<Self, BasisError> {
        let sens = self.monostatic_sensitivity(wave, dirs)?;
        let mut order: Vec<usize> = (0..self.len()).filter(|&j| sens[j] >= floor).collect();
        if order.is_empty() {
            return Err(BasisError::Degenerate);
        }
        order.sort_by(|&a, &b| sens[b].total_cmp(&sens[a]));
        Ok(self.select_rows(&order))
    }

    /// Basis made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            functions: DMatrix::from_fn(rows.len(), self.node_count(), |r, i| self.functions[(rows[r], i)]),
            pivot_norms: rows.iter().map(|&r| self.pivot_norms[r]).collect(),
            ..self.clone()
        }
    }

    /// Writes `j,i,theta,value` rows after a comment line naming the kind,
    /// the number of functions and the circle.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# kind={} functions={} nodes={} cx={:.16e} cy={:.16e} r0={:.16e}",
            self.kind,
            self.len(),
            self.node_count(),
            self.base.center.x,
            self.base.center.y,
            self.base.radius
        )?;
        let pivots: Vec<String> = self.pivot_norms.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "# pivot_norms={}", pivots.join(";"))?;
        writeln!(w, "j,i,theta,value")?;
        let n = self.node_count();
        for j in 0..self.len() {
            for i in 0..n {
                writeln!(
                    w,
                    "{},{},{:.16e},{:.16e}",
                    j,
                    i,
                    node_parameter(i, n),
                    self.functions[(j, i)]
                )?;
            }
        }
        Ok(())
    }
}

impl ShapeBasis {
    /// Reads the format produced by [`ShapeBasis::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, BasisCsvError> {
        let bad = |line: usize, msg: &str| BasisCsvError::Format {
            line,
            msg: msg.to_string(),
        };
        let mut meta = std::collections::HashMap::new();
        let mut pivots = None;
        let mut entries = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("# pivot_norms=") {
                let parsed: Result<Vec<f64>, _> = rest.split(';').filter(|v| !v.is_empty()).map(str::parse).collect();
                pivots = Some(parsed.map_err(|_| bad(idx + 1, "bad pivot norm"))?);
            } else if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    if let Some((k, v)) = kv.split_once('=') {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
            } else if line.is_empty() || line.starts_with('j') {
                continue;
            } else {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 4 {
                    return Err(bad(idx + 1, "expected j,i,theta,value"));
                }
                let j: usize = f[0].parse().map_err(|_| bad(idx + 1, "bad row index"))?;
                let i: usize = f[1].parse().map_err(|_| bad(idx + 1, "bad node index"))?;
                let v: f64 = f[3].parse().map_err(|_| bad(idx + 1, "bad value"))?;
                entries.push((j, i, v));
            }
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| bad(0, &format!("missing header field {k}")));
        let num = |k: &str| -> Result<f64, BasisCsvError> { get(k)?.parse().map_err(|_| bad(0, &format!("bad header field {k}"))) };
        let kind: BasisKind = get("kind")?.parse().map_err(|e: String| bad(0, &e))?;
        let rows = num("functions")? as usize;
        let nodes = num("nodes")? as usize;
        let base = InitialDisk::new(Point::new(num("cx")?, num("cy")?), num("r0")?)?;
        if entries.len() != rows * nodes {
            return Err(bad(0, "entry count does not match the header"));
        }
        let mut functions = DMatrix::zeros(rows, nodes);
        for (j, i, v) in entries {
            if j >= rows || i >= nodes {
                return Err(bad(0, "index out of range"));
            }
            functions[(j, i)] = v;
        }
        let pivot_norms = pivots.unwrap_or_else(|| vec![f64::NAN; rows]);
        if pivot_norms.len() != rows {
            return Err(bad(0, "pivot norm count does not match the header"));
        }
        Ok(Self {
            base,
            kind,
            functions,
            weights: uniform_weights(nodes),
            pivot_norms,
        })
    }
}

#[derive(Debug, Error)]
pub enum BasisCsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("basis file line {line}: {msg}")]
    Format { line: usize, msg: String },
}

fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Circle, assembled operator and densities `psi_d` on `B(c0, r0)`.
pub fn circle_system(
    disk: InitialDisk,
    wave: &WaveContext,
    n_nodes: usize,
) -> Result<SingleLayerSystem, BasisError> {
    let curve = make_circle(disk, n_nodes)?;
    Ok(assemble(&curve, wave)?)
}

/// `psi_d = S^{-1}[exp(i k d . y)]` on the nodes of the circle.
pub fn psi_density(
    disk: InitialDisk,
    wave: &WaveContext,
    d: Point,
    n_nodes: usize,
) -> Result<BoundaryDensity, BasisError> {
    Ok(circle_system(disk, wave, n_nodes)?.solve_density(d)?)
}

/// Real and imaginary parts of `psi^2_{-x_j}`, interleaved as `Psi_{2j}`, `Psi_{2j+1}`.
pub fn raw_derived_functions(
    system: &SingleLayerSystem,
    dirs: &DirectionSet,
) -> Result<Vec<Vec<f64>>, BasisError> {
    let incident: Vec<Point> = dirs.units().iter().map(|x| -x).collect();
    let densities = system.solve_densities(&incident)?;
    Ok(densities
        .par_iter()
        .flat_map_iter(|psi| {
            let sq: Vec<Complex64> = psi.values.iter().map(|v| v * v).collect();
            [sq.iter().map(|v| v.re).collect::<Vec<_>>(), sq.iter().map(|v| v.im).collect()]
        })
        .collect())
}

/// Gram–Schmidt on the raw functions `Re psi^2_{-x_j}`, `Im psi^2_{-x_j}`.
pub fn build_derived_basis(
    disk: InitialDisk,
    wave: &WaveContext,
    dirs: &DirectionSet,
    n_nodes: usize,
) -> Result<ShapeBasis, BasisError> {
    build_derived_basis_with(disk, wave, dirs, n_nodes, DEFAULT_DROP_TOL)
}

pub fn build_derived_basis_with(
    disk: InitialDisk,
    wave: &WaveContext,
    dirs: &DirectionSet,
    n_nodes: usize,
    drop_tol: f64,
) -> Result<ShapeBasis, BasisError> {
    let system = circle_system(disk, wave, n_nodes)?;
    let raw = raw_derived_functions(&system, dirs)?;
    let weights = uniform_weights(n_nodes);
    let (rows, pivot_norms) = gram_schmidt(&raw, &weights, drop_tol);
    if rows.is_empty() {
        return Err(BasisError::Degenerate);
    }
    let functions = DMatrix::from_fn(rows.len(), n_nodes, |j, i| rows[j][i]);
    Ok(ShapeBasis {
        base: disk,
        kind: BasisKind::Derived,
        functions,
        weights,
        pivot_norms,
    })
}

/// Column-pivoted modified Gram–Schmidt: at each step the candidate with the
/// largest remaining norm is taken, re-orthogonalised once and normalised, so
/// rows come out ordered by how much new direction they contribute.
fn gram_schmidt(raw: &[Vec<f64>], weights: &[f64], drop_tol: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(weights).map(|((x, y), w)| x * y * w).sum()
    };
    let largest = raw.iter().map(|v| inner(v, v).sqrt()).fold(0.0, f64::max);
    if !(largest > 0.0) || !largest.is_finite() {
        return (Vec::new(), Vec::new());
    }
    let mut residuals: Vec<Vec<f64>> = raw.to_vec();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut norms = Vec::new();
    while !residuals.is_empty() {
        let (pick, norm) = residuals
            .iter()
            .enumerate()
            .map(|(i, r)| (i, inner(r, r).sqrt()))
            .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if norm <= drop_tol * largest {
            break;
        }
        let mut q = residuals.swap_remove(pick);
        for prev in &out {
            let c = inner(&q, prev);
            for (qi, pi) in q.iter_mut().zip(prev) {
                *qi -= c * pi;
            }
        }
        let norm = inner(&q, &q).sqrt();
        if norm <= drop_tol * largest {
            continue;
        }
        q.iter_mut().for_each(|x| *x /= norm);
        for r in residuals.iter_mut() {
            let c = inner(r, &q);
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= c * qi;
            }
        }
        out.push(q);
        norms.push(norm / largest);
    }
    (out, norms)
}

/// `{1} u {sqrt(2) j^{-2} cos j theta} u {sqrt(2) j^{-2} sin j theta}`, `j = 1..=J`:
/// the functions `(2pi)^{-1/2}`, `pi^{-1/2} j^{-2} cos j theta`, ... rescaled by
/// `sqrt(2 pi)` to the mean inner product.
pub fn build_fourier_basis(disk: InitialDisk, modes: usize, n_nodes: usize) -> Result<ShapeBasis, BasisError> {
    if modes == 0 {
        return Err(BasisError::NoModes(modes));
    }
    if n_nodes <= 2 * modes {
        return Err(BasisError::Aliased {
            nodes: n_nodes,
            modes,
        });
    }
    make_circle(disk, n_nodes)?;
    let rows = 2 * modes + 1;
    let functions = DMatrix::from_fn(rows, n_nodes, |r, i| {
        let theta = node_parameter(i, n_nodes);
        if r == 0 {
            1.0
        } else {
            let (j, cosine) = if r <= modes { (r, true) } else { (r - modes, false) };
            let jf = j as f64;
            let trig = if cosine { (jf * theta).cos() } else { (jf * theta).sin() };
            std::f64::consts::SQRT_2 * trig / (jf * jf)
        }
    });
    let pivot_norms = (0..rows)
        .map(|r| {
            if r == 0 {
                1.0
            } else {
                let j = if r <= modes { r } else { r - modes } as f64;
                1.0 / (j * j)
            }
        })
        .collect();
    Ok(ShapeBasis {
        base: disk,
        kind: BasisKind::Fourier,
        functions,
        weights: uniform_weights(n_nodes),
        pivot_norms,
    })
}

/// Leading-order far-field change for the normal displacement `h` (metres)
/// of the circle underlying `system`:
/// `-(e^{i pi/4} / sqrt(8 pi k)) int h psi_{-x_hat} psi_d ds`.
pub fn shape_derivative_on(
    system: &SingleLayerSystem,
    h: &[f64],
    x_hat: Point,
    d: Point,
) -> Result<Complex64, BasisError> {
    let n = system.len();
    if h.len() != n {
        return Err(BasisError::LengthMismatch {
            expected: n,
            actual: h.len(),
        });
    }
    let densities = system.solve_densities(&[-x_hat, d])?;
    let w = system.curve.parameter_weight();
    let integral: Complex64 = (0..n)
        .map(|i| densities[0].values[i] * densities[1].values[i] * (h[i] * w * system.curve.speed[i]))
        .sum();
    Ok(-far_field_prefactor(system.wave.wavenumber) * integral)
}

/// `shape_derivative_on` for a circle built from `disk` with `h.len()` nodes.
pub fn shape_derivative_prediction(
    disk: InitialDisk,
    wave: &WaveContext,
    h: &[f64],
    x_hat: Point,
    d: Point,
) -> Result<Complex64, BasisError> {
    let system = circle_system(disk, wave, h.len())?;
    shape_derivative_on(&system, h, x_hat, d)
}
