//! Closed boundary curves sampled at equispaced parameter values, star-shaped
//! deformations of a disk, the target catalogue and Jaccard distances.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::Vector2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

pub type Point = Vector2<f64>;

/// Node count used when the caller does not choose one.
pub const DEFAULT_NODES: usize = 256;
/// Default raster resolution for Jaccard distances.
pub const DEFAULT_JACCARD_RESOLUTION: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("node count must be even and at least 16, got {0}")]
    InvalidNodeCount(usize),
    #[error("unknown target `{0}` (expected omega1, omega2 or omega3)")]
    UnknownTarget(String),
    #[error("disk radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("curve encloses no raster cell")]
    Degenerate,
    #[error("expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("raster resolution must be at least 2, got {0}")]
    InvalidResolution(usize),
}

fn check_nodes(n: usize) -> Result<(), GeometryError> {
    if n < 16 || n % 2 != 0 {
        return Err(GeometryError::InvalidNodeCount(n));
    }
    Ok(())
}

/// Parameter value of node `i` out of `n`.
pub fn node_parameter(i: usize, n: usize) -> f64 {
    TAU * i as f64 / n as f64
}

/// Smooth closed curve sampled at `t_i = 2 pi i / N`.
///
/// `tangents` are the raw parametric derivatives `dY/dt`; `speed` is their
/// length, so the arc-length element at node `i` is `speed[i] * 2 pi / N`.
/// Curves are oriented counter-clockwise, normals point outward and the
/// curvature of a circle of radius `r` is `+1/r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCurve {
    pub nodes: Vec<Point>,
    pub tangents: Vec<Point>,
    pub normals: Vec<Point>,
    pub curvatures: Vec<f64>,
    pub speed: Vec<f64>,
}

impl ParamCurve {
    /// Builds the curve from positions and first and second parametric derivatives.
    pub fn from_derivatives(
        nodes: Vec<Point>,
        first: Vec<Point>,
        second: &[Point],
    ) -> Result<Self, GeometryError> {
        let n = nodes.len();
        check_nodes(n)?;
        if first.len() != n || second.len() != n {
            return Err(GeometryError::LengthMismatch {
                expected: n,
                actual: first.len().min(second.len()),
            });
        }
        let speed: Vec<f64> = first.iter().map(|d| d.norm()).collect();
        let normals = first
            .iter()
            .zip(&speed)
            .map(|(d, s)| Point::new(d.y / s, -d.x / s))
            .collect();
        let curvatures = first
            .iter()
            .zip(second)
            .zip(&speed)
            .map(|((d1, d2), s)| (d1.x * d2.y - d1.y * d2.x) / (s * s * s))
            .collect();
        Ok(Self {
            nodes,
            tangents: first,
            normals,
            curvatures,
            speed,
        })
    }

    /// Builds the curve from node positions alone; derivatives are obtained by
    /// trigonometric differentiation of the periodic samples.
    pub fn from_samples(nodes: Vec<Point>) -> Result<Self, GeometryError> {
        check_nodes(nodes.len())?;
        let xs: Vec<f64> = nodes.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = nodes.iter().map(|p| p.y).collect();
        let (dx, ddx) = spectral_derivatives(&xs);
        let (dy, ddy) = spectral_derivatives(&ys);
        let first = dx.iter().zip(&dy).map(|(&a, &b)| Point::new(a, b)).collect();
        let second: Vec<Point> = ddx.iter().zip(&ddy).map(|(&a, &b)| Point::new(a, b)).collect();
        Self::from_derivatives(nodes, first, &second)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trapezoidal weight in the parameter variable.
    pub fn parameter_weight(&self) -> f64 {
        TAU / self.len() as f64
    }

    /// Arc-length quadrature weights `|Y'(t_i)| * 2 pi / N`.
    pub fn arc_weights(&self) -> Vec<f64> {
        let w = self.parameter_weight();
        self.speed.iter().map(|s| s * w).collect()
    }

    pub fn length(&self) -> f64 {
        self.speed.iter().sum::<f64>() * self.parameter_weight()
    }

    /// `length * integral of kappa^2 ds`; equals `4 pi^2` for every circle.
    pub fn regularizer(&self) -> f64 {
        let w = self.parameter_weight();
        let bending: f64 = self
            .curvatures
            .iter()
            .zip(&self.speed)
            .map(|(k, s)| k * k * s)
            .sum::<f64>()
            * w;
        self.length() * bending
    }

    /// Signed area of the node polygon (positive for counter-clockwise curves).
    pub fn polygon_area(&self) -> f64 {
        let n = self.len();
        0.5 * (0..n)
            .map(|i| {
                let a = self.nodes[i];
                let b = self.nodes[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }

    /// Area centroid of the enclosed region (polygonal approximation).
    pub fn centroid(&self) -> Point {
        let n = self.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let a = self.nodes[i];
            let b = self.nodes[(i + 1) % n];
            let cross = a.x * b.y - b.x * a.y;
            cx += (a.x + b.x) * cross;
            cy += (a.y + b.y) * cross;
        }
        let area = self.polygon_area();
        Point::new(cx / (6.0 * area), cy / (6.0 * area))
    }

    /// Mean of the node positions.
    pub fn node_mean(&self) -> Point {
        self.nodes.iter().sum::<Point>() / self.len() as f64
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Largest distance between two nodes.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        best
    }

    /// True when no two non-adjacent polygon edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.len();
        for i in 0..n {
            let (a, b) = (self.nodes[i], self.nodes[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (self.nodes[j], self.nodes[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Winding number of the node polygon around `p`.
    pub fn winding_number(&self, p: Point) -> i32 {
        let n = self.len();
        let mut wn = 0;
        for i in 0..n {
            let a = self.nodes[i];
            let b = self.nodes[(i + 1) % n];
            let side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
            if a.y <= p.y {
                if b.y > p.y && side > 0.0 {
                    wn += 1;
                }
            } else if b.y <= p.y && side < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    pub fn contains(&self, p: Point) -> bool {
        self.winding_number(p) != 0
    }

    /// Writes `t, x, y, nx, ny, kappa, speed` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,y,nx,ny,kappa,speed")?;
        let n = self.len();
        for i in 0..n {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                node_parameter(i, n),
                self.nodes[i].x,
                self.nodes[i].y,
                self.normals[i].x,
                self.normals[i].y,
                self.curvatures[i],
                self.speed[i]
            )?;
        }
        Ok(())
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// First and second derivatives of a periodic sequence sampled on `[0, 2 pi)`.
pub fn spectral_derivatives(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    });
    let mut spec: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut spec);
    let mut d1 = spec.clone();
    let mut d2 = spec;
    let half = n / 2;
    for m in 0..n {
        let wave = if m < half {
            m as f64
        } else if m > half || n % 2 == 1 {
            m as f64 - n as f64
        } else {
            // Nyquist mode: odd derivatives vanish for real data.
            d1[m] = Complex64::new(0.0, 0.0);
            d2[m] *= -(half as f64).powi(2);
            continue;
        };
        d1[m] *= Complex64::new(0.0, wave);
        d2[m] *= -wave * wave;
    }
    inv.process(&mut d1);
    inv.process(&mut d2);
    let scale = 1.0 / n as f64;
    (
        d1.iter().map(|z| z.re * scale).collect(),
        d2.iter().map(|z| z.re * scale).collect(),
    )
}

/// Initial disk `B(c0, r0)` around which shapes are deformed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDisk {
    pub center: Point,
    pub radius: f64,
}

impl InitialDisk {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }
}

/// Circle through `N` equispaced nodes.
pub fn make_circle(disk: InitialDisk, n_nodes: usize) -> Result<ParamCurve, GeometryError> {
    StarShapedDomain::new(disk, vec![0.0; n_nodes])?.deform()
}

/// Boundary `c0 + (y - c0) exp(h(y) / r0)` for `y` on the base circle.
#[derive(Debug, Clone, PartialEq)]
pub struct StarShapedDomain {
    pub base: InitialDisk,
    pub deformation: Vec<f64>,
}

impl StarShapedDomain {
    pub fn new(base: InitialDisk, deformation: Vec<f64>) -> Result<Self, GeometryError> {
        check_nodes(deformation.len())?;
        Ok(Self { base, deformation })
    }

    /// Realises the deformed boundary. The radial profile
    /// `rho = r0 exp(h / r0)` is differentiated through `h`, whose
    /// derivatives are spectral.
    pub fn deform(&self) -> Result<ParamCurve, GeometryError> {
        let n = self.deformation.len();
        check_nodes(n)?;
        let r0 = self.base.radius;
        let c0 = self.base.center;
        let (dh, ddh) = spectral_derivatives(&self.deformation);
        let mut nodes = Vec::with_capacity(n);
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for i in 0..n {
            let t = node_parameter(i, n);
            let (s, c) = t.sin_cos();
            let rho = r0 * (self.deformation[i] / r0).exp();
            let g1 = dh[i] / r0;
            let rho1 = rho * g1;
            let rho2 = rho * (ddh[i] / r0 + g1 * g1);
            nodes.push(c0 + Point::new(rho * c, rho * s));
            first.push(Point::new(rho1 * c - rho * s, rho1 * s + rho * c));
            second.push(Point::new(
                rho2 * c - 2.0 * rho1 * s - rho * c,
                rho2 * s + 2.0 * rho1 * c - rho * s,
            ));
        }
        ParamCurve::from_derivatives(nodes, first, &second)
    }
}

/// The three benchmark scatterers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Disk of radius 0.03 centred at (0.01, 0).
    Omega1,
    /// Ellipse with semi-axes 0.036 (x) and 0.024 (y) centred at (0.01, 0).
    Omega2,
    /// Kite of diameter about 1 m centred near (0.7, 1).
    Omega3,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Omega1, Target::Omega2, Target::Omega3];

    pub fn name(self) -> &'static str {
        match self {
            Target::Omega1 => "omega1",
            Target::Omega2 => "omega2",
            Target::Omega3 => "omega3",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "omega1" | "ω1" | "1" => Ok(Target::Omega1),
            "omega2" | "ω2" | "2" => Ok(Target::Omega2),
            "omega3" | "ω3" | "3" => Ok(Target::Omega3),
            _ => Err(GeometryError::UnknownTarget(s.to_string())),
        }
    }
}

/// Exact counter-clockwise parametrisation of a catalogue target.
pub fn target_curve(target: Target, n_nodes: usize) -> Result<ParamCurve, GeometryError> {
    check_nodes(n_nodes)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut first = Vec::with_capacity(n_nodes);
    let mut second = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let t = node_parameter(i, n_nodes);
        let (s, c) = t.sin_cos();
        let (p, d1, d2) = match target {
            Target::Omega1 => (
                Point::new(0.01 + 0.03 * c, 0.03 * s),
                Point::new(-0.03 * s, 0.03 * c),
                Point::new(-0.03 * c, -0.03 * s),
            ),
            // Same point set as 0.01 + 0.024i cos(theta) + 0.036 sin(theta),
            // reparametrised (theta = pi/2 - t) to run counter-clockwise.
            Target::Omega2 => (
                Point::new(0.01 + 0.036 * c, 0.024 * s),
                Point::new(-0.036 * s, 0.024 * c),
                Point::new(-0.036 * c, -0.024 * s),
            ),
            Target::Omega3 => (
                Point::new(0.7 + 0.5 * (c - 0.2 * s * s), 1.0 + 0.45 * s),
                Point::new(0.5 * (-s - 0.4 * s * c), 0.45 * c),
                Point::new(0.5 * (-c - 0.4 * (c * c - s * s)), -0.45 * s),
            ),
        };
        nodes.push(p);
        first.push(d1);
        second.push(d2);
    }
    ParamCurve::from_derivatives(nodes, first, &second)
}

/// Cell-centred sampling grid over a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: Point,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(lo: Point, hi: Point, nx: usize, ny: usize) -> Result<Self, GeometryError> {
        if nx < 2 || ny < 2 {
            return Err(GeometryError::InvalidResolution(nx.min(ny)));
        }
        let dx = (hi.x - lo.x) / nx as f64;
        let dy = (hi.y - lo.y) / ny as f64;
        if !(dx > 0.0 && dy > 0.0) {
            return Err(GeometryError::Degenerate);
        }
        Ok(Self {
            origin: lo,
            dx,
            dy,
            nx,
            ny,
        })
    }

    /// Square-celled `resolution x resolution` grid over the joint bounding box.
    pub fn covering<'a, I>(curves: I, resolution: usize) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = &'a ParamCurve>,
    {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in curves {
            let (a, b) = c.bounding_box();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        Self::new(lo, hi, resolution, resolution)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.origin.x + (ix as f64 + 0.5) * self.dx,
            self.origin.y + (iy as f64 + 0.5) * self.dy,
        )
    }
}

/// Interior of a curve sampled at grid cell centres, stored as per-row
/// half-open runs of cell indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub rows: Vec<Vec<(u32, u32)>>,
}

impl Raster {
    /// Scanline fill of the node polygon (even-odd rule, identical to the
    /// winding rule for simple curves).
    pub fn new(curve: &ParamCurve, grid: &Grid) -> Self {
        let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); grid.ny];
        let n = curve.len();
        for i in 0..n {
            let a = curve.nodes[i];
            let b = curve.nodes[(i + 1) % n];
            if a.y == b.y {
                continue;
            }
            let (ylo, yhi) = if a.y < b.y { (a.y, b.y) } else { (b.y, a.y) };
            // rows whose centre y satisfies ylo <= y < yhi
            let first = ((ylo - grid.origin.y) / grid.dy - 0.5).ceil().max(0.0) as usize;
            let last = ((yhi - grid.origin.y) / grid.dy - 0.5).ceil().min(grid.ny as f64);
            if last <= 0.0 {
                continue;
            }
            for row in first..last as usize {
                let y = grid.origin.y + (row as f64 + 0.5) * grid.dy;
                if y < ylo || y >= yhi {
                    continue;
                }
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                crossings[row].push(x);
            }
        }
        let rows = crossings
            .into_iter()
            .map(|mut xs| {
                xs.sort_by(|a, b| a.total_cmp(b));
                xs.chunks_exact(2)
                    .filter_map(|pair| {
                        let start = cell_index_at_or_after(pair[0], grid);
                        let end = cell_index_at_or_after(pair[1], grid);
                        (end > start).then_some((start, end))
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn area_cells(&self) -> u64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|&(a, b)| (b - a) as u64)
            .sum()
    }

    pub fn intersection_cells(&self, other: &Raster) -> u64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| runs_overlap(a, b))
            .sum()
    }

    pub fn contains_cell(&self, ix: usize, iy: usize) -> bool {
        let ix = ix as u32;
        self.rows[iy].iter().any(|&(a, b)| a <= ix && ix < b)
    }
}

fn cell_index_at_or_after(x: f64, grid: &Grid) -> u32 {
    let idx = ((x - grid.origin.x) / grid.dx - 0.5).ceil();
    idx.clamp(0.0, grid.nx as f64) as u32
}

fn runs_overlap(a: &[(u32, u32)], b: &[(u32, u32)]) -> u64 {
    let (mut i, mut j, mut total) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += (hi - lo) as u64;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// `1 - |A n B| / |A u B|` for two rasters on the same grid.
pub fn raster_jaccard(a: &Raster, b: &Raster) -> Result<f64, GeometryError> {
    let area_a = a.area_cells();
    let area_b = b.area_cells();
    if area_a == 0 || area_b == 0 {
        return Err(GeometryError::Degenerate);
    }
    let inter = a.intersection_cells(b);
    let union = area_a + area_b - inter;
    Ok(1.0 - inter as f64 / union as f64)
}

/// Jaccard distance of the regions enclosed by two curves, rasterised on a
/// `resolution x resolution` grid over their joint bounding box.
pub fn jaccard_distance(
    a: &ParamCurve,
    b: &ParamCurve,
    resolution: usize,
) -> Result<f64, GeometryError> {
    let grid = Grid::covering([a, b], resolution)?;
    raster_jaccard(&Raster::new(a, &grid), &Raster::new(b, &grid))
}

/// Closed-form area of the lens formed by two unit disks at centre distance 1.
pub fn unit_lens_area() -> f64 {
    2.0 * PI / 3.0 - 3f64.sqrt() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(x: f64, y: f64, r: f64) -> InitialDisk {
        InitialDisk::new(Point::new(x, y), r).unwrap()
    }

    #[test]
    fn unit_circle_geometry() {
        let c = make_circle(disk(0.0, 0.0, 1.0), 64).unwrap();
        assert!((c.length() - TAU).abs() < 1e-10 * TAU);
        assert!(c.curvatures.iter().all(|k| (k - 1.0).abs() < 1e-12));
        assert!(c.normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-12));
        // outward normal at t = 0 is +x
        assert!((c.normals[0] - Point::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn small_offset_circle() {
        let c = make_circle(disk(0.01, 0.0, 0.03), 256).unwrap();
        assert!((c.length() - 0.06 * PI).abs() < 1e-10 * 0.06 * PI);
        assert!((c.node_mean() - Point::new(0.01, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_node_counts() {
        assert_eq!(
            make_circle(disk(0.0, 0.0, 1.0), 15).unwrap_err(),
            GeometryError::InvalidNodeCount(15)
        );
        assert!(make_circle(disk(0.0, 0.0, 1.0), 8).is_err());
        assert!(make_circle(disk(0.0, 0.0, 1.0), 33).is_err());
        assert!(InitialDisk::new(Point::zeros(), 0.0).is_err());
    }

    #[test]
    fn zero_deformation_is_base_circle() {
        let base = disk(0.2, -0.1, 0.3);
        let d = StarShapedDomain::new(base, vec![0.0; 64]).unwrap().deform().unwrap();
        let c = make_circle(base, 64).unwrap();
        for (a, b) in d.nodes.iter().zip(&c.nodes) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn log_two_deformation_doubles_radius() {
        let base = disk(0.2, -0.1, 0.3);
        let h = vec![0.3 * 2f64.ln(); 64];
        let d = StarShapedDomain::new(base, h).unwrap().deform().unwrap();
        for p in &d.nodes {
            assert!(((p - base.center).norm() - 0.6).abs() < 1e-12);
        }
        assert!(d.curvatures.iter().all(|k| (k - 1.0 / 0.6).abs() < 1e-9));
    }

    #[test]
    fn small_deformation_agrees_with_normal_shift() {
        let base = disk(0.01, 0.02, 0.03);
        let n = 128;
        let r0 = base.radius;
        let circle = make_circle(base, n).unwrap();
        let h: Vec<f64> = (0..n)
            .map(|i| 1e-4 * r0 * (3.0 * node_parameter(i, n)).cos())
            .collect();
        let d = StarShapedDomain::new(base, h.clone()).unwrap().deform().unwrap();
        for i in 0..n {
            let linear = circle.nodes[i] + h[i] * circle.normals[i];
            assert!((d.nodes[i] - linear).norm() <= 1e-6 * r0);
        }
    }

    #[test]
    fn catalogue_shapes() {
        let o1 = target_curve(Target::Omega1, 256).unwrap();
        for p in &o1.nodes {
            assert!(((p - Point::new(0.01, 0.0)).norm() - 0.03).abs() < 1e-15);
        }
        let o2 = target_curve(Target::Omega2, 256).unwrap();
        let (lo, hi) = o2.bounding_box();
        assert!((hi.x - lo.x - 0.072).abs() < 1e-12);
        assert!((hi.y - lo.y - 0.048).abs() < 1e-6);
        assert!((o2.centroid() - Point::new(0.01, 0.0)).norm() < 1e-12);
        let o3 = target_curve(Target::Omega3, 256).unwrap();
        assert!(o3.diameter() > 0.2998);
        for c in [&o1, &o2, &o3] {
            assert!(c.polygon_area() > 0.0);
            assert!(c.is_simple());
        }
        assert_eq!("Omega2".parse::<Target>().unwrap(), Target::Omega2);
        assert!("omega4".parse::<Target>().is_err());
    }

    #[test]
    fn self_intersection_is_detected() {
        let nodes: Vec<Point> = (0..32)
            .map(|i| {
                let t = node_parameter(i, 32);
                Point::new(t.sin(), (2.0 * t).sin())
            })
            .collect();
        let eight = ParamCurve::from_samples(nodes).unwrap();
        assert!(!eight.is_simple());
    }

    #[test]
    fn regularizer_of_circles() {
        for r in [0.01, 0.1, 1.0] {
            let c = make_circle(disk(3.0, -7.0, r), 64).unwrap();
            let four_pi_sq = 4.0 * PI * PI;
            assert!((c.regularizer() - four_pi_sq).abs() < 1e-8 * four_pi_sq);
        }
    }

    #[test]
    fn spectral_samples_reproduce_exact_kite_derivatives() {
        // The kite is a trigonometric polynomial, so sampled derivatives are
        // exact up to rounding at any admissible N.
        let exact = target_curve(Target::Omega3, 64).unwrap();
        let sampled = ParamCurve::from_samples(exact.nodes.clone()).unwrap();
        for (a, b) in exact.curvatures.iter().zip(&sampled.curvatures) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn analytic_curve(n: usize) -> (Vec<Point>, Vec<f64>) {
        // rho(t) = exp(cos t), analytic but not band-limited.
        let mut nodes = Vec::new();
        let mut kappa = Vec::new();
        for i in 0..n {
            let t = node_parameter(i, n);
            let rho = t.cos().exp();
            let rho1 = -t.sin() * rho;
            let rho2 = (t.sin().powi(2) - t.cos()) * rho;
            nodes.push(Point::new(rho * t.cos(), rho * t.sin()));
            let num = rho * rho + 2.0 * rho1 * rho1 - rho * rho2;
            kappa.push(num / (rho * rho + rho1 * rho1).powf(1.5));
        }
        (nodes, kappa)
    }

    #[test]
    fn spectral_curvature_converges() {
        let err = |n| {
            let (nodes, kappa) = analytic_curve(n);
            let c = ParamCurve::from_samples(nodes).unwrap();
            c.curvatures
                .iter()
                .zip(&kappa)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e16, e32) = (err(16), err(32));
        assert!(e16 > 1e-9, "{e16}");
        assert!(e32 * 10.0 <= e16, "{e16} {e32}");
        assert!(err(64) < 1e-11);
    }

    #[test]
    fn jaccard_basics() {
        let a = make_circle(disk(0.0, 0.0, 1.0), 256).unwrap();
        let far = make_circle(disk(5.0, 0.0, 1.0), 256).unwrap();
        assert_eq!(jaccard_distance(&a, &a, 512).unwrap(), 0.0);
        assert_eq!(jaccard_distance(&a, &far, 512).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_lens_oracle() {
        let a = make_circle(disk(0.0, 0.0, 1.0), 1024).unwrap();
        let b = make_circle(disk(1.0, 0.0, 1.0), 1024).unwrap();
        let lens = unit_lens_area();
        let want = 1.0 - lens / (TAU - lens);
        let got = jaccard_distance(&a, &b, DEFAULT_JACCARD_RESOLUTION).unwrap();
        assert!((got - want).abs() < 1e-2, "{got} vs {want}");
    }

    #[test]
    fn raster_agrees_with_winding_number() {
        let kite = target_curve(Target::Omega3, 128).unwrap();
        let grid = Grid::covering([&kite], 64).unwrap();
        let raster = Raster::new(&kite, &grid);
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let inside = kite.contains(grid.cell_center(ix, iy));
                assert_eq!(raster.contains_cell(ix, iy), inside, "cell {ix},{iy}");
            }
        }
    }
}
