//! Nyström solver for the sound-soft scattering problem through the
//! single-layer representation, and far-field evaluation.
//!
//! The kernel `Gamma(x - y) = -(i/4) H_0(k|x - y|)` is split as
//! `L1 ln(4 sin^2((t - s)/2)) + L2` with `L1 = J_0(k|x - y|) / (4 pi)`; the
//! logarithmic part is integrated with the exact trigonometric weights for
//! the periodic log kernel and the smooth part with the trapezoidal rule.
//! Unknowns are `mu_j = phi(t_j) |Y'(t_j)|`, which keeps the matrix
//! complex-symmetric.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeometryError, ParamCurve, Point};
use crate::specfun::{j0_y0, EULER_GAMMA};

/// Vacuum permittivity (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_8128e-12;
/// Vacuum permeability (H/m).
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
/// Operating frequency of the benchmark experiments (Hz).
pub const DEFAULT_FREQUENCY: f64 = 1.0e9;
/// Minimum nodes per wavelength of perimeter accepted by `assemble`.
pub const MIN_NODES_PER_WAVELENGTH: f64 = 10.0;
/// Condition estimates above this are reported as ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{nodes} nodes is too coarse for this curve; at least {required} are required")]
    ResolutionTooLow { nodes: usize, required: usize },
    #[error("single-layer system is numerically singular")]
    Singular,
    #[error("invalid wave parameters: {0}")]
    InvalidWave(String),
    #[error("need at least {min} directions, got {got}")]
    TooFewDirections { min: usize, got: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

/// Frequency, material constants and the derived wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveContext {
    pub frequency: f64,
    pub permittivity: f64,
    pub permeability: f64,
    pub wavenumber: f64,
    pub wavelength: f64,
}

impl WaveContext {
    pub fn new(frequency: f64, permittivity: f64, permeability: f64) -> Result<Self, ForwardError> {
        let wavenumber = TAU * frequency * (permittivity * permeability).sqrt();
        if !(wavenumber > 0.0) || !wavenumber.is_finite() {
            return Err(ForwardError::InvalidWave(format!(
                "f={frequency}, eps={permittivity}, mu={permeability}"
            )));
        }
        Ok(Self {
            frequency,
            permittivity,
            permeability,
            wavenumber,
            wavelength: TAU / wavenumber,
        })
    }

    /// Vacuum background at the given frequency.
    pub fn vacuum(frequency: f64) -> Result<Self, ForwardError> {
        Self::new(frequency, VACUUM_PERMITTIVITY, VACUUM_PERMEABILITY)
    }

    /// Vacuum background with the frequency chosen to produce wavenumber `k`.
    pub fn from_wavenumber(k: f64) -> Result<Self, ForwardError> {
        let frequency = k / (TAU * (VACUUM_PERMITTIVITY * VACUUM_PERMEABILITY).sqrt());
        Self::vacuum(frequency)
    }
}

impl Default for WaveContext {
    fn default() -> Self {
        Self::vacuum(DEFAULT_FREQUENCY).expect("default wave parameters are valid")
    }
}

/// Equispaced directions `theta_j = 2 pi j / J`, `j = 0..J`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    angles: Vec<f64>,
}

impl DirectionSet {
    pub fn new(count: usize) -> Result<Self, ForwardError> {
        if count < 4 {
            return Err(ForwardError::TooFewDirections { min: 4, got: count });
        }
        Ok(Self {
            angles: (0..count).map(|j| TAU * j as f64 / count as f64).collect(),
        })
    }

    /// Directions with every angle shifted by `offset`.
    pub fn rotated(&self, offset: f64) -> Self {
        Self {
            angles: self.angles.iter().map(|a| a + offset).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn unit(&self, j: usize) -> Point {
        let (s, c) = self.angles[j].sin_cos();
        Point::new(c, s)
    }

    pub fn units(&self) -> Vec<Point> {
        (0..self.len()).map(|j| self.unit(j)).collect()
    }
}

/// Far-field amplitudes `u_inf(x_j, -x_j)` measured by a single transducer.
#[derive(Debug, Clone, PartialEq)]
pub struct MonostaticData {
    pub directions: DirectionSet,
    pub values: Vec<Complex64>,
}

impl MonostaticData {
    pub fn new(directions: DirectionSet, values: Vec<Complex64>) -> Result<Self, ForwardError> {
        if values.len() != directions.len() {
            return Err(ForwardError::LengthMismatch {
                expected: directions.len(),
                actual: values.len(),
            });
        }
        Ok(Self { directions, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            directions: self.directions.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Multi-static response matrix: entry `(i, j)` is `u_inf(x_i, -x_j)`, so
/// column `j` belongs to the transducer at `x_j` and the diagonal is the
/// monostatic data.
#[derive(Debug, Clone, PartialEq)]
pub struct MsrMatrix {
    pub directions: DirectionSet,
    pub values: DMatrix<Complex64>,
}

impl MsrMatrix {
    pub fn diagonal(&self) -> MonostaticData {
        MonostaticData {
            directions: self.directions.clone(),
            values: (0..self.directions.len()).map(|j| self.values[(j, j)]).collect(),
        }
    }

    /// `max |u_inf(x, d) - u_inf(-d, -x)|`, which for this layout is the
    /// largest asymmetry of the matrix.
    pub fn reciprocity_residual(&self) -> f64 {
        let n = self.values.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)]).norm());
            }
        }
        worst
    }
}

/// Density `phi` on the nodes of the curve it was solved on.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDensity {
    pub values: Vec<Complex64>,
}

/// Smallest power of two giving 12 nodes per wavelength of perimeter, at least 128.
pub fn default_node_count(perimeter: f64, wave: &WaveContext) -> usize {
    let needed = (12.0 * perimeter / wave.wavelength).ceil() as usize;
    needed.next_power_of_two().max(128)
}

/// Nodes required by `assemble` for a curve of the given perimeter.
pub fn required_nodes(perimeter: f64, wave: &WaveContext) -> usize {
    (MIN_NODES_PER_WAVELENGTH * perimeter / wave.wavelength).ceil() as usize
}

/// Weights of the trapezoid-type rule for `ln(4 sin^2((t - s)/2))` on `N = 2n`
/// equispaced nodes, indexed by node offset.
fn log_weights(n_nodes: usize) -> Vec<f64> {
    let n = n_nodes / 2;
    let nf = n as f64;
    (0..n_nodes)
        .map(|d| {
            let delta = d as f64 * PI / nf;
            let series: f64 = (1..n).map(|m| (m as f64 * delta).cos() / m as f64).sum();
            -(TAU / nf) * series - PI / (nf * nf) * (nf * delta).cos()
        })
        .collect()
}

/// Discretised single-layer operator on a curve, factorised for repeated solves.
#[derive(Clone)]
pub struct SingleLayerSystem {
    pub curve: ParamCurve,
    pub wave: WaveContext,
    pub matrix: DMatrix<Complex64>,
    factorization: LU<Complex64, Dyn, Dyn>,
    pub condition_estimate: f64,
}

impl std::fmt::Debug for SingleLayerSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SingleLayerSystem")
            .field("nodes", &self.curve.len())
            .field("wavenumber", &self.wave.wavenumber)
            .field("condition_estimate", &self.condition_estimate)
            .finish()
    }
}

/// Builds and factorises the Nyström matrix.
pub fn assemble(curve: &ParamCurve, wave: &WaveContext) -> Result<SingleLayerSystem, ForwardError> {
    let mut system = assemble_unestimated(curve, wave)?;
    system.condition_estimate = system.estimate_condition()?;
    Ok(system)
}

/// `assemble` without the condition estimate (left as NaN), for inner loops
/// that only need the solution.
pub fn assemble_unestimated(
    curve: &ParamCurve,
    wave: &WaveContext,
) -> Result<SingleLayerSystem, ForwardError> {
    let n_nodes = curve.len();
    let required = required_nodes(curve.length(), wave);
    if n_nodes < required {
        return Err(ForwardError::ResolutionTooLow {
            nodes: n_nodes,
            required,
        });
    }
    let matrix = nystrom_matrix(curve, wave.wavenumber);
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ForwardError::Singular);
    }
    let factorization = matrix.clone().lu();
    if !factorization.is_invertible() {
        return Err(ForwardError::Singular);
    }
    Ok(SingleLayerSystem {
        curve: curve.clone(),
        wave: *wave,
        matrix,
        factorization,
        condition_estimate: f64::NAN,
    })
}

fn nystrom_matrix(curve: &ParamCurve, k: f64) -> DMatrix<Complex64> {
    let n_nodes = curve.len();
    let half = (n_nodes / 2) as f64;
    let smooth_w = PI / half;
    let r_weights = log_weights(n_nodes);
    let log_kernel: Vec<f64> = (0..n_nodes)
        .map(|d| {
            let s = (0.5 * d as f64 * PI / half).sin();
            (4.0 * s * s).ln()
        })
        .collect();
    let inv_4pi = 1.0 / (4.0 * PI);
    let mut a = DMatrix::from_element(n_nodes, n_nodes, ZERO);
    for i in 0..n_nodes {
        let l2_diag = Complex64::new(
            (EULER_GAMMA + (0.5 * k * curve.speed[i]).ln()) / TAU,
            -0.25,
        );
        a[(i, i)] = Complex64::new(r_weights[0] * inv_4pi, 0.0) + l2_diag * smooth_w;
        let xi = curve.nodes[i];
        for j in i + 1..n_nodes {
            let d = j - i;
            let dist = (xi - curve.nodes[j]).norm();
            let (j0, y0) = j0_y0(k * dist);
            let l1 = j0 * inv_4pi;
            let gamma = Complex64::new(0.25 * y0, -0.25 * j0);
            let l2 = gamma - l1 * log_kernel[d];
            let value = l2 * smooth_w + l1 * r_weights[d];
            a[(i, j)] = value;
            a[(j, i)] = value;
        }
    }
    a
}

impl SingleLayerSystem {
    pub fn len(&self) -> usize {
        self.curve.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curve.is_empty()
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.condition_estimate > ILL_CONDITIONED
    }

    fn solve_columns(&self, rhs: DMatrix<Complex64>) -> Result<DMatrix<Complex64>, ForwardError> {
        let out = self.factorization.solve(&rhs).ok_or(ForwardError::Singular)?;
        if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ForwardError::Singular);
        }
        Ok(out)
    }

    fn solve_vector(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>, ForwardError> {
        let b = DMatrix::from_column_slice(rhs.len(), 1, rhs);
        Ok(self.solve_columns(b)?.as_slice().to_vec())
    }

    /// Hager–Higham estimate of the 1-norm condition number. The matrix is
    /// complex-symmetric, so `A^H y = x` is solved as `A conj(y) = conj(x)`.
    fn estimate_condition(&self) -> Result<f64, ForwardError> {
        let n = self.len();
        let norm_a = (0..n)
            .map(|j| self.matrix.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut x = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        let mut estimate = 0.0;
        for iter in 0..5 {
            let y = self.solve_vector(&x)?;
            let norm_y: f64 = y.iter().map(|z| z.norm()).sum();
            if iter > 0 && norm_y <= estimate {
                break;
            }
            estimate = norm_y;
            let signs: Vec<Complex64> = y
                .iter()
                .map(|z| {
                    let r = z.norm();
                    if r == 0.0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        z / r
                    }
                })
                .collect();
            let conj_signs: Vec<Complex64> = signs.iter().map(|z| z.conj()).collect();
            let z: Vec<Complex64> = self.solve_vector(&conj_signs)?.iter().map(|v| v.conj()).collect();
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if iter > 0 && zmax <= ztx {
                break;
            }
            x = vec![ZERO; n];
            x[jmax] = Complex64::new(1.0, 0.0);
        }
        // alternating-sign probe guards against the estimator stalling
        let probe: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(s * (1.0 + i as f64 / (n as f64 - 1.0)), 0.0)
            })
            .collect();
        let alt: f64 = self.solve_vector(&probe)?.iter().map(|z| z.norm()).sum::<f64>() * 2.0
            / (3.0 * n as f64);
        Ok(norm_a * estimate.max(alt))
    }

    /// Incident plane wave `exp(i k d . x)` at the nodes.
    pub fn incident(&self, d: Point) -> Vec<Complex64> {
        let k = self.wave.wavenumber;
        self.curve
            .nodes
            .iter()
            .map(|x| Complex64::from_polar(1.0, k * d.dot(x)))
            .collect()
    }

    /// Solves `S[phi] = exp(i k d . x)` on the boundary.
    pub fn solve_density(&self, d: Point) -> Result<BoundaryDensity, ForwardError> {
        Ok(self.solve_densities(&[d])?.remove(0))
    }

    /// Densities for several incident directions with one batched solve.
    pub fn solve_densities(&self, dirs: &[Point]) -> Result<Vec<BoundaryDensity>, ForwardError> {
        let n = self.len();
        let mut rhs = DMatrix::from_element(n, dirs.len(), ZERO);
        for (c, d) in dirs.iter().enumerate() {
            for (r, v) in self.incident(*d).into_iter().enumerate() {
                rhs[(r, c)] = v;
            }
        }
        let mu = self.solve_columns(rhs)?;
        Ok((0..dirs.len())
            .map(|c| BoundaryDensity {
                values: mu
                    .column(c)
                    .iter()
                    .zip(&self.curve.speed)
                    .map(|(m, s)| m / s)
                    .collect(),
            })
            .collect())
    }

    /// Applies the discretised operator: `S[phi]` at the nodes.
    pub fn apply(&self, density: &BoundaryDensity) -> Vec<Complex64> {
        let mu: DVector<Complex64> = DVector::from_iterator(
            self.len(),
            density
                .values
                .iter()
                .zip(&self.curve.speed)
                .map(|(p, s)| p * s),
        );
        (&self.matrix * mu).iter().copied().collect()
    }

    /// `u_inf(x_hat) = e^{i pi/4} / sqrt(8 pi k) * integral exp(-i k x_hat . y) phi(y) ds(y)`.
    pub fn far_field(&self, density: &BoundaryDensity, x_hat: Point) -> Complex64 {
        let k = self.wave.wavenumber;
        let w = self.curve.parameter_weight();
        let integral: Complex64 = self
            .curve
            .nodes
            .iter()
            .zip(&self.curve.speed)
            .zip(&density.values)
            .map(|((y, s), phi)| Complex64::from_polar(w * s, -k * x_hat.dot(y)) * phi)
            .sum();
        far_field_prefactor(k) * integral
    }
}

/// `e^{i pi/4} / sqrt(8 pi k)`.
pub fn far_field_prefactor(k: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (8.0 * PI * k).sqrt(), FRAC_PI_4)
}

/// One assembly, `J` solves with `d = -x_j`, each evaluated at `x_j`.
pub fn monostatic_sweep(
    curve: &ParamCurve,
    wave: &WaveContext,
    dirs: &DirectionSet,
) -> Result<MonostaticData, ForwardError> {
    let system = assemble(curve, wave)?;
    monostatic_from_system(&system, dirs)
}

/// Monostatic data from an already factorised system.
pub fn monostatic_from_system(
    system: &SingleLayerSystem,
    dirs: &DirectionSet,
) -> Result<MonostaticData, ForwardError> {
    let units = dirs.units();
    let incident: Vec<Point> = units.iter().map(|x| -x).collect();
    let densities = system.solve_densities(&incident)?;
    let values = densities
        .par_iter()
        .zip(units.par_iter())
        .map(|(phi, x)| system.far_field(phi, *x))
        .collect();
    MonostaticData::new(dirs.clone(), values)
}

/// Full `J x J` response: entry `(i, j)` is `u_inf(x_i, -x_j)`.
pub fn msr_matrix(
    curve: &ParamCurve,
    wave: &WaveContext,
    dirs: &DirectionSet,
) -> Result<MsrMatrix, ForwardError> {
    let system = assemble(curve, wave)?;
    let units = dirs.units();
    let incident: Vec<Point> = units.iter().map(|x| -x).collect();
    let densities = system.solve_densities(&incident)?;
    let columns: Vec<Vec<Complex64>> = densities
        .par_iter()
        .map(|phi| units.iter().map(|x| system.far_field(phi, *x)).collect())
        .collect();
    let n = dirs.len();
    let values = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    Ok(MsrMatrix {
        directions: dirs.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_circle, node_parameter, target_curve, InitialDisk, Target};

    fn wave() -> WaveContext {
        WaveContext::default()
    }

    #[test]
    fn wavenumber_of_one_gigahertz() {
        let w = wave();
        assert!((w.wavenumber - 20.9585).abs() < 1e-4, "{}", w.wavenumber);
        assert!((w.wavelength - 0.2998).abs() < 1e-4);
        let direct = TAU * w.frequency * (w.permittivity * w.permeability).sqrt();
        assert_eq!(w.wavenumber, direct);
        assert!(WaveContext::vacuum(-1.0).is_err());
    }

    #[test]
    fn log_weights_integrate_cosines_exactly() {
        // int_0^{2pi} ln(4 sin^2(s/2)) cos(m s) ds = -2 pi / m, m >= 1; 0 for m = 0.
        let n_nodes = 32;
        let r = log_weights(n_nodes);
        for m in 0..n_nodes / 2 {
            let q: f64 = (0..n_nodes)
                .map(|d| r[d] * (m as f64 * node_parameter(d, n_nodes)).cos())
                .sum();
            let want = if m == 0 { 0.0 } else { -TAU / m as f64 };
            assert!((q - want).abs() < 1e-12, "m={m}: {q} vs {want}");
        }
    }

    #[test]
    fn matrix_is_complex_symmetric() {
        let curve = target_curve(Target::Omega3, 128).unwrap();
        let sys = assemble(&curve, &wave()).unwrap();
        let max = sys.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let n = sys.len();
        for i in 0..n {
            for j in 0..n {
                assert!((sys.matrix[(i, j)] - sys.matrix[(j, i)]).norm() <= 1e-12 * max);
            }
        }
        assert!(sys.condition_estimate.is_finite() && sys.condition_estimate > 1.0);
        assert!(!sys.is_ill_conditioned());
    }

    #[test]
    fn refuses_coarse_discretisation() {
        let big = make_circle(InitialDisk::new(Point::zeros(), 2.0).unwrap(), 64).unwrap();
        match assemble(&big, &wave()) {
            Err(ForwardError::ResolutionTooLow { nodes: 64, required }) => {
                assert!(required > 64)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn density_residual_and_factorisation() {
        let curve = target_curve(Target::Omega2, 128).unwrap();
        let sys = assemble(&curve, &wave()).unwrap();
        let d = Point::new(0.6, -0.8);
        let phi = sys.solve_density(d).unwrap();
        let lhs = sys.apply(&phi);
        let rhs = sys.incident(d);
        let res = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(res <= 1e-10, "{res}");
    }

    #[test]
    fn density_rotates_with_the_incident_direction() {
        let n = 64;
        let curve = make_circle(InitialDisk::new(Point::zeros(), 0.05).unwrap(), n).unwrap();
        let sys = assemble(&curve, &wave()).unwrap();
        let shift = 5;
        let angle = node_parameter(shift, n);
        let d0 = Point::new(0.3f64.cos(), 0.3f64.sin());
        let d1 = Point::new((0.3 + angle).cos(), (0.3 + angle).sin());
        let p0 = sys.solve_density(d0).unwrap();
        let p1 = sys.solve_density(d1).unwrap();
        for i in 0..n {
            assert!((p1.values[(i + shift) % n] - p0.values[i]).norm() < 1e-9 * p0.values[i].norm().max(1.0));
        }
    }

    #[test]
    fn centred_disk_monostatic_is_constant() {
        let curve = make_circle(InitialDisk::new(Point::zeros(), 0.04).unwrap(), 128).unwrap();
        let data = monostatic_sweep(&curve, &wave(), &DirectionSet::new(36).unwrap()).unwrap();
        assert_eq!(data.len(), 36);
        for v in &data.values {
            assert!((v - data.values[0]).norm() < 1e-8);
        }
    }

    #[test]
    fn msr_diagonal_is_the_monostatic_sweep() {
        let curve = target_curve(Target::Omega2, 128).unwrap();
        let dirs = DirectionSet::new(12).unwrap();
        let mono = monostatic_sweep(&curve, &wave(), &dirs).unwrap();
        let msr = msr_matrix(&curve, &wave(), &dirs).unwrap();
        assert_eq!(msr.diagonal().values, mono.values);
    }

    #[test]
    fn disk_msr_modulus_depends_on_relative_angle_only() {
        let curve = target_curve(Target::Omega1, 128).unwrap();
        let dirs = DirectionSet::new(12).unwrap();
        let msr = msr_matrix(&curve, &wave(), &dirs).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let a = msr.values[(i, j)].norm();
                let b = msr.values[((i + 1) % 12, (j + 1) % 12)].norm();
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
