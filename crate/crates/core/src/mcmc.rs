//! Systematic-scan Metropolis–Hastings sampler over shape coefficients with
//! a pCN proposal `c' = sqrt(1 - beta) c + sqrt(beta) xi`.
//!
//! Iterations are numbered from 1; iteration `m` updates the block of `L`
//! coordinates `(l + (m - 1) L) mod J~`, so one scan is `n = J~ / L`
//! iterations and every coordinate is touched exactly once per scan.

use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::basis::{BasisError, ShapeBasis, ShapeCoefficients};
use crate::forward::{assemble_unestimated, monostatic_from_system, ForwardError, MonostaticData, WaveContext};
use crate::geometry::{jaccard_distance, GeometryError, Grid, ParamCurve, Point, Raster};

/// Name of the generator driving the chain, written to every log.
pub const RNG_NAME: &str = "ChaCha20Rng (rand_chacha 0.9)";
/// Hard limit on the number of scans.
pub const MAX_SCANS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McmcError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("forward solve failed for coefficients {coefficients:?}: {source}")]
    Forward {
        source: ForwardError,
        coefficients: Vec<f64>,
    },
    #[error("initial state has zero probability")]
    ZeroInitialEnergy,
    #[error("scan window ({n1}, {n2}] is not covered by {recorded} recorded scans")]
    InsufficientHistory { n1: usize, n2: usize, recorded: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    /// pCN mixing weight in (0, 1).
    pub beta: f64,
    /// Misfit temperature; `f64::INFINITY` switches the misfit off.
    pub sigma: f64,
    /// Weight of the curvature regulariser.
    pub tau: f64,
    /// Accepted for completeness of the parameter set; it does not enter the energy.
    pub lambda: f64,
    /// Coordinates updated per iteration.
    pub block_size: usize,
    /// Scan budget.
    pub max_scans: usize,
    /// Earliest scan at which the stopping rule may fire.
    pub min_scans: usize,
    /// Number of trailing scan shapes compared by the stopping rule.
    pub stop_window: usize,
    /// Largest pairwise Jaccard distance accepted as stable.
    pub stop_tol: f64,
    /// Raster resolution of the stopping comparisons.
    pub stop_resolution: usize,
    /// Trailing scans averaged into the mean shape.
    pub mean_window: usize,
    /// Boundary nodes of the forward model.
    pub nodes: usize,
    /// Raster resolution of the per-scan distance to a reference curve.
    pub log_resolution: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            beta: 2e-4,
            sigma: 1e-4,
            tau: 0.0,
            lambda: 1.0,
            block_size: 1,
            max_scans: MAX_SCANS,
            min_scans: 1000,
            stop_window: 1000,
            stop_tol: 0.02,
            stop_resolution: 2048,
            mean_window: 1000,
            nodes: 128,
            log_resolution: 512,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self, j_tilde: usize) -> Result<(), McmcError> {
        let fail = |msg: String| Err(McmcError::Config(msg));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.sigma > 0.0) {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return fail(format!("tau must be non-negative, got {}", self.tau));
        }
        if self.block_size == 0 || j_tilde == 0 || j_tilde % self.block_size != 0 {
            return fail(format!(
                "block size {} must divide the basis size {j_tilde}",
                self.block_size
            ));
        }
        if self.max_scans == 0 || self.max_scans > MAX_SCANS {
            return fail(format!("scan budget must be in 1..={MAX_SCANS}, got {}", self.max_scans));
        }
        if self.stop_window < 2 || self.min_scans < self.stop_window || self.mean_window == 0 {
            return fail(format!(
                "need 2 <= stop_window <= min_scans and mean_window >= 1 (got {}, {}, {})",
                self.stop_window, self.min_scans, self.mean_window
            ));
        }
        if !(self.stop_tol >= 0.0) || self.stop_resolution < 2 || self.log_resolution < 2 {
            return fail("stopping tolerance and resolutions must be valid".into());
        }
        if self.nodes < 8 || self.nodes % 2 != 0 {
            return fail(format!("model node count must be even and >= 8, got {}", self.nodes));
        }
        Ok(())
    }

    /// Iterations per scan.
    pub fn scan_length(&self, j_tilde: usize) -> usize {
        j_tilde / self.block_size
    }
}

/// Log-energy and its parts for one coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub log_pi: f64,
    pub misfit: f64,
    pub regularizer: f64,
}

/// Everything needed to evaluate `log pi(c)`.
#[derive(Debug, Clone)]
pub struct EnergyModel<'a> {
    pub basis: &'a ShapeBasis,
    pub data: &'a MonostaticData,
    pub wave: WaveContext,
    pub sigma: f64,
    pub tau: f64,
}

impl EnergyModel<'_> {
    /// Boundary of the domain described by `c`.
    pub fn curve(&self, c: &ShapeCoefficients) -> Result<ParamCurve, McmcError> {
        Ok(self.basis.domain(c)?.deform()?)
    }

    /// `log pi = -(1 / 2 sigma) sum_j |u_meas - u_model|^2 - tau R` over the
    /// measured directions.
    pub fn energy(&self, c: &ShapeCoefficients) -> Result<Energy, McmcError> {
        let curve = self.curve(c)?;
        let regularizer = curve.regularizer();
        let misfit = if self.sigma.is_infinite() {
            0.0
        } else {
            let forward = |curve: &ParamCurve| -> Result<MonostaticData, ForwardError> {
                let system = assemble_unestimated(curve, &self.wave)?;
                monostatic_from_system(&system, &self.data.directions)
            };
            let model = forward(&curve).map_err(|source| McmcError::Forward {
                source,
                coefficients: c.0.clone(),
            })?;
            self.data
                .values
                .iter()
                .zip(&model.values)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum()
        };
        let misfit_term = if self.sigma.is_infinite() { 0.0 } else { misfit / (2.0 * self.sigma) };
        let reg_term = if self.tau == 0.0 { 0.0 } else { self.tau * regularizer };
        Ok(Energy {
            log_pi: -misfit_term - reg_term,
            misfit,
            regularizer,
        })
    }
}

/// Current iterate of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Iterations completed.
    pub m: usize,
    pub c: ShapeCoefficients,
    pub log_pi: f64,
    pub last_r: f64,
    pub accept_count: usize,
    /// State at the end of each completed scan.
    pub history: Vec<ShapeCoefficients>,
}

impl ChainState {
    pub fn new(c: ShapeCoefficients, energy: Energy) -> Self {
        Self {
            m: 0,
            c,
            log_pi: energy.log_pi,
            last_r: energy.regularizer,
            accept_count: 0,
            history: Vec::new(),
        }
    }
}

/// Indices updated at iteration `m` (1-based).
pub fn block_indices(m: usize, block_size: usize, j_tilde: usize) -> impl Iterator<Item = usize> {
    let base = (m - 1) * block_size;
    (0..block_size).map(move |l| (l + base) % j_tilde)
}

/// pCN proposal for iteration `state.m + 1`; draws exactly `L` normals.
pub fn propose<R: Rng + ?Sized>(state: &ChainState, cfg: &McmcConfig, rng: &mut R) -> ShapeCoefficients {
    let mut next = state.c.clone();
    let keep = (1.0 - cfg.beta).sqrt();
    let kick = cfg.beta.sqrt();
    for j in block_indices(state.m + 1, cfg.block_size, next.len()) {
        let xi: f64 = rng.sample(StandardNormal);
        next.0[j] = keep * state.c.0[j] + kick * xi;
    }
    next
}

/// Acceptance rule `alpha >= y` with `alpha = exp(log_alpha)`.
pub fn accept(log_alpha: f64, y: f64) -> bool {
    if log_alpha >= 0.0 {
        return true;
    }
    log_alpha.exp() >= y
}

/// Outcome of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub m: usize,
    pub accepted: bool,
    pub proposed: Option<Energy>,
    pub log_pi: f64,
    pub regularizer: f64,
    pub uniform: f64,
    /// Set when the proposal could not be evaluated and was rejected.
    pub failed: bool,
}

/// One Metropolis–Hastings iteration. A proposal whose forward solve fails
/// is treated as having zero probability.
pub fn step<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &EnergyModel<'_>,
    cfg: &McmcConfig,
    rng: &mut R,
) -> StepRecord {
    let proposal = propose(state, cfg, rng);
    let y: f64 = rng.random();
    state.m += 1;
    let energy = model.energy(&proposal).ok();
    let log_alpha = energy.map_or(f64::NEG_INFINITY, |e| e.log_pi - state.log_pi);
    let accepted = energy.is_some() && accept(log_alpha, y);
    if accepted {
        let e = energy.expect("accepted proposals have an energy");
        state.c = proposal;
        state.log_pi = e.log_pi;
        state.last_r = e.regularizer;
        state.accept_count += 1;
    }
    StepRecord {
        m: state.m,
        accepted,
        proposed: energy,
        log_pi: state.log_pi,
        regularizer: state.last_r,
        uniform: y,
        failed: energy.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Converged { scans: usize },
    Unconverged { scans: usize },
}

impl ChainStatus {
    pub fn scans(&self) -> usize {
        match *self {
            ChainStatus::Converged { scans } | ChainStatus::Unconverged { scans } => scans,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, ChainStatus::Converged { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    pub accepted: bool,
    pub log_pi: f64,
    pub regularizer: f64,
    /// Distance to the reference curve, logged at scan boundaries only.
    pub jaccard: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    pub status: ChainStatus,
    pub state: ChainState,
    pub log: Vec<IterationRecord>,
    pub failed_proposals: usize,
    pub scan_length: usize,
    pub seed: u64,
    /// Mean of the trailing scan coefficients.
    pub mean: ShapeCoefficients,
}

impl ChainResult {
    pub fn history(&self) -> &[ShapeCoefficients] {
        &self.state.history
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.state.accept_count as f64 / self.state.m.max(1) as f64
    }

    /// Writes `m,accepted,log_pi,R,d_J` with a comment line naming the generator.
    pub fn write_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# rng={RNG_NAME} seed={} scan_length={} status={:?}",
            self.seed, self.scan_length, self.status
        )?;
        writeln!(w, "m,accepted,log_pi,R,d_J")?;
        for r in &self.log {
            let dj = r.jaccard.map(|v| format!("{v:.16e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{:.16e},{:.16e},{}",
                r.m,
                u8::from(r.accepted),
                r.log_pi,
                r.regularizer,
                dj
            )?;
        }
        Ok(())
    }

    /// Writes one row `scan,c_0,...` per recorded scan.
    pub fn write_snapshots<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.mean.len();
        let header: Vec<String> = (0..n).map(|j| format!("c{j}")).collect();
        writeln!(w, "scan,{}", header.join(","))?;
        for (s, c) in self.history().iter().enumerate() {
            let row: Vec<String> = c.0.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{},{}", s + 1, row.join(","))?;
        }
        Ok(())
    }
}

/// Mean of the last `window` entries.
pub fn mean_coefficients(history: &[ShapeCoefficients], window: usize) -> Option<ShapeCoefficients> {
    let tail = &history[history.len().saturating_sub(window)..];
    let first = tail.first()?;
    let mut mean = vec![0.0; first.len()];
    for c in tail {
        for (m, v) in mean.iter_mut().zip(&c.0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= tail.len() as f64);
    Some(ShapeCoefficients(mean))
}

/// Rasterised trailing window of scan shapes for the stopping rule.
struct StopWindow {
    resolution: usize,
    capacity: usize,
    grid: Option<Grid>,
    entries: std::collections::VecDeque<WindowEntry>,
}

#[derive(Clone)]
struct WindowEntry {
    coefficients: ShapeCoefficients,
    curve: Arc<ParamCurve>,
    raster: Option<Arc<Raster>>,
    area: u64,
}

impl StopWindow {
    fn new(capacity: usize, resolution: usize) -> Self {
        Self {
            resolution,
            capacity,
            grid: None,
            entries: std::collections::VecDeque::with_capacity(capacity + 1),
        }
    }

    fn push(&mut self, c: &ShapeCoefficients, model: &EnergyModel<'_>) -> Result<(), McmcError> {
        let entry = match self.entries.back() {
            Some(last) if last.coefficients == *c => last.clone(),
            _ => {
                let curve = Arc::new(model.curve(c)?);
                WindowEntry {
                    coefficients: c.clone(),
                    curve,
                    raster: None,
                    area: 0,
                }
            }
        };
        self.entries.push_back(entry);
        if self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    fn fits(grid: &Grid, curve: &ParamCurve) -> bool {
        let (lo, hi) = curve.bounding_box();
        let top = grid.origin + Point::new(grid.dx * grid.nx as f64, grid.dy * grid.ny as f64);
        lo.x > grid.origin.x && lo.y > grid.origin.y && hi.x < top.x && hi.y < top.y
    }

    /// Makes sure every entry has a raster on a common grid that contains all
    /// of them, rebuilding the grid with a margin when a shape leaves it.
    fn rasterize(&mut self) -> Result<(), McmcError> {
        let all_fit = self
            .grid
            .as_ref()
            .is_some_and(|g| self.entries.iter().all(|e| Self::fits(g, &e.curve)));
        if !all_fit {
            let cover = Grid::covering(self.entries.iter().map(|e| e.curve.as_ref()), 2)?;
            let lo = cover.origin;
            let hi = lo + Point::new(cover.dx * 2.0, cover.dy * 2.0);
            let mid = (lo + hi) * 0.5;
            let half = (hi - lo).max() * 0.5 * 1.25;
            let grid = Grid::new(
                mid - Point::new(half, half),
                mid + Point::new(half, half),
                self.resolution,
                self.resolution,
            )?;
            self.grid = Some(grid);
            for e in self.entries.iter_mut() {
                e.raster = None;
            }
        }
        let grid = self.grid.expect("grid was just set");
        let mut prev: Option<(ShapeCoefficients, Arc<Raster>, u64)> = None;
        for e in self.entries.iter_mut() {
            if e.raster.is_some() {
                prev = e.raster.clone().map(|r| (e.coefficients.clone(), r, e.area));
                continue;
            }
            let (raster, area) = match &prev {
                Some((c, r, a)) if *c == e.coefficients => (r.clone(), *a),
                _ => {
                    let r = Raster::new(&e.curve, &grid);
                    let a = r.area_cells();
                    (Arc::new(r), a)
                }
            };
            e.raster = Some(raster.clone());
            e.area = area;
            prev = Some((e.coefficients.clone(), raster, area));
        }
        Ok(())
    }

    fn distance(a: &WindowEntry, b: &WindowEntry) -> f64 {
        let (ra, rb) = (a.raster.as_ref().unwrap(), b.raster.as_ref().unwrap());
        if Arc::ptr_eq(ra, rb) {
            return 0.0;
        }
        let inter = ra.intersection_cells(rb);
        let union = a.area + b.area - inter;
        if union == 0 {
            return 0.0;
        }
        1.0 - inter as f64 / union as f64
    }

    /// Whether every pair in the window is within `tol`. Distances to the
    /// newest shape bound all pairs through the triangle inequality; the
    /// exact pairwise check only runs when those bounds are inconclusive.
    fn is_stable(&mut self, tol: f64) -> Result<bool, McmcError> {
        self.rasterize()?;
        let last = self.entries.back().expect("window is non-empty").clone();
        let to_last: Vec<f64> = self.entries.iter().map(|e| Self::distance(e, &last)).collect();
        let max = to_last.iter().copied().fold(0.0, f64::max);
        let min = to_last.iter().copied().fold(f64::INFINITY, f64::min);
        if max > tol || max - min > tol {
            return Ok(false);
        }
        if 2.0 * max <= tol {
            return Ok(true);
        }
        let entries: Vec<&WindowEntry> = self.entries.iter().collect();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                if to_last[i] + to_last[j] <= tol {
                    continue;
                }
                if Self::distance(entries[i], entries[j]) > tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Runs the chain from `c = 0` until the trailing window of scan shapes is
/// stable or the scan budget is spent. When `reference` is given, the
/// Jaccard distance of each scan shape to it is logged.
pub fn run(
    basis: &ShapeBasis,
    data: &MonostaticData,
    wave: &WaveContext,
    cfg: &McmcConfig,
    reference: Option<&ParamCurve>,
) -> Result<ChainResult, McmcError> {
    let j_tilde = basis.len();
    cfg.validate(j_tilde)?;
    if basis.node_count() != cfg.nodes {
        return Err(McmcError::Config(format!(
            "basis has {} nodes but the model uses {}",
            basis.node_count(),
            cfg.nodes
        )));
    }
    let model = EnergyModel {
        basis,
        data,
        wave: *wave,
        sigma: cfg.sigma,
        tau: cfg.tau,
    };
    let c0 = ShapeCoefficients::zeros(j_tilde);
    let e0 = model.energy(&c0)?;
    if e0.log_pi == f64::NEG_INFINITY {
        return Err(McmcError::ZeroInitialEnergy);
    }
    let mut state = ChainState::new(c0, e0);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let scan_length = cfg.scan_length(j_tilde);
    let mut log = Vec::with_capacity(scan_length * cfg.max_scans.min(1000));
    let mut failed = 0;
    let mut window = StopWindow::new(cfg.stop_window, cfg.stop_resolution);
    let mut status = ChainStatus::Unconverged { scans: cfg.max_scans };
    'scans: for scan in 1..=cfg.max_scans {
        for it in 0..scan_length {
            let rec = step(&mut state, &model, cfg, &mut rng);
            failed += usize::from(rec.failed);
            let mut entry = IterationRecord {
                m: rec.m,
                accepted: rec.accepted,
                log_pi: rec.log_pi,
                regularizer: rec.regularizer,
                jaccard: None,
            };
            if it + 1 == scan_length {
                if let Some(truth) = reference {
                    let curve = model.curve(&state.c)?;
                    entry.jaccard = jaccard_distance(&curve, truth, cfg.log_resolution).ok();
                }
            }
            log.push(entry);
        }
        state.history.push(state.c.clone());
        if scan + cfg.stop_window > cfg.min_scans || scan >= cfg.min_scans {
            window.push(&state.c, &model)?;
        }
        if scan >= cfg.min_scans && window.is_full() && window.is_stable(cfg.stop_tol)? {
            status = ChainStatus::Converged { scans: scan };
            break 'scans;
        }
    }
    let mean = mean_coefficients(&state.history, cfg.mean_window).expect("at least one scan ran");
    Ok(ChainResult {
        status,
        state,
        log,
        failed_proposals: failed,
        scan_length,
        seed: cfg.seed,
        mean,
    })
}

/// Membership frequency of grid cells over scan shapes `n1 < s <= n2`
/// (1-based scan numbers).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub grid: Grid,
    /// Row-major values, `values[iy * nx + ix]`.
    pub values: Vec<f64>,
}

impl FrequencyGrid {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.nx + ix]
    }

    /// Writes `x,y,value` at cell centres.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,value")?;
        for iy in 0..self.grid.ny {
            for ix in 0..self.grid.nx {
                let p = self.grid.cell_center(ix, iy);
                writeln!(w, "{:.16e},{:.16e},{:.16e}", p.x, p.y, self.value(ix, iy))?;
            }
        }
        Ok(())
    }
}

pub fn frequency_contour(
    basis: &ShapeBasis,
    history: &[ShapeCoefficients],
    n1: usize,
    n2: usize,
    grid: Grid,
) -> Result<FrequencyGrid, McmcError> {
    if n1 >= n2 || n2 > history.len() {
        return Err(McmcError::InsufficientHistory {
            n1,
            n2,
            recorded: history.len(),
        });
    }
    let mut counts = vec![0u32; grid.nx * grid.ny];
    let mut prev: Option<(&ShapeCoefficients, Raster)> = None;
    for c in &history[n1..n2] {
        let raster = match prev.take() {
            Some((pc, r)) if pc == c => r,
            _ => Raster::new(&basis.domain(c)?.deform()?, &grid),
        };
        for (iy, row) in raster.rows.iter().enumerate() {
            for &(a, b) in row {
                for ix in a..b {
                    counts[iy * grid.nx + ix as usize] += 1;
                }
            }
        }
        prev = Some((c, raster));
    }
    let total = (n2 - n1) as f64;
    Ok(FrequencyGrid {
        grid,
        values: counts.into_iter().map(|v| v as f64 / total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_derived_basis, build_fourier_basis};
    use crate::forward::{monostatic_sweep, DirectionSet};
    use crate::geometry::{make_circle, InitialDisk};
    use std::collections::HashSet;

    fn state(n: usize) -> ChainState {
        ChainState::new(
            ShapeCoefficients((0..n).map(|j| j as f64 * 0.1 - 0.3).collect()),
            Energy {
                log_pi: 0.0,
                misfit: 0.0,
                regularizer: 0.0,
            },
        )
    }

    #[test]
    fn scan_covers_every_coordinate_once() {
        for (j_tilde, l) in [(72, 12), (72, 1), (22, 2), (10, 5)] {
            let n = j_tilde / l;
            for start in [1, 5, 17] {
                let mut seen = Vec::new();
                for m in start..start + n {
                    seen.extend(block_indices(m, l, j_tilde));
                }
                let set: HashSet<usize> = seen.iter().copied().collect();
                assert_eq!(seen.len(), j_tilde);
                assert_eq!(set.len(), j_tilde);
            }
        }
    }

    #[test]
    fn proposal_touches_only_the_current_block() {
        let cfg = McmcConfig {
            block_size: 12,
            ..McmcConfig::default()
        };
        let mut s = state(72);
        s.m = 7;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = propose(&s, &cfg, &mut rng);
        let block: HashSet<usize> = block_indices(8, 12, 72).collect();
        for j in 0..72 {
            if block.contains(&j) {
                assert_ne!(p.0[j], s.c.0[j]);
            } else {
                assert_eq!(p.0[j], s.c.0[j]);
            }
        }
    }

    #[test]
    fn proposal_limits_in_beta() {
        let s = state(6);
        let tiny = McmcConfig {
            beta: 1e-300,
            ..McmcConfig::default()
        };
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(propose(&s, &tiny, &mut rng), s.c);
        let full = McmcConfig {
            beta: 1.0 - 1e-17,
            ..McmcConfig::default()
        };
        let mut a = ChaCha20Rng::seed_from_u64(9);
        let mut b = ChaCha20Rng::seed_from_u64(9);
        let p = propose(&s, &full, &mut a);
        let xi: f64 = b.sample(StandardNormal);
        assert!((p.0[0] - xi).abs() < 1e-15);
    }

    #[test]
    fn acceptance_rule() {
        assert!(accept(0.0, 1.0));
        assert!(accept(3.0, 0.999));
        assert!(!accept(f64::NEG_INFINITY, 1e-300));
        assert!(accept(f64::NEG_INFINITY, 0.0));
        assert!(accept((0.5f64).ln(), 0.5));
        assert!(!accept((0.5f64).ln(), 0.5000001));
    }

    #[test]
    fn colder_chains_accept_fewer_uphill_moves() {
        // replay one recorded trace of (misfit change, uniform) under two temperatures
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let trace: Vec<(f64, f64)> = (0..2000)
            .map(|_| (rng.random_range(-1e-3..1e-3), rng.random::<f64>()))
            .collect();
        let uphill = |sigma: f64| -> HashSet<usize> {
            trace
                .iter()
                .enumerate()
                .filter(|(_, (dm, y))| *dm > 0.0 && accept(-dm / (2.0 * sigma), *y))
                .map(|(i, _)| i)
                .collect()
        };
        let cold = uphill(1e-4);
        let warm = uphill(1e-3);
        assert!(cold.is_subset(&warm));
        assert!(cold.len() < warm.len());
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate(72).is_ok());
        let bad_l = McmcConfig {
            block_size: 7,
            ..McmcConfig::default()
        };
        assert!(bad_l.validate(72).is_err());
        let bad_beta = McmcConfig {
            beta: 1.0,
            ..McmcConfig::default()
        };
        assert!(bad_beta.validate(72).is_err());
        let over_cap = McmcConfig {
            max_scans: 5001,
            ..McmcConfig::default()
        };
        assert!(over_cap.validate(72).is_err());
    }

    #[test]
    fn energy_is_one_on_exact_data_and_regularizer_is_circle_value() {
        let wave = WaveContext::default();
        let disk = InitialDisk::new(Point::new(0.01, 0.0), 0.03).unwrap();
        let dirs = DirectionSet::new(36).unwrap();
        let n = 64;
        let basis = build_derived_basis(disk, &wave, &dirs, n).unwrap();
        let data = monostatic_sweep(&make_circle(disk, n).unwrap(), &wave, &dirs).unwrap();
        let model = EnergyModel {
            basis: &basis,
            data: &data,
            wave,
            sigma: 1e-4,
            tau: 0.0,
        };
        let e = model.energy(&ShapeCoefficients::zeros(basis.len())).unwrap();
        assert_eq!(e.log_pi, 0.0);
        assert!((e.regularizer - 4.0 * std::f64::consts::PI.powi(2)).abs() < 1e-8 * e.regularizer);
        let mut c = ShapeCoefficients::zeros(basis.len());
        c.0[0] = 0.1;
        let moved = model.energy(&c).unwrap();
        assert!(moved.log_pi < 0.0 && moved.misfit > 0.0);
        // recomputation is exact
        assert_eq!(model.energy(&c).unwrap(), moved);
    }

    #[test]
    fn fixed_seed_is_reproducible_and_history_is_per_scan() {
        let wave = WaveContext::default();
        let disk = InitialDisk::new(Point::zeros(), 0.02).unwrap();
        let dirs = DirectionSet::new(8).unwrap();
        let basis = build_fourier_basis(disk, 3, 32).unwrap();
        let truth = make_circle(InitialDisk::new(Point::zeros(), 0.025).unwrap(), 64).unwrap();
        let data = monostatic_sweep(&truth, &wave, &dirs).unwrap();
        let cfg = McmcConfig {
            nodes: 32,
            max_scans: 30,
            min_scans: 10,
            stop_window: 10,
            stop_tol: 0.0,
            mean_window: 5,
            seed: 11,
            ..McmcConfig::default()
        };
        let a = run(&basis, &data, &wave, &cfg, Some(&truth)).unwrap();
        let b = run(&basis, &data, &wave, &cfg, Some(&truth)).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.log, b.log);
        assert_eq!(a.history().len(), 30);
        assert_eq!(a.log.len(), 30 * 7);
        assert!(a.log.iter().filter(|r| r.jaccard.is_some()).count() == 30);
        assert!(a.state.accept_count <= a.state.m);
        let mut x = Vec::new();
        let mut y = Vec::new();
        a.write_log(&mut x).unwrap();
        b.write_log(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().starts_with("# rng=ChaCha20Rng"));
        // logged energies are reproduced by recomputation
        let model = EnergyModel {
            basis: &basis,
            data: &data,
            wave,
            sigma: cfg.sigma,
            tau: cfg.tau,
        };
        assert_eq!(model.energy(&a.state.c).unwrap().log_pi, a.state.log_pi);
    }

    #[test]
    fn identical_shapes_give_indicator_contour() {
        let disk = InitialDisk::new(Point::zeros(), 1.0).unwrap();
        let basis = build_fourier_basis(disk, 2, 32).unwrap();
        let history = vec![ShapeCoefficients::zeros(5); 4];
        let grid = Grid::new(Point::new(-2.0, -2.0), Point::new(2.0, 2.0), 40, 40).unwrap();
        let f = frequency_contour(&basis, &history, 1, 4, grid).unwrap();
        let circle = make_circle(disk, 32).unwrap();
        for iy in 0..40 {
            for ix in 0..40 {
                let v = f.value(ix, iy);
                assert!(v == 0.0 || v == 1.0);
                let p = grid.cell_center(ix, iy);
                if (p.norm() - 1.0).abs() > 0.05 {
                    assert_eq!(v == 1.0, circle.contains(p));
                }
            }
        }
        assert!(frequency_contour(&basis, &history, 3, 5, grid).is_err());
    }

    #[test]
    fn stop_window_detects_stability() {
        let wave = WaveContext::default();
        let disk = InitialDisk::new(Point::zeros(), 0.05).unwrap();
        let basis = build_fourier_basis(disk, 2, 32).unwrap();
        let data = MonostaticData::new(
            DirectionSet::new(4).unwrap(),
            vec![num_complex::Complex64::new(0.0, 0.0); 4],
        )
        .unwrap();
        let model = EnergyModel {
            basis: &basis,
            data: &data,
            wave,
            sigma: 1.0,
            tau: 0.0,
        };
        let mut w = StopWindow::new(5, 512);
        for s in 0..5 {
            let mut c = ShapeCoefficients::zeros(5);
            c.0[0] = 1e-4 * s as f64;
            w.push(&c, &model).unwrap();
        }
        assert!(w.is_stable(0.02).unwrap());
        let mut c = ShapeCoefficients::zeros(5);
        c.0[0] = 0.5;
        w.push(&c, &model).unwrap();
        assert!(!w.is_stable(0.02).unwrap());
    }
}
