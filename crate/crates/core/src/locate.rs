//! Monostatic sampling indicator
//! `I(z) = |sum_j u_inf(x_j, -x_j) exp(2 i k x_j . z)|`, normalised to a
//! maximum of 1, and ranking of its local maxima as centre candidates.

use std::f64::consts::TAU;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::forward::{MonostaticData, WaveContext};
use crate::geometry::Point;

/// Cells per side of the default grid.
pub const DEFAULT_RESOLUTION: usize = 201;
/// Side of the default square in wavelengths.
pub const DEFAULT_SIDE_WAVELENGTHS: f64 = 4.0;
/// Side, in wavelengths, of the coarse search that places the default square.
pub const SEARCH_SIDE_WAVELENGTHS: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocateError {
    #[error("degenerate bounds {lo:?} .. {hi:?} or resolution {nx}x{ny}")]
    DegenerateBounds { lo: Point, hi: Point, nx: usize, ny: usize },
    #[error("indicator is identically {0}; no maximiser can be picked")]
    Flat(f64),
    #[error("need at least {min} directions, got {got}")]
    TooFewDirections { min: usize, got: usize },
}

/// Indicator values on a rectangular grid of points including the edges.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorGrid {
    pub lo: Point,
    pub hi: Point,
    pub nx: usize,
    pub ny: usize,
    /// Row-major values `values[iy * nx + ix]` in [0, 1].
    pub values: Vec<f64>,
}

impl IndicatorGrid {
    pub fn point(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            self.lo.x + (self.hi.x - self.lo.x) * ix as f64 / (self.nx - 1) as f64,
            self.lo.y + (self.hi.y - self.lo.y) * iy as f64 / (self.ny - 1) as f64,
        )
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn cell_size(&self) -> Point {
        Point::new(
            (self.hi.x - self.lo.x) / (self.nx - 1) as f64,
            (self.hi.y - self.lo.y) / (self.ny - 1) as f64,
        )
    }

    /// Writes `x,y,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,value")?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let p = self.point(ix, iy);
                writeln!(w, "{:.16e},{:.16e},{:.16e}", p.x, p.y, self.value(ix, iy))?;
            }
        }
        Ok(())
    }
}

/// Unnormalised indicator at one point.
pub fn indicator_at(data: &MonostaticData, wave: &WaveContext, z: Point) -> f64 {
    let two_k = 2.0 * wave.wavenumber;
    data.directions
        .units()
        .iter()
        .zip(&data.values)
        .map(|(x, u)| u * Complex64::from_polar(1.0, two_k * x.dot(&z)))
        .sum::<Complex64>()
        .norm()
}

pub fn indicator(
    data: &MonostaticData,
    wave: &WaveContext,
    lo: Point,
    hi: Point,
    nx: usize,
    ny: usize,
) -> Result<IndicatorGrid, LocateError> {
    if data.len() < 4 {
        return Err(LocateError::TooFewDirections {
            min: 4,
            got: data.len(),
        });
    }
    if nx < 2 || ny < 2 || !(hi.x > lo.x && hi.y > lo.y) || !(lo.x.is_finite() && hi.y.is_finite()) {
        return Err(LocateError::DegenerateBounds { lo, hi, nx, ny });
    }
    let mut grid = IndicatorGrid {
        lo,
        hi,
        nx,
        ny,
        values: Vec::new(),
    };
    let raw: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| indicator_at(data, wave, grid.point(idx % nx, idx / nx)))
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    grid.values = if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        raw
    };
    Ok(grid)
}

/// Default square: `4 lambda` on a side at 201 x 201 points, centred on the
/// strongest point of a coarse `16 lambda` search around the origin.
pub fn default_indicator(data: &MonostaticData, wave: &WaveContext) -> Result<IndicatorGrid, LocateError> {
    let search_half = 0.5 * SEARCH_SIDE_WAVELENGTHS * wave.wavelength;
    let coarse = indicator(
        data,
        wave,
        Point::new(-search_half, -search_half),
        Point::new(search_half, search_half),
        129,
        129,
    )?;
    let centre = pick_center(&coarse, 1)?[0];
    let half = 0.5 * DEFAULT_SIDE_WAVELENGTHS * wave.wavelength;
    indicator(
        data,
        wave,
        centre - Point::new(half, half),
        centre + Point::new(half, half),
        DEFAULT_RESOLUTION,
        DEFAULT_RESOLUTION,
    )
}

/// Local maxima over 8-neighbourhoods, strongest first; ties are ordered by
/// x and then y. Cells whose neighbours are all equal are not maxima. At most `n_candidates` are returned, and at least one.
pub fn pick_center(grid: &IndicatorGrid, n_candidates: usize) -> Result<Vec<Point>, LocateError> {
    Ok(ranked_maxima(grid)?
        .into_iter()
        .take(n_candidates.max(1))
        .map(|(p, _)| p)
        .collect())
}

/// All local maxima with their values, strongest first.
pub fn ranked_maxima(grid: &IndicatorGrid) -> Result<Vec<(Point, f64)>, LocateError> {
    let first = grid.values[0];
    if grid.values.iter().all(|&v| v == first) {
        return Err(LocateError::Flat(first));
    }
    let mut out = Vec::new();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v = grid.value(ix, iy);
            let mut is_max = true;
            let mut above_some = false;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if jx < 0 || jy < 0 || jx >= grid.nx as i64 || jy >= grid.ny as i64 {
                        continue;
                    }
                    let w = grid.value(jx as usize, jy as usize);
                    if w > v {
                        is_max = false;
                        break 'nb;
                    }
                    above_some |= w < v;
                }
            }
            if is_max && above_some {
                out.push((grid.point(ix, iy), v));
            }
        }
    }
    out.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(a.0.x.total_cmp(&b.0.x))
            .then(a.0.y.total_cmp(&b.0.y))
    });
    Ok(out)
}

/// Phase-rotation helper used by tests and the harness: multiplies all data by `e^{i phi}`.
pub fn rotate_phase(data: &MonostaticData, phi: f64) -> MonostaticData {
    let rot = Complex64::from_polar(1.0, phi.rem_euclid(TAU));
    MonostaticData {
        directions: data.directions.clone(),
        values: data.values.iter().map(|v| v * rot).collect(),
    }
}
