//! Synthetic data, noise, calibration, file formats and the end-to-end
//! reconstruction pipeline behind the command line tool.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{
    build_derived_basis_with, build_fourier_basis, BasisCsvError, BasisError, BasisKind, ShapeBasis,
    ShapeCoefficients, DEFAULT_DROP_TOL,
};
use crate::disk::{
    data_modulus_mean, estimate_radius, far_field_series, DiskError, MeanMode, DEFAULT_BRACKET,
    DEFAULT_RADIUS_TOL, DEFAULT_TRUNCATION,
};
use crate::forward::{
    default_node_count, monostatic_sweep, msr_matrix, DirectionSet, ForwardError, MonostaticData, MsrMatrix,
    WaveContext, DEFAULT_FREQUENCY, VACUUM_PERMEABILITY, VACUUM_PERMITTIVITY,
};
use crate::geometry::{
    jaccard_distance, make_circle, target_curve, GeometryError, Grid, InitialDisk, ParamCurve, Point, Target,
    DEFAULT_JACCARD_RESOLUTION, DEFAULT_NODES,
};
use crate::locate::{default_indicator, ranked_maxima, IndicatorGrid, LocateError};
use crate::mcmc::{frequency_contour, run, ChainResult, FrequencyGrid, McmcConfig, McmcError, RNG_NAME};

/// Version written into every data file header.
pub const FORMAT_VERSION: u32 = 1;
/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "MONOSHAPE_OUT";
/// Default lower bound on `S_j / sigma` for a derived basis function to be sampled.
pub const DEFAULT_MIN_INFORMATION: f64 = 500.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Disk(#[from] DiskError),
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error("calibration needs nonzero measured data")]
    ZeroData,
}

impl HarnessError {
    /// Process exit status for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 3,
            HarnessError::Io { .. } => 4,
            HarnessError::Format { .. } => 5,
            HarnessError::Forward(_) => 10,
            HarnessError::Geometry(_) => 11,
            HarnessError::Disk(_) => 12,
            HarnessError::Locate(_) => 13,
            HarnessError::Basis(_) => 14,
            HarnessError::Mcmc(_) => 15,
            HarnessError::ZeroData => 16,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Signal to noise ratio of the full MSR matrix; `inf` means noiseless.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.snr_db > 0.0 {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("snr_db must be positive or inf, got {}", self.snr_db)))
        }
    }
}

/// Adds i.i.d. circular complex Gaussian noise whose expected power is
/// `||msr||_F^2 / 10^(snr_db / 10)`.
pub fn add_noise_with<R: Rng + ?Sized>(msr: &MsrMatrix, snr_db: f64, rng: &mut R) -> MsrMatrix {
    if snr_db.is_infinite() {
        return msr.clone();
    }
    let power: f64 = msr.values.iter().map(|v| v.norm_sqr()).sum();
    let per_entry = power / (msr.values.len() as f64 * 10f64.powf(snr_db / 10.0));
    let std = (0.5 * per_entry).sqrt();
    let mut values = msr.values.clone();
    for v in values.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(std * re, std * im);
    }
    MsrMatrix {
        directions: msr.directions.clone(),
        values,
    }
}

/// [`add_noise_with`] driven by a generator seeded from `spec.seed`.
pub fn add_noise(msr: &MsrMatrix, spec: &NoiseSpec) -> MsrMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    add_noise_with(msr, spec.snr_db, &mut rng)
}

/// `10 log10(||clean||^2 / ||noisy - clean||^2)`.
pub fn empirical_snr_db(clean: &MsrMatrix, noisy: &MsrMatrix) -> f64 {
    let signal: f64 = clean.values.iter().map(|v| v.norm_sqr()).sum();
    let noise: f64 = clean.values.iter().zip(noisy.values.iter()).map(|(a, b)| (b - a).norm_sqr()).sum();
    10.0 * (signal / noise).log10()
}

/// Positive `s` minimising `sum_j |s * measured_j - reference_j|^2`.
pub fn calibrate(reference: &MonostaticData, measured: &MonostaticData) -> Result<f64, HarnessError> {
    if reference.len() != measured.len() {
        return Err(ForwardError::LengthMismatch {
            expected: reference.len(),
            actual: measured.len(),
        }
        .into());
    }
    let norm: f64 = measured.values.iter().map(|v| v.norm_sqr()).sum();
    if norm == 0.0 {
        return Err(HarnessError::ZeroData);
    }
    let cross: f64 = measured
        .values
        .iter()
        .zip(&reference.values)
        .map(|(m, r)| (m.conj() * r).re)
        .sum();
    Ok((cross / norm).max(f64::MIN_POSITIVE))
}

/// Monostatic series values of a disk.
pub fn disk_series_data(
    disk: InitialDisk,
    wave: &WaveContext,
    dirs: &DirectionSet,
) -> Result<MonostaticData, HarnessError> {
    let values = dirs
        .units()
        .iter()
        .map(|x| far_field_series(disk, wave, *x, -x, DEFAULT_TRUNCATION))
        .collect::<Result<_, _>>()?;
    Ok(MonostaticData {
        directions: dirs.clone(),
        values,
    })
}

/// Scale taking the boundary element solver onto the analytic series on `disk`.
pub fn solver_calibration(
    disk: InitialDisk,
    wave: &WaveContext,
    dirs: &DirectionSet,
    nodes: usize,
) -> Result<f64, HarnessError> {
    let bem = monostatic_sweep(&make_circle(disk, nodes)?, wave, dirs)?;
    calibrate(&disk_series_data(disk, wave, dirs)?, &bem)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn header_line(kind: &str, k: f64, j: usize) -> String {
    format!("# format={kind} version={FORMAT_VERSION} k={} J={j}", fmt_f(k))
}

/// Writes `j,theta_deg,re,im` after a comment header carrying `k` and `J`.
pub fn write_monostatic<W: Write>(mut w: W, data: &MonostaticData, wave: &WaveContext) -> io::Result<()> {
    writeln!(w, "{}", header_line("monostatic", wave.wavenumber, data.len()))?;
    writeln!(w, "j,theta_deg,re,im")?;
    for (j, (theta, v)) in data.directions.angles().iter().zip(&data.values).enumerate() {
        writeln!(w, "{j},{},{},{}", fmt_f(theta.to_degrees()), fmt_f(v.re), fmt_f(v.im))?;
    }
    Ok(())
}

/// Writes `i,j,re,im`; entry `(i, j)` is `u_inf(x_i, -x_j)`.
pub fn write_msr<W: Write>(mut w: W, msr: &MsrMatrix, wave: &WaveContext) -> io::Result<()> {
    let n = msr.directions.len();
    writeln!(w, "{}", header_line("msr", wave.wavenumber, n))?;
    writeln!(w, "i,j,re,im")?;
    for i in 0..n {
        for j in 0..n {
            let v = msr.values[(i, j)];
            writeln!(w, "{i},{j},{},{}", fmt_f(v.re), fmt_f(v.im))?;
        }
    }
    Ok(())
}

struct Table {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read<R: BufRead>(r: R, path: &Path) -> Result<Self, HarnessError> {
        let mut table = Table {
            meta: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
        };
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    if let Some((k, v)) = kv.split_once('=') {
                        table.meta.push((k.to_string(), v.to_string()));
                    }
                }
            } else if table.columns.is_empty() {
                table.columns = line.split(',').map(|c| c.trim().to_string()).collect();
            } else {
                table.rows.push((idx + 1, line.split(',').map(|c| c.trim().to_string()).collect()));
            }
        }
        Ok(table)
    }

    fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn column(&self, name: &str, path: &Path) -> Result<usize, HarnessError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| HarnessError::Format {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("missing column `{name}`"),
        })
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, row: &[String], col: usize) -> Result<T, HarnessError> {
    row.get(col).and_then(|s| s.parse().ok()).ok_or_else(|| HarnessError::Format {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse field {}", col + 1),
    })
}

fn data_header(table: &Table, path: &Path, expected: &str) -> Result<(f64, usize), HarnessError> {
    let bad = |msg: String| HarnessError::Format {
        path: path.to_path_buf(),
        line: 1,
        msg,
    };
    match table.meta("format") {
        Some(f) if f == expected => {}
        other => return Err(bad(format!("expected format={expected}, found {other:?}"))),
    }
    let version: u32 = table
        .meta("version")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing version".into()))?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let k: f64 = table.meta("k").and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing k".into()))?;
    let j: usize = table.meta("J").and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing J".into()))?;
    Ok((k, j))
}

/// Reads a monostatic file; returns the data and the wavenumber of its header.
pub fn read_monostatic_from<R: BufRead>(r: R, path: &Path) -> Result<(MonostaticData, f64), HarnessError> {
    let table = Table::read(r, path)?;
    let (k, count) = data_header(&table, path, "monostatic")?;
    let (cj, ct, cr, ci) = (
        table.column("j", path)?,
        table.column("theta_deg", path)?,
        table.column("re", path)?,
        table.column("im", path)?,
    );
    let dirs = DirectionSet::new(count)?;
    let mut values = vec![None; count];
    for (line, row) in &table.rows {
        let j: usize = parse_field(path, *line, row, cj)?;
        let theta: f64 = parse_field(path, *line, row, ct)?;
        let bad = |msg: &str| HarnessError::Format {
            path: path.to_path_buf(),
            line: *line,
            msg: msg.to_string(),
        };
        if j >= count {
            return Err(bad("direction index out of range"));
        }
        if (theta - dirs.angles()[j].to_degrees()).abs() > 1e-9 {
            return Err(bad("angle does not match the direction index"));
        }
        if values[j].is_some() {
            return Err(bad("duplicate direction"));
        }
        values[j] = Some(Complex64::new(
            parse_field(path, *line, row, cr)?,
            parse_field(path, *line, row, ci)?,
        ));
    }
    let values: Option<Vec<_>> = values.into_iter().collect();
    let values = values.ok_or_else(|| HarnessError::Format {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("expected {count} directions"),
    })?;
    Ok((MonostaticData::new(dirs, values)?, k))
}

/// Reads an MSR file; returns the matrix and the wavenumber of its header.
pub fn read_msr_from<R: BufRead>(r: R, path: &Path) -> Result<(MsrMatrix, f64), HarnessError> {
    let table = Table::read(r, path)?;
    let (k, count) = data_header(&table, path, "msr")?;
    let (ci_, cj, cr, ci) = (
        table.column("i", path)?,
        table.column("j", path)?,
        table.column("re", path)?,
        table.column("im", path)?,
    );
    let mut values = DMatrix::from_element(count, count, Complex64::new(f64::NAN, f64::NAN));
    let mut seen = 0;
    for (line, row) in &table.rows {
        let i: usize = parse_field(path, *line, row, ci_)?;
        let j: usize = parse_field(path, *line, row, cj)?;
        if i >= count || j >= count {
            return Err(HarnessError::Format {
                path: path.to_path_buf(),
                line: *line,
                msg: "index out of range".into(),
            });
        }
        values[(i, j)] = Complex64::new(parse_field(path, *line, row, cr)?, parse_field(path, *line, row, ci)?);
        seen += 1;
    }
    if seen != count * count || values.iter().any(|v| v.re.is_nan()) {
        return Err(HarnessError::Format {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("expected {} entries", count * count),
        });
    }
    Ok((
        MsrMatrix {
            directions: DirectionSet::new(count)?,
            values,
        },
        k,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

pub fn read_monostatic(path: &Path) -> Result<(MonostaticData, f64), HarnessError> {
    read_monostatic_from(open(path)?, path)
}

pub fn read_msr(path: &Path) -> Result<(MsrMatrix, f64), HarnessError> {
    read_msr_from(open(path)?, path)
}

/// Reads a closed curve from a CSV with `x` and `y` columns, such as the
/// output of [`ParamCurve::write_csv`]. Nodes must be equispaced in a
/// smooth parameter.
pub fn read_curve(path: &Path) -> Result<ParamCurve, HarnessError> {
    let table = Table::read(open(path)?, path)?;
    let (cx, cy) = (table.column("x", path)?, table.column("y", path)?);
    let mut nodes = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        nodes.push(Point::new(parse_field(path, *line, row, cx)?, parse_field(path, *line, row, cy)?));
    }
    Ok(ParamCurve::from_samples(nodes)?)
}

/// Catalogue name (`omega1`, ...) or path to a curve file.
pub fn resolve_curve(spec: &str, nodes: usize) -> Result<ParamCurve, HarnessError> {
    match spec.parse::<Target>() {
        Ok(t) => Ok(target_curve(t, nodes)?),
        Err(_) => read_curve(Path::new(spec)),
    }
}

/// Reads the `scan,c0,...` snapshot file written by a reconstruction.
pub fn read_snapshots(path: &Path) -> Result<Vec<ShapeCoefficients>, HarnessError> {
    let table = Table::read(open(path)?, path)?;
    let width = table.columns.len().saturating_sub(1);
    table
        .rows
        .iter()
        .map(|(line, row)| {
            if row.len() != width + 1 {
                return Err(HarnessError::Format {
                    path: path.to_path_buf(),
                    line: *line,
                    msg: format!("expected {} fields", width + 1),
                });
            }
            (1..=width)
                .map(|c| parse_field(path, *line, row, c))
                .collect::<Result<Vec<f64>, _>>()
                .map(ShapeCoefficients)
        })
        .collect()
}

pub fn read_basis(path: &Path) -> Result<ShapeBasis, HarnessError> {
    ShapeBasis::read_csv(open(path)?).map_err(|e| match e {
        BasisCsvError::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        BasisCsvError::Geometry(g) => HarnessError::Geometry(g),
        BasisCsvError::Format { line, msg } => HarnessError::Format {
            path: path.to_path_buf(),
            line,
            msg,
        },
    })
}

/// Writes a file through `f`, creating parent directories.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSection {
    pub frequency: f64,
    pub permittivity: f64,
    pub permeability: f64,
}

impl Default for WaveSection {
    fn default() -> Self {
        Self {
            frequency: DEFAULT_FREQUENCY,
            permittivity: VACUUM_PERMITTIVITY,
            permeability: VACUUM_PERMEABILITY,
        }
    }
}

impl WaveSection {
    pub fn context(&self) -> Result<WaveContext, HarnessError> {
        Ok(WaveContext::new(self.frequency, self.permittivity, self.permeability)?)
    }
}

/// Initial disk; missing values are estimated from the data (centre from
/// the sampling indicator, radius by bisection on the disk modulus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    /// Rank of the indicator maximum used as the centre (0 = strongest).
    pub candidate: usize,
    /// `arithmetic` or `quadratic` mean of the data modulus.
    pub mean: String,
}

impl Default for InitSection {
    fn default() -> Self {
        Self {
            center: None,
            radius: None,
            candidate: 0,
            mean: "arithmetic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    /// `derived` or `fourier`.
    pub kind: String,
    /// Derived rows whose monostatic sensitivity `S_j` falls below
    /// `min_information * sigma` are not sampled; 0 keeps every row.
    pub min_information: f64,
    pub drop_tol: f64,
    /// Highest Fourier mode; defaults to the number of directions.
    pub fourier_modes: Option<usize>,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self {
            kind: "derived".into(),
            min_information: DEFAULT_MIN_INFORMATION,
            drop_tol: DEFAULT_DROP_TOL,
            fourier_modes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub beta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub lambda: f64,
    pub block_size: usize,
    pub max_scans: usize,
    pub min_scans: usize,
    pub stop_window: usize,
    pub stop_tol: f64,
    pub stop_resolution: usize,
    pub mean_window: usize,
    pub nodes: usize,
    pub log_resolution: usize,
    pub seed: u64,
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcConfig::default().into()
    }
}

impl From<McmcConfig> for McmcSection {
    fn from(c: McmcConfig) -> Self {
        Self {
            beta: c.beta,
            sigma: c.sigma,
            tau: c.tau,
            lambda: c.lambda,
            block_size: c.block_size,
            max_scans: c.max_scans,
            min_scans: c.min_scans,
            stop_window: c.stop_window,
            stop_tol: c.stop_tol,
            stop_resolution: c.stop_resolution,
            mean_window: c.mean_window,
            nodes: c.nodes,
            log_resolution: c.log_resolution,
            seed: c.seed,
        }
    }
}

impl From<&McmcSection> for McmcConfig {
    fn from(s: &McmcSection) -> Self {
        Self {
            beta: s.beta,
            sigma: s.sigma,
            tau: s.tau,
            lambda: s.lambda,
            block_size: s.block_size,
            max_scans: s.max_scans,
            min_scans: s.min_scans,
            stop_window: s.stop_window,
            stop_tol: s.stop_tol,
            stop_resolution: s.stop_resolution,
            mean_window: s.mean_window,
            nodes: s.nodes,
            log_resolution: s.log_resolution,
            seed: s.seed,
        }
    }
}

/// One reconstruction experiment, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalogue target or curve file generating synthetic data.
    pub target: Option<String>,
    /// Monostatic data file used instead of synthetic data.
    pub data: Option<PathBuf>,
    pub directions: usize,
    /// Boundary nodes of the data generator; chosen from the perimeter when absent.
    pub data_nodes: Option<usize>,
    /// Multiply the data by the scale that maps the solver onto the disk
    /// series on the initial disk.
    pub calibrate: bool,
    pub output: Option<PathBuf>,
    pub wave: WaveSection,
    pub noise: NoiseSpec,
    pub init: InitSection,
    pub basis: BasisSection,
    pub mcmc: McmcSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target: Some(Target::Omega2.name().into()),
            data: None,
            directions: 36,
            data_nodes: None,
            calibrate: false,
            output: None,
            wave: WaveSection::default(),
            noise: NoiseSpec::default(),
            init: InitSection::default(),
            basis: BasisSection::default(),
            mcmc: McmcSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serialisable")
    }

    pub fn basis_kind(&self) -> Result<BasisKind, HarnessError> {
        self.basis.kind.parse().map_err(HarnessError::Config)
    }

    pub fn mean_mode(&self) -> Result<MeanMode, HarnessError> {
        self.init.mean.parse().map_err(HarnessError::Config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.target.is_none() && self.data.is_none() {
            return Err(HarnessError::Config("either `target` or `data` is required".into()));
        }
        if self.directions < 4 {
            return Err(HarnessError::Config(format!("need at least 4 directions, got {}", self.directions)));
        }
        self.noise.validate()?;
        self.wave.context()?;
        self.basis_kind()?;
        self.mean_mode()?;
        if !(self.basis.min_information >= 0.0) || !(self.basis.drop_tol > 0.0) {
            return Err(HarnessError::Config("basis thresholds must be positive".into()));
        }
        if let Some(r) = self.init.radius {
            if !(r > 0.0) {
                return Err(HarnessError::Config(format!("initial radius must be positive, got {r}")));
            }
        }
        let mcmc = McmcConfig::from(&self.mcmc);
        mcmc.validate(mcmc.block_size.max(1))?;
        Ok(())
    }
}

/// Synthetic measurement of a known curve.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub truth: ParamCurve,
    pub clean: MsrMatrix,
    pub noisy: MsrMatrix,
}

impl Synthetic {
    /// Monostatic data: the diagonal of the noisy matrix.
    pub fn data(&self) -> MonostaticData {
        self.noisy.diagonal()
    }
}

/// Generator node count for a curve: the documented default or enough for
/// 12 nodes per wavelength, whichever is larger.
pub fn data_node_count(perimeter: f64, wave: &WaveContext) -> usize {
    default_node_count(perimeter, wave).max(DEFAULT_NODES)
}

pub fn generate(truth: ParamCurve, wave: &WaveContext, dirs: &DirectionSet, noise: &NoiseSpec) -> Result<Synthetic, HarnessError> {
    noise.validate()?;
    let clean = msr_matrix(&truth, wave, dirs)?;
    let noisy = add_noise(&clean, noise);
    Ok(Synthetic { truth, clean, noisy })
}

/// Generates data for a catalogue target or curve file, resampling the
/// curve at `nodes` (or at [`data_node_count`]) when it names a target.
pub fn generate_target(
    spec: &str,
    nodes: Option<usize>,
    wave: &WaveContext,
    dirs: &DirectionSet,
    noise: &NoiseSpec,
) -> Result<Synthetic, HarnessError> {
    let truth = match spec.parse::<Target>() {
        Ok(t) => {
            let n = match nodes {
                Some(n) => n,
                None => data_node_count(target_curve(t, DEFAULT_NODES)?.length(), wave),
            };
            target_curve(t, n)?
        }
        Err(_) => read_curve(Path::new(spec))?,
    };
    generate(truth, wave, dirs, noise)
}

/// Initial disk and the evidence it was derived from.
#[derive(Debug, Clone)]
pub struct InitialGuess {
    pub disk: InitialDisk,
    /// Indicator maxima, strongest first (empty when the centre was given).
    pub candidates: Vec<(Point, f64)>,
    pub indicator: Option<IndicatorGrid>,
}

pub fn initial_guess(
    init: &InitSection,
    data: &MonostaticData,
    wave: &WaveContext,
) -> Result<InitialGuess, HarnessError> {
    let (center, candidates, indicator) = match init.center {
        Some([x, y]) => (Point::new(x, y), Vec::new(), None),
        None => {
            let grid = default_indicator(data, wave)?;
            let ranked = ranked_maxima(&grid)?;
            let pick = ranked.get(init.candidate).ok_or_else(|| {
                HarnessError::Config(format!(
                    "candidate {} requested but the indicator has {} maxima",
                    init.candidate,
                    ranked.len()
                ))
            })?;
            (pick.0, ranked, Some(grid))
        }
    };
    let radius = match init.radius {
        Some(r) => r,
        None => {
            let mode: MeanMode = init.mean.parse().map_err(HarnessError::Config)?;
            estimate_radius(data_modulus_mean(data, wave, mode)?, wave, DEFAULT_BRACKET, DEFAULT_RADIUS_TOL)?
        }
    };
    Ok(InitialGuess {
        disk: InitialDisk::new(center, radius)?,
        candidates,
        indicator,
    })
}

/// Basis sampled by the chain: the configured kind, restricted for the
/// derived kind to informative rows, and cut to a multiple of the block size.
pub fn sampling_basis(
    cfg: &ExperimentConfig,
    disk: InitialDisk,
    wave: &WaveContext,
    dirs: &DirectionSet,
) -> Result<ShapeBasis, HarnessError> {
    let nodes = cfg.mcmc.nodes;
    let basis = match cfg.basis_kind()? {
        BasisKind::Derived => {
            let full = build_derived_basis_with(disk, wave, dirs, nodes, cfg.basis.drop_tol)?;
            let floor = cfg.basis.min_information * cfg.mcmc.sigma;
            if floor > 0.0 && floor.is_finite() {
                full.select_sensitive(wave, dirs, floor)?
            } else {
                full
            }
        }
        BasisKind::Fourier => build_fourier_basis(disk, cfg.basis.fourier_modes.unwrap_or(dirs.len()), nodes)?,
    };
    let l = cfg.mcmc.block_size.max(1);
    let keep = basis.len() / l * l;
    if keep == 0 {
        return Err(HarnessError::Config(format!(
            "block size {l} exceeds the {} available basis functions",
            basis.len()
        )));
    }
    Ok(basis.truncated(keep)?)
}

/// Everything a reconstruction run produces.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub config: ExperimentConfig,
    pub wave: WaveContext,
    pub truth: Option<ParamCurve>,
    pub data: MonostaticData,
    pub calibration: Option<f64>,
    pub init: InitialGuess,
    pub basis: ShapeBasis,
    pub chain: ChainResult,
    pub mean_curve: ParamCurve,
    /// Jaccard distance of the mean shape to the truth, when known.
    pub mean_distance: Option<f64>,
}

pub fn reconstruct(cfg: &ExperimentConfig) -> Result<Reconstruction, HarnessError> {
    cfg.validate()?;
    let wave = cfg.wave.context()?;
    let (truth, mut data) = match &cfg.data {
        Some(path) => {
            let (data, k) = read_monostatic(path)?;
            if (k - wave.wavenumber).abs() > 1e-9 * wave.wavenumber {
                return Err(HarnessError::Config(format!(
                    "data were recorded at k = {k} but the configuration gives k = {}",
                    wave.wavenumber
                )));
            }
            let truth = cfg.target.as_deref().map(|t| resolve_curve(t, DEFAULT_NODES)).transpose()?;
            (truth, data)
        }
        None => {
            let dirs = DirectionSet::new(cfg.directions)?;
            let target = cfg.target.as_deref().expect("validated");
            let syn = generate_target(target, cfg.data_nodes, &wave, &dirs, &cfg.noise)?;
            let data = syn.data();
            (Some(syn.truth), data)
        }
    };
    let dirs = data.directions.clone();
    let init = initial_guess(&cfg.init, &data, &wave)?;
    let calibration = if cfg.calibrate {
        let nodes = data_node_count(make_circle(init.disk, DEFAULT_NODES)?.length(), &wave);
        let s = solver_calibration(init.disk, &wave, &dirs, nodes)?;
        data = data.scaled(s);
        Some(s)
    } else {
        None
    };
    let basis = sampling_basis(cfg, init.disk, &wave, &dirs)?;
    let mcmc = McmcConfig::from(&cfg.mcmc);
    let chain = run(&basis, &data, &wave, &mcmc, truth.as_ref())?;
    let mean_curve = basis.domain(&chain.mean)?.deform()?;
    let mean_distance = truth
        .as_ref()
        .map(|t| jaccard_distance(&mean_curve, t, DEFAULT_JACCARD_RESOLUTION))
        .transpose()?;
    Ok(Reconstruction {
        config: cfg.clone(),
        wave,
        truth,
        data,
        calibration,
        init,
        basis,
        chain,
        mean_curve,
        mean_distance,
    })
}

/// Record of the derived quantities of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub wavenumber: f64,
    pub wavelength: f64,
    pub directions: usize,
    pub data_nodes: Option<usize>,
    pub model_nodes: usize,
    pub basis_kind: String,
    pub basis_size: usize,
    pub initial_center: [f64; 2],
    pub initial_radius: f64,
    pub calibration: Option<f64>,
    pub status: String,
    pub scans: usize,
    pub iterations: usize,
    pub acceptance_rate: f64,
    pub failed_proposals: usize,
    pub mean_distance: Option<f64>,
    pub config: ExperimentConfig,
}

impl Reconstruction {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            version: env!("CARGO_PKG_VERSION").into(),
            rng: RNG_NAME.into(),
            seed: self.config.mcmc.seed,
            wavenumber: self.wave.wavenumber,
            wavelength: self.wave.wavelength,
            directions: self.data.len(),
            data_nodes: self.truth.as_ref().filter(|_| self.config.data.is_none()).map(|t| t.len()),
            model_nodes: self.basis.node_count(),
            basis_kind: self.basis.kind.to_string(),
            basis_size: self.basis.len(),
            initial_center: [self.init.disk.center.x, self.init.disk.center.y],
            initial_radius: self.init.disk.radius,
            calibration: self.calibration,
            status: if self.chain.status.is_converged() { "converged" } else { "unconverged" }.into(),
            scans: self.chain.status.scans(),
            iterations: self.chain.state.m,
            acceptance_rate: self.chain.acceptance_rate(),
            failed_proposals: self.chain.failed_proposals,
            mean_distance: self.mean_distance,
            config: self.config.clone(),
        }
    }

    /// Default frequency window: the second half of the recorded scans.
    pub fn contour(&self, resolution: usize) -> Result<FrequencyGrid, HarnessError> {
        let scans = self.chain.history().len();
        let mut curves = vec![&self.mean_curve];
        curves.extend(self.truth.as_ref());
        let grid = padded_grid(&curves, resolution)?;
        Ok(frequency_contour(&self.basis, self.chain.history(), scans / 2, scans, grid)?)
    }

    /// Writes the manifest, data, chain log, snapshots, basis, shapes and
    /// frequency contour into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), HarnessError> {
        let manifest = toml::to_string(&self.manifest()).expect("manifest is serialisable");
        write_file(&dir.join("manifest.toml"), |w| w.write_all(manifest.as_bytes()))?;
        write_file(&dir.join("data.csv"), |w| write_monostatic(w, &self.data, &self.wave))?;
        write_file(&dir.join("chain_log.csv"), |w| self.chain.write_log(w))?;
        write_file(&dir.join("snapshots.csv"), |w| self.chain.write_snapshots(w))?;
        write_file(&dir.join("basis.csv"), |w| self.basis.write_csv(w))?;
        write_file(&dir.join("mean_shape.csv"), |w| self.mean_curve.write_csv(w))?;
        let initial = make_circle(self.init.disk, DEFAULT_NODES)?;
        write_file(&dir.join("initial_shape.csv"), |w| initial.write_csv(w))?;
        if let Some(grid) = &self.init.indicator {
            write_file(&dir.join("indicator.csv"), |w| grid.write_csv(w))?;
        }
        if self.chain.history().len() >= 2 {
            let contour = self.contour(256)?;
            write_file(&dir.join("contour.csv"), |w| contour.write_csv(w))?;
        }
        Ok(())
    }
}

/// Square grid covering the curves with a 25% margin.
pub fn padded_grid(curves: &[&ParamCurve], resolution: usize) -> Result<Grid, HarnessError> {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in curves {
        let (a, b) = c.bounding_box();
        lo = lo.inf(&a);
        hi = hi.sup(&b);
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.625 * (hi - lo).max();
    Ok(Grid::new(
        mid - Point::new(half, half),
        mid + Point::new(half, half),
        resolution,
        resolution,
    )?)
}
