use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use monoshape::basis::{build_derived_basis_with, build_fourier_basis, BasisKind, DEFAULT_DROP_TOL};
use monoshape::disk::{data_modulus_mean, estimate_radius, MeanMode, DEFAULT_BRACKET, DEFAULT_RADIUS_TOL};
use monoshape::forward::{DirectionSet, WaveContext};
use monoshape::geometry::{jaccard_distance, InitialDisk, Point, DEFAULT_JACCARD_RESOLUTION};
use monoshape::harness::{
    self, generate_target, padded_grid, read_basis, read_monostatic, read_snapshots, resolve_curve, write_file,
    write_monostatic, write_msr, ExperimentConfig, HarnessError, NoiseSpec, OUTPUT_ENV,
};
use monoshape::locate::{default_indicator, indicator, ranked_maxima, DEFAULT_RESOLUTION};
use monoshape::mcmc::frequency_contour;

#[derive(Parser)]
#[command(name = "monoshape", version, about = "Shape reconstruction from monostatic far-field data")]
struct Cli {
    /// Output directory (defaults to $MONOSHAPE_OUT, then the current directory).
    #[arg(long, global = true, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    /// Incident frequency in Hz.
    #[arg(long, global = true, default_value_t = monoshape::forward::DEFAULT_FREQUENCY)]
    frequency: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize MSR and monostatic data for a target.
    GenData {
        /// omega1, omega2, omega3 or a curve CSV with x and y columns.
        #[arg(long)]
        target: String,
        /// Signal to noise ratio in dB of the full MSR matrix, or `inf`.
        #[arg(long, default_value = "inf")]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 36)]
        directions: usize,
        /// Boundary nodes of the generator (default from the perimeter).
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Sampling indicator and ranked centre candidates.
    Locate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        candidates: usize,
        /// Explicit square `xmin,ymin,xmax,ymax`; otherwise a 4-wavelength
        /// square around the strongest response.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bounds: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
    },
    /// Radius of the disk whose mean monostatic modulus matches the data.
    Radius {
        #[arg(long)]
        data: PathBuf,
        /// arithmetic or quadratic.
        #[arg(long, default_value = "arithmetic")]
        mean: MeanMode,
    },
    /// Deformation basis on a disk.
    Basis {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        center: Vec<f64>,
        #[arg(long)]
        radius: f64,
        /// derived or fourier.
        #[arg(long, default_value = "derived")]
        kind: BasisKind,
        #[arg(long, default_value_t = 36)]
        directions: usize,
        #[arg(long, default_value_t = 128)]
        nodes: usize,
        #[arg(long, default_value_t = DEFAULT_DROP_TOL)]
        drop_tol: f64,
    },
    /// Run a reconstruction described by a TOML configuration.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the chain seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Jaccard distance between two curves (catalogue names or CSV files).
    Eval {
        a: String,
        b: String,
        #[arg(long, default_value_t = DEFAULT_JACCARD_RESOLUTION)]
        resolution: usize,
    },
    /// Membership frequency of the scan shapes `n1 < s <= n2` of a run directory.
    ExportContour {
        /// Directory written by `reconstruct`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
    },
}

fn out_dir(cli_out: &Option<PathBuf>, config_out: Option<&Path>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| config_out.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let wave = WaveContext::vacuum(cli.frequency)?;
    match cli.command {
        Command::GenData {
            target,
            snr,
            seed,
            directions,
            nodes,
        } => {
            let dirs = DirectionSet::new(directions)?;
            let noise = NoiseSpec { snr_db: snr, seed };
            let syn = generate_target(&target, nodes, &wave, &dirs, &noise)?;
            let dir = out_dir(&cli.out, None);
            write_file(&dir.join("msr.csv"), |w| write_msr(w, &syn.noisy, &wave))?;
            write_file(&dir.join("monostatic.csv"), |w| write_monostatic(w, &syn.data(), &wave))?;
            write_file(&dir.join("truth.csv"), |w| syn.truth.write_csv(w))?;
            println!(
                "target={target} k={} J={} nodes={} snr_db={} empirical_snr_db={:.3}",
                wave.wavenumber,
                directions,
                syn.truth.len(),
                snr,
                harness::empirical_snr_db(&syn.clean, &syn.noisy)
            );
        }
        Command::Locate {
            data,
            candidates,
            bounds,
            resolution,
        } => {
            let (data, _) = read_monostatic(&data)?;
            let grid = match bounds {
                Some(b) if b.len() != 4 => {
                    return Err(HarnessError::Config("--bounds takes xmin,ymin,xmax,ymax".into()));
                }
                Some(b) => indicator(&data, &wave, Point::new(b[0], b[1]), Point::new(b[2], b[3]), resolution, resolution)?,
                None => default_indicator(&data, &wave)?,
            };
            write_file(&out_dir(&cli.out, None).join("indicator.csv"), |w| grid.write_csv(w))?;
            println!("rank,x,y,value");
            for (rank, (p, v)) in ranked_maxima(&grid)?.into_iter().take(candidates.max(1)).enumerate() {
                println!("{rank},{:.10e},{:.10e},{v:.6}", p.x, p.y);
            }
        }
        Command::Radius { data, mean } => {
            let (data, _) = read_monostatic(&data)?;
            let gbar = data_modulus_mean(&data, &wave, mean)?;
            let r = estimate_radius(gbar, &wave, DEFAULT_BRACKET, DEFAULT_RADIUS_TOL)?;
            println!("{r:.6}");
        }
        Command::Basis {
            center,
            radius,
            kind,
            directions,
            nodes,
            drop_tol,
        } => {
            if center.len() != 2 {
                return Err(HarnessError::Config("--center takes x,y".into()));
            }
            let disk = InitialDisk::new(Point::new(center[0], center[1]), radius)?;
            let dirs = DirectionSet::new(directions)?;
            let basis = match kind {
                BasisKind::Derived => build_derived_basis_with(disk, &wave, &dirs, nodes, drop_tol)?,
                BasisKind::Fourier => build_fourier_basis(disk, directions, nodes)?,
            };
            write_file(&out_dir(&cli.out, None).join("basis.csv"), |w| basis.write_csv(w))?;
            println!("kind={kind} functions={}", basis.len());
        }
        Command::Reconstruct { config, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.mcmc.seed = s;
            }
            let dir = out_dir(&cli.out, cfg.output.as_deref());
            let rec = harness::reconstruct(&cfg)?;
            rec.write_outputs(&dir)?;
            let m = rec.manifest();
            print!(
                "status={} scans={} basis={}x{} acceptance={:.4}",
                m.status, m.scans, m.basis_kind, m.basis_size, m.acceptance_rate
            );
            match m.mean_distance {
                Some(d) => println!(" mean_distance={d:.4}"),
                None => println!(),
            }
        }
        Command::Eval { a, b, resolution } => {
            let ca = resolve_curve(&a, 512)?;
            let cb = resolve_curve(&b, 512)?;
            println!("{:.6}", jaccard_distance(&ca, &cb, resolution)?);
        }
        Command::ExportContour { run, n1, n2, resolution } => {
            let basis = read_basis(&run.join("basis.csv"))?;
            let history = read_snapshots(&run.join("snapshots.csv"))?;
            let mut curves = Vec::new();
            for c in [history.get(n1), history.last()].into_iter().flatten() {
                curves.push(basis.domain(c).map_err(HarnessError::from)?.deform()?);
            }
            let grid = padded_grid(&curves.iter().collect::<Vec<_>>(), resolution)?;
            let contour = frequency_contour(&basis, &history, n1, n2, grid)?;
            let path = out_dir(&cli.out, Some(&run)).join(format!("contour_{n1}_{n2}.csv"));
            write_file(&path, |w| contour.write_csv(w))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
