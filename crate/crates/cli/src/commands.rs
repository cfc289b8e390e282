//! Subcommand implementations. Every command reads and writes inside the
//! configured output directory using fixed file names.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ltomo::framelet::FrameletSystem;
use ltomo::io;
use ltomo::metrics::{cap_db, mssim, psnr, psnr_peak, region_metrics};
use ltomo::phantom::{self, add_noise, noise_sigma};
use ltomo::solver::{ConvergenceLog, JointProblem};
use ltomo::{fbp_reconstruct, radon_forward, restrict, solve_baseline, solve_joint, Image, ProjectorGeometry, Sinogram, TruncationMask};

use crate::config::{ExperimentConfig, Method};
use crate::{CliError, CliResult};

pub const PHANTOM_IMG: &str = "phantom.img";
pub const PHANTOM_PGM: &str = "phantom.pgm";
pub const SINO_FULL: &str = "sino_full.sino";
pub const SINO_TRUNC: &str = "sino_trunc.sino";
pub const MASK_TXT: &str = "mask.txt";
pub const METRICS_CSV: &str = "metrics.csv";

pub const METRICS_HEADER: &str =
    "method,n_projections,psnr_db,psnr_printed_db,mssim,interior_psnr_db,interior_mssim,exterior_psnr_db,exterior_mssim";

pub fn recon_path(out: &Path, m: Method) -> PathBuf {
    out.join(format!("recon_{}.img", m.name()))
}

fn missing(path: &Path, what: &str) -> CliError {
    CliError::Io(format!("{what} {} not found (run the earlier stage first)", path.display()))
}

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(missing(path, what))
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn load_phantom_spec(name: &str) -> CliResult<Vec<phantom::Ellipse>> {
    if let Some(spec) = phantom::builtin(name) {
        return Ok(spec);
    }
    Ok(phantom::parse_spec(&io::read_text(Path::new(name))?)?)
}

pub fn cmd_phantom(cfg: &ExperimentConfig) -> CliResult<Image> {
    let spec = load_phantom_spec(&cfg.phantom)?;
    let u = phantom::phantom(cfg.n, &spec)?;
    ensure_dir(&cfg.output)?;
    io::write_image(&cfg.output.join(PHANTOM_IMG), &u)?;
    io::write_pgm16(&cfg.output.join(PHANTOM_PGM), &u.data, 0.0, 1.0)?;
    log::info!("phantom {} at {}x{} written", cfg.phantom, cfg.n, cfg.n);
    Ok(u)
}

/// Mask file body; the noise level is recorded for the discrepancy rule.
fn mask_file_text(mask: &TruncationMask, sigma: f64) -> String {
    format!("{}noise_sigma {sigma}\n", io::mask_to_text(mask))
}

fn read_mask(out: &Path) -> CliResult<(TruncationMask, f64)> {
    let path = out.join(MASK_TXT);
    require(&path, "mask file")?;
    let text = io::read_text(&path)?;
    let mask = io::mask_from_text(&text)?;
    let sigma = text
        .lines()
        .find_map(|l| l.strip_prefix("noise_sigma "))
        .map(|v| v.trim().parse::<f64>())
        .transpose()
        .map_err(|_| CliError::Io("mask file has a malformed noise_sigma".into()))?
        .unwrap_or(0.0);
    Ok((mask, sigma))
}

fn read_phantom(out: &Path) -> CliResult<Image> {
    let path = out.join(PHANTOM_IMG);
    require(&path, "phantom")?;
    Ok(io::read_image(&path)?)
}

/// Full sinogram, then noise on the measured region, then truncation.
pub fn cmd_project(cfg: &ExperimentConfig) -> CliResult<(Sinogram, TruncationMask)> {
    let u = read_phantom(&cfg.output)?;
    if u.width() != u.height() {
        return Err(CliError::Usage(format!("phantom must be square, got {:?}", u.shape())));
    }
    let g = ProjectorGeometry::standard(u.width(), cfg.n_projections)?;
    let mask = TruncationMask::new(&g.sino_grid, cfg.mu)?;
    let full = radon_forward(&u, &g)?;
    let sigma = noise_sigma(&full, cfg.noise_frac);
    let f0 = restrict(&add_noise(&full, cfg.noise_frac, cfg.seed, Some(&mask))?, &mask)?;
    io::write_sinogram(&cfg.output.join(SINO_FULL), &full, f64::INFINITY)?;
    io::write_sinogram(&cfg.output.join(SINO_TRUNC), &f0, cfg.mu)?;
    fs::write(cfg.output.join(MASK_TXT), mask_file_text(&mask, sigma))?;
    log::info!("{} angles, {} of {} samples kept, noise sigma {sigma:.3e}", cfg.n_projections, mask.count(), mask.kept.len());
    Ok((f0, mask))
}

fn write_log(out: &Path, m: Method, log: &ConvergenceLog) -> CliResult<()> {
    fs::write(out.join(format!("log_{}.csv", m.name())), log.to_csv())?;
    Ok(())
}

/// Runs `cfg.method` on the truncated sinogram and writes its artifacts.
pub fn cmd_reconstruct(cfg: &ExperimentConfig) -> CliResult<Image> {
    let out = &cfg.output;
    let sino_path = out.join(SINO_TRUNC);
    require(&sino_path, "truncated sinogram")?;
    let (f0, _) = io::read_sinogram(&sino_path)?;
    let (mask, sigma) = read_mask(out)?;
    let g = ProjectorGeometry::standard(f0.grid.n_bins(), f0.grid.n_angles())?;
    let reference_path = out.join(PHANTOM_IMG);
    let reference = if reference_path.is_file() { Some(io::read_image(&reference_path)?) } else { None };
    let reference = reference.filter(|r| r.shape() == (g.image_size, g.image_size));
    let params = cfg.solver_params(Some(sigma));
    let m = cfg.method;

    let u = match m {
        Method::Fbp => fbp_reconstruct(&f0, &g, cfg.fbp_filter)?,
        Method::Sparsity => {
            let sol = solve_baseline(&f0, &mask, &g, &FrameletSystem::linear1(), &params, reference.as_ref())?;
            write_log(out, m, &sol.log)?;
            sol.u
        }
        Method::Wavelet | Method::Ddtf => {
            let (s1, s2) = (FrameletSystem::cubic3(), FrameletSystem::linear1());
            let prob = JointProblem { f0: &f0, mask: &mask, geometry: &g, sys1: &s1, sys2: &s2 };
            let sol = solve_joint(&prob, &params, reference.as_ref())?;
            write_log(out, m, &sol.log)?;
            io::write_sinogram(&out.join(format!("extrap_{}.sino", m.name())), &sol.f, f64::INFINITY)?;
            if m == Method::Ddtf {
                let dir = out.join(format!("banks_{}", m.name()));
                if dir.exists() {
                    fs::remove_dir_all(&dir)?;
                }
                ensure_dir(&dir)?;
                for b in &sol.banks {
                    let note = [format!("learned at iteration {}", b.iter)];
                    fs::write(dir.join(format!("epoch_{:04}_sinogram.txt", b.iter)), b.sinogram.to_text(&note))?;
                    fs::write(dir.join(format!("epoch_{:04}_image.txt", b.iter)), b.image.to_text(&note))?;
                }
            }
            sol.u
        }
    };
    io::write_image(&recon_path(out, m), &u)?;
    io::write_pgm16(&out.join(format!("recon_{}.pgm", m.name())), &u.data, 0.0, cfg.a)?;
    log::info!("{} reconstruction written", m.name());
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub n_projections: usize,
    pub psnr_db: f64,
    pub psnr_printed_db: f64,
    pub mssim: f64,
    pub interior_psnr_db: f64,
    pub interior_mssim: f64,
    pub exterior_psnr_db: f64,
    pub exterior_mssim: f64,
}

impl MetricsRow {
    pub fn compute(method: &str, n_projections: usize, u: &Image, reference: &Image, mu: f64, peak: f64) -> CliResult<Self> {
        let r = region_metrics(u, reference, mu, peak)?;
        Ok(Self {
            method: method.to_owned(),
            n_projections,
            psnr_db: cap_db(psnr_peak(u, reference, peak)?),
            psnr_printed_db: cap_db(psnr(u, reference)?),
            mssim: mssim(u, reference, peak)?,
            interior_psnr_db: cap_db(r.interior.psnr_peak_db),
            interior_mssim: r.interior.mssim,
            exterior_psnr_db: cap_db(r.exterior.psnr_peak_db),
            exterior_mssim: r.exterior.mssim,
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.method,
            self.n_projections,
            self.psnr_db,
            self.psnr_printed_db,
            self.mssim,
            self.interior_psnr_db,
            self.interior_mssim,
            self.exterior_psnr_db,
            self.exterior_mssim
        )
    }

    pub fn from_csv(line: &str) -> CliResult<Self> {
        let bad = || CliError::Io(format!("malformed metrics row '{line}'"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            method: f[0].to_owned(),
            n_projections: f[1].parse().map_err(|_| bad())?,
            psnr_db: num(2)?,
            psnr_printed_db: num(3)?,
            mssim: num(4)?,
            interior_psnr_db: num(5)?,
            interior_mssim: num(6)?,
            exterior_psnr_db: num(7)?,
            exterior_mssim: num(8)?,
        })
    }
}

pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricsRow>> {
    let text = io::read_text(path)?;
    text.lines().skip(1).filter(|l| !l.trim().is_empty()).map(MetricsRow::from_csv).collect()
}

/// Table of all rows, grouped by projection count, methods in canonical order.
pub fn format_table(rows: &[MetricsRow], regions: bool) -> String {
    let mut counts: Vec<usize> = rows.iter().map(|r| r.n_projections).collect();
    counts.sort_unstable();
    counts.dedup();
    let mut s = String::new();
    for np in counts {
        let _ = writeln!(s, "N_p = {np}");
        let _ = write!(s, "{:<10} {:>10} {:>8}", "method", "PSNR (dB)", "MSSIM");
        if regions {
            let _ = write!(s, " {:>10} {:>8} {:>10} {:>8}", "in PSNR", "in SSIM", "out PSNR", "out SSIM");
        }
        s.push('\n');
        let rank = |name: &str| Method::ALL.iter().position(|m| m.name() == name).unwrap_or(Method::ALL.len());
        let mut group: Vec<&MetricsRow> = rows.iter().filter(|r| r.n_projections == np).collect();
        group.sort_by_key(|r| rank(&r.method));
        for r in group {
            let _ = write!(s, "{:<10} {:>10.4} {:>8.4}", r.method, r.psnr_db, r.mssim);
            if regions {
                let _ = write!(
                    s,
                    " {:>10.4} {:>8.4} {:>10.4} {:>8.4}",
                    r.interior_psnr_db, r.interior_mssim, r.exterior_psnr_db, r.exterior_mssim
                );
            }
            s.push('\n');
        }
    }
    s
}

/// Scores `cfg.method` against the phantom, appends to the metrics file and
/// returns the formatted table of every row recorded so far.
pub fn cmd_metrics(cfg: &ExperimentConfig) -> CliResult<String> {
    let out = &cfg.output;
    let reference = read_phantom(out)?;
    let path = recon_path(out, cfg.method);
    require(&path, "reconstruction")?;
    let u = io::read_image(&path)?;
    let (mask, _) = read_mask(out)?;
    let row = MetricsRow::compute(cfg.method.name(), mask.grid.n_angles(), &u, &reference, mask.mu, cfg.a)?;
    let csv = out.join(METRICS_CSV);
    let mut text = if csv.is_file() { io::read_text(&csv)? } else { format!("{METRICS_HEADER}\n") };
    let _ = writeln!(text, "{}", row.to_csv());
    fs::write(&csv, &text)?;
    Ok(format_table(&read_metrics(&csv)?, cfg.regions))
}

/// Phantom, projection, then every configured method with a fresh metrics file.
pub fn cmd_pipeline(cfg: &ExperimentConfig) -> CliResult<String> {
    cmd_phantom(cfg)?;
    cmd_project(cfg)?;
    let csv = cfg.output.join(METRICS_CSV);
    if csv.exists() {
        fs::remove_file(&csv)?;
    }
    let mut table = String::new();
    for &m in &cfg.methods {
        let c = cfg.with_method(m);
        cmd_reconstruct(&c)?;
        table = cmd_metrics(&c)?;
    }
    Ok(table)
}
