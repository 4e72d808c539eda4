use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tomo_core::filter::FilterWindow;
use tomo_core::geometry::PatchSpec;
use tomo_core::io::checkpoint::{load_checkpoint, save_checkpoint};
use tomo_core::io::config::parse_config;
use tomo_core::io::tlt::{read_tlt, write_tlt};
use tomo_core::io::RunConfig;
use tomo_core::metrics::{fsc, resolution_at};
use tomo_core::net::{train, TrainMode};
use tomo_core::sim::NoiseKind;
use tomo_core::wavelet::{reconstruct_pixel, reconstruct_wavelet};

use tomo_cli::acceptance;
use tomo_cli::pipeline;
use tomo_cli::report::RunReport;

#[derive(Parser)]
#[command(name = "tomo", version, about = "Localized tomographic reconstruction pipeline")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags that override the corresponding config-file keys.
#[derive(Args)]
struct Overrides {
    /// Flat key=value config file; flags below take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (0 or absent: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true, value_enum)]
    filter: Option<FilterArg>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    noise: Option<NoiseArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pixel,
    Wavelet,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Ramp,
    #[value(name = "cosine_ramp", alias = "cosine-ramp")]
    CosineRamp,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    None,
    Gaussian,
    Poisson,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if let Some(mode) = self.mode {
            cfg.mode = match mode {
                ModeArg::Pixel => TrainMode::Pixel,
                ModeArg::Wavelet => TrainMode::Wavelet,
            };
        }
        if let Some(filter) = self.filter {
            cfg.filter = match filter {
                FilterArg::Ramp => FilterWindow::Ramp,
                FilterArg::CosineRamp => FilterWindow::CosineRamp,
            };
        }
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if let Some(noise) = self.noise {
            cfg.noise = match noise {
                NoiseArg::None => NoiseKind::None,
                NoiseArg::Gaussian => NoiseKind::Gaussian,
                NoiseArg::Poisson => NoiseKind::Poisson,
            };
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a phantom and a noisy even/odd tilt-series pair.
    Simulate {
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Filtered backprojection of a raw tilt series.
    Fbp {
        #[arg(long)]
        tilts: PathBuf,
        #[arg(long)]
        angles: PathBuf,
        /// Output volume (.mrc).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a simulated acquisition.
    Train {
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long)]
        tilts_even: PathBuf,
        #[arg(long)]
        tilts_odd: PathBuf,
        #[arg(long)]
        angles: PathBuf,
        /// Output directory for model.ckpt, loss.csv and the report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a volume with a trained model.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tilts: PathBuf,
        #[arg(long)]
        angles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fourier shell correlation between two volumes.
    Fsc {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "fsc_report.txt")]
        report: PathBuf,
    },
    /// Run the full acceptance suite and report each criterion.
    ReproAcceptance {
        #[arg(long, default_value = "acceptance_report.txt")]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.overrides.resolve()?;
    pipeline::apply_thread_cap(cfg.threads);
    match cli.cmd {
        Cmd::Simulate { out } => simulate(&cfg, &out)?,
        Cmd::Fbp { tilts, angles, out } => fbp(&cfg, &tilts, &angles, &out)?,
        Cmd::Train {
            phantom,
            tilts_even,
            tilts_odd,
            angles,
            out,
        } => train_cmd(&cfg, &phantom, &tilts_even, &tilts_odd, &angles, &out)?,
        Cmd::Reconstruct {
            checkpoint,
            tilts,
            angles,
            out,
        } => reconstruct(&cfg, &checkpoint, &tilts, &angles, &out)?,
        Cmd::Fsc { a, b, report } => fsc_cmd(&cfg, &a, &b, &report)?,
        Cmd::ReproAcceptance { report } => return repro_acceptance(&cfg, &report),
    }
    Ok(ExitCode::SUCCESS)
}

fn report_sibling(out: &Path, name: &str) -> PathBuf {
    out.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))?;
    let mut report = RunReport::new("simulate", cfg);
    let sim = report.time("simulate", || pipeline::simulate(cfg, cfg.seed))?;
    let phantom_path = out.join("phantom.mrc");
    let even_path = out.join("tilts_even.mrc");
    let odd_path = out.join("tilts_odd.mrc");
    let angles_path = out.join("angles.tlt");
    pipeline::write_volume(&sim.phantom, &phantom_path)?;
    pipeline::write_series(&sim.even, &even_path)?;
    pipeline::write_series(&sim.odd, &odd_path)?;
    write_tlt(&sim.angles, &angles_path)?;
    report.metric("tilts", sim.angles.len());
    report.metric("volume_size", cfg.volume_size);
    for p in [&phantom_path, &even_path, &odd_path, &angles_path] {
        report.output(p);
    }
    report.write(&out.join("report.txt"))?;
    println!("simulated {} tilts into {}", sim.angles.len(), out.display());
    Ok(())
}

fn fbp(cfg: &RunConfig, tilts: &Path, angles: &Path, out: &Path) -> Result<()> {
    let mut report = RunReport::new("fbp", cfg);
    let angle_list = read_tlt(angles)?;
    let series = pipeline::read_series(tilts, &angle_list)?;
    let n = cfg.volume_size;
    let volume = report.time("fbp", || pipeline::fbp_recon(&series, cfg, (n, n, n)))?;
    pipeline::write_volume(&volume, out)?;
    report.metric("tilts", series.len());
    report.output(out);
    report.write(&report_sibling(out, "fbp_report.txt"))?;
    println!("fbp volume written to {}", out.display());
    Ok(())
}

fn train_cmd(
    cfg: &RunConfig,
    phantom: &Path,
    tilts_even: &Path,
    tilts_odd: &Path,
    angles: &Path,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))?;
    let mut report = RunReport::new("train", cfg);
    let angle_list = read_tlt(angles)?;
    let target = pipeline::read_volume(phantom)?;
    let even = pipeline::read_series(tilts_even, &angle_list)?;
    let odd = pipeline::read_series(tilts_odd, &angle_list)?;
    let example = pipeline::training_example(&target, &even, &odd, cfg)?;
    let net_cfg = pipeline::net_config(cfg);
    let train_cfg = pipeline::train_config(cfg)?;
    let (params, trace) =
        report.time("train", || train(&[example], net_cfg, &train_cfg))?;
    let ckpt_path = out.join("model.ckpt");
    save_checkpoint(&params, &cfg.wavelet_family, &ckpt_path)?;
    let csv_path = out.join("loss.csv");
    let mut csv = String::from("step,loss\n");
    for (i, loss) in trace.iter().enumerate() {
        csv.push_str(&format!("{i},{loss}\n"));
    }
    std::fs::write(&csv_path, csv)?;
    report.metric("steps", cfg.steps);
    report.metric("out_dim", net_cfg.out_dim);
    report.metric("params", params.param_count());
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        report.metric("loss_first", first);
        report.metric("loss_last", last);
    }
    report.output(&ckpt_path);
    report.output(&csv_path);
    report.write(&out.join("report.txt"))?;
    println!(
        "trained {} steps ({} params) into {}",
        cfg.steps,
        params.param_count(),
        out.display()
    );
    Ok(())
}

fn reconstruct(
    cfg: &RunConfig,
    checkpoint: &Path,
    tilts: &Path,
    angles: &Path,
    out: &Path,
) -> Result<()> {
    let mut report = RunReport::new("reconstruct", cfg);
    let (params, family) = load_checkpoint(checkpoint)?;
    let ckpt_mode = match params.config.out_dim {
        1 => TrainMode::Pixel,
        8 => TrainMode::Wavelet,
        other => bail!("checkpoint has unsupported output width {other}"),
    };
    if ckpt_mode != cfg.mode {
        bail!(
            "checkpoint was trained in {ckpt_mode:?} mode but --mode requests {:?}",
            cfg.mode
        );
    }
    let angle_list = read_tlt(angles)?;
    let raw = pipeline::read_series(tilts, &angle_list)?;
    let series = pipeline::prepare_filtered(&raw, cfg)?.normalized();
    let patch = PatchSpec::new(params.config.patch, cfg.patch_spacing)?;
    let n = cfg.volume_size;
    let recon = report.time("reconstruct", || -> Result<_> {
        Ok(match cfg.mode {
            TrainMode::Pixel => reconstruct_pixel(
                &params,
                &series,
                (n, n, n),
                cfg.voxel_size,
                patch,
                cfg.chunk_size,
            )?,
            TrainMode::Wavelet => {
                let mut bank_cfg = cfg.clone();
                bank_cfg.wavelet_family = family.clone();
                bank_cfg.patch_size = params.config.patch;
                let bank = pipeline::wavelet_bank(&bank_cfg)?;
                reconstruct_wavelet(
                    &params,
                    &series,
                    (n, n, n),
                    cfg.voxel_size,
                    patch,
                    &bank,
                    cfg.chunk_size,
                )?
            }
        })
    })?;
    pipeline::write_volume(&recon.volume, out)?;
    report.metric("network_evals", recon.network_evals);
    report.metric("wavelet_family", &family);
    report.output(out);
    report.write(&report_sibling(out, "reconstruct_report.txt"))?;
    println!(
        "reconstructed {} voxels with {} network evaluations into {}",
        n * n * n,
        recon.network_evals,
        out.display()
    );
    Ok(())
}

fn fsc_cmd(cfg: &RunConfig, a: &Path, b: &Path, report_path: &Path) -> Result<()> {
    let mut report = RunReport::new("fsc", cfg);
    let va = pipeline::read_volume(a)?;
    let vb = pipeline::read_volume(b)?;
    if va.dims() != vb.dims() {
        bail!(
            "volume shapes differ: {} is {:?}, {} is {:?}",
            a.display(),
            va.dims(),
            b.display(),
            vb.dims()
        );
    }
    let shells = tomo_core::metrics::default_shell_count(&va);
    let curve = fsc(&va, &vb, shells)?;
    let res_half = resolution_at(&curve, 0.5);
    let res_gold = resolution_at(&curve, 0.143);
    println!("resolution at FSC=0.5:   {res_half}");
    println!("resolution at FSC=0.143: {res_gold}");
    report.metric("resolution_0.5", res_half);
    report.metric("resolution_0.143", res_gold);
    report.metric("shells", shells);
    report.write(report_path)?;
    Ok(())
}

fn repro_acceptance(cfg: &RunConfig, report_path: &Path) -> Result<ExitCode> {
    let mut report = RunReport::new("repro-acceptance", cfg);
    let criteria = acceptance::run_all();
    for c in &criteria {
        println!("{c}");
        report.metric(
            &format!("criterion_{}", c.id),
            format!("{} — {}", if c.passed { "PASS" } else { "FAIL" }, c.details),
        );
    }
    let ok = acceptance::all_passed(&criteria);
    report.metric("all_passed", ok);
    report.write(report_path)?;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
