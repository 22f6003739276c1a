//! Command-line front end. Every command is deterministic given its flags.
//!
//! Exit codes: 0 success, 1 input/output or image problems, 2 bad flags or
//! malformed manifest, 3 training divergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::denoiser::{denoise, LossTerm, TrainConfig};
use crate::error::{Error, Result};
use crate::freq::decompose;
use crate::image::{load_image_with_info, save_image, save_npy, Image};
use crate::metrics::{psnr, ssim};
use crate::net::save_checkpoint;
use crate::noise::{add_noise, default_theory_bands, measure_noise_std, theory_report, NoiseKind, NoiseSpec, TheoryReport};
use crate::objective::LossWeights;
use crate::fmt_sig;

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "zscfc", about = "Zero-shot single-image denoising by cross-frequency consistency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Denoise one PNG; writes the result and a `.loss.csv` trace next to it.
    Denoise(DenoiseArgs),
    /// Write the low band and the three high bands of an image.
    Decompose(DecomposeArgs),
    /// Add synthetic noise to a clean PNG.
    Noise(NoiseArgs),
    /// PSNR and SSIM between two PNGs.
    Metrics(MetricsArgs),
    /// Cross-band correlation report for a clean chart.
    Theory(TheoryArgs),
    /// Denoise every image in a manifest and tabulate quality and timing.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct TrainFlags {
    /// Decomposition cutoffs f_c1,f_c2,f_c3 in cycles/pixel.
    #[arg(long, value_parser = parse_triple, default_value = "0.05,0.07,0.1")]
    fc: [f64; 3],
    /// Reference band f_ref1,f_ref2 in cycles/pixel.
    #[arg(long, value_parser = parse_pair, default_value = "0.03,0.12")]
    fref: [f64; 2],
    /// Loss weights for cons1,cons2,reg.
    #[arg(long, value_parser = parse_triple, default_value = "0.5,2,0.5")]
    weights: [f64; 3],
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of convolution layers (2, 3 or 5).
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Drop one loss term: cons1, cons2 or reg.
    #[arg(long, value_parser = parse_loss_term)]
    ablate: Option<LossTerm>,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig> {
        let [f_c1, f_c2, f_c3] = self.fc;
        let [f_ref1, f_ref2] = self.fref;
        let [w1, w2, w3] = self.weights;
        let cfg = TrainConfig {
            f_c1,
            f_c2,
            f_c3,
            f_ref1,
            f_ref2,
            weights: LossWeights::new(w1, w2, w3)?,
            iterations: self.iters,
            lr: self.lr,
            seed: self.seed,
            depth: self.depth,
        };
        let cfg = match self.ablate {
            Some(term) => cfg.without(term),
            None => cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn ablate_label(&self) -> String {
        self.ablate.map_or_else(|| "none".to_string(), |t| t.to_string())
    }
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    input: PathBuf,
    output: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    /// Also save the trained network weights here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    input: PathBuf,
    outdir: PathBuf,
    #[arg(long, value_parser = parse_triple, default_value = "0.05,0.07,0.1")]
    fc: [f64; 3],
}

#[derive(Args, Debug)]
struct NoiseFlags {
    #[arg(long, value_parser = parse_noise_kind, default_value = "white")]
    kind: NoiseKind,
    /// Noise standard deviation on the [0,1] scale; `30/255` is accepted.
    #[arg(long, value_parser = parse_ratio)]
    std: f64,
    /// Correlation length in pixels for correlated noise.
    #[arg(long = "Lc", alias = "lc", default_value_t = 3.0)]
    corr_length: f64,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    input: PathBuf,
    output: PathBuf,
    #[command(flatten)]
    noise: NoiseFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ReportFormat {
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    chart: PathBuf,
    #[arg(long = "Lc", alias = "lc", default_value_t = 3.0)]
    corr_length: f64,
    #[arg(long, value_parser = parse_noise_kind, default_value = "correlated")]
    kind: NoiseKind,
    #[arg(long, value_parser = parse_ratio, default_value = "0.1")]
    std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// One `noisy[,clean]` pair per line, or one clean path per line with
    /// `--noise`. Lines starting with `#` are ignored.
    manifest: PathBuf,
    out_csv: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    /// Synthesize noise of this kind onto each clean image listed.
    #[arg(long, value_parser = parse_noise_kind, requires = "std")]
    noise: Option<NoiseKind>,
    #[arg(long, value_parser = parse_ratio)]
    std: Option<f64>,
    #[arg(long = "Lc", alias = "lc", default_value_t = 3.0)]
    corr_length: f64,
    /// Center-crop every image to at most N×N before processing.
    #[arg(long)]
    crop: Option<usize>,
    /// Images processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_list<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_list::<3>(s)
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    parse_list::<2>(s)
}

/// A plain number or a fraction such as `30/255`.
pub fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let d = num(b)?;
            if d == 0.0 {
                return Err("zero denominator".into());
            }
            num(a)? / d
        }
        None => num(s)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

fn parse_noise_kind(s: &str) -> std::result::Result<NoiseKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_loss_term(s: &str) -> std::result::Result<LossTerm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Hex SHA-256 of the default training configuration.
pub fn default_config_hash() -> String {
    let digest = Sha256::digest(TrainConfig::default().describe().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn version_string() -> String {
    format!("{} (default config sha256 {})", env!("CARGO_PKG_VERSION"), default_config_hash())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) => EXIT_USAGE,
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_IO,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let command = Cli::command().version(version_string());
    let cli = match command
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Denoise(a) => cmd_denoise(&a),
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Noise(a) => cmd_noise(&a),
        Command::Metrics(a) => cmd_metrics(&a),
        Command::Theory(a) => cmd_theory(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("zscfc: {e}");
            exit_code(&e)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `out.png` → `out.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// Loads a PNG, warning on stderr when an alpha channel was discarded.
fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let (img, info) = load_image_with_info(path)?;
    if info.alpha_dropped {
        eprintln!("warning: {}: alpha channel ignored", path.display());
    }
    Ok(img)
}

fn cmd_denoise(a: &DenoiseArgs) -> Result<()> {
    let cfg = a.train.config()?;
    let noisy = load_image(&a.input)?;
    let result = denoise(&noisy, &cfg)?;
    save_image(&result.denoised, &a.output)?;

    let mut csv = String::new();
    let _ = writeln!(csv, "# zscfc {} denoise", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(csv, "# input={}", a.input.display());
    let _ = writeln!(csv, "# {}", cfg.describe());
    let _ = writeln!(csv, "# ablate={}", a.train.ablate_label());
    csv.push_str("iteration,cons1,cons2,reg,total\n");
    for (i, l) in result.loss_trace.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            i + 1,
            fmt_sig(l.cons1),
            fmt_sig(l.cons2),
            fmt_sig(l.reg),
            fmt_sig(l.total)
        );
    }
    write_text(&sibling(&a.output, "loss.csv"), &csv)?;
    if let Some(path) = &a.checkpoint {
        save_checkpoint(&result.params, path)?;
    }
    eprintln!(
        "denoised {} in {}s",
        a.input.display(),
        fmt_sig(result.elapsed.as_secs_f64())
    );
    Ok(())
}

/// Maps a signed band into a viewable `[0, 1]` preview.
fn band_preview(band: &Image) -> Image {
    band.map(|v| v / 2.0 + 0.5)
}

fn cmd_decompose(a: &DecomposeArgs) -> Result<()> {
    let img = load_image(&a.input)?;
    let [f1, f2, f3] = a.fc;
    let d = decompose(&img, f1, f2, f3)?;
    fs::create_dir_all(&a.outdir).map_err(|e| Error::io(&a.outdir, e))?;
    let parts = [("lfs1", &d.lfs1, false), ("hfs1", &d.hfs1, true), ("hfs2", &d.hfs2, true), ("hfs3", &d.hfs3, true)];
    for (name, band, signed) in parts {
        let preview = if signed { band_preview(band) } else { band.clone() };
        save_image(&preview, a.outdir.join(format!("{name}.png")))?;
        save_npy(band, a.outdir.join(format!("{name}.npy")))?;
    }
    println!("# zscfc decompose input={} fc={},{},{}", a.input.display(), f1, f2, f3);
    println!("band,min,max,mean");
    for (name, band, _) in parts {
        let (lo, hi) = band
            .data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        println!("{name},{},{},{}", fmt_sig(lo), fmt_sig(hi), fmt_sig(band.mean()));
    }
    Ok(())
}

fn cmd_noise(a: &NoiseArgs) -> Result<()> {
    let clean = load_image(&a.input)?;
    let spec = NoiseSpec::new(a.noise.kind, a.noise.std, a.seed).with_corr_length(a.noise.corr_length);
    let noisy = add_noise(&clean, &spec)?;
    save_image(&noisy, &a.output)?;
    save_npy(&noisy, sibling(&a.output, "npy"))?;
    let measured = measure_noise_std(&noisy, &clean)?;
    println!("# zscfc noise input={}", a.input.display());
    println!("kind,std,corr_length,seed,measured_std");
    println!(
        "{},{},{},{},{}",
        spec.kind,
        fmt_sig(spec.std),
        fmt_sig(spec.corr_length),
        spec.seed,
        fmt_sig(measured)
    );
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let x = load_image(&a.a)?;
    let y = load_image(&a.b)?;
    let p = psnr(&x, &y, 1.0)?;
    let s = ssim(&x, &y)?;
    println!("path_a,path_b,psnr,ssim");
    println!("{},{},{},{}", a.a.display(), a.b.display(), fmt_sig(p), fmt_sig(s));
    Ok(())
}

fn cmd_theory(a: &TheoryArgs) -> Result<()> {
    let chart = load_image(&a.chart)?;
    let spec = NoiseSpec::new(a.kind, a.std, a.seed).with_corr_length(a.corr_length);
    let report = theory_report(&chart, &spec, default_theory_bands())?;
    match a.format {
        ReportFormat::Csv => {
            println!("# zscfc theory chart={}", a.chart.display());
            println!("{}", TheoryReport::CSV_HEADER);
            println!("{}", report.csv_row());
        }
        ReportFormat::Jsonl => {
            let line = serde_json::to_string(&report).map_err(|e| Error::Format(e.to_string()))?;
            println!("{line}");
        }
    }
    Ok(())
}

/// One manifest line: a noisy image and an optional clean reference, or a
/// clean image to be noised when synthesizing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub first: PathBuf,
    pub second: Option<PathBuf>,
}

/// Parses a manifest; relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() > 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parameter(format!("manifest line {}: malformed entry {line:?}", n + 1)));
        }
        entries.push(ManifestEntry {
            first: base.join(fields[0]),
            second: fields.get(1).map(|f| base.join(f)),
        });
    }
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub image: String,
    pub noise_std: Option<f64>,
    pub psnr_noisy: Option<f64>,
    pub psnr_denoised: Option<f64>,
    pub ssim_noisy: Option<f64>,
    pub ssim_denoised: Option<f64>,
    pub wall_seconds: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str =
        "image,noise_std,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised,wall_seconds,iterations,seed";

    fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.image,
            opt(self.noise_std),
            opt(self.psnr_noisy),
            opt(self.psnr_denoised),
            opt(self.ssim_noisy),
            opt(self.ssim_denoised),
            fmt_sig(self.wall_seconds),
            self.iterations,
            self.seed
        )
    }
}

/// Mean of the values present, or `None` when there are none.
fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summary_row(records: &[BenchRecord]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
    let col = |f: fn(&BenchRecord) -> Option<f64>| opt(mean_of(records.iter().map(f)));
    format!(
        "mean,{},{},{},{},{},{},{},",
        col(|r| r.noise_std),
        col(|r| r.psnr_noisy),
        col(|r| r.psnr_denoised),
        col(|r| r.ssim_noisy),
        col(|r| r.ssim_denoised),
        col(|r| Some(r.wall_seconds)),
        opt(mean_of(records.iter().map(|r| Some(r.iterations as f64))))
    )
}

fn bench_one(
    a: &BenchArgs,
    cfg: &TrainConfig,
    entry: &ManifestEntry,
    index: usize,
) -> Result<BenchRecord> {
    let seed = cfg.seed + index as u64;
    let crop = |img: Image| match a.crop {
        Some(n) => img.center_crop(n),
        None => img,
    };
    let (noisy, clean) = match a.noise {
        Some(kind) => {
            let clean = crop(load_image(&entry.first)?);
            let std = a.std.expect("clap enforces --std with --noise");
            let spec = NoiseSpec::new(kind, std, seed).with_corr_length(a.corr_length);
            (add_noise(&clean, &spec)?, Some(clean))
        }
        None => {
            let noisy = crop(load_image(&entry.first)?);
            let clean = entry.second.as_ref().map(load_image).transpose()?.map(crop);
            (noisy, clean)
        }
    };
    let run_cfg = TrainConfig { seed, ..cfg.clone() };
    let start = Instant::now();
    let result = denoise(&noisy, &run_cfg)?;
    let wall = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let score = |img: &Image, clean: &Image| -> Result<(f64, f64)> { Ok((psnr(img, clean, 1.0)?, ssim(img, clean)?)) };
    let (noise_std, before, after) = match &clean {
        Some(c) => (
            Some(measure_noise_std(&noisy, c)?),
            Some(score(&noisy, c)?),
            Some(score(&result.denoised, c)?),
        ),
        None => (None, None, None),
    };
    Ok(BenchRecord {
        image: entry.first.display().to_string(),
        noise_std,
        psnr_noisy: before.map(|s| s.0),
        psnr_denoised: after.map(|s| s.0),
        ssim_noisy: before.map(|s| s.1),
        ssim_denoised: after.map(|s| s.1),
        wall_seconds: wall,
        iterations: run_cfg.iterations,
        seed,
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cfg = a.train.config()?;
    if a.jobs == 0 {
        return Err(Error::Parameter("--jobs must be at least 1".into()));
    }
    let text = fs::read_to_string(&a.manifest).map_err(|e| Error::io(&a.manifest, e))?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base)?;
    if entries.is_empty() {
        return Err(Error::Parameter(format!("manifest {} lists no images", a.manifest.display())));
    }
    if a.noise.is_some() && entries.iter().any(|e| e.second.is_some()) {
        return Err(Error::Parameter("with --noise the manifest lists clean images only".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let records: Vec<BenchRecord> = pool.install(|| {
        entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| bench_one(a, &cfg, e, i))
            .collect::<Result<_>>()
    })?;

    let mut csv = String::new();
    let _ = writeln!(csv, "# zscfc {} bench manifest={}", env!("CARGO_PKG_VERSION"), a.manifest.display());
    let _ = writeln!(csv, "# {}", cfg.describe());
    let _ = writeln!(csv, "# ablate={}", a.train.ablate_label());
    match (a.noise, a.std) {
        (Some(kind), Some(std)) => {
            let _ = writeln!(csv, "# noise={kind} std={} Lc={}", fmt_sig(std), fmt_sig(a.corr_length));
        }
        _ => {
            let _ = writeln!(csv, "# noise=from-manifest");
        }
    }
    if let Some(n) = a.crop {
        let _ = writeln!(csv, "# crop={n}");
    }
    csv.push_str(BenchRecord::CSV_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    csv.push_str(&summary_row(&records));
    csv.push('\n');
    write_text(&a.out_csv, &csv)?;
    eprintln!("benchmarked {} images", records.len());
    Ok(())
}
