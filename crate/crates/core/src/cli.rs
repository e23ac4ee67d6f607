//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or file-format error, 3 numerical
//! failure (label collapse, singular covariance).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::blur::{default_radius, gaussian_blur};
use crate::error::{Error, Result};
use crate::gmm_fit::FitConfig;
use crate::hmrf_em::{run_hmrf_em, EmConfig, SegmentationResult};
use crate::io::{self, LabelMap, RawVolume, LABEL_MAGIC};
use crate::lattice::{GridShape, Lattice, NeighborhoodKind};
use crate::map_icm::{LabelField, MapConfig};
use crate::metrics::dice;
use crate::observation::ObservationField;
use crate::synth::{generate, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hmrf", version, about = "GMM-based hidden Markov random field segmentation")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a noisy-sphere volume and its ground truth (`<out>.truth`).
    GenVolume(GenVolumeArgs),
    /// Segment a PNM image (grayscale or RGB).
    SegmentImage(SegmentArgs),
    /// Segment a raw volume.
    SegmentVolume(SegmentArgs),
    /// Dice coefficient between two label files.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenVolumeArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub extent: usize,
    #[arg(long, default_value_t = 20.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 100.0)]
    pub fg: f64,
    #[arg(long, default_value_t = 0.0)]
    pub bg: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_low: f64,
    #[arg(long, default_value_t = 120.0)]
    pub noise_high: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of labels.
    #[arg(long)]
    pub k: usize,
    /// Gaussian components per label.
    #[arg(long, default_value_t = 1)]
    pub g: usize,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 10)]
    pub em_iters: usize,
    #[arg(long, default_value_t = 10)]
    pub map_iters: usize,
    /// n4 or n8 for images, n6 or n26 for volumes.
    #[arg(long)]
    pub neighborhood: Option<String>,
    /// Pre-blur sigma in pixels (images only); off by default.
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    /// Energy trace CSV, one row per EM iteration.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also write the k-means initialization in the output format.
    #[arg(long)]
    pub init_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub label: usize,
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    if cli.threads > 0 {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match dispatch(&cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn dispatch(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenVolume(a) => gen_volume(a, out),
        Command::SegmentImage(a) => segment_image(a, out),
        Command::SegmentVolume(a) => segment_volume(a, out),
        Command::Eval(a) => eval(a, out),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) {
    let _ = out.write_fmt(line);
    let _ = out.write_all(b"\n");
}

/// Ground-truth path written next to a generated volume.
pub fn truth_path(volume: &Path) -> PathBuf {
    volume.with_extension("truth")
}

fn gen_volume(a: &GenVolumeArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthSpec {
        extent: a.extent,
        radius: a.radius,
        fg_intensity: a.fg,
        bg_intensity: a.bg,
        noise_low: a.noise_low,
        noise_high: a.noise_high,
        seed: a.seed,
    };
    let synth = generate(&spec)?;
    let extents = [a.extent; 3];
    io::write_volume(&a.out, &RawVolume::from_f64(extents, synth.volume.values())?)?;
    let truth = truth_path(&a.out);
    io::write_label_map(&truth, &LabelMap::new(extents, synth.truth.clone())?)?;
    say(
        out,
        format_args!(
            "wrote {} ({}^3 voxels, {} foreground) and {}",
            a.out.display(),
            a.extent,
            synth.truth.histogram()[1],
            truth.display()
        ),
    );
    Ok(())
}

fn em_config(a: &SegmentArgs) -> Result<EmConfig> {
    if a.k < 2 {
        return Err(Error::InvalidConfig(format!("--k must be at least 2, got {}", a.k)));
    }
    if a.k > 256 {
        return Err(Error::InvalidConfig(format!("--k must be at most 256, got {}", a.k)));
    }
    let config = EmConfig {
        em_iters: a.em_iters,
        num_labels: a.k,
        map: MapConfig {
            max_map_iters: a.map_iters,
            beta: a.beta,
            ..MapConfig::default()
        },
        fit: FitConfig {
            components: a.g,
            ..FitConfig::default()
        },
        ..EmConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn neighborhood(a: &SegmentArgs, default: NeighborhoodKind) -> Result<NeighborhoodKind> {
    a.neighborhood.as_deref().map_or(Ok(default), str::parse)
}

fn segment(
    y: &ObservationField,
    lattice: &Lattice,
    a: &SegmentArgs,
) -> Result<SegmentationResult> {
    let config = em_config(a)?;
    let result = run_hmrf_em(y, lattice, &config, a.seed)?;
    if let Some(trace) = &a.trace {
        io::write_trace(trace, &result.em_trace)?;
    }
    Ok(result)
}

fn report(out: &mut dyn Write, result: &SegmentationResult) {
    let last = result.em_trace.records.last();
    say(
        out,
        format_args!(
            "labels {:?} total_energy {:.6}",
            result.labels.histogram(),
            last.map_or(f64::NAN, |r| r.total)
        ),
    );
}

fn segment_image(a: &SegmentArgs, out: &mut dyn Write) -> Result<()> {
    let kind = neighborhood(a, NeighborhoodKind::N4)?;
    em_config(a)?;
    let img = io::load_image(&a.input)?;
    let lattice = Lattice::new(GridShape::new(&[img.rows, img.cols])?, kind)?;
    let pixels = match a.blur_sigma {
        Some(sigma) => gaussian_blur(&img.pixels, img.rows, img.cols, sigma, default_radius(sigma))?,
        None => img.pixels.clone(),
    };
    let result = segment(&pixels, &lattice, a)?;
    io::write_label_raster(&a.out, img.rows, img.cols, &result.labels)?;
    if let Some(init) = &a.init_out {
        io::write_label_raster(init, img.rows, img.cols, &result.initial_labels)?;
    }
    report(out, &result);
    Ok(())
}

fn segment_volume(a: &SegmentArgs, out: &mut dyn Write) -> Result<()> {
    let kind = neighborhood(a, NeighborhoodKind::N6)?;
    em_config(a)?;
    let volume = io::read_volume(&a.input)?;
    let lattice = Lattice::new(volume.header.shape()?, kind)?;
    let y = volume.to_observations()?;
    let result = segment(&y, &lattice, a)?;
    let extents = volume.header.extents.map(|e| e as usize);
    io::write_label_map(&a.out, &LabelMap::new(extents, result.labels.clone())?)?;
    if let Some(init) = &a.init_out {
        io::write_label_map(init, &LabelMap::new(extents, result.initial_labels.clone())?)?;
    }
    report(out, &result);
    Ok(())
}

/// Loads a label map file or an indexed label raster, returning its grid
/// extents alongside the labels.
pub fn load_labels(path: &Path) -> Result<(Vec<usize>, LabelField)> {
    let bytes = io::read_file(path)?;
    if bytes.starts_with(LABEL_MAGIC) {
        let map = io::parse_label_map(&bytes)?;
        Ok((map.extents.iter().map(|&e| e as usize).collect(), map.labels))
    } else {
        let img = io::parse_pnm(&bytes)?;
        let labels = io::decode_label_raster(&img, 256)?;
        let k = labels.as_slice().iter().max().map_or(1, |m| m + 1);
        Ok((vec![img.rows, img.cols], LabelField::new(labels.into_vec(), k)?))
    }
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (pred_shape, pred) = load_labels(&a.pred)?;
    let (truth_shape, truth) = load_labels(&a.truth)?;
    let squeeze = |s: &[usize]| s.iter().copied().filter(|&e| e != 1).collect::<Vec<_>>();
    if squeeze(&pred_shape) != squeeze(&truth_shape) {
        return Err(Error::InvalidShape(format!(
            "prediction extents {pred_shape:?} differ from truth extents {truth_shape:?}"
        )));
    }
    let d = dice(&pred, &truth, a.label)?;
    say(out, format_args!("{d:.6}"));
    let k = pred.num_labels().max(truth.num_labels());
    let (hp, ht) = (pred.histogram(), truth.histogram());
    for l in 0..k {
        say(
            out,
            format_args!(
                "label {l}: pred {} truth {}",
                hp.get(l).copied().unwrap_or(0),
                ht.get(l).copied().unwrap_or(0)
            ),
        );
    }
    Ok(())
}
