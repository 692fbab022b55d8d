//! File formats, run configuration and the segmentation pipeline.

pub mod config;
pub mod fixtures;
pub mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::automaton::{run_observed, AmConfig, CycleReport, SkewStack};
use crate::domain::{DomainSpec, Label, LabelField};
use crate::error::{Error, Result};
use crate::operators::VotingOperator;
use crate::skew::{background_skew, zero_skew, ImageField, SoftThresholdSpec, Window};
use crate::spectral::GaussianSpec;

pub use config::{FilterSpec, ImageSource, RunConfig, SkewSpec, Threshold};
pub use pgm::{read_image, read_label_csv, read_pgm_raw, write_labels};

/// I.i.d. uniform labels in `1..=M`, drawn row-major from a ChaCha8 stream
/// seeded with `seed`.
pub fn random_init(domain: &DomainSpec, num_labels: usize, seed: u64) -> Result<LabelField> {
    if num_labels == 0 || num_labels > Label::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "label count {num_labels} outside 1..=65535"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..domain.size())
        .map(|_| rng.random_range(1..=num_labels as Label))
        .collect();
    LabelField::new(domain.clone(), labels, num_labels)
}

/// Writes `iteration,boundary_crossings,pixels_changed,nonempty_masks`, one
/// row per visited state.
pub fn write_trajectory(report: &CycleReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "boundary_crossings", "pixels_changed", "nonempty_masks"])?;
    for t in &report.trace {
        w.write_record([
            t.iteration.to_string(),
            t.boundary_crossings.to_string(),
            t.pixels_changed.to_string(),
            t.nonempty_masks.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `key=value` summary of a run.
pub fn summary_lines(report: &CycleReport) -> String {
    let last = report.trace.last().expect("trace includes iteration 0");
    format!(
        "converged={}\ncycle_length={}\ntransient={}\niterations_run={}\nfinal_boundary_crossings={}\nfinal_nonempty_masks={}\n",
        report.converged,
        report.cycle_length,
        report.transient,
        report.iterations_run,
        last.boundary_crossings,
        last.nonempty_masks,
    )
}

/// Everything a run needs besides the initial state.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub image: ImageField,
    /// Dark-region mask when the image is a synthetic fixture.
    pub dark: Option<Vec<bool>>,
    pub config: AmConfig,
    /// Threshold used by the background skew, if any.
    pub threshold: Option<f64>,
}

pub fn load_image(source: &ImageSource) -> Result<(ImageField, Option<Vec<bool>>)> {
    match source {
        ImageSource::Path(p) => Ok((read_image(p)?, None)),
        ImageSource::Fixture(name) => {
            let b = fixtures::fixture(name)?;
            Ok((b.image, Some(b.dark)))
        }
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (image, dark) = load_image(&cfg.source)?;
    prepare_image(cfg, image, dark)
}

/// [`prepare`] with the image supplied by the caller; `cfg.source` is ignored.
pub fn prepare_image(cfg: &RunConfig, image: ImageField, dark: Option<Vec<bool>>) -> Result<Prepared> {
    let image = image.with_boundary(cfg.boundary);
    let domain = image.domain().clone();
    let operator: VotingOperator = cfg.filter.operator(&domain)?;
    let (skews, threshold): (SkewStack, Option<f64>) = match cfg.skew {
        SkewSpec::Zero => (zero_skew(&domain, cfg.labels)?, None),
        SkewSpec::Background {
            threshold,
            sharpness,
            amplitude,
        } => {
            let theta = match threshold {
                Threshold::Auto => image.otsu_threshold(),
                Threshold::Value(t) => t,
            };
            let window = match &cfg.filter {
                FilterSpec::Gaussian(spec) => Window::Gaussian(spec.clone()),
                other => Window::Kernel(other.centered_taps(domain.ndim())?),
            };
            let spec = SoftThresholdSpec {
                window,
                threshold: theta,
                sharpness,
                amplitude,
            };
            (background_skew(&image, &spec, cfg.labels)?, Some(theta))
        }
    };
    let config = match cfg.max_iterations {
        Some(cap) => AmConfig::with_limits(operator, skews, cap, cfg.detect)?,
        None => {
            let mut c = AmConfig::new(operator, skews)?;
            c.detect_mode = cfg.detect;
            c
        }
    };
    Ok(Prepared {
        image,
        dark,
        config,
        threshold,
    })
}

/// Runs from `random_init(seed)`, calling `checkpoint(i, ψ_i)` for every
/// iteration listed in `cfg.checkpoints`.
pub fn run_seeded(
    prepared: &Prepared,
    cfg: &RunConfig,
    seed: u64,
    mut checkpoint: impl FnMut(usize, &LabelField) -> Result<()>,
) -> Result<CycleReport> {
    let psi0 = random_init(prepared.config.domain(), cfg.labels, seed)?;
    let mut failure = None;
    let report = run_observed(&psi0, &prepared.config, |i, psi| {
        if failure.is_none() && cfg.checkpoints.contains(&i) {
            if let Err(e) = checkpoint(i, psi) {
                failure = Some(e);
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Files produced by [`segment`].
#[derive(Debug, Clone)]
pub struct SegmentOutput {
    pub report: CycleReport,
    pub files: Vec<PathBuf>,
}

/// Full segmentation run into `out_dir`: `labels_iterNNNN.pgm/.csv` per
/// checkpoint, `labels_final.pgm/.csv`, `trajectory.csv` and `summary.txt`.
pub fn segment(cfg: &RunConfig, out_dir: &Path) -> Result<SegmentOutput> {
    fs::create_dir_all(out_dir)?;
    let prepared = prepare(cfg)?;
    let mut files = Vec::new();
    let report = run_seeded(&prepared, cfg, cfg.seed, |i, psi| {
        let path = out_dir.join(format!("labels_iter{i:04}.pgm"));
        write_labels(psi, &path)?;
        files.push(path);
        Ok(())
    })?;
    let final_state = report.final_state().expect("at least one state");
    let path = out_dir.join("labels_final.pgm");
    write_labels(final_state, &path)?;
    files.push(path);

    let path = out_dir.join("trajectory.csv");
    write_trajectory(&report, &path)?;
    files.push(path);

    let mut summary = format!("seed={}\nlabels={}\n", cfg.seed, cfg.labels);
    if let Some(t) = prepared.threshold {
        summary.push_str(&format!("threshold={t}\n"));
    }
    summary.push_str(&summary_lines(&report));
    let path = out_dir.join("summary.txt");
    fs::write(&path, summary)?;
    files.push(path);
    Ok(SegmentOutput { report, files })
}

/// `runs` runs seeded `cfg.seed, cfg.seed + 1, …`, each writing
/// `trajectory_runNNN.csv` into `out_dir`.
pub fn bench(cfg: &RunConfig, runs: usize, out_dir: &Path) -> Result<Vec<CycleReport>> {
    fs::create_dir_all(out_dir)?;
    let prepared = prepare(cfg)?;
    (0..runs)
        .map(|r| {
            let report = run_seeded(&prepared, cfg, cfg.seed.wrapping_add(r as u64), |_, _| Ok(()))?;
            write_trajectory(&report, out_dir.join(format!("trajectory_run{r:03}.csv")))?;
            Ok(report)
        })
        .collect()
}

/// Default window for image-only callers.
pub fn gaussian_window(scale: f64) -> Result<Window> {
    Ok(Window::Gaussian(GaussianSpec::new(scale)?))
}
