//! Run configuration: a flat `key = value` file.
//!
//! ```text
//! # blank lines and lines starting with '#' are ignored
//! fixture     = blobs64          # or: image = cells.pgm
//! labels      = 64
//! filter      = gaussian         # dirac | box | plus | gaussian | taps:<file>
//! scale       = 4
//! boundary    = padded           # padded | circular
//! skew        = background       # background | zero
//! theta       = auto             # auto (Otsu) | number in [0, 1]
//! sharpness   = 0.05
//! amplitude   = 1
//! seed        = 1
//! max_iters   = 200
//! output      = out/
//! checkpoints = 0,2,8,14
//! detect      = full             # full | last-two
//! ```
//!
//! Relative paths are resolved against the config file's directory. A taps
//! file holds one row of whitespace-separated weights per line; one row gives
//! 1-D taps, several rows give 2-D taps. Extents must be odd and the center
//! entry is offset 0.

use std::fs;
use std::path::{Path, PathBuf};

use crate::automaton::DetectMode;
use crate::domain::{Boundary, DomainSpec};
use crate::error::{Error, Result};
use crate::operators::VotingOperator;
use crate::skew::{DEFAULT_AMPLITUDE, DEFAULT_SHARPNESS};
use crate::spectral::{periodized_gaussian, sampled_gaussian, CenteredTaps, Filter, GaussianSpec};

pub const DEFAULT_CHECKPOINTS: [usize; 4] = [0, 2, 8, 14];

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Path(PathBuf),
    Fixture(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    Dirac,
    /// `3^d` box of ones.
    Box,
    /// Center and its `2d` axis neighbors.
    Plus,
    Gaussian(GaussianSpec),
    Taps(CenteredTaps),
}

impl FilterSpec {
    /// Parses `dirac`, `box` (also `box3`, `box3x3`, `moore`), `plus` (also
    /// `vonneumann`), `gaussian` or `taps:<file>`.
    pub fn parse(text: &str, scale: f64, base: &Path) -> Result<Self> {
        Ok(match text.trim() {
            "dirac" | "delta" => FilterSpec::Dirac,
            "box" | "box3" | "box3x3" | "moore" => FilterSpec::Box,
            "plus" | "vonneumann" => FilterSpec::Plus,
            "gaussian" => FilterSpec::Gaussian(GaussianSpec::new(scale)?),
            other => match other.strip_prefix("taps:") {
                Some(path) => FilterSpec::Taps(read_taps(&resolve(base, path))?),
                None => return Err(Error::Config(format!("unknown filter '{other}'"))),
            },
        })
    }

    pub fn centered_taps(&self, ndim: usize) -> Result<CenteredTaps> {
        let taps = match self {
            FilterSpec::Dirac => CenteredTaps::dirac(ndim),
            FilterSpec::Box => CenteredTaps::boxcar(ndim, 1),
            FilterSpec::Plus => CenteredTaps::plus(ndim),
            FilterSpec::Gaussian(spec) => sampled_gaussian(spec, ndim),
            FilterSpec::Taps(t) => t.clone(),
        };
        if taps.ndim() != ndim {
            return Err(Error::Config(format!(
                "{}-D taps used on a {ndim}-D domain",
                taps.ndim()
            )));
        }
        Ok(taps)
    }

    /// A circular filter on `domain`; Gaussians are periodized.
    pub fn circular_filter(&self, domain: &DomainSpec) -> Result<Filter> {
        match self {
            FilterSpec::Gaussian(spec) => periodized_gaussian(domain, spec),
            other => Filter::from_centered(domain, &other.centered_taps(domain.ndim())?),
        }
    }

    /// Circular convolution with the unit-sum filter, or normalized
    /// noncircular convolution, following the domain's boundary. Either way a
    /// constant field votes with weight 1.
    pub fn operator(&self, domain: &DomainSpec) -> Result<VotingOperator> {
        match domain.boundary() {
            Boundary::Circular => {
                VotingOperator::circular(self.circular_filter(domain)?.normalized())
            }
            Boundary::ZeroPadded => {
                VotingOperator::noncircular_star(domain, self.centered_taps(domain.ndim())?)
            }
        }
    }
}

pub fn parse_taps(text: &str) -> Result<CenteredTaps> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad tap weight '{t}'")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Config("taps must be a nonempty rectangular grid".into()));
    }
    let weights = rows.concat();
    if rows.len() == 1 {
        CenteredTaps::from_box(&[width], weights)
    } else {
        CenteredTaps::from_box(&[rows.len(), width], weights)
    }
}

pub fn read_taps(path: &Path) -> Result<CenteredTaps> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read taps file {}: {e}", path.display())))?;
    parse_taps(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SkewSpec {
    Zero,
    Background {
        threshold: Threshold,
        sharpness: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: ImageSource,
    pub labels: usize,
    pub filter: FilterSpec,
    pub boundary: Boundary,
    pub skew: SkewSpec,
    pub seed: u64,
    /// `None` uses the default cap `10·N·M`.
    pub max_iterations: Option<usize>,
    pub output: Option<PathBuf>,
    pub checkpoints: Vec<usize>,
    pub detect: DetectMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: ImageSource::Fixture("blobs64".into()),
            labels: 64,
            filter: FilterSpec::Gaussian(GaussianSpec::new(4.0).expect("positive scale")),
            boundary: Boundary::ZeroPadded,
            skew: SkewSpec::Background {
                threshold: Threshold::Auto,
                sharpness: DEFAULT_SHARPNESS,
                amplitude: DEFAULT_AMPLITUDE,
            },
            seed: 0,
            max_iterations: None,
            output: None,
            checkpoints: DEFAULT_CHECKPOINTS.to_vec(),
            detect: DetectMode::FullHistory,
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p.trim());
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value '{value}' for {key}")))
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut filter_text = None;
        let mut scale = 4.0;
        let mut skew_kind = "background".to_string();
        let mut threshold = Threshold::Auto;
        let mut sharpness = DEFAULT_SHARPNESS;
        let mut amplitude = DEFAULT_AMPLITUDE;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "image" => cfg.source = ImageSource::Path(resolve(base, value)),
                "fixture" => cfg.source = ImageSource::Fixture(value.to_string()),
                "labels" => cfg.labels = number(key, value, line)?,
                "filter" => filter_text = Some(value.to_string()),
                "scale" => scale = number(key, value, line)?,
                "boundary" => cfg.boundary = parse_boundary(value)?,
                "skew" => skew_kind = value.to_string(),
                "theta" => {
                    threshold = match value {
                        "auto" => Threshold::Auto,
                        v => Threshold::Value(number(key, v, line)?),
                    }
                }
                "sharpness" => sharpness = number(key, value, line)?,
                "amplitude" => amplitude = number(key, value, line)?,
                "seed" => cfg.seed = number(key, value, line)?,
                "max_iters" => cfg.max_iterations = Some(number(key, value, line)?),
                "output" => cfg.output = Some(resolve(base, value)),
                "checkpoints" => {
                    cfg.checkpoints = value
                        .split(',')
                        .map(|v| number(key, v.trim(), line))
                        .collect::<Result<_>>()?
                }
                "detect" => cfg.detect = parse_detect(value)?,
                other => return Err(Error::Config(format!("line {line}: unknown key '{other}'"))),
            }
        }

        cfg.filter = FilterSpec::parse(filter_text.as_deref().unwrap_or("gaussian"), scale, base)?;
        cfg.skew = match skew_kind.as_str() {
            "zero" => SkewSpec::Zero,
            "background" => SkewSpec::Background {
                threshold,
                sharpness,
                amplitude,
            },
            other => return Err(Error::Config(format!("unknown skew '{other}'"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=65535).contains(&self.labels) {
            return Err(Error::Config(format!("labels {} outside 1..=65535", self.labels)));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let ImageSource::Path(p) = &self.source {
            if !p.is_file() {
                return Err(Error::Config(format!("image {} does not exist", p.display())));
            }
        }
        if let SkewSpec::Background {
            threshold,
            sharpness,
            amplitude,
        } = self.skew
        {
            if self.labels < 2 {
                return Err(Error::Config("background skew needs at least 2 labels".into()));
            }
            if let Threshold::Value(t) = threshold {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::Config(format!("theta {t} outside [0, 1]")));
                }
            }
            if !(sharpness > 0.0) || !(amplitude > 0.0) {
                return Err(Error::Config("sharpness and amplitude must be positive".into()));
            }
        }
        Ok(())
    }

    /// Directory for outputs: the configured one, else `$AMASK_OUTPUT_DIR`,
    /// else `amask-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("amask-out"))
    }
}

pub const OUTPUT_DIR_ENV: &str = "AMASK_OUTPUT_DIR";

pub fn parse_boundary(s: &str) -> Result<Boundary> {
    match s.trim() {
        "circular" => Ok(Boundary::Circular),
        "padded" | "zero-padded" => Ok(Boundary::ZeroPadded),
        other => Err(Error::Config(format!("unknown boundary '{other}'"))),
    }
}

pub fn parse_detect(s: &str) -> Result<DetectMode> {
    match s.trim() {
        "full" | "full-history" => Ok(DetectMode::FullHistory),
        "last-two" | "lasttwo" => Ok(DetectMode::LastTwo),
        other => Err(Error::Config(format!("unknown detect mode '{other}'"))),
    }
}

/// Parses `4`, `4x4` or `3x5x2` into extents.
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::Config(format!("bad domain extent '{t}' in '{s}'")))
        })
        .collect()
}
