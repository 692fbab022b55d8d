//! Skew stacks derived from images.

use crate::automaton::SkewStack;
use crate::domain::{DomainSpec, RealField};
use crate::error::{Error, Result};
use crate::operators::VotingOperator;
use crate::spectral::{periodized_gaussian, sampled_gaussian, CenteredTaps, Filter, GaussianSpec};

pub const DEFAULT_SHARPNESS: f64 = 0.05;
pub const DEFAULT_AMPLITUDE: f64 = 1.0;
const OTSU_BINS: usize = 256;

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    intensity: RealField,
}

impl ImageField {
    pub fn new(intensity: RealField) -> Result<Self> {
        if let Some((i, v)) = intensity
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidArgument(format!(
                "intensity {v} at pixel {i} outside [0, 1]"
            )));
        }
        Ok(Self { intensity })
    }

    pub fn domain(&self) -> &DomainSpec {
        self.intensity.domain()
    }

    pub fn intensity(&self) -> &RealField {
        &self.intensity
    }

    /// Same samples, different boundary handling.
    pub fn with_boundary(&self, boundary: crate::domain::Boundary) -> Self {
        let domain = self.domain().with_boundary(boundary);
        Self {
            intensity: RealField::new(domain, self.intensity.values().to_vec())
                .expect("same size"),
        }
    }

    /// Two-class threshold maximizing between-class variance over a
    /// 256-bin histogram. Returns the upper edge of the last background bin,
    /// or the middle of the range of such edges when several tie. A constant
    /// image gives 0.5.
    pub fn otsu_threshold(&self) -> f64 {
        let mut hist = [0usize; OTSU_BINS];
        for &v in self.intensity.values() {
            let bin = ((v * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1);
            hist[bin] += 1;
        }
        let total = self.intensity.values().len() as f64;
        let centers: Vec<f64> = (0..OTSU_BINS)
            .map(|b| (b as f64 + 0.5) / OTSU_BINS as f64)
            .collect();
        let sum_all: f64 = hist.iter().zip(&centers).map(|(&h, c)| h as f64 * c).sum();

        let (mut w0, mut sum0) = (0.0, 0.0);
        let mut vars = vec![f64::NEG_INFINITY; OTSU_BINS - 1];
        for (t, var) in vars.iter_mut().enumerate() {
            w0 += hist[t] as f64;
            sum0 += hist[t] as f64 * centers[t];
            let w1 = total - w0;
            if w0 == 0.0 || w1 == 0.0 {
                continue;
            }
            let mu0 = sum0 / w0;
            let mu1 = (sum_all - sum0) / w1;
            *var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        }
        let best_var = vars.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best_var == f64::NEG_INFINITY {
            return 0.5;
        }
        // Empty bins between the classes give a plateau of maxima; take its middle.
        let first = vars.iter().position(|&v| v == best_var).expect("max exists");
        let last = vars.iter().rposition(|&v| v == best_var).expect("max exists");
        (first + last + 2) as f64 / (2 * OTSU_BINS) as f64
    }
}

/// Local-average window.
#[derive(Debug, Clone, PartialEq)]
pub enum Window {
    Gaussian(GaussianSpec),
    Kernel(CenteredTaps),
}

/// `R_1(n) = a / (1 + exp((avg(n) − θ) / s))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftThresholdSpec {
    pub window: Window,
    pub threshold: f64,
    pub sharpness: f64,
    pub amplitude: f64,
}

impl SoftThresholdSpec {
    pub fn gaussian(scale: f64, threshold: f64) -> Result<Self> {
        Ok(Self {
            window: Window::Gaussian(GaussianSpec::new(scale)?),
            threshold,
            sharpness: DEFAULT_SHARPNESS,
            amplitude: DEFAULT_AMPLITUDE,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidArgument(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::InvalidArgument(format!("sharpness must be positive, got {}", self.sharpness)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude must be positive, got {}", self.amplitude)));
        }
        Ok(())
    }
}

/// Unit-mass local average of the image under the window: a normalized
/// periodized window on circular domains, the ⋆-normalized average on padded
/// ones.
pub fn local_average(img: &ImageField, window: &Window) -> Result<RealField> {
    let domain = img.domain();
    let op = if domain.is_circular() {
        let filter = match window {
            Window::Gaussian(spec) => periodized_gaussian(domain, spec)?,
            Window::Kernel(taps) => Filter::from_centered(domain, taps)?,
        };
        if filter.taps().sum() <= 0.0 {
            return Err(Error::InvalidArgument("averaging window must have positive mass".into()));
        }
        VotingOperator::circular(filter.normalized())?
    } else {
        let taps = match window {
            Window::Gaussian(spec) => sampled_gaussian(spec, domain.ndim()),
            Window::Kernel(taps) => taps.clone(),
        };
        VotingOperator::noncircular_star(domain, taps)?
    };
    op.apply(img.intensity())
}

fn logistic_skew(avg: f64, spec: &SoftThresholdSpec) -> f64 {
    spec.amplitude / (1.0 + ((avg - spec.threshold) / spec.sharpness).exp())
}

/// Background skew: `R_1` favors label 1 where the local average is dark,
/// `R_2..R_M` are zero.
pub fn background_skew(img: &ImageField, spec: &SoftThresholdSpec, num_labels: usize) -> Result<SkewStack> {
    if num_labels < 2 {
        return Err(Error::InvalidArgument(format!(
            "background skew needs at least 2 labels, got {num_labels}"
        )));
    }
    spec.validate()?;
    let domain = img.domain();
    let avg = local_average(img, &spec.window)?;
    let mut fields = Vec::with_capacity(num_labels);
    fields.push(avg.map(|v| logistic_skew(v, spec)));
    fields.extend((1..num_labels).map(|_| RealField::zeros(domain)));
    SkewStack::new(domain, &fields)
}

pub fn zero_skew(domain: &DomainSpec, num_labels: usize) -> Result<SkewStack> {
    if num_labels == 0 {
        return Err(Error::InvalidArgument("need at least one label".into()));
    }
    Ok(SkewStack::zeros(domain, num_labels))
}
