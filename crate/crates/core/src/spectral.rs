//! DFT over circular domains, filter spectrum analysis and Gaussian windows.
//!
//! The transform is the non-normalized DFT `(F f)(k) = Σ_n f(n) e^{-2πi⟨k,n/N⟩}`,
//! evaluated axis by axis with a direct O(N_d²) sum per line. Domains used for
//! certification are tiny, so exactness of the twiddle table matters more
//! than asymptotic speed.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::domain::{DomainSpec, RealField};
use crate::error::{Error, Result};

/// Default absolute tolerance for spectrum nonnegativity and evenness.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Finitely supported taps on a centered box `∏ [-r_d, r_d]`, row-major.
///
/// This is the representation used for noncircular (zero-padded) voting and
/// for window shapes before they are periodized onto a torus.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredTaps {
    radius: Vec<usize>,
    weights: Vec<f64>,
}

impl CenteredTaps {
    pub fn new(radius: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if radius.is_empty() {
            return Err(Error::InvalidArgument("taps need at least one axis".into()));
        }
        let expected: usize = radius.iter().map(|r| 2 * r + 1).product();
        if weights.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "taps with radius {radius:?} need {expected} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("taps must be finite".into()));
        }
        Ok(Self { radius, weights })
    }

    /// Builds taps from a dense box given its per-axis (odd) extents.
    pub fn from_box(extents: &[usize], weights: Vec<f64>) -> Result<Self> {
        if let Some(e) = extents.iter().find(|&&e| e % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "tap box extent {e} is even; taps must be centered"
            )));
        }
        Self::new(extents.iter().map(|e| e / 2).collect(), weights)
    }

    pub fn dirac(ndim: usize) -> Self {
        Self {
            radius: vec![0; ndim],
            weights: vec![1.0],
        }
    }

    /// All-ones box of Chebyshev radius `r`: the 3-tap box in 1-D, Moore's
    /// 3×3 box in 2-D for `r = 1`.
    pub fn boxcar(ndim: usize, r: usize) -> Self {
        let n = (2 * r + 1).pow(ndim as u32);
        Self {
            radius: vec![r; ndim],
            weights: vec![1.0; n],
        }
    }

    /// Von Neumann "plus": the center and its 2·D axis neighbors.
    pub fn plus(ndim: usize) -> Self {
        let mut taps = Self {
            radius: vec![1; ndim],
            weights: vec![0.0; 3usize.pow(ndim as u32)],
        };
        let center = vec![0isize; ndim];
        taps.set(&center, 1.0);
        for d in 0..ndim {
            for s in [-1isize, 1] {
                let mut k = center.clone();
                k[d] = s;
                taps.set(&k, 1.0);
            }
        }
        taps
    }

    pub fn ndim(&self) -> usize {
        self.radius.len()
    }

    pub fn radius(&self) -> &[usize] {
        &self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn box_index(&self, offset: &[isize]) -> Option<usize> {
        let mut index = 0usize;
        for (&k, &r) in offset.iter().zip(&self.radius) {
            if k.unsigned_abs() > r {
                return None;
            }
            index = index * (2 * r + 1) + (k + r as isize) as usize;
        }
        Some(index)
    }

    /// Weight at an offset; zero outside the box.
    pub fn weight(&self, offset: &[isize]) -> f64 {
        self.box_index(offset).map_or(0.0, |i| self.weights[i])
    }

    fn set(&mut self, offset: &[isize], w: f64) {
        let i = self.box_index(offset).expect("offset inside box");
        self.weights[i] = w;
    }

    /// `(offset, weight)` for every box entry, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<isize>, f64)> + '_ {
        let extents: Vec<usize> = self.radius.iter().map(|r| 2 * r + 1).collect();
        self.weights.iter().enumerate().map(move |(mut i, &w)| {
            let mut offset = vec![0isize; extents.len()];
            for d in (0..extents.len()).rev() {
                offset[d] = (i % extents[d]) as isize - self.radius[d] as isize;
                i /= extents[d];
            }
            (offset, w)
        })
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Exact evenness `g(k) = g(-k)`.
    pub fn is_even(&self) -> bool {
        // Row-major reversal of a centered box is the reversed weight vector.
        self.weights
            .iter()
            .zip(self.weights.iter().rev())
            .all(|(a, b)| a == b)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    /// Drops offsets that cannot couple two pixels of a box with the given
    /// dims (`|k_d| ≥ N_d`).
    pub fn restricted_to(&self, dims: &[usize]) -> CenteredTaps {
        let radius: Vec<usize> = self
            .radius
            .iter()
            .zip(dims)
            .map(|(&r, &n)| r.min(n.saturating_sub(1)))
            .collect();
        let n: usize = radius.iter().map(|r| 2 * r + 1).product();
        let mut out = CenteredTaps {
            radius,
            weights: vec![0.0; n],
        };
        let offsets: Vec<Vec<isize>> = out.iter().map(|(k, _)| k).collect();
        for (i, k) in offsets.iter().enumerate() {
            out.weights[i] = self.weight(k);
        }
        out
    }

    /// Minimum of the real part of the Fourier series
    /// `ĝ(x) = Σ_k g(k) e^{-2πi⟨k,x⟩}` over a uniform grid of `points_per_axis`
    /// samples per axis on the torus `[0,1)^D`.
    ///
    /// The real part is the symbol of the symmetric part of the convolution,
    /// which is what governs `⟨g ∗ f, f⟩`.
    pub fn fourier_series_min(&self, points_per_axis: usize) -> f64 {
        let taps: Vec<(Vec<isize>, f64)> = self.iter().filter(|(_, w)| *w != 0.0).collect();
        let d = self.ndim();
        let total = points_per_axis.pow(d as u32);
        let mut min = f64::INFINITY;
        let mut grid = vec![0usize; d];
        for mut g in 0..total {
            for axis in (0..d).rev() {
                grid[axis] = g % points_per_axis;
                g /= points_per_axis;
            }
            let value: f64 = taps
                .iter()
                .map(|(k, w)| {
                    let phase: f64 = k
                        .iter()
                        .zip(&grid)
                        .map(|(&kd, &xd)| kd as f64 * xd as f64 / points_per_axis as f64)
                        .sum();
                    w * (2.0 * PI * phase).cos()
                })
                .sum();
            min = min.min(value);
        }
        min
    }
}

/// Voting weights `g` on a circular domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    taps: RealField,
}

impl Filter {
    pub fn new(taps: RealField) -> Self {
        Self { taps }
    }

    /// Wraps centered taps onto the torus, summing taps that alias.
    pub fn from_centered(domain: &DomainSpec, taps: &CenteredTaps) -> Result<Self> {
        if taps.ndim() != domain.ndim() {
            return Err(Error::InvalidArgument(format!(
                "{}-D taps on a {}-D domain",
                taps.ndim(),
                domain.ndim()
            )));
        }
        let mut field = RealField::zeros(domain);
        let dims = domain.dims();
        let mut coords = vec![0usize; dims.len()];
        for (k, w) in taps.iter() {
            for d in 0..dims.len() {
                coords[d] = k[d].rem_euclid(dims[d] as isize) as usize;
            }
            let i = domain.index_of(&coords);
            field.values_mut()[i] += w;
        }
        Ok(Self { taps: field })
    }

    pub fn dirac(domain: &DomainSpec) -> Self {
        Self::from_centered(domain, &CenteredTaps::dirac(domain.ndim())).expect("matching ndim")
    }

    /// `δ_{-1} + δ_0 + δ_1` per axis, as a product box (3-tap in 1-D, Moore in 2-D).
    pub fn box3(domain: &DomainSpec) -> Self {
        Self::from_centered(domain, &CenteredTaps::boxcar(domain.ndim(), 1)).expect("matching ndim")
    }

    /// Von Neumann plus filter.
    pub fn plus(domain: &DomainSpec) -> Self {
        Self::from_centered(domain, &CenteredTaps::plus(domain.ndim())).expect("matching ndim")
    }

    pub fn domain(&self) -> &DomainSpec {
        self.taps.domain()
    }

    pub fn taps(&self) -> &RealField {
        &self.taps
    }

    /// Rescaled to unit sum. Returns the filter unchanged when the sum is zero.
    pub fn normalized(&self) -> Filter {
        let s = self.taps.sum();
        if s == 0.0 {
            return self.clone();
        }
        Filter {
            taps: self.taps.map(|v| v / s),
        }
    }

    pub fn reversed(&self) -> Filter {
        Filter {
            taps: self.taps.reversed(),
        }
    }

    /// Exact spatial evenness `g(n) = g(-n)`.
    pub fn is_even(&self) -> bool {
        self.is_even_within(0.0)
    }

    pub fn is_even_within(&self, tol: f64) -> bool {
        let d = self.domain();
        let v = self.taps.values();
        (0..v.len()).all(|i| (v[i] - v[d.negate_index(i)]).abs() <= tol)
    }

    /// `g(0) ≥ Σ_{n≠0} |g(n)|`.
    pub fn is_diag_dominant(&self) -> bool {
        let v = self.taps.values();
        let off: f64 = v[1..].iter().map(|x| x.abs()).sum();
        v[0] >= off
    }
}

/// A complex value per frequency of a circular domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    domain: DomainSpec,
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }
}

fn ensure_circular(domain: &DomainSpec) -> Result<()> {
    if domain.is_circular() {
        Ok(())
    } else {
        Err(Error::UnsupportedDomain(format!(
            "spectral analysis needs a circular domain, got {domain}"
        )))
    }
}

fn transform(domain: &DomainSpec, mut data: Vec<Complex64>, inverse: bool) -> Vec<Complex64> {
    let dims = domain.dims();
    let strides = domain.strides();
    let total = domain.size();
    let sign = if inverse { 1.0 } else { -1.0 };
    for (d, &n) in dims.iter().enumerate() {
        if n == 1 {
            continue;
        }
        let stride = strides[d];
        let twiddle: Vec<Complex64> = (0..n)
            .map(|j| {
                let angle = 2.0 * PI * j as f64 / n as f64;
                Complex64::new(angle.cos(), sign * angle.sin())
            })
            .collect();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for base in (0..total).filter(|i| (i / stride) % n == 0) {
            for (t, x) in line.iter_mut().enumerate() {
                *x = data[base + t * stride];
            }
            for k in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (t, x) in line.iter().enumerate() {
                    acc += x * twiddle[(t * k) % n];
                }
                data[base + k * stride] = acc;
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for z in &mut data {
            *z *= scale;
        }
    }
    data
}

/// Non-normalized D-dimensional DFT of a real field on a circular domain.
pub fn dft(field: &RealField) -> Result<Spectrum> {
    ensure_circular(field.domain())?;
    let data = field
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    Ok(Spectrum {
        domain: field.domain().clone(),
        values: transform(field.domain(), data, false),
    })
}

/// Inverse of [`dft`], including the `1/N` factor.
pub fn inverse_dft(spectrum: &Spectrum) -> Vec<Complex64> {
    transform(&spectrum.domain, spectrum.values.clone(), true)
}

/// Strongest convergence guarantee a circular filter qualifies for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuaranteeTier {
    /// Even with nonnegative DFT: every trajectory reaches a fixed point.
    AlwaysConverges,
    /// Even only: cycles have length 1 or 2.
    OneOrTwoCycle,
    NoGuarantee,
}

impl GuaranteeTier {
    pub fn as_str(self) -> &'static str {
        match self {
            GuaranteeTier::AlwaysConverges => "always-converges",
            GuaranteeTier::OneOrTwoCycle => "1-or-2-cycle",
            GuaranteeTier::NoGuarantee => "no-guarantee",
        }
    }

    /// CLI exit code: 0, 1, 2 in tier order.
    pub fn exit_code(self) -> i32 {
        match self {
            GuaranteeTier::AlwaysConverges => 0,
            GuaranteeTier::OneOrTwoCycle => 1,
            GuaranteeTier::NoGuarantee => 2,
        }
    }
}

impl fmt::Display for GuaranteeTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub spectrum: Spectrum,
    pub max_imag: f64,
    pub is_even: bool,
    /// Minimum real part over all frequencies.
    pub min_spectrum: f64,
    pub is_nonnegative: bool,
    pub is_diag_dominant: bool,
    /// Nonnegativity allows `min_spectrum ≥ −tol · max(1, max_n |ĝ(n)|)`;
    /// truncated Gaussians dip below zero by roughly 1e-9 of their peak.
    pub tol: f64,
    pub tier: GuaranteeTier,
}

pub fn analyze_filter(g: &Filter, tol: f64) -> Result<SpectrumReport> {
    let spectrum = dft(g.taps())?;
    let max_imag = spectrum.max_imag();
    let min_spectrum = spectrum
        .values()
        .iter()
        .fold(f64::INFINITY, |m, z| m.min(z.re));
    let peak = spectrum.values().iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let is_even = g.is_even();
    let is_nonnegative = min_spectrum >= -tol * peak.max(1.0);
    let tier = match (is_even, is_nonnegative) {
        (true, true) => GuaranteeTier::AlwaysConverges,
        (true, false) => GuaranteeTier::OneOrTwoCycle,
        _ => GuaranteeTier::NoGuarantee,
    };
    Ok(SpectrumReport {
        spectrum,
        max_imag,
        is_even,
        min_spectrum,
        is_nonnegative,
        is_diag_dominant: g.is_diag_dominant(),
        tol,
        tier,
    })
}

/// `(1/N) Σ_n (F g)(n) |(F f)(n)|²`, which equals `⟨f ∗ g, f⟩`.
pub fn quadratic_form_spectral(g: &Filter, f: &RealField) -> Result<f64> {
    g.domain().ensure_same(f.domain())?;
    let fg = dft(g.taps())?;
    let ff = dft(f)?;
    let sum: Complex64 = fg
        .values()
        .iter()
        .zip(ff.values())
        .map(|(a, b)| a * b.norm_sqr())
        .sum();
    Ok(sum.re / f.domain().size() as f64)
}

/// Gaussian window parameters (per-axis standard deviation in pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    scale: f64,
    truncation_radius: usize,
}

impl GaussianSpec {
    /// Truncation radius defaults to `ceil(6·scale)`.
    pub fn new(scale: f64) -> Result<Self> {
        let radius = (6.0 * scale).ceil().max(1.0);
        Self::with_radius(scale, radius as usize)
    }

    pub fn with_radius(scale: f64, truncation_radius: usize) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gaussian scale must be positive, got {scale}"
            )));
        }
        if truncation_radius == 0 {
            return Err(Error::InvalidArgument(
                "gaussian truncation radius must be at least 1".into(),
            ));
        }
        Ok(Self {
            scale,
            truncation_radius,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn truncation_radius(&self) -> usize {
        self.truncation_radius
    }

    /// Unnormalized sample `exp(-k²/(2σ²))`.
    pub fn sample(&self, k: i64) -> f64 {
        let k = k as f64;
        (-(k * k) / (2.0 * self.scale * self.scale)).exp()
    }
}

/// Integer samples `exp(-k²/(2σ²))` for `|k_d| ≤ radius`, as a separable
/// product over `ndim` axes. Not normalized.
pub fn sampled_gaussian(spec: &GaussianSpec, ndim: usize) -> CenteredTaps {
    let r = spec.truncation_radius as i64;
    let axis: Vec<f64> = (-r..=r).map(|k| spec.sample(k)).collect();
    let extent = axis.len();
    let total = extent.pow(ndim as u32);
    let weights = (0..total)
        .map(|mut i| {
            let mut w = 1.0;
            let mut idx = vec![0; ndim];
            for d in (0..ndim).rev() {
                idx[d] = i % extent;
                i /= extent;
            }
            for &j in &idx {
                w *= axis[j];
            }
            w
        })
        .collect();
    CenteredTaps {
        radius: vec![spec.truncation_radius; ndim],
        weights,
    }
}

/// One axis of the periodization `g(j) = Σ_{k ≡ j (mod n), |k| ≤ r} h(k)`.
///
/// Terms are summed in order of decreasing `|k|`; `j` and `-j` receive the
/// same multiset of terms in the same order, so the result is exactly even.
fn periodized_axis(spec: &GaussianSpec, n: usize) -> Vec<f64> {
    let r = spec.truncation_radius as i64;
    let n = n as i64;
    let mut ks: Vec<i64> = (-r..=r).collect();
    ks.sort_by_key(|k| std::cmp::Reverse(k.abs()));
    let mut out = vec![0.0; n as usize];
    for k in ks {
        out[k.rem_euclid(n) as usize] += spec.sample(k);
    }
    out
}

/// `N`-periodization of the integer samples of a Gaussian, separable across
/// axes. Even by construction; its DFT is nonnegative up to truncation error.
pub fn periodized_gaussian(domain: &DomainSpec, spec: &GaussianSpec) -> Result<Filter> {
    ensure_circular(domain)?;
    let axes: Vec<Vec<f64>> = domain
        .dims()
        .iter()
        .map(|&n| periodized_axis(spec, n))
        .collect();
    let taps = RealField::from_fn(domain, |coords| {
        coords
            .iter()
            .zip(&axes)
            .fold(1.0, |w, (&c, axis)| w * axis[c])
    });
    Ok(Filter::new(taps))
}
