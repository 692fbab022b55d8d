//! Linear voting operators `A` acting on real fields.
//!
//! Three realizations are supported:
//!
//! * circular convolution `f ↦ f ∗ g` on a torus,
//! * normalized noncircular convolution `(f ⋆ g)(n) = (f ∗ g)(n) / (χ_Ω ∗ g)(n)`
//!   on a zero-padded box,
//! * an explicit `N × N` matrix in the fixed row-major pixel order.
//!
//! Every application walks the same per-pixel term list (see
//! [`VotingOperator::for_each_term`]), so votes computed from label masks in
//! the automaton are bit-identical to [`VotingOperator::apply`] on the mask.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::domain::{Boundary, DomainSpec, RealField};
use crate::error::{Error, Result};
use crate::spectral::{analyze_filter, CenteredTaps, Filter};

/// Largest dense realization, in pixels. A dense operator stores `N²` f64s
/// (128 MiB at the cap).
pub const MAX_DENSE_PIXELS: usize = 4096;

/// Above this many pixels the noncircular PSD test switches from dense
/// eigenvalues to a Fourier-series check of the taps.
pub const EIGEN_PIXEL_CAP: usize = 1024;

/// Square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "{n}x{n} matrix needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn symmetric_part(&self) -> DenseMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                out.data[i * self.n + j] = 0.5 * (self.get(i, j) + self.get(j, i));
            }
        }
        out
    }

    /// Gershgorin lower bound on the spectrum: `min_i (a_ii - Σ_{j≠i} |a_ij|)`.
    pub fn gershgorin_lower_bound(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let off: f64 = self
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| v.abs())
                    .sum();
                self.get(i, i) - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest eigenvalue of the symmetric part.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let sym = self.symmetric_part();
        let m = DMatrix::from_row_slice(self.n, self.n, &sym.data);
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// How the PSD verdict of a [`QuasiFactorization`] was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdMethod {
    /// Diagonal dominance with nonnegative diagonal.
    Gershgorin,
    /// Minimum eigenvalue of the dense symmetric part.
    Eigen,
    /// Minimum of the DFT of a circular filter.
    Spectrum,
    /// Minimum of the Fourier series of noncircular taps, sampled on a grid.
    FourierSeries,
}

/// `A = D B` with `D` a positive per-pixel scaling and `B` self-adjoint.
#[derive(Debug, Clone)]
pub struct QuasiFactorization {
    /// Diagonal of `D`; all entries are positive.
    pub lambda: Vec<f64>,
    pub b_matrix_is_self_adjoint: bool,
    pub b_matrix_is_psd: bool,
    /// The quantity the PSD verdict was read from (eigenvalue, spectrum
    /// minimum or Gershgorin bound, per `psd_method`).
    pub min_eigen_or_min_spectrum: f64,
    pub psd_method: PsdMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    CircularConv(Filter),
    NoncircularStar(CenteredTaps),
    DenseMatrix(DenseMatrix),
}

/// Flattened nonzero taps: `ndim` offsets per tap.
#[derive(Debug, Clone)]
struct Stencil {
    offsets: Vec<isize>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VotingOperator {
    domain: DomainSpec,
    kind: OperatorKind,
    stencil: Stencil,
    /// `(χ_Ω ∗ g)(n)` for noncircular operators.
    normalization: Option<Vec<f64>>,
}

impl VotingOperator {
    /// `f ↦ f ∗ g` on the filter's (circular) domain.
    pub fn circular(filter: Filter) -> Result<Self> {
        let domain = filter.domain().clone();
        if !domain.is_circular() {
            return Err(Error::UnsupportedDomain(format!(
                "circular convolution needs a circular domain, got {domain}"
            )));
        }
        let ndim = domain.ndim();
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for (i, &w) in filter.taps().values().iter().enumerate() {
            if w != 0.0 {
                offsets.extend(domain.coords_of(i).into_iter().map(|c| c as isize));
                weights.push(w);
            }
        }
        debug_assert_eq!(offsets.len(), weights.len() * ndim);
        Ok(Self {
            domain,
            kind: OperatorKind::CircularConv(filter),
            stencil: Stencil { offsets, weights },
            normalization: None,
        })
    }

    /// `f ↦ (f ∗ g) / (χ_Ω ∗ g)` on a zero-padded box. Fails unless
    /// `(χ_Ω ∗ g)(n) > 0` at every pixel.
    pub fn noncircular_star(domain: &DomainSpec, taps: CenteredTaps) -> Result<Self> {
        if domain.boundary() != Boundary::ZeroPadded {
            return Err(Error::UnsupportedDomain(format!(
                "normalized noncircular convolution needs a zero-padded domain, got {domain}"
            )));
        }
        if taps.ndim() != domain.ndim() {
            return Err(Error::InvalidArgument(format!(
                "{}-D taps on a {}-D domain",
                taps.ndim(),
                domain.ndim()
            )));
        }
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for (k, w) in taps.restricted_to(domain.dims()).iter() {
            if w != 0.0 {
                offsets.extend(k);
                weights.push(w);
            }
        }
        let mut op = Self {
            domain: domain.clone(),
            kind: OperatorKind::NoncircularStar(taps),
            stencil: Stencil { offsets, weights },
            normalization: None,
        };
        let denom = op.apply_unnormalized(&RealField::ones(domain))?.into_values();
        if let Some((pixel, &value)) = denom.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NotPositiveNormalization { pixel, value });
        }
        op.normalization = Some(denom);
        Ok(op)
    }

    pub fn dense(domain: &DomainSpec, matrix: DenseMatrix) -> Result<Self> {
        let n = domain.size();
        if n > MAX_DENSE_PIXELS {
            return Err(Error::Unsupported(format!(
                "dense operators are limited to {MAX_DENSE_PIXELS} pixels, domain has {n}"
            )));
        }
        if matrix.size() != n {
            return Err(Error::InvalidArgument(format!(
                "{0}x{0} matrix on a domain of {n} pixels",
                matrix.size()
            )));
        }
        Ok(Self {
            domain: domain.clone(),
            kind: OperatorKind::DenseMatrix(matrix),
            stencil: Stencil {
                offsets: Vec::new(),
                weights: Vec::new(),
            },
            normalization: None,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    /// Per-pixel divisor `(χ_Ω ∗ g)(n)` of a noncircular operator.
    pub fn normalization(&self) -> Option<&[f64]> {
        self.normalization.as_deref()
    }

    /// Visits `(j, w)` for the unnormalized terms `w · f(j)` summed into
    /// `(A f)(index)`, in a fixed order. `coords` is scratch of length `ndim`.
    #[inline]
    pub(crate) fn for_each_term(
        &self,
        index: usize,
        coords: &mut [usize],
        mut visit: impl FnMut(usize, f64),
    ) {
        match &self.kind {
            OperatorKind::DenseMatrix(m) => {
                for (j, &w) in m.row(index).iter().enumerate() {
                    if w != 0.0 {
                        visit(j, w);
                    }
                }
            }
            OperatorKind::CircularConv(_) => {
                let dims = self.domain.dims();
                let ndim = dims.len();
                self.domain.write_coords(index, coords);
                for (t, &w) in self.stencil.weights.iter().enumerate() {
                    let k = &self.stencil.offsets[t * ndim..(t + 1) * ndim];
                    let mut src = 0usize;
                    for d in 0..ndim {
                        let n = dims[d];
                        let mut s = coords[d] + n - k[d] as usize;
                        if s >= n {
                            s -= n;
                        }
                        src = src * n + s;
                    }
                    visit(src, w);
                }
            }
            OperatorKind::NoncircularStar(_) => {
                let dims = self.domain.dims();
                let ndim = dims.len();
                self.domain.write_coords(index, coords);
                'taps: for (t, &w) in self.stencil.weights.iter().enumerate() {
                    let k = &self.stencil.offsets[t * ndim..(t + 1) * ndim];
                    let mut src = 0usize;
                    for d in 0..ndim {
                        let s = coords[d] as isize - k[d];
                        if s < 0 || s >= dims[d] as isize {
                            continue 'taps;
                        }
                        src = src * dims[d] + s as usize;
                    }
                    visit(src, w);
                }
            }
        }
    }

    fn check_domain(&self, f: &RealField) -> Result<()> {
        self.domain.ensure_same(f.domain())
    }

    /// `A f`.
    pub fn apply(&self, f: &RealField) -> Result<RealField> {
        let mut out = self.apply_unnormalized(f)?;
        if let Some(denom) = &self.normalization {
            for (v, d) in out.values_mut().iter_mut().zip(denom) {
                *v /= d;
            }
        }
        Ok(out)
    }

    /// `B f`: the operator without the per-pixel normalization. Equals
    /// [`apply`](Self::apply) except for noncircular operators, where it is
    /// the plain zero-padded convolution `f ∗ g`.
    pub fn apply_unnormalized(&self, f: &RealField) -> Result<RealField> {
        self.check_domain(f)?;
        let values = f.values();
        let mut coords = vec![0; self.domain.ndim()];
        let out = (0..self.domain.size())
            .map(|i| {
                let mut acc = 0.0;
                self.for_each_term(i, &mut coords, |j, w| acc += w * values[j]);
                acc
            })
            .collect();
        RealField::new(self.domain.clone(), out)
    }

    /// `⟨A f, f⟩`.
    pub fn quadratic_form(&self, f: &RealField) -> Result<f64> {
        self.apply(f)?.dot(f)
    }

    /// Matrix of `A` in pixel order: `A_ij` is the coefficient of `f(j)` in
    /// `(A f)(i)`.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let mut m = self.to_dense_unnormalized()?;
        if let Some(denom) = &self.normalization {
            let n = m.size();
            for (i, d) in denom.iter().enumerate() {
                for v in &mut m.data[i * n..(i + 1) * n] {
                    *v /= d;
                }
            }
        }
        Ok(m)
    }

    fn to_dense_unnormalized(&self) -> Result<DenseMatrix> {
        let n = self.domain.size();
        if n > MAX_DENSE_PIXELS {
            return Err(Error::Unsupported(format!(
                "dense realization is limited to {MAX_DENSE_PIXELS} pixels, domain has {n}"
            )));
        }
        if let OperatorKind::DenseMatrix(m) = &self.kind {
            return Ok(m.clone());
        }
        let mut m = DenseMatrix::zeros(n);
        let mut coords = vec![0; self.domain.ndim()];
        for i in 0..n {
            self.for_each_term(i, &mut coords, |j, w| m.data[i * n + j] += w);
        }
        Ok(m)
    }

    /// Whether `A = A*` within `tol`, answered for the operator as a whole.
    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        match &self.kind {
            OperatorKind::CircularConv(g) => g.is_even_within(tol),
            OperatorKind::DenseMatrix(m) => m.is_symmetric(tol),
            OperatorKind::NoncircularStar(taps) => {
                let denom = self.normalization.as_ref().expect("noncircular normalization");
                let dims = self.domain.dims();
                let mut coords = vec![0; dims.len()];
                let mut neg = vec![0isize; dims.len()];
                for i in 0..self.domain.size() {
                    self.domain.write_coords(i, &mut coords);
                    for (k, w) in taps.restricted_to(dims).iter() {
                        let mut src = Vec::with_capacity(dims.len());
                        let inside = coords.iter().zip(&k).zip(dims).all(|((&c, &kd), &n)| {
                            let s = c as isize - kd;
                            src.push(s as usize);
                            s >= 0 && s < n as isize
                        });
                        if !inside {
                            continue;
                        }
                        let j = self.domain.index_of(&src);
                        for (nd, kd) in neg.iter_mut().zip(&k) {
                            *nd = -kd;
                        }
                        let a_ij = w / denom[i];
                        let a_ji = taps.weight(&neg) / denom[j];
                        if (a_ij - a_ji).abs() > tol {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }

    /// Factors `A = D B` with `D` positive-diagonal and reports on `B`.
    ///
    /// Circular operators factor trivially (`D = I`). Noncircular operators
    /// use `λ_n = 1 / (χ_Ω ∗ g)(n)` with `B` the plain convolution. Dense
    /// matrices are tested for a positive row scaling that symmetrizes them;
    /// `None` when none exists.
    pub fn quasi_factorize(&self, tol: f64) -> Option<QuasiFactorization> {
        let n = self.domain.size();
        match &self.kind {
            OperatorKind::CircularConv(g) => {
                let report = analyze_filter(g, tol).ok()?;
                Some(QuasiFactorization {
                    lambda: vec![1.0; n],
                    b_matrix_is_self_adjoint: g.is_even_within(tol),
                    b_matrix_is_psd: report.is_nonnegative,
                    min_eigen_or_min_spectrum: report.min_spectrum,
                    psd_method: PsdMethod::Spectrum,
                })
            }
            OperatorKind::NoncircularStar(taps) => {
                let denom = self.normalization.as_ref()?;
                let lambda = denom.iter().map(|d| 1.0 / d).collect();
                let b_taps = taps.restricted_to(self.domain.dims());
                let w = b_taps.weights();
                let self_adjoint = w
                    .iter()
                    .zip(w.iter().rev())
                    .all(|(a, b)| (a - b).abs() <= tol);
                let (psd, value, method) = if n <= EIGEN_PIXEL_CAP {
                    let b = self.to_dense_unnormalized().ok()?;
                    psd_dense(&b, tol)
                } else {
                    psd_taps(&b_taps, tol)
                };
                Some(QuasiFactorization {
                    lambda,
                    b_matrix_is_self_adjoint: self_adjoint,
                    b_matrix_is_psd: psd,
                    min_eigen_or_min_spectrum: value,
                    psd_method: method,
                })
            }
            OperatorKind::DenseMatrix(a) => {
                let lambda = symmetrizing_scaling(a, tol)?;
                let mut b = a.clone();
                for (i, l) in lambda.iter().enumerate() {
                    for v in &mut b.data[i * n..(i + 1) * n] {
                        *v /= l;
                    }
                }
                let (psd, value, method) = psd_dense(&b, tol);
                Some(QuasiFactorization {
                    lambda,
                    b_matrix_is_self_adjoint: true,
                    b_matrix_is_psd: psd,
                    min_eigen_or_min_spectrum: value,
                    psd_method: method,
                })
            }
        }
    }
}

/// PSD test of the symmetric part: Gershgorin first, eigenvalues otherwise.
/// The eigenvalue tolerance is relative to the largest absolute row sum.
fn psd_dense(b: &DenseMatrix, tol: f64) -> (bool, f64, PsdMethod) {
    let sym = b.symmetric_part();
    let bound = sym.gershgorin_lower_bound();
    if bound >= 0.0 {
        return (true, bound, PsdMethod::Gershgorin);
    }
    let min = sym.min_symmetric_eigenvalue();
    let scale = (0..sym.size())
        .map(|i| sym.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(1.0f64, f64::max);
    (min >= -tol * scale, min, PsdMethod::Eigen)
}

/// PSD test for a large banded convolution: `⟨B f, f⟩ ≥ min ĝ · ‖f‖²`, so a
/// nonnegative Fourier series of the taps suffices. The tolerance is
/// relative to `Σ |w|`.
fn psd_taps(taps: &CenteredTaps, tol: f64) -> (bool, f64, PsdMethod) {
    let w = taps.weights();
    let center = w.len() / 2;
    let off: f64 = w
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != center)
        .map(|(_, v)| v.abs())
        .sum();
    if w[center] >= off {
        return (true, w[center] - off, PsdMethod::Gershgorin);
    }
    let widest = taps.radius().iter().copied().max().unwrap_or(0);
    let points = (2 * (2 * widest + 1)).max(16);
    let min = taps.fourier_series_min(points);
    let scale = w.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    (min >= -tol * scale, min, PsdMethod::FourierSeries)
}

/// Finds `λ > 0` with `a_ij λ_j = a_ji λ_i` for all `i, j`, so that
/// `b_ij = a_ij / λ_i` is symmetric. Each connected component of the
/// off-diagonal support is pinned to `λ = 1` at its first pixel.
fn symmetrizing_scaling(a: &DenseMatrix, tol: f64) -> Option<Vec<f64>> {
    let n = a.size();
    let nonzero = |v: f64| v.abs() > tol;
    let mut lambda = vec![0.0f64; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if lambda[root] > 0.0 {
            continue;
        }
        lambda[root] = 1.0;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let (aij, aji) = (a.get(i, j), a.get(j, i));
                match (nonzero(aij), nonzero(aji)) {
                    (false, false) => continue,
                    (true, true) if aij.signum() == aji.signum() => {}
                    _ => return None,
                }
                let lj = lambda[i] * aji / aij;
                if lambda[j] > 0.0 {
                    let scale = (aij.abs() * lambda[j]).max(aji.abs() * lambda[i]);
                    if (aij * lambda[j] - aji * lambda[i]).abs() > tol * scale.max(1.0) {
                        return None;
                    }
                } else {
                    lambda[j] = lj;
                    queue.push_back(j);
                }
            }
        }
    }
    Some(lambda)
}
