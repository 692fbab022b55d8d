//! Finite pixel domains, real fields and label fields.

use std::fmt;

use crate::error::{Error, Result};

/// Label value. Labels run over `1..=num_labels`.
pub type Label = u16;

/// Largest supported label count.
pub const MAX_LABELS: usize = Label::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// The torus `∏ Z_{N_d}`; indices wrap.
    Circular,
    /// The box `∏ [0, N_d)` inside `Z^D`; everything outside is zero.
    ZeroPadded,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Circular => f.write_str("circular"),
            Boundary::ZeroPadded => f.write_str("padded"),
        }
    }
}

/// Rectangular pixel domain. Pixels are numbered row-major, first axis slowest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DomainSpec {
    dims: Vec<usize>,
    boundary: Boundary,
}

impl DomainSpec {
    pub fn new(dims: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDomain("at least one axis is required".into()));
        }
        if let Some(d) = dims.iter().position(|&n| n == 0) {
            return Err(Error::InvalidDomain(format!("axis {d} has zero length")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidDomain("pixel count overflows".into()))?;
        Ok(Self { dims, boundary })
    }

    pub fn circular(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), Boundary::Circular)
    }

    pub fn padded(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), Boundary::ZeroPadded)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_circular(&self) -> bool {
        self.boundary == Boundary::Circular
    }

    /// Total pixel count `N`.
    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major strides (last axis has stride 1).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for d in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.dims[d + 1];
        }
        strides
    }

    pub fn coords_of(&self, index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dims.len()];
        self.write_coords(index, &mut coords);
        coords
    }

    pub(crate) fn write_coords(&self, mut index: usize, coords: &mut [usize]) {
        for d in (0..self.dims.len()).rev() {
            coords[d] = index % self.dims[d];
            index /= self.dims[d];
        }
    }

    pub fn index_of(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        coords
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    /// Index of `-n` in the group `∏ Z_{N_d}` (the reversal map).
    pub fn negate_index(&self, index: usize) -> usize {
        let mut coords = self.coords_of(index);
        for (c, &n) in coords.iter_mut().zip(&self.dims) {
            *c = (n - *c) % n;
        }
        self.index_of(&coords)
    }

    /// Same dims, different boundary mode.
    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        Self {
            dims: self.dims.clone(),
            boundary,
        }
    }

    pub(crate) fn ensure_same(&self, other: &DomainSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DomainMismatch {
                expected: self.to_string(),
                actual: other.to_string(),
            })
        }
    }

    /// Unordered axis-neighbor pairs, each listed exactly once.
    ///
    /// Pairs are `(n, n + e_d)` in pixel order then axis order. In circular
    /// mode the wrap pair `(last, first)` is added along axes of length ≥ 3;
    /// along a length-2 axis the wrap would repeat the pair `(0, 1)`.
    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let strides = self.strides();
        let wrap = self.is_circular();
        (0..self.size()).flat_map(move |index| {
            let coords = self.coords_of(index);
            let strides = strides.clone();
            (0..self.dims.len()).filter_map(move |d| {
                let n = self.dims[d];
                let c = coords[d];
                if c + 1 < n {
                    Some((index, index + strides[d]))
                } else if wrap && n >= 3 {
                    Some((index, index - c * strides[d]))
                } else {
                    None
                }
            })
        })
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(|n| n.to_string()).collect();
        write!(f, "{} ({})", dims.join("x"), self.boundary)
    }
}

/// A real value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.size() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, domain {} has {} pixels",
                values.len(),
                domain,
                domain.size()
            )));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: &DomainSpec) -> Self {
        Self::constant(domain, 0.0)
    }

    /// `χ_Ω`.
    pub fn ones(domain: &DomainSpec) -> Self {
        Self::constant(domain, 1.0)
    }

    pub fn constant(domain: &DomainSpec, value: f64) -> Self {
        Self {
            domain: domain.clone(),
            values: vec![value; domain.size()],
        }
    }

    /// `δ_k` for the pixel with the given coordinates.
    pub fn delta(domain: &DomainSpec, coords: &[usize]) -> Self {
        let mut field = Self::zeros(domain);
        field.values[domain.index_of(coords)] = 1.0;
        field
    }

    pub fn from_fn(domain: &DomainSpec, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut coords = vec![0; domain.ndim()];
        let values = (0..domain.size())
            .map(|i| {
                domain.write_coords(i, &mut coords);
                f(&coords)
            })
            .collect();
        Self {
            domain: domain.clone(),
            values,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.values[self.domain.index_of(coords)]
    }

    /// Standard real inner product over the domain.
    pub fn dot(&self, other: &RealField) -> Result<f64> {
        self.domain.ensure_same(&other.domain)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Result<RealField> {
        self.domain.ensure_same(&other.domain)?;
        Ok(RealField {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Reversal `g̃(n) = g(-n)` over the circular group.
    pub fn reversed(&self) -> RealField {
        let values = (0..self.domain.size())
            .map(|i| self.values[self.domain.negate_index(i)])
            .collect();
        RealField {
            domain: self.domain.clone(),
            values,
        }
    }
}

/// A segmentation: one label in `1..=num_labels` per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelField {
    domain: DomainSpec,
    labels: Vec<Label>,
    num_labels: usize,
}

impl LabelField {
    pub fn new(domain: DomainSpec, labels: Vec<Label>, num_labels: usize) -> Result<Self> {
        if num_labels == 0 || num_labels > MAX_LABELS {
            return Err(Error::InvalidArgument(format!(
                "label count {num_labels} outside 1..={MAX_LABELS}"
            )));
        }
        if labels.len() != domain.size() {
            return Err(Error::InvalidArgument(format!(
                "label field has {} entries, domain {} has {} pixels",
                labels.len(),
                domain,
                domain.size()
            )));
        }
        if let Some(&bad) = labels
            .iter()
            .find(|&&l| l == 0 || l as usize > num_labels)
        {
            return Err(Error::InvalidLabel {
                label: bad as usize,
                num_labels,
            });
        }
        Ok(Self {
            domain,
            labels,
            num_labels,
        })
    }

    pub(crate) fn from_raw(domain: DomainSpec, labels: Vec<Label>, num_labels: usize) -> Self {
        debug_assert!(labels.iter().all(|&l| l >= 1 && l as usize <= num_labels));
        Self {
            domain,
            labels,
            num_labels,
        }
    }

    pub fn constant(domain: &DomainSpec, label: Label, num_labels: usize) -> Result<Self> {
        Self::new(domain.clone(), vec![label; domain.size()], num_labels)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn get(&self, coords: &[usize]) -> Label {
        self.labels[self.domain.index_of(coords)]
    }

    /// Binary mask `μ_m`: 1.0 where the label is `m`, else 0.0.
    pub fn mask_of(&self, m: usize) -> Result<RealField> {
        if m == 0 || m > self.num_labels {
            return Err(Error::InvalidLabel {
                label: m,
                num_labels: self.num_labels,
            });
        }
        let values = self
            .labels
            .iter()
            .map(|&l| if l as usize == m { 1.0 } else { 0.0 })
            .collect();
        Ok(RealField {
            domain: self.domain.clone(),
            values,
        })
    }

    /// Number of axis-adjacent pixel pairs with differing labels.
    pub fn boundary_crossings(&self) -> usize {
        self.domain
            .adjacent_pairs()
            .filter(|&(a, b)| self.labels[a] != self.labels[b])
            .count()
    }

    /// Number of labels present in the field.
    pub fn nonempty_masks(&self) -> usize {
        let mut seen = vec![false; self.num_labels + 1];
        let mut count = 0;
        for &l in &self.labels {
            if !seen[l as usize] {
                seen[l as usize] = true;
                count += 1;
            }
        }
        count
    }

    /// Number of pixels whose label differs from `other`.
    pub fn pixels_changed(&self, other: &LabelField) -> usize {
        self.labels
            .iter()
            .zip(&other.labels)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Free-function form of [`LabelField::mask_of`].
pub fn mask_of(psi: &LabelField, m: usize) -> Result<RealField> {
    psi.mask_of(m)
}

/// Free-function form of [`LabelField::boundary_crossings`].
pub fn boundary_crossings(psi: &LabelField) -> usize {
    psi.boundary_crossings()
}
