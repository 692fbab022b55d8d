//! The synchronous Active-Mask update and trajectory analysis.
//!
//! One step maps a label field `ψ` to
//!
//! ```text
//! ψ'(n) = min argmax_m [ (A μ_m)(n) + R_m(n) ]
//! ```
//!
//! with every mask `μ_m` taken from the input field. Scores are compared
//! exactly; ties go to the smallest label.

use std::collections::{HashMap, VecDeque};

use sha2::{Digest, Sha256};

use crate::domain::{DomainSpec, Label, LabelField, RealField};
use crate::error::{Error, Result};
use crate::operators::VotingOperator;

/// Skew fields `R_1..R_M`, stored pixel-major (`R_m(n)` at `n * M + m - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SkewStack {
    domain: DomainSpec,
    num_labels: usize,
    data: Vec<f64>,
}

impl SkewStack {
    pub fn new(domain: &DomainSpec, fields: &[RealField]) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidArgument("skew stack needs at least one field".into()));
        }
        let m = fields.len();
        let n = domain.size();
        let mut data = vec![0.0; n * m];
        for (l, field) in fields.iter().enumerate() {
            domain.ensure_same(field.domain())?;
            if field.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "skew field {} has non-finite values",
                    l + 1
                )));
            }
            for (p, &v) in field.values().iter().enumerate() {
                data[p * m + l] = v;
            }
        }
        Ok(Self {
            domain: domain.clone(),
            num_labels: m,
            data,
        })
    }

    pub fn zeros(domain: &DomainSpec, num_labels: usize) -> Self {
        Self {
            domain: domain.clone(),
            num_labels,
            data: vec![0.0; domain.size() * num_labels],
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// `R_m` for `m` in `1..=M`.
    pub fn field(&self, m: usize) -> Result<RealField> {
        if m == 0 || m > self.num_labels {
            return Err(Error::InvalidLabel {
                label: m,
                num_labels: self.num_labels,
            });
        }
        let values = self
            .data
            .chunks_exact(self.num_labels)
            .map(|row| row[m - 1])
            .collect();
        RealField::new(self.domain.clone(), values)
    }

    /// `R_1(n)..R_M(n)`.
    #[inline]
    pub fn at(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.num_labels..(pixel + 1) * self.num_labels]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectMode {
    /// Compare each state with its two predecessors. Finds fixed points and
    /// 2-cycles only, which is complete for self-adjoint and
    /// quasi-self-adjoint operators.
    LastTwo,
    /// Hash every state; finds the exact transient and cycle length for any
    /// operator.
    FullHistory,
}

#[derive(Debug, Clone)]
pub struct AmConfig {
    pub operator: VotingOperator,
    pub skews: SkewStack,
    pub max_iterations: usize,
    pub detect_mode: DetectMode,
}

impl AmConfig {
    /// Full-history detection with the default iteration cap `10·N·M`.
    pub fn new(operator: VotingOperator, skews: SkewStack) -> Result<Self> {
        let cap = 10usize
            .saturating_mul(operator.domain().size())
            .saturating_mul(skews.num_labels());
        Self::with_limits(operator, skews, cap, DetectMode::FullHistory)
    }

    pub fn with_limits(
        operator: VotingOperator,
        skews: SkewStack,
        max_iterations: usize,
        detect_mode: DetectMode,
    ) -> Result<Self> {
        operator.domain().ensure_same(skews.domain())?;
        if max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        Ok(Self {
            operator,
            skews,
            max_iterations,
            detect_mode,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        self.operator.domain()
    }

    pub fn num_labels(&self) -> usize {
        self.skews.num_labels()
    }

    fn check_state(&self, psi: &LabelField) -> Result<()> {
        self.domain().ensure_same(psi.domain())?;
        if psi.num_labels() != self.num_labels() {
            return Err(Error::InvalidArgument(format!(
                "state has {} labels, config has {}",
                psi.num_labels(),
                self.num_labels()
            )));
        }
        Ok(())
    }
}

/// Per-iteration trajectory metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub boundary_crossings: usize,
    /// Pixels whose label differs from the previous state (0 at iteration 0).
    pub pixels_changed: usize,
    pub nonempty_masks: usize,
}

impl IterationMetrics {
    fn of(iteration: usize, state: &LabelField, previous: Option<&LabelField>) -> Self {
        Self {
            iteration,
            boundary_crossings: state.boundary_crossings(),
            pixels_changed: previous.map_or(0, |p| state.pixels_changed(p)),
            nonempty_masks: state.nonempty_masks(),
        }
    }
}

/// Outcome of iterating from one initial state.
#[derive(Debug, Clone)]
pub struct CycleReport {
    /// Iterations before the cycle is entered (`i₀`). When no cycle was found
    /// this is the number of iterations run.
    pub transient: usize,
    /// `K`; 0 when the iteration budget ran out first.
    pub cycle_length: usize,
    /// `ψ_{i₀}, …, ψ_{i₀+K-1}`.
    pub cycle_states: Vec<LabelField>,
    pub converged: bool,
    pub iterations_run: usize,
    /// One record per state `ψ_0..ψ_{iterations_run}`.
    pub trace: Vec<IterationMetrics>,
}

impl CycleReport {
    pub fn final_state(&self) -> Option<&LabelField> {
        self.cycle_states.first()
    }
}

#[inline]
fn best_label(scores: impl Iterator<Item = f64>) -> Label {
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (l, s) in scores.enumerate() {
        // Strict: an equal later score never displaces the smaller label.
        if l == 0 || s > best_score {
            best = l;
            best_score = s;
        }
    }
    (best + 1) as Label
}

/// Label of one pixel after a step; `votes` is scratch of length `M`.
#[inline]
fn pixel_update(
    config: &AmConfig,
    labels: &[Label],
    pixel: usize,
    coords: &mut [usize],
    votes: &mut [f64],
) -> Label {
    votes.fill(0.0);
    config
        .operator
        .for_each_term(pixel, coords, |j, w| votes[labels[j] as usize - 1] += w);
    let skew = config.skews.at(pixel);
    match config.operator.normalization() {
        Some(denom) => {
            let d = denom[pixel];
            best_label(votes.iter().zip(skew).map(|(v, r)| v / d + r))
        }
        None => best_label(votes.iter().zip(skew).map(|(v, r)| v + r)),
    }
}

fn step_unchecked(psi: &LabelField, config: &AmConfig) -> LabelField {
    let labels = psi.labels();
    let mut coords = vec![0; psi.domain().ndim()];
    let mut votes = vec![0.0; config.num_labels()];
    let next = (0..labels.len())
        .map(|n| pixel_update(config, labels, n, &mut coords, &mut votes))
        .collect();
    LabelField::from_raw(psi.domain().clone(), next, config.num_labels())
}

/// One synchronous update.
///
/// Votes for all labels at a pixel are gathered in one pass over the
/// operator's terms; the sums are identical, term by term, to applying the
/// operator to each mask (see [`step_reference`]).
pub fn step(psi: &LabelField, config: &AmConfig) -> Result<LabelField> {
    config.check_state(psi)?;
    Ok(step_unchecked(psi, config))
}

/// One update computed literally: build every mask, apply the operator, add
/// the skew, take the smallest maximizer.
pub fn step_reference(psi: &LabelField, config: &AmConfig) -> Result<LabelField> {
    config.check_state(psi)?;
    let m = config.num_labels();
    let scores: Vec<Vec<f64>> = (1..=m)
        .map(|l| {
            let votes = config.operator.apply(&psi.mask_of(l)?)?;
            let skew = config.skews.field(l)?;
            Ok(votes.zip_with(&skew, |v, r| v + r)?.into_values())
        })
        .collect::<Result<_>>()?;
    let next = (0..psi.domain().size())
        .map(|n| best_label(scores.iter().map(|s| s[n])))
        .collect();
    LabelField::new(psi.domain().clone(), next, m)
}

/// Evaluates the update pixel by pixel in the given order.
pub fn step_in_order(psi: &LabelField, config: &AmConfig, order: &[usize]) -> Result<LabelField> {
    config.check_state(psi)?;
    let mut coords = vec![0; psi.domain().ndim()];
    let mut votes = vec![0.0; config.num_labels()];
    let mut next = vec![0 as Label; psi.domain().size()];
    for &n in order {
        next[n] = pixel_update(config, psi.labels(), n, &mut coords, &mut votes);
    }
    LabelField::new(psi.domain().clone(), next, config.num_labels())
}

fn state_hash(psi: &LabelField) -> u128 {
    let mut hasher = Sha256::new();
    for &l in psi.labels() {
        hasher.update(l.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    u128::from_le_bytes(bytes)
}

const HISTORY_WINDOW: usize = 16;

/// Iterates until a cycle is detected or `max_iterations` steps have run.
pub fn run(psi0: &LabelField, config: &AmConfig) -> Result<CycleReport> {
    run_observed(psi0, config, |_, _| {})
}

/// [`run`], calling `observer(i, ψ_i)` for every state visited, `ψ_0` included.
pub fn run_observed(
    psi0: &LabelField,
    config: &AmConfig,
    mut observer: impl FnMut(usize, &LabelField),
) -> Result<CycleReport> {
    config.check_state(psi0)?;
    let mut trace = vec![IterationMetrics::of(0, psi0, None)];
    observer(0, psi0);

    // Recent states for direct comparison; older hash hits are confirmed by
    // recomputing the trajectory from ψ_0.
    let mut recent: VecDeque<(usize, LabelField)> = VecDeque::with_capacity(HISTORY_WINDOW + 1);
    recent.push_back((0, psi0.clone()));
    let mut seen: HashMap<u128, Vec<usize>> = HashMap::new();
    if config.detect_mode == DetectMode::FullHistory {
        seen.insert(state_hash(psi0), vec![0]);
    }

    let state_at = |recent: &VecDeque<(usize, LabelField)>, j: usize| -> LabelField {
        if let Some((_, s)) = recent.iter().find(|(i, _)| *i == j) {
            return s.clone();
        }
        let mut s = psi0.clone();
        for _ in 0..j {
            s = step_unchecked(&s, config);
        }
        s
    };

    for i in 1..=config.max_iterations {
        let current = &recent.back().expect("nonempty history").1;
        let next = step_unchecked(current, config);
        trace.push(IterationMetrics::of(i, &next, Some(current)));
        observer(i, &next);

        let repeat_of = match config.detect_mode {
            DetectMode::LastTwo => {
                if &next == current {
                    Some(i - 1)
                } else if i >= 2 && next == state_at(&recent, i - 2) {
                    Some(i - 2)
                } else {
                    None
                }
            }
            DetectMode::FullHistory => {
                let h = state_hash(&next);
                let hit = seen
                    .get(&h)
                    .and_then(|js| js.iter().copied().find(|&j| state_at(&recent, j) == next));
                if hit.is_none() {
                    seen.entry(h).or_default().push(i);
                }
                hit
            }
        };

        if let Some(j) = repeat_of {
            let k = i - j;
            let mut cycle_states = Vec::with_capacity(k);
            let mut s = next;
            for _ in 0..k {
                let following = step_unchecked(&s, config);
                cycle_states.push(s);
                s = following;
            }
            return Ok(CycleReport {
                transient: j,
                cycle_length: k,
                cycle_states,
                converged: k == 1,
                iterations_run: i,
                trace,
            });
        }

        recent.push_back((i, next));
        if recent.len() > HISTORY_WINDOW {
            recent.pop_front();
        }
    }

    let last = recent.pop_back().expect("nonempty history").1;
    Ok(CycleReport {
        transient: config.max_iterations,
        cycle_length: 0,
        cycle_states: vec![last],
        converged: false,
        iterations_run: config.max_iterations,
        trace,
    })
}

/// Plain iterative voting: [`run`] with all skews zero.
pub fn iterate_voting(
    psi0: &LabelField,
    operator: &VotingOperator,
    max_iterations: usize,
) -> Result<CycleReport> {
    let skews = SkewStack::zeros(operator.domain(), psi0.num_labels());
    let config = AmConfig::with_limits(
        operator.clone(),
        skews,
        max_iterations,
        DetectMode::FullHistory,
    )?;
    run(psi0, &config)
}

/// Two-label dynamics as a threshold automaton: label 2 iff
/// `(A μ_2)(n) + b(n) > 0`.
#[derive(Debug, Clone)]
pub struct TcaParams {
    pub operator: VotingOperator,
    pub b: RealField,
}

/// `b = ½ (R_2 − R_1 − A·1)`.
pub fn to_tca(config: &AmConfig) -> Result<TcaParams> {
    if config.num_labels() != 2 {
        return Err(Error::Unsupported(format!(
            "threshold form needs exactly 2 labels, config has {}",
            config.num_labels()
        )));
    }
    let ones = config.operator.apply(&RealField::ones(config.domain()))?;
    let r1 = config.skews.field(1)?;
    let r2 = config.skews.field(2)?;
    let b = r2
        .zip_with(&r1, |a, c| a - c)?
        .zip_with(&ones, |a, c| 0.5 * (a - c))?;
    Ok(TcaParams {
        operator: config.operator.clone(),
        b,
    })
}

pub fn tca_step(psi: &LabelField, params: &TcaParams) -> Result<LabelField> {
    params.operator.domain().ensure_same(psi.domain())?;
    if psi.num_labels() != 2 {
        return Err(Error::Unsupported(format!(
            "threshold step needs a 2-label state, got {}",
            psi.num_labels()
        )));
    }
    let labels = psi.labels();
    let b = params.b.values();
    let denom = params.operator.normalization();
    let mut coords = vec![0; psi.domain().ndim()];
    let next = (0..labels.len())
        .map(|n| {
            let mut vote = 0.0;
            params.operator.for_each_term(n, &mut coords, |j, w| {
                if labels[j] == 2 {
                    vote += w;
                }
            });
            if let Some(d) = denom {
                vote /= d[n];
            }
            if vote + b[n] > 0.0 {
                2
            } else {
                1
            }
        })
        .collect();
    LabelField::new(psi.domain().clone(), next, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::DenseMatrix;
    use crate::spectral::{periodized_gaussian, sampled_gaussian, Filter, GaussianSpec};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z(dims: &[usize]) -> DomainSpec {
        DomainSpec::circular(dims).unwrap()
    }

    fn voting(op: VotingOperator, m: usize) -> AmConfig {
        let skews = SkewStack::zeros(op.domain(), m);
        AmConfig::new(op, skews).unwrap()
    }

    fn labels(d: &DomainSpec, v: &[Label], m: usize) -> LabelField {
        LabelField::new(d.clone(), v.to_vec(), m).unwrap()
    }

    fn random_state(d: &DomainSpec, m: usize, rng: &mut ChaCha8Rng) -> LabelField {
        let v = (0..d.size()).map(|_| rng.random_range(1..=m as Label)).collect();
        LabelField::new(d.clone(), v, m).unwrap()
    }

    fn random_skews(d: &DomainSpec, m: usize, scale: f64, rng: &mut ChaCha8Rng) -> SkewStack {
        let fields: Vec<RealField> = (0..m)
            .map(|_| RealField::from_fn(d, |_| rng.random_range(-scale..scale)))
            .collect();
        SkewStack::new(d, &fields).unwrap()
    }

    #[test]
    fn box3_two_cycle_step() {
        let d = z(&[4]);
        let cfg = voting(VotingOperator::circular(Filter::box3(&d)).unwrap(), 2);
        let next = step(&labels(&d, &[1, 2, 1, 2], 2), &cfg).unwrap();
        assert_eq!(next.labels(), &[2, 1, 2, 1]);
    }

    #[test]
    fn dirac_is_identity_step() {
        let d = z(&[5]);
        let cfg = voting(VotingOperator::circular(Filter::dirac(&d)).unwrap(), 3);
        let psi = labels(&d, &[3, 1, 2, 2, 3], 3);
        assert_eq!(step(&psi, &cfg).unwrap(), psi);
    }

    #[test]
    fn single_label_is_constant() {
        let d = z(&[4]);
        let cfg = voting(VotingOperator::circular(Filter::box3(&d)).unwrap(), 1);
        let psi = LabelField::constant(&d, 1, 1).unwrap();
        assert_eq!(step(&psi, &cfg).unwrap(), psi);
    }

    #[test]
    fn full_tie_goes_to_label_one() {
        let d = z(&[2]);
        let op = VotingOperator::dense(&d, DenseMatrix::zeros(2)).unwrap();
        let cfg = voting(op, 2);
        let next = step(&labels(&d, &[2, 2], 2), &cfg).unwrap();
        assert_eq!(next.labels(), &[1, 1]);
    }

    #[test]
    fn step_rejects_mismatched_state() {
        let d = z(&[4]);
        let cfg = voting(VotingOperator::circular(Filter::box3(&d)).unwrap(), 2);
        assert!(step(&LabelField::constant(&d, 1, 3).unwrap(), &cfg).is_err());
        assert!(step(&LabelField::constant(&z(&[5]), 1, 2).unwrap(), &cfg).is_err());
    }

    #[test]
    fn run_box3_counterexample() {
        let d = z(&[4]);
        let cfg = voting(VotingOperator::circular(Filter::box3(&d)).unwrap(), 2);
        let r = run(&labels(&d, &[1, 2, 1, 2], 2), &cfg).unwrap();
        assert_eq!((r.transient, r.cycle_length, r.converged), (0, 2, false));
        assert_eq!(r.cycle_states[0].labels(), &[1, 2, 1, 2]);
        assert_eq!(r.cycle_states[1].labels(), &[2, 1, 2, 1]);
        assert_eq!(r.trace.len(), r.iterations_run + 1);
        assert!(r.trace.iter().all(|t| t.boundary_crossings == 4));
    }

    #[test]
    fn last_two_mode_agrees_on_two_cycles() {
        let d = z(&[4]);
        let op = VotingOperator::circular(Filter::box3(&d)).unwrap();
        let cfg = AmConfig::with_limits(op, SkewStack::zeros(&d, 2), 50, DetectMode::LastTwo).unwrap();
        let r = run(&labels(&d, &[1, 2, 1, 2], 2), &cfg).unwrap();
        assert_eq!((r.transient, r.cycle_length), (0, 2));
        let r = run(&labels(&d, &[1, 1, 1, 2], 2), &cfg).unwrap();
        assert_eq!((r.transient, r.cycle_length), (1, 1));
    }

    #[test]
    fn moore_stripes_and_plus_checkerboard_cycle() {
        let d = z(&[4, 4]);
        let stripes: Vec<Label> = (0..16).map(|i| if (i / 4) % 2 == 0 { 1 } else { 2 }).collect();
        let cfg = voting(VotingOperator::circular(Filter::box3(&d)).unwrap(), 2);
        let r = run(&labels(&d, &stripes, 2), &cfg).unwrap();
        assert_eq!(r.cycle_length, 2);

        let checker: Vec<Label> = (0..16).map(|i| if (i / 4 + i % 4) % 2 == 0 { 1 } else { 2 }).collect();
        let cfg = voting(VotingOperator::circular(Filter::plus(&d)).unwrap(), 2);
        let r = run(&labels(&d, &checker, 2), &cfg).unwrap();
        assert_eq!(r.cycle_length, 2);
    }

    #[test]
    fn cyclic_shift_finds_long_cycle() {
        // δ_1 is a pure shift: on Z_5 a single marked pixel orbits with period 5.
        let d = z(&[5]);
        let op = VotingOperator::circular(Filter::new(RealField::delta(&d, &[1]))).unwrap();
        let cfg = voting(op, 2);
        let r = run(&labels(&d, &[2, 1, 1, 1, 1], 2), &cfg).unwrap();
        assert_eq!((r.transient, r.cycle_length), (0, 5));
        for j in 0..5 {
            let next = step(&r.cycle_states[j], &cfg).unwrap();
            assert_eq!(next, r.cycle_states[(j + 1) % 5]);
        }
    }

    #[test]
    fn long_cycle_beyond_window_is_confirmed_by_recompute() {
        let d = z(&[23]);
        let op = VotingOperator::circular(Filter::new(RealField::delta(&d, &[1]))).unwrap();
        let cfg = voting(op, 2);
        let mut v = vec![1; 23];
        v[0] = 2;
        let r = run(&labels(&d, &v, 2), &cfg).unwrap();
        assert_eq!(r.cycle_length, 23);
    }

    #[test]
    fn exhausted_budget_reports_unknown() {
        let d = z(&[5]);
        let op = VotingOperator::circular(Filter::new(RealField::delta(&d, &[1]))).unwrap();
        let cfg = AmConfig::with_limits(op, SkewStack::zeros(&d, 2), 3, DetectMode::FullHistory).unwrap();
        let r = run(&labels(&d, &[2, 1, 1, 1, 1], 2), &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.cycle_length, 0);
        assert_eq!(r.iterations_run, 3);
        assert_eq!(r.trace.len(), 4);
    }

    #[test]
    fn gaussian_z8_converges_from_every_state() {
        let d = z(&[8]);
        let g = periodized_gaussian(&d, &GaussianSpec::new(1.0).unwrap()).unwrap();
        let cfg = voting(VotingOperator::circular(g).unwrap(), 2);
        for s in 0u32..256 {
            let v: Vec<Label> = (0..8).map(|b| ((s >> b) & 1) as Label + 1).collect();
            let r = run(&labels(&d, &v, 2), &cfg).unwrap();
            assert_eq!(r.cycle_length, 1, "state {s:08b}");
        }
    }

    #[test]
    fn diag_dominant_converges_within_one_step() {
        let d = z(&[6]);
        let g = Filter::new(RealField::new(d.clone(), vec![5.0, 1.0, -1.0, 0.5, 1.0, -1.0]).unwrap());
        assert!(g.is_diag_dominant());
        let op = VotingOperator::circular(g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let r = iterate_voting(&random_state(&d, 3, &mut rng), &op, 100).unwrap();
            assert_eq!(r.cycle_length, 1);
            assert!(r.transient <= 1);
        }
    }

    #[test]
    fn tca_examples() {
        let d = z(&[4]);
        let g = Filter::new(RealField::new(d.clone(), vec![0.5, 0.25, 0.0, 0.25]).unwrap());
        let cfg = voting(VotingOperator::circular(g).unwrap(), 2);
        let tca = to_tca(&cfg).unwrap();
        assert!(tca.b.values().iter().all(|&b| b == -0.5));

        let op = VotingOperator::dense(&d, DenseMatrix::zeros(4)).unwrap();
        let r = RealField::new(d.clone(), vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        let skews = SkewStack::new(&d, &[r.clone(), r]).unwrap();
        let tca = to_tca(&AmConfig::new(op.clone(), skews).unwrap()).unwrap();
        assert!(tca.b.values().iter().all(|&b| b == 0.0));

        let psi = labels(&d, &[1, 2, 2, 1], 2);
        let big = TcaParams { operator: op.clone(), b: RealField::constant(&d, 1e300) };
        assert_eq!(tca_step(&psi, &big).unwrap().labels(), &[2; 4]);
        let small = TcaParams { operator: op, b: RealField::constant(&d, -1e300) };
        assert_eq!(tca_step(&psi, &small).unwrap().labels(), &[1; 4]);

        assert!(to_tca(&voting(VotingOperator::circular(Filter::box3(&d)).unwrap(), 3)).is_err());
    }

    #[test]
    fn tca_matches_step_on_random_states() {
        let d = DomainSpec::padded(&[3, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let taps = sampled_gaussian(&GaussianSpec::new(1.2).unwrap(), 2);
        let op = VotingOperator::noncircular_star(&d, taps).unwrap();
        let cfg = AmConfig::new(op, random_skews(&d, 2, 0.5, &mut rng)).unwrap();
        let tca = to_tca(&cfg).unwrap();
        for _ in 0..1000 {
            let psi = random_state(&d, 2, &mut rng);
            assert_eq!(tca_step(&psi, &tca).unwrap(), step(&psi, &cfg).unwrap());
        }
    }

    #[test]
    fn skew_stack_layout() {
        let d = z(&[3]);
        let a = RealField::new(d.clone(), vec![1.0, 2.0, 3.0]).unwrap();
        let b = RealField::new(d.clone(), vec![4.0, 5.0, 6.0]).unwrap();
        let s = SkewStack::new(&d, &[a.clone(), b]).unwrap();
        assert_eq!(s.at(1), &[2.0, 5.0]);
        assert_eq!(s.field(1).unwrap(), a);
        assert!(s.field(3).is_err());
        let nan = RealField::new(d.clone(), vec![f64::NAN, 0.0, 0.0]).unwrap();
        assert!(SkewStack::new(&d, &[nan]).is_err());
    }

    #[test]
    fn skewed_run_keeps_background() {
        // A strong skew on label 1 at pixels 0..3 pins them regardless of votes.
        let d = z(&[6]);
        let r1 = RealField::new(d.clone(), vec![10.0, 10.0, 10.0, 0.0, 0.0, 0.0]).unwrap();
        let skews = SkewStack::new(&d, &[r1, RealField::zeros(&d)]).unwrap();
        let cfg = AmConfig::new(VotingOperator::circular(Filter::box3(&d)).unwrap(), skews).unwrap();
        let r = run(&labels(&d, &[2, 2, 2, 2, 2, 2], 2), &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(&r.cycle_states[0].labels()[..3], &[1, 1, 1]);
    }

    fn arb_config() -> impl Strategy<Value = (u64, usize, usize)> {
        (any::<u64>(), 0usize..4, 1usize..5)
    }

    fn build_config(seed: u64, kind: usize, m: usize) -> (AmConfig, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = match kind {
            0 => {
                let d = z(&[5]);
                let taps = RealField::from_fn(&d, |_| rng.random_range(-3i32..=3) as f64);
                VotingOperator::circular(Filter::new(taps)).unwrap()
            }
            1 => {
                let d = z(&[3, 4]);
                VotingOperator::circular(periodized_gaussian(&d, &GaussianSpec::new(0.9).unwrap()).unwrap()).unwrap()
            }
            2 => {
                let d = DomainSpec::padded(&[4, 3]).unwrap();
                VotingOperator::noncircular_star(&d, sampled_gaussian(&GaussianSpec::new(1.5).unwrap(), 2)).unwrap()
            }
            _ => {
                let d = z(&[6]);
                let data = (0..36).map(|_| rng.random_range(-2.0..2.0)).collect();
                VotingOperator::dense(&d, DenseMatrix::new(6, data).unwrap()).unwrap()
            }
        };
        let d = op.domain().clone();
        let skews = random_skews(&d, m, 0.7, &mut rng);
        (AmConfig::new(op, skews).unwrap(), rng)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fast_step_matches_reference((seed, kind, m) in arb_config()) {
            let (cfg, mut rng) = build_config(seed, kind, m);
            let psi = random_state(cfg.domain(), m, &mut rng);
            prop_assert_eq!(step(&psi, &cfg).unwrap(), step_reference(&psi, &cfg).unwrap());
        }

        #[test]
        fn step_is_order_independent((seed, kind, m) in arb_config()) {
            let (cfg, mut rng) = build_config(seed, kind, m);
            let psi = random_state(cfg.domain(), m, &mut rng);
            let mut order: Vec<usize> = (0..cfg.domain().size()).collect();
            order.shuffle(&mut rng);
            prop_assert_eq!(step_in_order(&psi, &cfg, &order).unwrap(), step(&psi, &cfg).unwrap());
        }

        #[test]
        fn runs_are_deterministic_and_cycles_close((seed, kind, m) in arb_config()) {
            let (cfg, mut rng) = build_config(seed, kind, m);
            let psi = random_state(cfg.domain(), m, &mut rng);
            let a = run(&psi, &cfg).unwrap();
            let b = run(&psi, &cfg).unwrap();
            prop_assert_eq!(&a.cycle_states, &b.cycle_states);
            prop_assert_eq!(&a.trace, &b.trace);
            prop_assert!(a.cycle_length >= 1);
            prop_assert_eq!(a.converged, a.cycle_length == 1);
            let k = a.cycle_length;
            for j in 0..k {
                prop_assert_eq!(&step(&a.cycle_states[j], &cfg).unwrap(), &a.cycle_states[(j + 1) % k]);
            }
            prop_assert_eq!(a.trace.len(), a.iterations_run + 1);
        }

        #[test]
        fn zero_skew_run_equals_iterate_voting((seed, kind, m) in arb_config()) {
            let (cfg, mut rng) = build_config(seed, kind, m);
            let psi = random_state(cfg.domain(), m, &mut rng);
            let zero = AmConfig::with_limits(cfg.operator.clone(), SkewStack::zeros(cfg.domain(), m), 500, DetectMode::FullHistory).unwrap();
            let a = run(&psi, &zero).unwrap();
            let b = iterate_voting(&psi, &cfg.operator, 500).unwrap();
            prop_assert_eq!(a.cycle_states, b.cycle_states);
            prop_assert_eq!(a.trace, b.trace);
        }
    }
}
