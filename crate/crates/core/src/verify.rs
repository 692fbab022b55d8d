//! Brute-force checks on tiny domains: exhaustive trajectory enumeration,
//! exhaustive `{0, ±1}` quadratic forms, submatrix sums and the fixed
//! theorem battery.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::automaton::{step, AmConfig, SkewStack};
use crate::domain::{DomainSpec, Label, LabelField, RealField};
use crate::error::{Error, Result};
use crate::operators::VotingOperator;
use crate::spectral::{
    analyze_filter, periodized_gaussian, sampled_gaussian, Filter, GaussianSpec, GuaranteeTier,
    DEFAULT_TOL,
};

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 20;
pub const DEFAULT_QUADFORM_BUDGET: u64 = 43_046_721; // 3^16

fn checked_states(base: usize, n: usize, budget: u64) -> Result<u64> {
    let required = (base as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: budget as u128,
        });
    }
    Ok(required as u64)
}

/// Decodes state `s` in mixed radix `M`, last pixel fastest.
pub fn decode_state(domain: &DomainSpec, num_labels: usize, mut s: u64) -> LabelField {
    let n = domain.size();
    let mut labels = vec![0 as Label; n];
    for slot in labels.iter_mut().rev() {
        *slot = (s % num_labels as u64) as Label + 1;
        s /= num_labels as u64;
    }
    LabelField::from_raw(domain.clone(), labels, num_labels)
}

pub fn encode_state(psi: &LabelField) -> u64 {
    let m = psi.num_labels() as u64;
    psi.labels()
        .iter()
        .fold(0u64, |acc, &l| acc * m + (l as u64 - 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationReport {
    pub num_pixels: usize,
    pub num_labels: usize,
    pub states_enumerated: u64,
    /// Cycle length `K` → number of initial states whose trajectory ends in a
    /// `K`-cycle.
    pub histogram: BTreeMap<usize, u64>,
    pub max_transient: usize,
    /// First initial state, in enumeration order, reaching each `K ≥ 2`.
    pub witnesses: BTreeMap<usize, LabelField>,
}

impl EnumerationReport {
    pub fn max_cycle_length(&self) -> usize {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    pub fn only_fixed_points(&self) -> bool {
        self.histogram.keys().all(|&k| k == 1)
    }
}

/// Per-state cycle length and transient for every initial state.
#[derive(Debug, Clone)]
pub struct StateGraph {
    pub successor: Vec<u32>,
    pub cycle_length: Vec<u32>,
    pub transient: Vec<u32>,
}

/// Builds the successor table of the step map over all `M^N` states and
/// resolves the functional graph.
pub fn state_graph(config: &AmConfig, budget: u64) -> Result<StateGraph> {
    let domain = config.domain().clone();
    let m = config.num_labels();
    let total = checked_states(m, domain.size(), budget.min(u32::MAX as u64))?;
    let successor: Vec<u32> = (0..total)
        .into_par_iter()
        .map(|s| {
            let psi = decode_state(&domain, m, s);
            let next = step(&psi, config).expect("state matches config");
            encode_state(&next) as u32
        })
        .collect();

    const UNKNOWN: u32 = u32::MAX;
    let total = total as usize;
    let mut cycle_length = vec![UNKNOWN; total];
    let mut transient = vec![UNKNOWN; total];
    // Position of a state on the current walk, offset by the walk id.
    let mut on_walk = vec![UNKNOWN; total];
    let mut path = Vec::new();
    for start in 0..total {
        if cycle_length[start] != UNKNOWN {
            continue;
        }
        path.clear();
        let mut s = start;
        while cycle_length[s] == UNKNOWN && on_walk[s] == UNKNOWN {
            on_walk[s] = path.len() as u32;
            path.push(s);
            s = successor[s] as usize;
        }
        let mut tail_end = path.len();
        if cycle_length[s] == UNKNOWN {
            // Closed a new cycle at path[on_walk[s]..].
            let first = on_walk[s] as usize;
            let k = (path.len() - first) as u32;
            for &c in &path[first..] {
                cycle_length[c] = k;
                transient[c] = 0;
            }
            tail_end = first;
        }
        for &t in path[..tail_end].iter().rev() {
            let next = successor[t] as usize;
            cycle_length[t] = cycle_length[next];
            transient[t] = transient[next] + 1;
        }
        for &p in &path {
            on_walk[p] = UNKNOWN;
        }
    }
    Ok(StateGraph {
        successor,
        cycle_length,
        transient,
    })
}

/// Runs the dynamics from every initial state. The state space `M^N` must
/// not exceed [`DEFAULT_ENUMERATION_BUDGET`].
pub fn enumerate_all(config: &AmConfig) -> Result<EnumerationReport> {
    enumerate_all_with_budget(config, DEFAULT_ENUMERATION_BUDGET)
}

pub fn enumerate_all_with_budget(config: &AmConfig, budget: u64) -> Result<EnumerationReport> {
    let graph = state_graph(config, budget)?;
    let mut histogram = BTreeMap::new();
    let mut witnesses = BTreeMap::new();
    let mut max_transient = 0;
    for (s, (&k, &t)) in graph.cycle_length.iter().zip(&graph.transient).enumerate() {
        *histogram.entry(k as usize).or_insert(0u64) += 1;
        max_transient = max_transient.max(t as usize);
        if k >= 2 {
            witnesses
                .entry(k as usize)
                .or_insert_with(|| decode_state(config.domain(), config.num_labels(), s as u64));
        }
    }
    Ok(EnumerationReport {
        num_pixels: config.domain().size(),
        num_labels: config.num_labels(),
        states_enumerated: graph.successor.len() as u64,
        histogram,
        max_transient,
        witnesses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormReport {
    /// `3^N`.
    pub functions_tested: u64,
    pub min_value: f64,
    /// First minimizer in enumeration order (digits `0, 1, −1`, first pixel
    /// slowest).
    pub argmin_f: Vec<i8>,
    pub all_nonnegative: bool,
}

/// Minimum of `⟨A f, f⟩` over all `f: Ω → {0, ±1}`.
pub fn exhaustive_quadform(op: &VotingOperator, tol: f64) -> Result<QuadFormReport> {
    exhaustive_quadform_with_budget(op, tol, DEFAULT_QUADFORM_BUDGET)
}

pub fn exhaustive_quadform_with_budget(
    op: &VotingOperator,
    tol: f64,
    budget: u64,
) -> Result<QuadFormReport> {
    let n = op.domain().size();
    let total = checked_states(3, n, budget)?;
    let a = op.to_dense()?;
    // Depth-first over pixels; the contribution of pixel k given pixels < k is
    //   f_k Σ_{j<k} (a_kj + a_jk) f_j + a_kk f_k².
    let sym: Vec<f64> = (0..n * n)
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            a.get(i, j) + a.get(j, i)
        })
        .collect();
    let mut f = vec![0i8; n];
    let mut best_f = vec![0i8; n];
    let mut best = f64::INFINITY;

    fn dfs(
        k: usize,
        acc: f64,
        n: usize,
        a: &crate::operators::DenseMatrix,
        sym: &[f64],
        f: &mut [i8],
        best: &mut f64,
        best_f: &mut [i8],
    ) {
        if k == n {
            if acc < *best {
                *best = acc;
                best_f.copy_from_slice(f);
            }
            return;
        }
        let cross: f64 = (0..k).map(|j| sym[k * n + j] * f[j] as f64).sum();
        let diag = a.get(k, k);
        for v in [0i8, 1, -1] {
            f[k] = v;
            let x = v as f64;
            let add = if v == 0 { 0.0 } else { x * cross + diag };
            dfs(k + 1, acc + add, n, a, sym, f, best, best_f);
        }
        f[k] = 0;
    }
    dfs(0, 0.0, n, &a, &sym, &mut f, &mut best, &mut best_f);

    let field = RealField::new(
        op.domain().clone(),
        best_f.iter().map(|&v| v as f64).collect(),
    )?;
    let min_value = op.quadratic_form(&field)?.min(best);
    Ok(QuadFormReport {
        functions_tested: total,
        min_value,
        argmin_f: best_f,
        all_nonnegative: min_value >= -tol,
    })
}

/// `ssum(A₁₁) + ssum(A₂₂) − ssum(A₁₂) − ssum(A₂₁)`, with `A_ab` the
/// submatrix of rows `I_a` and columns `I_b`.
pub fn submatrix_sum_form(op: &VotingOperator, i1: &[usize], i2: &[usize]) -> Result<f64> {
    let n = op.domain().size();
    if let Some(&bad) = i1.iter().chain(i2).find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("pixel {bad} outside a domain of {n}")));
    }
    let a = op.to_dense()?;
    let ssum = |rows: &[usize], cols: &[usize]| -> f64 {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| a.get(i, j)).sum::<f64>())
            .sum()
    };
    Ok(ssum(i1, i1) + ssum(i2, i2) - ssum(i1, i2) - ssum(i2, i1))
}

/// Parameters of [`theorem_suite`].
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random even integer filters in the 1-or-2-cycle battery.
    pub even_filters: usize,
    /// Random skew stacks per filter in the fixed-point batteries.
    pub skew_stacks: usize,
    /// Random non-even filters in the exploratory search.
    pub exploratory_filters: usize,
    pub budget: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0x00A5_C0DE,
            even_filters: 200,
            skew_stacks: 20,
            exploratory_filters: 60,
            budget: 1 << 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatteryResult {
    pub name: &'static str,
    /// Asserted batteries fail the suite; exploratory ones only report.
    pub asserted: bool,
    pub cases: usize,
    pub states: u64,
    pub histogram: BTreeMap<usize, u64>,
    pub max_transient: usize,
    pub passed: bool,
    /// Description and initial state of the first offending case.
    pub witness: Option<String>,
}

impl BatteryResult {
    fn new(name: &'static str, asserted: bool) -> Self {
        Self {
            name,
            asserted,
            cases: 0,
            states: 0,
            histogram: BTreeMap::new(),
            max_transient: 0,
            passed: true,
            witness: None,
        }
    }

    fn absorb(&mut self, case: &str, report: &EnumerationReport, ok: impl Fn(usize) -> bool) {
        self.cases += 1;
        self.states += report.states_enumerated;
        self.max_transient = self.max_transient.max(report.max_transient);
        for (&k, &c) in &report.histogram {
            *self.histogram.entry(k).or_default() += c;
        }
        if let Some(&bad) = report.histogram.keys().find(|&&k| !ok(k)) {
            self.passed = false;
            if self.witness.is_none() {
                let state = report
                    .witnesses
                    .get(&bad)
                    .map(|s| format_labels(s.labels()))
                    .unwrap_or_default();
                self.witness = Some(format!("{case} K={bad} psi0={state}"));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub seed: u64,
    pub batteries: Vec<BatteryResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.batteries.iter().all(|b| !b.asserted || b.passed)
    }
}

fn format_labels(labels: &[Label]) -> String {
    labels
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn format_histogram(h: &BTreeMap<usize, u64>) -> String {
    h.iter()
        .map(|(k, c)| format!("{k}:{c}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// One `key=value` pair per line, keys prefixed by the battery name.
impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed={}", self.seed)?;
        for b in &self.batteries {
            let p = b.name;
            writeln!(f, "{p}.asserted={}", b.asserted)?;
            writeln!(f, "{p}.cases={}", b.cases)?;
            writeln!(f, "{p}.states={}", b.states)?;
            writeln!(f, "{p}.histogram={}", format_histogram(&b.histogram))?;
            writeln!(f, "{p}.max_transient={}", b.max_transient)?;
            writeln!(f, "{p}.pass={}", b.passed)?;
            if let Some(w) = &b.witness {
                writeln!(f, "{p}.witness={w}")?;
            }
        }
        writeln!(f, "suite.pass={}", self.passed())
    }
}

fn circular(dims: &[usize]) -> DomainSpec {
    DomainSpec::circular(dims).expect("nonempty dims")
}

fn random_skews(domain: &DomainSpec, m: usize, rng: &mut ChaCha8Rng) -> SkewStack {
    let fields: Vec<RealField> = (0..m)
        .map(|_| RealField::from_fn(domain, |_| rng.random_range(-1.0..1.0)))
        .collect();
    SkewStack::new(domain, &fields).expect("matching domains")
}

fn integer_skews(domain: &DomainSpec, m: usize, rng: &mut ChaCha8Rng) -> SkewStack {
    let fields: Vec<RealField> = (0..m)
        .map(|_| RealField::from_fn(domain, |_| rng.random_range(-3i32..=3) as f64))
        .collect();
    SkewStack::new(domain, &fields).expect("matching domains")
}

/// Random integer taps in `[−3, 3]`, symmetrized as `g + g̃`.
pub fn random_even_integer_filter(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> Filter {
    let g = RealField::from_fn(domain, |_| rng.random_range(-3i32..=3) as f64);
    let sym = g.zip_with(&g.reversed(), |a, b| a + b).expect("same domain");
    Filter::new(sym)
}

/// Even filter with `g(0) > Σ_{n≠0} |g(n)|`.
pub fn random_diag_dominant_filter(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> Filter {
    let g = RealField::from_fn(domain, |_| rng.random_range(-1.0..1.0));
    let mut sym = g.zip_with(&g.reversed(), |a, b| 0.5 * (a + b)).expect("same domain");
    let off: f64 = sym.values()[1..].iter().map(|v| v.abs()).sum();
    sym.values_mut()[0] = off + rng.random_range(0.01..1.0);
    Filter::new(sym)
}

fn enumerate_case(op: VotingOperator, skews: SkewStack, budget: u64) -> EnumerationReport {
    let config = AmConfig::new(op, skews).expect("matching domains");
    enumerate_all_with_budget(&config, budget).expect("domain within budget")
}

/// Even integer filters, zero or integer skews: every cycle has length 1 or 2.
pub fn battery_even(cfg: &SuiteConfig) -> BatteryResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shapes: [(&[usize], usize); 8] = [
        (&[4], 2),
        (&[5], 3),
        (&[6], 2),
        (&[6], 3),
        (&[8], 2),
        (&[3, 3], 2),
        (&[2, 3], 3),
        (&[3, 4], 2),
    ];
    let mut result = BatteryResult::new("even", true);
    for i in 0..cfg.even_filters {
        let (dims, m) = shapes[i % shapes.len()];
        let d = circular(dims);
        let g = random_even_integer_filter(&d, &mut rng);
        let skews = if i % 2 == 0 {
            SkewStack::zeros(&d, m)
        } else {
            integer_skews(&d, m, &mut rng)
        };
        let op = VotingOperator::circular(g).expect("circular domain");
        let report = enumerate_case(op, skews, cfg.budget);
        result.absorb(&format!("case={i} domain={d} M={m}"), &report, |k| k <= 2);
    }
    result
}

/// The box filter on Z_4 with zero skews, the classic 2-cycle.
pub fn battery_box(cfg: &SuiteConfig) -> BatteryResult {
    let d = circular(&[4]);
    let op = VotingOperator::circular(Filter::box3(&d)).expect("circular domain");
    let report = enumerate_case(op, SkewStack::zeros(&d, 2), cfg.budget);
    let mut result = BatteryResult::new("box", true);
    result.absorb("box3 Z4", &report, |k| k <= 2);
    result.passed &= report.histogram.contains_key(&2);
    result
}

/// Filters in the always-converges tier, random skews: fixed points only.
pub fn battery_psd(cfg: &SuiteConfig) -> BatteryResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9);
    let shapes: [(&[usize], usize); 4] = [(&[6], 2), (&[8], 2), (&[5], 3), (&[3, 4], 2)];
    let mut result = BatteryResult::new("psd", true);
    for (s, &(dims, m)) in shapes.iter().enumerate() {
        let d = circular(dims);
        let mut filters = vec![("dirac".to_string(), Filter::dirac(&d))];
        for scale in [0.5, 1.0, 2.0] {
            let spec = GaussianSpec::new(scale).expect("positive scale");
            filters.push((format!("gaussian{scale}"), periodized_gaussian(&d, &spec).expect("circular")));
        }
        for j in 0..2 {
            filters.push((format!("diagdom{j}"), random_diag_dominant_filter(&d, &mut rng)));
        }
        for (name, g) in filters {
            let report = analyze_filter(&g, DEFAULT_TOL).expect("circular");
            if report.tier != GuaranteeTier::AlwaysConverges {
                result.passed = false;
                result.witness.get_or_insert_with(|| format!("shape={s} filter={name} tier={}", report.tier));
                continue;
            }
            let op = VotingOperator::circular(g).expect("circular domain");
            for k in 0..cfg.skew_stacks {
                let skews = random_skews(&d, m, &mut rng);
                let report = enumerate_case(op.clone(), skews, cfg.budget);
                result.absorb(&format!("domain={d} M={m} filter={name} skew={k}"), &report, |k| k == 1);
            }
        }
    }
    result
}

/// Normalized noncircular Gaussians with symmetric PSD factor: fixed points only.
pub fn battery_star(cfg: &SuiteConfig) -> BatteryResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66);
    let shapes: [(&[usize], usize); 4] = [(&[4], 2), (&[6], 2), (&[6], 3), (&[4, 4], 2)];
    let mut result = BatteryResult::new("star", true);
    for &(dims, m) in &shapes {
        let d = DomainSpec::padded(dims).expect("nonempty dims");
        for scale in [0.75, 1.5] {
            let spec = GaussianSpec::new(scale).expect("positive scale");
            let op = VotingOperator::noncircular_star(&d, sampled_gaussian(&spec, d.ndim()))
                .expect("positive Gaussian taps");
            let q = op.quasi_factorize(DEFAULT_TOL);
            if !q.as_ref().is_some_and(|q| q.b_matrix_is_self_adjoint && q.b_matrix_is_psd) {
                result.passed = false;
                result.witness.get_or_insert_with(|| format!("domain={d} scale={scale} not quasi-self-adjoint PSD"));
                continue;
            }
            let stacks = if d.size() > 8 { cfg.skew_stacks.min(5) } else { cfg.skew_stacks };
            for k in 0..stacks {
                let skews = random_skews(&d, m, &mut rng);
                let report = enumerate_case(op.clone(), skews, cfg.budget);
                result.absorb(&format!("domain={d} M={m} scale={scale} skew={k}"), &report, |k| k == 1);
            }
        }
    }
    result
}

/// Search for cycles of length ≥ 3 among non-even filters. Never asserted.
pub fn battery_exploratory(cfg: &SuiteConfig) -> BatteryResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC2B2_AE35);
    let shapes: [&[usize]; 4] = [&[5], &[6], &[7], &[8]];
    let mut result = BatteryResult::new("explore", false);
    for i in 0..cfg.exploratory_filters {
        let d = circular(shapes[i % shapes.len()]);
        let g = Filter::new(RealField::from_fn(&d, |_| rng.random_range(-3i32..=3) as f64));
        if g.is_even() {
            continue;
        }
        let taps: Vec<String> = g.taps().values().iter().map(|v| v.to_string()).collect();
        let op = VotingOperator::circular(g).expect("circular domain");
        let report = enumerate_case(op, SkewStack::zeros(&d, 2), cfg.budget);
        let case = format!("case={i} domain={d} taps={}", taps.join(","));
        result.absorb(&case, &report, |k| k <= 2);
    }
    result
}

/// Runs every battery. Seeds are fixed by `cfg.seed`.
pub fn theorem_suite(cfg: &SuiteConfig) -> SuiteReport {
    SuiteReport {
        seed: cfg.seed,
        batteries: vec![
            battery_box(cfg),
            battery_even(cfg),
            battery_psd(cfg),
            battery_star(cfg),
            battery_exploratory(cfg),
        ],
    }
}
