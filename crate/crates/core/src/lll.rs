//! Constraint systems and the Moser–Tardos resampling solver.

use alloc::boxed::Box;
use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::carving::{tgeo_sample, TGeoParams};
use crate::rng;

/// Distribution of a variable. Values are integers `0..domain size`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sampler {
    /// Uniform on `0..n`.
    Uniform(u32),
    /// Truncated geometric on `0..=M`.
    TGeo(TGeoParams),
}

impl Sampler {
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            Sampler::Uniform(n) => rng::below(rng, *n as u64) as u32,
            Sampler::TGeo(p) => tgeo_sample(p, rng),
        }
    }

    pub fn domain_size(&self) -> u64 {
        match self {
            Sampler::Uniform(n) => *n as u64,
            Sampler::TGeo(p) => p.cap as u64 + 1,
        }
    }
}

/// A constraint satisfaction problem as seen by the solver.
///
/// Constraints are grouped into scopes: constraints with the same scope
/// share one variable list. A constraint's violation must depend only on the
/// values of the variables in its scope.
pub trait Csp {
    fn num_variables(&self) -> usize;
    fn sampler(&self, var: usize) -> Sampler;
    fn num_constraints(&self) -> usize;
    fn num_scopes(&self) -> usize;
    /// Sorted, duplicate free variable list of scope `s`.
    fn scope(&self, s: usize) -> &[usize];
    fn scope_of(&self, c: usize) -> usize;
    fn is_violated(&self, c: usize, values: &[u32]) -> bool;

    /// Recomputes any derived state from scratch.
    fn reset(&mut self, _values: &[u32]) {}
    /// Updates derived state after the listed variables changed.
    fn refresh(&mut self, values: &[u32], _changed: &[usize]) {
        self.reset(values);
    }
    /// Analytic bound on every constraint's violation probability, if known.
    fn probability_bound(&self) -> Option<f64> {
        None
    }
    /// Exact number of other constraints sharing a variable with each
    /// constraint, when the system can compute it more cheaply than the
    /// generic scan.
    fn dependency_degrees(&self) -> Option<Vec<usize>> {
        None
    }
}

type Predicate = Box<dyn Fn(&[u32]) -> bool>;

/// Explicit constraint system: each constraint is a variable list and a
/// predicate over the values of those variables (in list order).
#[derive(Default)]
pub struct ConstraintSystem {
    variables: Vec<Sampler>,
    scopes: Vec<Vec<usize>>,
    predicates: Vec<Predicate>,
    analytic_p: Option<f64>,
}

impl ConstraintSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, sampler: Sampler) -> usize {
        self.variables.push(sampler);
        self.variables.len() - 1
    }

    /// Adds a constraint; `violated` receives the values of `vars` in order.
    pub fn add_constraint<F>(&mut self, vars: &[usize], violated: F) -> usize
    where
        F: Fn(&[u32]) -> bool + 'static,
    {
        assert!(
            vars.iter().all(|&v| v < self.variables.len()),
            "constraint references an unknown variable"
        );
        self.scopes.push(vars.to_vec());
        self.predicates.push(Box::new(violated));
        self.scopes.len() - 1
    }

    pub fn set_probability_bound(&mut self, p: f64) {
        self.analytic_p = Some(p);
    }
}

impl Csp for ConstraintSystem {
    fn num_variables(&self) -> usize {
        self.variables.len()
    }
    fn sampler(&self, var: usize) -> Sampler {
        self.variables[var]
    }
    fn num_constraints(&self) -> usize {
        self.scopes.len()
    }
    fn num_scopes(&self) -> usize {
        self.scopes.len()
    }
    fn scope(&self, s: usize) -> &[usize] {
        &self.scopes[s]
    }
    fn scope_of(&self, c: usize) -> usize {
        c
    }
    fn is_violated(&self, c: usize, values: &[u32]) -> bool {
        let local: Vec<u32> = self.scopes[c].iter().map(|&v| values[v]).collect();
        (self.predicates[c])(&local)
    }
    fn probability_bound(&self) -> Option<f64> {
        self.analytic_p
    }
}

/// Solver statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub resample_count: u64,
    pub budget: u64,
    pub converged: bool,
    pub p_bound: Option<f64>,
    pub d_bound: usize,
    /// False when `d_bound` is an upper bound rather than the exact value.
    pub d_exact: bool,
    pub lll_condition_met: bool,
    /// The caller's `keep_going` hook stopped the run before the budget.
    #[serde(default)]
    pub interrupted: bool,
    /// Stopped at a violated constraint whose variables all have a single
    /// possible value.
    #[serde(default)]
    pub frozen: bool,
}

/// Solver output. `values` is the final assignment; it satisfies every
/// constraint exactly when `stats.converged`.
#[derive(Clone, Debug, PartialEq)]
pub struct Solve {
    pub values: Vec<u32>,
    pub stats: SolveStats,
}

/// `1000 · (#variables + #constraints)`.
pub fn default_budget<C: Csp + ?Sized>(cs: &C) -> u64 {
    1000 * (cs.num_variables() as u64 + cs.num_constraints() as u64)
}

struct Index {
    scope_members: Vec<Vec<u32>>,
    var_scopes: Vec<Vec<u32>>,
}

fn build_index<C: Csp + ?Sized>(cs: &C) -> Index {
    let mut scope_members = vec![Vec::new(); cs.num_scopes()];
    for c in 0..cs.num_constraints() {
        scope_members[cs.scope_of(c)].push(c as u32);
    }
    let mut var_scopes = vec![Vec::new(); cs.num_variables()];
    for s in 0..cs.num_scopes() {
        if scope_members[s].is_empty() {
            continue;
        }
        for &v in cs.scope(s) {
            var_scopes[v].push(s as u32);
        }
    }
    Index {
        scope_members,
        var_scopes,
    }
}

/// Moser–Tardos: sample every variable, then repeatedly resample the
/// variables of the smallest-index violated constraint until none is
/// violated or `budget` resamples were spent. A full check of every
/// constraint runs before success is declared.
pub fn mt_solve<C, R>(cs: &mut C, rng: &mut R, budget: Option<u64>) -> Solve
where
    C: Csp + ?Sized,
    R: RngCore + ?Sized,
{
    mt_solve_with(cs, rng, budget, &mut |_| true)
}

/// [`mt_solve`] with a hook polled every 256 resamples with the resample
/// count so far; returning false stops the run (`stats.interrupted`).
pub fn mt_solve_with<C, R>(
    cs: &mut C,
    rng: &mut R,
    budget: Option<u64>,
    keep_going: &mut dyn FnMut(u64) -> bool,
) -> Solve
where
    C: Csp + ?Sized,
    R: RngCore + ?Sized,
{
    let budget = budget.unwrap_or_else(|| default_budget(cs));
    let index = build_index(cs);
    let (d_bound, d_exact) = dependency_degree_with(cs, &index);
    let p_bound = cs.probability_bound();
    let mut values: Vec<u32> = (0..cs.num_variables())
        .map(|v| cs.sampler(v).sample(rng))
        .collect();
    cs.reset(&values);

    let nc = cs.num_constraints();
    let mut violated = vec![false; nc];
    let mut heap = BinaryHeap::new();
    for c in 0..nc {
        if cs.is_violated(c, &values) {
            violated[c] = true;
            heap.push(Reverse(c as u32));
        }
    }
    let mut stamp = vec![0u32; nc];
    let mut epoch = 0u32;
    let mut resamples = 0u64;
    let mut touched = Vec::new();
    let mut interrupted = false;
    let mut frozen = false;
    let converged = loop {
        let next = loop {
            match heap.pop() {
                Some(Reverse(c)) if violated[c as usize] => break Some(c as usize),
                Some(_) => continue,
                None => break None,
            }
        };
        let Some(c) = next else {
            // Final full pass from freshly recomputed state.
            cs.reset(&values);
            let mut clean = true;
            for c in 0..nc {
                if cs.is_violated(c, &values) {
                    clean = false;
                    violated[c] = true;
                    heap.push(Reverse(c as u32));
                }
            }
            if clean {
                break true;
            }
            continue;
        };
        if resamples >= budget {
            break false;
        }
        if resamples % 256 == 255 && !keep_going(resamples) {
            interrupted = true;
            break false;
        }
        let vars: Vec<usize> = cs.scope(cs.scope_of(c)).to_vec();
        if vars.iter().all(|&v| cs.sampler(v).domain_size() <= 1) {
            // Resampling cannot change anything.
            frozen = true;
            break false;
        }
        resamples += 1;
        violated[c] = false;
        for &v in &vars {
            values[v] = cs.sampler(v).sample(rng);
        }
        cs.refresh(&values, &vars);
        epoch = epoch.wrapping_add(1);
        if epoch == 0 {
            stamp.iter_mut().for_each(|s| *s = 0);
            epoch = 1;
        }
        touched.clear();
        for &v in &vars {
            for &s in &index.var_scopes[v] {
                for &c2 in &index.scope_members[s as usize] {
                    if stamp[c2 as usize] != epoch {
                        stamp[c2 as usize] = epoch;
                        touched.push(c2 as usize);
                    }
                }
            }
        }
        for &c2 in &touched {
            let now = cs.is_violated(c2, &values);
            if now && !violated[c2] {
                heap.push(Reverse(c2 as u32));
            }
            violated[c2] = now;
        }
    };
    let lll_condition_met = p_bound.is_some_and(|p| lll_condition(p, d_bound));
    Solve {
        values,
        stats: SolveStats {
            resample_count: resamples,
            budget,
            converged,
            p_bound,
            d_bound,
            d_exact,
            lll_condition_met,
            interrupted,
            frozen,
        },
    }
}

/// `e · p · (d + 1) < 1`.
pub fn lll_condition(p: f64, d: usize) -> bool {
    core::f64::consts::E * p * (d as f64 + 1.0) < 1.0
}

/// Scope-pair work above which the generic degree scan reports an upper bound.
pub const EXACT_DEGREE_WORK: u64 = 200_000_000;

/// Largest number of other constraints sharing a variable with one
/// constraint, and whether it is exact.
pub fn dependency_degree<C: Csp + ?Sized>(cs: &C) -> (usize, bool) {
    dependency_degree_with(cs, &build_index(cs))
}

fn dependency_degree_with<C: Csp + ?Sized>(cs: &C, index: &Index) -> (usize, bool) {
    if let Some(d) = cs.dependency_degrees() {
        return (d.into_iter().max().unwrap_or(0), true);
    }
    let live: Vec<usize> = (0..cs.num_scopes())
        .filter(|&s| !index.scope_members[s].is_empty())
        .collect();
    let count = |s: usize| index.scope_members[s].len();
    let work: u64 = live
        .iter()
        .flat_map(|&s| cs.scope(s).iter())
        .map(|&v| index.var_scopes[v].len() as u64)
        .sum();
    if work > EXACT_DEGREE_WORK {
        // Union bound over the variables of each scope.
        let per_var: Vec<usize> = index
            .var_scopes
            .iter()
            .map(|ss| ss.iter().map(|&s| count(s as usize)).sum())
            .collect();
        let d = live
            .iter()
            .map(|&s| {
                let vars = cs.scope(s);
                let sum: usize = vars.iter().map(|&v| per_var[v]).sum();
                // Same-scope constraints are counted once per variable.
                sum.saturating_sub(vars.len().saturating_sub(1) * count(s))
                    .saturating_sub(1)
            })
            .max()
            .unwrap_or(0);
        return (d, false);
    }
    let mut stamp = vec![usize::MAX; cs.num_scopes()];
    let mut best = 0;
    for &s in &live {
        let mut total = 0;
        for &v in cs.scope(s) {
            for &s2 in &index.var_scopes[v] {
                if stamp[s2 as usize] != s {
                    stamp[s2 as usize] = s;
                    total += count(s2 as usize);
                }
            }
        }
        // A scope with no variables shares nothing, not even with itself.
        if cs.scope(s).is_empty() {
            total = count(s);
        }
        best = best.max(total - 1);
    }
    (best, true)
}

/// How `p(B)` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProbabilityEstimator {
    /// Use the system's analytic bound when present, else Monte Carlo.
    Auto {
        samples: u32,
        seed: u64,
    },
    MonteCarlo {
        samples: u32,
        seed: u64,
    },
}

/// Estimated LLL parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LllParams {
    pub p_bound: f64,
    /// `"analytic"`, `"monte-carlo"` or `"empty"`.
    pub p_source: String,
    pub samples: u32,
    /// Binomial standard error of the Monte Carlo maximum, 0 when analytic.
    pub p_std_error: f64,
    pub d_bound: usize,
    pub d_exact: bool,
    pub lll_condition_met: bool,
}

/// Computes `p(B)`, `d(B)` and the condition `e·p·(d+1) < 1`.
pub fn estimate_lll_params<C: Csp + ?Sized>(cs: &mut C, est: ProbabilityEstimator) -> LllParams {
    let (d_bound, d_exact) = dependency_degree(cs);
    if cs.num_constraints() == 0 {
        return LllParams {
            p_bound: 0.0,
            p_source: "empty".into(),
            samples: 0,
            p_std_error: 0.0,
            d_bound,
            d_exact,
            lll_condition_met: true,
        };
    }
    let (samples, seed, analytic) = match est {
        ProbabilityEstimator::Auto { samples, seed } => (samples, seed, cs.probability_bound()),
        ProbabilityEstimator::MonteCarlo { samples, seed } => (samples, seed, None),
    };
    let (p_bound, p_source, samples, p_std_error) = match analytic {
        Some(p) => (p, "analytic", 0, 0.0),
        None => {
            let mut rng = rng::stream(seed, &[rng::SAMPLE]);
            let mut hits = vec![0u32; cs.num_constraints()];
            let mut values = vec![0u32; cs.num_variables()];
            for _ in 0..samples {
                for (v, x) in values.iter_mut().enumerate() {
                    *x = cs.sampler(v).sample(&mut rng);
                }
                cs.reset(&values);
                for (c, h) in hits.iter_mut().enumerate() {
                    *h += cs.is_violated(c, &values) as u32;
                }
            }
            let max = hits.iter().copied().max().unwrap_or(0);
            let p = if samples == 0 {
                1.0
            } else {
                max as f64 / samples as f64
            };
            let se = if samples == 0 {
                0.0
            } else {
                libm::sqrt(p * (1.0 - p) / samples as f64)
            };
            (p, "monte-carlo", samples, se)
        }
    };
    LllParams {
        p_bound,
        p_source: p_source.into(),
        samples,
        p_std_error,
        d_bound,
        d_exact,
        lll_condition_met: lll_condition(p_bound, d_bound),
    }
}
