//! Finite MDPs with a discrete joint reward/next-state kernel.
//!
//! The on-disk format is JSON:
//!
//! ```json
//! { "n_states": 2, "n_actions": 1, "gamma": 0.5,
//!   "kernel": [[[{"p": 1.0, "r": 0.0, "next": 1}]],
//!              [[{"p": 1.0, "r": 1.0, "next": 1}]]],
//!   "policy": [[1.0], [1.0]] }
//! ```
//!
//! `kernel[x][a]` lists the outcomes of taking `a` in `x`; `policy` is optional.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::ReturnDistributionFunction;
use crate::error::{Error, Result};
use crate::measures::{compensated_sum, Measure, MASS_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub p: f64,
    pub r: f64,
    pub next: usize,
}

impl KernelEntry {
    pub fn new(p: f64, r: f64, next: usize) -> Self {
        KernelEntry { p, r, next }
    }
}

/// One invariant violation, located by `(x, a)` where applicable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Diagnostic {
    Shape(String),
    Gamma {
        gamma: f64,
    },
    EmptyRow {
        x: usize,
        a: usize,
    },
    NegativeProbability {
        x: usize,
        a: usize,
        entry: usize,
        p: f64,
    },
    NonFinite {
        x: usize,
        a: usize,
        entry: usize,
    },
    ProbabilitySum {
        x: usize,
        a: usize,
        sum: f64,
    },
    NextStateOutOfRange {
        x: usize,
        a: usize,
        entry: usize,
        next: usize,
        n_states: usize,
    },
    Policy {
        x: usize,
        message: String,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Shape(msg) => write!(f, "shape: {msg}"),
            Diagnostic::Gamma { gamma } => write!(f, "gamma = {gamma} is outside [0, 1)"),
            Diagnostic::EmptyRow { x, a } => write!(f, "(x={x}, a={a}): no outcomes"),
            Diagnostic::NegativeProbability { x, a, entry, p } => {
                write!(f, "(x={x}, a={a}) entry {entry}: probability {p} < 0")
            }
            Diagnostic::NonFinite { x, a, entry } => {
                write!(f, "(x={x}, a={a}) entry {entry}: non-finite probability or reward")
            }
            Diagnostic::ProbabilitySum { x, a, sum } => {
                write!(f, "(x={x}, a={a}): probabilities sum to {sum}, not 1")
            }
            Diagnostic::NextStateOutOfRange {
                x,
                a,
                entry,
                next,
                n_states,
            } => write!(
                f,
                "(x={x}, a={a}) entry {entry}: next state {next} out of range (n_states = {n_states})"
            ),
            Diagnostic::Policy { x, message } => write!(f, "policy row {x}: {message}"),
        }
    }
}

/// Unvalidated MDP document, exactly as read from disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub kernel: Vec<Vec<Vec<KernelEntry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<Vec<f64>>>,
}

impl MdpFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Converts to a validated [`Mdp`] and optional [`Policy`].
    pub fn into_mdp(self) -> Result<(Mdp, Option<Policy>)> {
        let diags = validate(&self);
        if !diags.is_empty() {
            return Err(Error::InvalidMdp(diags));
        }
        let policy = match self.policy {
            Some(rows) => Some(Policy::new(rows)?),
            None => None,
        };
        let mdp = Mdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            kernel: self.kernel,
        };
        Ok((mdp, policy))
    }
}

impl From<&Mdp> for MdpFile {
    fn from(mdp: &Mdp) -> Self {
        MdpFile {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            gamma: mdp.gamma,
            kernel: mdp.kernel.clone(),
            policy: None,
        }
    }
}

/// Every invariant violation in `doc`; empty means valid.
pub fn validate(doc: &MdpFile) -> Vec<Diagnostic> {
    let mut diags = kernel_diagnostics(doc.n_states, doc.n_actions, doc.gamma, &doc.kernel);
    if let Some(rows) = &doc.policy {
        diags.extend(policy_diagnostics(rows, Some((doc.n_states, doc.n_actions))));
    }
    diags
}

fn kernel_diagnostics(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    kernel: &[Vec<Vec<KernelEntry>>],
) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if n_states == 0 || n_actions == 0 {
        diags.push(Diagnostic::Shape(format!(
            "need at least one state and one action, got {n_states} x {n_actions}"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        diags.push(Diagnostic::Gamma { gamma });
    }
    if kernel.len() != n_states {
        diags.push(Diagnostic::Shape(format!(
            "kernel has {} state rows, expected {n_states}",
            kernel.len()
        )));
    }
    for (x, row) in kernel.iter().enumerate() {
        if row.len() != n_actions {
            diags.push(Diagnostic::Shape(format!(
                "kernel[{x}] has {} action rows, expected {n_actions}",
                row.len()
            )));
        }
        for (a, outcomes) in row.iter().enumerate() {
            if outcomes.is_empty() {
                diags.push(Diagnostic::EmptyRow { x, a });
                continue;
            }
            for (entry, e) in outcomes.iter().enumerate() {
                if !e.p.is_finite() || !e.r.is_finite() {
                    diags.push(Diagnostic::NonFinite { x, a, entry });
                } else if e.p < 0.0 {
                    diags.push(Diagnostic::NegativeProbability { x, a, entry, p: e.p });
                }
                if e.next >= n_states {
                    diags.push(Diagnostic::NextStateOutOfRange {
                        x,
                        a,
                        entry,
                        next: e.next,
                        n_states,
                    });
                }
            }
            let sum = compensated_sum(outcomes.iter().map(|e| e.p));
            if sum.is_finite() && (sum - 1.0).abs() > MASS_TOL {
                diags.push(Diagnostic::ProbabilitySum { x, a, sum });
            }
        }
    }
    diags
}

fn policy_diagnostics(rows: &[Vec<f64>], shape: Option<(usize, usize)>) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if let Some((n_states, _)) = shape {
        if rows.len() != n_states {
            diags.push(Diagnostic::Shape(format!(
                "policy has {} rows, expected {n_states}",
                rows.len()
            )));
        }
    }
    let width = shape.map(|s| s.1).or_else(|| rows.first().map(Vec::len));
    for (x, row) in rows.iter().enumerate() {
        if Some(row.len()) != width || row.is_empty() {
            diags.push(Diagnostic::Policy {
                x,
                message: format!("has {} entries, expected {}", row.len(), width.unwrap_or(0)),
            });
            continue;
        }
        if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
            diags.push(Diagnostic::Policy {
                x,
                message: format!("invalid probability {p}"),
            });
            continue;
        }
        let sum = compensated_sum(row.iter().copied());
        if (sum - 1.0).abs() > MASS_TOL {
            diags.push(Diagnostic::Policy {
                x,
                message: format!("probabilities sum to {sum}, not 1"),
            });
        }
    }
    diags
}

/// A validated finite MDP.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    kernel: Vec<Vec<Vec<KernelEntry>>>,
}

impl Mdp {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, kernel: Vec<Vec<Vec<KernelEntry>>>) -> Result<Self> {
        let diags = kernel_diagnostics(n_states, n_actions, gamma, &kernel);
        if !diags.is_empty() {
            return Err(Error::InvalidMdp(diags));
        }
        Ok(Mdp {
            n_states,
            n_actions,
            gamma,
            kernel,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn outcomes(&self, x: usize, a: usize) -> &[KernelEntry] {
        &self.kernel[x][a]
    }

    /// Same dynamics, different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, gamma, self.kernel.clone())
    }

    /// `(min r, max r)` over outcomes with positive probability.
    pub fn reward_range(&self) -> (f64, f64) {
        self.kernel
            .iter()
            .flatten()
            .flatten()
            .filter(|e| e.p > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                (lo.min(e.r), hi.max(e.r))
            })
    }

    pub fn max_abs_reward(&self) -> f64 {
        let (lo, hi) = self.reward_range();
        lo.abs().max(hi.abs())
    }

    /// Interval `[r_min, r_max] / (1 - gamma)` containing every return.
    pub fn return_range(&self) -> (f64, f64) {
        let (lo, hi) = self.reward_range();
        (lo / (1.0 - self.gamma), hi / (1.0 - self.gamma))
    }

    pub(crate) fn check_pair(&self, x: usize, a: usize) -> Result<()> {
        if x >= self.n_states {
            return Err(Error::parameter("x", x, format!("MDP has {} states", self.n_states)));
        }
        if a >= self.n_actions {
            return Err(Error::parameter("a", a, format!("MDP has {} actions", self.n_actions)));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.n_states() != self.n_states || pi.n_actions() != self.n_actions {
            return Err(Error::InvalidPolicy(format!(
                "policy is {}x{}, MDP is {}x{}",
                pi.n_states(),
                pi.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// Stationary stochastic policy `π(a | x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_actions: usize,
    probs: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidPolicy("no rows".into()));
        }
        let diags = policy_diagnostics(&rows, None);
        if let Some(d) = diags.first() {
            return Err(Error::InvalidPolicy(d.to_string()));
        }
        Ok(Policy {
            n_actions: rows[0].len(),
            probs: rows,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_actions,
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    /// Puts probability 1 on `actions[x]` in each state.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let rows = actions
            .iter()
            .map(|&a| {
                if a >= n_actions {
                    return Err(Error::InvalidPolicy(format!("action {a} out of range")));
                }
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x][a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// The action in `x` if the policy is deterministic there.
    pub fn deterministic_action(&self, x: usize) -> Option<usize> {
        let row = &self.probs[x];
        row.iter().position(|&p| p == 1.0)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        sample_index(&self.probs[x], |p| *p, rng)
    }
}

fn sample_index<T, R: Rng + ?Sized>(items: &[T], weight: impl Fn(&T) -> f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, item) in items.iter().enumerate() {
        let w = weight(item);
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// One sampled step `(x, a, r, x')`, plus the bootstrap action once chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: usize,
    pub a: usize,
    pub r: f64,
    pub x_next: usize,
    pub a_next: Option<usize>,
}

/// Draws `(r, x')` from the kernel row of `(x, a)`.
pub fn sample_transition<R: Rng + ?Sized>(mdp: &Mdp, x: usize, a: usize, rng: &mut R) -> Result<(f64, usize)> {
    mdp.check_pair(x, a)?;
    let outcomes = mdp.outcomes(x, a);
    let e = outcomes[sample_index(outcomes, |e| e.p, rng)];
    Ok((e.r, e.next))
}

/// Lowest-index action maximising the mean of `eta^{(x, ·)}`.
pub fn greedy_action<M: Measure>(eta: &ReturnDistributionFunction<M>, x: usize) -> usize {
    let mut best = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for a in 0..eta.n_actions() {
        let m = eta.get(x, a).mean();
        if m > best_mean {
            best = a;
            best_mean = m;
        }
    }
    best
}

/// Deterministic greedy policy with respect to the means of `eta`.
pub fn greedy_policy<M: Measure>(eta: &ReturnDistributionFunction<M>) -> Policy {
    let actions: Vec<usize> = (0..eta.n_states()).map(|x| greedy_action(eta, x)).collect();
    Policy::deterministic(&actions, eta.n_actions()).expect("greedy actions are in range")
}

/// Scalar action values `Q(x, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn get(&self, x: usize, a: usize) -> f64 {
        self.values[x * self.n_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states())
            .map(|x| {
                let row = &self.values[x * self.n_actions..(x + 1) * self.n_actions];
                let mut best = 0;
                for a in 1..row.len() {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }

    /// Smallest gap between the best and second-best action over states;
    /// positive iff the greedy policy is unique. Infinite for one action.
    pub fn min_action_gap(&self) -> f64 {
        (0..self.n_states())
            .map(|x| {
                let row = &self.values[x * self.n_actions..(x + 1) * self.n_actions];
                let mut sorted = row.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                if sorted.len() < 2 {
                    f64::INFINITY
                } else {
                    sorted[0] - sorted[1]
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn scalar_backup(mdp: &Mdp, v: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(mdp.n_pairs());
    for x in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            q.push(
                mdp.outcomes(x, a)
                    .iter()
                    .map(|e| e.p * (e.r + mdp.gamma * v[e.next]))
                    .sum(),
            );
        }
    }
    q
}

fn iterate_q(mdp: &Mdp, tol: f64, state_value: impl Fn(&[f64], usize) -> f64) -> QTable {
    let n_a = mdp.n_actions;
    let mut q = vec![0.0; mdp.n_pairs()];
    loop {
        let v: Vec<f64> = (0..mdp.n_states)
            .map(|x| state_value(&q[x * n_a..(x + 1) * n_a], x))
            .collect();
        let next = scalar_backup(mdp, &v);
        let delta = next.iter().zip(&q).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        q = next;
        // sup-norm error of the last iterate is at most gamma/(1-gamma) * delta
        if delta * mdp.gamma <= tol * (1.0 - mdp.gamma) || delta == 0.0 {
            break;
        }
    }
    QTable {
        n_actions: n_a,
        values: q,
    }
}

/// Optimal action values by scalar value iteration, accurate to `tol`.
pub fn value_iteration(mdp: &Mdp, tol: f64) -> QTable {
    iterate_q(mdp, tol, |row, _| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Action values of `pi` by iterative scalar policy evaluation, accurate to `tol`.
pub fn policy_q_values(mdp: &Mdp, pi: &Policy, tol: f64) -> Result<QTable> {
    mdp.check_policy(pi)?;
    Ok(iterate_q(mdp, tol, |row, x| {
        row.iter().zip(pi.row(x)).map(|(q, p)| q * p).sum()
    }))
}

/// Small MDPs used throughout tests and experiments.
pub mod catalog {
    use super::{KernelEntry, Mdp};

    /// Two states, one action, `γ = 0.5`: `s0 -(r=0)-> s1`, `s1 -(r=1)-> s1`.
    /// Returns are exactly `δ_1` from `s0` and `δ_2` from `s1`.
    pub fn chain() -> Mdp {
        Mdp::new(
            2,
            1,
            0.5,
            vec![
                vec![vec![KernelEntry::new(1.0, 0.0, 1)]],
                vec![vec![KernelEntry::new(1.0, 1.0, 1)]],
            ],
        )
        .expect("chain MDP is valid")
    }

    /// One state, two self-looping actions paying 0 and 1, `γ = 0.5`.
    pub fn bandit() -> Mdp {
        Mdp::new(
            1,
            2,
            0.5,
            vec![vec![
                vec![KernelEntry::new(1.0, 0.0, 0)],
                vec![KernelEntry::new(1.0, 1.0, 0)],
            ]],
        )
        .expect("bandit MDP is valid")
    }

    /// Three states, two actions, stochastic transitions, rewards in `{0, 1}`,
    /// `γ = 0.5`, with a unique optimal policy.
    pub fn three_state() -> Mdp {
        let e = KernelEntry::new;
        Mdp::new(
            3,
            2,
            0.5,
            vec![
                vec![vec![e(0.5, 0.0, 1), e(0.5, 1.0, 2)], vec![e(1.0, 0.0, 0)]],
                vec![vec![e(1.0, 1.0, 2)], vec![e(0.8, 0.0, 0), e(0.2, 1.0, 1)]],
                vec![vec![e(0.7, 1.0, 2), e(0.3, 0.0, 0)], vec![e(1.0, 0.0, 1)]],
            ],
        )
        .expect("three-state MDP is valid")
    }

    /// Two states, one action, rewards 0 or 1 with equal probability and a
    /// uniformly random next state, `γ = 0.5`.
    pub fn coin_flip() -> Mdp {
        let e = KernelEntry::new;
        let row = vec![vec![e(0.25, 0.0, 0), e(0.25, 1.0, 0), e(0.25, 0.0, 1), e(0.25, 1.0, 1)]];
        Mdp::new(2, 1, 0.5, vec![row.clone(), row]).expect("coin-flip MDP is valid")
    }
}
