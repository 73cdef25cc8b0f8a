//! Sample-based categorical learners.
//!
//! [`LearnerState`] runs the mixture update `η ← (1 - α) η + α Π_C target`,
//! which carries the convergence guarantees. [`KlLearnerState`] runs a
//! gradient step on `KL(Π_C target || softmax(θ))` over per-row logits; it is
//! provided for comparison only and has no convergence guarantee.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::{stochastic_target, CategoricalRdf, ReturnDistributionFunction};
use crate::error::{Error, Result};
use crate::mdp::{greedy_action, sample_transition, value_iteration, Mdp, Policy, Transition};
use crate::measures::{CategoricalDistribution, SupportGrid};
use crate::metrics::sup_cramer;
use crate::projection::project;
use crate::rng::{stream, Purpose, StreamRng};

/// Per-pair step sizes `α_n = c / (n0 + n)^ω`, `n` the visit count so far.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub c: f64,
    pub n0: f64,
    pub omega: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            c: 1.0,
            n0: 1.0,
            omega: 0.7,
        }
    }
}

impl StepSchedule {
    /// Accepts only Robbins-Monro parameters: `c > 0`, `n0 >= 1`,
    /// `ω ∈ (0.5, 1]`, and `α_0 <= 1` so every update is a mixture.
    pub fn new(c: f64, n0: f64, omega: f64) -> Result<Self> {
        let s = StepSchedule { c, n0, omega };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::parameter("c", self.c, "must be positive"));
        }
        if !(self.n0 >= 1.0 && self.n0.is_finite()) {
            return Err(Error::parameter("n0", self.n0, "must be at least 1"));
        }
        if !(self.omega > 0.5 && self.omega <= 1.0) {
            return Err(Error::parameter("omega", self.omega, "must lie in (0.5, 1]"));
        }
        if self.alpha(0) > 1.0 {
            return Err(Error::parameter("c", self.c, "first step size c / n0^omega exceeds 1"));
        }
        Ok(())
    }

    pub fn alpha(&self, visits: u64) -> f64 {
        self.c / (self.n0 + visits as f64).powf(self.omega)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    /// Bootstrap actions drawn from the policy.
    Evaluation(Policy),
    /// Bootstrap actions greedy in the current means, lowest index on ties.
    Control,
}

#[derive(Clone, Debug)]
struct Streams {
    pairs: StreamRng,
    transitions: StreamRng,
    actions: StreamRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            pairs: stream(seed, Purpose::PairSelection),
            transitions: stream(seed, Purpose::Transitions),
            actions: stream(seed, Purpose::TargetActions),
        }
    }

    /// Uniform `(x, a)`, then `(r, x')` from the kernel, then the bootstrap action.
    fn sample(&mut self, mdp: &Mdp, mode: &Mode, eta: &CategoricalRdf) -> Result<Transition> {
        let idx = self.pairs.random_range(0..mdp.n_pairs());
        let (x, a) = (idx / mdp.n_actions(), idx % mdp.n_actions());
        let (r, x_next) = sample_transition(mdp, x, a, &mut self.transitions)?;
        let a_next = match mode {
            Mode::Evaluation(pi) => pi.sample_action(x_next, &mut self.actions),
            Mode::Control => greedy_action(eta, x_next),
        };
        Ok(Transition {
            x,
            a,
            r,
            x_next,
            a_next: Some(a_next),
        })
    }
}

fn check_learner_shape(mdp: &Mdp, mode: &Mode, n_states: usize, n_actions: usize) -> Result<()> {
    if n_states != mdp.n_states() || n_actions != mdp.n_actions() {
        return Err(Error::ShapeMismatch(format!(
            "learner is {n_states}x{n_actions}, MDP is {}x{}",
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    if let Mode::Evaluation(pi) = mode {
        if pi.n_states() != n_states || pi.n_actions() != n_actions {
            return Err(Error::InvalidPolicy("policy shape does not match the MDP".into()));
        }
    }
    Ok(())
}

/// Mixture-update learner.
#[derive(Clone, Debug)]
pub struct LearnerState {
    eta: CategoricalRdf,
    visits: Vec<u64>,
    t: u64,
    mode: Mode,
    schedule: StepSchedule,
    streams: Streams,
}

impl LearnerState {
    pub fn new(eta: CategoricalRdf, mode: Mode, schedule: StepSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        let grid = eta.get(0, 0).grid().clone();
        if eta.iter().any(|d| d.grid() != &grid) {
            return Err(Error::GridMismatch);
        }
        if let Mode::Evaluation(pi) = &mode {
            if pi.n_states() != eta.n_states() || pi.n_actions() != eta.n_actions() {
                return Err(Error::InvalidPolicy("policy shape does not match the estimate".into()));
            }
        }
        Ok(LearnerState {
            visits: vec![0; eta.n_pairs()],
            eta,
            t: 0,
            mode,
            schedule,
            streams: Streams::new(seed),
        })
    }

    pub fn eta(&self) -> &CategoricalRdf {
        &self.eta
    }

    pub fn into_eta(self) -> CategoricalRdf {
        self.eta
    }

    pub fn grid(&self) -> &SupportGrid {
        self.eta.get(0, 0).grid()
    }

    pub fn visits(&self, x: usize, a: usize) -> u64 {
        self.visits[x * self.eta.n_actions() + a]
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    /// The projected target `Π_C (f_{r,γ})_# η^{(x', a')}` for a transition.
    pub fn projected_target(&self, gamma: f64, transition: &Transition) -> Result<CategoricalDistribution> {
        project(self.grid(), &stochastic_target(gamma, transition, &self.eta)?)
    }

    /// Replaces row `(x, a)` by `(1 - α) η^{(x,a)} + α target` and counts a visit.
    pub fn apply_target(&mut self, x: usize, a: usize, target: &CategoricalDistribution, alpha: f64) -> Result<()> {
        let row = self.eta.get(x, a).mix_with(target, alpha)?;
        self.eta.set(x, a, row);
        self.visits[x * self.eta.n_actions() + a] += 1;
        self.t += 1;
        Ok(())
    }

    /// One mixture update at a uniformly drawn pair; returns the transition used.
    pub fn mixture_update_step(&mut self, mdp: &Mdp) -> Result<Transition> {
        check_learner_shape(mdp, &self.mode, self.eta.n_states(), self.eta.n_actions())?;
        let tr = self.streams.sample(mdp, &self.mode, &self.eta)?;
        let target = self.projected_target(mdp.gamma(), &tr)?;
        let alpha = self.schedule.alpha(self.visits(tr.x, tr.a));
        self.apply_target(tr.x, tr.a, &target, alpha)?;
        Ok(tr)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `∇_θ KL(target || softmax(θ)) = softmax(θ) - target`.
pub fn kl_gradient(logits: &[f64], target: &[f64]) -> Vec<f64> {
    softmax(logits).iter().zip(target).map(|(p, q)| p - q).collect()
}

/// `KL(target || softmax(θ))` computed directly from the definition.
pub fn kl_objective(logits: &[f64], target: &[f64]) -> f64 {
    softmax(logits)
        .iter()
        .zip(target)
        .filter(|(_, &q)| q > 0.0)
        .map(|(p, q)| q * (q / p).ln())
        .sum()
}

/// KL-gradient learner over per-row softmax logits.
#[derive(Clone, Debug)]
pub struct KlLearnerState {
    grid: SupportGrid,
    n_actions: usize,
    logits: Vec<Vec<f64>>,
    visits: Vec<u64>,
    t: u64,
    mode: Mode,
    schedule: StepSchedule,
    streams: Streams,
}

impl KlLearnerState {
    /// All logits zero, i.e. uniform rows.
    pub fn new(
        grid: SupportGrid,
        n_states: usize,
        n_actions: usize,
        mode: Mode,
        schedule: StepSchedule,
        seed: u64,
    ) -> Result<Self> {
        schedule.validate()?;
        let n_pairs = n_states * n_actions;
        Ok(KlLearnerState {
            logits: vec![vec![0.0; grid.len()]; n_pairs],
            grid,
            n_actions,
            visits: vec![0; n_pairs],
            t: 0,
            mode,
            schedule,
            streams: Streams::new(seed),
        })
    }

    pub fn logits(&self, x: usize, a: usize) -> &[f64] {
        &self.logits[x * self.n_actions + a]
    }

    pub fn set_logits(&mut self, x: usize, a: usize, logits: Vec<f64>) -> Result<()> {
        if logits.len() != self.grid.len() || logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::parameter(
                "logits",
                logits.len(),
                "need one finite logit per grid point",
            ));
        }
        self.logits[x * self.n_actions + a] = logits;
        Ok(())
    }

    pub fn probs(&self, x: usize, a: usize) -> Vec<f64> {
        softmax(self.logits(x, a))
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Current estimate as categorical distributions.
    pub fn eta(&self) -> Result<CategoricalRdf> {
        let n_states = self.logits.len() / self.n_actions;
        let rows = self
            .logits
            .iter()
            .map(|l| CategoricalDistribution::new(self.grid.clone(), softmax(l)))
            .collect::<Result<Vec<_>>>()?;
        ReturnDistributionFunction::new(n_states, self.n_actions, rows)
    }

    /// `θ ← θ - lr (softmax(θ) - target)` on row `(x, a)`.
    pub fn apply_target(&mut self, x: usize, a: usize, target: &CategoricalDistribution, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::parameter("lr", lr, "learning rate must be positive"));
        }
        if target.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let idx = x * self.n_actions + a;
        let grad = kl_gradient(&self.logits[idx], target.probs());
        for (l, g) in self.logits[idx].iter_mut().zip(grad) {
            *l -= lr * g;
        }
        self.visits[idx] += 1;
        self.t += 1;
        Ok(())
    }

    /// One KL step at a uniformly drawn pair with `lr` from the schedule.
    pub fn kl_update_step(&mut self, mdp: &Mdp) -> Result<Transition> {
        let n_states = self.logits.len() / self.n_actions;
        check_learner_shape(mdp, &self.mode, n_states, self.n_actions)?;
        let eta = self.eta()?;
        let tr = self.streams.sample(mdp, &self.mode, &eta)?;
        let target = project(&self.grid, &stochastic_target(mdp.gamma(), &tr, &eta)?)?;
        let lr = self.schedule.alpha(self.visits[tr.x * self.n_actions + tr.a]);
        self.apply_target(tr.x, tr.a, &target, lr)?;
        Ok(tr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: u64,
    pub value: f64,
}

/// Logging stride `max(1, n_steps / 500)`.
pub fn log_stride(n_steps: u64) -> u64 {
    (n_steps / 500).max(1)
}

fn run_traced<S>(
    state: &mut S,
    n_steps: u64,
    step: impl Fn(&mut S) -> Result<()>,
    measure: impl Fn(&S) -> Result<f64>,
) -> Result<Vec<TracePoint>> {
    let stride = log_stride(n_steps);
    let mut trace = vec![TracePoint {
        t: 0,
        value: measure(state)?,
    }];
    for t in 1..=n_steps {
        step(state)?;
        if t % stride == 0 || t == n_steps {
            trace.push(TracePoint {
                t,
                value: measure(state)?,
            });
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug)]
pub struct EvaluationRun {
    pub eta: CategoricalRdf,
    /// `ℓ̄2(η_t, reference)` at the logging stride.
    pub trace: Vec<TracePoint>,
}

/// Mixture-update policy evaluation from `δ_{z_1}` everywhere.
#[allow(clippy::too_many_arguments)]
pub fn run_policy_evaluation(
    mdp: &Mdp,
    pi: &Policy,
    grid: &SupportGrid,
    schedule: StepSchedule,
    n_steps: u64,
    seed: u64,
    reference: &CategoricalRdf,
) -> Result<EvaluationRun> {
    let eta0 = CategoricalRdf::dirac(mdp.n_states(), mdp.n_actions(), grid, 0)?;
    let mut state = LearnerState::new(eta0, Mode::Evaluation(pi.clone()), schedule, seed)?;
    check_learner_shape(mdp, state.mode(), mdp.n_states(), mdp.n_actions())?;
    let trace = run_traced(
        &mut state,
        n_steps,
        |s| s.mixture_update_step(mdp).map(|_| ()),
        |s| sup_cramer(s.eta(), reference),
    )?;
    Ok(EvaluationRun {
        eta: state.into_eta(),
        trace,
    })
}

/// KL-update policy evaluation from uniform rows.
pub fn run_kl_policy_evaluation(
    mdp: &Mdp,
    pi: &Policy,
    grid: &SupportGrid,
    schedule: StepSchedule,
    n_steps: u64,
    seed: u64,
    reference: &CategoricalRdf,
) -> Result<EvaluationRun> {
    let mut state = KlLearnerState::new(
        grid.clone(),
        mdp.n_states(),
        mdp.n_actions(),
        Mode::Evaluation(pi.clone()),
        schedule,
        seed,
    )?;
    let trace = run_traced(
        &mut state,
        n_steps,
        |s| s.kl_update_step(mdp).map(|_| ()),
        |s| sup_cramer(&s.eta()?, reference),
    )?;
    Ok(EvaluationRun {
        eta: state.eta()?,
        trace,
    })
}

#[derive(Clone, Debug)]
pub struct ControlRun {
    pub eta: CategoricalRdf,
    pub greedy: Policy,
    /// `max_{(x,a)} |mean η_t^{(x,a)} - Q*(x,a)|` at the logging stride.
    pub trace: Vec<TracePoint>,
}

/// Mixture-update control (distributional Q-learning) from `δ_{z_1}` everywhere.
pub fn run_q_learning(
    mdp: &Mdp,
    grid: &SupportGrid,
    schedule: StepSchedule,
    n_steps: u64,
    seed: u64,
) -> Result<ControlRun> {
    let q_star = value_iteration(mdp, 1e-12);
    let eta0 = CategoricalRdf::dirac(mdp.n_states(), mdp.n_actions(), grid, 0)?;
    let mut state = LearnerState::new(eta0, Mode::Control, schedule, seed)?;
    let trace = run_traced(
        &mut state,
        n_steps,
        |s| s.mixture_update_step(mdp).map(|_| ()),
        |s| {
            Ok(s.eta()
                .means()
                .iter()
                .zip(q_star.values())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
        },
    )?;
    let eta = state.into_eta();
    Ok(ControlRun {
        greedy: crate::mdp::greedy_policy(&eta),
        eta,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::catalog;

    fn grid(points: &[f64]) -> SupportGrid {
        SupportGrid::new(points.to_vec()).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(1.0, 1.0, 0.7).is_ok());
        assert!(StepSchedule::new(1.0, 1.0, 0.5).is_err());
        assert!(StepSchedule::new(1.0, 1.0, 1.1).is_err());
        assert!(StepSchedule::new(0.0, 1.0, 0.7).is_err());
        assert!(StepSchedule::new(1.0, 0.5, 0.7).is_err());
        assert!(StepSchedule::new(2.0, 1.0, 0.7).is_err());
        let s = StepSchedule::default();
        assert_eq!(s.alpha(0), 1.0);
        assert!((s.alpha(1) - 2f64.powf(-0.7)).abs() < 1e-15);
        for n in 0..1000 {
            assert!(s.alpha(n + 1) < s.alpha(n) && s.alpha(n + 1) > 0.0);
        }
    }

    fn chain_learner(g: &SupportGrid) -> LearnerState {
        let eta = CategoricalRdf::dirac(2, 1, g, 0).unwrap();
        LearnerState::new(eta, Mode::Evaluation(Policy::uniform(2, 1)), StepSchedule::default(), 1).unwrap()
    }

    #[test]
    fn forced_step_sizes() {
        let g = grid(&[0.0, 1.0]);
        let target = CategoricalDistribution::dirac(g.clone(), 1).unwrap();

        let mut s = chain_learner(&g);
        s.apply_target(0, 0, &target, 1.0).unwrap();
        assert_eq!(s.eta().get(0, 0), &target);

        let mut s = chain_learner(&g);
        let before = s.eta().clone();
        s.apply_target(0, 0, &target, 0.0).unwrap();
        assert_eq!(s.eta(), &before);

        let mut s = chain_learner(&g);
        s.apply_target(0, 0, &target, 0.5).unwrap();
        assert_eq!(s.eta().get(0, 0).probs(), &[0.5, 0.5]);
        assert_eq!(s.eta().get(1, 0).probs(), &[1.0, 0.0]);
        assert_eq!(s.visits(0, 0), 1);
        assert_eq!(s.visits(1, 0), 0);
    }

    #[test]
    fn mixture_step_touches_only_the_sampled_row() {
        let mdp = catalog::three_state();
        let g = SupportGrid::uniform(0.0, 2.0, 5).unwrap();
        let eta = CategoricalRdf::dirac(3, 2, &g, 0).unwrap();
        let mut s = LearnerState::new(eta, Mode::Control, StepSchedule::default(), 4).unwrap();
        for _ in 0..200 {
            let before = s.eta().clone();
            let tr = s.mixture_update_step(&mdp).unwrap();
            for x in 0..3 {
                for a in 0..2 {
                    if (x, a) != (tr.x, tr.a) {
                        assert_eq!(s.eta().get(x, a), before.get(x, a));
                    }
                }
            }
        }
        assert_eq!(s.steps(), 200);
    }

    #[test]
    fn kl_examples() {
        let g = grid(&[0.0, 1.0]);
        let mut s = KlLearnerState::new(g.clone(), 1, 1, Mode::Control, StepSchedule::default(), 0).unwrap();
        let target = CategoricalDistribution::dirac(g.clone(), 0).unwrap();
        s.apply_target(0, 0, &target, 1.0).unwrap();
        assert_eq!(s.logits(0, 0), &[0.5, -0.5]);
        let p = s.probs(0, 0);
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p[1] - 0.268_941_421_369_995_1).abs() < 1e-12);

        let theta = [0.3, -1.2, 2.0];
        let p_hat = softmax(&theta);
        let g = kl_gradient(&theta, &p_hat);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
        assert!(kl_objective(&theta, &p_hat).abs() < 1e-15);
    }

    #[test]
    fn kl_gradient_sums_to_zero() {
        let theta = [0.1, 3.0, -2.0, 0.5];
        let target = [0.1, 0.2, 0.3, 0.4];
        assert!(kl_gradient(&theta, &target).iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn evaluation_without_steps_is_one_point() {
        let mdp = catalog::chain();
        let g = grid(&[0.0, 1.0, 2.0]);
        let reference = CategoricalRdf::new(
            2,
            1,
            vec![
                CategoricalDistribution::dirac(g.clone(), 1).unwrap(),
                CategoricalDistribution::dirac(g.clone(), 2).unwrap(),
            ],
        )
        .unwrap();
        let pi = Policy::uniform(2, 1);
        let run = run_policy_evaluation(&mdp, &pi, &g, StepSchedule::default(), 0, 3, &reference).unwrap();
        assert_eq!(run.trace.len(), 1);
        let expected = sup_cramer(&CategoricalRdf::dirac(2, 1, &g, 0).unwrap(), &reference).unwrap();
        assert_eq!(run.trace[0], TracePoint { t: 0, value: expected });
    }

    #[test]
    fn trace_stride_and_endpoint() {
        let mdp = catalog::chain();
        let g = grid(&[0.0, 1.0, 2.0]);
        let reference = CategoricalRdf::dirac(2, 1, &g, 2).unwrap();
        let pi = Policy::uniform(2, 1);
        let run = run_policy_evaluation(&mdp, &pi, &g, StepSchedule::default(), 1234, 3, &reference).unwrap();
        // stride 2: t = 0, 2, ..., 1234
        assert_eq!(run.trace.len(), 618);
        assert_eq!(run.trace.last().unwrap().t, 1234);
    }
}
