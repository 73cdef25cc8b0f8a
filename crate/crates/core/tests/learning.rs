use cdrl::bellman::{fixed_point, projected_bellman_eval, CategoricalRdf, Operator};
use cdrl::experiments::{generate_random_mdp, random_categorical_rdf, random_policy};
use cdrl::learning::{
    kl_gradient, run_kl_policy_evaluation, run_policy_evaluation, softmax, KlLearnerState, LearnerState, Mode,
    StepSchedule,
};
use cdrl::mdp::{catalog, Policy, Transition};
use cdrl::measures::{Measure, SupportGrid};
use cdrl::rng::{stream, Purpose};

/// Averaging the mixture update over the kernel and policy gives
/// `(1 - α) η + α Π T η` at the updated pair.
#[test]
fn expected_mixture_update_is_projected_bellman_step() {
    for seed in 0..10 {
        let mdp = generate_random_mdp(3, 2, &[0.0, 1.0, 2.0], 3, 0.6, seed).unwrap();
        let mut rng = stream(seed, Purpose::Cases);
        let pi = random_policy(3, 2, &mut rng);
        let grid = SupportGrid::uniform(0.0, 5.0, 7).unwrap();
        let eta = random_categorical_rdf(3, 2, &grid, &mut rng);
        let exact = projected_bellman_eval(&mdp, &pi, &grid, &eta).unwrap();
        let alpha = 0.3;
        for x in 0..3 {
            for a in 0..2 {
                let mut avg = vec![0.0; grid.len()];
                for e in mdp.outcomes(x, a) {
                    for (a_next, &w) in pi.row(e.next).iter().enumerate() {
                        let tr = Transition {
                            x,
                            a,
                            r: e.r,
                            x_next: e.next,
                            a_next: Some(a_next),
                        };
                        let mut s =
                            LearnerState::new(eta.clone(), Mode::Evaluation(pi.clone()), StepSchedule::default(), 0)
                                .unwrap();
                        let target = s.projected_target(mdp.gamma(), &tr).unwrap();
                        s.apply_target(x, a, &target, alpha).unwrap();
                        for (acc, p) in avg.iter_mut().zip(s.eta().get(x, a).probs()) {
                            *acc += e.p * w * p;
                        }
                    }
                }
                let want = eta.get(x, a).mix_with(exact.get(x, a), alpha).unwrap();
                for (p, q) in avg.iter().zip(want.probs()) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let mdp = catalog::three_state();
    let pi = Policy::uniform(3, 2);
    let grid = SupportGrid::uniform(0.0, 2.0, 11).unwrap();
    let eta0 = CategoricalRdf::dirac(3, 2, &grid, 0).unwrap();
    let reference = fixed_point(&mdp, Operator::Evaluation(&pi), &grid, eta0, 1e-12, 10_000)
        .unwrap()
        .eta;
    let s = StepSchedule::default();
    let a = run_policy_evaluation(&mdp, &pi, &grid, s, 2000, 5, &reference).unwrap();
    let b = run_policy_evaluation(&mdp, &pi, &grid, s, 2000, 5, &reference).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.eta, b.eta);
    let c = run_policy_evaluation(&mdp, &pi, &grid, s, 2000, 6, &reference).unwrap();
    assert_ne!(a.trace, c.trace);
    assert!(a.trace.last().unwrap().value < a.trace[0].value);
}

#[test]
fn trace_logs_start_stride_and_end() {
    let mdp = catalog::chain();
    let pi = Policy::uniform(2, 1);
    let grid = SupportGrid::uniform(0.0, 2.0, 3).unwrap();
    let reference = CategoricalRdf::dirac(2, 1, &grid, 0).unwrap();
    let run = run_policy_evaluation(&mdp, &pi, &grid, StepSchedule::default(), 1234, 0, &reference).unwrap();
    let ts: Vec<u64> = run.trace.iter().map(|p| p.t).collect();
    assert_eq!(ts[0], 0);
    assert_eq!(ts[1], 2);
    assert_eq!(*ts.last().unwrap(), 1234);
    assert_eq!(ts.len(), 1 + 617);
}

#[test]
fn kl_learner_rows_stay_valid() {
    let mdp = catalog::three_state();
    let pi = Policy::uniform(3, 2);
    let grid = SupportGrid::uniform(0.0, 2.0, 11).unwrap();
    let reference = CategoricalRdf::dirac(3, 2, &grid, 5).unwrap();
    let run = run_kl_policy_evaluation(&mdp, &pi, &grid, StepSchedule::default(), 3000, 1, &reference).unwrap();
    for d in run.eta.iter() {
        assert!(d.probs().iter().all(|&p| p > 0.0));
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn kl_step_with_unit_rate_moves_towards_target() {
    let grid = SupportGrid::uniform(0.0, 1.0, 4).unwrap();
    let mut s = KlLearnerState::new(grid.clone(), 1, 1, Mode::Control, StepSchedule::default(), 0).unwrap();
    let target = cdrl::measures::CategoricalDistribution::dirac(grid, 3).unwrap();
    let before = s.probs(0, 0)[3];
    let g = kl_gradient(s.logits(0, 0), target.probs());
    s.apply_target(0, 0, &target, 1.0).unwrap();
    let expected: Vec<f64> = [0.0; 4].iter().zip(&g).map(|(l, gi)| l - gi).collect();
    assert_eq!(s.logits(0, 0), expected.as_slice());
    assert!(s.probs(0, 0)[3] > before);
    assert_eq!(s.probs(0, 0), softmax(&expected));
}

#[test]
fn schedule_bounds() {
    assert!(StepSchedule::new(1.0, 1.0, 0.5).is_err());
    assert!(StepSchedule::new(1.0, 1.0, 1.0).is_ok());
    assert!(StepSchedule::new(2.0, 1.0, 0.7).is_err());
    let s = StepSchedule::default();
    assert_eq!(s.alpha(0), 1.0);
    assert!(s.alpha(10) < s.alpha(9));
}
