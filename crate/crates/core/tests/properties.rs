use cdrl::bellman::{bellman_eval, projected_bellman_eval, CategoricalRdf};
use cdrl::experiments::{generate_random_mdp, random_policy};
use cdrl::measures::{pushforward_affine, CategoricalDistribution, FiniteDistribution, Measure, SupportGrid};
use cdrl::metrics::{cramer_l2, cramer_l2_squared, stochastically_dominates, sup_metric, wasserstein_p, Metric};
use cdrl::projection::{project, project_via_hats};
use cdrl::rng::{stream, Purpose};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = SupportGrid> {
    prop::collection::vec(-5.0..5.0f64, 2..9).prop_filter_map("distinct points", |mut v| {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        SupportGrid::new(v).ok()
    })
}

fn finite_strategy(lo: f64, hi: f64) -> impl Strategy<Value = FiniteDistribution> {
    prop::collection::vec((lo..=hi, 0.01..1.0f64), 1..8).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        FiniteDistribution::new(atoms.into_iter().map(|(x, m)| (x, m / total)).collect()).unwrap()
    })
}

/// Exact `∫ |F_a - F_b|^q dx` by walking the merged breakpoints.
fn cdf_integral<A: Measure, B: Measure>(a: &A, b: &B, q: i32) -> f64 {
    let mut xs: Vec<f64> = a.atoms().map(|p| p.0).chain(b.atoms().map(|p| p.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.windows(2)
        .map(|w| (a.cdf(w[0]) - b.cdf(w[0])).abs().powi(q) * (w[1] - w[0]))
        .sum()
}

/// `(∫_0^1 |F_a^{-1}(u) - F_b^{-1}(u)|^p du)^{1/p}` by midpoint quadrature.
fn quantile_oracle<A: Measure, B: Measure>(a: &A, b: &B, p: f64) -> f64 {
    let inv = |d: &dyn Fn(f64) -> f64, locs: &[f64], u: f64| {
        *locs.iter().find(|&&x| d(x) >= u).unwrap_or(locs.last().unwrap())
    };
    let mut la: Vec<f64> = a.atoms().map(|p| p.0).collect();
    let mut lb: Vec<f64> = b.atoms().map(|p| p.0).collect();
    la.sort_by(f64::total_cmp);
    lb.sort_by(f64::total_cmp);
    let n = 20_000;
    let s: f64 = (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            (inv(&|x| a.cdf(x), &la, u) - inv(&|x| b.cdf(x), &lb, u)).abs().powf(p)
        })
        .sum();
    (s / n as f64).powf(1.0 / p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cramer_matches_cdf_integral(a in finite_strategy(-3.0, 3.0), b in finite_strategy(-3.0, 3.0)) {
        prop_assert!((cramer_l2_squared(&a, &b) - cdf_integral(&a, &b, 2)).abs() < 1e-12);
    }

    #[test]
    fn w1_is_cdf_area(a in finite_strategy(-3.0, 3.0), b in finite_strategy(-3.0, 3.0)) {
        prop_assert!((wasserstein_p(&a, &b, 1.0).unwrap() - cdf_integral(&a, &b, 1)).abs() < 1e-12);
    }

    #[test]
    fn wp_matches_quantile_quadrature(
        a in finite_strategy(-3.0, 3.0),
        b in finite_strategy(-3.0, 3.0),
        p in 1.0..4.0f64,
    ) {
        // quadrature error is one mesh cell's worth of mass per breakpoint
        let exact = wasserstein_p(&a, &b, p).unwrap();
        prop_assert!((exact - quantile_oracle(&a, &b, p)).abs() < 1e-2);
    }

    #[test]
    fn metric_axioms(
        a in finite_strategy(-3.0, 3.0),
        b in finite_strategy(-3.0, 3.0),
        c in finite_strategy(-3.0, 3.0),
        p in 1.0..4.0f64,
    ) {
        for m in [Metric::Cramer, Metric::Wasserstein(p)] {
            let ab = m.distance(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!(m.distance(&a, &a).unwrap() < 1e-12);
            prop_assert!((ab - m.distance(&b, &a).unwrap()).abs() < 1e-12);
            let via = m.distance(&a, &c).unwrap() + m.distance(&c, &b).unwrap();
            prop_assert!(ab <= via + 1e-9);
        }
    }

    #[test]
    fn scaling_and_shift(a in finite_strategy(-3.0, 3.0), b in finite_strategy(-3.0, 3.0),
                         r in -2.0..2.0f64, g in 0.05..1.0f64, p in 1.0..4.0f64) {
        let (sa, sb) = (pushforward_affine(&a, r, g).unwrap(), pushforward_affine(&b, r, g).unwrap());
        let w = wasserstein_p(&a, &b, p).unwrap();
        prop_assert!((wasserstein_p(&sa, &sb, p).unwrap() - g * w).abs() < 1e-9);
        prop_assert!((cramer_l2(&sa, &sb) - g.sqrt() * cramer_l2(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn projection_preserves_mean_inside_grid(grid in grid_strategy(), seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Cases);
        let d = cdrl::experiments::random_finite(grid.min(), grid.max(), 8, &mut rng);
        let pd = project(&grid, &d).unwrap();
        prop_assert!((pd.mean() - d.mean()).abs() < 1e-10);
        prop_assert!((pd.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_and_hat_routes_agree(grid in grid_strategy(), d in finite_strategy(-6.0, 6.0)) {
        let a = project(&grid, &d).unwrap();
        let b = project_via_hats(&grid, &d).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_nonexpansive(grid in grid_strategy(), seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Cases);
        let a = cdrl::experiments::random_finite(grid.min(), grid.max(), 8, &mut rng);
        let b = cdrl::experiments::random_finite(grid.min(), grid.max(), 8, &mut rng);
        let (pa, pb) = (project(&grid, &a).unwrap(), project(&grid, &b).unwrap());
        prop_assert!(cramer_l2(&pa, &pb) <= cramer_l2(&a, &b) + 1e-10);
    }

    #[test]
    fn pythagoras(grid in grid_strategy(), seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Cases);
        let mu = cdrl::experiments::random_finite(grid.min(), grid.max(), 8, &mut rng);
        let nu = cdrl::experiments::random_categorical(&grid, true, &mut rng);
        let pmu = project(&grid, &mu).unwrap();
        let lhs = cramer_l2_squared(&mu, &nu);
        let rhs = cramer_l2_squared(&mu, &pmu) + cramer_l2_squared(&pmu, &nu);
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn projection_preserves_dominance(grid in grid_strategy(), d in finite_strategy(-6.0, 6.0), s in 0.0..2.0f64) {
        let hi = d.shifted(s);
        prop_assert!(stochastically_dominates(&hi, &d, 1e-12));
        prop_assert!(stochastically_dominates(&project(&grid, &hi).unwrap(), &project(&grid, &d).unwrap(), 1e-12));
    }

    #[test]
    fn dominance_is_a_partial_order(grid in grid_strategy(), seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Cases);
        let a = cdrl::experiments::random_categorical(&grid, true, &mut rng);
        let b = cdrl::experiments::random_categorical(&grid, true, &mut rng);
        prop_assert!(stochastically_dominates(&a, &a, 0.0));
        if stochastically_dominates(&a, &b, 0.0) && stochastically_dominates(&b, &a, 0.0) {
            prop_assert!(cramer_l2(&a, &b) < 1e-12);
        }
        let top = CategoricalDistribution::dirac(grid.clone(), grid.len() - 1).unwrap();
        let bottom = CategoricalDistribution::dirac(grid.clone(), 0).unwrap();
        prop_assert!(stochastically_dominates(&top, &a, 1e-12));
        prop_assert!(stochastically_dominates(&a, &bottom, 1e-12));
    }

    #[test]
    fn mixture_interpolates(grid in grid_strategy(), seed in any::<u64>(), alpha in 0.0..=1.0f64) {
        let mut rng = stream(seed, Purpose::Cases);
        let a = cdrl::experiments::random_categorical(&grid, false, &mut rng);
        let b = cdrl::experiments::random_categorical(&grid, false, &mut rng);
        let m = a.mix_with(&b, alpha).unwrap();
        let d = cramer_l2(&a, &b);
        prop_assert!((cramer_l2(&a, &m) - alpha * d).abs() < 1e-10);
        prop_assert!((cramer_l2(&m, &b) - (1.0 - alpha) * d).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bellman_contracts(seed in any::<u64>(), g in 0.05..0.95f64) {
        let mdp = generate_random_mdp(3, 2, &[-1.0, 0.0, 1.0], 3, g, seed).unwrap();
        let mut rng = stream(seed, Purpose::Cases);
        let pi = random_policy(3, 2, &mut rng);
        let grid = cdrl::experiments::random_grid(-4.0, 4.0, 10, &mut rng);
        let eta = cdrl::experiments::random_categorical_rdf(3, 2, &grid, &mut rng);
        let mu = cdrl::experiments::random_categorical_rdf(3, 2, &grid, &mut rng);
        for p in [1.0, 2.0, 3.0] {
            let m = Metric::Wasserstein(p);
            let before = sup_metric(&eta, &mu, m).unwrap();
            let after = sup_metric(&bellman_eval(&mdp, &pi, &eta).unwrap(), &bellman_eval(&mdp, &pi, &mu).unwrap(), m).unwrap();
            prop_assert!(after <= g * before + 1e-10);
        }
        let before = sup_metric(&eta, &mu, Metric::Cramer).unwrap();
        let after = sup_metric(
            &projected_bellman_eval(&mdp, &pi, &grid, &eta).unwrap(),
            &projected_bellman_eval(&mdp, &pi, &grid, &mu).unwrap(),
            Metric::Cramer,
        ).unwrap();
        prop_assert!(after <= g.sqrt() * before + 1e-10);
    }

    #[test]
    fn projected_eval_keeps_rows_on_grid(seed in any::<u64>()) {
        let mdp = generate_random_mdp(2, 2, &[0.0, 1.0], 2, 0.7, seed).unwrap();
        let pi = cdrl::mdp::Policy::uniform(2, 2);
        let grid = SupportGrid::uniform(0.0, 4.0, 7).unwrap();
        let eta = CategoricalRdf::dirac(2, 2, &grid, 3).unwrap();
        let out = projected_bellman_eval(&mdp, &pi, &grid, &eta).unwrap();
        for d in out.iter() {
            prop_assert_eq!(d.grid(), &grid);
            prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
        }
    }
}
