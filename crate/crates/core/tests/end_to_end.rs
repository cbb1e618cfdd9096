use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnnfp::evaluation::{evaluate, integral_table};
use tnnfp::problem::ExactSolution;
use tnnfp::training::{build_batch, residual_sum, sample_uniform, train};
use tnnfp::{BenchmarkId, Checkpoint, DensityModel, Domain, RbfKind, TffnF64, TrainConfig, TrainState, TrbfnF32, TrbfnF64};

#[test]
fn gibbs_densities_are_stationary() {
    for b in BenchmarkId::ALL {
        let domain = b.reference_domain();
        let exact = ExactSolution::new(b, &domain).unwrap();
        let (potential, problem, d) = (b.potential(), b.problem(), b.dim());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for x in sample_uniform(&domain, 200, &mut rng).chunks(d) {
            // p = e^{-H}/Z, ∇p = -p∇H, ∇²p = p(∇H∇Hᵀ - ∇²H)
            let p = exact.density(x);
            let (_, gh, hh) = potential.derivatives(x);
            let grad: Vec<f64> = gh.iter().map(|g| -p * g).collect();
            let hess: Vec<f64> = (0..d * d).map(|ab| p * (gh[ab / d] * gh[ab % d] - hh[ab])).collect();
            let r = problem.coefficients(x).apply(p, &grad, &hess);
            assert!(r.abs() <= 1e-10 * p.max(1.0), "{b} at {x:?}: residual {r}");
        }
    }
}

#[test]
fn exact_solution_integrates_to_one_on_its_box() {
    let b = BenchmarkId::Ring2D;
    let domain = b.reference_domain();
    let exact = ExactSolution::new(b, &domain).unwrap();
    // midpoint rule on a fine grid
    let n = 800;
    let (lo, hi) = (domain.lower_corner(), domain.upper_corner());
    let (hx, hy) = ((hi[0] - lo[0]) / n as f64, (hi[1] - lo[1]) / n as f64);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += exact.density(&[lo[0] + (i as f64 + 0.5) * hx, lo[1] + (j as f64 + 0.5) * hy]);
        }
    }
    assert!((total * hx * hy - 1.0).abs() < 1e-5, "{}", total * hx * hy);
}

fn short_config(epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig { epochs, batch_size: 256, seed: 17, ..Default::default() };
    cfg.schedule.total_steps = 400;
    cfg
}

fn ring_trbfn() -> TrbfnF64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kinds = vec![RbfKind::Wendland, RbfKind::Gaussian];
    TrbfnF64::init(12, kinds, BenchmarkId::Ring2D.reference_domain(), &mut rng).unwrap()
}

#[test]
fn training_lowers_the_residual_on_held_out_points() {
    let problem = BenchmarkId::Ring2D.problem();
    let mut model = ring_trbfn();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let held_out = build_batch(&problem, sample_uniform(model.domain(), 2000, &mut rng)).unwrap();
    let before = residual_sum(&model, &held_out).unwrap();
    let cfg = short_config(400);
    let mut state = TrainState::new(&cfg, model.num_params());
    train(&mut model, &problem, &cfg, &mut state, |_, _, _| Ok(())).unwrap();
    let after = residual_sum(&model, &held_out).unwrap();
    // early epochs mostly repair the infeasible initial bandwidths
    assert!(after < 0.5 * before, "residual {before} -> {after}");
    assert_eq!(state.epoch, 400);
}

#[test]
fn restored_checkpoint_continues_identically() {
    let problem = BenchmarkId::Ring2D.problem();
    let cfg = short_config(30);

    let mut straight = ring_trbfn();
    let mut st = TrainState::new(&cfg, straight.num_params());
    train(&mut straight, &problem, &cfg, &mut st, |_, _, _| Ok(())).unwrap();

    let mut first = ring_trbfn();
    let half = TrainConfig { epochs: 15, ..cfg.clone() };
    let mut st1 = TrainState::new(&cfg, first.num_params());
    train(&mut first, &problem, &half, &mut st1, |_, _, _| Ok(())).unwrap();
    let ck = Checkpoint::from_trbfn(&first, Some(&st1));

    let mut resumed: TrbfnF64 = ck.to_trbfn().unwrap();
    let mut st2 = ck.train_state(resumed.num_params()).unwrap().unwrap();
    train(&mut resumed, &problem, &cfg, &mut st2, |_, _, _| Ok(())).unwrap();

    assert_eq!(resumed.params(), straight.params());
    assert_eq!(st2, st);
}

#[test]
fn checkpoint_refuses_the_wrong_family_or_precision() {
    let ck = Checkpoint::from_trbfn(&ring_trbfn(), None);
    assert!(ck.to_tffn::<f64>().is_err());
    assert!(ck.to_trbfn::<f32>().is_err());
    let _: TrbfnF64 = ck.to_trbfn().unwrap();
}

#[test]
fn centered_integrals_grow_with_the_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let domain = Domain::isotropic(vec![0.1, -0.2, 0.0], 1.5).unwrap();
    let trbfn = TrbfnF32::init(5, vec![RbfKind::InverseMultiquadric, RbfKind::Wendland], domain.clone(), &mut rng).unwrap();
    let tffn = TffnF64::init(3, &[6], domain, &mut rng).unwrap();
    let radii: Vec<f64> = (0..=15).map(|k| 0.1 * k as f64).collect();
    let tables = [
        integral_table(|r| trbfn.centered_integral(r), &radii).unwrap(),
        integral_table(|r| tffn.centered_integral(r), &radii).unwrap(),
    ];
    for table in tables {
        assert_eq!(table[0].1, 0.0);
        for w in table.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12, "{w:?}");
        }
        assert!((table.last().unwrap().1 - 1.0).abs() < 1e-6);
    }
}

#[test]
fn exact_solution_scores_zero_against_itself() {
    let b = BenchmarkId::UniMode4D;
    let domain = b.reference_domain();
    let exact = ExactSolution::new(b, &domain).unwrap();
    let f = |x: &[f64]| exact.density(x);
    let gamma = Domain::isotropic(vec![0.0; 4], 1.0).unwrap();
    let report = evaluate(&f, &f, &gamma, 20_000, &[1e-2, 5e-2, 1e-1], 4).unwrap();
    assert!(report.rows.iter().all(|r| r.count > 0 && r.error == Some(0.0)));
    assert_eq!(report.l2_difference, 0.0);
}
