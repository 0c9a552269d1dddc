use qfi_lab::estimators::{estimate_moment, variance_pure, MomentRequest};
use qfi_lab::exact::{apply_channel, build_jg_density, exact_moment, pure_variance};
use qfi_lab::sampler::{run_chain, tv_distance, SamplePool, SamplerConfig, TV_THRESHOLD};
use qfi_lab::{ChannelSpec, JastrowModel, OperatorSpec};

/// Agreement threshold for Monte Carlo against exact values, in standard errors.
const N_SIGMA: f64 = 4.0;
const TUPLES: usize = 40_000;

fn chain(len: usize, alpha: f64, m: usize, seed: u64) -> (JastrowModel, SamplePool) {
    let model = JastrowModel::half_filled(len, alpha).unwrap();
    let pool = run_chain(&model, &SamplerConfig::new(len, m, seed)).unwrap();
    (model, pool)
}

fn within(value: f64, err: f64, target: f64) -> bool {
    (value - target).abs() <= N_SIGMA * err + 1e-12
}

#[test]
fn chains_converge_in_total_variation() {
    for alpha in [-5.0, 1.0, 3.0, 10.0] {
        let (model, pool) = chain(10, alpha, 200_000, 7);
        let tv = tv_distance(&pool, &model).unwrap();
        assert!(tv < TV_THRESHOLD, "α={alpha}: TV {tv}");
        assert!(pool.acceptance_rate() > 0.0);
    }
}

#[test]
fn samples_stay_half_filled() {
    for (len, alpha) in [(8, 1.0), (14, -5.0), (30, 3.0)] {
        let (_, pool) = chain(len, alpha, 20_000, 3);
        assert_eq!(pool.len(), 20_000);
        assert!(pool.bits().iter().all(|b| b.count_ones() as usize == len / 2 && b >> len == 0));
    }
}

#[test]
fn same_seed_same_pool_and_chain_count_is_statistically_neutral() {
    let (model, a) = chain(12, 1.0, 100_000, 11);
    let (_, b) = chain(12, 1.0, 100_000, 11);
    assert_eq!(a.bits(), b.bits());

    let mut cfg = SamplerConfig::new(12, 100_000, 12);
    cfg.n_chains = 10;
    cfg.n_blocks = 10;
    let c = run_chain(&model, &cfg).unwrap();
    assert_eq!(c.n_chains(), 10);
    let exact = pure_variance(&build_jg_density(&model).unwrap(), &OperatorSpec::oz()).unwrap();
    for pool in [&a, &c] {
        let v = variance_pure(pool, &model, &OperatorSpec::oz()).unwrap();
        assert!(within(v.value, v.std_error, exact), "{} ± {} vs {exact}", v.value, v.std_error);
    }
}

#[test]
fn monte_carlo_moments_match_exact_traces() {
    let (model, pool) = chain(8, 1.0, 400_000, 5);
    let pure = build_jg_density(&model).unwrap();
    let cases = [
        (ChannelSpec::dephasing(0.2), OperatorSpec::oz()),
        (ChannelSpec::dephasing(0.2), OperatorSpec::ox()),
        (ChannelSpec::damping(0.1), OperatorSpec::oz()),
        (ChannelSpec::depolarizing(0.3), OperatorSpec::ostar()),
    ];
    for (channel, op) in cases {
        let rho = apply_channel(&pure, &channel).unwrap();
        for (r, s) in [(1, 1), (2, 1), (1, 2), (3, 1)] {
            let req = MomentRequest::new(r, s, channel, op.clone(), TUPLES, 100 + r as u64 * 10 + s as u64);
            let mc = estimate_moment(&req, &pool, &model).unwrap();
            let ex = exact_moment(&rho, &op, r, s).unwrap();
            assert!(within(mc.value, mc.std_error, ex), "{channel:?} {:?} ({r},{s}): {} ± {} vs {ex}", op.kind, mc.value, mc.std_error);
        }
    }
}

#[test]
fn swapped_powers_agree() {
    let (model, pool) = chain(8, 3.0, 200_000, 9);
    let channel = ChannelSpec::dephasing(0.1);
    for (r, s) in [(2, 1), (3, 1), (3, 2)] {
        let a = estimate_moment(&MomentRequest::new(r, s, channel, OperatorSpec::oz(), TUPLES, 1), &pool, &model).unwrap();
        let b = estimate_moment(&MomentRequest::new(s, r, channel, OperatorSpec::oz(), TUPLES, 2), &pool, &model).unwrap();
        let err = a.std_error.hypot(b.std_error);
        assert!((a.value - b.value).abs() <= N_SIGMA * err, "({r},{s}): {} vs {}", a.value, b.value);
    }
}

#[test]
fn noiseless_diagonal_moments_reduce_to_the_pure_mean() {
    // For a pure state ρ^r = ρ, so Tr(ρ^r O ρ^s O) = ⟨O⟩² and Tr(ρ^r O²) = ⟨O²⟩.
    let (model, pool) = chain(8, 1.0, 200_000, 13);
    let pure = build_jg_density(&model).unwrap();
    for op in [OperatorSpec::oz(), OperatorSpec::ostar()] {
        let mean_sq = exact_moment(&pure, &op, 1, 1).unwrap();
        let second = exact_moment(&pure, &op, 1, 0).unwrap();
        for (r, s, target) in [(1, 1, mean_sq), (3, 2, mean_sq), (2, 0, second), (4, 0, second)] {
            let mc = estimate_moment(&MomentRequest::new(r, s, ChannelSpec::dephasing(0.0), op.clone(), TUPLES, 3), &pool, &model).unwrap();
            assert!(within(mc.value, mc.std_error, target), "{:?} ({r},{s}): {} ± {} vs {target}", op.kind, mc.value, mc.std_error);
        }
    }
}
