//! Cross-module flows: coupled bundles feeding the averaging operator and
//! the limit solvers, plus property-based invariants of the statistics
//! layer.

use emclt_core::analysis::{
    ks_two_sample, lp_norm_mc, pairwise_sum, rate_fit, strong_rate_experiment, wasserstein1,
};
use emclt_core::averaging::{holder_seminorm_values, qx_operator};
use emclt_core::limit_holder::{
    independent_wiener_matrix, solve_limit_holder, young_integral, SummationOrder, YoungPair,
};
use emclt_core::model::{DiffusionSpec, DriftSpec, ModelSpec};
use emclt_core::paths::{coarsen, sample_brownian, BrownianPath, TimeGrid};
use emclt_core::rng::Lineage;
use emclt_core::scheme::FluctuationBundle;

use proptest::prelude::*;

fn holder_model() -> ModelSpec<f64> {
    ModelSpec::new(
        1,
        vec![0.0],
        DriftSpec::holder_lacunary(0.5, 1.0).unwrap(),
        DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
        0.69,
    )
    .unwrap()
}

#[test]
fn bundle_drives_averaging_and_limit_solve() {
    // One Brownian path feeds the coupled bundle; its reference path feeds
    // the occupation derivative; the limit solver consumes both with a
    // fresh independent forcing.
    let model = holder_model();
    let grid = TimeGrid::new(64, 32).unwrap();
    let path = sample_brownian::<f64>(grid, 1, Lineage::new(1001, 0)).unwrap();
    let bundle = FluctuationBundle::build(&model, &path).unwrap();
    assert!(!bundle.w_n_diagonal_only);

    let l = qx_operator(&model.drift, &bundle.x_ref, 1.0 / 8.0).unwrap();
    // The occupation derivative is Young-integrable against the fluctuation.
    let pair = YoungPair::new(&bundle.v_n, &l.path, 0.45, 0.70).unwrap();
    let value = young_integral(&pair, 1.0).unwrap();
    assert!(value[0].is_finite());

    let w_master = Lineage::submaster(1001, 0x57);
    let w = independent_wiener_matrix::<f64>(grid, 1, Lineage::new(w_master, 0)).unwrap();
    let sol =
        solve_limit_holder(&model, &bundle.x_ref, &l, &path, &w, SummationOrder::Forward)
            .unwrap();
    assert_eq!(sol.v.value(0)[0], 0.0);
    assert!(sol.v.terminal()[0].is_finite());
    assert!(sol.l_source.contains("holder-lacunary"));
}

#[test]
fn f32_pipeline_smoke() {
    let model = ModelSpec::<f32>::new(
        1,
        vec![0.0],
        DriftSpec::smooth_tanh(1.0),
        DiffusionSpec::tanh_diag(1.0, 0.3).unwrap(),
        0.69,
    )
    .unwrap();
    let fit = strong_rate_experiment(&model, &[8, 16, 32, 64], 2.0f32, 200, 8, 9).unwrap();
    let slope = fit.slope().unwrap();
    assert!(slope < -0.2 && slope > -0.9, "f32 slope {slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn coarsen_composition_is_exact(
        seed in 0u64..1000,
        split in 0usize..3,
    ) {
        // Power-of-two coarsenings compose bit-exactly however the factor
        // is split.
        let grid = TimeGrid::new(4, 16).unwrap();
        let path = sample_brownian::<f64>(grid, 2, Lineage::new(seed, 0)).unwrap();
        let (f1, f2) = [(2usize, 8usize), (4, 4), (8, 2)][split];
        let chained = coarsen(&coarsen(&path, f1).unwrap(), f2).unwrap();
        let direct = coarsen(&path, 16).unwrap();
        prop_assert_eq!(chained.increments(), direct.increments());
        prop_assert_eq!(chained.terminal(), direct.terminal());
    }

    #[test]
    fn distance_properties(
        a in prop::collection::vec(-50.0f64..50.0, 2..40),
        b in prop::collection::vec(-50.0f64..50.0, 2..40),
    ) {
        let ks = ks_two_sample(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ks));
        let w1 = wasserstein1(&a, &b).unwrap();
        prop_assert!(w1 >= 0.0);
        // Symmetry and identity.
        prop_assert_eq!(w1, wasserstein1(&b, &a).unwrap());
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rate_fit_recovers_exact_power_laws(
        c in 0.1f64..10.0,
        q in 0.1f64..1.5,
    ) {
        let ns = [8usize, 16, 32, 64, 128];
        let errors: Vec<f64> = ns.iter().map(|&n| c * (n as f64).powf(-q)).collect();
        let fit = rate_fit(&ns, &errors, &[0.0; 5]).unwrap().fit.unwrap();
        prop_assert!((fit.slope + q).abs() < 1e-9);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lp_of_constant_is_the_constant(c in -20.0f64..20.0, p in 1.0f64..4.0) {
        let est = lp_norm_mc(|_| Ok(c), p, 32).unwrap();
        prop_assert!((est.value - c.abs()).abs() < 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn seminorm_scales_linearly_and_grows_in_gamma(
        seed in 0u64..500,
        scale in 0.1f64..10.0,
    ) {
        let grid = TimeGrid::new(8, 8).unwrap();
        let path = sample_brownian::<f64>(grid, 1, Lineage::new(seed, 3)).unwrap();
        let values = path.cumulative();
        let dt = 1.0 / 64.0;
        let base = holder_seminorm_values(&values, 1, dt, 0.4, 1.0).unwrap().value;
        let scaled_values: Vec<f64> = values.iter().map(|v| scale * v).collect();
        let scaled = holder_seminorm_values(&scaled_values, 1, dt, 0.4, 1.0).unwrap().value;
        prop_assert!((scaled - scale * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
        let higher = holder_seminorm_values(&values, 1, dt, 0.7, 1.0).unwrap().value;
        prop_assert!(higher >= base);
    }

    #[test]
    fn pairwise_sum_is_permutation_stable_enough(
        xs in prop::collection::vec(-1e3f64..1e3, 1..200),
    ) {
        let serial: f64 = xs.iter().sum();
        let tree = pairwise_sum(&xs);
        prop_assert!((serial - tree).abs() <= 1e-9 * (1.0 + serial.abs()));
    }

    #[test]
    fn young_integral_is_linear_in_the_integrand(
        seed in 0u64..500,
        a in 0.25f64..4.0,
    ) {
        let grid = TimeGrid::new(16, 1).unwrap();
        let z_path = sample_brownian::<f64>(grid, 1, Lineage::new(seed, 1)).unwrap();
        let l_path = sample_brownian::<f64>(grid, 1, Lineage::new(seed, 2)).unwrap();
        let z_vals = z_path.cumulative();
        let l = emclt_core::scheme::MatrixPath::from_values(
            grid, 1, l_path.cumulative(), emclt_core::scheme::MatrixProvenance::Derived,
        ).unwrap();
        let make = |vals: Vec<f64>| emclt_core::scheme::SamplePath::from_values(grid, 1, 16, vals).unwrap();
        let z = make(z_vals.clone());
        let za = make(z_vals.iter().map(|v| a * v).collect());
        let base = young_integral(&YoungPair::forced(&z, &l, 0.4, 0.4).unwrap(), 1.0).unwrap()[0];
        let scaled = young_integral(&YoungPair::forced(&za, &l, 0.4, 0.4).unwrap(), 1.0).unwrap()[0];
        prop_assert!((scaled - a * base).abs() <= 1e-10 * (1.0 + scaled.abs()));
    }
}

#[test]
fn area_variance_is_thread_count_invariant() {
    // The area report is a pure function of (seed, config); thread counts
    // must not leak into the numbers.
    let run = || {
        emclt_core::analysis::area_check_experiment::<f64>(2, 4, &[8, 16], 100, 32, 500, 5)
            .unwrap()
            .variances
    };
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(one, four);
}

#[test]
fn coupled_bundle_shares_one_brownian_path() {
    // Coupling invariant: the scheme inside the bundle matches the scheme
    // run standalone on the coarsened path, and the reference restricted to
    // coarse nodes is within the proxy error of the scheme.
    let model = holder_model();
    let grid = TimeGrid::new(16, 16).unwrap();
    let path = sample_brownian::<f64>(grid, 1, Lineage::new(77, 7)).unwrap();
    let bundle = FluctuationBundle::build(&model, &path).unwrap();
    let standalone =
        emclt_core::scheme::euler_maruyama(&model, &coarsen(&path, 16).unwrap(), 16).unwrap();
    for j in 0..=16 {
        let a = bundle.x_n.value(j * 16)[0];
        let b = standalone.value(j)[0];
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn brownian_path_wrapper_rejects_bad_shapes() {
    let grid = TimeGrid::new(2, 2).unwrap();
    assert!(BrownianPath::from_increments(grid, 1, Lineage::new(0, 0), vec![0.0; 3]).is_err());
    assert!(
        BrownianPath::<f64>::from_increments(grid, 0, Lineage::new(0, 0), vec![]).is_err()
    );
}
