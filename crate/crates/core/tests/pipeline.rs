use hyperdisc::boundary::{mirror_curve, perturb, preset_curve, torus_knot};
use hyperdisc::intersections::{find_double_points, SearchParams};
use hyperdisc::invariants::{consistency_check, homfly_table};
use hyperdisc::network::init_params;
use hyperdisc::residual::{self, tension};
use hyperdisc::surface::SurfaceJet;
use hyperdisc::training::{self, sample_disc, TrainConfig};
use hyperdisc::{InitScheme, ModelConfig, ModelMap, Preset, SurfaceModel};
use proptest::prelude::*;

fn small_model(seed: u64) -> SurfaceModel {
    let curve = perturb(&preset_curve(Preset::Unknot), 0.1, 3, seed).unwrap();
    SurfaceModel::new(ModelConfig::standard(curve, 8, 2).unwrap()).unwrap()
}

#[test]
fn short_training_lowers_the_loss_and_leaves_an_embedded_disc() {
    let m = small_model(1);
    let init = init_params(m.arch(), InitScheme::GlorotZeroHead, 0).0;
    let cfg =
        TrainConfig { n_data: 256, batch: 64, adam_epochs: 20, n_lbfgs: 256, lbfgs_iters: 30, ..TrainConfig::desk() };
    let pool = training::lbfgs_pool(&cfg);
    let before = residual::loss(&m, &init, &pool).unwrap();
    let (params, report) = training::train(&m, &init, &cfg, &mut |_| {}).unwrap();
    assert!(report.best_loss < before);
    assert_eq!(residual::loss(&m, &params, &pool).unwrap(), report.best_loss);

    let search = SearchParams { grid_res: 64, ..SearchParams::default() };
    let rep = find_double_points(&ModelMap::new(&m, &params), &search).unwrap();
    assert!(rep.records.is_empty());
    let verdict = consistency_check(Some(rep.self_intersection), &homfly_table(&m.config().curve.label).unwrap());
    assert_eq!(verdict.to_string(), "CONSISTENT (1)");
}

#[test]
fn mirrored_torus_knot_is_looked_up_as_the_mirror() {
    let t = torus_knot(3, -2, 2.0, 0.5).unwrap();
    assert_eq!(t.label, "3_1*");
    assert_eq!(mirror_curve(&torus_knot(3, 2, 2.0, 0.5).unwrap()).label, "3_1*");
    let p = homfly_table(&t.label).unwrap();
    assert_eq!(consistency_check(Some(-1), &p).to_string(), "CONSISTENT (2a⁻²)");
    assert_eq!(consistency_check(Some(1), &p).to_string(), "NOT PREDICTED");
}

#[test]
fn loss_is_independent_of_thread_count() {
    let m = small_model(2);
    let params = init_params(m.arch(), InitScheme::GlorotZeroHead, 9).0;
    let pts = sample_disc(700, 4);
    let run = |n| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| residual::loss_and_grad(&m, &params, &pts).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1, b.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batched_residuals_match_pointwise(seed in 0u64..1000, n in 1usize..150) {
        let m = small_model(1);
        let params = init_params(m.arch(), InitScheme::GlorotZeroHead, seed).0;
        let pts = sample_disc(n, seed);
        let batch = residual::sq_norms(&m, &params, &pts).unwrap();
        for (p, b) in pts.iter().zip(&batch) {
            let single = residual::sq_norm_at(&m, &params, *p).unwrap();
            prop_assert!((single - b).abs() <= 1e-12 * single.abs().max(1e-300));
        }
        let (l, _) = residual::loss_and_grad(&m, &params, &pts).unwrap();
        let l2 = residual::loss(&m, &params, &pts).unwrap();
        prop_assert!((l - l2).abs() <= 1e-12 * l.abs());
    }

    #[test]
    fn tension_is_invariant_under_translation_and_scaling(
        seed in 0u64..1000,
        shift in prop::array::uniform3(-5.0f64..5.0),
        lam in 0.1f64..10.0,
        x in -0.6f64..0.6,
        y in -0.6f64..0.6,
    ) {
        let m = small_model(3);
        let params: Vec<f64> = init_params(m.arch(), InitScheme::GlorotZeroHead, seed).0;
        let j = m.jet_at(&params, x, y).unwrap();
        let base = tension(&j).unwrap().sq_norm;
        let moved = SurfaceJet { x: j.x, y: j.y.iter().zip(shift).map(|(c, s)| *c + s).collect() };
        let scaled = SurfaceJet { x: j.x.scale(lam), y: j.y.iter().map(|c| c.scale(lam)).collect() };
        for other in [moved, scaled] {
            let v = tension(&other).unwrap().sq_norm;
            prop_assert!((v - base).abs() <= 1e-9 * base.max(1e-300));
        }
    }

    #[test]
    fn boundary_is_the_knot(seed in 0u64..200, theta in 0.0f64..std::f64::consts::TAU) {
        let m = small_model(seed % 5 + 1);
        let params = init_params(m.arch(), InitScheme::GlorotZeroHead, seed).0;
        let h = m.evaluate(&params, theta.cos(), theta.sin()).unwrap();
        prop_assert_eq!(h.x, 0.0);
        let g = m.config().curve.eval(theta);
        for (a, b) in h.y.iter().zip(&g) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
