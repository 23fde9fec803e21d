//! Cross-route equivalence: the step executor, the chain reference, the
//! dense brute-force oracle and the flattened-cascade route must all
//! agree wherever they overlap.

mod common;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{random_event, random_unit_inputs, randomize_weights};
use tn_trigger::contraction::{plan_csmpo, plan_model, plan_smpo};
use tn_trigger::embedding::{embed, identity_ordering};
use tn_trigger::executor::{execute_plan, run_plan, FloatArith};
use tn_trigger::model::{
    flatten_cascade, new_cascade, new_csmpo, new_smpo, reference_model, ARCH_CSMPO_19_2_1,
    ARCH_CSMPO_19_7_1, ARCH_SMPO_19_1,
};
use tn_trigger::quantization::{
    execute_plan_fixed, FixedPointFormat, Overflow, QuantConfig, Rounding,
};
use tn_trigger::reference::{chain_norm_sq, dense_norm_sq};
use tn_trigger::tensor::DenseTensor;
use tn_trigger::model::TnModel;

fn mps_inputs(mps: &tn_trigger::embedding::EmbeddedMps) -> Vec<Vec<f64>> {
    mps.sites.iter().map(|s| s.values.to_vec()).collect()
}

/// Scale all site tensors so random-event squared norms land near
/// `target` (the output is linear in every site tensor).
fn rescale_model(model: &mut TnModel, target: f64, seed: u64) {
    let plan = plan_model(model).unwrap();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut mean = 0.0;
    for _ in 0..50 {
        let event = random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        mean += execute_plan(&plan, model, &mps).unwrap();
    }
    mean /= 50.0;
    let sites: usize = model.layers.iter().map(|l| l.n_sites()).sum();
    let factor = (target / mean).powf(1.0 / (2.0 * sites as f64));
    for layer in &mut model.layers {
        for s in 0..layer.n_sites() {
            for w in layer.site_mut(s).data_mut() {
                *w *= factor;
            }
        }
    }
}

#[test]
fn full_scale_smpo_plan_matches_chain_reference() {
    let model = reference_model(ARCH_SMPO_19_1, 5).unwrap();
    let plan = plan_smpo(&model.layers[0]).unwrap();
    let mut rng = StdRng::seed_from_u64(1);
    for _ in 0..500 {
        let event = random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let a = execute_plan(&plan, &model, &mps).unwrap();
        let b = chain_norm_sq(&model, &mps_inputs(&mps)).unwrap();
        assert!(
            (a - b).abs() < 1e-10 * (1.0 + b.abs()),
            "plan {a} vs chain {b}"
        );
    }
}

#[test]
fn full_scale_cascade_plans_match_chain_reference() {
    let mut rng = StdRng::seed_from_u64(2);
    for arch in [ARCH_CSMPO_19_7_1, ARCH_CSMPO_19_2_1] {
        let model = reference_model(arch, 9).unwrap();
        let plan = plan_csmpo(&model).unwrap();
        for _ in 0..300 {
            let event = random_event(&mut rng);
            let mps = embed(&event, &identity_ordering()).unwrap();
            let a = execute_plan(&plan, &model, &mps).unwrap();
            let b = chain_norm_sq(&model, &mps_inputs(&mps)).unwrap();
            assert!(
                (a - b).abs() < 1e-10 * (1.0 + b.abs()),
                "{arch}: plan {a} vs chain {b}"
            );
        }
    }
}

#[test]
fn small_random_plans_match_dense_oracle_via_events() {
    // 5-site layers driven by real embedded events restricted to the
    // first five sites
    let mut rng = StdRng::seed_from_u64(3);
    for trial in 0..30 {
        let layer = new_smpo(5, &[rng.gen_range(0..5)], 2, 3, 3, trial).unwrap();
        let mut model = TnModel::single(layer, "rand-5").unwrap();
        randomize_weights(&mut model, &mut rng);
        let plan = plan_smpo(&model.layers[0]).unwrap();
        let event = random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let inputs: Vec<Vec<f64>> = mps_inputs(&mps).into_iter().take(5).collect();
        let mut arith = FloatArith::default();
        let a = run_plan(&plan, &model, &inputs, &mut arith).unwrap().value;
        let b = dense_norm_sq(&model, &inputs).unwrap();
        assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn identity_second_layer_flattens_to_first_layer() {
    // L1 reduces 19 -> 1; L2 is a single-site identity map, so the
    // flattened cascade must equal L1 exactly
    let l1 = new_smpo(19, &[9], 3, 3, 3, 4).unwrap();
    let mut l2 = new_smpo(1, &[0], 1, 3, 3, 4).unwrap();
    let mut eye = DenseTensor::zeros(&[3, 3, 1, 1]);
    for p in 0..3 {
        eye.set(&[p, p, 0, 0], 1.0);
    }
    *l2.site_mut(0) = eye;
    let cascade = TnModel::cascade(l1.clone(), l2, "19-1-1").unwrap();
    let flat = flatten_cascade(&cascade).unwrap();
    assert_eq!(flat.bond(), l1.bond());

    let single = TnModel::single(l1, "19-1").unwrap();
    let flat_model = TnModel::single(flat, "19-1-flat").unwrap();
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..50 {
        let event = random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let a = chain_norm_sq(&single, &mps_inputs(&mps)).unwrap();
        let b = chain_norm_sq(&flat_model, &mps_inputs(&mps)).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn random_small_cascades_flatten_to_equivalent_single_layer() {
    let mut rng = StdRng::seed_from_u64(6);
    for trial in 0..40 {
        let n = rng.gen_range(4..=6);
        let mid = rng.gen_range(1..n - 1);
        let outputs = [0, mid, n - 1];
        let l2_out = rng.gen_range(0..3);
        let mut model =
            new_cascade(n, &outputs, l2_out, 2, 2, 3, 2, 3, trial, "c5").unwrap();
        randomize_weights(&mut model, &mut rng);
        let flat = flatten_cascade(&model).unwrap();
        let flat_model = TnModel::single(flat, "flat").unwrap();
        let inputs = random_unit_inputs(&mut rng, n, 3);
        let a = dense_norm_sq(&model, &inputs).unwrap();
        let b = dense_norm_sq(&flat_model, &inputs).unwrap();
        let c = chain_norm_sq(&flat_model, &inputs).unwrap();
        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "trial {trial}: {a} vs {b}");
        assert!((b - c).abs() < 1e-10 * (1.0 + b.abs()), "trial {trial}: {b} vs {c}");
    }
}

#[test]
fn wide_fixed_point_tracks_float_reference() {
    // a 32-bit compute format against the float reference, on a model
    // scaled into the trained operating range; nearest rounding avoids
    // the one-sided truncation drift compounding across the 19 sites
    let mut model = reference_model(ARCH_SMPO_19_1, 11).unwrap();
    rescale_model(&mut model, 12.0, 100);
    let plan = plan_model(&model).unwrap();
    let qc = QuantConfig {
        compute: FixedPointFormat::new(32, 8, Rounding::RoundNearest, Overflow::Wrap).unwrap(),
        norm: FixedPointFormat::new(40, 9, Rounding::RoundNearest, Overflow::Saturate).unwrap(),
        ..QuantConfig::default()
    };
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let event = random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let float = execute_plan(&plan, &model, &mps).unwrap();
        let fixed = execute_plan_fixed(&plan, &model, &mps, &qc).unwrap();
        worst = worst.max((float - fixed.value).abs());
        assert!(
            (float - fixed.value).abs() < 1e-4,
            "float {float} vs fixed {}",
            fixed.value
        );
    }
    println!("max |float - 32-bit fixed| over 1000 events: {worst:.3e}");
}

#[test]
fn zero_inputs_give_exactly_zero_in_any_format() {
    let model = reference_model(ARCH_SMPO_19_1, 13).unwrap();
    let plan = plan_model(&model).unwrap();
    let zeros: Vec<Vec<f64>> = vec![vec![0.0; 3]; 19];
    for w in [12u32, 16, 24, 32] {
        let qc = QuantConfig {
            compute: FixedPointFormat::new(w, 6, Rounding::TruncateTowardNegInf, Overflow::Wrap)
                .unwrap(),
            ..QuantConfig::default()
        };
        let mut arith = tn_trigger::quantization::FixedArith::new(qc);
        let out = run_plan(&plan, &model, &zeros, &mut arith).unwrap();
        assert_eq!(out.value, 0.0);
    }
}

#[test]
fn per_mac_requant_mode_executes_and_stays_on_grid() {
    let mut model = reference_model(ARCH_SMPO_19_1, 17).unwrap();
    rescale_model(&mut model, 30.0, 200);
    let plan = plan_model(&model).unwrap();
    let qc = QuantConfig {
        requant: tn_trigger::quantization::RequantMode::PerMac,
        ..QuantConfig::default()
    };
    let resolution = 2f64.powi(-8);
    let mut rng = StdRng::seed_from_u64(8);
    for _ in 0..200 {
        let event = random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let out = execute_plan_fixed(&plan, &model, &mps, &qc).unwrap();
        assert_eq!((out.value / resolution).fract(), 0.0);
        assert!(out.value <= 128.0 - resolution);
    }
}

#[test]
fn csmpo_19_2_1_flatten_matches_plan_execution() {
    let mut model = new_csmpo(ARCH_CSMPO_19_2_1, 2, 2, 3, 23).unwrap();
    rescale_model(&mut model, 50.0, 300);
    let flat = flatten_cascade(&model).unwrap();
    let flat_model = TnModel::single(flat, "flat").unwrap();
    let cascade_plan = plan_csmpo(&model).unwrap();
    let flat_plan = plan_smpo(&flat_model.layers[0]).unwrap();
    let mut rng = StdRng::seed_from_u64(24);
    for _ in 0..200 {
        let event = random_event(&mut rng);
        let mps = embed(&event, &identity_ordering()).unwrap();
        let a = execute_plan(&cascade_plan, &model, &mps).unwrap();
        let b = execute_plan(&flat_plan, &flat_model, &mps).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
