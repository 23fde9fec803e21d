//! Quantization-scan behavior on a deployment-ready model: a wide format
//! must be indistinguishable from the float reference, precision loss
//! must grow monotonically as widths shrink, and the trained model must
//! operate inside the compute format's dynamic range.
//!
//! Deployment prep mirrors hardware practice: after training, the site
//! gauge is balanced and the free global output scale is fitted to the
//! compute range (both transformations are monotone in the scores, so
//! float AUC is untouched).

use tn_trigger::contraction::plan_model;
use tn_trigger::dataset::{generate_synthetic, Dataset, SyntheticConfig};
use tn_trigger::embedding::embed;
use tn_trigger::executor::execute_plan;
use tn_trigger::model::{balance_site_gauge, reference_smpo};
use tn_trigger::quantization::{
    execute_plan_fixed, quantization_scan, FixedPointFormat, Overflow, QuantConfig, Rounding,
};
use tn_trigger::training::{train_embedded, LossParams, TrainConfig};

#[test]
fn scan_reference_row_wide_format_fidelity_and_monotonicity() {
    let cfg = SyntheticConfig {
        n_background: 12_000,
        n_anomaly: 1_500,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg, 5);
    let background = Dataset::unlabeled(data.background_events());
    let (train_set, valid_set, test_set) = background.split((0.7, 0.05, 0.25), 2).unwrap();
    let anomalies: Vec<_> = (0..data.len())
        .filter(|&i| data.label_of(i) != Dataset::BACKGROUND)
        .map(|i| data.events[i].clone())
        .collect();

    let model = reference_smpo(2);
    let embed_all = |events: &[tn_trigger::embedding::EventRecord]| -> Vec<Vec<Vec<f64>>> {
        events
            .iter()
            .map(|e| {
                embed(e, &model.ordering)
                    .unwrap()
                    .sites
                    .iter()
                    .map(|s| s.values.to_vec())
                    .collect()
            })
            .collect()
    };
    let train_cfg = TrainConfig {
        batch_size: 1024,
        max_epochs: 60,
        patience: 60,
        seed: 2,
        ..TrainConfig::default()
    };
    let report = train_embedded(
        &model,
        &embed_all(&train_set.events),
        &embed_all(&valid_set.events),
        &train_cfg,
        &LossParams::new(50.0, 25.0).unwrap(),
    )
    .unwrap();
    let mut trained = report.model;

    // deployment prep: balance the site gauge, then fit the free output
    // scale so the score distribution sits well inside the compute range
    balance_site_gauge(&mut trained);
    let range_factor = (1.5f64 / 50.0).powf(1.0 / (2.0 * 19.0));
    for s in 0..19 {
        for w in trained.layers[0].site_mut(s).data_mut() {
            *w *= range_factor;
        }
    }

    // the deployed model must stay inside the 24-bit compute range for
    // effectively every event (rare pathological events may still clip)
    let plan = plan_model(&trained).unwrap();
    let qc24 = QuantConfig {
        compute: FixedPointFormat::new(24, 6, Rounding::TruncateTowardNegInf, Overflow::Wrap)
            .unwrap(),
        ..QuantConfig::default()
    };
    let mut overflowing = 0usize;
    let mut total = 0usize;
    for event in test_set.events.iter().chain(anomalies.iter()) {
        let mps = embed(event, &trained.ordering).unwrap();
        if execute_plan_fixed(&plan, &trained, &mps, &qc24).unwrap().overflow_events > 0 {
            overflowing += 1;
        }
        total += 1;
    }
    assert!(
        (overflowing as f64) < 0.001 * total as f64,
        "{overflowing}/{total} events leave the 24-bit compute range"
    );

    let mut events = test_set.events.clone();
    let mut labels = vec![Dataset::BACKGROUND.to_string(); events.len()];
    events.extend(anomalies.iter().cloned());
    labels.extend(std::iter::repeat_n("signal-1".to_string(), anomalies.len()));
    let eval = Dataset::labeled(events, labels).unwrap();

    let formats: Vec<FixedPointFormat> = [24u32, 16, 12]
        .iter()
        .map(|&w| {
            FixedPointFormat::new(w, 6, Rounding::TruncateTowardNegInf, Overflow::Wrap).unwrap()
        })
        .collect();
    let scan = quantization_scan(&trained, &eval, &formats, &QuantConfig::default(), 1e-2).unwrap();

    // reference row present by construction with zero change
    assert_eq!(scan.rows[0].format, "float");
    assert_eq!(scan.rows[0].d_auc_pct, 0.0);
    assert_eq!(scan.rows[0].d_tpr_pct, 0.0);
    assert!(scan.rows[0].auc > 0.9, "benchmark AUC {}", scan.rows[0].auc);

    // the widest format is indistinguishable from float
    let d24 = scan.rows[1].d_auc_pct.abs();
    assert!(d24 < 0.1, "24-bit |dAUC| = {d24}%");

    // degradation grows as width shrinks (ties allowed)
    let d16 = scan.rows[2].d_auc_pct.abs();
    let d12 = scan.rows[3].d_auc_pct.abs();
    assert!(d16 + 1e-12 >= d24, "16-bit {d16}% vs 24-bit {d24}%");
    assert!(d12 + 1e-12 >= d16, "12-bit {d12}% vs 16-bit {d16}%");
    assert!(d12 + 1e-12 >= d24, "12-bit {d12}% vs 24-bit {d24}%");

    // recalibrated medians are reported per row and shift with precision
    assert!(scan.rows.iter().all(|r| r.median > 0.0));

    println!(
        "scan: float AUC {:.4}; dAUC 24/16/12-bit = {:.4}% / {:.4}% / {:.4}%",
        scan.rows[0].auc, scan.rows[1].d_auc_pct, scan.rows[2].d_auc_pct, scan.rows[3].d_auc_pct
    );

    // scores survive a median recalibration shift: per-format medians the
    // scan used must match a direct recalibration on that format's norms
    let direct: Vec<f64> = test_set
        .events
        .iter()
        .map(|e| {
            let mps = embed(e, &trained.ordering).unwrap();
            execute_plan(&plan, &trained, &mps).unwrap()
        })
        .collect();
    let cal = tn_trigger::training::ScoreCalibration::from_norms(&direct).unwrap();
    assert!((cal.median_bkg - scan.rows[0].median).abs() < 1e-12);
}
