//! Helpers shared by the integration suites.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::Rng;

use tn_trigger::embedding::{EventRecord, Particle, N_SITES};
use tn_trigger::model::TnModel;

/// A random valid event; slots are populated or zero-padded.
pub fn random_event(rng: &mut StdRng) -> EventRecord {
    let mut particles = [Particle::default(); N_SITES];
    for (i, p) in particles.iter_mut().enumerate() {
        if i == 0 || rng.gen_bool(0.6) {
            *p = Particle::new(
                rng.gen_range(0.0..800.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-PI..PI),
            );
        }
    }
    EventRecord::new(particles).unwrap()
}

/// Unit-norm random site vectors.
pub fn random_unit_inputs(rng: &mut StdRng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Replace every weight entry by a uniform draw. The default
/// noisy-identity initialization concentrates outputs near a product of
/// per-site input sums, which cancels toward zero for random inputs;
/// uniform weights keep the outputs at healthy magnitudes for
/// equivalence checks.
pub fn randomize_weights(model: &mut TnModel, rng: &mut StdRng) {
    for layer in &mut model.layers {
        for s in 0..layer.n_sites() {
            for w in layer.site_mut(s).data_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
        }
    }
}
