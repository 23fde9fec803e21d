//! Shared helpers for unit tests.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::Rng;

use crate::embedding::{EventRecord, Particle, N_SITES};

/// A random valid event: every slot is either populated with in-range
/// kinematics or zero-padded.
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
