//! Shared helpers for the integration test suites. Test inputs are drawn
//! from a fixed-seed SplitMix64 stream so every run sees identical cases.

use cpd::smallmat::Vec3;
use cpd::ParticleState;

pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn vec3(&mut self, lo: f64, hi: f64) -> Vec3 {
        Vec3::new(
            self.uniform(lo, hi),
            self.uniform(lo, hi),
            self.uniform(lo, hi),
        )
    }

    /// Unit vector, rejection-sampled away from the degenerate origin.
    pub fn unit_vec3(&mut self) -> Vec3 {
        loop {
            let v = self.vec3(-1.0, 1.0);
            let n = v.norm();
            if n > 1e-2 {
                return v * (1.0 / n);
            }
        }
    }
}

/// Relative distance between two phase-space states.
pub fn rel_diff(a: &ParticleState, b: &ParticleState) -> f64 {
    let scale = (b.x.norm() + b.v.norm()).max(1e-30);
    ((a.x - b.x).norm() + (a.v - b.v).norm()) / scale
}

/// A random state near a problem anchor: position jitter small enough to
/// stay clear of the Coulomb cores, velocity of order one.
pub fn jittered_state(rng: &mut TestRng, anchor_x: Vec3) -> ParticleState {
    ParticleState::new(anchor_x + rng.vec3(-0.1, 0.1), rng.vec3(-1.0, 1.0), 0.0)
}
