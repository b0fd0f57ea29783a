#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twosex::{Control, Field, Grid, SpaceTime};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(g: &Grid, rng: &mut ChaCha8Rng) -> Field {
    Field::from_fn(g, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_control(g: &Grid, rng: &mut ChaCha8Rng) -> Control {
    let mut c = Control::from_fn(g, |_, _, _| rng.gen_range(-1.0..1.0));
    c.slices[0] = Field::zeros(g);
    c
}

pub fn random_profile(g: &Grid, rng: &mut ChaCha8Rng) -> SpaceTime {
    SpaceTime::from_fn(g, |_, _| rng.gen_range(0.0..2.0))
}

/// `sin(pi x)` times a `sin^2` age bump of half-width 0.2 around `c`.
pub fn bump(g: &Grid, c: f64) -> Field {
    Field::from_fn(g, |x, a| {
        (std::f64::consts::PI * x).sin() * twosex::obslab::bump(a, c - 0.2, c + 0.2)
    })
}
