//! Seeded scenario generators shared by the self-test and the test suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::{make_box_basis, ModeBasis};
use crate::coupling::{build_coupling, CouplingMatrix, ReservoirKind, ReservoirProfile};
use crate::error::Result;

/// Basis plus gain and optional loss matrices.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub basis: ModeBasis,
    pub gain: CouplingMatrix,
    pub loss: Option<CouplingMatrix>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Grid size used for an `n`-mode box: odd, so Simpson weights apply.
pub fn grid_points_for(n_modes: usize) -> usize {
    (32 * n_modes).max(128) + 1
}

fn random_interval<R: Rng>(rng: &mut R, length: f64) -> (f64, f64) {
    let width = rng.random_range(0.15..0.85) * length;
    let start = rng.random_range(0.0..(length - width));
    (start, start + width)
}

/// Box of length π (so `ω_n = n`) with an interval gain profile and, when
/// `with_loss` is set, an independent interval loss profile.
pub fn random_interval_scenario<R: Rng>(
    rng: &mut R,
    n_modes: usize,
    with_loss: bool,
) -> Result<Scenario> {
    let length = std::f64::consts::PI;
    let basis = make_box_basis(n_modes, length, grid_points_for(n_modes))?;
    let (a, b) = random_interval(rng, length);
    let g = rng.random_range(0.2..1.5);
    let gain = build_coupling(
        &basis,
        &ReservoirProfile::interval(basis.grid(), a, b, g, ReservoirKind::Gain)?,
    )?;
    let loss = if with_loss {
        let (a, b) = random_interval(rng, length);
        let s = rng.random_range(0.2..1.5);
        Some(build_coupling(
            &basis,
            &ReservoirProfile::interval(basis.grid(), a, b, s, ReservoirKind::Loss)?,
        )?)
    } else {
        None
    };
    Ok(Scenario { basis, gain, loss })
}

/// Uniform gain over the whole box plus interval loss.
pub fn uniform_gain_interval_loss<R: Rng>(rng: &mut R, n_modes: usize) -> Result<Scenario> {
    let length = std::f64::consts::PI;
    let basis = make_box_basis(n_modes, length, grid_points_for(n_modes))?;
    let gain = build_coupling(
        &basis,
        &ReservoirProfile::uniform(
            basis.grid(),
            rng.random_range(0.2..1.0),
            ReservoirKind::Gain,
        )?,
    )?;
    let (a, b) = random_interval(rng, length);
    let loss = build_coupling(
        &basis,
        &ReservoirProfile::interval(
            basis.grid(),
            a,
            b,
            rng.random_range(0.2..1.0),
            ReservoirKind::Loss,
        )?,
    )?;
    Ok(Scenario {
        basis,
        gain,
        loss: Some(loss),
    })
}
