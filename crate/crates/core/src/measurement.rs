//! Statistical model of the coincidence-counting apparatus.
//!
//! A measurement of a joint rectangle yields two Poisson counts over one
//! acquisition period: coincidences `C` (signal plus accidental
//! background) and accidentals `A` from a displaced window that sees the
//! background alone. Accidentals arrive as a flat Poisson process with rate
//! `S_a S_b tau`, where `S_p` is the singles rate party `p` sends through its
//! half of the rectangle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{IndexRect, RegionMass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyModel {
    Uniform,
    /// Smooth, seeded coupling variation in [0.8, 1.0].
    SmoothField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingNoise {
    Poisson,
    /// Records carry the expected counts; used for exact-rate checks.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Seconds per acquisition.
    pub acquisition_time: f64,
    /// Coincidence window width in seconds.
    pub coincidence_window: f64,
    /// Offset of the accidental window. Informational only: the flat
    /// background model does not depend on it.
    pub accidental_offset: f64,
    pub singles_rate_a: f64,
    pub singles_rate_b: f64,
    pub efficiency_model: EfficiencyModel,
    pub noise: CountingNoise,
    pub rng_seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            acquisition_time: 0.5,
            coincidence_window: 1e-9,
            accidental_offset: 2e-9,
            singles_rate_a: DEFAULT_SINGLES_RATE,
            singles_rate_b: DEFAULT_SINGLES_RATE,
            efficiency_model: EfficiencyModel::Uniform,
            noise: CountingNoise::Poisson,
            rng_seed: 0x5eed_2019,
        }
    }
}

/// Singles per second per detector. With a 1 ns window this puts roughly
/// 2,250 accidentals/s under 26,400 true coincidences/s.
pub const DEFAULT_SINGLES_RATE: f64 = 1.5e6;

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.acquisition_time.is_finite() && self.acquisition_time > 0.0) {
            return Err(Error::domain("acquisition_time must be positive"));
        }
        if !(self.coincidence_window.is_finite() && self.coincidence_window > 0.0) {
            return Err(Error::domain("coincidence_window must be positive"));
        }
        if !(self.singles_rate_a >= 0.0 && self.singles_rate_b >= 0.0)
            || !self.singles_rate_a.is_finite()
            || !self.singles_rate_b.is_finite()
        {
            return Err(Error::domain("singles rates must be non-negative"));
        }
        Ok(())
    }

    pub fn noise_free(&self) -> bool {
        self.noise == CountingNoise::Expected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// Counts in the coincidence window. Integral under Poisson noise;
    /// expectation values in noise-free mode.
    pub coincidences: f64,
    pub accidentals: f64,
    pub efficiency: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    /// True coincidences per second.
    pub coincidence: f64,
    /// Accidental coincidences per second.
    pub accidental: f64,
}

/// Expected mass of one joint distribution scaled by the total pair rate.
pub struct MeasurementChannel<'a> {
    pub mass: &'a dyn RegionMass,
    pub total_rate: f64,
}

impl<'a> MeasurementChannel<'a> {
    pub fn new(mass: &'a dyn RegionMass, total_rate: f64) -> Self {
        Self { mass, total_rate }
    }

    pub fn size(&self) -> usize {
        self.mass.size()
    }
}

pub fn expected_rates(
    channel: &MeasurementChannel<'_>,
    rect: IndexRect,
    det: &DetectorConfig,
) -> Result<ExpectedRates> {
    rect.check_within(channel.size())?;
    let coincidence = channel.total_rate * channel.mass.mass(rect);
    let singles_a = det.singles_rate_a * channel.mass.marginal_a(rect.row, rect.rows);
    let singles_b = det.singles_rate_b * channel.mass.marginal_b(rect.col, rect.cols);
    Ok(ExpectedRates {
        coincidence,
        accidental: singles_a * singles_b * det.coincidence_window,
    })
}

/// Identifies one acquisition: which tree, which node, which visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub node_id: u64,
    pub pass_index: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG for one `(seed, a, b)` triple; never shared between
/// acquisitions, so results do not depend on scan order or threading.
pub fn substream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let s = splitmix(splitmix(splitmix(seed) ^ a) ^ b.rotate_left(17));
    ChaCha8Rng::seed_from_u64(s)
}

/// Poisson draw that accepts a zero mean.
pub fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("finite positive mean").sample(rng)
    } else {
        0.0
    }
}

pub fn acquire(
    rates: ExpectedRates,
    det: &DetectorConfig,
    efficiency: f64,
    key: StreamKey,
) -> MeasurementRecord {
    let t = det.acquisition_time;
    let mean_c = efficiency * (rates.coincidence + rates.accidental) * t;
    let mean_a = efficiency * rates.accidental * t;
    let (coincidences, accidentals) = match det.noise {
        CountingNoise::Expected => (mean_c, mean_a),
        CountingNoise::Poisson => {
            let mut rng = substream(det.rng_seed, key.node_id, key.pass_index);
            (poisson_draw(&mut rng, mean_c), poisson_draw(&mut rng, mean_a))
        }
    };
    MeasurementRecord {
        coincidences,
        accidentals,
        efficiency,
        duration: t,
    }
}

/// Relative coupling efficiency of a rectangle on an `n x n` grid.
pub fn relative_efficiency(det: &DetectorConfig, rect: IndexRect, n: usize) -> f64 {
    match det.efficiency_model {
        EfficiencyModel::Uniform => 1.0,
        EfficiencyModel::SmoothField => {
            let mut rng = substream(det.rng_seed, u64::MAX, 0xeff1);
            let fu: f64 = rng.random_range(0.5..2.0);
            let fv: f64 = rng.random_range(0.5..2.0);
            let pu: f64 = rng.random();
            let pv: f64 = rng.random();
            let u = (rect.row as f64 + rect.rows as f64 / 2.0) / n as f64;
            let v = (rect.col as f64 + rect.cols as f64 / 2.0) / n as f64;
            let tau = std::f64::consts::TAU;
            0.9 + 0.05 * (tau * (fu * u + pu)).sin() + 0.05 * (tau * (fv * v + pv)).sin()
        }
    }
}
