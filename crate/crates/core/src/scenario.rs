//! Scenario files: network source, traffic, radio and timing parameters.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mobility::{spawn_trips_with_cruise, MobilityError, TripSchedule};
use crate::roadnet::{LinkId, NetError, RoadNet};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    Grid {
        rows: usize,
        cols: usize,
        link_length: f64,
        speed_limit_range: [f64; 2],
        /// Links dropped after generation, e.g. to trim a grid to a target size.
        #[serde(default)]
        remove_links: Vec<LinkId>,
        #[serde(default)]
        seed: u64,
    },
    /// Network file; relative paths resolve against the scenario file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkSource,
    pub zoi: Vec<LinkId>,
    /// Vehicles per second entering the map.
    pub arrival_rate: f64,
    /// When set, each run draws its arrival rate uniformly from this range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_rate_range: Option<[f64; 2]>,
    /// Vehicle cruise speeds in m/s; `None` drives at the speed limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cruise_speed_range: Option<[f64; 2]>,
    /// Simulated seconds per run, warm-up included.
    pub duration: f64,
    #[serde(default = "defaults::warmup")]
    pub warmup: f64,
    #[serde(default = "defaults::interval")]
    pub interval: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    /// Transmission radius in meters.
    #[serde(default = "defaults::tx")]
    pub tx: f64,
    #[serde(default = "defaults::seeding_fraction")]
    pub seeding_fraction: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "defaults::s_des")]
    pub s_des: f64,
    #[serde(default = "defaults::k")]
    pub k: f64,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

mod defaults {
    pub fn warmup() -> f64 {
        150.0
    }
    pub fn interval() -> f64 {
        3600.0
    }
    pub fn dt() -> f64 {
        1.0
    }
    pub fn tx() -> f64 {
        100.0
    }
    pub fn seeding_fraction() -> f64 {
        1.0
    }
    pub fn s_des() -> f64 {
        0.9
    }
    pub fn k() -> f64 {
        1.0
    }
}

/// Independent seed streams derived from one base seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Trips = 1,
    ArrivalRate = 2,
    Seeders = 3,
    Strategies = 4,
    Split = 5,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(mix(base) ^ stream as u64) ^ index)
}

impl Scenario {
    /// Desk-scale defaults on a 2x2 grid (12 links) with 300 s intervals.
    pub fn desk_grid() -> Self {
        Scenario {
            network: NetworkSource::Grid {
                rows: 2,
                cols: 2,
                link_length: 200.0,
                speed_limit_range: [16.67, 16.67],
                remove_links: Vec::new(),
                seed: 0,
            },
            zoi: vec![4],
            arrival_rate: 0.3,
            arrival_rate_range: None,
            cruise_speed_range: None,
            duration: 450.0,
            warmup: 150.0,
            interval: 300.0,
            dt: 1.0,
            tx: 100.0,
            seeding_fraction: 1.0,
            rng_seed: 0,
            s_des: 0.9,
            k: 1.0,
            base_dir: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let mut scenario = Self::from_json(&fs::read_to_string(path)?)?;
        scenario.base_dir = path.parent().map(Path::to_path_buf);
        Ok(scenario)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.arrival_rate) {
            return invalid(format!("arrival_rate {} must be positive", self.arrival_rate));
        }
        if let Some([lo, hi]) = self.arrival_rate_range {
            if !positive(lo) || !(lo <= hi) || !hi.is_finite() {
                return invalid(format!("arrival_rate_range [{lo}, {hi}] must satisfy 0 < min <= max"));
            }
        }
        if let Some([lo, hi]) = self.cruise_speed_range {
            if !positive(lo) || !(lo <= hi) || !hi.is_finite() {
                return invalid(format!("cruise_speed_range [{lo}, {hi}] must satisfy 0 < min <= max"));
            }
        }
        for (name, v) in [("duration", self.duration), ("interval", self.interval), ("dt", self.dt), ("tx", self.tx)] {
            if !positive(v) {
                return invalid(format!("{name} {v} must be positive"));
            }
        }
        if !(self.warmup >= 0.0) {
            return invalid(format!("warmup {} must be non-negative", self.warmup));
        }
        if !(self.seeding_fraction > 0.0 && self.seeding_fraction <= 1.0) {
            return invalid(format!("seeding_fraction {} must be in (0, 1]", self.seeding_fraction));
        }
        if !(0.0..=1.0).contains(&self.s_des) {
            return invalid(format!("s_des {} must be in [0, 1]", self.s_des));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return invalid(format!("k {} must be non-negative", self.k));
        }
        if self.zoi.is_empty() {
            return invalid("zoi must name at least one link".into());
        }
        for (name, v) in [("interval", self.interval), ("warmup", self.warmup)] {
            let ticks = v / self.dt;
            if (ticks - ticks.round()).abs() > 1e-9 {
                return invalid(format!("{name} {v} is not a whole number of dt steps"));
            }
        }
        if self.intervals() == 0 {
            return invalid(format!(
                "duration {} leaves no full interval of {} s after {} s warm-up",
                self.duration, self.interval, self.warmup
            ));
        }
        Ok(())
    }

    pub fn build_net(&self) -> Result<RoadNet, ScenarioError> {
        let net = match &self.network {
            NetworkSource::Grid { rows, cols, link_length, speed_limit_range, remove_links, seed } => {
                RoadNet::build_grid(*rows, *cols, *link_length, *speed_limit_range, *seed)?.without_links(remove_links)?
            }
            NetworkSource::File { path } => {
                let resolved = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                RoadNet::load(resolved)?
            }
        };
        Ok(net.with_zoi(self.zoi.iter().copied())?)
    }

    pub fn warmup_ticks(&self) -> usize {
        (self.warmup / self.dt).round() as usize
    }

    pub fn interval_ticks(&self) -> usize {
        (self.interval / self.dt).round() as usize
    }

    pub fn total_ticks(&self) -> usize {
        (self.duration / self.dt).floor() as usize
    }

    /// Number of complete intervals after the warm-up.
    pub fn intervals(&self) -> usize {
        self.total_ticks().saturating_sub(self.warmup_ticks()) / self.interval_ticks().max(1)
    }

    /// Arrival rate used by run `run`.
    pub fn arrival_rate_for(&self, run: u64) -> f64 {
        match self.arrival_rate_range {
            Some([lo, hi]) if lo < hi => {
                ChaCha8Rng::seed_from_u64(derive_seed(self.rng_seed, Stream::ArrivalRate, run)).gen_range(lo..=hi)
            }
            Some([lo, _]) => lo,
            None => self.arrival_rate,
        }
    }

    pub fn schedule(&self, net: &RoadNet, run: u64) -> Result<TripSchedule, ScenarioError> {
        let cruise = self.cruise_speed_range.unwrap_or([f64::INFINITY, f64::INFINITY]);
        Ok(spawn_trips_with_cruise(
            net,
            self.arrival_rate_for(run),
            self.duration,
            cruise,
            derive_seed(self.rng_seed, Stream::Trips, run),
        )?)
    }

    /// Seed for seeder-link selection in one interval of one run.
    pub fn seeder_seed(&self, run: u64, interval: usize) -> u64 {
        derive_seed(derive_seed(self.rng_seed, Stream::Seeders, run), Stream::Seeders, interval as u64)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
