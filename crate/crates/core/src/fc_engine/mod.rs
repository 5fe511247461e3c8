//! Floating Content dynamics on top of recorded mobility.
//!
//! Each tick runs in a fixed order: vehicles move, carriers standing on links
//! outside the anchor zone drop the content, contacts are detected, seeder
//! links hand the content to a vehicle, and carriers replicate it over direct
//! contacts. Contacts do not depend on content, so mobility and contacts are
//! recorded once ([`record_mobility`]) and content is replayed over them for
//! any number of anchor-zone configurations ([`replay`], or
//! [`batch::carrier_sums`] for many configurations at once).

pub mod batch;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mobility::{Fleet, MobilityError, TripSchedule, VehicleId};
use crate::roadnet::{LinkId, Point, RoadNet};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("anchor-zone config has {got} bits, network has {expected} links")]
    ConfigLength { expected: usize, got: usize },
    #[error("invalid anchor-zone bit string: {0}")]
    BadBitString(String),
    #[error("interval {index} out of range ({available} available)")]
    NoSuchInterval { index: usize, available: usize },
    #[error(transparent)]
    Mobility(#[from] MobilityError),
}

/// One column of the anchor-zone matrix: which links replicate and store content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AzConfig {
    bits: Vec<bool>,
}

impl AzConfig {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        AzConfig { bits }
    }

    pub fn all_on(n: usize) -> Self {
        AzConfig { bits: vec![true; n] }
    }

    pub fn all_off(n: usize) -> Self {
        AzConfig { bits: vec![false; n] }
    }

    pub fn from_links(n: usize, links: impl IntoIterator<Item = LinkId>) -> Self {
        let mut bits = vec![false; n];
        for l in links {
            bits[l] = true;
        }
        AzConfig { bits }
    }

    /// Parses a string of `0`/`1` characters and checks it against the network size.
    pub fn parse_for(s: &str, n_links: usize) -> Result<Self, EngineError> {
        let az: AzConfig = s.parse()?;
        az.check_len(n_links)?;
        Ok(az)
    }

    pub fn check_len(&self, n_links: usize) -> Result<(), EngineError> {
        if self.len() == n_links {
            Ok(())
        } else {
            Err(EngineError::ConfigLength { expected: n_links, got: self.len() })
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_enabled(&self, link: LinkId) -> bool {
        self.bits[link]
    }

    pub fn set(&mut self, link: LinkId, on: bool) {
        self.bits[link] = on;
    }

    pub fn enabled_links(&self) -> Vec<LinkId> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_off(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_all_on(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn is_subset_of(&self, other: &AzConfig) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

impl fmt::Display for AzConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for AzConfig {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(EngineError::BadBitString(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(AzConfig::from_bits)
    }
}

/// An active radio contact between two vehicles (`a < b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub a: VehicleId,
    pub b: VehicleId,
    pub start_time: f64,
    /// Sampled lifetime so far: ticks observed times dt.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSnapshot {
    pub id: VehicleId,
    pub link: LinkId,
    pub position: Point,
    pub offset: f64,
    pub speed: f64,
}

/// Mobility and contacts of one tick. Vehicles are sorted by id; `pairs`
/// holds the vehicle indices of each contact, aligned with `contacts`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityFrame {
    pub tick: u64,
    pub time: f64,
    pub vehicles: Vec<VehicleSnapshot>,
    pub contacts: Vec<Contact>,
    pub pairs: Vec<(u32, u32)>,
}

/// Every unordered pair within `tx` meters (boundary inclusive). Pairs also
/// present in `previous` keep their start time and extend their duration by
/// `dt`; new pairs start at `time` with duration `dt`. Output is sorted by
/// `(a, b)`.
pub fn detect_contacts(
    positions: &[(VehicleId, Point)],
    tx: f64,
    previous: &[Contact],
    time: f64,
    dt: f64,
) -> Vec<Contact> {
    let tx2 = tx * tx;
    let xs: Vec<f64> = positions.iter().map(|(_, p)| p.x).collect();
    let ys: Vec<f64> = positions.iter().map(|(_, p)| p.y).collect();
    let words = positions.len().div_ceil(64);
    let mut row = vec![0u64; words];
    let mut pairs = Vec::new();
    for i in 0..positions.len() {
        let (px, py) = (xs[i], ys[i]);
        row.fill(0);
        for j in i + 1..positions.len() {
            let (dx, dy) = (xs[j] - px, ys[j] - py);
            row[j / 64] |= ((dx * dx + dy * dy <= tx2) as u64) << (j % 64);
        }
        let id_i = positions[i].0;
        for (w, &bits) in row.iter().enumerate() {
            let mut bits = bits;
            while bits != 0 {
                let id_j = positions[w * 64 + bits.trailing_zeros() as usize].0;
                pairs.push(if id_i < id_j { (id_i, id_j) } else { (id_j, id_i) });
                bits &= bits - 1;
            }
        }
    }
    if !pairs.is_sorted() {
        pairs.sort_unstable();
    }
    let mut p = 0;
    pairs
        .into_iter()
        .map(|(a, b)| {
            while p < previous.len() && (previous[p].a, previous[p].b) < (a, b) {
                p += 1;
            }
            match previous.get(p) {
                Some(c) if (c.a, c.b) == (a, b) => Contact { duration: c.duration + dt, ..*c },
                _ => Contact { a, b, start_time: time, duration: dt },
            }
        })
        .collect()
}

/// Mobility of a whole run, split into warm-up and fixed-length intervals.
#[derive(Debug, Clone)]
pub struct MobilityRun {
    pub frames: Vec<MobilityFrame>,
    pub warmup_ticks: usize,
    pub interval_ticks: usize,
}

impl MobilityRun {
    pub fn intervals(&self) -> usize {
        self.frames.len().saturating_sub(self.warmup_ticks) / self.interval_ticks.max(1)
    }

    pub fn interval(&self, index: usize) -> Result<&[MobilityFrame], EngineError> {
        if index >= self.intervals() {
            return Err(EngineError::NoSuchInterval { index, available: self.intervals() });
        }
        let start = self.warmup_ticks + index * self.interval_ticks;
        Ok(&self.frames[start..start + self.interval_ticks])
    }
}

/// Runs the trip schedule for the scenario duration, recording vehicle
/// snapshots and contacts every tick.
pub fn record_mobility(net: &RoadNet, schedule: &TripSchedule, scenario: &Scenario) -> Result<MobilityRun, EngineError> {
    let mut fleet = Fleet::new(net, schedule, scenario.dt);
    let mut frames = Vec::with_capacity(scenario.total_ticks());
    let mut previous: Vec<Contact> = Vec::new();
    let mut positions = Vec::new();
    let mut slot_of: Vec<u32> = Vec::new();
    for tick in 1..=scenario.total_ticks() as u64 {
        fleet.tick()?;
        let vehicles: Vec<VehicleSnapshot> = fleet
            .vehicles()
            .iter()
            .map(|v| VehicleSnapshot {
                id: v.id,
                link: v.link(),
                position: v.position(net),
                offset: v.offset,
                speed: v.speed,
            })
            .collect();
        positions.clear();
        positions.extend(vehicles.iter().map(|v| (v.id, v.position)));
        let time = fleet.time();
        let contacts = detect_contacts(&positions, scenario.tx, &previous, time, scenario.dt);
        let base = vehicles.first().map_or(0, |v| v.id);
        slot_of.clear();
        slot_of.resize(vehicles.last().map_or(0, |v| (v.id - base) as usize + 1), 0);
        for (i, v) in vehicles.iter().enumerate() {
            slot_of[(v.id - base) as usize] = i as u32;
        }
        let pairs = contacts.iter().map(|c| (slot_of[(c.a - base) as usize], slot_of[(c.b - base) as usize])).collect();
        previous.clone_from(&contacts);
        frames.push(MobilityFrame { tick, time, vehicles, contacts, pairs });
    }
    Ok(MobilityRun { frames, warmup_ticks: scenario.warmup_ticks(), interval_ticks: scenario.interval_ticks() })
}

/// Content ownership by vehicle id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CarrierSet {
    flags: Vec<bool>,
}

impl CarrierSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: VehicleId) -> bool {
        self.flags.get(id as usize).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, id: VehicleId) {
        let i = id as usize;
        if i >= self.flags.len() {
            self.flags.resize(i + 1, false);
        }
        self.flags[i] = true;
    }

    pub fn remove(&mut self, id: VehicleId) {
        if let Some(f) = self.flags.get_mut(id as usize) {
            *f = false;
        }
    }

    pub fn len(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Carriers standing on links outside the anchor zone lose the content.
pub fn erase_on_exit(vehicles: &[VehicleSnapshot], az: &AzConfig, carriers: &mut CarrierSet) {
    for v in vehicles {
        if !az.is_enabled(v.link) {
            carriers.remove(v.id);
        }
    }
}

/// Single-hop replication: for each contact with exactly one carrier, the
/// other vehicle acquires the content iff both stand on enabled links.
/// Decisions use the ownership at the start of the exchange, so content
/// travels at most one hop per tick.
pub fn exchange(vehicles: &[VehicleSnapshot], pairs: &[(u32, u32)], az: &AzConfig, carriers: &mut CarrierSet) {
    let mut acquired = Vec::new();
    for &(i, j) in pairs {
        let (u, v) = (&vehicles[i as usize], &vehicles[j as usize]);
        if !(az.is_enabled(u.link) && az.is_enabled(v.link)) {
            continue;
        }
        match (carriers.contains(u.id), carriers.contains(v.id)) {
            (true, false) => acquired.push(v.id),
            (false, true) => acquired.push(u.id),
            _ => {}
        }
    }
    for id in acquired {
        carriers.insert(id);
    }
}

/// Seeder links for one interval: `ceil(fraction * |enabled|)` enabled links
/// chosen uniformly, sorted by id.
pub fn select_seeders(az: &AzConfig, fraction: f64, rng_seed: u64) -> Vec<LinkId> {
    let enabled = az.enabled_links();
    let k = seeder_count(enabled.len(), fraction);
    if k >= enabled.len() {
        return enabled;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen: Vec<LinkId> = sample(&mut rng, enabled.len(), k).into_iter().map(|i| enabled[i]).collect();
    chosen.sort_unstable();
    chosen
}

fn seeder_count(enabled: usize, fraction: f64) -> usize {
    // The slack absorbs products like 0.1 * 30 = 3.0000000000000004.
    ((fraction * enabled as f64 - 1e-9).ceil().max(0.0) as usize).min(enabled)
}

/// Infrastructure seeding: each seeder link hands the content to the first
/// (lowest id) content-less vehicle it observes, once per interval.
#[derive(Debug, Clone)]
pub struct Seeder {
    links: Vec<LinkId>,
    pending: Vec<bool>,
}

impl Seeder {
    pub fn new(az: &AzConfig, fraction: f64, rng_seed: u64) -> Self {
        Self::from_links(az.len(), select_seeders(az, fraction, rng_seed))
    }

    pub fn from_links(n_links: usize, links: Vec<LinkId>) -> Self {
        let mut pending = vec![false; n_links];
        for &l in &links {
            pending[l] = true;
        }
        Seeder { links, pending }
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    /// True when no link will ever seed (e.g. an all-OFF configuration).
    pub fn is_noop(&self) -> bool {
        self.links.is_empty()
    }

    pub fn seed(&mut self, vehicles: &[VehicleSnapshot], carriers: &mut CarrierSet) {
        for v in vehicles {
            if self.pending[v.link] && !carriers.contains(v.id) {
                carriers.insert(v.id);
                self.pending[v.link] = false;
            }
        }
    }
}

/// Content ownership over an interval, aligned with its mobility frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentTrace {
    /// `content[t][i]` is true when vehicle `i` of frame `t` carries the content.
    pub content: Vec<Vec<bool>>,
    pub seeders: Vec<LinkId>,
    pub seeding_noop: bool,
}

impl ContentTrace {
    /// Carriers per link at each tick.
    pub fn link_carriers(&self, frames: &[MobilityFrame], n_links: usize) -> Vec<Vec<u32>> {
        frames
            .iter()
            .zip(&self.content)
            .map(|(frame, flags)| {
                let mut counts = vec![0; n_links];
                for (v, &c) in frame.vehicles.iter().zip(flags) {
                    counts[v.link] += c as u32;
                }
                counts
            })
            .collect()
    }
}

/// Replays content dynamics over recorded frames. Ownership starts empty.
pub fn replay(frames: &[MobilityFrame], az: &AzConfig, mut seeder: Seeder) -> ContentTrace {
    let mut carriers = CarrierSet::new();
    let mut content = Vec::with_capacity(frames.len());
    for frame in frames {
        erase_on_exit(&frame.vehicles, az, &mut carriers);
        seeder.seed(&frame.vehicles, &mut carriers);
        exchange(&frame.vehicles, &frame.pairs, az, &mut carriers);
        content.push(frame.vehicles.iter().map(|v| carriers.contains(v.id)).collect());
    }
    ContentTrace { content, seeding_noop: seeder.is_noop(), seeders: seeder.links }
}

/// Mobility plus content for one interval under one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub frames: Vec<MobilityFrame>,
    pub content: ContentTrace,
}

impl SimTrace {
    /// Debug export: one `tick,vehicle_id,link,offset,has_content` line per vehicle and tick.
    pub fn write_records(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "tick,vehicle_id,link,offset,has_content")?;
        for (frame, flags) in self.frames.iter().zip(&self.content.content) {
            for (v, &c) in frame.vehicles.iter().zip(flags) {
                writeln!(out, "{},{},{},{:.3},{}", frame.tick, v.id, v.link, v.offset, c as u8)?;
            }
        }
        Ok(())
    }
}

/// Simulates interval `interval` of run `run` of a scenario under `az`.
pub fn run_interval(
    net: &RoadNet,
    az: &AzConfig,
    schedule: &TripSchedule,
    scenario: &Scenario,
    run: u64,
    interval: usize,
) -> Result<SimTrace, EngineError> {
    az.check_len(net.len())?;
    let mobility = record_mobility(net, schedule, scenario)?;
    let frames = mobility.interval(interval)?.to_vec();
    let seeder = Seeder::new(az, scenario.seeding_fraction, scenario.seeder_seed(run, interval));
    let content = replay(&frames, az, seeder);
    Ok(SimTrace { frames, content })
}
