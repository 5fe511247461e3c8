//! Per-link features: per-tick samples, per-interval aggregation into
//! mobility (`p_mob`) and communication (`p_com`) parts, and dataset triples.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::availability;
use crate::fc_engine::{AzConfig, Contact, MobilityFrame};
use crate::mobility::VehicleId;
use crate::roadnet::LinkId;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot aggregate an empty interval")]
    NoFrames,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Instantaneous statistics of one link at one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkSample {
    pub vehicles: u32,
    pub carriers: u32,
    /// Vehicles on this link with at least one active contact.
    pub in_contact: u32,
    pub speed_sum: f64,
}

/// Content-independent features of one link over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityRow {
    /// Mean vehicle count, `V_c + V_nc`.
    pub n_vehicles: f64,
    /// Mean speed of the vehicles observed on the link, m/s.
    pub nu: f64,
    /// Mean number of vehicles in contact.
    pub lambda: f64,
    /// Mean contact duration, seconds.
    pub t_lambda: f64,
    /// Transmission radius, meters.
    pub tx: f64,
}

/// Content-dependent features of one link over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentRow {
    /// Mean number of vehicles carrying the content.
    pub v_c: f64,
    pub availability: f64,
}

/// The full per-link feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkFeatures {
    pub v_c: f64,
    pub v_nc: f64,
    pub lambda: f64,
    pub t_lambda: f64,
    pub nu: f64,
    pub tx: f64,
}

impl LinkFeatures {
    pub fn total(&self) -> f64 {
        self.v_c + self.v_nc
    }

    pub fn availability(&self) -> f64 {
        availability(self.v_c, self.v_nc).unwrap_or(0.0)
    }

    pub fn combine(p_mob: &[MobilityRow], p_com: &[ContentRow]) -> Result<Vec<LinkFeatures>, FeatureError> {
        if p_mob.len() != p_com.len() {
            return Err(FeatureError::Dimension(format!("p_mob has {} links, p_com {}", p_mob.len(), p_com.len())));
        }
        Ok(p_mob
            .iter()
            .zip(p_com)
            .map(|(m, c)| LinkFeatures {
                v_c: c.v_c,
                v_nc: (m.n_vehicles - c.v_c).max(0.0),
                lambda: m.lambda,
                t_lambda: m.t_lambda,
                nu: m.nu,
                tx: m.tx,
            })
            .collect())
    }
}

/// Per-link statistics of one tick. A contact counts toward λ on the link of
/// each of its vehicles.
pub fn sample_frame(frame: &MobilityFrame, content: &[bool], n_links: usize) -> Vec<LinkSample> {
    let mut samples = vec![LinkSample::default(); n_links];
    let mut in_contact = vec![false; frame.vehicles.len()];
    for &(i, j) in &frame.pairs {
        in_contact[i as usize] = true;
        in_contact[j as usize] = true;
    }
    for (k, v) in frame.vehicles.iter().enumerate() {
        let s = &mut samples[v.link];
        s.vehicles += 1;
        s.carriers += content.get(k).copied().unwrap_or(false) as u32;
        s.in_contact += in_contact[k] as u32;
        s.speed_sum += v.speed;
    }
    samples
}

/// Interval totals of the content-independent statistics. Keeping integer
/// sums lets content features be formed identically from any replay route.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityAggregate {
    pub ticks: u64,
    pub vehicle_sums: Vec<u64>,
    pub rows: Vec<MobilityRow>,
}

impl MobilityAggregate {
    pub fn n_links(&self) -> usize {
        self.rows.len()
    }

    /// Content features from per-link carrier sums over the same ticks.
    pub fn content_rows(&self, carrier_sums: &[u64]) -> Vec<ContentRow> {
        let ticks = self.ticks as f64;
        carrier_sums
            .iter()
            .zip(&self.vehicle_sums)
            .map(|(&c, &n)| {
                let v_c = c as f64 / ticks;
                let v_nc = (n - c) as f64 / ticks;
                ContentRow { v_c, availability: availability(v_c, v_nc).unwrap_or(0.0) }
            })
            .collect()
    }
}

/// Aggregates the mobility of one or more traces of equal link dimension.
/// Means are taken over all ticks of all traces. Contact durations: each
/// contact seen in the traces contributes its longest observed duration to
/// every link either of its vehicles stood on while it was active; contacts
/// still open at the end of a trace count with their duration so far.
pub fn aggregate_mobility(traces: &[&[MobilityFrame]], n_links: usize, tx: f64) -> Result<MobilityAggregate, FeatureError> {
    let ticks: u64 = traces.iter().map(|t| t.len() as u64).sum();
    if ticks == 0 {
        return Err(FeatureError::NoFrames);
    }
    let mut vehicle_sums = vec![0u64; n_links];
    let mut contact_sums = vec![0u64; n_links];
    let mut speed_sums = vec![0.0f64; n_links];
    let mut in_contact = Vec::new();
    // One slot per distinct contact, keyed by (trace, a, b, start time).
    let mut slots: Vec<((usize, VehicleId, VehicleId, u64), f64, Vec<LinkId>)> = Vec::new();
    let mut index: HashMap<(usize, VehicleId, VehicleId, u64), usize> = HashMap::new();
    let (mut prev_slots, mut cur_slots) = (Vec::new(), Vec::new());
    for (t, frames) in traces.iter().enumerate() {
        // In tick order a contact starting at this frame's time is new, which
        // saves the map lookup.
        let consecutive = frames.windows(2).all(|w| w[1].tick == w[0].tick + 1);
        let mut prev: &[Contact] = &[];
        prev_slots.clear();
        for frame in frames.iter() {
            in_contact.clear();
            in_contact.resize(frame.vehicles.len(), false);
            for &(i, j) in &frame.pairs {
                in_contact[i as usize] = true;
                in_contact[j as usize] = true;
            }
            for (v, &c) in frame.vehicles.iter().zip(&in_contact) {
                vehicle_sums[v.link] += 1;
                contact_sums[v.link] += c as u64;
                speed_sums[v.link] += v.speed;
            }
            cur_slots.clear();
            let mut p = 0;
            for (c, &(i, j)) in frame.contacts.iter().zip(&frame.pairs) {
                while p < prev.len() && (prev[p].a, prev[p].b) < (c.a, c.b) {
                    p += 1;
                }
                let key = (t, c.a, c.b, c.start_time.to_bits());
                let slot = if p < prev.len() && (prev[p].a, prev[p].b, prev[p].start_time) == (c.a, c.b, c.start_time) {
                    prev_slots[p]
                } else if consecutive && c.start_time == frame.time {
                    slots.push((key, 0.0, Vec::new()));
                    slots.len() - 1
                } else {
                    *index.entry(key).or_insert_with(|| {
                        slots.push((key, 0.0, Vec::new()));
                        slots.len() - 1
                    })
                };
                let entry = &mut slots[slot];
                entry.1 = entry.1.max(c.duration);
                for k in [i, j] {
                    let link = frame.vehicles[k as usize].link;
                    if !entry.2.contains(&link) {
                        entry.2.push(link);
                    }
                }
                cur_slots.push(slot);
            }
            prev = &frame.contacts;
            std::mem::swap(&mut prev_slots, &mut cur_slots);
        }
    }
    let mut duration_sum = vec![0.0f64; n_links];
    let mut duration_count = vec![0u64; n_links];
    for (_, duration, links) in &slots {
        for &l in links {
            duration_sum[l] += duration;
            duration_count[l] += 1;
        }
    }
    let rows = (0..n_links)
        .map(|l| MobilityRow {
            n_vehicles: vehicle_sums[l] as f64 / ticks as f64,
            nu: if vehicle_sums[l] > 0 { speed_sums[l] / vehicle_sums[l] as f64 } else { 0.0 },
            lambda: contact_sums[l] as f64 / ticks as f64,
            t_lambda: if duration_count[l] > 0 { duration_sum[l] / duration_count[l] as f64 } else { 0.0 },
            tx,
        })
        .collect();
    Ok(MobilityAggregate { ticks, vehicle_sums, rows })
}

/// Aggregates one interval of frames with its content flags into
/// `(p_mob, p_com)`.
pub fn aggregate(
    frames: &[MobilityFrame],
    content: &[Vec<bool>],
    n_links: usize,
    tx: f64,
) -> Result<(Vec<MobilityRow>, Vec<ContentRow>), FeatureError> {
    if frames.len() != content.len() {
        return Err(FeatureError::Dimension(format!("{} frames, {} content rows", frames.len(), content.len())));
    }
    let mobility = aggregate_mobility(&[frames], n_links, tx)?;
    let mut carrier_sums = vec![0u64; n_links];
    for (frame, flags) in frames.iter().zip(content) {
        for (l, s) in sample_frame(frame, flags, n_links).iter().enumerate() {
            carrier_sums[l] += s.carriers as u64;
        }
    }
    let p_com = mobility.content_rows(&carrier_sums);
    Ok((mobility.rows, p_com))
}

/// One learning record: link features and the anchor-zone configuration
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTriple {
    pub p_mob: Vec<MobilityRow>,
    pub p_com: Vec<ContentRow>,
    pub label: AzConfig,
}

impl DatasetTriple {
    pub fn n_links(&self) -> usize {
        self.label.len()
    }
}

pub fn make_triple(p_mob: Vec<MobilityRow>, p_com: Vec<ContentRow>, az: AzConfig) -> Result<DatasetTriple, FeatureError> {
    if p_mob.len() != p_com.len() || p_mob.len() != az.len() {
        return Err(FeatureError::Dimension(format!(
            "p_mob {} links, p_com {} links, label {} bits",
            p_mob.len(),
            p_com.len(),
            az.len()
        )));
    }
    Ok(DatasetTriple { p_mob, p_com, label: az })
}
