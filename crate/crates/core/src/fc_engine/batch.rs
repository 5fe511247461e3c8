//! Bit-sliced content replay: many anchor-zone configurations over one
//! mobility trace in a single pass.
//!
//! Bit `c` of every mask refers to configuration `c` of the batch. A
//! vehicle's mask is the set of configurations in which it carries the
//! content, so one word operation advances 64 configurations. Per-link
//! carrier sums are kept in vertical (bit-plane) counters.
//!
//! The rules are those of [`super::replay`]: a carrier always stands on an
//! enabled link once erasure has run, so "both endpoints enabled" reduces to
//! masking the receiver's link.

use crate::roadnet::LinkId;

use super::{AzConfig, MobilityFrame};

const MAX_WORDS: usize = 8;
const LANES: usize = MAX_WORDS * 64;

type Mask<const W: usize> = [u64; W];

#[inline]
fn and<const W: usize>(a: &Mask<W>, b: &Mask<W>) -> Mask<W> {
    std::array::from_fn(|w| a[w] & b[w])
}

#[inline]
fn or_assign<const W: usize>(a: &mut Mask<W>, b: &Mask<W>) {
    for w in 0..W {
        a[w] |= b[w];
    }
}

#[inline]
fn is_zero<const W: usize>(a: &Mask<W>) -> bool {
    a.iter().all(|&w| w == 0)
}

/// Per configuration, the number of (vehicle, tick) samples in which a
/// vehicle on each link carried the content: `result[c][link]`.
///
/// `seeders[c]` lists the seeder links of `configs[c]`.
pub fn carrier_sums(
    frames: &[MobilityFrame],
    n_links: usize,
    configs: &[AzConfig],
    seeders: &[Vec<LinkId>],
) -> Vec<Vec<u64>> {
    assert_eq!(configs.len(), seeders.len(), "one seeder list per configuration");
    let mut out = Vec::with_capacity(configs.len());
    for start in (0..configs.len()).step_by(LANES) {
        let end = (start + LANES).min(configs.len());
        let (c, s) = (&configs[start..end], &seeders[start..end]);
        out.extend(match (end - start).div_ceil(64) {
            1 => run_chunk::<1>(frames, n_links, c, s),
            2 => run_chunk::<2>(frames, n_links, c, s),
            3 | 4 => run_chunk::<4>(frames, n_links, c, s),
            _ => run_chunk::<MAX_WORDS>(frames, n_links, c, s),
        });
    }
    out
}

fn run_chunk<const W: usize>(
    frames: &[MobilityFrame],
    n_links: usize,
    configs: &[AzConfig],
    seeders: &[Vec<LinkId>],
) -> Vec<Vec<u64>> {
    let zero: Mask<W> = [0; W];
    let mut enabled = vec![zero; n_links];
    let mut pending = vec![zero; n_links];
    for (c, (az, seeds)) in configs.iter().zip(seeders).enumerate() {
        let (w, bit) = (c / 64, 1u64 << (c % 64));
        assert_eq!(az.len(), n_links, "configuration length");
        for l in az.enabled_links() {
            enabled[l][w] |= bit;
        }
        for &l in seeds {
            pending[l][w] |= bit;
        }
    }

    let (base, span) = id_span(frames);
    let mut carriers = vec![zero; span];

    // Counter planes per link, sized for the largest possible sum.
    let mut samples = vec![0u64; n_links];
    for f in frames {
        for v in &f.vehicles {
            samples[v.link] += 1;
        }
    }
    let mut planes: Vec<Vec<Mask<W>>> = samples.iter().map(|&s| vec![zero; (64 - s.leading_zeros()) as usize]).collect();

    let mut slots: Vec<usize> = Vec::new();
    let mut received: Vec<Mask<W>> = Vec::new();
    for frame in frames {
        slots.clear();
        slots.extend(frame.vehicles.iter().map(|v| (v.id - base) as usize));

        for (v, &s) in frame.vehicles.iter().zip(&slots) {
            let c = &mut carriers[s];
            *c = and(c, &enabled[v.link]);
        }

        for (v, &s) in frame.vehicles.iter().zip(&slots) {
            let p = &mut pending[v.link];
            if is_zero(p) {
                continue;
            }
            let c = &mut carriers[s];
            for w in 0..W {
                let give = p[w] & !c[w];
                c[w] |= give;
                p[w] &= !give;
            }
        }

        if !frame.pairs.is_empty() {
            received.clear();
            received.resize(frame.vehicles.len(), zero);
            for &(i, j) in &frame.pairs {
                let (i, j) = (i as usize, j as usize);
                or_assign(&mut received[i], &carriers[slots[j]]);
                or_assign(&mut received[j], &carriers[slots[i]]);
            }
            for ((v, &s), r) in frame.vehicles.iter().zip(&slots).zip(&received) {
                let gain = and(r, &enabled[v.link]);
                or_assign(&mut carriers[s], &gain);
            }
        }

        for (v, &s) in frame.vehicles.iter().zip(&slots) {
            let mut carry = carriers[s];
            for plane in planes[v.link].iter_mut() {
                if is_zero(&carry) {
                    break;
                }
                for w in 0..W {
                    let overflow = plane[w] & carry[w];
                    plane[w] ^= carry[w];
                    carry[w] = overflow;
                }
            }
        }
    }

    (0..configs.len())
        .map(|c| {
            let (w, shift) = (c / 64, c % 64);
            planes
                .iter()
                .map(|link_planes| {
                    link_planes
                        .iter()
                        .enumerate()
                        .map(|(level, plane)| ((plane[w] >> shift) & 1) << level)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Smallest vehicle id and the id range covered by the frames.
fn id_span(frames: &[MobilityFrame]) -> (u32, usize) {
    let ids = frames.iter().flat_map(|f| f.vehicles.iter().map(|v| v.id));
    let (lo, hi) = ids.fold((u32::MAX, 0), |(lo, hi), id| (lo.min(id), hi.max(id)));
    if lo > hi {
        (0, 0)
    } else {
        (lo, (hi - lo) as usize + 1)
    }
}
