//! Trip generation, shortest-path routing over links, and discrete-time
//! vehicle motion.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::roadnet::{LinkId, Point, RoadNet};

pub type VehicleId = u32;

/// Relative slack when comparing path lengths for tie-breaking.
const PATH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("link {to} unreachable from link {from}")]
    Unreachable { from: LinkId, to: LinkId },
    #[error("invalid trip generation parameter: {0}")]
    InvalidParameter(String),
    #[error("network needs at least two entry links to generate trips")]
    TooFewEntryLinks,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trip {
    pub entry_time: f64,
    pub origin: LinkId,
    pub destination: LinkId,
    /// Preferred speed in m/s; the effective speed on a link is
    /// `min(speed_limit, cruise_speed)`.
    pub cruise_speed: f64,
}

/// Trips ordered by non-decreasing entry time. The index of a trip is the id
/// of the vehicle that performs it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripSchedule {
    pub trips: Vec<Trip>,
}

impl TripSchedule {
    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }
}

/// Shortest link path from `origin` to `destination`, both inclusive. Path
/// length counts every link on it. Among equally short paths the
/// lexicographically smallest link sequence wins.
pub fn route(net: &RoadNet, origin: LinkId, destination: LinkId) -> Result<Vec<LinkId>, MobilityError> {
    for l in [origin, destination] {
        if l >= net.len() {
            return Err(MobilityError::UnknownLink(l));
        }
    }
    let to_dest = distances_to(net, destination);
    if !to_dest[origin].is_finite() {
        return Err(MobilityError::Unreachable { from: origin, to: destination });
    }
    let mut path = vec![origin];
    let mut current = origin;
    while current != destination {
        let rest = to_dest[current] - net.link(current).length;
        let next = net
            .neighbors(current)
            .iter()
            .copied()
            .find(|&m| (to_dest[m] - rest).abs() <= PATH_TOLERANCE * to_dest[current].max(1.0))
            .expect("a neighbor continues every shortest path");
        path.push(next);
        current = next;
    }
    Ok(path)
}

/// Dijkstra from `destination`: total length of the shortest path from each
/// link to the destination, counting both end links.
fn distances_to(net: &RoadNet, destination: LinkId) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Entry(f64, LinkId);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
        }
    }

    let mut dist = vec![f64::INFINITY; net.len()];
    dist[destination] = net.link(destination).length;
    let mut heap = BinaryHeap::from([Entry(dist[destination], destination)]);
    while let Some(Entry(d, l)) = heap.pop() {
        if d > dist[l] {
            continue;
        }
        for &m in net.neighbors(l) {
            let candidate = d + net.link(m).length;
            if candidate < dist[m] {
                dist[m] = candidate;
                heap.push(Entry(candidate, m));
            }
        }
    }
    dist
}

/// Poisson arrivals on `[0, duration)` with origins and destinations drawn
/// uniformly over the boundary links. Vehicles drive at the speed limit.
pub fn spawn_trips(
    net: &RoadNet,
    arrival_rate: f64,
    duration: f64,
    rng_seed: u64,
) -> Result<TripSchedule, MobilityError> {
    spawn_trips_with_cruise(net, arrival_rate, duration, [f64::INFINITY, f64::INFINITY], rng_seed)
}

/// As [`spawn_trips`], with each vehicle's cruise speed drawn uniformly from
/// `cruise_range` once at spawn.
pub fn spawn_trips_with_cruise(
    net: &RoadNet,
    arrival_rate: f64,
    duration: f64,
    cruise_range: [f64; 2],
    rng_seed: u64,
) -> Result<TripSchedule, MobilityError> {
    if !(arrival_rate > 0.0) || !arrival_rate.is_finite() {
        return Err(MobilityError::InvalidParameter(format!("arrival rate {arrival_rate} must be positive")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(MobilityError::InvalidParameter(format!("duration {duration} must be positive")));
    }
    let [lo, hi] = cruise_range;
    if !(lo > 0.0) || !(lo <= hi) {
        return Err(MobilityError::InvalidParameter(format!("cruise range [{lo}, {hi}] must satisfy 0 < min <= max")));
    }
    let entries = net.boundary_links();
    if entries.len() < 2 {
        return Err(MobilityError::TooFewEntryLinks);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut trips = Vec::new();
    let mut t = 0.0;
    loop {
        let u: f64 = rng.gen();
        t += -(1.0 - u).ln() / arrival_rate;
        if t >= duration {
            break;
        }
        let o = rng.gen_range(0..entries.len());
        let mut d = rng.gen_range(0..entries.len() - 1);
        if d >= o {
            d += 1;
        }
        let cruise_speed = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        trips.push(Trip { entry_time: t, origin: entries[o], destination: entries[d], cruise_speed });
    }
    Ok(TripSchedule { trips })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Full route; `leg` indexes the current link.
    pub route: Vec<LinkId>,
    pub leg: usize,
    /// Meters from the entry end of the current link.
    pub offset: f64,
    /// +1 when travelling from the link's `a` end to its `b` end, -1 otherwise.
    pub direction: i8,
    pub speed: f64,
    pub cruise_speed: f64,
}

impl VehicleState {
    /// Vehicle at the entry of the first link of `route`.
    pub fn enter(net: &RoadNet, id: VehicleId, route: Vec<LinkId>, cruise_speed: f64) -> Self {
        let mut v = VehicleState { id, route, leg: 0, offset: 0.0, direction: 1, speed: 0.0, cruise_speed };
        v.enter_leg(net, 0);
        v
    }

    pub fn link(&self) -> LinkId {
        self.route[self.leg]
    }

    pub fn remaining_route(&self) -> &[LinkId] {
        &self.route[self.leg..]
    }

    pub fn position(&self, net: &RoadNet) -> Point {
        let link = net.link(self.link());
        let t = self.offset / link.length;
        if self.direction > 0 {
            link.a.lerp(&link.b, t)
        } else {
            link.b.lerp(&link.a, t)
        }
    }

    fn enter_leg(&mut self, net: &RoadNet, leg: usize) {
        self.leg = leg;
        self.offset = 0.0;
        let link = net.link(self.route[leg]);
        self.speed = link.speed_limit.min(self.cruise_speed);
        self.direction = if leg + 1 < self.route.len() {
            let exit = link.shared_endpoint(net.link(self.route[leg + 1])).expect("route links are adjacent");
            if exit.coincides(&link.b) {
                1
            } else {
                -1
            }
        } else if leg > 0 {
            let entry = link.shared_endpoint(net.link(self.route[leg - 1])).expect("route links are adjacent");
            if entry.coincides(&link.a) {
                1
            } else {
                -1
            }
        } else {
            1
        };
    }

    /// Moves `distance` meters along the route, carrying any remainder onto
    /// following links. Returns false once the end of the final link is
    /// reached.
    fn advance(&mut self, net: &RoadNet, mut distance: f64) -> bool {
        loop {
            let remaining = net.link(self.link()).length - self.offset;
            if self.leg + 1 == self.route.len() {
                if distance >= remaining {
                    return false;
                }
                self.offset += distance;
                return true;
            }
            if distance < remaining {
                self.offset += distance;
                return true;
            }
            distance -= remaining;
            self.enter_leg(net, self.leg + 1);
        }
    }
}

/// Advances every vehicle by `speed * dt` meters and drops vehicles that
/// completed their route.
pub fn step(vehicles: Vec<VehicleState>, net: &RoadNet, dt: f64) -> Vec<VehicleState> {
    vehicles
        .into_iter()
        .filter_map(|mut v| {
            let distance = v.speed * dt;
            v.advance(net, distance).then_some(v)
        })
        .collect()
}

/// Drives a [`TripSchedule`] forward one tick at a time.
#[derive(Debug, Clone)]
pub struct Fleet<'a> {
    net: &'a RoadNet,
    schedule: &'a TripSchedule,
    dt: f64,
    tick: u64,
    next_trip: usize,
    vehicles: Vec<VehicleState>,
    departed: usize,
}

impl<'a> Fleet<'a> {
    pub fn new(net: &'a RoadNet, schedule: &'a TripSchedule, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Fleet { net, schedule, dt, tick: 0, next_trip: 0, vehicles: Vec::new(), departed: 0 }
    }

    /// Time of the most recent tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn arrivals(&self) -> usize {
        self.next_trip
    }

    pub fn departures(&self) -> usize {
        self.departed
    }

    /// Moves existing vehicles, then admits trips whose entry time fell in
    /// the elapsed tick. Vehicles stay sorted by id.
    pub fn tick(&mut self) -> Result<(), MobilityError> {
        self.tick += 1;
        let now = self.time();
        let before = self.vehicles.len();
        self.vehicles = step(std::mem::take(&mut self.vehicles), self.net, self.dt);
        self.departed += before - self.vehicles.len();
        while let Some(trip) = self.schedule.trips.get(self.next_trip) {
            if trip.entry_time > now {
                break;
            }
            let path = route(self.net, trip.origin, trip.destination)?;
            self.vehicles
                .push(VehicleState::enter(self.net, self.next_trip as VehicleId, path, trip.cruise_speed));
            self.next_trip += 1;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::Link;

    fn corridor(n: usize, length: f64, speed: f64) -> RoadNet {
        let links = (0..n)
            .map(|i| {
                Link::new(i, Point::new(i as f64 * length, 0.0), Point::new((i + 1) as f64 * length, 0.0), speed)
                    .unwrap()
            })
            .collect();
        RoadNet::new(links, []).unwrap()
    }

    /// Every simple link path from `from` to `to`, by depth-first enumeration.
    fn all_simple_paths(net: &RoadNet, from: LinkId, to: LinkId) -> Vec<Vec<LinkId>> {
        fn go(net: &RoadNet, path: &mut Vec<LinkId>, to: LinkId, out: &mut Vec<Vec<LinkId>>) {
            let last = *path.last().unwrap();
            if last == to {
                out.push(path.clone());
                return;
            }
            for &m in net.neighbors(last) {
                if !path.contains(&m) {
                    path.push(m);
                    go(net, path, to, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(net, &mut vec![from], to, &mut out);
        out
    }

    fn path_length(net: &RoadNet, path: &[LinkId]) -> f64 {
        path.iter().map(|&l| net.link(l).length).sum()
    }

    #[test]
    fn route_to_self_is_identity() {
        let net = RoadNet::build_grid(2, 2, 100.0, [10.0, 10.0], 0).unwrap();
        assert_eq!(route(&net, 5, 5).unwrap(), vec![5]);
    }

    #[test]
    fn route_matches_exhaustive_enumeration() {
        let net = RoadNet::build_grid(2, 2, 100.0, [10.0, 10.0], 0).unwrap();
        for from in 0..net.len() {
            for to in 0..net.len() {
                let got = route(&net, from, to).unwrap();
                let mut paths = all_simple_paths(&net, from, to);
                let best = paths.iter().map(|p| path_length(&net, p)).fold(f64::INFINITY, f64::min);
                paths.retain(|p| (path_length(&net, p) - best).abs() < 1e-9);
                paths.sort();
                assert!((path_length(&net, &got) - best).abs() < 1e-9);
                assert_eq!(got, paths[0], "{from} -> {to}");
                for w in got.windows(2) {
                    assert!(net.are_adjacent(w[0], w[1]));
                }
            }
        }
    }

    #[test]
    fn route_ties_take_smallest_sequence() {
        // Unit cell: bottom (0) to top (1) via left (2) or right (3), equal length.
        let net = RoadNet::build_grid(1, 1, 100.0, [10.0, 10.0], 0).unwrap();
        assert_eq!(route(&net, 0, 1).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn unknown_links_rejected() {
        let net = corridor(3, 100.0, 10.0);
        assert_eq!(route(&net, 0, 9), Err(MobilityError::UnknownLink(9)));
    }

    #[test]
    fn spawn_is_deterministic_and_valid() {
        let net = RoadNet::build_grid(2, 2, 100.0, [10.0, 10.0], 0).unwrap();
        let a = spawn_trips(&net, 0.5, 3750.0, 7).unwrap();
        let b = spawn_trips(&net, 0.5, 3750.0, 7).unwrap();
        assert_eq!(a, b);
        let boundary = net.boundary_links();
        for w in a.trips.windows(2) {
            assert!(w[0].entry_time <= w[1].entry_time);
        }
        for t in &a.trips {
            assert_ne!(t.origin, t.destination);
            assert!(boundary.contains(&t.origin) && boundary.contains(&t.destination));
            assert!(t.entry_time < 3750.0);
        }
    }

    #[test]
    fn tiny_rate_gives_empty_schedule() {
        let net = RoadNet::build_grid(1, 1, 100.0, [10.0, 10.0], 0).unwrap();
        let s = spawn_trips(&net, 1e-9, 10.0, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn poisson_mean_within_three_sigma() {
        let net = RoadNet::build_grid(2, 2, 100.0, [10.0, 10.0], 0).unwrap();
        let (rate, duration) = (0.2, 500.0);
        let total: usize = (0..100).map(|s| spawn_trips(&net, rate, duration, s).unwrap().len()).sum();
        let mean = total as f64 / 100.0;
        let expected = rate * duration;
        // Standard error of the mean of 100 Poisson(100) draws.
        let sigma = (expected / 100.0).sqrt();
        assert!((mean - expected).abs() <= 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn invalid_spawn_parameters() {
        let net = corridor(3, 100.0, 10.0);
        assert!(spawn_trips(&net, 0.0, 10.0, 0).is_err());
        assert!(spawn_trips(&net, 1.0, -1.0, 0).is_err());
        assert!(spawn_trips_with_cruise(&net, 1.0, 10.0, [3.0, 2.0], 0).is_err());
    }

    #[test]
    fn step_moves_along_link() {
        let net = corridor(3, 100.0, 10.0);
        let v = VehicleState::enter(&net, 0, vec![0, 1, 2], 10.0);
        let v = step(vec![v], &net, 1.0).pop().unwrap();
        assert_eq!(v.link(), 0);
        assert!((v.offset - 10.0).abs() < 1e-12);
    }

    #[test]
    fn step_carries_over_link_boundary() {
        let net = corridor(3, 100.0, 10.0);
        let mut v = VehicleState::enter(&net, 0, vec![0, 1, 2], 10.0);
        v.offset = 95.0;
        let v = step(vec![v], &net, 1.0).pop().unwrap();
        assert_eq!(v.link(), 1);
        assert!((v.offset - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_speed_matches_closed_form() {
        let net = corridor(3, 100.0, 10.0);
        let mut vs = vec![VehicleState::enter(&net, 0, vec![0, 1, 2], 7.0)];
        for k in 1..=42 {
            vs = step(vs, &net, 1.0);
            let p = vs[0].position(&net);
            assert!((p.x - 7.0 * k as f64).abs() < 1e-9, "step {k}: {}", p.x);
            assert_eq!(p.y, 0.0);
        }
        // 300 m in total: at 294 m the next step passes the end.
        vs = step(vs, &net, 1.0);
        assert!(vs.is_empty());
    }

    #[test]
    fn reverse_direction_positions() {
        let net = corridor(3, 100.0, 10.0);
        let mut vs = vec![VehicleState::enter(&net, 0, vec![2, 1, 0], 10.0)];
        assert_eq!(vs[0].direction, -1);
        assert_eq!(vs[0].position(&net), Point::new(300.0, 0.0));
        vs = step(vs, &net, 1.0);
        assert!((vs[0].position(&net).x - 290.0).abs() < 1e-9);
    }

    #[test]
    fn speed_clamped_per_link() {
        let links = vec![
            Link::new(0, Point::new(0.0, 0.0), Point::new(100.0, 0.0), 20.0).unwrap(),
            Link::new(1, Point::new(100.0, 0.0), Point::new(200.0, 0.0), 5.0).unwrap(),
        ];
        let net = RoadNet::new(links, []).unwrap();
        let mut vs = vec![VehicleState::enter(&net, 0, vec![0, 1], 12.0)];
        assert_eq!(vs[0].speed, 12.0);
        for _ in 0..9 {
            vs = step(vs, &net, 1.0);
        }
        assert_eq!(vs[0].link(), 1);
        assert_eq!(vs[0].speed, 5.0);
    }

    #[test]
    fn fleet_conserves_vehicles_and_stays_on_route() {
        let net = RoadNet::build_grid(2, 2, 100.0, [8.0, 16.0], 1).unwrap();
        let schedule = spawn_trips(&net, 0.3, 400.0, 3).unwrap();
        let mut fleet = Fleet::new(&net, &schedule, 1.0);
        let mut trace = Vec::new();
        for _ in 0..600 {
            fleet.tick().unwrap();
            assert_eq!(fleet.vehicles().len(), fleet.arrivals() - fleet.departures());
            for v in fleet.vehicles() {
                let trip = &schedule.trips[v.id as usize];
                assert_eq!(v.route, route(&net, trip.origin, trip.destination).unwrap());
                assert!(v.offset >= 0.0 && v.offset <= net.link(v.link()).length);
                assert!(v.speed <= net.link(v.link()).speed_limit);
            }
            assert!(fleet.vehicles().windows(2).all(|w| w[0].id < w[1].id));
            trace.push(fleet.vehicles().to_vec());
        }
        assert_eq!(fleet.arrivals(), schedule.len());
        assert_eq!(fleet.departures(), schedule.len());

        let mut again = Fleet::new(&net, &schedule, 1.0);
        for frame in &trace {
            again.tick().unwrap();
            assert_eq!(again.vehicles(), frame.as_slice());
        }
    }
}
