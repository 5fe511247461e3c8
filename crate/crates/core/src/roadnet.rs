//! Road network: links with planar geometry, endpoint-derived adjacency and
//! the application's Zone of Interest.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Endpoints closer than this are the same intersection.
pub const ENDPOINT_TOLERANCE: f64 = 1e-6;

pub type LinkId = usize;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid link {id}: {reason}")]
    InvalidLink { id: LinkId, reason: String },
    #[error("link ids must be exactly 0..{n}, found {found}")]
    BadLinkIds { n: usize, found: LinkId },
    #[error("unknown link in zoi: {0}")]
    UnknownZoiLink(LinkId),
    #[error("unknown link in adjacency: {0}")]
    UnknownAdjacencyLink(LinkId),
    #[error("adjacency not symmetric: {0} -> {1} has no reverse entry")]
    AsymmetricAdjacency(LinkId, LinkId),
    #[error("network is disconnected: link {0} unreachable from link 0")]
    Disconnected(LinkId),
    #[error("network has no links")]
    Empty,
    #[error("cannot parse network file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read network file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn coincides(&self, other: &Point) -> bool {
        (self.x - other.x).abs() <= ENDPOINT_TOLERANCE && (self.y - other.y).abs() <= ENDPOINT_TOLERANCE
    }

    /// Point a fraction `t` of the way from `self` to `other`.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub a: Point,
    pub b: Point,
    pub length: f64,
    /// Meters per second.
    pub speed_limit: f64,
}

impl Link {
    pub fn new(id: LinkId, a: Point, b: Point, speed_limit: f64) -> Result<Self, NetError> {
        let length = a.distance(&b);
        if !(length > 0.0) {
            return Err(NetError::InvalidLink { id, reason: "zero length".into() });
        }
        if !(speed_limit > 0.0) || !speed_limit.is_finite() {
            return Err(NetError::InvalidLink { id, reason: format!("speed limit {speed_limit} must be positive") });
        }
        Ok(Link { id, a, b, length, speed_limit })
    }

    /// Endpoint shared with `other`, if any.
    pub fn shared_endpoint(&self, other: &Link) -> Option<Point> {
        [self.a, self.b]
            .into_iter()
            .find(|p| p.coincides(&other.a) || p.coincides(&other.b))
    }

    pub fn touches(&self, other: &Link) -> bool {
        self.shared_endpoint(other).is_some()
    }
}

/// Immutable road network. Link ids are `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNet {
    links: Vec<Link>,
    adjacency: Vec<BTreeSet<LinkId>>,
    zoi: BTreeSet<LinkId>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetFile {
    links: Vec<LinkRecord>,
    #[serde(default)]
    zoi: Vec<LinkId>,
    /// Optional explicit adjacency. When absent it is derived from shared endpoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adjacency: Option<Vec<Vec<LinkId>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRecord {
    id: LinkId,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    speed_limit: f64,
}

impl RoadNet {
    /// Builds a network from links whose ids must be `0..links.len()`, deriving
    /// adjacency from shared endpoints.
    pub fn new(links: Vec<Link>, zoi: impl IntoIterator<Item = LinkId>) -> Result<Self, NetError> {
        let adjacency = derive_adjacency(&links);
        Self::with_adjacency(links, adjacency, zoi)
    }

    fn with_adjacency(
        mut links: Vec<Link>,
        adjacency: Vec<BTreeSet<LinkId>>,
        zoi: impl IntoIterator<Item = LinkId>,
    ) -> Result<Self, NetError> {
        if links.is_empty() {
            return Err(NetError::Empty);
        }
        links.sort_by_key(|l| l.id);
        let n = links.len();
        for (i, l) in links.iter().enumerate() {
            if l.id != i {
                return Err(NetError::BadLinkIds { n, found: l.id });
            }
        }
        for (i, adj) in adjacency.iter().enumerate() {
            for &j in adj {
                if j >= n {
                    return Err(NetError::UnknownAdjacencyLink(j));
                }
                if !adjacency[j].contains(&i) {
                    return Err(NetError::AsymmetricAdjacency(i, j));
                }
            }
        }
        let zoi: BTreeSet<LinkId> = zoi.into_iter().collect();
        if let Some(&bad) = zoi.iter().find(|&&z| z >= n) {
            return Err(NetError::UnknownZoiLink(bad));
        }
        let net = RoadNet { links, adjacency, zoi };
        if let Some(unreached) = net.first_unreachable() {
            return Err(NetError::Disconnected(unreached));
        }
        Ok(net)
    }

    /// Manhattan grid of `rows` x `cols` blocks. Horizontal links come first
    /// (row by row, west to east), then vertical links (column by column,
    /// south to north). Speed limits are uniform on `speed_limit_range`.
    pub fn build_grid(
        rows: usize,
        cols: usize,
        link_length: f64,
        speed_limit_range: [f64; 2],
        rng_seed: u64,
    ) -> Result<Self, NetError> {
        let [lo, hi] = speed_limit_range;
        if rows == 0 || cols == 0 {
            return Err(NetError::InvalidGrid(format!("dimensions must be positive, got {rows}x{cols}")));
        }
        if !(link_length > 0.0) || !link_length.is_finite() {
            return Err(NetError::InvalidGrid(format!("link length {link_length} must be positive")));
        }
        if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
            return Err(NetError::InvalidGrid(format!("speed range [{lo}, {hi}] must satisfy 0 < min <= max")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut speed = || if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        let node = |i: usize, j: usize| Point::new(i as f64 * link_length, j as f64 * link_length);
        let mut links = Vec::with_capacity(rows * (cols + 1) + cols * (rows + 1));
        for j in 0..=rows {
            for i in 0..cols {
                let id = links.len();
                links.push(Link::new(id, node(i, j), node(i + 1, j), speed())?);
            }
        }
        for i in 0..=cols {
            for j in 0..rows {
                let id = links.len();
                links.push(Link::new(id, node(i, j), node(i, j + 1), speed())?);
            }
        }
        RoadNet::new(links, [])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let file: NetFile = serde_json::from_str(text)?;
        let links = file
            .links
            .iter()
            .map(|r| Link::new(r.id, Point::new(r.x1, r.y1), Point::new(r.x2, r.y2), r.speed_limit))
            .collect::<Result<Vec<_>, _>>()?;
        match file.adjacency {
            None => RoadNet::new(links, file.zoi),
            Some(adj) => {
                if adj.len() != links.len() {
                    return Err(NetError::InvalidGrid(format!(
                        "adjacency has {} rows for {} links",
                        adj.len(),
                        links.len()
                    )));
                }
                let adjacency = adj.into_iter().map(|row| row.into_iter().collect()).collect();
                RoadNet::with_adjacency(links, adjacency, file.zoi)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let file = NetFile {
            links: self
                .links
                .iter()
                .map(|l| LinkRecord { id: l.id, x1: l.a.x, y1: l.a.y, x2: l.b.x, y2: l.b.y, speed_limit: l.speed_limit })
                .collect(),
            zoi: self.zoi.iter().copied().collect(),
            adjacency: None,
        };
        serde_json::to_string_pretty(&file).expect("network serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Same network with a different Zone of Interest.
    pub fn with_zoi(&self, zoi: impl IntoIterator<Item = LinkId>) -> Result<Self, NetError> {
        RoadNet::with_adjacency(self.links.clone(), self.adjacency.clone(), zoi)
    }

    /// Drops `removed` links and renumbers the rest in their original order.
    /// The Zone of Interest is remapped; removing a ZOI link is an error.
    pub fn without_links(&self, removed: &[LinkId]) -> Result<Self, NetError> {
        let removed: BTreeSet<LinkId> = removed.iter().copied().collect();
        if let Some(&bad) = removed.iter().find(|&&r| r >= self.len()) {
            return Err(NetError::InvalidLink { id: bad, reason: "cannot remove unknown link".into() });
        }
        if let Some(&z) = self.zoi.iter().find(|z| removed.contains(z)) {
            return Err(NetError::InvalidLink { id: z, reason: "cannot remove a zoi link".into() });
        }
        let mut remap = vec![None; self.len()];
        let mut links = Vec::new();
        for l in &self.links {
            if !removed.contains(&l.id) {
                remap[l.id] = Some(links.len());
                links.push(Link { id: links.len(), ..l.clone() });
            }
        }
        let zoi = self.zoi.iter().map(|&z| remap[z].expect("zoi link kept"));
        RoadNet::new(links, zoi)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id]
    }

    pub fn neighbors(&self, id: LinkId) -> &BTreeSet<LinkId> {
        &self.adjacency[id]
    }

    pub fn are_adjacent(&self, a: LinkId, b: LinkId) -> bool {
        self.adjacency[a].contains(&b)
    }

    pub fn zoi(&self) -> &BTreeSet<LinkId> {
        &self.zoi
    }

    /// Links lying on the bounding box of the network; trips enter and leave
    /// the map through these. Falls back to every link when fewer than two
    /// qualify.
    pub fn boundary_links(&self) -> Vec<LinkId> {
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for l in &self.links {
            for p in [l.a, l.b] {
                min_x = min_x.min(p.x);
                max_x = max_x.max(p.x);
                min_y = min_y.min(p.y);
                max_y = max_y.max(p.y);
            }
        }
        let near = |v: f64, w: f64| (v - w).abs() <= ENDPOINT_TOLERANCE;
        let on_edge = |l: &Link| {
            (near(l.a.x, min_x) && near(l.b.x, min_x))
                || (near(l.a.x, max_x) && near(l.b.x, max_x))
                || (near(l.a.y, min_y) && near(l.b.y, min_y))
                || (near(l.a.y, max_y) && near(l.b.y, max_y))
        };
        let boundary: Vec<LinkId> = self.links.iter().filter(|l| on_edge(l)).map(|l| l.id).collect();
        if boundary.len() >= 2 {
            boundary
        } else {
            (0..self.len()).collect()
        }
    }

    fn first_unreachable(&self) -> Option<LinkId> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(l) = queue.pop_front() {
            for &m in &self.adjacency[l] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen.iter().position(|s| !s)
    }
}

fn derive_adjacency(links: &[Link]) -> Vec<BTreeSet<LinkId>> {
    let n = links.iter().map(|l| l.id + 1).max().unwrap_or(0);
    let mut adjacency = vec![BTreeSet::new(); n.max(links.len())];
    for (i, li) in links.iter().enumerate() {
        for lj in &links[i + 1..] {
            if li.touches(lj) {
                adjacency[li.id].insert(lj.id);
                adjacency[lj.id].insert(li.id);
            }
        }
    }
    adjacency
}
