//! Multimodal network: roadway graph with per-class flow parameters plus a
//! schedule-based transit layer anchored to the roadway by access and
//! transfer edges. The graph is immutable after construction; derived
//! lookup tables live in [`GraphIndex`] and are rebuilt on load rather than
//! serialized.

pub mod gtfs;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ClassParams, NetworkConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::types::{ModeSet, VehicleClass};

pub use gtfs::{parse_gtfs, TransitFeed, TransitPattern, TripSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub zone: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: u64,
    pub from: u64,
    pub to: u64,
    pub length_m: f64,
    pub lanes: u32,
    pub ffs_mps: f64,
    pub jam_spacing_m: f64,
    pub wave_mps: f64,
    pub modes: ModeSet,
    pub congestable: bool,
}

impl Link {
    /// Free-flow speed for a vehicle class, m/s.
    pub fn ffs_class(&self, class: VehicleClass, p: &ClassParams) -> f64 {
        self.ffs_mps * p.ffs_factor(class)
    }

    /// Free-flow traversal time for a vehicle class, seconds (exact, f64).
    pub fn ff_time(&self, class: VehicleClass, p: &ClassParams) -> f64 {
        self.length_m / self.ffs_class(class, p)
    }
}

/// Equilibrium speed from the triangular speed-spacing relationship:
/// congested branch `w·(s − s_j)/s_j`, capped at the class free-flow speed
/// and floored at zero.
pub fn link_speed(link: &Link, spacing_m: f64, class: VehicleClass, p: &ClassParams) -> f64 {
    let vf = link.ffs_class(class, p);
    let sj = link.jam_spacing_m * p.jam_factor(class);
    let v = link.wave_mps * (spacing_m - sj) / sj;
    v.clamp(0.0, vf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitStop {
    pub id: String,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub park_and_ride: bool,
    /// Anchor roadway/walk node; `None` when no node lies within the
    /// access-walk radius (stop retained but unusable).
    pub node_id: Option<u64>,
    /// Straight-line distance to the anchor node, meters.
    pub access_dist_m: f64,
}

impl TransitStop {
    pub fn inaccessible(&self) -> bool {
        self.node_id.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Walk,
    Drive,
}

/// Stop ↔ roadway connection. Walk edges are bidirectional; drive edges
/// are one-way toward the stop (park-and-ride access).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessEdge {
    pub stop_id: String,
    pub node_id: u64,
    pub dist_m: f64,
    pub kind: AccessKind,
}

/// Directed stop-to-stop walking transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEdge {
    pub from_stop: String,
    pub to_stop: String,
    pub dist_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultimodalGraph {
    pub schema: u32,
    pub config_hash: String,
    pub walk_speed_mps: f64,
    pub bike_speed_mps: f64,
    pub max_access_walk_m: f64,
    pub class_params: ClassParams,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub stops: Vec<TransitStop>,
    pub patterns: Vec<TransitPattern>,
    pub access: Vec<AccessEdge>,
    pub transfers: Vec<TransferEdge>,
    /// Representative node per zone.
    pub centroids: BTreeMap<u32, u64>,
    #[serde(skip)]
    pub idx: GraphIndex,
}

impl PartialEq for MultimodalGraph {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.config_hash == other.config_hash
            && self.walk_speed_mps == other.walk_speed_mps
            && self.bike_speed_mps == other.bike_speed_mps
            && self.max_access_walk_m == other.max_access_walk_m
            && self.nodes == other.nodes
            && self.links == other.links
            && self.stops == other.stops
            && self.patterns == other.patterns
            && self.access == other.access
            && self.transfers == other.transfers
            && self.centroids == other.centroids
    }
}

/// Derived lookups; everything here is reconstructed from the data fields.
#[derive(Debug, Clone, Default)]
pub struct GraphIndex {
    pub node_of: HashMap<u64, usize>,
    pub link_of: HashMap<u64, usize>,
    pub stop_of: HashMap<String, usize>,
    /// Outgoing link indices per node index.
    pub out_links: Vec<Vec<usize>>,
    pub link_from: Vec<usize>,
    pub link_to: Vec<usize>,
    /// Anchor node index per stop; None = inaccessible.
    pub stop_node: Vec<Option<usize>>,
    pub stop_drive_access: Vec<bool>,
    /// Stops walk-anchored at each node.
    pub node_stops: Vec<Vec<usize>>,
    /// (pattern, position) pairs per stop.
    pub stop_patterns: Vec<Vec<(usize, usize)>>,
    /// Stop indices per pattern (same order as pattern.stops).
    pub pattern_stops: Vec<Vec<usize>>,
    /// Walk transfers per stop: (destination stop, meters).
    pub stop_transfers: Vec<Vec<(usize, f64)>>,
    /// Per bus pattern: link-index path for each consecutive stop pair.
    /// None for rail and for bus patterns that could not be mapped to the
    /// roadway (those advance by schedule instead).
    pub bus_paths: Vec<Option<Vec<Vec<usize>>>>,
    /// Upper bound on any movement speed in the network, m/s.
    pub vmax_mps: f64,
    /// Centroid node index per zone.
    pub zone_centroid_idx: BTreeMap<u32, usize>,
}

fn euclid(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    (ax - bx).hypot(ay - by)
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    id: u64,
    x: f64,
    y: f64,
    zone: u32,
}

#[derive(Debug, Deserialize)]
struct LinkRow {
    id: u64,
    from: u64,
    to: u64,
    length_m: f64,
    lanes: u32,
    ffs_mps: f64,
    jam_spacing_m: f64,
    wave_mps: f64,
    modes: String,
    congestable: String,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Reads the two roadway CSVs. Schema:
/// `nodes.csv`: id,x,y,zone — `links.csv`: id,from,to,length_m,lanes,
/// ffs_mps,jam_spacing_m,wave_mps,modes,congestable (modes pipe-separated).
pub fn load_roadway(nodes_path: &Path, links_path: &Path) -> Result<(Vec<Node>, Vec<Link>)> {
    let node_rows: Vec<NodeRow> = io::read_plain_csv(nodes_path)?;
    let mut nodes = Vec::with_capacity(node_rows.len());
    for r in node_rows {
        if !r.x.is_finite() || !r.y.is_finite() {
            return Err(Error::parse(
                nodes_path,
                format!("node {}: non-finite coordinates", r.id),
            ));
        }
        nodes.push(Node {
            id: r.id,
            x: r.x,
            y: r.y,
            zone: r.zone,
        });
    }
    let link_rows: Vec<LinkRow> = io::read_plain_csv(links_path)?;
    let mut links = Vec::with_capacity(link_rows.len());
    for r in link_rows {
        let modes: ModeSet = r
            .modes
            .parse()
            .map_err(|e: Error| Error::parse(links_path, format!("link {}: {e}", r.id)))?;
        let congestable = parse_bool(&r.congestable).ok_or_else(|| {
            Error::parse(
                links_path,
                format!("link {}: bad congestable value {:?}", r.id, r.congestable),
            )
        })?;
        links.push(Link {
            id: r.id,
            from: r.from,
            to: r.to,
            length_m: r.length_m,
            lanes: r.lanes,
            ffs_mps: r.ffs_mps,
            jam_spacing_m: r.jam_spacing_m,
            wave_mps: r.wave_mps,
            modes,
            congestable,
        });
    }
    validate_roadway(&nodes, &links, links_path)?;
    Ok((nodes, links))
}

fn validate_roadway(nodes: &[Node], links: &[Link], context: &Path) -> Result<()> {
    let mut node_ids = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if node_ids.insert(n.id, i).is_some() {
            return Err(Error::parse(context, format!("duplicate node id {}", n.id)));
        }
    }
    let mut link_ids = HashMap::new();
    for (i, l) in links.iter().enumerate() {
        if link_ids.insert(l.id, i).is_some() {
            return Err(Error::parse(context, format!("duplicate link id {}", l.id)));
        }
        if !node_ids.contains_key(&l.from) || !node_ids.contains_key(&l.to) {
            return Err(Error::parse(
                context,
                format!("link {} references unknown node {} or {}", l.id, l.from, l.to),
            ));
        }
        if !(l.length_m > 0.0) {
            return Err(Error::parse(
                context,
                format!("link {}: length must be positive, got {}", l.id, l.length_m),
            ));
        }
        if l.lanes < 1 {
            return Err(Error::parse(context, format!("link {}: lanes must be >= 1", l.id)));
        }
        for (name, v) in [
            ("ffs_mps", l.ffs_mps),
            ("jam_spacing_m", l.jam_spacing_m),
            ("wave_mps", l.wave_mps),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::parse(
                    context,
                    format!("link {}: {name} must be positive, got {v}", l.id),
                ));
            }
        }
    }
    Ok(())
}

/// Assembles the multimodal graph: anchors stops to their nearest node,
/// creates walk/drive access edges and stop-to-stop transfers, picks zone
/// centroids, and builds the derived index.
pub fn build_graph(
    nodes: Vec<Node>,
    links: Vec<Link>,
    feed: Option<TransitFeed>,
    cfg: &NetworkConfig,
    config_hash: &str,
) -> Result<MultimodalGraph> {
    validate_roadway(&nodes, &links, Path::new("roadway"))?;
    if nodes.is_empty() {
        return Err(Error::Config("network has no nodes".into()));
    }
    let feed = feed.unwrap_or_default();

    let mut stops = Vec::with_capacity(feed.stops.len());
    let mut access = Vec::new();
    for fs in &feed.stops {
        // Nearest node, ties broken by lower node id.
        let mut best: Option<(f64, &Node)> = None;
        for n in &nodes {
            let d = euclid(fs.x, fs.y, n.x, n.y);
            let better = match best {
                None => true,
                Some((bd, bn)) => d < bd || (d == bd && n.id < bn.id),
            };
            if better {
                best = Some((d, n));
            }
        }
        let (dist, node) = best.expect("nodes checked non-empty");
        let anchored = dist <= cfg.max_access_walk_m;
        if anchored {
            access.push(AccessEdge {
                stop_id: fs.id.clone(),
                node_id: node.id,
                dist_m: dist,
                kind: AccessKind::Walk,
            });
            if fs.park_and_ride {
                access.push(AccessEdge {
                    stop_id: fs.id.clone(),
                    node_id: node.id,
                    dist_m: dist,
                    kind: AccessKind::Drive,
                });
            }
        } else {
            log::warn!(
                "stop {} is {dist:.0} m from the nearest node (max {}); flagged inaccessible",
                fs.id,
                cfg.max_access_walk_m
            );
        }
        stops.push(TransitStop {
            id: fs.id.clone(),
            name: fs.name.clone(),
            x: fs.x,
            y: fs.y,
            park_and_ride: fs.park_and_ride,
            node_id: anchored.then_some(node.id),
            access_dist_m: dist,
        });
    }

    // Directed stop-to-stop transfers within walking range.
    let mut transfers = Vec::new();
    for a in &stops {
        for b in &stops {
            if a.id == b.id {
                continue;
            }
            let d = euclid(a.x, a.y, b.x, b.y);
            if d <= cfg.max_access_walk_m {
                transfers.push(TransferEdge {
                    from_stop: a.id.clone(),
                    to_stop: b.id.clone(),
                    dist_m: d,
                });
            }
        }
    }

    let centroids = zone_centroids(&nodes);

    let mut graph = MultimodalGraph {
        schema: 1,
        config_hash: config_hash.to_string(),
        walk_speed_mps: cfg.walk_speed_mps,
        bike_speed_mps: cfg.bike_speed_mps,
        max_access_walk_m: cfg.max_access_walk_m,
        class_params: cfg.class_params.clone(),
        nodes,
        links,
        stops,
        patterns: feed.patterns,
        access,
        transfers,
        centroids,
        idx: GraphIndex::default(),
    };
    graph.rebuild_index()?;
    Ok(graph)
}

/// Picks, for every zone, the node closest to the zone's coordinate mean
/// (ties broken by lower node id).
fn zone_centroids(nodes: &[Node]) -> BTreeMap<u32, u64> {
    let mut sums: BTreeMap<u32, (f64, f64, f64)> = BTreeMap::new();
    for n in nodes {
        let e = sums.entry(n.zone).or_insert((0.0, 0.0, 0.0));
        e.0 += n.x;
        e.1 += n.y;
        e.2 += 1.0;
    }
    let mut out = BTreeMap::new();
    for (&zone, &(sx, sy, count)) in &sums {
        let (cx, cy) = (sx / count, sy / count);
        let mut best: Option<(f64, u64)> = None;
        for n in nodes.iter().filter(|n| n.zone == zone) {
            let d = euclid(n.x, n.y, cx, cy);
            let better = match best {
                None => true,
                Some((bd, bid)) => d < bd || (d == bd && n.id < bid),
            };
            if better {
                best = Some((d, n.id));
            }
        }
        out.insert(zone, best.expect("zone has at least one node").1);
    }
    out
}

impl MultimodalGraph {
    /// Rebuilds every derived lookup from the data fields. Must be called
    /// after deserialization or any structural edit.
    pub fn rebuild_index(&mut self) -> Result<()> {
        let mut idx = GraphIndex::default();
        for (i, n) in self.nodes.iter().enumerate() {
            idx.node_of.insert(n.id, i);
        }
        idx.out_links = vec![Vec::new(); self.nodes.len()];
        idx.link_from = Vec::with_capacity(self.links.len());
        idx.link_to = Vec::with_capacity(self.links.len());
        for (i, l) in self.links.iter().enumerate() {
            idx.link_of.insert(l.id, i);
            let from = *idx
                .node_of
                .get(&l.from)
                .ok_or_else(|| Error::Internal(format!("link {} dangling from-node", l.id)))?;
            let to = *idx
                .node_of
                .get(&l.to)
                .ok_or_else(|| Error::Internal(format!("link {} dangling to-node", l.id)))?;
            idx.out_links[from].push(i);
            idx.link_from.push(from);
            idx.link_to.push(to);
        }

        idx.stop_node = vec![None; self.stops.len()];
        idx.stop_drive_access = vec![false; self.stops.len()];
        idx.node_stops = vec![Vec::new(); self.nodes.len()];
        for (i, s) in self.stops.iter().enumerate() {
            idx.stop_of.insert(s.id.clone(), i);
        }
        for e in &self.access {
            let si = *idx
                .stop_of
                .get(&e.stop_id)
                .ok_or_else(|| Error::Internal(format!("access edge dangling stop {}", e.stop_id)))?;
            let ni = *idx
                .node_of
                .get(&e.node_id)
                .ok_or_else(|| Error::Internal(format!("access edge dangling node {}", e.node_id)))?;
            match e.kind {
                AccessKind::Walk => {
                    idx.stop_node[si] = Some(ni);
                    idx.node_stops[ni].push(si);
                }
                AccessKind::Drive => idx.stop_drive_access[si] = true,
            }
        }
        idx.stop_transfers = vec![Vec::new(); self.stops.len()];
        for t in &self.transfers {
            let a = *idx
                .stop_of
                .get(&t.from_stop)
                .ok_or_else(|| Error::Internal(format!("transfer dangling stop {}", t.from_stop)))?;
            let b = *idx
                .stop_of
                .get(&t.to_stop)
                .ok_or_else(|| Error::Internal(format!("transfer dangling stop {}", t.to_stop)))?;
            idx.stop_transfers[a].push((b, t.dist_m));
        }

        idx.stop_patterns = vec![Vec::new(); self.stops.len()];
        idx.pattern_stops = Vec::with_capacity(self.patterns.len());
        for (pi, p) in self.patterns.iter().enumerate() {
            let mut stop_idxs = Vec::with_capacity(p.stops.len());
            for (pos, sid) in p.stops.iter().enumerate() {
                let si = *idx.stop_of.get(sid).ok_or_else(|| {
                    Error::Internal(format!("pattern {} references unknown stop {sid}", p.route_id))
                })?;
                idx.stop_patterns[si].push((pi, pos));
                stop_idxs.push(si);
            }
            idx.pattern_stops.push(stop_idxs);
        }

        idx.vmax_mps = self.compute_vmax();
        idx.zone_centroid_idx = self
            .centroids
            .iter()
            .map(|(&z, nid)| (z, idx.node_of[nid]))
            .collect();

        // Bus patterns get a roadway path per stop-to-stop segment so that
        // simulated buses consume road capacity. Rail (and any bus pattern
        // that cannot be mapped) advances by schedule instead.
        idx.bus_paths = Vec::with_capacity(self.patterns.len());
        for (pi, p) in self.patterns.iter().enumerate() {
            if p.mode.is_rail() {
                idx.bus_paths.push(None);
                continue;
            }
            let mut segments = Vec::with_capacity(p.stops.len().saturating_sub(1));
            let mut ok = true;
            for w in idx.pattern_stops[pi].windows(2) {
                let (a, b) = (w[0], w[1]);
                let (Some(na), Some(nb)) = (idx.stop_node[a], idx.stop_node[b]) else {
                    ok = false;
                    break;
                };
                match free_flow_path(self, &idx, na, nb, VehicleClass::Bus) {
                    Some(path) => segments.push(path),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                log::warn!(
                    "bus pattern {} (route {}) not mappable to the roadway; it will run by schedule",
                    pi,
                    p.route_id
                );
            }
            idx.bus_paths.push(ok.then_some(segments));
        }

        self.idx = idx;
        Ok(())
    }

    fn compute_vmax(&self) -> f64 {
        let mut vmax: f64 = self
            .walk_speed_mps
            .max(self.bike_speed_mps);
        for l in &self.links {
            vmax = vmax.max(l.ffs_mps);
        }
        // Scheduled rides can imply speeds above any road speed; the A*
        // heuristic divides by vmax, so account for them.
        for p in &self.patterns {
            let coords: Vec<Option<(f64, f64)>> = p
                .stops
                .iter()
                .map(|sid| {
                    self.stops
                        .iter()
                        .find(|s| &s.id == sid)
                        .map(|s| (s.x, s.y))
                })
                .collect();
            for t in &p.trips {
                for i in 0..p.stops.len() - 1 {
                    if let (Some(a), Some(b)) = (coords[i], coords[i + 1]) {
                        let dt = t.arr[i + 1].saturating_sub(t.dep[i]).max(1) as f64;
                        vmax = vmax.max(euclid(a.0, a.1, b.0, b.1) / dt);
                    }
                }
            }
        }
        vmax
    }

    /// Largest stable traffic time step: min over congestable links of
    /// jam_spacing / wave_speed (car class is binding).
    pub fn max_stable_dt(&self) -> f64 {
        self.links
            .iter()
            .filter(|l| l.congestable)
            .map(|l| l.jam_spacing_m / l.wave_mps)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn zones(&self) -> Vec<u32> {
        self.centroids.keys().copied().collect()
    }

    pub fn centroid_node(&self, zone: u32) -> Result<usize> {
        self.idx
            .zone_centroid_idx
            .get(&zone)
            .copied()
            .ok_or_else(|| Error::Config(format!("zone {zone} has no nodes")))
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn straight_line_m(&self, a: usize, b: usize) -> f64 {
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        euclid(na.x, na.y, nb.x, nb.y)
    }

    pub fn has_transit(&self) -> bool {
        !self.patterns.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<MultimodalGraph> {
        let mut graph: MultimodalGraph = io::read_json(path)?;
        if graph.schema != 1 {
            return Err(Error::parse(
                path,
                format!("unsupported graph schema {}", graph.schema),
            ));
        }
        graph.rebuild_index()?;
        Ok(graph)
    }
}

/// Free-flow shortest link path for `class` between two node indices.
/// Returns the ordered link-index sequence, or None when unreachable.
fn free_flow_path(
    g: &MultimodalGraph,
    idx: &GraphIndex,
    from: usize,
    to: usize,
    class: VehicleClass,
) -> Option<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    if from == to {
        return Some(Vec::new());
    }
    let n = g.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    // Order by (time bits, node) — times are non-negative so bit order
    // matches numeric order.
    heap.push(Reverse((0u64, from)));
    while let Some(Reverse((dbits, u))) = heap.pop() {
        let d = f64::from_bits(dbits);
        if d > dist[u] {
            continue;
        }
        if u == to {
            break;
        }
        for &li in &idx.out_links[u] {
            let l = &g.links[li];
            if !l.modes.allows_class(class) {
                continue;
            }
            let v = idx.link_to[li];
            let nd = d + l.ff_time(class, &g.class_params);
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = Some(li);
                heap.push(Reverse((nd.to_bits(), v)));
            }
        }
    }
    if dist[to].is_infinite() {
        return None;
    }
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let li = prev[cur]?;
        path.push(li);
        cur = idx.link_from[li];
    }
    path.reverse();
    Some(path)
}
