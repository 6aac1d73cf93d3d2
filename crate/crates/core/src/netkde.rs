//! Network-constrained kernel density estimation.
//!
//! Events are snapped onto the nearest edge of an undirected road network,
//! edges are subdivided into equal-length lixels, and a Gaussian kernel
//! over shortest-path distance spreads each event's weight onto nearby
//! lixel centers:
//!
//! `lambda(s) = (1/r) * sum_i w_i * K(d_is / r)`
//!
//! with `K` the standard normal density and `d_is` the shortest-path
//! distance along the network. This is the plain network estimator; it
//! does not apply an equal-split correction at junctions, so densities
//! around high-degree nodes are over-estimated relative to split kernels.
//! Contributions beyond the truncation radius (default `3r`, > 99.7% of
//! kernel mass) are dropped, which also bounds the shortest-path search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashMap;

use thiserror::Error;

use crate::geom;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{edge}` references unknown node `{node}`")]
    UnknownNode { edge: String, node: String },
    #[error("edge `{0}` has zero length")]
    ZeroLengthEdge(String),
    #[error("edge `{0}` geometry does not start/end at its endpoint nodes")]
    GeometryMismatch(String),
    #[error("node `{0}` has non-finite coordinates")]
    NonFiniteNode(String),
}

#[derive(Debug, Clone)]
pub struct NetNode {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct NetEdge {
    pub id: String,
    /// Node indices into [`RoadNetwork::nodes`].
    pub a: usize,
    pub b: usize,
    pub geometry: Vec<[f64; 2]>,
    /// Arc length of the geometry, meters.
    pub length: f64,
    /// Cumulative arc length at each geometry vertex.
    cum: Vec<f64>,
}

/// Edge description prior to validation; `geometry` defaults to the
/// straight segment between the endpoint nodes.
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub geometry: Option<Vec<[f64; 2]>>,
}

/// Undirected weighted graph with polyline edge geometry. Edges are stored
/// sorted by id so that index order equals id order; all tie-breaks below
/// rely on that.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<NetNode>,
    edges: Vec<NetEdge>,
    /// Per node: (edge index, peer node index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Endpoint-geometry match tolerance, meters.
const ENDPOINT_EPS: f64 = 1e-6;

impl RoadNetwork {
    pub fn new(
        nodes: Vec<(String, f64, f64)>,
        edges: Vec<EdgeSpec>,
    ) -> Result<RoadNetwork, NetworkError> {
        let mut node_index: HashMap<String, usize> = HashMap::new();
        let mut net_nodes = Vec::with_capacity(nodes.len());
        for (id, x, y) in nodes {
            if !x.is_finite() || !y.is_finite() {
                return Err(NetworkError::NonFiniteNode(id));
            }
            if node_index.insert(id.clone(), net_nodes.len()).is_some() {
                return Err(NetworkError::DuplicateNode(id));
            }
            net_nodes.push(NetNode { id, x, y });
        }

        let mut specs = edges;
        specs.sort_by(|l, r| l.id.cmp(&r.id));
        let mut net_edges = Vec::with_capacity(specs.len());
        let mut seen = HashMap::new();
        for spec in specs {
            if seen.insert(spec.id.clone(), ()).is_some() {
                return Err(NetworkError::DuplicateEdge(spec.id));
            }
            let a = *node_index
                .get(&spec.from)
                .ok_or_else(|| NetworkError::UnknownNode {
                    edge: spec.id.clone(),
                    node: spec.from.clone(),
                })?;
            let b = *node_index
                .get(&spec.to)
                .ok_or_else(|| NetworkError::UnknownNode {
                    edge: spec.id.clone(),
                    node: spec.to.clone(),
                })?;
            let geometry = spec.geometry.unwrap_or_else(|| {
                vec![
                    [net_nodes[a].x, net_nodes[a].y],
                    [net_nodes[b].x, net_nodes[b].y],
                ]
            });
            let start_ok =
                geom::segment_length(geometry[0], [net_nodes[a].x, net_nodes[a].y]) <= ENDPOINT_EPS;
            let end_ok = geom::segment_length(
                *geometry.last().unwrap(),
                [net_nodes[b].x, net_nodes[b].y],
            ) <= ENDPOINT_EPS;
            if !start_ok || !end_ok {
                return Err(NetworkError::GeometryMismatch(spec.id));
            }
            let mut cum = Vec::with_capacity(geometry.len());
            let mut acc = 0.0;
            cum.push(0.0);
            for w in geometry.windows(2) {
                acc += geom::segment_length(w[0], w[1]);
                cum.push(acc);
            }
            if acc <= 0.0 {
                return Err(NetworkError::ZeroLengthEdge(spec.id));
            }
            net_edges.push(NetEdge {
                id: spec.id,
                a,
                b,
                geometry,
                length: acc,
                cum,
            });
        }

        let mut adjacency = vec![Vec::new(); net_nodes.len()];
        for (ei, edge) in net_edges.iter().enumerate() {
            adjacency[edge.a].push((ei, edge.b));
            adjacency[edge.b].push((ei, edge.a));
        }

        Ok(RoadNetwork {
            nodes: net_nodes,
            edges: net_edges,
            adjacency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, idx: usize) -> &NetNode {
        &self.nodes[idx]
    }

    pub fn edge(&self, idx: usize) -> &NetEdge {
        &self.edges[idx]
    }

    pub fn edges(&self) -> &[NetEdge] {
        &self.edges
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Planar point at `offset` meters along the edge geometry.
    pub fn point_at(&self, pos: NetworkPosition) -> [f64; 2] {
        let edge = &self.edges[pos.edge];
        let off = pos.offset.clamp(0.0, edge.length);
        match edge.cum.iter().rposition(|&c| c <= off) {
            Some(i) if i + 1 < edge.geometry.len() => {
                let seg_len = edge.cum[i + 1] - edge.cum[i];
                let t = if seg_len > 0.0 {
                    (off - edge.cum[i]) / seg_len
                } else {
                    0.0
                };
                let a = edge.geometry[i];
                let b = edge.geometry[i + 1];
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            }
            _ => *edge.geometry.last().unwrap(),
        }
    }

    /// Sub-polyline of an edge between two offsets, for lixel export.
    pub fn sub_polyline(&self, edge_idx: usize, from: f64, to: f64) -> Vec<[f64; 2]> {
        let edge = &self.edges[edge_idx];
        let from = from.clamp(0.0, edge.length);
        let to = to.clamp(0.0, edge.length);
        let mut points = vec![self.point_at(NetworkPosition {
            edge: edge_idx,
            offset: from,
        })];
        for (i, &c) in edge.cum.iter().enumerate() {
            if c > from && c < to {
                points.push(edge.geometry[i]);
            }
        }
        points.push(self.point_at(NetworkPosition {
            edge: edge_idx,
            offset: to,
        }));
        points
    }

    /// Shortest distance from an interior position to every node, pruned at
    /// `cutoff`. Unreached nodes stay at infinity.
    pub fn node_distances(&self, from: NetworkPosition, cutoff: f64) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        let edge = &self.edges[from.edge];
        let seeds = [(edge.a, from.offset), (edge.b, edge.length - from.offset)];
        for (node, d) in seeds {
            if d <= cutoff && d < dist[node] {
                dist[node] = d;
                heap.push(HeapEntry { dist: d, node });
            }
        }
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(ei, peer) in &self.adjacency[node] {
                let nd = d + self.edges[ei].length;
                if nd <= cutoff && nd < dist[peer] {
                    dist[peer] = nd;
                    heap.push(HeapEntry {
                        dist: nd,
                        node: peer,
                    });
                }
            }
        }
        dist
    }
}

/// Min-heap entry ordered by distance.
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// A location on the network: meters from the edge's `from` node along its
/// geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkPosition {
    pub edge: usize,
    pub offset: f64,
}

/// Snap result: nearest network position plus the Euclidean snap distance.
#[derive(Debug, Clone, Copy)]
pub struct Snapped {
    pub position: NetworkPosition,
    pub distance: f64,
    /// The projected point on the network.
    pub point: [f64; 2],
}

/// Orthogonal projection of a point onto the nearest edge polyline.
/// Returns `None` when the nearest distance exceeds `tolerance`; exact ties
/// between edges resolve to the smallest edge id.
pub fn snap_to_network(
    network: &RoadNetwork,
    x: f64,
    y: f64,
    tolerance: f64,
) -> Option<Snapped> {
    let mut best: Option<(f64, usize, f64)> = None; // (d2, edge, offset)
    for (ei, edge) in network.edges.iter().enumerate() {
        for (si, seg) in edge.geometry.windows(2).enumerate() {
            let (d2, t) = geom::dist2_point_segment([x, y], seg[0], seg[1]);
            let offset = edge.cum[si] + t * (edge.cum[si + 1] - edge.cum[si]);
            let better = match best {
                None => true,
                Some((bd2, _, _)) => d2 < bd2,
            };
            if better {
                best = Some((d2, ei, offset));
            }
        }
    }
    let (d2, edge, offset) = best?;
    let distance = d2.sqrt();
    if distance > tolerance {
        return None;
    }
    let position = NetworkPosition { edge, offset };
    Some(Snapped {
        position,
        distance,
        point: network.point_at(position),
    })
}

/// An equal-length subdivision of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lixel {
    pub edge: usize,
    /// Position of the lixel on its edge, 0-based.
    pub index: usize,
    pub offset_start: f64,
    pub offset_end: f64,
}

impl Lixel {
    pub fn length(&self) -> f64 {
        self.offset_end - self.offset_start
    }

    pub fn center_offset(&self) -> f64 {
        0.5 * (self.offset_start + self.offset_end)
    }

    pub fn center(&self) -> NetworkPosition {
        NetworkPosition {
            edge: self.edge,
            offset: self.center_offset(),
        }
    }

    /// Stable identifier derived from (edge id, index).
    pub fn id(&self, network: &RoadNetwork) -> String {
        format!("{}:{}", network.edge(self.edge).id, self.index)
    }
}

/// Split every edge into `ceil(length / unit)` lixels: full `unit`-length
/// pieces plus a shorter remainder, so no lixel exceeds the unit. Lixels
/// tile each edge exactly. Output is ordered by (edge id, index).
pub fn lixelize(network: &RoadNetwork, unit: f64) -> Vec<Lixel> {
    assert!(unit > 0.0, "lixel unit must be positive");
    let mut lixels = Vec::new();
    for (ei, edge) in network.edges.iter().enumerate() {
        let mut n_full = (edge.length / unit).floor() as usize;
        let mut remainder = edge.length - n_full as f64 * unit;
        // Absorb floating-point dust so exact multiples get no sliver lixel.
        if remainder <= edge.length * 1e-12 {
            remainder = 0.0;
        }
        if n_full == 0 && remainder == 0.0 {
            n_full = 1; // degenerate: edge much shorter than f64 dust window
        }
        let count = n_full + usize::from(remainder > 0.0);
        for k in 0..count {
            let start = k as f64 * unit;
            let end = if k + 1 == count {
                edge.length
            } else {
                (k + 1) as f64 * unit
            };
            lixels.push(Lixel {
                edge: ei,
                index: k,
                offset_start: start,
                offset_end: end,
            });
        }
    }
    lixels
}

/// How events are weighted in the density sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventWeight {
    /// Every event counts 1.
    Unit,
    /// Events carry their severity weight.
    Swi,
}

#[derive(Debug, Clone)]
pub struct KdeConfig {
    /// Kernel bandwidth `r`, meters.
    pub bandwidth: f64,
    /// Lixel unit length, meters.
    pub lixel_unit: f64,
    /// Maximum snap distance, meters.
    pub snap_tolerance: f64,
    /// Kernel contributions beyond this network distance are dropped.
    pub truncation_radius: f64,
    pub weight_mode: EventWeight,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            bandwidth: 200.0,
            lixel_unit: 200.0,
            snap_tolerance: 10.0,
            truncation_radius: 600.0,
            weight_mode: EventWeight::Unit,
        }
    }
}

#[derive(Debug, Error)]
pub enum NetKdeError {
    #[error("invalid KDE config: {0}")]
    InvalidConfig(String),
}

impl KdeConfig {
    pub fn validate(&self) -> Result<(), NetKdeError> {
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("lixel_unit", self.lixel_unit),
            ("snap_tolerance", self.snap_tolerance),
            ("truncation_radius", self.truncation_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(NetKdeError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.truncation_radius < self.bandwidth {
            return Err(NetKdeError::InvalidConfig(format!(
                "truncation_radius {} must be >= bandwidth {}",
                self.truncation_radius, self.bandwidth
            )));
        }
        Ok(())
    }
}

/// Standard normal density.
fn gaussian(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Shortest-path distance along the network between two interior
/// positions. Returns infinity when the distance exceeds `cutoff` or the
/// positions sit in different components.
pub fn network_distance(
    a: NetworkPosition,
    b: NetworkPosition,
    network: &RoadNetwork,
    cutoff: f64,
) -> f64 {
    let mut best = f64::INFINITY;
    if a.edge == b.edge {
        best = (a.offset - b.offset).abs();
    }
    let dist = network.node_distances(a, cutoff.min(best));
    let edge_b = network.edge(b.edge);
    for (node, entry) in [(edge_b.a, b.offset), (edge_b.b, edge_b.length - b.offset)] {
        let candidate = dist[node] + entry;
        if candidate < best {
            best = candidate;
        }
    }
    if best > cutoff {
        f64::INFINITY
    } else {
        best
    }
}

/// Gaussian network KDE evaluated at lixel centers. Events are
/// `(position, weight)` pairs; accumulation runs in input order, so caller
/// ordering fixes the floating-point reduction order.
pub fn net_kde(
    events: &[(NetworkPosition, f64)],
    lixels: &[Lixel],
    config: &KdeConfig,
    network: &RoadNetwork,
) -> Result<Vec<f64>, NetKdeError> {
    config.validate()?;
    let r = config.bandwidth;
    let trunc = config.truncation_radius;
    let mut densities = vec![0.0f64; lixels.len()];
    if events.is_empty() {
        return Ok(densities);
    }

    // Lixels arrive grouped by edge; index the ranges.
    let mut edge_ranges: Vec<(usize, usize)> = vec![(0, 0); network.n_edges()];
    {
        let mut i = 0;
        while i < lixels.len() {
            let e = lixels[i].edge;
            let start = i;
            while i < lixels.len() && lixels[i].edge == e {
                i += 1;
            }
            edge_ranges[e] = (start, i);
        }
    }

    for &(pos, weight) in events {
        debug_assert!(weight >= 0.0, "event weights must be nonnegative");
        let node_dist = network.node_distances(pos, trunc);
        for (ei, edge) in network.edges().iter().enumerate() {
            let via_a = node_dist[edge.a];
            let via_b = node_dist[edge.b];
            let same_edge = ei == pos.edge;
            if !same_edge && via_a == f64::INFINITY && via_b == f64::INFINITY {
                continue;
            }
            let (start, end) = edge_ranges[ei];
            for (li, lixel) in lixels[start..end].iter().enumerate() {
                let c = lixel.center_offset();
                let mut d = f64::INFINITY;
                if same_edge {
                    d = (pos.offset - c).abs();
                }
                let via = (via_a + c).min(via_b + (edge.length - c));
                if via < d {
                    d = via;
                }
                if d <= trunc {
                    densities[start + li] += weight * gaussian(d / r) / r;
                }
            }
        }
    }
    Ok(densities)
}

/// Indices of the top-k lixels by density, descending; ties resolve by
/// (edge id, lixel index) ascending. Asking for more than exist returns all.
pub fn rank_segments(
    lixels: &[Lixel],
    densities: &[f64],
    network: &RoadNetwork,
    k: usize,
) -> Vec<usize> {
    assert_eq!(lixels.len(), densities.len());
    let mut order: Vec<usize> = (0..lixels.len()).collect();
    order.sort_by(|&l, &r| {
        densities[r]
            .total_cmp(&densities[l])
            .then_with(|| network.edge(lixels[l].edge).id.cmp(&network.edge(lixels[r].edge).id))
            .then_with(|| lixels[l].index.cmp(&lixels[r].index))
    });
    order.truncate(k.min(lixels.len()));
    order
}
