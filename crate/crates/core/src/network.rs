//! Infrastructure topology, sensor placement and the two distance notions
//! used by the evaluation metrics.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Dense index of a node inside one [`NetworkGraph`]. Indices follow the
/// canonical (sorted id) node order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Hop distance; `Infinite` iff the endpoints lie in different components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hops {
    Finite(u32),
    Infinite,
}

impl Hops {
    pub fn finite(self) -> Option<u32> {
        match self {
            Hops::Finite(h) => Some(h),
            Hops::Infinite => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Hops::Finite(h) => f64::from(h),
            Hops::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Hops::Finite(_))
    }
}

/// Serialized as the hop count, or `null` when unreachable.
impl Serialize for Hops {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.finite().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Hops {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Option::<u32>::deserialize(d)?.map_or(Hops::Infinite, Hops::Finite))
    }
}

impl fmt::Display for Hops {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hops::Finite(h) => write!(f, "{h}"),
            Hops::Infinite => f.write_str("inf"),
        }
    }
}

/// Node record of the graph file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// On-disk graph format: `{"nodes": [{id, x, y}], "edges": [[a, b]], "sensors": [ids]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<(String, String)>,
    pub sensors: Vec<String>,
}

/// Undirected, unweighted infrastructure graph with node positions and a
/// sensor subset. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
    positions: Vec<[f64; 2]>,
    sensors: Vec<NodeId>,
    edge_count: usize,
}

impl NetworkGraph {
    /// Validate and build a graph. Node order is canonicalized to sorted ids.
    pub fn build(nodes: &[NodeRecord], edges: &[(String, String)], sensors: &[String]) -> Result<Self> {
        let mut sorted: Vec<&NodeRecord> = nodes.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let mut ids = Vec::with_capacity(sorted.len());
        let mut positions = Vec::with_capacity(sorted.len());
        let mut index = HashMap::with_capacity(sorted.len());
        for (i, rec) in sorted.iter().enumerate() {
            if index.insert(rec.id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(rec.id.clone()));
            }
            if !rec.x.is_finite() || !rec.y.is_finite() {
                return Err(Error::NonFiniteCoordinate(rec.id.clone()));
            }
            ids.push(rec.id.clone());
            positions.push([rec.x, rec.y]);
        }

        let mut adjacency = vec![Vec::new(); ids.len()];
        let mut seen = BTreeSet::new();
        for (a, b) in edges {
            let ia = *index.get(a).ok_or_else(|| Error::UnknownNode(a.clone()))?;
            let ib = *index.get(b).ok_or_else(|| Error::UnknownNode(b.clone()))?;
            if ia == ib {
                return Err(Error::SelfLoop(a.clone()));
            }
            if !seen.insert((ia.min(ib), ia.max(ib))) {
                return Err(Error::DuplicateEdge(a.clone(), b.clone()));
            }
            adjacency[ia].push(ib);
            adjacency[ib].push(ia);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }

        let mut sensor_ids = BTreeSet::new();
        for s in sensors {
            let i = *index.get(s).ok_or_else(|| Error::UnknownSensor(s.clone()))?;
            sensor_ids.insert(i);
        }

        Ok(Self {
            ids,
            index,
            adjacency,
            positions,
            sensors: sensor_ids.into_iter().map(NodeId).collect(),
            edge_count: seen.len(),
        })
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        Self::build(&file.nodes, &file.edges, &file.sensors)
    }

    pub fn to_file(&self) -> GraphFile {
        let mut edges = Vec::with_capacity(self.edge_count);
        for (u, nbrs) in self.adjacency.iter().enumerate() {
            for &v in nbrs {
                if u < v {
                    edges.push((self.ids[u].clone(), self.ids[v].clone()));
                }
            }
        }
        GraphFile {
            nodes: self
                .ids
                .iter()
                .zip(&self.positions)
                .map(|(id, p)| NodeRecord {
                    id: id.clone(),
                    x: p[0],
                    y: p[1],
                })
                .collect(),
            edges,
            sensors: self.sensors.iter().map(|s| self.ids[s.0].clone()).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn node(&self, id: &str) -> Result<NodeId> {
        self.index
            .get(id)
            .map(|&i| NodeId(i))
            .ok_or_else(|| Error::UnknownNode(id.to_owned()))
    }

    pub fn id(&self, n: NodeId) -> &str {
        &self.ids[n.0]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, n: NodeId) -> [f64; 2] {
        self.positions[n.0]
    }

    pub fn neighbors(&self, n: NodeId) -> &[usize] {
        &self.adjacency[n.0]
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adjacency[n.0].len()
    }

    /// Sensor nodes in canonical order (sorted by id).
    pub fn sensors(&self) -> &[NodeId] {
        &self.sensors
    }

    pub fn sensor_ids(&self) -> Vec<String> {
        self.sensors.iter().map(|s| self.ids[s.0].clone()).collect()
    }

    pub fn is_sensor(&self, n: NodeId) -> bool {
        self.sensors.binary_search(&n).is_ok()
    }

    /// Column of `n` among the sensors, if it is one.
    pub fn sensor_column(&self, n: NodeId) -> Option<usize> {
        self.sensors.binary_search(&n).ok()
    }

    fn check(&self, n: NodeId) -> Result<()> {
        if n.0 < self.ids.len() {
            Ok(())
        } else {
            Err(Error::NodeIndex(n.0))
        }
    }

    /// Hop distances from `source` to every node (BFS).
    pub fn hops_from(&self, source: NodeId) -> Result<Vec<Hops>> {
        self.check(source)?;
        let mut dist = vec![Hops::Infinite; self.ids.len()];
        let mut queue = VecDeque::new();
        dist[source.0] = Hops::Finite(0);
        queue.push_back(source.0);
        while let Some(u) = queue.pop_front() {
            let Hops::Finite(du) = dist[u] else { unreachable!() };
            for &v in &self.adjacency[u] {
                if dist[v] == Hops::Infinite {
                    dist[v] = Hops::Finite(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Length of the shortest path in edges.
    pub fn topological_distance(&self, u: NodeId, v: NodeId) -> Result<Hops> {
        self.check(v)?;
        Ok(self.hops_from(u)?[v.0])
    }

    /// Euclidean distance between node positions.
    pub fn geographic_distance(&self, u: NodeId, v: NodeId) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let [x0, y0] = self.positions[u.0];
        let [x1, y1] = self.positions[v.0];
        Ok((x1 - x0).hypot(y1 - y0))
    }

    /// Maximal node degree; 0 for edgeless graphs.
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Connected components as sorted index lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.ids.len()];
        let mut out = Vec::new();
        for start in 0..self.ids.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let c = out.len();
            let mut members = vec![start];
            label[start] = c;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for &v in &self.adjacency[u] {
                    if label[v] == usize::MAX {
                        label[v] = c;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Random geometric graph on the unit square.
///
/// Points are drawn from `ChaCha8Rng::seed_from_u64(seed)` as `x` then `y`
/// per node. Nodes within `radius` (inclusive) are joined. Only the largest
/// connected component is kept (ties go to the one with the smallest
/// member). Sensors are placed by farthest-point sampling over hop distance,
/// starting from a node drawn from the same stream.
pub fn random_geometric_graph(n: usize, radius: f64, sensor_count: usize, seed: u64) -> Result<NetworkGraph> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if sensor_count > n {
        return Err(Error::InvalidParameter(format!(
            "sensor_count {sensor_count} exceeds node count {n}"
        )));
    }
    let mut rng = seed::rng(seed);
    let points: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let width = n.saturating_sub(1).to_string().len().max(3);
    let name = |i: usize| format!("n{i:0width$}");

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            if d <= radius {
                edges.push((i, j));
            }
        }
    }
    let nodes: Vec<NodeRecord> = (0..n)
        .map(|i| NodeRecord {
            id: name(i),
            x: points[i][0],
            y: points[i][1],
        })
        .collect();
    let named = |e: &[(usize, usize)]| e.iter().map(|&(a, b)| (name(a), name(b))).collect::<Vec<_>>();
    let full = NetworkGraph::build(&nodes, &named(&edges), &[])?;

    // Largest component; `components` is ordered by smallest member so
    // max_by_key with a reversed index keeps the first on ties.
    let comps = full.components();
    let largest = comps
        .iter()
        .enumerate()
        .max_by_key(|(i, c)| (c.len(), std::cmp::Reverse(*i)))
        .map(|(_, c)| c.clone())
        .unwrap_or_default();
    let keep: BTreeSet<usize> = largest.iter().copied().collect();
    // Zero-padded names keep canonical order equal to generation order.
    let kept_nodes: Vec<NodeRecord> = keep.iter().map(|&i| nodes[i].clone()).collect();
    let kept_edges: Vec<(usize, usize)> = edges
        .into_iter()
        .filter(|(a, b)| keep.contains(a) && keep.contains(b))
        .collect();
    let core = NetworkGraph::build(&kept_nodes, &named(&kept_edges), &[])?;

    let k = sensor_count.min(core.node_count());
    let chosen = farthest_point_sensors(&core, k, &mut rng)?;
    let sensors: Vec<String> = chosen.iter().map(|&i| core.ids[i].clone()).collect();
    NetworkGraph::build(&kept_nodes, &named(&kept_edges), &sensors)
}

fn farthest_point_sensors<R: Rng>(g: &NetworkGraph, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = g.node_count();
    if k == 0 || n == 0 {
        return Ok(Vec::new());
    }
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut nearest: Vec<Hops> = g.hops_from(NodeId(first))?;
    while chosen.len() < k {
        // Farthest node from the chosen set; ties to the smallest index.
        let mut best = None::<(Hops, usize)>;
        for (i, &d) in nearest.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        let Some((_, next)) = best else { break };
        chosen.push(next);
        for (slot, d) in nearest.iter_mut().zip(g.hops_from(NodeId(next))?) {
            *slot = (*slot).min(d);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, x: f64, y: f64) -> NodeRecord {
        NodeRecord { id: id.into(), x, y }
    }

    fn e(a: &str, b: &str) -> (String, String) {
        (a.into(), b.into())
    }

    fn path_abc() -> NetworkGraph {
        NetworkGraph::build(
            &[rec("c", 2.0, 0.0), rec("a", 0.0, 0.0), rec("b", 1.0, 0.0)],
            &[e("a", "b"), e("b", "c")],
            &["a".into(), "c".into()],
        )
        .unwrap()
    }

    #[test]
    fn build_small_graph() {
        let g = path_abc();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.ids(), &["a", "b", "c"]);
        assert_eq!(g.sensor_ids(), vec!["a", "c"]);
    }

    #[test]
    fn build_errors() {
        let nodes = [rec("a", 0.0, 0.0), rec("b", 1.0, 0.0)];
        let err = NetworkGraph::build(&nodes, &[], &["z".into()]).unwrap_err();
        assert_eq!(err.to_string(), "unknown sensor node `z`");
        assert!(matches!(
            NetworkGraph::build(&nodes, &[e("a", "q")], &[]),
            Err(Error::UnknownNode(_))
        ));
        assert!(matches!(
            NetworkGraph::build(&[rec("a", 0.0, 0.0), rec("a", 1.0, 1.0)], &[], &[]),
            Err(Error::DuplicateNode(_))
        ));
        assert!(matches!(
            NetworkGraph::build(&nodes, &[e("a", "a")], &[]),
            Err(Error::SelfLoop(_))
        ));
        assert!(matches!(
            NetworkGraph::build(&nodes, &[e("a", "b"), e("b", "a")], &[]),
            Err(Error::DuplicateEdge(..))
        ));
        assert!(matches!(
            NetworkGraph::build(&[rec("a", f64::NAN, 0.0)], &[], &[]),
            Err(Error::NonFiniteCoordinate(_))
        ));
    }

    #[test]
    fn distances_on_path() {
        let g = path_abc();
        let a = g.node("a").unwrap();
        let c = g.node("c").unwrap();
        assert_eq!(g.topological_distance(a, c).unwrap(), Hops::Finite(2));
        assert_eq!(g.topological_distance(a, a).unwrap(), Hops::Finite(0));
        assert_eq!(g.geographic_distance(a, a).unwrap(), 0.0);
        assert!(g.topological_distance(a, NodeId(7)).is_err());
    }

    #[test]
    fn geographic_345() {
        let g = NetworkGraph::build(&[rec("p", 0.0, 0.0), rec("q", 3.0, 4.0)], &[], &[]).unwrap();
        let d = g.geographic_distance(NodeId(0), NodeId(1)).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn disconnected_is_infinite() {
        let g = NetworkGraph::build(&[rec("p", 0.0, 0.0), rec("q", 3.0, 4.0)], &[], &[]).unwrap();
        assert_eq!(g.topological_distance(NodeId(0), NodeId(1)).unwrap(), Hops::Infinite);
        assert_eq!(g.max_degree(), 0);
    }

    #[test]
    fn star_degree() {
        let mut nodes = vec![rec("center", 0.0, 0.0)];
        let mut edges = Vec::new();
        for i in 0..6 {
            nodes.push(rec(&format!("leaf{i}"), i as f64, 1.0));
            edges.push(e("center", &format!("leaf{i}")));
        }
        let g = NetworkGraph::build(&nodes, &edges, &[]).unwrap();
        assert_eq!(g.max_degree(), 6);
    }

    #[test]
    fn single_node_generator() {
        let g = random_geometric_graph(1, 0.5, 1, 3).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.sensors().len(), 1);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = random_geometric_graph(60, 0.2, 6, 11).unwrap();
        let b = random_geometric_graph(60, 0.2, 6, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sensors().len(), 6);
        assert_eq!(a.components().len(), 1);
    }

    #[test]
    fn file_round_trip() {
        let g = random_geometric_graph(30, 0.3, 4, 2).unwrap();
        let back = NetworkGraph::from_file(&g.to_file()).unwrap();
        assert_eq!(g, back);
    }
}
