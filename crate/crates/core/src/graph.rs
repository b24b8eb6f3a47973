//! Node/edge view of the skeleton: intersection clusters and free branch ends
//! become nodes, branches become weighted edges. Pruning strips light twigs
//! and fuses branches that meet at degree-2 joints.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::branch::Branch;
use crate::drone::DroneSpec;
use crate::geom::{Pixel, NEIGHBOURS_CW};
use crate::mask::PixelCalibration;
use crate::morphology::Skeleton;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("branch {0} has an end attached to no node")]
    Unattached(u32),
    #[error("tree statistics are degenerate (longest branch {l_max} px, widest {w_max} px)")]
    DegenerateStats { l_max: usize, w_max: f64 },
    #[error("no branches to build a graph from")]
    NoBranches,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Intersection,
    Endpoint,
}

/// A graph node. Intersection nodes own their cluster of junction pixels;
/// endpoint nodes sit on a branch end pixel and own none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub position: Pixel,
    pub kind: NodeKind,
    pub cluster: Vec<Pixel>,
    pub cluster_widths: Vec<f64>,
}

/// An edge carries its branch. `a` is the node at `branch.first()`, `b` the
/// node at `branch.last()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub branch: Branch,
}

impl Edge {
    pub fn label(&self) -> u32 {
        self.branch.label
    }

    pub fn is_self_loop(&self) -> bool {
        self.a == self.b
    }
}

/// Undirected multigraph keyed by node id and branch label.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TreeGraph {
    pub nodes: BTreeMap<usize, Node>,
    pub edges: BTreeMap<u32, Edge>,
    /// Junction pixels left over when a merge could not route through a
    /// whole cluster.
    pub residual: Vec<Pixel>,
}

impl TreeGraph {
    /// Number of edge ends at `node`; a self-loop counts twice.
    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .values()
            .map(|e| usize::from(e.a == node) + usize::from(e.b == node))
            .sum()
    }

    pub fn degrees(&self) -> BTreeMap<usize, usize> {
        let mut d: BTreeMap<usize, usize> = self.nodes.keys().map(|&k| (k, 0)).collect();
        for e in self.edges.values() {
            *d.entry(e.a).or_default() += 1;
            *d.entry(e.b).or_default() += 1;
        }
        d
    }

    pub fn branches(&self) -> impl Iterator<Item = &Branch> {
        self.edges.values().map(|e| &e.branch)
    }

    /// Pixels held by branches, node clusters and the residual set.
    pub fn pixel_count(&self) -> usize {
        self.branches().map(Branch::length_px).sum::<usize>()
            + self.nodes.values().map(|n| n.cluster.len()).sum::<usize>()
            + self.residual.len()
    }

    /// Label of the heaviest edge, ties to the smallest label.
    pub fn max_weight_label(&self) -> Option<u32> {
        self.edges
            .values()
            .fold(None::<&Edge>, |best, e| match best {
                Some(b) if b.weight >= e.weight => Some(b),
                _ => Some(e),
            })
            .map(Edge::label)
    }

    /// Every edge references existing nodes and sits on the right ends.
    pub fn is_consistent(&self) -> bool {
        self.edges.iter().all(|(&label, e)| {
            label == e.label() && self.nodes.contains_key(&e.a) && self.nodes.contains_key(&e.b)
        })
    }

    /// One JSON object per line: nodes first, then edges.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for n in self.nodes.values() {
            let line = json!({
                "type": "node",
                "id": n.id,
                "position": n.position,
                "kind": n.kind,
                "cluster_size": n.cluster.len(),
            });
            writeln!(out, "{line}").unwrap();
        }
        for e in self.edges.values() {
            let line = json!({
                "type": "edge",
                "a": e.a,
                "b": e.b,
                "label": e.label(),
                "weight": e.weight,
                "length": e.branch.length_px(),
            });
            writeln!(out, "{line}").unwrap();
        }
        out
    }
}

/// Extrema used to normalise branch weights, taken once before pruning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub l_max: usize,
    pub w_max: f64,
}

impl TreeStats {
    /// Longest branch length and largest per-pixel width over `branches`.
    pub fn from_branches<'a>(branches: impl IntoIterator<Item = &'a Branch>) -> Result<Self, GraphError> {
        let (mut l_max, mut w_max) = (0usize, 0.0f64);
        for b in branches {
            l_max = l_max.max(b.length_px());
            w_max = w_max.max(b.max_width());
        }
        if l_max == 0 || !(w_max > 0.0) {
            return Err(GraphError::DegenerateStats { l_max, w_max });
        }
        Ok(Self { l_max, w_max })
    }
}

/// Everything needed to weigh a branch, resolved to pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightModel {
    pub stats: TreeStats,
    pub alpha: f64,
    pub spec_min_px: f64,
    pub spec_max_px: f64,
}

impl WeightModel {
    pub fn new(stats: TreeStats, spec: &DroneSpec, cal: &PixelCalibration) -> Self {
        let (spec_min_px, spec_max_px) = spec.width_range_px(cal);
        Self {
            stats,
            alpha: spec.alpha,
            spec_min_px,
            spec_max_px,
        }
    }

    /// `alpha * l / L_max + (1 - alpha) * in_spec_fraction * mean_width / W_max`.
    ///
    /// Both ratios are capped at 1 so branches lengthened by merging stay in
    /// range.
    pub fn weight(&self, branch: &Branch) -> f64 {
        let n = branch.length_px() as f64;
        let length_ratio = (n / self.stats.l_max as f64).min(1.0);
        let in_spec = branch
            .widths_px
            .iter()
            .filter(|&&w| self.spec_min_px <= w && w <= self.spec_max_px)
            .count() as f64
            / n;
        let width_ratio = (branch.mean_width() / self.stats.w_max).min(1.0);
        self.alpha * length_ratio + (1.0 - self.alpha) * in_spec * width_ratio
    }
}

pub fn branch_weight(branch: &Branch, stats: &TreeStats, spec: &DroneSpec, cal: &PixelCalibration) -> f64 {
    WeightModel::new(*stats, spec, cal).weight(branch)
}

/// Sets every edge weight from `model`.
pub fn assign_weights(graph: &mut TreeGraph, model: &WeightModel) {
    for e in graph.edges.values_mut() {
        e.weight = model.weight(&e.branch);
    }
}

fn clusters_of(intersections: &BTreeSet<Pixel>) -> Vec<Vec<Pixel>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &start in intersections {
        if !seen.insert(start) {
            continue;
        }
        let mut cluster = vec![];
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            cluster.push(p);
            for &(dr, dc) in &NEIGHBOURS_CW {
                if let Some(q) = p.offset(dr, dc, usize::MAX, usize::MAX) {
                    if intersections.contains(&q) && seen.insert(q) {
                        queue.push_back(q);
                    }
                }
            }
        }
        cluster.sort();
        out.push(cluster);
    }
    out
}

fn centroid(pixels: &[Pixel]) -> Pixel {
    let n = pixels.len() as f64;
    let r = pixels.iter().map(|p| p.row as f64).sum::<f64>() / n;
    let c = pixels.iter().map(|p| p.col as f64).sum::<f64>() / n;
    Pixel::new(r.round() as usize, c.round() as usize)
}

/// True when `end` falls in the 4x4 window whose top-left corner is
/// `(q.row - 1, q.col - 1)`.
fn in_window(q: Pixel, end: Pixel) -> bool {
    q.row <= end.row + 1 && end.row <= q.row + 2 && q.col <= end.col + 1 && end.col <= q.col + 2
}

/// Clusters whose 4x4 windows catch `end`, nearest first (Chebyshev distance
/// to the cluster, then node id).
fn attachment_candidates(end: Pixel, clusters: &[Vec<Pixel>]) -> Vec<usize> {
    let mut hits: Vec<(usize, usize)> = clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| c.iter().any(|&q| in_window(q, end)))
        .map(|(id, c)| (c.iter().map(|&q| q.chebyshev(end)).min().unwrap(), id))
        .collect();
    hits.sort();
    hits.into_iter().map(|(_, id)| id).collect()
}

/// Builds the graph. Each 8-connected cluster of intersection pixels becomes
/// one node at its rounded centroid. A branch end touching no intersection
/// pixel is a free end and gets its own endpoint node; other ends attach to
/// the nearest cluster whose 4x4 window contains them. Weights start at 0.
pub fn build_graph(
    branches: Vec<Branch>,
    intersections: &BTreeSet<Pixel>,
    skeleton: &Skeleton,
) -> Result<TreeGraph, GraphError> {
    if branches.is_empty() {
        return Err(GraphError::NoBranches);
    }
    let clusters = clusters_of(intersections);
    let mut graph = TreeGraph::default();
    for (id, cluster) in clusters.iter().enumerate() {
        let cluster_widths = cluster
            .iter()
            .map(|&p| 2.0 * skeleton.distance(p).unwrap_or(0.0))
            .collect();
        graph.nodes.insert(
            id,
            Node {
                id,
                position: centroid(cluster),
                kind: NodeKind::Intersection,
                cluster: cluster.clone(),
                cluster_widths,
            },
        );
    }
    let touches_junction =
        |p: Pixel| NEIGHBOURS_CW.iter().any(|&(dr, dc)| p.offset(dr, dc, usize::MAX, usize::MAX).is_some_and(|q| intersections.contains(&q)));

    let mut next_id = clusters.len();
    let mut endpoint_node = |graph: &mut TreeGraph, at: Pixel| {
        let id = next_id;
        next_id += 1;
        graph.nodes.insert(
            id,
            Node {
                id,
                position: at,
                kind: NodeKind::Endpoint,
                cluster: vec![],
                cluster_widths: vec![],
            },
        );
        id
    };

    for branch in branches {
        let label = branch.label;
        let (first, last) = branch.endpoints();
        let (a, b) = if first == last {
            // single pixel: may bridge two clusters, hang off one, or stand alone
            let cands: Vec<usize> = if touches_junction(first) {
                attachment_candidates(first, &clusters)
            } else {
                vec![]
            };
            match cands.as_slice() {
                [] => {
                    let n = endpoint_node(&mut graph, first);
                    (n, n)
                }
                [only] => (*only, endpoint_node(&mut graph, first)),
                [x, y, ..] => (*x, *y),
            }
        } else {
            let free_first = !touches_junction(first);
            let free_last = !touches_junction(last);
            if free_first && free_last && branch.length_px() >= 3 && first.is_adjacent(last) {
                // a closed loop with no junctions
                let n = endpoint_node(&mut graph, first);
                (n, n)
            } else {
                let mut attach = |end: Pixel, free: bool, graph: &mut TreeGraph| {
                    if free {
                        Ok(endpoint_node(graph, end))
                    } else {
                        attachment_candidates(end, &clusters)
                            .first()
                            .copied()
                            .ok_or(GraphError::Unattached(label))
                    }
                };
                let a = attach(first, free_first, &mut graph)?;
                let b = attach(last, free_last, &mut graph)?;
                (a, b)
            }
        };
        graph.edges.insert(
            label,
            Edge {
                a,
                b,
                weight: 0.0,
                branch,
            },
        );
    }
    Ok(graph)
}

/// Orders a junction cluster into a walk from a pixel next to `from` to a
/// pixel next to `to`. Small clusters are searched for a path through every
/// pixel; otherwise the shortest path is used and the rest is returned as
/// leftovers.
fn route_through_cluster(cluster: &[Pixel], from: Pixel, to: Pixel) -> (Vec<Pixel>, Vec<Pixel>) {
    if cluster.is_empty() {
        return (vec![], vec![]);
    }
    let near = |target: Pixel| -> Vec<Pixel> {
        let best = cluster.iter().map(|&q| q.chebyshev(target)).min().unwrap();
        cluster.iter().copied().filter(|&q| q.chebyshev(target) == best).collect()
    };
    let starts = near(from);
    let goals: BTreeSet<Pixel> = near(to).into_iter().collect();

    if cluster.len() <= 12 {
        let all: BTreeSet<Pixel> = cluster.iter().copied().collect();
        for &s in &starts {
            let mut path = vec![s];
            let mut left = all.clone();
            left.remove(&s);
            let mut budget = 20_000usize;
            if covering_path(&mut path, &mut left, &goals, &mut budget) {
                return (path, vec![]);
            }
        }
    }

    // breadth-first shortest path inside the cluster
    let members: BTreeSet<Pixel> = cluster.iter().copied().collect();
    let mut prev: BTreeMap<Pixel, Pixel> = BTreeMap::new();
    let mut queue: VecDeque<Pixel> = starts.iter().copied().collect();
    let mut seen: BTreeSet<Pixel> = starts.iter().copied().collect();
    let mut end = starts[0];
    while let Some(p) = queue.pop_front() {
        if goals.contains(&p) {
            end = p;
            break;
        }
        for q in members.iter().copied().filter(|q| q.is_adjacent(p)) {
            if seen.insert(q) {
                prev.insert(q, p);
                queue.push_back(q);
            }
        }
    }
    let mut path = vec![end];
    while let Some(&p) = prev.get(path.last().unwrap()) {
        path.push(p);
    }
    path.reverse();
    let used: BTreeSet<Pixel> = path.iter().copied().collect();
    let leftovers = cluster.iter().copied().filter(|p| !used.contains(p)).collect();
    (path, leftovers)
}

fn covering_path(path: &mut Vec<Pixel>, left: &mut BTreeSet<Pixel>, goals: &BTreeSet<Pixel>, budget: &mut usize) -> bool {
    let last = *path.last().unwrap();
    if left.is_empty() {
        return goals.contains(&last);
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let next: Vec<Pixel> = left.iter().copied().filter(|q| q.is_adjacent(last)).collect();
    for q in next {
        left.remove(&q);
        path.push(q);
        if covering_path(path, left, goals, budget) {
            return true;
        }
        path.pop();
        left.insert(q);
    }
    false
}

/// A degree-2 node whose two incident edges are distinct, smallest id first.
fn find_series_node(graph: &TreeGraph) -> Option<(usize, u32, u32)> {
    let mut incident: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for (&label, e) in &graph.edges {
        incident.entry(e.a).or_default().push(label);
        incident.entry(e.b).or_default().push(label);
    }
    incident.into_iter().find_map(|(node, labels)| match labels.as_slice() {
        [x, y] if x != y => Some((node, *x, *y)),
        _ => None,
    })
}

/// Fuses the two edges at every degree-2 node into one. The merged branch
/// runs through the node's cluster, keeps the smaller label, and is
/// reweighed with `model`. Returns the number of merges.
pub fn merge_degree2_nodes(graph: &mut TreeGraph, model: &WeightModel) -> usize {
    let mut merges = 0;
    while let Some((node_id, l1, l2)) = find_series_node(graph) {
        let e1 = graph.edges.remove(&l1).unwrap();
        let e2 = graph.edges.remove(&l2).unwrap();
        let node = graph.nodes.remove(&node_id).unwrap();

        // orient: e1 ends at the node, e2 starts there
        let (b1, start) = if e1.b == node_id {
            (e1.branch.clone(), e1.a)
        } else {
            (e1.branch.reversed(), e1.b)
        };
        let (b2, end) = if e2.a == node_id {
            (e2.branch.clone(), e2.b)
        } else {
            (e2.branch.reversed(), e2.a)
        };

        let (route, leftovers) = route_through_cluster(&node.cluster, b1.last(), b2.first());
        let width_of: BTreeMap<Pixel, f64> = node.cluster.iter().copied().zip(node.cluster_widths.iter().copied()).collect();
        let mut pixels = b1.pixels;
        let mut widths_px = b1.widths_px;
        for p in route {
            pixels.push(p);
            widths_px.push(width_of[&p]);
        }
        pixels.extend(b2.pixels);
        widths_px.extend(b2.widths_px);
        graph.residual.extend(leftovers);

        let branch = Branch {
            label: l1.min(l2),
            pixels,
            widths_px,
        };
        let weight = model.weight(&branch);
        graph.edges.insert(
            branch.label,
            Edge {
                a: start,
                b: end,
                weight,
                branch,
            },
        );
        merges += 1;
    }
    graph.residual.sort();
    merges
}

/// Outcome of [`prune_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub passes: usize,
    pub edges_removed: usize,
    pub merges: usize,
}

/// Repeatedly removes leaf edges lighter than `threshold`, drops nodes left
/// without edges and merges degree-2 joints, until a pass changes nothing.
/// The heaviest edge of each pass is never removed.
pub fn prune_graph(graph: &mut TreeGraph, model: &WeightModel, threshold: f64) -> PruneReport {
    let mut report = PruneReport {
        passes: 0,
        edges_removed: 0,
        merges: 0,
    };
    loop {
        report.passes += 1;
        let before = graph.clone();
        let keep = graph.max_weight_label();
        let degrees = graph.degrees();
        let doomed: Vec<u32> = graph
            .edges
            .iter()
            .filter(|&(&label, e)| {
                Some(label) != keep && e.weight < threshold && (degrees[&e.a] == 1 || degrees[&e.b] == 1)
            })
            .map(|(&label, _)| label)
            .collect();
        for label in &doomed {
            graph.edges.remove(label);
        }
        report.edges_removed += doomed.len();
        let degrees = graph.degrees();
        graph.nodes.retain(|id, _| degrees[id] > 0);
        report.merges += merge_degree2_nodes(graph, model);
        if *graph == before {
            return report;
        }
    }
}
