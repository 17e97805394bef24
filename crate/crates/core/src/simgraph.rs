//! Per-emotion speaker similarity graphs, Louvain community detection and
//! weighted modularity.
//!
//! Nodes are (corpus, speaker) pairs carrying the mean of that speaker's
//! speaker-kind train vectors. Edges keep cosine similarities above `tau`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embstore::{EmbeddingRecord, EmotionLabel, RecordKind, Split};
use crate::error::{Error, Result};

/// Default edge threshold.
pub const DEFAULT_TAU: f64 = 0.7;

/// Slack allowed above 1.0 for stored cosine weights.
pub const WEIGHT_SLACK: f64 = 1e-9;

/// Cosine similarity. Errors on a zero-norm argument or a length mismatch.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!(
            "cosine of vectors with dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain("cosine of a zero-norm vector".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub corpus_id: String,
    pub speaker_id: String,
}

impl NodeId {
    pub fn new(corpus_id: impl Into<String>, speaker_id: impl Into<String>) -> Self {
        NodeId {
            corpus_id: corpus_id.into(),
            speaker_id: speaker_id.into(),
        }
    }

    pub fn of(record: &EmbeddingRecord) -> Self {
        NodeId::new(record.corpus_id.clone(), record.speaker_id.clone())
    }

    /// `corpus:speaker`, used in the text exports.
    pub fn label(&self) -> String {
        format!("{}:{}", self.corpus_id, self.speaker_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub style: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected weighted graph over speaker style vectors. Edges are stored
/// once with `i < j`; there are no self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerGraph {
    /// `None` for the emotion-agnostic graph.
    pub emotion: Option<EmotionLabel>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
    pub tau: f64,
}

impl SpeakerGraph {
    /// Builds a graph from explicit nodes, keeping every pair with cosine > `tau`.
    pub fn from_nodes(emotion: Option<EmotionLabel>, nodes: Vec<GraphNode>, tau: f64) -> Result<Self> {
        let n = nodes.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let sims: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| cosine(&nodes[i].style, &nodes[j].style))
            .collect();
        let mut edges = Vec::new();
        for (&(i, j), sim) in pairs.iter().zip(sims) {
            let w = sim?;
            if w > tau {
                edges.push(Edge { i, j, weight: w });
            }
        }
        Ok(SpeakerGraph {
            emotion,
            nodes,
            edges,
            tau,
        })
    }

    /// A graph over anonymous nodes with the given edges, used for fixtures.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let nodes = (0..n)
            .map(|i| GraphNode {
                id: NodeId::new("g", format!("n{i:03}")),
                style: Vec::new(),
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(a, b, w)| Edge {
                i: a.min(b),
                j: a.max(b),
                weight: w,
            })
            .collect();
        SpeakerGraph {
            emotion: None,
            nodes,
            edges,
            tau: f64::NEG_INFINITY,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Copy with every edge weight set to 1.
    pub fn unweighted(&self) -> Self {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.weight = 1.0;
        }
        g
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    /// Dense symmetric adjacency matrix.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.n_nodes();
        let mut a = vec![vec![0.0; n]; n];
        for e in &self.edges {
            a[e.i][e.j] += e.weight;
            a[e.j][e.i] += e.weight;
        }
        a
    }

    /// Tab-separated `node\tnode\tweight` lines.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                self.nodes[e.i].id.label(),
                self.nodes[e.j].id.label(),
                e.weight
            );
        }
        out
    }

    /// Graphviz export; node shape marks the corpus, fill colour the community.
    pub fn to_dot(&self, partition: Option<&Partition>) -> String {
        const SHAPES: [&str; 4] = ["circle", "square", "diamond", "triangle"];
        const COLORS: [&str; 10] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf",
        ];
        let mut corpora: Vec<&str> = self.nodes.iter().map(|n| n.id.corpus_id.as_str()).collect();
        corpora.dedup();
        let name = self.emotion.map(|e| e.as_str()).unwrap_or("global");
        let mut out = format!("graph \"{name}\" {{\n");
        for (idx, node) in self.nodes.iter().enumerate() {
            let corpus_idx = corpora
                .iter()
                .position(|c| *c == node.id.corpus_id)
                .unwrap_or(0);
            let shape = SHAPES[corpus_idx % SHAPES.len()];
            let color = partition
                .map(|p| COLORS[p.labels[idx] % COLORS.len()])
                .unwrap_or("#ffffff");
            let _ = writeln!(
                out,
                "  \"{}\" [shape={shape}, style=filled, fillcolor=\"{color}\"];",
                node.id.label()
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -- \"{}\" [weight={:.6}];",
                self.nodes[e.i].id.label(),
                self.nodes[e.j].id.label(),
                e.weight
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Which records feed a graph.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphScope {
    /// `None` pools every emotion (emotion-agnostic graph).
    pub emotion: Option<EmotionLabel>,
    /// Restrict nodes to one corpus; `None` builds the joint graph.
    pub corpus: Option<String>,
}

/// Per-emotion speaker graph over both corpora.
pub fn build_graph(records: &[EmbeddingRecord], emotion: EmotionLabel, tau: f64) -> Result<SpeakerGraph> {
    build_graph_scoped(
        records,
        &GraphScope {
            emotion: Some(emotion),
            corpus: None,
        },
        tau,
    )
}

/// Emotion-agnostic graph: one node per speaker, mean over all emotions.
pub fn build_global_graph(records: &[EmbeddingRecord], tau: f64) -> Result<SpeakerGraph> {
    build_graph_scoped(records, &GraphScope::default(), tau)
}

pub fn build_graph_scoped(
    records: &[EmbeddingRecord],
    scope: &GraphScope,
    tau: f64,
) -> Result<SpeakerGraph> {
    let mut sums: BTreeMap<NodeId, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let eligible = r.kind == RecordKind::Speaker
            && r.split == Split::Train
            && scope.emotion.is_none_or(|e| r.emotion == e)
            && scope.corpus.as_ref().is_none_or(|c| &r.corpus_id == c);
        if !eligible {
            continue;
        }
        let entry = sums
            .entry(NodeId::of(r))
            .or_insert_with(|| (vec![0.0; r.vector.len()], 0));
        if entry.0.len() != r.vector.len() {
            return Err(Error::Schema(format!(
                "record {} has inconsistent speaker dimension",
                r.record_id
            )));
        }
        for (s, v) in entry.0.iter_mut().zip(&r.vector) {
            *s += v;
        }
        entry.1 += 1;
    }
    if sums.len() < 2 {
        return Err(Error::InsufficientData {
            emotion: scope.emotion.unwrap_or(EmotionLabel::Neutral),
            message: format!("{} eligible speaker node(s), need at least 2", sums.len()),
        });
    }
    let nodes = sums
        .into_iter()
        .map(|(id, (sum, count))| GraphNode {
            id,
            style: sum.into_iter().map(|s| s / count as f64).collect(),
        })
        .collect();
    SpeakerGraph::from_nodes(scope.emotion, nodes, tau)
}

/// Community assignment aligned with a graph's node order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub nodes: Vec<NodeId>,
    pub labels: Vec<usize>,
    pub n_communities: usize,
}

impl Partition {
    /// Relabels `labels` to contiguous indices in order of first appearance.
    pub fn from_labels(nodes: Vec<NodeId>, labels: &[usize]) -> Self {
        assert_eq!(nodes.len(), labels.len(), "one label per node");
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = remap.len();
            out.push(*remap.entry(l).or_insert(next));
        }
        Partition {
            nodes,
            labels: out,
            n_communities: remap.len(),
        }
    }

    pub fn singletons(nodes: Vec<NodeId>) -> Self {
        let labels: Vec<usize> = (0..nodes.len()).collect();
        Partition::from_labels(nodes, &labels)
    }

    pub fn community_of(&self, node: &NodeId) -> Option<usize> {
        self.nodes.iter().position(|n| n == node).map(|i| self.labels[i])
    }

    /// Node → community lookup table.
    pub fn lookup(&self) -> BTreeMap<NodeId, usize> {
        self.nodes.iter().cloned().zip(self.labels.iter().copied()).collect()
    }

    pub fn members(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.n_communities];
        for (n, &l) in self.nodes.iter().zip(&self.labels) {
            out[l].push(n.clone());
        }
        out
    }

    /// `node,community` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,community\n");
        for (n, l) in self.nodes.iter().zip(&self.labels) {
            let _ = writeln!(out, "{},{}", n.label(), l);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularityReport {
    pub emotion: Option<EmotionLabel>,
    pub n_communities: usize,
    #[serde(rename = "Q")]
    pub q: f64,
}

/// Weighted modularity over ordered node pairs.
pub fn modularity(graph: &SpeakerGraph, partition: &Partition) -> Result<f64> {
    if partition.labels.len() != graph.n_nodes()
        || partition.nodes.iter().zip(&graph.nodes).any(|(a, b)| *a != b.id)
    {
        return Err(Error::Domain("partition does not cover the graph's nodes".into()));
    }
    let m = graph.total_weight();
    if graph.edges.is_empty() || m <= 0.0 {
        return Err(Error::Domain("modularity of an edgeless graph".into()));
    }
    let two_m = 2.0 * m;
    let k = partition.n_communities;
    let mut degree = vec![0.0; graph.n_nodes()];
    let mut internal = vec![0.0; k];
    for e in &graph.edges {
        degree[e.i] += e.weight;
        degree[e.j] += e.weight;
        if partition.labels[e.i] == partition.labels[e.j] {
            internal[partition.labels[e.i]] += 2.0 * e.weight;
        }
    }
    let mut total = vec![0.0; k];
    for (d, &l) in degree.iter().zip(&partition.labels) {
        total[l] += d;
    }
    let q = internal
        .iter()
        .zip(&total)
        .map(|(inside, tot)| inside / two_m - (tot / two_m).powi(2))
        .sum();
    Ok(q)
}

/// Weighted graph used internally by Louvain; self-loops hold the
/// ordered-pair weight `A_ii` of aggregated nodes.
struct WorkGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl WorkGraph {
    fn from_graph(graph: &SpeakerGraph) -> Self {
        let n = graph.n_nodes();
        let mut adj = vec![Vec::new(); n];
        for e in &graph.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        Self::finish(adj, vec![0.0; n])
    }

    fn finish(mut adj: Vec<Vec<(usize, f64)>>, self_loop: Vec<f64>) -> Self {
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loop)
            .map(|(list, sl)| list.iter().map(|(_, w)| w).sum::<f64>() + sl)
            .collect();
        let two_m = degree.iter().sum();
        WorkGraph {
            adj,
            self_loop,
            degree,
            two_m,
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    /// Local moving phase from the starting assignment `community`. Returns
    /// contiguous labels and whether any node moved.
    fn local_moves(&self, mut community: Vec<usize>, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.n();
        let mut total = vec![0.0; n];
        for (c, d) in community.iter().zip(&self.degree) {
            total[*c] += d;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let eps = 1e-12 * self.two_m.max(1.0);
        let mut moved_any = false;
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();

        for _pass in 0..1000 {
            let mut moved = false;
            for &node in &order {
                let own = community[node];
                let k_i = self.degree[node];
                total[own] -= k_i;

                links.clear();
                links.insert(own, 0.0);
                for &(j, w) in &self.adj[node] {
                    *links.entry(community[j]).or_insert(0.0) += w;
                }
                let gain = |c: usize, k_in: f64| k_in - total[c] * k_i / self.two_m;

                let stay = gain(own, links[&own]);
                // BTreeMap iteration is ascending, so ties keep the lowest index.
                let mut best: Option<(usize, f64)> = None;
                for (&c, &k_in) in &links {
                    if c == own {
                        continue;
                    }
                    let g = gain(c, k_in);
                    if best.is_none_or(|(_, bg)| g > bg + eps) {
                        best = Some((c, g));
                    }
                }
                let target = match best {
                    Some((c, g)) if g > stay + eps => c,
                    _ => own,
                };
                total[target] += k_i;
                if target != own {
                    community[node] = target;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        let p = Partition::from_labels(vec![NodeId::new("", ""); n], &community);
        (p.labels, moved_any)
    }

    fn aggregate(&self, labels: &[usize], n_comm: usize) -> WorkGraph {
        let mut self_loop = vec![0.0; n_comm];
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n_comm];
        for i in 0..self.n() {
            let ci = labels[i];
            self_loop[ci] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                let cj = labels[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    *links[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adj = links.into_iter().map(|m| m.into_iter().collect()).collect();
        WorkGraph::finish(adj, self_loop)
    }
}

/// Louvain modularity maximisation. Visit order is shuffled by `seed`;
/// among equal-gain moves the lowest community index wins. Edgeless graphs
/// come back as singletons.
///
/// After the levels converge, single nodes of the original graph get another
/// local-move pass and aggregation resumes if any of them moved. The result
/// is then perturbed a bounded number of times (up to three nodes reassigned
/// at random, one fresh community allowed, followed by the same procedure)
/// and a perturbed outcome replaces the current one only when it scores
/// higher.
pub fn louvain(graph: &SpeakerGraph, seed: u64) -> Partition {
    let ids = graph.node_ids();
    if graph.edges.is_empty() {
        return Partition::singletons(ids);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = WorkGraph::from_graph(graph);
    let n = graph.n_nodes();
    let eps = 1e-12 * base.two_m.max(1.0);

    let mut best = base.climb((0..n).collect(), &mut rng);
    let mut best_q = base.quality(&best);
    for _ in 0..perturbation_rounds(n) {
        let mut candidate = best.clone();
        let fresh = candidate.iter().max().map_or(0, |m| m + 1);
        for _ in 0..rng.random_range(1..=3usize) {
            let node = rng.random_range(0..n);
            candidate[node] = rng.random_range(0..=fresh);
        }
        let candidate = base.climb(relabel(&candidate), &mut rng);
        let q = base.quality(&candidate);
        if q > best_q + eps {
            best = candidate;
            best_q = q;
        }
    }
    Partition::from_labels(ids, &best)
}

fn perturbation_rounds(n: usize) -> usize {
    (20 * n).min(400)
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = remap.len();
            *remap.entry(l).or_insert(next)
        })
        .collect()
}

impl WorkGraph {
    /// Louvain levels starting from `membership` (contiguous labels), then
    /// node-level refinement, repeated until nothing moves.
    fn climb(&self, mut membership: Vec<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
        // Every accepted move raises modularity, so the rounds terminate; the
        // cap only guards against float drift.
        for _round in 0..100 {
            let n_comm = membership.iter().max().map_or(0, |m| m + 1);
            let mut work = self.aggregate(&membership, n_comm);
            loop {
                let (labels, moved) = work.local_moves((0..work.n()).collect(), rng);
                if !moved {
                    break;
                }
                for m in membership.iter_mut() {
                    *m = labels[*m];
                }
                let n_comm = labels.iter().max().map_or(0, |m| m + 1);
                work = work.aggregate(&labels, n_comm);
                if n_comm == 1 {
                    break;
                }
            }
            let (refined, moved) = self.local_moves(membership.clone(), rng);
            membership = refined;
            if !moved {
                break;
            }
        }
        membership
    }

    /// Modularity of contiguous `labels` over this graph's nodes.
    fn quality(&self, labels: &[usize]) -> f64 {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut internal = vec![0.0; k];
        let mut total = vec![0.0; k];
        for i in 0..self.n() {
            total[labels[i]] += self.degree[i];
            internal[labels[i]] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                if labels[j] == labels[i] {
                    internal[labels[i]] += w;
                }
            }
        }
        internal
            .iter()
            .zip(&total)
            .map(|(inside, tot)| inside / self.two_m - (tot / self.two_m).powi(2))
            .sum()
    }
}

/// Graph, communities and modularity for one emotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionClustering {
    pub graph: SpeakerGraph,
    pub partition: Partition,
    pub report: ModularityReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterOutcome {
    pub per_emotion: BTreeMap<EmotionLabel, EmotionClustering>,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOptions {
    pub tau: f64,
    pub seed: u64,
    pub corpus: Option<String>,
    /// Score modularity with unit edge weights.
    pub unweighted: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            tau: DEFAULT_TAU,
            seed: 0,
            corpus: None,
            unweighted: false,
        }
    }
}

/// Builds, clusters and scores one graph per emotion. Emotions without
/// enough data are reported in `notices` instead of failing the call.
pub fn cluster_all_emotions(records: &[EmbeddingRecord], tau: f64, seed: u64) -> ClusterOutcome {
    cluster_all_emotions_with(
        records,
        &ClusterOptions {
            tau,
            seed,
            ..ClusterOptions::default()
        },
    )
}

pub fn cluster_all_emotions_with(records: &[EmbeddingRecord], opts: &ClusterOptions) -> ClusterOutcome {
    let results: Vec<(EmotionLabel, Result<EmotionClustering>)> = EmotionLabel::ALL
        .par_iter()
        .map(|&emotion| {
            let scope = GraphScope {
                emotion: Some(emotion),
                corpus: opts.corpus.clone(),
            };
            (emotion, cluster_scope(records, &scope, opts))
        })
        .collect();
    let mut out = ClusterOutcome::default();
    for (emotion, result) in results {
        match result {
            Ok(c) => {
                if c.graph.edges.is_empty() {
                    out.notices.push(format!(
                        "{emotion}: graph has no edges above tau; nodes kept as singletons, Q reported as 0"
                    ));
                }
                out.per_emotion.insert(emotion, c);
            }
            Err(e) => out.notices.push(format!("{emotion}: {e}")),
        }
    }
    out
}

/// Emotion-agnostic clustering used as the `without_emotion` grouping.
pub fn cluster_global(records: &[EmbeddingRecord], opts: &ClusterOptions) -> Result<EmotionClustering> {
    cluster_scope(
        records,
        &GraphScope {
            emotion: None,
            corpus: opts.corpus.clone(),
        },
        opts,
    )
}

fn cluster_scope(records: &[EmbeddingRecord], scope: &GraphScope, opts: &ClusterOptions) -> Result<EmotionClustering> {
    let mut graph = build_graph_scoped(records, scope, opts.tau)?;
    if opts.unweighted {
        graph = graph.unweighted();
    }
    let partition = louvain(&graph, opts.seed);
    let q = if graph.edges.is_empty() {
        0.0
    } else {
        modularity(&graph, &partition)?
    };
    Ok(EmotionClustering {
        report: ModularityReport {
            emotion: scope.emotion,
            n_communities: partition.n_communities,
            q,
        },
        graph,
        partition,
    })
}
