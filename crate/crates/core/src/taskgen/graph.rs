use std::collections::{BTreeMap, VecDeque};
use std::sync::LazyLock;

use ndarray::Array2;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::pools::POOLS;
use super::suite::SuiteItem;
use super::text::{number_word, PromptBuilder};
use super::{tags, Result, TaskgenError};
use crate::rng::{fnv1a, SplitMix64};

const PAIRS_PER_CONDITION: usize = 5;
const GENERATIONS: u32 = 3;
const ICL_PREFIX: &str = "You are an AI assistant that helps people find information. \
You will receive a task and think step by step. Example 1: From room 2 what is the shortest \
path to room 4? Starting from room 2, please list the room numbers in order, including 2, \
separated by commas. Here is the sequence of steps from the starting room to the destination \
room: Go from room 2 to room 4. Answer: 2, 4";

pub const BUILTIN_GRAPHS: [&str; 4] = ["n7line", "n7tree", "n13line", "n16cluster"];

fn default_directed() -> bool {
    true
}

/// A task graph. Nodes are `0..n`; node labels are assigned per domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub id: String,
    pub nodes: Vec<u32>,
    pub edges: Vec<(u32, u32)>,
    #[serde(default)]
    pub rewards: Vec<(u32, i64)>,
    pub anchor: u32,
    #[serde(default = "default_directed")]
    pub directed: bool,
}

impl GraphSpec {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    fn invalid(&self, message: impl Into<String>) -> TaskgenError {
        TaskgenError::InvalidGraph {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    /// Checks node numbering, edge endpoints and reachability from the anchor.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.iter().enumerate().any(|(i, &v)| v as usize != i) {
            return Err(self.invalid("nodes must be numbered 0..n in order"));
        }
        if self.n() == 0 {
            return Err(self.invalid("graph has no nodes"));
        }
        let n = self.n() as u32;
        if let Some((u, v)) = self.edges.iter().find(|(u, v)| *u >= n || *v >= n) {
            return Err(self.invalid(format!("edge ({u}, {v}) references an undeclared node")));
        }
        if self.anchor >= n {
            return Err(self.invalid("anchor is not a node"));
        }
        if let Some((v, _)) = self.rewards.iter().find(|(v, _)| *v >= n) {
            return Err(self.invalid(format!("reward on undeclared node {v}")));
        }
        let dist = bfs_distances(self, self.anchor)?;
        if let Some(v) = dist.iter().position(Option::is_none) {
            return Err(self.invalid(format!("node {v} is unreachable from the anchor")));
        }
        Ok(())
    }

    /// Successors in ascending order; both directions when undirected.
    pub fn successors(&self, u: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == u {
                    Some(b)
                } else if !self.directed && b == u {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.edges
            .iter()
            .any(|&(a, b)| (a == u && b == v) || (!self.directed && a == v && b == u))
    }

    pub fn reward(&self, v: u32) -> Option<i64> {
        self.rewards.iter().find(|(n, _)| *n == v).map(|(_, r)| *r)
    }

    fn check_node(&self, v: u32) -> Result<()> {
        if (v as usize) < self.n() {
            Ok(())
        } else {
            Err(TaskgenError::UnknownNode(v))
        }
    }
}

static BUILTIN: LazyLock<Vec<GraphSpec>> = LazyLock::new(|| {
    [
        include_str!("../../data/graphs/n7line.json"),
        include_str!("../../data/graphs/n7tree.json"),
        include_str!("../../data/graphs/n13line.json"),
        include_str!("../../data/graphs/n16cluster.json"),
    ]
    .iter()
    .map(|s| serde_json::from_str(s).expect("bundled graph fixture"))
    .collect()
});

pub fn builtin_graph(id: &str) -> Result<GraphSpec> {
    BUILTIN
        .iter()
        .find(|g| g.id == id)
        .cloned()
        .ok_or_else(|| TaskgenError::UnknownGraph(id.to_string()))
}

pub fn builtin_graphs() -> Vec<GraphSpec> {
    BUILTIN.clone()
}

/// Hop distances from `start`; `None` for unreachable nodes.
pub fn bfs_distances(g: &GraphSpec, start: u32) -> Result<Vec<Option<usize>>> {
    g.check_node(start)?;
    let mut dist = vec![None; g.n()];
    dist[start as usize] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u as usize].unwrap();
        for v in g.successors(u) {
            if dist[v as usize].is_none() {
                dist[v as usize] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// BFS shortest path. Neighbors are expanded in ascending id order and the
/// first discovery of a node fixes its parent.
pub fn shortest_path(g: &GraphSpec, start: u32, goal: u32) -> Result<Vec<u32>> {
    g.check_node(start)?;
    g.check_node(goal)?;
    let mut parent: Vec<Option<u32>> = vec![None; g.n()];
    let mut seen = vec![false; g.n()];
    seen[start as usize] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        if u == goal {
            break;
        }
        for v in g.successors(u) {
            if !seen[v as usize] {
                seen[v as usize] = true;
                parent[v as usize] = Some(u);
                queue.push_back(v);
            }
        }
    }
    if !seen[goal as usize] {
        return Err(TaskgenError::Unreachable { start, goal });
    }
    let mut path = vec![goal];
    let mut cur = goal;
    while let Some(p) = parent[cur as usize] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    Ok(path)
}

/// Longest finite shortest-path distance over all ordered pairs.
pub fn diameter(g: &GraphSpec) -> usize {
    (0..g.n() as u32)
        .filter_map(|s| bfs_distances(g, s).ok())
        .flat_map(|d| d.into_iter().flatten())
        .max()
        .unwrap_or(0)
}

/// Uniform random walk over successors; sinks get a self-loop.
pub fn transition_matrix(g: &GraphSpec) -> Array2<f64> {
    let n = g.n();
    let mut t = Array2::zeros((n, n));
    for u in 0..n as u32 {
        let succ = g.successors(u);
        if succ.is_empty() {
            t[[u as usize, u as usize]] = 1.0;
        } else {
            let p = 1.0 / succ.len() as f64;
            for v in succ {
                t[[u as usize, v as usize]] = p;
            }
        }
    }
    t
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if m[[pivot, col]].abs() < 1e-300 {
            return Err(TaskgenError::SingularMatrix);
        }
        if pivot != col {
            for k in 0..n {
                m.swap([pivot, k], [col, k]);
                inv.swap([pivot, k], [col, k]);
            }
        }
        let p = m[[col, col]];
        for k in 0..n {
            m[[col, k]] /= p;
            inv[[col, k]] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[[r, col]];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[[r, k]] -= f * m[[col, k]];
                inv[[r, k]] -= f * inv[[col, k]];
            }
        }
    }
    Ok(inv)
}

/// `(I − γT)⁻¹` for a row-stochastic `T`.
pub fn successor_representation(t: &Array2<f64>, gamma: f64) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(TaskgenError::InvalidGamma(gamma));
    }
    let n = t.nrows();
    if t.ncols() != n {
        return Err(TaskgenError::NotStochastic);
    }
    for row in t.rows() {
        if row.iter().any(|v| *v < 0.0 || !v.is_finite()) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(TaskgenError::NotStochastic);
        }
    }
    let a = Array2::<f64>::eye(n) - t * gamma;
    invert(&a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "1stepPath")]
    OneStep,
    #[serde(rename = "2stepPath")]
    TwoStep,
    #[serde(rename = "3stepPath")]
    ThreeStep,
    #[serde(rename = "nstepPath")]
    NStep,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::OneStep,
        Condition::TwoStep,
        Condition::ThreeStep,
        Condition::NStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::OneStep => "1stepPath",
            Condition::TwoStep => "2stepPath",
            Condition::ThreeStep => "3stepPath",
            Condition::NStep => "nstepPath",
        }
    }

    /// Required BFS distance on `g`.
    pub fn hops(self, g: &GraphSpec) -> usize {
        match self {
            Condition::OneStep => 1,
            Condition::TwoStep => 2,
            Condition::ThreeStep => 3,
            Condition::NStep => diameter(g),
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown condition '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "ordRooms")]
    OrdRooms,
    #[serde(rename = "unordSpatial")]
    UnordSpatial,
    #[serde(rename = "socialTies")]
    SocialTies,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::OrdRooms, Domain::UnordSpatial, Domain::SocialTies];

    pub fn name(self) -> &'static str {
        match self {
            Domain::OrdRooms => "ordRooms",
            Domain::UnordSpatial => "unordSpatial",
            Domain::SocialTies => "socialTies",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown domain '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalTask {
    #[serde(flatten)]
    pub item: SuiteItem,
    pub graph: GraphSpec,
    pub domain: Domain,
    pub start: u32,
    pub goal: u32,
    pub condition: Condition,
    pub icl: bool,
    pub generation_index: u32,
    /// Surface label of node `i` at index `i`.
    pub node_label_map: Vec<String>,
}

impl TraversalTask {
    pub fn rendered(&self) -> &str {
        &self.item.prompt
    }

    pub fn label_of(&self, v: u32) -> &str {
        &self.node_label_map[v as usize]
    }

    /// The BFS path written the way a correct answer would be.
    pub fn oracle_response(&self) -> String {
        shortest_path(&self.graph, self.start, self.goal)
            .map(|p| {
                p.iter()
                    .map(|&v| self.label_of(v).to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSuite {
    pub tasks: Vec<TraversalTask>,
    pub warnings: Vec<String>,
}

fn node_labels(g: &GraphSpec, domain: Domain, seed: u64, generation: u32) -> Result<Vec<String>> {
    let n = g.n();
    let mut labels = vec![String::new(); n];
    match domain {
        Domain::OrdRooms => {
            for (v, l) in labels.iter_mut().enumerate() {
                *l = v.to_string();
            }
        }
        Domain::UnordSpatial => {
            let mut pool: Vec<u32> = (10..100).collect();
            let key = [tags::GRAPH, fnv1a(&g.id), u64::from(generation)];
            SplitMix64::keyed(seed, &key).shuffle(&mut pool);
            for (v, l) in labels.iter_mut().enumerate() {
                *l = pool[v].to_string();
            }
        }
        Domain::SocialTies => {
            let names = &POOLS.scholars;
            if n > names.len() {
                return Err(TaskgenError::PoolExhausted {
                    what: "scholar names",
                    needed: n,
                    available: names.len(),
                });
            }
            labels.clone_from_slice(&names[..n]);
        }
    }
    if domain != Domain::SocialTies {
        labels[g.anchor as usize] = "lobby".to_string();
    }
    Ok(labels)
}

/// Two directed chains hanging off the anchor with rewards at their ends.
fn two_chains(g: &GraphSpec) -> Option<(Vec<u32>, Vec<u32>)> {
    if !g.directed {
        return None;
    }
    let heads = g.successors(g.anchor);
    let [a, b] = heads[..] else { return None };
    let follow = |mut v: u32| {
        let mut chain = vec![v];
        loop {
            match g.successors(v)[..] {
                [] => return Some(chain),
                [next] if !chain.contains(&next) && next != g.anchor => {
                    chain.push(next);
                    v = next;
                }
                _ => return None,
            }
        }
    };
    let (ca, cb) = (follow(a)?, follow(b)?);
    let covered = 1 + ca.len() + cb.len() == g.n() && ca.iter().all(|v| !cb.contains(v));
    let rewarded = g.reward(*ca.last()?).is_some() && g.reward(*cb.last()?).is_some();
    (covered && rewarded && ca.len() >= 2 && cb.len() >= 2).then_some((ca, cb))
}

struct Narrator<'a> {
    b: PromptBuilder,
    g: &'a GraphSpec,
    labels: &'a [String],
    social: bool,
}

impl Narrator<'_> {
    fn text(&mut self, s: &str) {
        self.b.push(s);
    }

    /// Node label, recorded as a `node:<label>` mention.
    fn bare(&mut self, v: u32) {
        let label = &self.labels[v as usize];
        self.b.push_seg(&format!("node:{label}"), label);
    }

    /// Node as a place: "room 3", "the lobby" or a scholar name.
    fn place(&mut self, v: u32) {
        if self.social {
            self.bare(v);
        } else if v == self.g.anchor {
            self.text("the ");
            self.bare(v);
        } else {
            self.text("room ");
            self.bare(v);
        }
    }

    /// Place in a query, where scholars are introduced as "scholar X".
    fn query_place(&mut self, v: u32) {
        if self.social {
            self.text("scholar ");
        }
        self.place(v);
    }

    fn list(&mut self, nodes: &[u32]) {
        for (i, &v) in nodes.iter().enumerate() {
            if i > 0 {
                self.text(if i + 1 == nodes.len() { " and " } else { ", " });
            }
            self.place(v);
        }
    }

    fn rooms_chains(&mut self, ca: &[u32], cb: &[u32]) {
        let g = self.g;
        self.text(&format!(
            "Imagine a building with {} rooms. From ",
            number_word(g.n() - 1)
        ));
        self.place(g.anchor);
        self.text(" you have two choices, you can go to ");
        self.place(ca[0]);
        self.text(" or ");
        self.place(cb[0]);
        self.text(". You enter ");
        self.place(ca[0]);
        self.text(", at the other end of ");
        self.place(ca[0]);
        self.text(" there's a door that leads to ");
        self.place(ca[1]);
        for w in ca[1..].windows(2) {
            self.text(", and ");
            self.place(w[0]);
            self.text(" leads to ");
            self.place(w[1]);
        }
        let end_a = *ca.last().unwrap();
        self.text(". There's a chest in ");
        self.place(end_a);
        self.text(&format!(
            ". You open it and there's {} dollars, but you do not take any money, you're just \
             learning about the environment. Then you exit and start over. This time in ",
            g.reward(end_a).unwrap()
        ));
        self.place(g.anchor);
        self.text(" you choose ");
        self.place(cb[0]);
        self.text(", which has a door to ");
        self.place(cb[1]);
        for w in cb[1..].windows(2) {
            self.text(", and ");
            self.place(w[0]);
            self.text(" has a door that leads to ");
            self.place(w[1]);
        }
        let end_b = *cb.last().unwrap();
        self.text(&format!(
            ". You find a chest with {} dollars in ",
            g.reward(end_b).unwrap()
        ));
        self.place(end_b);
        self.text(", but you do not take any money, you're just learning about the environment. You return to ");
        self.place(g.anchor);
        self.text(". ");
    }

    fn social_chains(&mut self, ca: &[u32], cb: &[u32]) {
        let g = self.g;
        self.text(&format!(
            "Imagine a group of {} scholars: ",
            number_word(g.n())
        ));
        let all: Vec<u32> = g.nodes.clone();
        self.list(&all);
        self.text(". You are friends with ");
        self.place(g.anchor);
        self.text(", who can either introduce you to ");
        self.place(ca[0]);
        self.text(" or ");
        self.place(cb[0]);
        self.text(". ");
        for (i, w) in ca.windows(2).enumerate() {
            if i > 0 {
                self.text(", and ");
            }
            self.place(w[0]);
            self.text(" is connected with ");
            self.place(w[1]);
        }
        let end_a = *ca.last().unwrap();
        self.text(". ");
        self.place(end_a);
        self.text(&format!(
            " is donating {} books, but you do not take any books, you're just learning about \
             the environment. Then you exit and start over. This time you ask ",
            g.reward(end_a).unwrap()
        ));
        self.place(g.anchor);
        self.text(" to introduce you to ");
        self.place(cb[0]);
        self.text(", who is connected with ");
        self.place(cb[1]);
        for w in cb[1..].windows(2) {
            self.text(", and ");
            self.place(w[0]);
            self.text(" is connected with ");
            self.place(w[1]);
        }
        let end_b = *cb.last().unwrap();
        self.text(". ");
        self.place(end_b);
        self.text(&format!(
            " is donating {} books, but you do not take any books, you're just learning about \
             the environment. ",
            g.reward(end_b).unwrap()
        ));
    }

    fn generic(&mut self) {
        let g = self.g;
        if self.social {
            self.text(&format!(
                "Imagine a group of {} scholars: ",
                number_word(g.n())
            ));
            let all: Vec<u32> = g.nodes.clone();
            self.list(&all);
            self.text(". You are friends with ");
            self.place(g.anchor);
            self.text(". ");
        } else {
            self.text(&format!(
                "Imagine a building with {} rooms. ",
                number_word(g.n() - 1)
            ));
        }
        for u in 0..g.n() as u32 {
            let succ = g.successors(u);
            if succ.is_empty() {
                continue;
            }
            if self.social {
                self.place(u);
                self.text(" is connected with ");
            } else {
                self.text("From ");
                self.place(u);
                self.text(if succ.len() == 1 {
                    " there is a door that leads to "
                } else {
                    " there are doors that lead to "
                });
            }
            self.list(&succ);
            self.text(". ");
        }
        if !g.directed && !self.social {
            self.text("Every door can be used in both directions. ");
        }
        for &(v, r) in &g.rewards {
            if self.social {
                self.place(v);
                self.text(&format!(
                    " is donating {r} books, but you do not take any books, you're just \
                     learning about the environment. "
                ));
            } else {
                self.text("There's a chest in ");
                self.place(v);
                self.text(&format!(
                    " with {r} dollars, but you do not take any money, you're just learning \
                     about the environment. "
                ));
            }
        }
        if !self.social {
            self.text("You return to ");
            self.place(g.anchor);
            self.text(". ");
        }
    }

    fn question(&mut self, start: u32, goal: u32) {
        let q = self.b.pos();
        self.text("From ");
        self.query_place(start);
        self.text(" what is the shortest path to ");
        self.query_place(goal);
        self.text("? Starting from ");
        self.query_place(start);
        let what = if self.social {
            "scholar names"
        } else {
            "room numbers"
        };
        self.text(&format!(", please list the {what} in order, including "));
        self.bare(start);
        self.text(", separated by commas.");
        self.b.close("question", q);
    }
}

fn render(
    g: &GraphSpec,
    domain: Domain,
    labels: &[String],
    start: u32,
    goal: u32,
    icl: bool,
) -> (String, BTreeMap<String, Vec<crate::tensorstore::Span>>) {
    let mut b = PromptBuilder::new();
    if icl {
        b.push_seg("icl_example", ICL_PREFIX);
        b.push("\nTask: ");
    }
    let mut nr = Narrator {
        b,
        g,
        labels,
        social: domain == Domain::SocialTies,
    };
    let body = nr.b.pos();
    match (two_chains(g), nr.social) {
        (Some((ca, cb)), false) => nr.rooms_chains(&ca, &cb),
        (Some((ca, cb)), true) => nr.social_chains(&ca, &cb),
        (None, _) => nr.generic(),
    }
    nr.b.close("narrative", body);
    nr.question(start, goal);
    nr.b.close("prompt", 0);
    nr.b.finish()
}

/// Traversal tasks for each condition: up to five `(start, goal)` pairs with
/// the condition's BFS distance, each rendered for three generation indices.
///
/// Conditions with fewer than five qualifying pairs use all of them and add
/// a warning.
pub fn gen_graph_suite(
    graph: &GraphSpec,
    domain: Domain,
    conditions: &[Condition],
    with_icl: bool,
    seed: u64,
) -> Result<GraphSuite> {
    if conditions.is_empty() {
        return Err(TaskgenError::EmptyConditions);
    }
    graph.validate()?;
    let n = graph.n() as u32;
    let dist: Vec<Vec<Option<usize>>> = (0..n)
        .map(|s| bfs_distances(graph, s))
        .collect::<Result<_>>()?;

    let mut suite = GraphSuite {
        tasks: Vec::new(),
        warnings: Vec::new(),
    };
    for &cond in conditions {
        let hops = cond.hops(graph);
        let mut pairs: Vec<(u32, u32)> = (0..n)
            .flat_map(|s| (0..n).map(move |t| (s, t)))
            .filter(|&(s, t)| s != t && dist[s as usize][t as usize] == Some(hops))
            .collect();
        let key = [tags::GRAPH, fnv1a(&graph.id), cond as u64 + 1];
        SplitMix64::keyed(seed, &key).shuffle(&mut pairs);
        if pairs.len() < PAIRS_PER_CONDITION {
            suite.warnings.push(format!(
                "{}: only {} pairs at distance {hops} for {}",
                graph.id,
                pairs.len(),
                cond.name()
            ));
        }
        pairs.truncate(PAIRS_PER_CONDITION);
        for (pi, &(start, goal)) in pairs.iter().enumerate() {
            for generation in 0..GENERATIONS {
                let labels = node_labels(graph, domain, seed, generation)?;
                let (text, segments) = render(graph, domain, &labels, start, goal, with_icl);
                let id = format!(
                    "graph-{}-{}-{}-{}-p{pi}-g{generation}",
                    graph.id,
                    domain.name(),
                    cond.name(),
                    if with_icl { "icl" } else { "base" }
                );
                let item = SuiteItem::new(id, text, segments)
                    .label("graph", &graph.id)
                    .label("domain", domain.name())
                    .label("condition", cond.name())
                    .label("start", &labels[start as usize])
                    .label("goal", &labels[goal as usize])
                    .label("start_node", start)
                    .label("goal_node", goal)
                    .label("distance", hops)
                    .label("generation", generation)
                    .label("icl", with_icl)
                    .label("node_labels", labels.join("|"));
                suite.tasks.push(TraversalTask {
                    item,
                    graph: graph.clone(),
                    domain,
                    start,
                    goal,
                    condition: cond,
                    icl: with_icl,
                    generation_index: generation,
                    node_label_map: labels,
                });
            }
        }
    }
    Ok(suite)
}

static SEPARATOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:,|->|→)\s*(?:(?:and|then)\s+)?(?:(?:the|room|scholar)\s+)*$")
        .expect("separator regex")
});

/// Reads the first run of two or more comma-separated node labels from the
/// response and checks it is an optimal path from start to goal.
pub fn score_traversal(response: &str, task: &TraversalTask) -> bool {
    let mut labels: Vec<(String, u32)> = task
        .node_label_map
        .iter()
        .enumerate()
        .map(|(i, l)| (l.to_lowercase(), i as u32))
        .collect();
    labels.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    let alternation = labels
        .iter()
        .map(|(l, _)| regex::escape(l))
        .collect::<Vec<_>>()
        .join("|");
    let Ok(re) = Regex::new(&format!(r"(?i)\b(?:{alternation})\b")) else {
        return false;
    };
    let lookup: BTreeMap<&str, u32> = labels.iter().map(|(l, v)| (l.as_str(), *v)).collect();

    let mentions: Vec<(usize, usize, u32)> = re
        .find_iter(response)
        .map(|m| {
            (
                m.start(),
                m.end(),
                lookup[m.as_str().to_lowercase().as_str()],
            )
        })
        .collect();
    let mut run: Vec<u32> = Vec::new();
    let mut last_end = 0;
    for &(s, e, v) in &mentions {
        if !run.is_empty() && SEPARATOR.is_match(&response[last_end..s]) {
            run.push(v);
        } else {
            if run.len() >= 2 {
                break;
            }
            run = vec![v];
        }
        last_end = e;
    }
    if run.len() < 2 {
        return false;
    }
    let Ok(dist) = bfs_distances(&task.graph, task.start) else {
        return false;
    };
    let Some(d) = dist[task.goal as usize] else {
        return false;
    };
    run.first() == Some(&task.start)
        && run.last() == Some(&task.goal)
        && run.len() == d + 1
        && run.windows(2).all(|w| task.graph.has_edge(w[0], w[1]))
}
