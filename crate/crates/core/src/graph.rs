//! Graph representation: a connected, simple, unweighted graph whose nodes are
//! split into a red group `R` and a blue group `B`, plus the bookkeeping for
//! shortcut edges added between the groups.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Blue,
}

impl Color {
    fn parse(token: &str) -> Option<Color> {
        match token.to_ascii_lowercase().as_str() {
            "r" | "red" => Some(Color::Red),
            "b" | "blue" => Some(Color::Blue),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Color::Red => "R",
            Color::Blue => "B",
        }
    }
}

/// Read access to an undirected graph for walkers and solvers.
pub trait WalkGraph {
    fn node_count(&self) -> usize;
    fn degree(&self, v: usize) -> usize;
    /// The `i`-th neighbor of `v`, for `i < degree(v)`.
    fn neighbor(&self, v: usize, i: usize) -> usize;
}

/// An immutable, validated instance. Node indices are dense and 0-based.
#[derive(Clone, Debug)]
pub struct BipartiteInstance {
    adjacency: Vec<Vec<usize>>,
    colors: Vec<Color>,
    red: Vec<usize>,
    blue: Vec<usize>,
    red_position: Vec<Option<usize>>,
    // adjacency of G[R] in red-local indices
    red_adjacency: Vec<Vec<usize>>,
    // per red-local index
    blue_neighbors: Vec<usize>,
    names: Vec<String>,
    name_index: HashMap<String, usize>,
    edge_count: usize,
}

impl BipartiteInstance {
    /// Builds an instance from index pairs. Duplicate edges are dropped with a
    /// warning; self-loops are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)], colors: Vec<Color>) -> Result<Self> {
        let names = (0..n).map(|i| i.to_string()).collect();
        Self::with_names(n, edges, colors, names)
    }

    pub fn with_names(
        n: usize,
        edges: &[(usize, usize)],
        colors: Vec<Color>,
        names: Vec<String>,
    ) -> Result<Self> {
        if colors.len() != n {
            return Err(Error::InvalidBipartition(format!(
                "{} colors for {} nodes",
                colors.len(),
                n
            )));
        }
        assert_eq!(names.len(), n, "one name per node");

        let mut adjacency = vec![Vec::new(); n];
        for (line, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::MalformedInput {
                    line: line + 1,
                    reason: format!("edge ({u}, {v}) references a node outside 0..{n}"),
                });
            }
            if u == v {
                return Err(Error::MalformedInput {
                    line: line + 1,
                    reason: format!("self-loop on node {}", names[u]),
                });
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut duplicates = 0;
        for list in adjacency.iter_mut() {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            duplicates += before - list.len();
        }
        if duplicates > 0 {
            warn!("dropped {} duplicate edge(s)", duplicates / 2);
        }
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;

        let red: Vec<usize> = (0..n).filter(|&v| colors[v] == Color::Red).collect();
        let blue: Vec<usize> = (0..n).filter(|&v| colors[v] == Color::Blue).collect();
        if red.is_empty() {
            return Err(Error::InvalidBipartition("no red nodes".into()));
        }
        if blue.is_empty() {
            return Err(Error::InvalidBipartition("no blue nodes".into()));
        }

        let components = count_components(&adjacency);
        if components != 1 {
            return Err(Error::DisconnectedGraph { components });
        }

        let mut red_position = vec![None; n];
        for (i, &r) in red.iter().enumerate() {
            red_position[r] = Some(i);
        }
        let red_adjacency = red
            .iter()
            .map(|&r| {
                adjacency[r]
                    .iter()
                    .filter_map(|&w| red_position[w])
                    .collect::<Vec<_>>()
            })
            .collect();
        let blue_neighbors = red
            .iter()
            .map(|&r| adjacency[r].iter().filter(|&&w| colors[w] == Color::Blue).count())
            .collect();
        let name_index = names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();

        Ok(Self {
            adjacency,
            colors,
            red,
            blue,
            red_position,
            red_adjacency,
            blue_neighbors,
            names,
            name_index,
            edge_count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn color(&self, v: usize) -> Color {
        self.colors[v]
    }

    pub fn is_red(&self, v: usize) -> bool {
        v < self.colors.len() && self.colors[v] == Color::Red
    }

    /// Red node ids in ascending order.
    pub fn red(&self) -> &[usize] {
        &self.red
    }

    /// Blue node ids in ascending order.
    pub fn blue(&self) -> &[usize] {
        &self.blue
    }

    /// Position of `v` in [`Self::red`], if red.
    pub fn red_position(&self, v: usize) -> Option<usize> {
        self.red_position.get(v).copied().flatten()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Number of blue neighbors of red node `r` in the original graph.
    pub fn blue_neighbor_count(&self, r: usize) -> usize {
        let p = self.red_position(r).expect("red node");
        self.blue_neighbors[p]
    }

    /// How many shortcuts red node `r` can still receive.
    pub fn capacity(&self, r: usize) -> usize {
        self.blue.len() - self.blue_neighbor_count(r)
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let total: usize = self.red.iter().map(|&r| self.adjacency[r].len()).sum();
        DegreeStats {
            mean_red_degree: total as f64 / self.red.len() as f64,
        }
    }

    /// Maximum degree over `nodes` in the original graph (0 for an empty set).
    pub fn max_degree_of(&self, nodes: &[usize]) -> usize {
        nodes.iter().map(|&v| self.adjacency[v].len()).max().unwrap_or(0)
    }

    /// The red block of the augmented graph `G + F`: adjacency of `G[R]` and the
    /// full degrees of red nodes including shortcut edges.
    pub fn red_block(&self, shortcuts: &ShortcutSet) -> Result<RedBlock<'_>> {
        shortcuts.validate(self)?;
        Ok(self.red_block_unchecked(shortcuts))
    }

    pub(crate) fn red_block_unchecked(&self, shortcuts: &ShortcutSet) -> RedBlock<'_> {
        let mut degree: Vec<usize> = self.red.iter().map(|&r| self.adjacency[r].len()).collect();
        for &r in shortcuts.endpoints() {
            degree[self.red_position[r].expect("validated")] += 1;
        }
        RedBlock {
            adjacency: &self.red_adjacency,
            degree,
        }
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v) in self.edges() {
            writeln!(out, "{} {}", self.names[u], self.names[v])?;
        }
        Ok(())
    }

    pub fn write_partition<W: Write>(&self, mut out: W) -> Result<()> {
        for v in 0..self.node_count() {
            writeln!(out, "{} {}", self.names[v], self.colors[v].label())?;
        }
        Ok(())
    }
}

impl WalkGraph for BipartiteInstance {
    fn node_count(&self) -> usize {
        self.adjacency.len()
    }
    fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }
    fn neighbor(&self, v: usize, i: usize) -> usize {
        self.adjacency[v][i]
    }
}

fn count_components(adjacency: &[Vec<usize>]) -> usize {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut components = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        components += 1;
        seen[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &w in &adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    components
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegreeStats {
    /// `d_R`, the mean degree of red nodes.
    pub mean_red_degree: f64,
}

/// Parses an edge list (`u v` per line, `#` comments) and a partition file
/// (`node R|B` per line) into a validated instance.
pub fn load_instance<E: BufRead, P: BufRead>(edges: E, partition: P) -> Result<BipartiteInstance> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(name) {
            return i;
        }
        index.insert(name.to_string(), names.len());
        names.push(name.to_string());
        names.len() - 1
    };

    let mut pairs = Vec::new();
    for (lineno, line) in edges.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::MalformedInput {
                line: lineno + 1,
                reason: format!("expected two node ids, found {} token(s)", tokens.len()),
            });
        }
        if tokens[0] == tokens[1] {
            return Err(Error::MalformedInput {
                line: lineno + 1,
                reason: format!("self-loop on node {}", tokens[0]),
            });
        }
        let u = intern(tokens[0], &mut names);
        let v = intern(tokens[1], &mut names);
        pairs.push((u, v));
    }

    let mut colors: Vec<Option<Color>> = vec![None; names.len()];
    for (lineno, line) in partition.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let color = match tokens.as_slice() {
            [_, c] => Color::parse(c),
            _ => None,
        }
        .ok_or_else(|| Error::MalformedInput {
            line: lineno + 1,
            reason: "expected `node R` or `node B`".into(),
        })?;
        let v = intern(tokens[0], &mut names);
        if v >= colors.len() {
            colors.resize(v + 1, None);
        }
        match colors[v] {
            Some(prev) if prev != color => {
                return Err(Error::MalformedInput {
                    line: lineno + 1,
                    reason: format!("node {} colored twice", tokens[0]),
                })
            }
            _ => colors[v] = Some(color),
        }
    }

    let colors = colors
        .into_iter()
        .enumerate()
        .map(|(v, c)| {
            c.ok_or_else(|| Error::InvalidBipartition(format!("node {} has no color", names[v])))
        })
        .collect::<Result<Vec<_>>>()?;
    BipartiteInstance::with_names(names.len(), &pairs, colors, names)
}

/// A multiset of red endpoints, one entry per added shortcut edge. Blue
/// endpoints do not affect red-to-blue hitting times, so they are not stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutSet {
    endpoints: Vec<usize>,
}

impl ShortcutSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_endpoints(endpoints: impl IntoIterator<Item = usize>) -> Self {
        Self {
            endpoints: endpoints.into_iter().collect(),
        }
    }

    /// Endpoints in insertion order.
    pub fn endpoints(&self) -> &[usize] {
        &self.endpoints
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    pub fn push(&mut self, r: usize) {
        self.endpoints.push(r);
    }

    /// A copy with one more shortcut at `r`.
    pub fn with(&self, r: usize) -> Self {
        let mut out = self.clone();
        out.push(r);
        out
    }

    pub fn multiplicity(&self, r: usize) -> usize {
        self.endpoints.iter().filter(|&&e| e == r).count()
    }

    /// Endpoints sorted ascending; two sets are the same multiset iff these match.
    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.endpoints.clone();
        v.sort_unstable();
        v
    }

    pub fn validate(&self, instance: &BipartiteInstance) -> Result<()> {
        let mut used: HashMap<usize, usize> = HashMap::new();
        for &r in &self.endpoints {
            if !instance.is_red(r) {
                return Err(Error::NotRed { node: r });
            }
            let count = used.entry(r).or_insert(0);
            *count += 1;
            if *count > instance.capacity(r) {
                return Err(Error::CapacityExceeded { node: r });
            }
        }
        Ok(())
    }
}

/// Red nodes that can still receive a shortcut given `shortcuts`.
pub fn candidate_endpoints(instance: &BipartiteInstance, shortcuts: &ShortcutSet) -> Vec<usize> {
    let mut used = vec![0usize; instance.node_count()];
    for &r in shortcuts.endpoints() {
        if r < used.len() {
            used[r] += 1;
        }
    }
    instance
        .red()
        .iter()
        .copied()
        .filter(|&r| instance.blue_neighbor_count(r) + used[r] < instance.blue().len())
        .collect()
}

/// The graph `G + F` as an overlay on an instance.
#[derive(Clone, Debug)]
pub struct AugmentedView<'a> {
    instance: &'a BipartiteInstance,
    extra: Vec<Vec<usize>>,
    added: Vec<(usize, usize)>,
}

/// Materializes `G + F`, connecting each shortcut's red endpoint to the
/// lowest-index blue node it is not yet adjacent to.
pub fn augmented_view<'a>(
    instance: &'a BipartiteInstance,
    shortcuts: &ShortcutSet,
) -> Result<AugmentedView<'a>> {
    let mut taken: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut pairs = Vec::with_capacity(shortcuts.len());
    for &r in shortcuts.endpoints() {
        if !instance.is_red(r) {
            return Err(Error::NotRed { node: r });
        }
        let already = taken.entry(r).or_default();
        let b = instance
            .blue()
            .iter()
            .copied()
            .find(|&b| !instance.has_edge(r, b) && !already.contains(&b))
            .ok_or(Error::CapacityExceeded { node: r })?;
        already.push(b);
        pairs.push((r, b));
    }
    AugmentedView::with_blue_endpoints(instance, &pairs)
}

impl<'a> AugmentedView<'a> {
    /// Overlay with explicit `(red, blue)` shortcut pairs.
    pub fn with_blue_endpoints(
        instance: &'a BipartiteInstance,
        pairs: &[(usize, usize)],
    ) -> Result<Self> {
        let mut extra = vec![Vec::new(); instance.node_count()];
        for &(r, b) in pairs {
            if !instance.is_red(r) {
                return Err(Error::NotRed { node: r });
            }
            if b >= instance.node_count() || instance.color(b) != Color::Blue {
                return Err(Error::InvalidParameter(format!("node {b} is not blue")));
            }
            if instance.has_edge(r, b) || extra[r].contains(&b) {
                return Err(Error::CapacityExceeded { node: r });
            }
            extra[r].push(b);
            extra[b].push(r);
        }
        Ok(Self {
            instance,
            extra,
            added: pairs.to_vec(),
        })
    }

    pub fn instance(&self) -> &BipartiteInstance {
        self.instance
    }

    pub fn shortcut_edges(&self) -> &[(usize, usize)] {
        &self.added
    }

    pub fn edge_count(&self) -> usize {
        self.instance.edge_count() + self.added.len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.instance
            .neighbors(v)
            .iter()
            .chain(self.extra[v].iter())
            .copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.instance.has_edge(u, v) || self.extra[u].contains(&v)
    }
}

impl WalkGraph for AugmentedView<'_> {
    fn node_count(&self) -> usize {
        self.instance.node_count()
    }
    fn degree(&self, v: usize) -> usize {
        self.instance.neighbors(v).len() + self.extra[v].len()
    }
    fn neighbor(&self, v: usize, i: usize) -> usize {
        let base = self.instance.neighbors(v);
        if i < base.len() {
            base[i]
        } else {
            self.extra[v][i - base.len()]
        }
    }
}

/// The transient block of the red-to-blue absorbing chain: `G[R]` adjacency in
/// red-local indices and the full degree of each red node in `G + F`.
#[derive(Clone, Debug)]
pub struct RedBlock<'a> {
    pub adjacency: &'a [Vec<usize>],
    pub degree: Vec<usize>,
}

impl RedBlock<'_> {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn mean_degree(&self) -> f64 {
        self.degree.iter().sum::<usize>() as f64 / self.degree.len() as f64
    }
}
