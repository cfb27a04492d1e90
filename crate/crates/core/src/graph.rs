//! Contention graphs and the combinatorial objects derived from them.
//!
//! Links are vertices; an edge joins two links whose transmitters sense each
//! other. A system state is a [`LinkSet`] of transmitting links, and the
//! feasible collision-free states are exactly the independent sets.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of links accepted by state-space enumeration.
pub const DEFAULT_MAX_LINKS: usize = 25;

/// Width of [`LinkSet`]; no configuration may exceed it.
pub const LINKSET_CAPACITY: usize = 64;

/// Unordered pair of link indices, stored with the smaller index first.
pub type LinkPair = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("link list is empty")]
    EmptyLinks,
    #[error("duplicate link id `{0}`")]
    DuplicateLink(String),
    #[error("link id must be nonempty")]
    EmptyLinkId,
    #[error("edge references undeclared link `{0}`")]
    UndeclaredLink(String),
    #[error("self-loop edge on link `{0}`")]
    SelfLoop(String),
    #[error("link index {index} out of range for {links} links")]
    IndexOutOfRange { index: usize, links: usize },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("malformed graph document: {0}")]
    Json(String),
    #[error("{links} links exceeds the state-space limit of {limit}")]
    TooManyLinks { links: usize, limit: usize },
    #[error("state {0} is not an independent set of the contention graph")]
    NotIndependent(LinkSet),
}

/// Fixed-width bit set over link indices.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkSet(u64);

impl LinkSet {
    pub const EMPTY: LinkSet = LinkSet(0);

    pub fn from_bits(bits: u64) -> Self {
        LinkSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(i: usize) -> Self {
        debug_assert!(i < LINKSET_CAPACITY);
        LinkSet(1 << i)
    }

    /// The set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= LINKSET_CAPACITY {
            LinkSet(u64::MAX)
        } else {
            LinkSet((1u64 << n) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices
            .into_iter()
            .fold(LinkSet::EMPTY, |acc, i| acc.with(i))
    }

    pub fn contains(self, i: usize) -> bool {
        i < LINKSET_CAPACITY && self.0 & (1 << i) != 0
    }

    pub fn with(self, i: usize) -> Self {
        LinkSet(self.0 | (1 << i))
    }

    pub fn without(self, i: usize) -> Self {
        LinkSet(self.0 & !(1 << i))
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn union(self, other: LinkSet) -> Self {
        LinkSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LinkSet) -> Self {
        LinkSet(self.0 & other.0)
    }

    pub fn difference(self, other: LinkSet) -> Self {
        LinkSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: LinkSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Population count (number of links in the set).
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }
}

impl fmt::Debug for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Links and their symmetric, irreflexive carrier-sensing relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContentionGraph {
    link_ids: Vec<String>,
    neighbors: Vec<LinkSet>,
}

impl ContentionGraph {
    /// Builds a graph from link names and index pairs.
    pub fn new<S: Into<String>>(
        link_ids: impl IntoIterator<Item = S>,
        edges: &[LinkPair],
    ) -> Result<Self, GraphError> {
        let link_ids: Vec<String> = link_ids.into_iter().map(Into::into).collect();
        if link_ids.is_empty() {
            return Err(GraphError::EmptyLinks);
        }
        let n = link_ids.len();
        if n > LINKSET_CAPACITY {
            return Err(GraphError::TooManyLinks {
                links: n,
                limit: LINKSET_CAPACITY,
            });
        }
        let mut seen = HashMap::with_capacity(n);
        for (i, id) in link_ids.iter().enumerate() {
            if id.is_empty() {
                return Err(GraphError::EmptyLinkId);
            }
            if seen.insert(id.as_str(), i).is_some() {
                return Err(GraphError::DuplicateLink(id.clone()));
            }
        }
        let mut neighbors = vec![LinkSet::EMPTY; n];
        for &(a, b) in edges {
            for idx in [a, b] {
                if idx >= n {
                    return Err(GraphError::IndexOutOfRange {
                        index: idx,
                        links: n,
                    });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(link_ids[a].clone()));
            }
            neighbors[a].insert(b);
            neighbors[b].insert(a);
        }
        Ok(ContentionGraph {
            link_ids,
            neighbors,
        })
    }

    /// Links named `1..=n`, for programmatic construction.
    pub fn numbered(n: usize, edges: &[LinkPair]) -> Result<Self, GraphError> {
        Self::new((1..=n).map(|i| i.to_string()), edges)
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::numbered(n, &edges).expect("complete graph is valid")
    }

    pub fn edgeless(n: usize) -> Self {
        Self::numbered(n, &[]).expect("edgeless graph is valid")
    }

    /// Path `1 - 2 - ... - n`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::numbered(n, &edges).expect("path graph is valid")
    }

    /// Link 1 is the center, adjacent to `leaves` mutually non-adjacent links.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Self::numbered(leaves + 1, &edges).expect("star graph is valid")
    }

    pub fn len(&self) -> usize {
        self.link_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.link_ids.is_empty()
    }

    pub fn link_ids(&self) -> &[String] {
        &self.link_ids
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_ids.iter().position(|l| l == id)
    }

    pub fn all_links(&self) -> LinkSet {
        LinkSet::full(self.len())
    }

    pub fn neighbors(&self, i: usize) -> LinkSet {
        self.neighbors[i]
    }

    /// Neighbor masks indexed by link.
    pub fn neighbor_masks(&self) -> &[LinkSet] {
        &self.neighbors
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// All edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<LinkPair> {
        (0..self.len())
            .flat_map(|i| {
                self.neighbors[i]
                    .iter()
                    .filter(move |&j| j > i)
                    .map(move |j| (i, j))
            })
            .collect()
    }

    pub fn is_independent(&self, s: LinkSet) -> bool {
        if !s.difference(self.all_links()).is_empty() {
            return false;
        }
        s.iter().all(|i| !self.neighbors[i].intersects(s))
    }

    /// Links outside `s` that have at least one neighbor in `s`.
    pub fn blocked_by(&self, s: LinkSet) -> LinkSet {
        s.iter()
            .fold(LinkSet::EMPTY, |acc, i| acc.union(self.neighbors[i]))
            .difference(s)
    }
}

#[derive(Deserialize)]
struct GraphDocument {
    links: Vec<String>,
    #[serde(default)]
    edges: Vec<(String, String)>,
}

/// Parses a graph file, in either the line format or the JSON document
/// format. The format is chosen by the first non-comment character.
pub fn parse_graph(text: &str) -> Result<ContentionGraph, GraphError> {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .and_then(|l| l.chars().next());
    match first {
        Some('{') => parse_json(text),
        _ => parse_lines(text),
    }
}

fn parse_json(text: &str) -> Result<ContentionGraph, GraphError> {
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let doc: GraphDocument =
        serde_json::from_str(&body).map_err(|e| GraphError::Json(e.to_string()))?;
    build_named(
        doc.links,
        doc.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())),
    )
}

fn parse_lines(text: &str) -> Result<ContentionGraph, GraphError> {
    let mut links: Option<Vec<String>> = None;
    let mut edges: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |message: &str| GraphError::Syntax {
            line: lineno + 1,
            message: message.to_string(),
        };
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| syntax("expected `links:` or `edge:`"))?;
        match key.trim() {
            "links" => {
                if links.is_some() {
                    return Err(syntax("`links:` declared more than once"));
                }
                links = Some(rest.split_whitespace().map(str::to_string).collect());
            }
            "edge" => {
                if links.is_none() {
                    return Err(syntax("`edge:` before `links:`"));
                }
                let ends: Vec<&str> = rest.split_whitespace().collect();
                match ends.as_slice() {
                    [a, b] => edges.push((a.to_string(), b.to_string())),
                    _ => return Err(syntax("an edge names exactly two links")),
                }
            }
            other => return Err(syntax(&format!("unknown key `{other}`"))),
        }
    }
    let links = links.ok_or(GraphError::EmptyLinks)?;
    build_named(links, edges.iter().map(|(a, b)| (a.as_str(), b.as_str())))
}

fn build_named<'a>(
    links: Vec<String>,
    edges: impl Iterator<Item = (&'a str, &'a str)>,
) -> Result<ContentionGraph, GraphError> {
    if links.is_empty() {
        return Err(GraphError::EmptyLinks);
    }
    let mut index = HashMap::with_capacity(links.len());
    for (i, id) in links.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(GraphError::DuplicateLink(id.clone()));
        }
    }
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UndeclaredLink(id.to_string()))
    };
    let mut pairs = Vec::new();
    for (a, b) in edges {
        let (i, j) = (lookup(a)?, lookup(b)?);
        if i == j {
            return Err(GraphError::SelfLoop(a.to_string()));
        }
        pairs.push((i, j));
    }
    ContentionGraph::new(links, &pairs)
}

/// Every independent set of `g`, including the empty set, ordered by
/// population count and then by bit pattern.
pub fn enumerate_feasible_states(g: &ContentionGraph) -> Result<Vec<LinkSet>, GraphError> {
    enumerate_feasible_states_bounded(g, DEFAULT_MAX_LINKS)
}

/// As [`enumerate_feasible_states`] with an explicit link-count cap.
pub fn enumerate_feasible_states_bounded(
    g: &ContentionGraph,
    max_links: usize,
) -> Result<Vec<LinkSet>, GraphError> {
    let limit = max_links.min(LINKSET_CAPACITY);
    if g.len() > limit {
        return Err(GraphError::TooManyLinks {
            links: g.len(),
            limit,
        });
    }
    let mut out = Vec::new();
    extend_independent(g, 0, LinkSet::EMPTY, g.all_links(), &mut out);
    out.sort_unstable_by_key(|s| (s.len(), s.bits()));
    Ok(out)
}

// Backtracking: `allowed` holds the links not adjacent to anything in `current`.
fn extend_independent(
    g: &ContentionGraph,
    next: usize,
    current: LinkSet,
    allowed: LinkSet,
    out: &mut Vec<LinkSet>,
) {
    out.push(current);
    for i in next..g.len() {
        if allowed.contains(i) {
            let allowed = allowed.difference(g.neighbors(i)).without(i);
            extend_independent(g, i + 1, current.with(i), allowed, out);
        }
    }
}

/// Links that are idle and sense the channel idle in state `s`.
pub fn active_countdown_set(g: &ContentionGraph, s: LinkSet) -> Result<LinkSet, GraphError> {
    if !g.is_independent(s) {
        return Err(GraphError::NotIndependent(s));
    }
    Ok(countdown_set_unchecked(g, s))
}

pub(crate) fn countdown_set_unchecked(g: &ContentionGraph, s: LinkSet) -> LinkSet {
    g.all_links().difference(s).difference(g.blocked_by(s))
}

/// Edges of `g` whose endpoints both count down in state `s`.
pub fn countdown_edges(g: &ContentionGraph, s: LinkSet) -> Result<Vec<LinkPair>, GraphError> {
    let active = active_countdown_set(g, s)?;
    Ok(edges_within(g, active))
}

pub(crate) fn edges_within(g: &ContentionGraph, set: LinkSet) -> Vec<LinkPair> {
    set.iter()
        .flat_map(|i| {
            g.neighbors(i)
                .intersection(set)
                .iter()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
        .collect()
}
