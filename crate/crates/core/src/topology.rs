//! Built-in benchmark topologies.

use crate::graph::ContentionGraph;

/// Names accepted by [`builtin_topology`], in benchmark order.
pub const BUILTIN_NAMES: [&str; 6] = ["two-link", "triangle", "chain3", "chain4", "fig1", "star3"];

/// Returns the named topology, or `None` for an unknown name.
///
/// `fig1` is the four-link graph where link 1 senses only link 2 and links
/// 2, 3, 4 sense each other; `star3` has link 1 at the center of three
/// leaves.
pub fn builtin_topology(name: &str) -> Option<ContentionGraph> {
    let g = match name {
        "two-link" => ContentionGraph::complete(2),
        "triangle" => ContentionGraph::complete(3),
        "chain3" => ContentionGraph::path(3),
        "chain4" => ContentionGraph::path(4),
        "fig1" => {
            ContentionGraph::numbered(4, &[(0, 1), (1, 2), (1, 3), (2, 3)]).expect("fig1 is valid")
        }
        "star3" => ContentionGraph::star(3),
        _ => return None,
    };
    Some(g)
}
