//! Collision-aware perturbation of the ideal CSMA model.
//!
//! Time is slotted and backoff is uniform on `[0, CW]`, so a counting-down
//! link fires in a given slot with probability `q1 = 2/(CW+2)`. A link with
//! `n` counting-down neighbors collides with probability
//! `q_n = 1 - (1 - q1)^n`. The feasible states keep the product form of the
//! ideal model with every activation damped by its success probability, and
//! each feasible state `s` with `m ≥ 1` countdown edges feeds a collision
//! aggregate of weight `w(s)·q_m·ρ`, resolved here into one state per edge.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    countdown_set_unchecked, edges_within, enumerate_feasible_states_bounded, ContentionGraph,
    GraphError, LinkPair, LinkSet, DEFAULT_MAX_LINKS,
};
use crate::icn::{AccessIntensities, StationaryDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GicnError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("contention window must be at least 1")]
    ZeroWindow,
    #[error("per-slot transmission probability must lie in [0, 1), got {0}")]
    BadSlotProbability(f64),
    #[error("access intensity must be finite and non-negative, got {0}")]
    BadIntensity(f64),
    #[error("the collision model needs one access intensity shared by all links")]
    HeterogeneousIntensity,
    #[error("{given} weights for an augmented space of {states} states")]
    WeightCount { given: usize, states: usize },
}

/// Contention window and the per-slot firing probability it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionParams {
    cw: Option<u32>,
    q1: f64,
}

impl CollisionParams {
    pub fn new(cw: u32) -> Result<Self, GicnError> {
        if cw == 0 {
            return Err(GicnError::ZeroWindow);
        }
        Ok(CollisionParams {
            cw: Some(cw),
            q1: 2.0 / (f64::from(cw) + 2.0),
        })
    }

    /// Sets `q1` directly; `q1 = 0` switches collisions off.
    pub fn with_slot_probability(q1: f64) -> Result<Self, GicnError> {
        if !(0.0..1.0).contains(&q1) {
            return Err(GicnError::BadSlotProbability(q1));
        }
        Ok(CollisionParams { cw: None, q1 })
    }

    pub fn collision_free() -> Self {
        CollisionParams { cw: None, q1: 0.0 }
    }

    pub fn cw(&self) -> Option<u32> {
        self.cw
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }
}

/// Probability that a counting-down link with `n` counting-down neighbors
/// collides when it fires.
pub fn conditional_collision_prob(params: &CollisionParams, n: usize) -> f64 {
    match params.cw {
        // (CW/(CW+2))^n evaluated directly for the window form
        Some(cw) => {
            let cw = f64::from(cw);
            1.0 - (cw / (cw + 2.0)).powi(n as i32)
        }
        None => 1.0 - (1.0 - params.q1).powi(n as i32),
    }
}

/// First-order approximation `n·q1`.
pub fn linearized_collision_prob(params: &CollisionParams, n: usize) -> f64 {
    n as f64 * params.q1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AugmentedState {
    Feasible(LinkSet),
    /// Two adjacent links that were counting down in `base` started together.
    Collision {
        base: LinkSet,
        pair: LinkPair,
    },
}

impl AugmentedState {
    pub fn base(&self) -> LinkSet {
        match *self {
            AugmentedState::Feasible(s) => s,
            AugmentedState::Collision { base, .. } => base,
        }
    }

    pub fn is_collision(&self) -> bool {
        matches!(self, AugmentedState::Collision { .. })
    }

    pub fn colliding_pair(&self) -> Option<LinkPair> {
        match *self {
            AugmentedState::Feasible(_) => None,
            AugmentedState::Collision { pair, .. } => Some(pair),
        }
    }
}

/// Feasible states in canonical order followed by the per-edge collision
/// states of each collision-capable feasible state.
#[derive(Debug, Clone)]
pub struct AugmentedSpace {
    states: Vec<AugmentedState>,
    feasible: usize,
    index: HashMap<LinkSet, usize>,
    // for each feasible state: countdown set and countdown-edge count
    countdown: Vec<LinkSet>,
    edge_count: Vec<usize>,
    // for each collision state: index of its base feasible state
    collision_base: Vec<usize>,
}

impl AugmentedSpace {
    pub fn states(&self) -> &[AugmentedState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn feasible_count(&self) -> usize {
        self.feasible
    }

    pub fn collision_count(&self) -> usize {
        self.states.len() - self.feasible
    }

    pub fn feasible_states(&self) -> impl Iterator<Item = LinkSet> + '_ {
        self.states[..self.feasible]
            .iter()
            .map(AugmentedState::base)
    }

    pub fn feasible_index(&self, s: LinkSet) -> Option<usize> {
        self.index.get(&s).copied()
    }

    /// Countdown set of the `k`-th feasible state.
    pub fn countdown_set(&self, k: usize) -> LinkSet {
        self.countdown[k]
    }

    /// Number of countdown edges of the `k`-th feasible state.
    pub fn countdown_edge_count(&self, k: usize) -> usize {
        self.edge_count[k]
    }

    /// Index of the feasible state a state belongs to (itself when feasible).
    pub fn base_index(&self, k: usize) -> usize {
        if k < self.feasible {
            k
        } else {
            self.collision_base[k - self.feasible]
        }
    }

    /// Feasible states from which a collision can occur.
    pub fn collision_capable(&self) -> Vec<LinkSet> {
        (0..self.feasible)
            .filter(|&k| self.edge_count[k] > 0)
            .map(|k| self.states[k].base())
            .collect()
    }
}

pub fn build_augmented_space(g: &ContentionGraph) -> Result<AugmentedSpace, GicnError> {
    build_augmented_space_bounded(g, DEFAULT_MAX_LINKS)
}

pub fn build_augmented_space_bounded(
    g: &ContentionGraph,
    max_links: usize,
) -> Result<AugmentedSpace, GicnError> {
    let feasible = enumerate_feasible_states_bounded(g, max_links)?;
    let mut states: Vec<AugmentedState> = feasible
        .iter()
        .map(|&s| AugmentedState::Feasible(s))
        .collect();
    let mut index = HashMap::with_capacity(feasible.len());
    let mut countdown = Vec::with_capacity(feasible.len());
    let mut edge_count = Vec::with_capacity(feasible.len());
    let mut collision_base = Vec::new();
    for (k, &s) in feasible.iter().enumerate() {
        index.insert(s, k);
        let active = countdown_set_unchecked(g, s);
        let edges = edges_within(g, active);
        countdown.push(active);
        edge_count.push(edges.len());
        for pair in edges {
            states.push(AugmentedState::Collision { base: s, pair });
            collision_base.push(k);
        }
    }
    Ok(AugmentedSpace {
        states,
        feasible: feasible.len(),
        index,
        countdown,
        edge_count,
        collision_base,
    })
}

/// Unnormalized product-form weight of every augmented state; the empty
/// state has weight 1.
///
/// A feasible state is reached from the empty state by activating its links
/// in increasing index order, each activation contributing `(1 - q_n)·ρ`
/// with `n` the activating link's counting-down neighbors at that moment.
/// A collision state `(s, e)` carries `w(s)·q_m·ρ / m`, an equal share of
/// the aggregate over the `m` countdown edges of `s`.
pub fn gicn_weights(
    g: &ContentionGraph,
    space: &AugmentedSpace,
    rho: f64,
    params: &CollisionParams,
) -> Result<Vec<f64>, GicnError> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(GicnError::BadIntensity(rho));
    }
    let mut weights = Vec::with_capacity(space.len());
    for s in space.feasible_states() {
        weights.push(activation_weight(g, s, rho, params, s.iter()));
    }
    for k in space.feasible..space.len() {
        let base = space.base_index(k);
        let m = space.edge_count[base];
        let aggregate = weights[base] * conditional_collision_prob(params, m) * rho;
        weights.push(aggregate / m as f64);
    }
    Ok(weights)
}

/// Weight of feasible state `s` along the given activation order.
pub fn activation_weight(
    g: &ContentionGraph,
    s: LinkSet,
    rho: f64,
    params: &CollisionParams,
    order: impl IntoIterator<Item = usize>,
) -> f64 {
    let mut current = LinkSet::EMPTY;
    let mut w = 1.0;
    for i in order {
        debug_assert!(s.contains(i));
        let active = countdown_set_unchecked(g, current);
        let n = g.neighbors(i).intersection(active).len();
        w *= (1.0 - conditional_collision_prob(params, n)) * rho;
        current.insert(i);
    }
    w
}

/// Per-link airtime, airtime in rate units, and collision probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub throughput_normalized: Vec<f64>,
    pub throughput_rate: Vec<f64>,
    pub collision_prob: Vec<f64>,
}

impl LinkMetrics {
    pub fn new(throughput_normalized: Vec<f64>, collision_prob: Vec<f64>, rate: f64) -> Self {
        let throughput_rate = throughput_normalized.iter().map(|t| t * rate).collect();
        LinkMetrics {
            throughput_normalized,
            throughput_rate,
            collision_prob,
        }
    }

    pub fn links(&self) -> usize {
        self.throughput_normalized.len()
    }
}

/// Throughput and collision probability from any mass over the augmented
/// space (product-form weights or a solved stationary vector).
///
/// Link `i` transmits successfully in every feasible state containing it and
/// in every collision state whose base contains it. Its collided mass out of
/// a collision aggregate of base `s` is the share `q_{n_i(s)} / q_m(s)`,
/// where `n_i(s)` counts its counting-down neighbors in `s`.
pub fn gicn_metrics(
    g: &ContentionGraph,
    space: &AugmentedSpace,
    mass: &[f64],
    params: &CollisionParams,
    rate: f64,
) -> Result<LinkMetrics, GicnError> {
    if mass.len() != space.len() {
        return Err(GicnError::WeightCount {
            given: mass.len(),
            states: space.len(),
        });
    }
    let n = g.len();
    let total: f64 = mass.iter().sum();
    let mut success = vec![0.0; n];
    let mut collided = vec![0.0; n];
    let mut aggregate = vec![0.0; space.feasible];
    for (k, (state, &w)) in space.states.iter().zip(mass).enumerate() {
        for i in state.base().iter() {
            success[i] += w;
        }
        if state.is_collision() {
            aggregate[space.base_index(k)] += w;
        }
    }
    for (k, &c) in aggregate.iter().enumerate() {
        let m = space.edge_count[k];
        if m == 0 || c == 0.0 {
            continue;
        }
        let qm = conditional_collision_prob(params, m);
        let active = space.countdown[k];
        for i in active.iter() {
            let ni = g.neighbors(i).intersection(active).len();
            if ni > 0 {
                collided[i] += c * conditional_collision_prob(params, ni) / qm;
            }
        }
    }
    let throughput = success
        .iter()
        .map(|&s| if total > 0.0 { s / total } else { 0.0 })
        .collect();
    let collision_prob = success
        .iter()
        .zip(&collided)
        .map(|(&s, &c)| if s + c > 0.0 { c / (s + c) } else { 0.0 })
        .collect();
    Ok(LinkMetrics::new(throughput, collision_prob, rate))
}

/// Total collision mass per collision-capable base state, in feasible order.
pub fn aggregate_collision_mass(space: &AugmentedSpace, mass: &[f64]) -> Vec<(LinkSet, f64)> {
    let mut out: Vec<(LinkSet, f64)> = Vec::new();
    for k in space.feasible..space.len() {
        let base = space.states[k].base();
        match out.last_mut() {
            Some((s, total)) if *s == base => *total += mass[k],
            _ => out.push((base, mass[k])),
        }
    }
    out
}

/// Product-form solution of the collision model.
#[derive(Debug, Clone)]
pub struct GicnSolution {
    pub space: AugmentedSpace,
    pub distribution: StationaryDistribution<AugmentedState>,
    pub metrics: LinkMetrics,
}

/// Builds the space, weights, and metrics in one call. Requires a shared
/// access intensity.
pub fn solve_gicn(
    g: &ContentionGraph,
    rho: &AccessIntensities,
    params: &CollisionParams,
    rate: f64,
) -> Result<GicnSolution, GicnError> {
    let rho = rho
        .common_value()
        .ok_or(GicnError::HeterogeneousIntensity)?;
    let space = build_augmented_space(g)?;
    let weights = gicn_weights(g, &space, rho, params)?;
    let metrics = gicn_metrics(g, &space, &weights, params, rate)?;
    let distribution = StationaryDistribution::from_weights(space.states.clone(), &weights);
    Ok(GicnSolution {
        space,
        distribution,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;
    use approx::assert_abs_diff_eq;

    const RHO: f64 = 83.0 / 15.5;

    fn cw31() -> CollisionParams {
        CollisionParams::new(31).unwrap()
    }

    fn fig1() -> ContentionGraph {
        parse_graph("links: 1 2 3 4\nedge: 1 2\nedge: 2 3\nedge: 2 4\nedge: 3 4\n").unwrap()
    }

    fn metrics(g: &ContentionGraph) -> LinkMetrics {
        let space = build_augmented_space(g).unwrap();
        let w = gicn_weights(g, &space, RHO, &cw31()).unwrap();
        gicn_metrics(g, &space, &w, &cw31(), 1.0).unwrap()
    }

    #[test]
    fn conditional_probabilities() {
        let p = cw31();
        assert_abs_diff_eq!(
            conditional_collision_prob(&p, 1),
            2.0 / 33.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(conditional_collision_prob(&p, 1), 0.0607, epsilon = 1e-4);
        assert_eq!(conditional_collision_prob(&p, 0), 0.0);
        assert_abs_diff_eq!(conditional_collision_prob(&p, 3), 0.17102, epsilon = 5e-6);
        assert_eq!(
            conditional_collision_prob(&CollisionParams::new(7).unwrap(), 0),
            0.0
        );
    }

    #[test]
    fn linearized_probabilities() {
        let p = cw31();
        assert_abs_diff_eq!(linearized_collision_prob(&p, 2), 0.12121, epsilon = 5e-6);
        assert_eq!(linearized_collision_prob(&p, 0), 0.0);
        assert_abs_diff_eq!(
            linearized_collision_prob(&p, 1),
            conditional_collision_prob(&p, 1),
            epsilon = 1e-15
        );
    }

    #[test]
    fn params_validation() {
        assert_eq!(CollisionParams::new(0), Err(GicnError::ZeroWindow));
        assert!(CollisionParams::with_slot_probability(1.0).is_err());
        assert!(CollisionParams::with_slot_probability(-0.1).is_err());
        assert_eq!(CollisionParams::new(1).unwrap().q1(), 2.0 / 3.0);
    }

    #[test]
    fn two_link_space() {
        let g = ContentionGraph::complete(2);
        let space = build_augmented_space(&g).unwrap();
        assert_eq!(space.feasible_count(), 3);
        assert_eq!(space.collision_count(), 1);
        assert_eq!(
            space.states()[3],
            AugmentedState::Collision {
                base: LinkSet::EMPTY,
                pair: (0, 1)
            }
        );
        assert_eq!(space.collision_capable(), vec![LinkSet::EMPTY]);
    }

    #[test]
    fn fig1_space() {
        let space = build_augmented_space(&fig1()).unwrap();
        assert_eq!(space.feasible_count(), 7);
        let collisions: Vec<_> = space.states()[7..]
            .iter()
            .map(|s| (s.base(), s.colliding_pair().unwrap()))
            .collect();
        let e = LinkSet::EMPTY;
        let one = LinkSet::singleton(0);
        assert_eq!(
            collisions,
            vec![
                (e, (0, 1)),
                (e, (1, 2)),
                (e, (1, 3)),
                (e, (2, 3)),
                (one, (2, 3))
            ]
        );
    }

    #[test]
    fn edgeless_space_has_no_collisions() {
        let space = build_augmented_space(&ContentionGraph::edgeless(4)).unwrap();
        assert_eq!(space.collision_count(), 0);
        assert!(space.collision_capable().is_empty());
    }

    #[test]
    fn two_link_weights() {
        let g = ContentionGraph::complete(2);
        let space = build_augmented_space(&g).unwrap();
        let w = gicn_weights(&g, &space, RHO, &cw31()).unwrap();
        let q1 = 2.0 / 33.0;
        assert_eq!(w[0], 1.0);
        assert_abs_diff_eq!(w[1], (1.0 - q1) * RHO, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 5.0302, epsilon = 2e-4);
        assert_abs_diff_eq!(w[3], 0.32454, epsilon = 5e-6);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 11.38514, epsilon = 5e-6);
    }

    #[test]
    fn chain3_partition_function() {
        let g = ContentionGraph::path(3);
        let space = build_augmented_space(&g).unwrap();
        let z: f64 = gicn_weights(&g, &space, RHO, &cw31()).unwrap().iter().sum();
        let q1 = 2.0 / 33.0;
        let closed = 1.0 + 3.0 * RHO - 2.0 * q1 * RHO + (1.0 - q1) * RHO * RHO;
        assert_abs_diff_eq!(z, closed, epsilon = 1e-10);
        assert_abs_diff_eq!(z, 43.3517, epsilon = 5e-4);
    }

    #[test]
    fn fig1_partition_function_matches_linearized_form_to_second_order() {
        let g = fig1();
        let space = build_augmented_space(&g).unwrap();
        let z: f64 = gicn_weights(&g, &space, RHO, &cw31()).unwrap().iter().sum();
        let q1 = 2.0 / 33.0;
        let q2 = conditional_collision_prob(&cw31(), 2);
        let r2 = RHO * RHO;
        let linearized =
            1.0 + 4.0 * RHO - 4.0 * q1 * RHO + 2.0 * (1.0 - q2) * r2 + (1.0 - q1) * q1 * r2;
        assert_abs_diff_eq!(linearized, 73.3616, epsilon = 5e-4);
        assert!(((z - linearized) / linearized).abs() < 1e-3);
    }

    #[test]
    fn worked_examples() {
        let m = metrics(&ContentionGraph::complete(2));
        for i in 0..2 {
            assert_abs_diff_eq!(m.throughput_normalized[i], 0.4418, epsilon = 5e-5);
            assert_abs_diff_eq!(m.collision_prob[i], 0.0607, epsilon = 1e-4);
        }
        let m = metrics(&ContentionGraph::path(3));
        for (got, want) in m.throughput_normalized.iter().zip([0.7374, 0.1090, 0.7374]) {
            assert_abs_diff_eq!(*got, want, epsilon = 5e-5);
        }
        for (got, want) in m.collision_prob.iter().zip([0.01, 0.1174, 0.01]) {
            assert_abs_diff_eq!(*got, want, epsilon = 2e-4);
        }
        let m = metrics(&fig1());
        for (got, want) in m
            .throughput_normalized
            .iter()
            .zip([0.7807, 0.0606, 0.4093, 0.4093])
        {
            assert_abs_diff_eq!(*got, want, epsilon = 2e-4);
        }
        for (got, want) in m.collision_prob.iter().zip([0.0056, 0.1709, 0.07, 0.07]) {
            assert_abs_diff_eq!(*got, want, epsilon = 2e-4);
        }
    }

    #[test]
    fn zero_intensity_gives_zero_metrics() {
        let g = fig1();
        let space = build_augmented_space(&g).unwrap();
        let w = gicn_weights(&g, &space, 0.0, &cw31()).unwrap();
        let m = gicn_metrics(&g, &space, &w, &cw31(), 7.229).unwrap();
        assert!(m.throughput_normalized.iter().all(|&t| t == 0.0));
        assert!(m.collision_prob.iter().all(|&p| p == 0.0));
        assert!(gicn_weights(&g, &space, -1.0, &cw31()).is_err());
    }

    #[test]
    fn heterogeneous_intensity_rejected() {
        let g = ContentionGraph::complete(2);
        let rho = AccessIntensities::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(
            solve_gicn(&g, &rho, &cw31(), 1.0).unwrap_err(),
            GicnError::HeterogeneousIntensity
        );
    }

    #[test]
    fn rate_conversion() {
        let g = ContentionGraph::complete(2);
        let rho = AccessIntensities::homogeneous(2, RHO).unwrap();
        let sol = solve_gicn(&g, &rho, &cw31(), 7.229).unwrap();
        for i in 0..2 {
            assert_eq!(
                sol.metrics.throughput_rate[i],
                sol.metrics.throughput_normalized[i] * 7.229
            );
        }
        let total: f64 = sol.distribution.probability.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn aggregated_collision_mass() {
        let g = fig1();
        let space = build_augmented_space(&g).unwrap();
        let w = gicn_weights(&g, &space, RHO, &cw31()).unwrap();
        let agg = aggregate_collision_mass(&space, &w);
        assert_eq!(agg.len(), 2);
        let q4 = conditional_collision_prob(&cw31(), 4);
        assert_abs_diff_eq!(agg[0].1, q4 * RHO, epsilon = 1e-12);
        assert_eq!(agg[1].0, LinkSet::singleton(0));
    }
}
