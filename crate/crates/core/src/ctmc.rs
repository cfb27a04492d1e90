//! Exact continuous-time Markov chain over the augmented state space, solved
//! by global balance. Serves as an oracle for the product-form weights: the
//! solve assumes nothing about reversibility.
//!
//! Time is measured in mean transmission times (`μ = 1`), so `λ = ρμ = ρ`.
//! Collision states are held for an exponential time with rate `μ`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::gicn::{
    conditional_collision_prob, gicn_metrics, AugmentedSpace, AugmentedState, CollisionParams,
    GicnError, LinkMetrics,
};
use crate::graph::ContentionGraph;
use crate::icn::StationaryDistribution;

/// Largest augmented space the dense solver accepts.
pub const MAX_DENSE_STATES: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtmcError {
    #[error("access intensity must be positive and finite, got {0}")]
    BadIntensity(f64),
    #[error("{0} states exceeds the dense solver limit of {MAX_DENSE_STATES}")]
    TooManyStates(usize),
    #[error("augmented space does not match the contention graph: {0}")]
    Inconsistent(String),
    #[error("balance equations are numerically singular")]
    Singular,
    #[error(transparent)]
    Gicn(#[from] GicnError),
}

/// Generator matrix `Q` with the augmented states it is indexed by.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    states: Vec<AugmentedState>,
    rates: DMatrix<f64>,
}

impl RateMatrix {
    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[AugmentedState] {
        &self.states
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[(from, to)]
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Total rate out of `from`.
    pub fn exit_rate(&self, from: usize) -> f64 {
        -self.rates[(from, from)]
    }

    /// Number of positive off-diagonal entries in row `from`.
    pub fn out_degree(&self, from: usize) -> usize {
        (0..self.dimension())
            .filter(|&to| to != from && self.rates[(from, to)] > 0.0)
            .count()
    }

    /// `max_j |(πQ)_j|`.
    pub fn balance_residual(&self, pi: &[f64]) -> f64 {
        let pi = DVector::from_column_slice(pi);
        (self.rates.transpose() * pi).amax()
    }
}

pub fn build_rate_matrix(
    g: &ContentionGraph,
    space: &AugmentedSpace,
    rho: f64,
    params: &CollisionParams,
) -> Result<RateMatrix, CtmcError> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(CtmcError::BadIntensity(rho));
    }
    let dim = space.len();
    if dim > MAX_DENSE_STATES {
        return Err(CtmcError::TooManyStates(dim));
    }
    let mu = 1.0;
    let lambda = rho * mu;
    let mut q = DMatrix::<f64>::zeros(dim, dim);
    for (k, s) in space.feasible_states().enumerate() {
        if !g.is_independent(s) {
            return Err(CtmcError::Inconsistent(format!(
                "state {s} is not independent"
            )));
        }
        let active = space.countdown_set(k);
        for i in active.iter() {
            let n = g.neighbors(i).intersection(active).len();
            let up = space
                .feasible_index(s.with(i))
                .ok_or_else(|| CtmcError::Inconsistent(format!("{s} + link {i} missing")))?;
            q[(k, up)] += (1.0 - conditional_collision_prob(params, n)) * lambda;
            q[(up, k)] += mu;
        }
    }
    for k in space.feasible_count()..dim {
        let base = space.base_index(k);
        let m = space.countdown_edge_count(base);
        q[(base, k)] += conditional_collision_prob(params, m) * lambda / m as f64;
        q[(k, base)] += mu;
    }
    for k in 0..dim {
        let out: f64 = q.row(k).iter().sum();
        q[(k, k)] = -out;
    }
    Ok(RateMatrix {
        states: space.states().to_vec(),
        rates: q,
    })
}

/// Solves `πQ = 0`, `Σπ = 1` on the class reachable from the empty state;
/// states outside it get zero mass. The reported partition function is
/// `1/π(∅)`, comparable to product-form weights normalized at `w(∅) = 1`.
pub fn solve_stationary(
    m: &RateMatrix,
) -> Result<StationaryDistribution<AugmentedState>, CtmcError> {
    let dim = m.dimension();
    let reachable = reachable_from(m, 0);
    let class: Vec<usize> = (0..dim).filter(|&k| reachable[k]).collect();
    let c = class.len();
    // Transposed generator restricted to the class; last balance equation
    // replaced by normalization.
    let mut a = DMatrix::<f64>::zeros(c, c);
    for (r, &to) in class.iter().enumerate() {
        for (col, &from) in class.iter().enumerate() {
            a[(r, col)] = m.rates[(from, to)];
        }
    }
    let mut b = DVector::<f64>::zeros(c);
    for col in 0..c {
        a[(c - 1, col)] = 1.0;
    }
    b[c - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(CtmcError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CtmcError::Singular);
    }
    let mut pi = vec![0.0; dim];
    for (r, &k) in class.iter().enumerate() {
        pi[k] = x[r].max(0.0);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(StationaryDistribution {
        states: m.states.clone(),
        partition_function: 1.0 / pi[0],
        probability: pi,
    })
}

fn reachable_from(m: &RateMatrix, start: usize) -> Vec<bool> {
    let dim = m.dimension();
    let mut seen = vec![false; dim];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(k) = stack.pop() {
        for to in 0..dim {
            if !seen[to] && to != k && m.rates[(k, to)] > 0.0 {
                seen[to] = true;
                stack.push(to);
            }
        }
    }
    seen
}

/// Same aggregation as the product-form metrics, applied to the solved law.
pub fn ctmc_metrics(
    g: &ContentionGraph,
    space: &AugmentedSpace,
    dist: &StationaryDistribution<AugmentedState>,
    params: &CollisionParams,
    rate: f64,
) -> Result<LinkMetrics, CtmcError> {
    Ok(gicn_metrics(g, space, &dist.probability, params, rate)?)
}
