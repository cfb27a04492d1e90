//! Collision-free ideal CSMA network: product-form stationary law over the
//! independent sets, `P(s) ∝ ∏_{i∈s} ρ_i`, and per-link airtime.

use thiserror::Error;

use crate::graph::{enumerate_feasible_states, ContentionGraph, GraphError, LinkSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntensityError {
    #[error("access intensity of link {link} must be positive and finite, got {value}")]
    NotPositive { link: usize, value: f64 },
    #[error("{given} access intensities given for {links} links")]
    LengthMismatch { given: usize, links: usize },
}

/// Per-link access intensity: mean transmission time over mean backoff time.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessIntensities(Vec<f64>);

impl AccessIntensities {
    pub fn new(rho: Vec<f64>) -> Result<Self, IntensityError> {
        for (link, &value) in rho.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(IntensityError::NotPositive { link, value });
            }
        }
        Ok(AccessIntensities(rho))
    }

    pub fn homogeneous(links: usize, rho: f64) -> Result<Self, IntensityError> {
        Self::new(vec![rho; links])
    }

    /// `ρ = 2·t_tx / CW` for a uniform integer backoff on `[0, CW]`.
    pub fn from_slots(links: usize, cw: u32, t_tx: u32) -> Result<Self, IntensityError> {
        Self::homogeneous(links, 2.0 * f64::from(t_tx) / f64::from(cw))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The common value, if every link has the same intensity.
    pub fn common_value(&self) -> Option<f64> {
        let first = *self.0.first()?;
        self.0.iter().all(|&r| r == first).then_some(first)
    }

    fn product_over(&self, s: LinkSet) -> f64 {
        s.iter().map(|i| self.0[i]).product()
    }
}

/// Probability mass over an ordered state list, with the normalizing constant.
///
/// For product-form laws `partition_function` is the sum of unnormalized
/// weights with the empty state weighted 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution<S> {
    pub states: Vec<S>,
    pub probability: Vec<f64>,
    pub partition_function: f64,
}

impl<S> StationaryDistribution<S> {
    /// Normalizes `weights`; the sum is accumulated in state order.
    pub fn from_weights(states: Vec<S>, weights: &[f64]) -> Self {
        debug_assert_eq!(states.len(), weights.len());
        let z: f64 = weights.iter().sum();
        StationaryDistribution {
            states,
            probability: weights.iter().map(|w| w / z).collect(),
            partition_function: z,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.states.iter().zip(self.probability.iter().copied())
    }
}

pub fn icn_distribution(
    g: &ContentionGraph,
    rho: &AccessIntensities,
) -> Result<StationaryDistribution<LinkSet>, IcnError> {
    if rho.len() != g.len() {
        return Err(IntensityError::LengthMismatch {
            given: rho.len(),
            links: g.len(),
        }
        .into());
    }
    let states = enumerate_feasible_states(g)?;
    let weights: Vec<f64> = states.iter().map(|&s| rho.product_over(s)).collect();
    Ok(StationaryDistribution::from_weights(states, &weights))
}

/// Fraction of time each link transmits.
pub fn icn_throughput(g: &ContentionGraph, dist: &StationaryDistribution<LinkSet>) -> Vec<f64> {
    let mut th = vec![0.0; g.len()];
    for (s, p) in dist.iter() {
        for i in s.iter() {
            th[i] += p;
        }
    }
    th
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IcnError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
}
