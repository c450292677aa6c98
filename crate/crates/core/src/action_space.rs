//! Product action spaces: Cartesian products of discrete, continuous, and
//! discretized-continuous sub-action spaces.

use rand::Rng;

use crate::error::{AqlError, Result};
use crate::rng::DetRng;
use crate::tensor::Tensor;
use crate::Real;

/// Default cap for exhaustive enumeration.
pub const DEFAULT_ENUM_LIMIT: usize = 100_000;

/// One factor of the product space.
#[derive(Debug, Clone, PartialEq)]
pub enum SubActionSpace {
    /// A finite set of `arity` choices with no metric structure.
    Discrete { arity: usize },
    /// A real interval `[low, high]`.
    Continuous { low: Real, high: Real },
    /// A uniform grid of `bins` points on `[low, high]`, endpoints included.
    Discretized { low: Real, high: Real, bins: usize },
}

impl SubActionSpace {
    pub fn discrete(arity: usize) -> Result<Self> {
        if arity < 2 {
            return Err(AqlError::Config(format!("discrete arity {} < 2", arity)));
        }
        Ok(SubActionSpace::Discrete { arity })
    }

    pub fn continuous(low: Real, high: Real) -> Result<Self> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(AqlError::Config(format!(
                "continuous bounds [{}, {}] invalid",
                low, high
            )));
        }
        Ok(SubActionSpace::Continuous { low, high })
    }

    pub fn discretized(low: Real, high: Real, bins: usize) -> Result<Self> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(AqlError::Config(format!(
                "discretized bounds [{}, {}] invalid",
                low, high
            )));
        }
        if bins < 2 {
            return Err(AqlError::Config(format!("discretized bins {} < 2", bins)));
        }
        Ok(SubActionSpace::Discretized { low, high, bins })
    }

    /// Number of distinct values, if finite.
    pub fn arity(&self) -> Option<usize> {
        match self {
            SubActionSpace::Discrete { arity } => Some(*arity),
            SubActionSpace::Continuous { .. } => None,
            SubActionSpace::Discretized { bins, .. } => Some(*bins),
        }
    }

    /// Width of this sub-action's network encoding: one-hot width for finite
    /// kinds, one scaled real for continuous.
    pub fn encoding_width(&self) -> usize {
        self.arity().unwrap_or(1)
    }

    pub fn bounds(&self) -> Option<(Real, Real)> {
        match self {
            SubActionSpace::Discrete { .. } => None,
            SubActionSpace::Continuous { low, high } => Some((*low, *high)),
            SubActionSpace::Discretized { low, high, .. } => Some((*low, *high)),
        }
    }
}

/// Value of grid point `index` of a discretized sub-action:
/// `low + index * (high - low) / (bins - 1)`.
pub fn grid_value(low: Real, high: Real, bins: usize, index: usize) -> Result<Real> {
    if index >= bins {
        return Err(AqlError::Usage(format!(
            "grid index {} out of {} bins",
            index, bins
        )));
    }
    Ok(low + index as Real * (high - low) / (bins - 1) as Real)
}

/// One component of a composite action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubAction {
    /// Choice index for discrete or discretized sub-actions.
    Index(usize),
    /// Raw value for continuous sub-actions.
    Value(Real),
}

/// A composite action: one component per dimension of the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector(pub Vec<SubAction>);

impl ActionVector {
    pub fn components(&self) -> &[SubAction] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The Cartesian product of sub-action spaces. Dimension order is fixed for
/// the lifetime of an experiment; the proposal conditions on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductActionSpace {
    dims: Vec<SubActionSpace>,
}

/// Cardinality of a product space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Finite(u128),
    Infinite,
}

impl ProductActionSpace {
    pub fn new(dims: Vec<SubActionSpace>) -> Result<Self> {
        if dims.is_empty() {
            return Err(AqlError::Config("action space needs at least one dimension".into()));
        }
        Ok(ProductActionSpace { dims })
    }

    pub fn dims(&self) -> &[SubActionSpace] {
        &self.dims
    }

    pub fn num_dims(&self) -> usize {
        self.dims.len()
    }

    /// Total width of [`encode_action`] output.
    pub fn encoding_width(&self) -> usize {
        self.dims.iter().map(|d| d.encoding_width()).sum()
    }

    pub fn cardinality(&self) -> Cardinality {
        let mut total: u128 = 1;
        for dim in &self.dims {
            match dim.arity() {
                Some(k) => total = total.saturating_mul(k as u128),
                None => return Cardinality::Infinite,
            }
        }
        Cardinality::Finite(total)
    }

    /// Check that every component is valid in its sub-space.
    pub fn validate_action(&self, action: &ActionVector) -> Result<()> {
        if action.len() != self.num_dims() {
            return Err(AqlError::Usage(format!(
                "action has {} components, space has {} dims",
                action.len(),
                self.num_dims()
            )));
        }
        for (component, dim) in action.components().iter().zip(&self.dims) {
            match (component, dim) {
                (SubAction::Index(i), SubActionSpace::Discrete { arity }) if i < arity => {}
                (SubAction::Index(i), SubActionSpace::Discretized { bins, .. }) if i < bins => {}
                (SubAction::Value(v), SubActionSpace::Continuous { low, high })
                    if *v >= *low && *v <= *high => {}
                _ => {
                    return Err(AqlError::Usage(format!(
                        "component {:?} invalid for sub-space {:?}",
                        component, dim
                    )))
                }
            }
        }
        Ok(())
    }

    /// Each component independently uniform over its sub-space.
    pub fn uniform_sample(&self, rng: &mut DetRng) -> ActionVector {
        let components = self
            .dims
            .iter()
            .map(|dim| match dim {
                SubActionSpace::Discrete { arity } => SubAction::Index(rng.gen_range(0..*arity)),
                SubActionSpace::Discretized { bins, .. } => {
                    SubAction::Index(rng.gen_range(0..*bins))
                }
                SubActionSpace::Continuous { low, high } => {
                    SubAction::Value(rng.gen_range(*low..*high))
                }
            })
            .collect();
        ActionVector(components)
    }

    /// Lexicographic enumeration of every action in a finite space.
    pub fn enumerate_all(&self, limit: usize) -> Result<Vec<ActionVector>> {
        let total = match self.cardinality() {
            Cardinality::Finite(n) => n,
            Cardinality::Infinite => {
                return Err(AqlError::Enumeration(
                    "cannot enumerate a space with continuous dimensions".into(),
                ))
            }
        };
        if total > limit as u128 {
            return Err(AqlError::Enumeration(format!(
                "space has {} actions, over the limit of {}",
                total, limit
            )));
        }
        let arities: Vec<usize> = self.dims.iter().map(|d| d.arity().unwrap()).collect();
        let mut out = Vec::with_capacity(total as usize);
        let mut idx = vec![0usize; arities.len()];
        loop {
            out.push(ActionVector(idx.iter().map(|&i| SubAction::Index(i)).collect()));
            // Odometer increment, last dimension fastest.
            let mut d = arities.len();
            loop {
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < arities[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Real-valued view of an action: grid values for discretized components,
    /// raw values for continuous ones. Discrete components have no real view.
    pub fn component_value(&self, action: &ActionVector, dim: usize) -> Result<Real> {
        match (&self.dims[dim], action.components()[dim]) {
            (SubActionSpace::Discretized { low, high, bins }, SubAction::Index(i)) => {
                grid_value(*low, *high, *bins, i)
            }
            (SubActionSpace::Continuous { .. }, SubAction::Value(v)) => Ok(v),
            (dim_spec, component) => Err(AqlError::Usage(format!(
                "no real value for component {:?} of {:?}",
                component, dim_spec
            ))),
        }
    }

    /// Fixed-width network encoding: one-hot per finite dimension, affine
    /// rescale of continuous values to `[-1, 1]`.
    pub fn encode_action(&self, action: &ActionVector) -> Result<Tensor<Real>> {
        self.validate_action(action)?;
        let mut out = Vec::with_capacity(self.encoding_width());
        self.encode_into(action, &mut out);
        Tensor::matrix(1, out.len(), out)
    }

    /// Append the encoding of `action` to `out` without validation; callers
    /// batching many rows validate up front.
    pub(crate) fn encode_into(&self, action: &ActionVector, out: &mut Vec<Real>) {
        for (component, dim) in action.components().iter().zip(&self.dims) {
            match (component, dim) {
                (SubAction::Index(i), _) => {
                    let k = dim.arity().unwrap();
                    out.extend((0..k).map(|j| if j == *i { 1.0 } else { 0.0 }));
                }
                (SubAction::Value(v), SubActionSpace::Continuous { low, high }) => {
                    out.push(2.0 * (v - low) / (high - low) - 1.0);
                }
                _ => unreachable!("validated above"),
            }
        }
    }

    /// Batched encoding of many actions as a `[n, encoding_width]` matrix.
    pub fn encode_batch(&self, actions: &[ActionVector]) -> Result<Tensor<Real>> {
        let mut out = Vec::with_capacity(actions.len() * self.encoding_width());
        for action in actions {
            self.validate_action(action)?;
            self.encode_into(action, &mut out);
        }
        Tensor::matrix(actions.len(), self.encoding_width(), out)
    }
}
