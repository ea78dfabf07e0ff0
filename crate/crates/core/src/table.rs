//! Strictly positive distributions on contingency tables.

use crate::error::{MllError, Result};
use crate::tensor::Tensor;
use crate::varset::{VarSet, MAX_VARS};

/// Absolute positivity floor for input weights.
pub const POSITIVITY_FLOOR: f64 = 1e-12;
/// Tolerance for "sums to one" checks.
pub const NORM_TOL: f64 = 1e-10;
/// Weights whose sum is this close to one are taken as already normalized and
/// stored bit-for-bit, so that writing and re-reading a table is lossless.
const NORMALIZED_EXACT: f64 = 1e-14;

/// A strictly positive, normalized distribution over the cells of a table.
///
/// Variables keep the ids they had in the full table, so a marginal table
/// over `{1,3}` can be compared against parameters computed on the full one.
/// Tables are immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    probs: Tensor,
    names: Vec<String>,
    total: f64,
}

impl Table {
    /// Builds a table over variables `0..levels.len()` from row-major weights.
    pub fn new(levels: &[usize], weights: Vec<f64>) -> Result<Self> {
        let names = (1..=levels.len()).map(|i| format!("X{i}")).collect();
        Table::with_names(names, levels, weights)
    }

    pub fn with_names(names: Vec<String>, levels: &[usize], weights: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(MllError::InvalidVariables("no variables".into()));
        }
        if levels.len() > MAX_VARS {
            return Err(MllError::InvalidVariables(format!(
                "{} variables exceeds the limit of {MAX_VARS}",
                levels.len()
            )));
        }
        if names.len() != levels.len() {
            return Err(MllError::InvalidVariables(format!(
                "{} names for {} variables",
                names.len(),
                levels.len()
            )));
        }
        if let Some(i) = levels.iter().position(|&l| l < 2) {
            return Err(MllError::InvalidVariables(format!(
                "variable {} has {} levels, need at least 2",
                names[i], levels[i]
            )));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(MllError::InvalidVariables(format!("duplicate name {a}")));
            }
        }
        let expected: usize = levels.iter().product();
        if expected != weights.len() {
            return Err(MllError::ShapeMismatch {
                expected,
                found: weights.len(),
            });
        }
        if let Some((offset, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > POSITIVITY_FLOOR))
        {
            return Err(MllError::PositivityViolation { offset, value });
        }
        let total: f64 = weights.iter().sum();
        let probs = if (total - 1.0).abs() <= NORMALIZED_EXACT {
            weights
        } else {
            weights.into_iter().map(|w| w / total).collect()
        };
        let tensor = Tensor::new(VarSet::full(levels.len()), levels.to_vec(), probs)?;
        Ok(Table {
            probs: tensor,
            names,
            total,
        })
    }

    pub fn vars(&self) -> VarSet {
        self.probs.vars()
    }

    pub fn levels(&self) -> &[usize] {
        self.probs.levels()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn level_of(&self, id: usize) -> Option<usize> {
        self.probs.level_of(id)
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Sum of the weights the table was built from.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn prob(&self, cell: &[usize]) -> Result<f64> {
        self.probs.try_get(cell)
    }

    pub fn log_probs(&self) -> Tensor {
        self.probs.map(f64::ln)
    }

    /// `p_M` as a tensor over `margin`.
    pub fn margin_probs(&self, margin: VarSet) -> Result<Tensor> {
        self.require_subset(margin)?;
        Ok(self.probs.sum_to(margin))
    }

    /// `log p_M` as a tensor over `margin`.
    pub fn margin_log_probs(&self, margin: VarSet) -> Result<Tensor> {
        Ok(self.margin_probs(margin)?.map(f64::ln))
    }

    /// Marginal table over `margin`, keeping variable ids and names.
    pub fn marginalize(&self, margin: VarSet) -> Result<Table> {
        let probs = self.margin_probs(margin)?;
        let names = margin
            .iter()
            .map(|id| self.names[self.vars().position(id).unwrap()].clone())
            .collect();
        Ok(Table {
            probs,
            names,
            total: self.total,
        })
    }

    /// Conditional distribution of `target` given `given`.
    pub fn condition(&self, target: VarSet, given: VarSet) -> Result<ConditionalSlice> {
        if target.intersects(given) {
            return Err(MllError::OverlappingSets {
                left: target,
                right: given,
            });
        }
        if target.is_empty() {
            return Err(MllError::NotNested("conditioning target is empty".into()));
        }
        let joint_vars = target.union(given);
        let joint = self.margin_probs(joint_vars)?;
        let marginal = joint.sum_to(given);
        let values = Tensor::from_fn(joint_vars, joint.levels().to_vec(), |cell| {
            joint.get(cell) / marginal.get_broadcast(joint_vars, cell)
        });
        Ok(ConditionalSlice {
            target,
            given,
            values,
        })
    }

    pub(crate) fn require_subset(&self, set: VarSet) -> Result<()> {
        if set.is_subset(self.vars()) {
            Ok(())
        } else {
            Err(MllError::NotASubset {
                subset: set,
                superset: self.vars(),
            })
        }
    }

    /// Largest `|log p|` over the cells; used to scale relative tolerances.
    pub fn log_scale(&self) -> f64 {
        self.probs
            .data()
            .iter()
            .fold(1.0_f64, |m, p| m.max(p.ln().abs()))
    }
}

/// `p(x_A | x_B)` stored over the cells of `A ∪ B`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalSlice {
    pub target: VarSet,
    pub given: VarSet,
    values: Tensor,
}

impl ConditionalSlice {
    /// The conditional probabilities indexed by cells of `target ∪ given`.
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Distribution over the target cells for one conditioning cell `x_B`.
    pub fn slice(&self, given_cell: &[usize]) -> Result<Vec<f64>> {
        let given_levels = self.values.levels_for(self.given);
        let probe = Tensor::filled(self.given, given_levels, 0.0);
        probe.check_cell(given_cell)?;
        let target_levels = self.values.levels_for(self.target);
        let joint_vars = self.target.union(self.given);
        let mut out = Vec::new();
        let mut targets = crate::tensor::Cells::new(target_levels);
        while let Some(t) = targets.next_cell() {
            let mut cell = Vec::with_capacity(joint_vars.len());
            let (mut ti, mut gi) = (0, 0);
            for id in joint_vars.iter() {
                if self.target.contains(id) {
                    cell.push(t[ti]);
                    ti += 1;
                } else {
                    cell.push(given_cell[gi]);
                    gi += 1;
                }
            }
            out.push(self.values.get(&cell));
        }
        Ok(out)
    }
}
