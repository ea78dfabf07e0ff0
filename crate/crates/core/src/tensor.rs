//! Dense real tensors indexed by the cells of a sub-table.
//!
//! A tensor is attached to a [`VarSet`]; its axes are the members of that set
//! in ascending id order and the data is stored row-major, last axis fastest.
//! Reductions (`sum_to`, `mean_to`) and broadcasting lookups are the only
//! kernels the rest of the crate needs.

use serde::Serialize;

use crate::error::{MllError, Result};
use crate::varset::VarSet;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tensor {
    vars: VarSet,
    levels: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(vars: VarSet, levels: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if levels.len() != vars.len() {
            return Err(MllError::InvalidVariables(format!(
                "{} level counts for {} variables",
                levels.len(),
                vars.len()
            )));
        }
        let expected: usize = levels.iter().product();
        if expected != data.len() {
            return Err(MllError::ShapeMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Tensor { vars, levels, data })
    }

    pub fn filled(vars: VarSet, levels: Vec<usize>, value: f64) -> Self {
        let n = levels.iter().product();
        Tensor {
            vars,
            levels,
            data: vec![value; n],
        }
    }

    /// Zero-dimensional tensor holding one value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            vars: VarSet::EMPTY,
            levels: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vars(&self) -> VarSet {
        self.vars
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Level count of variable `id`, if it is an axis.
    pub fn level_of(&self, id: usize) -> Option<usize> {
        self.vars.position(id).map(|p| self.levels[p])
    }

    /// Levels of the axes in `sub`, which must be a subset of this tensor's variables.
    pub fn levels_for(&self, sub: VarSet) -> Vec<usize> {
        sub.iter()
            .map(|id| self.level_of(id).expect("subset of tensor variables"))
            .collect()
    }

    pub fn check_cell(&self, cell: &[usize]) -> Result<()> {
        if cell.len() != self.levels.len() || cell.iter().zip(&self.levels).any(|(c, l)| c >= l) {
            return Err(MllError::InvalidCell {
                cell: cell.to_vec(),
                vars: self.vars,
            });
        }
        Ok(())
    }

    pub fn offset(&self, cell: &[usize]) -> usize {
        debug_assert_eq!(cell.len(), self.levels.len());
        cell.iter()
            .zip(&self.levels)
            .fold(0, |acc, (&c, &l)| acc * l + c)
    }

    pub fn get(&self, cell: &[usize]) -> f64 {
        self.data[self.offset(cell)]
    }

    pub fn try_get(&self, cell: &[usize]) -> Result<f64> {
        self.check_cell(cell)?;
        Ok(self.get(cell))
    }

    /// Value at the restriction of a cell over the larger set `from` to this
    /// tensor's variables.
    pub fn get_broadcast(&self, from: VarSet, cell: &[usize]) -> f64 {
        let mut offset = 0;
        let mut axis = 0;
        for (pos, id) in from.iter().enumerate() {
            if self.vars.contains(id) {
                offset = offset * self.levels[axis] + cell[pos];
                axis += 1;
            }
        }
        debug_assert_eq!(axis, self.levels.len());
        self.data[offset]
    }

    pub fn cells(&self) -> Cells {
        Cells::new(self.levels.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            vars: self.vars,
            levels: self.levels.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Sums out every axis not in `keep`.
    pub fn sum_to(&self, keep: VarSet) -> Tensor {
        assert!(keep.is_subset(self.vars), "{keep} not within {}", self.vars);
        let levels = self.levels_for(keep);
        let mut out = Tensor::filled(keep, levels, 0.0);
        if keep == self.vars {
            out.data.copy_from_slice(&self.data);
            return out;
        }
        let mut cells = self.cells();
        let mut i = 0;
        while let Some(cell) = cells.next_cell() {
            let target = out.offset_from(self.vars, cell);
            out.data[target] += self.data[i];
            i += 1;
        }
        out
    }

    /// Averages out every axis not in `keep`.
    pub fn mean_to(&self, keep: VarSet) -> Tensor {
        let summed = self.sum_to(keep);
        let count = (self.len() / summed.len()) as f64;
        summed.map(|x| x / count)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute entry and the cell where it occurs (first on ties).
    pub fn argmax_abs(&self) -> (f64, Vec<usize>) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, x) in self.data.iter().enumerate() {
            if x.abs() > best.0 {
                best = (x.abs(), i);
            }
        }
        (best.0.max(0.0), self.cell_at(best.1))
    }

    pub fn cell_at(&self, mut offset: usize) -> Vec<usize> {
        let mut cell = vec![0; self.levels.len()];
        for axis in (0..self.levels.len()).rev() {
            cell[axis] = offset % self.levels[axis];
            offset /= self.levels[axis];
        }
        cell
    }

    fn offset_from(&self, from: VarSet, cell: &[usize]) -> usize {
        let mut offset = 0;
        let mut axis = 0;
        for (pos, id) in from.iter().enumerate() {
            if self.vars.contains(id) {
                offset = offset * self.levels[axis] + cell[pos];
                axis += 1;
            }
        }
        offset
    }

    /// Elementwise difference of two tensors over the same variables.
    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.vars, other.vars);
        Tensor {
            vars: self.vars,
            levels: self.levels.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Builds a tensor over `vars` from a function of each cell.
    pub fn from_fn(vars: VarSet, levels: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Tensor {
        let mut data = Vec::with_capacity(levels.iter().product());
        let mut cells = Cells::new(levels.clone());
        while let Some(cell) = cells.next_cell() {
            data.push(f(cell));
        }
        Tensor { vars, levels, data }
    }
}

/// Odometer over all cells of a shape, last axis fastest.
pub struct Cells {
    levels: Vec<usize>,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl Cells {
    pub fn new(levels: Vec<usize>) -> Self {
        let done = levels.contains(&0);
        Cells {
            current: vec![0; levels.len()],
            levels,
            started: false,
            done,
        }
    }

    /// Advances and returns the next cell, borrowing the internal buffer.
    pub fn next_cell(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.current);
        }
        for axis in (0..self.levels.len()).rev() {
            self.current[axis] += 1;
            if self.current[axis] < self.levels[axis] {
                return Some(&self.current);
            }
            self.current[axis] = 0;
        }
        self.done = true;
        None
    }
}

impl Iterator for Cells {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        self.next_cell().map(|c| c.to_vec())
    }
}

/// Restricts a cell over `from` to the variables in `to` (a subset of `from`).
pub fn restrict(from: VarSet, cell: &[usize], to: VarSet) -> Vec<usize> {
    from.iter()
        .zip(cell)
        .filter(|(id, _)| to.contains(*id))
        .map(|(_, &c)| c)
        .collect()
}
