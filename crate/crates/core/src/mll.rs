//! Marginal log-linear parameters.
//!
//! For `L ⊆ M ⊆ V` the mean log-probability over the fiber of `x_L` in the
//! `M`-margin is
//!
//! ```text
//! ν_L^M(x_L) = |𝔛_{M∖L}|⁻¹ Σ_{j_M : j_L = x_L} log p_M(j_M)
//! ```
//!
//! and the effect-coded parameter is its Möbius transform over the subsets of
//! `L`:
//!
//! ```text
//! λ_L^M(x_L) = Σ_{L' ⊆ L} (-1)^{|L∖L'|} ν_{L'}^M(x_{L'})
//! ```
//!
//! Every λ is assembled by a fixed summation order (subsets in canonical
//! order), so a value does not depend on how callers schedule evaluations.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{MllError, Result};
use crate::table::Table;
use crate::tensor::{restrict, Tensor};
use crate::tolerance::{contradicts, Judged, Tolerance};
use crate::varset::VarSet;

/// An interaction `effect` defined within the marginal table `margin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct EffectMargin {
    pub effect: VarSet,
    pub margin: VarSet,
}

impl EffectMargin {
    pub fn new(effect: VarSet, margin: VarSet) -> Result<Self> {
        if !effect.is_subset(margin) {
            return Err(MllError::NotNested(format!(
                "effect {effect} not within margin {margin}"
            )));
        }
        Ok(EffectMargin { effect, margin })
    }
}

impl Ord for EffectMargin {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.margin
            .cmp(&other.margin)
            .then_with(|| self.effect.cmp(&other.effect))
    }
}

impl PartialOrd for EffectMargin {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn check_nested(table: &Table, effect: VarSet, margin: VarSet) -> Result<()> {
    if !margin.is_subset(table.vars()) {
        return Err(MllError::NotNested(format!(
            "margin {margin} not within table variables {}",
            table.vars()
        )));
    }
    if !effect.is_subset(margin) {
        return Err(MllError::NotNested(format!(
            "effect {effect} not within margin {margin}"
        )));
    }
    Ok(())
}

/// `log p_M` for one margin, with the ν and λ tensors derived from it.
#[derive(Clone, Debug)]
pub struct LogMargin {
    margin: VarSet,
    log_p: Tensor,
}

impl LogMargin {
    pub fn new(table: &Table, margin: VarSet) -> Result<Self> {
        let log_p = table.margin_log_probs(margin)?;
        Ok(LogMargin { margin, log_p })
    }

    pub fn margin(&self) -> VarSet {
        self.margin
    }

    pub fn log_p(&self) -> &Tensor {
        &self.log_p
    }

    pub fn levels_for(&self, vars: VarSet) -> Vec<usize> {
        self.log_p.levels_for(vars)
    }

    /// `ν_L^M` over all cells of `L`.
    pub fn nu(&self, effect: VarSet) -> Tensor {
        self.log_p.mean_to(effect)
    }

    /// `λ_L^M` over all cells of `L`.
    pub fn lambda(&self, effect: VarSet) -> Tensor {
        let parts: Vec<(f64, Tensor)> = effect
            .subsets()
            .into_iter()
            .map(|sub| (sign(effect.len() - sub.len()), self.nu(sub)))
            .collect();
        Tensor::from_fn(effect, self.levels_for(effect), |cell| {
            parts
                .iter()
                .map(|(s, nu)| s * nu.get_broadcast(effect, cell))
                .sum()
        })
    }
}

/// `ν_L^M` as a tensor over the cells of `L`.
pub fn nu_tensor(table: &Table, effect: VarSet, margin: VarSet) -> Result<Tensor> {
    check_nested(table, effect, margin)?;
    Ok(LogMargin::new(table, margin)?.nu(effect))
}

/// `ν_L^M(x_L)`.
pub fn nu(table: &Table, effect: VarSet, margin: VarSet, cell: &[usize]) -> Result<f64> {
    nu_tensor(table, effect, margin)?.try_get(cell)
}

/// `λ_L^M` as a tensor over the cells of `L`.
pub fn lambda_tensor(table: &Table, effect: VarSet, margin: VarSet) -> Result<Tensor> {
    check_nested(table, effect, margin)?;
    Ok(LogMargin::new(table, margin)?.lambda(effect))
}

/// `λ_L^M(x_L)`.
pub fn lambda(table: &Table, effect: VarSet, margin: VarSet, cell: &[usize]) -> Result<f64> {
    lambda_tensor(table, effect, margin)?.try_get(cell)
}

/// Alternative closed forms used to cross-check [`lambda`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossCheck {
    /// The alternating ν sum (same route as [`lambda`]).
    Mobius,
    /// `|𝔛_M|⁻¹ Σ_y log p_M(y) Π_{v∈L} (|𝔛_v| 𝕀{x_v = y_v} − 1)`.
    Indicator,
    /// Binary-only form `2^{-|M|} Σ_y (−1)^{|y_L|} log p_M(y)`.
    ///
    /// That sum is the effect-coded parameter at `x_L = 0`. Flipping one
    /// coordinate of a binary effect negates the parameter (zero-sum over two
    /// levels), so the value at a general cell is `(−1)^{|x_L|}` times the sum;
    /// this method returns the sign-reconciled value.
    BinarySign,
}

pub fn lambda_crosscheck(
    table: &Table,
    effect: VarSet,
    margin: VarSet,
    cell: &[usize],
    method: CrossCheck,
) -> Result<f64> {
    check_nested(table, effect, margin)?;
    let lm = LogMargin::new(table, margin)?;
    let probe = Tensor::filled(effect, lm.levels_for(effect), 0.0);
    probe.check_cell(cell)?;
    match method {
        CrossCheck::Mobius => Ok(lm.lambda(effect).get(cell)),
        CrossCheck::Indicator => Ok(indicator_form(&lm, effect, cell)),
        CrossCheck::BinarySign => {
            if lm.log_p.levels().iter().any(|&l| l != 2) {
                return Err(MllError::NotBinary { margin });
            }
            Ok(binary_sign_form(&lm, effect, cell))
        }
    }
}

fn indicator_form(lm: &LogMargin, effect: VarSet, cell: &[usize]) -> f64 {
    let margin = lm.margin;
    let positions: Vec<usize> = effect.iter().map(|v| margin.position(v).unwrap()).collect();
    let levels = lm.log_p.levels();
    let mut total = 0.0;
    let mut cells = lm.log_p.cells();
    let mut offset = 0;
    while let Some(y) = cells.next_cell() {
        let weight: f64 = positions
            .iter()
            .zip(cell)
            .map(|(&pos, &x)| {
                let hit = if y[pos] == x { 1.0 } else { 0.0 };
                levels[pos] as f64 * hit - 1.0
            })
            .product();
        total += lm.log_p.data()[offset] * weight;
        offset += 1;
    }
    total / lm.log_p.len() as f64
}

fn binary_sign_form(lm: &LogMargin, effect: VarSet, cell: &[usize]) -> f64 {
    let margin = lm.margin;
    let positions: Vec<usize> = effect.iter().map(|v| margin.position(v).unwrap()).collect();
    let mut total = 0.0;
    let mut cells = lm.log_p.cells();
    let mut offset = 0;
    while let Some(y) = cells.next_cell() {
        let ones: usize = positions.iter().map(|&p| y[p]).sum();
        total += sign(ones) * lm.log_p.data()[offset];
        offset += 1;
    }
    let at_cell: usize = cell.iter().sum();
    sign(at_cell) * total / lm.log_p.len() as f64
}

/// Values indexed by the subsets of a finite base set.
pub type SubsetValues = BTreeMap<VarSet, f64>;

fn lattice_values(base: VarSet, values: &SubsetValues) -> Result<Vec<(VarSet, f64)>> {
    base.subsets()
        .into_iter()
        .map(|s| {
            values
                .get(&s)
                .map(|&v| (s, v))
                .ok_or(MllError::MissingSubset(s))
        })
        .collect()
}

/// `g(L) = Σ_{L'⊆L} (−1)^{|L∖L'|} f(L')` for every `L ⊆ base`.
pub fn mobius_forward(base: VarSet, values: &SubsetValues) -> Result<SubsetValues> {
    let entries = lattice_values(base, values)?;
    Ok(entries
        .iter()
        .map(|&(l, _)| {
            let g = entries
                .iter()
                .filter(|(sub, _)| sub.is_subset(l))
                .map(|&(sub, f)| sign(l.len() - sub.len()) * f)
                .sum();
            (l, g)
        })
        .collect())
}

/// `f(L) = Σ_{L'⊆L} g(L')`, the inverse of [`mobius_forward`].
pub fn mobius_inverse(base: VarSet, values: &SubsetValues) -> Result<SubsetValues> {
    let entries = lattice_values(base, values)?;
    Ok(entries
        .iter()
        .map(|&(l, _)| {
            let f = entries
                .iter()
                .filter(|(sub, _)| sub.is_subset(l))
                .map(|&(_, g)| g)
                .sum();
            (l, f)
        })
        .collect())
}

/// A collection of λ tensors keyed by effect and margin.
#[derive(Clone, Debug, Default)]
pub struct MllSet {
    entries: BTreeMap<EffectMargin, Tensor>,
}

/// One non-redundant parameter value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MllValue {
    pub effect: VarSet,
    pub margin: VarSet,
    pub cell: Vec<usize>,
    pub value: f64,
}

impl MllSet {
    pub fn new() -> Self {
        MllSet::default()
    }

    pub fn insert(&mut self, key: EffectMargin, values: Tensor) {
        assert_eq!(key.effect, values.vars());
        self.entries.insert(key, values);
    }

    pub fn get(&self, effect: VarSet, margin: VarSet) -> Option<&Tensor> {
        self.entries.get(&EffectMargin { effect, margin })
    }

    pub fn get_mut(&mut self, effect: VarSet, margin: VarSet) -> Option<&mut Tensor> {
        self.entries.get_mut(&EffectMargin { effect, margin })
    }

    pub fn value(&self, effect: VarSet, margin: VarSet, cell: &[usize]) -> Result<f64> {
        self.get(effect, margin)
            .ok_or(MllError::EffectAbsent { effect, margin })?
            .try_get(cell)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EffectMargin, &Tensor)> {
        self.entries.iter()
    }

    /// Every value, cells in row-major order.
    pub fn values(&self) -> Vec<MllValue> {
        self.collect_values(|_, _| true)
    }

    /// Values at cells whose coordinates all avoid the last level, which
    /// determine the rest through the zero-sum constraints. Empty effects
    /// are left out.
    pub fn non_redundant(&self) -> Vec<MllValue> {
        self.collect_values(|cell, levels| {
            !cell.is_empty() && cell.iter().zip(levels).all(|(c, l)| c + 1 < *l)
        })
    }

    fn collect_values(&self, keep: impl Fn(&[usize], &[usize]) -> bool) -> Vec<MllValue> {
        let mut out = Vec::new();
        for (key, tensor) in &self.entries {
            let mut cells = tensor.cells();
            let mut offset = 0;
            while let Some(cell) = cells.next_cell() {
                if keep(cell, tensor.levels()) {
                    out.push(MllValue {
                        effect: key.effect,
                        margin: key.margin,
                        cell: cell.to_vec(),
                        value: tensor.data()[offset],
                    });
                }
                offset += 1;
            }
        }
        out
    }
}

/// All `λ_L^M` for `L ⊆ M`, i.e. the log-linear expansion of `p_M`.
pub fn expand_log_linear(table: &Table, margin: VarSet) -> Result<MllSet> {
    table.require_subset(margin)?;
    let lm = LogMargin::new(table, margin)?;
    let mut set = MllSet::new();
    for effect in margin.subsets() {
        set.insert(EffectMargin { effect, margin }, lm.lambda(effect));
    }
    Ok(set)
}

/// Residuals of the two reconstruction identities for one margin.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Reconstruction {
    /// `max_x |Σ_{L⊆M} λ_L^M(x_L) − log p_M(x_M)|`.
    pub log_p: f64,
    /// `max_{A⊆M} max_x |Σ_{L⊆A} λ_L^M(x_L) − ν_A^M(x_A)|`.
    pub nu: f64,
}

/// Checks an expansion produced by [`expand_log_linear`] against `log p_M`
/// and every `ν_A^M`.
pub fn reconstruction_residuals(
    table: &Table,
    margin: VarSet,
    set: &MllSet,
) -> Result<Reconstruction> {
    let lm = LogMargin::new(table, margin)?;
    let mut nu_res: f64 = 0.0;
    for a in margin.subsets() {
        let nu = lm.nu(a);
        let rebuilt = sum_of_lambdas(set, a, margin)?;
        nu_res = nu_res.max(rebuilt.sub(&nu).max_abs());
    }
    let rebuilt = sum_of_lambdas(set, margin, margin)?;
    let log_res = rebuilt.sub(lm.log_p()).max_abs();
    Ok(Reconstruction {
        log_p: log_res,
        nu: nu_res,
    })
}

fn sum_of_lambdas(set: &MllSet, within: VarSet, margin: VarSet) -> Result<Tensor> {
    let parts: Vec<&Tensor> = within
        .subsets()
        .into_iter()
        .map(|l| {
            set.get(l, margin)
                .ok_or(MllError::EffectAbsent { effect: l, margin })
        })
        .collect::<Result<_>>()?;
    let levels = parts
        .last()
        .map(|t| t.levels().to_vec())
        .unwrap_or_default();
    Ok(Tensor::from_fn(within, levels, |cell| {
        parts.iter().map(|t| t.get_broadcast(within, cell)).sum()
    }))
}

/// `max_{x_{L∖v}} |Σ_{x_v} λ_L^M(x_v, x_{L∖v})|`.
pub fn zero_sum_residual(set: &MllSet, effect: VarSet, margin: VarSet, v: usize) -> Result<f64> {
    if !effect.contains(v) {
        return Err(MllError::NotNested(format!(
            "variable {} is not in effect {effect}",
            v + 1
        )));
    }
    let tensor = set
        .get(effect, margin)
        .ok_or(MllError::EffectAbsent { effect, margin })?;
    Ok(tensor.sum_to(effect.remove(v)).max_abs())
}

/// The two sides of the conditional-parameter identity
/// `Σ_{L⊆A⊆M} λ_A^M(x_A)` and `(−1)^{|L|} Σ_{B⊆M∖L} λ_B^M(x_B)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KappaSides {
    pub lhs: f64,
    pub rhs: f64,
}

impl KappaSides {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Evaluates both sides at a cell `x` of `M`. Agreement is not assumed: the
/// identity fails already for `L = M = {v}` on a uniform binary table.
pub fn kappa_sides(
    table: &Table,
    effect: VarSet,
    margin: VarSet,
    cell: &[usize],
) -> Result<KappaSides> {
    check_nested(table, effect, margin)?;
    let lm = LogMargin::new(table, margin)?;
    lm.log_p().check_cell(cell)?;
    let rest = margin.difference(effect);
    let mut lhs = 0.0;
    for a in effect.supersets_within(margin) {
        lhs += lm.lambda(a).get(&restrict(margin, cell, a));
    }
    let mut rhs = 0.0;
    for b in rest.subsets() {
        rhs += lm.lambda(b).get(&restrict(margin, cell, b));
    }
    Ok(KappaSides {
        lhs,
        rhs: sign(effect.len()) * rhs,
    })
}

/// Outcome of comparing aggregated and termwise parameter equality between
/// an inner margin `N` and an outer margin `M ⊃ N`.
#[derive(Clone, Debug, Serialize)]
pub struct AggregateEquality {
    /// `max_x |Σ_{∅≠L'⊆L} (λ_{L'}^M − λ_{L'}^N)(x_{L'})|`.
    pub aggregate_residual: f64,
    /// `max_{∅≠L'⊆L} max_x |λ_{L'}^M − λ_{L'}^N|`.
    pub termwise_residual: f64,
    pub aggregate_holds: bool,
    pub termwise_holds: bool,
    /// Aggregate equality held while some term clearly differs.
    pub contradiction: bool,
}

impl AggregateEquality {
    pub fn holds(&self) -> bool {
        self.aggregate_holds && self.termwise_holds
    }
}

/// Compares `Σ_{L'⊆L} λ_{L'}^M` with `Σ_{L'⊆L} λ_{L'}^N` for `L ⊆ N ⊂ M`,
/// the sums running over non-empty `L'`.
pub fn compare_aggregate(
    table: &Table,
    effect: VarSet,
    inner: VarSet,
    outer: VarSet,
) -> Result<AggregateEquality> {
    compare_aggregate_with(table, effect, inner, outer, &Tolerance::default())
}

pub fn compare_aggregate_with(
    table: &Table,
    effect: VarSet,
    inner: VarSet,
    outer: VarSet,
    tol: &Tolerance,
) -> Result<AggregateEquality> {
    check_nested(table, inner, outer)?;
    if !effect.is_subset(inner) || inner == outer {
        return Err(MllError::NotNested(format!(
            "need {effect} ⊆ {inner} ⊂ {outer}"
        )));
    }
    let lo = LogMargin::new(table, outer)?;
    let li = LogMargin::new(table, inner)?;
    let levels = lo.levels_for(effect);
    let mut aggregate = Tensor::filled(effect, levels, 0.0);
    let mut termwise: f64 = 0.0;
    for sub in effect.subsets().into_iter().filter(|s| !s.is_empty()) {
        let delta = lo.lambda(sub).sub(&li.lambda(sub));
        termwise = termwise.max(delta.max_abs());
        let summed = Tensor::from_fn(effect, aggregate.levels().to_vec(), |cell| {
            aggregate.get(cell) + delta.get_broadcast(effect, cell)
        });
        aggregate = summed;
    }
    let scale = table.log_scale();
    let terms = 1usize << effect.len();
    let agg = Judged::new(aggregate.max_abs(), tol.for_terms(scale, terms));
    let term = Judged::new(termwise, tol.for_terms(scale, terms));
    Ok(AggregateEquality {
        aggregate_residual: agg.residual,
        termwise_residual: term.residual,
        aggregate_holds: agg.is_zero(),
        termwise_holds: term.is_zero(),
        contradiction: agg.is_zero() && contradicts(agg, term),
    })
}
