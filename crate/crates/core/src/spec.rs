//! Collections of effect–margin pairs and their structural classification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{MllError, Result};
use crate::mll::{EffectMargin, LogMargin, MllSet};
use crate::table::Table;
use crate::varset::VarSet;

/// One margin together with the effects parameterized inside it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginEntry {
    pub margin: VarSet,
    pub effects: Vec<VarSet>,
}

/// An ordered list of margins, each carrying its own effect list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MarginalSpec {
    #[serde(rename = "margins")]
    entries: Vec<MarginEntry>,
}

impl<'de> Deserialize<'de> for MarginalSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            margins: Vec<MarginEntry>,
        }
        let raw = Raw::deserialize(d)?;
        MarginalSpec::new(raw.margins).map_err(serde::de::Error::custom)
    }
}

impl MarginalSpec {
    pub fn new(entries: Vec<MarginEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.margin == e.margin) {
                return Err(MllError::InvalidSpec(format!(
                    "margin {} listed twice",
                    e.margin
                )));
            }
            for (k, p) in e.effects.iter().enumerate() {
                if !p.is_subset(e.margin) {
                    return Err(MllError::InvalidSpec(format!(
                        "effect {p} is not within its margin {}",
                        e.margin
                    )));
                }
                if e.effects[..k].contains(p) {
                    return Err(MllError::InvalidSpec(format!(
                        "effect {p} listed twice under margin {}",
                        e.margin
                    )));
                }
            }
        }
        Ok(MarginalSpec { entries })
    }

    /// `{(L, V) : ∅ ≠ L ⊆ V}`.
    pub fn ordinary(vars: VarSet) -> Self {
        MarginalSpec {
            entries: vec![MarginEntry {
                margin: vars,
                effects: nonempty_subsets(vars),
            }],
        }
    }

    /// `{(L, L) : ∅ ≠ L ⊆ V}`, margins by increasing cardinality.
    pub fn multivariate_logistic(vars: VarSet) -> Self {
        MarginalSpec {
            entries: nonempty_subsets(vars)
                .into_iter()
                .map(|l| MarginEntry {
                    margin: l,
                    effects: vec![l],
                })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[MarginEntry] {
        &self.entries
    }

    pub fn margins(&self) -> Vec<VarSet> {
        self.entries.iter().map(|e| e.margin).collect()
    }

    /// The flat list of `(effect, margin)` pairs in listing order.
    pub fn pairs(&self) -> Vec<EffectMargin> {
        self.entries
            .iter()
            .flat_map(|e| {
                e.effects.iter().map(move |&effect| EffectMargin {
                    effect,
                    margin: e.margin,
                })
            })
            .collect()
    }

    pub fn union(&self) -> VarSet {
        self.entries
            .iter()
            .fold(VarSet::EMPTY, |acc, e| acc.union(e.margin))
    }
}

fn nonempty_subsets(vars: VarSet) -> Vec<VarSet> {
    vars.subsets()
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect()
}

/// Structural verdicts for a [`MarginalSpec`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub hierarchical: bool,
    pub complete: bool,
    /// An admissible ascending order of the margins, when one exists.
    pub order: Option<Vec<VarSet>>,
    pub violations: Vec<String>,
}

/// Decides whether the margins admit an ascending order with every effect in
/// the first margin containing it, and whether every non-empty subset of
/// `vars` is parameterized exactly once.
///
/// The order is found by topological sort of a precedence graph: a margin
/// precedes its strict supersets, and the margin listing an effect precedes
/// every other margin containing that effect. Ties are broken by cardinality
/// and then lexicographically, so the result does not depend on listing order.
pub fn classify(spec: &MarginalSpec, vars: VarSet) -> Result<Classification> {
    for e in &spec.entries {
        if !e.margin.is_subset(vars) {
            return Err(MllError::MarginNotInV {
                margin: e.margin,
                vars,
            });
        }
    }
    let mut violations = Vec::new();
    let margins = spec.margins();
    let n = margins.len();
    let mut after: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, qi) in margins.iter().enumerate() {
        for (j, qj) in margins.iter().enumerate() {
            if qi.is_proper_subset(*qj) {
                after[i].insert(j);
            }
        }
        for &p in &spec.entries[i].effects {
            if p.is_empty() {
                continue;
            }
            for (j, qj) in margins.iter().enumerate() {
                if j != i && p.is_subset(*qj) {
                    if qj.is_proper_subset(*qi) {
                        violations.push(format!(
                            "effect {p} listed under {qi} but already contained in smaller margin {qj}"
                        ));
                    }
                    after[i].insert(j);
                }
            }
        }
    }
    let order = topological(&margins, &after);
    if order.is_none() && violations.is_empty() {
        violations.push("margins admit no ascending order compatible with their effects".into());
    }
    let hierarchical = order.is_some();

    let mut seen: BTreeMap<VarSet, Vec<VarSet>> = BTreeMap::new();
    for pair in spec.pairs() {
        if !pair.effect.is_empty() {
            seen.entry(pair.effect).or_default().push(pair.margin);
        }
    }
    let mut complete = true;
    for p in nonempty_subsets(vars) {
        match seen.get(&p).map(Vec::as_slice) {
            None => {
                complete = false;
                violations.push(format!("effect {p} is not parameterized"));
            }
            Some([_]) => {}
            Some(ms) => {
                complete = false;
                let names: Vec<String> = ms.iter().map(|m| m.to_string()).collect();
                violations.push(format!(
                    "effect {p} appears under margins {}",
                    names.join(", ")
                ));
            }
        }
    }
    Ok(Classification {
        hierarchical,
        complete,
        order: order.map(|o| o.into_iter().map(|i| margins[i]).collect()),
        violations,
    })
}

fn topological(margins: &[VarSet], after: &[BTreeSet<usize>]) -> Option<Vec<usize>> {
    let n = margins.len();
    let mut indegree = vec![0usize; n];
    for succ in after {
        for &j in succ {
            indegree[j] += 1;
        }
    }
    let mut ready: BTreeSet<(VarSet, usize)> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| (margins[i], i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &j in &after[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert((margins[j], j));
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// λ for every pair of `spec`, over all cells of each effect.
pub fn evaluate_spec(table: &Table, spec: &MarginalSpec) -> Result<MllSet> {
    let mut set = MllSet::new();
    for e in &spec.entries {
        if !e.margin.is_subset(table.vars()) {
            return Err(MllError::MarginNotInV {
                margin: e.margin,
                vars: table.vars(),
            });
        }
        let lm = LogMargin::new(table, e.margin)?;
        for &effect in &e.effects {
            set.insert(
                EffectMargin {
                    effect,
                    margin: e.margin,
                },
                lm.lambda(effect),
            );
        }
    }
    Ok(set)
}
