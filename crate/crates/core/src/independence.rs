//! Conditional, joint and mutual independence through vanishing parameters,
//! with a factorization oracle, and the decomposition of a parameter into a
//! marginal part and a conditional part.

use serde::{Deserialize, Serialize};

use crate::collapse::{check_strict_collapsibility, CollapseQuery, EffectCheck};
use crate::error::{MllError, Result};
use crate::mll::LogMargin;
use crate::table::Table;
use crate::tensor::Tensor;
use crate::tolerance::{contradicts, Judged, Tolerance};
use crate::varset::VarSet;

/// Disjoint blocks `A`, `B`, `C` of variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub a: VarSet,
    pub b: VarSet,
    #[serde(default)]
    pub c: VarSet,
}

impl Partition {
    pub fn new(a: VarSet, b: VarSet, c: VarSet) -> Self {
        Partition { a, b, c }
    }

    pub fn union(&self) -> VarSet {
        self.a.union(self.b).union(self.c)
    }

    pub fn validate(&self, vars: VarSet, mode: Mode) -> Result<()> {
        if self.a.intersects(self.b) || self.a.intersects(self.c) || self.b.intersects(self.c) {
            return Err(MllError::BadPartition(format!(
                "blocks {} {} {} are not disjoint",
                self.a, self.b, self.c
            )));
        }
        if self.a.is_empty() || self.b.is_empty() {
            return Err(MllError::BadPartition(
                "blocks A and B must be non-empty".into(),
            ));
        }
        if mode == Mode::Mutual && self.c.is_empty() {
            return Err(MllError::BadPartition(
                "mutual independence needs a non-empty C".into(),
            ));
        }
        if !self.union().is_subset(vars) {
            return Err(MllError::BadPartition(format!(
                "blocks cover {} outside the table variables {vars}",
                self.union()
            )));
        }
        Ok(())
    }

    /// Effects whose parameters vanish exactly under independence of the
    /// given kind, all within the margin `A ∪ B ∪ C`.
    pub fn vanishing_family(&self, mode: Mode) -> Vec<VarSet> {
        let hits = |z: VarSet, s: VarSet| z.intersects(s);
        self.union()
            .subsets()
            .into_iter()
            .filter(|&z| match mode {
                Mode::Conditional => hits(z, self.a) && hits(z, self.b),
                Mode::Joint => hits(z, self.a) && hits(z, self.b.union(self.c)),
                Mode::Mutual => {
                    [self.a, self.b, self.c]
                        .iter()
                        .filter(|&&blk| hits(z, blk))
                        .count()
                        >= 2
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `X_A ⊥ X_B | X_C`.
    Conditional,
    /// `X_A ⊥ (X_B, X_C)`.
    Joint,
    /// `X_A ⊥ X_B ⊥ X_C`.
    Mutual,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Conditional, Mode::Joint, Mode::Mutual];
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceVerdict {
    pub mode: Mode,
    pub partition: Partition,
    /// Largest `|λ_Z|` over the vanishing family.
    pub lambda_evidence: f64,
    pub lambda_effect: VarSet,
    pub lambda_cell: Vec<usize>,
    /// Largest `|log p − log(factorized p)|`.
    pub oracle_evidence: f64,
    pub oracle_cell: Vec<usize>,
    pub threshold: f64,
    pub verdict: bool,
}

fn zero_threshold(tol: &Tolerance) -> f64 {
    tol.eq.max(tol.floor)
}

pub fn test_independence(
    table: &Table,
    part: &Partition,
    mode: Mode,
) -> Result<IndependenceVerdict> {
    test_independence_with(table, part, mode, &Tolerance::default())
}

pub fn test_independence_with(
    table: &Table,
    part: &Partition,
    mode: Mode,
    tol: &Tolerance,
) -> Result<IndependenceVerdict> {
    part.validate(table.vars(), mode)?;
    let all = part.union();
    let lm = LogMargin::new(table, all)?;

    let mut lambda_evidence = 0.0;
    let mut lambda_effect = VarSet::EMPTY;
    let mut lambda_cell = Vec::new();
    for z in part.vanishing_family(mode) {
        let (m, cell) = lm.lambda(z).argmax_abs();
        if m > lambda_evidence || lambda_cell.is_empty() {
            lambda_evidence = m;
            lambda_effect = z;
            lambda_cell = cell;
        }
    }

    let oracle = factorization_residual(table, part, mode)?;
    let (oracle_evidence, oracle_cell) = oracle.argmax_abs();

    let reference = zero_threshold(&Tolerance::default());
    if contradicts(
        Judged::new(lambda_evidence, reference),
        Judged::new(oracle_evidence, reference),
    ) {
        return Err(MllError::EquivalenceBreach(format!(
            "{mode:?} independence: parameter evidence {lambda_evidence:e} vs factorization evidence {oracle_evidence:e}"
        )));
    }
    let threshold = zero_threshold(tol);
    Ok(IndependenceVerdict {
        mode,
        partition: *part,
        lambda_evidence,
        lambda_effect,
        lambda_cell,
        oracle_evidence,
        oracle_cell,
        threshold,
        verdict: lambda_evidence < threshold && oracle_evidence < threshold,
    })
}

/// `log p_{ABC} − log(factorized form)` over the cells of `A ∪ B ∪ C`.
pub fn factorization_residual(table: &Table, part: &Partition, mode: Mode) -> Result<Tensor> {
    let all = part.union();
    let joint = table.margin_log_probs(all)?;
    let log_margin = |s: VarSet| -> Result<Tensor> {
        if s.is_empty() {
            Ok(Tensor::scalar(0.0))
        } else {
            table.margin_log_probs(s)
        }
    };
    let (a, b, c) = (part.a, part.b, part.c);
    let factors: Vec<(f64, Tensor)> = match mode {
        Mode::Conditional => vec![
            (1.0, log_margin(a.union(c))?),
            (1.0, log_margin(b.union(c))?),
            (-1.0, log_margin(c)?),
        ],
        Mode::Joint => vec![(1.0, log_margin(a)?), (1.0, log_margin(b.union(c))?)],
        Mode::Mutual => vec![
            (1.0, log_margin(a)?),
            (1.0, log_margin(b)?),
            (1.0, log_margin(c)?),
        ],
    };
    Ok(Tensor::from_fn(all, joint.levels().to_vec(), |cell| {
        joint.get(cell)
            - factors
                .iter()
                .map(|(s, t)| s * t.get_broadcast(all, cell))
                .sum::<f64>()
    }))
}

/// Agreement of `λ_{A∪D}` in the margins `ABC` and `AC`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transfer {
    /// Whether `X_A ⊥ X_B | X_C` holds, which guarantees agreement.
    pub premise: bool,
    pub residual: f64,
    pub cell: Vec<usize>,
}

pub fn transfer_check(table: &Table, part: &Partition, d: VarSet) -> Result<Transfer> {
    if !d.is_subset(part.c) {
        return Err(MllError::BadPartition(format!(
            "{d} is not within C = {}",
            part.c
        )));
    }
    let premise = test_independence(table, part, Mode::Conditional)?.verdict;
    let effect = part.a.union(d);
    let full = LogMargin::new(table, part.union())?.lambda(effect);
    let reduced = LogMargin::new(table, part.a.union(part.c))?.lambda(effect);
    let (residual, cell) = full.sub(&reduced).argmax_abs();
    Ok(Transfer {
        premise,
        residual,
        cell,
    })
}

/// One strict-collapsibility statement: collapse over `over` onto `onto`
/// w.r.t. every listed effect.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrictCollapse {
    pub over: VarSet,
    pub onto: VarSet,
    pub effects: Vec<VarSet>,
    pub holds: bool,
    /// First effect for which the strict check failed.
    pub failed: Option<VarSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub mode: Mode,
    pub independence: bool,
    pub strict_collapse: bool,
    pub equivalence_ok: bool,
    pub collapses: Vec<StrictCollapse>,
}

fn nonempty(s: VarSet) -> Vec<VarSet> {
    s.subsets().into_iter().filter(|x| !x.is_empty()).collect()
}

/// `{X' ∪ Y' : ∅ ≠ X' ⊆ x, Y' ⊆ y}`.
fn anchored(x: VarSet, y: VarSet) -> Vec<VarSet> {
    let mut out: Vec<VarSet> = nonempty(x)
        .into_iter()
        .flat_map(|xs| y.subsets().into_iter().map(move |ys| xs.union(ys)))
        .collect();
    out.sort();
    out
}

fn strict_collapse(
    table: &Table,
    over: VarSet,
    effects: Vec<VarSet>,
    tol: &Tolerance,
) -> Result<StrictCollapse> {
    let outer = table.vars();
    let onto = outer.difference(over);
    let mut failed = None;
    for &effect in &effects {
        let q = CollapseQuery::new(effect, onto, outer)
            .strict()
            .with_tol(*tol);
        if !check_strict_collapsibility(&q, table)?.verdict {
            failed = Some(effect);
            break;
        }
    }
    Ok(StrictCollapse {
        over,
        onto,
        effects,
        holds: failed.is_none(),
        failed,
    })
}

/// Independence of the given kind against the strict-collapsibility
/// statements that characterize it.
///
/// * conditional: over `A` w.r.t. `λ_{B'C'}` (`B' ≠ ∅`), and over `B` w.r.t.
///   `λ_{A'C'}` (`A' ≠ ∅`); each statement alone is equivalent.
/// * joint: over `A` w.r.t. every non-empty subset of `B ∪ C`.
/// * mutual: over `A` w.r.t. `λ_{B'}`, `λ_{C'}`; over `B` w.r.t. `λ_{A'}`,
///   `λ_{C'}`; over `C` w.r.t. `λ_{A'}`, `λ_{B'}`; any two are equivalent.
pub fn independence_suite(table: &Table, part: &Partition, mode: Mode) -> Result<SuiteReport> {
    independence_suite_with(table, part, mode, &Tolerance::default())
}

pub fn independence_suite_with(
    table: &Table,
    part: &Partition,
    mode: Mode,
    tol: &Tolerance,
) -> Result<SuiteReport> {
    part.validate(table.vars(), mode)?;
    if part.union() != table.vars() {
        return Err(MllError::BadPartition(format!(
            "blocks must cover all variables {}",
            table.vars()
        )));
    }
    let independence = test_independence_with(table, part, mode, tol)?.verdict;
    let (a, b, c) = (part.a, part.b, part.c);
    let singles = |x: VarSet, y: VarSet| {
        let mut v = nonempty(x);
        v.extend(nonempty(y));
        v
    };
    let collapses = match mode {
        Mode::Conditional => vec![
            strict_collapse(table, a, anchored(b, c), tol)?,
            strict_collapse(table, b, anchored(a, c), tol)?,
        ],
        Mode::Joint => vec![strict_collapse(table, a, nonempty(b.union(c)), tol)?],
        Mode::Mutual => vec![
            strict_collapse(table, a, singles(b, c), tol)?,
            strict_collapse(table, b, singles(a, c), tol)?,
            strict_collapse(table, c, singles(a, b), tol)?,
        ],
    };
    let (strict, equivalence_ok) = match mode {
        Mode::Mutual => {
            let held = collapses.iter().filter(|c| c.holds).count();
            let pairs_ok = (0..3).all(|i| {
                ((i + 1)..3).all(|j| (collapses[i].holds && collapses[j].holds) == independence)
            });
            (held >= 2, pairs_ok)
        }
        _ => (
            collapses.iter().all(|c| c.holds),
            collapses.iter().all(|c| c.holds == independence),
        ),
    };
    Ok(SuiteReport {
        mode,
        independence,
        strict_collapse: strict,
        equivalence_ok: equivalence_ok && strict == independence,
        collapses,
    })
}

/// `λ_L^{AB} = λ_L^B + f` with both parts over the cells of `L`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    pub effect: VarSet,
    pub target: VarSet,
    pub given: VarSet,
    /// `Σ_{L'⊆L} (−1)^{|L∖L'|} ν^B_{L'∩B}`, equal to `λ_L^B` when `L ⊆ B`
    /// and zero otherwise.
    pub lambda_given: Tensor,
    /// The same alternating sum over averaged `log p_{A|B}`.
    pub conditional: Tensor,
    pub lambda_joint: Tensor,
    /// `max |λ_L^{AB} − λ_given − conditional|`.
    pub residual: f64,
}

fn sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn decompose_lambda(
    table: &Table,
    effect: VarSet,
    target: VarSet,
    given: VarSet,
) -> Result<Decomposition> {
    if target.intersects(given) {
        return Err(MllError::OverlappingSets {
            left: target,
            right: given,
        });
    }
    if target.is_empty() || given.is_empty() {
        return Err(MllError::BadPartition(
            "both blocks must be non-empty".into(),
        ));
    }
    let joint = target.union(given);
    table.require_subset(joint)?;
    if !effect.is_subset(joint) {
        return Err(MllError::NotCovered {
            effect,
            cover: joint,
        });
    }
    let margin_given = LogMargin::new(table, given)?;
    let log_conditional = table.condition(target, given)?.values().map(f64::ln);
    let levels = table.probs().levels_for(effect);

    let mut given_parts = Vec::new();
    let mut cond_parts = Vec::new();
    for sub in effect.subsets() {
        let s = sign(effect.len() - sub.len());
        given_parts.push((s, margin_given.nu(sub.intersection(given))));
        cond_parts.push((s, log_conditional.mean_to(sub)));
    }
    let assemble = |parts: &[(f64, Tensor)]| {
        Tensor::from_fn(effect, levels.clone(), |cell| {
            parts
                .iter()
                .map(|(s, t)| s * t.get_broadcast(effect, cell))
                .sum()
        })
    };
    let lambda_given = assemble(&given_parts);
    let conditional = assemble(&cond_parts);
    let lambda_joint = LogMargin::new(table, joint)?.lambda(effect);
    let residual = Tensor::from_fn(effect, levels.clone(), |cell| {
        lambda_joint.get(cell) - lambda_given.get(cell) - conditional.get(cell)
    })
    .max_abs();
    Ok(Decomposition {
        effect,
        target,
        given,
        lambda_given,
        conditional,
        lambda_joint,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemovalReport {
    pub removed: VarSet,
    pub pivot: VarSet,
    /// Whether `X_R ⊥ X_v | X_{(M∖R)∖v}` holds.
    pub premise: bool,
    pub premise_evidence: f64,
    /// `λ_L^M` against `λ_L^{M∖R}` for effects containing `v`.
    pub asserted: Vec<EffectCheck>,
    /// The same comparison for the remaining non-empty effects, for
    /// information only.
    pub reported: Vec<EffectCheck>,
    /// `None` when the premise fails and nothing is claimed.
    pub holds: Option<bool>,
}

pub fn removal_check(table: &Table, removed: VarSet, v: usize) -> Result<RemovalReport> {
    removal_check_with(table, removed, v, &Tolerance::default())
}

pub fn removal_check_with(
    table: &Table,
    removed: VarSet,
    v: usize,
    tol: &Tolerance,
) -> Result<RemovalReport> {
    let all = table.vars();
    if removed.is_empty() || !removed.is_proper_subset(all) {
        return Err(MllError::BadPartition(format!(
            "removed block {removed} must be a non-empty proper subset of {all}"
        )));
    }
    let kept = all.difference(removed);
    if !kept.contains(v) {
        return Err(MllError::BadPartition(format!(
            "variable {} is not among the kept variables {kept}",
            v + 1
        )));
    }
    let pivot = VarSet::singleton(v);
    let part = Partition::new(removed, pivot, kept.remove(v));
    let premise = test_independence_with(table, &part, Mode::Conditional, tol)?;

    let full = LogMargin::new(table, all)?;
    let reduced = LogMargin::new(table, kept)?;
    let scale = table.log_scale();
    let mut asserted = Vec::new();
    let mut reported = Vec::new();
    for effect in nonempty(kept) {
        let (residual, cell) = full
            .lambda(effect)
            .sub(&reduced.lambda(effect))
            .argmax_abs();
        let threshold = tol.for_terms(scale, 1usize << effect.len());
        let check = EffectCheck {
            effect,
            residual,
            threshold,
            holds: residual < threshold,
            cell,
        };
        if effect.contains(v) {
            asserted.push(check);
        } else {
            reported.push(check);
        }
    }
    let holds = premise.verdict.then(|| asserted.iter().all(|c| c.holds));
    Ok(RemovalReport {
        removed,
        pivot,
        premise: premise.verdict,
        premise_evidence: premise.lambda_evidence.max(premise.oracle_evidence),
        asserted,
        reported,
        holds,
    })
}
