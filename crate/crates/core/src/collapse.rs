//! Collapsibility of a table onto a margin with respect to interaction
//! parameters.
//!
//! For `L ⊆ M ⊂ N` the table is collapsible over `N∖M` w.r.t. `λ_L` when
//! `λ_L^M = λ_L^N`. Each check evaluates the definition directly and through
//! the equivalent conditions on the discrepancy
//!
//! ```text
//! d(x_M)   = log p_M(x_M) − ν_M^N(x_M)
//! d̃_Z(x_Z) = mean of d over the M-cells agreeing with x_Z  (= ν_Z^M − ν_Z^N)
//! ```
//!
//! Routes that must agree are compared at the built-in tolerance; a clear
//! disagreement is reported as [`MllError::EquivalenceBreach`]. A caller
//! tolerance only moves the verdict thresholds.

use serde::Serialize;

use crate::error::{MllError, Result};
use crate::mll::LogMargin;
use crate::table::Table;
use crate::tensor::Tensor;
use crate::tolerance::{contradicts, Judged, Tolerance};
use crate::varset::VarSet;

/// Largest outer margin for which strict checks enumerate effects.
pub const STRICT_LIMIT: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollapseQuery {
    pub effect: VarSet,
    pub margin: VarSet,
    pub outer: VarSet,
    /// Common core `S` of an effect family `{A : S ⊆ A ⊆ L}`.
    pub core: Option<VarSet>,
    pub strict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<Tolerance>,
}

impl CollapseQuery {
    pub fn new(effect: VarSet, margin: VarSet, outer: VarSet) -> Self {
        CollapseQuery {
            effect,
            margin,
            outer,
            core: None,
            strict: false,
            tol: None,
        }
    }

    pub fn with_core(mut self, core: VarSet) -> Self {
        self.core = Some(core);
        self
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn with_tol(mut self, tol: Tolerance) -> Self {
        self.tol = Some(tol);
        self
    }

    fn validate(&self, table: &Table) -> Result<()> {
        if !self.outer.is_subset(table.vars()) {
            return Err(MllError::NotASubset {
                subset: self.outer,
                superset: table.vars(),
            });
        }
        if !self.effect.is_subset(self.margin) || !self.margin.is_subset(self.outer) {
            return Err(MllError::NotNested(format!(
                "need {} ⊆ {} ⊆ {}",
                self.effect, self.margin, self.outer
            )));
        }
        if self.margin == self.outer {
            return Err(MllError::NotStrictlyNested {
                margin: self.margin,
                outer: self.outer,
            });
        }
        if let Some(core) = self.core {
            if core.is_empty() || !core.is_subset(self.effect) {
                return Err(MllError::NotNested(format!(
                    "core {core} must be a non-empty subset of {}",
                    self.effect
                )));
            }
        }
        if self.strict {
            if self.effect.is_empty() {
                return Err(MllError::NotNested(
                    "strict collapsibility needs a non-empty effect".into(),
                ));
            }
            if self.outer.len() > STRICT_LIMIT {
                return Err(MllError::QueryTooLarge {
                    n: self.outer.len(),
                    limit: STRICT_LIMIT,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseKind {
    Single,
    Family,
    Strict,
    StrictFamily,
}

/// A named residual, its threshold and the cell where it peaks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub residual: f64,
    pub threshold: f64,
    pub holds: bool,
    /// Variables indexing `cell`.
    pub vars: VarSet,
    pub cell: Vec<usize>,
}

/// Per-effect check inside a family or vanishing list.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectCheck {
    pub effect: VarSet,
    pub residual: f64,
    pub threshold: f64,
    pub holds: bool,
    pub cell: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseReport {
    pub kind: CollapseKind,
    pub effect: VarSet,
    pub margin: VarSet,
    pub outer: VarSet,
    pub core: Option<VarSet>,
    pub verdict: bool,
    pub conditions: Vec<Condition>,
    /// `λ_A^M − λ_A^N` for every effect of the family.
    pub family: Vec<EffectCheck>,
    /// Outer-margin parameters that had to vanish but did not.
    pub nonvanishing: Vec<EffectCheck>,
    pub tolerance: Tolerance,
}

impl CollapseReport {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn check_outer(table: &Table, margin: VarSet, outer: VarSet) -> Result<()> {
    table.require_subset(outer)?;
    if !margin.is_subset(outer) {
        return Err(MllError::NotNested(format!("{margin} not within {outer}")));
    }
    if margin == outer {
        return Err(MllError::NotStrictlyNested { margin, outer });
    }
    Ok(())
}

/// `d` over the cells of `M`.
pub fn d_tensor(table: &Table, margin: VarSet, outer: VarSet) -> Result<Tensor> {
    check_outer(table, margin, outer)?;
    let lm = LogMargin::new(table, margin)?;
    let ln = LogMargin::new(table, outer)?;
    Ok(lm.log_p().sub(&ln.nu(margin)))
}

pub fn d_cell(table: &Table, margin: VarSet, outer: VarSet, cell: &[usize]) -> Result<f64> {
    d_tensor(table, margin, outer)?.try_get(cell)
}

/// `d̃_Z` over the cells of `Z`, by averaging `d`. The result is compared
/// against `ν_Z^M − ν_Z^N`.
pub fn d_tilde_tensor(table: &Table, sub: VarSet, margin: VarSet, outer: VarSet) -> Result<Tensor> {
    check_outer(table, margin, outer)?;
    if !sub.is_subset(margin) {
        return Err(MllError::NotNested(format!("{sub} not within {margin}")));
    }
    let ctx = Ctx::new(table, margin, outer, Tolerance::default())?;
    ctx.d_tilde(sub)
}

pub fn d_tilde(
    table: &Table,
    sub: VarSet,
    margin: VarSet,
    outer: VarSet,
    cell: &[usize],
) -> Result<f64> {
    d_tilde_tensor(table, sub, margin, outer)?.try_get(cell)
}

struct Ctx {
    inner: LogMargin,
    outer: LogMargin,
    d: Tensor,
    scale: f64,
    tol: Tolerance,
    reference: Tolerance,
}

impl Ctx {
    fn new(table: &Table, margin: VarSet, outer: VarSet, tol: Tolerance) -> Result<Self> {
        let inner = LogMargin::new(table, margin)?;
        let outer = LogMargin::new(table, outer)?;
        let d = inner.log_p().sub(&outer.nu(margin));
        Ok(Ctx {
            inner,
            outer,
            d,
            scale: table.log_scale(),
            tol,
            reference: Tolerance::default(),
        })
    }

    fn d_tilde(&self, sub: VarSet) -> Result<Tensor> {
        let averaged = self.d.mean_to(sub);
        let via_nu = self.inner.nu(sub).sub(&self.outer.nu(sub));
        let gap = averaged.sub(&via_nu).max_abs();
        if gap > 10.0 * self.reference.threshold(self.scale) {
            return Err(MllError::EquivalenceBreach(format!(
                "averaged discrepancy over {sub} differs from its mean-log form by {gap:e}"
            )));
        }
        Ok(averaged)
    }

    fn delta(&self, effect: VarSet) -> Tensor {
        self.inner.lambda(effect).sub(&self.outer.lambda(effect))
    }

    fn threshold(&self, terms: usize) -> f64 {
        self.tol.for_terms(self.scale, terms)
    }

    fn reference_threshold(&self, terms: usize) -> f64 {
        self.reference.for_terms(self.scale, terms)
    }

    fn condition(&self, name: &'static str, values: &Tensor, terms: usize) -> Condition {
        let (residual, cell) = values.argmax_abs();
        let threshold = self.threshold(terms);
        Condition {
            name,
            residual,
            threshold,
            holds: residual < threshold,
            vars: values.vars(),
            cell,
        }
    }

    fn effect_check(&self, effect: VarSet, values: &Tensor, terms: usize) -> EffectCheck {
        let (residual, cell) = values.argmax_abs();
        let threshold = self.threshold(terms);
        EffectCheck {
            effect,
            residual,
            threshold,
            holds: residual < threshold,
            cell,
        }
    }

    /// Fails when two conditions that must agree clearly disagree at the
    /// built-in tolerance.
    fn agree(&self, a: &Condition, b: &Condition, terms: usize) -> Result<()> {
        let t = self.reference_threshold(terms);
        if contradicts(Judged::new(a.residual, t), Judged::new(b.residual, t)) {
            return Err(MllError::EquivalenceBreach(format!(
                "{} residual {:e} and {} residual {:e} disagree",
                a.name, a.residual, b.name, b.residual
            )));
        }
        Ok(())
    }
}

fn combine(vars: VarSet, levels: Vec<usize>, parts: &[(f64, Tensor)]) -> Tensor {
    Tensor::from_fn(vars, levels, |cell| {
        parts
            .iter()
            .map(|(s, t)| s * t.get_broadcast(vars, cell))
            .sum()
    })
}

fn sign(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// The three equivalent conditions for a single effect `L`.
fn single_conditions(ctx: &Ctx, effect: VarSet) -> Result<Vec<Condition>> {
    let terms = 1usize << effect.len();
    let levels = ctx.inner.levels_for(effect);
    let delta = ctx.delta(effect);

    let lower: Vec<(f64, Tensor)> = effect
        .subsets()
        .into_iter()
        .filter(|z| *z != effect)
        .map(|z| (-1.0, ctx.delta(z)))
        .chain(std::iter::once((1.0, ctx.d_tilde(effect)?)))
        .collect();
    let gap = combine(effect, levels.clone(), &lower);

    let mut alternating = Vec::new();
    for z in effect.subsets() {
        alternating.push((sign(effect.len() - z.len()), ctx.d_tilde(z)?));
    }
    let alt = combine(effect, levels, &alternating);

    let conds = vec![
        ctx.condition("delta", &delta, terms),
        ctx.condition("dtilde_gap", &gap, terms),
        ctx.condition("alternating_sum", &alt, terms),
    ];
    ctx.agree(&conds[0], &conds[1], terms)?;
    ctx.agree(&conds[0], &conds[2], terms)?;
    Ok(conds)
}

/// `Σ_{R⊆S} (−1)^{|S∖R|} d̃_{L∖R}` over the cells of `L`.
fn family_identity(ctx: &Ctx, effect: VarSet, core: VarSet) -> Result<Condition> {
    let mut parts = Vec::new();
    for r in core.subsets() {
        parts.push((
            sign(core.len() - r.len()),
            ctx.d_tilde(effect.difference(r))?,
        ));
    }
    let values = combine(effect, ctx.inner.levels_for(effect), &parts);
    Ok(ctx.condition("family_identity", &values, 1usize << effect.len()))
}

fn family_direct(ctx: &Ctx, effect: VarSet, core: VarSet) -> (Vec<EffectCheck>, Condition) {
    let mut checks = Vec::new();
    let mut worst: Option<(EffectCheck, Tensor)> = None;
    for a in core.supersets_within(effect) {
        let delta = ctx.delta(a);
        let check = ctx.effect_check(a, &delta, 1usize << a.len());
        if worst
            .as_ref()
            .is_none_or(|(w, _)| check.residual > w.residual)
        {
            worst = Some((check.clone(), delta));
        }
        checks.push(check);
    }
    let (_, values) = worst.expect("family contains the core");
    let mut cond = ctx.condition("family_direct", &values, 1usize << effect.len());
    cond.holds = checks.iter().all(|c| c.holds);
    (checks, cond)
}

/// `λ_Z^N` for `Z ⊇ base`, `Z ⊆ N`, `Z ⊄ M`, skipping `Z = base`.
fn vanishing_checks(
    ctx: &Ctx,
    base: VarSet,
    margin: VarSet,
    outer: VarSet,
) -> (Vec<EffectCheck>, Condition) {
    let mut checks = Vec::new();
    let mut worst: Option<(f64, Tensor)> = None;
    for z in base.supersets_within(outer) {
        if z == base || z.is_subset(margin) {
            continue;
        }
        let values = ctx.outer.lambda(z);
        let check = ctx.effect_check(z, &values, 1usize << z.len());
        if worst.as_ref().is_none_or(|(r, _)| check.residual > *r) {
            worst = Some((check.residual, values));
        }
        checks.push(check);
    }
    let values = worst.map(|(_, t)| t).unwrap_or_else(|| Tensor::scalar(0.0));
    let mut cond = ctx.condition("vanishing", &values, 1usize << outer.len());
    cond.holds = checks.iter().all(|c| c.holds);
    (checks, cond)
}

/// `Σ_{Z⊆base} (−1)^{|base∖Z|} [ν^N_{Z∪(N∖base)} − ν^N_{Z∪(M∖base)}]` over
/// the cells of `N`.
fn strict_nu_identity(ctx: &Ctx, base: VarSet, margin: VarSet, outer: VarSet) -> Condition {
    let wide = outer.difference(base);
    let narrow = margin.difference(base);
    let mut parts = Vec::new();
    for z in base.subsets() {
        let s = sign(base.len() - z.len());
        parts.push((s, ctx.outer.nu(z.union(wide))));
        parts.push((-s, ctx.outer.nu(z.union(narrow))));
    }
    let values = combine(outer, ctx.outer.levels_for(outer), &parts);
    ctx.condition("strict_identity", &values, 2usize << base.len())
}

/// `Σ λ_Z^N` over `Z ⊋ base` with `Z ⊆ N`, `Z ⊄ M`, over the cells of `N`.
fn strict_aggregate(ctx: &Ctx, base: VarSet, margin: VarSet, outer: VarSet) -> Condition {
    let parts: Vec<(f64, Tensor)> = base
        .supersets_within(outer)
        .into_iter()
        .filter(|z| *z != base && !z.is_subset(margin))
        .map(|z| (1.0, ctx.outer.lambda(z)))
        .collect();
    let values = combine(outer, ctx.outer.levels_for(outer), &parts);
    ctx.condition("strict_aggregate", &values, 1usize << outer.len())
}

/// Collapsibility w.r.t. a single effect `λ_L`.
pub fn check_collapsibility(query: &CollapseQuery, table: &Table) -> Result<CollapseReport> {
    let q = CollapseQuery {
        core: None,
        strict: false,
        ..*query
    };
    q.validate(table)?;
    let tol = q.tol.unwrap_or_default();
    let ctx = Ctx::new(table, q.margin, q.outer, tol)?;
    let conditions = single_conditions(&ctx, q.effect)?;
    Ok(CollapseReport {
        kind: CollapseKind::Single,
        effect: q.effect,
        margin: q.margin,
        outer: q.outer,
        core: None,
        verdict: conditions[0].holds,
        conditions,
        family: Vec::new(),
        nonvanishing: Vec::new(),
        tolerance: tol,
    })
}

/// Collapsibility w.r.t. the family `{λ_A : S ⊆ A ⊆ L}`.
pub fn check_set_collapsibility(query: &CollapseQuery, table: &Table) -> Result<CollapseReport> {
    let core = query
        .core
        .ok_or_else(|| MllError::NotNested("family query needs a core".into()))?;
    let q = CollapseQuery {
        strict: false,
        ..*query
    };
    q.validate(table)?;
    let tol = q.tol.unwrap_or_default();
    let ctx = Ctx::new(table, q.margin, q.outer, tol)?;
    let identity = family_identity(&ctx, q.effect, core)?;
    let (family, direct) = family_direct(&ctx, q.effect, core);
    ctx.agree(&identity, &direct, 1usize << q.effect.len())?;
    Ok(CollapseReport {
        kind: CollapseKind::Family,
        effect: q.effect,
        margin: q.margin,
        outer: q.outer,
        core: Some(core),
        verdict: direct.holds,
        conditions: vec![direct, identity],
        family,
        nonvanishing: Vec::new(),
        tolerance: tol,
    })
}

/// Strict collapsibility w.r.t. `λ_L`: collapsibility plus vanishing of every
/// `λ_Z^N` with `L ⊂ Z ⊆ N`, `Z ⊄ M`.
pub fn check_strict_collapsibility(query: &CollapseQuery, table: &Table) -> Result<CollapseReport> {
    let q = CollapseQuery {
        core: None,
        strict: true,
        ..*query
    };
    q.validate(table)?;
    let tol = q.tol.unwrap_or_default();
    let ctx = Ctx::new(table, q.margin, q.outer, tol)?;
    let mut conditions = single_conditions(&ctx, q.effect)?;
    let (checks, vanishing) = vanishing_checks(&ctx, q.effect, q.margin, q.outer);
    let identity = strict_nu_identity(&ctx, q.effect, q.margin, q.outer);
    let aggregate = strict_aggregate(&ctx, q.effect, q.margin, q.outer);
    let terms = 1usize << q.outer.len();
    ctx.agree(&vanishing, &identity, terms)?;
    ctx.agree(&vanishing, &aggregate, terms)?;
    ctx.agree(&identity, &aggregate, terms)?;
    let verdict = conditions[0].holds && vanishing.holds;
    conditions.extend([vanishing, identity, aggregate]);
    Ok(CollapseReport {
        kind: CollapseKind::Strict,
        effect: q.effect,
        margin: q.margin,
        outer: q.outer,
        core: None,
        verdict,
        conditions,
        family: Vec::new(),
        nonvanishing: checks.into_iter().filter(|c| !c.holds).collect(),
        tolerance: tol,
    })
}

/// Strict collapsibility w.r.t. every effect of `{λ_A : S ⊆ A ⊆ L}`.
pub fn check_strict_set(query: &CollapseQuery, table: &Table) -> Result<CollapseReport> {
    let core = query
        .core
        .ok_or_else(|| MllError::NotNested("family query needs a core".into()))?;
    let q = CollapseQuery {
        strict: true,
        ..*query
    };
    q.validate(table)?;
    let tol = q.tol.unwrap_or_default();
    let ctx = Ctx::new(table, q.margin, q.outer, tol)?;
    let identity = family_identity(&ctx, q.effect, core)?;
    let (family, direct) = family_direct(&ctx, q.effect, core);
    ctx.agree(&identity, &direct, 1usize << q.effect.len())?;

    // Vanishing over the union of the per-effect strict families, which is
    // every Z ⊇ S outside M.
    let (checks, vanishing) = vanishing_checks(&ctx, core, q.margin, q.outer);
    let strict_identity = strict_nu_identity(&ctx, core, q.margin, q.outer);
    ctx.agree(&vanishing, &strict_identity, 1usize << q.outer.len())?;

    let mut per_effect = true;
    for a in core.supersets_within(q.effect) {
        let single = CollapseQuery {
            effect: a,
            core: None,
            ..q
        };
        per_effect &= check_strict_collapsibility(&single, table)?.verdict;
    }
    let verdict = direct.holds && vanishing.holds;
    if per_effect != verdict {
        return Err(MllError::EquivalenceBreach(format!(
            "family verdict {verdict} but per-effect strict verdicts give {per_effect}"
        )));
    }
    Ok(CollapseReport {
        kind: CollapseKind::StrictFamily,
        effect: q.effect,
        margin: q.margin,
        outer: q.outer,
        core: Some(core),
        verdict,
        conditions: vec![direct, identity, vanishing, strict_identity],
        family,
        nonvanishing: checks.into_iter().filter(|c| !c.holds).collect(),
        tolerance: tol,
    })
}

/// Dispatches on the query's core and strict flag.
pub fn check(query: &CollapseQuery, table: &Table) -> Result<CollapseReport> {
    match (query.core.is_some(), query.strict) {
        (false, false) => check_collapsibility(query, table),
        (true, false) => check_set_collapsibility(query, table),
        (false, true) => check_strict_collapsibility(query, table),
        (true, true) => check_strict_set(query, table),
    }
}

/// `λ_L^L` evaluated from the marginal table over `outer ⊇ L`, which must
/// coincide with the value computed from the full table.
pub fn logistic_via(table: &Table, effect: VarSet, outer: VarSet) -> Result<Tensor> {
    table.require_subset(outer)?;
    if !effect.is_subset(outer) {
        return Err(MllError::NotNested(format!("{effect} not within {outer}")));
    }
    let sub = table.marginalize(outer)?;
    crate::mll::lambda_tensor(&sub, effect, effect)
}
