mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use mll_core::collapse::{check, logistic_via, CollapseQuery, CollapseReport};
use mll_core::error::MllError;
use mll_core::generator::{generate, GenSpec};
use mll_core::independence::{
    decompose_lambda, factorization_residual, independence_suite, removal_check, test_independence,
    transfer_check, Mode, Partition,
};
use mll_core::mll::{
    expand_log_linear, kappa_sides, lambda, lambda_crosscheck, lambda_tensor, mobius_forward,
    mobius_inverse, nu_tensor, reconstruction_residuals, zero_sum_residual, CrossCheck,
    SubsetValues,
};
use mll_core::{io, Table, Tensor, Tolerance, VarSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn all_pairs(vars: VarSet) -> Vec<(VarSet, VarSet)> {
    vars.subsets()
        .into_iter()
        .flat_map(|m| m.subsets().into_iter().map(move |l| (l, m)))
        .collect()
}

fn diff(a: &Tensor, b: &Tensor) -> f64 {
    a.sub(b).max_abs()
}

#[test]
fn c01_zero_sum() {
    let outcome = (|| {
        let mut rng = rng(101);
        let mut worst = 0.0_f64;
        let mut checks = 0usize;
        for i in 0..200 {
            let n = 2 + i % 3;
            let table = random_table(&mut rng, n);
            for m in table.vars().subsets() {
                let set = expand_log_linear(&table, m).map_err(|e| e.to_string())?;
                for l in m.subsets() {
                    for v in l.iter() {
                        let r = zero_sum_residual(&set, l, m, v).map_err(|e| e.to_string())?;
                        worst = worst.max(r);
                        checks += 1;
                        ensure!(
                            r < 1e-8,
                            "table {i}: effect {l} in {m}, variable {}: {r:e}",
                            v + 1
                        );
                    }
                }
            }
        }
        Ok(format!("{checks} checks, max residual {worst:.2e}"))
    })();
    report("1", "zero-sum", outcome);
}

#[test]
fn c02_formula_agreement() {
    let outcome = (|| {
        let mut rng = rng(202);
        let (mut worst_ind, mut worst_sign) = (0.0_f64, 0.0_f64);
        let mut binary_tables = 0;
        for i in 0..50 {
            let n = 2 + i % 3;
            // Every fifth table is all-binary so the sign form is exercised.
            let table = if i % 5 == 0 {
                generate(&GenSpec::random(&vec![2; n], rng.random())).unwrap()
            } else {
                random_table(&mut rng, n)
            };
            for (l, m) in all_pairs(table.vars()) {
                let reference = lambda_tensor(&table, l, m).map_err(|e| e.to_string())?;
                let binary = table
                    .margin_probs(m)
                    .unwrap()
                    .levels()
                    .iter()
                    .all(|&k| k == 2);
                for cell in reference.cells() {
                    let value = reference.get(&cell);
                    let ind = lambda_crosscheck(&table, l, m, &cell, CrossCheck::Indicator)
                        .map_err(|e| e.to_string())?;
                    worst_ind = worst_ind.max((ind - value).abs());
                    ensure!(
                        (ind - value).abs() < 1e-10,
                        "table {i}: indicator form off at {l} in {m}"
                    );
                    if binary {
                        let sign = lambda_crosscheck(&table, l, m, &cell, CrossCheck::BinarySign)
                            .map_err(|e| e.to_string())?;
                        worst_sign = worst_sign.max((sign - value).abs());
                        ensure!(
                            (sign - value).abs() < 1e-10,
                            "table {i}: sign form off at {l} in {m}"
                        );
                    }
                }
            }
            binary_tables += usize::from(table.levels().iter().all(|&k| k == 2));
        }
        Ok(format!(
            "indicator max {worst_ind:.2e}, sign max {worst_sign:.2e} ({binary_tables} all-binary tables)"
        ))
    })();
    report("2", "formula agreement", outcome);
}

#[test]
fn c03_mobius_reconstruction() {
    let outcome = (|| {
        let mut rng = rng(303);
        let (mut worst_trip, mut worst_rec) = (0.0_f64, 0.0_f64);
        for i in 0..50 {
            let table = random_table(&mut rng, 2 + i % 3);
            for m in table.vars().subsets() {
                // ν→λ→ν on every cell of M, one lattice per cell.
                let nus: Vec<(VarSet, Tensor)> = m
                    .subsets()
                    .into_iter()
                    .map(|l| (l, nu_tensor(&table, l, m).unwrap()))
                    .collect();
                let full = table.margin_probs(m).unwrap();
                for cell in full.cells() {
                    let values: SubsetValues = nus
                        .iter()
                        .map(|(l, t)| (*l, t.get_broadcast(m, &cell)))
                        .collect();
                    let lambdas = mobius_forward(m, &values).map_err(|e| e.to_string())?;
                    let back = mobius_inverse(m, &lambdas).map_err(|e| e.to_string())?;
                    for (l, v) in &values {
                        worst_trip = worst_trip.max((back[l] - v).abs());
                    }
                }
                let set = expand_log_linear(&table, m).map_err(|e| e.to_string())?;
                let r = reconstruction_residuals(&table, m, &set).map_err(|e| e.to_string())?;
                worst_rec = worst_rec.max(r.log_p);
            }
            ensure!(worst_trip < 1e-12, "table {i}: roundtrip {worst_trip:e}");
            ensure!(worst_rec < 1e-9, "table {i}: reconstruction {worst_rec:e}");
        }
        Ok(format!(
            "roundtrip max {worst_trip:.2e}, reconstruction max {worst_rec:.2e}"
        ))
    })();
    report("3", "mobius/reconstruction", outcome);
}

fn vanishing_max(table: &Table, part: &Partition, mode: Mode) -> f64 {
    part.vanishing_family(mode)
        .into_iter()
        .map(|z| lambda_tensor(table, z, part.union()).unwrap().max_abs())
        .fold(0.0, f64::max)
}

#[test]
fn c04_independence_iff() {
    let outcome = (|| {
        let mut rng = rng(404);
        let mut worst_zero = 0.0_f64;
        let mut disagreements = 0;
        for i in 0..50 {
            let levels = random_levels(&mut rng, 3 + i % 2);
            let part = random_partition(&mut rng, VarSet::full(levels.len()));
            let table = independent_table(&levels, Mode::Conditional, part, rng.random());
            let lam = vanishing_max(&table, &part, Mode::Conditional);
            let fact = factorization_residual(&table, &part, Mode::Conditional)
                .unwrap()
                .max_abs();
            worst_zero = worst_zero.max(lam).max(fact);
            ensure!(
                lam < 1e-9 && fact < 1e-9,
                "CI table {i}: λ {lam:e}, factorization {fact:e}"
            );
            let v =
                test_independence(&table, &part, Mode::Conditional).map_err(|e| e.to_string())?;
            ensure!(v.verdict, "CI table {i} judged dependent");
            disagreements += usize::from(
                (v.lambda_evidence <= v.threshold) != (v.oracle_evidence <= v.threshold),
            );
        }
        let mut min_dep = f64::INFINITY;
        for i in 0..50 {
            let levels = random_levels(&mut rng, 3 + i % 2);
            let part = random_partition(&mut rng, VarSet::full(levels.len()));
            let pair = crossing_pair(&mut rng, part.a, part.b);
            let table = (0..)
                .map(|_| interaction_table(&levels, &[pair], rng.random()))
                .find(|t| lambda_tensor(t, pair, t.vars()).unwrap().max_abs() >= 1e-2)
                .unwrap();
            let v =
                test_independence(&table, &part, Mode::Conditional).map_err(|e| e.to_string())?;
            ensure!(
                !v.verdict && v.lambda_evidence > v.threshold && v.oracle_evidence > v.threshold,
                "interaction table {i} not rejected by both evidences"
            );
            min_dep = min_dep.min(v.lambda_evidence.min(v.oracle_evidence));
            disagreements += usize::from(
                (v.lambda_evidence <= v.threshold) != (v.oracle_evidence <= v.threshold),
            );
        }
        ensure!(disagreements == 0, "{disagreements} disagreements");
        Ok(format!(
            "CI max {worst_zero:.2e}, dependent min evidence {min_dep:.2e}, 0 disagreements"
        ))
    })();
    report("4", "independence iff", outcome);
}

#[test]
fn c05_transfer() {
    let outcome = (|| {
        let mut rng = rng(505);
        let mut worst = 0.0_f64;
        for i in 0..50 {
            let levels = random_levels(&mut rng, 3 + i % 2);
            let part = random_partition(&mut rng, VarSet::full(levels.len()));
            let table = independent_table(&levels, Mode::Conditional, part, rng.random());
            for d in part.c.subsets() {
                let t = transfer_check(&table, &part, d).map_err(|e| e.to_string())?;
                ensure!(t.premise, "table {i}: premise judged false");
                worst = worst.max(t.residual);
                ensure!(t.residual < 1e-8, "table {i}, D = {d}: {:e}", t.residual);
            }
        }
        Ok(format!("max residual {worst:.2e}"))
    })();
    report("5", "transfer", outcome);
}

/// A collapse instance: either a random table, or a conditional-independence
/// table collapsed over its B block so some effects really do collapse.
struct Instance {
    table: Table,
    effect: VarSet,
    margin: VarSet,
    outer: VarSet,
}

fn instance(rng: &mut ChaCha8Rng, i: usize) -> Instance {
    let n = 3 + i % 2;
    if i.is_multiple_of(2) {
        let table = random_table(rng, n);
        let vars = table.vars();
        let outer = loop {
            let o = random_nonempty(rng, vars);
            if o.len() >= 2 {
                break o;
            }
        };
        let margin = loop {
            let m = random_nonempty(rng, outer);
            if m != outer {
                break m;
            }
        };
        let effect = random_nonempty(rng, margin);
        Instance {
            table,
            effect,
            margin,
            outer,
        }
    } else {
        let levels = random_levels(rng, n);
        let part = random_partition(rng, VarSet::full(n));
        let table = independent_table(&levels, Mode::Conditional, part, rng.random());
        let margin = part.a.union(part.c);
        // Effects meeting A collapse; others generally do not.
        let effect =
            random_nonempty(rng, part.a).union(random_nonempty(rng, margin).intersection(part.c));
        let effect = if rng.random_bool(0.25) {
            random_nonempty(rng, part.c)
        } else {
            effect
        };
        Instance {
            table,
            effect,
            margin,
            outer: VarSet::full(n),
        }
    }
}

fn run_check(q: &CollapseQuery, t: &Table, breaches: &mut usize) -> Result<CollapseReport, String> {
    match check(q, t) {
        Ok(r) => Ok(r),
        Err(e @ MllError::EquivalenceBreach(_)) => {
            *breaches += 1;
            Err(e.to_string())
        }
        Err(e) => Err(e.to_string()),
    }
}

#[test]
fn c06_collapsibility_conditions() {
    let outcome = (|| {
        let mut rng = rng(606);
        let (mut worst, mut held, mut breaches) = (0.0_f64, 0, 0);
        for i in 0..100 {
            let inst = instance(&mut rng, i);
            let q = CollapseQuery::new(inst.effect, inst.margin, inst.outer);
            let r = run_check(&q, &inst.table, &mut breaches)?;
            let c = |name| r.condition(name).unwrap();
            let (d, g, a) = (c("delta"), c("dtilde_gap"), c("alternating_sum"));
            ensure!(
                d.holds == g.holds && g.holds == a.holds && a.holds == r.verdict,
                "instance {i}: verdicts differ ({} {} {})",
                d.holds,
                g.holds,
                a.holds
            );
            let gap = (d.residual - a.residual).abs();
            worst = worst.max(gap);
            ensure!(
                gap < 1e-7,
                "instance {i}: (i) and (iii) residuals differ by {gap:e}"
            );
            held += usize::from(r.verdict);
        }
        Ok(format!(
            "{held}/100 collapsible, max (i)-(iii) gap {worst:.2e}, {breaches} breaches"
        ))
    })();
    report("6", "collapsibility conditions", outcome);
}

fn direct_threshold(t: &Table) -> f64 {
    1e-8 * t.log_scale() * 16.0
}

fn lambda_agrees(t: &Table, effect: VarSet, margin: VarSet, outer: VarSet) -> bool {
    diff(
        &lambda_tensor(t, effect, margin).unwrap(),
        &lambda_tensor(t, effect, outer).unwrap(),
    ) < direct_threshold(t)
}

fn strict_direct(t: &Table, effect: VarSet, margin: VarSet, outer: VarSet) -> bool {
    lambda_agrees(t, effect, margin, outer)
        && effect
            .supersets_within(outer)
            .into_iter()
            .filter(|z| *z != effect && !z.is_subset(margin))
            .all(|z| lambda_tensor(t, z, outer).unwrap().max_abs() < direct_threshold(t))
}

fn interval(core: VarSet, effect: VarSet) -> Vec<VarSet> {
    core.supersets_within(effect)
}

#[test]
fn c07_family_and_strict_equivalences() {
    let outcome = (|| {
        let mut rng = rng(707);
        let mut breaches = 0;
        let mut held = [0usize; 3];
        for i in 0..100 {
            let inst = instance(&mut rng, i);
            let (t, l, m, n) = (&inst.table, inst.effect, inst.margin, inst.outer);
            let core = random_nonempty(&mut rng, l);

            let set = run_check(
                &CollapseQuery::new(l, m, n).with_core(core),
                t,
                &mut breaches,
            )?;
            let direct = interval(core, l)
                .into_iter()
                .all(|a| lambda_agrees(t, a, m, n));
            ensure!(
                set.verdict == direct,
                "instance {i}: family verdict {} vs direct {direct}",
                set.verdict
            );
            held[0] += usize::from(direct);

            let strict = run_check(&CollapseQuery::new(l, m, n).strict(), t, &mut breaches)?;
            let direct = strict_direct(t, l, m, n);
            ensure!(
                strict.verdict == direct,
                "instance {i}: strict verdict {} vs direct {direct}",
                strict.verdict
            );
            held[1] += usize::from(direct);

            let both = run_check(
                &CollapseQuery::new(l, m, n).with_core(core).strict(),
                t,
                &mut breaches,
            )?;
            let direct = interval(core, l)
                .into_iter()
                .all(|a| strict_direct(t, a, m, n));
            ensure!(
                both.verdict == direct,
                "instance {i}: strict family verdict {} vs direct {direct}",
                both.verdict
            );
            held[2] += usize::from(direct);
        }
        ensure!(breaches == 0, "{breaches} equivalence breaches");
        Ok(format!(
            "true verdicts family {}/100, strict {}/100, strict family {}/100, 0 breaches",
            held[0], held[1], held[2]
        ))
    })();
    report("7", "family/strict equivalences", outcome);
}

fn reverse_pair(rng: &mut ChaCha8Rng, part: &Partition, mode: Mode) -> VarSet {
    match mode {
        Mode::Conditional => crossing_pair(rng, part.a, part.b),
        Mode::Joint => crossing_pair(rng, part.a, part.b.union(part.c)),
        Mode::Mutual => crossing_pair(rng, part.b, part.c),
    }
}

#[test]
fn c08_independence_as_strict_collapse() {
    let outcome = (|| {
        let mut rng = rng(808);
        let mut counts = Vec::new();
        for mode in Mode::ALL {
            for i in 0..30 {
                // The first five instances are the three-binary-variable settings.
                let (levels, part) = if i < 5 {
                    (vec![2, 2, 2], Partition::new(s(&[1]), s(&[2]), s(&[3])))
                } else {
                    let levels = random_levels(&mut rng, 3 + i % 2);
                    let part = random_partition(&mut rng, VarSet::full(levels.len()));
                    (levels, part)
                };
                let table = independent_table(&levels, mode, part, rng.random());
                let r = independence_suite(&table, &part, mode).map_err(|e| e.to_string())?;
                ensure!(
                    r.independence && r.strict_collapse && r.equivalence_ok,
                    "{mode:?} forward {i}: {r:?}"
                );

                let pair = reverse_pair(&mut rng, &part, mode);
                let table = (0..)
                    .map(|_| interaction_table(&levels, &[pair], rng.random()))
                    .find(|t| lambda_tensor(t, pair, t.vars()).unwrap().max_abs() >= 1e-2)
                    .unwrap();
                let r = independence_suite(&table, &part, mode).map_err(|e| e.to_string())?;
                ensure!(
                    !r.independence && !r.strict_collapse && r.equivalence_ok,
                    "{mode:?} reverse {i}: {r:?}"
                );
            }
            counts.push(format!("{mode:?} 30+30"));
        }
        Ok(counts.join(", "))
    })();
    report("8", "independence as strict collapse", outcome);
}

/// The table with the same `p(A | B)` and a fresh marginal for `B`.
fn remix_given(table: &Table, target: VarSet, given: VarSet, rng: &mut ChaCha8Rng) -> Table {
    let cond = table.condition(target, given).unwrap();
    let joint = target.union(given);
    assert_eq!(joint, table.vars());
    let q_levels = table.probs().levels_for(given);
    let q = Tensor::from_fn(given, q_levels, |_| rng.random_range(0.1..1.0));
    let w = Tensor::from_fn(joint, table.levels().to_vec(), |cell| {
        cond.values().get(cell) * q.get_broadcast(joint, cell)
    });
    Table::new(table.levels(), w.into_data()).unwrap()
}

#[test]
fn c09_decomposition() {
    let outcome = (|| {
        let mut rng = rng(909);
        let (mut worst_sum, mut worst_only) = (0.0_f64, 0.0_f64);
        for i in 0..50 {
            let table = random_table(&mut rng, 3 + i % 2);
            let vars = table.vars();
            let target = loop {
                let a = random_nonempty(&mut rng, vars);
                if a != vars {
                    break a;
                }
            };
            let given = vars.difference(target);
            let effect = random_nonempty(&mut rng, vars);
            let d = decompose_lambda(&table, effect, target, given).map_err(|e| e.to_string())?;
            worst_sum = worst_sum.max(d.residual);
            ensure!(d.residual < 1e-9, "table {i}: residual {:e}", d.residual);
            if effect.is_subset(given) {
                let direct = lambda_tensor(&table, effect, given).unwrap();
                ensure!(
                    diff(&direct, &d.lambda_given) < 1e-12,
                    "table {i}: marginal part is not λ_L^B"
                );
            }
            let other = remix_given(&table, target, given, &mut rng);
            let d2 = decompose_lambda(&other, effect, target, given).map_err(|e| e.to_string())?;
            let moved = diff(&d.conditional, &d2.conditional);
            worst_only = worst_only.max(moved);
            ensure!(
                moved < 1e-12,
                "table {i}: conditional part moved by {moved:e} with p(A|B) fixed"
            );
        }

        let mut worst_zero = 0.0_f64;
        for i in 0..30 {
            let n = 3 + i % 2;
            let levels = random_levels(&mut rng, n);
            let mut ids: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut ids[..], &mut rng);
            let target = VarSet::singleton(ids[0]);
            let v = ids[1];
            let rest = VarSet::from_ids(ids[2..].iter().copied());
            let part = Partition::new(target, VarSet::singleton(v), rest);
            let table = independent_table(&levels, Mode::Conditional, part, rng.random());
            let given = rest.insert(v);
            let effect = random_nonempty(&mut rng, table.vars()).insert(v);
            let d = decompose_lambda(&table, effect, target, given).map_err(|e| e.to_string())?;
            let f = d.conditional.max_abs();
            worst_zero = worst_zero.max(f);
            ensure!(f < 1e-9, "CI table {i}: |f| = {f:e}");
        }

        let mut worst_53 = 0.0_f64;
        for i in 0..30 {
            let n = 3 + i % 2;
            let levels = random_levels(&mut rng, n);
            let part = random_partition(&mut rng, VarSet::full(n));
            let v = part.b.iter().next().unwrap();
            let part = Partition::new(part.a, VarSet::singleton(v), part.c.union(part.b.remove(v)));
            let table = independent_table(&levels, Mode::Conditional, part, rng.random());
            let r = removal_check(&table, part.a, v).map_err(|e| e.to_string())?;
            ensure!(r.premise, "table {i}: premise judged false");
            ensure!(r.holds == Some(true), "table {i}: asserted equalities fail");
            for c in &r.asserted {
                worst_53 = worst_53.max(c.residual);
                ensure!(
                    c.residual < 1e-8,
                    "table {i}: {} residual {:e}",
                    c.effect,
                    c.residual
                );
            }
        }
        Ok(format!(
            "sum max {worst_sum:.2e}, p(A|B)-only max {worst_only:.2e}, CI |f| max {worst_zero:.2e}, removal max {worst_53:.2e}"
        ))
    })();
    report("9", "decomposition", outcome);
}

#[test]
fn c10_upward_compatibility() {
    let outcome = (|| {
        let mut rng = rng(1010);
        let mut worst = 0.0_f64;
        for i in 0..50 {
            let table = random_table(&mut rng, 2 + i % 3);
            for l in table.vars().subsets() {
                let own = lambda_tensor(&table, l, l).unwrap();
                for outer in l.supersets_within(table.vars()) {
                    let via = logistic_via(&table, l, outer).map_err(|e| e.to_string())?;
                    let gap = diff(&own, &via);
                    worst = worst.max(gap);
                    ensure!(gap < 1e-10, "table {i}: λ_{l} via {outer} off by {gap:e}");
                }
            }
        }
        let mut worst_closed = 0.0_f64;
        for _ in 0..50 {
            let t = generate(&GenSpec::random(&[2, 2], rng.random())).unwrap();
            let p = |a, b| t.prob(&[a, b]).unwrap();
            let closed = 0.25 * (p(0, 0) * p(1, 1) / (p(0, 1) * p(1, 0))).ln();
            let engine = lambda(&t, s(&[1, 2]), s(&[1, 2]), &[0, 0]).unwrap();
            worst_closed = worst_closed.max((closed - engine).abs());
            ensure!(
                (closed - engine).abs() < 1e-10,
                "2x2 closed form off by {:e}",
                (closed - engine).abs()
            );
        }
        Ok(format!(
            "super-margin max {worst:.2e}, 2x2 closed form max {worst_closed:.2e}"
        ))
    })();
    report("10", "upward compatibility", outcome);
}

#[test]
fn c11_kappa_probe() {
    let outcome = (|| {
        let table = Table::new(&[2], vec![0.5, 0.5]).unwrap();
        let sides = kappa_sides(&table, s(&[1]), s(&[1]), &[0]).map_err(|e| e.to_string())?;
        ensure!(sides.lhs.abs() < 1e-12, "lhs {}", sides.lhs);
        ensure!((sides.rhs - 2f64.ln()).abs() < 1e-12, "rhs {}", sides.rhs);
        let archive = serde_json::json!({
            "table": io::TableFile::from_table(&table),
            "effect": s(&[1]),
            "margin": s(&[1]),
            "cell": [0],
            "lhs": sides.lhs,
            "rhs": sides.rhs,
            "gap": sides.gap(),
        });
        let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("kappa_probe.json");
        std::fs::write(&path, serde_json::to_string_pretty(&archive).unwrap())
            .map_err(|e| e.to_string())?;
        Ok(format!(
            "lhs {:.3e}, rhs {:.12} (gap {:.12}), archived to {}",
            sides.lhs,
            sides.rhs,
            sides.gap(),
            path.display()
        ))
    })();
    report("11", "kappa probe", outcome);
}

fn mll(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mll"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn one_based(v: VarSet) -> String {
    v.one_based()
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn levels_arg(levels: &[usize]) -> String {
    levels
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn bitwise_equal(a: &Table, b: &Table) -> bool {
    a.levels() == b.levels()
        && a.probs()
            .data()
            .iter()
            .zip(b.probs().data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn c12_cli_roundtrip() {
    let outcome = (|| {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rng(1212);
        let modes = [
            ("random", None),
            ("conditional_indep", Some(Mode::Conditional)),
            ("joint_indep", Some(Mode::Joint)),
            ("mutual_indep", Some(Mode::Mutual)),
        ];
        for i in 0..10 {
            let (mode_name, mode) = modes[i % modes.len()];
            let n = 3 + i % 2;
            let levels = random_levels(&mut rng, n);
            let part = random_partition(&mut rng, VarSet::full(n));
            let seed: u64 = rng.random_range(0..1_000_000);
            let spec = match mode {
                Some(m) => GenSpec::independent(&levels, m, part, seed),
                None => GenSpec::random(&levels, seed),
            };
            let expected = generate(&spec).unwrap();

            let file = dir
                .path()
                .join(format!("t{i}.{}", if i % 3 == 2 { "csv" } else { "json" }));
            let file_s = file.to_str().unwrap();
            let mut args = vec![
                "gen".to_string(),
                "--mode".into(),
                mode_name.into(),
                "--levels".into(),
                levels_arg(&levels),
                "--seed".into(),
                seed.to_string(),
                "-o".into(),
                file_s.into(),
            ];
            if mode.is_some() {
                for (flag, block) in [("--A", part.a), ("--B", part.b), ("--C", part.c)] {
                    args.push(flag.into());
                    args.push(one_based(block));
                }
            }
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            let (code, out, err) = mll(&args);
            ensure!(code == 0, "scenario {i}: gen exit {code}: {err}");
            let gen_report: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
            ensure!(
                gen_report["result"]["spec"] == serde_json::to_value(&spec).unwrap(),
                "scenario {i}: spec echo differs"
            );

            let parsed = io::parse_table(&file, None).map_err(|e| e.to_string())?;
            ensure!(
                bitwise_equal(&parsed, &expected),
                "scenario {i}: parsed table differs"
            );

            // Collapse over the B block onto A ∪ C w.r.t. an effect meeting A.
            let margin = part.a.union(part.c);
            let effect = part.a;
            let q = CollapseQuery::new(effect, margin, expected.vars()).strict();
            let in_memory = check(&q, &expected).map_err(|e| e.to_string())?;
            let (code, out, err) = mll(&[
                "collapse",
                "--table",
                file_s,
                "--effect",
                &one_based(effect),
                "--margin",
                &one_based(margin),
                "--super",
                &one_based(expected.vars()),
                "--strict",
            ]);
            ensure!(code == 0, "scenario {i}: collapse exit {code}: {err}");
            let got: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
            ensure!(
                got["result"] == serde_json::to_value(&in_memory).unwrap(),
                "scenario {i}: collapse report differs"
            );
            ensure!(
                got["inputs"][0]["sha256"]
                    == io::InputDigest::of_file(&file).unwrap().sha256.as_str(),
                "scenario {i}: input digest differs"
            );

            let imode = mode.unwrap_or(Mode::Conditional);
            let in_memory =
                test_independence(&expected, &part, imode).map_err(|e| e.to_string())?;
            let mode_flag = format!("{imode:?}").to_lowercase();
            let (code, out, err) = mll(&[
                "independence",
                "--table",
                file_s,
                "--mode",
                &mode_flag,
                "--A",
                &one_based(part.a),
                "--B",
                &one_based(part.b),
                "--C",
                &one_based(part.c),
            ]);
            ensure!(code == 0, "scenario {i}: independence exit {code}: {err}");
            let got: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
            ensure!(
                got["result"]["verdict"] == serde_json::to_value(&in_memory).unwrap(),
                "scenario {i}: independence report differs"
            );
            if mode.is_some() {
                ensure!(
                    in_memory.verdict,
                    "scenario {i}: generated independence not recovered"
                );
            }
        }

        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, "{\"variables\": [").unwrap();
        let bad_s = bad.to_str().unwrap();
        let codes = [
            (mll(&["--help"]).0, 0, "help"),
            (mll(&["--version"]).0, 0, "version"),
            (mll(&["frobnicate"]).0, 1, "unknown command"),
            (mll(&["collapse", "--table", bad_s]).0, 1, "missing flags"),
            (
                mll(&["params", "--table", bad_s, "--effect", "0"]).0,
                1,
                "variable 0",
            ),
            (mll(&["params", "--table", bad_s]).0, 2, "malformed file"),
            (
                mll(&["params", "--table", "/nonexistent/t.json"]).0,
                2,
                "missing file",
            ),
            (
                mll(&["--tol", "-1", "params", "--table", bad_s]).0,
                1,
                "negative tolerance",
            ),
        ];
        for (got, want, what) in codes {
            ensure!(got == want, "{what}: exit {got}, expected {want}");
        }
        ensure!(
            mll_core::cli::exit_code(&MllError::EquivalenceBreach("probe".into())) == 3,
            "breach does not map to exit 3"
        );
        Ok("10 scenarios bitwise identical; exit codes 0/1/2/3 conform".into())
    })();
    report("12", "CLI round-trip", outcome);
}

#[test]
fn tolerance_defaults() {
    let t = Tolerance::default();
    assert_eq!((t.eq, t.floor), (1e-8, 1e-10));
}
