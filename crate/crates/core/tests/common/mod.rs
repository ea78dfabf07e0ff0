#![allow(dead_code)]

use std::io::Write;

use mll_core::generator::{generate, GenSpec, Interaction};
use mll_core::independence::{Mode, Partition};
use mll_core::{Table, VarSet};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_CELLS: usize = 54;

pub fn s(ids: &[usize]) -> VarSet {
    VarSet::from_one_based(ids.iter().copied()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Levels in {2, 3} for `n` variables, trimmed to at most [`MAX_CELLS`] cells.
pub fn random_levels(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut levels: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
    for i in (0..n).rev() {
        if levels.iter().product::<usize>() <= MAX_CELLS {
            break;
        }
        levels[i] = 2;
    }
    levels
}

pub fn random_table(rng: &mut ChaCha8Rng, n: usize) -> Table {
    let levels = random_levels(rng, n);
    generate(&GenSpec::random(&levels, rng.random())).unwrap()
}

/// Random nonempty subset of `of`.
pub fn random_nonempty(rng: &mut ChaCha8Rng, of: VarSet) -> VarSet {
    let subsets: Vec<VarSet> = of.subsets().into_iter().filter(|x| !x.is_empty()).collect();
    *subsets.choose(rng).unwrap()
}

/// Assigns the variables of `vars` to three nonempty blocks.
pub fn random_partition(rng: &mut ChaCha8Rng, vars: VarSet) -> Partition {
    let mut ids: Vec<usize> = vars.iter().collect();
    assert!(ids.len() >= 3);
    ids.shuffle(rng);
    let mut blocks = [VarSet::EMPTY; 3];
    for (i, &id) in ids.iter().enumerate() {
        let b = if i < 3 { i } else { rng.random_range(0..3) };
        blocks[b] = blocks[b].insert(id);
    }
    Partition::new(blocks[0], blocks[1], blocks[2])
}

pub fn independent_table(levels: &[usize], mode: Mode, part: Partition, seed: u64) -> Table {
    generate(&GenSpec::independent(levels, mode, part, seed)).unwrap()
}

/// Log-linear table with a random interaction over each of `effects`.
pub fn interaction_table(levels: &[usize], effects: &[VarSet], seed: u64) -> Table {
    let interactions = effects.iter().map(|&e| Interaction::random(e)).collect();
    generate(&GenSpec::loglinear(levels, interactions, seed)).unwrap()
}

/// A pair `{x, y}` with `x ∈ left`, `y ∈ right`.
pub fn crossing_pair(rng: &mut ChaCha8Rng, left: VarSet, right: VarSet) -> VarSet {
    let l: Vec<usize> = left.iter().collect();
    let r: Vec<usize> = right.iter().collect();
    VarSet::from_ids([*l.choose(rng).unwrap(), *r.choose(rng).unwrap()])
}

/// Prints one outcome line past the test harness capture and fails on error.
pub fn report(id: &str, name: &str, outcome: Result<String, String>) {
    let line = match &outcome {
        Ok(detail) => format!("criterion {id:>2} PASS  {name}: {detail}\n"),
        Err(why) => format!("criterion {id:>2} FAIL  {name}: {why}\n"),
    };
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    if let Err(why) = outcome {
        panic!("{name}: {why}");
    }
}

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($fmt)+)),
        }
    };
}
