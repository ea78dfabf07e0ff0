//! Seeded synthesis of tables: random positive, factorized under an
//! independence pattern, or assembled from prescribed interactions.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so a spec
//! determines its table bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MllError, Result};
use crate::independence::{Mode, Partition};
use crate::table::Table;
use crate::tensor::Tensor;
use crate::varset::VarSet;

/// Largest zero-sum residual accepted after centering.
pub const CENTERING_TOL: f64 = 1e-12;
const CENTERING_ROUNDS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    Random,
    ConditionalIndep,
    JointIndep,
    MutualIndep,
    FromLoglinear,
}

impl GenMode {
    fn independence(self) -> Option<Mode> {
        match self {
            GenMode::ConditionalIndep => Some(Mode::Conditional),
            GenMode::JointIndep => Some(Mode::Joint),
            GenMode::MutualIndep => Some(Mode::Mutual),
            _ => None,
        }
    }
}

/// A prescribed interaction over `effect`. Missing values are drawn from the
/// spec's generator, scaled by its concentration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub effect: VarSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Interaction {
    pub fn random(effect: VarSet) -> Self {
        Interaction {
            effect,
            values: None,
        }
    }

    pub fn fixed(effect: VarSet, values: Vec<f64>) -> Self {
        Interaction {
            effect,
            values: Some(values),
        }
    }
}

fn default_concentration() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub levels: Vec<usize>,
    pub mode: GenMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interactions: Vec<Interaction>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concentration")]
    pub concentration: f64,
}

impl GenSpec {
    pub fn random(levels: &[usize], seed: u64) -> Self {
        GenSpec {
            levels: levels.to_vec(),
            mode: GenMode::Random,
            partition: None,
            interactions: Vec::new(),
            seed,
            concentration: 1.0,
        }
    }

    pub fn independent(levels: &[usize], mode: Mode, partition: Partition, seed: u64) -> Self {
        let mode = match mode {
            Mode::Conditional => GenMode::ConditionalIndep,
            Mode::Joint => GenMode::JointIndep,
            Mode::Mutual => GenMode::MutualIndep,
        };
        GenSpec {
            partition: Some(partition),
            mode,
            ..GenSpec::random(levels, seed)
        }
    }

    pub fn loglinear(levels: &[usize], interactions: Vec<Interaction>, seed: u64) -> Self {
        GenSpec {
            mode: GenMode::FromLoglinear,
            interactions,
            ..GenSpec::random(levels, seed)
        }
    }

    pub fn with_concentration(mut self, concentration: f64) -> Self {
        self.concentration = concentration;
        self
    }

    pub fn vars(&self) -> VarSet {
        VarSet::full(self.levels.len())
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(MllError::SpecInvalid(m));
        if self.levels.is_empty() || self.levels.len() > crate::varset::MAX_VARS {
            return invalid(format!("{} variables", self.levels.len()));
        }
        if self.levels.iter().any(|&l| l < 2) {
            return invalid("every variable needs at least 2 levels".into());
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return invalid(format!(
                "concentration {} must be positive",
                self.concentration
            ));
        }
        let vars = self.vars();
        match self.mode.independence() {
            Some(mode) => {
                let part = self.partition.ok_or_else(|| {
                    MllError::SpecInvalid("independence mode needs a partition".into())
                })?;
                part.validate(vars, mode)
                    .map_err(|e| MllError::SpecInvalid(e.to_string()))?;
                if part.union() != vars {
                    return invalid(format!("partition must cover all variables {vars}"));
                }
            }
            None if self.partition.is_some() => {
                return invalid("partition given for a mode that does not use one".into());
            }
            None => {}
        }
        if self.mode != GenMode::FromLoglinear && !self.interactions.is_empty() {
            return invalid("interactions are only used by from_loglinear".into());
        }
        for (i, inter) in self.interactions.iter().enumerate() {
            if inter.effect.is_empty() || !inter.effect.is_subset(vars) {
                return invalid(format!(
                    "interaction effect {} not a non-empty subset of {vars}",
                    inter.effect
                ));
            }
            if self.interactions[..i]
                .iter()
                .any(|o| o.effect == inter.effect)
            {
                return invalid(format!("interaction {} given twice", inter.effect));
            }
            if let Some(values) = &inter.values {
                let expected: usize = inter.effect.iter().map(|v| self.levels[v]).product();
                if values.len() != expected {
                    return invalid(format!(
                        "interaction {} needs {expected} values, found {}",
                        inter.effect,
                        values.len()
                    ));
                }
                if values.iter().any(|x| !x.is_finite()) {
                    return invalid(format!(
                        "interaction {} has non-finite values",
                        inter.effect
                    ));
                }
            }
        }
        Ok(())
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    concentration: f64,
}

impl Sampler {
    fn new(seed: u64, concentration: f64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            concentration,
        }
    }

    fn unit(&mut self) -> f64 {
        self.rng.random_range(-1.0..=1.0)
    }

    /// Positive weights `exp(c·u)` over the cells of `vars`.
    fn weights(&mut self, vars: VarSet, levels: &[usize]) -> Tensor {
        let lv: Vec<usize> = vars.iter().map(|v| levels[v]).collect();
        Tensor::from_fn(vars, lv, |_| (self.concentration * self.unit()).exp())
    }

    /// Interaction values `c·u` over the cells of `effect`.
    fn draw(&mut self, effect: VarSet, levels: Vec<usize>) -> Tensor {
        let c = self.concentration;
        Tensor::from_fn(effect, levels, |_| c * self.unit())
    }

    /// `p(x_target | x_given)` as a tensor over `target ∪ given`.
    fn conditional(&mut self, target: VarSet, given: VarSet, levels: &[usize]) -> Tensor {
        let w = self.weights(target.union(given), levels);
        let norm = w.sum_to(given);
        let vars = w.vars();
        Tensor::from_fn(vars, w.levels().to_vec(), |cell| {
            w.get(cell) / norm.get_broadcast(vars, cell)
        })
    }
}

fn product(vars: VarSet, levels: &[usize], factors: &[Tensor]) -> Vec<f64> {
    let lv: Vec<usize> = vars.iter().map(|v| levels[v]).collect();
    Tensor::from_fn(vars, lv, |cell| {
        factors
            .iter()
            .map(|f| f.get_broadcast(vars, cell))
            .product()
    })
    .into_data()
}

/// Builds the table a spec describes.
pub fn generate(spec: &GenSpec) -> Result<Table> {
    spec.validate()?;
    let vars = spec.vars();
    let levels = &spec.levels;
    let mut s = Sampler::new(spec.seed, spec.concentration);
    let weights = match spec.mode {
        GenMode::Random => s.weights(vars, levels).into_data(),
        GenMode::ConditionalIndep => {
            let p = spec.partition.unwrap();
            let pc = s.weights(p.c, levels);
            let pa = s.conditional(p.a, p.c, levels);
            let pb = s.conditional(p.b, p.c, levels);
            product(vars, levels, &[pc, pa, pb])
        }
        GenMode::JointIndep => {
            let p = spec.partition.unwrap();
            let pa = s.weights(p.a, levels);
            let pbc = s.weights(p.b.union(p.c), levels);
            product(vars, levels, &[pa, pbc])
        }
        GenMode::MutualIndep => {
            let p = spec.partition.unwrap();
            let pa = s.weights(p.a, levels);
            let pb = s.weights(p.b, levels);
            let pc = s.weights(p.c, levels);
            product(vars, levels, &[pa, pb, pc])
        }
        GenMode::FromLoglinear => {
            let terms = centered_interactions(spec, &mut s)?;
            let lv = levels.clone();
            Tensor::from_fn(vars, lv, |cell| {
                terms
                    .iter()
                    .map(|t| t.get_broadcast(vars, cell))
                    .sum::<f64>()
                    .exp()
            })
            .into_data()
        }
    };
    Table::new(levels, weights)
}

/// The interactions of a from-loglinear spec, drawn where unspecified and
/// centered to zero sums over every coordinate.
fn centered_interactions(spec: &GenSpec, sampler: &mut Sampler) -> Result<Vec<Tensor>> {
    spec.interactions
        .iter()
        .map(|inter| {
            let lv: Vec<usize> = inter.effect.iter().map(|v| spec.levels[v]).collect();
            let raw = match &inter.values {
                Some(values) => Tensor::new(inter.effect, lv, values.clone())?,
                None => sampler.draw(inter.effect, lv),
            };
            center(raw)
        })
        .collect()
}

/// The centered interactions a from-loglinear spec expands to, in listing
/// order. Drawing follows the same sequence as [`generate`].
pub fn prescribed_interactions(spec: &GenSpec) -> Result<Vec<Tensor>> {
    spec.validate()?;
    let mut s = Sampler::new(spec.seed, spec.concentration);
    centered_interactions(spec, &mut s)
}

/// Largest `|Σ_{x_v} t|` over coordinates `v` and the remaining cells.
pub fn zero_sum_gap(t: &Tensor) -> f64 {
    t.vars()
        .iter()
        .map(|v| t.sum_to(t.vars().remove(v)).max_abs())
        .fold(0.0, f64::max)
}

/// Subtracts coordinate means until every coordinate sums to zero.
pub fn center(mut t: Tensor) -> Result<Tensor> {
    let vars = t.vars();
    for _ in 0..CENTERING_ROUNDS {
        if zero_sum_gap(&t) < CENTERING_TOL {
            return Ok(t);
        }
        for v in vars.iter() {
            let mean = t.mean_to(vars.remove(v));
            let lv = t.levels().to_vec();
            t = Tensor::from_fn(vars, lv, |cell| {
                t.get(cell) - mean.get_broadcast(vars, cell)
            });
        }
    }
    if zero_sum_gap(&t) < CENTERING_TOL {
        Ok(t)
    } else {
        Err(MllError::NonCentered(vars))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    Found {
        attempt: usize,
        spec: GenSpec,
        table: Table,
    },
    NotFound {
        attempts: usize,
    },
}

impl Witness {
    pub fn table(&self) -> Option<&Table> {
        match self {
            Witness::Found { table, .. } => Some(table),
            Witness::NotFound { .. } => None,
        }
    }
}

/// Generates `family(0), family(1), …` up to `budget` specs and returns the
/// first table satisfying `predicate`.
pub fn find_witness(
    mut family: impl FnMut(usize) -> GenSpec,
    mut predicate: impl FnMut(&Table) -> bool,
    budget: usize,
) -> Result<Witness> {
    for attempt in 0..budget {
        let spec = family(attempt);
        let table = generate(&spec)?;
        if predicate(&table) {
            return Ok(Witness::Found {
                attempt,
                spec,
                table,
            });
        }
    }
    Ok(Witness::NotFound { attempts: budget })
}

/// The family `base` with seeds `base.seed + attempt`.
pub fn seed_family(base: GenSpec) -> impl FnMut(usize) -> GenSpec {
    move |attempt| GenSpec {
        seed: base.seed.wrapping_add(attempt as u64),
        ..base.clone()
    }
}
