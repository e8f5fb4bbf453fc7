//! Variable partitions and the named models they instantiate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::computation::{Label, ProcId, Var};
use crate::error::{Error, Result};

/// A partition `K = {V_1, ..., V_m}` of a subset of the variable universe.
/// Class `i` (1-based) yields broadcast label `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartitionSpec {
    classes: Vec<BTreeSet<Var>>,
}

impl PartitionSpec {
    pub fn new(classes: Vec<BTreeSet<Var>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::BadPartition(format!("class {} is empty", i + 1)));
            }
            for v in class {
                if !seen.insert(v.clone()) {
                    return Err(Error::BadPartition(format!("variable {v} is in two classes")));
                }
            }
        }
        Ok(PartitionSpec { classes })
    }

    /// The empty partition (no agreement beyond program order).
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn classes(&self) -> &[BTreeSet<Var>] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, index: u32) -> Option<&BTreeSet<Var>> {
        (index as usize)
            .checked_sub(1)
            .and_then(|i| self.classes.get(i))
    }

    /// `L(K)`: the class indices `1..=m`.
    pub fn labels(&self) -> Vec<Label> {
        (1..=self.classes.len() as u32).map(Label::Class).collect()
    }

    /// Label of the class containing `var`, or the null label.
    pub fn label_of(&self, var: &Var) -> Label {
        self.classes
            .iter()
            .position(|c| c.contains(var))
            .map_or(Label::Null, |i| Label::Class(i as u32 + 1))
    }

    /// Checks every class lies within `universe`.
    pub fn check_universe(&self, universe: &BTreeSet<Var>) -> Result<()> {
        for v in self.classes.iter().flatten() {
            if !universe.contains(v) {
                return Err(Error::BadPartition(format!("{v} is outside the variable universe")));
            }
        }
        Ok(())
    }

    /// Partition with class `index` removed; later classes shift down.
    pub fn without_class(&self, index: u32) -> PartitionSpec {
        let mut classes = self.classes.clone();
        if let Some(i) = (index as usize).checked_sub(1) {
            if i < classes.len() {
                classes.remove(i);
            }
        }
        PartitionSpec { classes }
    }
}

impl fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, class) in self.classes.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str("{")?;
            for (j, v) in class.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str("}")?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelName {
    Sc,
    Pram,
    PcG,
    WeakSc,
    WeakPcG,
    Custom(PartitionSpec),
}

impl ModelName {
    pub const NAMED: [ModelName; 5] = [
        ModelName::Sc,
        ModelName::Pram,
        ModelName::PcG,
        ModelName::WeakSc,
        ModelName::WeakPcG,
    ];

    pub fn short_name(&self) -> &'static str {
        match self {
            ModelName::Sc => "sc",
            ModelName::Pram => "pram",
            ModelName::PcG => "pcg",
            ModelName::WeakSc => "weaksc",
            ModelName::WeakPcG => "weakpcg",
            ModelName::Custom(_) => "custom",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelName::Custom(k) => write!(f, "custom{k}"),
            other => f.write_str(other.short_name()),
        }
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(ModelName::Sc),
            "pram" | "p-ram" => Ok(ModelName::Pram),
            "pcg" | "pc-g" => Ok(ModelName::PcG),
            "weaksc" => Ok(ModelName::WeakSc),
            "weakpcg" | "weakpc-g" => Ok(ModelName::WeakPcG),
            other => Err(Error::BadPartition(format!("unknown model {other:?}"))),
        }
    }
}

/// Variables syntactically written by at least two distinct processes.
pub fn multi_writer_vars<I>(write_sites: I) -> BTreeSet<Var>
where
    I: IntoIterator<Item = (ProcId, Var)>,
{
    let mut writers: BTreeMap<Var, BTreeSet<ProcId>> = BTreeMap::new();
    for (p, v) in write_sites {
        writers.entry(v).or_default().insert(p);
    }
    writers
        .into_iter()
        .filter(|(_, ps)| ps.len() >= 2)
        .map(|(v, _)| v)
        .collect()
}

/// Instantiates `model` over the variable `universe` of a program whose
/// writes are `write_sites`.
pub fn model_partition<I>(model: &ModelName, universe: &BTreeSet<Var>, write_sites: I) -> PartitionSpec
where
    I: IntoIterator<Item = (ProcId, Var)>,
{
    let singletons = |vars: &BTreeSet<Var>| PartitionSpec {
        classes: vars.iter().map(|v| BTreeSet::from([v.clone()])).collect(),
    };
    let whole = |vars: BTreeSet<Var>| PartitionSpec {
        classes: if vars.is_empty() { vec![] } else { vec![vars] },
    };
    match model {
        ModelName::Sc => whole(universe.clone()),
        ModelName::Pram => PartitionSpec::empty(),
        ModelName::PcG => singletons(universe),
        ModelName::WeakSc => whole(multi_writer_vars(write_sites)),
        ModelName::WeakPcG => singletons(&multi_writer_vars(write_sites)),
        ModelName::Custom(k) => k.clone(),
    }
}
