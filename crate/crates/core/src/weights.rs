//! Strength/weakness weights from per-technique exploit outcomes.
//!
//! A failed technique scores zero. Successful techniques share a total of
//! `n` points in proportion to the reciprocal of their exploit time, so a
//! technique twice as fast gets twice the weight.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Technique;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("expected {expected} outcomes, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("technique {0} appears more than once")]
    Duplicate(Technique),
    #[error("no outcome for techniques {0:?}")]
    Missing(Vec<Technique>),
    #[error("outcome #{0} succeeded with zero exploit time")]
    ZeroSuccessTime(usize),
    #[error("outcome #{0} has a negative exploit time")]
    NegativeTime(usize),
    #[error("no rounds to aggregate")]
    NoRounds,
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<WeightError>,
    },
}

/// Result of one technique against one target.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub succeeded: bool,
    /// Exploit time of a success; kept for bookkeeping on failures.
    pub time: T,
}

impl<T> Outcome<T> {
    pub fn success(time: T) -> Self {
        Outcome { succeeded: true, time }
    }

    pub fn failure(time: T) -> Self {
        Outcome { succeeded: false, time }
    }
}

/// Computes one weight per outcome, in input order.
///
/// `n` is the number of techniques and must equal `outcomes.len()`. When
/// nothing succeeded every weight is zero; otherwise the weights sum to `n`.
pub fn compute_weights<T: Scalar>(outcomes: &[Outcome<T>], n: usize) -> Result<Vec<T>, WeightError> {
    if n == 0 || outcomes.len() != n {
        return Err(WeightError::Arity {
            expected: n,
            got: outcomes.len(),
        });
    }
    for (i, o) in outcomes.iter().enumerate() {
        if o.time < T::zero() {
            return Err(WeightError::NegativeTime(i));
        }
        if o.succeeded && !o.time.is_positive() {
            return Err(WeightError::ZeroSuccessTime(i));
        }
    }

    let reciprocal_sum = outcomes
        .iter()
        .filter(|o| o.succeeded)
        .fold(T::zero(), |acc, o| acc + T::one() / o.time.clone());
    let total = T::from_count(n);

    Ok(outcomes
        .iter()
        .map(|o| {
            let failed_weight = T::zero();
            let success_weight = if o.succeeded {
                (T::one() / o.time.clone()) * total.clone() * (T::one() / reciprocal_sum.clone())
            } else {
                T::zero()
            };
            // Literal max(W_S, W_F); W_F is always zero.
            if success_weight > failed_weight {
                success_weight
            } else {
                failed_weight
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TechniqueOutcome<T> {
    pub technique: Technique,
    pub succeeded: bool,
    pub exploit_time: T,
}

impl<T> TechniqueOutcome<T> {
    pub fn new(technique: Technique, succeeded: bool, exploit_time: T) -> Self {
        TechniqueOutcome {
            technique,
            succeeded,
            exploit_time,
        }
    }
}

/// One value per technique, indexed in `BEUSTQ` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PerTechnique<T> {
    values: [T; Technique::COUNT],
}

/// Strength/weakness weights, one per technique.
pub type Weights<T> = PerTechnique<T>;

impl<T> PerTechnique<T> {
    pub fn from_fn(mut f: impl FnMut(Technique) -> T) -> Self {
        PerTechnique {
            values: std::array::from_fn(|i| f(Technique::ALL[i])),
        }
    }

    pub fn get(&self, t: Technique) -> &T {
        &self.values[t.index()]
    }

    pub fn get_mut(&mut self, t: Technique) -> &mut T {
        &mut self.values[t.index()]
    }

    pub fn set(&mut self, t: Technique, value: T) {
        self.values[t.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Technique, &T)> {
        Technique::ALL.into_iter().zip(self.values.iter())
    }
}

impl<T: Scalar> Default for PerTechnique<T> {
    fn default() -> Self {
        PerTechnique::zeros()
    }
}

impl<T: Scalar> PerTechnique<T> {
    pub fn zeros() -> Self {
        PerTechnique::from_fn(|_| T::zero())
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, w| acc + w.clone())
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|w| w.is_zero())
    }

    /// Techniques by descending weight; ties keep `BEUSTQ` order.
    pub fn order(&self) -> Vec<Technique> {
        let mut order = Technique::ALL.to_vec();
        order.sort_by(|a, b| {
            self.get(*b)
                .partial_cmp(self.get(*a))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
    }
}

impl<T: fmt::Display> fmt::Display for PerTechnique<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (t, w)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{t}={w}")?;
        }
        Ok(())
    }
}

impl<T: Serialize> Serialize for PerTechnique<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(Technique::COUNT))?;
        for (t, w) in Technique::ALL.iter().zip(self.values.iter()) {
            map.serialize_entry(&t.letter(), w)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for PerTechnique<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct WeightsVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for WeightsVisitor<T> {
            type Value = PerTechnique<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map keyed by technique letter")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut slots: [Option<T>; Technique::COUNT] = std::array::from_fn(|_| None);
                while let Some((key, value)) = access.next_entry::<char, T>()? {
                    let t = Technique::from_letter(key)
                        .ok_or_else(|| de::Error::custom(format!("unknown technique {key:?}")))?;
                    if slots[t.index()].replace(value).is_some() {
                        return Err(de::Error::custom(format!("duplicate technique {key:?}")));
                    }
                }
                let mut values = Vec::with_capacity(Technique::COUNT);
                for (t, slot) in Technique::ALL.iter().zip(slots) {
                    values.push(slot.ok_or_else(|| de::Error::custom(format!("missing technique {t}")))?);
                }
                Ok(PerTechnique {
                    values: values.try_into().ok().expect("six entries"),
                })
            }
        }

        deserializer.deserialize_map(WeightsVisitor(std::marker::PhantomData))
    }
}

fn by_technique<T: Clone>(outcomes: &[TechniqueOutcome<T>]) -> Result<Vec<TechniqueOutcome<T>>, WeightError> {
    let mut slots: [Option<&TechniqueOutcome<T>>; Technique::COUNT] = Default::default();
    for o in outcomes {
        if slots[o.technique.index()].replace(o).is_some() {
            return Err(WeightError::Duplicate(o.technique));
        }
    }
    let missing: Vec<Technique> = Technique::ALL
        .into_iter()
        .filter(|t| slots[t.index()].is_none())
        .collect();
    if !missing.is_empty() {
        return Err(WeightError::Missing(missing));
    }
    Ok(slots.into_iter().map(|o| o.unwrap().clone()).collect())
}

/// Weight vector for exactly one outcome per technique.
pub fn weights_for<T: Scalar>(outcomes: &[TechniqueOutcome<T>]) -> Result<Weights<T>, WeightError> {
    let ordered = by_technique(outcomes)?;
    let plain: Vec<Outcome<T>> = ordered
        .into_iter()
        .map(|o| Outcome {
            succeeded: o.succeeded,
            time: o.exploit_time,
        })
        .collect();
    let values = compute_weights(&plain, Technique::COUNT)?;
    Ok(PerTechnique {
        values: values.try_into().expect("six weights"),
    })
}

/// Averages exploit times across rounds. A technique counts as successful
/// if it succeeded in at least one round.
pub fn aggregate_rounds<T: Scalar>(
    rounds: &[Vec<TechniqueOutcome<T>>],
) -> Result<Vec<TechniqueOutcome<T>>, WeightError> {
    if rounds.is_empty() {
        return Err(WeightError::NoRounds);
    }
    let ordered = rounds
        .iter()
        .enumerate()
        .map(|(i, r)| {
            by_technique(r).map_err(|e| WeightError::Round {
                round: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let count = T::from_count(rounds.len());
    Ok(Technique::ALL
        .into_iter()
        .map(|t| {
            let column = ordered.iter().map(|r| &r[t.index()]);
            let total = column.clone().fold(T::zero(), |acc, o| acc + o.exploit_time.clone());
            TechniqueOutcome {
                technique: t,
                succeeded: column.clone().any(|o| o.succeeded),
                exploit_time: total / count.clone(),
            }
        })
        .collect())
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("round-record csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("round-record line {line}: {message}")]
    Field { line: u64, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    round: usize,
    technique: Technique,
    succeeded: bool,
    time_s: f64,
}

/// Reads a round-record CSV (`round,technique,succeeded,time_s`) into
/// per-round outcome lists ordered by round index.
pub fn read_round_records<R: Read>(reader: R) -> Result<Vec<Vec<TechniqueOutcome<f64>>>, RecordError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rounds: BTreeMap<usize, Vec<TechniqueOutcome<f64>>> = BTreeMap::new();
    for row in rdr.deserialize::<RecordRow>() {
        let row = row.map_err(|e| match e.position() {
            Some(pos) => RecordError::Field {
                line: pos.line(),
                message: e.to_string(),
            },
            None => RecordError::Csv(e),
        })?;
        rounds
            .entry(row.round)
            .or_default()
            .push(TechniqueOutcome::new(row.technique, row.succeeded, row.time_s));
    }
    Ok(rounds.into_values().collect())
}

/// Writes rounds in the same format [`read_round_records`] accepts, with
/// rounds numbered from 1.
pub fn write_round_records<W: Write>(writer: W, rounds: &[Vec<TechniqueOutcome<f64>>]) -> Result<(), RecordError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (i, round) in rounds.iter().enumerate() {
        for o in round {
            wtr.serialize(RecordRow {
                round: i + 1,
                technique: o.technique,
                succeeded: o.succeeded,
                time_s: o.exploit_time,
            })?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
