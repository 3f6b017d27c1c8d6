//! Seeded enumeration of inputs constrained by a type descriptor.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::{Lengths, Range, TypeDescriptor, TypeKind};
use crate::value::Value;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyMix {
    pub boundary: f64,
    pub random: f64,
    pub mutation: f64,
}

impl Default for StrategyMix {
    fn default() -> Self {
        StrategyMix {
            boundary: 0.3,
            random: 0.5,
            mutation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationBudget {
    pub target_count: usize,
    pub max_attempts: usize,
    pub seed: u64,
    #[serde(default)]
    pub strategy_mix: StrategyMix,
}

impl GenerationBudget {
    /// Budget with the default mix and twenty attempts per requested input.
    pub fn new(target_count: usize, seed: u64) -> Result<Self> {
        let b = GenerationBudget {
            target_count,
            max_attempts: target_count.saturating_mul(20),
            seed,
            strategy_mix: StrategyMix::default(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_count == 0 {
            return Err(Error::InvalidArgument("target_count must be positive".into()));
        }
        if self.max_attempts < self.target_count {
            return Err(Error::InvalidArgument("max_attempts must be at least target_count".into()));
        }
        let m = self.strategy_mix;
        let w = [m.boundary, m.random, m.mutation];
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("strategy weights must be non-negative with a positive sum".into()));
        }
        Ok(())
    }
}

/// Restrictions imposed by how inputs are delivered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenContext {
    /// Strings become whitespace-separated stdin tokens: non-empty, no spaces.
    pub token_strings: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub inputs: Vec<Value>,
    pub attempts: usize,
    /// Inputs still missing when the attempt budget ran out.
    pub shortfall: usize,
}

#[derive(Clone, Copy)]
enum Strategy {
    Boundary,
    Random,
    Mutation,
}

pub fn enumerate_inputs(desc: &TypeDescriptor, budget: &GenerationBudget) -> Result<Enumeration> {
    enumerate_with(desc, budget, &[], GenContext::default(), &HashSet::new())
}

/// Enumeration with mutation seeds, delivery restrictions and a set of
/// canonical inputs to avoid.
pub fn enumerate_with(
    desc: &TypeDescriptor,
    budget: &GenerationBudget,
    seeds: &[Value],
    ctx: GenContext,
    exclude: &HashSet<String>,
) -> Result<Enumeration> {
    budget.validate()?;
    let m = budget.strategy_mix;
    let pick = WeightedIndex::new([m.boundary, m.random, m.mutation])
        .map_err(|e| Error::InvalidArgument(format!("strategy weights: {e}")))?;
    let strategies = [Strategy::Boundary, Strategy::Random, Strategy::Mutation];
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut gen = Gen { ctx, scale: 1.0 };
    let mut stall = 0;
    let mut seen = exclude.clone();
    let mut inputs = Vec::new();
    let mut attempts = 0;
    let mut boundary_index = 0;
    while inputs.len() < budget.target_count && attempts < budget.max_attempts {
        attempts += 1;
        let value = match strategies[pick.sample(&mut rng)] {
            Strategy::Boundary => {
                boundary_index += 1;
                gen.boundary(desc, boundary_index - 1, &mut rng)
            }
            Strategy::Random => gen.random(desc, &mut rng),
            Strategy::Mutation => match seeds.choose(&mut rng) {
                Some(seed) if desc.admits(seed) => gen.mutate(seed, desc, &mut rng),
                _ => gen.random(desc, &mut rng),
            },
        };
        if !desc.admits(&value) || !gen.deliverable(&value) {
            continue;
        }
        if seen.insert(value.canonical()) {
            inputs.push(value);
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT && gen.scale < MAX_SCALE {
                gen.scale *= 2.0;
                stall = 0;
            }
        }
    }
    let shortfall = budget.target_count - inputs.len();
    if shortfall > 0 {
        log::info!("enumeration stopped {shortfall} inputs short after {attempts} attempts");
    }
    Ok(Enumeration {
        inputs,
        attempts,
        shortfall,
    })
}

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

fn span_of(r: Range) -> f64 {
    (r.max - r.min).max(1.0)
}

fn widened(r: Range) -> (f64, f64) {
    scaled(r, 1.0)
}

fn scaled(r: Range, scale: f64) -> (f64, f64) {
    let centre = (r.min + r.max) / 2.0;
    let half = 2.0 * span_of(r) * scale;
    (centre - half, centre + half)
}

/// Consecutive duplicate draws tolerated before numeric ranges double.
const STALL_LIMIT: usize = 16;
const MAX_SCALE: f64 = 1.0e6;

fn widened_lengths(l: Lengths) -> (usize, usize) {
    let (lo, hi) = widened(Range {
        min: l.min as f64,
        max: l.max as f64,
    });
    (lo.max(0.0).floor() as usize, hi.ceil() as usize)
}

const INT_LIMIT: f64 = 9.0e15;

fn clamp_int(x: f64) -> i64 {
    x.clamp(-INT_LIMIT, INT_LIMIT).round() as i64
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

struct Gen {
    ctx: GenContext,
    /// Extra widening of numeric ranges, grown once a range is exhausted.
    scale: f64,
}

impl Gen {
    fn min_str_len(&self) -> usize {
        usize::from(self.ctx.token_strings)
    }

    fn deliverable(&self, v: &Value) -> bool {
        match v {
            Value::Str(s) => !self.ctx.token_strings || (!s.is_empty() && !s.chars().any(char::is_whitespace)),
            Value::Seq(items) => items.iter().all(|x| self.deliverable(x)),
            Value::Map(m) => m.values().all(|x| self.deliverable(x)),
            _ => true,
        }
    }

    fn word(&self, len: usize, rng: &mut ChaCha8Rng) -> String {
        (0..len.max(self.min_str_len()))
            .map(|_| *ALPHABET.choose(rng).expect("alphabet") as char)
            .collect()
    }

    fn int_boundaries(range: Option<Range>) -> Vec<i64> {
        let mut out = vec![0, 1, -1];
        if let Some(r) = range {
            let (lo, hi) = (clamp_int(r.min), clamp_int(r.max));
            out.extend([lo, hi, lo - 1, hi + 1]);
        }
        dedup(out)
    }

    fn real_boundaries(range: Option<Range>) -> Vec<f64> {
        let mut out = vec![0.0, 1.0, -1.0];
        if let Some(r) = range {
            out.extend([r.min, r.max, r.min - 1.0, r.max + 1.0]);
        }
        let mut seen = Vec::new();
        for x in out {
            if !seen.contains(&x) {
                seen.push(x);
            }
        }
        seen
    }

    fn length_boundaries(&self, lengths: Option<Lengths>, is_string: bool) -> Vec<usize> {
        let mut out = vec![0, 1];
        if let Some(l) = lengths {
            out.extend([l.min, l.max]);
        }
        let floor = if is_string { self.min_str_len() } else { 0 };
        dedup(out.into_iter().map(|n| n.max(floor)).collect())
    }

    /// Boundary value number `idx`; cycles through the boundary list of the
    /// outermost kind and draws nested parts at random from theirs.
    fn boundary(&self, d: &TypeDescriptor, idx: usize, rng: &mut ChaCha8Rng) -> Value {
        match &d.kind {
            TypeKind::Integer => {
                let b = Self::int_boundaries(d.observed_range);
                Value::Int(b[idx % b.len()])
            }
            TypeKind::Real => {
                let b = Self::real_boundaries(d.observed_range);
                Value::Real(b[idx % b.len()])
            }
            TypeKind::Boolean => Value::Bool(idx % 2 == 1),
            TypeKind::String => {
                let b = self.length_boundaries(d.observed_lengths, true);
                Value::Str(self.word(b[idx % b.len()], rng))
            }
            TypeKind::SequenceOf(e) => {
                let b = self.length_boundaries(d.observed_lengths, false);
                let n = b[idx % b.len()];
                Value::Seq((0..n).map(|_| self.boundary(e, rng.gen_range(0..64), rng)).collect())
            }
            TypeKind::TupleOf(ts) => Value::Seq(
                ts.iter()
                    .enumerate()
                    .map(|(j, t)| self.boundary(t, idx + j, rng))
                    .collect(),
            ),
            TypeKind::MapOf(e) => {
                let n = idx % 2;
                Value::Map((0..n).map(|k| (format!("k{k}"), self.boundary(e, rng.gen_range(0..64), rng))).collect())
            }
            TypeKind::Union(ms) => {
                let m = &ms[idx % ms.len()];
                self.boundary(m, idx / ms.len(), rng)
            }
        }
    }

    fn random(&self, d: &TypeDescriptor, rng: &mut ChaCha8Rng) -> Value {
        match &d.kind {
            TypeKind::Integer => {
                let (lo, hi) = scaled(d.observed_range.unwrap_or(Range { min: -10.0, max: 10.0 }), self.scale);
                Value::Int(rng.gen_range(clamp_int(lo)..=clamp_int(hi)))
            }
            TypeKind::Real => {
                let (lo, hi) = scaled(d.observed_range.unwrap_or(Range { min: -10.0, max: 10.0 }), self.scale);
                Value::Real(round2(rng.gen_range(lo..=hi)))
            }
            TypeKind::Boolean => Value::Bool(rng.gen()),
            TypeKind::String => {
                let (lo, hi) = widened_lengths(d.observed_lengths.unwrap_or(Lengths { min: 0, max: 8 }));
                let n = rng.gen_range(lo..=hi);
                Value::Str(self.word(n, rng))
            }
            TypeKind::SequenceOf(e) => {
                let (lo, hi) = widened_lengths(d.observed_lengths.unwrap_or(Lengths { min: 0, max: 8 }));
                let n = rng.gen_range(lo..=hi);
                Value::Seq((0..n).map(|_| self.random(e, rng)).collect())
            }
            TypeKind::TupleOf(ts) => Value::Seq(ts.iter().map(|t| self.random(t, rng)).collect()),
            TypeKind::MapOf(e) => {
                let (lo, hi) = widened_lengths(d.observed_lengths.unwrap_or(Lengths { min: 0, max: 4 }));
                let n = rng.gen_range(lo..=hi);
                let map: BTreeMap<String, Value> = (0..n).map(|k| (format!("k{k}"), self.random(e, rng))).collect();
                Value::Map(map)
            }
            TypeKind::Union(ms) => {
                let m = ms.choose(rng).expect("non-empty union");
                self.random(m, rng)
            }
        }
    }

    /// Small perturbation of an existing input.
    fn mutate(&self, v: &Value, d: &TypeDescriptor, rng: &mut ChaCha8Rng) -> Value {
        match (v, &d.kind) {
            (_, TypeKind::Union(ms)) => match ms.iter().find(|m| m.admits(v)) {
                Some(m) => self.mutate(v, m, rng),
                None => self.random(d, rng),
            },
            (Value::Int(i), _) => {
                let delta = *[-3i64, -2, -1, 1, 2, 3].choose(rng).expect("deltas");
                Value::Int(i.saturating_add(delta))
            }
            (Value::Real(r), _) => Value::Real(round2(r + rng.gen_range(-2.0..=2.0))),
            (Value::Bool(b), _) => Value::Bool(!b),
            (Value::Str(s), _) => {
                let mut chars: Vec<char> = s.chars().collect();
                let c = *ALPHABET.choose(rng).expect("alphabet") as char;
                match rng.gen_range(0..3) {
                    0 if chars.len() > self.min_str_len() => {
                        let i = rng.gen_range(0..chars.len());
                        chars.remove(i);
                    }
                    1 if !chars.is_empty() => {
                        let i = rng.gen_range(0..chars.len());
                        chars[i] = c;
                    }
                    _ => {
                        let i = rng.gen_range(0..=chars.len());
                        chars.insert(i, c);
                    }
                }
                Value::Str(chars.into_iter().collect())
            }
            (Value::Seq(items), TypeKind::TupleOf(ts)) if !items.is_empty() => {
                let j = rng.gen_range(0..items.len());
                let mut out = items.clone();
                out[j] = self.mutate(&items[j], &ts[j], rng);
                Value::Seq(out)
            }
            (Value::Seq(items), TypeKind::SequenceOf(e)) => {
                let mut out = items.clone();
                match rng.gen_range(0..3) {
                    0 if !out.is_empty() => {
                        let i = rng.gen_range(0..out.len());
                        out.remove(i);
                    }
                    1 if !out.is_empty() => {
                        let i = rng.gen_range(0..out.len());
                        out[i] = self.mutate(&out[i], e, rng);
                    }
                    _ => {
                        let i = rng.gen_range(0..=out.len());
                        out.insert(i, self.random(e, rng));
                    }
                }
                Value::Seq(out)
            }
            (Value::Map(m), TypeKind::MapOf(e)) => {
                let mut out = m.clone();
                let key = format!("k{}", out.len());
                out.insert(key, self.random(e, rng));
                Value::Map(out)
            }
            _ => self.random(d, rng),
        }
    }
}

fn dedup<T: PartialEq>(xs: Vec<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}
