//! Input type descriptors and their inference from example inputs.

use serde::{Deserialize, Serialize};

use crate::value::Value;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn point(x: f64) -> Self {
        Range { min: x, max: x }
    }

    fn union(self, other: Range) -> Range {
        Range {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lengths {
    pub min: usize,
    pub max: usize,
}

impl Lengths {
    pub fn point(n: usize) -> Self {
        Lengths { min: n, max: n }
    }

    fn union(self, other: Lengths) -> Lengths {
        Lengths {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "of")]
pub enum TypeKind {
    Integer,
    Real,
    String,
    Boolean,
    SequenceOf(Box<TypeDescriptor>),
    TupleOf(Vec<TypeDescriptor>),
    MapOf(Box<TypeDescriptor>),
    Union(Vec<TypeDescriptor>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDescriptor {
    pub kind: TypeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_lengths: Option<Lengths>,
}

impl TypeDescriptor {
    fn bare(kind: TypeKind) -> Self {
        TypeDescriptor {
            kind,
            observed_range: None,
            observed_lengths: None,
        }
    }

    pub fn integer(min: i64, max: i64) -> Self {
        TypeDescriptor {
            observed_range: Some(Range {
                min: min as f64,
                max: max as f64,
            }),
            ..Self::bare(TypeKind::Integer)
        }
    }

    pub fn real(min: f64, max: f64) -> Self {
        TypeDescriptor {
            observed_range: Some(Range { min, max }),
            ..Self::bare(TypeKind::Real)
        }
    }

    pub fn string(min_len: usize, max_len: usize) -> Self {
        TypeDescriptor {
            observed_lengths: Some(Lengths {
                min: min_len,
                max: max_len,
            }),
            ..Self::bare(TypeKind::String)
        }
    }

    pub fn boolean() -> Self {
        Self::bare(TypeKind::Boolean)
    }

    pub fn sequence_of(elem: TypeDescriptor, min_len: usize, max_len: usize) -> Self {
        TypeDescriptor {
            observed_lengths: Some(Lengths {
                min: min_len,
                max: max_len,
            }),
            ..Self::bare(TypeKind::SequenceOf(Box::new(elem)))
        }
    }

    pub fn tuple_of(items: Vec<TypeDescriptor>) -> Self {
        Self::bare(TypeKind::TupleOf(items))
    }

    pub fn map_of(value: TypeDescriptor, min_len: usize, max_len: usize) -> Self {
        TypeDescriptor {
            observed_lengths: Some(Lengths {
                min: min_len,
                max: max_len,
            }),
            ..Self::bare(TypeKind::MapOf(Box::new(value)))
        }
    }

    /// Empty union: the element type of a sequence that was only ever seen empty.
    fn bottom() -> Self {
        Self::bare(TypeKind::Union(Vec::new()))
    }

    fn is_bottom(&self) -> bool {
        matches!(&self.kind, TypeKind::Union(m) if m.is_empty())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            TypeKind::Integer => "integer",
            TypeKind::Real => "real",
            TypeKind::String => "string",
            TypeKind::Boolean => "boolean",
            TypeKind::SequenceOf(_) => "sequence_of",
            TypeKind::TupleOf(_) => "tuple_of",
            TypeKind::MapOf(_) => "map_of",
            TypeKind::Union(_) => "union",
        }
    }

    /// Merge key for union members: integer and real share one slot.
    fn slot(&self) -> &'static str {
        match self.kind {
            TypeKind::Integer | TypeKind::Real => "number",
            _ => self.kind_name(),
        }
    }

    /// Whether `value` has the shape described. Observed ranges are not bounds.
    pub fn admits(&self, value: &Value) -> bool {
        match (&self.kind, value) {
            (TypeKind::Integer, Value::Int(_)) => true,
            (TypeKind::Real, Value::Int(_)) => true,
            (TypeKind::Real, Value::Real(r)) => r.is_finite(),
            (TypeKind::String, Value::Str(_)) => true,
            (TypeKind::Boolean, Value::Bool(_)) => true,
            (TypeKind::SequenceOf(e), Value::Seq(items)) => items.iter().all(|v| e.admits(v)),
            (TypeKind::TupleOf(ts), Value::Seq(items)) => {
                ts.len() == items.len() && ts.iter().zip(items).all(|(t, v)| t.admits(v))
            }
            (TypeKind::MapOf(e), Value::Map(m)) => m.values().all(|v| e.admits(v)),
            (TypeKind::Union(ms), v) => ms.iter().any(|m| m.admits(v)),
            _ => false,
        }
    }

    /// Replaces element types that were never observed with integers.
    fn finalize(mut self) -> Self {
        self.kind = match self.kind {
            TypeKind::SequenceOf(e) => TypeKind::SequenceOf(Box::new(e.finalize_elem())),
            TypeKind::MapOf(e) => TypeKind::MapOf(Box::new(e.finalize_elem())),
            TypeKind::TupleOf(ts) => TypeKind::TupleOf(ts.into_iter().map(Self::finalize).collect()),
            TypeKind::Union(ms) => TypeKind::Union(ms.into_iter().map(Self::finalize).collect()),
            k => k,
        };
        self
    }

    fn finalize_elem(self) -> Self {
        if self.is_bottom() {
            TypeDescriptor::integer(0, 0)
        } else {
            self.finalize()
        }
    }
}

fn join_opt<T: Copy>(a: Option<T>, b: Option<T>, f: impl Fn(T, T) -> T) -> Option<T> {
    match (a, b) {
        (Some(x), Some(y)) => Some(f(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Least general descriptor covering both arguments.
pub fn join(a: TypeDescriptor, b: TypeDescriptor) -> TypeDescriptor {
    if a.is_bottom() {
        return b;
    }
    if b.is_bottom() {
        return a;
    }
    match (a.kind, b) {
        (TypeKind::Union(ms), b) => return union_insert(ms, b),
        (kind, b) if matches!(b.kind, TypeKind::Union(_)) => {
            let a = TypeDescriptor { kind, ..a };
            let TypeKind::Union(ms) = b.kind else { unreachable!() };
            return union_insert(ms, a);
        }
        (kind, b) => join_plain(TypeDescriptor { kind, ..a }, b),
    }
}

fn join_plain(a: TypeDescriptor, b: TypeDescriptor) -> TypeDescriptor {
    let range = join_opt(a.observed_range, b.observed_range, Range::union);
    let lengths = join_opt(a.observed_lengths, b.observed_lengths, Lengths::union);
    let with = |kind| TypeDescriptor {
        kind,
        observed_range: range,
        observed_lengths: lengths,
    };
    match (a.kind, b.kind) {
        (TypeKind::Integer, TypeKind::Integer) => with(TypeKind::Integer),
        (TypeKind::Integer | TypeKind::Real, TypeKind::Integer | TypeKind::Real) => with(TypeKind::Real),
        (TypeKind::String, TypeKind::String) => with(TypeKind::String),
        (TypeKind::Boolean, TypeKind::Boolean) => with(TypeKind::Boolean),
        (TypeKind::SequenceOf(x), TypeKind::SequenceOf(y)) => with(TypeKind::SequenceOf(Box::new(join(*x, *y)))),
        (TypeKind::MapOf(x), TypeKind::MapOf(y)) => with(TypeKind::MapOf(Box::new(join(*x, *y)))),
        (TypeKind::TupleOf(xs), TypeKind::TupleOf(ys)) if xs.len() == ys.len() => {
            with(TypeKind::TupleOf(xs.into_iter().zip(ys).map(|(x, y)| join(x, y)).collect()))
        }
        (ka, kb) => {
            let a = TypeDescriptor {
                kind: ka,
                observed_range: a.observed_range,
                observed_lengths: a.observed_lengths,
            };
            let b = TypeDescriptor {
                kind: kb,
                observed_range: b.observed_range,
                observed_lengths: b.observed_lengths,
            };
            union_insert(vec![a], b)
        }
    }
}

fn union_insert(mut members: Vec<TypeDescriptor>, item: TypeDescriptor) -> TypeDescriptor {
    let incoming = match item.kind {
        TypeKind::Union(ms) => ms,
        _ => vec![item],
    };
    for t in incoming {
        match members.iter().position(|m| m.slot() == t.slot()) {
            Some(i) => {
                let merged = join(members.remove(i), t);
                members.insert(i, merged);
            }
            None => members.push(t),
        }
    }
    if members.len() == 1 {
        return members.pop().expect("one member");
    }
    members.sort_by_key(|m| m.slot());
    TypeDescriptor::bare(TypeKind::Union(members))
}

fn describe(value: &Value) -> std::result::Result<TypeDescriptor, String> {
    Ok(match value {
        Value::Null => return Err("null values have no supported type".into()),
        Value::Bool(_) => TypeDescriptor::boolean(),
        Value::Int(i) => TypeDescriptor::integer(*i, *i),
        Value::Real(r) if r.is_finite() => TypeDescriptor::real(*r, *r),
        Value::Real(_) => return Err("non-finite real".into()),
        Value::Str(s) => {
            let n = s.chars().count();
            TypeDescriptor::string(n, n)
        }
        Value::Seq(items) => {
            let mut elem = TypeDescriptor::bottom();
            for v in items {
                elem = join(elem, describe(v)?);
            }
            let mut d = TypeDescriptor::bare(TypeKind::SequenceOf(Box::new(elem)));
            d.observed_lengths = Some(Lengths::point(items.len()));
            d
        }
        Value::Map(m) => {
            let mut elem = TypeDescriptor::bottom();
            for v in m.values() {
                elem = join(elem, describe(v)?);
            }
            let mut d = TypeDescriptor::bare(TypeKind::MapOf(Box::new(elem)));
            d.observed_lengths = Some(Lengths::point(m.len()));
            d
        }
    })
}

/// Least general descriptor admitting every example.
pub fn infer_input_type(examples: &[Value]) -> Result<TypeDescriptor> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("type inference needs at least one example".into()));
    }
    let mut acc = TypeDescriptor::bottom();
    for (i, ex) in examples.iter().enumerate() {
        let d = describe(ex)
            .map_err(|m| Error::Validation(format!("unsupported value shape in example {i} ({}): {m}", ex.canonical())))?;
        acc = join(acc, d);
    }
    Ok(acc.finalize())
}

/// Like [`infer_input_type`] but fixed-arity sequences become tuples with
/// per-position element types. Used for argument lists and stdio lines.
pub fn infer_positional(examples: &[Vec<Value>]) -> Result<TypeDescriptor> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("type inference needs at least one example".into()));
    }
    let arity = examples[0].len();
    if examples.iter().all(|e| e.len() == arity) {
        let mut items = Vec::with_capacity(arity);
        for j in 0..arity {
            let column: Vec<Value> = examples.iter().map(|e| e[j].clone()).collect();
            items.push(infer_input_type(&column)?);
        }
        return Ok(TypeDescriptor::tuple_of(items));
    }
    let seqs: Vec<Value> = examples.iter().map(|e| Value::Seq(e.clone())).collect();
    infer_input_type(&seqs)
}
