//! Condition language: terms, literals over the closed predicate vocabulary,
//! surface syntax and unification.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Variable assignment produced by unification and consumed by grounding.
pub type Binding = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiteralError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{predicate}` takes {expected} argument(s), got {found}")]
    Arity {
        predicate: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("malformed literal `{text}`: {reason}")]
    Malformed { text: String, reason: String },
}

/// How a predicate's truth value is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredicateKind {
    /// Stored spatial relation.
    Base,
    /// Computed on demand from base relations.
    Derived,
    /// Object attribute flag.
    Attribute,
}

/// The closed vocabulary. Anything else is rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    On,
    Inside,
    Held,
    At,
    Occupied,
    HandEmpty,
    Pickable,
    Container,
    Reachable,
}

impl Predicate {
    pub const ALL: [Predicate; 9] = [
        Predicate::On,
        Predicate::Inside,
        Predicate::Held,
        Predicate::At,
        Predicate::Occupied,
        Predicate::HandEmpty,
        Predicate::Pickable,
        Predicate::Container,
        Predicate::Reachable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::On => "on",
            Predicate::Inside => "inside",
            Predicate::Held => "held",
            Predicate::At => "at",
            Predicate::Occupied => "occupied",
            Predicate::HandEmpty => "hand_empty",
            Predicate::Pickable => "pickable",
            Predicate::Container => "container",
            Predicate::Reachable => "reachable",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Predicate::On | Predicate::Inside | Predicate::At => 2,
            Predicate::HandEmpty => 0,
            _ => 1,
        }
    }

    pub fn kind(self) -> PredicateKind {
        match self {
            Predicate::On | Predicate::Inside | Predicate::Held | Predicate::At => PredicateKind::Base,
            Predicate::Occupied | Predicate::HandEmpty => PredicateKind::Derived,
            Predicate::Pickable | Predicate::Container | Predicate::Reachable => {
                PredicateKind::Attribute
            }
        }
    }

    /// Support relations: at most one per object.
    pub fn is_support(self) -> bool {
        matches!(self, Predicate::On | Predicate::Inside | Predicate::Held)
    }

    pub fn from_name(name: &str) -> Option<Predicate> {
        Predicate::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Predicate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Predicate::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown predicate `{name}`")))
    }
}

/// An argument slot. Object and area ids share the constant namespace
/// because zones are ordinary scene objects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    Var(String),
    Wildcard,
}

impl Term {
    pub fn constant(name: impl Into<String>) -> Term {
        Term::Const(name.into())
    }

    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn as_const(&self) -> Option<&str> {
        match self {
            Term::Const(c) => Some(c),
            _ => None,
        }
    }

    fn parse(text: &str) -> Option<Term> {
        if text == "_" {
            return Some(Term::Wildcard);
        }
        let mut chars = text.chars();
        let first = chars.next()?;
        if !text.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return None;
        }
        if first.is_ascii_uppercase() {
            Some(Term::Var(text.to_string()))
        } else if first.is_ascii_lowercase() || first.is_ascii_digit() {
            Some(Term::Const(text.to_string()))
        } else {
            None
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) | Term::Var(c) => f.write_str(c),
            Term::Wildcard => f.write_str("_"),
        }
    }
}

/// A possibly negated predicate application.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub predicate: Predicate,
    pub args: Vec<Term>,
    pub negated: bool,
}

impl Literal {
    pub fn new(predicate: Predicate, args: Vec<Term>, negated: bool) -> Result<Literal, LiteralError> {
        if args.len() != predicate.arity() {
            return Err(LiteralError::Arity {
                predicate: predicate.name(),
                expected: predicate.arity(),
                found: args.len(),
            });
        }
        Ok(Literal {
            predicate,
            args,
            negated,
        })
    }

    /// Positive ground literal from constant names. Panics on arity mismatch,
    /// so it is meant for literals whose shape is fixed in code.
    pub fn fact(predicate: Predicate, args: &[&str]) -> Literal {
        Literal::new(
            predicate,
            args.iter().map(|a| Term::constant(*a)).collect(),
            false,
        )
        .expect("arity fixed by caller")
    }

    pub fn negate(&self) -> Literal {
        Literal {
            negated: !self.negated,
            ..self.clone()
        }
    }

    pub fn positive(&self) -> Literal {
        Literal {
            negated: false,
            ..self.clone()
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| matches!(t, Term::Const(_)))
    }

    /// Constant argument at `idx`, if present.
    pub fn arg(&self, idx: usize) -> Option<&str> {
        self.args.get(idx).and_then(Term::as_const)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            _ => None,
        })
    }

    /// Replace bound variables; unbound variables and wildcards stay put.
    pub fn substitute(&self, binding: &Binding) -> Literal {
        let args = self
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => binding
                    .get(v)
                    .map(|c| Term::Const(c.clone()))
                    .unwrap_or_else(|| t.clone()),
                other => other.clone(),
            })
            .collect();
        Literal {
            predicate: self.predicate,
            args,
            negated: self.negated,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("~")?;
        }
        f.write_str(self.predicate.name())?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Parse the surface syntax `[~]predicate(arg, ...)` or `[~]predicate`.
pub fn parse_literal(text: &str) -> Result<Literal, LiteralError> {
    let malformed = |reason: &str| LiteralError::Malformed {
        text: text.to_string(),
        reason: reason.to_string(),
    };
    let trimmed = text.trim();
    let (negated, body) = match trimmed.strip_prefix('~') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, trimmed),
    };
    if body.is_empty() {
        return Err(malformed("empty literal"));
    }
    let (name, args) = match body.find('(') {
        Some(open) => {
            let inner = body[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| malformed("missing closing parenthesis"))?;
            if inner.contains('(') || inner.contains(')') {
                return Err(malformed("nested parentheses"));
            }
            let args = inner
                .split(',')
                .map(|a| {
                    let a = a.trim();
                    Term::parse(a).ok_or_else(|| malformed(&format!("bad argument `{a}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (body[..open].trim(), args)
        }
        None => (body, Vec::new()),
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(malformed("bad predicate name"));
    }
    let predicate =
        Predicate::from_name(name).ok_or_else(|| LiteralError::UnknownPredicate(name.to_string()))?;
    Literal::new(predicate, args, negated)
}

impl FromStr for Literal {
    type Err = LiteralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_literal(s)
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_literal(&text).map_err(serde::de::Error::custom)
    }
}

/// Match a pattern against a ground literal.
///
/// Negation flags must agree. Variables bind consistently (a repeated
/// variable must see the same constant twice); wildcards match anything.
pub fn unify(pattern: &Literal, ground: &Literal) -> Option<Binding> {
    unify_with(pattern, ground, &Binding::new())
}

/// [`unify`] extending an existing binding.
pub fn unify_with(pattern: &Literal, ground: &Literal, seed: &Binding) -> Option<Binding> {
    if pattern.predicate != ground.predicate
        || pattern.negated != ground.negated
        || pattern.args.len() != ground.args.len()
    {
        return None;
    }
    let mut binding = seed.clone();
    for (p, g) in pattern.args.iter().zip(&ground.args) {
        let g = g.as_const()?;
        match p {
            Term::Wildcard => {}
            Term::Const(c) => {
                if c != g {
                    return None;
                }
            }
            Term::Var(v) => match binding.get(v) {
                Some(bound) if bound != g => return None,
                Some(_) => {}
                None => {
                    binding.insert(v.clone(), g.to_string());
                }
            },
        }
    }
    Some(binding)
}
