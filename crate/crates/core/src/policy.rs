//! Admission policies and the CLI policy-string grammar.
//!
//! Every catalog policy admits a high-type job whenever a server is idle; they
//! differ only in how they treat low-type jobs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytic::sss_window;
use crate::engine::StateView;
use crate::lookahead::{pfi_decide, sss_decide, LookaheadError, LookaheadTrace};
use crate::model::{JobClass, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn from_bool(accept: bool) -> Self {
        if accept {
            Decision::Accept
        } else {
            Decision::Reject
        }
    }

    pub fn is_accept(self) -> bool {
        self == Decision::Accept
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    AcceptAll,
    /// Trunk reservation: admit L only while more than `theta` servers are idle.
    Threshold(usize),
    /// Promise of future idleness (offline).
    Pfi,
    /// Single short sensor with a lookahead window in hours.
    Sss(f64),
    /// Accept iff either child accepts.
    CompositeAe(Box<PolicyKind>, Box<PolicyKind>),
    /// Reject iff either child rejects.
    CompositeRe(Box<PolicyKind>, Box<PolicyKind>),
    /// Admits every arrival, even into a full system. Exercises the engine's
    /// admission check.
    #[cfg(test)]
    AlwaysAccept,
}

impl PolicyKind {
    pub fn is_composite(&self) -> bool {
        matches!(self, PolicyKind::CompositeAe(..) | PolicyKind::CompositeRe(..))
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), String> {
        match self {
            PolicyKind::Threshold(theta) if *theta > params.servers() => {
                Err(format!("threshold {theta} exceeds server count {}", params.servers()))
            }
            PolicyKind::Sss(w) if !(w.is_finite() && *w > 0.0) => {
                Err(format!("lookahead window must be positive, got {w}"))
            }
            PolicyKind::CompositeAe(a, b) | PolicyKind::CompositeRe(a, b) => {
                if a.is_composite() || b.is_composite() {
                    return Err("composite policies nest only one level".into());
                }
                a.validate(params)?;
                b.validate(params)
            }
            _ => Ok(()),
        }
    }

    /// The lookahead window, if this policy (or one of its children) uses one.
    pub fn window(&self) -> Option<f64> {
        match self {
            PolicyKind::Sss(w) => Some(*w),
            PolicyKind::CompositeAe(a, b) | PolicyKind::CompositeRe(a, b) => a.window().or_else(|| b.window()),
            _ => None,
        }
    }

    pub fn decide(&self, class: JobClass, view: &StateView<'_>) -> Result<Decision, LookaheadError> {
        self.decide_traced(class, view, &mut LookaheadTrace::default())
    }

    pub fn decide_traced(
        &self,
        class: JobClass,
        view: &StateView<'_>,
        trace: &mut LookaheadTrace,
    ) -> Result<Decision, LookaheadError> {
        let idle = view.idle;
        Ok(match self {
            PolicyKind::AcceptAll => Decision::from_bool(idle > 0),
            PolicyKind::Threshold(theta) => match class {
                JobClass::High => Decision::from_bool(idle > 0),
                JobClass::Low => Decision::from_bool(idle > *theta),
            },
            PolicyKind::Pfi => pfi_decide(view, class, trace)?,
            PolicyKind::Sss(w) => sss_decide(view, class, *w, trace),
            PolicyKind::CompositeAe(a, b) => {
                let left = a.decide_traced(class, view, trace)?;
                if left.is_accept() {
                    left
                } else {
                    b.decide_traced(class, view, trace)?
                }
            }
            PolicyKind::CompositeRe(a, b) => {
                let left = a.decide_traced(class, view, trace)?;
                if !left.is_accept() {
                    left
                } else {
                    b.decide_traced(class, view, trace)?
                }
            }
            #[cfg(test)]
            PolicyKind::AlwaysAccept => Decision::Accept,
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::AcceptAll => write!(f, "accept-all"),
            PolicyKind::Threshold(t) => write!(f, "threshold:{t}"),
            PolicyKind::Pfi => write!(f, "pfi"),
            PolicyKind::Sss(w) => write!(f, "sss:{w}"),
            PolicyKind::CompositeAe(a, b) => write!(f, "ae:{a},{b}"),
            PolicyKind::CompositeRe(a, b) => write!(f, "re:{a},{b}"),
            #[cfg(test)]
            PolicyKind::AlwaysAccept => write!(f, "always-accept"),
        }
    }
}

/// How an SSS policy string specifies its window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WindowSpec {
    Hours(f64),
    /// The sufficient window `C log N / N` with the sufficient-window constant.
    Theorem,
    /// `c log N / N` with a caller-supplied constant.
    Constant(f64),
}

impl WindowSpec {
    pub fn resolve(self, params: &ModelParams) -> f64 {
        match self {
            WindowSpec::Hours(w) => w,
            WindowSpec::Theorem => sss_window(params, None),
            WindowSpec::Constant(c) => sss_window(params, Some(c)),
        }
    }
}

/// A parsed policy string, not yet bound to a system size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicySpec {
    AcceptAll,
    Threshold(usize),
    Pfi,
    Sss(WindowSpec),
    Ae(Box<PolicySpec>, Box<PolicySpec>),
    Re(Box<PolicySpec>, Box<PolicySpec>),
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("cannot parse policy {input:?}: {reason}")]
pub struct PolicyParseError {
    pub input: String,
    pub reason: String,
}

impl PolicySpec {
    /// Parses `accept-all`, `threshold:<theta>`, `pfi`, `sss:<w|auto|c=<const>>`,
    /// `ae:<p1>,<p2>` and `re:<p1>,<p2>`.
    pub fn parse(input: &str) -> Result<Self, PolicyParseError> {
        let err = |reason: &str| PolicyParseError { input: input.to_string(), reason: reason.to_string() };
        let s = input.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("accept-all", None) => Ok(PolicySpec::AcceptAll),
            ("pfi", None) => Ok(PolicySpec::Pfi),
            ("threshold", Some(a)) => {
                a.parse().map(PolicySpec::Threshold).map_err(|_| err("threshold needs a non-negative integer"))
            }
            ("sss", Some("auto")) => Ok(PolicySpec::Sss(WindowSpec::Theorem)),
            ("sss", Some(a)) => {
                let (value, constant) = match a.strip_prefix("c=") {
                    Some(c) => (c, true),
                    None => (a, false),
                };
                let v: f64 = value.parse().map_err(|_| err("window must be a number"))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(err("window must be positive"));
                }
                Ok(PolicySpec::Sss(if constant { WindowSpec::Constant(v) } else { WindowSpec::Hours(v) }))
            }
            (kind @ ("ae" | "re"), Some(a)) => {
                let (l, r) = split_children(a).ok_or_else(|| err("expected two comma-separated policies"))?;
                let l = PolicySpec::parse(l)?;
                let r = PolicySpec::parse(r)?;
                if l.is_composite() || r.is_composite() {
                    return Err(err("composite policies nest only one level"));
                }
                let (l, r) = (Box::new(l), Box::new(r));
                Ok(if kind == "ae" { PolicySpec::Ae(l, r) } else { PolicySpec::Re(l, r) })
            }
            _ => Err(err("unknown policy")),
        }
    }

    pub fn is_composite(&self) -> bool {
        matches!(self, PolicySpec::Ae(..) | PolicySpec::Re(..))
    }

    pub fn is_threshold(&self) -> bool {
        matches!(self, PolicySpec::Threshold(_))
    }

    pub fn resolve(&self, params: &ModelParams) -> PolicyKind {
        match self {
            PolicySpec::AcceptAll => PolicyKind::AcceptAll,
            PolicySpec::Threshold(t) => PolicyKind::Threshold(*t),
            PolicySpec::Pfi => PolicyKind::Pfi,
            PolicySpec::Sss(w) => PolicyKind::Sss(w.resolve(params)),
            PolicySpec::Ae(a, b) => PolicyKind::CompositeAe(Box::new(a.resolve(params)), Box::new(b.resolve(params))),
            PolicySpec::Re(a, b) => PolicyKind::CompositeRe(Box::new(a.resolve(params)), Box::new(b.resolve(params))),
        }
    }
}

impl std::str::FromStr for PolicySpec {
    type Err = PolicyParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicySpec::parse(s)
    }
}

// Children never contain commas themselves (one nesting level).
fn split_children(s: &str) -> Option<(&str, &str)> {
    let (l, r) = s.split_once(',')?;
    if l.is_empty() || r.is_empty() || r.contains(',') {
        return None;
    }
    Some((l, r))
}
