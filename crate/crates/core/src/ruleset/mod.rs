//! Header-level signature rules in the Snort rule syntax.
//!
//! The supported grammar covers actions `alert`, `drop` and `pass`,
//! protocols `tcp`, `udp`, `icmp` and `ip`, address specs (`any`,
//! `$VAR`, dotted quad or CIDR), port specs (`any`, `N`, `lo:hi`), the
//! `->` and `<>` directions, and the options `msg`, `sid`, `rev`,
//! `priority`, `classtype` and `flow`.

mod flow;
mod matcher;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::pktmodel::{Address, CidrBlock, FiveTuple, SimTime};
use crate::secfn::{SecMode, Verdict};

pub use flow::{FlowFacts, FlowState};
pub use matcher::match_packet;
pub use parse::{parse_rule, parse_ruleset, serialize_rule};

pub const HOME_NET: &str = "HOME_NET";
pub const EXTERNAL_NET: &str = "EXTERNAL_NET";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("duplicate option {key:?} at offset {offset}")]
    DuplicateOption { key: String, offset: usize },
    #[error("port out of range at offset {offset}: {text}")]
    PortRange { offset: usize, text: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<RuleError>,
    },
    #[error("line {line}: duplicate sid {sid} (first defined on line {first_line})")]
    DuplicateSid { sid: u32, line: usize, first_line: usize },
    #[error("undefined variable ${0}")]
    UndefinedVariable(String),
}

impl RuleError {
    pub(crate) fn syntax(offset: usize, message: impl Into<String>) -> Self {
        RuleError::Syntax {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleAction {
    Alert,
    Drop,
    Pass,
}

impl RuleAction {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleAction::Alert => "alert",
            RuleAction::Drop => "drop",
            RuleAction::Pass => "pass",
        }
    }
}

impl fmt::Display for RuleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleProto {
    Tcp,
    Udp,
    Icmp,
    Ip,
}

impl RuleProto {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleProto::Tcp => "tcp",
            RuleProto::Udp => "udp",
            RuleProto::Icmp => "icmp",
            RuleProto::Ip => "ip",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AddressSpec {
    Any,
    Var(String),
    Literal(CidrBlock),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortSpec {
    Any,
    Literal(u16),
    Range(u16, u16),
}

impl PortSpec {
    pub fn matches(&self, port: u16) -> bool {
        match *self {
            PortSpec::Any => true,
            PortSpec::Literal(p) => p == port,
            PortSpec::Range(lo, hi) => (lo..=hi).contains(&port),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `->`
    Uni,
    /// `<>`
    Bi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowOption {
    ToServer,
    ToClient,
    Established,
}

impl FlowOption {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowOption::ToServer => "to_server",
            FlowOption::ToClient => "to_client",
            FlowOption::Established => "established",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleOptions {
    pub msg: String,
    pub sid: u32,
    pub rev: Option<u32>,
    pub priority: Option<u32>,
    pub classtype: Option<String>,
    pub flow: Option<BTreeSet<FlowOption>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub action: RuleAction,
    pub proto: RuleProto,
    pub src: AddressSpec,
    pub sport: PortSpec,
    pub direction: Direction,
    pub dst: AddressSpec,
    pub dport: PortSpec,
    pub options: RuleOptions,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_rule(self))
    }
}

/// Named address lists referenced as `$NAME` in rules.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleVars {
    vars: BTreeMap<String, Vec<CidrBlock>>,
}

impl RuleVars {
    /// `HOME_NET` is the given subnet and `EXTERNAL_NET` its complement.
    pub fn for_home(home: CidrBlock) -> Self {
        let mut vars = BTreeMap::new();
        vars.insert(HOME_NET.to_string(), vec![home]);
        vars.insert(EXTERNAL_NET.to_string(), home.complement());
        RuleVars { vars }
    }

    pub fn set(&mut self, name: &str, blocks: Vec<CidrBlock>) {
        self.vars.insert(name.to_string(), blocks);
    }

    pub fn get(&self, name: &str) -> Option<&[CidrBlock]> {
        self.vars.get(name).map(Vec::as_slice)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }
}

impl Default for RuleVars {
    /// Server subnet of the built-in scenario topologies.
    fn default() -> Self {
        RuleVars::for_home(crate::simcore::topology::SERVER_NET)
    }
}

/// Rules in file order, with unique sids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Builds a set from already-parsed rules, enforcing sid uniqueness.
    pub fn from_rules(rules: Vec<Rule>) -> Result<Self, RuleError> {
        let mut seen = BTreeMap::new();
        for (i, r) in rules.iter().enumerate() {
            if let Some(first) = seen.insert(r.options.sid, i + 1) {
                return Err(RuleError::DuplicateSid {
                    sid: r.options.sid,
                    line: i + 1,
                    first_line: first,
                });
            }
        }
        Ok(RuleSet { rules })
    }
}

/// The four sample rules used in the reference IDS deployment.
pub const SAMPLE_RULES: &str = r#"alert icmp any any -> \
    any any (msg:"ADMIN-ALERT, ICMP traffic \
    detected";sid:1000004;)

alert tcp any any -> \
    $HOME_NET 80 (msg:"Possible HTTP DoS \
    Attack";sid:1000002;)

alert icmp any any -> \
    $HOME_NET 80 (msg:"Dos Attack suspected";\
    sid:1000001;)

alert tcp $EXTERNAL_NET any -> $HOME_NET \
    445 (msg: "Exploit Detected!"; \
    flow: to_server, established; classtype: \
    attempted-admin; priority: 10; \
    sid: 2094284; rev: 2;)
"#;

/// Parsed form of [`SAMPLE_RULES`] under the default variables.
pub fn sample_ruleset() -> RuleSet {
    parse_ruleset(SAMPLE_RULES, &RuleVars::default()).expect("built-in rules parse")
}

/// A log entry produced for a matching alert or drop rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlertRecord {
    pub sid: u32,
    pub msg: String,
    pub time: SimTime,
    pub tuple: FiveTuple,
    pub action_taken: RuleAction,
}

impl AlertRecord {
    /// `time_us|sid|action|proto|src:sport->dst:dport|msg`
    pub fn log_line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}",
            self.time, self.sid, self.action_taken, self.tuple.proto, self.tuple, self.msg
        )
    }
}

/// Combines the actions of matching rules into a forwarding decision.
///
/// IDS mode never affects forwarding. In IPS mode drop beats alert beats
/// pass.
pub fn verdict(matches: &[(&Rule, RuleAction)], mode: SecMode) -> Verdict {
    match mode {
        SecMode::Ids => Verdict::Forward,
        SecMode::Ips => {
            if matches.iter().any(|(_, a)| *a == RuleAction::Drop) {
                Verdict::Drop
            } else if matches.iter().any(|(_, a)| *a == RuleAction::Alert) {
                Verdict::AlertForward
            } else {
                Verdict::Forward
            }
        }
    }
}

/// True when `a` falls in any block bound to the spec.
pub(crate) fn address_matches(spec: &AddressSpec, a: Address, vars: &RuleVars) -> Result<bool, RuleError> {
    Ok(match spec {
        AddressSpec::Any => true,
        AddressSpec::Literal(b) => b.contains(a),
        AddressSpec::Var(name) => vars
            .get(name)
            .ok_or_else(|| RuleError::UndefinedVariable(name.clone()))?
            .iter()
            .any(|b| b.contains(a)),
    })
}
