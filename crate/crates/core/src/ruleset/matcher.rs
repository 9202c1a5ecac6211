use super::{address_matches, Direction, FlowOption, Rule, RuleAction, RuleError, RuleProto, RuleSet, RuleVars};
use super::{FlowFacts, FlowState};
use crate::pktmodel::{FiveTuple, Packet, Proto};

fn proto_matches(rule: RuleProto, pkt: Proto) -> bool {
    matches!(
        (rule, pkt),
        (RuleProto::Ip, _) | (RuleProto::Tcp, Proto::Tcp) | (RuleProto::Udp, Proto::Udp) | (RuleProto::Icmp, Proto::Icmp)
    )
}

/// Header match in one orientation. Port specs are ignored for ICMP.
fn oriented(rule: &Rule, t: &FiveTuple, vars: &RuleVars) -> Result<bool, RuleError> {
    let ports = t.proto == Proto::Icmp || (rule.sport.matches(t.sport) && rule.dport.matches(t.dport));
    Ok(ports && address_matches(&rule.src, t.src, vars)? && address_matches(&rule.dst, t.dst, vars)?)
}

fn flow_matches(rule: &Rule, facts: FlowFacts) -> bool {
    let Some(flow) = &rule.options.flow else {
        return true;
    };
    flow.iter().all(|f| match f {
        FlowOption::Established => facts.established,
        FlowOption::ToServer => facts.from_initiator,
        FlowOption::ToClient => !facts.from_initiator,
    })
}

pub(crate) fn rule_matches(rule: &Rule, t: &FiveTuple, vars: &RuleVars, facts: FlowFacts) -> Result<bool, RuleError> {
    if !proto_matches(rule.proto, t.proto) {
        return Ok(false);
    }
    let header = match rule.direction {
        Direction::Uni => oriented(rule, t, vars)?,
        Direction::Bi => oriented(rule, t, vars)? || oriented(rule, &t.reversed(), vars)?,
    };
    Ok(header && flow_matches(rule, facts))
}

/// Every rule matching `p`, in file order, paired with its action.
pub fn match_packet<'r>(
    rs: &'r RuleSet,
    p: &Packet,
    vars: &RuleVars,
    flow_state: &FlowState,
) -> Result<Vec<(&'r Rule, RuleAction)>, RuleError> {
    let facts = flow_state.facts(&p.tuple);
    let mut out = Vec::new();
    for rule in rs.rules() {
        if rule_matches(rule, &p.tuple, vars, facts)? {
            out.push((rule, rule.action));
        }
    }
    Ok(out)
}
