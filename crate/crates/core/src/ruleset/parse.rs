use std::collections::BTreeSet;

use super::{
    AddressSpec, Direction, FlowOption, PortSpec, Rule, RuleAction, RuleError, RuleOptions, RuleProto, RuleSet,
    RuleVars,
};
use crate::pktmodel::CidrBlock;

/// Removes `\`-newline continuations together with the indentation that
/// follows them. Returns the joined text and, for each byte of it, the
/// offset of the byte it came from.
fn join_continuations(text: &str) -> (String, Vec<usize>) {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut map = Vec::with_capacity(text.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t' || bytes[j] == b'\r') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                j += 1;
                while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
                    j += 1;
                }
                i = j;
                continue;
            }
        }
        let ch = text[i..].chars().next().expect("char boundary");
        for k in 0..ch.len_utf8() {
            map.push(i + k);
        }
        out.push(ch);
        i += ch.len_utf8();
    }
    map.push(text.len());
    (out, map)
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    map: &'a [usize],
}

impl<'a> Cursor<'a> {
    fn offset(&self) -> usize {
        self.map[self.pos.min(self.map.len() - 1)]
    }

    fn err(&self, message: impl Into<String>) -> RuleError {
        RuleError::syntax(self.offset(), message)
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    /// Reads a header token: a run of characters up to whitespace or `(`.
    fn word(&mut self, what: &str) -> Result<(&'a str, usize), RuleError> {
        self.skip_ws();
        if self.at_end() {
            return Err(self.err(format!("unexpected end of input, expected {what}")));
        }
        let start = self.pos;
        let at = self.offset();
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == '(' {
                break;
            }
            self.pos += c.len_utf8();
        }
        if self.pos == start {
            return Err(self.err(format!("expected {what}")));
        }
        Ok((&self.text[start..self.pos], at))
    }

    fn expect(&mut self, ch: char, what: &str) -> Result<(), RuleError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(c) => Err(self.err(format!("expected {what}, found {c:?}"))),
            None => Err(self.err(format!("unexpected end of input, expected {what}"))),
        }
    }
}

fn parse_action(s: &str, at: usize) -> Result<RuleAction, RuleError> {
    match s {
        "alert" => Ok(RuleAction::Alert),
        "drop" => Ok(RuleAction::Drop),
        "pass" => Ok(RuleAction::Pass),
        _ => Err(RuleError::syntax(at, format!("unknown action {s:?}"))),
    }
}

fn parse_proto(s: &str, at: usize) -> Result<RuleProto, RuleError> {
    match s {
        "tcp" => Ok(RuleProto::Tcp),
        "udp" => Ok(RuleProto::Udp),
        "icmp" => Ok(RuleProto::Icmp),
        "ip" => Ok(RuleProto::Ip),
        _ => Err(RuleError::syntax(at, format!("unknown protocol {s:?}"))),
    }
}

fn parse_address(s: &str, at: usize) -> Result<AddressSpec, RuleError> {
    if s == "any" {
        return Ok(AddressSpec::Any);
    }
    if let Some(name) = s.strip_prefix('$') {
        let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            return Err(RuleError::syntax(at, format!("bad variable name {s:?}")));
        }
        return Ok(AddressSpec::Var(name.to_string()));
    }
    s.parse::<CidrBlock>()
        .map(AddressSpec::Literal)
        .map_err(|e| RuleError::syntax(at, e.to_string()))
}

fn parse_port_number(s: &str, at: usize) -> Result<u16, RuleError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(RuleError::syntax(at, format!("bad port {s:?}")));
    }
    s.parse::<u16>().map_err(|_| RuleError::PortRange {
        offset: at,
        text: s.to_string(),
    })
}

fn parse_port(s: &str, at: usize) -> Result<PortSpec, RuleError> {
    if s == "any" {
        return Ok(PortSpec::Any);
    }
    match s.split_once(':') {
        Some((lo, hi)) => {
            let lo_v = parse_port_number(lo, at)?;
            let hi_v = parse_port_number(hi, at + lo.len() + 1)?;
            if lo_v > hi_v {
                return Err(RuleError::syntax(at, format!("empty port range {s:?}")));
            }
            Ok(PortSpec::Range(lo_v, hi_v))
        }
        None => parse_port_number(s, at).map(PortSpec::Literal),
    }
}

fn parse_u32(value: &str, at: usize, key: &str) -> Result<u32, RuleError> {
    value
        .parse::<u32>()
        .map_err(|_| RuleError::syntax(at, format!("{key} expects an unsigned integer, got {value:?}")))
}

fn parse_quoted(c: &mut Cursor<'_>) -> Result<String, RuleError> {
    c.skip_ws();
    if c.peek() != Some('"') {
        return Err(c.err("expected quoted string"));
    }
    c.pos += 1;
    let mut out = String::new();
    loop {
        match c.peek() {
            None => return Err(c.err("unterminated string")),
            Some('"') => {
                c.pos += 1;
                return Ok(out);
            }
            Some('\\') => {
                c.pos += 1;
                match c.peek() {
                    Some(ch) => {
                        out.push(ch);
                        c.pos += ch.len_utf8();
                    }
                    None => return Err(c.err("unterminated escape")),
                }
            }
            Some(ch) => {
                out.push(ch);
                c.pos += ch.len_utf8();
            }
        }
    }
}

fn parse_options(c: &mut Cursor<'_>) -> Result<RuleOptions, RuleError> {
    c.expect('(', "'('")?;
    let mut opts = RuleOptions::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut have_sid = false;
    loop {
        c.skip_ws();
        match c.peek() {
            None => return Err(c.err("unexpected end of input, expected ')'")),
            Some(')') => {
                c.pos += 1;
                break;
            }
            _ => {}
        }
        let key_at = c.offset();
        let start = c.pos;
        while let Some(ch) = c.peek() {
            if ch.is_ascii_alphanumeric() || ch == '_' {
                c.pos += 1;
            } else {
                break;
            }
        }
        let key = c.text[start..c.pos].to_string();
        if key.is_empty() {
            return Err(c.err("expected option keyword"));
        }
        if !seen.insert(key.clone()) {
            return Err(RuleError::DuplicateOption { key, offset: key_at });
        }
        c.expect(':', "':' after option keyword")?;
        c.skip_ws();
        let value_at = c.offset();
        if key == "msg" {
            opts.msg = parse_quoted(c)?;
        } else {
            let vstart = c.pos;
            while let Some(ch) = c.peek() {
                if ch == ';' || ch == ')' {
                    break;
                }
                c.pos += ch.len_utf8();
            }
            let value = c.text[vstart..c.pos].trim();
            match key.as_str() {
                "sid" => {
                    let sid = parse_u32(value, value_at, "sid")?;
                    if sid == 0 {
                        return Err(RuleError::syntax(value_at, "sid must be at least 1"));
                    }
                    opts.sid = sid;
                    have_sid = true;
                }
                "rev" => opts.rev = Some(parse_u32(value, value_at, "rev")?),
                "priority" => opts.priority = Some(parse_u32(value, value_at, "priority")?),
                "classtype" => {
                    if value.is_empty() || !value.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_') {
                        return Err(RuleError::syntax(value_at, format!("bad classtype {value:?}")));
                    }
                    opts.classtype = Some(value.to_string());
                }
                "flow" => {
                    let mut set = BTreeSet::new();
                    for item in value.split(',') {
                        let f = match item.trim() {
                            "to_server" | "from_client" => FlowOption::ToServer,
                            "to_client" | "from_server" => FlowOption::ToClient,
                            "established" => FlowOption::Established,
                            other => return Err(RuleError::syntax(value_at, format!("unknown flow keyword {other:?}"))),
                        };
                        set.insert(f);
                    }
                    if set.contains(&FlowOption::ToServer) && set.contains(&FlowOption::ToClient) {
                        return Err(RuleError::syntax(value_at, "flow cannot be both to_server and to_client"));
                    }
                    opts.flow = Some(set);
                }
                _ => return Err(RuleError::syntax(key_at, format!("unknown option {key:?}"))),
            }
        }
        c.skip_ws();
        match c.peek() {
            Some(';') => c.pos += 1,
            Some(')') => {}
            Some(ch) => return Err(c.err(format!("expected ';' after option, found {ch:?}"))),
            None => return Err(c.err("unexpected end of input, expected ';'")),
        }
    }
    if !have_sid {
        return Err(c.err("rule has no sid"));
    }
    Ok(opts)
}

/// Parses a single logical rule. `\`-newline continuations are accepted.
pub fn parse_rule(text: &str) -> Result<Rule, RuleError> {
    let (joined, map) = join_continuations(text);
    let mut c = Cursor {
        text: &joined,
        pos: 0,
        map: &map,
    };
    let (w, at) = c.word("action")?;
    let action = parse_action(w, at)?;
    let (w, at) = c.word("protocol")?;
    let proto = parse_proto(w, at)?;
    let (w, at) = c.word("source address")?;
    let src = parse_address(w, at)?;
    let (w, at) = c.word("source port")?;
    let sport = parse_port(w, at)?;
    let (w, at) = c.word("direction")?;
    let direction = match w {
        "->" => Direction::Uni,
        "<>" => Direction::Bi,
        _ => return Err(RuleError::syntax(at, format!("expected '->' or '<>', found {w:?}"))),
    };
    let (w, at) = c.word("destination address")?;
    let dst = parse_address(w, at)?;
    let (w, at) = c.word("destination port")?;
    let dport = parse_port(w, at)?;
    let options = parse_options(&mut c)?;
    c.skip_ws();
    if !c.at_end() {
        return Err(c.err("trailing characters after rule"));
    }
    Ok(Rule {
        action,
        proto,
        src,
        sport,
        direction,
        dst,
        dport,
        options,
    })
}

fn fmt_addr(a: &AddressSpec) -> String {
    match a {
        AddressSpec::Any => "any".into(),
        AddressSpec::Var(n) => format!("${n}"),
        AddressSpec::Literal(b) if b.prefix_len() == 32 => b.base().to_string(),
        AddressSpec::Literal(b) => b.to_string(),
    }
}

fn fmt_port(p: &PortSpec) -> String {
    match p {
        PortSpec::Any => "any".into(),
        PortSpec::Literal(n) => n.to_string(),
        PortSpec::Range(lo, hi) => format!("{lo}:{hi}"),
    }
}

/// Canonical single-line rendering; re-parses to an equal rule.
pub fn serialize_rule(r: &Rule) -> String {
    let mut opts = Vec::new();
    if !r.options.msg.is_empty() {
        let escaped = r.options.msg.replace('\\', "\\\\").replace('"', "\\\"");
        opts.push(format!("msg:\"{escaped}\";"));
    }
    if let Some(flow) = &r.options.flow {
        let items: Vec<&str> = flow.iter().map(|f| f.as_str()).collect();
        opts.push(format!("flow:{};", items.join(",")));
    }
    if let Some(ct) = &r.options.classtype {
        opts.push(format!("classtype:{ct};"));
    }
    if let Some(p) = r.options.priority {
        opts.push(format!("priority:{p};"));
    }
    opts.push(format!("sid:{};", r.options.sid));
    if let Some(rev) = r.options.rev {
        opts.push(format!("rev:{rev};"));
    }
    format!(
        "{} {} {} {} {} {} {} ({})",
        r.action.as_str(),
        r.proto.as_str(),
        fmt_addr(&r.src),
        fmt_port(&r.sport),
        match r.direction {
            Direction::Uni => "->",
            Direction::Bi => "<>",
        },
        fmt_addr(&r.dst),
        fmt_port(&r.dport),
        opts.join(" ")
    )
}

/// Parses a rule file: one rule per logical line, `#` comments, blank
/// lines ignored. Every `$VAR` must be bound in `vars`.
pub fn parse_ruleset(text: &str, vars: &RuleVars) -> Result<RuleSet, RuleError> {
    let mut rules: Vec<(usize, Rule)> = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let continues = line.trim_end().ends_with('\\');
        match pending.as_mut() {
            Some((_, buf)) => {
                buf.push('\n');
                buf.push_str(line);
            }
            None => {
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                pending = Some((lineno, line.to_string()));
            }
        }
        if !continues {
            let (start, buf) = pending.take().expect("pending rule");
            rules.push((start, parse_one(&buf, start, vars)?));
        }
    }
    if let Some((start, buf)) = pending {
        rules.push((start, parse_one(&buf, start, vars)?));
    }

    let mut first_seen = std::collections::BTreeMap::new();
    for (line, r) in &rules {
        if let Some(&first_line) = first_seen.get(&r.options.sid) {
            return Err(RuleError::DuplicateSid {
                sid: r.options.sid,
                line: *line,
                first_line,
            });
        }
        first_seen.insert(r.options.sid, *line);
    }
    Ok(RuleSet {
        rules: rules.into_iter().map(|(_, r)| r).collect(),
    })
}

fn parse_one(text: &str, line: usize, vars: &RuleVars) -> Result<Rule, RuleError> {
    let at_line = |e: RuleError| RuleError::AtLine {
        line,
        source: Box::new(e),
    };
    let rule = parse_rule(text).map_err(at_line)?;
    for spec in [&rule.src, &rule.dst] {
        if let AddressSpec::Var(name) = spec {
            if !vars.contains(name) {
                return Err(at_line(RuleError::UndefinedVariable(name.clone())));
            }
        }
    }
    Ok(rule)
}
