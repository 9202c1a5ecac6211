use std::fmt;
use std::str::FromStr;

use crate::pktmodel::{Address, CidrBlock, NodeId};
use crate::secfn::SecMode;

pub const CLIENT_ADDR: Address = Address::new(10, 0, 0, 2);
/// Default UE address handed out by the 5G core's user-plane pool.
pub const UE_ADDR: Address = Address::new(10, 45, 0, 2);
pub const SERVER_ADDR: Address = Address::new(192, 168, 122, 10);
/// The VNF's server-facing address, used as the masquerade source.
pub const VNF_EXTERNAL_ADDR: Address = Address::new(192, 168, 122, 1);
pub const SERVER_NET: CidrBlock = match CidrBlock::const_new(Address::new(192, 168, 122, 0), 24) {
    Some(b) => b,
    None => panic!("bad SERVER_NET"),
};
pub const CLIENT_SPORT: u16 = 40000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChainPreset {
    Scenario1Ids,
    Scenario2Ips,
    FivegIds,
    FivegIps,
}

impl ChainPreset {
    pub const ALL: [ChainPreset; 4] = [
        ChainPreset::Scenario1Ids,
        ChainPreset::Scenario2Ips,
        ChainPreset::FivegIds,
        ChainPreset::FivegIps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChainPreset::Scenario1Ids => "scenario1_ids",
            ChainPreset::Scenario2Ips => "scenario2_ips",
            ChainPreset::FivegIds => "fiveg_ids",
            ChainPreset::FivegIps => "fiveg_ips",
        }
    }

    pub fn default_mode(self) -> SecMode {
        match self {
            ChainPreset::Scenario1Ids | ChainPreset::FivegIds => SecMode::Ids,
            ChainPreset::Scenario2Ips | ChainPreset::FivegIps => SecMode::Ips,
        }
    }

    pub fn is_5g(self) -> bool {
        matches!(self, ChainPreset::FivegIds | ChainPreset::FivegIps)
    }
}

impl fmt::Display for ChainPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChainPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChainPreset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown scenario {s:?} (expected scenario1_ids|scenario2_ips|fiveg_ids|fiveg_ips)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Client,
    Server,
    Vnf,
    Ue,
    Gnb,
    Upf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Placement {
    Vm,
    Container,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Vm => "vm",
            Placement::Container => "container",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Placement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vm" => Ok(Placement::Vm),
            "container" => Ok(Placement::Container),
            other => Err(format!("unknown placement {other:?} (expected vm|container)")),
        }
    }
}

/// Multipliers applied to every VNF service time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlacementProfile {
    pub vm: f64,
    pub container: f64,
}

impl Default for PlacementProfile {
    fn default() -> Self {
        PlacementProfile { vm: 1.5, container: 1.0 }
    }
}

impl PlacementProfile {
    pub fn multiplier(&self, p: Placement) -> f64 {
        match p {
            Placement::Vm => self.vm,
            Placement::Container => self.container,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub role: Role,
    pub placement: Placement,
    pub addr: Address,
}

/// A linear chain: node `i` links to node `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainTopology {
    pub preset: ChainPreset,
    pub nodes: Vec<Node>,
}

impl ChainTopology {
    pub fn new(preset: ChainPreset, placement: Placement) -> Self {
        let node = |id, role, addr| Node { id, role, placement, addr };
        let nodes = if preset.is_5g() {
            vec![
                node(0, Role::Ue, UE_ADDR),
                node(1, Role::Gnb, Address::new(10, 10, 0, 2)),
                node(2, Role::Upf, VNF_EXTERNAL_ADDR),
                node(3, Role::Server, SERVER_ADDR),
            ]
        } else {
            vec![
                node(0, Role::Client, CLIENT_ADDR),
                node(1, Role::Vnf, VNF_EXTERNAL_ADDR),
                node(2, Role::Server, SERVER_ADDR),
            ]
        };
        ChainTopology { preset, nodes }
    }

    pub fn source(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn sink(&self) -> &Node {
        self.nodes.last().expect("nonempty chain")
    }

    pub fn vnf(&self) -> NodeId {
        self.nodes
            .iter()
            .position(|n| matches!(n.role, Role::Vnf | Role::Upf))
            .expect("chain has a VNF")
    }

    pub fn link_count(&self) -> usize {
        self.nodes.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_wire_expected_roles() {
        let s1 = ChainTopology::new(ChainPreset::Scenario1Ids, Placement::Vm);
        assert_eq!(s1.nodes.iter().map(|n| n.role).collect::<Vec<_>>(), vec![Role::Client, Role::Vnf, Role::Server]);
        assert_eq!(s1.vnf(), 1);
        let g = ChainTopology::new(ChainPreset::FivegIps, Placement::Container);
        assert_eq!(
            g.nodes.iter().map(|n| n.role).collect::<Vec<_>>(),
            vec![Role::Ue, Role::Gnb, Role::Upf, Role::Server]
        );
        assert_eq!(g.vnf(), 2);
        assert_eq!(g.link_count(), 3);
    }

    #[test]
    fn names_round_trip() {
        for p in ChainPreset::ALL {
            assert_eq!(p.as_str().parse::<ChainPreset>().unwrap(), p);
        }
        assert!("scenario3".parse::<ChainPreset>().is_err());
        assert_eq!(SERVER_NET.to_string(), "192.168.122.0/24");
    }
}
