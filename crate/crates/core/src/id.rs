use std::fmt;
use std::str::FromStr;

/// Identifier of a node. Always nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn new(id: u32) -> Option<NodeId> {
        (id != 0).then_some(NodeId(id))
    }

    /// Node ids are dense from 1; this is the matching zero-based slot.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(i: usize) -> NodeId {
        NodeId(i as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: u32 = s.trim().parse().map_err(|_| format!("bad node id `{s}`"))?;
        NodeId::new(v).ok_or_else(|| "node id 0 is reserved".to_string())
    }
}

/// Shorthand used heavily in tests and fixtures.
pub fn nid(id: u32) -> NodeId {
    NodeId::new(id).expect("node ids are nonzero")
}
