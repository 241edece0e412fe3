//! The two N6 egress interfaces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// N6 egress interface identifier. `N6a` fronts the MEC endpoint, `N6b` the
/// cloud endpoint. Doubles as the agent's discrete action: index 0 is `N6a`,
/// index 1 is `N6b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interface {
    N6a,
    N6b,
}

/// Both interfaces, in action-index order.
pub const INTERFACES: [Interface; 2] = [Interface::N6a, Interface::N6b];

impl Interface {
    /// Action index: 0 for `n6a`, 1 for `n6b`.
    pub fn index(self) -> usize {
        match self {
            Interface::N6a => 0,
            Interface::N6b => 1,
        }
    }

    /// Inverse of [`Interface::index`]. Panics on indices other than 0 or 1.
    pub fn from_index(index: usize) -> Self {
        match index {
            0 => Interface::N6a,
            1 => Interface::N6b,
            _ => panic!("interface index out of range: {index}"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Interface::N6a => "n6a",
            Interface::N6b => "n6b",
        }
    }
}

impl fmt::Display for Interface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Interface {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n6a" => Ok(Interface::N6a),
            "n6b" => Ok(Interface::N6b),
            other => Err(format!("unknown interface {other:?} (expected n6a or n6b)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for iface in INTERFACES {
            assert_eq!(Interface::from_index(iface.index()), iface);
        }
    }

    #[test]
    fn parse_rejects_unknown_names() {
        assert!("n6c".parse::<Interface>().is_err());
        assert_eq!("n6b".parse::<Interface>().unwrap(), Interface::N6b);
    }
}
