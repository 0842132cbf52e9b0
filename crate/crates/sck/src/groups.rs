//! The sixteen treatment/outcome response strata.
//!
//! Every unit is classified by how its treatment take-up responds to
//! assignment and how its outcome responds to take-up. Each dimension uses
//! the always-taker / never-taker / complier / defier taxonomy, giving a
//! 4 x 4 grid of latent groups. A group is written as a two-letter code,
//! treatment response first: `cc` is a unit that takes up iff assigned and
//! whose outcome improves iff it takes up (a supercomplier).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Response of one variable (treatment or outcome) to its upstream cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResponseType {
    /// Equal to 1 in both states.
    AlwaysTaker,
    /// Equal to 0 in both states.
    NeverTaker,
    /// 0 when unexposed, 1 when exposed.
    Complier,
    /// 1 when unexposed, 0 when exposed.
    Defier,
}

impl ResponseType {
    pub const ALL: [ResponseType; 4] = [
        ResponseType::AlwaysTaker,
        ResponseType::NeverTaker,
        ResponseType::Complier,
        ResponseType::Defier,
    ];

    /// Potential values `(v_0, v_1)` under the two upstream states.
    pub fn potentials(self) -> (u8, u8) {
        match self {
            ResponseType::AlwaysTaker => (1, 1),
            ResponseType::NeverTaker => (0, 0),
            ResponseType::Complier => (0, 1),
            ResponseType::Defier => (1, 0),
        }
    }

    pub fn code(self) -> char {
        match self {
            ResponseType::AlwaysTaker => 'a',
            ResponseType::NeverTaker => 'n',
            ResponseType::Complier => 'c',
            ResponseType::Defier => 'f',
        }
    }

    fn from_code(c: char) -> Option<Self> {
        match c {
            'a' => Some(ResponseType::AlwaysTaker),
            'n' => Some(ResponseType::NeverTaker),
            'c' => Some(ResponseType::Complier),
            'f' => Some(ResponseType::Defier),
            _ => None,
        }
    }

    fn index(self) -> usize {
        match self {
            ResponseType::AlwaysTaker => 0,
            ResponseType::NeverTaker => 1,
            ResponseType::Complier => 2,
            ResponseType::Defier => 3,
        }
    }
}

/// One of the sixteen latent strata, indexed by treatment response and
/// outcome response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Group {
    pub treatment: ResponseType,
    pub outcome: ResponseType,
}

/// Potential treatment and outcome values `(d0, d1, y0, y1)` for a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Potentials {
    pub d0: u8,
    pub d1: u8,
    pub y0: u8,
    pub y1: u8,
}

impl Group {
    pub const fn new(treatment: ResponseType, outcome: ResponseType) -> Self {
        Group { treatment, outcome }
    }

    /// The supercomplier group `cc`.
    pub const CC: Group = Group::new(ResponseType::Complier, ResponseType::Complier);
    /// Compliers whose outcome is 1 regardless of take-up.
    pub const CA: Group = Group::new(ResponseType::Complier, ResponseType::AlwaysTaker);
    /// Compliers whose outcome is 0 regardless of take-up.
    pub const CN: Group = Group::new(ResponseType::Complier, ResponseType::NeverTaker);
    /// Compliers harmed by take-up; ruled out by outcome monotonicity.
    pub const CF: Group = Group::new(ResponseType::Complier, ResponseType::Defier);

    /// All sixteen groups in a fixed order (treatment-major).
    pub fn all() -> impl Iterator<Item = Group> {
        ResponseType::ALL
            .into_iter()
            .flat_map(|t| ResponseType::ALL.into_iter().map(move |o| Group::new(t, o)))
    }

    /// Dense index in `0..16`, consistent with the order of [`Group::all`].
    pub fn index(self) -> usize {
        self.treatment.index() * 4 + self.outcome.index()
    }

    /// Potential values: treatment responds to assignment, outcome to
    /// take-up.
    pub fn potentials(self) -> Potentials {
        let (d0, d1) = self.treatment.potentials();
        let (y0, y1) = self.outcome.potentials();
        Potentials { d0, d1, y0, y1 }
    }

    /// Realized `(d, y)` for a unit of this group assigned `z`.
    pub fn realize(self, z: u8) -> (u8, u8) {
        let p = self.potentials();
        let d = if z == 1 { p.d1 } else { p.d0 };
        let y = if d == 1 { p.y1 } else { p.y0 };
        (d, y)
    }

    /// Whether this group is allowed under treatment and outcome
    /// monotonicity: neither response may be a defier.
    pub fn admissible(self) -> bool {
        self.treatment != ResponseType::Defier && self.outcome != ResponseType::Defier
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.treatment.code(), self.outcome.code())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let (t, o, rest) = (chars.next(), chars.next(), chars.next());
        match (t.and_then(ResponseType::from_code), o.and_then(ResponseType::from_code), rest) {
            (Some(t), Some(o), None) => Ok(Group::new(t, o)),
            _ => Err(format!("invalid group code `{s}` (expected two of a/n/c/f)")),
        }
    }
}

impl Serialize for Group {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Group {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn g(code: &str) -> Group {
        code.parse().unwrap()
    }

    #[test]
    fn potentials_match_the_stratification_table() {
        assert_eq!(g("cc").potentials(), Potentials { d0: 0, d1: 1, y0: 0, y1: 1 });
        assert_eq!(g("an").potentials(), Potentials { d0: 1, d1: 1, y0: 0, y1: 0 });
        assert_eq!(g("ff").potentials(), Potentials { d0: 1, d1: 0, y0: 1, y1: 0 });
        assert_eq!(g("na").potentials(), Potentials { d0: 0, d1: 0, y0: 1, y1: 1 });
        assert_eq!(g("ca").potentials(), Potentials { d0: 0, d1: 1, y0: 1, y1: 1 });
    }

    #[test]
    fn potentials_are_injective_over_all_sixteen_groups() {
        let distinct: HashSet<_> = Group::all()
            .map(|g| {
                let p = g.potentials();
                (p.d0, p.d1, p.y0, p.y1)
            })
            .collect();
        assert_eq!(distinct.len(), 16);
    }

    #[test]
    fn admissibility_is_equivalent_to_monotone_potentials() {
        for group in Group::all() {
            let p = group.potentials();
            let monotone = p.d1 >= p.d0 && p.y1 >= p.y0;
            assert_eq!(group.admissible(), monotone, "group {group}");
        }
        assert_eq!(Group::all().filter(|g| g.admissible()).count(), 9);
    }

    #[test]
    fn codes_round_trip() {
        for group in Group::all() {
            assert_eq!(g(&group.to_string()), group);
        }
        assert!("cx".parse::<Group>().is_err());
        assert!("ccc".parse::<Group>().is_err());
    }

    #[test]
    fn indices_are_dense_and_ordered() {
        let idx: Vec<usize> = Group::all().map(Group::index).collect();
        assert_eq!(idx, (0..16).collect::<Vec<_>>());
    }
}
