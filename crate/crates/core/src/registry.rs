//! Consortium member registry.
//!
//! File format, one member per line:
//!
//! ```text
//! role hex_id hex_pubkey [home=hex_hsa_id]
//! ```
//!
//! `#` starts a comment. The optional `home=` field binds a testing facility
//! to the authority that accepts its submissions. Authorities are scheduled in
//! the order they appear in the file.

use std::fmt::Write as _;

use thiserror::Error;

use crate::types::{ActorId, EncodingError, MemberId, PublicKey, Role};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("member {0} is already registered")]
    Duplicate(MemberId),
    #[error("home authority {0} is not a registered HSA")]
    UnknownHome(MemberId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub actor: ActorId,
    /// Home authority, for testing facilities.
    pub home: Option<MemberId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    members: Vec<Member>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, actor: ActorId) -> Result<(), RegistryError> {
        self.add_member(Member { actor, home: None })
    }

    pub fn add_member(&mut self, member: Member) -> Result<(), RegistryError> {
        if self.get(&member.actor.id).is_some() {
            return Err(RegistryError::Duplicate(member.actor.id));
        }
        if let Some(home) = member.home {
            if self.get(&home).map(|m| m.actor.role) != Some(Role::Hsa) {
                return Err(RegistryError::UnknownHome(home));
            }
        }
        self.members.push(member);
        Ok(())
    }

    pub fn get(&self, id: &MemberId) -> Option<&Member> {
        self.members.iter().find(|m| &m.actor.id == id)
    }

    pub fn actor(&self, id: &MemberId) -> Option<&ActorId> {
        self.get(id).map(|m| &m.actor)
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ActorId> {
        self.members
            .iter()
            .map(|m| &m.actor)
            .filter(move |a| a.role == role)
    }

    /// HSAs in file order; this is the proposer rotation.
    pub fn authority_set(&self) -> Vec<ActorId> {
        self.with_role(Role::Hsa).cloned().collect()
    }

    pub fn issuers(&self) -> Vec<ActorId> {
        self.with_role(Role::Thf).cloned().collect()
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut reg = Registry::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| RegistryError::Parse { line: n + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(parse_err(format!("expected 3 or 4 fields, got {}", fields.len())));
            }
            let role: Role = fields[0].parse().map_err(|e: EncodingError| parse_err(e.to_string()))?;
            let id = MemberId::from_hex(fields[1]).map_err(|e| parse_err(e.to_string()))?;
            let public_key = PublicKey::from_hex(fields[2]).map_err(|e| parse_err(e.to_string()))?;
            let home = match fields.get(3) {
                None => None,
                Some(f) => {
                    let hex = f
                        .strip_prefix("home=")
                        .ok_or_else(|| parse_err(format!("unknown field {f:?}")))?;
                    Some(MemberId::from_hex(hex).map_err(|e| parse_err(e.to_string()))?)
                }
            };
            reg.add_member(Member {
                actor: ActorId {
                    role,
                    id,
                    public_key,
                },
                home,
            })
            .map_err(|e| match e {
                RegistryError::Parse { .. } => e,
                other => parse_err(other.to_string()),
            })?;
        }
        Ok(reg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.members {
            let _ = write!(out, "{} {} {}", m.actor.role, m.actor.id, m.actor.public_key);
            if let Some(home) = m.home {
                let _ = write!(out, " home={home}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn actor(role: Role, b: u8) -> ActorId {
        ActorId {
            role,
            id: MemberId([b; 16]),
            public_key: PublicKey([b; 32]),
        }
    }

    #[test]
    fn text_round_trip_preserves_order_and_homes() {
        let mut reg = Registry::new();
        reg.add(actor(Role::Hsa, 2)).unwrap();
        reg.add(actor(Role::Hsa, 1)).unwrap();
        reg.add_member(Member {
            actor: actor(Role::Thf, 3),
            home: Some(MemberId([1; 16])),
        })
        .unwrap();
        reg.add(actor(Role::Bm, 4)).unwrap();
        let parsed = Registry::parse(&reg.to_text()).unwrap();
        assert_eq!(parsed, reg);
        let ids: Vec<u8> = parsed.authority_set().iter().map(|a| a.id.0[0]).collect();
        assert_eq!(ids, vec![2, 1]);
    }

    #[test]
    fn duplicates_and_bad_lines_are_rejected() {
        let mut reg = Registry::new();
        reg.add(actor(Role::Bm, 4)).unwrap();
        assert_eq!(
            reg.add(actor(Role::Thf, 4)),
            Err(RegistryError::Duplicate(MemberId([4; 16])))
        );
        let err = Registry::parse("# header\nhsa 00 11\n").unwrap_err();
        assert!(matches!(err, RegistryError::Parse { line: 2, .. }));
        assert!(Registry::parse("pilot 0101 0202").is_err());
    }

    #[test]
    fn home_must_name_a_known_authority() {
        let mut reg = Registry::new();
        reg.add(actor(Role::Bm, 4)).unwrap();
        let err = reg
            .add_member(Member {
                actor: actor(Role::Thf, 3),
                home: Some(MemberId([4; 16])),
            })
            .unwrap_err();
        assert_eq!(err, RegistryError::UnknownHome(MemberId([4; 16])));
    }
}
