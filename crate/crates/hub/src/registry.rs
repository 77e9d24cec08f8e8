use std::collections::{BTreeMap, BTreeSet};

use roomcast_core::arbiter::UserId;
use roomcast_core::model::DisplayRole;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("a {} display is already registered", .0.as_str())]
    RoleOccupied(DisplayRole),
    #[error("display id `{0}` is already registered")]
    DuplicateId(String),
    #[error("personal displays must be bound to a user")]
    UnboundPersonal,
    #[error("only personal displays can be bound to a user")]
    BoundShared,
    #[error("unknown display `{0}`")]
    UnknownDisplay(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Touch,
    Gesture,
    Voice,
    Video,
    Map,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplayRegistration {
    pub display_id: String,
    pub role: DisplayRole,
    #[serde(default)]
    pub capabilities: BTreeSet<Capability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<UserId>,
}

impl DisplayRegistration {
    pub fn new(display_id: impl Into<String>, role: DisplayRole) -> Self {
        DisplayRegistration {
            display_id: display_id.into(),
            role,
            capabilities: BTreeSet::new(),
            user: None,
        }
    }

    pub fn with(mut self, capability: Capability) -> Self {
        self.capabilities.insert(capability);
        self
    }

    pub fn for_user(mut self, user: impl Into<UserId>) -> Self {
        self.user = Some(user.into());
        self
    }

    /// Surfaces that can be woken for on-demand content by gesture or voice.
    pub fn supports_on_demand(&self) -> bool {
        self.capabilities.contains(&Capability::Gesture) || self.capabilities.contains(&Capability::Voice)
    }
}

/// Registered displays, keyed by id. One of each shared role at most.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    displays: BTreeMap<String, DisplayRegistration>,
}

impl Registry {
    pub fn check(&self, reg: &DisplayRegistration) -> Result<(), RegistryError> {
        if self.displays.contains_key(&reg.display_id) {
            return Err(RegistryError::DuplicateId(reg.display_id.clone()));
        }
        match (reg.role, &reg.user) {
            (DisplayRole::Personal, None) => return Err(RegistryError::UnboundPersonal),
            (DisplayRole::Personal, Some(_)) => {}
            (_, Some(_)) => return Err(RegistryError::BoundShared),
            (role, None) => {
                if self.by_role(role).is_some() {
                    return Err(RegistryError::RoleOccupied(role));
                }
            }
        }
        Ok(())
    }

    pub fn register(&mut self, reg: DisplayRegistration) -> Result<(), RegistryError> {
        self.check(&reg)?;
        self.displays.insert(reg.display_id.clone(), reg);
        Ok(())
    }

    pub fn unregister(&mut self, display_id: &str) -> Result<DisplayRegistration, RegistryError> {
        self.displays
            .remove(display_id)
            .ok_or_else(|| RegistryError::UnknownDisplay(display_id.to_string()))
    }

    pub fn get(&self, display_id: &str) -> Option<&DisplayRegistration> {
        self.displays.get(display_id)
    }

    pub fn by_role(&self, role: DisplayRole) -> Option<&DisplayRegistration> {
        self.displays.values().find(|d| d.role == role)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DisplayRegistration> {
        self.displays.values()
    }

    pub fn len(&self) -> usize {
        self.displays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displays.is_empty()
    }
}
