//! Per-user preference store, persisted as one flat JSON file.
//!
//! ```json
//! { "version": 1,
//!   "users": { "alice": { "interests": ["soundtrack"], "privacy_default": "private" } } }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use roomcast_core::arbiter::UserId;
use roomcast_core::model::ContentKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::polls::Privacy;

pub const PREFS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PrefsError {
    #[error("cannot access preference file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed preference file: {0}")]
    Parse(String),
    #[error("unsupported preference file version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPrefs {
    #[serde(default)]
    pub interests: BTreeSet<ContentKind>,
    #[serde(default)]
    pub privacy_default: Privacy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preferences {
    pub version: u32,
    #[serde(default)]
    pub users: BTreeMap<UserId, UserPrefs>,
}

impl Default for Preferences {
    fn default() -> Self {
        Preferences {
            version: PREFS_VERSION,
            users: BTreeMap::new(),
        }
    }
}

impl Preferences {
    pub fn from_json(text: &str) -> Result<Self, PrefsError> {
        let p: Preferences = serde_json::from_str(text).map_err(|e| PrefsError::Parse(e.to_string()))?;
        if p.version != PREFS_VERSION {
            return Err(PrefsError::Version(p.version));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("preferences serialize")
    }

    /// A missing file is an empty store.
    pub fn load(path: &Path) -> Result<Self, PrefsError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a sibling temp file so a crash never leaves a torn
    /// store behind.
    pub fn save(&self, path: &Path) -> Result<(), PrefsError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn interested(&self, user: &str, kind: ContentKind) -> bool {
        self.users.get(user).is_some_and(|u| u.interests.contains(&kind))
    }

    pub fn privacy_default(&self, user: &str) -> Privacy {
        self.users.get(user).map(|u| u.privacy_default).unwrap_or_default()
    }
}
