//! Controller token for shared displays.
//!
//! One token per room. Whoever holds it may cast to and drive the shared
//! displays; everyone else queues in FIFO order.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type UserId = String;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("caller does not hold the controller token")]
    NotHolder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandClass {
    SharedDisplayCast,
    SharedDisplayControl,
    Personal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlToken {
    pub holder: Option<UserId>,
    pub queue: VecDeque<UserId>,
}

impl ControlToken {
    pub fn is_queued(&self, user: &str) -> bool {
        self.queue.iter().any(|u| u == user)
    }

    pub fn holds(&self, user: &str) -> bool {
        self.holder.as_deref() == Some(user)
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if let Some(h) = &self.holder {
            if self.is_queued(h) {
                return Err(format!("holder {h} is also queued"));
            }
        } else if !self.queue.is_empty() {
            return Err("queue is non-empty while the token is free".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        match self.queue.iter().find(|u| !seen.insert(u.as_str())) {
            Some(dup) => Err(format!("{dup} queued twice")),
            None => Ok(()),
        }
    }
}

pub fn request(token: &ControlToken, user: &str) -> ControlToken {
    let mut next = token.clone();
    match &token.holder {
        None => next.holder = Some(user.to_string()),
        Some(h) if h == user => {}
        Some(_) if token.is_queued(user) => {}
        Some(_) => next.queue.push_back(user.to_string()),
    }
    next
}

/// Hands the token straight to `to`, who leaves the queue if they were in
/// it. The previous holder is not re-queued.
pub fn pass(token: &ControlToken, from: &str, to: &str) -> Result<ControlToken, TokenError> {
    if !token.holds(from) {
        return Err(TokenError::NotHolder);
    }
    let mut next = token.clone();
    next.queue.retain(|u| u != to);
    next.holder = Some(to.to_string());
    Ok(next)
}

pub fn release(token: &ControlToken, user: &str) -> Result<ControlToken, TokenError> {
    if !token.holds(user) {
        return Err(TokenError::NotHolder);
    }
    let mut next = token.clone();
    next.holder = next.queue.pop_front();
    Ok(next)
}

/// Leaves the queue without being served. Holders must release instead.
pub fn withdraw(token: &ControlToken, user: &str) -> ControlToken {
    let mut next = token.clone();
    next.queue.retain(|u| u != user);
    next
}

/// Administrative override for deadlock recovery: frees the token and
/// promotes the head of the queue.
pub fn admin_reset(token: &ControlToken) -> ControlToken {
    let mut next = token.clone();
    next.holder = next.queue.pop_front();
    next
}

pub fn authorize(token: &ControlToken, user: &str, class: CommandClass) -> Decision {
    match class {
        CommandClass::Personal => Decision::Allow,
        CommandClass::SharedDisplayCast | CommandClass::SharedDisplayControl => {
            if token.holds(user) {
                Decision::Allow
            } else {
                Decision::Deny
            }
        }
    }
}
