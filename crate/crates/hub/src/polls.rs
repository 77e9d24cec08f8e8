//! Group polls with per-vote privacy.

use std::collections::{BTreeMap, BTreeSet};

use roomcast_core::arbiter::UserId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PollError {
    #[error("poll `{0}` does not exist")]
    UnknownPoll(String),
    #[error("poll `{0}` already exists")]
    DuplicatePoll(String),
    #[error("poll `{0}` is closed")]
    Closed(String),
    #[error("poll `{poll}` has no option `{option}`")]
    UnknownOption { poll: String, option: String },
    #[error("a poll needs at least 2 distinct options")]
    TooFewOptions,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privacy {
    #[default]
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PollState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub option: String,
    pub privacy: Privacy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poll {
    pub poll_id: String,
    pub question: String,
    pub options: Vec<String>,
    pub state: PollState,
    /// One entry per voter; a revote replaces the earlier one.
    pub votes: BTreeMap<UserId, Vote>,
    /// Cue that opened this poll, if any.
    pub source_cue: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionCount {
    pub option: String,
    pub count: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PublicVote {
    pub user: UserId,
    pub option: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub poll_id: String,
    pub question: String,
    pub state: PollState,
    pub counts: Vec<OptionCount>,
    pub total: u64,
    /// Exactly the users whose current vote is public, in user order.
    pub public_voters: Vec<PublicVote>,
}

impl Poll {
    pub fn new(
        poll_id: impl Into<String>,
        question: impl Into<String>,
        options: Vec<String>,
    ) -> Result<Self, PollError> {
        let distinct: BTreeSet<&String> = options.iter().collect();
        if options.len() < 2 || distinct.len() != options.len() {
            return Err(PollError::TooFewOptions);
        }
        Ok(Poll {
            poll_id: poll_id.into(),
            question: question.into(),
            options,
            state: PollState::Open,
            votes: BTreeMap::new(),
            source_cue: None,
        })
    }

    pub fn vote(&mut self, user: &str, option: &str, privacy: Privacy) -> Result<(), PollError> {
        if self.state == PollState::Closed {
            return Err(PollError::Closed(self.poll_id.clone()));
        }
        if !self.options.iter().any(|o| o == option) {
            return Err(PollError::UnknownOption {
                poll: self.poll_id.clone(),
                option: option.to_string(),
            });
        }
        self.votes.insert(
            user.to_string(),
            Vote {
                option: option.to_string(),
                privacy,
            },
        );
        Ok(())
    }

    pub fn close(&mut self) {
        self.state = PollState::Closed;
    }

    pub fn aggregates(&self) -> Aggregates {
        let total = self.votes.len() as u64;
        let counts = self
            .options
            .iter()
            .map(|o| {
                let count = self.votes.values().filter(|v| &v.option == o).count() as u64;
                let percent = if total == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / total as f64
                };
                OptionCount {
                    option: o.clone(),
                    count,
                    percent,
                }
            })
            .collect();
        let public_voters = self
            .votes
            .iter()
            .filter(|(_, v)| v.privacy == Privacy::Public)
            .map(|(u, v)| PublicVote {
                user: u.clone(),
                option: v.option.clone(),
            })
            .collect();
        Aggregates {
            poll_id: self.poll_id.clone(),
            question: self.question.clone(),
            state: self.state,
            counts,
            total,
            public_voters,
        }
    }
}
