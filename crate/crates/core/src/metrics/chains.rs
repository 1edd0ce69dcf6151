//! Message chains, holding periods and response times.

use alloc::vec::Vec;

use super::MetricsError;
use crate::engine::{Message, Millis, ParticipantId};

/// Response times above this many seconds are treated as erroneous.
pub const MAX_RESPONSE_S: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stamp {
    pub sender: ParticipantId,
    pub at_ms: Millis,
}

impl From<&Message> for Stamp {
    fn from(m: &Message) -> Self {
        Self { sender: m.sender, at_ms: m.at_ms }
    }
}

/// A maximal run of messages from one sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageChain {
    pub sender: ParticipantId,
    /// Index of the first message in the conversation.
    pub first: usize,
    pub len: usize,
    pub start_ms: Millis,
    pub end_ms: Millis,
}

impl MessageChain {
    /// Seconds from first to last message; only for chains of two or more.
    pub fn holding_period_s(&self) -> Option<f64> {
        (self.len >= 2).then(|| (self.end_ms - self.start_ms) as f64 / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSample {
    pub participant: ParticipantId,
    pub seconds: f64,
}

pub fn segment_chains(messages: &[Stamp]) -> Result<Vec<MessageChain>, MetricsError> {
    if let Some(i) = messages.windows(2).position(|w| w[1].at_ms < w[0].at_ms) {
        return Err(MetricsError::Unordered { index: i + 1 });
    }
    let mut chains: Vec<MessageChain> = Vec::new();
    for (i, m) in messages.iter().enumerate() {
        match chains.last_mut() {
            Some(c) if c.sender == m.sender => {
                c.len += 1;
                c.end_ms = m.at_ms;
            }
            _ => chains.push(MessageChain { sender: m.sender, first: i, len: 1, start_ms: m.at_ms, end_ms: m.at_ms }),
        }
    }
    Ok(chains)
}

pub fn holding_periods(chains: &[MessageChain]) -> Vec<TimingSample> {
    chains
        .iter()
        .filter_map(|c| c.holding_period_s().map(|seconds| TimingSample { participant: c.sender, seconds }))
        .collect()
}

/// Reply delays between consecutive chains, keeping only values in (0, 500] s.
pub fn response_times(chains: &[MessageChain]) -> Vec<TimingSample> {
    chains
        .windows(2)
        .map(|w| TimingSample {
            participant: w[1].sender,
            seconds: (w[1].start_ms as f64 - w[0].end_ms as f64) / 1000.0,
        })
        .filter(|s| s.seconds > 0.0 && s.seconds <= MAX_RESPONSE_S)
        .collect()
}
