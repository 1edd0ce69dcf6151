//! What a bot remembers across conversations: the last opinion it saw each
//! player hold, and a summary of its last conversation with them.

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::domain::{OpinionChoice, OpinionId};
use crate::engine::ParticipantId;
use crate::text::tokens;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartnerMemory {
    pub last_known_opinion: Option<OpinionId>,
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub me: ParticipantId,
    pub own_opinion: OpinionId,
    pub partners: BTreeMap<ParticipantId, PartnerMemory>,
}

impl AgentMemory {
    pub fn new(me: ParticipantId, own_opinion: OpinionId) -> Self {
        Self { me, own_opinion, partners: BTreeMap::new() }
    }

    /// Records the opinion `partner` was last seen holding.
    pub fn update_beliefs(&mut self, partner: ParticipantId, opinion: &str) {
        if partner != self.me {
            self.partners.entry(partner).or_default().last_known_opinion = Some(opinion.into());
        }
    }

    pub fn remember_summary(&mut self, partner: ParticipantId, summary: String) {
        self.partners.entry(partner).or_default().summary = Some(summary);
    }

    pub fn known_opinion(&self, p: ParticipantId) -> Option<&str> {
        self.partners.get(&p)?.last_known_opinion.as_deref()
    }

    pub fn summary(&self, p: ParticipantId) -> Option<&str> {
        self.partners.get(&p)?.summary.as_deref()
    }

    /// Believed bloc sizes for a conversation with `partner`: allies
    /// including self, and the partner's bloc including the partner. Only
    /// third parties are counted on top of the base of one each, so the two
    /// never exceed the roster size together.
    pub fn beliefs(&self, partner: ParticipantId) -> (u32, u32) {
        let third = || self.partners.iter().filter(move |(q, _)| **q != partner && **q != self.me);
        let holding = |op: &str| {
            third().filter(|(_, m)| m.last_known_opinion.as_deref() == Some(op)).count() as u32
        };
        let allies = 1 + holding(&self.own_opinion);
        let opponents = match self.known_opinion(partner) {
            Some(op) if op != self.own_opinion => 1 + holding(op),
            _ => 1,
        };
        (allies, opponents)
    }
}

fn token_matches(token: &str, choice: &OpinionChoice) -> bool {
    let id = choice.id.to_lowercase();
    let label = choice.label.to_lowercase();
    if token == id || token == label || token.starts_with(&id) {
        return true;
    }
    // omnivore/omnivorous, pescetarian/pescatarian and similar stems
    let stem: String = id.chars().take(4).collect();
    id.chars().count() >= 4 && token.chars().count() >= 4 && token.starts_with(&stem)
}

/// The last choice mentioned in `text`, if any.
pub fn infer_opinion(text: &str, choices: &[OpinionChoice]) -> Option<OpinionId> {
    tokens(text)
        .iter()
        .rev()
        .find_map(|t| choices.iter().find(|c| token_matches(t, c)).map(|c| c.id.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_choices;

    fn p(n: u32) -> ParticipantId {
        ParticipantId(n)
    }

    #[test]
    fn first_contact_is_one_and_one() {
        let m = AgentMemory::new(p(0), "vegan".into());
        assert_eq!(m.beliefs(p(1)), (1, 1));
    }

    #[test]
    fn partner_bloc_grows_with_known_third_parties() {
        let mut m = AgentMemory::new(p(0), "vegan".into());
        m.update_beliefs(p(1), "omnivorous");
        m.update_beliefs(p(2), "omnivorous");
        assert_eq!(m.beliefs(p(2)), (1, 2));
        // unknown partner opinion gives no bloc information
        assert_eq!(m.beliefs(p(3)), (1, 1));
    }

    #[test]
    fn agreement_grows_allies() {
        let mut m = AgentMemory::new(p(0), "vegan".into());
        m.update_beliefs(p(1), "vegan");
        assert_eq!(m.beliefs(p(2)), (2, 1));
        // talking to the ally itself: both already in the conversation
        assert_eq!(m.beliefs(p(1)), (1, 1));
    }

    #[test]
    fn beliefs_never_exceed_roster() {
        let mut m = AgentMemory::new(p(0), "vegan".into());
        for q in 1..6 {
            m.update_beliefs(p(q), if q % 2 == 0 { "vegan" } else { "fish" });
        }
        m.update_beliefs(p(0), "fish");
        for q in 1..6 {
            let (b, g) = m.beliefs(p(q));
            assert!(b >= 1 && g >= 1 && b + g <= 6, "{q}: {b} {g}");
        }
    }

    #[test]
    fn opinion_inference() {
        let c = default_choices();
        assert_eq!(infer_opinion("I went Pescatarian honestly", &c).as_deref(), Some("pescatarian"));
        assert_eq!(infer_opinion("not vegan, I'm an omnivore", &c).as_deref(), Some("omnivorous"));
        assert_eq!(infer_opinion("vegetarians are fine", &c).as_deref(), Some("vegetarian"));
        assert_eq!(infer_opinion("pescetarian", &c).as_deref(), Some("pescatarian"));
        assert_eq!(infer_opinion("hello there", &c), None);
    }
}
