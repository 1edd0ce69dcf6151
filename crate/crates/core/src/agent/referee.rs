//! Post-conversation assessment: parsing the referee's one-line answer and
//! the reprompt/default policy around it.

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::domain::{OpinionChoice, OpinionId, PerceivedConfidence, PersonalConfidence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub new_opinion: OpinionId,
    pub personal: PersonalConfidence,
    pub perceived: PerceivedConfidence,
}

impl Assessment {
    /// Keep opinion and confidence, rate the partner "Not enough info".
    pub fn conservative(own: &str, confidence: PersonalConfidence) -> Self {
        Self { new_opinion: own.to_string(), personal: confidence, perceived: PerceivedConfidence::NOT_ENOUGH_INFO }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefereeOutcome {
    Parsed(Assessment),
    /// The first answer was unreadable, the reprompt worked.
    Reprompted(Assessment),
    /// Both answers were unreadable.
    Defaulted(Assessment),
}

impl RefereeOutcome {
    pub fn assessment(&self) -> &Assessment {
        match self {
            RefereeOutcome::Parsed(a) | RefereeOutcome::Reprompted(a) | RefereeOutcome::Defaulted(a) => a,
        }
    }
}

/// Text sent when the first answer could not be parsed.
pub const REPROMPT: &str = "Your answer could not be read. Reply with exactly one line in the format \
     opinion=<choice>; personal=<1-4>; perceived=<0-4> and nothing else.";

fn clean(v: &str) -> String {
    v.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '<' || c == '>' || c == '.').trim().to_lowercase()
}

/// Parses `opinion=<id>; personal=<1-4>; perceived=<0-4>` from the first
/// line that has all three keys. Keys are case-insensitive; the opinion may
/// be given by id or label.
pub fn parse_assessment(text: &str, choices: &[OpinionChoice]) -> Option<Assessment> {
    text.lines().find_map(|line| {
        let (mut opinion, mut personal, mut perceived) = (None, None, None);
        for field in line.split(';') {
            let Some((k, v)) = field.split_once('=') else { continue };
            let v = clean(v);
            match clean(k).as_str() {
                "opinion" => {
                    opinion = choices
                        .iter()
                        .find(|c| c.id.to_lowercase() == v || c.label.to_lowercase() == v)
                        .map(|c| c.id.clone());
                }
                "personal" => personal = v.parse().ok().and_then(|n| PersonalConfidence::new(n).ok()),
                "perceived" => perceived = v.parse().ok().and_then(|n| PerceivedConfidence::new(n).ok()),
                _ => {}
            }
        }
        Some(Assessment { new_opinion: opinion?, personal: personal?, perceived: perceived? })
    })
}

/// Runs the referee: `ask(false)` for the first attempt, `ask(true)` for the
/// reprompt. `None` from `ask` is a failed call and counts as unreadable.
pub fn assess(
    mut ask: impl FnMut(bool) -> Option<String>,
    choices: &[OpinionChoice],
    own: &str,
    confidence: PersonalConfidence,
) -> RefereeOutcome {
    if let Some(a) = ask(false).and_then(|t| parse_assessment(&t, choices)) {
        return RefereeOutcome::Parsed(a);
    }
    if let Some(a) = ask(true).and_then(|t| parse_assessment(&t, choices)) {
        return RefereeOutcome::Reprompted(a);
    }
    RefereeOutcome::Defaulted(Assessment::conservative(own, confidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_choices;

    fn conf(n: u8) -> PersonalConfidence {
        PersonalConfidence::new(n).unwrap()
    }

    #[test]
    fn parses_the_grammar() {
        let c = default_choices();
        let a = parse_assessment("opinion=vegan; personal=3; perceived=2", &c).unwrap();
        assert_eq!(a.new_opinion, "vegan");
        assert_eq!(a.personal.level(), 3);
        assert_eq!(a.perceived.level(), 2);
        let b = parse_assessment("Sure!\nOpinion = Pescatarian ; Personal=4; PERCEIVED=0.", &c).unwrap();
        assert_eq!((b.new_opinion.as_str(), b.personal.level(), b.perceived.level()), ("pescatarian", 4, 0));
    }

    #[test]
    fn rejects_out_of_scale_and_unknown_values() {
        let c = default_choices();
        assert!(parse_assessment("opinion=vegan; personal=0; perceived=2", &c).is_none());
        assert!(parse_assessment("opinion=vegan; personal=2; perceived=5", &c).is_none());
        assert!(parse_assessment("opinion=keto; personal=2; perceived=1", &c).is_none());
        assert!(parse_assessment("I think they should switch to vegan", &c).is_none());
    }

    #[test]
    fn scripted_switch_is_recorded_exactly() {
        let c = default_choices();
        let out = assess(|_| Some("opinion=vegan; personal=3; perceived=2".into()), &c, "omnivorous", conf(1));
        assert_eq!(
            out,
            RefereeOutcome::Parsed(Assessment {
                new_opinion: "vegan".into(),
                personal: conf(3),
                perceived: PerceivedConfidence::new(2).unwrap()
            })
        );
    }

    #[test]
    fn reprompt_then_default() {
        let c = default_choices();
        let mut calls = 0;
        let out = assess(
            |re| {
                calls += 1;
                Some(if re { "opinion=vegetarian; personal=2; perceived=1" } else { "no idea" }.into())
            },
            &c,
            "vegan",
            conf(4),
        );
        assert_eq!(calls, 2);
        assert!(matches!(out, RefereeOutcome::Reprompted(ref a) if a.new_opinion == "vegetarian"));

        let out = assess(|_| Some("garbage".into()), &c, "vegan", conf(4));
        assert_eq!(out, RefereeOutcome::Defaulted(Assessment::conservative("vegan", conf(4))));
        assert_eq!(out.assessment().perceived.level(), 0);
        let out = assess(|_| None, &c, "vegan", conf(2));
        assert!(matches!(out, RefereeOutcome::Defaulted(_)));
    }
}
