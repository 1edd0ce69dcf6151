use super::*;
use crate::domain::{Condition, ConversationType};
use crate::engine::{ConversationStatus, EventKind};

fn setup() -> SimSetup {
    SimSetup::new(stub_pool(StubScripts::default()), Arc::new(PromptTemplates::default()))
}

fn run(condition: Condition, seed: u64) -> SimOutcome {
    simulate_game("g", GameConfig::new(condition, seed), &setup()).unwrap()
}

fn budgets(out: &SimOutcome) -> Vec<(crate::engine::ConversationId, u32)> {
    out.log
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::AgentDiagnostic(d) if d.code == "budget" => Some((d.conversation?, d.detail.parse().ok()?)),
            _ => None,
        })
        .collect()
}

#[test]
fn bot_only_game_completes_within_budgets() {
    let out = run(Condition::BotOnly, 7);
    assert_eq!(out.state.stage, Stage::Concluded);
    assert_eq!(out.state.roster.len(), 6);
    assert!(out.state.conversations.len() >= 3, "{}", out.state.conversations.len());
    let b = budgets(&out);
    for conv in &out.state.conversations {
        assert_eq!(conv.kind, ConversationType::BotOnly);
        let mine: Vec<u32> = b.iter().filter(|(c, _)| *c == conv.id).map(|(_, l)| *l).collect();
        assert_eq!(mine.len(), 2);
        assert!(mine.iter().all(|l| (12..=16).contains(l)));
        if conv.status == ConversationStatus::Terminated {
            let limit = *mine.iter().min().unwrap() as usize;
            assert!(conv.messages.len() <= limit + 2, "{} > {}", conv.messages.len(), limit + 2);
        }
    }
}

#[test]
fn simulation_is_deterministic() {
    let a = run(Condition::BotHuman, 11);
    let b = run(Condition::BotHuman, 11);
    assert_eq!(a.log, b.log);
    let c = run(Condition::BotHuman, 12);
    assert_ne!(a.log, c.log);
}

#[test]
fn replay_matches_live_state() {
    for condition in Condition::ALL {
        let out = run(condition, 3);
        let mut g = GameState::blank();
        for e in &out.log {
            g.apply(e).unwrap();
            g.check_invariants().unwrap();
        }
        assert_eq!(g, out.state, "{condition:?}");
    }
}

#[test]
fn mixed_game_runs_all_stages() {
    let out = run(Condition::BotHuman, 5);
    let s = &out.state;
    assert_eq!(s.stage, Stage::Concluded);
    assert_eq!(s.surveys.len(), 3);
    assert!(s.conversations.iter().any(|c| c.kind == ConversationType::BotHuman));
    assert!(s.conversations.iter().any(|c| c.reevaluations.iter().any(Option::is_some)));
    // bots open with a greeting from the canned list
    for conv in s.conversations.iter().filter(|c| c.kind == ConversationType::BotHuman) {
        let bot_msgs: Vec<&str> = conv
            .messages
            .iter()
            .filter(|m| s.kind_of(m.sender) == ParticipantKind::Bot)
            .map(|m| m.text.as_str())
            .collect();
        if let Some(first) = bot_msgs.first() {
            let norm = |t: &str| -> String {
                t.to_lowercase().chars().filter(|c| c.is_alphanumeric() || *c == ' ').collect::<String>().trim().to_string()
            };
            let greeted = crate::agent::lines::GREETINGS.iter().any(|g| norm(g).starts_with(&norm(first)));
            assert!(greeted, "first bot message {first:?}");
        }
    }
}

#[test]
fn human_only_game_concludes_after_surveys() {
    let out = run(Condition::HumanOnly, 9);
    assert_eq!(out.state.stage, Stage::Concluded);
    assert_eq!(out.state.surveys.len(), 6);
    assert!(out.state.conversations.len() > 3);
}
