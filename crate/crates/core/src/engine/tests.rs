use super::*;
use alloc::vec;
use crate::domain::{Condition, ParticipantKind::*};

fn conf(n: u8) -> PersonalConfidence {
    PersonalConfidence::new(n).unwrap()
}

fn perc(n: u8) -> PerceivedConfidence {
    PerceivedConfidence::new(n).unwrap()
}

fn p(n: u32) -> ParticipantId {
    ParticipantId(n)
}

fn c(n: u32) -> ConversationId {
    ConversationId(n)
}

fn game(condition: Condition) -> GameState {
    let roster: Vec<RosterEntry> =
        condition.default_roster(6).into_iter().map(RosterEntry::from).collect();
    GameState::create("g", GameConfig::new(condition, 3), &roster).unwrap().0
}

/// Game in stage 2 with the given initial opinions.
fn started(condition: Condition, opinions: [&str; 6]) -> GameState {
    let mut g = game(condition);
    for (i, o) in opinions.iter().enumerate() {
        g.handle(
            Command::SubmitInitialOpinion { participant: p(i as u32), opinion: (*o).into(), confidence: conf(2) },
            0,
        )
        .unwrap();
    }
    assert_eq!(g.stage, Stage::Stage2);
    g
}

fn converse(g: &mut GameState, a: u32, b: u32, at: Millis) -> ConversationId {
    g.handle(Command::SendInvite { from: p(a), to: p(b) }, at).unwrap();
    let ev = g.handle(Command::RespondInvite { to: p(b), from: p(a), accept: true }, at).unwrap();
    match ev.last().unwrap().kind {
        EventKind::ConversationStarted { conversation, .. } => conversation,
        ref k => panic!("unexpected {k:?}"),
    }
}

fn reevaluate(g: &mut GameState, conv: ConversationId, who: u32, opinion: &str, at: Millis) -> Vec<Event> {
    g.handle(
        Command::SubmitReevaluation {
            conversation: conv,
            participant: p(who),
            new_opinion: opinion.into(),
            personal_confidence: conf(3),
            perceived_confidence: perc(3),
        },
        at,
    )
    .unwrap()
}

const SIX_VEGAN: [&str; 6] = ["vegan"; 6];

#[test]
fn create_game_rosters() {
    let g = game(Condition::BotOnly);
    assert_eq!(g.stage, Stage::Stage1);
    assert!(g.roster.iter().all(|r| r.kind == Bot));
    let g = game(Condition::BotHuman);
    assert_eq!(g.roster.iter().filter(|r| r.kind == Human).count(), 3);
    let mut names: Vec<&str> = g.roster.iter().map(|r| r.username.as_str()).collect();
    names.sort();
    assert_eq!(names, USERNAMES);

    let five: Vec<RosterEntry> = [Human; 5].into_iter().map(RosterEntry::from).collect();
    let err = GameState::create("g", GameConfig::new(Condition::HumanOnly, 0), &five).unwrap_err();
    assert_eq!(err.code(), "roster_mismatch");
    let wrong: Vec<RosterEntry> = [Bot; 6].into_iter().map(RosterEntry::from).collect();
    assert!(GameState::create("g", GameConfig::new(Condition::HumanOnly, 0), &wrong).is_err());
}

#[test]
fn usernames_are_seeded() {
    let names = |seed| {
        let roster: Vec<RosterEntry> = [Bot; 6].into_iter().map(RosterEntry::from).collect();
        let (g, _) = GameState::create("g", GameConfig::new(Condition::BotOnly, seed), &roster).unwrap();
        g.roster.into_iter().map(|r| r.username).collect::<Vec<_>>()
    };
    assert_eq!(names(1), names(1));
    assert!((0..10).any(|s| names(s) != names(1)));
}

#[test]
fn initial_opinions() {
    let mut g = game(Condition::HumanOnly);
    for i in 0..5 {
        g.handle(Command::SubmitInitialOpinion { participant: p(i), opinion: "vegan".into(), confidence: conf(1) }, 0)
            .unwrap();
        assert_eq!(g.stage, Stage::Stage1);
    }
    let dup = g.handle(Command::SubmitInitialOpinion { participant: p(0), opinion: "vegan".into(), confidence: conf(1) }, 0);
    assert_eq!(dup.unwrap_err(), EngineError::DuplicateSubmission(p(0)));
    let bad = g.handle(Command::SubmitInitialOpinion { participant: p(5), opinion: "keto".into(), confidence: conf(1) }, 0);
    assert_eq!(bad.unwrap_err().code(), "unknown_opinion");
    let unknown = g.handle(Command::SubmitInitialOpinion { participant: p(9), opinion: "vegan".into(), confidence: conf(1) }, 0);
    assert_eq!(unknown.unwrap_err(), EngineError::UnknownParticipant(p(9)));
    let ev = g
        .handle(Command::SubmitInitialOpinion { participant: p(5), opinion: "vegan".into(), confidence: conf(1) }, 0)
        .unwrap();
    assert_eq!(ev.len(), 2);
    assert_eq!(g.stage, Stage::Stage2);
    assert_eq!(g.clock_ms, 0);
    // no invites before stage 2
    let mut g = game(Condition::HumanOnly);
    assert!(g.handle(Command::SendInvite { from: p(0), to: p(1) }, 0).is_err());
}

#[test]
fn invites() {
    let mut g = started(Condition::HumanOnly, SIX_VEGAN);
    g.handle(Command::SendInvite { from: p(0), to: p(1) }, 5).unwrap();
    assert!(g.pending_invites.contains(&(p(0), p(1))));
    assert_eq!(g.handle(Command::SendInvite { from: p(0), to: p(1) }, 6).unwrap_err().code(), "duplicate_invite");
    assert_eq!(g.handle(Command::SendInvite { from: p(2), to: p(2) }, 6).unwrap_err(), EngineError::SelfInvite);
    converse(&mut g, 2, 3, 7);
    assert_eq!(g.handle(Command::SendInvite { from: p(0), to: p(3) }, 8).unwrap_err(), EngineError::Busy(p(3)));
    // decline leaves the pool unchanged
    let before = g.available();
    g.handle(Command::RespondInvite { to: p(1), from: p(0), accept: false }, 9).unwrap();
    assert_eq!(g.available(), before);
    assert!(g.pending_invites.is_empty());
    assert_eq!(
        g.handle(Command::RespondInvite { to: p(1), from: p(0), accept: true }, 9).unwrap_err().code(),
        "no_such_invite"
    );
}

#[test]
fn accept_cancels_other_invites_and_stale_race() {
    let mut g = started(Condition::HumanOnly, SIX_VEGAN);
    g.handle(Command::SendInvite { from: p(0), to: p(1) }, 1).unwrap();
    g.handle(Command::SendInvite { from: p(0), to: p(2) }, 1).unwrap();
    g.handle(Command::SendInvite { from: p(3), to: p(1) }, 1).unwrap();
    g.handle(Command::SendInvite { from: p(4), to: p(5) }, 1).unwrap();
    g.handle(Command::RespondInvite { to: p(1), from: p(0), accept: true }, 2).unwrap();
    assert!(!g.is_free(p(0)) && !g.is_free(p(1)));
    assert_eq!(g.pending_invites.iter().copied().collect::<Vec<_>>(), vec![(p(4), p(5))]);
    g.check_invariants().unwrap();

    // race: 2 invites 5, 4 invites 5 too; 4 starts a conversation with 3 first
    let mut g = started(Condition::HumanOnly, SIX_VEGAN);
    g.handle(Command::SendInvite { from: p(4), to: p(5) }, 1).unwrap();
    g.handle(Command::SendInvite { from: p(3), to: p(4) }, 1).unwrap();
    g.handle(Command::RespondInvite { to: p(4), from: p(3), accept: true }, 2).unwrap();
    // the engine already withdrew the invite; a late accept is refused
    let err = g.handle(Command::RespondInvite { to: p(5), from: p(4), accept: true }, 3).unwrap_err();
    assert!(matches!(err, EngineError::NoSuchInvite(..)), "{err:?}");
    // applying a raw accept event against a busy inviter reports a stale invite
    let mut g2 = started(Condition::HumanOnly, SIX_VEGAN);
    g2.pending_invites.insert((p(4), p(5)));
    g2.participants[4].engaged = Some(c(0));
    let e = Event::new(3, EventKind::InviteResponded { from: p(4), to: p(5), accepted: true });
    assert_eq!(g2.apply(&e).unwrap_err(), EngineError::StaleInvite { from: p(4), busy: p(4) });
}

#[test]
fn messages() {
    let mut g = started(Condition::HumanOnly, SIX_VEGAN);
    let conv = converse(&mut g, 0, 1, 5);
    g.handle(Command::PostMessage { conversation: conv, sender: p(0), text: "hi".into() }, 10).unwrap();
    assert_eq!(g.conversations[0].messages[0].text, "hi");
    assert_eq!(g.conversations[0].messages[0].at_ms, 10);
    let outsider = g.handle(Command::PostMessage { conversation: conv, sender: p(2), text: "hey".into() }, 11);
    assert_eq!(outsider.unwrap_err(), EngineError::NotMember(p(2)));
    let empty = g.handle(Command::PostMessage { conversation: conv, sender: p(1), text: "  ".into() }, 11);
    assert_eq!(empty.unwrap_err(), EngineError::EmptyMessage);
    let late = g.handle(
        Command::PostMessage { conversation: conv, sender: p(1), text: "late".into() },
        g.config.duration_ms(),
    );
    assert_eq!(late.unwrap_err(), EngineError::TimerExpired);
    let back = g.handle(Command::PostMessage { conversation: conv, sender: p(1), text: "x".into() }, 9);
    assert_eq!(back.unwrap_err().code(), "clock_regression");
    // the audience of a message is the two members only
    let e = Event::new(12, EventKind::MessagePosted { conversation: conv, sender: p(0), text: "x".into() });
    assert_eq!(g.audience(&e), Audience::Only(vec![p(0), p(1)]));
}

#[test]
fn termination_requires_reevaluation_before_rejoining() {
    let mut g = started(Condition::HumanOnly, SIX_VEGAN);
    let conv = converse(&mut g, 0, 1, 5);
    g.handle(Command::TerminateConversation { conversation: conv, by: p(0) }, 20).unwrap();
    let cv = &g.conversations[0];
    assert_eq!(cv.status, ConversationStatus::Terminated);
    assert_eq!(cv.terminated_by, Some(p(0)));
    assert!(!g.is_free(p(0)) && !g.is_free(p(1)));
    let again = g.handle(Command::TerminateConversation { conversation: conv, by: p(1) }, 21);
    assert_eq!(again.unwrap_err(), EngineError::InactiveConversation(conv));
    assert_eq!(g.handle(Command::SendInvite { from: p(0), to: p(2) }, 22).unwrap_err(), EngineError::Busy(p(0)));
    reevaluate(&mut g, conv, 0, "vegan", 30);
    assert!(g.is_free(p(0)) && !g.is_free(p(1)));
    let dup = g.handle(
        Command::SubmitReevaluation {
            conversation: conv,
            participant: p(0),
            new_opinion: "vegan".into(),
            personal_confidence: conf(1),
            perceived_confidence: perc(1),
        },
        31,
    );
    assert_eq!(dup.unwrap_err(), EngineError::DuplicateSubmission(p(0)));
    let outsider = g.handle(
        Command::SubmitReevaluation {
            conversation: conv,
            participant: p(3),
            new_opinion: "vegan".into(),
            personal_confidence: conf(1),
            perceived_confidence: perc(1),
        },
        31,
    );
    assert_eq!(outsider.unwrap_err(), EngineError::NotMember(p(3)));
}

#[test]
fn reevaluation_points() {
    let mut g = started(
        Condition::HumanOnly,
        ["vegan", "omnivorous", "vegan", "pescatarian", "vegetarian", "vegetarian"],
    );
    // kept
    let conv = converse(&mut g, 0, 1, 1);
    g.handle(Command::TerminateConversation { conversation: conv, by: p(1) }, 2).unwrap();
    let ev = reevaluate(&mut g, conv, 0, "vegan", 3);
    assert!(matches!(ev[0].kind, EventKind::Reevaluation { outcome: ChangeOutcome::Kept, point_to: None, .. }));
    // switch to partner's opinion
    let ev = reevaluate(&mut g, conv, 1, "vegan", 4);
    assert!(matches!(ev[0].kind, EventKind::Reevaluation { outcome: ChangeOutcome::ToPartner, point_to: Some(q), .. } if q == p(0)));
    assert_eq!(g.participants[0].convince_points, 1);
    assert_eq!(g.participants[0].last_point_at, Some(4));
    assert_eq!(g.participants[1].opinion.as_deref(), Some("vegan"));
    // switch to a third opinion
    let conv = converse(&mut g, 2, 3, 5);
    g.handle(Command::TerminateConversation { conversation: conv, by: p(2) }, 6).unwrap();
    let ev = reevaluate(&mut g, conv, 3, "vegetarian", 7);
    assert!(matches!(ev[0].kind, EventKind::Reevaluation { outcome: ChangeOutcome::ThirdOpinion, point_to: None, .. }));
    assert_eq!(g.participants.iter().map(|s| s.convince_points).sum::<u32>(), 1);
    // not before termination
    let conv = converse(&mut g, 4, 5, 8);
    let early = g.handle(
        Command::SubmitReevaluation {
            conversation: conv,
            participant: p(4),
            new_opinion: "vegan".into(),
            personal_confidence: conf(1),
            perceived_confidence: perc(1),
        },
        9,
    );
    assert_eq!(early.unwrap_err(), EngineError::NotTerminated(conv));
}

#[test]
fn expiry() {
    let mut g = started(Condition::HumanOnly, SIX_VEGAN);
    converse(&mut g, 0, 1, 1);
    converse(&mut g, 2, 3, 1);
    let c3 = converse(&mut g, 4, 5, 1);
    g.handle(Command::TerminateConversation { conversation: c3, by: p(4) }, 2).unwrap();
    reevaluate(&mut g, c3, 5, "vegan", 3);
    let end = g.config.duration_ms();
    assert_eq!(g.handle(Command::ExpireTimer, end - 1).unwrap_err(), EngineError::TimerRunning);
    let ev = g.handle(Command::ExpireTimer, end).unwrap();
    let names: Vec<&str> = ev.iter().map(|e| e.kind.name()).collect();
    assert_eq!(
        names,
        ["conversation_expired", "conversation_expired", "stage_changed", "scores_computed"]
    );
    assert_eq!(g.stage, Stage::Stage3);
    assert!(g.conversations[..2].iter().all(|cv| cv.status == ConversationStatus::Expired
        && cv.reevaluations.iter().all(Option::is_none)));
    // the partner who re-evaluated keeps the record, the terminator's is absent
    let cv = &g.conversations[2];
    assert_eq!(cv.status, ConversationStatus::Terminated);
    assert!(cv.reevaluations[0].is_none() && cv.reevaluations[1].is_some());
    assert!(g.handle(Command::ExpireTimer, end + 5).unwrap().is_empty());
    g.check_invariants().unwrap();
}

#[test]
fn expiry_without_conversations_and_bot_only_concludes() {
    let mut g = started(Condition::BotOnly, SIX_VEGAN);
    let ev = g.handle(Command::ExpireTimer, g.config.duration_ms()).unwrap();
    assert_eq!(ev[0].kind.name(), "stage_changed");
    assert_eq!(g.stage, Stage::Concluded);
    assert!(g.surveys.is_empty());
}

fn finish(opinions: [&str; 6]) -> ScoreSheet {
    let mut g = started(Condition::BotOnly, opinions);
    g.handle(Command::ExpireTimer, g.config.duration_ms()).unwrap();
    g.scores.clone().unwrap()
}

#[test]
fn majority_bonus() {
    let s = finish(["vegan", "vegan", "vegan", "vegan", "omnivorous", "omnivorous"]);
    let totals: Vec<u32> = s.entries.iter().map(|e| e.total).collect();
    assert_eq!(totals, [3, 3, 3, 3, 0, 0]);
    let s = finish(["vegan", "vegan", "vegan", "omnivorous", "omnivorous", "omnivorous"]);
    assert!(s.entries.iter().all(|e| e.total == 3 && e.majority_bonus == 3));
    assert_eq!(s.majority_opinions, ["omnivorous", "vegan"]);
    assert_eq!(s.winners().count(), 2);
}

#[test]
fn convinced_two_and_majority() {
    let mut g = started(Condition::BotOnly, ["vegan", "omnivorous", "pescatarian", "vegan", "vegetarian", "vegetarian"]);
    for (partner, t) in [(1, 10), (2, 20)] {
        let conv = converse(&mut g, 0, partner, t);
        g.handle(Command::TerminateConversation { conversation: conv, by: p(0) }, t + 1).unwrap();
        reevaluate(&mut g, conv, 0, "vegan", t + 2);
        reevaluate(&mut g, conv, partner, "vegan", t + 3);
    }
    g.handle(Command::ExpireTimer, g.config.duration_ms()).unwrap();
    let s = g.scores.unwrap();
    let e = s.entry(p(0)).unwrap();
    assert_eq!((e.convince_points, e.majority_bonus, e.total, e.rank), (2, 3, 5, 1));
    assert!(e.winner);
    let ranks: Vec<u32> = {
        let mut r: Vec<u32> = s.entries.iter().map(|e| e.rank).collect();
        r.sort();
        r
    };
    assert_eq!(ranks, [1, 2, 3, 4, 5, 6]);
}

#[test]
fn scores_require_stage_three() {
    let g = started(Condition::BotOnly, SIX_VEGAN);
    assert!(compute_scores(&g).is_err());
}

#[test]
fn exit_survey() {
    let mut g = started(Condition::BotHuman, SIX_VEGAN);
    let end = g.config.duration_ms();
    let early = g.handle(
        Command::SubmitExitSurvey {
            participant: p(0),
            most_convincing: "Aspen".into(),
            least_convincing: "Birch".into(),
            demographics: None,
            payment: None,
        },
        5,
    );
    assert!(matches!(early.unwrap_err(), EngineError::WrongStage { .. }));
    g.handle(Command::ExpireTimer, end).unwrap();
    assert_eq!(g.stage, Stage::Stage3);
    let humans: Vec<ParticipantId> = g.humans().map(|h| h.id).collect();
    let bot = g.roster.iter().find(|r| r.kind == Bot).unwrap().id;
    let name = |g: &GameState, q: ParticipantId| g.roster[q.index()].username.clone();
    let survey = |g: &GameState, who: ParticipantId, most: ParticipantId, least: ParticipantId| Command::SubmitExitSurvey {
        participant: who,
        most_convincing: name(g, most),
        least_convincing: name(g, least),
        demographics: None,
        payment: None,
    };
    assert_eq!(g.handle(survey(&g, bot, humans[0], humans[1]), end).unwrap_err(), EngineError::BotSurvey);
    assert_eq!(
        g.handle(survey(&g, humans[0], humans[0], humans[1]), end).unwrap_err(),
        EngineError::SelfNomination
    );
    let unknown = Command::SubmitExitSurvey {
        participant: humans[0],
        most_convincing: "Nobody".into(),
        least_convincing: name(&g, bot),
        demographics: None,
        payment: None,
    };
    assert_eq!(g.handle(unknown, end).unwrap_err().code(), "unknown_username");
    g.handle(survey(&g, humans[0], humans[2], bot), end + 1).unwrap();
    assert_eq!(g.surveys[0].most_convincing, name(&g, humans[2]));
    assert_eq!(
        g.handle(survey(&g, humans[0], humans[1], bot), end + 2).unwrap_err(),
        EngineError::DuplicateSubmission(humans[0])
    );
    g.handle(survey(&g, humans[1], humans[2], bot), end + 3).unwrap();
    assert_eq!(g.stage, Stage::Stage3);
    let ev = g.handle(survey(&g, humans[2], humans[1], bot), end + 4).unwrap();
    assert_eq!(ev.last().unwrap().kind.name(), "stage_changed");
    assert_eq!(g.stage, Stage::Concluded);
    assert!(g.reveal_text(humans[0]).contains("bots"));
}

#[test]
fn survey_grace_conclusion() {
    let mut g = started(Condition::HumanOnly, SIX_VEGAN);
    let end = g.config.duration_ms();
    g.handle(Command::ExpireTimer, end).unwrap();
    let grace = u64::from(g.config.survey_grace_s) * 1000;
    assert!(g.handle(Command::Conclude, end + grace - 1).is_err());
    g.handle(Command::Conclude, end + grace).unwrap();
    assert_eq!(g.stage, Stage::Concluded);
    assert!(g.reveal_text(p(0)).contains("all participants were human"));
}

#[test]
fn replay_reproduces_state() {
    let mut g = game(Condition::HumanOnly);
    let roster: Vec<RosterEntry> = [Human; 6].into_iter().map(RosterEntry::from).collect();
    let (_, mut log) = GameState::create("g", GameConfig::new(Condition::HumanOnly, 3), &roster).unwrap();
    let mut run = |g: &mut GameState, cmd: Command, at: Millis| log.extend(g.handle(cmd, at).unwrap());
    for i in 0..6 {
        run(&mut g, Command::SubmitInitialOpinion { participant: p(i), opinion: "vegan".into(), confidence: conf(2) }, 0);
    }
    run(&mut g, Command::SendInvite { from: p(0), to: p(1) }, 3);
    run(&mut g, Command::RespondInvite { to: p(1), from: p(0), accept: true }, 4);
    run(&mut g, Command::PostMessage { conversation: c(0), sender: p(1), text: "hello".into() }, 5);
    run(&mut g, Command::TerminateConversation { conversation: c(0), by: p(1) }, 6);
    run(
        &mut g,
        Command::SubmitReevaluation {
            conversation: c(0),
            participant: p(1),
            new_opinion: "vegetarian".into(),
            personal_confidence: conf(4),
            perceived_confidence: perc(0),
        },
        7,
    );
    let end = g.config.duration_ms();
    run(&mut g, Command::ExpireTimer, end);

    let mut r = GameState::blank();
    for e in &log {
        r.apply(e).unwrap();
        r.check_invariants().unwrap();
    }
    assert_eq!(r, g);
    // a tampered log is rejected
    let mut bad = GameState::blank();
    let mut tampered = log.clone();
    if let EventKind::Reevaluation { outcome, .. } = &mut tampered.iter_mut().find(|e| e.kind.name() == "reevaluation").unwrap().kind {
        *outcome = ChangeOutcome::Kept;
    }
    assert!(tampered.iter().try_for_each(|e| bad.apply(e)).is_err());
}
