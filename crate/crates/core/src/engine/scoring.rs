use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{EngineError, GameState, Millis, ParticipantId, Stage};
use crate::domain::OpinionId;

pub const CONVINCE_POINT: u32 = 1;
pub const MAJORITY_BONUS: u32 = 3;
pub const WINNERS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub participant: ParticipantId,
    pub username: String,
    pub final_opinion: OpinionId,
    pub convince_points: u32,
    pub majority_bonus: u32,
    pub total: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_point_at: Option<Millis>,
    pub rank: u32,
    pub winner: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSheet {
    /// Ordered by participant id.
    pub entries: Vec<ScoreEntry>,
    pub majority_opinions: Vec<OpinionId>,
}

impl ScoreSheet {
    pub fn entry(&self, p: ParticipantId) -> Option<&ScoreEntry> {
        self.entries.iter().find(|e| e.participant == p)
    }

    pub fn winners(&self) -> impl Iterator<Item = &ScoreEntry> {
        self.entries.iter().filter(|e| e.winner)
    }
}

/// Everything the ranking looks at, in tie-break priority order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankKey<'a> {
    pub total: u32,
    pub convince_points: u32,
    pub last_point_at: Option<Millis>,
    pub username: &'a str,
}

fn rank_order(a: &RankKey<'_>, b: &RankKey<'_>) -> Ordering {
    b.total
        .cmp(&a.total)
        .then(b.convince_points.cmp(&a.convince_points))
        // earlier last point ranks higher; never having scored sorts last
        .then(a.last_point_at.unwrap_or(Millis::MAX).cmp(&b.last_point_at.unwrap_or(Millis::MAX)))
        .then(a.username.cmp(b.username))
}

/// Ranks 1..=n aligned with `keys`: descending total, then more convince
/// points, then the earlier last point, then username order.
pub fn rank_participants(keys: &[RankKey<'_>]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&i, &j| rank_order(&keys[i], &keys[j]));
    let mut ranks = alloc::vec![0; keys.len()];
    for (pos, idx) in order.into_iter().enumerate() {
        ranks[idx] = pos as u32 + 1;
    }
    ranks
}

/// Final scores: accumulated convince points plus the majority bonus for
/// every holder of a most popular final opinion (ties all qualify).
pub fn compute_scores(state: &GameState) -> Result<ScoreSheet, EngineError> {
    if state.stage != Stage::Stage3 && state.stage != Stage::Concluded {
        return Err(EngineError::WrongStage { stage: state.stage });
    }
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for p in &state.participants {
        if let Some(o) = &p.opinion {
            *counts.entry(o.as_str()).or_default() += 1;
        }
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let majority_opinions: Vec<OpinionId> =
        counts.iter().filter(|(_, &c)| c == top).map(|(o, _)| String::from(*o)).collect();

    let mut entries: Vec<ScoreEntry> = state
        .roster
        .iter()
        .zip(&state.participants)
        .map(|(p, st)| {
            let final_opinion = st.opinion.clone().unwrap_or_default();
            let majority_bonus =
                if majority_opinions.contains(&final_opinion) { MAJORITY_BONUS } else { 0 };
            let convince_points = st.convince_points * CONVINCE_POINT;
            ScoreEntry {
                participant: p.id,
                username: p.username.clone(),
                final_opinion,
                convince_points,
                majority_bonus,
                total: convince_points + majority_bonus,
                last_point_at: st.last_point_at,
                rank: 0,
                winner: false,
            }
        })
        .collect();

    let ranks = {
        let keys: Vec<RankKey<'_>> = entries
            .iter()
            .map(|e| RankKey {
                total: e.total,
                convince_points: e.convince_points,
                last_point_at: e.last_point_at,
                username: &e.username,
            })
            .collect();
        rank_participants(&keys)
    };
    for (e, r) in entries.iter_mut().zip(ranks) {
        e.rank = r;
        e.winner = r <= WINNERS;
    }
    Ok(ScoreSheet { entries, majority_opinions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(total: u32, cp: u32, last: Option<Millis>, name: &str) -> RankKey<'_> {
        RankKey { total, convince_points: cp, last_point_at: last, username: name }
    }

    #[test]
    fn ranks_follow_tie_break_chain() {
        // totals [5,4,3,3,0,0]
        let keys = [
            key(5, 2, Some(100), "Aspen"),
            key(4, 1, Some(50), "Birch"),
            key(3, 0, None, "Willow"),
            key(3, 0, None, "Cedar"),
            key(0, 0, None, "Rowan"),
            key(0, 0, None, "Maple"),
        ];
        assert_eq!(rank_participants(&keys), [1, 2, 4, 3, 6, 5]);
    }

    #[test]
    fn equal_totals_prefer_convincers_then_earlier_points() {
        let keys = [
            key(3, 0, None, "Aspen"),
            key(3, 3, Some(900), "Birch"),
            key(3, 3, Some(400), "Cedar"),
        ];
        assert_eq!(rank_participants(&keys), [3, 2, 1]);
    }

    #[test]
    fn all_equal_falls_back_to_username() {
        let keys = [key(0, 0, None, "Cedar"), key(0, 0, None, "Aspen"), key(0, 0, None, "Birch")];
        assert_eq!(rank_participants(&keys), [3, 1, 2]);
    }

    /// Enumerates every ordering and checks the chosen one is the unique
    /// permutation consistent with pairwise comparisons.
    #[test]
    fn ranking_matches_pairwise_oracle() {
        let names = ["A", "B", "C", "D", "E"];
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as u32
        };
        for _ in 0..300 {
            let keys: Vec<RankKey<'_>> = names
                .iter()
                .map(|n| {
                    let cp = next() % 3;
                    let bonus = if next() % 2 == 0 { 3 } else { 0 };
                    let last = if cp > 0 { Some(u64::from(next() % 4)) } else { None };
                    key(cp + bonus, cp, last, n)
                })
                .collect();
            let ranks = rank_participants(&keys);
            for i in 0..keys.len() {
                // rank = 1 + number of participants strictly better
                let better = (0..keys.len())
                    .filter(|&j| {
                        let (a, b) = (&keys[j], &keys[i]);
                        (a.total, a.convince_points) > (b.total, b.convince_points)
                            || ((a.total, a.convince_points) == (b.total, b.convince_points)
                                && (a.last_point_at.unwrap_or(u64::MAX), a.username)
                                    < (b.last_point_at.unwrap_or(u64::MAX), b.username))
                    })
                    .count();
                assert_eq!(ranks[i] as usize, better + 1);
            }
        }
    }
}
