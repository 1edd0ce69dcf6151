//! Synthetic random-intercept data with known parameters, for checking that
//! the sampler recovers what generated the data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hier::HierRow;
use crate::math::{ln, sigmoid, standard_normal};

/// Conversation categories, reference first.
pub const SYNTHETIC_CATEGORIES: [&str; 4] = ["human_only", "bot_human_human", "bot_human_bot", "bot_only"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDesign {
    /// Games of each kind: human-only, bot-human, bot-only.
    pub games: [usize; 3],
    pub participants_per_game: usize,
    /// Inclusive range of rows per participant.
    pub rows_per_participant: (usize, usize),
    /// Log-odds of the reference category.
    pub intercept: f64,
    /// Log odds ratios of the other categories, in [`SYNTHETIC_CATEGORIES`] order.
    pub effects: [f64; 3],
    pub sd_game: f64,
    pub sd_participant: f64,
}

impl SyntheticDesign {
    /// Magnitudes of the published opinion-change model: reference odds 0.12,
    /// odds ratios 0.16, 3.14 and 4.96, both group SDs 0.7. About 1,200 rows.
    pub fn opinion_change() -> Self {
        Self {
            games: [12, 13, 12],
            participants_per_game: 6,
            rows_per_participant: (4, 7),
            intercept: ln(0.12),
            effects: [ln(0.16), ln(3.14), ln(4.96)],
            sd_game: 0.7,
            sd_participant: 0.7,
        }
    }

    /// True fixed effects by name: `(Intercept)` then the non-reference categories.
    pub fn truth(&self) -> Vec<(String, f64)> {
        let mut v = Vec::from([(String::from(super::hier::INTERCEPT), self.intercept)]);
        v.extend(SYNTHETIC_CATEGORIES[1..].iter().zip(self.effects).map(|(c, e)| (String::from(*c), e)));
        v
    }

    /// Binary rows. In bot-human games the first half of the roster falls in
    /// the human category, the rest in the bot category.
    pub fn generate(&self, seed: u64) -> Vec<HierRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut game_no = 0;
        for (kind, &count) in self.games.iter().enumerate() {
            for _ in 0..count {
                game_no += 1;
                let game = format!("g{game_no}");
                let ug = self.sd_game * standard_normal(&mut rng);
                for p in 0..self.participants_per_game {
                    let up = self.sd_participant * standard_normal(&mut rng);
                    let cat = match kind {
                        0 => 0,
                        1 if p < self.participants_per_game / 2 => 1,
                        1 => 2,
                        _ => 3,
                    };
                    let eta = self.intercept + if cat == 0 { 0.0 } else { self.effects[cat - 1] } + ug + up;
                    let (lo, hi) = self.rows_per_participant;
                    for _ in 0..rng.random_range(lo..=hi) {
                        rows.push(HierRow {
                            category: SYNTHETIC_CATEGORIES[cat].into(),
                            game: game.clone(),
                            participant: format!("{game}/p{p}"),
                            outcome: u32::from(rng.random::<f64>() < sigmoid(eta)),
                        });
                    }
                }
            }
        }
        rows
    }
}
