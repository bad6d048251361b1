use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::pitch::{PitchRecord, SprayConfig};
use crate::dataset::Hand;
use crate::propensity::logistic;
use crate::rng::stream;

/// Knobs of the synthetic pitch-log generator. Defects are planted at the
/// given rates so every exclusion rule has work to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub seasons: Vec<i32>,
    pub n_teams: usize,
    pub games_per_season: usize,
    pub batters_per_team: usize,
    pub pitchers_per_team: usize,
    pub switch_hitters_per_team: usize,
    pub untracked_batters_per_team: usize,
    pub untracked_pitchers_per_team: usize,
    /// Per-pitch chance of a blank alignment.
    pub missing_alignment: f64,
    /// Per-pitch chance of a blank ΔRE.
    pub missing_delta_re: f64,
    /// Per-PA chance that a middle pitch is absent.
    pub dropped_pitch: f64,
    /// Per-PA chance that a reliever throws the last pitch.
    pub pitcher_change: f64,
    /// ΔRE added to balls in play against a shift.
    pub shift_effect: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seasons: vec![2021, 2022],
            n_teams: 6,
            games_per_season: 90,
            batters_per_team: 12,
            pitchers_per_team: 6,
            switch_hitters_per_team: 1,
            untracked_batters_per_team: 1,
            untracked_pitchers_per_team: 1,
            missing_alignment: 0.003,
            missing_delta_re: 0.002,
            dropped_pitch: 0.005,
            pitcher_change: 0.003,
            shift_effect: -0.02,
        }
    }
}

struct Batter {
    id: u64,
    hand: Option<Hand>,
    tracked: bool,
    power: f64,
    pull: f64,
}

struct Pitcher {
    id: u64,
    hand: Hand,
    tracked: bool,
    velo: f64,
    spin: f64,
}

struct Team {
    code: String,
    batters: Vec<Batter>,
    pitchers: Vec<Pitcher>,
    shift_logit: f64,
}

const EVENTS: [(&str, f64, f64, f64); 7] = [
    // event, probability, ΔRE, wOBA value
    ("strikeout", 0.22, -0.27, 0.0),
    ("walk", 0.08, 0.32, 0.69),
    ("single", 0.15, 0.45, 0.88),
    ("double", 0.045, 0.75, 1.25),
    ("triple", 0.005, 1.05, 1.58),
    ("home_run", 0.03, 1.40, 2.0),
    ("field_out", 0.47, -0.26, 0.0),
];

fn date(year: i32, day: usize) -> String {
    let months = [(4, 30), (5, 31), (6, 30), (7, 31), (8, 31), (9, 30), (10, 31)];
    let mut d = day % 214;
    for (m, len) in months {
        if d < len {
            return format!("{year}-{m:02}-{:02}", d + 1);
        }
        d -= len;
    }
    unreachable!()
}

fn roster(cfg: &SynthConfig, season: i32, rng: &mut ChaCha8Rng) -> Vec<Team> {
    (0..cfg.n_teams)
        .map(|t| {
            let base = 1000 * (t as u64 + 1);
            let batters = (0..cfg.batters_per_team)
                .map(|j| Batter {
                    id: 100_000 + base + j as u64,
                    hand: (j >= cfg.switch_hitters_per_team).then(|| if rng.gen_bool(0.4) { Hand::Left } else { Hand::Right }),
                    tracked: j + cfg.untracked_batters_per_team < cfg.batters_per_team,
                    power: rng.gen_range(-4.0..4.0),
                    pull: rng.gen_range(-12.0..4.0),
                })
                .collect();
            let pitchers = (0..cfg.pitchers_per_team)
                .map(|j| Pitcher {
                    id: 500_000 + base + j as u64,
                    hand: if rng.gen_bool(0.3) { Hand::Left } else { Hand::Right },
                    tracked: j + cfg.untracked_pitchers_per_team < cfg.pitchers_per_team,
                    velo: rng.gen_range(89.0..96.0),
                    spin: rng.gen_range(2050.0..2450.0),
                })
                .collect();
            let trend = 0.4 * f64::from(season - 2015);
            Team { code: format!("T{:02}", t + 1), batters, pitchers, shift_logit: rng.gen_range(-3.5..-1.5) + trend * 0.3 }
        })
        .collect()
}

/// A deterministic pitch log with realistic structure and planted defects.
pub fn synthetic_pitches(cfg: &SynthConfig) -> Vec<PitchRecord> {
    let spray = SprayConfig::default();
    let mut out = Vec::new();
    for &season in &cfg.seasons {
        let mut rng = stream(cfg.seed, "ingest/synthetic", season as u64);
        let teams = roster(cfg, season, &mut rng);
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let n = cfg.n_teams.max(2);
        for g in 0..cfg.games_per_season {
            let home = g % n;
            let away = (home + 1 + (g / n) % (n - 1)) % n;
            let game_pk = season as u64 * 100_000 + g as u64;
            let game_date = date(season, g / (n / 2).max(1));
            let mut at_bat = 0u32;
            for inning in 1..=9u32 {
                for (half, bat, field) in [("Top", away, home), ("Bot", home, away)] {
                    let offense = &teams[bat];
                    let defense = &teams[field];
                    let starter = &defense.pitchers[g % 4 % defense.pitchers.len()];
                    let reliever = &defense.pitchers[(4 + g % 2).min(defense.pitchers.len() - 1)];
                    let pitcher = if inning <= 6 { starter } else { reliever };
                    let n_pa = 3 + rng.gen_range(0..3);
                    for _ in 0..n_pa {
                        at_bat += 1;
                        let lineup = (at_bat as usize + g) % offense.batters.len();
                        let batter = &offense.batters[lineup];
                        let stand = batter.hand.unwrap_or(if pitcher.hand == Hand::Left { Hand::Right } else { Hand::Left });
                        let lefty = f64::from(u8::from(stand == Hand::Left));
                        let p_shift = logistic(defense.shift_logit + 1.5 * lefty - 0.08 * batter.pull);
                        let shifted = rng.gen_bool(p_shift);

                        let u: f64 = rng.gen();
                        let mut acc = 0.0;
                        let &(event, _, dre, woba) = EVENTS.iter().find(|e| {
                            acc += e.1;
                            u < acc
                        }).unwrap_or(&EVENTS[6]);
                        let in_play = matches!(event, "single" | "double" | "triple" | "home_run" | "field_out");
                        let effect = if shifted && in_play { cfg.shift_effect } else { 0.0 };

                        let n_pitches = 1 + rng.gen_range(0..6u32);
                        let mut pitches = Vec::with_capacity(n_pitches as usize);
                        for k in 1..=n_pitches {
                            let last = k == n_pitches;
                            let part = if last { dre + effect } else { 0.02 * noise.sample(&mut rng) };
                            let alignment = if shifted && !(k == 1 && rng.gen_bool(0.1)) {
                                "Infield shift"
                            } else if rng.gen_bool(0.1) {
                                "Strategic"
                            } else {
                                "Standard"
                            };
                            let tracked = pitcher.tracked;
                            let mut rec = PitchRecord {
                                game_pk,
                                game_date: game_date.clone(),
                                game_year: season,
                                inning,
                                inning_topbot: half.into(),
                                home_team: teams[home].code.clone(),
                                away_team: teams[away].code.clone(),
                                batter: batter.id,
                                pitcher: pitcher.id,
                                stand,
                                p_throws: pitcher.hand,
                                if_fielding_alignment: (!rng.gen_bool(cfg.missing_alignment)).then(|| alignment.into()),
                                at_bat_number: at_bat,
                                pitch_number: k,
                                delta_run_exp: (!rng.gen_bool(cfg.missing_delta_re)).then_some(part),
                                launch_speed: None,
                                launch_angle: None,
                                hc_x: None,
                                hc_y: None,
                                plate_x: tracked.then(|| 0.8 * noise.sample(&mut rng)),
                                plate_z: tracked.then(|| 2.3 + 0.7 * noise.sample(&mut rng)),
                                release_speed: tracked.then(|| pitcher.velo + 1.5 * noise.sample(&mut rng)),
                                release_spin_rate: tracked.then(|| pitcher.spin + 80.0 * noise.sample(&mut rng)),
                                events: None,
                                woba_value: None,
                                woba_denom: None,
                                babip_value: None,
                            };
                            if last {
                                rec.events = Some(event.into());
                                rec.woba_value = Some(woba);
                                rec.woba_denom = Some(1.0);
                                rec.babip_value = Some(f64::from(u8::from(matches!(event, "single" | "double" | "triple"))));
                                if in_play && batter.tracked {
                                    let angle = (batter.pull + 20.0 * noise.sample(&mut rng)).clamp(-44.0, 44.0);
                                    let raw = if stand == Hand::Left { -angle } else { angle };
                                    let a = (raw / spray.scale).to_radians();
                                    let r = rng.gen_range(40.0..160.0);
                                    rec.hc_x = Some(spray.home_x + r * a.sin());
                                    rec.hc_y = Some(spray.home_y - r * a.cos());
                                    rec.launch_speed = Some(88.0 + batter.power + 12.0 * noise.sample(&mut rng));
                                    rec.launch_angle = Some(12.0 + 25.0 * noise.sample(&mut rng));
                                }
                            }
                            pitches.push(rec);
                        }
                        if n_pitches >= 3 && rng.gen_bool(cfg.dropped_pitch) {
                            pitches.remove(1);
                        }
                        if rng.gen_bool(cfg.pitcher_change) && pitches.len() >= 2 {
                            let other = defense.pitchers.iter().find(|p| p.id != pitcher.id).unwrap_or(pitcher);
                            let last = pitches.last_mut().expect("non-empty");
                            last.pitcher = other.id;
                            last.p_throws = other.hand;
                        }
                        out.extend(pitches);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SynthConfig { games_per_season: 4, ..Default::default() };
        assert_eq!(synthetic_pitches(&cfg), synthetic_pitches(&cfg));
    }

    #[test]
    fn dates_are_ordered() {
        assert_eq!(date(2020, 0), "2020-04-01");
        assert_eq!(date(2020, 30), "2020-05-01");
        assert!(date(2020, 100) < date(2020, 101));
    }
}
