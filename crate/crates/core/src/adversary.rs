//! Bad raters that flip HELPFUL and NOT HELPFUL on notes they want buried.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::population::{honest_probs, BadMode, GlobalParams, NoteProfile, RaterProfile, RatingProbs};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMode {
    /// Targets every note at or above the helpfulness threshold.
    Indiscriminate,
    /// Targets only such notes whose bias sign opposes `phi`.
    Coordinated,
}

impl AttackMode {
    pub fn bad_mode(self) -> BadMode {
        match self {
            AttackMode::Indiscriminate => BadMode::Indiscriminate,
            AttackMode::Coordinated => BadMode::Coordinated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryConfig {
    pub fraction_bad: f64,
    /// Probability that a bad rater applies the swap to a given note.
    pub behavior_rate: f64,
    pub mode: AttackMode,
    /// Side the coordinated raters favour: +1 or -1.
    pub phi: i8,
    pub helpful_threshold: f64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            fraction_bad: 0.0,
            behavior_rate: 1.0,
            mode: AttackMode::Indiscriminate,
            phi: 1,
            helpful_threshold: 0.4,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.validation_errors(&mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(errs.join("; ")))
        }
    }

    pub(crate) fn validation_errors(&self, errs: &mut Vec<String>) {
        if !(0.0..=1.0).contains(&self.fraction_bad) {
            errs.push(format!(
                "adversary.fraction_bad must lie in [0, 1], got {}",
                self.fraction_bad
            ));
        }
        if !(0.0..=1.0).contains(&self.behavior_rate) {
            errs.push(format!(
                "adversary.behavior_rate must lie in [0, 1], got {}",
                self.behavior_rate
            ));
        }
        if self.phi != 1 && self.phi != -1 {
            errs.push(format!("adversary.phi must be 1 or -1, got {}", self.phi));
        }
        if !self.helpful_threshold.is_finite() {
            errs.push("adversary.helpful_threshold must be finite".into());
        }
    }

    /// Whether a note is one the bad raters try to suppress, ignoring the
    /// behavior-rate coin. Coordinated raters leave `f_n == 0` alone.
    pub fn targets(&self, note: &NoteProfile) -> bool {
        if note.i < self.helpful_threshold {
            return false;
        }
        match self.mode {
            AttackMode::Indiscriminate => true,
            AttackMode::Coordinated => f64::from(self.phi) * note.f < 0.0,
        }
    }

    /// Whether a note belongs to the attacked population, irrespective of
    /// helpfulness: every note for indiscriminate raters, notes with
    /// `phi * f_n < 0` for coordinated ones.
    pub fn on_targeted_side(&self, note: &NoteProfile) -> bool {
        match self.mode {
            AttackMode::Indiscriminate => true,
            AttackMode::Coordinated => f64::from(self.phi) * note.f < 0.0,
        }
    }
}

/// Flags each rater bad with probability `fraction_bad`.
pub fn assign_bad(raters: &mut [RaterProfile], cfg: &AdversaryConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    let mut rng = stream(seed, Stream::Adversary);
    for r in raters.iter_mut() {
        let bad = rng.random_bool(cfg.fraction_bad);
        r.is_bad = bad;
        r.bad_mode = if bad { cfg.mode.bad_mode() } else { BadMode::None };
    }
    Ok(())
}

/// Rating probabilities of `rater` for `note`. A bad rater consumes one
/// behavior draw from `rng` per call; honest raters consume nothing.
pub fn effective_probs<R: Rng + ?Sized>(
    g: &GlobalParams,
    rater: &RaterProfile,
    note: &NoteProfile,
    cfg: &AdversaryConfig,
    rng: &mut R,
) -> RatingProbs {
    let honest = honest_probs(g, rater, note);
    if !rater.is_bad {
        return honest;
    }
    let active = rng.random_bool(cfg.behavior_rate);
    if active && cfg.targets(note) {
        honest.swapped()
    } else {
        honest
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::Group;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn rater(bad: bool, mode: BadMode) -> RaterProfile {
        RaterProfile {
            id: 0,
            i: 0.25,
            f: 0.1,
            group: Group::Plus,
            is_bad: bad,
            bad_mode: mode,
        }
    }

    fn note(i: f64, f: f64) -> NoteProfile {
        NoteProfile {
            id: 0,
            i,
            f,
            group: Group::Plus,
        }
    }

    fn raters(n: usize) -> Vec<RaterProfile> {
        (0..n)
            .map(|id| RaterProfile {
                id,
                ..rater(false, BadMode::None)
            })
            .collect()
    }

    #[test]
    fn extreme_fractions() {
        let mut rs = raters(1000);
        assign_bad(
            &mut rs,
            &AdversaryConfig {
                fraction_bad: 0.0,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert!(rs.iter().all(|r| !r.is_bad && r.bad_mode == BadMode::None));
        let cfg = AdversaryConfig {
            fraction_bad: 1.0,
            mode: AttackMode::Coordinated,
            ..Default::default()
        };
        assign_bad(&mut rs, &cfg, 1).unwrap();
        assert!(rs.iter().all(|r| r.is_bad && r.bad_mode == BadMode::Coordinated));
    }

    #[test]
    fn bad_count_binomial() {
        let mut rs = raters(100_000);
        assign_bad(
            &mut rs,
            &AdversaryConfig {
                fraction_bad: 0.2,
                ..Default::default()
            },
            7,
        )
        .unwrap();
        let k = rs.iter().filter(|r| r.is_bad).count() as i64;
        assert!((k - 20_000).abs() <= 400, "{k}");
    }

    #[test]
    fn zero_behavior_rate_is_honest() {
        let g = GlobalParams::default();
        let cfg = AdversaryConfig {
            behavior_rate: 0.0,
            ..Default::default()
        };
        let r = rater(true, BadMode::Indiscriminate);
        let mut rng = SimRng::seed_from_u64(3);
        for i in [-0.5, 0.39, 0.4, 0.9] {
            let n = note(i, -0.2);
            assert_eq!(effective_probs(&g, &r, &n, &cfg, &mut rng), honest_probs(&g, &r, &n));
        }
    }

    #[test]
    fn threshold_and_side_rules() {
        let g = GlobalParams::default();
        let mut rng = SimRng::seed_from_u64(3);
        let ind = AdversaryConfig {
            behavior_rate: 1.0,
            ..Default::default()
        };
        let r = rater(true, BadMode::Indiscriminate);
        let n = note(0.39, 0.0);
        assert_eq!(effective_probs(&g, &r, &n, &ind, &mut rng), honest_probs(&g, &r, &n));
        let n = note(0.4, 0.0);
        assert_eq!(
            effective_probs(&g, &r, &n, &ind, &mut rng),
            honest_probs(&g, &r, &n).swapped()
        );

        let coord = AdversaryConfig {
            mode: AttackMode::Coordinated,
            phi: 1,
            ..ind
        };
        let r = rater(true, BadMode::Coordinated);
        let n = note(0.8, 0.3);
        assert_eq!(effective_probs(&g, &r, &n, &coord, &mut rng), honest_probs(&g, &r, &n));
        let n = note(0.8, -0.3);
        assert_eq!(
            effective_probs(&g, &r, &n, &coord, &mut rng),
            honest_probs(&g, &r, &n).swapped()
        );
        let n = note(0.8, 0.0);
        assert_eq!(effective_probs(&g, &r, &n, &coord, &mut rng), honest_probs(&g, &r, &n));
    }

    #[test]
    fn invalid_configs() {
        assert!(AdversaryConfig {
            phi: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdversaryConfig {
            fraction_bad: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdversaryConfig {
            behavior_rate: -0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest::proptest! {
        #[test]
        fn coordinated_never_touches_favoured_side(
            i in -1.0f64..2.0, f in 1e-6f64..2.0, phi in proptest::sample::select(vec![1i8, -1]),
            rate in 0.0f64..=1.0, seed in 0u64..1000,
        ) {
            let g = GlobalParams::default();
            let cfg = AdversaryConfig { mode: AttackMode::Coordinated, phi, behavior_rate: rate, ..Default::default() };
            let r = rater(true, BadMode::Coordinated);
            let n = note(i, f64::from(phi) * f);
            let mut rng = SimRng::seed_from_u64(seed);
            proptest::prop_assert_eq!(effective_probs(&g, &r, &n, &cfg, &mut rng), honest_probs(&g, &r, &n));
        }

        #[test]
        fn effective_probs_normalized(
            i in -2.0f64..2.0, f in -2.0f64..2.0, rate in 0.0f64..=1.0, seed in 0u64..1000,
        ) {
            let g = GlobalParams::default();
            let cfg = AdversaryConfig { behavior_rate: rate, ..Default::default() };
            let r = rater(true, BadMode::Indiscriminate);
            let mut rng = SimRng::seed_from_u64(seed);
            let p = effective_probs(&g, &r, &note(i, f), &cfg, &mut rng);
            proptest::prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        }
    }
}
