//! True rater and note parameters and the softmax rating model honest raters
//! follow.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::{stream, SimRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalParams {
    /// Global intercept shared by every rating.
    pub mu: f64,
    /// Inverse temperature of the rating softmax.
    pub gamma: f64,
}

impl Default for GlobalParams {
    fn default() -> Self {
        GlobalParams { mu: 0.17, gamma: 30.0 }
    }
}

impl GlobalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) || !self.mu.is_finite() {
            return Err(SimError::Config(format!(
                "global: gamma must be finite and >= 0, mu finite (got mu={}, gamma={})",
                self.mu, self.gamma
            )));
        }
        Ok(())
    }
}

/// Gaussian mixture parameters for one side (raters or notes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideSpec {
    pub count: usize,
    /// Mean friendliness (raters) or helpfulness (notes).
    pub mu_i: f64,
    pub sigma_i: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl SideSpec {
    pub fn unpolarized(count: usize, mu_i: f64, sigma_i: f64, sigma_f: f64) -> Self {
        SideSpec {
            count,
            mu_i,
            sigma_i,
            mu_plus: 0.0,
            mu_minus: 0.0,
            sigma_plus: sigma_f,
            sigma_minus: sigma_f,
        }
    }

    /// Half the distance between the two group bias means.
    pub fn polarization(&self) -> f64 {
        0.5 * self.mu_plus - 0.5 * self.mu_minus
    }

    /// Symmetric groups at `±rho`.
    pub fn with_polarization(mut self, rho: f64) -> Self {
        self.mu_plus = rho;
        self.mu_minus = -rho;
        self
    }

    fn validate(&self, side: &str, errs: &mut Vec<String>) {
        if self.count == 0 {
            errs.push(format!("{side}.count must be positive"));
        }
        for (name, v) in [
            ("sigma_i", self.sigma_i),
            ("sigma_plus", self.sigma_plus),
            ("sigma_minus", self.sigma_minus),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{side}.{name} must be finite and >= 0 (got {v})"));
            }
        }
        if !(self.mu_plus >= 0.0) {
            errs.push(format!("{side}.mu_plus must be >= 0 (got {})", self.mu_plus));
        }
        if !(self.mu_minus <= 0.0) {
            errs.push(format!("{side}.mu_minus must be <= 0 (got {})", self.mu_minus));
        }
        if !self.mu_i.is_finite() {
            errs.push(format!("{side}.mu_i must be finite"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub raters: SideSpec,
    pub notes: SideSpec,
}

impl PopulationSpec {
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
        self.raters.validate("population.raters", errs);
        self.notes.validate("population.notes", errs);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BadMode {
    None,
    Indiscriminate,
    Coordinated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaterProfile {
    pub id: usize,
    /// Friendliness.
    pub i: f64,
    pub f: f64,
    pub group: Group,
    pub is_bad: bool,
    pub bad_mode: BadMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoteProfile {
    pub id: usize,
    /// Helpfulness.
    pub i: f64,
    pub f: f64,
    pub group: Group,
}

impl NoteProfile {
    /// Publishable under true parameters.
    pub fn is_helpful(&self) -> bool {
        self.i > 0.4 && self.f.abs() < 0.5
    }
}

/// Probabilities of HELPFUL, SOMEWHAT HELPFUL and NOT HELPFUL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingProbs {
    pub helpful: f64,
    pub somewhat: f64,
    pub not_helpful: f64,
}

impl RatingProbs {
    pub const UNIFORM: RatingProbs = RatingProbs {
        helpful: 1.0 / 3.0,
        somewhat: 1.0 / 3.0,
        not_helpful: 1.0 / 3.0,
    };

    pub fn swapped(self) -> RatingProbs {
        RatingProbs {
            helpful: self.not_helpful,
            somewhat: self.somewhat,
            not_helpful: self.helpful,
        }
    }

    pub fn sum(&self) -> f64 {
        self.helpful + self.somewhat + self.not_helpful
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rating {
    Helpful,
    Somewhat,
    NotHelpful,
}

impl Rating {
    pub fn value(self) -> f64 {
        match self {
            Rating::Helpful => 1.0,
            Rating::Somewhat => 0.5,
            Rating::NotHelpful => 0.0,
        }
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    // sd was validated as finite and non-negative
    Normal::new(mean, sd).expect("validated normal parameters")
}

fn draw_group(rng: &mut SimRng) -> Group {
    if rng.random_bool(0.5) {
        Group::Plus
    } else {
        Group::Minus
    }
}

fn draw_side(side: &SideSpec, rng: &mut SimRng) -> Vec<(f64, f64, Group)> {
    let i_dist = normal(side.mu_i, side.sigma_i);
    let plus = normal(side.mu_plus, side.sigma_plus);
    let minus = normal(side.mu_minus, side.sigma_minus);
    (0..side.count)
        .map(|_| {
            let i = i_dist.sample(rng);
            let group = draw_group(rng);
            let f = match group {
                Group::Plus => plus.sample(rng),
                Group::Minus => minus.sample(rng),
            };
            (i, f, group)
        })
        .collect()
}

/// Draws every rater and note from `spec`. Raters come out honest.
pub fn sample_population(spec: &PopulationSpec, seed: u64) -> Result<(Vec<RaterProfile>, Vec<NoteProfile>)> {
    spec.validate()?;
    let mut rng = stream(seed, Stream::Population);
    let raters = draw_side(&spec.raters, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(id, (i, f, group))| RaterProfile {
            id,
            i,
            f,
            group,
            is_bad: false,
            bad_mode: BadMode::None,
        })
        .collect();
    let notes = draw_side(&spec.notes, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(id, (i, f, group))| NoteProfile { id, i, f, group })
        .collect();
    Ok((raters, notes))
}

/// Softmax over exponents `(x, 0, -x)` with `x = γ(score - ½)`.
pub fn probs_from_score(gamma: f64, score: f64) -> RatingProbs {
    let x = gamma * (score - 0.5);
    // subtract the largest exponent, |x|, before exponentiating
    let m = x.abs();
    let eh = (x - m).exp();
    let es = (-m).exp();
    let en = (-x - m).exp();
    let z = eh + es + en;
    RatingProbs {
        helpful: eh / z,
        somewhat: es / z,
        not_helpful: en / z,
    }
}

pub fn rating_score(g: &GlobalParams, rater: &RaterProfile, note: &NoteProfile) -> f64 {
    g.mu + rater.i + note.i + rater.f * note.f
}

pub fn honest_probs(g: &GlobalParams, rater: &RaterProfile, note: &NoteProfile) -> RatingProbs {
    probs_from_score(g.gamma, rating_score(g, rater, note))
}

pub fn draw_rating<R: Rng + ?Sized>(probs: &RatingProbs, rng: &mut R) -> Rating {
    let u: f64 = rng.random();
    if u < probs.helpful {
        Rating::Helpful
    } else if u < probs.helpful + probs.somewhat {
        Rating::Somewhat
    } else {
        Rating::NotHelpful
    }
}
