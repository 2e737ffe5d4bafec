//! Evaluation of a scored dataset against the true note parameters.
//!
//! Quantities that are undefined for a dataset (empty denominators, zero
//! variance) are `None`, never zero.

use crate::population::{NoteProfile, RaterProfile};
use crate::scorer::{FittedParams, NoteStatus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    /// Published and truly helpful.
    pub n_ph: u64,
    /// Not published, truly helpful.
    pub n_pbar_h: u64,
    /// Published, not truly helpful.
    pub n_p_hbar: u64,
    pub n_pbar_hbar: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.n_ph + self.n_pbar_h + self.n_p_hbar + self.n_pbar_hbar
    }
}

pub fn confusion(
    notes: &[NoteProfile],
    status: &[NoteStatus],
    subset: impl Fn(&NoteProfile) -> bool,
) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for n in notes.iter().filter(|n| subset(n)) {
        match (status[n.id].is_published(), n.is_helpful()) {
            (true, true) => c.n_ph += 1,
            (false, true) => c.n_pbar_h += 1,
            (true, false) => c.n_p_hbar += 1,
            (false, false) => c.n_pbar_hbar += 1,
        }
    }
    c
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorRates {
    /// Share of truly helpful notes left unpublished.
    pub suppression: Option<f64>,
    /// Share of published notes that are not truly helpful.
    pub pollution: Option<f64>,
    /// Share of not-helpful notes that got published.
    pub infiltration: Option<f64>,
    /// Share of unpublished notes that were truly helpful.
    pub waste: Option<f64>,
    pub publication_rate: Option<f64>,
}

pub fn error_rates(c: &ConfusionCounts) -> ErrorRates {
    ErrorRates {
        suppression: ratio(c.n_pbar_h, c.n_pbar_h + c.n_ph),
        pollution: ratio(c.n_p_hbar, c.n_p_hbar + c.n_ph),
        infiltration: ratio(c.n_p_hbar, c.n_pbar_hbar + c.n_p_hbar),
        waste: ratio(c.n_pbar_h, c.n_pbar_h + c.n_pbar_hbar),
        publication_rate: ratio(c.n_p_hbar + c.n_ph, c.total()),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for v in values {
        s += v;
        k += 1;
    }
    (k > 0).then(|| s / k as f64)
}

fn relative_excess(actual: Option<f64>, ideal: Option<f64>) -> Option<f64> {
    match (actual, ideal) {
        (Some(a), Some(i)) if i != 0.0 => Some(a / i - 1.0),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExcessValues {
    /// Mean helpfulness of published notes over that of publishable ones, minus one.
    pub help_pub: Option<f64>,
    pub help_unpub: Option<f64>,
    /// Same ratios with mean absolute bias.
    pub bias_pub: Option<f64>,
    pub bias_unpub: Option<f64>,
}

pub fn excess_values(
    notes: &[NoteProfile],
    status: &[NoteStatus],
    subset: impl Fn(&NoteProfile) -> bool,
) -> ExcessValues {
    let sel: Vec<&NoteProfile> = notes.iter().filter(|n| subset(n)).collect();
    let pick = |published: Option<bool>, helpful: Option<bool>, f: fn(&NoteProfile) -> f64| {
        mean(
            sel.iter()
                .filter(|n| published.is_none_or(|p| status[n.id].is_published() == p))
                .filter(|n| helpful.is_none_or(|h| n.is_helpful() == h))
                .map(|n| f(n)),
        )
    };
    let help = |n: &NoteProfile| n.i;
    let bias = |n: &NoteProfile| n.f.abs();
    ExcessValues {
        help_pub: relative_excess(pick(Some(true), None, help), pick(None, Some(true), help)),
        help_unpub: relative_excess(pick(Some(false), None, help), pick(None, Some(false), help)),
        bias_pub: relative_excess(pick(Some(true), None, bias), pick(None, Some(true), bias)),
        bias_unpub: relative_excess(pick(Some(false), None, bias), pick(None, Some(false), bias)),
    }
}

/// Sample Pearson correlation; `None` for fewer than two points or zero
/// variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Correlations {
    pub help: Option<f64>,
    pub bias_abs: Option<f64>,
    pub bias_signed: Option<f64>,
}

/// Sign that aligns the fitted factors with the true rater biases:
/// -1 when `Σ f_u f̂_u < 0`, otherwise +1.
pub fn factor_orientation(raters: &[RaterProfile], fitted: &FittedParams) -> f64 {
    let s: f64 = raters
        .iter()
        .filter(|r| fitted.rater_fitted[r.id])
        .map(|r| r.f * fitted.rater_factor[r.id])
        .sum();
    if s < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Correlations between true and fitted note parameters over the fitted
/// notes in `subset`.
pub fn correlations(
    notes: &[NoteProfile],
    raters: &[RaterProfile],
    fitted: &FittedParams,
    subset: impl Fn(&NoteProfile) -> bool,
) -> Correlations {
    let sign = factor_orientation(raters, fitted);
    let sel: Vec<&NoteProfile> = notes.iter().filter(|n| fitted.note_fitted[n.id] && subset(n)).collect();
    let col = |f: &dyn Fn(&NoteProfile) -> f64| sel.iter().map(|n| f(n)).collect::<Vec<f64>>();
    let i_true = col(&|n| n.i);
    let i_hat = col(&|n| fitted.note_intercept[n.id]);
    let f_true = col(&|n| n.f);
    let f_hat = col(&|n| sign * fitted.note_factor[n.id]);
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<f64>>();
    Correlations {
        help: pearson(&i_true, &i_hat),
        bias_abs: pearson(&abs(&f_true), &abs(&f_hat)),
        bias_signed: pearson(&f_true, &f_hat),
    }
}

/// Recall and precision of the filter as a detector of bad raters.
pub fn filter_efficacy(removed: &[bool], bad: &[bool]) -> (Option<f64>, Option<f64>) {
    assert_eq!(removed.len(), bad.len());
    let hit = removed.iter().zip(bad).filter(|(&r, &b)| r && b).count() as u64;
    let n_bad = bad.iter().filter(|&&b| b).count() as u64;
    let n_removed = removed.iter().filter(|&&r| r).count() as u64;
    (ratio(hit, n_bad), ratio(hit, n_removed))
}

/// Fractions of (unhelpful & published, helpful & unpublished,
/// helpful & published, unhelpful & unpublished).
pub fn category_fractions(c: &ConfusionCounts) -> Option<[f64; 4]> {
    let t = c.total();
    (t > 0).then(|| {
        let t = t as f64;
        [
            c.n_p_hbar as f64 / t,
            c.n_pbar_h as f64 / t,
            c.n_ph as f64 / t,
            c.n_pbar_hbar as f64 / t,
        ]
    })
}

/// Every metric for one frame (all notes, targeted or non-targeted).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricReport {
    pub n_notes: u64,
    pub rates: ErrorRates,
    pub excess: ExcessValues,
    pub corr: Correlations,
    pub filter_recall: Option<f64>,
    pub filter_precision: Option<f64>,
    pub categories: Option<[f64; 4]>,
}

impl MetricReport {
    pub const FIELDS: [&'static str; 19] = [
        "n_notes",
        "suppression",
        "pollution",
        "infiltration",
        "waste",
        "publication_rate",
        "excess_help_pub",
        "excess_help_unpub",
        "excess_bias_pub",
        "excess_bias_unpub",
        "corr_help",
        "corr_bias_abs",
        "corr_bias_signed",
        "filter_recall",
        "filter_precision",
        "frac_unhelpful_published",
        "frac_helpful_unpublished",
        "frac_helpful_published",
        "frac_unhelpful_unpublished",
    ];

    /// Values in [`Self::FIELDS`] order.
    pub fn values(&self) -> [Option<f64>; 19] {
        let cat = |k: usize| self.categories.map(|c| c[k]);
        [
            Some(self.n_notes as f64),
            self.rates.suppression,
            self.rates.pollution,
            self.rates.infiltration,
            self.rates.waste,
            self.rates.publication_rate,
            self.excess.help_pub,
            self.excess.help_unpub,
            self.excess.bias_pub,
            self.excess.bias_unpub,
            self.corr.help,
            self.corr.bias_abs,
            self.corr.bias_signed,
            self.filter_recall,
            self.filter_precision,
            cat(0),
            cat(1),
            cat(2),
            cat(3),
        ]
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        Self::FIELDS
            .iter()
            .position(|f| *f == field)
            .and_then(|k| self.values()[k])
    }
}

pub fn metric_report(
    notes: &[NoteProfile],
    raters: &[RaterProfile],
    fitted: &FittedParams,
    status: &[NoteStatus],
    removed: &[bool],
    subset: impl Fn(&NoteProfile) -> bool + Copy,
) -> MetricReport {
    let c = confusion(notes, status, subset);
    let bad: Vec<bool> = raters.iter().map(|r| r.is_bad).collect();
    let (filter_recall, filter_precision) = filter_efficacy(removed, &bad);
    MetricReport {
        n_notes: c.total(),
        rates: error_rates(&c),
        excess: excess_values(notes, status, subset),
        corr: correlations(notes, raters, fitted, subset),
        filter_recall,
        filter_precision,
        categories: category_fractions(&c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{BadMode, Group};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use NoteStatus::{NotPublished as U, Published as P};

    fn notes(params: &[(f64, f64)]) -> Vec<NoteProfile> {
        params
            .iter()
            .enumerate()
            .map(|(id, &(i, f))| NoteProfile {
                id,
                i,
                f,
                group: Group::Plus,
            })
            .collect()
    }

    #[test]
    fn hand_counts() {
        let ns = notes(&[(0.5, 0.0), (0.5, 0.0), (0.1, 0.0), (0.1, 0.0)]);
        let c = confusion(&ns, &[P, U, P, U], |_| true);
        assert_eq!(
            c,
            ConfusionCounts {
                n_ph: 1,
                n_pbar_h: 1,
                n_p_hbar: 1,
                n_pbar_hbar: 1
            }
        );
        let r = error_rates(&c);
        for v in [r.suppression, r.pollution, r.infiltration, r.waste, r.publication_rate] {
            assert_eq!(v, Some(0.5));
        }
        assert_eq!(category_fractions(&c), Some([0.25; 4]));
        assert_eq!(confusion(&ns, &[P, U, P, U], |_| false), ConfusionCounts::default());
        // bias disqualifies
        let ns = notes(&[(0.5, 0.6)]);
        assert_eq!(confusion(&ns, &[P], |_| true).n_p_hbar, 1);
    }

    #[test]
    fn undefined_rates() {
        let r = error_rates(&ConfusionCounts {
            n_ph: 10,
            ..Default::default()
        });
        assert_eq!(r.suppression, Some(0.0));
        assert_eq!(r.pollution, Some(0.0));
        assert_eq!(r.infiltration, None);
        assert_eq!(r.waste, None);
        assert_eq!(r.publication_rate, Some(1.0));
        assert_eq!(error_rates(&ConfusionCounts::default()).publication_rate, None);
        assert_eq!(category_fractions(&ConfusionCounts::default()), None);
        let all_bad = ConfusionCounts {
            n_pbar_hbar: 3,
            ..Default::default()
        };
        assert_eq!(category_fractions(&all_bad), Some([0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn excess_zero_when_perfect() {
        let ns = notes(&[(0.5, 0.1), (0.9, -0.3), (0.1, 0.0), (0.7, 0.8)]);
        let st: Vec<_> = ns.iter().map(|n| if n.is_helpful() { P } else { U }).collect();
        let e = excess_values(&ns, &st, |_| true);
        for v in [e.help_pub, e.help_unpub, e.bias_pub, e.bias_unpub] {
            assert_abs_diff_eq!(v.unwrap(), 0.0, epsilon = 1e-15);
        }
        // nothing published
        let e = excess_values(&ns, &[U; 4], |_| true);
        assert_eq!(e.help_pub, None);
    }

    #[test]
    fn excess_hand_value() {
        // publishable mean i = 0.7; published {0.5, 0.1} mean 0.3 -> 0.3/0.7 - 1
        let ns = notes(&[(0.5, 0.0), (0.9, 0.0), (0.1, 0.0)]);
        let e = excess_values(&ns, &[P, U, P], |_| true);
        assert_abs_diff_eq!(e.help_pub.unwrap(), 0.3 / 0.7 - 1.0, epsilon = 1e-12);
        // unpublishable {0.1}, unpublished {0.9}
        assert_abs_diff_eq!(e.help_unpub.unwrap(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_hand_value() {
        // sxy = 3, sxx = 2, syy = 14/3
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r, 0.981_980_506, epsilon = 1e-8);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 2.0]), None);
        assert_eq!(pearson(&[1.0], &[1.0]), None);
    }

    fn fitted_for(ns: &[NoteProfile], rs: &[RaterProfile], sign: f64) -> FittedParams {
        let mut p = FittedParams::zeros(rs.len(), ns.len());
        for n in ns {
            p.note_fitted[n.id] = true;
            p.note_intercept[n.id] = n.i;
            p.note_factor[n.id] = sign * n.f;
        }
        for r in rs {
            p.rater_fitted[r.id] = true;
            p.rater_factor[r.id] = sign * r.f;
        }
        p
    }

    fn raters(fs: &[f64]) -> Vec<RaterProfile> {
        fs.iter()
            .enumerate()
            .map(|(id, &f)| RaterProfile {
                id,
                i: 0.0,
                f,
                group: Group::Plus,
                is_bad: false,
                bad_mode: BadMode::None,
            })
            .collect()
    }

    #[test]
    fn correlations_sign_invariant() {
        let ns = notes(&[(0.1, 0.3), (0.5, -0.2), (0.9, 0.7), (0.2, -0.6)]);
        let rs = raters(&[0.4, -0.1, 0.3]);
        for sign in [1.0, -1.0] {
            let c = correlations(&ns, &rs, &fitted_for(&ns, &rs, sign), |_| true);
            assert_abs_diff_eq!(c.help.unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.bias_abs.unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(c.bias_signed.unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn filter_efficacy_cases() {
        assert_eq!(filter_efficacy(&[true, false], &[true, false]), (Some(1.0), Some(1.0)));
        assert_eq!(filter_efficacy(&[false, false], &[true, false]), (Some(0.0), None));
        // removed {a,b}, bad {b,c}
        assert_eq!(
            filter_efficacy(&[true, true, false], &[false, true, true]),
            (Some(0.5), Some(0.5))
        );
    }

    #[test]
    fn report_field_lookup() {
        let ns = notes(&[(0.5, 0.0), (0.5, 0.0), (0.1, 0.0), (0.1, 0.0)]);
        let rs = raters(&[0.1]);
        let p = fitted_for(&ns, &rs, 1.0);
        let m = metric_report(&ns, &rs, &p, &[P, U, P, U], &[false], |_| true);
        assert_eq!(m.get("suppression"), Some(0.5));
        assert_eq!(m.get("filter_recall"), None);
        assert_eq!(m.get("filter_precision"), None);
        assert_eq!(m.get("n_notes"), Some(4.0));
    }

    fn instance() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<bool>)> {
        prop::collection::vec(((-0.5f64..1.2, -1.0f64..1.0), any::<bool>()), 100).prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn rates_match_brute_force((params, published) in instance()) {
            let ns = notes(&params);
            let st: Vec<_> = published.iter().map(|&p| if p { P } else { U }).collect();
            let c = confusion(&ns, &st, |_| true);
            prop_assert_eq!(c.total(), 100);
            let r = error_rates(&c);
            // independent per-note loop over the definitions
            let (mut h, mut h_unpub, mut p, mut p_unhelp, mut u, mut u_helpful, mut nh, mut nh_pub) = (0, 0, 0, 0, 0, 0, 0, 0);
            for (&(i, f), &pb) in params.iter().zip(&published) {
                let helpful = i > 0.4 && f.abs() < 0.5;
                if helpful { h += 1; if !pb { h_unpub += 1; } } else { nh += 1; if pb { nh_pub += 1; } }
                if pb { p += 1; if !helpful { p_unhelp += 1; } } else { u += 1; if helpful { u_helpful += 1; } }
            }
            let frac = |a: i32, b: i32| (b > 0).then(|| a as f64 / b as f64);
            prop_assert_eq!(r.suppression, frac(h_unpub, h));
            prop_assert_eq!(r.pollution, frac(p_unhelp, p));
            prop_assert_eq!(r.infiltration, frac(nh_pub, nh));
            prop_assert_eq!(r.waste, frac(u_helpful, u));
            prop_assert_eq!(r.publication_rate, frac(p, 100));
            let fr = category_fractions(&c).unwrap();
            prop_assert!((fr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // rates recomputed from fractions
            if let Some(s) = r.suppression {
                prop_assert!((s - fr[1] / (fr[1] + fr[2])).abs() < 1e-12);
            }
        }

        #[test]
        fn signed_correlation_flip_invariant(
            fs in prop::collection::vec(-1.0f64..1.0, 3..30),
            noise in prop::collection::vec(-0.3f64..0.3, 30),
        ) {
            let ns = notes(&fs.iter().map(|&f| (0.3, f)).collect::<Vec<_>>());
            let rs = raters(&fs);
            let mut p = fitted_for(&ns, &rs, 1.0);
            for (k, v) in p.note_factor.iter_mut().enumerate() { *v += noise[k]; }
            let a = correlations(&ns, &rs, &p, |_| true).bias_signed;
            p.flip_factors();
            let b = correlations(&ns, &rs, &p, |_| true).bias_signed;
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
