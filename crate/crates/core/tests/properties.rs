use proptest::prelude::*;

use notesim_core::network::{measure_ingroup_bias, rewire, HomophilyTarget, RatingGraph};
use notesim_core::population::{probs_from_score, Group, Rating};
use notesim_core::scorer::{fit, gradient, loss, FitHyper, FittedParams, LossNormalization, MuPenalty, Optimizer};

fn rating(k: u8) -> Rating {
    match k % 3 {
        0 => Rating::Helpful,
        1 => Rating::Somewhat,
        _ => Rating::NotHelpful,
    }
}

/// Random bipartite graph with unique edges and a rating on each.
fn rated_graph() -> impl Strategy<Value = RatingGraph> {
    (2usize..7, 2usize..7)
        .prop_flat_map(|(nr, nn)| (Just(nr), Just(nn), proptest::collection::vec(any::<u8>(), nr * nn)))
        .prop_filter_map("need two ratings", |(nr, nn, codes)| {
            let mut pairs = Vec::new();
            let mut ratings = Vec::new();
            for (k, &c) in codes.iter().enumerate() {
                if c % 4 != 0 {
                    pairs.push(((k / nn) as u32, (k % nn) as u32));
                    ratings.push(rating(c));
                }
            }
            if pairs.len() < 2 {
                return None;
            }
            let mut g = RatingGraph::new(nr, nn, pairs);
            for (e, r) in g.edges.iter_mut().zip(ratings) {
                e.rating = Some(r);
            }
            Some(g)
        })
}

fn params_for(g: &RatingGraph, values: &[f64]) -> FittedParams {
    let mut p = FittedParams::zeros(g.n_raters, g.n_notes);
    let mut it = values.iter().copied().cycle();
    p.mu = it.next().unwrap();
    for k in 0..g.n_raters {
        p.rater_intercept[k] = it.next().unwrap();
        p.rater_factor[k] = it.next().unwrap();
    }
    for k in 0..g.n_notes {
        p.note_intercept[k] = it.next().unwrap();
        p.note_factor[k] = it.next().unwrap();
    }
    p
}

fn hyper_variants() -> impl Strategy<Value = FitHyper> {
    prop_oneof![
        Just(FitHyper::default()),
        Just(FitHyper {
            normalization: LossNormalization::Sum,
            ..FitHyper::default()
        }),
        Just(FitHyper {
            normalization: LossNormalization::Sum,
            mu_penalty: MuPenalty::Once,
            ..FitHyper::default()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(
        g in rated_graph(),
        values in proptest::collection::vec(-1.0f64..1.0, 31),
        h in hyper_variants(),
    ) {
        let p = params_for(&g, &values);
        let grad = gradient(&p, &g, &h).unwrap();
        let eps = 1e-6;
        let check = |set: &dyn Fn(&mut FittedParams, f64), analytic: f64| {
            let (mut up, mut down) = (p.clone(), p.clone());
            set(&mut up, eps);
            set(&mut down, -eps);
            let fd = (loss(&up, &g, &h).unwrap() - loss(&down, &g, &h).unwrap()) / (2.0 * eps);
            (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3)
        };
        let mut worst = check(&|q, d| q.mu += d, grad.mu);
        let rated_raters = g.rater_degrees();
        let rated_notes = g.note_degrees();
        for j in (0..g.n_raters).filter(|&j| rated_raters[j] > 0) {
            worst = worst.max(check(&|q, d| q.rater_intercept[j] += d, grad.rater_intercept[j]));
            worst = worst.max(check(&|q, d| q.rater_factor[j] += d, grad.rater_factor[j]));
        }
        for j in (0..g.n_notes).filter(|&j| rated_notes[j] > 0) {
            worst = worst.max(check(&|q, d| q.note_intercept[j] += d, grad.note_intercept[j]));
            worst = worst.max(check(&|q, d| q.note_factor[j] += d, grad.note_factor[j]));
        }
        prop_assert!(worst < 1e-4, "relative error {worst:e}");
    }

    #[test]
    fn loss_never_increases(g in rated_graph(), seed in any::<u64>(), gd in any::<bool>()) {
        let optimizer = if gd { Optimizer::GradientDescent } else { Optimizer::Alternating };
        let h = FitHyper { optimizer, seed, max_epochs: 200, ..FitHyper::default() };
        let p = fit(&g, &h).unwrap();
        prop_assert!(!p.loss_trace.is_empty());
        for w in p.loss_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        prop_assert!((loss(&p, &g, &h).unwrap() - p.final_loss).abs() <= 1e-9 * p.final_loss.max(1.0));
    }

    #[test]
    fn rewiring_preserves_degrees_and_uniqueness(
        g in rated_graph(),
        sides in proptest::collection::vec(any::<bool>(), 12),
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let side = |b: bool| if b { Group::Plus } else { Group::Minus };
        let rg: Vec<Group> = sides[..6].iter().map(|&b| side(b)).collect();
        let ng: Vec<Group> = sides[6..].iter().map(|&b| side(b)).collect();
        let mut h = g.clone();
        let stats = rewire(&mut h, &rg, &ng, HomophilyTarget { p }, 500, seed).unwrap();
        prop_assert_eq!(h.rater_degrees(), g.rater_degrees());
        prop_assert_eq!(h.note_degrees(), g.note_degrees());
        prop_assert!(h.validate().is_ok());
        prop_assert!(stats.accepted <= stats.attempted);
        let e_h = measure_ingroup_bias(&h, &rg, &ng).unwrap();
        prop_assert!((-1.0..=1.0).contains(&e_h));
        prop_assert_eq!(stats.ingroup_bias_after, e_h);
        // ratings travel with their edge slot, not with the pair
        let before: Vec<_> = g.edges.iter().map(|e| (e.rater, e.rating)).collect();
        let after: Vec<_> = h.edges.iter().map(|e| (e.rater, e.rating)).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn rating_probabilities_form_a_distribution(score in -5.0f64..5.0, gamma in 0.0f64..200.0) {
        let p = probs_from_score(gamma, score);
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        for v in [p.helpful, p.somewhat, p.not_helpful] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let s = p.swapped();
        prop_assert_eq!(s.helpful, p.not_helpful);
        prop_assert_eq!(s.somewhat, p.somewhat);
        prop_assert!((s.sum() - 1.0).abs() < 1e-12);
    }
}
