//! Desk-scale acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use notesim_core::experiments::{
    critical_threshold, generate_dataset, grid_points, preset, run_in_memory, ReplicateMetrics, ScenarioConfig,
};
use notesim_core::metrics::{confusion, error_rates, MetricReport};
use notesim_core::network::{complete_graph, measure_ingroup_bias, rewire, HomophilyTarget, RatingGraph};
use notesim_core::population::{draw_rating, probs_from_score, Group, NoteProfile, Rating};
use notesim_core::rng::{stream, Stream};
use notesim_core::scorer::{fit, gradient, loss, FitHyper, FittedParams, NoteStatus, Optimizer};

const REPLICATES: usize = 5;

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    let c = Check { name, pass, detail };
    println!("{c}");
    c
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn mean_of(runs: &[ReplicateMetrics], frame: impl Fn(&ReplicateMetrics) -> &MetricReport, field: &str) -> f64 {
    let vals: Vec<f64> = runs.iter().filter_map(|m| frame(m).get(field)).collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

fn overall(m: &ReplicateMetrics) -> &MetricReport {
    &m.overall
}

fn targeted(m: &ReplicateMetrics) -> &MetricReport {
    &m.targeted
}

fn non_targeted(m: &ReplicateMetrics) -> &MetricReport {
    &m.non_targeted
}

fn scenario(name: &str, edit: impl FnOnce(&mut ScenarioConfig)) -> ScenarioConfig {
    let mut cfg = preset(name).expect("preset");
    cfg.sweep = None;
    edit(&mut cfg);
    cfg
}

fn run(cfg: &ScenarioConfig) -> Vec<ReplicateMetrics> {
    let t = Instant::now();
    let results = run_in_memory(cfg, REPLICATES, None).expect("run");
    let ok: Vec<ReplicateMetrics> = results.into_iter().filter_map(|r| r.outcome.ok()).collect();
    assert_eq!(ok.len(), REPLICATES, "{}: a replicate failed", cfg.name);
    eprintln!(
        "  ran {} (fraction {}, rate {}) x{REPLICATES} in {:.0}s",
        cfg.name,
        cfg.adversary.fraction_bad,
        cfg.adversary.behavior_rate,
        t.elapsed().as_secs_f64()
    );
    ok
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn baseline_small() -> Check {
    let runs = run(&scenario("baseline-small", |_| {}));
    let got = ["suppression", "pollution", "waste", "infiltration"].map(|f| mean_of(&runs, overall, f));
    let want = [0.013, 0.070, 0.005, 0.027];
    let pass = got.iter().zip(want).all(|(&g, w)| within(g, w, 0.03));
    check(
        "baseline-small error rates",
        pass,
        format!(
            "sup/pol/waste/inf = {:.3}/{:.3}/{:.3}/{:.3}, want {want:?} +-0.03",
            got[0], got[1], got[2], got[3]
        ),
    )
}

fn rating_mix() -> Check {
    let cfg = scenario("baseline-main", |_| {});
    let prepared = notesim_core::experiments::Prepared::new(cfg.clone(), None).expect("tables");
    let mut mix = [0.0; 3];
    for k in 0..REPLICATES {
        let seed = notesim_core::experiments::replicate::replicate_seed(cfg.base_seed, k);
        let d = generate_dataset(&prepared, seed).expect("generate");
        let m = d.graph.rating_mix();
        for j in 0..3 {
            mix[j] += m[j] / REPLICATES as f64;
        }
    }
    let want = [0.596, 0.030, 0.374];
    let pass = mix.iter().zip(want).all(|(&g, w)| within(g, w, 0.02));
    check(
        "rating mix",
        pass,
        format!(
            "H/SH/NH = {:.3}/{:.3}/{:.3}, want 0.596/0.030/0.374 +-0.02",
            mix[0], mix[1], mix[2]
        ),
    )
}

struct MainRuns {
    honest: Vec<ReplicateMetrics>,
    ind_25_full: Vec<ReplicateMetrics>,
    ind_5_half: Vec<ReplicateMetrics>,
    ind_5_full: Vec<ReplicateMetrics>,
    coord_honest: Vec<ReplicateMetrics>,
    coord_25: Vec<ReplicateMetrics>,
}

fn main_runs() -> MainRuns {
    let ind = |fraction: f64, rate: f64| {
        run(&scenario("fig3", |c| {
            c.adversary.fraction_bad = fraction;
            c.adversary.behavior_rate = rate;
        }))
    };
    let coord = |fraction: f64| run(&scenario("table1", |c| c.adversary.fraction_bad = fraction));
    MainRuns {
        honest: ind(0.0, 1.0),
        ind_25_full: ind(0.25, 1.0),
        ind_5_half: ind(0.05, 0.5),
        ind_5_full: ind(0.05, 1.0),
        coord_honest: coord(0.0),
        coord_25: coord(0.25),
    }
}

fn indiscriminate(r: &MainRuns) -> Check {
    let sup = mean_of(&r.ind_25_full, targeted, "suppression");
    let pol = mean_of(&r.ind_25_full, targeted, "pollution");
    let sup_low = mean_of(&r.ind_5_half, targeted, "suppression");
    let sup_honest = mean_of(&r.honest, targeted, "suppression");
    // with nothing published pollution is undefined; that counts as saturated
    let pol_ok = pol.is_nan() || pol >= 0.95;
    let pass = sup >= 0.95 && pol_ok && within(sup_low, sup_honest, 0.15);
    check(
        "indiscriminate breakdown",
        pass,
        format!(
            "25%/1.0 sup {sup:.3} pol {pol:.3} (>= 0.95); 5%/0.5 sup {sup_low:.3} vs honest {sup_honest:.3} (+-0.15)"
        ),
    )
}

fn coordinated(r: &MainRuns) -> Check {
    let t_sup = mean_of(&r.coord_25, targeted, "suppression");
    let n_sup = mean_of(&r.coord_25, non_targeted, "suppression");
    let n_sup_honest = mean_of(&r.coord_honest, non_targeted, "suppression");
    let t_pub = mean_of(&r.coord_25, targeted, "publication_rate");
    let t_pub_honest = mean_of(&r.coord_honest, targeted, "publication_rate");
    let pass = t_sup >= 0.95 && within(n_sup, n_sup_honest, 0.10) && t_pub <= 0.05 && within(t_pub_honest, 0.20, 0.05);
    check(
        "coordinated asymmetry",
        pass,
        format!(
            "targeted sup {t_sup:.3} (>= 0.95); non-targeted sup {n_sup:.3} vs honest {n_sup_honest:.3} (+-0.10); \
             targeted pub {t_pub:.3} (<= 0.05) vs honest {t_pub_honest:.3} (~0.20 +-0.05)"
        ),
    )
}

fn table1(r: &MainRuns) -> Check {
    let hp = mean_of(&r.coord_25, targeted, "excess_help_pub");
    let hu = mean_of(&r.coord_25, targeted, "excess_help_unpub");
    let np = mean_of(&r.coord_25, non_targeted, "excess_help_pub");
    let pass = within(hp, -0.549, 0.10) && within(hu, 2.35, 0.40) && within(np, -0.078, 0.05);
    check(
        "excess helpfulness at 25% coordinated",
        pass,
        format!(
            "targeted pub {hp:.3} (-0.549 +-0.10), targeted unpub {hu:.3} (2.35 +-0.40), non-targeted pub {np:.3} (-0.078 +-0.05)"
        ),
    )
}

fn filter_recall(r: &MainRuns) -> Check {
    let low = mean_of(&r.ind_5_full, overall, "filter_recall");
    let high = mean_of(&r.ind_25_full, overall, "filter_recall");
    check(
        "filter recall",
        low >= 0.8 && high <= 0.2,
        format!("5%/1.0 recall {low:.3} (>= 0.8); 25%/1.0 recall {high:.3} (<= 0.2)"),
    )
}

fn threshold_ordering() -> Check {
    let base = preset("fig5").expect("preset");
    let t = base.threshold.expect("threshold settings");
    let condition = |e_h: f64, rho: f64| {
        let at = |coords: &[(String, String)], key: &str, want: f64| {
            coords
                .iter()
                .any(|(k, v)| k == key && v.parse::<f64>().ok() == Some(want))
        };
        grid_points(&base)
            .expect("grid")
            .into_iter()
            .find(|p| {
                at(&p.coords, "network.ingroup_bias", e_h) && at(&p.coords, "population.raters.polarization", rho)
            })
            .expect("grid point")
            .cfg
    };
    let mut out = Vec::new();
    for (e_h, rho) in [(1.0, 1.0), (0.0, 0.0)] {
        let cfg = condition(e_h, rho);
        let started = Instant::now();
        let r = critical_threshold(&cfg, &t, REPLICATES, None).expect("threshold scan");
        eprintln!(
            "  threshold E_h={e_h} rho_u={rho}: {:?} after {} fractions in {:.0}s",
            r.threshold,
            r.scan.len(),
            started.elapsed().as_secs_f64()
        );
        out.push(r.threshold);
    }
    let (hi, lo) = (out[0], out[1]);
    let in_range = |x: Option<f64>| x.is_some_and(|v| (0.04..=0.25).contains(&v));
    let pass = match (hi, lo) {
        (Some(a), Some(b)) => a < b && in_range(hi) && in_range(lo),
        _ => false,
    };
    check(
        "threshold ordering",
        pass,
        format!(
            "E_h=1,rho_u=1 -> {hi:?}; E_h=0,rho_u=0 -> {lo:?} (first < second, both in [0.04, 0.25], step {})",
            t.resolution
        ),
    )
}

fn rated(mut g: RatingGraph, seed: u64) -> RatingGraph {
    let mut rng = stream(seed, Stream::Ratings);
    for e in g.edges.iter_mut() {
        e.rating = Some(match rng.random_range(0..3) {
            0 => Rating::Helpful,
            1 => Rating::Somewhat,
            _ => Rating::NotHelpful,
        });
    }
    g
}

fn random_params(n_raters: usize, n_notes: usize, seed: u64) -> FittedParams {
    let mut rng = stream(seed, Stream::FitInit);
    let mut p = FittedParams::zeros(n_raters, n_notes);
    p.mu = rng.random_range(-0.5..0.5);
    for v in p
        .rater_intercept
        .iter_mut()
        .chain(p.rater_factor.iter_mut())
        .chain(p.note_intercept.iter_mut())
        .chain(p.note_factor.iter_mut())
    {
        *v = rng.random_range(-0.5..0.5);
    }
    p
}

fn property_suite() -> Check {
    let mut failures = Vec::new();

    // softmax normalization and empirical frequencies
    let probs = probs_from_score(30.0, 0.52);
    let mut rng = stream(3, Stream::Ratings);
    let mut counts = [0usize; 3];
    let n = 1_000_000;
    for _ in 0..n {
        counts[match draw_rating(&probs, &mut rng) {
            Rating::Helpful => 0,
            Rating::Somewhat => 1,
            Rating::NotHelpful => 2,
        }] += 1;
    }
    let freq = counts.map(|c| c as f64 / n as f64);
    let expect = [probs.helpful, probs.somewhat, probs.not_helpful];
    if (probs.sum() - 1.0).abs() > 1e-12
        || freq
            .iter()
            .zip(expect)
            .any(|(f, p)| (f - p).abs() > 5.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-9)
    {
        failures.push(format!("softmax: freq {freq:?} vs {expect:?}"));
    }

    // analytic gradient against central differences at 100 random points
    let g = rated(
        RatingGraph::new(
            6,
            8,
            (0..6u32).flat_map(|u| (0..8u32).filter(move |n| (u + n) % 3 != 0).map(move |n| (u, n))),
        ),
        5,
    );
    let h = FitHyper::default();
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let p = random_params(6, 8, 100 + k);
        let grad = gradient(&p, &g, &h).expect("gradient");
        let eps = 1e-6;
        let mut compare = |set: &dyn Fn(&mut FittedParams, f64), analytic: f64| {
            let mut up = p.clone();
            set(&mut up, eps);
            let mut down = p.clone();
            set(&mut down, -eps);
            let fd = (loss(&up, &g, &h).unwrap() - loss(&down, &g, &h).unwrap()) / (2.0 * eps);
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max(rel);
        };
        compare(&|q, d| q.mu += d, grad.mu);
        for j in 0..6 {
            compare(&|q, d| q.rater_intercept[j] += d, grad.rater_intercept[j]);
            compare(&|q, d| q.rater_factor[j] += d, grad.rater_factor[j]);
        }
        for j in 0..8 {
            compare(&|q, d| q.note_intercept[j] += d, grad.note_intercept[j]);
            compare(&|q, d| q.note_factor[j] += d, grad.note_factor[j]);
        }
    }
    if worst >= 1e-4 {
        failures.push(format!("gradient: worst relative error {worst:.2e}"));
    }

    // monotone loss for both optimizers
    for optimizer in [Optimizer::Alternating, Optimizer::GradientDescent] {
        let fitted = fit(
            &g,
            &FitHyper {
                optimizer,
                max_epochs: 300,
                ..h
            },
        )
        .expect("fit");
        let rising = fitted
            .loss_trace
            .windows(2)
            .filter(|w| w[1] > w[0] * (1.0 + 1e-12))
            .count();
        if rising > 0 || fitted.loss_trace.is_empty() {
            failures.push(format!("{optimizer:?}: loss rose {rising} time(s)"));
        }
    }

    // rewiring: degrees preserved, mean E_h over seeds near 2p - 1
    let n = 1000;
    let side = |k: usize| if k.is_multiple_of(2) { Group::Plus } else { Group::Minus };
    let rg: Vec<Group> = (0..n).map(side).collect();
    let ng: Vec<Group> = (0..n).map(side).collect();
    let ring = RatingGraph::new(
        n,
        n,
        (0..n as u32).flat_map(|u| (0..10u32).map(move |d| (u, (u + d) % n as u32))),
    );
    for p in [0.0, 0.5, 1.0] {
        let mut mean_eh = 0.0;
        for seed in 0..4 {
            let mut g = ring.clone();
            let stats = rewire(&mut g, &rg, &ng, HomophilyTarget { p }, 100_000, seed).expect("rewire");
            let e_h = measure_ingroup_bias(&g, &rg, &ng).expect("bias");
            if g.rater_degrees() != ring.rater_degrees()
                || g.note_degrees() != ring.note_degrees()
                || g.validate().is_err()
            {
                failures.push(format!("rewire p={p}: degrees or uniqueness broken"));
            }
            if (stats.ingroup_bias_after - e_h).abs() > 1e-12 {
                failures.push(format!("rewire p={p}: reported E_h differs from measured"));
            }
            mean_eh += e_h / 4.0;
        }
        if (mean_eh - (2.0 * p - 1.0)).abs() > 0.02 {
            failures.push(format!("rewire p={p}: mean E_h {mean_eh:.3}"));
        }
    }

    // single HELPFUL rating with factors pinned at zero
    let mut one = RatingGraph::new(1, 1, [(0, 0)]);
    one.edges[0].rating = Some(Rating::Helpful);
    let fitted = fit(
        &one,
        &FitHyper {
            init_scale: 0.0,
            tol: 1e-14,
            max_epochs: 100_000,
            ..h
        },
    )
    .expect("fit");
    for v in [fitted.mu, fitted.rater_intercept[0], fitted.note_intercept[0]] {
        if (v - 0.31746).abs() > 1e-3 {
            failures.push(format!("single rating: {v:.5}"));
        }
    }

    // error rates against direct enumeration on random 100-note instances
    let mut rng = stream(9, Stream::Population);
    for _ in 0..200 {
        let notes: Vec<NoteProfile> = (0..100)
            .map(|id| NoteProfile {
                id,
                i: rng.random_range(-0.5..1.0),
                f: rng.random_range(-1.0..1.0),
                group: Group::Plus,
            })
            .collect();
        let status: Vec<NoteStatus> = (0..100)
            .map(|_| {
                if rng.random_bool(0.3) {
                    NoteStatus::Published
                } else {
                    NoteStatus::NotPublished
                }
            })
            .collect();
        let rates = error_rates(&confusion(&notes, &status, |_| true));
        let count = |pubd: Option<bool>, helpful: Option<bool>| {
            notes
                .iter()
                .filter(|n| pubd.is_none_or(|p| status[n.id].is_published() == p))
                .filter(|n| helpful.is_none_or(|h| (n.i > 0.4 && n.f.abs() < 0.5) == h))
                .count() as f64
        };
        let brute = [
            count(Some(false), Some(true)) / count(None, Some(true)),
            count(Some(true), Some(false)) / count(Some(true), None),
            count(Some(true), Some(false)) / count(None, Some(false)),
            count(Some(false), Some(true)) / count(Some(false), None),
        ];
        let ours = [rates.suppression, rates.pollution, rates.infiltration, rates.waste];
        for (b, o) in brute.iter().zip(ours) {
            let same = match o {
                Some(v) => (v - b).abs() < 1e-12,
                None => b.is_nan(),
            };
            if !same {
                failures.push(format!("oracle: {o:?} vs {b}"));
            }
        }
    }

    // determinism: same seed, same everything
    let small = scenario("baseline-small", |c| {
        c.population.raters.count = 120;
        c.population.notes.count = 150;
        c.adversary.fraction_bad = 0.1;
    });
    let a = run_in_memory(&small, 2, None).expect("run");
    let b = run_in_memory(&small, 2, None).expect("run");
    let strip = |v: &[notesim_core::experiments::ReplicateResult]| {
        v.iter().map(|r| (r.seed, r.outcome.clone())).collect::<Vec<_>>()
    };
    if strip(&a) != strip(&b) {
        failures.push("determinism: reruns differ".into());
    }
    let g1 = rated(complete_graph(30, 30), 4);
    if fit(&g1, &h).unwrap() != fit(&g1, &h).unwrap() {
        failures.push("determinism: fits differ".into());
    }

    check(
        "property suite",
        failures.is_empty(),
        if failures.is_empty() {
            "softmax, gradient, monotone loss, rewiring, single rating, oracle, determinism".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut checks = vec![property_suite(), baseline_small(), rating_mix()];
    let runs = main_runs();
    checks.push(indiscriminate(&runs));
    checks.push(coordinated(&runs));
    checks.push(table1(&runs));
    checks.push(filter_recall(&runs));
    checks.push(threshold_ordering());

    println!();
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.0}s",
        checks.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
