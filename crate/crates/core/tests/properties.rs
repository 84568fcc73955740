//! Randomized invariants: operator inequalities, solver monotonicity, the
//! reachability oracle against the fast A1 decision, and serialization
//! round-trips.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shiftbp::construct::{ConstructParams, Direction, Supercritical};
use shiftbp::genfun::{self, UVector};
use shiftbp::law::{self, a1_oracle, check_assumptions, moments, OffspringEntry, OffspringLaw};
use shiftbp::roots;
use shiftbp::samples;

#[test]
fn construction_converges_across_random_laws() {
    // The scan is tuned on nothing law-specific: ten random supercritical laws
    // must all converge with machine-precision residuals, ratios settling on
    // their own decay rate, and an ordered prepend family on top.
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for case in 0..10 {
        let law = samples::random_supercritical(&mut rng, 4);
        let sc = Supercritical::new(&law).unwrap();
        let cand = sc
            .construct_fixed_point(&ConstructParams::default())
            .unwrap();
        assert!(
            cand.converged,
            "case {case} ({}) did not settle: {:?}",
            law.to_canonical_json(),
            cand.diff_trace
        );
        assert!(cand.residual_report.sup_window <= 1e-12);
        let u1 = cand.u.coord(1);
        assert!(u1 > 0.0 && u1 < 1.0 - sc.q());
        assert!(cand.max_alpha_dev_second_half(sc.gamma()) <= 1e-3);

        let family = sc.family(&cand, 5, Direction::Prepend).unwrap();
        assert!(family.all_ordered());
    }
}

#[test]
fn a1_fast_decision_agrees_with_reachability_oracle() {
    // 200 random laws with max displacement up to 6, biased so both verdicts
    // occur: the fast rule (positive means at displacements 1 and 2) must
    // match brute-force boolean matrix powers every time.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0usize;
    let mut passes = 0usize;
    for _ in 0..200 {
        let law = samples::random_law(&mut rng, 6);
        let summary = moments(&law);
        let fast = check_assumptions(&law, &summary).a1.pass;
        let oracle = a1_oracle(&summary, 10).is_none();
        assert_eq!(fast, oracle, "disagreement on {}", law.to_canonical_json());
        if fast {
            passes += 1;
        } else {
            failures += 1;
        }
    }
    assert!(
        passes > 10 && failures > 10,
        "generator too one-sided: {passes}/{failures}"
    );
}

#[test]
fn sup_window_continuity_bound() {
    // |T^(i)(u) - T^(i)(v)| <= M * max window coordinate gap.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let law = samples::random_law(&mut rng, 5);
        let summary = moments(&law);
        let kk = law.max_displacement();
        for _ in 0..20 {
            let u: Vec<f64> = (0..kk).map(|_| rng.random_range(0.0..1.0)).collect();
            let v: Vec<f64> = (0..kk).map(|_| rng.random_range(0.0..1.0)).collect();
            let gap = u
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let diff = (genfun::t_apply_window(&law, &u) - genfun::t_apply_window(&law, &v)).abs();
            assert!(diff <= summary.m * gap + 1e-12);
        }
    }
}

#[test]
fn decay_class_preserved_by_operator() {
    // Images of geometric decay-rate seeds stay strictly decreasing and their
    // coordinate ratios drift toward the decay rate along the window.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..12 {
        let law = samples::random_supercritical(&mut rng, 4);
        let summary = moments(&law);
        let gamma = roots::solve_gamma(&summary).unwrap().value;
        let q = roots::solve_q(&summary).value;
        let amplitude = 0.4 * (1.0 - q);
        let u = UVector::geometric(amplitude, gamma, 80).unwrap();

        let image: Vec<f64> = (1..=40).map(|i| genfun::t_apply(&law, &u, i)).collect();
        for w in image.windows(2) {
            assert!(w[0] > w[1], "image not strictly decreasing");
        }
        let devs: Vec<f64> = image
            .windows(2)
            .map(|w| (w[1] / w[0] - gamma).abs())
            .collect();
        for d in devs.windows(2) {
            assert!(
                d[1] <= d[0] * 1.01 + 1e-13,
                "ratio deviation not shrinking: {d:?}"
            );
        }
        assert!(*devs.last().unwrap() < 1e-3);
    }
}

#[test]
fn prepend_monotone_in_the_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..40 {
        let law = samples::random_supercritical(&mut rng, 4);
        let summary = moments(&law);
        let kk = law.max_displacement();
        for _ in 0..10 {
            let lo: Vec<f64> = (0..kk - 1).map(|_| rng.random_range(0.0..0.6)).collect();
            let mut hi = lo.clone();
            for x in &mut hi {
                *x += rng.random_range(0.01..0.3);
            }
            let a = roots::solve_prepend(&law, &lo).unwrap().value;
            let b = roots::solve_prepend(&law, &hi).unwrap().value;
            assert!(b >= a - 1e-13);
            if summary.mean_at(2) > 0.0 && hi[0] > lo[0] + 1e-3 {
                assert!(
                    b > a,
                    "strict monotonicity in the displacement-2 coordinate"
                );
            }
        }
    }
}

fn entry_strategy(max_k: usize) -> impl Strategy<Value = OffspringEntry> {
    (prop::collection::vec(0u32..=3, 1..=max_k), 1u32..=1000).prop_map(|(counts, w)| {
        OffspringEntry {
            counts,
            prob: f64::from(w),
        }
    })
}

fn law_strategy() -> impl Strategy<Value = OffspringLaw> {
    (prop::collection::vec(entry_strategy(4), 1..=5), 1u32..=1000).prop_filter_map(
        "valid law",
        |(mut entries, w0)| {
            entries.push(OffspringEntry {
                counts: vec![],
                prob: f64::from(w0),
            });
            let total: f64 = entries.iter().map(|e| e.prob).sum();
            for e in &mut entries {
                e.prob /= total;
            }
            OffspringLaw::new("prop", entries).ok()
        },
    )
}

proptest! {
    #[test]
    fn canonical_serialization_round_trips(law in law_strategy()) {
        let reloaded = law::load_law(&law.to_canonical_json()).unwrap();
        prop_assert_eq!(&law, &reloaded);
        prop_assert_eq!(law.content_hash(), reloaded.content_hash());
    }

    #[test]
    fn operator_dominated_by_mean_on_decreasing_vectors(
        law in law_strategy(),
        start in 0.05f64..0.9,
        ratios in prop::collection::vec(0.3f64..0.99, 12),
    ) {
        let summary = moments(&law);
        let mut head = Vec::with_capacity(ratios.len());
        let mut x = start;
        for r in &ratios {
            head.push(x);
            x *= r;
        }
        let u = UVector::new(head, 0.5).unwrap();
        for i in 1..=4usize {
            let t = genfun::t_apply(&law, &u, i);
            prop_assert!(t <= summary.m * u.coord(i) + 1e-12);
        }
    }

    #[test]
    fn operator_monotone_coordinatewise(
        law in law_strategy(),
        hi in prop::collection::vec(0.0f64..1.0, 4),
        scales in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let kk = law.max_displacement();
        let hi = &hi[..kk.clamp(1, 4)];
        if hi.len() < kk { return Ok(()); }
        let lo: Vec<f64> = hi.iter().zip(&scales).map(|(h, s)| h * s).collect();
        prop_assert!(
            genfun::t_apply_window(&law, &lo) <= genfun::t_apply_window(&law, hi) + 1e-14
        );
    }
}

#[test]
fn joffe_identity_randomized_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..8 {
        let law = samples::random_law(&mut rng, 5);
        let summary = moments(&law);
        let kk = law.max_displacement();
        for _ in 0..25 {
            let u: Vec<f64> = (0..kk).map(|_| rng.random_range(0.0..0.95)).collect();
            let check = genfun::joffe_identity_check(&law, &summary, &u, 1e-8).unwrap();
            assert!(
                check.pass,
                "deviation {} on {}",
                check.max_deviation,
                law.to_canonical_json()
            );
        }
    }
}

#[test]
fn deep_tail_prepends_keep_relative_accuracy() {
    // The prepend root at tail index 200 of the reference seed is ~1e-20; the
    // solve must still satisfy its equation in relative terms.
    let law = samples::supercritical_example();
    let seed_value = |j: i32| 0.2 * 0.8f64.powi(j);
    for n in [50, 100, 200] {
        let tail = [seed_value(n), seed_value(n + 1)];
        let r = roots::solve_prepend(&law, &tail).unwrap();
        // Hand form for this law: u = (t - 0.5 t^2) / 0.8 with t the next value.
        let expected = (tail[0] - 0.5 * tail[0] * tail[0]) / 0.8;
        assert!(
            (r.value - expected).abs() <= 1e-12 * expected,
            "n = {n}: {} vs {expected}",
            r.value
        );
    }
}
