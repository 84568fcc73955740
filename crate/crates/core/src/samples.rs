//! Ready-made laws for tests, benches, and docs, plus seeded random law
//! generators for the randomized suites.

use rand::Rng;

use crate::law::{OffspringEntry, OffspringLaw};

/// Supercritical reference law: no child w.p. 0.3, one same-type child w.p. 0.2,
/// two next-type children w.p. 0.5. Closed forms: `q = 0.6`, `gamma = 0.8`.
pub fn supercritical_example() -> OffspringLaw {
    OffspringLaw::new(
        "supercritical-example",
        vec![
            OffspringEntry {
                counts: vec![],
                prob: 0.3,
            },
            OffspringEntry {
                counts: vec![1],
                prob: 0.2,
            },
            OffspringEntry {
                counts: vec![0, 2],
                prob: 0.5,
            },
        ],
    )
    .expect("reference law is valid")
}

/// Subcritical law with total mean 0.5.
pub fn subcritical_example() -> OffspringLaw {
    OffspringLaw::new(
        "subcritical-example",
        vec![
            OffspringEntry {
                counts: vec![],
                prob: 0.5,
            },
            OffspringEntry {
                counts: vec![1],
                prob: 0.2,
            },
            OffspringEntry {
                counts: vec![0, 1],
                prob: 0.3,
            },
        ],
    )
    .expect("reference law is valid")
}

/// Critical law: total mean exactly 1, so extinction is certain but slow.
pub fn critical_example() -> OffspringLaw {
    OffspringLaw::new(
        "critical-example",
        vec![
            OffspringEntry {
                counts: vec![],
                prob: 0.4,
            },
            OffspringEntry {
                counts: vec![1],
                prob: 0.2,
            },
            OffspringEntry {
                counts: vec![0, 2],
                prob: 0.4,
            },
        ],
    )
    .expect("reference law is valid")
}

/// Supercritical law whose children skip displacement 2 (fails A1):
/// decay-rate equation is quadratic in `s^2` with root `sqrt(0.625)`.
pub fn third_displacement_example() -> OffspringLaw {
    OffspringLaw::new(
        "third-displacement-example",
        vec![
            OffspringEntry {
                counts: vec![],
                prob: 0.16,
            },
            OffspringEntry {
                counts: vec![1],
                prob: 0.2,
            },
            OffspringEntry {
                counts: vec![0, 0, 2],
                prob: 0.64,
            },
        ],
    )
    .expect("reference law is valid")
}

/// Random finite-support law that passes validation but may fail A1 or A2,
/// for exercising the assumption checks themselves.
pub fn random_law(rng: &mut impl Rng, max_displacement: usize) -> OffspringLaw {
    loop {
        let kk = rng.random_range(1..=max_displacement);
        let n_extra = rng.random_range(1..=4);
        let mut entries = vec![OffspringEntry {
            counts: vec![],
            prob: rng.random_range(0.05..0.6),
        }];
        for _ in 0..n_extra {
            let counts: Vec<u32> = (0..kk).map(|_| rng.random_range(0..=2)).collect();
            entries.push(OffspringEntry {
                counts,
                prob: rng.random_range(0.01..1.0),
            });
        }
        let total: f64 = entries.iter().map(|e| e.prob).sum();
        for e in &mut entries {
            e.prob /= total;
        }
        if let Ok(law) = OffspringLaw::new("random", entries) {
            return law;
        }
    }
}

/// Random law passing A1-A3 with total mean in (1.05, 1.8] and same-type mean
/// at most 0.7. The moment bounds keep the prepend ladder well conditioned, so
/// backward solves and fixed-point iteration can be compared at tight tolerances.
pub fn random_supercritical(rng: &mut impl Rng, max_displacement: usize) -> OffspringLaw {
    assert!(max_displacement >= 2);
    loop {
        let law = random_law(rng, max_displacement);
        let s = crate::law::moments(&law);
        let report = crate::law::check_assumptions(&law, &s);
        let m1 = s.mean_at(1);
        let conditioning = (s.m - m1) / (1.0 - m1);
        if report.all_pass() && s.m > 1.05 && s.m <= 1.8 && m1 <= 0.7 && conditioning <= 2.0 {
            return law;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_supercritical_meets_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let law = random_supercritical(&mut rng, 4);
            let s = crate::law::moments(&law);
            assert!(s.m > 1.05 && s.m <= 1.8);
            assert!(s.mean_at(1) <= 0.7);
            assert!(crate::law::check_assumptions(&law, &s).all_pass());
        }
    }
}
