//! Offspring laws for branching random walks with shift-invariant reproduction.
//!
//! A particle of type `i` produces, in one generation, `counts[k-1]` children of
//! type `i + k - 1` with probability `prob`, independently of `i`. Laws here have
//! finite support: finitely many outcomes, each with a bounded count vector. That
//! keeps every generating-function evaluation an exact finite polynomial and makes
//! the total mean offspring automatically finite.
//!
//! This module owns parsing, validation, canonicalization, and all moment data
//! derived from a law (displacement means, the projected total-count distribution,
//! and the truncated mean matrix), plus the checks for the model assumptions
//! A1 (irreducibility), A2 (non-triviality), and A3 (subcritical same-type mean).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Probabilities must sum to one within this tolerance; we refuse to renormalize
/// silently so that input bugs surface at load time.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Floating-point guard band for the supercritical/non-supercritical decision.
pub const REGIME_TOL: f64 = 1e-12;

/// Default truncation size for the mean matrix (far above any reachability scan need).
pub const DEFAULT_MATRIX_TRUNCATION: usize = 64;

#[derive(Debug, Error)]
pub enum LawError {
    #[error("law document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("law document could not be read: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid offspring law: {0}")]
    Validation(String),
}

/// One support point of the offspring distribution.
///
/// `counts[k-1]` is the number of children at displacement `k` (type `i + k - 1`
/// for a type-`i` parent). Count vectors are stored canonically, with trailing
/// zeros stripped; the no-offspring outcome is the empty vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringEntry {
    pub counts: Vec<u32>,
    pub prob: f64,
}

impl OffspringEntry {
    /// Total number of children in this outcome.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Displacement of the furthest child (0 for the no-offspring outcome).
    pub fn max_index(&self) -> usize {
        self.counts.len()
    }

    fn canonicalize(&mut self) {
        while self.counts.last() == Some(&0) {
            self.counts.pop();
        }
    }
}

/// A validated, canonical offspring law: the single source of truth for every
/// derived quantity in this crate.
///
/// Invariants established at construction:
/// - probabilities sum to 1 within [`PROB_SUM_TOL`] and every `prob` is positive;
/// - count vectors are canonical and pairwise distinct;
/// - the no-offspring outcome is present (first half of A2);
/// - at least one outcome has a child (`max_displacement >= 1`);
/// - entries are sorted lexicographically by counts (the canonical order).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringLaw {
    name: String,
    entries: Vec<OffspringEntry>,
    max_displacement: usize,
}

#[derive(Serialize, Deserialize)]
struct LawDocument {
    name: String,
    offspring: Vec<OffspringEntry>,
}

impl OffspringLaw {
    /// Validate and canonicalize a raw entry list.
    pub fn new(name: impl Into<String>, entries: Vec<OffspringEntry>) -> Result<Self, LawError> {
        let mut entries = entries;
        for e in &mut entries {
            e.canonicalize();
        }
        entries.sort_by(|a, b| a.counts.cmp(&b.counts));

        if entries.is_empty() {
            return Err(LawError::Validation("law has no outcomes".into()));
        }
        for w in entries.windows(2) {
            if w[0].counts == w[1].counts {
                return Err(LawError::Validation(format!(
                    "duplicate outcome {:?} after canonicalization",
                    w[0].counts
                )));
            }
        }
        for e in &entries {
            if !e.prob.is_finite() || e.prob <= 0.0 || e.prob > 1.0 {
                return Err(LawError::Validation(format!(
                    "outcome {:?} has probability {} outside (0, 1]",
                    e.counts, e.prob
                )));
            }
            if e.total() > 1_000_000 {
                return Err(LawError::Validation(format!(
                    "outcome with {} children rejected (limit 1000000)",
                    e.total()
                )));
            }
        }
        let sum: f64 = entries.iter().map(|e| e.prob).sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(LawError::Validation(format!(
                "probabilities sum to {sum}, not 1 (tolerance {PROB_SUM_TOL}); refusing to renormalize"
            )));
        }
        if entries[0].counts != Vec::<u32>::new() {
            return Err(LawError::Validation(
                "missing the no-offspring outcome with positive probability (assumption A2 requires P(no children) > 0)"
                    .into(),
            ));
        }
        let max_displacement = entries.iter().map(|e| e.max_index()).max().unwrap_or(0);
        if max_displacement == 0 {
            return Err(LawError::Validation(
                "law has no outcome with a child; the process is empty after one generation".into(),
            ));
        }
        Ok(OffspringLaw {
            name: name.into(),
            entries,
            max_displacement,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Entries in canonical (lexicographic) order.
    pub fn entries(&self) -> &[OffspringEntry] {
        &self.entries
    }

    /// Largest displacement with a possible child, usually written `K`.
    pub fn max_displacement(&self) -> usize {
        self.max_displacement
    }

    /// Probability of the no-offspring outcome.
    pub fn no_offspring_prob(&self) -> f64 {
        self.entries[0].prob
    }

    /// Canonical serialization: entries sorted lexicographically by counts.
    pub fn to_canonical_json(&self) -> String {
        let doc = LawDocument {
            name: self.name.clone(),
            offspring: self.entries.clone(),
        };
        serde_json::to_string(&doc).expect("law serialization cannot fail")
    }

    /// Content digest of the canonical serialization, embedded in derived
    /// documents to prevent cross-law mixups.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_canonical_json().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and validate a law document from JSON text.
pub fn load_law(source: &str) -> Result<OffspringLaw, LawError> {
    let doc: LawDocument = serde_json::from_str(source)?;
    OffspringLaw::new(doc.name, doc.offspring)
}

/// Parse and validate a law document from a file.
pub fn load_law_file(path: impl AsRef<Path>) -> Result<OffspringLaw, LawError> {
    let text = std::fs::read_to_string(path)?;
    load_law(&text)
}

/// Moment data derived from a law.
///
/// * `h[k]` — probability that the furthest child sits at displacement `k`
///   (`h[0]` is the no-offspring probability).
/// * `a[k][j]` (1-based, `j <= k`) — conditional mean count at displacement `j`
///   given the furthest child is at displacement `k`.
/// * `mk[i-1]` — mean count at displacement `i`; `m` is their sum.
/// * `f0_coeffs[t]` — probability of `t` total children (the projected
///   single-type offspring distribution).
/// * `mean_matrix_truncated` — the upper-triangular Toeplitz mean matrix on
///   types `1..=n`, `m_{ik} = M_{k-i+1}`.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub h: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub mk: Vec<f64>,
    pub m: f64,
    pub f0_coeffs: Vec<f64>,
    pub mean_matrix_truncated: Vec<Vec<f64>>,
}

impl MomentSummary {
    /// `a_{k,j}` with the 1-based indices used throughout.
    pub fn a_kj(&self, k: usize, j: usize) -> f64 {
        self.a[k][j]
    }

    /// Mean count at displacement `i` (1-based); zero beyond the support.
    pub fn mean_at(&self, i: usize) -> f64 {
        if i >= 1 && i <= self.mk.len() {
            self.mk[i - 1]
        } else {
            0.0
        }
    }

    /// Derivative of the projected total-count generating function at 1.
    pub fn f0_mean(&self) -> f64 {
        self.f0_coeffs
            .iter()
            .enumerate()
            .map(|(t, p)| t as f64 * p)
            .sum()
    }

    pub fn is_supercritical(&self) -> bool {
        self.m > 1.0 + REGIME_TOL
    }
}

/// Compute all moment data for a law with the default matrix truncation.
pub fn moments(law: &OffspringLaw) -> MomentSummary {
    moments_with_truncation(law, DEFAULT_MATRIX_TRUNCATION)
}

pub fn moments_with_truncation(law: &OffspringLaw, n_trunc: usize) -> MomentSummary {
    let kk = law.max_displacement();
    let mut h = vec![0.0; kk + 1];
    // weighted[k][j] accumulates prob * counts[j-1] over outcomes with furthest child k
    let mut weighted = vec![vec![0.0; kk + 1]; kk + 1];
    let mut mk = vec![0.0; kk];
    let max_total = law.entries().iter().map(|e| e.total()).max().unwrap_or(0) as usize;
    let mut f0_coeffs = vec![0.0; max_total + 1];

    for e in law.entries() {
        let k = e.max_index();
        h[k] += e.prob;
        f0_coeffs[e.total() as usize] += e.prob;
        for (idx, &c) in e.counts.iter().enumerate() {
            weighted[k][idx + 1] += e.prob * f64::from(c);
            mk[idx] += e.prob * f64::from(c);
        }
    }

    let mut a = vec![vec![0.0; kk + 1]; kk + 1];
    for k in 1..=kk {
        if h[k] > 0.0 {
            for j in 1..=k {
                a[k][j] = weighted[k][j] / h[k];
            }
        }
    }

    let m: f64 = mk.iter().sum();

    let mut mean_matrix_truncated = vec![vec![0.0; n_trunc]; n_trunc];
    for (i, row) in mean_matrix_truncated.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate().skip(i) {
            let d = k - i + 1;
            if d <= kk {
                *cell = mk[d - 1];
            }
        }
    }

    MomentSummary {
        h,
        a,
        mk,
        m,
        f0_coeffs,
        mean_matrix_truncated,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Supercritical,
    NonSupercritical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Supercritical => write!(f, "supercritical"),
            Regime::NonSupercritical => write!(f, "non-supercritical"),
        }
    }
}

/// Verdict for one assumption, with a witness message on failure.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub pass: bool,
    pub witness: Option<String>,
}

impl AssumptionCheck {
    fn pass() -> Self {
        AssumptionCheck {
            pass: true,
            witness: None,
        }
    }
    fn fail(witness: impl Into<String>) -> Self {
        AssumptionCheck {
            pass: false,
            witness: Some(witness.into()),
        }
    }
}

/// Report of the model assumptions for a law. Failures are reported, not thrown.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub a1: AssumptionCheck,
    pub a2: AssumptionCheck,
    pub a3: AssumptionCheck,
    pub regime: Regime,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.a1.pass && self.a2.pass && self.a3.pass
    }
}

/// Check A1 (every type reaches every not-smaller type), A2 (no-offspring and
/// multi-child outcomes both possible), and A3 (same-type mean below one; the
/// total mean is finite by construction for finite-support laws).
///
/// A1 is decided by `M_1 > 0` and `M_2 > 0`: the mean matrix is upper-triangular
/// Toeplitz, so staying at a type needs displacement-1 steps and advancing by one
/// needs a displacement-2 step, and together those generate every displacement.
/// [`a1_oracle`] confirms this by brute force on the truncated matrix.
pub fn check_assumptions(law: &OffspringLaw, summary: &MomentSummary) -> AssumptionReport {
    let m1 = summary.mean_at(1);
    let m2 = summary.mean_at(2);
    let a1 = if m1 <= 0.0 {
        AssumptionCheck::fail(
            "mean count at displacement 1 is zero: type i unreachable from itself",
        )
    } else if m2 <= 0.0 {
        AssumptionCheck::fail(
            "mean count at displacement 2 is zero: type i+1 unreachable from type i",
        )
    } else {
        AssumptionCheck::pass()
    };

    let a2 = if law.no_offspring_prob() <= 0.0 {
        AssumptionCheck::fail("no-offspring outcome has zero probability")
    } else if law.entries().iter().any(|e| e.total() >= 2) {
        AssumptionCheck::pass()
    } else {
        AssumptionCheck::fail("no outcome with two or more children")
    };

    let a3 = if m1 < 1.0 {
        AssumptionCheck::pass()
    } else {
        AssumptionCheck::fail(format!("same-type mean M_1 = {m1} is not below 1"))
    };

    let regime = if summary.is_supercritical() {
        Regime::Supercritical
    } else {
        Regime::NonSupercritical
    };

    AssumptionReport { a1, a2, a3, regime }
}

/// Brute-force A1 check: over the boolean semiring (to avoid underflow), verify
/// that for every pair `1 <= i <= k <= n_max` some power of the truncated mean
/// matrix has a positive `(i, k)` entry. Returns the first unreachable pair, or
/// `None` if every pair is reachable.
///
/// The truncated matrix must have size at least `3 * n_max` so paths have room
/// to wander past the scan window.
pub fn a1_oracle(summary: &MomentSummary, n_max: usize) -> Option<(usize, usize)> {
    let n = summary.mean_matrix_truncated.len();
    assert!(
        n >= 3 * n_max,
        "mean matrix truncation {n} too small for scan bound {n_max}"
    );
    let base: Vec<Vec<bool>> = summary
        .mean_matrix_truncated
        .iter()
        .map(|row| row.iter().map(|&x| x > 0.0).collect())
        .collect();

    // reach = union of base^1 .. base^n
    let mut reach = base.clone();
    let mut power = base.clone();
    for _ in 1..n {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for (l, &step) in power[i].iter().enumerate() {
                if step {
                    for (k, cell) in next[i].iter_mut().enumerate() {
                        *cell |= base[l][k];
                    }
                }
            }
        }
        let mut changed = false;
        for i in 0..n {
            for k in 0..n {
                if next[i][k] && !reach[i][k] {
                    reach[i][k] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        power = next;
    }

    for i in 1..=n_max {
        for k in i..=n_max {
            if !reach[i - 1][k - 1] {
                return Some((i, k));
            }
        }
    }
    None
}
