//! Numerical construction of non-trivial fixed points of the survival operator.
//!
//! The recipe: fix a strictly decreasing geometric seed whose ratio is the decay
//! rate, prepend coordinates backwards one scalar solve at a time (each new
//! coordinate satisfies its fixed-point equation exactly against everything
//! below it), and select prepend counts by the point where the l2 norm of the
//! assembled vector crosses a fixed target. As the tail start moves out, the
//! crossing vectors stabilize pointwise; the limit is a fixed point strictly
//! between the zero vector and the constant global-survival vector, and its
//! coordinate ratios approach the decay rate. Prepending onto a fixed point or
//! dropping its first coordinate yields further fixed points, giving a countable
//! strictly ordered family.
//!
//! Convergence is declared on observed Cauchy behavior of the crossing vectors
//! plus a residual bound; a run that fails to settle reports `converged = false`
//! with its difference trace rather than fabricating success.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genfun::{self, RatioDiagnostics, ResidualReport, UVector};
use crate::law::{check_assumptions, moments, MomentSummary, OffspringLaw};
use crate::roots::{self, NoRootInRegime};

/// Residual bound a candidate must meet to count as converged.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Default Cauchy tolerance for successive crossing vectors.
pub const DEFAULT_CONV_TOL: f64 = 1e-9;
/// Default comparison width for the Cauchy check.
pub const DEFAULT_COMPARE_WIDTH: usize = 32;
/// Default tail-start increment between scans.
pub const DEFAULT_SCAN_STEP: usize = 5;
/// Ratio diagnostics cover at most this many leading coordinates.
pub const RATIO_WINDOW_MAX: usize = 128;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error(transparent)]
    Regime(#[from] NoRootInRegime),
    #[error("law fails model assumptions: {0}")]
    AssumptionsFailed(String),
    #[error(
        "no tail index up to {n_max} where one prepend exceeds the seed; shrink the seed amplitude"
    )]
    LadderStartNotFound { n_max: usize },
    #[error("norm target not crossed within {cap} prepends at tail start {tail_start}")]
    CrossingNotFound { tail_start: usize, cap: usize },
    #[error("seed tail at start {tail_start} already exceeds the norm target {target}")]
    TailAboveTarget { tail_start: usize, target: f64 },
    #[error("tail-start schedule exhausted at {tail_start_max} with no crossing recorded")]
    ScheduleExhausted { tail_start_max: usize },
    #[error("family member {index} failed validation: sup residual {sup:.3e} exceeds {tol:.1e}")]
    MemberValidation { index: usize, sup: f64, tol: f64 },
    #[error("family base candidate is not converged")]
    BaseNotConverged,
    #[error("cannot drop the leading coordinate: head too short")]
    ShiftTooShort,
    #[error("prepend solve failed: {0}")]
    Bracket(#[from] roots::BracketError),
}

/// Geometric seed `x^(j) = amplitude * ratio^j` for `j >= start`, strictly
/// decreasing with ratio equal to the decay rate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailSeed {
    pub amplitude: f64,
    pub ratio: f64,
    pub start: usize,
}

impl TailSeed {
    pub fn value(&self, j: usize) -> f64 {
        self.amplitude * self.ratio.powi(j as i32)
    }

    /// Squared l2 norm of the seed from index `from` on (closed form).
    pub fn tail_norm_sq(&self, from: usize) -> f64 {
        let r2 = self.ratio * self.ratio;
        let first = self.value(from);
        first * first / (1.0 - r2)
    }
}

/// Values produced by prepending `depth` coordinates onto the seed tail
/// starting at `tail_index`. `rungs[0]` is the first (deepest) prepend; each
/// rung satisfies its scalar fixed-point equation to the solver tolerance.
#[derive(Debug, Clone)]
pub struct LadderState {
    pub tail_index: usize,
    pub rungs: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// One norm crossing: the smallest prepend count at `tail_start` whose vector
/// norm exceeds the target (the count-minus-one vector stays at or below it).
#[derive(Debug, Clone)]
pub struct Crossing {
    pub tail_start: usize,
    pub prepend_count: usize,
    pub norm: f64,
    pub u: UVector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_amplitude: f64,
    pub seed_ratio: f64,
    pub seed_start: usize,
    pub norm_target: f64,
    pub tail_start: usize,
    pub prepend_count: usize,
    pub scan_step: usize,
    pub conv_tol: f64,
    /// Operations applied after the scan (prepends / shifts), in order.
    pub derived: Vec<String>,
}

/// A survival vector packaged with the diagnostics certifying how close it is
/// to a fixed point. `converged` requires Cauchy-settled scan behavior, a sup
/// residual within [`RESIDUAL_TOL`], and a first coordinate strictly between 0
/// and the survival probability `1 - q`.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub u: UVector,
    pub residual_report: ResidualReport,
    pub ratios: RatioDiagnostics,
    pub provenance: Provenance,
    pub converged: bool,
    /// Successive sup differences between crossing vectors during the scan.
    pub diff_trace: Vec<f64>,
}

impl Candidate {
    /// Second half of the ratio window, where the asymptotics are meaningful.
    pub fn second_half_window(&self) -> (usize, usize) {
        let (s, e) = (self.ratios.window_start, self.ratios.window_end);
        ((s + e) / 2 + 1, e)
    }

    pub fn max_alpha_dev_second_half(&self, target: f64) -> f64 {
        let (lo, hi) = self.second_half_window();
        (lo..=hi)
            .map(|i| (self.ratios.alpha_at(i) - target).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_udiag_dev_second_half(&self) -> f64 {
        let (lo, hi) = self.second_half_window();
        (lo..=hi)
            .map(|i| (self.ratios.u_diag_at(i) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Prepend,
    ShiftLeft,
}

/// Ordered family of candidates derived from a base by repeated prepends or
/// shifts, with pairwise strict-ordering verdicts on a comparison window.
#[derive(Debug, Clone)]
pub struct FamilyReport {
    pub direction: Direction,
    pub members: Vec<Candidate>,
    /// `pairwise_ordered[i]` compares member `i` against its predecessor
    /// (the base for `i = 0`): strictly greater coordinatewise for prepends,
    /// strictly smaller for shifts.
    pub pairwise_ordered: Vec<bool>,
    pub compare_width: usize,
}

impl FamilyReport {
    pub fn all_ordered(&self) -> bool {
        self.pairwise_ordered.iter().all(|&b| b)
    }
}

/// Scan and convergence controls for [`Supercritical::construct_fixed_point`].
#[derive(Debug, Clone)]
pub struct ConstructParams {
    pub seed_amplitude: Option<f64>,
    /// Truncation horizon; grows automatically if the ladder outruns it.
    pub horizon: Option<usize>,
    pub conv_tol: f64,
    pub compare_width: usize,
    pub scan_step: usize,
    pub ladder_start_max: usize,
    pub tail_start_max: usize,
    pub prepend_cap: usize,
    pub norm_target: Option<f64>,
}

impl Default for ConstructParams {
    fn default() -> Self {
        ConstructParams {
            seed_amplitude: None,
            horizon: None,
            conv_tol: DEFAULT_CONV_TOL,
            compare_width: DEFAULT_COMPARE_WIDTH,
            scan_step: DEFAULT_SCAN_STEP,
            ladder_start_max: 400,
            tail_start_max: 600,
            prepend_cap: 20_000,
            norm_target: None,
        }
    }
}

/// A law proven supercritical, bundled with its summary, extinction
/// probability, and decay rate. All construction entry points live here so the
/// regime is checked exactly once.
pub struct Supercritical<'a> {
    law: &'a OffspringLaw,
    summary: MomentSummary,
    q: f64,
    gamma: f64,
}

impl<'a> Supercritical<'a> {
    pub fn new(law: &'a OffspringLaw) -> Result<Self, ConstructError> {
        let summary = moments(law);
        // Regime first: a non-supercritical law is a regime refusal even when
        // it also trips an assumption (its only fixed point is the unit vector).
        let gamma = roots::solve_gamma(&summary)?.value;
        let report = check_assumptions(law, &summary);
        if !report.all_pass() {
            let witness = [&report.a1, &report.a2, &report.a3]
                .iter()
                .filter_map(|c| c.witness.clone())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(ConstructError::AssumptionsFailed(witness));
        }
        let q = roots::solve_q(&summary).value;
        Ok(Supercritical {
            law,
            summary,
            q,
            gamma,
        })
    }

    pub fn law(&self) -> &OffspringLaw {
        self.law
    }
    pub fn summary(&self) -> &MomentSummary {
        &self.summary
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Default seed: half the survival probability as amplitude, decay-rate ratio.
    pub fn default_seed(&self) -> TailSeed {
        self.seed_with_amplitude(0.5 * (1.0 - self.q))
    }

    pub fn seed_with_amplitude(&self, amplitude: f64) -> TailSeed {
        assert!(
            amplitude > 0.0 && amplitude < 1.0 - self.q,
            "seed amplitude must lie in (0, 1 - q)"
        );
        TailSeed {
            amplitude,
            ratio: self.gamma,
            start: 1,
        }
    }

    /// Survival window of `K - 1` coordinates lying below a new rung: ladder
    /// values where available, seed values beyond them.
    fn below_window(&self, seed: &TailSeed, tail_index: usize, rungs: &[f64]) -> Vec<f64> {
        let kk = self.law.max_displacement();
        let i = rungs.len();
        (1..kk)
            .map(|d| {
                if d <= i {
                    rungs[i - d]
                } else {
                    seed.value(tail_index + d - i - 1)
                }
            })
            .collect()
    }

    fn next_rung(
        &self,
        seed: &TailSeed,
        tail_index: usize,
        rungs: &[f64],
    ) -> Result<roots::RootResult, ConstructError> {
        let window = self.below_window(seed, tail_index, rungs);
        Ok(roots::solve_prepend(self.law, &window)?)
    }

    /// Prepend `depth` coordinates onto the seed tail starting at `tail_index`.
    pub fn prepend_ladder(
        &self,
        seed: &TailSeed,
        tail_index: usize,
        depth: usize,
    ) -> Result<LadderState, ConstructError> {
        assert!(depth >= 1 && tail_index >= seed.start);
        let mut rungs = Vec::with_capacity(depth);
        let mut residuals = Vec::with_capacity(depth);
        for _ in 0..depth {
            let r = self.next_rung(seed, tail_index, &rungs)?;
            rungs.push(r.value);
            residuals.push(r.residual);
        }
        Ok(LadderState {
            tail_index,
            rungs,
            residuals,
        })
    }

    /// Smallest tail index where a single prepend exceeds the seed value there.
    /// From that index on, ladders are strictly increasing.
    pub fn detect_ladder_start(
        &self,
        seed: &TailSeed,
        n_max: usize,
    ) -> Result<usize, ConstructError> {
        for n in seed.start..=n_max {
            let r = self.next_rung(seed, n, &[])?;
            if r.value > seed.value(n) {
                return Ok(n);
            }
        }
        Err(ConstructError::LadderStartNotFound { n_max })
    }

    /// Build the crossing vector at one tail start: prepend until the squared
    /// norm first exceeds `target_sq`, then assemble the head (rungs on top,
    /// seed samples below) out to at least `horizon`.
    fn crossing_at(
        &self,
        seed: &TailSeed,
        tail_start: usize,
        target_sq: f64,
        prepend_cap: usize,
        horizon: usize,
    ) -> Result<Crossing, ConstructError> {
        let kk = self.law.max_displacement();
        let tail_sq = seed.tail_norm_sq(tail_start);
        if tail_sq >= target_sq {
            return Err(ConstructError::TailAboveTarget {
                tail_start,
                target: target_sq.sqrt(),
            });
        }
        let mut rungs: Vec<f64> = Vec::new();
        let mut acc = tail_sq;
        loop {
            if rungs.len() >= prepend_cap {
                return Err(ConstructError::CrossingNotFound {
                    tail_start,
                    cap: prepend_cap,
                });
            }
            let r = self.next_rung(seed, tail_start, &rungs)?;
            acc += r.value * r.value;
            rungs.push(r.value);
            if acc > target_sq {
                break;
            }
        }
        let k = rungs.len();
        let n_eff = horizon.max(k + 8 * kk);
        let mut head: Vec<f64> = Vec::with_capacity(n_eff);
        head.extend(rungs.iter().rev());
        for j in 0..n_eff - k {
            head.push(seed.value(tail_start + j));
        }
        let u = UVector::new(head, seed.ratio).expect("crossing coordinates stay in [0, 1]");
        Ok(Crossing {
            tail_start,
            prepend_count: k,
            norm: acc.sqrt(),
            u,
        })
    }

    /// Crossing vectors for every tail start in the schedule
    /// `start, start + step, ...` up to `tail_start_max`. Independent tail
    /// starts run in parallel when the `parallel` feature is enabled; results
    /// are ordered by tail start either way.
    pub fn norm_crossing_scan(
        &self,
        seed: &TailSeed,
        params: &ConstructParams,
    ) -> Result<Vec<Crossing>, ConstructError> {
        let (schedule, target_sq, horizon) = self.scan_schedule(seed, params)?;

        #[cfg(feature = "parallel")]
        let results: Result<Vec<Crossing>, ConstructError> = {
            use rayon::prelude::*;
            schedule
                .par_iter()
                .map(|&m| self.crossing_at(seed, m, target_sq, params.prepend_cap, horizon))
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Result<Vec<Crossing>, ConstructError> = schedule
            .iter()
            .map(|&m| self.crossing_at(seed, m, target_sq, params.prepend_cap, horizon))
            .collect();

        results
    }

    fn scan_schedule(
        &self,
        seed: &TailSeed,
        params: &ConstructParams,
    ) -> Result<(Vec<usize>, f64, usize), ConstructError> {
        let n0 = self.detect_ladder_start(seed, params.ladder_start_max)?;
        let target = params
            .norm_target
            .unwrap_or_else(|| seed.tail_norm_sq(n0).sqrt());
        let target_sq = target * target;
        let kk = self.law.max_displacement();
        let horizon = params.horizon.unwrap_or_else(|| 200.max(n0 + 8 * kk));

        let mut schedule = Vec::new();
        let mut m = n0.max(seed.start) + params.scan_step;
        while m <= params.tail_start_max {
            if seed.tail_norm_sq(m) < target_sq {
                schedule.push(m);
            }
            m += params.scan_step;
        }
        if schedule.is_empty() {
            return Err(ConstructError::ScheduleExhausted {
                tail_start_max: params.tail_start_max,
            });
        }
        Ok((schedule, target_sq, horizon))
    }

    /// Run the norm-crossing scan until two successive crossing vectors agree
    /// to `conv_tol` on the comparison window, then package the last vector
    /// with residual and ratio diagnostics.
    ///
    /// A scan that exhausts its schedule without settling still returns its
    /// best (final) vector, flagged `converged = false`, with the difference
    /// trace for inspection.
    pub fn construct_fixed_point(
        &self,
        params: &ConstructParams,
    ) -> Result<Candidate, ConstructError> {
        let seed = match params.seed_amplitude {
            Some(a) => self.seed_with_amplitude(a),
            None => self.default_seed(),
        };
        let (schedule, target_sq, horizon) = self.scan_schedule(&seed, params)?;

        let mut prev: Option<Crossing> = None;
        let mut trace = Vec::new();
        let mut settled = false;
        for &m in &schedule {
            let cr = self.crossing_at(&seed, m, target_sq, params.prepend_cap, horizon)?;
            if let Some(p) = &prev {
                let d = cr.u.sup_distance(&p.u, params.compare_width);
                trace.push(d);
                if d < params.conv_tol {
                    settled = true;
                    prev = Some(cr);
                    break;
                }
            }
            prev = Some(cr);
        }
        let last = prev.expect("schedule is non-empty");

        let provenance = Provenance {
            seed_amplitude: seed.amplitude,
            seed_ratio: seed.ratio,
            seed_start: seed.start,
            norm_target: target_sq.sqrt(),
            tail_start: last.tail_start,
            prepend_count: last.prepend_count,
            scan_step: params.scan_step,
            conv_tol: params.conv_tol,
            derived: Vec::new(),
        };
        Ok(self.package(last.u, provenance, settled, trace))
    }

    /// Attach diagnostics and the convergence verdict to a vector.
    pub fn package(
        &self,
        u: UVector,
        provenance: Provenance,
        settled: bool,
        diff_trace: Vec<f64>,
    ) -> Candidate {
        let kk = self.law.max_displacement();
        let residual_report = genfun::residuals(self.law, &u, DEFAULT_COMPARE_WIDTH);
        let ratio_end = RATIO_WINDOW_MAX.min(u.horizon() - kk);
        let ratios = genfun::ratio_diag(&self.summary, &u, 1, ratio_end);
        let first = u.coord(1);
        let in_range = first > 0.0 && first < 1.0 - self.q;
        let converged = settled && in_range && residual_report.sup_window <= RESIDUAL_TOL;
        Candidate {
            u,
            residual_report,
            ratios,
            provenance,
            converged,
            diff_trace,
        }
    }

    /// Derive `count` further candidates from a converged base, either by
    /// prepending scalar solves (strictly increasing orbit) or by dropping the
    /// leading coordinate (strictly decreasing orbit). Every member is
    /// re-validated against the residual bound.
    pub fn family(
        &self,
        base: &Candidate,
        count: usize,
        direction: Direction,
    ) -> Result<FamilyReport, ConstructError> {
        if !base.converged {
            return Err(ConstructError::BaseNotConverged);
        }
        let kk = self.law.max_displacement();
        let mut members = Vec::with_capacity(count);
        let mut pairwise_ordered = Vec::with_capacity(count);
        let mut current = base.u.clone();
        let mut derived = base.provenance.derived.clone();
        for index in 0..count {
            let next = match direction {
                Direction::Prepend => {
                    let window = current.window(1, kk - 1);
                    let r = roots::solve_prepend(self.law, &window)?;
                    let mut head = Vec::with_capacity(current.horizon() + 1);
                    head.push(r.value);
                    head.extend_from_slice(current.head());
                    UVector::new(head, current.tail_ratio())
                        .expect("prepended coordinate stays in [0, 1]")
                }
                Direction::ShiftLeft => {
                    if current.horizon() <= kk + 1 {
                        return Err(ConstructError::ShiftTooShort);
                    }
                    UVector::new(current.head()[1..].to_vec(), current.tail_ratio())
                        .expect("shifted head stays valid")
                }
            };

            let ordered = match direction {
                Direction::Prepend => {
                    (1..=DEFAULT_COMPARE_WIDTH).all(|i| next.coord(i) > current.coord(i))
                }
                Direction::ShiftLeft => {
                    (1..=DEFAULT_COMPARE_WIDTH).all(|i| next.coord(i) < current.coord(i))
                }
            };
            pairwise_ordered.push(ordered);

            derived.push(
                match direction {
                    Direction::Prepend => "prepend",
                    Direction::ShiftLeft => "shift-left",
                }
                .to_string(),
            );
            let mut provenance = base.provenance.clone();
            provenance.derived = derived.clone();
            let cand = self.package(next.clone(), provenance, true, Vec::new());
            if cand.residual_report.sup_window > RESIDUAL_TOL {
                return Err(ConstructError::MemberValidation {
                    index,
                    sup: cand.residual_report.sup_window,
                    tol: RESIDUAL_TOL,
                });
            }
            members.push(cand);
            current = next;
        }
        Ok(FamilyReport {
            direction,
            members,
            pairwise_ordered,
            compare_width: DEFAULT_COMPARE_WIDTH,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailClosureDoc {
    pub ratio: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualSummaryDoc {
    pub window_end: usize,
    pub sup: f64,
    pub l2: f64,
    pub tail_estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioSummaryDoc {
    pub window_start: usize,
    pub window_end: usize,
    pub alpha_last: f64,
    pub max_udiag_dev_second_half: f64,
}

/// On-disk form of a candidate: enough to reload the vector, re-derive every
/// diagnostic, and detect cross-law mixups via the embedded hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateDocument {
    pub law_name: String,
    pub law_hash: String,
    pub u_head: Vec<f64>,
    pub tail: TailClosureDoc,
    pub residuals: ResidualSummaryDoc,
    pub ratios: RatioSummaryDoc,
    pub provenance: Provenance,
    pub converged: bool,
    pub diff_trace: Vec<f64>,
}

impl CandidateDocument {
    pub fn from_candidate(law: &OffspringLaw, c: &Candidate) -> Self {
        CandidateDocument {
            law_name: law.name().to_string(),
            law_hash: law.content_hash(),
            u_head: c.u.head().to_vec(),
            tail: TailClosureDoc {
                ratio: c.u.tail_ratio(),
                amplitude: *c.u.head().last().expect("head non-empty"),
            },
            residuals: ResidualSummaryDoc {
                window_end: c.residual_report.window_len(),
                sup: c.residual_report.sup_window,
                l2: c.residual_report.l2_window,
                tail_estimate: c.residual_report.tail_estimate,
            },
            ratios: RatioSummaryDoc {
                window_start: c.ratios.window_start,
                window_end: c.ratios.window_end,
                alpha_last: *c.ratios.alpha.last().expect("ratio window non-empty"),
                max_udiag_dev_second_half: c.max_udiag_dev_second_half(),
            },
            provenance: c.provenance.clone(),
            converged: c.converged,
            diff_trace: c.diff_trace.clone(),
        }
    }

    pub fn to_uvector(&self) -> Result<UVector, genfun::InvalidVector> {
        UVector::new(self.u_head.clone(), self.tail.ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    fn sup() -> OffspringLaw {
        samples::supercritical_example()
    }

    #[test]
    fn regime_errors_for_non_supercritical_laws() {
        let sub = samples::subcritical_example();
        assert!(matches!(
            Supercritical::new(&sub),
            Err(ConstructError::Regime(_))
        ));
        let crit = samples::critical_example();
        assert!(matches!(
            Supercritical::new(&crit),
            Err(ConstructError::Regime(_))
        ));
    }

    #[test]
    fn assumption_failures_are_rejected() {
        let law = crate::law::OffspringLaw::new(
            "no-same-type",
            vec![
                crate::law::OffspringEntry {
                    counts: vec![],
                    prob: 0.3,
                },
                crate::law::OffspringEntry {
                    counts: vec![0, 2],
                    prob: 0.7,
                },
            ],
        )
        .unwrap();
        assert!(matches!(
            Supercritical::new(&law),
            Err(ConstructError::AssumptionsFailed(_))
        ));
    }

    #[test]
    fn single_rung_ratio_near_inverse_decay_rate() {
        // For the reference law the rung solves to (x - 0.5 x^2) / 0.8, so the
        // ratio to the seed value is 1.25 (1 - 0.5 x): within 1e-3 at n = 30.
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let seed = TailSeed {
            amplitude: 0.5,
            ratio: sc.gamma(),
            start: 1,
        };
        let ladder = sc.prepend_ladder(&seed, 30, 1).unwrap();
        let ratio = ladder.rungs[0] / seed.value(30);
        assert!((ratio - 1.25).abs() < 1e-3);
    }

    #[test]
    fn ladder_strictly_increasing_past_start() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let seed = sc.default_seed();
        let n0 = sc.detect_ladder_start(&seed, 200).unwrap();
        let ladder = sc.prepend_ladder(&seed, n0 + 3, 5).unwrap();
        assert!(ladder.rungs[0] > seed.value(n0 + 3));
        for w in ladder.rungs.windows(2) {
            assert!(w[1] > w[0]);
        }
        for &r in &ladder.residuals {
            assert!(r <= 1e-13);
        }
    }

    #[test]
    fn ladder_start_is_stable_and_definitional() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let seed = sc.default_seed();
        let n0 = sc.detect_ladder_start(&seed, 200).unwrap();
        assert_eq!(n0, sc.detect_ladder_start(&seed, 400).unwrap());
        for n in n0..n0 + 30 {
            let ladder = sc.prepend_ladder(&seed, n, 1).unwrap();
            assert!(ladder.rungs[0] > seed.value(n));
        }
    }

    #[test]
    fn crossing_norms_stay_in_unit_band() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let seed = sc.default_seed();
        let params = ConstructParams {
            tail_start_max: 80,
            ..ConstructParams::default()
        };
        let n0 = sc.detect_ladder_start(&seed, 400).unwrap();
        let y0 = seed.tail_norm_sq(n0).sqrt();
        let crossings = sc.norm_crossing_scan(&seed, &params).unwrap();
        assert!(crossings.len() >= 10);
        for c in &crossings {
            assert!(
                c.norm > y0 && c.norm < y0 + 1.0,
                "norm {} outside band",
                c.norm
            );
        }
        // Prepend counts grow with the tail start.
        for w in crossings.windows(2) {
            assert!(w[1].prepend_count >= w[0].prepend_count);
        }
    }

    #[test]
    fn ladder_norms_monotone_in_both_directions() {
        // Norm of the assembled vector strictly falls as the tail start grows
        // (fixed prepend count) and strictly rises with the prepend count
        // (fixed tail start).
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let seed = sc.default_seed();
        let norm_of = |m: usize, k: usize| -> f64 {
            let ladder = sc.prepend_ladder(&seed, m, k).unwrap();
            let sq: f64 = seed.tail_norm_sq(m) + ladder.rungs.iter().map(|r| r * r).sum::<f64>();
            sq.sqrt()
        };
        for k in [2, 5, 9] {
            assert!(norm_of(20, k) > norm_of(25, k));
            assert!(norm_of(25, k) > norm_of(30, k));
        }
        for m in [20, 30] {
            assert!(norm_of(m, 3) > norm_of(m, 2));
            assert!(norm_of(m, 9) > norm_of(m, 8));
        }
    }

    #[test]
    fn constructs_candidate_at_loose_tolerance() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let params = ConstructParams {
            conv_tol: 1e-6,
            ..ConstructParams::default()
        };
        let cand = sc.construct_fixed_point(&params).unwrap();
        assert!(cand.converged, "diff trace: {:?}", cand.diff_trace);
        assert!(cand.residual_report.sup_window <= RESIDUAL_TOL);
        let u1 = cand.u.coord(1);
        assert!(u1 > 0.0 && u1 < 0.4);
        assert!(cand.u.is_strictly_decreasing());
    }

    #[test]
    fn candidate_ratio_bounds_and_constant_exclusion() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let cand = sc
            .construct_fixed_point(&ConstructParams::default())
            .unwrap();
        assert!(cand.converged);

        // Coordinate ratios of a candidate live in [(1 - M_1)/(M - M_1), 1];
        // for this law the lower bound coincides with the decay rate.
        let summary = sc.summary();
        let m1 = summary.mean_at(1);
        let lower = (1.0 - m1) / (summary.m - m1);
        assert!((lower - 0.8).abs() < 1e-14);
        for (idx, &a) in cand.ratios.alpha.iter().enumerate() {
            assert!(a >= lower - 1e-9 && a <= 1.0 + 1e-12, "alpha[{idx}] = {a}");
        }

        // Strictly between the zero vector and constant survival, with
        // coordinates draining to zero: in probability coordinates the
        // supremum is 1 without being attained.
        for i in 1..=cand.u.horizon() {
            let u = cand.u.coord(i);
            assert!(u > 0.0 && u < 1.0 - sc.q(), "coordinate {i} = {u}");
        }
        assert!(cand.u.coord(cand.u.horizon()) < 1e-6);
    }

    #[test]
    fn unattainable_tolerance_reports_no_convergence() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let params = ConstructParams {
            conv_tol: 1e-30,
            tail_start_max: 120,
            ..ConstructParams::default()
        };
        let cand = sc.construct_fixed_point(&params).unwrap();
        assert!(!cand.converged);
        assert!(!cand.diff_trace.is_empty());
    }

    #[test]
    fn family_prepend_and_shift_are_inverse() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let params = ConstructParams {
            conv_tol: 1e-10,
            ..ConstructParams::default()
        };
        let base = sc.construct_fixed_point(&params).unwrap();
        assert!(base.converged);

        let fam = sc.family(&base, 3, Direction::Prepend).unwrap();
        assert!(fam.all_ordered());
        for m in &fam.members {
            assert!(m.residual_report.sup_window <= RESIDUAL_TOL);
            assert!(m.u.coord(1) < 1.0 - sc.q());
        }
        // First coordinates climb toward the survival probability.
        let firsts: Vec<f64> = fam.members.iter().map(|m| m.u.coord(1)).collect();
        assert!(firsts.windows(2).all(|w| w[1] > w[0]));

        // Shift then prepend recovers the base.
        let shifted = sc.family(&base, 1, Direction::ShiftLeft).unwrap();
        let back = sc
            .family(&shifted.members[0], 1, Direction::Prepend)
            .unwrap();
        let dist = back.members[0].u.sup_distance(&base.u, 32);
        assert!(dist < 1e-9, "recovery distance {dist}");
    }

    #[test]
    fn family_requires_converged_base() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let params = ConstructParams {
            conv_tol: 1e-30,
            tail_start_max: 60,
            ..ConstructParams::default()
        };
        let bad = sc.construct_fixed_point(&params).unwrap();
        assert!(matches!(
            sc.family(&bad, 2, Direction::Prepend),
            Err(ConstructError::BaseNotConverged)
        ));
    }

    #[test]
    fn candidate_document_round_trip() {
        let law = sup();
        let sc = Supercritical::new(&law).unwrap();
        let cand = sc
            .construct_fixed_point(&ConstructParams {
                conv_tol: 1e-6,
                ..ConstructParams::default()
            })
            .unwrap();
        let doc = CandidateDocument::from_candidate(&law, &cand);
        let text = serde_json::to_string(&doc).unwrap();
        let reloaded: CandidateDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(reloaded.law_hash, law.content_hash());
        let u = reloaded.to_uvector().unwrap();
        assert_eq!(u, cand.u);
    }
}
