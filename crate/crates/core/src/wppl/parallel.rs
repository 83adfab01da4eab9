//! Parallel LNS with a single committer.
//!
//! Workers snapshot the incumbent (tagged with a version), build proposals
//! and send them over a channel. The committer thread is the only writer:
//! it rechecks each proposal against the live incumbent and installs it only
//! if it is still conflict-free and strictly improves the objective.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::lns::{
    apply_replacement, lns_refine, propose, replacement_fits, Budget, BudgetClock, LnsContext, Neighborhood,
    Occupancy, Replacement, SeedTabu, WindowedPlan,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitEntry {
    pub iteration: u64,
    pub worker: usize,
    pub neighborhood: Neighborhood,
    /// Incumbent objective when the proposal was checked.
    pub objective_before: f64,
    /// Objective the proposal would give; `None` if replanning failed.
    pub objective_after: Option<f64>,
    pub accepted: bool,
}

/// Proposals in the order the committer processed them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommitLog {
    pub entries: Vec<CommitEntry>,
}

impl CommitLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn committed(&self) -> usize {
        self.entries.iter().filter(|e| e.accepted).count()
    }

    pub fn accepted_objectives(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.accepted)
            .filter_map(|e| e.objective_after)
            .collect()
    }

    /// Accepted objectives strictly decrease and each accepted entry improved
    /// on the incumbent it was checked against.
    pub fn is_monotone(&self) -> bool {
        let acc = self.accepted_objectives();
        acc.windows(2).all(|w| w[1] < w[0])
            && self
                .entries
                .iter()
                .filter(|e| e.accepted)
                .all(|e| e.objective_after.is_some_and(|a| a < e.objective_before))
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("commit entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn extend(&mut self, other: CommitLog) {
        self.entries.extend(other.entries);
    }
}

struct Proposal {
    iteration: u64,
    worker: usize,
    version: u64,
    neighborhood: Neighborhood,
    replacement: Option<Replacement>,
}

struct Incumbent {
    version: u64,
    plan: Arc<WindowedPlan>,
    occupancy: Arc<Occupancy>,
}

/// Refines `plan` with `workers` threads. Worker `k` draws from seed stream
/// `split(seed, k)`; with one worker this is exactly [`lns_refine`] on that
/// stream.
pub fn parallel_refine(
    ctx: &LnsContext<'_>,
    plan: WindowedPlan,
    budget: Budget,
    workers: usize,
    seed: u64,
) -> (WindowedPlan, CommitLog) {
    assert!(workers >= 1, "need at least one worker");
    if workers == 1 {
        let mut rng = seed::rng(seed, 0);
        let (plan, records) = lns_refine(ctx, plan, budget, &mut rng);
        let entries = records
            .into_iter()
            .map(|r| CommitEntry {
                iteration: r.iteration,
                worker: 0,
                neighborhood: r.neighborhood,
                objective_before: r.objective_before,
                objective_after: r.objective_after,
                accepted: r.accepted,
            })
            .collect();
        return (plan, CommitLog { entries });
    }
    if budget.is_zero() {
        return (plan, CommitLog::default());
    }

    let lower_bound = ctx.lower_bound(&plan);
    let cells = ctx.guidance.map().num_cells();
    let incumbent = RwLock::new(Incumbent {
        version: 0,
        occupancy: Arc::new(Occupancy::from_plan(&plan, cells)),
        plan: Arc::new(plan),
    });
    let stop = AtomicBool::new(plan_is_optimal(&incumbent, lower_bound));
    let issued = AtomicU64::new(0);
    let clock = BudgetClock::start(budget);
    let mut log = CommitLog::default();
    let (tx, rx) = crossbeam_channel::bounded::<Proposal>(workers * 2);

    std::thread::scope(|scope| {
        for worker in 0..workers {
            let tx = tx.clone();
            let (incumbent, stop, issued) = (&incumbent, &stop, &issued);
            scope.spawn(move || {
                let mut rng = seed::rng(seed, worker as u64);
                let mut tabu = SeedTabu::default();
                loop {
                    if stop.load(Ordering::Relaxed) || clock.deadline().is_some_and(|d| Instant::now() >= d) {
                        break;
                    }
                    let iteration = issued.fetch_add(1, Ordering::Relaxed);
                    if let Budget::Iterations(n) = budget {
                        if iteration >= n {
                            break;
                        }
                    }
                    let (version, plan, occupancy) = {
                        let inc = incumbent.read();
                        (inc.version, inc.plan.clone(), inc.occupancy.clone())
                    };
                    let (neighborhood, replacement) = propose(ctx, &plan, &occupancy, &mut rng, &mut tabu);
                    let sent = tx.send(Proposal {
                        iteration,
                        worker,
                        version,
                        neighborhood,
                        replacement,
                    });
                    if sent.is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);

        for p in rx.iter() {
            let mut inc = incumbent.write();
            let before = inc.plan.objective();
            let mut entry = CommitEntry {
                iteration: p.iteration,
                worker: p.worker,
                neighborhood: p.neighborhood,
                objective_before: before,
                objective_after: None,
                accepted: false,
            };
            if let Some(rep) = p.replacement {
                let after = inc.plan.objective_with(&rep);
                entry.objective_after = Some(after);
                let fits = p.version == inc.version || replacement_fits(&inc.plan, &inc.occupancy, &rep);
                if fits && after < before {
                    let inc = &mut *inc;
                    apply_replacement(Arc::make_mut(&mut inc.plan), Arc::make_mut(&mut inc.occupancy), rep);
                    inc.version += 1;
                    entry.accepted = true;
                    if inc.plan.objective() <= lower_bound {
                        stop.store(true, Ordering::Relaxed);
                    }
                }
            }
            log.entries.push(entry);
        }
    });

    let plan = Arc::try_unwrap(incumbent.into_inner().plan).unwrap_or_else(|shared| (*shared).clone());
    (plan, log)
}

fn plan_is_optimal(incumbent: &RwLock<Incumbent>, lower_bound: f64) -> bool {
    incumbent.read().plan.objective() <= lower_bound
}
