//! Deterministic operation streams for the load and steady phases.

use std::collections::VecDeque;

use laser_core::{ColumnId, ColumnSet, Key, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::spec::WorkloadSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryClass {
    Q1,
    Q2a,
    Q2b,
    Q3,
    Q4,
    Q5,
}

impl QueryClass {
    pub const ALL: [QueryClass; 6] = [
        QueryClass::Q1,
        QueryClass::Q2a,
        QueryClass::Q2b,
        QueryClass::Q3,
        QueryClass::Q4,
        QueryClass::Q5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryClass::Q1 => "q1",
            QueryClass::Q2a => "q2a",
            QueryClass::Q2b => "q2b",
            QueryClass::Q3 => "q3",
            QueryClass::Q4 => "q4",
            QueryClass::Q5 => "q5",
        }
    }

    pub fn is_write(self) -> bool {
        matches!(self, QueryClass::Q1 | QueryClass::Q3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Load,
    Steady,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Insert {
        index: u64,
        key: Key,
        row: Vec<Value>,
    },
    Update {
        key: Key,
        column: ColumnId,
        value: Value,
    },
    Point {
        class: QueryClass,
        key: Key,
        projection: ColumnSet,
    },
    Scan {
        class: QueryClass,
        low: Key,
        high: Key,
        projection: ColumnSet,
    },
}

impl Op {
    pub fn class(&self) -> QueryClass {
        match self {
            Op::Insert { .. } => QueryClass::Q1,
            Op::Update { .. } => QueryClass::Q3,
            Op::Point { class, .. } | Op::Scan { class, .. } => *class,
        }
    }
}

/// An operation and the number of rows inserted before it in the stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub after_inserts: u64,
    pub op: Op,
}

/// Key of the `index`-th inserted row: a bijective mix of the index, so
/// keys are unique and spread uniformly over the key space.
pub fn key_of(index: u64) -> Key {
    let mut x = index;
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Draws a recency in `[0, 1]` (1 is newest) and maps it to an insertion
/// index among `inserted` rows.
fn pick_index(rng: &mut ChaCha8Rng, dist: &Normal<f64>, inserted: u64) -> u64 {
    let r = dist.sample(rng).clamp(0.0, 1.0);
    (r * (inserted.saturating_sub(1)) as f64).round() as u64
}

/// Normalized recency of insertion `index` among `inserted` rows.
pub fn recency(index: u64, inserted: u64) -> f64 {
    if inserted <= 1 {
        1.0
    } else {
        index as f64 / (inserted - 1) as f64
    }
}

pub struct Generator {
    spec: WorkloadSpec,
    phase: Phase,
    rng: ChaCha8Rng,
    q2a: Normal<f64>,
    q2b: Normal<f64>,
    q3: Normal<f64>,
    /// Rows inserted so far, counting the load phase.
    inserted: u64,
    /// Inserts emitted in this phase.
    phase_inserts: u64,
    emitted_q2a: u64,
    emitted_q2b: u64,
    emitted_scans: u64,
    pending: VecDeque<Op>,
}

impl Generator {
    pub fn new(spec: &WorkloadSpec, phase: Phase) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(match phase {
            Phase::Load => 1,
            Phase::Steady => 2,
        });
        let normal = |mean: f64, sd: f64| Normal::new(mean, sd).expect("validated distribution");
        Generator {
            q2a: normal(spec.q2a.mean, spec.q2a.stddev),
            q2b: normal(spec.q2b.mean, spec.q2b.stddev),
            q3: normal(spec.q3.mean, spec.q3.stddev),
            spec: spec.clone(),
            phase,
            rng,
            inserted: if phase == Phase::Load {
                0
            } else {
                spec.load_rows
            },
            phase_inserts: 0,
            emitted_q2a: 0,
            emitted_q2b: 0,
            emitted_scans: 0,
            pending: VecDeque::new(),
        }
    }

    fn insert(&mut self) -> Op {
        let index = self.inserted;
        let row = (0..self.spec.columns).map(|_| self.rng.gen()).collect();
        self.inserted += 1;
        self.phase_inserts += 1;
        Op::Insert {
            index,
            key: key_of(index),
            row,
        }
    }

    fn point(&mut self, class: QueryClass) -> Op {
        let (dist, projection) = match class {
            QueryClass::Q2a => (self.q2a, self.spec.q2a.projection),
            _ => (self.q2b, self.spec.q2b.projection),
        };
        let index = pick_index(&mut self.rng, &dist, self.inserted);
        Op::Point {
            class,
            key: key_of(index),
            projection,
        }
    }

    fn update(&mut self) -> Op {
        let index = pick_index(&mut self.rng, &self.q3.clone(), self.inserted);
        Op::Update {
            key: key_of(index),
            column: self.rng.gen_range(1..=self.spec.columns as ColumnId),
            value: self.rng.gen(),
        }
    }

    fn scan(&mut self, class: QueryClass) -> Op {
        let s = if class == QueryClass::Q4 {
            &self.spec.q4
        } else {
            &self.spec.q5
        };
        let (fraction, projection) = (s.fraction, s.projection);
        let space = 1u128 << 64;
        let width = ((fraction * space as f64) as u128).clamp(1, space);
        let low = self.rng.gen_range(0..=space - width) as u64;
        let high = (low as u128 + width - 1) as u64;
        Op::Scan {
            class,
            low,
            high,
            projection,
        }
    }

    /// Point queries due after `done` of `total` steady inserts.
    fn due(count: u64, done: u64, total: u64) -> u64 {
        if total == 0 {
            count
        } else {
            (count as u128 * done as u128 / total as u128) as u64
        }
    }

    fn refill(&mut self) -> bool {
        match self.phase {
            Phase::Load => {
                if self.phase_inserts >= self.spec.load_rows {
                    return false;
                }
                let op = self.insert();
                self.pending.push_back(op);
                true
            }
            Phase::Steady => {
                let total = self.spec.steady_inserts;
                if self.phase_inserts < total {
                    let op = self.insert();
                    self.pending.push_back(op);
                    let every = self.spec.q3.every;
                    if every > 0 && self.phase_inserts.is_multiple_of(every) {
                        let op = self.update();
                        self.pending.push_back(op);
                    }
                }
                let done = self.phase_inserts;
                let a = Self::due(self.spec.q2a.count, done, total);
                let b = Self::due(self.spec.q2b.count, done, total);
                while self.emitted_q2a < a || self.emitted_q2b < b {
                    if self.emitted_q2a < a {
                        self.emitted_q2a += 1;
                        let op = self.point(QueryClass::Q2a);
                        self.pending.push_back(op);
                    }
                    if self.emitted_q2b < b {
                        self.emitted_q2b += 1;
                        let op = self.point(QueryClass::Q2b);
                        self.pending.push_back(op);
                    }
                }
                if self.phase_inserts >= total && self.pending.is_empty() {
                    // Analytical queries run at the end, alternating.
                    let (n4, n5) = (self.spec.q4.count, self.spec.q5.count);
                    if self.emitted_scans >= n4 + n5 {
                        return false;
                    }
                    let i = self.emitted_scans;
                    self.emitted_scans += 1;
                    let paired = 2 * n4.min(n5);
                    let q4 = if i < paired {
                        i.is_multiple_of(2)
                    } else {
                        n4 > n5
                    };
                    let op = self.scan(if q4 { QueryClass::Q4 } else { QueryClass::Q5 });
                    self.pending.push_back(op);
                }
                !self.pending.is_empty()
            }
        }
    }
}

impl Iterator for Generator {
    type Item = Step;

    fn next(&mut self) -> Option<Step> {
        if self.pending.is_empty() && !self.refill() {
            return None;
        }
        let op = self.pending.pop_front()?;
        // Inserts count themselves only once emitted.
        let after = match &op {
            Op::Insert { index, .. } => *index,
            _ => self.inserted,
        };
        Some(Step {
            after_inserts: after,
            op,
        })
    }
}
