//! Axial 3D assignment over `(uplink user, downlink user, subchannel)`.
//!
//! The main scheme freezes two of the three coordinates of the incumbent
//! mapping and re-solves the third with the 2D Hungarian solver, cycling
//! through the three decompositions. Exhaustive, random and greedy baselines
//! live here as well.
//!
//! Feasibility is the capacitated form of the one-to-one constraints: every
//! subchannel carries exactly one pair, an uplink user owns at most
//! `ceil(K/M)` subchannels and a downlink user at most `ceil(K/N)`. For
//! `M = N = K` this is the classic axial problem (each user exactly once).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hungarian::{solve_max_assignment, Assignment2D, RewardMatrix};
use crate::model::{Assignment3D, Dims, Triple};

/// Largest `K` accepted by [`exhaustive_3d`].
pub const EXHAUSTIVE_MAX_K: usize = 8;

/// Default number of 2D re-solves in [`iterative_hungarian_3d`].
pub const DEFAULT_ITERATIONS: usize = 5;

/// Fixed per-triple rates `r[m][n][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTensor {
    dims: Dims,
    data: Vec<f64>,
}

impl RateTensor {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.uue == 0 || dims.due == 0 || dims.sub == 0 {
            return Err(Error::Domain("rate tensor dimensions must be >= 1".into()));
        }
        if data.len() != dims.uue * dims.due * dims.sub {
            return Err(Error::Domain(format!(
                "rate tensor {}x{}x{} needs {} entries, got {}",
                dims.uue,
                dims.due,
                dims.sub,
                dims.uue * dims.due * dims.sub,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("rates must be finite and >= 0, got {v}")));
        }
        Ok(RateTensor { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.uue * dims.due * dims.sub);
        for m in 0..dims.uue {
            for n in 0..dims.due {
                for k in 0..dims.sub {
                    data.push(f(m, n, k));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, uue: usize, due: usize, sub: usize) -> f64 {
        self.data[(uue * self.dims.due + due) * self.dims.sub + sub]
    }

    /// Sum of the rates selected by `assignment`, in subchannel order.
    pub fn objective(&self, assignment: &Assignment3D) -> f64 {
        assignment.triples().map(|t| self.get(t.uue, t.due, t.sub)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.dims, self.data.iter().map(|v| v * factor).collect())
    }
}

/// Which coordinate is re-solved while the other two stay frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecompositionMode {
    /// Frozen (uue, due) pairs vs. subchannels.
    PairUueDueVsSub,
    /// Frozen (uue, subchannel) pairs vs. downlink users.
    PairUueSubVsDue,
    /// Frozen (due, subchannel) pairs vs. uplink users.
    PairDueSubVsUue,
}

impl DecompositionMode {
    pub const CYCLE: [DecompositionMode; 3] = [
        DecompositionMode::PairUueDueVsSub,
        DecompositionMode::PairUueSubVsDue,
        DecompositionMode::PairDueSubVsUue,
    ];
}

/// Maps a 2D solution of a reduced problem back to a 3D mapping.
#[derive(Debug, Clone)]
pub struct BackMap {
    mode: DecompositionMode,
    frozen: Vec<(usize, usize)>,
    col_owner: Vec<usize>,
    num_sub: usize,
}

impl BackMap {
    /// Frozen index pairs, one per row of the reduced reward matrix.
    pub fn frozen(&self) -> &[(usize, usize)] {
        &self.frozen
    }

    /// Entity (subchannel, DUE or UUE) addressed by each reward column.
    pub fn column_owner(&self) -> &[usize] {
        &self.col_owner
    }

    pub fn apply(&self, solution: &Assignment2D) -> Result<Assignment3D> {
        if solution.row_to_col.len() != self.frozen.len() {
            return Err(Error::Consistency("2D solution does not match the reduction".into()));
        }
        let mut triples = Vec::with_capacity(self.frozen.len());
        for (row, &(a, b)) in self.frozen.iter().enumerate() {
            let col = solution.row_to_col[row]
                .ok_or_else(|| Error::Consistency(format!("reduced row {row} left unmatched")))?;
            let free = *self.col_owner.get(col).ok_or(Error::Index {
                what: "column",
                index: col,
                len: self.col_owner.len(),
            })?;
            triples.push(match self.mode {
                DecompositionMode::PairUueDueVsSub => Triple::new(a, b, free),
                DecompositionMode::PairUueSubVsDue => Triple::new(a, free, b),
                DecompositionMode::PairDueSubVsUue => Triple::new(free, a, b),
            });
        }
        Assignment3D::from_triples(&triples, self.num_sub)
    }
}

/// Freezes two coordinates of `current` and builds the reward matrix for the
/// third. Rows are the frozen pairs (sorted); columns are subchannels, or
/// capacity replicas of the users being re-assigned.
pub fn reduce_to_2d(
    rates: &RateTensor,
    current: &Assignment3D,
    mode: DecompositionMode,
) -> Result<(RewardMatrix, BackMap)> {
    let dims = rates.dims();
    current.validate(dims)?;

    let mut frozen: Vec<(usize, usize)> = current
        .triples()
        .map(|t| match mode {
            DecompositionMode::PairUueDueVsSub => (t.uue, t.due),
            DecompositionMode::PairUueSubVsDue => (t.uue, t.sub),
            DecompositionMode::PairDueSubVsUue => (t.due, t.sub),
        })
        .collect();
    frozen.sort_unstable();

    let col_owner: Vec<usize> = match mode {
        DecompositionMode::PairUueDueVsSub => (0..dims.sub).collect(),
        DecompositionMode::PairUueSubVsDue => replicas(dims.due, dims.due_cap()),
        DecompositionMode::PairDueSubVsUue => replicas(dims.uue, dims.uue_cap()),
    };

    let mut data = Vec::with_capacity(frozen.len() * col_owner.len());
    for &(a, b) in &frozen {
        for &c in &col_owner {
            data.push(match mode {
                DecompositionMode::PairUueDueVsSub => rates.get(a, b, c),
                DecompositionMode::PairUueSubVsDue => rates.get(a, c, b),
                DecompositionMode::PairDueSubVsUue => rates.get(c, a, b),
            });
        }
    }
    let matrix = RewardMatrix::new(frozen.len(), col_owner.len(), data)?;
    Ok((
        matrix,
        BackMap {
            mode,
            frozen,
            col_owner,
            num_sub: dims.sub,
        },
    ))
}

fn replicas(count: usize, cap: usize) -> Vec<usize> {
    (0..count).flat_map(|i| std::iter::repeat_n(i, cap)).collect()
}

/// Deterministic starting mapping: subchannel `k` goes to uplink user
/// `k mod M` and downlink user `k mod N` (the identity when `M = N = K`).
pub fn initial_assignment(dims: Dims) -> Assignment3D {
    Assignment3D::from_pairs((0..dims.sub).map(|k| (k % dims.uue, k % dims.due)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeOutcome {
    pub assignment: Assignment3D,
    pub value: f64,
    /// Objective before the first step followed by the value after each step.
    pub history: Vec<f64>,
}

/// Runs up to `iterations` 2D re-solves, cycling through the three
/// decompositions, and stops early once a full cycle brings no improvement.
pub fn iterative_hungarian_3d(rates: &RateTensor, initial: &Assignment3D, iterations: usize) -> Result<Assignment3D> {
    Ok(iterative_hungarian_3d_traced(rates, initial, iterations)?.assignment)
}

pub fn iterative_hungarian_3d_traced(
    rates: &RateTensor,
    initial: &Assignment3D,
    iterations: usize,
) -> Result<IterativeOutcome> {
    initial.validate(rates.dims())?;
    let mut incumbent = initial.clone();
    let mut value = rates.objective(&incumbent);
    let mut history = vec![value];
    let mut stale = 0;
    for step in 0..iterations {
        let mode = DecompositionMode::CYCLE[step % 3];
        let (matrix, back) = reduce_to_2d(rates, &incumbent, mode)?;
        let (solution, _) = solve_max_assignment(&matrix);
        let candidate = back.apply(&solution)?;
        let candidate_value = rates.objective(&candidate);
        // the incumbent is feasible in every reduction, so only rounding can
        // make the candidate worse
        if candidate_value > value {
            stale = 0;
        } else {
            stale += 1;
        }
        if candidate_value >= value {
            incumbent = candidate;
            value = candidate_value;
        }
        history.push(value);
        if stale >= 3 {
            break;
        }
    }
    Ok(IterativeOutcome {
        assignment: incumbent,
        value,
        history,
    })
}

/// Settings for [`proposed_3d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProposedConfig {
    /// 2D re-solves per start.
    pub iterations: usize,
    /// Extra seeded random starts besides the identity and greedy mappings.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for ProposedConfig {
    fn default() -> Self {
        ProposedConfig {
            iterations: DEFAULT_ITERATIONS,
            random_starts: 4,
            seed: 0,
        }
    }
}

/// Iterative Hungarian from the identity mapping, the greedy mapping and
/// `random_starts` seeded random mappings; returns the best result (earliest
/// start wins ties).
pub fn proposed_3d(rates: &RateTensor, config: &ProposedConfig) -> Result<Assignment3D> {
    let dims = rates.dims();
    let mut starts = vec![initial_assignment(dims), greedy_3d(rates)];
    starts.extend((0..config.random_starts as u64).map(|i| random_3d(rates, config.seed.wrapping_add(i))));
    let mut best: Option<(Assignment3D, f64)> = None;
    for start in &starts {
        let out = iterative_hungarian_3d_traced(rates, start, config.iterations)?;
        if best.as_ref().is_none_or(|(_, v)| out.value > *v) {
            best = Some((out.assignment, out.value));
        }
    }
    Ok(best.expect("at least two starts").0)
}

/// Global optimum over all one-to-one mappings (`M = N = K <= 8`).
///
/// Enumerates every downlink permutation and, for each, finds the best
/// subchannel permutation by dynamic programming over subchannel subsets.
pub fn exhaustive_3d(rates: &RateTensor) -> Result<(Assignment3D, f64)> {
    let dims = rates.dims();
    if !dims.is_square() {
        return Err(Error::TooLarge(format!(
            "exhaustive search needs M = N = K, got {}x{}x{}",
            dims.uue, dims.due, dims.sub
        )));
    }
    let k = dims.sub;
    if k > EXHAUSTIVE_MAX_K {
        return Err(Error::TooLarge(format!(
            "exhaustive search limited to K <= {EXHAUSTIVE_MAX_K}, got {k}"
        )));
    }

    let full = (1usize << k) - 1;
    let mut dp = vec![f64::NEG_INFINITY; 1 << k];
    let mut choice = vec![0usize; 1 << k];
    let mut best_value = f64::NEG_INFINITY;
    let mut best: Option<(Vec<usize>, Vec<usize>)> = None;

    let mut due_of: Vec<usize> = (0..k).collect();
    loop {
        // dp[mask]: best value with uplink users 0..|mask| placed on `mask`
        dp.fill(f64::NEG_INFINITY);
        dp[0] = 0.0;
        for mask in 0usize..full {
            if dp[mask] == f64::NEG_INFINITY {
                continue;
            }
            let m = mask.count_ones() as usize;
            for sub in 0..k {
                let bit = 1 << sub;
                if mask & bit != 0 {
                    continue;
                }
                let v = dp[mask] + rates.get(m, due_of[m], sub);
                if v > dp[mask | bit] {
                    dp[mask | bit] = v;
                    choice[mask | bit] = sub;
                }
            }
        }
        if dp[full] > best_value {
            best_value = dp[full];
            let mut sub_of = vec![0usize; k];
            let mut mask = full;
            for m in (0..k).rev() {
                sub_of[m] = choice[mask];
                mask &= !(1 << sub_of[m]);
            }
            best = Some((due_of.clone(), sub_of));
        }
        if !next_permutation(&mut due_of) {
            break;
        }
    }

    let (due_of, sub_of) = best.expect("at least one permutation");
    let triples: Vec<Triple> = (0..k).map(|m| Triple::new(m, due_of[m], sub_of[m])).collect();
    let assignment = Assignment3D::from_triples(&triples, k)?;
    let value = rates.objective(&assignment);
    Ok((assignment, value))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&x| x > p[i]).expect("pivot has a successor");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Uniformly random capacity-respecting mapping, reproducible per seed.
pub fn random_3d(rates: &RateTensor, seed: u64) -> Assignment3D {
    let dims = rates.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uues = replicas(dims.uue, dims.uue_cap());
    let mut dues = replicas(dims.due, dims.due_cap());
    uues.shuffle(&mut rng);
    dues.shuffle(&mut rng);
    Assignment3D::from_pairs(uues.into_iter().zip(dues).take(dims.sub).collect())
}

/// Uplink users in index order each grab their best remaining
/// (downlink user, subchannel) pair; rounds repeat until every subchannel is
/// taken. A downlink user drops out once its capacity is used.
pub fn greedy_3d(rates: &RateTensor) -> Assignment3D {
    let dims = rates.dims();
    let mut uue_left = vec![dims.uue_cap(); dims.uue];
    let mut due_left = vec![dims.due_cap(); dims.due];
    let mut slots: Vec<Option<(usize, usize)>> = vec![None; dims.sub];
    let mut unassigned = dims.sub;

    while unassigned > 0 {
        for (m, left) in uue_left.iter_mut().enumerate() {
            if unassigned == 0 {
                break;
            }
            if *left == 0 {
                continue;
            }
            let mut pick: Option<(usize, usize, f64)> = None;
            for n in (0..dims.due).filter(|&n| due_left[n] > 0) {
                for k in (0..dims.sub).filter(|&k| slots[k].is_none()) {
                    let r = rates.get(m, n, k);
                    if pick.is_none_or(|(_, _, best)| r > best) {
                        pick = Some((n, k, r));
                    }
                }
            }
            let (n, k, _) = pick.expect("capacities cover every subchannel");
            slots[k] = Some((m, n));
            *left -= 1;
            due_left[n] -= 1;
            unassigned -= 1;
        }
    }
    Assignment3D::from_pairs(slots.into_iter().map(|s| s.expect("filled")).collect())
}
