//! Greedy submodular bin partitioning.
//!
//! Bins are built one after another. Bin `k` draws from the residual pool
//! `D_k` (every sample not placed in an earlier bin) and grows by repeatedly
//! taking the candidate with the largest gain
//!
//! ```text
//! P(x) = sum_{p in S} ||f(p) - f(x)||^2 - sum_{p in D_k \ S} ||f(p) - f(x)||^2
//! ```
//!
//! where `S` is the bin under construction. Ties go to the lowest sample
//! index. Bin sizes follow a balanced schedule: the first `n mod N` bins hold
//! `ceil(n / N)` samples, the rest `floor(n / N)`.
//!
//! Two interchangeable modes compute the gains. [`SelectionMode::Oracle`]
//! evaluates the double sum afresh for every candidate at every step.
//! [`SelectionMode::Accelerated`] keeps, per candidate, the pool total
//! `T(x) = sum_{p in D_k} ||f(p) - f(x)||^2` (once per bin) and the running
//! `A(x) = sum_{p in S} ||f(p) - f(x)||^2`; since the two sums of `P` add up to
//! `T`, the gain is `2 A(x) - T(x)` and each step costs `O(|D_k| d)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{squared_distance, FeatureMatrix};

/// Below this pool size the per-candidate loops stay on the calling thread.
const PAR_MIN_LEN: usize = 256;
const ABSENT: usize = usize::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Oracle,
    #[default]
    Accelerated,
}

impl SelectionMode {
    pub fn label(self) -> &'static str {
        match self {
            SelectionMode::Oracle => "oracle",
            SelectionMode::Accelerated => "accelerated",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(SelectionMode::Oracle),
            "accelerated" => Ok(SelectionMode::Accelerated),
            other => Err(Error::Config(format!(
                "unknown selection mode '{other}' (expected oracle or accelerated)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectorConfig {
    pub num_bins: usize,
    pub mode: SelectionMode,
}

impl SelectorConfig {
    pub fn new(num_bins: usize, mode: SelectionMode) -> Self {
        Self { num_bins, mode }
    }
}

/// Scheduled bin sizes for `n` samples in `num_bins` bins.
pub fn bin_sizes(n: usize, num_bins: usize) -> Result<Vec<usize>> {
    if num_bins == 0 || num_bins > n {
        return Err(Error::Config(format!(
            "number of bins must be in 1..={n}, got {num_bins}"
        )));
    }
    let (base, extra) = (n / num_bins, n % num_bins);
    Ok((0..num_bins).map(|k| base + usize::from(k < extra)).collect())
}

/// Disjoint, exhaustive bins in construction order. Each bin lists its
/// samples in the order they were selected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinPartition {
    n: usize,
    bins: Vec<Vec<usize>>,
}

impl BinPartition {
    /// Checks disjointness, coverage of `0..n` and that no bin is empty.
    pub fn new(n: usize, bins: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 || bins.is_empty() {
            return Err(Error::Partition("partition must have samples and bins".into()));
        }
        let mut seen = vec![false; n];
        for (k, bin) in bins.iter().enumerate() {
            if bin.is_empty() {
                return Err(Error::Partition(format!("bin {k} is empty")));
            }
            for &i in bin {
                if i >= n {
                    return Err(Error::Partition(format!(
                        "bin {k} holds index {i}, outside 0..{n}"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!("index {i} appears twice")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("index {missing} is in no bin")));
        }
        Ok(Self { n, bins })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[Vec<usize>] {
        &self.bins
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bins.iter().map(Vec::len).collect()
    }

    /// Bin holding each sample.
    pub fn membership(&self) -> Vec<usize> {
        let mut owner = vec![0; self.n];
        for (k, bin) in self.bins.iter().enumerate() {
            for &i in bin {
                owner[i] = k;
            }
        }
        owner
    }
}

fn check_index(features: &FeatureMatrix, i: usize) -> Result<()> {
    if i >= features.n() {
        return Err(Error::Index(format!(
            "index {i} outside 0..{}",
            features.n()
        )));
    }
    Ok(())
}

/// `P(candidate)` by the double sum over `selected` and `universe \ selected`.
pub fn compute_gain_direct(
    features: &FeatureMatrix,
    selected: &[usize],
    universe: &[usize],
    candidate: usize,
) -> Result<f64> {
    check_index(features, candidate)?;
    let mut in_universe = vec![false; features.n()];
    for &p in universe {
        check_index(features, p)?;
        in_universe[p] = true;
    }
    let mut in_selected = vec![false; features.n()];
    for &p in selected {
        check_index(features, p)?;
        if !in_universe[p] {
            return Err(Error::Index(format!("selected index {p} is not in the universe")));
        }
        in_selected[p] = true;
    }
    if !in_universe[candidate] {
        return Err(Error::Index(format!("candidate {candidate} is not in the universe")));
    }
    if in_selected[candidate] {
        return Err(Error::Index(format!("candidate {candidate} is already selected")));
    }
    Ok(gain_direct_masked(features, &in_selected, universe, candidate))
}

fn gain_direct_masked(features: &FeatureMatrix, in_selected: &[bool], universe: &[usize], x: usize) -> f64 {
    let fx = features.row(x);
    let mut inside = 0.0;
    let mut outside = 0.0;
    for &p in universe {
        let dist = squared_distance(features.row(p), fx);
        if in_selected[p] {
            inside += dist;
        } else {
            outside += dist;
        }
    }
    inside - outside
}

/// Incremental gain bookkeeping for one bin.
///
/// `total(x)` is fixed when the bin starts; `accumulated(x)` grows with every
/// [`GainState::update`]. The gain of a remaining candidate is
/// `2 * accumulated(x) - total(x)`.
#[derive(Clone, Debug)]
pub struct GainState<'a> {
    features: &'a FeatureMatrix,
    pool: Vec<usize>,
    /// sample index -> position in `pool`, `ABSENT` when not in the pool.
    position: Vec<usize>,
    chosen: Vec<bool>,
    current_bin: Vec<usize>,
    total: Vec<f64>,
    accumulated: Vec<f64>,
}

impl<'a> GainState<'a> {
    /// Starts a bin over `pool`, computing every `T(x)` by sequential
    /// summation over the pool in the given order.
    pub fn new(features: &'a FeatureMatrix, pool: Vec<usize>) -> Result<Self> {
        let mut position = vec![ABSENT; features.n()];
        for (at, &i) in pool.iter().enumerate() {
            check_index(features, i)?;
            if position[i] != ABSENT {
                return Err(Error::Index(format!("index {i} repeated in pool")));
            }
            position[i] = at;
        }
        let mut total = vec![0.0; pool.len()];
        total
            .par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .zip(&pool)
            .for_each(|(t, &x)| {
                let fx = features.row(x);
                *t = pool.iter().map(|&p| squared_distance(features.row(p), fx)).sum();
            });
        let m = pool.len();
        Ok(Self {
            features,
            pool,
            position,
            chosen: vec![false; m],
            current_bin: Vec::new(),
            total,
            accumulated: vec![0.0; m],
        })
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn current_bin(&self) -> &[usize] {
        &self.current_bin
    }

    fn locate(&self, x: usize) -> Result<usize> {
        match self.position.get(x) {
            Some(&at) if at != ABSENT => Ok(at),
            _ => Err(Error::Index(format!("index {x} is not in the pool"))),
        }
    }

    fn locate_remaining(&self, x: usize) -> Result<usize> {
        let at = self.locate(x)?;
        if self.chosen[at] {
            return Err(Error::Index(format!("index {x} is already in the bin")));
        }
        Ok(at)
    }

    pub fn total(&self, x: usize) -> Result<f64> {
        Ok(self.total[self.locate(x)?])
    }

    pub fn accumulated(&self, x: usize) -> Result<f64> {
        Ok(self.accumulated[self.locate(x)?])
    }

    pub fn gain(&self, x: usize) -> Result<f64> {
        let at = self.locate_remaining(x)?;
        Ok(2.0 * self.accumulated[at] - self.total[at])
    }

    /// Pool members not yet in the bin, in pool order.
    pub fn remaining(&self) -> impl Iterator<Item = usize> + '_ {
        self.pool
            .iter()
            .zip(&self.chosen)
            .filter(|(_, &c)| !c)
            .map(|(&i, _)| i)
    }

    /// Highest-gain remaining candidate; ties go to the lowest sample index.
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (at, &x) in self.pool.iter().enumerate() {
            if self.chosen[at] {
                continue;
            }
            let gain = 2.0 * self.accumulated[at] - self.total[at];
            best = match best {
                Some((bx, bg)) if bg > gain || (bg == gain && bx < x) => Some((bx, bg)),
                _ => Some((x, gain)),
            };
        }
        best
    }

    /// Moves `selected` into the bin and adds its distance to every
    /// remaining candidate's running sum.
    pub fn update(&mut self, selected: usize) -> Result<()> {
        let at = self.locate_remaining(selected)?;
        self.chosen[at] = true;
        self.current_bin.push(selected);
        let features = self.features;
        let fs = features.row(selected);
        self.accumulated
            .par_iter_mut()
            .with_min_len(PAR_MIN_LEN)
            .zip(&self.pool)
            .zip(&self.chosen)
            .for_each(|((a, &x), &done)| {
                if !done {
                    *a += squared_distance(fs, features.row(x));
                }
            });
        Ok(())
    }
}

/// One greedy step: the gains of every remaining candidate and the pick.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub candidates: Vec<usize>,
    pub gains: Vec<f64>,
    pub chosen: usize,
    pub chosen_gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinTrace {
    pub pool: Vec<usize>,
    /// `T(x)` for each pool member, aligned with `pool`.
    pub totals: Vec<f64>,
    pub steps: Vec<StepTrace>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelectionTrace {
    pub bins: Vec<BinTrace>,
}

pub fn select_bins(features: &FeatureMatrix, config: &SelectorConfig) -> Result<BinPartition> {
    run_selection(features, config, None)
}

/// Like [`select_bins`] but records every candidate's gain at every step.
/// Memory grows quadratically with `n`; intended for inspection and tests.
pub fn select_bins_traced(
    features: &FeatureMatrix,
    config: &SelectorConfig,
) -> Result<(BinPartition, SelectionTrace)> {
    let mut trace = SelectionTrace::default();
    let partition = run_selection(features, config, Some(&mut trace))?;
    Ok((partition, trace))
}

fn run_selection(
    features: &FeatureMatrix,
    config: &SelectorConfig,
    mut trace: Option<&mut SelectionTrace>,
) -> Result<BinPartition> {
    let n = features.n();
    let sizes = bin_sizes(n, config.num_bins)?;
    let mut assigned = vec![false; n];
    let mut bins = Vec::with_capacity(sizes.len());

    for size in sizes {
        let pool: Vec<usize> = (0..n).filter(|&i| !assigned[i]).collect();
        let bin = match config.mode {
            SelectionMode::Accelerated => fill_bin_accelerated(features, pool, size, trace.as_deref_mut())?,
            SelectionMode::Oracle => fill_bin_oracle(features, pool, size, trace.as_deref_mut()),
        };
        for &i in &bin {
            assigned[i] = true;
        }
        bins.push(bin);
    }
    BinPartition::new(n, bins).map_err(|e| Error::Internal(format!("selector produced {e}")))
}

fn fill_bin_accelerated(
    features: &FeatureMatrix,
    pool: Vec<usize>,
    size: usize,
    trace: Option<&mut SelectionTrace>,
) -> Result<Vec<usize>> {
    let mut state = GainState::new(features, pool)?;
    let mut bin_trace = trace.as_ref().map(|_| BinTrace {
        pool: state.pool.clone(),
        totals: state.total.clone(),
        steps: Vec::with_capacity(size),
    });
    for _ in 0..size {
        let (chosen, chosen_gain) = state
            .best()
            .ok_or_else(|| Error::Internal("pool exhausted before bin was full".into()))?;
        if let Some(bt) = bin_trace.as_mut() {
            let candidates: Vec<usize> = state.remaining().collect();
            let gains = candidates.iter().map(|&x| state.gain(x)).collect::<Result<_>>()?;
            bt.steps.push(StepTrace {
                candidates,
                gains,
                chosen,
                chosen_gain,
            });
        }
        state.update(chosen)?;
    }
    if let (Some(trace), Some(bt)) = (trace, bin_trace) {
        trace.bins.push(bt);
    }
    Ok(state.current_bin)
}

fn fill_bin_oracle(
    features: &FeatureMatrix,
    pool: Vec<usize>,
    size: usize,
    trace: Option<&mut SelectionTrace>,
) -> Vec<usize> {
    let mut in_bin = vec![false; features.n()];
    let mut bin = Vec::with_capacity(size);
    let mut bin_trace = trace.as_ref().map(|_| BinTrace {
        totals: pool
            .iter()
            .map(|&x| pool.iter().map(|&p| features.squared_distance(p, x)).sum())
            .collect(),
        pool: pool.clone(),
        steps: Vec::with_capacity(size),
    });
    for _ in 0..size {
        let candidates: Vec<usize> = pool.iter().copied().filter(|&x| !in_bin[x]).collect();
        let gains: Vec<f64> = candidates
            .iter()
            .map(|&x| gain_direct_masked(features, &in_bin, &pool, x))
            .collect();
        // Candidates ascend, so the first maximum has the lowest index.
        let mut best = 0;
        for (i, &g) in gains.iter().enumerate() {
            if g > gains[best] {
                best = i;
            }
        }
        let chosen = candidates[best];
        if let Some(bt) = bin_trace.as_mut() {
            bt.steps.push(StepTrace {
                chosen,
                chosen_gain: gains[best],
                candidates,
                gains,
            });
        }
        in_bin[chosen] = true;
        bin.push(chosen);
    }
    if let (Some(trace), Some(bt)) = (trace, bin_trace) {
        trace.bins.push(bt);
    }
    bin
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> FeatureMatrix {
        FeatureMatrix::from_rows(&[[0.0], [1.0], [2.0], [10.0]], "fixture").unwrap()
    }

    #[test]
    fn direct_gain_examples() {
        let f = fixture();
        let all = [0, 1, 2, 3];
        assert_eq!(compute_gain_direct(&f, &[], &all, 2).unwrap(), -69.0);
        assert_eq!(compute_gain_direct(&f, &[2], &all, 1).unwrap(), -81.0);
        assert_eq!(compute_gain_direct(&f, &[], &[3], 3).unwrap(), 0.0);
    }

    #[test]
    fn direct_gain_index_errors() {
        let f = fixture();
        let all = [0, 1, 2, 3];
        assert_eq!(compute_gain_direct(&f, &[2], &all, 2).unwrap_err().kind(), "IndexError");
        assert_eq!(compute_gain_direct(&f, &[], &[0, 1], 3).unwrap_err().kind(), "IndexError");
        assert_eq!(compute_gain_direct(&f, &[], &all, 9).unwrap_err().kind(), "IndexError");
        assert_eq!(compute_gain_direct(&f, &[3], &[0, 1], 0).unwrap_err().kind(), "IndexError");
    }

    #[test]
    fn gain_state_matches_fixture() {
        let f = fixture();
        let mut state = GainState::new(&f, vec![0, 1, 2, 3]).unwrap();
        let totals: Vec<f64> = (0..4).map(|i| state.total(i).unwrap()).collect();
        assert_eq!(totals, vec![105.0, 83.0, 69.0, 245.0]);
        assert_eq!(state.best(), Some((2, -69.0)));
        state.update(2).unwrap();
        assert_eq!(state.accumulated(1).unwrap(), 1.0);
        assert_eq!(state.gain(1).unwrap(), -81.0);
        assert_eq!(state.gain(0).unwrap(), -97.0);
        assert_eq!(state.gain(3).unwrap(), -117.0);
        assert_eq!(state.update(2).unwrap_err().kind(), "IndexError");
        assert_eq!(state.gain(2).unwrap_err().kind(), "IndexError");
        assert_eq!(state.remaining().collect::<Vec<_>>(), vec![0, 1, 3]);
    }

    #[test]
    fn fixture_partition_both_modes() {
        let f = fixture();
        for mode in [SelectionMode::Oracle, SelectionMode::Accelerated] {
            let p = select_bins(&f, &SelectorConfig::new(2, mode)).unwrap();
            assert_eq!(p.bins(), &[vec![2, 1], vec![0, 3]], "{mode}");
        }
    }

    #[test]
    fn single_bin_and_config_errors() {
        let f = fixture();
        let p = select_bins(&f, &SelectorConfig::new(1, SelectionMode::Accelerated)).unwrap();
        // After 2 and 1: gain(0) = 2*5 - 105 = -95, gain(3) = 2*145 - 245 = 45.
        assert_eq!(p.bins(), &[vec![2, 1, 3, 0]]);
        let err = select_bins(&f, &SelectorConfig::new(5, SelectionMode::Accelerated)).unwrap_err();
        assert_eq!(err.kind(), "ConfigError");
        assert!(select_bins(&f, &SelectorConfig::new(0, SelectionMode::Oracle)).is_err());
    }

    #[test]
    fn bin_schedule() {
        assert_eq!(bin_sizes(10, 4).unwrap(), vec![3, 3, 2, 2]);
        assert_eq!(bin_sizes(20, 20).unwrap(), vec![1; 20]);
        assert_eq!(bin_sizes(7, 1).unwrap(), vec![7]);
    }

    #[test]
    fn partition_validation() {
        assert!(BinPartition::new(3, vec![vec![0, 1], vec![2]]).is_ok());
        for bad in [
            vec![vec![0, 1], vec![1, 2]],
            vec![vec![0, 1]],
            vec![vec![0, 1, 2], vec![]],
            vec![vec![0, 1, 3]],
        ] {
            assert_eq!(BinPartition::new(3, bad).unwrap_err().kind(), "PartitionError");
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("oracle".parse::<SelectionMode>().unwrap(), SelectionMode::Oracle);
        assert!("fast".parse::<SelectionMode>().is_err());
    }
}
