//! Branched-growth forward-flux sampling.
//!
//! The engine collects crossings of the first interface from long runs in
//! basin A, grows a tree of `m_i` independent continuations from every
//! crossing, and assigns each crossing its committer probability by a
//! backward sweep over the tree.

use std::io::Write;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{Basin, BasinSpec, Direction, Dynamics, ProcessState};
use crate::rng::{self, derive_seed};

/// Ordered interface values `lambda_0 .. lambda_n`, strictly monotone in the
/// transition direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct InterfaceLadder {
    lambdas: Vec<f64>,
    direction: Direction,
}

impl InterfaceLadder {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.len() < 2 {
            return Err(Error::config("interface ladder needs at least lambda_0 and lambda_n"));
        }
        if lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::config("interface values must be finite"));
        }
        let direction = if lambdas[1] > lambdas[0] {
            Direction::Increasing
        } else {
            Direction::Decreasing
        };
        let monotone = lambdas.windows(2).all(|w| match direction {
            Direction::Increasing => w[1] > w[0],
            Direction::Decreasing => w[1] < w[0],
        });
        if !monotone {
            return Err(Error::config(format!(
                "interfaces are not strictly monotone: {lambdas:?}"
            )));
        }
        Ok(Self { lambdas, direction })
    }

    /// `n` equally spaced intervals between `lambda_0` and `lambda_n`.
    pub fn uniform(lambda_0: f64, lambda_n: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("number of interfaces must be >= 1"));
        }
        let step = (lambda_n - lambda_0) / n as f64;
        let mut lambdas: Vec<f64> = (0..n).map(|i| lambda_0 + step * i as f64).collect();
        lambdas.push(lambda_n);
        Self::new(lambdas)
    }

    /// Number of intervals `n`.
    pub fn n(&self) -> usize {
        self.lambdas.len() - 1
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas[i]
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn basins(&self) -> BasinSpec {
        BasinSpec {
            lambda_a: self.lambdas[0],
            lambda_b: self.lambdas[self.n()],
            direction: self.direction,
        }
    }
}

impl TryFrom<Vec<f64>> for InterfaceLadder {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<InterfaceLadder> for Vec<f64> {
    fn from(l: InterfaceLadder) -> Self {
        l.lambdas
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    /// Trials `m_0 .. m_{n-1}` launched from each crossing of interface i.
    pub branches: Vec<usize>,
    /// Number of lambda_0 crossings expanded into trees.
    pub n_seeds: usize,
    /// Steps after which an unresolved branch is abandoned as a failure.
    #[serde(default = "default_max_branch_steps")]
    pub max_branch_steps: u64,
}

fn default_max_branch_steps() -> u64 {
    1_000_000
}

impl BranchConfig {
    pub fn uniform(m: usize, n: usize, n_seeds: usize) -> Self {
        Self {
            branches: vec![m; n],
            n_seeds,
            max_branch_steps: default_max_branch_steps(),
        }
    }

    pub fn validate(&self, ladder: &InterfaceLadder) -> Result<()> {
        if self.branches.len() != ladder.n() {
            return Err(Error::config(format!(
                "{} branch counts given for {} interfaces",
                self.branches.len(),
                ladder.n()
            )));
        }
        if self.branches.contains(&0) {
            return Err(Error::config("every branch count m_i must be >= 1"));
        }
        if self.n_seeds == 0 {
            return Err(Error::config("n_seeds must be >= 1"));
        }
        Ok(())
    }
}

/// Budget for the basin-A runs that harvest lambda_0 crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxConfig {
    /// Steps per trajectory before a fresh one is started.
    pub trajectory_steps: u64,
    /// Total step budget across all trajectories.
    pub budget_steps: u64,
}

impl Default for FluxConfig {
    fn default() -> Self {
        Self {
            trajectory_steps: 1_000_000,
            budget_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub id: usize,
    /// Interface index `i` of the crossing.
    pub interface: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub state: ProcessState,
    /// Successful continuations `N_j^i` (zero at lambda_n).
    pub successes: usize,
    /// Committer probability, filled by [`committer_probabilities`].
    pub p_b: Option<f64>,
    pub response_value: f64,
    /// Index of the lambda_0 seed this record descends from.
    pub seed_index: usize,
    #[serde(skip)]
    stream_key: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossingForest {
    pub records: Vec<CrossingRecord>,
    pub roots: Vec<usize>,
    /// `m_0 .. m_{n-1}` used to grow the forest.
    pub branches: Vec<usize>,
}

impl CrossingForest {
    pub fn n(&self) -> usize {
        self.branches.len()
    }

    /// Record ids grouped by interface index.
    pub fn by_interface(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n() + 1];
        for r in &self.records {
            groups[r.interface].push(r.id);
        }
        groups
    }

    /// Ids of the records in the tree rooted at `root`, in breadth-first order.
    pub fn subtree(&self, root: usize) -> Vec<usize> {
        let mut out = vec![root];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.records[out[i]].children.iter().copied());
            i += 1;
        }
        out
    }

    fn append(&mut self, mut other: CrossingForest) {
        let offset = self.records.len();
        for r in &mut other.records {
            r.id += offset;
            r.parent = r.parent.map(|p| p + offset);
            for c in &mut r.children {
                *c += offset;
            }
        }
        self.roots.extend(other.roots.iter().map(|r| r + offset));
        self.records.extend(other.records);
    }

    /// Concatenates forests grown with identical branch counts, renumbering
    /// ids.
    pub fn concat(forests: impl IntoIterator<Item = CrossingForest>) -> Result<CrossingForest> {
        let mut out: Option<CrossingForest> = None;
        for f in forests {
            match &mut out {
                None => out = Some(f),
                Some(acc) => {
                    if acc.branches != f.branches {
                        return Err(Error::config("cannot concatenate forests with different m_i"));
                    }
                    acc.append(f);
                }
            }
        }
        Ok(out.unwrap_or_default())
    }

    /// Writes the forest as CSV:
    /// `interface_index,crossing_id,parent_id,p_B,<state fields>,response_action,response_value`.
    pub fn write_csv<W: Write>(&self, w: W, state_names: &[String], response_action: &str) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["interface_index", "crossing_id", "parent_id", "p_B"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(state_names.iter().cloned());
        header.push("response_action".into());
        header.push("response_value".into());
        out.write_record(&header)?;
        for r in &self.records {
            let mut rec = vec![
                r.interface.to_string(),
                r.id.to_string(),
                r.parent.map(|p| p.to_string()).unwrap_or_default(),
                r.p_b.map(|p| p.to_string()).unwrap_or_default(),
            ];
            rec.extend(r.state.x.iter().map(|v| v.to_string()));
            rec.push(response_action.to_string());
            rec.push(r.response_value.to_string());
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<forest>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, state_names: &[String], response_action: &str) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f), state_names, response_action)
    }
}

/// Harvested lambda_0 crossings and the initial flux estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCrossings {
    pub states: Vec<ProcessState>,
    /// Crossings per unit time spent in basin A.
    pub r0: f64,
    pub time_in_a: f64,
    pub steps: u64,
    pub trajectories: usize,
}

/// Runs noisy trajectories from `initial` (which must lie in basin A) and
/// records the state at each outward crossing of lambda_0 until
/// `target_count` crossings exist.
///
/// A trajectory that reaches basin B, or runs for `trajectory_steps`, is
/// replaced by a fresh one from `initial`; trajectory `j` draws from stream
/// `(seed, ["flux", j])`. Only steps that start inside basin A count toward
/// the basin-A time.
pub fn collect_initial_crossings<D: Dynamics>(
    dynamics: &D,
    basins: &BasinSpec,
    initial: &ProcessState,
    seed: u64,
    target_count: usize,
    flux: &FluxConfig,
) -> Result<InitialCrossings> {
    basins.validate()?;
    let lambda = |s: &ProcessState| dynamics.order_parameter(s);
    if basins.classify_lambda(lambda(initial)) != Basin::A {
        return Err(Error::config(format!(
            "initial state (lambda = {}) is not in basin A",
            lambda(initial)
        )));
    }
    let dt = dynamics.dt();
    let mut states = Vec::with_capacity(target_count);
    let mut time_in_a = 0.0;
    let mut steps = 0u64;
    let mut trajectories = 0usize;

    'outer: while states.len() < target_count && steps < flux.budget_steps {
        let mut rng = rng::stream(seed, &[rng::label("flux"), trajectories as u64]);
        trajectories += 1;
        let mut state = initial.clone();
        let mut where_ = Basin::A;
        for _ in 0..flux.trajectory_steps {
            if steps >= flux.budget_steps {
                break 'outer;
            }
            let next = dynamics.step(&state, &mut rng)?;
            steps += 1;
            if where_ == Basin::A {
                time_in_a += dt;
            }
            let next_where = basins.classify_lambda(lambda(&next));
            if where_ == Basin::A && next_where != Basin::A {
                states.push(next.clone());
                if states.len() == target_count {
                    break 'outer;
                }
            }
            state = next;
            where_ = next_where;
            if where_ == Basin::B {
                continue 'outer;
            }
        }
    }

    if states.len() < target_count || time_in_a <= 0.0 {
        return Err(Error::InsufficientFlux {
            crossings: states.len(),
            wanted: target_count,
            steps,
        });
    }
    Ok(InitialCrossings {
        r0: states.len() as f64 / time_in_a,
        states,
        time_in_a,
        steps,
        trajectories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchOutcome {
    /// Crossed the next interface.
    Success,
    /// Fell back into basin A.
    Failure,
    /// Hit the step cap without resolving; counted as a failure.
    Timeout,
}

/// Result of growing `m_i` branches from one crossing.
#[derive(Debug, Clone)]
pub struct BranchGrowth {
    /// States at lambda_{i+1}, each tagged with its branch index.
    pub children: Vec<(usize, ProcessState)>,
    pub failures: usize,
    pub timeouts: usize,
}

impl BranchGrowth {
    pub fn successes(&self) -> usize {
        self.children.len()
    }
}

/// Runs one continuation from `start` until it reaches `target` (success)
/// or re-enters basin A past `lambda_0` (failure).
pub fn run_branch<D: Dynamics>(
    dynamics: &D,
    start: &ProcessState,
    lambda_0: f64,
    target: f64,
    direction: Direction,
    max_steps: u64,
    rng: &mut rng::StreamRng,
) -> Result<(BranchOutcome, ProcessState)> {
    let mut state = start.clone();
    for _ in 0..max_steps {
        state = dynamics.step(&state, rng)?;
        let l = dynamics.order_parameter(&state);
        if direction.reached(l, target) {
            return Ok((BranchOutcome::Success, state));
        }
        if direction.reached(lambda_0, l) {
            return Ok((BranchOutcome::Failure, state));
        }
    }
    Ok((BranchOutcome::Timeout, state))
}

/// Launches `m` independently seeded continuations from a crossing at
/// interface `i`. Branch `k` draws from stream `(stream_key, [k])`.
pub fn grow_branches<D: Dynamics>(
    dynamics: &D,
    start: &ProcessState,
    i: usize,
    m: usize,
    ladder: &InterfaceLadder,
    max_steps: u64,
    stream_key: u64,
) -> Result<BranchGrowth> {
    if i >= ladder.n() {
        return Err(Error::config(format!(
            "cannot grow branches from interface {i} of {}",
            ladder.n()
        )));
    }
    let target = ladder.lambda(i + 1);
    let mut growth = BranchGrowth {
        children: Vec::new(),
        failures: 0,
        timeouts: 0,
    };
    for k in 0..m {
        let mut rng = rng::stream(stream_key, &[k as u64]);
        let (outcome, end) = run_branch(
            dynamics,
            start,
            ladder.lambda(0),
            target,
            ladder.direction(),
            max_steps,
            &mut rng,
        )?;
        match outcome {
            BranchOutcome::Success => growth.children.push((k, end)),
            BranchOutcome::Failure => growth.failures += 1,
            BranchOutcome::Timeout => {
                growth.failures += 1;
                growth.timeouts += 1;
            }
        }
    }
    if growth.timeouts > 0 {
        warn!(
            "{} of {m} branches from interface {i} hit the {max_steps}-step cap",
            growth.timeouts
        );
    }
    Ok(growth)
}

/// Grows the full tree below one lambda_0 crossing. Frontier records at each
/// interface are expanded in parallel; children are appended in
/// (parent, branch index) order so ids do not depend on scheduling.
pub fn grow_tree<D: Dynamics>(
    dynamics: &D,
    root_state: ProcessState,
    ladder: &InterfaceLadder,
    config: &BranchConfig,
    root_key: u64,
    seed_index: usize,
    response_value: f64,
) -> Result<(CrossingForest, usize)> {
    let mut forest = CrossingForest {
        records: vec![CrossingRecord {
            id: 0,
            interface: 0,
            parent: None,
            children: Vec::new(),
            state: root_state,
            successes: 0,
            p_b: None,
            response_value,
            seed_index,
            stream_key: root_key,
        }],
        roots: vec![0],
        branches: config.branches.clone(),
    };
    let mut timeouts = 0;
    let mut frontier = vec![0usize];
    for i in 0..ladder.n() {
        let m = config.branches[i];
        let grown: Vec<Result<BranchGrowth>> = frontier
            .par_iter()
            .map(|&id| {
                let r = &forest.records[id];
                grow_branches(dynamics, &r.state, i, m, ladder, config.max_branch_steps, r.stream_key)
            })
            .collect();
        let mut next = Vec::new();
        for (&parent, growth) in frontier.iter().zip(grown) {
            let growth = growth?;
            timeouts += growth.timeouts;
            forest.records[parent].successes = growth.successes();
            let parent_key = forest.records[parent].stream_key;
            for (k, state) in growth.children {
                let id = forest.records.len();
                forest.records.push(CrossingRecord {
                    id,
                    interface: i + 1,
                    parent: Some(parent),
                    children: Vec::new(),
                    state,
                    successes: 0,
                    p_b: None,
                    response_value,
                    seed_index,
                    stream_key: derive_seed(parent_key, &[k as u64]),
                });
                forest.records[parent].children.push(id);
                next.push(id);
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok((forest, timeouts))
}

/// `N(lambda_n | lambda_0) / prod m_i` for the tree rooted at `root`.
pub fn transition_probability(forest: &CrossingForest, root: usize) -> f64 {
    let n = forest.n();
    let reached = forest
        .subtree(root)
        .into_iter()
        .filter(|&id| forest.records[id].interface == n)
        .count();
    reached as f64 / forest.branches.iter().map(|&m| m as f64).product::<f64>()
}

/// Fills `p_b` for every record by the backward recursion
/// `p_B(j, i) = sum over successful children p_B(k, i+1) / m_i`, with
/// `p_B = 1` at lambda_n and failed branches contributing zero.
///
/// The sweep carries the integer count of lambda_n descendants and divides
/// once by `prod_{l >= i} m_l`, which is algebraically the same recursion
/// and keeps the root value bit-identical to [`transition_probability`].
pub fn committer_probabilities(forest: &mut CrossingForest) {
    let n = forest.n();
    // tail[i] = prod_{l=i}^{n-1} m_l
    let mut tail = vec![1.0f64; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] * forest.branches[i] as f64;
    }
    let mut reached = vec![0u64; forest.records.len()];
    let mut order: Vec<usize> = (0..forest.records.len()).collect();
    order.sort_by_key(|&id| std::cmp::Reverse(forest.records[id].interface));
    for id in order {
        let r = &forest.records[id];
        reached[id] = if r.interface == n {
            1
        } else {
            r.children.iter().map(|&c| reached[c]).sum()
        };
    }
    for r in &mut forest.records {
        r.p_b = Some(reached[r.id] as f64 / tail[r.interface]);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfsSummary {
    pub response_action: String,
    pub response_value: f64,
    pub r0: f64,
    pub p_per_seed: Vec<f64>,
    pub p_mean: f64,
    pub r_mean: f64,
    pub crossings_per_interface: Vec<usize>,
    pub flux_steps: u64,
    pub time_in_a: f64,
    pub branch_timeouts: usize,
}

#[derive(Debug, Clone)]
pub struct FfsResult {
    pub summary: FfsSummary,
    pub forest: CrossingForest,
}

impl FfsResult {
    pub fn r0(&self) -> f64 {
        self.summary.r0
    }
    pub fn p_mean(&self) -> f64 {
        self.summary.p_mean
    }
    pub fn r_mean(&self) -> f64 {
        self.summary.r_mean
    }
}

/// Full pipeline for one response-action value: flux collection, tree growth
/// from each of `config.n_seeds` lambda_0 crossings, transition probability
/// and committer recursion.
#[allow(clippy::too_many_arguments)]
pub fn run_bgffs<D: Dynamics>(
    dynamics: &D,
    initial: &ProcessState,
    ladder: &InterfaceLadder,
    config: &BranchConfig,
    flux: &FluxConfig,
    master_seed: u64,
    response_action: (&str, f64),
) -> Result<FfsResult> {
    config.validate(ladder)?;
    let basins = ladder.basins();
    let flux_seed = derive_seed(master_seed, &[rng::label("initial-flux")]);
    let seeds = collect_initial_crossings(dynamics, &basins, initial, flux_seed, config.n_seeds, flux)?;

    let (name, value) = response_action;
    let trees: Vec<Result<(CrossingForest, usize)>> = seeds
        .states
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let key = derive_seed(master_seed, &[rng::label("tree"), j as u64]);
            grow_tree(dynamics, s.clone(), ladder, config, key, j, value)
        })
        .collect();
    let mut forests = Vec::with_capacity(trees.len());
    let mut timeouts = 0;
    for t in trees {
        let (f, to) = t?;
        timeouts += to;
        forests.push(f);
    }
    let mut forest = CrossingForest::concat(forests)?;
    committer_probabilities(&mut forest);

    let p_per_seed: Vec<f64> = forest
        .roots
        .iter()
        .map(|&r| transition_probability(&forest, r))
        .collect();
    let p_mean = p_per_seed.iter().sum::<f64>() / p_per_seed.len() as f64;
    let crossings_per_interface = forest.by_interface().iter().map(|g| g.len()).collect();
    Ok(FfsResult {
        summary: FfsSummary {
            response_action: name.to_string(),
            response_value: value,
            r0: seeds.r0,
            r_mean: seeds.r0 * p_mean,
            p_mean,
            p_per_seed,
            crossings_per_interface,
            flux_steps: seeds.steps,
            time_in_a: seeds.time_in_a,
            branch_timeouts: timeouts,
        },
        forest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{NoiseSpec, ProcessModel, Simulator, WalkParams};

    fn record(id: usize, interface: usize, parent: Option<usize>, children: Vec<usize>) -> CrossingRecord {
        CrossingRecord {
            id,
            interface,
            parent,
            successes: children.len(),
            children,
            state: ProcessState::new(0.0, vec![0.0]),
            p_b: None,
            response_value: 0.0,
            seed_index: 0,
            stream_key: 0,
        }
    }

    /// n = 2, m = [2, 2]; `leaves` lambda_2 children under the first
    /// lambda_1 crossing.
    fn two_level(leaves: usize) -> CrossingForest {
        let mut records = vec![
            record(0, 0, None, vec![1, 2]),
            record(1, 1, Some(0), vec![]),
            record(2, 1, Some(0), vec![]),
        ];
        for _ in 0..leaves {
            let id = records.len();
            records[1].children.push(id);
            records.push(record(id, 2, Some(1), vec![]));
        }
        records[1].successes = leaves;
        CrossingForest {
            records,
            roots: vec![0],
            branches: vec![2, 2],
        }
    }

    #[test]
    fn transition_probability_counts_leaves() {
        assert_eq!(transition_probability(&two_level(0), 0), 0.0);
        assert_eq!(transition_probability(&two_level(1), 0), 0.25);
        let mut all = two_level(2);
        // second lambda_1 crossing also reaches lambda_2 twice
        for _ in 0..2 {
            let id = all.records.len();
            all.records[2].children.push(id);
            all.records.push(record(id, 2, Some(2), vec![]));
        }
        assert_eq!(transition_probability(&all, 0), 1.0);
    }

    #[test]
    fn committer_recursion_matches_hand_values() {
        let mut f = two_level(1);
        committer_probabilities(&mut f);
        // lambda_{n-1} point with one of two children reaching B
        assert_eq!(f.records[1].p_b, Some(0.5));
        assert_eq!(f.records[2].p_b, Some(0.0));
        // (0.5 + 0) / 2
        assert_eq!(f.records[0].p_b, Some(0.25));
        assert_eq!(f.records[3].p_b, Some(1.0));
        assert_eq!(f.records[0].p_b, Some(transition_probability(&f, 0)));
    }

    #[test]
    fn ladder_validation() {
        assert!(InterfaceLadder::new(vec![0.0, 5.0, 5.0]).is_err());
        assert!(InterfaceLadder::new(vec![0.0]).is_err());
        assert!(InterfaceLadder::uniform(0.0, 20.0, 0).is_err());
        let l = InterfaceLadder::uniform(0.0, 20.0, 4).unwrap();
        assert_eq!(l.lambdas(), &[0.0, 5.0, 10.0, 15.0, 20.0]);
        let down = InterfaceLadder::uniform(840.0, 430.0, 5).unwrap();
        assert_eq!(down.direction(), Direction::Decreasing);
        assert_eq!(down.basins().classify_lambda(850.0), Basin::A);
    }

    fn walk_sim(p_up: f64) -> Simulator {
        Simulator::new(
            ProcessModel::RandomWalk(WalkParams {
                p_up,
                floor: -10,
                start: -5,
            }),
            NoiseSpec::silent(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn initial_flux_from_hand_counted_crossings() {
        // a walk that never leaves basin A within the budget
        let sim = walk_sim(0.01);
        let basins = BasinSpec::new(0.0, 20.0).unwrap();
        let flux = FluxConfig {
            trajectory_steps: 1000,
            budget_steps: 1000,
        };
        let init = ProcessState::new(0.0, vec![-10.0]);
        let err = collect_initial_crossings(&sim, &basins, &init, 1, 1, &flux);
        assert!(matches!(err, Err(Error::InsufficientFlux { crossings: 0, .. })));
    }

    #[test]
    fn initial_state_outside_basin_a_is_rejected() {
        let sim = walk_sim(0.45);
        let basins = BasinSpec::new(0.0, 20.0).unwrap();
        let init = ProcessState::new(0.0, vec![3.0]);
        assert!(collect_initial_crossings(&sim, &basins, &init, 1, 1, &FluxConfig::default()).is_err());
    }

    #[test]
    fn branch_counts_and_forest_invariants() {
        let sim = walk_sim(0.45);
        let ladder = InterfaceLadder::uniform(0.0, 20.0, 4).unwrap();
        let cfg = BranchConfig::uniform(5, 4, 6);
        let init = ProcessState::new(0.0, vec![-5.0]);
        let res = run_bgffs(&sim, &init, &ladder, &cfg, &FluxConfig::default(), 9, ("p_up", 0.45)).unwrap();
        let f = &res.forest;
        for r in &f.records {
            assert_eq!(r.id, f.records.iter().position(|x| x.id == r.id).unwrap());
            if r.interface < 4 {
                assert!(r.children.len() <= cfg.branches[r.interface]);
                assert_eq!(r.children.len(), r.successes);
            }
            for &c in &r.children {
                assert_eq!(f.records[c].parent, Some(r.id));
                assert_eq!(f.records[c].interface, r.interface + 1);
            }
            let p = r.p_b.unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert_eq!(r.response_value, 0.45);
        }
        assert_eq!(f.roots.len(), 6);
        for (k, &root) in f.roots.iter().enumerate() {
            assert_eq!(f.records[root].p_b, Some(res.summary.p_per_seed[k]));
        }
        assert_eq!(res.r_mean(), res.r0() * res.p_mean());
    }

    #[test]
    fn mean_of_one_seed_is_that_seed() {
        let sim = walk_sim(0.45);
        let ladder = InterfaceLadder::uniform(0.0, 8.0, 2).unwrap();
        let cfg = BranchConfig::uniform(10, 2, 1);
        let init = ProcessState::new(0.0, vec![-5.0]);
        let res = run_bgffs(&sim, &init, &ladder, &cfg, &FluxConfig::default(), 2, ("p_up", 0.45)).unwrap();
        assert_eq!(res.summary.p_per_seed.len(), 1);
        assert_eq!(res.p_mean(), res.summary.p_per_seed[0]);
    }

    #[test]
    fn forest_is_independent_of_thread_count() {
        let sim = walk_sim(0.45);
        let ladder = InterfaceLadder::uniform(0.0, 20.0, 4).unwrap();
        let cfg = BranchConfig::uniform(8, 4, 5);
        let init = ProcessState::new(0.0, vec![-5.0]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_bgffs(&sim, &init, &ladder, &cfg, &FluxConfig::default(), 4, ("p_up", 0.45)).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.forest, b.forest);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn forest_csv_layout() {
        let mut f = two_level(1);
        committer_probabilities(&mut f);
        let mut buf = Vec::new();
        f.write_csv(&mut buf, &["x".to_string()], "p_up").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "interface_index,crossing_id,parent_id,p_B,x,response_action,response_value"
        );
        assert_eq!(lines.next().unwrap(), "0,0,,0.25,0,p_up,0");
    }
}
