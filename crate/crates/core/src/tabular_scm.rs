//! Exact finite-domain causal oracle.
//!
//! A [`TabularScmSpec`] fixes conditional probability tables for a
//! discrete control process with a hidden confounder chain: the confounder
//! influences each action alongside the observed state, persists through
//! `p_u_next`, and reaches future states only through executed actions.
//! Everything here is computed by full enumeration of the joint
//! distribution, so the module can serve as ground truth for the learned
//! stack: observational conditionals, truncated-factorization
//! interventions, the backdoor-adjusted action distribution, and exact
//! entropy-regularized policy iteration on confounder-free instances.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Conditional table rows must sum to one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Enumerated joints must carry total mass one within this tolerance.
pub const MASS_TOL: f64 = 1e-10;
/// Capacity guard on the number of joint atoms.
pub const MAX_JOINT_ATOMS: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("horizon {horizon} needs {atoms} joint atoms, over the {limit} capacity guard")]
    Capacity {
        horizon: usize,
        atoms: u128,
        limit: usize,
    },
    #[error("conditioning event has zero probability: {0}")]
    ZeroProbabilityConditioning(String),
    #[error("backdoor adjustment needs t >= 1 (a previous step must exist)")]
    NoPast,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Explicit conditional probability tables for the confounded process.
///
/// Indexing conventions: `p_u_next[u][u']`, `p_a[s][u][a]`,
/// `p_s_next[s][a][s']`, `reward[s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularScmSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_confounders: usize,
    pub p_s0: Vec<f64>,
    pub p_u0: Vec<f64>,
    pub p_u_next: Vec<Vec<f64>>,
    pub p_a: Vec<Vec<Vec<f64>>>,
    pub p_s_next: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl TabularScmSpec {
    /// Checks shapes, probability bounds, row normalization, and gamma.
    pub fn validate(&self) -> Result<(), ScmError> {
        if self.n_states == 0 || self.n_actions == 0 || self.n_confounders == 0 {
            return Err(ScmError::InvalidSpec(
                "state, action, and confounder domains must be nonempty".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(ScmError::InvalidSpec(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        check_dist("p_s0", &self.p_s0, self.n_states)?;
        check_dist("p_u0", &self.p_u0, self.n_confounders)?;
        check_table_2d("p_u_next", &self.p_u_next, self.n_confounders, self.n_confounders)?;
        if self.p_a.len() != self.n_states {
            return Err(ScmError::InvalidSpec("p_a must have one block per state".into()));
        }
        for (s, block) in self.p_a.iter().enumerate() {
            check_table_2d(&format!("p_a[{s}]"), block, self.n_confounders, self.n_actions)?;
        }
        if self.p_s_next.len() != self.n_states {
            return Err(ScmError::InvalidSpec("p_s_next must have one block per state".into()));
        }
        for (s, block) in self.p_s_next.iter().enumerate() {
            check_table_2d(&format!("p_s_next[{s}]"), block, self.n_actions, self.n_states)?;
        }
        if self.reward.len() != self.n_states
            || self.reward.iter().any(|b| {
                b.len() != self.n_actions
                    || b.iter().any(|row| row.len() != self.n_states)
            })
        {
            return Err(ScmError::InvalidSpec(
                "reward must be shaped [n_states][n_actions][n_states]".into(),
            ));
        }
        if self
            .reward
            .iter()
            .flatten()
            .flatten()
            .any(|r| !r.is_finite())
        {
            return Err(ScmError::InvalidSpec("rewards must be finite".into()));
        }
        Ok(())
    }

    /// Expected immediate reward `E[r | s, a]`.
    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        self.p_s_next[s][a]
            .iter()
            .zip(&self.reward[s][a])
            .map(|(p, r)| p * r)
            .sum()
    }
}

fn check_dist(name: &str, row: &[f64], len: usize) -> Result<(), ScmError> {
    if row.len() != len {
        return Err(ScmError::InvalidSpec(format!(
            "{name} has length {}, expected {len}",
            row.len()
        )));
    }
    if row.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
        return Err(ScmError::InvalidSpec(format!(
            "{name} has entries outside [0, 1]"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(ScmError::InvalidSpec(format!(
            "{name} sums to {sum}, outside 1 +/- {ROW_SUM_TOL}"
        )));
    }
    Ok(())
}

fn check_table_2d(name: &str, table: &[Vec<f64>], rows: usize, cols: usize) -> Result<(), ScmError> {
    if table.len() != rows {
        return Err(ScmError::InvalidSpec(format!(
            "{name} has {} rows, expected {rows}",
            table.len()
        )));
    }
    for (i, row) in table.iter().enumerate() {
        check_dist(&format!("{name}[{i}]"), row, cols)?;
    }
    Ok(())
}

/// A time-indexed variable of the unrolled process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    State(usize),
    Confounder(usize),
    Action(usize),
}

/// One full assignment of the unrolled variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomAssignment {
    pub states: Vec<usize>,
    pub confounders: Vec<usize>,
    pub actions: Vec<usize>,
}

/// Exact joint distribution over `(s_0, u_0, a_0, ..., s_{h-1}, u_{h-1},
/// a_{h-1}, s_h)` computed by enumeration.
#[derive(Debug, Clone)]
pub struct JointTrace {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    n_confounders: usize,
    mass: Vec<f64>,
}

/// Optional intervention applied during enumeration: clamp `s_t = s` and
/// delete the mechanism that would have generated `s_t`.
#[derive(Debug, Clone, Copy)]
enum Clamp {
    None,
    State { t: usize, s: usize },
}

impl JointTrace {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_atoms(&self) -> usize {
        self.mass.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn atom_mass(&self, idx: usize) -> f64 {
        self.mass[idx]
    }

    /// Number of unrolled variables: `3h + 1`.
    fn n_vars(&self) -> usize {
        3 * self.horizon + 1
    }

    /// Radix of variable position `i` in the flat index.
    fn radix(&self, i: usize) -> usize {
        if i == self.n_vars() - 1 {
            self.n_states
        } else {
            match i % 3 {
                0 => self.n_states,
                1 => self.n_confounders,
                _ => self.n_actions,
            }
        }
    }

    fn var_position(&self, var: VarRef) -> usize {
        match var {
            VarRef::State(t) => {
                assert!(t <= self.horizon, "state index beyond horizon");
                3 * t
            }
            VarRef::Confounder(t) => {
                assert!(t < self.horizon, "confounder index beyond horizon");
                3 * t + 1
            }
            VarRef::Action(t) => {
                assert!(t < self.horizon, "action index beyond horizon");
                3 * t + 2
            }
        }
    }

    /// Stride of variable position `i` (variables are laid out row-major,
    /// earliest variable varying slowest).
    fn stride(&self, i: usize) -> usize {
        (i + 1..self.n_vars()).map(|j| self.radix(j)).product()
    }

    /// Decodes a flat atom index into a full assignment.
    pub fn decode(&self, idx: usize) -> AtomAssignment {
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut confounders = Vec::with_capacity(self.horizon);
        let mut actions = Vec::with_capacity(self.horizon);
        let mut rem = idx;
        for i in (0..self.n_vars()).rev() {
            let r = self.radix(i);
            let digit = rem % r;
            rem /= r;
            if i == self.n_vars() - 1 {
                states.push(digit);
            } else {
                match i % 3 {
                    0 => states.push(digit),
                    1 => confounders.push(digit),
                    _ => actions.push(digit),
                }
            }
        }
        states.reverse();
        confounders.reverse();
        actions.reverse();
        AtomAssignment {
            states,
            confounders,
            actions,
        }
    }

    /// Total probability of all atoms consistent with the constraints.
    pub fn prob(&self, constraints: &[(VarRef, usize)]) -> f64 {
        let resolved: Vec<(usize, usize, usize)> = constraints
            .iter()
            .map(|&(var, value)| {
                let pos = self.var_position(var);
                (self.stride(pos), self.radix(pos), value)
            })
            .collect();
        let mut total = 0.0;
        'atoms: for (idx, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for &(stride, radix, value) in &resolved {
                if (idx / stride) % radix != value {
                    continue 'atoms;
                }
            }
            total += m;
        }
        total
    }
}

fn atom_count(spec: &TabularScmSpec, horizon: usize) -> u128 {
    let per_step = (spec.n_states * spec.n_confounders * spec.n_actions) as u128;
    per_step.pow(horizon as u32) * spec.n_states as u128
}

fn enumerate_with_clamp(
    spec: &TabularScmSpec,
    horizon: usize,
    clamp: Clamp,
) -> Result<JointTrace, ScmError> {
    spec.validate()?;
    if horizon == 0 {
        return Err(ScmError::InvalidParameter(
            "enumeration horizon must be at least 1".into(),
        ));
    }
    let atoms = atom_count(spec, horizon);
    if atoms > MAX_JOINT_ATOMS as u128 {
        return Err(ScmError::Capacity {
            horizon,
            atoms,
            limit: MAX_JOINT_ATOMS,
        });
    }
    let n_atoms = atoms as usize;
    let mut trace = JointTrace {
        horizon,
        n_states: spec.n_states,
        n_actions: spec.n_actions,
        n_confounders: spec.n_confounders,
        mass: vec![0.0; n_atoms],
    };
    for idx in 0..n_atoms {
        let a = trace.decode(idx);
        let mut p = initial_state_factor(spec, clamp, a.states[0])
            * spec.p_u0[a.confounders[0]]
            * spec.p_a[a.states[0]][a.confounders[0]][a.actions[0]];
        for t in 1..horizon {
            p *= spec.p_u_next[a.confounders[t - 1]][a.confounders[t]]
                * transition_factor(spec, clamp, t, a.states[t - 1], a.actions[t - 1], a.states[t])
                * spec.p_a[a.states[t]][a.confounders[t]][a.actions[t]];
        }
        p *= transition_factor(
            spec,
            clamp,
            horizon,
            a.states[horizon - 1],
            a.actions[horizon - 1],
            a.states[horizon],
        );
        trace.mass[idx] = p;
    }
    Ok(trace)
}

fn initial_state_factor(spec: &TabularScmSpec, clamp: Clamp, s0: usize) -> f64 {
    match clamp {
        Clamp::State { t: 0, s } => {
            if s0 == s {
                1.0
            } else {
                0.0
            }
        }
        _ => spec.p_s0[s0],
    }
}

fn transition_factor(
    spec: &TabularScmSpec,
    clamp: Clamp,
    t: usize,
    s_prev: usize,
    a_prev: usize,
    s_t: usize,
) -> f64 {
    match clamp {
        Clamp::State { t: tc, s } if tc == t => {
            if s_t == s {
                1.0
            } else {
                0.0
            }
        }
        _ => spec.p_s_next[s_prev][a_prev][s_t],
    }
}

/// Exact joint distribution over all variables up to `horizon`.
pub fn enumerate_joint(spec: &TabularScmSpec, horizon: usize) -> Result<JointTrace, ScmError> {
    enumerate_with_clamp(spec, horizon, Clamp::None)
}

fn check_query(spec: &TabularScmSpec, t: usize, s: usize) -> Result<(), ScmError> {
    if s >= spec.n_states {
        return Err(ScmError::InvalidParameter(format!(
            "state {s} outside domain of size {}",
            spec.n_states
        )));
    }
    let _ = t;
    Ok(())
}

/// Exact observational conditional `p(a_t | s_t = s)`: the confounded
/// distribution a conventional agent would fit from logged data.
pub fn observational_policy(
    spec: &TabularScmSpec,
    t: usize,
    s: usize,
) -> Result<Vec<f64>, ScmError> {
    check_query(spec, t, s)?;
    let trace = enumerate_joint(spec, t + 1)?;
    let mut numer = vec![0.0; spec.n_actions];
    for (a, slot) in numer.iter_mut().enumerate() {
        *slot = trace.prob(&[(VarRef::State(t), s), (VarRef::Action(t), a)]);
    }
    let denom: f64 = numer.iter().sum();
    if denom <= 0.0 {
        return Err(ScmError::ZeroProbabilityConditioning(format!(
            "p(s_{t} = {s}) = 0"
        )));
    }
    Ok(numer.iter().map(|x| x / denom).collect())
}

/// Exact interventional distribution `p(a_t | do(s_t = s))` by truncated
/// factorization: the mechanism generating `s_t` is deleted and the value
/// clamped, so no conditioning error can occur.
pub fn interventional_policy_exact(
    spec: &TabularScmSpec,
    t: usize,
    s: usize,
) -> Result<Vec<f64>, ScmError> {
    check_query(spec, t, s)?;
    let trace = enumerate_with_clamp(spec, t + 1, Clamp::State { t, s })?;
    let mut numer = vec![0.0; spec.n_actions];
    for (a, slot) in numer.iter_mut().enumerate() {
        *slot = trace.prob(&[(VarRef::Action(t), a)]);
    }
    let denom: f64 = numer.iter().sum();
    Ok(numer.iter().map(|x| x / denom).collect())
}

/// Backdoor-adjusted action distribution at `(t, s)`:
/// `sum over (s_{t-1}, a_{t-1}) of p(a_t | s_t = s, a_{t-1}, s_{t-1}) *
/// p(a_{t-1}, s_{t-1})`.
///
/// Terms where the conditioning event `(s_t = s, a_{t-1}, s_{t-1})` has
/// zero probability use a uniform conditional; the term is mathematically
/// unconstrained there and uniform keeps the result a distribution.
pub fn backdoor_adjusted_policy(
    spec: &TabularScmSpec,
    t: usize,
    s: usize,
) -> Result<Vec<f64>, ScmError> {
    check_query(spec, t, s)?;
    if t == 0 {
        return Err(ScmError::NoPast);
    }
    let trace = enumerate_joint(spec, t + 1)?;
    let uniform = 1.0 / spec.n_actions as f64;
    let mut acc = vec![0.0; spec.n_actions];
    let mut weight_total = 0.0;
    for s_prev in 0..spec.n_states {
        for a_prev in 0..spec.n_actions {
            let past = [
                (VarRef::State(t - 1), s_prev),
                (VarRef::Action(t - 1), a_prev),
            ];
            let weight = trace.prob(&past);
            if weight == 0.0 {
                continue;
            }
            weight_total += weight;
            let joint_s = trace.prob(&[past[0], past[1], (VarRef::State(t), s)]);
            if joint_s == 0.0 {
                for slot in acc.iter_mut() {
                    *slot += weight * uniform;
                }
            } else {
                for (a, slot) in acc.iter_mut().enumerate() {
                    let joint_sa =
                        trace.prob(&[past[0], past[1], (VarRef::State(t), s), (VarRef::Action(t), a)]);
                    *slot += weight * joint_sa / joint_s;
                }
            }
        }
    }
    if weight_total <= 0.0 {
        return Err(ScmError::ZeroProbabilityConditioning(
            "past marginal carries no mass".into(),
        ));
    }
    Ok(acc.iter().map(|x| x / weight_total).collect())
}

/// Exact soft policy iteration on a confounder-free instance.
#[derive(Debug, Clone)]
pub struct SoftPolicyIterationResult {
    /// Entropy-regularized objective of every iterate, uniform-state
    /// weighted; length `iters + 1` (the initial uniform policy included).
    pub j_values: Vec<f64>,
    /// Policy iterates, `policies[k][s][a]`; same length as `j_values`.
    pub policies: Vec<Vec<Vec<f64>>>,
}

/// Alternates exact soft policy evaluation (a dense linear solve of the
/// entropy-regularized Bellman system) with the Boltzmann improvement
/// `pi_new proportional to exp(Q / alpha)`, starting from uniform.
pub fn soft_policy_iteration(
    mdp: &TabularScmSpec,
    alpha: f64,
    iters: usize,
) -> Result<SoftPolicyIterationResult, ScmError> {
    mdp.validate()?;
    if mdp.n_confounders != 1 {
        return Err(ScmError::InvalidSpec(
            "soft policy iteration requires a confounder-free instance (|U| = 1)".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(ScmError::InvalidParameter(format!(
            "temperature must be positive, got {alpha}"
        )));
    }
    if iters == 0 {
        return Err(ScmError::InvalidParameter("iters must be at least 1".into()));
    }
    let n_s = mdp.n_states;
    let n_a = mdp.n_actions;
    let uniform = vec![vec![1.0 / n_a as f64; n_a]; n_s];

    let mut policies = vec![uniform];
    let mut j_values = Vec::with_capacity(iters + 1);
    for k in 0..=iters {
        let pi = policies[k].clone();
        let q = soft_policy_evaluation(mdp, &pi, alpha)?;
        let mut j = 0.0;
        for s in 0..n_s {
            for a in 0..n_a {
                j += pi[s][a] * (q[s][a] - alpha * pi[s][a].ln());
            }
        }
        j /= n_s as f64;
        j_values.push(j);
        if k < iters {
            policies.push(boltzmann_policy(&q, alpha));
        }
    }
    Ok(SoftPolicyIterationResult { j_values, policies })
}

/// Exact soft Q of a fixed policy: solves `(I - gamma * P_pi) V = b_pi`
/// and reads `Q(s, a) = r(s, a) + gamma * sum_s' T V(s')`.
fn soft_policy_evaluation(
    mdp: &TabularScmSpec,
    pi: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<Vec<f64>>, ScmError> {
    let n_s = mdp.n_states;
    let n_a = mdp.n_actions;
    let mut a_mat = vec![vec![0.0; n_s]; n_s];
    let mut b = vec![0.0; n_s];
    for s in 0..n_s {
        a_mat[s][s] = 1.0;
        for a in 0..n_a {
            let p_sa = pi[s][a];
            if p_sa > 0.0 {
                b[s] += p_sa * (mdp.mean_reward(s, a) - alpha * p_sa.ln());
            }
            for s_next in 0..n_s {
                a_mat[s][s_next] -= mdp.gamma * p_sa * mdp.p_s_next[s][a][s_next];
            }
        }
    }
    let v = solve_dense(a_mat, b).ok_or_else(|| {
        ScmError::InvalidSpec("soft Bellman system is singular".into())
    })?;
    let mut q = vec![vec![0.0; n_a]; n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            let cont: f64 = (0..n_s).map(|s2| mdp.p_s_next[s][a][s2] * v[s2]).sum();
            q[s][a] = mdp.mean_reward(s, a) + mdp.gamma * cont;
        }
    }
    Ok(q)
}

fn boltzmann_policy(q: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    q.iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|q_sa| ((q_sa - m) / alpha).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.iter().map(|e| e / z).collect()
        })
        .collect()
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Total variation distance between two finite distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a domain");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Random fully supported spec, used by the property corpora and the
/// `oracle-check` command. Row entries are uniform on [0.05, 1.05] before
/// normalization, so every conditional has mass everywhere.
pub fn random_spec(
    rng: &mut ChaCha12Rng,
    n_states: usize,
    n_actions: usize,
    n_confounders: usize,
) -> TabularScmSpec {
    let mut dist = |n: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.05)).collect();
        let z: f64 = raw.iter().sum();
        let mut row: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let fix: f64 = 1.0 - row.iter().take(n - 1).sum::<f64>();
        row[n - 1] = fix;
        row
    };
    let p_s0 = dist(n_states);
    let p_u0 = dist(n_confounders);
    let p_u_next = (0..n_confounders).map(|_| dist(n_confounders)).collect();
    let p_a = (0..n_states)
        .map(|_| (0..n_confounders).map(|_| dist(n_actions)).collect())
        .collect();
    let p_s_next: Vec<Vec<Vec<f64>>> = (0..n_states)
        .map(|_| (0..n_actions).map(|_| dist(n_states)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| (0..n_states).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    TabularScmSpec {
        n_states,
        n_actions,
        n_confounders,
        p_s0,
        p_u0,
        p_u_next,
        p_a,
        p_s_next,
        reward,
        gamma: 0.9,
    }
}

/// Random confounder-free MDP for the policy-iteration corpus.
pub fn random_mdp(
    rng: &mut ChaCha12Rng,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
) -> TabularScmSpec {
    let mut spec = random_spec(rng, n_states, n_actions, 1);
    spec.gamma = gamma;
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn point_mass_spec() -> TabularScmSpec {
        // Everything deterministic: s0 = 0, u0 = 0, a = s (mod 2), s' = a.
        TabularScmSpec {
            n_states: 2,
            n_actions: 2,
            n_confounders: 2,
            p_s0: vec![1.0, 0.0],
            p_u0: vec![1.0, 0.0],
            p_u_next: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            p_a: vec![
                vec![vec![1.0, 0.0], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            p_s_next: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ],
            reward: vec![
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            gamma: 0.9,
        }
    }

    /// Independent brute-force enumeration: walks every assignment with
    /// explicit nested recursion over the factorization, no shared
    /// indexing code with `JointTrace`.
    fn brute_force_joint(spec: &TabularScmSpec, horizon: usize) -> Vec<(AtomAssignment, f64)> {
        let mut out = Vec::new();
        let mut states = vec![0usize; horizon + 1];
        let mut confs = vec![0usize; horizon];
        let mut acts = vec![0usize; horizon];
        walk(spec, horizon, 0, &mut states, &mut confs, &mut acts, &mut out);
        return out;

        #[allow(clippy::too_many_arguments)]
        fn walk(
            spec: &TabularScmSpec,
            horizon: usize,
            t: usize,
            states: &mut Vec<usize>,
            confs: &mut Vec<usize>,
            acts: &mut Vec<usize>,
            out: &mut Vec<(AtomAssignment, f64)>,
        ) {
            if t == horizon {
                for s_last in 0..spec.n_states {
                    states[horizon] = s_last;
                    let mut p = spec.p_s0[states[0]] * spec.p_u0[confs[0]];
                    for k in 0..horizon {
                        if k > 0 {
                            p *= spec.p_u_next[confs[k - 1]][confs[k]]
                                * spec.p_s_next[states[k - 1]][acts[k - 1]][states[k]];
                        }
                        p *= spec.p_a[states[k]][confs[k]][acts[k]];
                    }
                    p *= spec.p_s_next[states[horizon - 1]][acts[horizon - 1]][states[horizon]];
                    out.push((
                        AtomAssignment {
                            states: states.clone(),
                            confounders: confs.clone(),
                            actions: acts.clone(),
                        },
                        p,
                    ));
                }
                return;
            }
            for s in 0..spec.n_states {
                for u in 0..spec.n_confounders {
                    for a in 0..spec.n_actions {
                        states[t] = s;
                        confs[t] = u;
                        acts[t] = a;
                        walk(spec, horizon, t + 1, states, confs, acts, out);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_spec_yields_single_point_mass() {
        let spec = point_mass_spec();
        let trace = enumerate_joint(&spec, 2).unwrap();
        let mut support = 0;
        for idx in 0..trace.n_atoms() {
            if trace.atom_mass(idx) > 0.0 {
                support += 1;
                assert!((trace.atom_mass(idx) - 1.0).abs() < 1e-15);
            }
        }
        assert_eq!(support, 1);
    }

    #[test]
    fn identity_confounder_transition_keeps_u_constant() {
        let mut rng = stream(1, "scm-identity");
        let mut spec = random_spec(&mut rng, 2, 2, 2);
        spec.p_u_next = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let trace = enumerate_joint(&spec, 2).unwrap();
        let same = trace.prob(&[(VarRef::Confounder(0), 0), (VarRef::Confounder(1), 0)])
            + trace.prob(&[(VarRef::Confounder(0), 1), (VarRef::Confounder(1), 1)]);
        assert!((same - 1.0).abs() < MASS_TOL);
    }

    #[test]
    fn joint_matches_independent_brute_force_enumeration() {
        let mut rng = stream(2, "scm-brute");
        let spec = random_spec(&mut rng, 2, 2, 2);
        let trace = enumerate_joint(&spec, 3).unwrap();
        let reference = brute_force_joint(&spec, 3);
        assert_eq!(trace.n_atoms(), reference.len());
        assert!((trace.total_mass() - 1.0).abs() < MASS_TOL);
        // The brute-force walker emits atoms in the same lexicographic
        // order only by coincidence of loop nesting, so match by content.
        for (assignment, p_ref) in &reference {
            let mut constraints = Vec::new();
            for (t, &s) in assignment.states.iter().enumerate() {
                constraints.push((VarRef::State(t), s));
            }
            for (t, &u) in assignment.confounders.iter().enumerate() {
                constraints.push((VarRef::Confounder(t), u));
            }
            for (t, &a) in assignment.actions.iter().enumerate() {
                constraints.push((VarRef::Action(t), a));
            }
            let p = trace.prob(&constraints);
            assert!(
                (p - p_ref).abs() < 1e-14,
                "atom {assignment:?}: {p} vs {p_ref}"
            );
        }
    }

    #[test]
    fn capacity_guard_rejects_oversized_enumerations() {
        let mut rng = stream(3, "scm-capacity");
        let spec = random_spec(&mut rng, 3, 3, 3);
        let err = enumerate_joint(&spec, 16).unwrap_err();
        assert!(matches!(err, ScmError::Capacity { .. }), "{err}");
    }

    #[test]
    fn observational_policy_matches_bayes_rule_recomputation() {
        let mut rng = stream(4, "scm-bayes");
        let spec = random_spec(&mut rng, 2, 2, 2);
        let got = observational_policy(&spec, 1, 1).unwrap();

        // Hand Bayes computation over the brute-force joint at horizon 2.
        let reference = brute_force_joint(&spec, 2);
        let mut numer = vec![0.0; 2];
        let mut denom = 0.0;
        for (assignment, p) in &reference {
            if assignment.states[1] == 1 {
                denom += p;
                numer[assignment.actions[1]] += p;
            }
        }
        for a in 0..2 {
            assert!((got[a] - numer[a] / denom).abs() < 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < MASS_TOL);
    }

    #[test]
    fn degenerate_confounder_reduces_observational_to_table_row() {
        let mut rng = stream(5, "scm-degenerate");
        let spec = random_spec(&mut rng, 3, 2, 1);
        let got = observational_policy(&spec, 0, 2).unwrap();
        for a in 0..2 {
            assert!((got[a] - spec.p_a[2][0][a]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_probability_conditioning_is_an_error() {
        let mut spec = point_mass_spec();
        spec.p_s0 = vec![1.0, 0.0];
        let err = observational_policy(&spec, 0, 1).unwrap_err();
        assert!(matches!(err, ScmError::ZeroProbabilityConditioning(_)));
    }

    #[test]
    fn interventional_equals_observational_without_confounders() {
        let mut rng = stream(6, "scm-lemma2");
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 3, 3, 1);
            for t in 0..2 {
                for s in 0..3 {
                    let obs = observational_policy(&spec, t, s).unwrap();
                    let int = interventional_policy_exact(&spec, t, s).unwrap();
                    for a in 0..3 {
                        assert!((obs[a] - int[a]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn strong_confounding_separates_observational_from_interventional() {
        let spec: TabularScmSpec = serde_json::from_str(include_str!(
            "../tests/fixtures/confounded_2x2x2.json"
        ))
        .unwrap();
        spec.validate().unwrap();
        let obs = observational_policy(&spec, 1, 1).unwrap();
        let int = interventional_policy_exact(&spec, 1, 1).unwrap();
        let tv = total_variation(&obs, &int);
        assert!(tv > 0.1, "expected confounding, tv = {tv}");
    }

    #[test]
    fn backdoor_equals_interventional_on_supported_specs() {
        let mut rng = stream(7, "scm-backdoor");
        for _ in 0..25 {
            let spec = random_spec(&mut rng, 2, 2, 2);
            for s in 0..2 {
                let bd = backdoor_adjusted_policy(&spec, 1, s).unwrap();
                let int = interventional_policy_exact(&spec, 1, s).unwrap();
                assert!(total_variation(&bd, &int) < 1e-9);
            }
        }
    }

    #[test]
    fn backdoor_reduces_to_single_conditional_under_point_mass_past() {
        // Deterministic past: (s_0, a_0) is a point mass, so the adjustment
        // collapses to p(a_1 | s_1, a_0, s_0) at that single past.
        let spec = point_mass_spec();
        let trace = enumerate_joint(&spec, 2).unwrap();
        let bd = backdoor_adjusted_policy(&spec, 1, 0).unwrap();
        // The deterministic chain gives s_0 = 0, a_0 = 0, s_1 = 0, a_1 = 0.
        let denom = trace.prob(&[
            (VarRef::State(0), 0),
            (VarRef::Action(0), 0),
            (VarRef::State(1), 0),
        ]);
        assert!(denom > 0.0);
        for a in 0..2 {
            let joint = trace.prob(&[
                (VarRef::State(0), 0),
                (VarRef::Action(0), 0),
                (VarRef::State(1), 0),
                (VarRef::Action(1), a),
            ]);
            assert!((bd[a] - joint / denom).abs() < 1e-12);
        }
    }

    #[test]
    fn backdoor_uses_uniform_convention_on_unreachable_states() {
        // Transitions always land in state 0, so conditioning on s_1 = 1 is
        // impossible for every past: the adjustment must fall back to the
        // uniform convention for each term.
        let mut spec = point_mass_spec();
        spec.p_s_next = vec![
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        ];
        let bd = backdoor_adjusted_policy(&spec, 1, 1).unwrap();
        for a in 0..2 {
            assert!((bd[a] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn backdoor_requires_a_previous_step() {
        let spec = point_mass_spec();
        assert!(matches!(
            backdoor_adjusted_policy(&spec, 0, 0).unwrap_err(),
            ScmError::NoPast
        ));
    }

    #[test]
    fn soft_policy_iteration_improves_from_uniform() {
        let mut rng = stream(8, "scm-lemma1-single");
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let result = soft_policy_iteration(&mdp, 0.5, 1).unwrap();
        assert_eq!(result.j_values.len(), 2);
        assert!(result.j_values[1] >= result.j_values[0] - 1e-9);
    }

    #[test]
    fn soft_policy_iteration_converges_monotonically() {
        let mut rng = stream(9, "scm-lemma1-converge");
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let result = soft_policy_iteration(&mdp, 0.5, 20).unwrap();
        for w in result.j_values.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "J decreased: {} -> {}", w[0], w[1]);
        }
        let last = result.j_values[result.j_values.len() - 1];
        let prev = result.j_values[result.j_values.len() - 2];
        assert!((last - prev).abs() < 1e-8, "not converged: {prev} vs {last}");
    }

    #[test]
    fn high_temperature_fixed_point_is_nearly_uniform() {
        let mut rng = stream(10, "scm-high-alpha");
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let result = soft_policy_iteration(&mdp, 1e3, 10).unwrap();
        let last = result.policies.last().unwrap();
        let uniform = vec![1.0 / 3.0; 3];
        for row in last {
            assert!(total_variation(row, &uniform) < 0.01);
        }
    }

    #[test]
    fn soft_policy_iteration_rejects_bad_parameters() {
        let mut rng = stream(11, "scm-params");
        let mdp = random_mdp(&mut rng, 3, 2, 0.9);
        assert!(matches!(
            soft_policy_iteration(&mdp, 0.0, 5).unwrap_err(),
            ScmError::InvalidParameter(_)
        ));
        let confounded = random_spec(&mut rng, 2, 2, 2);
        assert!(matches!(
            soft_policy_iteration(&confounded, 0.5, 5).unwrap_err(),
            ScmError::InvalidSpec(_)
        ));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let mut rng = stream(12, "scm-serde");
        let spec = random_spec(&mut rng, 2, 3, 2);
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: TabularScmSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn validation_rejects_unnormalized_rows_and_bad_gamma() {
        let mut spec = point_mass_spec();
        spec.p_s0 = vec![0.6, 0.6];
        assert!(matches!(spec.validate(), Err(ScmError::InvalidSpec(_))));
        let mut spec = point_mass_spec();
        spec.gamma = 1.0;
        assert!(matches!(spec.validate(), Err(ScmError::InvalidSpec(_))));
    }

    #[test]
    fn returned_distributions_are_normalized() {
        let mut rng = stream(13, "scm-norm");
        for _ in 0..10 {
            let spec = random_spec(&mut rng, 3, 3, 2);
            for s in 0..3 {
                let obs = observational_policy(&spec, 1, s).unwrap();
                let int = interventional_policy_exact(&spec, 1, s).unwrap();
                let bd = backdoor_adjusted_policy(&spec, 1, s).unwrap();
                for dist in [&obs, &int, &bd] {
                    assert!((dist.iter().sum::<f64>() - 1.0).abs() < MASS_TOL);
                }
            }
        }
    }
}
