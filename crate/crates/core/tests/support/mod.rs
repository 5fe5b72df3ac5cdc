//! Independent oracles shared by the integration and acceptance tests. Each
//! check returns a description of the first mismatch instead of panicking so
//! the acceptance target can report per-criterion results.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use replaylab::envs::{value_iteration, Environment, TabularModel};
use replaylab::experiments::stats::{
    bootstrap_distribution, confidence_interval, mean_std, percentile, percentile_summary,
};
use replaylab::experiments::ScoreTable;
use replaylab::learner::{
    c51_loss_and_grad, c51_project, td_loss_and_grad, ApproximatorKind, Architecture, CategoricalSupport,
    Head, Learner, QFunction, StateAction,
};
use replaylab::nstep::{assemble, nstep_target, TargetSpec};
use replaylab::optim::{Optimizer, OptimizerConfig};
use replaylab::replay::{Observation, ReplayBuffer, Transition};
use replaylab::sampler::SumTree;
use replaylab::schedule::{ratio_from, ReplayControl, ReplayRatio};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn transition(state: f64, reward: f64, episode: u64, terminal: bool, truncated: bool) -> Transition {
    Transition {
        state: Observation::new(vec![state]),
        action: 0,
        reward,
        next_state: Observation::new(vec![state + 1.0]),
        terminal,
        truncated,
        policy_stamp: 0,
        env_step: 0,
        episode_id: episode,
    }
}

/// Random episodes written back to back; episodes end in a terminal, a
/// truncation, or are still running at the end of the log.
pub fn random_log(rng: &mut impl Rng, len: usize) -> Vec<Transition> {
    let mut log = Vec::with_capacity(len);
    let mut episode = 0;
    let mut state = 0.0;
    while log.len() < len {
        let end = rng.gen_range(0..10);
        let terminal = end == 0;
        let truncated = end == 1;
        // Small integers keep every discounted sum exact.
        let reward = rng.gen_range(-4..=4) as f64;
        log.push(transition(state, reward, episode, terminal, truncated));
        state += 1.0;
        if terminal || truncated {
            episode += 1;
        }
    }
    log
}

/// Target written directly from the definition over the full log: walk
/// forward from `start`, stop at the episode's end or the horizon, and reject
/// windows that leave the stored range or cross a truncation early.
pub fn brute_force_target(
    log: &[Transition],
    stored: std::ops::Range<u64>,
    start: u64,
    n: usize,
    gamma: f64,
    value: impl Fn(&[f64]) -> f64,
) -> Option<f64> {
    if !stored.contains(&start) {
        return None;
    }
    let episode = log[start as usize].episode_id;
    let mut total = 0.0;
    let mut discount = 1.0;
    for k in 0..n {
        let j = start + k as u64;
        if j >= stored.end || log[j as usize].episode_id != episode {
            return None;
        }
        let t = &log[j as usize];
        total += discount * t.reward;
        discount *= gamma;
        if t.terminal {
            return Some(total);
        }
        if t.truncated && k + 1 < n {
            return None;
        }
    }
    let last = &log[(start + n as u64 - 1) as usize];
    Some(total + discount * value(&last.next_state))
}

/// n-step targets against [`brute_force_target`]; dyadic discounts and integer
/// rewards make the comparison exact.
pub fn check_nstep_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut compared = 0;
    for case in 0..instances {
        let capacity = rng.gen_range(1..40);
        let len = rng.gen_range(1..80);
        let log = random_log(&mut rng, len);
        let mut buffer = ReplayBuffer::new(capacity).unwrap();
        for t in &log {
            buffer.insert(t.clone());
        }
        let n = rng.gen_range(1..8);
        let gamma = [0.5, 0.25, 0.75, 0.0][rng.gen_range(0..4)];
        let spec = TargetSpec::n_step(n, gamma).unwrap();
        let value = |s: &[f64]| 3.0 * s[0] - 1.0;
        let start = buffer.stored().start + rng.gen_range(0..buffer.len() as u64);
        let expected = brute_force_target(&log, buffer.stored(), start, n, gamma, value);
        let got = nstep_target(&buffer, start, &spec, value).ok();
        if got != expected {
            return Err(format!(
                "instance {case}: start {start}, n {n}, gamma {gamma}: got {got:?}, oracle {expected:?}"
            ));
        }
        if buffer.is_valid_nstep(start, n) != expected.is_some() {
            return Err(format!("instance {case}: validity disagrees at {start}"));
        }
        compared += 1;
    }
    let mut b = ReplayBuffer::new(8).unwrap();
    b.insert(transition(0.0, 1.0, 0, false, false));
    b.insert(transition(1.0, 2.0, 0, true, false));
    let cut = nstep_target(&b, 0, &TargetSpec::n_step(3, 0.5).unwrap(), |_| 100.0).unwrap();
    if cut != 2.0 {
        return Err(format!(
            "r=[1,2], gamma 0.5, n 3 with terminal gave {cut}, expected 2.0"
        ));
    }
    let sample = assemble(&b, 0, &TargetSpec::n_step(3, 0.5).unwrap()).unwrap();
    if sample.bootstrap.is_some() {
        return Err("terminal inside the window still bootstraps".into());
    }
    Ok(format!("{compared} n-step instances exact"))
}

fn linear_find(priorities: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    for (j, &p) in priorities.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return j;
        }
    }
    unreachable!("u below total")
}

pub fn check_sum_tree_find(instances: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    for case in 0..instances {
        let capacity = rng.gen_range(1..100);
        let mut tree = SumTree::new(capacity);
        // Integer masses keep prefix sums exact in both orders of addition.
        let priorities: Vec<f64> = (0..capacity)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(1..=10) as f64
                }
            })
            .collect();
        for (j, &p) in priorities.iter().enumerate() {
            tree.set(j, p).unwrap();
        }
        let total: f64 = priorities.iter().sum();
        if total == 0.0 {
            if tree.find(0.0).is_ok() {
                return Err(format!("instance {case}: find on zero mass succeeded"));
            }
            continue;
        }
        let u = if rng.gen_bool(0.5) {
            rng.gen_range(0..total as u64) as f64
        } else {
            rng.gen::<f64>() * total
        };
        let got = tree.find(u).map_err(|e| format!("instance {case}: {e}"))?;
        let want = linear_find(&priorities, u);
        if got != want {
            return Err(format!("instance {case}: u {u}: tree {got}, scan {want}"));
        }
    }
    Ok(format!("{instances} sum-tree queries match the prefix scan"))
}

pub fn check_sum_tree_invariant(updates: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let capacity = 1000;
    let mut tree = SumTree::new(capacity);
    let mut leaves = vec![0.0; capacity];
    for _ in 0..updates {
        let j = rng.gen_range(0..capacity);
        let p = rng.gen::<f64>() * 10.0;
        tree.set(j, p).unwrap();
        leaves[j] = p;
    }
    for i in 1..tree.leaf_count() {
        let sum = tree.node(2 * i) + tree.node(2 * i + 1);
        if (tree.node(i) - sum).abs() > 1e-9 * sum.abs().max(f64::MIN_POSITIVE) {
            return Err(format!("node {i}: {} vs children {sum}", tree.node(i)));
        }
    }
    let direct: f64 = leaves.iter().sum();
    if (tree.total() - direct).abs() > 1e-9 * direct {
        return Err(format!("root {} vs leaf sum {direct}", tree.total()));
    }
    Ok(format!("node sums hold after {updates} updates"))
}

fn one_step(config: OptimizerConfig, params: &mut [f64], gradient: &[f64]) {
    Optimizer::new(config, params.len())
        .step(params, gradient)
        .unwrap();
}

pub fn check_optimizers(seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut adam = [0.0];
    one_step(OptimizerConfig::adam(0.1), &mut adam, &[1.0]);
    if (adam[0] + 0.1).abs() > 1e-7 {
        return Err(format!("adam first step {} not about -0.1", adam[0]));
    }
    for _ in 0..1000 {
        let theta: f64 = rng.gen_range(-2.0..2.0);
        let g: f64 = rng.gen_range(-3.0..3.0);
        let lr: f64 = rng.gen_range(1e-4..0.5);
        let cases = [
            (OptimizerConfig::sgd(lr), theta - lr * g),
            (
                OptimizerConfig::rmsprop(lr),
                theta - lr * g / (0.05 * g * g + 1e-5).sqrt(),
            ),
            // Bias correction makes the first Adam step lr * g / (|g| + eps).
            (OptimizerConfig::adam(lr), theta - lr * g / (g.abs() + 1e-8)),
        ];
        for (config, want) in cases {
            let mut p = [theta];
            one_step(config, &mut p, &[g]);
            if (p[0] - want).abs() > 1e-12 {
                return Err(format!("{config:?} from {theta} with g {g}: {} vs {want}", p[0]));
            }
        }
    }
    Ok("sgd, rmsprop and adam first steps match closed forms".into())
}

pub fn check_c51_projection(instances: usize, seed: u64) -> Check {
    let three = CategoricalSupport::new(0.0, 2.0, 3).unwrap();
    let examples = [
        (vec![0.0, 1.0, 0.0], 0.0, 1.0, vec![0.0, 1.0, 0.0]),
        (vec![1.0, 0.0, 0.0], 1.0, 1.0, vec![0.0, 1.0, 0.0]),
        (vec![1.0, 0.0, 0.0], 0.5, 1.0, vec![0.5, 0.5, 0.0]),
    ];
    for (p, r, d, want) in examples {
        let got = c51_project(&three, &p, r, d);
        if got != want {
            return Err(format!(
                "project({p:?}, r {r}, discount {d}) = {got:?}, want {want:?}"
            ));
        }
    }
    let mut rng = rng(seed);
    for case in 0..instances {
        let atoms = rng.gen_range(2..60);
        let v_min = rng.gen_range(-20.0..0.0);
        let support = CategoricalSupport::new(v_min, v_min + rng.gen_range(0.1..40.0), atoms).unwrap();
        let raw: Vec<f64> = (0..atoms).map(|_| rng.gen::<f64>()).collect();
        let z: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let out = c51_project(&support, &p, rng.gen_range(-30.0..30.0), rng.gen_range(0.0..1.0));
        let mass: f64 = out.iter().sum();
        if (mass - 1.0).abs() > 1e-9 || out.iter().any(|&m| m < 0.0) {
            return Err(format!("instance {case}: projected mass {mass}"));
        }
    }
    Ok(format!(
        "3 projection examples exact, mass conserved on {instances} instances"
    ))
}

/// Random architecture, parameters and batch for a gradient check.
struct GradientCase {
    qf: QFunction,
    states: Vec<Vec<f64>>,
    actions: Vec<usize>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

fn gradient_case(rng: &mut ChaCha8Rng, kind: ApproximatorKind, categorical: bool) -> GradientCase {
    let obs_dim = rng.gen_range(2..6);
    let actions = rng.gen_range(1..4);
    let head = if categorical {
        Head::Categorical(CategoricalSupport::new(-1.0, 1.0, rng.gen_range(2..6)).unwrap())
    } else {
        Head::Scalar
    };
    let arch = Architecture {
        kind,
        obs_dim,
        hidden: rng.gen_range(1..6),
        actions,
        head,
    };
    let mut qf = QFunction::init(arch, rng).unwrap();
    for p in qf.params_mut() {
        *p += rng.gen_range(-0.5..0.5);
    }
    let batch = rng.gen_range(1..5);
    let states = (0..batch)
        .map(|_| match kind {
            ApproximatorKind::Tabular => Observation::one_hot(obs_dim, rng.gen_range(0..obs_dim)).to_vec(),
            _ => (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let actions = (0..batch).map(|_| rng.gen_range(0..actions)).collect();
    let targets = if categorical {
        let k = arch.atoms();
        (0..batch)
            .flat_map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(move |x| x / z)
            })
            .collect()
    } else {
        (0..batch).map(|_| rng.gen_range(-3.0..3.0)).collect()
    };
    let weights = (0..batch).map(|_| rng.gen_range(0.1..1.0)).collect();
    GradientCase {
        qf,
        states,
        actions,
        targets,
        weights,
    }
}

fn case_loss(c: &GradientCase, qf: &QFunction) -> (f64, Vec<f64>) {
    let batch: Vec<StateAction<'_>> = c
        .states
        .iter()
        .zip(&c.actions)
        .map(|(s, &a)| StateAction { state: s, action: a })
        .collect();
    let out = match qf.architecture().head {
        Head::Scalar => td_loss_and_grad(qf, &batch, &c.targets, &c.weights),
        Head::Categorical(_) => c51_loss_and_grad(qf, &batch, &c.targets, &c.weights),
    }
    .unwrap();
    (out.loss, out.gradient)
}

/// Analytic gradients against central differences for every head and
/// approximator, `draws` random cases each.
pub fn check_gradients(draws: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let h = 1e-6;
    let mut checked = 0;
    for kind in [
        ApproximatorKind::Tabular,
        ApproximatorKind::Linear,
        ApproximatorKind::Mlp,
    ] {
        for categorical in [false, true] {
            for draw in 0..draws {
                let c = gradient_case(&mut rng, kind, categorical);
                let (_, analytic) = case_loss(&c, &c.qf);
                let mut probe = c.qf.clone();
                for j in 0..analytic.len() {
                    let base = probe.params()[j];
                    probe.params_mut()[j] = base + h;
                    let (up, _) = case_loss(&c, &probe);
                    probe.params_mut()[j] = base - h;
                    let (down, _) = case_loss(&c, &probe);
                    probe.params_mut()[j] = base;
                    let numeric = (up - down) / (2.0 * h);
                    let scale = analytic[j].abs().max(numeric.abs());
                    if (analytic[j] - numeric).abs() > 1e-4 * scale + 1e-8 {
                        return Err(format!(
                            "{kind:?} categorical={categorical} draw {draw} param {j}: analytic {} numeric {numeric}",
                            analytic[j]
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} partial derivatives match central differences"))
}

/// Percentile by explicit rank counting: the value below which a fraction
/// `q` of the other points lie, interpolated between neighbouring ranks.
fn rank_percentile(values: &[f64], q: f64) -> f64 {
    let n = values.len();
    let at_rank = |r: usize| {
        *values
            .iter()
            .find(|&&v| {
                let below = values.iter().filter(|&&w| w < v).count();
                let equal = values.iter().filter(|&&w| w == v).count();
                below <= r && r < below + equal
            })
            .unwrap()
    };
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        at_rank(lo)
    } else {
        at_rank(lo) + (at_rank(lo + 1) - at_rank(lo)) * frac
    }
}

fn table(entries: &[(&str, &[f64])]) -> ScoreTable {
    entries.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
}

/// Every resample of one environment with two seeds per side, enumerated.
fn enumerated_medians(base: &[f64; 2], new: &[f64; 2]) -> Vec<f64> {
    let mut out = Vec::new();
    for b in [[0, 0], [0, 1], [1, 0], [1, 1]] {
        for n in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let mb = (base[b[0]] + base[b[1]]) / 2.0;
            let mn = (new[n[0]] + new[n[1]]) / 2.0;
            out.push(100.0 * (mn - mb) / mb.abs());
        }
    }
    out
}

pub fn check_statistics(seed: u64) -> Check {
    let mut rng = rng(seed);
    for case in 0..500 {
        let n = rng.gen_range(1..12);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..5) as f64).collect();
        let (p25, p50, p75) = percentile_summary(&values).unwrap();
        let want = (
            rank_percentile(&values, 0.25),
            rank_percentile(&values, 0.5),
            rank_percentile(&values, 0.75),
        );
        if (p25, p50, p75) != want {
            return Err(format!(
                "case {case} {values:?}: {:?} vs {want:?}",
                (p25, p50, p75)
            ));
        }
        let q = rng.gen_range(0..=100) as f64;
        if percentile(&values, q).unwrap() != rank_percentile(&values, q / 100.0) {
            return Err(format!("case {case}: percentile {q} differs"));
        }
    }

    let base = [2.0, 4.0];
    let new = [3.0, 5.0];
    let possible = enumerated_medians(&base, &new);
    let dist =
        bootstrap_distribution(&table(&[("e", &base)]), &table(&[("e", &new)]), 2000, &mut rng).unwrap();
    if let Some(v) = dist.iter().find(|v| !possible.contains(v)) {
        return Err(format!("bootstrap value {v} is not a possible resample"));
    }
    let exact_mean = possible.iter().sum::<f64>() / possible.len() as f64;
    let (m, s) = mean_std(&dist).unwrap();
    let standard_error = s / (dist.len() as f64).sqrt();
    if (m - exact_mean).abs() > 5.0 * standard_error {
        return Err(format!("bootstrap mean {m} far from enumerated {exact_mean}"));
    }

    let single = bootstrap_distribution(
        &table(&[("a", &[1.0]), ("b", &[2.0]), ("c", &[4.0])]),
        &table(&[("a", &[2.0]), ("b", &[1.0]), ("c", &[5.0])]),
        500,
        &mut rng,
    )
    .unwrap();
    let (_, std) = mean_std(&single).unwrap();
    if std != 0.0 {
        return Err(format!("single-seed bootstrap std {std}"));
    }
    let (lo, hi) = confidence_interval(&single, 0.95).unwrap();
    if lo != hi || lo != 25.0 {
        return Err(format!("single-seed interval ({lo}, {hi}), want the point 25"));
    }
    Ok("percentiles and bootstrap match enumeration; single-seed std = 0".into())
}

/// Gating at `numer/denom` over `steps` environment steps: total updates and
/// the largest count inside one controller period.
pub fn gate(ratio: ReplayRatio, steps: u64) -> (u64, Vec<u64>) {
    let mut control = ReplayControl::fixed_ratio(1_000_000, ratio, 0);
    let due: Vec<u64> = (0..steps).map(|_| control.updates_due()).collect();
    (due.iter().sum(), due)
}

pub fn check_ratio_gating() -> Check {
    let ratio = ReplayRatio::from_f64(0.25).unwrap();
    let steps = 100_000;
    let (total, due) = gate(ratio, steps);
    if total != steps / 4 {
        return Err(format!("{total} updates over {steps} steps"));
    }
    if let Some((w, chunk)) = due
        .chunks(4)
        .enumerate()
        .find(|(_, c)| c.iter().sum::<u64>() != 1)
    {
        return Err(format!("window {w} has {chunk:?}"));
    }
    let implied = ratio_from(1_000_000, 250_000).unwrap();
    if implied.as_f64() != 0.25 {
        return Err(format!("ratio_from(1e6, 2.5e5) = {implied}"));
    }
    Ok(format!(
        "{total} updates in {steps} steps, one per 4; ratio_from = 0.25"
    ))
}

/// Drives a buffer through the run loop's gating and returns the oldest
/// policy age measured after every step once the buffer has turned over.
pub fn fixed_oldest_ages(capacity: u64, target_age: u64, steps: u64) -> (ReplayControl, Vec<u64>) {
    let warmup = 500.min(capacity);
    let mut control = ReplayControl::fixed_oldest(capacity, target_age, warmup).unwrap();
    let mut buffer = ReplayBuffer::new(capacity as usize).unwrap();
    let mut gradient_steps = 0;
    let mut ages = Vec::new();
    for step in 0..steps {
        let mut t = transition(step as f64, 0.0, 0, false, false);
        t.policy_stamp = gradient_steps;
        buffer.insert(t);
        if !control.warmed_up(buffer.len() as u64) {
            continue;
        }
        gradient_steps += control.updates_due();
        if step >= 2 * capacity {
            ages.push(buffer.oldest_policy_age(gradient_steps).unwrap());
        }
    }
    (control, ages)
}

pub fn check_fixed_oldest() -> Check {
    let (control, ages) = fixed_oldest_ages(5000, 1250, 40_000);
    let target = control.target_oldest_age();
    // Updates granted within one controller period.
    let slack = control.ratio().updates_after(control.ratio().period()) as f64;
    let worst = ages
        .iter()
        .map(|&a| (a as f64 - target).abs())
        .fold(0.0, f64::max);
    if ages.is_empty() || worst > slack {
        return Err(format!("oldest age off target {target} by {worst} (> {slack})"));
    }
    Ok(format!(
        "steady-state oldest age within {worst} of {target} (period allows {slack})"
    ))
}

/// Counts actions taken at random by an epsilon-greedy agent.
pub fn random_action_count(n: usize, epsilon: f64, seed: u64) -> usize {
    use replaylab::envs::{EnvName, EnvSpec};
    use replaylab::experiments::{Agent, AgentConfig, VariantSpec};
    let spec = EnvSpec::new(EnvName::Gridworld, 0.0, 0.0);
    let env = spec.build(seed).unwrap();
    let (dim, actions) = (env.observation_dim(), env.action_count());
    let mut agent = Agent::new(
        &VariantSpec::dqn(),
        &spec,
        dim,
        actions,
        100,
        &AgentConfig::default(),
        seed,
    )
    .unwrap();
    let mut rng = rng(seed);
    let state = Observation::one_hot(dim, 0);
    (0..n)
        .filter(|_| agent.act_traced(&state, epsilon, &mut rng).unwrap().1)
        .count()
}

pub fn check_epsilon_coverage() -> Check {
    let (n, eps) = (2000, 0.1);
    let count = random_action_count(n, eps, 11);
    let mean = eps * n as f64;
    let sigma = (n as f64 * eps * (1.0 - eps)).sqrt();
    if (count as f64 - mean).abs() > 3.0 * sigma {
        return Err(format!(
            "{count} random actions, expected {mean} +- {:.1}",
            3.0 * sigma
        ));
    }
    Ok(format!(
        "{count} random actions of {n} (3 sigma band {:.1}..{:.1})",
        mean - 3.0 * sigma,
        mean + 3.0 * sigma
    ))
}

/// Distinct `(state, action)` experiences gathered by a uniformly random
/// behavior policy, stored in a replay buffer first.
pub fn random_experience(env: &mut dyn Environment, steps: usize, seed: u64) -> Vec<Transition> {
    let mut rng = rng(seed);
    let mut buffer = ReplayBuffer::new(steps).unwrap();
    let mut obs = env.reset();
    let mut episode = 0;
    for step in 0..steps {
        let action = rng.gen_range(0..env.action_count());
        let out = env.step(action).unwrap();
        buffer.insert(Transition {
            state: obs.clone(),
            action,
            reward: out.reward,
            next_state: out.observation.clone(),
            terminal: out.terminal,
            truncated: out.truncated,
            policy_stamp: 0,
            env_step: step as u64,
            episode_id: episode,
        });
        obs = if out.done() {
            episode += 1;
            env.reset()
        } else {
            out.observation
        };
    }
    let mut seen = BTreeMap::new();
    for (_, t) in buffer.iter() {
        seen.entry((hot(&t.state), t.action)).or_insert_with(|| t.clone());
    }
    seen.into_values().collect()
}

fn hot(obs: &[f64]) -> usize {
    obs.iter().position(|&x| x == 1.0).expect("one-hot observation")
}

/// States reachable from `start` under the model.
fn reachable(model: &dyn TabularModel, start: usize) -> Vec<usize> {
    let mut seen = vec![false; model.state_count()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        if model.is_terminal_state(s) {
            continue;
        }
        for a in 0..model.action_count() {
            for o in model.outcomes(s, a) {
                if o.probability > 0.0 && !seen[o.next] {
                    seen[o.next] = true;
                    stack.push(o.next);
                }
            }
        }
    }
    (0..seen.len()).filter(|&s| seen[s]).collect()
}

/// Replays the experience with 1-step Q-learning targets on a tabular
/// approximator until a sweep changes nothing, then compares against value
/// iteration on the known model.
pub fn check_tabular_q_learning(
    env: &mut dyn Environment,
    model: &dyn TabularModel,
    start: usize,
    gamma: f64,
    seed: u64,
) -> Check {
    let states = model.state_count();
    let actions = model.action_count();
    let experience = random_experience(env, 400_000, seed);
    let pairs: usize = reachable(model, start)
        .into_iter()
        .filter(|&s| !model.is_terminal_state(s))
        .count()
        * actions;
    if experience.len() != pairs {
        return Err(format!(
            "random behavior covered {} of {pairs} pairs",
            experience.len()
        ));
    }
    let arch = Architecture {
        kind: ApproximatorKind::Tabular,
        obs_dim: states,
        hidden: 0,
        actions,
        head: Head::Scalar,
    };
    let mut learner = Learner::new(QFunction::zeros(arch).unwrap(), OptimizerConfig::sgd(1.0), 1).unwrap();
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let before = learner.online().params().to_vec();
        for t in &experience {
            let y = if t.terminal {
                t.reward
            } else {
                t.reward + gamma * learner.online().q_values(&t.next_state).unwrap().max_value()
            };
            let batch = [StateAction {
                state: &t.state,
                action: t.action,
            }];
            let out = td_loss_and_grad(learner.online(), &batch, &[y], &[1.0]).unwrap();
            learner.apply_gradient(&out.gradient).unwrap();
        }
        let change = before
            .iter()
            .zip(learner.online().params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < 1e-12 {
            break;
        }
        if sweeps > 10_000 {
            return Err(format!("no convergence after {sweeps} sweeps"));
        }
    }
    let oracle = value_iteration(model, gamma, 1e-13, 100_000);
    let mut worst: f64 = 0.0;
    for t in &experience {
        let s = hot(&t.state);
        let learned = learner.online().q_values(&t.state).unwrap();
        worst = worst.max((learned.values[t.action] - oracle.q(s, t.action)).abs());
        if !oracle.optimal_actions(s).contains(&learned.greedy_action()) {
            return Err(format!(
                "greedy action {} not optimal in state {s}",
                learned.greedy_action()
            ));
        }
    }
    if worst > 1e-6 {
        return Err(format!("max |Q - Q*| = {worst:e}"));
    }
    Ok(format!(
        "{pairs} pairs, max |Q - Q*| = {worst:.1e} after {sweeps} sweeps, greedy optimal"
    ))
}

/// Runs a check and prints its acceptance line; returns whether it passed.
pub fn report(label: &str, check: Check) -> bool {
    match check {
        Ok(detail) => {
            println!("PASS {label}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {label}: {detail}");
            false
        }
    }
}
