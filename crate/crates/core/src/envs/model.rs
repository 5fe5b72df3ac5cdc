/// One possible result of taking an action in a known-dynamics environment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub probability: f64,
    pub next: usize,
    /// Expected immediate reward.
    pub reward: f64,
    pub terminal: bool,
}

/// Known dynamics over one-hot state indices, for planning oracles.
pub trait TabularModel {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    fn is_terminal_state(&self, s: usize) -> bool;
    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueIterationResult {
    /// Row-major `states x actions`; rows of terminal states are zero.
    pub q: Vec<f64>,
    pub actions: usize,
    pub sweeps: usize,
}

impl ValueIterationResult {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.actions + a]
    }

    pub fn value(&self, s: usize) -> f64 {
        self.q[s * self.actions..(s + 1) * self.actions]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// All actions attaining the state's maximum.
    pub fn optimal_actions(&self, s: usize) -> Vec<usize> {
        let v = self.value(s);
        (0..self.actions).filter(|&a| self.q(s, a) == v).collect()
    }
}

/// Synchronous value iteration on Q until the largest change is `<= tolerance`
/// (or `max_sweeps` is reached).
pub fn value_iteration(
    model: &dyn TabularModel,
    gamma: f64,
    tolerance: f64,
    max_sweeps: usize,
) -> ValueIterationResult {
    let (ns, na) = (model.state_count(), model.action_count());
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        let mut next_q = vec![0.0; ns * na];
        for s in 0..ns {
            if model.is_terminal_state(s) {
                continue;
            }
            for a in 0..na {
                let value: f64 = model
                    .outcomes(s, a)
                    .iter()
                    .map(|o| {
                        let cont = if o.terminal { 0.0 } else { gamma * v[o.next] };
                        o.probability * (o.reward + cont)
                    })
                    .sum();
                delta = delta.max((value - q[s * na + a]).abs());
                next_q[s * na + a] = value;
            }
        }
        q = next_q;
        for s in 0..ns {
            v[s] = q[s * na..(s + 1) * na]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        if delta <= tolerance {
            break;
        }
    }
    ValueIterationResult {
        q,
        actions: na,
        sweeps,
    }
}
