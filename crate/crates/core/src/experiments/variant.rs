use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nstep::TargetSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLabel {
    Dqn,
    Rainbow,
    Custom,
}

/// The four components separating Rainbow from DQN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Per,
    Adam,
    C51,
    NStep,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Per, Component::Adam, Component::C51, Component::NStep];

    pub fn name(&self) -> &'static str {
        match self {
            Component::Per => "per",
            Component::Adam => "adam",
            Component::C51 => "c51",
            Component::NStep => "nstep",
        }
    }
}

/// Which Rainbow components an agent uses. `n = 1` means no n-step returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub use_per: bool,
    pub use_adam: bool,
    pub use_c51: bool,
    pub n: usize,
    /// 1-step targets bootstrapped with `gamma^n` instead of n-step returns.
    #[serde(default)]
    pub contraction_matched: bool,
    pub base: BaseLabel,
}

pub const RAINBOW_N: usize = 3;

impl VariantSpec {
    pub fn dqn() -> Self {
        Self {
            use_per: false,
            use_adam: false,
            use_c51: false,
            n: 1,
            contraction_matched: false,
            base: BaseLabel::Dqn,
        }
    }

    pub fn rainbow() -> Self {
        Self {
            use_per: true,
            use_adam: true,
            use_c51: true,
            n: RAINBOW_N,
            contraction_matched: false,
            base: BaseLabel::Rainbow,
        }
    }

    pub fn dqn_with(component: Component) -> Self {
        Self::dqn().with(component, true)
    }

    pub fn rainbow_without(component: Component) -> Self {
        Self::rainbow().with(component, false)
    }

    /// DQN with n-step returns of length `n`.
    pub fn dqn_nstep(n: usize) -> Self {
        Self { n, ..Self::dqn() }
    }

    /// DQN with 1-step targets discounted by `gamma^n`.
    pub fn dqn_contraction_matched(n: usize) -> Self {
        Self {
            n,
            contraction_matched: true,
            ..Self::dqn()
        }
    }

    fn with(mut self, component: Component, on: bool) -> Self {
        match component {
            Component::Per => self.use_per = on,
            Component::Adam => self.use_adam = on,
            Component::C51 => self.use_c51 = on,
            Component::NStep => self.n = if on { RAINBOW_N } else { 1 },
        }
        self
    }

    pub fn has(&self, component: Component) -> bool {
        match component {
            Component::Per => self.use_per,
            Component::Adam => self.use_adam,
            Component::C51 => self.use_c51,
            Component::NStep => self.n > 1 && !self.contraction_matched,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("variant.n", "must be >= 1"));
        }
        Ok(())
    }

    pub fn target_spec(&self, gamma: f64) -> Result<TargetSpec> {
        if self.contraction_matched {
            TargetSpec::contraction_matched(self.n, gamma)
        } else if self.n == 1 {
            TargetSpec::one_step(gamma)
        } else {
            TargetSpec::n_step(self.n, gamma)
        }
    }

    /// Stable human-readable label, e.g. `dqn+nstep`, `rainbow-per`, `dqn+nstep(n=5)`.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (reference, sign, diff_on) = match self.base {
            BaseLabel::Dqn => (Self::dqn(), '+', true),
            BaseLabel::Rainbow => (Self::rainbow(), '-', false),
            BaseLabel::Custom => {
                let on: Vec<&str> = Component::ALL
                    .iter()
                    .filter(|c| self.has(**c))
                    .map(|c| c.name())
                    .collect();
                write!(f, "custom[{}", on.join(","))?;
                if self.contraction_matched {
                    write!(f, ",gamma^{}", self.n)?;
                } else if self.n > 1 {
                    write!(f, ",n={}", self.n)?;
                }
                return write!(f, "]");
            }
        };
        let name = match self.base {
            BaseLabel::Dqn => "dqn",
            _ => "rainbow",
        };
        write!(f, "{name}")?;
        for c in Component::ALL {
            if self.has(c) != reference.has(c) && self.has(c) == diff_on {
                write!(f, "{sign}{}", c.name())?;
                if c == Component::NStep && diff_on && self.n != RAINBOW_N {
                    write!(f, "(n={})", self.n)?;
                }
            }
        }
        if self.has(Component::NStep) && reference.has(Component::NStep) && self.n != RAINBOW_N {
            write!(f, "(n={})", self.n)?;
        }
        if self.contraction_matched {
            write!(f, "+1step(gamma^{})", self.n)?;
        }
        Ok(())
    }
}
