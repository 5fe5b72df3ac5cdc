//! Offline dataset files.
//!
//! Binary layout: one ASCII header line
//! `replaylab-dataset <version> <obs_dim> <actions>\n`, then fixed-width
//! little-endian records of
//! `state f64*d | action u64 | reward f64 | next_state f64*d | terminal u8 |
//! truncated u8 | policy_stamp u64 | env_step u64 | episode_id u64`.
//!
//! The JSONL variant has a header object line followed by one transition per
//! line, using the same field names.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::{Observation, ReplayBuffer, Transition};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "replaylab-dataset";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub obs_dim: usize,
    pub actions: usize,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonHeader {
    format: String,
    version: u32,
    obs_dim: usize,
    actions: usize,
}

fn bad(record: usize, message: impl Into<String>) -> Error {
    Error::Dataset {
        record,
        message: message.into(),
    }
}

impl Dataset {
    /// Snapshot of every stored transition, oldest first.
    pub fn from_buffer(buffer: &ReplayBuffer, actions: usize) -> Result<Self> {
        let obs_dim = buffer.oldest().ok_or(Error::EmptyBuffer)?.state.len();
        Ok(Self {
            obs_dim,
            actions,
            transitions: buffer.iter().map(|(_, t)| t.clone()).collect(),
        })
    }

    pub fn record_size(obs_dim: usize) -> usize {
        8 * (2 * obs_dim) + 8 + 8 + 2 + 8 * 3
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.transitions.iter().enumerate() {
            if t.state.len() != self.obs_dim || t.next_state.len() != self.obs_dim {
                return Err(bad(
                    i,
                    format!("observation length differs from {}", self.obs_dim),
                ));
            }
            t.validate(self.actions).map_err(|e| bad(i, e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = format!("{MAGIC} {FORMAT_VERSION} {} {}\n", self.obs_dim, self.actions);
        let mut out =
            Vec::with_capacity(header.len() + self.transitions.len() * Self::record_size(self.obs_dim));
        out.extend_from_slice(header.as_bytes());
        for t in &self.transitions {
            for &x in t.state.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&(t.action as u64).to_le_bytes());
            out.extend_from_slice(&t.reward.to_le_bytes());
            for &x in t.next_state.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.push(t.terminal as u8);
            out.push(t.truncated as u8);
            out.extend_from_slice(&t.policy_stamp.to_le_bytes());
            out.extend_from_slice(&t.env_step.to_le_bytes());
            out.extend_from_slice(&t.episode_id.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad(0, "missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad(0, "header is not UTF-8"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [magic, version, obs_dim, actions] = fields[..] else {
            return Err(bad(0, format!("malformed header `{header}`")));
        };
        if magic != MAGIC {
            return Err(bad(0, format!("unknown format `{magic}`")));
        }
        let num = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(0, format!("header {what} `{s}` is not an integer")))
        };
        if num(version, "version")? != FORMAT_VERSION as usize {
            return Err(bad(0, format!("unsupported version {version}")));
        }
        let obs_dim = num(obs_dim, "obs_dim")?;
        let actions = num(actions, "actions")?;
        let body = &bytes[nl + 1..];
        let size = Self::record_size(obs_dim);
        if body.is_empty() {
            return Err(bad(0, "dataset contains no records"));
        }
        if !body.len().is_multiple_of(size) {
            return Err(bad(
                body.len() / size,
                format!("truncated record ({} trailing bytes)", body.len() % size),
            ));
        }
        let mut transitions = Vec::with_capacity(body.len() / size);
        for (i, rec) in body.chunks_exact(size).enumerate() {
            let mut pos = 0;
            let mut take8 = || {
                let b: [u8; 8] = rec[pos..pos + 8].try_into().expect("8 bytes");
                pos += 8;
                b
            };
            let state: Vec<f64> = (0..obs_dim).map(|_| f64::from_le_bytes(take8())).collect();
            let action = u64::from_le_bytes(take8());
            let reward = f64::from_le_bytes(take8());
            let next_state: Vec<f64> = (0..obs_dim).map(|_| f64::from_le_bytes(take8())).collect();
            let flag = |b: u8, what: &str| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(bad(i, format!("{what} flag byte {b} is not 0 or 1"))),
            };
            let terminal = flag(rec[pos], "terminal")?;
            let truncated = flag(rec[pos + 1], "truncated")?;
            pos += 2;
            let mut take8 = || {
                let b: [u8; 8] = rec[pos..pos + 8].try_into().expect("8 bytes");
                pos += 8;
                u64::from_le_bytes(b)
            };
            let t = Transition {
                state: Observation::new(state),
                action: usize::try_from(action).map_err(|_| bad(i, "action overflows usize"))?,
                reward,
                next_state: Observation::new(next_state),
                terminal,
                truncated,
                policy_stamp: take8(),
                env_step: take8(),
                episode_id: take8(),
            };
            t.validate(actions).map_err(|e| bad(i, e.to_string()))?;
            transitions.push(t);
        }
        Ok(Self {
            obs_dim,
            actions,
            transitions,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        let header = JsonHeader {
            format: MAGIC.into(),
            version: FORMAT_VERSION,
            obs_dim: self.obs_dim,
            actions: self.actions,
        };
        let io = |e| Error::io("<jsonl>", e);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(io)?;
        for t in &self.transitions {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(0, "missing header line"))?
            .map_err(|e| bad(0, e.to_string()))?;
        let header: JsonHeader = serde_json::from_str(&header).map_err(|e| bad(0, format!("header: {e}")))?;
        if header.format != MAGIC || header.version != FORMAT_VERSION {
            return Err(bad(
                0,
                format!("unsupported format {} v{}", header.format, header.version),
            ));
        }
        let mut transitions = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(i, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Transition = serde_json::from_str(&line).map_err(|e| bad(i, e.to_string()))?;
            transitions.push(t);
        }
        if transitions.is_empty() {
            return Err(bad(0, "dataset contains no records"));
        }
        let d = Self {
            obs_dim: header.obs_dim,
            actions: header.actions,
            transitions,
        };
        d.validate()?;
        Ok(d)
    }

    /// Writes binary, or JSONL when the extension is `.jsonl`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = if is_jsonl(path) {
            let mut v = Vec::new();
            self.write_jsonl(&mut v)?;
            v
        } else {
            self.to_bytes()?
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if is_jsonl(path) {
            Self::read_jsonl(&bytes[..])
        } else {
            Self::from_bytes(&bytes)
        }
    }
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let t = |i: u64| Transition {
            state: Observation::new(vec![i as f64, 0.5]),
            action: (i % 2) as usize,
            reward: -0.25 * i as f64,
            next_state: Observation::new(vec![i as f64 + 1.0, 0.5]),
            terminal: i == 2,
            truncated: false,
            policy_stamp: i,
            env_step: 10 + i,
            episode_id: 0,
        };
        Dataset {
            obs_dim: 2,
            actions: 2,
            transitions: (0..3).map(t).collect(),
        }
    }

    #[test]
    fn binary_round_trip() {
        let d = sample();
        let bytes = d.to_bytes().unwrap();
        assert!(bytes.starts_with(b"replaylab-dataset 1 2 2\n"));
        assert_eq!(bytes.len(), 24 + 3 * Dataset::record_size(2));
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
    }

    #[test]
    fn jsonl_round_trip() {
        let d = sample();
        let mut v = Vec::new();
        d.write_jsonl(&mut v).unwrap();
        let text = String::from_utf8(v.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"policy_stamp\":0"));
        assert_eq!(Dataset::read_jsonl(&v[..]).unwrap(), d);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            Dataset::from_bytes(b"replaylab-dataset 1 2 2\n"),
            Err(Error::Dataset { record: 0, .. })
        ));
    }

    #[test]
    fn bad_record_reports_index() {
        let mut bytes = sample().to_bytes().unwrap();
        let size = Dataset::record_size(2);
        // terminal flag of record 1
        bytes[24 + size + 8 * 4 + 8 + 8] = 7;
        assert!(matches!(
            Dataset::from_bytes(&bytes),
            Err(Error::Dataset { record: 1, .. })
        ));
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            Dataset::from_bytes(&bytes),
            Err(Error::Dataset { record: 2, .. })
        ));
    }

    #[test]
    fn action_out_of_range_rejected() {
        let mut d = sample();
        d.transitions[1].action = 5;
        let bytes = {
            d.actions = 6;
            let b = d.to_bytes().unwrap();
            let s = String::from_utf8_lossy(&b[..24]).replace(" 2 6", " 2 2");
            [s.as_bytes(), &b[24..]].concat()
        };
        assert!(matches!(
            Dataset::from_bytes(&bytes),
            Err(Error::Dataset { record: 1, .. })
        ));
    }
}
