//! Parameter checkpoints: a fixed architecture header followed by the flat
//! parameter vector as little-endian `f64`.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `RLQF`                            |
//! | 4     | format version (`u32`, currently 1)     |
//! | 1     | kind: 0 tabular, 1 linear, 2 mlp        |
//! | 1     | head: 0 scalar, 1 categorical           |
//! | 8 x 4 | obs_dim, hidden, actions, atoms (`u64`) |
//! | 8 x 2 | v_min, v_max (`f64`, 0 for scalar)      |
//! | 8     | parameter count (`u64`)                 |
//! | 8 x P | parameters (`f64`)                      |

use super::{ApproximatorKind, Architecture, CategoricalSupport, Head, QFunction};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RLQF";
const VERSION: u32 = 1;

pub fn write_checkpoint(qf: &QFunction) -> Vec<u8> {
    let arch = qf.architecture();
    let mut out = Vec::with_capacity(66 + 8 * qf.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match arch.kind {
        ApproximatorKind::Tabular => 0,
        ApproximatorKind::Linear => 1,
        ApproximatorKind::Mlp => 2,
    });
    let (head, atoms, v_min, v_max) = match arch.head {
        Head::Scalar => (0u8, 1u64, 0.0, 0.0),
        Head::Categorical(s) => (1u8, s.atoms as u64, s.v_min, s.v_max),
    };
    out.push(head);
    for v in [
        arch.obs_dim as u64,
        arch.hidden as u64,
        arch.actions as u64,
        atoms,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&v_min.to_le_bytes());
    out.extend_from_slice(&v_max.to_le_bytes());
    out.extend_from_slice(&(qf.params().len() as u64).to_le_bytes());
    for p in qf.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::InvalidArgument(format!("checkpoint truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<QFunction> {
    let bad = |m: &str| Error::InvalidArgument(format!("checkpoint: {m}"));
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let kind = match r.take::<1>()?[0] {
        0 => ApproximatorKind::Tabular,
        1 => ApproximatorKind::Linear,
        2 => ApproximatorKind::Mlp,
        k => return Err(bad(&format!("unknown kind {k}"))),
    };
    let head_tag = r.take::<1>()?[0];
    let obs_dim = r.u64()? as usize;
    let hidden = r.u64()? as usize;
    let actions = r.u64()? as usize;
    let atoms = r.u64()? as usize;
    let v_min = r.f64()?;
    let v_max = r.f64()?;
    let head = match head_tag {
        0 => Head::Scalar,
        1 => Head::Categorical(CategoricalSupport::new(v_min, v_max, atoms)?),
        h => return Err(bad(&format!("unknown head {h}"))),
    };
    let count = r.u64()? as usize;
    let arch = Architecture {
        kind,
        obs_dim,
        hidden,
        actions,
        head,
    };
    if count != arch.param_count() {
        return Err(bad("parameter count does not match architecture"));
    }
    let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    QFunction::from_params(arch, params)
}
