//! Checkpoint container: `"KZCP"`, version byte, a TOML header (u64 LE
//! length prefix), the site count (u64 LE) and one tensor block per site.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lptn::LptnState;
use crate::model::ModelParams;
use crate::mps::{MpsState, TruncationPolicy};
use crate::quench::QuenchProtocol;
use crate::tensor::{read_tensor, write_tensor};
use crate::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KZCP";
pub const CHECKPOINT_VERSION: u8 = 1;

const MAX_HEADER: u64 = 1 << 30;
const MAX_SITES: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Mps,
    Lptn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: StateKind,
    pub params: ModelParams,
    pub policy: TruncationPolicy,
    pub protocol: Option<QuenchProtocol>,
    /// Ramp steps started so far.
    pub step: usize,
    /// The closing half-layer of the last started step is still to be applied.
    #[serde(default)]
    pub pending_half_step: bool,
    pub gauge_center: Option<usize>,
    pub beta: Option<f64>,
    pub trace_norm: Option<f64>,
    pub truncation_log: Vec<f64>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone)]
pub enum CheckpointState {
    Mps(MpsState),
    Lptn(LptnState),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(
        state: &CheckpointState,
        params: ModelParams,
        policy: TruncationPolicy,
        protocol: Option<QuenchProtocol>,
        step: usize,
    ) -> Self {
        let (kind, tensors, center, beta, trace_norm, log) = match state {
            CheckpointState::Mps(s) => (
                StateKind::Mps,
                s.tensors(),
                s.gauge_center(),
                None,
                None,
                s.truncation_log.clone(),
            ),
            CheckpointState::Lptn(s) => (
                StateKind::Lptn,
                s.tensors().to_vec(),
                s.gauge_center(),
                Some(s.beta),
                Some(s.trace_norm),
                s.truncation_log.clone(),
            ),
        };
        Self {
            header: CheckpointHeader {
                kind,
                params,
                policy,
                protocol,
                step,
                pending_half_step: false,
                gauge_center: center,
                beta,
                trace_norm,
                truncation_log: log,
                config_hash: None,
            },
            tensors,
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.header.config_hash = Some(hash.into());
        self
    }

    pub fn state(&self) -> Result<CheckpointState> {
        let h = &self.header;
        if let Some(c) = h.gauge_center {
            if c >= self.tensors.len() {
                return Err(Error::Format(format!("gauge center {c} out of range")));
            }
        }
        Ok(match h.kind {
            StateKind::Mps => {
                let mut s = MpsState::from_tensors(self.tensors.clone())
                    .map_err(|e| Error::Format(e.to_string()))?;
                s.set_gauge_center(h.gauge_center);
                s.truncation_log = h.truncation_log.clone();
                CheckpointState::Mps(s)
            }
            StateKind::Lptn => {
                let beta = h.beta.ok_or_else(|| Error::Format("LPTN checkpoint without β".into()))?;
                let mut s = LptnState::from_tensors(self.tensors.clone(), beta)
                    .map_err(|e| Error::Format(e.to_string()))?;
                s.set_gauge_center(h.gauge_center);
                s.trace_norm = h.trace_norm.unwrap_or(1.0);
                s.truncation_log = h.truncation_log.clone();
                CheckpointState::Lptn(s)
            }
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = toml::to_string(&self.header)
            .map_err(|e| Error::Format(format!("header serialization failed: {e}")))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&[CHECKPOINT_VERSION])?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for t in &self.tensors {
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        fill(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
        }
        let mut version = [0u8; 1];
        fill(r, &mut version)?;
        if version[0] != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                version[0]
            )));
        }
        let len = read_u64(r)?;
        if len > MAX_HEADER {
            return Err(Error::Format(format!("implausible header length {len}")));
        }
        let mut buf = vec![0u8; len as usize];
        fill(r, &mut buf)?;
        let text = String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?;
        let header: CheckpointHeader =
            toml::from_str(&text).map_err(|e| Error::Format(format!("bad header: {e}")))?;
        let n = read_u64(r)?;
        if n > MAX_SITES || n as usize != header.params.length {
            return Err(Error::Format(format!(
                "{n} tensor blocks for a chain of {} sites",
                header.params.length
            )));
        }
        let tensors = (0..n).map(|_| read_tensor(r)).collect::<Result<Vec<Tensor>>>()?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after the last tensor block".into()));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    fill(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lptn::{cool, infinite_temperature_state};

    fn bits(ts: &[Tensor]) -> Vec<u64> {
        ts.iter()
            .flat_map(|t| t.data().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]))
            .collect()
    }

    #[test]
    fn product_state_round_trip_is_bit_exact() {
        let s = MpsState::product(&[1, 0, 2, 1], 3).unwrap();
        let p = ModelParams::new(0.1, 0.5, 4, 3);
        let cp = Checkpoint::new(&CheckpointState::Mps(s.clone()), p, TruncationPolicy::default(), None, 0)
            .with_config_hash("abc");
        let mut buf = Vec::new();
        cp.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.header, cp.header);
        match back.state().unwrap() {
            CheckpointState::Mps(m) => {
                assert_eq!(bits(&m.tensors()), bits(&s.tensors()));
                assert_eq!(m.gauge_center(), s.gauge_center());
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn cooled_lptn_round_trip_is_bit_exact() {
        let p = ModelParams::new(0.1, 0.5, 4, 3);
        let pol = TruncationPolicy::default().with_dt(0.05);
        let mut s = infinite_temperature_state(4, 3).unwrap();
        cool(&mut s, &p, 2.0, &pol).unwrap();
        let q = QuenchProtocol::new(1.0, 0.3, 0.5).unwrap();
        let cp = Checkpoint::new(&CheckpointState::Lptn(s.clone()), p, pol, Some(q), 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.kzcp");
        cp.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.header, cp.header);
        match back.state().unwrap() {
            CheckpointState::Lptn(l) => {
                assert_eq!(bits(l.tensors()), bits(s.tensors()));
                assert_eq!(l.beta.to_bits(), s.beta.to_bits());
                assert_eq!(l.truncation_log, s.truncation_log);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let s = MpsState::unit_filling(3, 2).unwrap();
        let cp = Checkpoint::new(
            &CheckpointState::Mps(s),
            ModelParams::new(0.0, 0.5, 3, 2),
            TruncationPolicy::default(),
            None,
            0,
        );
        let mut buf = Vec::new();
        cp.write_to(&mut buf).unwrap();

        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        for cut in [3, 10, buf.len() / 2, buf.len() - 1] {
            let short = &buf[..cut];
            assert!(matches!(Checkpoint::read_from(&mut &short[..]), Err(Error::Format(_))), "{cut}");
        }
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(Checkpoint::read_from(&mut long.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn infinite_values_survive_the_header() {
        let s = LptnState::from_pure(&MpsState::unit_filling(3, 2).unwrap());
        let q = QuenchProtocol::new(1.0, 0.3, f64::INFINITY).unwrap();
        let cp = Checkpoint::new(
            &CheckpointState::Lptn(s),
            ModelParams::new(0.0, 0.5, 3, 2),
            TruncationPolicy::default(),
            Some(q),
            3,
        );
        let mut buf = Vec::new();
        cp.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.header.beta, Some(f64::INFINITY));
        assert_eq!(back.header.protocol.unwrap().initial_temperature, f64::INFINITY);
        assert_eq!(back.header.step, 3);
    }
}
