//! On-disk formats for trained networks and per-stage sampler snapshots.
//!
//! A network file (`*.asbsnet`) is laid out as
//!
//! ```text
//! offset  size  content
//! 0       8     magic  b"ASBSNET\0"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      4     header length H in bytes, u32 little-endian
//! 16      H     UTF-8 JSON header
//! 16+H    8*N   payload: IEEE-754 binary64 values, little-endian
//! ```
//!
//! The header holds the network spec, the parameter layout table (name, offset,
//! rows, cols; weights row-major `(fan_in, fan_out)`), `"endianness": "little"`,
//! `"dtype": "f64"`, the parameter count and the list of payload sections. The
//! payload is the concatenation of those sections, each `n_params` values long:
//! always `params`, followed by `adam_m` and `adam_v` when optimizer state is
//! stored (its step count and hyperparameters then appear under `adam`).
//!
//! A stage checkpoint is a directory with `control.asbsnet`, `corrector.asbsnet`
//! when the corrector is learned, and `meta.json`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffnet::{AdamHyper, AdamState, LayoutEntry, Mlp, MlpParams, MlpSpec};
use crate::error::{Error, Result};
use crate::trainer::{Corrector, EpochRecord, TrainedSampler};

pub const MAGIC: &[u8; 8] = b"ASBSNET\0";
pub const FORMAT_VERSION: u32 = 1;
pub const CONTROL_FILE: &str = "control.asbsnet";
pub const CORRECTOR_FILE: &str = "corrector.asbsnet";
pub const META_FILE: &str = "meta.json";

const MAX_HEADER: u32 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AdamHeader {
    step: u64,
    hyper: AdamHyper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetHeader {
    spec: MlpSpec,
    layout: Vec<LayoutEntry>,
    endianness: String,
    dtype: String,
    n_params: usize,
    sections: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adam: Option<AdamHeader>,
}

/// Serializes a network and, optionally, its optimizer state.
pub fn write_net<W: Write>(mut w: W, net: &Mlp<f64>, opt: Option<&AdamState<f64>>) -> Result<()> {
    let n = net.n_params();
    if let Some(o) = opt {
        if o.m.len() != n || o.v.len() != n {
            return Err(Error::SizeMismatch(format!("optimizer state has {} entries, network {n}", o.m.len())));
        }
    }
    let mut sections = vec!["params".to_string()];
    if opt.is_some() {
        sections.push("adam_m".into());
        sections.push("adam_v".into());
    }
    let header = NetHeader {
        spec: net.spec.clone(),
        layout: net.params.layout.clone(),
        endianness: "little".into(),
        dtype: "f64".into(),
        n_params: n,
        sections,
        adam: opt.map(|o| AdamHeader {
            step: o.step,
            hyper: o.hyper.clone(),
        }),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * n * header.sections.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    let mut put = |vals: &[f64]| {
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    put(&net.params.values);
    if let Some(o) = opt {
        put(&o.m);
        put(&o.v);
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated preamble".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes).map_err(|_| Error::Format(format!("truncated {what} section")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Reads a network written by [`write_net`].
pub fn read_net<R: Read>(mut r: R) -> Result<(Mlp<f64>, Option<AdamState<f64>>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a network file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let len = read_u32(&mut r)?;
    if len > MAX_HEADER {
        return Err(Error::Format(format!("header length {len} too large")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| Error::Format("truncated header".into()))?;
    let header: NetHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.endianness != "little" || header.dtype != "f64" {
        return Err(Error::Format(format!("unsupported encoding {}/{}", header.endianness, header.dtype)));
    }
    header.spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    if header.layout != header.spec.layout() || header.n_params != header.spec.n_params() {
        return Err(Error::Format("layout table disagrees with the network spec".into()));
    }
    let with_adam = match header.sections.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["params"] => false,
        ["params", "adam_m", "adam_v"] => true,
        other => return Err(Error::Format(format!("unexpected sections {other:?}"))),
    };
    if with_adam != header.adam.is_some() {
        return Err(Error::Format("optimizer sections and header disagree".into()));
    }
    let n = header.n_params;
    let values = read_f64s(&mut r, n, "params")?;
    let opt = match header.adam {
        Some(a) => {
            let m = read_f64s(&mut r, n, "adam_m")?;
            let v = read_f64s(&mut r, n, "adam_v")?;
            Some(AdamState {
                step: a.step,
                m,
                v,
                hyper: a.hyper,
            })
        }
        None => None,
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let net = Mlp {
        spec: header.spec,
        params: MlpParams {
            values,
            layout: header.layout,
        },
    };
    Ok((net, opt))
}

/// Writes to a sibling temporary file first so a crash never leaves a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_net(path: &Path, net: &Mlp<f64>, opt: Option<&AdamState<f64>>) -> Result<()> {
    let mut buf = Vec::new();
    write_net(&mut buf, net, opt)?;
    write_atomic(path, &buf)
}

pub fn load_net(path: &Path) -> Result<(Mlp<f64>, Option<AdamState<f64>>)> {
    let bytes = fs::read(path)?;
    read_net(bytes.as_slice())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrectorMeta {
    /// Stored next to the metadata in [`CORRECTOR_FILE`].
    Net,
    Gaussian { mean: f64, var: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMeta {
    pub format_version: u32,
    /// Completed stages at the time of writing.
    pub stage: usize,
    pub seed: u64,
    pub control_steps: u64,
    pub corrector_steps: u64,
    pub corrector: CorrectorMeta,
    /// Caller-supplied description of the run (energy, prior, schedule, training settings).
    pub config: serde_json::Value,
    pub trace: Vec<EpochRecord>,
}

/// Nets and metadata restored from a stage directory.
#[derive(Clone, Debug)]
pub struct StageCheckpoint {
    pub control: Mlp<f64>,
    pub control_opt: AdamState<f64>,
    pub corrector: Corrector<f64>,
    pub meta: StageMeta,
}

/// Writes the current state of `sampler` into `dir`, creating it if needed.
/// Replay buffers are not persisted.
pub fn save_stage(dir: &Path, sampler: &TrainedSampler<f64>, config: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_net(&dir.join(CONTROL_FILE), &sampler.control, Some(&sampler.control_opt))?;
    let corrector = match &sampler.corrector {
        Corrector::Net { net, opt } => {
            save_net(&dir.join(CORRECTOR_FILE), net, Some(opt))?;
            CorrectorMeta::Net
        }
        Corrector::Gaussian { mean, var } => CorrectorMeta::Gaussian { mean: *mean, var: *var },
    };
    let meta = StageMeta {
        format_version: FORMAT_VERSION,
        stage: sampler.stage,
        seed: sampler.cfg.seed,
        control_steps: sampler.control_steps,
        corrector_steps: sampler.corrector_steps,
        corrector,
        config,
        trace: sampler.trace.clone(),
    };
    // metadata goes last: its presence marks the directory as complete
    write_atomic(&dir.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)
}

pub fn load_stage(dir: &Path) -> Result<StageCheckpoint> {
    let meta_bytes = fs::read(dir.join(META_FILE))?;
    let meta: StageMeta = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Format(format!("{META_FILE}: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {}", meta.format_version)));
    }
    let (control, opt) = load_net(&dir.join(CONTROL_FILE))?;
    let control_opt = opt.ok_or_else(|| Error::Format("control file lacks optimizer state".into()))?;
    let corrector = match &meta.corrector {
        CorrectorMeta::Net => {
            let (net, opt) = load_net(&dir.join(CORRECTOR_FILE))?;
            let opt = opt.ok_or_else(|| Error::Format("corrector file lacks optimizer state".into()))?;
            if net.spec.input_dim != control.spec.input_dim {
                return Err(Error::Format("corrector and control dimensions differ".into()));
            }
            Corrector::Net { net, opt }
        }
        CorrectorMeta::Gaussian { mean, var } => Corrector::Gaussian { mean: *mean, var: *var },
    };
    Ok(StageCheckpoint {
        control,
        control_opt,
        corrector,
        meta,
    })
}
