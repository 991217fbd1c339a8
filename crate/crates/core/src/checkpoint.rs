//! Binary checkpoint persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"GGEN"
//! version  u16 (currently 1)
//! mode     u8 (0 = geo, 1 = baseline)
//! latent_scale f64
//! seed     u64
//! nets     u16, then per net:
//!   kind       u8 (0 = generator, 1 = discriminator)
//!   latent,cond,out  u32 x 3 (latent = 0 for the discriminator)
//!   activation u8 (0 = tanh, 1 = softplus)
//!   hidden     u32 count, then u32 widths
//!   params     u64 count, then f64 payload
//! adam     u8 flag, then per net: u64 step count, f64 m payload, f64 v payload
//! config   u32 length, UTF-8 TOML snapshot of the run config
//! crc32    u32 over every preceding byte
//! ```
//!
//! Loading validates the magic, the version and the CRC before touching
//! the payload; a bad magic or version is a version error, anything
//! truncated or corrupted is an integrity error.

use crate::config::{RunConfig, TrainMode};
use crate::error::{Error, Result};
use crate::models::{Activation, DiscriminatorNet, GeneratorNet, Mlp, MlpSpec};
use crate::training::{AdamState, TrainedModels};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GGEN";
const VERSION: u16 = 1;

/// Everything a run persists: the model pair, optionally the optimizer
/// state, and the config snapshot that produced them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub models: TrainedModels,
    pub optimizer: Option<(AdamState, AdamState)>,
    pub config: RunConfig,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.f64(*v);
        }
    }

    fn bytes(&mut self, bs: &[u8]) {
        self.buf.extend_from_slice(bs);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Integrity(format!(
                "checkpoint truncated at offset {} (wanted {n} more bytes)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Softplus => 1,
    }
}

fn activation_from(tag: u8) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Softplus),
        other => Err(Error::Integrity(format!("unknown activation tag {other}"))),
    }
}

fn write_net(w: &mut Writer, kind: u8, latent: u32, cond: u32, out: u32, mlp: &Mlp) {
    w.u8(kind);
    w.u32(latent);
    w.u32(cond);
    w.u32(out);
    w.u8(activation_tag(mlp.spec().activation));
    w.u32(mlp.spec().hidden.len() as u32);
    for h in &mlp.spec().hidden {
        w.u32(*h as u32);
    }
    w.u64(mlp.params().len() as u64);
    w.f64s(mlp.params());
}

struct NetRecord {
    kind: u8,
    latent: usize,
    cond: usize,
    out: usize,
    mlp: Mlp,
}

fn read_net(r: &mut Reader) -> Result<NetRecord> {
    let kind = r.u8()?;
    let latent = r.u32()? as usize;
    let cond = r.u32()? as usize;
    let out = r.u32()? as usize;
    let activation = activation_from(r.u8()?)?;
    let n_hidden = r.u32()? as usize;
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(r.u32()? as usize);
    }
    let n_params = r.u64()? as usize;
    let params = r.f64s(n_params)?;
    // generator: input [z; x] -> out; discriminator: input [x; y] -> logit
    let (input_dim, output_dim) = if kind == 0 { (latent + cond, out) } else { (cond + out, 1) };
    let spec = MlpSpec::new(input_dim, &hidden, output_dim, activation);
    if spec.param_count() != n_params {
        return Err(Error::Integrity(format!(
            "parameter count {n_params} does not match dims header ({} expected)",
            spec.param_count()
        )));
    }
    let mlp = Mlp::with_params(spec, params)
        .map_err(|e| Error::Integrity(format!("invalid parameter payload: {e}")))?;
    Ok(NetRecord { kind, latent, cond, out, mlp })
}

/// Serialize a checkpoint to bytes.
pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u8(match ckpt.models.mode {
        TrainMode::Geo => 0,
        TrainMode::Baseline => 1,
    });
    w.f64(ckpt.models.latent_scale);
    w.u64(ckpt.config.seed);
    w.u16(2);
    let gen = &ckpt.models.gen;
    write_net(
        &mut w,
        0,
        gen.latent_dim() as u32,
        gen.cond_dim() as u32,
        gen.output_dim() as u32,
        gen.mlp(),
    );
    let disc = &ckpt.models.disc;
    write_net(&mut w, 1, 0, disc.cond_dim() as u32, disc.data_dim() as u32, disc.mlp());
    match &ckpt.optimizer {
        Some((g, d)) => {
            w.u8(1);
            for state in [g, d] {
                w.u64(state.step_count());
                let (m, v) = state.moments();
                w.f64s(m);
                w.f64s(v);
            }
        }
        None => w.u8(0),
    }
    let cfg_toml = ckpt.config.to_toml_string();
    w.u32(cfg_toml.len() as u32);
    w.bytes(cfg_toml.as_bytes());
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    Ok(w.buf)
}

/// Parse a checkpoint from bytes, validating magic, version and CRC.
pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
    if buf.len() < 10 {
        return Err(Error::Integrity(format!("checkpoint too short: {} bytes", buf.len())));
    }
    if &buf[..4] != MAGIC {
        return Err(Error::Version(format!(
            "bad magic {:02x?}, not a checkpoint of this tool",
            &buf[..4]
        )));
    }
    let version = u16::from_le_bytes(buf[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let body = &buf[..buf.len() - 4];
    let stored_crc = u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored_crc != actual {
        return Err(Error::Integrity(format!(
            "CRC mismatch: stored {stored_crc:08x}, computed {actual:08x}"
        )));
    }

    let mut r = Reader::new(&body[6..]);
    let mode = match r.u8()? {
        0 => TrainMode::Geo,
        1 => TrainMode::Baseline,
        other => return Err(Error::Integrity(format!("unknown mode tag {other}"))),
    };
    let latent_scale = r.f64()?;
    let _seed = r.u64()?;
    let n_nets = r.u16()?;
    if n_nets != 2 {
        return Err(Error::Integrity(format!("expected 2 nets, found {n_nets}")));
    }
    let first = read_net(&mut r)?;
    let second = read_net(&mut r)?;
    if first.kind != 0 || second.kind != 1 {
        return Err(Error::Integrity("nets out of order in checkpoint".into()));
    }
    let gen = GeneratorNet::from_mlp(first.mlp, first.latent, first.cond)
        .map_err(|e| Error::Integrity(format!("generator header: {e}")))?;
    if gen.output_dim() != first.out {
        return Err(Error::Integrity("generator output dim mismatch".into()));
    }
    let disc = DiscriminatorNet::from_mlp(second.mlp, second.cond, second.out)
        .map_err(|e| Error::Integrity(format!("discriminator header: {e}")))?;

    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let mut states = Vec::new();
            for dim in [gen.mlp().params().len(), disc.mlp().params().len()] {
                let t = r.u64()?;
                let m = r.f64s(dim)?;
                let v = r.f64s(dim)?;
                states.push(AdamState::from_parts(m, v, t));
            }
            let d_state = states.pop().unwrap();
            let g_state = states.pop().unwrap();
            Some((g_state, d_state))
        }
        other => return Err(Error::Integrity(format!("bad optimizer flag {other}"))),
    };
    let cfg_len = r.u32()? as usize;
    let cfg_raw = r.take(cfg_len)?;
    let cfg_text = std::str::from_utf8(cfg_raw)
        .map_err(|e| Error::Integrity(format!("config payload not UTF-8: {e}")))?;
    let config = RunConfig::from_toml_str(cfg_text)
        .map_err(|e| Error::Integrity(format!("embedded config invalid: {e}")))?;

    Ok(Checkpoint {
        models: TrainedModels { gen, disc, latent_scale, mode },
        optimizer,
        config,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = to_bytes(ckpt)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Integrity(format!("cannot read {}: {e}", path.display())))?;
    from_bytes(&bytes)
}
