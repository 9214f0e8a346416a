//! Binary checkpoint.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `"4C4D"` | 4 bytes |
//! | version | u32 |
//! | Gaussian count `n` | u32 |
//! | SH degree, Fourier order | u32, u32 |
//! | Fourier period | f32 |
//! | world AABB `min[3]`, `max[3]` | 6 × f32 |
//! | iterations trained | u64 |
//! | decay variant code | u32 |
//! | arrays, each a u32 length then that many f32 | positions `3n`, temporal centers `n`, left quaternions `4n`, right quaternions `4n`, log-scales `4n`, opacity logits `n`, SH coefficients `n·3(N+1)(L+1)²`, distractor tags `n` (0 or 1), decay-network parameters `5057`, decay-network AABB `6` |
//! | training configuration | u32 length + UTF-8 JSON |
//! | RNG state | 32-byte seed, u64 stream, u128 word position |

use std::path::Path;

use crate::bounds::Aabb;
use crate::decaynet::{DecayNet, DecayVariant, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian4D;
use crate::sh::{ShConfig, MAX_SH_DEGREE};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"4C4D";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of a ChaCha stream cipher RNG.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub sh: ShConfig,
    pub aabb: Aabb,
    pub iterations: u64,
    pub decay_variant: DecayVariant,
    pub gaussians: Vec<Gaussian4D<f32>>,
    /// `true` for Gaussians that were seeded as random distractors.
    pub distractor: Vec<bool>,
    pub net: DecayNet<f32>,
    /// Training configuration echo (JSON).
    pub config_json: String,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.gaussians.len();
        if self.distractor.len() != n {
            return Err(Error::invalid("distractor tags do not match the Gaussian count"));
        }
        if self.net.params.len() != PARAM_COUNT {
            return Err(Error::invalid("decay network has the wrong parameter count"));
        }
        for g in &self.gaussians {
            g.check_shape(&self.sh)?;
        }
        let mut w = Vec::new();
        w.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut w, CHECKPOINT_VERSION);
        put_u32(&mut w, count_u32(n)?);
        put_u32(&mut w, count_u32(self.sh.degree)?);
        put_u32(&mut w, count_u32(self.sh.n_fourier)?);
        w.extend((self.sh.period as f32).to_le_bytes());
        for v in self.aabb.min.iter().chain(&self.aabb.max) {
            w.extend((*v as f32).to_le_bytes());
        }
        w.extend(self.iterations.to_le_bytes());
        put_u32(&mut w, self.decay_variant.code());

        let gs = &self.gaussians;
        put_array(&mut w, gs.iter().flat_map(|g| g.position))?;
        put_array(&mut w, gs.iter().map(|g| g.temporal_center))?;
        put_array(&mut w, gs.iter().flat_map(|g| g.rot_left))?;
        put_array(&mut w, gs.iter().flat_map(|g| g.rot_right))?;
        put_array(&mut w, gs.iter().flat_map(|g| g.log_scales))?;
        put_array(&mut w, gs.iter().map(|g| g.opacity_logit))?;
        put_array(&mut w, gs.iter().flat_map(|g| g.sh_coeffs.iter().copied()))?;
        put_array(&mut w, self.distractor.iter().map(|&d| if d { 1.0 } else { 0.0 }))?;
        put_array(&mut w, self.net.params.iter().copied())?;
        let b = &self.net.bounds;
        put_array(&mut w, b.min.iter().chain(&b.max).map(|&v| v as f32))?;

        put_u32(&mut w, count_u32(self.config_json.len())?);
        w.extend_from_slice(self.config_json.as_bytes());
        w.extend_from_slice(&self.rng.seed);
        w.extend(self.rng.stream.to_le_bytes());
        w.extend(self.rng.word_pos.to_le_bytes());
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::CorruptCheckpoint { offset: 0, what: "bad magic".into() });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let n = r.u32("Gaussian count")? as usize;
        let at = r.pos;
        let degree = r.u32("SH degree")? as usize;
        if degree > MAX_SH_DEGREE {
            return Err(r.corrupt_at(at, format!("SH degree {degree} out of range")));
        }
        let n_fourier = r.u32("Fourier order")? as usize;
        let at = r.pos;
        let period = r.f32("Fourier period")? as f64;
        let sh = ShConfig { degree, n_fourier, period };
        sh.validate().map_err(|e| r.corrupt_at(at, e.to_string()))?;
        let mut ab = [0.0f64; 6];
        for v in &mut ab {
            *v = r.f32("AABB")? as f64;
        }
        let aabb = Aabb::new([ab[0], ab[1], ab[2]], [ab[3], ab[4], ab[5]]);
        let iterations = r.u64("iterations")?;
        let at = r.pos;
        let code = r.u32("decay variant")?;
        let decay_variant =
            DecayVariant::from_code(code).ok_or_else(|| r.corrupt_at(at, format!("unknown decay variant {code}")))?;

        let nc = sh.coeff_count();
        let positions = r.array("positions", n.checked_mul(3))?;
        let t_centers = r.array("temporal centers", Some(n))?;
        let rot_left = r.array("left quaternions", n.checked_mul(4))?;
        let rot_right = r.array("right quaternions", n.checked_mul(4))?;
        let log_scales = r.array("log-scales", n.checked_mul(4))?;
        let logits = r.array("opacity logits", Some(n))?;
        let sh_coeffs = r.array("SH coefficients", n.checked_mul(nc))?;
        let at = r.pos;
        let tags = r.array("distractor tags", Some(n))?;
        let params = r.array("decay-network parameters", Some(PARAM_COUNT))?;
        let nb = r.array("decay-network AABB", Some(6))?;

        let mut distractor = Vec::with_capacity(n);
        for &t in &tags {
            distractor.push(match t {
                0.0 => false,
                1.0 => true,
                _ => return Err(r.corrupt_at(at, format!("distractor tag {t} is neither 0 nor 1"))),
            });
        }
        let gaussians = (0..n)
            .map(|i| Gaussian4D {
                position: [positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]],
                temporal_center: t_centers[i],
                rot_left: quad(&rot_left, i),
                rot_right: quad(&rot_right, i),
                log_scales: quad(&log_scales, i),
                opacity_logit: logits[i],
                sh_coeffs: sh_coeffs[i * nc..(i + 1) * nc].to_vec(),
            })
            .collect();
        let net = DecayNet {
            params,
            bounds: Aabb::new(
                [nb[0] as f64, nb[1] as f64, nb[2] as f64],
                [nb[3] as f64, nb[4] as f64, nb[5] as f64],
            ),
        };

        let len = r.u32("configuration length")? as usize;
        let at = r.pos;
        let cfg = r.take(len, "configuration")?;
        let config_json =
            String::from_utf8(cfg.to_vec()).map_err(|_| r.corrupt_at(at, "configuration is not UTF-8".to_string()))?;
        let mut seed = [0u8; 32];
        seed.copy_from_slice(r.take(32, "RNG seed")?);
        let stream = r.u64("RNG stream")?;
        let word_pos = u128::from_le_bytes(r.take(16, "RNG word position")?.try_into().expect("16 bytes"));
        if r.pos != bytes.len() {
            return Err(r.corrupt_at(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            sh,
            aabb,
            iterations,
            decay_variant,
            gaussians,
            distractor,
            net,
            config_json,
            rng: RngState { seed, stream, word_pos },
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn quad(v: &[f32], i: usize) -> [f32; 4] {
    [v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]]
}

fn count_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::invalid(format!("count {n} does not fit the checkpoint format")))
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend(v.to_le_bytes());
}

fn put_array(w: &mut Vec<u8>, values: impl Iterator<Item = f32>) -> Result<()> {
    let at = w.len();
    put_u32(w, 0);
    let mut n = 0usize;
    for v in values {
        w.extend(v.to_le_bytes());
        n += 1;
    }
    w[at..at + 4].copy_from_slice(&count_u32(n)?.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt_at(&self, offset: usize, what: String) -> Error {
        Error::CorruptCheckpoint { offset: offset as u64, what }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            self.corrupt_at(
                self.pos,
                format!("truncated while reading {what} ({n} bytes needed, {} left)", self.bytes.len() - self.pos),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    /// Length-prefixed `f32` array whose length must equal `expected`.
    fn array(&mut self, what: &str, expected: Option<usize>) -> Result<Vec<f32>> {
        let at = self.pos;
        let len = self.u32(&format!("length of {what}"))? as usize;
        match expected {
            Some(e) if e == len => {}
            Some(e) => return Err(self.corrupt_at(at, format!("array {what} has length {len}, expected {e}"))),
            None => return Err(self.corrupt_at(at, format!("array {what}: expected length overflows"))),
        }
        let raw = self.take(len.checked_mul(4).unwrap_or(usize::MAX), &format!("array {what}"))?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}
