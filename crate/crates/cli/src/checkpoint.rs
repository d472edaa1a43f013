//! Binary checkpoint persistence: magic-tagged little-endian parameter
//! blocks for external tooling, followed by a JSON state blob that
//! restores the training run byte-exactly (networks, optimizer,
//! environments, curriculum, and RNG streams).

use locopush_core::ppo::Trainer;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Leading magic bytes of every checkpoint file.
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HLOM";
/// Format version this build writes and reads.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Checkpoint persistence failures.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a checkpoint: leading bytes {got:?} instead of \"HLOM\"")]
    BadMagic { got: [u8; 4] },
    #[error("unsupported checkpoint version {got} (this build reads {supported})")]
    Version { got: u32, supported: u32 },
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint state blob malformed: {0}")]
    Json(#[from] serde_json::Error),
}

/// A saved training run: config digest, iteration counter, and the full
/// trainer state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    /// Digest of the canonical config rendering the run was started with.
    pub config_hash: [u8; 32],
    pub iteration: u64,
    pub trainer: Trainer,
}

/// Parameter blocks in declared layer order: per policy layer the weight
/// matrix (row-major) then the bias, the log standard deviations, the
/// critic layers likewise, then the two optimizer moment vectors.
fn param_blocks(t: &Trainer) -> Vec<Vec<f64>> {
    let mut blocks = Vec::new();
    for (w, b) in t.pi.mean_net.weights.iter().zip(&t.pi.mean_net.biases) {
        blocks.push(w.iter().copied().collect());
        blocks.push(b.to_vec());
    }
    blocks.push(t.pi.log_std.to_vec());
    for (w, b) in t.vf.net.weights.iter().zip(&t.vf.net.biases) {
        blocks.push(w.iter().copied().collect());
        blocks.push(b.to_vec());
    }
    blocks.push(t.opt.m.clone());
    blocks.push(t.opt.v.clone());
    blocks
}

/// Write the blocks back onto a trainer; the binary sections are
/// authoritative over the state blob they rode in with.
fn apply_blocks(t: &mut Trainer, blocks: &[Vec<f64>]) -> Result<(), CheckpointError> {
    let n_pi = t.pi.mean_net.weights.len();
    let n_vf = t.vf.net.weights.len();
    let expected = 2 * n_pi + 1 + 2 * n_vf + 2;
    if blocks.len() != expected {
        return Err(CheckpointError::Corrupt(format!(
            "{} parameter blocks, expected {expected}",
            blocks.len()
        )));
    }
    let mut idx = 0;
    let mut take = |label: &str, len: usize| -> Result<&Vec<f64>, CheckpointError> {
        let b = &blocks[idx];
        idx += 1;
        if b.len() != len {
            return Err(CheckpointError::Corrupt(format!(
                "block {idx} ({label}) holds {} values, expected {len}",
                b.len()
            )));
        }
        Ok(b)
    };
    for l in 0..n_pi {
        let (rows, cols) = t.pi.mean_net.weights[l].dim();
        let w = take("policy weight", rows * cols)?.clone();
        t.pi.mean_net.weights[l]
            .as_slice_mut()
            .expect("weights are contiguous")
            .copy_from_slice(&w);
        let b = take("policy bias", rows)?.clone();
        t.pi.mean_net.biases[l].as_slice_mut().unwrap().copy_from_slice(&b);
    }
    let ls = take("log std", t.pi.log_std.len())?.clone();
    t.pi.log_std.as_slice_mut().unwrap().copy_from_slice(&ls);
    for l in 0..n_vf {
        let (rows, cols) = t.vf.net.weights[l].dim();
        let w = take("critic weight", rows * cols)?.clone();
        t.vf.net.weights[l].as_slice_mut().unwrap().copy_from_slice(&w);
        let b = take("critic bias", rows)?.clone();
        t.vf.net.biases[l].as_slice_mut().unwrap().copy_from_slice(&b);
    }
    let m = take("first moments", t.opt.m.len())?.clone();
    t.opt.m = m;
    let v = take("second moments", t.opt.v.len())?.clone();
    t.opt.v = v;
    Ok(())
}

/// Serialize a checkpoint to its wire format.
pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>, CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&ck.config_hash);
    out.extend_from_slice(&ck.iteration.to_le_bytes());
    let blocks = param_blocks(&ck.trainer);
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for block in &blocks {
        out.extend_from_slice(&(block.len() as u64).to_le_bytes());
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&ck.trainer.opt.t.to_le_bytes());
    out.extend_from_slice(&(ck.trainer.curriculum.level as u64).to_le_bytes());
    let window: Vec<u8> =
        ck.trainer.curriculum.window.iter().map(|&b| b as u8).collect();
    out.extend_from_slice(&(window.len() as u64).to_le_bytes());
    out.extend_from_slice(&window);
    let blob = serde_json::to_vec(&ck.trainer)?;
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(&blob);
    Ok(out)
}

/// Cursor over the wire bytes with truncation-aware reads.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parse a checkpoint from its wire format.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic { got: magic });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { got: version, supported: CHECKPOINT_VERSION });
    }
    let config_hash: [u8; 32] = r.take(32, "config hash")?.try_into().unwrap();
    let iteration = r.u64("iteration")?;
    let n_blocks = r.u32("block count")? as usize;
    let mut blocks = Vec::with_capacity(n_blocks.min(1024));
    for i in 0..n_blocks {
        let len = r.u64("block length")? as usize;
        let n_bytes = len
            .checked_mul(8)
            .ok_or_else(|| CheckpointError::Corrupt(format!("block {i} length overflows")))?;
        let raw = r.take(n_bytes, &format!("block {i}"))?;
        let mut block = Vec::with_capacity(len);
        for chunk in raw.chunks_exact(8) {
            block.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        blocks.push(block);
    }
    let adam_t = r.u64("optimizer step count")?;
    let level = r.u64("curriculum level")? as usize;
    let window_len = r.u64("curriculum window length")? as usize;
    let window_bytes = r.take(window_len, "curriculum window")?;
    let blob_len = r.u64("state blob length")? as usize;
    let blob = r.take(blob_len, "state blob")?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes after the state blob",
            bytes.len() - r.pos
        )));
    }

    let mut trainer: Trainer = serde_json::from_slice(blob)?;
    apply_blocks(&mut trainer, &blocks)?;
    trainer.opt.t = adam_t;
    trainer.curriculum.level = level;
    trainer.curriculum.window = window_bytes.iter().map(|&b| b != 0).collect();
    trainer.iteration = iteration as usize;
    Ok(Checkpoint { config_hash, iteration, trainer })
}

/// Write a checkpoint file.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(ck)?;
    std::fs::write(path, bytes)
        .map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })
}

/// Read a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path)
        .map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use locopush_core::ppo::{PpoConfig, TrainSetup};

    fn tiny_trainer(seed: u64) -> Trainer {
        let setup = TrainSetup {
            ppo: PpoConfig {
                n_envs: 2,
                rollout_len: 4,
                epochs: 1,
                minibatches: 1,
                seed,
                ..PpoConfig::default()
            },
            actor_hidden: vec![8],
            critic_hidden: vec![8],
            ..TrainSetup::default()
        };
        Trainer::new(setup).unwrap()
    }

    fn tiny_checkpoint() -> Checkpoint {
        let mut trainer = tiny_trainer(5);
        trainer.iterate().unwrap();
        Checkpoint { config_hash: [7; 32], iteration: trainer.iteration as u64, trainer }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ck = tiny_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.bin");
        let path_b = dir.path().join("b.bin");
        save_checkpoint(&ck, &path_a).unwrap();
        let loaded = load_checkpoint(&path_a).unwrap();
        save_checkpoint(&loaded, &path_b).unwrap();
        let a = std::fs::read(&path_a).unwrap();
        let b = std::fs::read(&path_b).unwrap();
        assert_eq!(a, b);
        assert_eq!(loaded.config_hash, ck.config_hash);
        assert_eq!(loaded.iteration, ck.iteration);
    }

    #[test]
    fn decode_restores_the_exact_trainer_state() {
        let ck = tiny_checkpoint();
        let bytes = encode_checkpoint(&ck).unwrap();
        let loaded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(
            serde_json::to_string(&loaded.trainer).unwrap(),
            serde_json::to_string(&ck.trainer).unwrap()
        );
    }

    #[test]
    fn bad_magic_is_reported() {
        let ck = tiny_checkpoint();
        let mut bytes = encode_checkpoint(&ck).unwrap();
        bytes[0] = b'X';
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic { .. }), "{err}");
    }

    #[test]
    fn future_version_is_rejected() {
        let ck = tiny_checkpoint();
        let mut bytes = encode_checkpoint(&ck).unwrap();
        bytes[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::Version { .. }), "{err}");
    }

    #[test]
    fn truncation_is_reported_as_corrupt() {
        let ck = tiny_checkpoint();
        let bytes = encode_checkpoint(&ck).unwrap();
        for cut in [3, 7, 30, 47, 60, bytes.len() - 5] {
            let err = decode_checkpoint(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, CheckpointError::Corrupt(_) | CheckpointError::BadMagic { .. }),
                "cut {cut}: {err}"
            );
        }
    }

    #[test]
    fn binary_parameter_blocks_are_authoritative() {
        let ck = tiny_checkpoint();
        let mut bytes = encode_checkpoint(&ck).unwrap();
        // First block starts after magic, version, hash, iteration, and
        // block count, plus its own length prefix.
        let first_value = 4 + 4 + 32 + 8 + 4 + 8;
        let patched = 0.123456_f64;
        bytes[first_value..first_value + 8].copy_from_slice(&patched.to_le_bytes());
        let loaded = decode_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.trainer.pi.mean_net.weights[0].as_slice().unwrap()[0], patched);
    }

    #[test]
    fn resumed_trainer_continues_identically() {
        let mut live = tiny_trainer(11);
        let s1 = live.iterate().unwrap();
        let ck = Checkpoint {
            config_hash: [0; 32],
            iteration: live.iteration as u64,
            trainer: live.clone(),
        };
        let bytes = encode_checkpoint(&ck).unwrap();
        let mut resumed = decode_checkpoint(&bytes).unwrap().trainer;
        assert_eq!(s1.iteration, 1);
        let a = live.iterate().unwrap();
        let b = resumed.iterate().unwrap();
        assert_eq!(a, b);
    }
}
