//! `FGNN` model checkpoints.
//!
//! Layout (little-endian): magic `FGNN`, u32 version, config block
//! (u32 input_dim, u32 hidden count, u32 widths, u32 feature_dim,
//! u32 num_classes, u8 activation, f64 dropout, u64 seed), u64 parameter
//! count and f64 parameters, u64 Adam step plus f64 first and second
//! moments, then the RNG as a 32-byte seed, u64 stream and u128 word position.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, EncoderConfig};
use super::model::{AdamState, ModelState, ParamLayout};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FGNN";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(state: &ModelState, out: W) -> Result<()> {
    let mut w = Writer::new(out);
    let c = &state.config;
    w.bytes(MAGIC)?;
    w.u32(VERSION)?;
    w.usize32(c.input_dim)?;
    w.usize32(c.hidden_dims.len())?;
    for &d in &c.hidden_dims {
        w.usize32(d)?;
    }
    w.usize32(c.feature_dim)?;
    w.usize32(c.num_classes)?;
    w.u8(c.activation.tag())?;
    w.f64(c.dropout_rate)?;
    w.u64(c.seed)?;
    w.u64(state.params.len() as u64)?;
    w.f64s(&state.params)?;
    w.u64(state.optimizer.step)?;
    w.f64s(&state.optimizer.m)?;
    w.f64s(&state.optimizer.v)?;
    w.bytes(&state.rng.get_seed())?;
    w.u64(state.rng.get_stream())?;
    w.u128(state.rng.get_word_pos())?;
    w.into_inner().flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<ModelState> {
    let mut r = Reader::new(input);
    r.header(MAGIC, VERSION)?;
    let input_dim = r.usize32()?;
    let n_hidden = r.usize32()?;
    let hidden_dims = (0..n_hidden).map(|_| r.usize32()).collect::<Result<Vec<_>>>()?;
    let feature_dim = r.usize32()?;
    let num_classes = r.usize32()?;
    let tag = r.u8()?;
    let activation = Activation::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))?;
    let dropout_rate = r.f64()?;
    let seed = r.u64()?;
    let config = EncoderConfig { input_dim, hidden_dims, feature_dim, num_classes, activation, dropout_rate, seed };
    config.validate().map_err(|e| Error::Format(format!("invalid config block: {e}")))?;
    let layout = ParamLayout::new(&config);
    let count = r.u64()? as usize;
    if count != layout.len {
        return Err(Error::Format(format!("{count} parameters stored, config implies {}", layout.len)));
    }
    let params = r.f64s(count)?;
    let step = r.u64()?;
    let m = r.f64s(count)?;
    let v = r.f64s(count)?;
    let rng_seed = r.array::<32>()?;
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    r.finish()?;
    let mut rng = ChaCha8Rng::from_seed(rng_seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(ModelState { config, layout, params, optimizer: AdamState { step, m, v }, rng })
}

pub fn checkpoint_to_bytes(state: &ModelState) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(state, &mut buf)?;
    Ok(buf)
}

pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    write_checkpoint(state, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
