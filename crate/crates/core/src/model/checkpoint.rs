//! Binary checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! magic            8 bytes  "BOWSEQ2S"
//! version          u32
//! src_vocab        u64
//! tgt_vocab        u64
//! emb_size         u64
//! hidden_size      u64
//! enc_layers       u64
//! dec_layers       u64
//! dropout          f64
//! generator_input  u8       0 = context, 1 = concat
//! param_count      u64
//! per parameter:
//!   name_len       u32
//!   name           name_len bytes, UTF-8
//!   rank           u32
//!   dims           rank x u64
//!   values         prod(dims) x f64, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{Architecture, GeneratorInput, ModelConfig, Seq2Seq};
use crate::autodiff::ParameterStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BOWSEQ2S";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Seq2Seq) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [c.src_vocab, c.tgt_vocab, c.emb_size, c.hidden_size, c.enc_layers, c.dec_layers] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.dropout.to_le_bytes());
    out.push(c.generator_input.code());
    out.extend_from_slice(&(model.store.len() as u64).to_le_bytes());
    for (_, p) in model.store.iter() {
        out.extend_from_slice(&(p.name().len() as u32).to_le_bytes());
        out.extend_from_slice(p.name().as_bytes());
        let shape = p.value().shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.value().data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Seq2Seq> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let config = ModelConfig {
        src_vocab: r.usize()?,
        tgt_vocab: r.usize()?,
        emb_size: r.usize()?,
        hidden_size: r.usize()?,
        enc_layers: r.usize()?,
        dec_layers: r.usize()?,
        dropout: r.f64()?,
        generator_input: GeneratorInput::from_code(r.u8()?)?,
    };
    let mut store = ParameterStore::new();
    let arch = Architecture::register(config, &mut store)?;
    let count = r.usize()?;
    if count != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {count} parameters, configuration expects {}",
            store.len()
        )));
    }
    for id in store.ids().collect::<Vec<_>>() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        if name != store.name(id) {
            return Err(Error::Checkpoint(format!(
                "expected parameter {:?}, found {name:?}",
                store.name(id)
            )));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if dims != store.value(id).shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name:?} has shape {dims:?}, expected {:?}",
                store.value(id).shape()
            )));
        }
        for x in store.value_mut(id).data_mut() {
            *x = r.f64()?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Seq2Seq { arch, store })
}

pub fn save_checkpoint(model: &Seq2Seq, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Seq2Seq> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
