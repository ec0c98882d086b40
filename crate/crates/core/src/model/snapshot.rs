//! Binary model snapshots.
//!
//! Layout (little-endian): magic `RDRM`, version `u32`, kind `u8`, then either
//! the transformer dims and seed (weights are regenerated from the seed) or the
//! n-gram count tables.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::{NGramModel, TinyTransformer, TransformerConfig};

pub const MAGIC: &[u8; 4] = b"RDRM";
pub const VERSION: u32 = 1;

const KIND_NGRAM: u8 = 0;
const KIND_TRANSFORMER: u8 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a model snapshot (bad magic)")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("unknown model kind {0}")]
    Kind(u8),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSnapshot {
    NGram(NGramModel),
    Transformer(TinyTransformer),
}

impl ModelSnapshot {
    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), SnapshotError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        match self {
            ModelSnapshot::NGram(m) => {
                w.write_u8(KIND_NGRAM)?;
                m.write_tables(w)?;
            }
            ModelSnapshot::Transformer(m) => {
                let c = m.config();
                w.write_u8(KIND_TRANSFORMER)?;
                for d in [c.layers, c.heads, c.hidden, c.vocab, c.max_positions] {
                    w.write_u32::<LittleEndian>(d as u32)?;
                }
                w.write_u64::<LittleEndian>(c.seed)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SnapshotError::Magic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(SnapshotError::Version(version));
        }
        match r.read_u8()? {
            KIND_NGRAM => Ok(ModelSnapshot::NGram(NGramModel::read_tables(r)?)),
            KIND_TRANSFORMER => {
                let mut dims = [0usize; 5];
                for d in &mut dims {
                    *d = r.read_u32::<LittleEndian>()? as usize;
                }
                let seed = r.read_u64::<LittleEndian>()?;
                let [layers, heads, hidden, vocab, max_positions] = dims;
                if heads == 0 || hidden % heads != 0 {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        "hidden not divisible by heads",
                    )
                    .into());
                }
                Ok(ModelSnapshot::Transformer(TinyTransformer::new(
                    TransformerConfig {
                        layers,
                        heads,
                        hidden,
                        vocab,
                        max_positions,
                        seed,
                    },
                )))
            }
            k => Err(SnapshotError::Kind(k)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}
