//! `VGGW` v1: the checkpoint and pretrained-weight interchange format.
//!
//! ```text
//! "VGGW"  u32 version=1  u32 tensor_count
//! per tensor:
//!   u16 name_len  name (UTF-8)  u8 dtype (0 = f32)  u8 rank  rank × u32 dims
//!   product(dims) × f32
//! ```
//! All integers and floats little-endian, tensors row-major, no padding.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const VGGW_MAGIC: &[u8; 4] = b"VGGW";
pub const VGGW_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const CHUNK: usize = 1 << 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Accept a final classification layer of a different class count and
    /// re-initialize it (He-uniform, `head_seed`) instead of failing.
    pub replace_head: bool,
    pub head_seed: u64,
}

/// Writes a complete `VGGW` stream.
pub fn write_vggw<'a, W: Write>(
    out: &mut W,
    tensors: impl ExactSizeIterator<Item = (&'a str, &'a Tensor<f32>)>,
) -> Result<()> {
    let io = |e| Error::io("<vggw stream>", e);
    out.write_all(VGGW_MAGIC).map_err(io)?;
    out.write_all(&VGGW_VERSION.to_le_bytes()).map_err(io)?;
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Format("too many tensors".into()))?;
    out.write_all(&count.to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(CHUNK * 4);
    for (name, tensor) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("tensor name `{name}` is too long")))?;
        let rank = u8::try_from(tensor.rank())
            .map_err(|_| Error::Format(format!("tensor `{name}` has too many dimensions")))?;
        out.write_all(&name_len.to_le_bytes()).map_err(io)?;
        out.write_all(name.as_bytes()).map_err(io)?;
        out.write_all(&[DTYPE_F32, rank]).map_err(io)?;
        for &d in tensor.shape() {
            let d =
                u32::try_from(d).map_err(|_| Error::Format(format!("dimension of `{name}` exceeds u32")))?;
            out.write_all(&d.to_le_bytes()).map_err(io)?;
        }
        for chunk in tensor.data().chunks(CHUNK) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf).map_err(io)?;
        }
    }
    Ok(())
}

/// Name and dimensions of the next tensor record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorHeader {
    pub name: String,
    pub dims: Vec<usize>,
}

impl TensorHeader {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Streaming reader: headers first, then either [`VggwReader::read_data`]
/// or [`VggwReader::skip_data`] (skipping happens implicitly on the next
/// header call).
pub struct VggwReader<R> {
    inner: R,
    remaining: u32,
    pending: Option<TensorHeader>,
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated VGGW file".into())
    } else {
        Error::io("<vggw stream>", e)
    }
}

impl<R: Read> VggwReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        inner.read_exact(&mut magic).map_err(truncated)?;
        if &magic != VGGW_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, not a VGGW file")));
        }
        let version = read_u32(&mut inner)?;
        if version != VGGW_VERSION {
            return Err(Error::Format(format!("unsupported VGGW version {version}")));
        }
        let remaining = read_u32(&mut inner)?;
        Ok(VggwReader {
            inner,
            remaining,
            pending: None,
        })
    }

    pub fn remaining(&self) -> usize {
        self.remaining as usize
    }

    pub fn next_header(&mut self) -> Result<Option<TensorHeader>> {
        self.skip_data()?;
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        let mut len = [0u8; 2];
        self.inner.read_exact(&mut len).map_err(truncated)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        self.inner.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let mut tag = [0u8; 2];
        self.inner.read_exact(&mut tag).map_err(truncated)?;
        let [dtype, rank] = tag;
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!(
                "tensor `{name}` has unsupported dtype {dtype}"
            )));
        }
        if rank == 0 {
            return Err(Error::Format(format!("tensor `{name}` has rank 0")));
        }
        let dims = (0..rank)
            .map(|_| read_u32(&mut self.inner).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) {
            return Err(Error::Format(format!("tensor `{name}` has a zero dimension")));
        }
        let header = TensorHeader { name, dims };
        self.pending = Some(header.clone());
        Ok(Some(header))
    }

    /// Reads the payload of the current record into `out`.
    pub fn read_data(&mut self, out: &mut [f32]) -> Result<()> {
        let header = self
            .pending
            .take()
            .ok_or_else(|| Error::State("no pending VGGW record".into()))?;
        if header.len() != out.len() {
            return Err(Error::Integrity {
                reason: format!("payload has {} values, destination {}", header.len(), out.len()),
                name: header.name,
            });
        }
        let mut buf = vec![0u8; CHUNK * 4];
        for chunk in out.chunks_mut(CHUNK) {
            let bytes = &mut buf[..chunk.len() * 4];
            self.inner.read_exact(bytes).map_err(truncated)?;
            for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(4)) {
                *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
        Ok(())
    }

    pub fn skip_data(&mut self) -> Result<()> {
        if let Some(header) = self.pending.take() {
            let bytes = header.len() as u64 * 4;
            let copied = io::copy(&mut (&mut self.inner).take(bytes), &mut io::sink()).map_err(truncated)?;
            if copied != bytes {
                return Err(Error::Format("truncated VGGW file".into()));
            }
        }
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads every tensor of a `VGGW` stream into memory.
pub fn read_vggw(input: impl Read) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut reader = VggwReader::new(input)?;
    let mut out = Vec::with_capacity(reader.remaining());
    while let Some(header) = reader.next_header()? {
        let mut data = vec![0f32; header.len()];
        reader.read_data(&mut data)?;
        out.push((header.name, Tensor::new(&header.dims, data)?));
    }
    let mut trailing = [0u8; 1];
    if reader.inner.read(&mut trailing).map_err(truncated)? != 0 {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let params = model.named_params();
    write_vggw(&mut out, params.iter().map(|(n, p)| (n.as_str(), &p.value)))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Builds a model for `config` and fills it from the file at `path`.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    config: &ModelConfig,
    options: &LoadOptions,
) -> Result<Model<f32>> {
    let mut model = Model::build(config)?;
    load_into(&mut model, path.as_ref(), options)?;
    Ok(model)
}

/// Validates every record's name and shape against `model` and copies the
/// values in. Every model tensor must be present exactly once.
pub(crate) fn load_into(model: &mut Model<f32>, path: &Path, options: &LoadOptions) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = VggwReader::new(BufReader::with_capacity(1 << 20, file))?;
    let head = format!("{}.", model.head_prefix());
    let mut params = model.named_params_mut();
    let index: HashMap<String, usize> = params
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.clone(), i))
        .collect();
    let mut seen = vec![false; params.len()];
    let mut head_replaced = false;

    while let Some(header) = reader.next_header()? {
        let Some(&i) = index.get(&header.name) else {
            return Err(Error::Integrity {
                name: header.name,
                reason: "not part of this architecture".into(),
            });
        };
        if seen[i] {
            return Err(Error::Integrity {
                name: header.name,
                reason: "appears more than once".into(),
            });
        }
        seen[i] = true;
        let param = &mut params[i].1;
        if header.dims != param.value.shape() {
            if options.replace_head && header.name.starts_with(&head) {
                head_replaced = true;
                reader.skip_data()?;
                continue;
            }
            return Err(Error::Integrity {
                name: header.name.clone(),
                reason: format!(
                    "shape {:?} in file, architecture expects {:?}",
                    header.dims,
                    param.value.shape()
                ),
            });
        }
        reader.read_data(param.value.data_mut())?;
    }

    let missing: Vec<&str> = params
        .iter()
        .zip(&seen)
        .filter(|(_, &s)| !s)
        .map(|((n, _), _)| n.as_str())
        .collect();
    if let Some(first) = missing.first() {
        return Err(Error::Integrity {
            name: first.to_string(),
            reason: format!("missing from checkpoint (all missing: {})", missing.join(", ")),
        });
    }
    drop(params);
    if head_replaced {
        log::info!(
            "re-initializing {} for {} classes",
            model.head_prefix(),
            model.config().num_classes
        );
        model.reinit_head(options.head_seed);
    }
    Ok(())
}
