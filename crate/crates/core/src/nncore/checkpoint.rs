//! Binary checkpoint container, little-endian throughout:
//!
//! ```text
//! magic "RSLUCKPT" | version u32 | parameter count u32
//! per parameter: name length u32, name bytes, rank u32, dims u64 x rank, values f64 x prod(dims)
//! optimizer: step u64, then per parameter: m values, v values
//! metadata: length u64, UTF-8 JSON bytes
//! ```

use std::io::{Read, Write};

use super::{NnError, ParameterStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RSLUCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, store: &ParameterStore, metadata: &str) -> Result<(), NnError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.params() {
        w.write_all(&(p.name.len() as u32).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.value.shape().len() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        write_values(&mut w, p.value.data())?;
    }
    w.write_all(&store.step().to_le_bytes())?;
    for p in store.params() {
        write_values(&mut w, p.m.data())?;
        write_values(&mut w, p.v.data())?;
    }
    w.write_all(&(metadata.len() as u64).to_le_bytes())?;
    w.write_all(metadata.as_bytes())?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], NnError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| NnError::Checkpoint(format!("truncated: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn vec(&mut self, len: usize) -> Result<Vec<u8>, NnError> {
        let mut buf = Vec::new();
        (&mut self.inner).take(len as u64).read_to_end(&mut buf)?;
        if buf.len() != len {
            return Err(NnError::Checkpoint("truncated".into()));
        }
        Ok(buf)
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>, NnError> {
        let raw = self.vec(n * 8)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Reads a checkpoint written by [`write_checkpoint`]; returns the store
/// (values and optimizer state) and the metadata string.
pub fn read_checkpoint<R: Read>(r: R) -> Result<(ParameterStore, String), NnError> {
    let mut r = Reader { inner: r };
    if &r.bytes::<8>()? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.vec(name_len)?).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let values = r.values(dims.iter().product())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Checkpoint(format!("parameter `{name}` has non-finite values")));
        }
        store.add(name, Tensor::from_vec(&dims, values)?);
    }
    let step = r.u64()?;
    store.set_step(step);
    for p in store.params_mut() {
        let n = p.value.len();
        let shape = p.value.shape().to_vec();
        p.m = Tensor::from_vec(&shape, r.values(n)?)?;
        p.v = Tensor::from_vec(&shape, r.values(n)?)?;
    }
    let meta_len = r.u64()? as usize;
    let metadata = String::from_utf8(r.vec(meta_len)?).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    Ok((store, metadata))
}
