use std::collections::HashSet;
use std::path::Path;

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::nnet::ParamStore;

const MAGIC: &[u8; 4] = b"CSC1";

/// Serialises `params` as 32-bit floats, tensors in name order.
pub fn encode_checkpoint<T: Scalar>(params: &ParamStore<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + params.num_scalars() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize || t.rank() > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "parameter '{name}' cannot be stored"
            )));
        }
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn parse(buf: &[u8]) -> std::result::Result<ParamStore<f32>, String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err("bad magic, expected CSC1".into());
    }
    let count = r.u32("tensor count")?;
    let mut store = ParamStore::new();
    let mut seen = HashSet::new();
    for _ in 0..count {
        let n = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(n, "name")?)
            .map_err(|_| "parameter name is not UTF-8".to_string())?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(format!("duplicate parameter '{name}'"));
        }
        let rank = r.take(1, "rank")?[0] as usize;
        let shape = (0..rank)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let numel = crate::autodiff::numel(&shape);
        let payload = r.take(numel * 4, &format!("payload of '{name}'"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(name, Tensor::new(shape, data).map_err(|e| e.to_string())?);
    }
    if r.pos != buf.len() {
        return Err(format!("{} trailing bytes", buf.len() - r.pos));
    }
    Ok(store)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<ParamStore<f32>> {
    parse(buf).map_err(|reason| Error::Checkpoint {
        path: "<memory>".into(),
        reason,
    })
}

pub fn save_checkpoint<T: Scalar>(params: &ParamStore<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore<f32>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&buf).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}
