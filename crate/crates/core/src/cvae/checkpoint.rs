//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LGLVKR01"                      8-byte magic
//! u32 manifest_len, manifest      UTF-8, one line per parameter:
//!                                 "<name> <d0>x<d1>... <byte offset>\n"
//! u32 label_count, u32 × count    sorted learned class ids
//! f32 × Σ numel                   parameter values; offsets are relative to
//!                                 the start of this section
//! ```

use std::io::{Read, Write};

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LGLVKR01";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub labels: Vec<usize>,
}

pub fn write_checkpoint(out: &mut impl Write, params: &ParamSet, labels: &[usize]) -> Result<()> {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut manifest = String::new();
    let mut offset = 0usize;
    for id in params.ids() {
        let name = params.name(id);
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!(
                "unencodable parameter name `{name}`"
            )));
        }
        let value = params.value(id);
        let dims: Vec<String> = value.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{name} {} {offset}\n", dims.join("x")));
        offset += value.len() * 4;
    }

    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&u32_len(manifest.len())?.to_le_bytes())?;
    out.write_all(manifest.as_bytes())?;
    out.write_all(&u32_len(sorted.len())?.to_le_bytes())?;
    for label in &sorted {
        out.write_all(&u32_len(*label)?.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(offset);
    for id in params.ids() {
        for v in params.value(id).data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let manifest_len = cur.u32()? as usize;
    let manifest = std::str::from_utf8(cur.take(manifest_len)?)
        .map_err(|e| Error::Checkpoint(format!("manifest is not UTF-8: {e}")))?
        .to_string();
    let label_count = cur.u32()? as usize;
    let mut labels = Vec::with_capacity(label_count);
    for _ in 0..label_count {
        labels.push(cur.u32()? as usize);
    }
    if labels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Checkpoint(
            "label list is not strictly ascending".into(),
        ));
    }
    let data = &bytes[cur.pos..];

    let mut params = ParamSet::new();
    let mut expected_offset = 0usize;
    for line in manifest.lines() {
        let fields: Vec<&str> = line.split(' ').collect();
        let [name, dims, offset] = fields[..] else {
            return Err(Error::Checkpoint(format!(
                "malformed manifest line `{line}`"
            )));
        };
        let shape = dims
            .split('x')
            .map(str::parse::<usize>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Checkpoint(format!("bad shape `{dims}`: {e}")))?;
        let offset: usize = offset
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad offset `{offset}`: {e}")))?;
        if offset != expected_offset {
            return Err(Error::Checkpoint(format!(
                "`{name}` at offset {offset}, expected {expected_offset}"
            )));
        }
        let numel: usize = shape.iter().product();
        let end = offset + numel * 4;
        let raw = data
            .get(offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("data for `{name}` is truncated")))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(shape, values).map_err(|e| Error::Checkpoint(e.to_string()))?;
        params.push(name, tensor);
        expected_offset = end;
    }
    if expected_offset != data.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after parameter data",
            data.len() - expected_offset
        )));
    }
    Ok(Checkpoint { params, labels })
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("{n} does not fit in u32")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
