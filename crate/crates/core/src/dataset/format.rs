//! LSPC-DS v1: one JSON header line, then a little-endian `f32` blob.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OfflineDataset;
use crate::{LspcError, Result};

const MAGIC: &str = "LSPC-DS";
const VERSION: u32 = 1;
const FIELDS: [&str; 6] = ["state", "action", "reward", "cost", "next_state", "done"];

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    n: usize,
    state_dim: usize,
    action_dim: usize,
    fields: Vec<String>,
    dtype: String,
    episode_starts: Vec<usize>,
}

pub fn write_to<W: Write>(ds: &OfflineDataset, mut w: W) -> Result<()> {
    ds.validate()?;
    let header = Header {
        magic: MAGIC.into(),
        version: VERSION,
        n: ds.n,
        state_dim: ds.state_dim,
        action_dim: ds.action_dim,
        fields: FIELDS.iter().map(|s| s.to_string()).collect(),
        dtype: "f32le".into(),
        episode_starts: ds.episode_starts.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut blob = Vec::with_capacity(4 * ds.n * (2 * ds.state_dim + ds.action_dim + 3));
    for arr in [&ds.states, &ds.actions, &ds.rewards, &ds.costs, &ds.next_states, &ds.dones] {
        for x in arr.iter() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&blob)?;
    Ok(())
}

pub fn read_from<R: Read>(mut r: R) -> Result<OfflineDataset> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| LspcError::Parse("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| LspcError::Parse(format!("bad header: {e}")))?;
    if header.magic != MAGIC {
        return Err(LspcError::Parse(format!("bad magic {:?}", header.magic)));
    }
    if header.version != VERSION {
        return Err(LspcError::Parse(format!("unsupported version {}", header.version)));
    }
    if header.fields != FIELDS {
        return Err(LspcError::Parse(format!("unexpected field list {:?}", header.fields)));
    }
    let width = match header.dtype.as_str() {
        "f32le" => 4,
        "f64le" => {
            log::warn!("dataset stored as f64le; values are narrowed to f32");
            8
        }
        other => return Err(LspcError::Parse(format!("unsupported dtype {other}"))),
    };
    let (n, s, a) = (header.n, header.state_dim, header.action_dim);
    let counts = [n * s, n * a, n, n, n * s, n];
    let want = counts.iter().sum::<usize>() * width;
    let blob = &bytes[nl + 1..];
    if blob.len() < want {
        return Err(LspcError::Parse(format!("truncated blob: {} of {want} bytes", blob.len())));
    }
    if blob.len() > want {
        return Err(LspcError::Parse(format!("length mismatch: header implies {want} bytes, blob has {}", blob.len())));
    }
    let mut arrays = Vec::with_capacity(6);
    let mut off = 0;
    for count in counts {
        let chunk = &blob[off..off + count * width];
        off += count * width;
        let v: Vec<f32> = if width == 4 {
            chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
        } else {
            chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32).collect()
        };
        arrays.push(v);
    }
    let mut it = arrays.into_iter();
    let mut next = || it.next().unwrap();
    let ds = OfflineDataset {
        n,
        state_dim: s,
        action_dim: a,
        states: next(),
        actions: next(),
        rewards: next(),
        costs: next(),
        next_states: next(),
        dones: next(),
        episode_starts: header.episode_starts,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save(ds: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    read_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::tiny;

    fn bytes(ds: &OfflineDataset) -> Vec<u8> {
        let mut v = Vec::new();
        write_to(ds, &mut v).unwrap();
        v
    }

    fn header_len(b: &[u8]) -> usize {
        b.iter().position(|x| *x == b'\n').unwrap() + 1
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ds = tiny(3);
        let back = read_from(&bytes(&ds)[..]).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn header_layout() {
        let b = bytes(&tiny(3));
        let line = std::str::from_utf8(&b[..header_len(&b) - 1]).unwrap();
        assert_eq!(
            line,
            r#"{"magic":"LSPC-DS","version":1,"n":3,"state_dim":2,"action_dim":1,"fields":["state","action","reward","cost","next_state","done"],"dtype":"f32le","episode_starts":[0,2]}"#
        );
        assert_eq!(b.len() - header_len(&b), 4 * 3 * (2 + 1 + 1 + 1 + 2 + 1));
        // rewards start after states and actions
        let off = header_len(&b) + 4 * (3 * 2 + 3);
        assert_eq!(f32::from_le_bytes(b[off..off + 4].try_into().unwrap()), 1.0);
    }

    #[test]
    fn empty_blob_is_truncated() {
        let b = bytes(&tiny(3));
        let err = read_from(&b[..header_len(&b)]).unwrap_err();
        assert!(err.to_string().contains("truncated blob"), "{err}");
    }

    #[test]
    fn oversized_blob_is_length_mismatch() {
        let b3 = bytes(&tiny(3));
        let b2 = bytes(&tiny(2));
        let mut mixed = b2[..header_len(&b2)].to_vec();
        mixed.extend_from_slice(&b3[header_len(&b3)..]);
        let err = read_from(&mixed[..]).unwrap_err();
        assert!(err.to_string().contains("length mismatch"), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let b = bytes(&tiny(3));
        let text = String::from_utf8_lossy(&b[..header_len(&b)]).to_string();
        for (from, to, msg) in [("LSPC-DS", "LSPC-XX", "bad magic"), ("\"version\":1", "\"version\":2", "unsupported version")] {
            let mut m = text.replace(from, to).into_bytes();
            m.extend_from_slice(&b[header_len(&b)..]);
            let err = read_from(&m[..]).unwrap_err();
            assert!(err.to_string().contains(msg), "{err}");
        }
    }

    #[test]
    fn f64_payload_is_accepted() {
        let ds = tiny(3);
        let b = bytes(&ds);
        let text = String::from_utf8_lossy(&b[..header_len(&b)]).replace("f32le", "f64le");
        let mut m = text.into_bytes();
        for c in b[header_len(&b)..].chunks_exact(4) {
            let x = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            m.extend_from_slice(&x.to_le_bytes());
        }
        assert_eq!(read_from(&m[..]).unwrap(), ds);
    }
}
