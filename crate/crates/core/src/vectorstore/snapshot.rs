//! Binary index snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "CEBVIDX1" | mode u32 | d u32 | M u32 | k u32 | count u32
//! codebooks f32:  sq -> min[d], max[d];  pq -> M * k * (d / M);  no -> none
//! codes:          no -> count * d f32;   sq -> count * d u8;    pq -> count * M u8
//! chunk table:    count * (id str, source str, offset u64, text str), str = u32 len + UTF-8
//! ```

use std::io::{Read, Write};

use super::index::Storage;
use super::pq::{pq_decode, ProductQuantParams};
use super::sq::{sq_dequantize, ScalarQuantParams};
use super::{VectorError, VectorIndex};
use crate::config::QuantizationMode;
use crate::corpus::Chunk;
use crate::num::Scalar;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"CEBVIDX1";

fn mode_tag(mode: QuantizationMode) -> u32 {
    match mode {
        QuantizationMode::No => 0,
        QuantizationMode::Sq => 1,
        QuantizationMode::Pq => 2,
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<(), VectorError> {
    let v = u32::try_from(v).map_err(|_| VectorError::Snapshot(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<(), VectorError> {
    put_u32(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn put_floats<W: Write, S: Scalar>(w: &mut W, values: &[S]) -> Result<(), VectorError> {
    for v in values {
        w.write_all(&v.as_f32().to_le_bytes())?;
    }
    Ok(())
}

pub fn write_snapshot<W: Write, S: Scalar>(
    index: &VectorIndex<S>,
    mut w: W,
) -> Result<(), VectorError> {
    let (subspaces, centroids) = match &index.storage {
        Storage::Product { params, .. } => (params.subspaces, params.centroids),
        _ => (0, 0),
    };
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&mode_tag(index.mode).to_le_bytes())?;
    put_u32(&mut w, index.dim)?;
    put_u32(&mut w, subspaces)?;
    put_u32(&mut w, centroids)?;
    put_u32(&mut w, index.chunks.len())?;

    match &index.storage {
        Storage::Raw => {
            for v in &index.vectors {
                put_floats(&mut w, v)?;
            }
        }
        Storage::Scalar { params, codes } => {
            put_floats(&mut w, &params.min)?;
            put_floats(&mut w, &params.max)?;
            w.write_all(codes)?;
        }
        Storage::Product { params, codes } => {
            for book in &params.codebooks {
                put_floats(&mut w, book)?;
            }
            w.write_all(codes)?;
        }
    }

    for chunk in &index.chunks {
        put_str(&mut w, &chunk.chunk_id)?;
        put_str(&mut w, &chunk.source_path)?;
        w.write_all(&(chunk.start_offset as u64).to_le_bytes())?;
        put_str(&mut w, &chunk.text)?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, VectorError> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| VectorError::Snapshot(format!("truncated snapshot: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize, VectorError> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, VectorError> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, VectorError> {
        let len = self.u32()?;
        String::from_utf8(self.bytes(len)?)
            .map_err(|_| VectorError::Snapshot("invalid UTF-8 in chunk table".into()))
    }

    fn floats<S: Scalar>(&mut self, n: usize) -> Result<Vec<S>, VectorError> {
        let raw = self.bytes(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| S::of(f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))))
            .collect())
    }
}

pub fn read_snapshot<R: Read, S: Scalar>(r: R) -> Result<VectorIndex<S>, VectorError> {
    let mut r = Reader { inner: r };
    if r.bytes(8)? != SNAPSHOT_MAGIC {
        return Err(VectorError::Snapshot("bad magic".into()));
    }
    let mode = match r.u32()? {
        0 => QuantizationMode::No,
        1 => QuantizationMode::Sq,
        2 => QuantizationMode::Pq,
        other => return Err(VectorError::Snapshot(format!("unknown mode {other}"))),
    };
    let dim = r.u32()?;
    let subspaces = r.u32()?;
    let centroids = r.u32()?;
    let count = r.u32()?;

    let (storage, vectors) = match mode {
        QuantizationMode::No => {
            let vectors = (0..count)
                .map(|_| r.floats(dim))
                .collect::<Result<Vec<_>, _>>()?;
            (Storage::Raw, vectors)
        }
        QuantizationMode::Sq => {
            let params = ScalarQuantParams {
                min: r.floats(dim)?,
                max: r.floats(dim)?,
            };
            let codes = r.bytes(count * dim)?;
            let vectors = codes
                .chunks(dim.max(1))
                .take(count)
                .map(|c| sq_dequantize(c, &params))
                .collect::<Result<Vec<_>, _>>()?;
            (Storage::Scalar { params, codes }, vectors)
        }
        QuantizationMode::Pq => {
            if subspaces == 0 || dim % subspaces != 0 || centroids == 0 || centroids > 256 {
                return Err(VectorError::Snapshot("inconsistent pq header".into()));
            }
            let sub_dim = dim / subspaces;
            let codebooks = (0..subspaces)
                .map(|_| r.floats(centroids * sub_dim))
                .collect::<Result<Vec<_>, _>>()?;
            let params = ProductQuantParams {
                subspaces,
                centroids,
                sub_dim,
                codebooks,
                seed: 0,
            };
            let codes = r.bytes(count * subspaces)?;
            let vectors = codes
                .chunks(subspaces)
                .take(count)
                .map(|c| pq_decode(c, &params))
                .collect::<Result<Vec<_>, _>>()?;
            (Storage::Product { params, codes }, vectors)
        }
    };

    let mut chunks = Vec::with_capacity(count);
    for _ in 0..count {
        let chunk_id = r.string()?;
        let source_path = r.string()?;
        let start_offset = r.u64()? as usize;
        let text = r.string()?;
        chunks.push(Chunk {
            chunk_id,
            source_path,
            start_offset,
            text,
        });
    }
    Ok(VectorIndex {
        mode,
        dim,
        chunks,
        storage,
        vectors,
    })
}
