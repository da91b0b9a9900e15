//! `FGFS` feature-store files.
//!
//! Layout (little-endian): magic `FGFS`, u32 version, u8 source tag,
//! u32 feature_dim, u32 num_classes, u64 record count, then per record
//! u32 epoch, u64 step, u64 sample_id, u32 label and `feature_dim` f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::head::{FeatureRecord, FeatureStore, StoreSource};

pub const MAGIC: &[u8; 4] = b"FGFS";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 4 + 4 + 1 + 4 + 4 + 8;

/// Bytes taken by one record of width `feature_dim`.
pub fn record_bytes(feature_dim: usize) -> usize {
    4 + 8 + 8 + 4 + 4 * feature_dim
}

pub fn write_store<W: Write>(store: &FeatureStore, out: W) -> Result<()> {
    let mut w = Writer::new(out);
    w.bytes(MAGIC)?;
    w.u32(VERSION)?;
    w.u8(store.source.tag())?;
    w.usize32(store.feature_dim)?;
    w.usize32(store.num_classes)?;
    w.u64(store.records.len() as u64)?;
    for r in &store.records {
        w.u32(r.epoch)?;
        w.u64(r.step)?;
        w.u64(r.sample_id)?;
        w.u32(r.label)?;
        for &v in &r.feature {
            w.f32(v)?;
        }
    }
    w.into_inner().flush()?;
    Ok(())
}

pub fn read_store<R: Read>(input: R) -> Result<FeatureStore> {
    let mut r = Reader::new(input);
    r.header(MAGIC, VERSION)?;
    let tag = r.u8()?;
    let source = StoreSource::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown source tag {tag}")))?;
    let feature_dim = r.usize32()?;
    let num_classes = r.usize32()?;
    let count = r.u64()?;
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for i in 0..count {
        let record = (|| -> Result<FeatureRecord> {
            let epoch = r.u32()?;
            let step = r.u64()?;
            let sample_id = r.u64()?;
            let label = r.u32()?;
            let feature = (0..feature_dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            Ok(FeatureRecord { epoch, step, sample_id, feature, label })
        })()
        .map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("record {i} of {count}: {m}")),
            other => other,
        })?;
        records.push(record);
    }
    r.finish().map_err(|_| Error::Format(format!("file holds more than the declared {count} records")))?;
    let store = FeatureStore { records, feature_dim, num_classes, source };
    store.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(store)
}

pub fn write_feature_store(store: &FeatureStore, path: &Path) -> Result<()> {
    write_store(store, BufWriter::new(File::create(path)?))
}

pub fn read_feature_store(path: &Path) -> Result<FeatureStore> {
    read_store(BufReader::new(File::open(path)?))
}
