//! FDDB flat dataset files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "FDDB" | version u16 = 1 | sample rate u32 | channels u16
//! label count u16 | { id u16 | name length u16 | UTF-8 name }*
//! record length u32 | record count u32
//! { label id u16 | channels × record length f64 }*
//! ```
//!
//! Each record's samples are channel-major. A record may be a single burst
//! or a longer recording; [`ingest_flat`] cuts it into bursts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{Burst, ConditionClass, DatasetError, LabeledDataset};

const MAGIC: &[u8; 4] = b"FDDB";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub id: u16,
    pub name: String,
}

impl LabelEntry {
    /// Ids `0..6` named after the condition classes.
    pub fn standard_table() -> Vec<LabelEntry> {
        ConditionClass::ALL.iter().map(|c| LabelEntry { id: c.index() as u16, name: c.name().into() }).collect()
    }
}

/// Raw contents of an FDDB file.
#[derive(Debug, Clone, PartialEq)]
pub struct FddbContents {
    pub sample_rate: u32,
    pub channels: u16,
    pub labels: Vec<LabelEntry>,
    pub record_len: u32,
    pub records: Vec<(u16, Vec<f64>)>,
}

fn eof_as_truncated(e: io::Error) -> DatasetError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        DatasetError::Truncated
    } else {
        DatasetError::Io(e)
    }
}

/// Writes bursts as one record each, labelled through `labels` (matched by
/// class name).
pub fn write_fddb<W: Write>(w: W, bursts: &[Burst], labels: &[LabelEntry]) -> Result<(), DatasetError> {
    let first = bursts.first().ok_or_else(|| DatasetError::Inconsistent("no bursts to write".into()))?;
    let (len, channels, fs) = (first.len(), first.channels, first.sample_rate);
    if fs.fract() != 0.0 || !(1.0..=u32::MAX as f64).contains(&fs) {
        return Err(DatasetError::BadHeader(format!("sample rate {fs} is not a positive integer")));
    }
    let len32 = u32::try_from(len).map_err(|_| DatasetError::BadHeader(format!("burst length {len}")))?;
    let ch16 = u16::try_from(channels).map_err(|_| DatasetError::BadHeader(format!("{channels} channels")))?;
    let count = u32::try_from(bursts.len()).map_err(|_| DatasetError::BadHeader("too many bursts".into()))?;
    let label_count = u16::try_from(labels.len()).map_err(|_| DatasetError::BadHeader("too many labels".into()))?;
    let mut ids = BTreeMap::new();
    for e in labels {
        ids.insert(e.name.as_str(), e.id);
    }
    let mut w = BufWriter::new(w);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(fs as u32)?;
    w.write_u16::<LittleEndian>(ch16)?;
    w.write_u16::<LittleEndian>(label_count)?;
    for e in labels {
        let name = e.name.as_bytes();
        let nlen = u16::try_from(name.len()).map_err(|_| DatasetError::BadHeader(format!("label name {}", e.name)))?;
        w.write_u16::<LittleEndian>(e.id)?;
        w.write_u16::<LittleEndian>(nlen)?;
        w.write_all(name)?;
    }
    w.write_u32::<LittleEndian>(len32)?;
    w.write_u32::<LittleEndian>(count)?;
    for b in bursts {
        if (b.len(), b.channels, b.sample_rate) != (len, channels, fs) {
            return Err(DatasetError::Inconsistent(format!("burst {} differs in geometry from burst {}", b.id, first.id)));
        }
        let id = *ids
            .get(b.label.name())
            .ok_or_else(|| DatasetError::BadHeader(format!("label table has no entry for {}", b.label)))?;
        w.write_u16::<LittleEndian>(id)?;
        for v in &b.samples {
            w.write_f64::<LittleEndian>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_fddb<R: Read>(r: R) -> Result<FddbContents, DatasetError> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof_as_truncated)?;
    if &magic != MAGIC {
        return Err(DatasetError::BadMagic(magic));
    }
    let version = r.read_u16::<LittleEndian>().map_err(eof_as_truncated)?;
    if version != VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let sample_rate = r.read_u32::<LittleEndian>().map_err(eof_as_truncated)?;
    let channels = r.read_u16::<LittleEndian>().map_err(eof_as_truncated)?;
    if channels == 0 || sample_rate == 0 {
        return Err(DatasetError::BadHeader(format!("{channels} channels at {sample_rate} Hz")));
    }
    let label_count = r.read_u16::<LittleEndian>().map_err(eof_as_truncated)?;
    let mut labels = Vec::with_capacity(label_count as usize);
    for _ in 0..label_count {
        let id = r.read_u16::<LittleEndian>().map_err(eof_as_truncated)?;
        let nlen = r.read_u16::<LittleEndian>().map_err(eof_as_truncated)?;
        let mut name = vec![0u8; nlen as usize];
        r.read_exact(&mut name).map_err(eof_as_truncated)?;
        let name = String::from_utf8(name).map_err(|_| DatasetError::BadHeader(format!("label {id} name is not UTF-8")))?;
        labels.push(LabelEntry { id, name });
    }
    let record_len = r.read_u32::<LittleEndian>().map_err(eof_as_truncated)?;
    let count = r.read_u32::<LittleEndian>().map_err(eof_as_truncated)?;
    let per_record = record_len as usize * channels as usize;
    let mut records = Vec::new();
    for _ in 0..count {
        let id = r.read_u16::<LittleEndian>().map_err(eof_as_truncated)?;
        let mut values = vec![0.0; per_record];
        r.read_f64_into::<LittleEndian>(&mut values).map_err(eof_as_truncated)?;
        records.push((id, values));
    }
    Ok(FddbContents { sample_rate, channels, labels, record_len, records })
}

/// How to turn stored records into labelled bursts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub labels: BTreeMap<u16, ConditionClass>,
    pub burst_len: usize,
    pub stride: usize,
}

impl IngestManifest {
    /// Ids `0..6` mapped to the classes in their standard order.
    pub fn standard(burst_len: usize, stride: usize) -> Self {
        let labels = ConditionClass::ALL.iter().map(|c| (c.index() as u16, *c)).collect();
        Self { labels, burst_len, stride }
    }

    /// Maps each label-table entry whose name is a class name.
    pub fn from_label_table(entries: &[LabelEntry], burst_len: usize, stride: usize) -> Self {
        let labels = entries.iter().filter_map(|e| ConditionClass::from_name(&e.name).map(|c| (e.id, c))).collect();
        Self { labels, burst_len, stride }
    }
}

/// Reads an FDDB file and cuts every record into bursts of
/// `manifest.burst_len` samples every `manifest.stride` samples. A trailing
/// remainder shorter than a burst is dropped. Burst ids follow file order.
pub fn ingest_flat(path: impl AsRef<Path>, manifest: &IngestManifest) -> Result<LabeledDataset, DatasetError> {
    let contents = read_fddb(File::open(path)?)?;
    if manifest.burst_len == 0 || manifest.stride == 0 {
        return Err(DatasetError::BadHeader(format!(
            "burst length {} / stride {} must be positive",
            manifest.burst_len, manifest.stride
        )));
    }
    let channels = contents.channels as usize;
    let len = contents.record_len as usize;
    let (bl, stride) = (manifest.burst_len, manifest.stride);
    let segments = if len >= bl { (len - bl) / stride + 1 } else { 0 };
    let mut bursts = Vec::new();
    for (id, values) in &contents.records {
        let class = *manifest.labels.get(id).ok_or(DatasetError::UnknownLabel(*id))?;
        for s in 0..segments {
            let start = s * stride;
            let mut samples = Vec::with_capacity(bl * channels);
            for c in 0..channels {
                samples.extend_from_slice(&values[c * len + start..c * len + start + bl]);
            }
            let bid = bursts.len() as u64;
            bursts.push(Burst::new(bid, class, channels, contents.sample_rate as f64, samples)?);
        }
    }
    Ok(LabeledDataset::new(bursts))
}
