//! Write-ahead log. Each segment is named by the first sequence number it
//! may contain and holds `[u32 len][u32 crc][payload]` records, one entry
//! per record.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::codec::{self, Reader};
use crate::entry::{Entry, SeqNo};
use crate::error::{Error, Result};

const HEADER_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SyncPolicy {
    /// Leave syncing to the OS.
    None,
    /// One `fsync` per write batch.
    #[default]
    PerBatch,
    /// One `fsync` per entry.
    EveryWrite,
}

pub fn wal_path(dir: &Path, start_seq: SeqNo) -> PathBuf {
    dir.join(format!("{start_seq:020}.wal"))
}

/// Segments in `dir` ordered by starting sequence number.
pub fn list_segments(dir: &Path) -> Result<Vec<(SeqNo, PathBuf)>> {
    let mut out = Vec::new();
    for item in fs::read_dir(dir)? {
        let path = item?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("wal") {
            continue;
        }
        if let Some(seq) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
        {
            out.push((seq, path));
        }
    }
    out.sort();
    Ok(out)
}

pub struct WalWriter {
    path: PathBuf,
    out: BufWriter<File>,
    policy: SyncPolicy,
    scratch: Vec<u8>,
}

impl WalWriter {
    pub fn create(dir: &Path, start_seq: SeqNo, policy: SyncPolicy) -> Result<Self> {
        let path = wal_path(dir, start_seq);
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)?;
        Ok(WalWriter {
            path,
            out: BufWriter::with_capacity(64 * 1024, file),
            policy,
            scratch: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends a batch; returns once it is durable under the sync policy.
    pub fn append(&mut self, entries: &[Entry]) -> Result<()> {
        for e in entries {
            self.scratch.clear();
            e.encode(&mut self.scratch);
            let mut header = [0u8; HEADER_LEN];
            header[..4].copy_from_slice(&(self.scratch.len() as u32).to_le_bytes());
            header[4..].copy_from_slice(&codec::crc32(&self.scratch).to_le_bytes());
            self.out.write_all(&header)?;
            self.out.write_all(&self.scratch)?;
            if self.policy == SyncPolicy::EveryWrite {
                self.sync()?;
            }
        }
        match self.policy {
            SyncPolicy::PerBatch => self.sync(),
            _ => Ok(self.out.flush()?),
        }
    }

    pub fn sync(&mut self) -> Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub segments: usize,
    pub records: u64,
    pub last_seq: Option<SeqNo>,
    /// A truncated or partially written final record was dropped.
    pub torn_tail: bool,
}

/// Replays every segment in `dir`, passing entries with `seq > after` to
/// `apply` in log order. A damaged final record of the last segment is
/// treated as an interrupted write: it is dropped and the segment truncated
/// so later recoveries see a clean log. Damage anywhere else is corruption.
pub fn replay(
    dir: &Path,
    after: SeqNo,
    mut apply: impl FnMut(Entry) -> Result<()>,
) -> Result<ReplayStats> {
    let segments = list_segments(dir)?;
    let mut stats = ReplayStats {
        segments: segments.len(),
        ..Default::default()
    };
    let mut prev_seq: Option<SeqNo> = None;
    for (idx, (_, path)) in segments.iter().enumerate() {
        let last_segment = idx + 1 == segments.len();
        let data = fs::read(path)?;
        let mut pos = 0usize;
        while pos < data.len() {
            let rest = &data[pos..];
            let record = parse_record(rest);
            let (entry, len) = match record {
                Ok(ok) => ok,
                Err(torn) => {
                    // Only the final record of the log may be incomplete.
                    if last_segment && torn.reaches_end {
                        tracing::warn!(path = %path.display(), offset = pos, "dropping torn WAL tail");
                        OpenOptions::new()
                            .write(true)
                            .open(path)?
                            .set_len(pos as u64)?;
                        stats.torn_tail = true;
                        break;
                    }
                    return Err(Error::corruption(
                        path,
                        format!("{} at offset {pos}", torn.reason),
                    ));
                }
            };
            if prev_seq.is_some_and(|p| entry.seq <= p) {
                return Err(Error::corruption(
                    path,
                    format!("sequence regression at offset {pos}"),
                ));
            }
            prev_seq = Some(entry.seq);
            stats.records += 1;
            stats.last_seq = Some(entry.seq);
            if entry.seq > after {
                apply(entry)?;
            }
            pos += len;
        }
    }
    Ok(stats)
}

struct BadRecord {
    reason: &'static str,
    /// The damaged record extends to the end of the file.
    reaches_end: bool,
}

fn parse_record(data: &[u8]) -> std::result::Result<(Entry, usize), BadRecord> {
    if data.len() < HEADER_LEN {
        return Err(BadRecord {
            reason: "truncated record header",
            reaches_end: true,
        });
    }
    let len = u32::from_le_bytes(data[..4].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(data[4..8].try_into().unwrap());
    let end = HEADER_LEN.saturating_add(len);
    if end > data.len() {
        return Err(BadRecord {
            reason: "truncated record",
            reaches_end: true,
        });
    }
    let payload = &data[HEADER_LEN..end];
    let reaches_end = end == data.len();
    if codec::crc32(payload) != crc {
        return Err(BadRecord {
            reason: "record checksum mismatch",
            reaches_end,
        });
    }
    let mut r = Reader::new(payload);
    match Entry::decode(&mut r) {
        Some(e) if r.is_empty() => Ok((e, end)),
        _ => Err(BadRecord {
            reason: "undecodable record",
            reaches_end,
        }),
    }
}
