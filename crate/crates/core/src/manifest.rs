//! Durable tree metadata: an append-only log of edits in `MANIFEST-<n>`,
//! selected by the `CURRENT` file which is replaced atomically.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::codec::{self, Reader};
use crate::entry::SeqNo;
use crate::error::{Error, Result};

const CURRENT: &str = "CURRENT";
const HEADER_LEN: usize = 8;
/// The log is rewritten as a snapshot once it grows past this size.
const ROLL_BYTES: u64 = 4 << 20;

const TAG_LAYOUT: u8 = 1;
const TAG_ADD: u8 = 2;
const TAG_DELETE: u8 = 3;
const TAG_LAST_SEQ: u8 = 4;
const TAG_FLUSHED_SEQ: u8 = 5;
const TAG_NEXT_FILE: u8 = 6;

/// Position of one table in the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileSlot {
    pub level: u32,
    /// Column-group index within the level (always 0 at Level-0).
    pub group: u32,
    /// Level-0 run identifier (newer runs have larger ids); 0 elsewhere.
    pub run: u64,
    pub file_id: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VersionEdit {
    pub layout: Option<String>,
    pub added: Vec<FileSlot>,
    pub deleted: Vec<FileSlot>,
    pub last_seq: Option<SeqNo>,
    /// Every entry with a sequence number up to this value is in a table.
    pub flushed_seq: Option<SeqNo>,
    pub next_file_id: Option<u64>,
}

fn put_slot(buf: &mut Vec<u8>, tag: u8, s: &FileSlot) {
    buf.push(tag);
    codec::put_varint(buf, s.level as u64);
    codec::put_varint(buf, s.group as u64);
    codec::put_varint(buf, s.run);
    codec::put_varint(buf, s.file_id);
}

impl VersionEdit {
    pub fn encode(&self, buf: &mut Vec<u8>) {
        if let Some(layout) = &self.layout {
            buf.push(TAG_LAYOUT);
            codec::put_varint(buf, layout.len() as u64);
            buf.extend_from_slice(layout.as_bytes());
        }
        for s in &self.added {
            put_slot(buf, TAG_ADD, s);
        }
        for s in &self.deleted {
            put_slot(buf, TAG_DELETE, s);
        }
        for (tag, v) in [
            (TAG_LAST_SEQ, self.last_seq),
            (TAG_FLUSHED_SEQ, self.flushed_seq),
            (TAG_NEXT_FILE, self.next_file_id),
        ] {
            if let Some(v) = v {
                buf.push(tag);
                codec::put_varint(buf, v);
            }
        }
    }

    pub fn decode(data: &[u8]) -> Option<VersionEdit> {
        let mut r = Reader::new(data);
        let mut edit = VersionEdit::default();
        while !r.is_empty() {
            match r.u8()? {
                TAG_LAYOUT => {
                    let n = r.varint()? as usize;
                    edit.layout = Some(String::from_utf8(r.bytes(n)?.to_vec()).ok()?);
                }
                tag @ (TAG_ADD | TAG_DELETE) => {
                    let slot = FileSlot {
                        level: u32::try_from(r.varint()?).ok()?,
                        group: u32::try_from(r.varint()?).ok()?,
                        run: r.varint()?,
                        file_id: r.varint()?,
                    };
                    if tag == TAG_ADD {
                        edit.added.push(slot);
                    } else {
                        edit.deleted.push(slot);
                    }
                }
                TAG_LAST_SEQ => edit.last_seq = Some(r.varint()?),
                TAG_FLUSHED_SEQ => edit.flushed_seq = Some(r.varint()?),
                TAG_NEXT_FILE => edit.next_file_id = Some(r.varint()?),
                _ => return None,
            }
        }
        Some(edit)
    }
}

/// Aggregate state obtained by replaying edits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ManifestState {
    pub layout: Option<String>,
    pub files: BTreeMap<u64, FileSlot>,
    pub last_seq: SeqNo,
    pub flushed_seq: SeqNo,
    pub next_file_id: u64,
}

impl ManifestState {
    pub fn apply(&mut self, edit: &VersionEdit) {
        if let Some(l) = &edit.layout {
            self.layout = Some(l.clone());
        }
        for s in &edit.deleted {
            self.files.remove(&s.file_id);
        }
        for s in &edit.added {
            self.files.insert(s.file_id, *s);
        }
        if let Some(v) = edit.last_seq {
            self.last_seq = self.last_seq.max(v);
        }
        if let Some(v) = edit.flushed_seq {
            self.flushed_seq = self.flushed_seq.max(v);
        }
        if let Some(v) = edit.next_file_id {
            self.next_file_id = self.next_file_id.max(v);
        }
    }

    fn snapshot_edit(&self) -> VersionEdit {
        VersionEdit {
            layout: self.layout.clone(),
            added: self.files.values().copied().collect(),
            deleted: Vec::new(),
            last_seq: Some(self.last_seq),
            flushed_seq: Some(self.flushed_seq),
            next_file_id: Some(self.next_file_id),
        }
    }
}

pub struct Manifest {
    dir: PathBuf,
    number: u64,
    file: File,
    size: u64,
    state: ManifestState,
    sync: bool,
}

fn manifest_name(number: u64) -> String {
    format!("MANIFEST-{number:06}")
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut rec = Vec::with_capacity(HEADER_LEN + payload.len());
    codec::put_u32(&mut rec, payload.len() as u32);
    codec::put_u32(&mut rec, codec::crc32(payload));
    rec.extend_from_slice(payload);
    rec
}

impl Manifest {
    /// True if `dir` holds an existing database.
    pub fn exists(dir: &Path) -> bool {
        dir.join(CURRENT).exists()
    }

    /// Opens the manifest named by `CURRENT`, or starts an empty one. The
    /// replayed state is rewritten into a fresh log.
    pub fn open(dir: &Path, sync: bool) -> Result<Manifest> {
        let mut state = ManifestState::default();
        let mut number = 0;
        if Manifest::exists(dir) {
            let current = fs::read_to_string(dir.join(CURRENT))?;
            let name = current.trim();
            number = name
                .strip_prefix("MANIFEST-")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| {
                    Error::corruption(dir.join(CURRENT), format!("bad manifest name {name:?}"))
                })?;
            state = replay(&dir.join(name))?;
        }
        let mut m = Manifest {
            dir: dir.to_path_buf(),
            number,
            file: File::open(dir)?,
            size: 0,
            state,
            sync,
        };
        m.roll()?;
        Ok(m)
    }

    pub fn state(&self) -> &ManifestState {
        &self.state
    }

    /// Durably appends an edit; the edit is applied to the in-memory state
    /// only after it reached the log.
    pub fn log(&mut self, edit: &VersionEdit) -> Result<()> {
        let mut payload = Vec::new();
        edit.encode(&mut payload);
        let rec = frame(&payload);
        self.file.write_all(&rec)?;
        if self.sync {
            self.file.sync_data()?;
        }
        self.size += rec.len() as u64;
        self.state.apply(edit);
        if self.size > ROLL_BYTES {
            self.roll()?;
        }
        Ok(())
    }

    /// Writes the current state into a new log and points `CURRENT` at it.
    fn roll(&mut self) -> Result<()> {
        let old = self.number;
        let number = old + 1;
        let path = self.dir.join(manifest_name(number));
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(true)
            .write(true)
            .open(&path)?;
        let mut payload = Vec::new();
        self.state.snapshot_edit().encode(&mut payload);
        let rec = frame(&payload);
        file.write_all(&rec)?;
        file.sync_data()?;
        let tmp = self.dir.join("CURRENT.tmp");
        {
            let mut f = File::create(&tmp)?;
            writeln!(f, "{}", manifest_name(number))?;
            f.sync_data()?;
        }
        fs::rename(&tmp, self.dir.join(CURRENT))?;
        File::open(&self.dir)?.sync_all()?;
        if old > 0 {
            let _ = fs::remove_file(self.dir.join(manifest_name(old)));
        }
        self.number = number;
        self.file = file;
        self.size = rec.len() as u64;
        Ok(())
    }
}

/// Replays a manifest log. An incomplete final record is an edit that never
/// committed and is ignored.
fn replay(path: &Path) -> Result<ManifestState> {
    let data = fs::read(path)?;
    let mut state = ManifestState::default();
    let mut pos = 0;
    while pos < data.len() {
        let rest = &data[pos..];
        if rest.len() < HEADER_LEN {
            break;
        }
        let len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(rest[4..8].try_into().unwrap());
        let end = HEADER_LEN + len;
        if end > rest.len() {
            break;
        }
        let payload = &rest[HEADER_LEN..end];
        if codec::crc32(payload) != crc {
            if end == rest.len() {
                break;
            }
            return Err(Error::corruption(
                path,
                format!("manifest checksum mismatch at offset {pos}"),
            ));
        }
        let edit = VersionEdit::decode(payload).ok_or_else(|| {
            Error::corruption(path, format!("undecodable manifest edit at offset {pos}"))
        })?;
        state.apply(&edit);
        pos += end;
    }
    Ok(state)
}
