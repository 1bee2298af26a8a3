//! Sorted Sequence Table for one column group.
//!
//! File layout:
//!
//! ```text
//! [data block + crc]* [index block + crc] [bloom block + crc] [meta block + crc] [footer]
//! ```
//!
//! Data blocks hold at most `B_ji` entries and at most `D` bytes (a single
//! oversized entry gets a block of its own). Keys are delta-encoded with the
//! full key stored at every restart point (every 16 entries). Values are
//! stored only for the columns of the table's group ("simulated columnar"
//! layout: every group repeats the key).

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::bloom::BloomFilter;
use crate::codec::{self, Reader};
use crate::entry::{Entry, EntryKind, SeqNo};
use crate::error::{Error, Result};
use crate::schema::{ColumnSet, Key};

const MAGIC: u64 = 0x4c41_5345_5253_5354; // "LASERSST"
const FORMAT_VERSION: u32 = 1;
const CODEC_NONE: u8 = 0;
const FOOTER_LEN: usize = 8 + 4 + 8 + 4 + 8 + 4 + 8 + 4 + 1 + 8;
const RESTART_INTERVAL: usize = 16;
const SEQ_SKETCH_POINTS: usize = 32;
const FLAG_DENSE: u8 = 0x04;

#[derive(Clone, Debug)]
pub struct SstOptions {
    /// Entry cap per data block (`B_ji`).
    pub block_entries: usize,
    /// Byte cap per data block (`D`).
    pub block_bytes: usize,
    pub bloom_bits_per_key: usize,
    pub sync: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockHandle {
    pub first_key: Key,
    pub last_key: Key,
    pub offset: u64,
    pub len: u32,
    pub count: u32,
}

/// Summary of a finished table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SstMeta {
    pub file_id: u64,
    pub level: u32,
    pub group: ColumnSet,
    pub min_key: Key,
    pub max_key: Key,
    pub min_seq: SeqNo,
    pub max_seq: SeqNo,
    pub entries: u64,
    pub tombstones: u64,
    pub blocks: u64,
    pub file_size: u64,
    /// Equi-depth sample of the contained sequence numbers.
    pub seq_sketch: Vec<SeqNo>,
}

pub fn sst_path(dir: &Path, file_id: u64) -> PathBuf {
    dir.join(format!("{file_id:06}.sst"))
}

struct BlockEncoder {
    buf: Vec<u8>,
    restarts: Vec<u32>,
    count: usize,
    prev_key: Key,
    first_key: Key,
}

impl BlockEncoder {
    fn new() -> Self {
        BlockEncoder {
            buf: Vec::new(),
            restarts: Vec::new(),
            count: 0,
            prev_key: 0,
            first_key: 0,
        }
    }

    fn encoded_len(&self) -> usize {
        self.buf.len() + 4 * self.restarts.len() + 8
    }

    fn add(&mut self, entry: &Entry, group: ColumnSet) {
        if self.count.is_multiple_of(RESTART_INTERVAL) {
            self.restarts.push(self.buf.len() as u32);
            codec::put_u64(&mut self.buf, entry.key);
        } else {
            codec::put_varint(&mut self.buf, entry.key - self.prev_key);
        }
        if self.count == 0 {
            self.first_key = entry.key;
        }
        codec::put_varint(&mut self.buf, entry.seq);
        let dense = entry.kind != EntryKind::Tombstone && entry.present == group;
        let mut flags = entry.kind as u8;
        if dense {
            flags |= FLAG_DENSE;
        }
        self.buf.push(flags);
        if !dense && entry.kind != EntryKind::Tombstone {
            let mut bitmap = vec![0u8; group.len().div_ceil(8)];
            for c in entry.present.iter() {
                let r = group.rank(c).expect("value outside group");
                bitmap[r / 8] |= 1 << (r % 8);
            }
            self.buf.extend_from_slice(&bitmap);
        }
        for &v in &entry.values {
            codec::put_u32(&mut self.buf, v);
        }
        self.prev_key = entry.key;
        self.count += 1;
    }

    fn finish(&mut self) -> Vec<u8> {
        let mut out = std::mem::take(&mut self.buf);
        for &r in &self.restarts {
            codec::put_u32(&mut out, r);
        }
        codec::put_u32(&mut out, self.restarts.len() as u32);
        codec::put_u32(&mut out, self.count as u32);
        self.restarts.clear();
        self.count = 0;
        out
    }
}

/// Streams sorted entries into a new table file.
pub struct SstBuilder {
    path: PathBuf,
    file_id: u64,
    level: u32,
    group: ColumnSet,
    opts: SstOptions,
    out: Option<BufWriter<File>>,
    offset: u64,
    block: BlockEncoder,
    index: Vec<BlockHandle>,
    keys: Vec<Key>,
    seqs: Vec<SeqNo>,
    last: Option<(Key, SeqNo)>,
    tombstones: u64,
}

impl SstBuilder {
    pub fn new(dir: &Path, file_id: u64, level: u32, group: ColumnSet, opts: SstOptions) -> Self {
        SstBuilder {
            path: sst_path(dir, file_id),
            file_id,
            level,
            group,
            opts,
            out: None,
            offset: 0,
            block: BlockEncoder::new(),
            index: Vec::new(),
            keys: Vec::new(),
            seqs: Vec::new(),
            last: None,
            tombstones: 0,
        }
    }

    pub fn entries(&self) -> usize {
        self.seqs.len()
    }

    /// Bytes written so far plus the pending block.
    pub fn estimated_size(&self) -> u64 {
        self.offset + self.block.encoded_len() as u64
    }

    pub fn last_key(&self) -> Option<Key> {
        self.last.map(|(k, _)| k)
    }

    /// Appends an entry. Entries must arrive in `(key asc, seq desc)` order
    /// and carry only columns of the table's group.
    pub fn add(&mut self, entry: &Entry) -> Result<()> {
        if let Some((k, s)) = self.last {
            if entry.key < k || (entry.key == k && entry.seq >= s) {
                return Err(Error::InvalidArgument(format!(
                    "out of order entry ({}, {}) after ({k}, {s})",
                    entry.key, entry.seq
                )));
            }
        }
        if !entry.present.is_subset(self.group) {
            return Err(Error::InvalidArgument(format!(
                "entry columns {:?} outside group {:?}",
                entry.present, self.group
            )));
        }
        if self.block.count > 0
            && (self.block.count >= self.opts.block_entries
                || self.block.encoded_len() >= self.opts.block_bytes)
        {
            self.flush_block()?;
        }
        self.block.add(entry, self.group);
        if self.block.count > 1 && self.block.encoded_len() > self.opts.block_bytes {
            // Undo is awkward with delta encoding, so re-encode the block
            // without the entry and start a new one with it.
            self.rebuild_without_last(entry)?;
        }
        if self.keys.last() != Some(&entry.key) {
            self.keys.push(entry.key);
        }
        self.seqs.push(entry.seq);
        if entry.kind == EntryKind::Tombstone {
            self.tombstones += 1;
        }
        self.last = Some((entry.key, entry.seq));
        Ok(())
    }

    fn rebuild_without_last(&mut self, entry: &Entry) -> Result<()> {
        let mut decoded = decode_block(&self.block.finish_clone(), self.group)
            .ok_or_else(|| Error::corruption(&self.path, "block encoder produced invalid data"))?;
        decoded.pop();
        self.block = BlockEncoder::new();
        for e in &decoded {
            self.block.add(e, self.group);
        }
        self.flush_block()?;
        self.block.add(entry, self.group);
        Ok(())
    }

    fn writer(&mut self) -> Result<&mut BufWriter<File>> {
        if self.out.is_none() {
            let file = OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&self.path)?;
            self.out = Some(BufWriter::with_capacity(256 * 1024, file));
        }
        Ok(self.out.as_mut().unwrap())
    }

    fn write_with_crc(&mut self, data: &[u8]) -> Result<(u64, u32)> {
        let offset = self.offset;
        let crc = codec::crc32(data);
        let w = self.writer()?;
        w.write_all(data)?;
        w.write_all(&crc.to_le_bytes())?;
        self.offset += data.len() as u64 + 4;
        Ok((offset, data.len() as u32))
    }

    fn flush_block(&mut self) -> Result<()> {
        if self.block.count == 0 {
            return Ok(());
        }
        let first_key = self.block.first_key;
        let last_key = self.block.prev_key;
        let count = self.block.count as u32;
        let data = self.block.finish();
        let (offset, len) = self.write_with_crc(&data)?;
        self.index.push(BlockHandle {
            first_key,
            last_key,
            offset,
            len,
            count,
        });
        Ok(())
    }

    /// Writes index, filter and footer. Returns `None` (and creates no file)
    /// when nothing was added.
    pub fn finish(mut self) -> Result<Option<SstMeta>> {
        if self.seqs.is_empty() {
            return Ok(None);
        }
        self.flush_block()?;

        let mut index = Vec::new();
        codec::put_varint(&mut index, self.index.len() as u64);
        for h in &self.index {
            codec::put_u64(&mut index, h.first_key);
            codec::put_u64(&mut index, h.last_key);
            codec::put_varint(&mut index, h.offset);
            codec::put_varint(&mut index, h.len as u64);
            codec::put_varint(&mut index, h.count as u64);
        }
        let (index_off, index_len) = self.write_with_crc(&index)?;

        let mut bloom = Vec::new();
        BloomFilter::build(&self.keys, self.opts.bloom_bits_per_key).encode(&mut bloom);
        let (bloom_off, bloom_len) = self.write_with_crc(&bloom)?;

        let mut seqs = std::mem::take(&mut self.seqs);
        let entries = seqs.len() as u64;
        seqs.sort_unstable();
        let sketch = seq_sketch(&seqs);
        let meta = SstMeta {
            file_id: self.file_id,
            level: self.level,
            group: self.group,
            min_key: self.index[0].first_key,
            max_key: self.index.last().unwrap().last_key,
            min_seq: seqs[0],
            max_seq: *seqs.last().unwrap(),
            entries,
            tombstones: self.tombstones,
            blocks: self.index.len() as u64,
            file_size: 0,
            seq_sketch: sketch,
        };
        let mut meta_buf = Vec::new();
        encode_meta(&meta, &mut meta_buf);
        let (meta_off, meta_len) = self.write_with_crc(&meta_buf)?;

        let mut footer = Vec::with_capacity(FOOTER_LEN);
        codec::put_u64(&mut footer, index_off);
        codec::put_u32(&mut footer, index_len);
        codec::put_u64(&mut footer, bloom_off);
        codec::put_u32(&mut footer, bloom_len);
        codec::put_u64(&mut footer, meta_off);
        codec::put_u32(&mut footer, meta_len);
        codec::put_u64(&mut footer, entries);
        codec::put_u32(&mut footer, FORMAT_VERSION);
        footer.push(CODEC_NONE);
        codec::put_u64(&mut footer, MAGIC);
        debug_assert_eq!(footer.len(), FOOTER_LEN);
        let sync = self.opts.sync;
        let w = self.writer()?;
        w.write_all(&footer)?;
        w.flush()?;
        if sync {
            w.get_ref().sync_data()?;
        }
        let file_size = self.offset + FOOTER_LEN as u64;
        Ok(Some(SstMeta { file_size, ..meta }))
    }

    /// Removes a partially written file after a failure.
    pub fn abandon(self) {
        if self.out.is_some() {
            let _ = fs::remove_file(&self.path);
        }
    }
}

impl BlockEncoder {
    fn finish_clone(&self) -> Vec<u8> {
        let mut copy = BlockEncoder {
            buf: self.buf.clone(),
            restarts: self.restarts.clone(),
            count: self.count,
            prev_key: self.prev_key,
            first_key: self.first_key,
        };
        copy.finish()
    }
}

fn seq_sketch(sorted: &[SeqNo]) -> Vec<SeqNo> {
    let n = sorted.len();
    let points = SEQ_SKETCH_POINTS.min(n);
    (0..points)
        .map(|i| sorted[((2 * i + 1) * n / (2 * points)).min(n - 1)])
        .collect()
}

fn encode_meta(meta: &SstMeta, buf: &mut Vec<u8>) {
    codec::put_u64(buf, meta.file_id);
    codec::put_u32(buf, meta.level);
    buf.extend_from_slice(&meta.group.bits().to_le_bytes());
    codec::put_u64(buf, meta.min_key);
    codec::put_u64(buf, meta.max_key);
    codec::put_u64(buf, meta.min_seq);
    codec::put_u64(buf, meta.max_seq);
    codec::put_u64(buf, meta.tombstones);
    codec::put_varint(buf, meta.seq_sketch.len() as u64);
    for &s in &meta.seq_sketch {
        codec::put_varint(buf, s);
    }
}

fn decode_meta(data: &[u8]) -> Option<SstMeta> {
    let mut r = Reader::new(data);
    let file_id = r.u64()?;
    let level = r.u32()?;
    let group = ColumnSet::from_bits(u128::from_le_bytes(r.bytes(16)?.try_into().ok()?));
    let min_key = r.u64()?;
    let max_key = r.u64()?;
    let min_seq = r.u64()?;
    let max_seq = r.u64()?;
    let tombstones = r.u64()?;
    let n = r.varint()? as usize;
    let mut seq_sketch = Vec::with_capacity(n.min(SEQ_SKETCH_POINTS));
    for _ in 0..n {
        seq_sketch.push(r.varint()?);
    }
    Some(SstMeta {
        file_id,
        level,
        group,
        min_key,
        max_key,
        min_seq,
        max_seq,
        entries: 0,
        tombstones,
        blocks: 0,
        file_size: 0,
        seq_sketch,
    })
}

/// Decodes every entry of a data block (without its checksum).
pub(crate) fn decode_block(data: &[u8], group: ColumnSet) -> Option<Vec<Entry>> {
    let (restarts_end, count) = block_trailer(data)?;
    let mut out = Vec::with_capacity(count);
    let mut r = Reader::new(&data[..restarts_end]);
    let mut prev = 0;
    for i in 0..count {
        let e = decode_entry(&mut r, i, prev, group)?;
        prev = e.key;
        out.push(e);
    }
    Some(out)
}

/// Returns (end of entry data, entry count).
fn block_trailer(data: &[u8]) -> Option<(usize, usize)> {
    if data.len() < 8 {
        return None;
    }
    let n = data.len();
    let count = u32::from_le_bytes(data[n - 4..].try_into().unwrap()) as usize;
    let restarts = u32::from_le_bytes(data[n - 8..n - 4].try_into().unwrap()) as usize;
    if restarts != count.div_ceil(RESTART_INTERVAL) {
        return None;
    }
    let end = n.checked_sub(8 + 4 * restarts)?;
    Some((end, count))
}

fn restart_offset(data: &[u8], restarts_end: usize, i: usize) -> usize {
    let p = restarts_end + 4 * i;
    u32::from_le_bytes(data[p..p + 4].try_into().unwrap()) as usize
}

fn decode_entry(r: &mut Reader<'_>, index: usize, prev: Key, group: ColumnSet) -> Option<Entry> {
    let key = if index.is_multiple_of(RESTART_INTERVAL) {
        r.u64()?
    } else {
        prev.checked_add(r.varint()?)?
    };
    let seq = r.varint()?;
    let flags = r.u8()?;
    let kind = EntryKind::from_u8(flags & 0x03)?;
    let present = if kind == EntryKind::Tombstone {
        ColumnSet::EMPTY
    } else if flags & FLAG_DENSE != 0 {
        group
    } else {
        let bitmap = r.bytes(group.len().div_ceil(8))?;
        group
            .iter()
            .enumerate()
            .filter(|(rank, _)| bitmap[rank / 8] & (1 << (rank % 8)) != 0)
            .map(|(_, c)| c)
            .collect()
    };
    let mut values = Vec::with_capacity(present.len());
    for _ in 0..present.len() {
        values.push(r.u32()?);
    }
    Some(Entry {
        key,
        seq,
        kind,
        present,
        values,
    })
}

/// An open table: index, filter and metadata stay in memory; data blocks are
/// read from disk on every access and counted.
#[derive(Debug)]
pub struct SstReader {
    path: PathBuf,
    file: File,
    meta: SstMeta,
    index: Vec<BlockHandle>,
    bloom: BloomFilter,
    obsolete: AtomicBool,
}

impl SstReader {
    pub fn open(dir: &Path, file_id: u64) -> Result<Arc<SstReader>> {
        let path = sst_path(dir, file_id);
        let file = File::open(&path)?;
        let file_size = file.metadata()?.len();
        if file_size < FOOTER_LEN as u64 {
            return Err(Error::corruption(&path, "file shorter than footer"));
        }
        let mut footer = vec![0u8; FOOTER_LEN];
        file.read_exact_at(&mut footer, file_size - FOOTER_LEN as u64)?;
        let bad = |what: &str| Error::corruption(&path, what.to_string());
        let mut r = Reader::new(&footer);
        let (index_off, index_len) = (r.u64().unwrap(), r.u32().unwrap());
        let (bloom_off, bloom_len) = (r.u64().unwrap(), r.u32().unwrap());
        let (meta_off, meta_len) = (r.u64().unwrap(), r.u32().unwrap());
        let entries = r.u64().unwrap();
        let version = r.u32().unwrap();
        let codec_byte = r.u8().unwrap();
        let magic = r.u64().unwrap();
        if magic != MAGIC {
            return Err(bad("bad magic"));
        }
        if version != FORMAT_VERSION || codec_byte != CODEC_NONE {
            return Err(bad("unsupported format version or codec"));
        }
        let read = |off: u64, len: u32| -> Result<Vec<u8>> { read_checked(&file, &path, off, len) };
        let index_data = read(index_off, index_len)?;
        let index = decode_index(&index_data).ok_or_else(|| bad("bad index block"))?;
        let bloom = BloomFilter::decode(&read(bloom_off, bloom_len)?)
            .ok_or_else(|| bad("bad bloom block"))?;
        let mut meta =
            decode_meta(&read(meta_off, meta_len)?).ok_or_else(|| bad("bad meta block"))?;
        if meta.file_id != file_id || index.is_empty() {
            return Err(bad("metadata does not match file"));
        }
        meta.entries = entries;
        meta.blocks = index.len() as u64;
        meta.file_size = file_size;
        Ok(Arc::new(SstReader {
            path,
            file,
            meta,
            index,
            bloom,
            obsolete: AtomicBool::new(false),
        }))
    }

    pub fn meta(&self) -> &SstMeta {
        &self.meta
    }

    pub fn file_id(&self) -> u64 {
        self.meta.file_id
    }

    pub fn group(&self) -> ColumnSet {
        self.meta.group
    }

    pub fn index(&self) -> &[BlockHandle] {
        &self.index
    }

    pub fn may_contain(&self, key: Key) -> bool {
        key >= self.meta.min_key && key <= self.meta.max_key && self.bloom.may_contain(key)
    }

    /// Deletes the file once the last reference goes away.
    pub fn mark_obsolete(&self) {
        self.obsolete.store(true, Ordering::Release);
    }

    fn read_block(&self, handle: &BlockHandle, reads: &mut u64) -> Result<Vec<u8>> {
        *reads += 1;
        read_checked(&self.file, &self.path, handle.offset, handle.len)
    }

    fn corrupt_block(&self) -> Error {
        Error::corruption(&self.path, "undecodable data block")
    }

    /// All versions of `key`, newest first. Reads no block when the key is
    /// outside the table range or the filter rules it out.
    pub fn point_probe(&self, key: Key, reads: &mut u64) -> Result<Vec<Entry>> {
        let mut out = Vec::new();
        if !self.may_contain(key) {
            return Ok(out);
        }
        let mut b = self.index.partition_point(|h| h.last_key < key);
        while let Some(h) = self.index.get(b) {
            if h.first_key > key {
                break;
            }
            let data = self.read_block(h, reads)?;
            let found = self.seek_in_block(&data, key, &mut out)?;
            if !found || h.last_key != key {
                break;
            }
            b += 1;
        }
        Ok(out)
    }

    fn seek_in_block(&self, data: &[u8], key: Key, out: &mut Vec<Entry>) -> Result<bool> {
        let group = self.meta.group;
        let (end, count) = block_trailer(data).ok_or_else(|| self.corrupt_block())?;
        let restarts = count.div_ceil(RESTART_INTERVAL);
        // Last restart whose key is < key (versions of `key` may begin right
        // before a restart boundary).
        let restart_key = |i: usize| -> Option<Key> {
            let off = restart_offset(data, end, i);
            Reader::new(data.get(off..end)?).u64()
        };
        let (mut lo, mut hi) = (0usize, restarts);
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            match restart_key(mid) {
                Some(k) if k < key => lo = mid,
                Some(_) => hi = mid,
                None => return Err(self.corrupt_block()),
            }
        }
        let mut r = Reader::new(&data[..end]);
        r.seek(restart_offset(data, end, lo));
        let mut prev = 0;
        let mut found = false;
        for i in lo * RESTART_INTERVAL..count {
            let e = decode_entry(&mut r, i, prev, group).ok_or_else(|| self.corrupt_block())?;
            prev = e.key;
            if e.key == key {
                out.push(e);
                found = true;
            } else if e.key > key {
                break;
            }
        }
        Ok(found)
    }

    /// Number of blocks overlapping `[low, high]`.
    pub fn overlapping_blocks(&self, low: Key, high: Key) -> std::ops::Range<usize> {
        let start = self.index.partition_point(|h| h.last_key < low);
        let end = self.index.partition_point(|h| h.first_key <= high);
        start..end.max(start)
    }

    /// Ordered iterator over entries with `low <= key <= high`.
    pub fn scan(self: &Arc<Self>, low: Key, high: Key) -> SstIter {
        let blocks = if low <= high {
            self.overlapping_blocks(low, high)
        } else {
            0..0
        };
        SstIter {
            sst: Arc::clone(self),
            low,
            high,
            next_block: blocks.start,
            end_block: blocks.end,
            buf: Vec::new(),
            pos: 0,
            reads: 0,
            failed: false,
        }
    }
}

impl Drop for SstReader {
    fn drop(&mut self) {
        if self.obsolete.load(Ordering::Acquire) {
            if let Err(e) = fs::remove_file(&self.path) {
                tracing::warn!(path = %self.path.display(), error = %e, "failed to remove obsolete table");
            }
        }
    }
}

fn read_checked(file: &File, path: &Path, off: u64, len: u32) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len as usize + 4];
    file.read_exact_at(&mut buf, off)?;
    let crc = u32::from_le_bytes(buf[len as usize..].try_into().unwrap());
    buf.truncate(len as usize);
    if codec::crc32(&buf) != crc {
        return Err(Error::corruption(
            path,
            format!("checksum mismatch at offset {off}"),
        ));
    }
    Ok(buf)
}

fn decode_index(data: &[u8]) -> Option<Vec<BlockHandle>> {
    let mut r = Reader::new(data);
    let n = r.varint()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        out.push(BlockHandle {
            first_key: r.u64()?,
            last_key: r.u64()?,
            offset: r.varint()?,
            len: r.varint()? as u32,
            count: r.varint()? as u32,
        });
    }
    Some(out)
}

pub struct SstIter {
    sst: Arc<SstReader>,
    low: Key,
    high: Key,
    next_block: usize,
    end_block: usize,
    buf: Vec<Entry>,
    pos: usize,
    reads: u64,
    failed: bool,
}

impl SstIter {
    /// Data blocks read so far.
    pub fn block_reads(&self) -> u64 {
        self.reads
    }

    fn load_next(&mut self) -> Result<bool> {
        while self.next_block < self.end_block {
            let handle = self.sst.index[self.next_block];
            self.next_block += 1;
            let data = self.sst.read_block(&handle, &mut self.reads)?;
            let entries =
                decode_block(&data, self.sst.meta.group).ok_or_else(|| self.sst.corrupt_block())?;
            self.buf = entries;
            self.pos = self.buf.partition_point(|e| e.key < self.low);
            if self.pos < self.buf.len() {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl Iterator for SstIter {
    type Item = Result<Entry>;

    fn next(&mut self) -> Option<Result<Entry>> {
        if self.failed {
            return None;
        }
        if self.pos >= self.buf.len() {
            match self.load_next() {
                Ok(true) => {}
                Ok(false) => return None,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        let e = std::mem::replace(&mut self.buf[self.pos], Entry::tombstone(0, 0));
        self.pos += 1;
        if e.key > self.high {
            self.next_block = self.end_block;
            self.buf.clear();
            return None;
        }
        Some(Ok(e))
    }
}
