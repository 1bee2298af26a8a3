//! Per-SST bloom filter over `u64` keys using double hashing.

use crate::schema::Key;

pub const DEFAULT_BITS_PER_KEY: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u8>,
    num_hashes: u8,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hashes(key: Key) -> (u64, u64) {
    let h1 = mix64(key.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let h2 = mix64(h1 ^ 0x6a09_e667_f3bc_c909) | 1;
    (h1, h2)
}

impl BloomFilter {
    pub fn build(keys: &[Key], bits_per_key: usize) -> Self {
        let num_hashes = ((bits_per_key as f64) * std::f64::consts::LN_2)
            .round()
            .clamp(1.0, 30.0) as u8;
        let nbits = (keys.len() * bits_per_key).max(64);
        let mut filter = BloomFilter {
            bits: vec![0; nbits.div_ceil(8)],
            num_hashes,
        };
        for &k in keys {
            filter.insert(k);
        }
        filter
    }

    fn nbits(&self) -> u64 {
        self.bits.len() as u64 * 8
    }

    fn insert(&mut self, key: Key) {
        let (h1, h2) = hashes(key);
        let m = self.nbits();
        for i in 0..self.num_hashes as u64 {
            let bit = h1.wrapping_add(i.wrapping_mul(h2)) % m;
            self.bits[(bit / 8) as usize] |= 1 << (bit % 8);
        }
    }

    pub fn may_contain(&self, key: Key) -> bool {
        let (h1, h2) = hashes(key);
        let m = self.nbits();
        (0..self.num_hashes as u64).all(|i| {
            let bit = h1.wrapping_add(i.wrapping_mul(h2)) % m;
            self.bits[(bit / 8) as usize] & (1 << (bit % 8)) != 0
        })
    }

    pub fn encode(&self, buf: &mut Vec<u8>) {
        buf.push(self.num_hashes);
        buf.extend_from_slice(&self.bits);
    }

    pub fn decode(data: &[u8]) -> Option<Self> {
        let (&num_hashes, bits) = data.split_first()?;
        if num_hashes == 0 || bits.is_empty() {
            return None;
        }
        Some(BloomFilter {
            bits: bits.to_vec(),
            num_hashes,
        })
    }

    pub fn size_bytes(&self) -> usize {
        self.bits.len() + 1
    }
}
