use std::fmt;

use crate::keying::BitBlock;

/// A bit string, most significant bit of each byte first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new() -> Self {
        Bits(Vec::new())
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Bits(
            bytes
                .iter()
                .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
                .collect(),
        )
    }

    /// Parses a string of `0` and `1` characters.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Bits)
    }

    /// Packs into bytes; `None` unless the length is a multiple of 8.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        if !self.0.len().is_multiple_of(8) {
            return None;
        }
        Some(
            self.0
                .chunks(8)
                .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn extend_block(&mut self, block: BitBlock) {
        self.0.extend(block.bits());
    }

    pub fn prefix(&self, n: usize) -> Bits {
        Bits(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn slice(&self, start: usize, end: usize) -> Bits {
        Bits(self.0[start..end].to_vec())
    }

    /// Reads `width` bits starting at `start` as a big-endian integer.
    pub fn read_u64(&self, start: usize, width: usize) -> u64 {
        self.0[start..start + width]
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn push_u64(&mut self, value: u64, width: usize) {
        self.0.extend((0..width).rev().map(|i| (value >> i) & 1 == 1));
    }

    /// Consecutive `width`-bit blocks; a trailing partial block is dropped.
    pub fn blocks(&self, width: u32) -> Vec<BitBlock> {
        assert!(width >= 1, "blocks must carry at least one bit");
        self.0
            .chunks_exact(width as usize)
            .map(|c| {
                let v = c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
                BitBlock::new(v, width).expect("chunk fits its width")
            })
            .collect()
    }
}

impl FromIterator<bool> for Bits {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Bits(iter.into_iter().collect())
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_bytes() {
        let b = Bits::from_bytes(&[0xA5]);
        assert_eq!(b.to_string(), "10100101");
        assert_eq!(b.to_bytes().unwrap(), vec![0xA5]);
        assert!(Bits::parse("101").unwrap().to_bytes().is_none());
    }

    #[test]
    fn block_split_drops_remainder() {
        let s = Bits::parse("100001").unwrap();
        let blocks: Vec<String> = s.blocks(2).iter().map(ToString::to_string).collect();
        assert_eq!(blocks, ["10", "00", "01"]);
        let s = Bits::parse("10000").unwrap();
        let blocks: Vec<String> = s.blocks(2).iter().map(ToString::to_string).collect();
        assert_eq!(blocks, ["10", "00"]);
    }

    #[test]
    fn integer_fields() {
        let mut b = Bits::new();
        b.push_u64(0x0102_0304, 32);
        assert_eq!(b.read_u64(0, 32), 0x0102_0304);
        assert_eq!(b.to_bytes().unwrap(), [1, 2, 3, 4]);
    }
}
