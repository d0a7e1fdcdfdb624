//! Complete leaf-labeled binary tries.
//!
//! A [`LeafTrie`] of height `h` is stored as its `2^h` leaf labels. Leaf `i`
//! is reached by reading `i` as an `h`-bit big-endian path from the root,
//! 0 meaning left.

mod dist;
mod prefix;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

pub use dist::{entropy_bits, seeded_rng, Label, NextHopDist, SUM_TOLERANCE};
pub use prefix::{parse_prefix_table, PrefixRule};

use crate::{Error, Result};

/// Largest supported trie height; `2^30` leaves is the memory guard.
pub const MAX_HEIGHT: u32 = 30;

/// Height assumed for IPv4 next-hop tables.
pub const IPV4_HEIGHT: u32 = 24;

/// A string of at most 32 bits, read most-significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    value: u32,
    len: u32,
}

/// A full lookup key: a bit string whose length equals the trie height.
pub type Address = BitString;

impl BitString {
    pub fn new(value: u32, len: u32) -> Result<Self> {
        if len > 32 {
            return Err(Error::invalid(format!(
                "bit string of length {len} exceeds 32"
            )));
        }
        if len < 32 && value >> len != 0 {
            return Err(Error::invalid(format!(
                "value {value} does not fit in {len} bits"
            )));
        }
        Ok(BitString { value, len })
    }

    pub fn empty() -> Self {
        BitString { value: 0, len: 0 }
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    /// Bit `i` counted from the most significant end.
    pub fn bit(&self, i: u32) -> bool {
        debug_assert!(i < self.len);
        (self.value >> (self.len - 1 - i)) & 1 == 1
    }

    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        self.len <= other.len
            && (self.len == 0 || other.value >> (other.len - self.len) == self.value)
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > 32 {
            return Err(Error::invalid(format!("bit string {s:?} longer than 32")));
        }
        let mut value = 0u32;
        for c in s.chars() {
            let b = match c {
                '0' => 0,
                '1' => 1,
                _ => return Err(Error::invalid(format!("bit string {s:?} contains {c:?}"))),
            };
            value = (value << 1) | b;
        }
        Ok(BitString {
            value,
            len: s.len() as u32,
        })
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub(crate) fn check_height(h: u32) -> Result<()> {
    if (1..=MAX_HEIGHT).contains(&h) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "height",
            value: h as i64,
            min: 1,
            max: MAX_HEIGHT as i64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafTrie {
    height: u32,
    leaves: Vec<Label>,
}

impl LeafTrie {
    pub fn from_leaves(height: u32, leaves: Vec<Label>) -> Result<Self> {
        check_height(height)?;
        if leaves.len() != 1usize << height {
            return Err(Error::invalid(format!(
                "height {height} needs {} leaves, got {}",
                1usize << height,
                leaves.len()
            )));
        }
        Ok(LeafTrie { height, leaves })
    }

    /// Draws every leaf independently from `dist`.
    pub fn random(height: u32, dist: &NextHopDist, seed: u64) -> Result<Self> {
        check_height(height)?;
        let mut rng = seeded_rng(seed);
        let leaves = (0..1usize << height)
            .map(|_| dist.sample(&mut rng))
            .collect();
        Ok(LeafTrie { height, leaves })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn leaves(&self) -> &[Label] {
        &self.leaves
    }

    /// Checks that every leaf label belongs to `dist`.
    pub fn check_labels(&self, dist: &NextHopDist) -> Result<()> {
        match self.leaves.iter().find(|l| !dist.contains(**l)) {
            Some(l) => Err(Error::invalid(format!(
                "leaf label {l} not in distribution"
            ))),
            None => Ok(()),
        }
    }

    pub fn distinct_labels(&self) -> usize {
        self.leaves.iter().collect::<HashSet<_>>().len()
    }

    pub fn lookup(&self, address: &Address) -> Result<Label> {
        if address.len() != self.height {
            return Err(Error::invalid(format!(
                "address {address} has {} bits, trie height is {}",
                address.len(),
                self.height
            )));
        }
        Ok(self.leaves[address.value() as usize])
    }

    /// Writes the trie file format: a `height=<h> delta=<d>` header, then the
    /// leaf labels separated by whitespace, 64 per line.
    pub fn write_to<W: Write>(&self, delta: usize, mut w: W) -> Result<()> {
        writeln!(w, "height={} delta={}", self.height, delta)?;
        for chunk in self.leaves.chunks(64) {
            let mut first = true;
            for l in chunk {
                if !first {
                    w.write_all(b" ")?;
                }
                write!(w, "{l}")?;
                first = false;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads the trie file format, returning the trie and its declared delta.
    pub fn read_from<R: BufRead>(r: R) -> Result<(Self, usize)> {
        let mut lines = r.lines().enumerate();
        let (height, delta) = loop {
            let Some((n, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing header".into(),
                });
            };
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            break parse_header(line).map_err(|msg| Error::Parse { line: n + 1, msg })?;
        };
        check_height(height)?;

        let mut leaves = Vec::with_capacity(1usize << height);
        for (n, line) in lines {
            let line = line?;
            for tok in line.split_whitespace() {
                let label = tok.parse::<Label>().map_err(|e| Error::Parse {
                    line: n + 1,
                    msg: e.to_string(),
                })?;
                leaves.push(label);
            }
        }
        let trie = LeafTrie::from_leaves(height, leaves)?;
        let distinct = trie.distinct_labels();
        if distinct > delta {
            return Err(Error::invalid(format!(
                "trie has {distinct} distinct labels but header declares delta={delta}"
            )));
        }
        Ok((trie, delta))
    }
}

/// Parses `height=<h> delta=<d>`.
pub(crate) fn parse_header(line: &str) -> std::result::Result<(u32, usize), String> {
    let mut height = None;
    let mut delta = None;
    for field in line.split_whitespace() {
        match field.split_once('=') {
            Some(("height", v)) => height = v.parse().ok(),
            Some(("delta", v)) => delta = v.parse().ok(),
            _ => return Err(format!("unexpected header field {field:?}")),
        }
    }
    match (height, delta) {
        (Some(h), Some(d)) => Ok((h, d)),
        _ => Err(format!("expected `height=<h> delta=<d>`, got {line:?}")),
    }
}

/// Returns true when the text looks like a trie file rather than a prefix table.
pub fn is_trie_file(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("height="))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(v: u32) -> Label {
        Label(v)
    }

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    #[test]
    fn single_label_forces_all_leaves() {
        let d = NextHopDist::from_probs(&[1.0]).unwrap();
        for seed in [0, 1, u64::MAX] {
            let t = LeafTrie::random(1, &d, seed).unwrap();
            assert_eq!(t.leaves(), &[l(0), l(0)]);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let d = NextHopDist::from_probs(&[0.5, 0.5]).unwrap();
        let a = LeafTrie::random(3, &d, 42).unwrap();
        let b = LeafTrie::random(3, &d, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_frequency_matches_distribution() {
        let d = NextHopDist::from_probs(&[0.9, 0.1]).unwrap();
        let t = LeafTrie::random(16, &d, 2024).unwrap();
        let n = t.leaves().len() as f64;
        let b = t.leaves().iter().filter(|&&x| x == l(1)).count() as f64;
        let tol = 3.0 * (0.09f64 / n).sqrt();
        assert!(
            (b / n - 0.1).abs() <= tol,
            "fraction {} vs 0.1 ± {tol}",
            b / n
        );
    }

    #[test]
    fn height_guard() {
        let d = NextHopDist::from_probs(&[1.0]).unwrap();
        assert!(matches!(
            LeafTrie::random(0, &d, 0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            LeafTrie::random(31, &d, 0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(LeafTrie::from_leaves(2, vec![l(0); 3]).is_err());
    }

    #[test]
    fn lookup_indexes_leaves() {
        let t = LeafTrie::from_leaves(2, vec![l(0), l(1), l(2), l(3)]).unwrap();
        assert_eq!(t.lookup(&addr("10")).unwrap(), l(2));
        let t = LeafTrie::from_leaves(1, vec![l(0), l(0)]).unwrap();
        assert_eq!(t.lookup(&addr("1")).unwrap(), l(0));
        assert!(t.lookup(&addr("10")).is_err());
        assert!(t.lookup(&addr("")).is_err());
    }

    #[test]
    fn bit_strings() {
        let b = addr("0110");
        assert_eq!(b.value(), 6);
        assert_eq!(b.to_string(), "0110");
        assert!(addr("01").is_prefix_of(&b));
        assert!(!addr("1").is_prefix_of(&b));
        assert!(BitString::empty().is_prefix_of(&b));
        assert!("012".parse::<BitString>().is_err());
        assert!(BitString::new(4, 2).is_err());
    }

    #[test]
    fn trie_file_round_trip() {
        let d = NextHopDist::from_probs(&[0.3, 0.3, 0.4]).unwrap();
        let t = LeafTrie::random(8, &d, 5).unwrap();
        let mut buf = Vec::new();
        t.write_to(3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("height=8 delta=3\n"));
        assert!(is_trie_file(&text));
        let (back, delta) = LeafTrie::read_from(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(delta, 3);
    }

    #[test]
    fn trie_file_errors() {
        assert!(LeafTrie::read_from("".as_bytes()).is_err());
        assert!(LeafTrie::read_from("height=2 delta=1\n0 0 0\n".as_bytes()).is_err());
        assert!(LeafTrie::read_from("height=1 delta=1\n0 1\n".as_bytes()).is_err());
        assert!(LeafTrie::read_from("height=1 delta=2\n0 x\n".as_bytes()).is_err());
        assert!(LeafTrie::read_from("h=1 delta=2\n0 1\n".as_bytes()).is_err());
    }
}
