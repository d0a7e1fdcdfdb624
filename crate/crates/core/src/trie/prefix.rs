//! Leaf-pushing of longest-prefix-match tables into complete tries.

use std::collections::HashSet;
use std::net::Ipv4Addr;

use super::{check_height, BitString, Label, LeafTrie};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefixRule {
    pub bits: BitString,
    pub label: Label,
}

impl PrefixRule {
    pub fn new(bits: BitString, label: Label) -> Self {
        PrefixRule { bits, label }
    }
}

impl LeafTrie {
    /// Expands a rule table so that every leaf carries the label of its
    /// longest matching rule, or `default_label` when nothing matches.
    pub fn from_prefix_table(
        rules: &[PrefixRule],
        height: u32,
        default_label: Label,
    ) -> Result<Self> {
        check_height(height)?;
        let mut seen = HashSet::new();
        for r in rules {
            if r.bits.len() > height {
                return Err(Error::invalid(format!(
                    "rule {}/{} is longer than height {height}",
                    r.bits,
                    r.bits.len()
                )));
            }
            if !seen.insert(r.bits) {
                return Err(Error::invalid(format!(
                    "duplicate prefix {}/{}",
                    r.bits,
                    r.bits.len()
                )));
            }
        }

        let mut ordered: Vec<&PrefixRule> = rules.iter().collect();
        ordered.sort_by_key(|r| r.bits.len());

        let mut leaves = vec![default_label; 1usize << height];
        // shorter rules first so longer ones overwrite them
        for r in ordered {
            let shift = height - r.bits.len();
            let start = (r.bits.value() as usize) << shift;
            let end = start + (1usize << shift);
            leaves[start..end].fill(r.label);
        }
        LeafTrie::from_leaves(height, leaves)
    }
}

/// Parses a prefix table, one rule per line.
///
/// Accepted forms are `<bits>/<len> <label>` with `bits` written in `0`/`1`
/// characters, and `a.b.c.d/<len> <label>` for IPv4, which keeps the first
/// `len` bits of the address. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_prefix_table(text: &str) -> Result<Vec<PrefixRule>> {
    let mut rules = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: n + 1, msg };
        let mut fields = line.split_whitespace();
        let (Some(prefix), Some(label), None) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(err(format!(
                "expected `<prefix>/<len> <label>`, got {line:?}"
            )));
        };
        let (addr, len) = prefix
            .split_once('/')
            .ok_or_else(|| err(format!("prefix {prefix:?} has no /<len>")))?;
        let len: u32 = len
            .parse()
            .map_err(|_| err(format!("bad prefix length in {prefix:?}")))?;
        let label: Label = label.parse().map_err(|e: Error| err(e.to_string()))?;

        let bits = if addr.contains('.') {
            let ip: Ipv4Addr = addr
                .parse()
                .map_err(|_| err(format!("bad IPv4 address {addr:?}")))?;
            if len > 32 {
                return Err(err(format!("IPv4 prefix length {len} exceeds 32")));
            }
            let value = if len == 0 {
                0
            } else {
                u32::from(ip) >> (32 - len)
            };
            BitString::new(value, len).map_err(|e| err(e.to_string()))?
        } else {
            let bits: BitString = addr.parse().map_err(|e: Error| err(e.to_string()))?;
            if bits.len() != len {
                return Err(err(format!(
                    "bit string {addr:?} has length {} but /{len} given",
                    bits.len()
                )));
            }
            bits
        };
        rules.push(PrefixRule::new(bits, label));
    }
    Ok(rules)
}
