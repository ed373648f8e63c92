//! Frequent substructure mining over tokenized SMILES.
//!
//! The miner starts from atom-level tokens and repeatedly merges the most
//! frequent adjacent token pair across the corpus, stopping when the best pair
//! falls below the frequency threshold `eta` or after `ell` merges. Ties go to
//! the lexicographically smallest `(left, right)` pair. Occurrences are
//! replaced left to right without overlap, so `C C C` under `C + C` becomes
//! `CC C`.
//!
//! The substructures used as features are every token, base or merged, whose
//! frequency in the final segmented corpus is at least `eta`, ordered by
//! descending frequency and then by token.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::smiles::{lex_fragment, AtomTokenSequence};

/// Merge cap used when none is given.
pub const DEFAULT_MAX_MERGES: usize = 30_000;

const HEADER_MAGIC: &str = "spm-vocab v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRule {
    pub left: String,
    pub right: String,
    pub merged: String,
    pub rank: usize,
    pub frequency_at_merge: u64,
}

/// Learned merge rules plus the ordered substructure list that defines
/// feature indices.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    base_tokens: BTreeSet<String>,
    merges: Vec<MergeRule>,
    substructures: Vec<(String, u64)>,
    eta: u64,
    ell: usize,
    rules: HashMap<String, HashMap<String, usize>>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges
            && self.substructures == other.substructures
            && self.eta == other.eta
            && self.ell == other.ell
    }
}

impl Vocabulary {
    /// Assemble a vocabulary from its parts, checking every invariant.
    pub fn from_parts(
        base_tokens: BTreeSet<String>,
        merges: Vec<MergeRule>,
        substructures: Vec<(String, u64)>,
        eta: u64,
        ell: usize,
    ) -> Result<Self> {
        let bad = |m: String| Error::VocabularyFormat(m);
        if eta == 0 {
            return Err(bad("eta must be at least 1".into()));
        }
        if merges.len() > ell {
            return Err(bad(format!("{} merges exceed the cap ell={ell}", merges.len())));
        }
        let mut rules: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (i, m) in merges.iter().enumerate() {
            if m.rank != i {
                return Err(bad(format!("merge ranks must be consecutive from 0 (found {} at {i})", m.rank)));
            }
            if m.merged.len() != m.left.len() + m.right.len()
                || !m.merged.starts_with(&m.left)
                || !m.merged.ends_with(&m.right)
            {
                return Err(bad(format!("merge {i}: {:?} is not {:?} + {:?}", m.merged, m.left, m.right)));
            }
            if m.frequency_at_merge < eta {
                return Err(bad(format!(
                    "merge {i} ({} + {}) has frequency {} below eta={eta}",
                    m.left, m.right, m.frequency_at_merge
                )));
            }
            if rules
                .entry(m.left.clone())
                .or_default()
                .insert(m.right.clone(), i)
                .is_some()
            {
                return Err(bad(format!("duplicate merge rule {} + {}", m.left, m.right)));
            }
        }
        if substructures.is_empty() {
            return Err(bad("no substructure reaches the frequency threshold".into()));
        }
        let mut index = HashMap::with_capacity(substructures.len());
        for (i, (tok, _)) in substructures.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(bad(format!("duplicate substructure {tok:?}")));
            }
        }
        Ok(Vocabulary {
            base_tokens,
            merges,
            substructures,
            eta,
            ell,
            rules,
            index,
        })
    }

    pub fn base_tokens(&self) -> &BTreeSet<String> {
        &self.base_tokens
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    /// `(token, corpus frequency)` in feature-index order.
    pub fn substructures(&self) -> &[(String, u64)] {
        &self.substructures
    }

    pub fn substructure(&self, index: usize) -> Option<&str> {
        self.substructures.get(index).map(|(t, _)| t.as_str())
    }

    /// Number of substructures, `k`.
    pub fn len(&self) -> usize {
        self.substructures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.substructures.is_empty()
    }

    pub fn eta(&self) -> u64 {
        self.eta
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Feature index of a substructure token.
    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn rank_of(&self, left: &str, right: &str) -> Option<usize> {
        self.rules.get(left).and_then(|m| m.get(right)).copied()
    }

    /// Segment a tokenized string by applying the merges in rank order.
    pub fn segment(&self, tokens: &AtomTokenSequence) -> Vec<String> {
        self.segment_tokens(tokens.tokens.clone())
    }

    /// Apply the merges in rank order to an arbitrary token list.
    ///
    /// Rather than sweeping all rules, this jumps to the lowest-ranked rule
    /// above the last one applied that matches somewhere in the sequence.
    /// Rules skipped over could not have matched, so the result is identical
    /// to applying every rule in turn.
    pub fn segment_tokens(&self, mut tokens: Vec<String>) -> Vec<String> {
        let mut floor: Option<usize> = None;
        loop {
            let next = tokens
                .windows(2)
                .filter_map(|w| self.rank_of(&w[0], &w[1]))
                .filter(|&r| floor.is_none_or(|f| r > f))
                .min();
            let Some(rank) = next else { break };
            let rule = &self.merges[rank];
            tokens = merge_pass(tokens, &rule.left, &rule.right, &rule.merged);
            floor = Some(rank);
        }
        tokens
    }

    /// Serialize to the text vocabulary format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER_MAGIC} eta={} ell={}", self.eta, self.ell);
        for m in &self.merges {
            let _ = writeln!(out, "{}\t{}\t{}", m.left, m.right, m.frequency_at_merge);
        }
        out.push('\n');
        for (tok, freq) in &self.substructures {
            let _ = writeln!(out, "{tok}\t{freq}");
        }
        out
    }

    /// Parse the text vocabulary format.
    ///
    /// Base tokens are not stored in the file; after loading they are the
    /// atom-level pieces of every merge operand and substructure.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::VocabularyFormat(m);
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let rest = header
            .strip_prefix(HEADER_MAGIC)
            .ok_or_else(|| bad(format!("expected header `{HEADER_MAGIC} eta=<n> ell=<n>`")))?;
        let mut eta = None;
        let mut ell = None;
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("eta", v)) => eta = v.parse::<u64>().ok(),
                Some(("ell", v)) => ell = v.parse::<usize>().ok(),
                _ => return Err(bad(format!("unexpected header field {field:?}"))),
            }
        }
        let eta = eta.ok_or_else(|| bad("header lacks a valid eta".into()))?;
        let ell = ell.ok_or_else(|| bad("header lacks a valid ell".into()))?;

        let parse_freq = |line_no: usize, v: &str| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| bad(format!("line {}: bad frequency {v:?}", line_no + 1)))
        };
        let mut merges = Vec::new();
        let mut saw_blank = false;
        for (line_no, line) in lines.by_ref() {
            if line.is_empty() {
                saw_blank = true;
                break;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [left, right, freq] = fields[..] else {
                return Err(bad(format!("line {}: expected left<TAB>right<TAB>freq", line_no + 1)));
            };
            merges.push(MergeRule {
                left: left.to_string(),
                right: right.to_string(),
                merged: format!("{left}{right}"),
                rank: merges.len(),
                frequency_at_merge: parse_freq(line_no, freq)?,
            });
        }
        if !saw_blank {
            return Err(bad("missing blank line between merges and substructures".into()));
        }
        let mut substructures = Vec::new();
        for (line_no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let Some((tok, freq)) = line.split_once('\t') else {
                return Err(bad(format!("line {}: expected substructure<TAB>freq", line_no + 1)));
            };
            substructures.push((tok.to_string(), parse_freq(line_no, freq)?));
        }
        let mut base = BTreeSet::new();
        let operands = merges
            .iter()
            .flat_map(|m| [m.left.as_str(), m.right.as_str()])
            .chain(substructures.iter().map(|(t, _)| t.as_str()));
        for piece in operands {
            let atoms = lex_fragment(piece)
                .map_err(|e| bad(format!("token {piece:?} is not made of SMILES tokens: {e}")))?;
            base.extend(atoms.into_iter().map(str::to_string));
        }
        Vocabulary::from_parts(base, merges, substructures, eta, ell)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Vocabulary::from_text(&fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the serialized vocabulary. Checkpoints record it.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Replace every left-to-right, non-overlapping occurrence of `left right`.
fn merge_pass(tokens: Vec<String>, left: &str, right: &str, merged: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut iter = tokens.into_iter().peekable();
    while let Some(tok) = iter.next() {
        if tok == left && iter.peek().map(String::as_str) == Some(right) {
            iter.next();
            out.push(merged.to_string());
        } else {
            out.push(tok);
        }
    }
    out
}

/// Result of mining: the vocabulary and the final segmented working corpus,
/// one token list per input sequence in input order.
#[derive(Debug, Clone)]
pub struct MiningOutcome {
    pub vocabulary: Vocabulary,
    pub working_set: Vec<Vec<String>>,
}

pub fn mine_vocabulary(corpus: &[AtomTokenSequence], eta: u64, ell: usize) -> Result<Vocabulary> {
    Ok(mine(corpus, eta, ell)?.vocabulary)
}

type Pair = (u32, u32);

#[derive(Default)]
struct Interner {
    ids: HashMap<Arc<str>, u32>,
    names: Vec<Arc<str>>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        let name: Arc<str> = Arc::from(s);
        self.names.push(name.clone());
        self.ids.insert(name, id);
        id
    }
}

/// Heap entry: highest count first, then smallest `(left, right)` strings.
#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Arc<str>,
    right: Arc<str>,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Mine merges and return the working corpus alongside the vocabulary.
pub fn mine(corpus: &[AtomTokenSequence], eta: u64, ell: usize) -> Result<MiningOutcome> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot mine an empty corpus"));
    }
    if eta == 0 {
        return Err(Error::invalid("eta must be at least 1"));
    }

    let mut interner = Interner::default();
    // Identical sequences are mined once and weighted by multiplicity.
    let mut distinct: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut words: Vec<Vec<u32>> = Vec::new();
    let mut weight: Vec<u64> = Vec::new();
    let mut word_of_input = Vec::with_capacity(corpus.len());
    for seq in corpus {
        let ids: Vec<u32> = seq.tokens.iter().map(|t| interner.intern(t)).collect();
        let w = *distinct.entry(ids.clone()).or_insert_with(|| {
            words.push(ids);
            weight.push(0);
            words.len() - 1
        });
        weight[w] += 1;
        word_of_input.push(w);
    }
    drop(distinct);
    let base_tokens: BTreeSet<String> = interner.names.iter().map(|s| s.to_string()).collect();

    let mut counts: HashMap<Pair, u64> = HashMap::new();
    let mut occurs: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (w, ids) in words.iter().enumerate() {
        for p in ids.windows(2) {
            let pair = (p[0], p[1]);
            *counts.entry(pair).or_default() += weight[w];
            occurs.entry(pair).or_default().insert(w);
        }
    }
    let mut heap: BinaryHeap<Candidate> = counts
        .iter()
        .map(|(&pair, &count)| candidate(&interner, pair, count))
        .collect();

    let mut merges: Vec<MergeRule> = Vec::new();
    while merges.len() < ell {
        let best = loop {
            match heap.pop() {
                Some(c) if counts.get(&c.pair) == Some(&c.count) && c.count > 0 => break Some(c),
                Some(_) => continue,
                None => break None,
            }
        };
        let Some(best) = best else { break };
        if best.count < eta {
            break;
        }
        let merged = format!("{}{}", best.left, best.right);
        let new_id = interner.intern(&merged);
        merges.push(MergeRule {
            left: best.left.to_string(),
            right: best.right.to_string(),
            merged,
            rank: merges.len(),
            frequency_at_merge: best.count,
        });

        let mut affected: Vec<usize> = occurs
            .remove(&best.pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        affected.sort_unstable();
        let mut touched: HashSet<Pair> = HashSet::new();
        for w in affected {
            let ids = &words[w];
            if !ids.windows(2).any(|p| (p[0], p[1]) == best.pair) {
                continue;
            }
            for p in ids.windows(2) {
                let pair = (p[0], p[1]);
                let c = counts.get_mut(&pair).expect("pair counted");
                *c -= weight[w];
                touched.insert(pair);
            }
            let merged_ids = merge_ids(ids, best.pair, new_id);
            for p in merged_ids.windows(2) {
                let pair = (p[0], p[1]);
                *counts.entry(pair).or_default() += weight[w];
                occurs.entry(pair).or_default().insert(w);
                touched.insert(pair);
            }
            words[w] = merged_ids;
        }
        let mut touched: Vec<Pair> = touched.into_iter().collect();
        touched.sort_unstable();
        for pair in touched {
            match counts.get(&pair).copied() {
                Some(0) => {
                    counts.remove(&pair);
                }
                Some(c) => heap.push(candidate(&interner, pair, c)),
                None => {}
            }
        }
    }

    let mut freq: HashMap<u32, u64> = HashMap::new();
    for (w, ids) in words.iter().enumerate() {
        for &t in ids {
            *freq.entry(t).or_default() += weight[w];
        }
    }
    let mut substructures: Vec<(String, u64)> = freq
        .into_iter()
        .filter(|&(_, f)| f >= eta)
        .map(|(t, f)| (interner.names[t as usize].to_string(), f))
        .collect();
    substructures.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let working_set = word_of_input
        .iter()
        .map(|&w| {
            words[w]
                .iter()
                .map(|&t| interner.names[t as usize].to_string())
                .collect()
        })
        .collect();
    let vocabulary = Vocabulary::from_parts(base_tokens, merges, substructures, eta, ell)?;
    Ok(MiningOutcome {
        vocabulary,
        working_set,
    })
}

fn candidate(interner: &Interner, pair: Pair, count: u64) -> Candidate {
    Candidate {
        count,
        left: interner.names[pair.0 as usize].clone(),
        right: interner.names[pair.1 as usize].clone(),
        pair,
    }
}

fn merge_ids(ids: &[u32], pair: Pair, new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && (ids[i], ids[i + 1]) == pair {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}
