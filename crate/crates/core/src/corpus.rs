//! Compound and compound-pair corpora.
//!
//! Pair files are UTF-8 TSV with a header row. Labelled files carry
//! `smiles_1`, `smiles_2` and `label` (0 or 1); unlabelled files carry
//! `smiles_1` and `smiles_2`. Columns are located by header name; any other
//! columns are ignored with a warning. Single-compound corpora have one SMILES
//! per line and no header.
//!
//! Rows whose SMILES fail to parse are skipped and counted, not treated as
//! fatal. Structural problems (wrong field count, bad label) are errors that
//! name the line.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::{info, warn};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;
use crate::smiles::SmilesString;

/// Two compounds and an optional binary interaction label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairExample {
    pub left: SmilesString,
    pub right: SmilesString,
    pub label: Option<bool>,
}

impl PairExample {
    pub fn labelled(left: SmilesString, right: SmilesString, label: bool) -> Self {
        PairExample {
            left,
            right,
            label: Some(label),
        }
    }

    pub fn unlabelled(left: SmilesString, right: SmilesString) -> Self {
        PairExample {
            left,
            right,
            label: None,
        }
    }

    /// Order-independent key: (A, B) and (B, A) map to the same key.
    pub fn key(&self) -> (SmilesString, SmilesString) {
        unordered(&self.left, &self.right)
    }
}

fn unordered(a: &SmilesString, b: &SmilesString) -> (SmilesString, SmilesString) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Labelled,
    Unlabelled,
}

/// A set of compound pairs with no duplicate unordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCorpus {
    examples: Vec<PairExample>,
    kind: CorpusKind,
}

impl PairCorpus {
    /// Build a corpus, enforcing label consistency and unordered-pair uniqueness.
    pub fn new(examples: Vec<PairExample>, kind: CorpusKind) -> Result<Self> {
        let mut seen: HashMap<(SmilesString, SmilesString), usize> = HashMap::new();
        for (i, ex) in examples.iter().enumerate() {
            match (kind, ex.label) {
                (CorpusKind::Labelled, None) => {
                    return Err(Error::invalid(format!("example {i} has no label")))
                }
                (CorpusKind::Unlabelled, Some(_)) => {
                    return Err(Error::invalid(format!(
                        "example {i} is labelled in an unlabelled corpus"
                    )))
                }
                _ => {}
            }
            if let Some(first) = seen.insert(ex.key(), i) {
                return Err(Error::DuplicatePair {
                    left: ex.left.to_string(),
                    right: ex.right.to_string(),
                    line: i,
                    first_line: first,
                });
            }
        }
        Ok(PairCorpus { examples, kind })
    }

    pub fn kind(&self) -> CorpusKind {
        self.kind
    }

    pub fn examples(&self) -> &[PairExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Labels as booleans; `None` for unlabelled corpora.
    pub fn labels(&self) -> Option<Vec<bool>> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Distinct compounds appearing in any pair, sorted.
    pub fn compounds(&self) -> Vec<SmilesString> {
        let set: BTreeSet<&SmilesString> = self
            .examples
            .iter()
            .flat_map(|e| [&e.left, &e.right])
            .collect();
        set.into_iter().cloned().collect()
    }

    /// Subset by position. Uniqueness is inherited from `self`.
    pub fn select(&self, indices: &[usize]) -> PairCorpus {
        PairCorpus {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            kind: self.kind,
        }
    }

    /// Concatenate two corpora of the same kind, rejecting overlapping pairs.
    pub fn merge(self, other: PairCorpus) -> Result<PairCorpus> {
        if self.kind != other.kind {
            return Err(Error::invalid("cannot merge labelled and unlabelled corpora"));
        }
        let mut examples = self.examples;
        examples.extend(other.examples);
        PairCorpus::new(examples, self.kind)
    }
}

/// Counters reported by the loaders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub rows: usize,
    pub skipped_unparseable: usize,
}

pub fn load_pair_corpus(path: impl AsRef<Path>, kind: CorpusKind) -> Result<PairCorpus> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let (corpus, stats) = read_pair_corpus(BufReader::new(file), kind, path)?;
    info!(
        "{}: loaded {} pairs ({} rows, {} skipped with unparseable SMILES)",
        path.display(),
        corpus.len(),
        stats.rows,
        stats.skipped_unparseable
    );
    Ok(corpus)
}

/// Parse a pair TSV from any reader. `origin` is only used in messages.
pub fn read_pair_corpus<R: BufRead>(
    reader: R,
    kind: CorpusKind,
    origin: &Path,
) -> Result<(PairCorpus, LoadStats)> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => {
                return Err(Error::Schema {
                    path: origin.to_path_buf(),
                    message: "missing header row".into(),
                })
            }
        }
    };
    let columns: Vec<&str> = header.trim_end_matches('\r').split('\t').map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| c.eq_ignore_ascii_case(name));
    let schema_err = |message: String| Error::Schema {
        path: origin.to_path_buf(),
        message,
    };
    let left_col = find("smiles_1").ok_or_else(|| schema_err("missing `smiles_1` column".into()))?;
    let right_col = find("smiles_2").ok_or_else(|| schema_err("missing `smiles_2` column".into()))?;
    let label_col = match kind {
        CorpusKind::Labelled => {
            Some(find("label").ok_or_else(|| schema_err("labelled corpus needs a `label` column".into()))?)
        }
        CorpusKind::Unlabelled => None,
    };
    let used = 2 + usize::from(label_col.is_some());
    if columns.len() > used {
        let extra: Vec<&str> = columns
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != left_col && *i != right_col && Some(*i) != label_col)
            .map(|(_, c)| *c)
            .collect();
        warn!("{}: ignoring extra columns {:?}", origin.display(), extra);
    }

    let mut stats = LoadStats::default();
    let mut examples = Vec::new();
    let mut first_seen: HashMap<(SmilesString, SmilesString), usize> = HashMap::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        stats.rows += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(Error::MalformedRow {
                path: origin.to_path_buf(),
                line: line_no,
                message: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        let label = match label_col {
            Some(c) => match fields[c].trim() {
                "0" => Some(false),
                "1" => Some(true),
                other => {
                    return Err(Error::MalformedRow {
                        path: origin.to_path_buf(),
                        line: line_no,
                        message: format!("label must be 0 or 1, found {other:?}"),
                    })
                }
            },
            None => None,
        };
        let (left, right) = match (
            SmilesString::parse(fields[left_col].trim()),
            SmilesString::parse(fields[right_col].trim()),
        ) {
            (Ok(l), Ok(r)) => (l, r),
            (Err(e), _) | (_, Err(e)) => {
                log::debug!("{}:{line_no}: skipping row: {e}", origin.display());
                stats.skipped_unparseable += 1;
                continue;
            }
        };
        let ex = PairExample { left, right, label };
        if let Some(first) = first_seen.insert(ex.key(), line_no) {
            return Err(Error::DuplicatePair {
                left: ex.left.to_string(),
                right: ex.right.to_string(),
                line: line_no,
                first_line: first,
            });
        }
        examples.push(ex);
    }
    if stats.skipped_unparseable > 0 {
        warn!(
            "{}: skipped {} rows with unparseable SMILES",
            origin.display(),
            stats.skipped_unparseable
        );
    }
    Ok((PairCorpus { examples, kind }, stats))
}

pub fn write_pair_corpus(path: impl AsRef<Path>, corpus: &PairCorpus) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    write_pair_tsv(&mut out, corpus)?;
    out.flush()?;
    Ok(())
}

pub fn write_pair_tsv<W: Write>(out: &mut W, corpus: &PairCorpus) -> Result<()> {
    match corpus.kind {
        CorpusKind::Labelled => writeln!(out, "smiles_1\tsmiles_2\tlabel")?,
        CorpusKind::Unlabelled => writeln!(out, "smiles_1\tsmiles_2")?,
    }
    for ex in &corpus.examples {
        match ex.label {
            Some(y) => writeln!(out, "{}\t{}\t{}", ex.left, ex.right, u8::from(y))?,
            None => writeln!(out, "{}\t{}", ex.left, ex.right)?,
        }
    }
    Ok(())
}

/// Load a single-compound corpus (one SMILES per line, no header).
pub fn load_compounds(path: impl AsRef<Path>) -> Result<(Vec<SmilesString>, LoadStats)> {
    let path = path.as_ref();
    let (compounds, stats) = read_compounds(BufReader::new(File::open(path)?))?;
    info!(
        "{}: loaded {} compounds ({} skipped as unparseable)",
        path.display(),
        compounds.len(),
        stats.skipped_unparseable
    );
    Ok((compounds, stats))
}

pub fn read_compounds<R: BufRead>(reader: R) -> Result<(Vec<SmilesString>, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut compounds = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        stats.rows += 1;
        match SmilesString::parse(text) {
            Ok(s) => compounds.push(s),
            Err(_) => stats.skipped_unparseable += 1,
        }
    }
    if stats.skipped_unparseable > 0 {
        warn!("skipped {} unparseable compounds", stats.skipped_unparseable);
    }
    Ok((compounds, stats))
}

/// Draw `count` negatives uniformly without replacement from the complement
/// of the positive pairs over the compounds that appear in `positives`.
///
/// Self-pairs are never drawn. The result is labelled 0 and depends only on
/// `(positives, count, seed)`.
pub fn sample_negative_pairs(positives: &PairCorpus, count: usize, seed: u64) -> Result<PairCorpus> {
    sample_negative_pairs_over(&[], positives, count, seed)
}

/// Like [`sample_negative_pairs`], with the compound universe extended by
/// `drugs` (compounds that have no reported positive pair).
pub fn sample_negative_pairs_over(
    drugs: &[SmilesString],
    positives: &PairCorpus,
    count: usize,
    seed: u64,
) -> Result<PairCorpus> {
    if positives.kind != CorpusKind::Labelled || positives.examples.iter().any(|e| e.label != Some(true)) {
        return Err(Error::invalid(
            "negative sampling needs a labelled corpus whose labels are all 1",
        ));
    }
    let universe: BTreeSet<SmilesString> = positives
        .compounds()
        .into_iter()
        .chain(drugs.iter().cloned())
        .collect();
    let drugs: Vec<SmilesString> = universe.into_iter().collect();
    let id: HashMap<&SmilesString, usize> = drugs.iter().enumerate().map(|(i, d)| (d, i)).collect();
    let positive: std::collections::HashSet<(usize, usize)> = positives
        .examples
        .iter()
        .map(|e| {
            let (a, b) = (id[&e.left], id[&e.right]);
            (a.min(b), a.max(b))
        })
        .collect();
    let mut complement = Vec::new();
    for i in 0..drugs.len() {
        for j in i + 1..drugs.len() {
            if !positive.contains(&(i, j)) {
                complement.push((i, j));
            }
        }
    }
    if count > complement.len() {
        return Err(Error::invalid(format!(
            "requested {count} negative pairs but the complement has only {}",
            complement.len()
        )));
    }
    let mut rng = rng::stream(seed, rng::Stream::NegativeSampling);
    let mut picked = index::sample(&mut rng, complement.len(), count).into_vec();
    picked.sort_unstable();
    let examples = picked
        .into_iter()
        .map(|p| {
            let (i, j) = complement[p];
            PairExample::labelled(drugs[i].clone(), drugs[j].clone(), false)
        })
        .collect();
    Ok(PairCorpus {
        examples,
        kind: CorpusKind::Labelled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn s(x: &str) -> SmilesString {
        SmilesString::parse(x).unwrap()
    }

    fn read(text: &str, kind: CorpusKind) -> Result<(PairCorpus, LoadStats)> {
        read_pair_corpus(text.as_bytes(), kind, Path::new("mem.tsv"))
    }

    #[test]
    fn labelled_two_rows() {
        let (c, stats) = read("smiles_1\tsmiles_2\tlabel\nCCO\tCCN\t1\nCC\tOO\t0\n", CorpusKind::Labelled).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(stats.rows, 2);
        assert_eq!(c.labels().unwrap(), vec![true, false]);
        assert_eq!(c.kind(), CorpusKind::Labelled);
    }

    #[test]
    fn duplicate_unordered_pair_rejected() {
        let err = read("smiles_1\tsmiles_2\tlabel\nCCO\tCCN\t1\nCCN\tCCO\t1\n", CorpusKind::Labelled).unwrap_err();
        match err {
            Error::DuplicatePair { line, first_line, .. } => {
                assert_eq!((line, first_line), (3, 2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unlabelled_with_label_column_is_accepted() {
        let text = "smiles_1\tsmiles_2\tlabel\nCCO\tCCN\t1\nCC\tOO\t0\n";
        let (c, _) = read(text, CorpusKind::Unlabelled).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.examples().iter().all(|e| e.label.is_none()));
        // writing back drops the ignored column
        let mut buf = Vec::new();
        write_pair_tsv(&mut buf, &c).unwrap();
        let (again, _) = read(std::str::from_utf8(&buf).unwrap(), CorpusKind::Unlabelled).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn missing_label_column_is_schema_error() {
        let err = read("smiles_1\tsmiles_2\nCCO\tCCN\n", CorpusKind::Labelled).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err:?}");
    }

    #[test]
    fn malformed_rows_name_line() {
        let err = read("smiles_1\tsmiles_2\tlabel\nCCO\tCCN\t1\nCC\tOO\n", CorpusKind::Labelled).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }), "{err:?}");
        let err = read("smiles_1\tsmiles_2\tlabel\nCCO\tCCN\t2\n", CorpusKind::Labelled).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn unparseable_rows_are_skipped() {
        let (c, stats) = read("smiles_1\tsmiles_2\nC(C\tCC\nCC\tCO\n", CorpusKind::Unlabelled).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(stats, LoadStats { rows: 2, skipped_unparseable: 1 });
    }

    #[test]
    fn compounds_file() {
        let (c, stats) = read_compounds("CCO\n\nC[\nc1ccccc1\n".as_bytes()).unwrap();
        assert_eq!(c, vec![s("CCO"), s("c1ccccc1")]);
        assert_eq!(stats.skipped_unparseable, 1);
    }

    fn positives(pairs: &[(&str, &str)]) -> PairCorpus {
        PairCorpus::new(
            pairs.iter().map(|(a, b)| PairExample::labelled(s(a), s(b), true)).collect(),
            CorpusKind::Labelled,
        )
        .unwrap()
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let pos = positives(&[("C", "N"), ("C", "O"), ("N", "O")]);
        assert!(sample_negative_pairs(&pos, 1, 0).is_err());
        assert_eq!(sample_negative_pairs(&pos, 0, 0).unwrap().len(), 0);
    }

    #[test]
    fn forced_complement() {
        // Only A and B appear in the positive set, so C has to come from another positive.
        let pos = positives(&[("C", "N"), ("O", "S")]);
        let neg = sample_negative_pairs(&pos, 4, 3).unwrap();
        let keys: HashSet<_> = neg.examples().iter().map(PairExample::key).collect();
        let expected: HashSet<_> = [("C", "O"), ("C", "S"), ("N", "O"), ("N", "S")]
            .iter()
            .map(|(a, b)| (s(a), s(b)))
            .collect();
        assert_eq!(keys, expected);
        assert!(neg.labels().unwrap().iter().all(|y| !y));
    }

    #[test]
    fn three_drugs_one_positive() {
        let pos = positives(&[("C", "N")]);
        let drugs = [s("C"), s("N"), s("O")];
        let neg = sample_negative_pairs_over(&drugs, &pos, 2, 11).unwrap();
        let keys: HashSet<_> = neg.examples().iter().map(PairExample::key).collect();
        let expected: HashSet<_> = [("C", "O"), ("N", "O")].iter().map(|(a, b)| (s(a), s(b))).collect();
        assert_eq!(keys, expected);
        assert!(sample_negative_pairs_over(&drugs, &pos, 3, 11).is_err());
    }

    #[test]
    fn ten_drugs_seeded_sampling() {
        let names = ["C", "N", "O", "S", "P", "F", "I", "Cl", "Br", "CC"];
        let drugs: Vec<SmilesString> = names.iter().map(|n| s(n)).collect();
        let pos = positives(&[("C", "N"), ("O", "S"), ("P", "F"), ("I", "Cl"), ("Br", "CC")]);
        let positive_keys: HashSet<_> = pos.examples().iter().map(PairExample::key).collect();
        // enumerate the complement independently
        let mut complement = HashSet::new();
        for a in &drugs {
            for b in &drugs {
                let k = unordered(a, b);
                if a != b && !positive_keys.contains(&k) {
                    complement.insert(k);
                }
            }
        }
        assert_eq!(complement.len(), 45 - 5);
        let a = sample_negative_pairs_over(&drugs, &pos, 20, 1).unwrap();
        let b = sample_negative_pairs_over(&drugs, &pos, 20, 1).unwrap();
        let c = sample_negative_pairs_over(&drugs, &pos, 20, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for corpus in [&a, &c] {
            assert_eq!(corpus.len(), 20);
            let keys: HashSet<_> = corpus.examples().iter().map(PairExample::key).collect();
            assert_eq!(keys.len(), 20);
            assert!(keys.iter().all(|k| complement.contains(k) && k.0 != k.1));
        }
    }

    #[test]
    fn rejects_non_positive_input() {
        let c = PairCorpus::new(vec![PairExample::labelled(s("C"), s("N"), false)], CorpusKind::Labelled).unwrap();
        assert!(sample_negative_pairs(&c, 0, 0).is_err());
    }
}
