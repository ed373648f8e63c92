//! Plain-text checkpoint format.
//!
//! ```text
//! caster-ckpt v1
//! k=<k>
//! d=<d>
//! encoder=<k>,<hidden...>,<d>
//! decoder=<d>,<hidden...>,<k>
//! predictor=<k>,<hidden...>,1
//! predictor_batch_norm=<true|false>
//! alpha=… beta=… gamma=… lambda1=… lambda2=… (one per line)
//! magnifier=<m>
//! bn_momentum=<m>
//! bn_epsilon=<e>
//! vocab_sha256=<hex>
//! tensors=<count>
//! <name>\t<length>
//! <space-separated values>
//! …
//! ```
//!
//! Values are written in shortest round-trip form, so loading reproduces the
//! parameters bit for bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Architecture, CasterModel, LossWeights};
use crate::error::{Error, Result};
use crate::nn::Parameterized;

pub const CHECKPOINT_MAGIC: &str = "caster-ckpt v1";

fn join_sizes(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn tensors(model: &CasterModel) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    model.visit("", &mut |name, v| out.push((name.to_string(), v.to_vec())));
    model.visit_buffers(&mut |name, v| out.push((name.to_string(), v.to_vec())));
    out
}

pub fn write_checkpoint<W: Write>(out: &mut W, model: &CasterModel) -> Result<()> {
    let a = &model.arch;
    let w = &model.weights;
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "k={}", a.k)?;
    writeln!(out, "d={}", a.latent_dim)?;
    writeln!(out, "encoder={}", join_sizes(&a.encoder_sizes()))?;
    writeln!(out, "decoder={}", join_sizes(&a.decoder_sizes()))?;
    writeln!(out, "predictor={}", join_sizes(&a.predictor_sizes()))?;
    writeln!(out, "predictor_batch_norm={}", a.predictor_batch_norm)?;
    writeln!(out, "alpha={:e}", w.alpha)?;
    writeln!(out, "beta={:e}", w.beta)?;
    writeln!(out, "gamma={:e}", w.gamma)?;
    writeln!(out, "lambda1={:e}", w.lambda1)?;
    writeln!(out, "lambda2={:e}", w.lambda2)?;
    writeln!(out, "magnifier={:e}", model.magnifier)?;
    writeln!(out, "bn_momentum={:e}", a.bn_momentum)?;
    writeln!(out, "bn_epsilon={:e}", a.bn_epsilon)?;
    writeln!(out, "vocab_sha256={}", model.vocab_id())?;
    let ts = tensors(model);
    writeln!(out, "tensors={}", ts.len())?;
    for (name, values) in ts {
        writeln!(out, "{name}\t{}", values.len())?;
        let line: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &CasterModel) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, model)?;
    out.flush()?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::CheckpointFormat(msg.into())
}

struct Header(HashMap<String, String>);

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.0.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing header field `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| bad(format!("field `{key}` has invalid value {v:?}")))
    }

    fn sizes(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad(format!("field `{key}` has an invalid layer size {s:?}"))))
            .collect()
    }
}

/// Read a checkpoint. When `expected_vocab` is given, a checkpoint built
/// against a different vocabulary is refused.
pub fn read_checkpoint<R: BufRead>(reader: R, expected_vocab: Option<&str>) -> Result<CasterModel> {
    let mut lines = reader.lines();
    let mut next = || -> Result<String> { lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(Error::from) };
    let magic = next()?;
    if magic.trim_end() != CHECKPOINT_MAGIC {
        return Err(bad(format!("expected `{CHECKPOINT_MAGIC}`, found {magic:?}")));
    }
    let mut fields = HashMap::new();
    loop {
        let line = next()?;
        let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
        if key == "tensors" {
            break;
        }
    }
    let h = Header(fields);
    let vocab = h.get("vocab_sha256")?.to_string();
    if let Some(expected) = expected_vocab {
        if expected != vocab {
            return Err(Error::VocabularyMismatch {
                expected: vocab,
                found: expected.to_string(),
            });
        }
    }
    let k: usize = h.parse("k")?;
    let d: usize = h.parse("d")?;
    let enc = h.sizes("encoder")?;
    let dec = h.sizes("decoder")?;
    let pred = h.sizes("predictor")?;
    let ends_ok = enc.len() >= 2
        && dec.len() >= 2
        && pred.len() >= 2
        && enc[0] == k
        && enc[enc.len() - 1] == d
        && dec[0] == d
        && dec[dec.len() - 1] == k
        && pred[0] == k
        && pred[pred.len() - 1] == 1;
    if !ends_ok {
        return Err(bad("layer sizes disagree with k and d"));
    }
    let arch = Architecture {
        k,
        latent_dim: d,
        encoder_hidden: enc[1..enc.len() - 1].to_vec(),
        decoder_hidden: dec[1..dec.len() - 1].to_vec(),
        predictor_hidden: pred[1..pred.len() - 1].to_vec(),
        predictor_batch_norm: h.parse("predictor_batch_norm")?,
        bn_momentum: h.parse("bn_momentum")?,
        bn_epsilon: h.parse("bn_epsilon")?,
    };
    let weights = LossWeights {
        alpha: h.parse("alpha")?,
        beta: h.parse("beta")?,
        gamma: h.parse("gamma")?,
        lambda1: h.parse("lambda1")?,
        lambda2: h.parse("lambda2")?,
    };
    let mut model = CasterModel::new(arch, weights, h.parse("magnifier")?, vocab.as_str(), 0)
        .map_err(|e| bad(format!("header describes an invalid model: {e}")))?;

    let count: usize = h.parse("tensors")?;
    let mut stored: HashMap<String, Vec<f64>> = HashMap::new();
    for _ in 0..count {
        let line = next()?;
        let (name, len) = line.split_once('\t').ok_or_else(|| bad(format!("malformed tensor line {line:?}")))?;
        let len: usize = len.trim().parse().map_err(|_| bad(format!("bad length for tensor {name}")))?;
        let values: Vec<f64> = next()?
            .split_ascii_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?} in tensor {name}"))))
            .collect::<Result<_>>()?;
        if values.len() != len {
            return Err(bad(format!("tensor {name} declares {len} values but has {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("tensor {name} holds non-finite values")));
        }
        if stored.insert(name.to_string(), values).is_some() {
            return Err(bad(format!("tensor {name} appears twice")));
        }
    }
    let mut fill = |name: &str, dst: &mut [f64]| -> Result<()> {
        let src = stored.remove(name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
        if src.len() != dst.len() {
            return Err(bad(format!("tensor {name} has {} values, expected {}", src.len(), dst.len())));
        }
        dst.copy_from_slice(&src);
        Ok(())
    };
    let mut status = Ok(());
    model.visit_mut("", &mut |name, dst| {
        if status.is_ok() {
            status = fill(name, dst);
        }
    });
    model.visit_buffers_mut(&mut |name, dst| {
        if status.is_ok() {
            status = fill(name, dst);
        }
    });
    status?;
    if let Some(extra) = stored.keys().min() {
        return Err(bad(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>, expected_vocab: Option<&str>) -> Result<CasterModel> {
    read_checkpoint(BufReader::new(File::open(path)?), expected_vocab)
}
