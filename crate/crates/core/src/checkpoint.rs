//! On-disk model snapshots.
//!
//! A checkpoint is a directory with three files:
//!
//! * `manifest.txt` - format version, training state, relation names, the
//!   configuration and one `param` line per tensor (`name kind dims...`);
//! * `params.bin` - for each tensor in manifest order, a little-endian `u64`
//!   rank, that many `u64` dimensions, then the little-endian `f64` values;
//! * `vocab.txt` - one token per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::{ParamKind, Tensor};
use crate::config::TrainConfig;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::EogModel;

pub const FORMAT_VERSION: u32 = 1;

/// Training state stored next to the parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointInfo {
    pub best_f1: f64,
    pub epoch: usize,
}

fn kind_name(k: ParamKind) -> &'static str {
    match k {
        ParamKind::Weight => "weight",
        ParamKind::Bias => "bias",
        ParamKind::Embedding => "embedding",
    }
}

pub fn save(dir: &Path, model: &EogModel, info: CheckpointInfo) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!("eog-checkpoint {FORMAT_VERSION}\n");
    let _ = writeln!(manifest, "best_f1 {:?}", info.best_f1);
    let _ = writeln!(manifest, "epoch {}", info.epoch);
    for r in &model.relations {
        let _ = writeln!(manifest, "relation {r}");
    }
    for line in model.config.to_text().lines() {
        let _ = writeln!(manifest, "config {line}");
    }
    let mut blob = Vec::new();
    for (_, p) in model.store.iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(manifest, "param {} {} {}", p.name, kind_name(p.kind), dims.join(" "));
        blob.extend_from_slice(&(p.value.shape().len() as u64).to_le_bytes());
        for &d in p.value.shape() {
            blob.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in p.value.data() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
    }
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    };
    write("manifest.txt", manifest.as_bytes())?;
    write("params.bin", &blob)?;
    write("vocab.txt", model.vocab.to_text().as_bytes())
}

pub fn load(dir: &Path) -> Result<(EogModel, CheckpointInfo)> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read(&path).map_err(|e| Error::io(path, e))
    };
    let manifest = String::from_utf8(read("manifest.txt")?)
        .map_err(|_| Error::Checkpoint("manifest is not UTF-8".into()))?;
    let vocab_text = String::from_utf8(read("vocab.txt")?)
        .map_err(|_| Error::Checkpoint("vocabulary is not UTF-8".into()))?;
    let blob = read("params.bin")?;

    let mut lines = manifest.lines();
    match lines.next() {
        Some(h) if h == format!("eog-checkpoint {FORMAT_VERSION}") => {}
        other => {
            return Err(Error::Checkpoint(format!(
                "unsupported header {:?}; expected version {FORMAT_VERSION}",
                other.unwrap_or("")
            )))
        }
    }
    let bad = |m: String| Error::Checkpoint(m);
    let mut best_f1 = None;
    let mut epoch = None;
    let mut relations = Vec::new();
    let mut config_text = String::new();
    let mut params: Vec<(String, Vec<usize>)> = Vec::new();
    for line in lines {
        let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
        match tag {
            "best_f1" => best_f1 = Some(rest.parse::<f64>().map_err(|_| bad(format!("bad best_f1 `{rest}`")))?),
            "epoch" => epoch = Some(rest.parse::<usize>().map_err(|_| bad(format!("bad epoch `{rest}`")))?),
            "relation" => relations.push(rest.to_string()),
            "config" => {
                config_text.push_str(rest);
                config_text.push('\n');
            }
            "param" => {
                let f: Vec<&str> = rest.split(' ').collect();
                if f.len() < 2 {
                    return Err(bad(format!("bad param line `{line}`")));
                }
                let dims = f[2..]
                    .iter()
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("bad dimensions in `{line}`")))?;
                params.push((f[0].to_string(), dims));
            }
            "" => {}
            _ => return Err(bad(format!("unknown manifest entry `{tag}`"))),
        }
    }
    let info = CheckpointInfo {
        best_f1: best_f1.ok_or_else(|| bad("missing best_f1".into()))?,
        epoch: epoch.ok_or_else(|| bad("missing epoch".into()))?,
    };
    let config = TrainConfig::from_text(&config_text)?;
    let vocab = Vocabulary::from_text(&vocab_text)?;
    let mut model = EogModel::new(config, vocab, relations, None)?;

    if params.len() != model.store.len() {
        return Err(bad(format!(
            "{} tensors stored, model has {}",
            params.len(),
            model.store.len()
        )));
    }
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = blob
            .get(pos..pos + n)
            .ok_or_else(|| Error::Checkpoint("params.bin is truncated".into()))?;
        pos += n;
        Ok(s)
    };
    let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes")) as usize;
    let ids: Vec<_> = model.store.ids().collect();
    for ((name, dims), id) in params.iter().zip(ids) {
        let p = model.store.get(id);
        if &p.name != name || p.value.shape() != dims.as_slice() {
            return Err(bad(format!(
                "tensor `{name}` {dims:?} does not match model tensor `{}` {:?}",
                p.name,
                p.value.shape()
            )));
        }
        let rank = u64_at(take(8)?);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64_at(take(8)?));
        }
        if &shape != dims {
            return Err(bad(format!("binary shape {shape:?} of `{name}` differs from manifest")));
        }
        let len: usize = shape.iter().product();
        let data: Vec<f64> = take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model.store.get_mut(id).value = Tensor::new(shape, data)?;
    }
    if pos != blob.len() {
        return Err(bad("trailing bytes in params.bin".into()));
    }
    Ok((model, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Variant;
    use crate::model::relation_names;
    use crate::synthetic::lexical_cue_corpus;

    fn tiny() -> EogModel {
        let docs = lexical_cue_corpus(2, 0);
        let cfg = TrainConfig {
            word_dim: 4,
            hidden_dim: 3,
            edge_dim: 3,
            variant: Variant::EoG,
            seed: 17,
            ..TrainConfig::default()
        };
        EogModel::new(cfg, Vocabulary::from_documents(&docs), relation_names(&docs).unwrap(), None).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = tiny();
        for p in m.store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|x| *x = *x * 3.0 + 1e-300);
        }
        let info = CheckpointInfo {
            best_f1: 0.1 + 0.2,
            epoch: 7,
        };
        save(dir.path(), &m, info).unwrap();
        let (back, got) = load(dir.path()).unwrap();
        assert_eq!(got, info);
        assert_eq!(back.config, m.config);
        assert_eq!(back.vocab, m.vocab);
        assert_eq!(back.relations, m.relations);
        for ((_, a), (_, b)) in back.store.iter().zip(m.store.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn version_and_truncation_checked() {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &tiny(), CheckpointInfo { best_f1: 0.0, epoch: 0 }).unwrap();
        let blob = std::fs::read(dir.path().join("params.bin")).unwrap();
        std::fs::write(dir.path().join("params.bin"), &blob[..blob.len() - 3]).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Checkpoint(_))));
        let m = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        std::fs::write(dir.path().join("manifest.txt"), m.replacen("checkpoint 1", "checkpoint 9", 1)).unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Checkpoint(_))));
    }
}
