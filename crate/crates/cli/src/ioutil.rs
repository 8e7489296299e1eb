//! On-disk artifact formats: JSON-lines tables, the binary sequence
//! container with its JSON sidecar, model checkpoints, training curves, and
//! the provenance manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cogcmd_core::embed::{Modality, MultimodalSequence, PrecomputedStore, VectorRow};
use cogcmd_core::synth::AcousticRow;
use cogcmd_core::tsmodel::{ModelConfig, TrainedModel};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let body = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(line)
                .with_context(|| format!("{} line {}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut file = fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for item in items {
        serde_json::to_writer(&mut file, item)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&body).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Loads a precomputed acoustic store from JSON-lines of either the general
/// {participant_id, month_index, modality, vector} rows or the acoustic-only
/// {participant_id, month_index, vector} rows the generator emits.
pub fn load_acoustic_store(path: &Path, acoustic_dim: usize) -> Result<PrecomputedStore> {
    let mut store = PrecomputedStore::new(acoustic_dim, 1);
    let body = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: VectorRow = match serde_json::from_str::<VectorRow>(line) {
            Ok(row) => row,
            Err(_) => {
                let a: AcousticRow = serde_json::from_str(line)
                    .with_context(|| format!("{} line {}", path.display(), i + 1))?;
                VectorRow {
                    participant_id: a.participant_id,
                    month_index: a.month_index,
                    modality: Modality::Acoustic,
                    vector: a.vector,
                }
            }
        };
        store.insert(row)?;
    }
    Ok(store)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SequenceSidecar {
    pub participant_id: String,
    pub t: usize,
    pub d: usize,
    pub e: usize,
    pub mask: Vec<bool>,
}

fn f64s_to_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| v.to_le_bytes()).collect()
}

fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        bail!("binary matrix length {} is not a multiple of 8", bytes.len());
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes `<pid>.seq.bin` (row-major f64 little-endian) plus the JSON
/// sidecar.
pub fn write_sequence(dir: &Path, seq: &MultimodalSequence) -> Result<()> {
    let sidecar = SequenceSidecar {
        participant_id: seq.participant_id.clone(),
        t: seq.t_months(),
        d: seq.acoustic_dim,
        e: seq.linguistic_dim,
        mask: seq.mask.clone(),
    };
    write_json(&dir.join(format!("{}.seq.json", seq.participant_id)), &sidecar)?;
    let bytes = f64s_to_bytes(seq.rows.iter().flatten().copied());
    fs::write(dir.join(format!("{}.seq.bin", seq.participant_id)), bytes)?;
    Ok(())
}

pub fn read_sequence(dir: &Path, participant_id: &str) -> Result<MultimodalSequence> {
    let sidecar: SequenceSidecar =
        read_json(&dir.join(format!("{participant_id}.seq.json")))?;
    let bytes = fs::read(dir.join(format!("{participant_id}.seq.bin")))?;
    let flat = bytes_to_f64s(&bytes)?;
    let width = sidecar.d + sidecar.e;
    if flat.len() != sidecar.t * width || sidecar.mask.len() != sidecar.t {
        bail!(
            "sequence container for {participant_id} does not match its sidecar ({} values for t={} width={})",
            flat.len(),
            sidecar.t,
            width
        );
    }
    Ok(MultimodalSequence {
        participant_id: sidecar.participant_id,
        rows: flat.chunks_exact(width).map(|c| c.to_vec()).collect(),
        mask: sidecar.mask,
        acoustic_dim: sidecar.d,
        linguistic_dim: sidecar.e,
    })
}

/// All `*.seq.json` sidecars in a directory, sorted by participant id.
pub fn read_all_sequences(dir: &Path) -> Result<Vec<MultimodalSequence>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(pid) = name.strip_suffix(".seq.json") {
            ids.push(pid.to_string());
        }
    }
    ids.sort();
    ids.iter().map(|pid| read_sequence(dir, pid)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub best_epoch: usize,
    pub val_loss_history: Vec<f64>,
}

/// Checkpoint = params.bin blob + model.json sidecar + curves.csv.
pub fn write_checkpoint(dir: &Path, model: &TrainedModel) -> Result<()> {
    fs::write(dir.join("params.bin"), f64s_to_bytes(model.parameters.iter().copied()))?;
    write_json(
        &dir.join("model.json"),
        &CheckpointMeta {
            config: model.config.clone(),
            best_epoch: model.best_epoch,
            val_loss_history: model.val_loss_history.clone(),
        },
    )?;
    let mut csv = fs::File::create(dir.join("curves.csv"))?;
    writeln!(csv, "epoch,train_loss,val_loss,lr")?;
    for row in &model.curve {
        writeln!(csv, "{},{},{},{}", row.epoch, row.train_loss, row.val_loss, row.lr)?;
    }
    Ok(())
}

/// Restores parameters and config; the per-epoch curve lives only in the
/// CSV.
pub fn read_checkpoint(dir: &Path) -> Result<TrainedModel> {
    let meta: CheckpointMeta = read_json(&dir.join("model.json"))?;
    let parameters = bytes_to_f64s(&fs::read(dir.join("params.bin"))?)?;
    Ok(TrainedModel {
        config: meta.config,
        parameters,
        best_epoch: meta.best_epoch,
        val_loss_history: meta.val_loss_history,
        curve: Vec::new(),
    })
}

fn fnv1a_bytes(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Writes manifest.json mapping each artifact file name to its content
/// hash.
pub fn write_manifest(dir: &Path, files: &[PathBuf]) -> Result<()> {
    let mut manifest = std::collections::BTreeMap::new();
    for path in files {
        let bytes = fs::read(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_default();
        manifest.insert(name, format!("{:016x}", fnv1a_bytes(&bytes)));
    }
    write_json(&dir.join("manifest.json"), &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cogcmd_core::tsmodel::{Architecture, EpochRecord};

    #[test]
    fn sequence_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = MultimodalSequence {
            participant_id: "p001".into(),
            rows: vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0]],
            mask: vec![true, false],
            acoustic_dim: 2,
            linguistic_dim: 1,
        };
        write_sequence(dir.path(), &seq).unwrap();
        let back = read_sequence(dir.path(), "p001").unwrap();
        assert_eq!(back, seq);
        let all = read_all_sequences(dir.path()).unwrap();
        assert_eq!(all, vec![seq]);
    }

    #[test]
    fn sequence_container_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let seq = MultimodalSequence {
            participant_id: "p001".into(),
            rows: vec![vec![1.0, 2.0]],
            mask: vec![true],
            acoustic_dim: 1,
            linguistic_dim: 1,
        };
        write_sequence(dir.path(), &seq).unwrap();
        fs::write(dir.path().join("p001.seq.bin"), [0u8; 12]).unwrap();
        assert!(read_sequence(dir.path(), "p001").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = TrainedModel {
            config: ModelConfig::new(Architecture::MeanPool, 4, 3, 9),
            parameters: vec![0.5, -1.25, 3.0],
            best_epoch: 2,
            val_loss_history: vec![1.0, 0.8],
            curve: vec![EpochRecord { epoch: 1, train_loss: 1.1, val_loss: 1.0, lr: 1e-4 }],
        };
        write_checkpoint(dir.path(), &model).unwrap();
        let back = read_checkpoint(dir.path()).unwrap();
        assert_eq!(back.parameters, model.parameters);
        assert_eq!(back.config, model.config);
        assert_eq!(back.best_epoch, 2);
        let csv = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert!(csv.starts_with("epoch,train_loss,val_loss,lr\n"));
        assert!(csv.contains("1,1.1,1,0.0001"));
    }

    #[test]
    fn acoustic_store_accepts_both_row_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("acoustic.jsonl");
        fs::write(
            &path,
            concat!(
                r#"{"participant_id":"p1","month_index":1,"vector":[1.0,2.0]}"#,
                "\n",
                r#"{"participant_id":"p2","month_index":3,"modality":"acoustic","vector":[0.5,0.5]}"#,
                "\n",
            ),
        )
        .unwrap();
        let store = load_acoustic_store(&path, 2).unwrap();
        use cogcmd_core::embed::AcousticProvider;
        assert_eq!(store.acoustic("p1", 1).unwrap().unwrap().values, vec![1.0, 2.0]);
        assert_eq!(store.acoustic("p2", 3).unwrap().unwrap().values, vec![0.5, 0.5]);
    }

    #[test]
    fn manifest_hashes_files() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        fs::write(&f, "hello").unwrap();
        write_manifest(dir.path(), &[f]).unwrap();
        let manifest: std::collections::BTreeMap<String, String> =
            read_json(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.len(), 1);
        assert_eq!(manifest["a.txt"].len(), 16);
    }
}
