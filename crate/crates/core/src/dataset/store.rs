//! On-disk sequence store.
//!
//! ```text
//! <root>/<id>/meta              key = value: id, m, n, f, frame_rate, system_tag,
//!                               sample_tag, ambient, source, dtype=f32, endianness=little
//! <root>/<id>/frames.bin        f frames × m rows × n cols, f32 little-endian
//! <root>/<id>/mask.pgm          semantic ground truth (optional)
//! <root>/<id>/mask.inst<k>.pgm  instance mask of defect k (optional)
//! <root>/<id>/annotations/<annotator>.pgm
//! ```
//!
//! Readers may run concurrently. Writers take an exclusive `.lock` file in the
//! store root for the duration of a write, and every file is written to a
//! temporary name and renamed into place, so readers never see a partial file.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use ndarray::Array3;

use super::pgm;
use super::{GroundTruth, SampleTag, Source, SystemTag, ThermalSequence};
use crate::config::KvDocument;
use crate::error::{Error, Result};
use crate::mask::Mask;

const META: &str = "meta";
const FRAMES: &str = "frames.bin";
const SEMANTIC: &str = "mask.pgm";
const ANNOTATIONS: &str = "annotations";
const LOCK: &str = ".lock";

const CORE_META_KEYS: &[&str] = &[
    "id",
    "m",
    "n",
    "f",
    "frame_rate",
    "system_tag",
    "sample_tag",
    "ambient",
    "source",
    "dtype",
    "endianness",
];

/// Parsed `meta` file.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceMeta {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub frame_rate: f64,
    pub system_tag: SystemTag,
    pub sample_tag: SampleTag,
    pub ambient: f64,
    pub source: Source,
    /// Any keys beyond the core set, in file order.
    pub extra: KvDocument,
}

#[derive(Clone, Debug)]
pub struct SequenceStore {
    root: PathBuf,
}

/// Held while writing; removes the lock file on drop.
struct WriteLock {
    path: PathBuf,
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('.')
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl SequenceStore {
    /// Opens a store, creating the root directory if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    /// Opens an existing store without creating anything.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::NotFound(format!("store {}", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn sequence_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn lock(&self) -> Result<WriteLock> {
        let path = self.root.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(WriteLock { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Conflict(format!(
                "store {} is locked by another writer",
                self.root.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    fn checked_dir(&self, id: &str) -> Result<PathBuf> {
        if !valid_name(id) {
            return Err(Error::domain(format!("invalid sequence id `{id}`")));
        }
        let dir = self.sequence_dir(id);
        if !dir.join(META).is_file() {
            return Err(Error::NotFound(format!("sequence `{id}`")));
        }
        Ok(dir)
    }

    /// Sorted ids of every sequence directory with a `meta` file.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids = Vec::new();
        let rd = fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for entry in rd {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_name(&name) && entry.path().join(META).is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn contains(&self, id: &str) -> bool {
        valid_name(id) && self.sequence_dir(id).join(META).is_file()
    }

    pub fn read_meta(&self, id: &str) -> Result<SequenceMeta> {
        let path = self.checked_dir(id)?.join(META);
        let doc = KvDocument::read(&path)?;
        let fmt_err = |e: Error| Error::format(&path, "meta", e.to_string());
        let dtype: String = doc.require("dtype").map_err(fmt_err)?;
        let endian: String = doc.require("endianness").map_err(fmt_err)?;
        if dtype != "f32" || endian != "little" {
            return Err(Error::format(
                &path,
                "dtype",
                format!("unsupported sample format {dtype}/{endian}, expected f32/little"),
            ));
        }
        let meta = SequenceMeta {
            id: doc.require("id").map_err(fmt_err)?,
            rows: doc.require("m").map_err(fmt_err)?,
            cols: doc.require("n").map_err(fmt_err)?,
            frames: doc.require("f").map_err(fmt_err)?,
            frame_rate: doc.require("frame_rate").map_err(fmt_err)?,
            system_tag: doc.parse_or("system_tag", SystemTag::Other).map_err(fmt_err)?,
            sample_tag: doc.parse_or("sample_tag", SampleTag::Flat).map_err(fmt_err)?,
            ambient: doc.require("ambient").map_err(fmt_err)?,
            source: doc.parse_or("source", Source::Imported).map_err(fmt_err)?,
            extra: {
                let mut extra = KvDocument::new();
                for e in doc.entries() {
                    if !CORE_META_KEYS.contains(&e.key.as_str()) {
                        extra.push(e.key.clone(), &e.value);
                    }
                }
                extra
            },
        };
        if meta.id != id {
            return Err(Error::format(
                &path,
                "id",
                format!("meta id `{}` does not match directory `{id}`", meta.id),
            ));
        }
        Ok(meta)
    }

    pub fn read_sequence(&self, id: &str) -> Result<ThermalSequence> {
        let meta = self.read_meta(id)?;
        let path = self.sequence_dir(id).join(FRAMES);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = meta.frames * meta.rows * meta.cols * 4;
        if bytes.len() != expected {
            return Err(Error::format(
                &path,
                "frames.bin",
                format!("{} bytes, expected {expected} for f={} m={} n={}", bytes.len(), meta.frames, meta.rows, meta.cols),
            ));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let frames = Array3::from_shape_vec((meta.frames, meta.rows, meta.cols), values)
            .expect("length checked above");
        let seq = ThermalSequence {
            id: meta.id,
            frames,
            frame_rate: meta.frame_rate,
            source: meta.source,
            system_tag: meta.system_tag,
            sample_tag: meta.sample_tag,
            ambient: meta.ambient,
        };
        seq.validate()
            .map_err(|e| Error::format(&path, "frames.bin", e.to_string()))?;
        Ok(seq)
    }

    pub fn write_sequence(&self, seq: &ThermalSequence) -> Result<()> {
        self.write_sequence_with(seq, &KvDocument::new())
    }

    /// Writes a sequence plus extra `meta` keys (used for derived stacks).
    pub fn write_sequence_with(&self, seq: &ThermalSequence, extra: &KvDocument) -> Result<()> {
        seq.validate()?;
        if !valid_name(&seq.id) {
            return Err(Error::domain(format!("invalid sequence id `{}`", seq.id)));
        }
        if let Some(e) = extra
            .entries()
            .iter()
            .find(|e| CORE_META_KEYS.contains(&e.key.as_str()))
        {
            return Err(Error::domain(format!("extra meta key `{}` is reserved", e.key)));
        }
        let _lock = self.lock()?;
        let dir = self.sequence_dir(&seq.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let mut meta = KvDocument::new();
        meta.push("id", &seq.id);
        meta.push("m", seq.rows());
        meta.push("n", seq.cols());
        meta.push("f", seq.frame_count());
        meta.push("frame_rate", seq.frame_rate);
        meta.push("system_tag", seq.system_tag);
        meta.push("sample_tag", seq.sample_tag);
        meta.push("ambient", seq.ambient);
        meta.push("source", seq.source);
        meta.push("dtype", "f32");
        meta.push("endianness", "little");
        for e in extra.entries() {
            meta.push(e.key.clone(), &e.value);
        }
        let mut bytes = Vec::with_capacity(seq.frames.len() * 4);
        for v in seq.frames.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        // Frames first: a sequence is only listed once `meta` exists.
        write_atomic(&dir.join(FRAMES), &bytes)?;
        write_atomic(&dir.join(META), meta.to_text().as_bytes())
    }

    pub fn has_ground_truth(&self, id: &str) -> bool {
        self.sequence_dir(id).join(SEMANTIC).is_file()
    }

    pub fn write_ground_truth(&self, gt: &GroundTruth) -> Result<()> {
        let meta = self.read_meta(&gt.sequence_id)?;
        gt.validate(meta.rows, meta.cols)?;
        let _lock = self.lock()?;
        let dir = self.sequence_dir(&gt.sequence_id);
        // Stale instance files from an earlier write would change the union.
        for (k, path) in self.instance_files(&dir)? {
            if !gt.instances.iter().any(|(id, _)| *id == k) {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        for (k, m) in &gt.instances {
            write_atomic(&dir.join(format!("mask.inst{k}.pgm")), &pgm::encode(m))?;
        }
        for (annotator, m) in &gt.annotators {
            self.write_annotation_locked(&gt.sequence_id, annotator, m)?;
        }
        write_atomic(&dir.join(SEMANTIC), &pgm::encode(&gt.semantic))
    }

    fn instance_files(&self, dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
        let mut out = Vec::new();
        let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in rd {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let k = name
                .strip_prefix("mask.inst")
                .and_then(|s| s.strip_suffix(".pgm"))
                .and_then(|s| s.parse::<u32>().ok());
            if let Some(k) = k {
                out.push((k, entry.path()));
            }
        }
        out.sort();
        Ok(out)
    }

    /// Ground truth of a sequence, `None` when no `mask.pgm` exists.
    pub fn read_ground_truth(&self, id: &str) -> Result<Option<GroundTruth>> {
        let meta = self.read_meta(id)?;
        let dir = self.sequence_dir(id);
        if !dir.join(SEMANTIC).is_file() {
            return Ok(None);
        }
        let semantic = pgm::read(&dir.join(SEMANTIC))?;
        let mut instances = Vec::new();
        for (k, path) in self.instance_files(&dir)? {
            instances.push((k, pgm::read(&path)?));
        }
        let gt = GroundTruth {
            sequence_id: id.to_string(),
            instances,
            semantic,
            annotators: self.read_annotations(id)?,
        };
        gt.validate(meta.rows, meta.cols)
            .map_err(|e| Error::format(dir.join(SEMANTIC), "mask", e.to_string()))?;
        Ok(Some(gt))
    }

    pub fn annotation_path(&self, id: &str, annotator: &str) -> PathBuf {
        self.sequence_dir(id)
            .join(ANNOTATIONS)
            .join(format!("{annotator}.pgm"))
    }

    fn write_annotation_locked(&self, id: &str, annotator: &str, mask: &Mask) -> Result<PathBuf> {
        if !valid_name(annotator) {
            return Err(Error::domain(format!("invalid annotator id `{annotator}`")));
        }
        let dir = self.sequence_dir(id).join(ANNOTATIONS);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = self.annotation_path(id, annotator);
        write_atomic(&path, &pgm::encode(mask))?;
        Ok(path)
    }

    /// Stores one annotator's accepted mask, replacing any earlier one, and
    /// optionally a sidecar record next to it (`<annotator>.json`).
    pub fn write_annotation(
        &self,
        id: &str,
        annotator: &str,
        mask: &Mask,
        record: Option<&[u8]>,
    ) -> Result<PathBuf> {
        let meta = self.read_meta(id)?;
        if mask.shape() != (meta.rows, meta.cols) {
            return Err(Error::shape(
                format!("({}, {})", meta.rows, meta.cols),
                format!("{:?}", mask.shape()),
            ));
        }
        let _lock = self.lock()?;
        let path = self.write_annotation_locked(id, annotator, mask)?;
        if let Some(bytes) = record {
            write_atomic(&path.with_extension("json"), bytes)?;
        }
        Ok(path)
    }

    /// Every stored annotator mask, sorted by annotator id.
    pub fn read_annotations(&self, id: &str) -> Result<Vec<(String, Mask)>> {
        let dir = self.checked_dir(id)?.join(ANNOTATIONS);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(annotator) = name.strip_suffix(".pgm") {
                out.push((annotator.to_string(), pgm::read(&entry.path())?));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
