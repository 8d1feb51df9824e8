//! Embedding archives: a directory holding `manifest.toml`, the binary
//! parameter payload `params.bin`, and the `vocab.tsv` the parameters are
//! bound to.
//!
//! Payload layout: the entity table row-major, then for each relation in
//! `cite, write, own, contain, comprise` order its vector followed by its
//! row-major matrix. Complex values are interleaved `(re, im)`. Numbers are
//! little-endian `f32` or `f64` according to the manifest's `encoding`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{vocabulary_fingerprint, RelationKind, TripleStore};
use crate::ingestion::parse_vocabulary;
use crate::models::{ModelKind, ModelParams, RelationBlock};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PAYLOAD_FILE: &str = "params.bin";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const FORMAT_NAME: &str = "patnet-embeddings";
pub const FORMAT_VERSION: u32 = 1;
/// Default creation stamp; keeps archives a pure function of their inputs.
pub const EPOCH_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    #[serde(rename = "f32le")]
    F32,
    #[serde(rename = "f64le")]
    F64,
}

impl Encoding {
    pub fn width(self) -> usize {
        match self {
            Encoding::F32 => 4,
            Encoding::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationShape {
    pub relation: RelationKind,
    pub vector_len: usize,
    pub matrix_rows: usize,
    pub matrix_cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    pub dim: usize,
    pub entities: usize,
    pub entity_width: usize,
    pub encoding: Encoding,
    pub complex_interleaved: bool,
    pub vocab_sha256: String,
    pub created: String,
    pub payload_bytes: u64,
    pub relations: Vec<RelationShape>,
}

impl Manifest {
    fn for_params(params: &ModelParams, encoding: Encoding, created: &str) -> Manifest {
        let kind = params.kind();
        let dim = params.dim();
        let (rows, cols) = kind.relation_matrix_shape(dim);
        let relations: Vec<RelationShape> = RelationKind::ALL
            .iter()
            .map(|&relation| RelationShape {
                relation,
                vector_len: kind.relation_vector_len(dim),
                matrix_rows: rows,
                matrix_cols: cols,
            })
            .collect();
        let mut m = Manifest {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            model: kind,
            dim,
            entities: params.n_entities(),
            entity_width: params.entity_width(),
            encoding,
            complex_interleaved: kind.is_complex(),
            vocab_sha256: params.fingerprint().to_string(),
            created: created.to_string(),
            payload_bytes: 0,
            relations,
        };
        m.payload_bytes = m.implied_payload_bytes();
        m
    }

    fn value_count(&self) -> usize {
        self.entities * self.entity_width
            + self
                .relations
                .iter()
                .map(|r| r.vector_len + r.matrix_rows * r.matrix_cols)
                .sum::<usize>()
    }

    pub fn implied_payload_bytes(&self) -> u64 {
        (self.value_count() * self.encoding.width()) as u64
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT_NAME || self.version != FORMAT_VERSION {
            return Err(Error::Archive(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        let kind = self.model;
        let (rows, cols) = kind.relation_matrix_shape(self.dim);
        let shapes_ok = self.entity_width == kind.entity_width(self.dim)
            && self.complex_interleaved == kind.is_complex()
            && self.relations.len() == RelationKind::ALL.len()
            && self.relations.iter().zip(RelationKind::ALL).all(|(s, r)| {
                s.relation == r
                    && s.vector_len == kind.relation_vector_len(self.dim)
                    && (s.matrix_rows, s.matrix_cols) == (rows, cols)
            });
        if !shapes_ok {
            return Err(Error::Archive(format!(
                "parameter shapes do not match {kind} at dim {}",
                self.dim
            )));
        }
        if self.payload_bytes != self.implied_payload_bytes() {
            return Err(Error::Archive(format!(
                "payload_bytes {} disagrees with the shapes ({})",
                self.payload_bytes,
                self.implied_payload_bytes()
            )));
        }
        Ok(())
    }
}

/// Complex rows are stored split in memory; the payload interleaves them.
fn to_interleaved(split: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let d = split.len() / 2;
    (0..d).flat_map(move |i| [split[i], split[d + i]])
}

fn from_interleaved(inter: &[f64]) -> Vec<f64> {
    let d = inter.len() / 2;
    let mut out = vec![0.0; inter.len()];
    for i in 0..d {
        out[i] = inter[2 * i];
        out[d + i] = inter[2 * i + 1];
    }
    out
}

pub fn encode_payload(params: &ModelParams, encoding: Encoding) -> Vec<u8> {
    let complex = params.kind().is_complex();
    let w = params.entity_width();
    let mut values: Vec<f64> = Vec::new();
    for row in params.entity_table().chunks(w.max(1)) {
        if complex {
            values.extend(to_interleaved(row));
        } else {
            values.extend_from_slice(row);
        }
    }
    for block in params.relations() {
        if params.kind() == ModelKind::ComplEx {
            values.extend(to_interleaved(&block.vector));
        } else {
            values.extend_from_slice(&block.vector);
        }
        values.extend_from_slice(&block.matrix);
    }
    let mut out = Vec::with_capacity(values.len() * encoding.width());
    for v in values {
        match encoding {
            Encoding::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Encoding::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

fn decode_payload(manifest: &Manifest, bytes: &[u8]) -> Result<ModelParams> {
    let expected = manifest.implied_payload_bytes();
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            offset: bytes.len() as u64,
            expected,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::Archive(format!(
            "{} trailing bytes after offset {expected}",
            bytes.len() as u64 - expected
        )));
    }
    let values: Vec<f64> = match manifest.encoding {
        Encoding::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Encoding::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let kind = manifest.model;
    let w = manifest.entity_width;
    let n_ent = manifest.entities * w;
    let mut entities = Vec::with_capacity(n_ent);
    for row in values[..n_ent].chunks(w.max(1)) {
        if kind.is_complex() {
            entities.extend(from_interleaved(row));
        } else {
            entities.extend_from_slice(row);
        }
    }
    let mut cursor = n_ent;
    let mut relations = Vec::with_capacity(manifest.relations.len());
    for shape in &manifest.relations {
        let v = &values[cursor..cursor + shape.vector_len];
        cursor += shape.vector_len;
        let m_len = shape.matrix_rows * shape.matrix_cols;
        let matrix = values[cursor..cursor + m_len].to_vec();
        cursor += m_len;
        let vector = if kind == ModelKind::ComplEx {
            from_interleaved(v)
        } else {
            v.to_vec()
        };
        relations.push(RelationBlock { vector, matrix });
    }
    ModelParams::from_parts(
        kind,
        manifest.dim,
        entities,
        relations,
        manifest.vocab_sha256.clone(),
    )
}

#[derive(Debug, Clone)]
pub struct Archive {
    pub manifest: Manifest,
    pub params: ModelParams,
    /// Vocabulary only; carries no triples.
    pub vocabulary: TripleStore,
}

pub fn write_archive(
    dir: &Path,
    params: &ModelParams,
    store: &TripleStore,
    encoding: Encoding,
    created: &str,
) -> Result<()> {
    params.check_fingerprint(store)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest::for_params(params, encoding, created);
    let text = toml::to_string(&manifest).map_err(|e| Error::Archive(e.to_string()))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    write(MANIFEST_FILE, text.as_bytes())?;
    write(PAYLOAD_FILE, &encode_payload(params, encoding))?;
    write(VOCAB_FILE, store.vocabulary_tsv().as_bytes())?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Archive(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_archive(dir: &Path) -> Result<Archive> {
    let manifest = read_manifest(dir)?;
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let found = vocabulary_fingerprint(&vocab_text);
    if found != manifest.vocab_sha256 {
        return Err(Error::FingerprintMismatch {
            expected: manifest.vocab_sha256.clone(),
            found,
        });
    }
    let vocabulary = parse_vocabulary(&vocab_text)?;
    if vocabulary.entity_count() != manifest.entities {
        return Err(Error::Archive(format!(
            "manifest lists {} entities, vocabulary has {}",
            manifest.entities,
            vocabulary.entity_count()
        )));
    }
    let payload_path = dir.join(PAYLOAD_FILE);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let params = decode_payload(&manifest, &bytes)?;
    Ok(Archive {
        manifest,
        params,
        vocabulary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SyntheticConfig};
    use crate::models::init_params;

    fn setup(kind: ModelKind) -> (TripleStore, ModelParams) {
        let store = generate_synthetic(&SyntheticConfig::new(2, 5, 2, 1, 0.5, 0.0, 1)).unwrap();
        let params =
            init_params(kind, store.entity_count(), 3, 7).with_fingerprint(store.fingerprint());
        (store, params)
    }

    #[test]
    fn f64_round_trip_is_bit_exact_for_every_model() {
        for kind in ModelKind::ALL {
            let (store, params) = setup(kind);
            let dir = tempfile::tempdir().unwrap();
            write_archive(dir.path(), &params, &store, Encoding::F64, EPOCH_TIMESTAMP).unwrap();
            let back = read_archive(dir.path()).unwrap();
            assert_eq!(back.params, params, "{kind}");
            assert_eq!(back.vocabulary.fingerprint(), store.fingerprint());
        }
    }

    #[test]
    fn f32_round_trip_is_stable_after_first_rounding() {
        let (store, params) = setup(ModelKind::ComplEx);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_archive(a.path(), &params, &store, Encoding::F32, EPOCH_TIMESTAMP).unwrap();
        let once = read_archive(a.path()).unwrap().params;
        write_archive(b.path(), &once, &store, Encoding::F32, EPOCH_TIMESTAMP).unwrap();
        assert_eq!(
            fs::read(a.path().join(PAYLOAD_FILE)).unwrap(),
            fs::read(b.path().join(PAYLOAD_FILE)).unwrap()
        );
        for (x, y) in once.entity_table().iter().zip(params.entity_table()) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }

    #[test]
    fn complex_payload_is_interleaved() {
        let (store, params) = setup(ModelKind::RotatE);
        let bytes = encode_payload(&params, Encoding::F64);
        let first: Vec<f64> = bytes[..16]
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let row = params.entity(0).unwrap();
        assert_eq!(first, vec![row[0], row[3]]);
        let _ = store;
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let (store, params) = setup(ModelKind::TransR);
        let dir = tempfile::tempdir().unwrap();
        write_archive(dir.path(), &params, &store, Encoding::F32, EPOCH_TIMESTAMP).unwrap();
        let path = dir.path().join(PAYLOAD_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match read_archive(dir.path()) {
            Err(Error::Truncated { offset, expected }) => {
                assert_eq!(offset, bytes.len() as u64 - 5);
                assert_eq!(expected, bytes.len() as u64);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn tampered_vocabulary_is_detected() {
        let (store, params) = setup(ModelKind::DistMult);
        let dir = tempfile::tempdir().unwrap();
        write_archive(dir.path(), &params, &store, Encoding::F32, EPOCH_TIMESTAMP).unwrap();
        let path = dir.path().join(VOCAB_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("c0p0", "c0p9");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            read_archive(dir.path()),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn writing_against_the_wrong_store_fails() {
        let (_, params) = setup(ModelKind::DistMult);
        let other = generate_synthetic(&SyntheticConfig::new(1, 4, 2, 1, 0.5, 0.0, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_archive(dir.path(), &params, &other, Encoding::F32, EPOCH_TIMESTAMP),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
