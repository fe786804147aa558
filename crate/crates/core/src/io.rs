//! File formats: the EMB1 binary embedding container, the `name,label` CSV,
//! and the JSON run configuration and output documents.
//!
//! EMB1 layout, all integers little-endian:
//!
//! ```text
//! b"EMB1" | u32 version = 1 | u32 dim | u32 count
//! count x [u32 name_len | name_len bytes of UTF-8]
//! count * dim x f32, row-major in record order
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::emb::{Embedding, EmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::LabeledImageSet;
use crate::neighborhood::{CandidateSpec, DEFAULT_KEEP_K};
use crate::objective::LossWeights;
use crate::optim::{EncoderMode, FitConfig};
use crate::subspace::{PcRatioReport, SubspaceBasis};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u32 = 1;

/// Serializes a set to EMB1 bytes. Values are narrowed to `f32`.
pub fn encode_emb1(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let to_u32 = |n: usize, what: &str| u32::try_from(n).map_err(|_| Error::Format(format!("{what} exceeds u32")));
    let mut out = Vec::new();
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(set.dim(), "dim")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.len(), "count")?.to_le_bytes());
    for e in set {
        out.extend_from_slice(&to_u32(e.name.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
    }
    for e in set {
        for &x in &e.vector {
            let v = x as f32;
            if !v.is_finite() {
                return Err(Error::NonFinite(e.name.clone()));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_emb1(bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if &magic != EMB1_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != EMB1_VERSION {
        return Err(Error::BadVersion(version));
    }
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut names = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        names.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::NonUtf8Name)?);
    }
    let mut set = EmbeddingSet::new(dim);
    for name in names {
        let raw = r.take(dim.checked_mul(4).ok_or(Error::Truncated)?)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        set.push(Embedding::new(name, vector))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    Ok(set)
}

pub fn write_emb1(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_emb1(set)?).map_err(|e| Error::io(path, e))
}

pub fn read_emb1(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    decode_emb1(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Parses `name,label` rows. Fields may not contain commas or quotes.
pub fn parse_labels(text: &str) -> Result<Vec<(String, String)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == "name,label" => {}
        _ => return Err(Error::Format("labels CSV must start with header `name,label`".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty() || f.contains('"')) {
            return Err(Error::Format(format!("labels line {}: expected `name,label`", i + 1)));
        }
        rows.push((fields[0].to_string(), fields[1].to_string()));
    }
    let mut seen = std::collections::HashSet::new();
    for (n, _) in &rows {
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateName(n.clone()));
        }
    }
    Ok(rows)
}

pub fn format_labels(rows: &[(String, String)]) -> Result<String> {
    let mut out = String::from("name,label\n");
    for (n, l) in rows {
        if [n, l].iter().any(|f| f.is_empty() || f.contains([',', '"', '\n'])) {
            return Err(Error::Format(format!("cannot write label row `{n}`,`{l}`")));
        }
        out.push_str(&format!("{n},{l}\n"));
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    parse_labels(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Attaches labels to every image; every image needs a row.
pub fn label_images(images: EmbeddingSet, labels: &[(String, String)]) -> Result<LabeledImageSet> {
    let mut out = Vec::with_capacity(images.len());
    let mut missing = Vec::new();
    for name in images.names() {
        match labels.iter().find(|(n, _)| n == name) {
            Some((_, l)) => out.push(l.clone()),
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Format(format!("no label for: {}", missing.join(", "))));
    }
    LabeledImageSet::new(images, out)
}

/// Splits `path:name` at the last colon.
pub fn parse_address(addr: &str) -> Result<(PathBuf, String)> {
    match addr.rsplit_once(':') {
        Some((p, n)) if !p.is_empty() && !n.is_empty() => Ok((PathBuf::from(p), n.to_string())),
        _ => Err(Error::Format(format!("`{addr}` is not of the form <file>:<name>"))),
    }
}

pub fn read_addressed(addr: &str) -> Result<Embedding> {
    let (path, name) = parse_address(addr)?;
    let set = read_emb1(&path)?;
    set.get(&name)
        .cloned()
        .ok_or_else(|| Error::UnresolvedName(vec![format!("{}:{name}", path.display())]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidates {
    pub coarse: Vec<String>,
    pub fine: Vec<String>,
}

fn default_keep_k() -> usize {
    DEFAULT_KEEP_K
}
fn default_k() -> usize {
    1
}
fn default_lambda() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    1e-4
}
fn default_warmup() -> usize {
    1000
}
fn default_total() -> usize {
    5000
}
fn default_mode() -> EncoderMode {
    EncoderMode::Identity
}

/// One class's fit job. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub class_name: String,
    pub exemplars_file: PathBuf,
    /// EMB1 file holding a record named `class_name`: the starting embedding.
    pub base_text_file: PathBuf,
    pub vocab_file: PathBuf,
    pub candidates: Candidates,
    #[serde(default = "default_keep_k")]
    pub keep_k: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_lambda")]
    pub lambda1: f64,
    #[serde(default = "default_lambda")]
    pub lambda2: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_total")]
    pub total_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: EncoderMode,
    pub output_file: PathBuf,
}

impl RunConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            eta: self.eta,
            warmup_steps: self.warmup_steps,
            total_steps: self.total_steps,
            weights: LossWeights {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
            },
            k: self.k,
            keep_k: self.keep_k,
            seed: self.seed,
            mode: self.mode,
            ..FitConfig::default()
        }
    }

    pub fn candidate_spec(&self) -> CandidateSpec {
        CandidateSpec {
            class_name: self.class_name.clone(),
            coarse: self.candidates.coarse.clone(),
            fine: self.candidates.fine.clone(),
        }
    }

    /// Rewrites relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.exemplars_file,
            &mut self.base_text_file,
            &mut self.vocab_file,
            &mut self.output_file,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, context: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        context: context.to_string(),
        source,
    })
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn read_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let mut cfg: RunConfig = read_config(path)?;
    cfg.resolve_paths(&config_dir(path));
    Ok(cfg)
}

/// A sequence config is a JSON array of run configs.
pub fn read_seq_config(path: impl AsRef<Path>) -> Result<Vec<RunConfig>> {
    let path = path.as_ref();
    let mut cfgs: Vec<RunConfig> = read_config(path)?;
    let base = config_dir(path);
    cfgs.iter_mut().for_each(|c| c.resolve_paths(&base));
    Ok(cfgs)
}

mod ratio_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|rs| {
                rs.iter()
                    .map(|&r| {
                        if r.is_finite() {
                            Repr::Finite(r)
                        } else {
                            Repr::Text("inf".into())
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        let raw: Option<Vec<Repr>> = Option::deserialize(d)?;
        raw.map(|rs| {
            rs.into_iter()
                .map(|r| match r {
                    Repr::Finite(x) => Ok(x),
                    Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
                    Repr::Text(t) => Err(serde::de::Error::custom(format!("bad ratio `{t}`"))),
                })
                .collect()
        })
        .transpose()
    }
}

/// JSON form of a fitted basis. Infinite ratios are written as `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisDocument {
    pub version: u32,
    pub dim: usize,
    pub center: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "ratio_serde")]
    pub pc_ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_k: Option<usize>,
}

impl BasisDocument {
    pub fn new(basis: &SubspaceBasis, k: Option<usize>, report: Option<(&PcRatioReport, usize)>) -> Self {
        Self {
            version: 1,
            dim: basis.dim,
            center: basis.center.clone(),
            eigenvalues: basis.eigenvalues.clone(),
            components: basis.components.clone(),
            k,
            pc_ratios: report.map(|(r, _)| r.ratios.clone()),
            suggested_k: report.map(|(_, k)| k),
        }
    }

    pub fn basis(&self) -> SubspaceBasis {
        SubspaceBasis {
            dim: self.dim,
            center: self.center.clone(),
            components: self.components.clone(),
            eigenvalues: self.eigenvalues.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text, "basis document")
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("in-memory documents serialize")
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::fit_pca;

    fn one() -> EmbeddingSet {
        EmbeddingSet::from_pairs([("a", vec![1.0, 0.0])]).unwrap()
    }

    #[test]
    fn single_record_is_29_bytes() {
        let bytes = encode_emb1(&one()).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + (4 + 1) + 8);
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[16..21], &[1, 0, 0, 0, b'a']);
        assert_eq!(&bytes[21..], &[0, 0, 0x80, 0x3f, 0, 0, 0, 0]);
        assert_eq!(decode_emb1(&bytes).unwrap(), one());
    }

    #[test]
    fn rejects_malformed() {
        let mut bytes = encode_emb1(&one()).unwrap();
        bytes[3] = b'2';
        assert!(matches!(decode_emb1(&bytes), Err(Error::BadMagic(m)) if &m == b"EMB2"));

        let mut bytes = encode_emb1(&one()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_emb1(&bytes), Err(Error::BadVersion(2))));

        let bytes = encode_emb1(&one()).unwrap();
        for cut in [0, 3, 10, 18, 25, 28] {
            assert!(matches!(decode_emb1(&bytes[..cut]), Err(Error::Truncated)), "cut {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_emb1(&long), Err(Error::Format(_))));

        let mut bytes = encode_emb1(&one()).unwrap();
        bytes[20] = 0xff;
        assert!(matches!(decode_emb1(&bytes), Err(Error::NonUtf8Name)));

        let two = EmbeddingSet::from_pairs([("a", vec![1.0]), ("b", vec![2.0])]).unwrap();
        let mut bytes = encode_emb1(&two).unwrap();
        bytes[25] = b'a';
        assert!(matches!(decode_emb1(&bytes), Err(Error::DuplicateName(_))));
    }

    #[test]
    fn labels_csv() {
        let rows = parse_labels("name,label\nimg0,anarsa\r\nimg1,malapua\n\n").unwrap();
        assert_eq!(rows[1], ("img1".to_string(), "malapua".to_string()));
        assert_eq!(parse_labels(&format_labels(&rows).unwrap()).unwrap(), rows);
        assert!(parse_labels("image,label\n").is_err());
        assert!(parse_labels("name,label\na,b,c\n").is_err());
        assert!(parse_labels("name,label\na,b\na,c\n").is_err());
        assert!(format_labels(&[("a,b".into(), "x".into())]).is_err());
    }

    #[test]
    fn addresses() {
        assert_eq!(
            parse_address("dir/x.emb1:sweet").unwrap(),
            (PathBuf::from("dir/x.emb1"), "sweet".to_string())
        );
        assert!(parse_address("noname").is_err());
        assert!(parse_address("file:").is_err());
    }

    #[test]
    fn run_config_defaults_and_unknown_keys() {
        let json = r#"{"class_name":"anarsa","exemplars_file":"ex.emb1","base_text_file":"base.emb1",
            "vocab_file":"vocab.emb1","candidates":{"coarse":["dessert"],"fine":["malapua"]},
            "output_file":"out.emb1"}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        let fit = cfg.fit_config();
        assert_eq!(
            fit,
            FitConfig {
                keep_k: 5,
                ..FitConfig::default()
            }
        );
        let bad = json.replace("\"output_file\"", "\"colour\":1,\"output_file\"");
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn basis_document_round_trip() {
        let set = EmbeddingSet::from_pairs([
            ("a", vec![1.0, 0.0, 0.3]),
            ("b", vec![0.1, 1.0, 0.0]),
            ("c", vec![0.0, 0.2, 1.0]),
            ("d", vec![0.7, 0.7, 0.7]),
        ])
        .unwrap();
        let basis = fit_pca(&set, true).unwrap();
        let report = PcRatioReport {
            ratios: vec![2.5, f64::INFINITY, 0.1],
            labels: vec![],
        };
        let doc = BasisDocument::new(&basis, Some(1), Some((&report, 1)));
        let text = to_json_pretty(&doc);
        assert!(text.contains("\"inf\""));
        let back = BasisDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.basis(), basis);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn emb1_round_trip_is_bitwise(
                rows in prop::collection::vec(prop::collection::vec(-1e6f32..1e6, 3), 0..6),
            ) {
                let set = EmbeddingSet::from_entries(
                    3,
                    rows.iter()
                        .enumerate()
                        .map(|(i, r)| Embedding::new(format!("rec-{i}-é"), r.iter().map(|&x| x as f64).collect()))
                        .collect(),
                ).unwrap();
                let bytes = encode_emb1(&set).unwrap();
                let back = decode_emb1(&bytes).unwrap();
                prop_assert_eq!(&back, &set);
                prop_assert_eq!(encode_emb1(&back).unwrap(), bytes);
            }
        }
    }
}
