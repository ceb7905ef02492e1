//! Sentence-embedding providers and cosine similarity.
//!
//! # Wire protocol
//!
//! `POST {endpoint}/embed` with body `{"model": "<name>", "texts": ["...", ...]}`
//! answered by `{"vectors": [[f64, ...], ...]}`, one vector per text in
//! request order. Non-2xx responses and transport errors are retried
//! (3 attempts, backoff 250 ms doubling); a 4xx other than 408/429 fails at once.
//!
//! # Offline stub
//!
//! [`StubEmbedder`] maps a text to a unit vector without any model:
//!
//! 1. `seed` = first 8 bytes of SHA-256(text as UTF-8), read little-endian.
//! 2. A SplitMix64 stream starts from `seed`; each step adds
//!    `0x9E3779B97F4A7C15` to the state and mixes it with
//!    `z = (z ^ z>>30) * 0xBF58476D1CE4E5B9; z = (z ^ z>>27) * 0x94D049BB133111EB; z ^ z>>31`.
//! 3. Component `i` is `(out_i >> 11) * 2^-53 * 2 - 1`, for `i` in `0..dim`.
//! 4. The vector is divided by its Euclidean norm.
//!
//! # Cache file
//!
//! First line `{"format":"claimcheck-embedding-cache","version":1}`, then
//! one `{"key": "<sha256 hex of text>", "vector": [...]}` per line. Floats
//! are written in shortest round-trip form so reloads are bitwise equal.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::retry::{self, Attempt, RetryPolicy};

pub const DEFAULT_EMBEDDING_MODEL: &str = "sentence-transformers/all-MiniLM-L6-v2";
pub const STUB_DIMENSION: usize = 16;
const CACHE_FORMAT: &str = "claimcheck-embedding-cache";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Anything that turns texts into fixed-dimension vectors. Implementations
/// are shared across selection workers.
pub trait Embedder: Send + Sync {
    /// Embeds one batch, preserving order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn batch_size(&self) -> usize {
        32
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }

    fn batch_size(&self) -> usize {
        (**self).batch_size()
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }

    fn batch_size(&self) -> usize {
        (**self).batch_size()
    }
}

#[derive(Debug)]
pub struct BatchFailure {
    pub batch: Range<usize>,
    pub source: Error,
}

/// Embeds `texts` in chunks of the provider's batch size. On failure, reports
/// the index range of the batch that failed.
pub fn embed_all<E: Embedder + ?Sized>(
    embedder: &E,
    texts: &[String],
) -> std::result::Result<Vec<EmbeddingVector>, BatchFailure> {
    let size = embedder.batch_size().max(1);
    let mut out: Vec<EmbeddingVector> = Vec::with_capacity(texts.len());
    for (i, chunk) in texts.chunks(size).enumerate() {
        let batch = i * size..i * size + chunk.len();
        let vectors = embedder.embed_batch(chunk).map_err(|source| BatchFailure {
            batch: batch.clone(),
            source,
        })?;
        if vectors.len() != chunk.len() {
            return Err(BatchFailure {
                batch,
                source: Error::Provider(format!("expected {} vectors, got {}", chunk.len(), vectors.len())),
            });
        }
        if let Some(first) = out.first().or(vectors.first()) {
            let expected = first.dimension();
            if let Some(bad) = vectors.iter().find(|v| v.dimension() != expected) {
                return Err(BatchFailure {
                    batch,
                    source: Error::DimensionMismatch {
                        expected,
                        actual: bad.dimension(),
                    },
                });
            }
        }
        out.extend(vectors);
    }
    Ok(out)
}

/// `dot(u, v) / (|u| |v|)`, clamped to [-1, 1]; 0 when either norm is 0.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dimension() != v.dimension() {
        return Err(Error::DimensionMismatch {
            expected: u.dimension(),
            actual: v.dimension(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.0.iter().zip(&v.0) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Deterministic, model-free embedder. See the module docs for the construction.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    pub dimension: usize,
    pub batch_size: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        StubEmbedder {
            dimension: STUB_DIMENSION,
            batch_size: 32,
        }
    }
}

impl StubEmbedder {
    pub fn vector(&self, text: &str) -> EmbeddingVector {
        let digest = Sha256::digest(text.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"));
        let mut rng = SplitMix64(seed);
        let raw: Vec<f64> = (0..self.dimension)
            .map(|_| (rng.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0)
            .collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        EmbeddingVector(raw.into_iter().map(|x| x / norm).collect())
    }
}

impl Embedder for StubEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
}

fn default_model() -> String {
    DEFAULT_EMBEDDING_MODEL.to_string()
}

fn default_batch() -> usize {
    32
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl EmbeddingProviderConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        EmbeddingProviderConfig {
            endpoint: endpoint.into(),
            model_name: default_model(),
            batch_size: default_batch(),
            timeout_ms: default_timeout_ms(),
            cache_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for the `POST /embed` contract.
pub struct HttpEmbedder {
    config: EmbeddingProviderConfig,
    agent: ureq::Agent,
    retry: RetryPolicy,
    dimension: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(HttpEmbedder {
            config,
            agent,
            retry: RetryPolicy::embedding(),
            dimension: OnceLock::new(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn url(&self) -> String {
        format!("{}/embed", self.config.endpoint.trim_end_matches('/'))
    }

    fn request_once(&self, texts: &[String]) -> Attempt<Vec<EmbeddingVector>> {
        let body = EmbedRequest {
            model: &self.config.model_name,
            texts,
        };
        match self.agent.post(&self.url()).send_json(&body) {
            Ok(resp) => match resp.into_json::<EmbedResponse>() {
                Ok(parsed) => Attempt::Done(parsed.vectors.into_iter().map(EmbeddingVector).collect()),
                Err(e) => Attempt::Retry(format!("unreadable response: {e}")),
            },
            Err(err) => retry::classify_http(err),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let vectors = self
            .retry
            .run(|| self.request_once(texts))
            .map_err(|(attempts, message)| Error::Provider(format!("{message} (after {attempts} attempt(s))")))?;
        if vectors.len() != texts.len() {
            return Err(Error::Provider(format!(
                "expected {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        for v in &vectors {
            let expected = *self.dimension.get_or_init(|| v.dimension());
            if v.dimension() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: v.dimension(),
                });
            }
        }
        Ok(vectors)
    }

    fn batch_size(&self) -> usize {
        self.config.batch_size
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    vector: Vec<f64>,
}

/// Content-addressed, file-backed cache in front of another embedder.
/// Lookups share a read lock; new entries go through one writer.
pub struct CachedEmbedder<E> {
    inner: E,
    path: PathBuf,
    entries: RwLock<HashMap<String, EmbeddingVector>>,
    writer: Mutex<BufWriter<File>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn open(inner: E, path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
        if exists {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let mut lines = BufReader::new(file).lines().enumerate();
            if let Some((_, header)) = lines.next() {
                let header: CacheHeader =
                    serde_json::from_str(&header.map_err(|e| Error::io(path, e))?).map_err(|e| Error::Malformed {
                        path: path.to_path_buf(),
                        line: 1,
                        message: format!("bad cache header: {e}"),
                    })?;
                if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
                    return Err(Error::Malformed {
                        path: path.to_path_buf(),
                        line: 1,
                        message: format!("unsupported cache {} v{}", header.format, header.version),
                    });
                }
            }
            for (idx, line) in lines {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                entries.insert(entry.key, EmbeddingVector(entry.vector));
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        if !exists {
            let header = CacheHeader {
                format: CACHE_FORMAT.into(),
                version: CACHE_VERSION,
            };
            serde_json::to_writer(&mut writer, &header)?;
            writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            writer.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(CachedEmbedder {
            inner,
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let keys: Vec<String> = texts.iter().map(|t| content_hash(t)).collect();
        let mut misses: Vec<String> = Vec::new();
        let mut miss_keys: Vec<&str> = Vec::new();
        {
            let entries = self.entries.read().expect("cache lock poisoned");
            for (key, text) in keys.iter().zip(texts) {
                if !entries.contains_key(key) && !miss_keys.contains(&key.as_str()) {
                    miss_keys.push(key);
                    misses.push(text.clone());
                }
            }
        }
        if !misses.is_empty() {
            let fresh = embed_all(&self.inner, &misses).map_err(|f| f.source)?;
            let mut writer = self.writer.lock().expect("cache writer poisoned");
            let mut entries = self.entries.write().expect("cache lock poisoned");
            for (key, vector) in miss_keys.iter().zip(fresh) {
                let entry = CacheEntry {
                    key: key.to_string(),
                    vector: vector.0.clone(),
                };
                serde_json::to_writer(&mut *writer, &entry)?;
                writer.write_all(b"\n").map_err(|e| Error::io(&self.path, e))?;
                entries.insert(key.to_string(), vector);
            }
            writer.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        let entries = self.entries.read().expect("cache lock poisoned");
        Ok(keys.iter().map(|k| entries[k].clone()).collect())
    }

    fn batch_size(&self) -> usize {
        self.inner.batch_size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        calls: AtomicUsize,
        texts: AtomicUsize,
    }

    impl Embedder for Counting {
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.texts.fetch_add(texts.len(), Ordering::SeqCst);
            StubEmbedder::default().embed_batch(texts)
        }
    }

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector(values.to_vec())
    }

    #[test]
    fn cosine_basic_cases() {
        let u = v(&[1.0, 2.0, -3.0]);
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        let neg = v(&[-1.0, -2.0, 3.0]);
        assert!((cosine_similarity(&u, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 5.0])).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn stub_is_unit_length_and_deterministic() {
        let stub = StubEmbedder::default();
        let a = stub.vector("abc");
        assert_eq!(a.dimension(), 16);
        let norm: f64 = a.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let batch = stub.embed_batch(&["abc".into(), "abc".into()]).unwrap();
        assert_eq!(batch[0], batch[1]);
        assert_eq!(batch[0], a);
        assert_ne!(stub.vector("abd"), a);
    }

    #[test]
    fn embed_all_reports_failing_batch() {
        struct FailSecond(AtomicUsize);
        impl Embedder for FailSecond {
            fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
                if self.0.fetch_add(1, Ordering::SeqCst) == 1 {
                    return Err(Error::Provider("boom".into()));
                }
                StubEmbedder::default().embed_batch(texts)
            }
            fn batch_size(&self) -> usize {
                2
            }
        }
        let texts: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let failure = embed_all(&FailSecond(AtomicUsize::new(0)), &texts).unwrap_err();
        assert_eq!(failure.batch, 2..4);
    }

    #[test]
    fn embed_all_rejects_mixed_dimensions() {
        struct Mixed;
        impl Embedder for Mixed {
            fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
                Ok(texts.iter().map(|t| EmbeddingVector(vec![1.0; t.len()])).collect())
            }
        }
        let err = embed_all(&Mixed, &["ab".into(), "abc".into()]).unwrap_err();
        assert!(matches!(err.source, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn cache_serves_repeats_without_calling_inner() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cached = CachedEmbedder::open(
            Counting {
                calls: AtomicUsize::new(0),
                texts: AtomicUsize::new(0),
            },
            &path,
        )
        .unwrap();
        let first = cached.embed_batch(&["a".into(), "b".into(), "a".into()]).unwrap();
        assert_eq!(cached.inner().texts.load(Ordering::SeqCst), 2);
        let again = cached.embed_batch(&["b".into(), "a".into()]).unwrap();
        assert_eq!(cached.inner().calls.load(Ordering::SeqCst), 1);
        assert_eq!(again[0], first[1]);
        assert_eq!(again[1], first[0]);
    }

    #[test]
    fn cache_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let texts: Vec<String> = ["GDP fell 3.5%", "x", "ünïcödé"].iter().map(|s| s.to_string()).collect();
        let original = {
            let cached = CachedEmbedder::open(StubEmbedder::default(), &path).unwrap();
            cached.embed_batch(&texts).unwrap()
        };
        struct Unreachable;
        impl Embedder for Unreachable {
            fn embed_batch(&self, _: &[String]) -> Result<Vec<EmbeddingVector>> {
                Err(Error::Provider("should be cached".into()))
            }
        }
        let reloaded = CachedEmbedder::open(Unreachable, &path).unwrap();
        assert_eq!(reloaded.len(), 3);
        let again = reloaded.embed_batch(&texts).unwrap();
        for (a, b) in original.iter().zip(&again) {
            let bits_a: Vec<u64> = a.0.iter().map(|x| x.to_bits()).collect();
            let bits_b: Vec<u64> = b.0.iter().map(|x| x.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn cache_rejects_foreign_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"format\":\"other\",\"version\":1}\n").unwrap();
        assert!(CachedEmbedder::open(StubEmbedder::default(), &path).is_err());
    }
}
