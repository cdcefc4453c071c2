use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::smiles::SmilesRecord;

pub const PUBCHEM_BASE: &str = "https://pubchem.ncbi.nlm.nih.gov/rest/pug";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("HTTP 404")]
    NotFound,
    #[error("HTTP {0}")]
    Status(u16),
    #[error("network: {0}")]
    Network(String),
}

/// Blocking HTTP GET; the CLI provides a real client, tests a recording.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>, TransportError>;
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("fetching is disabled (offline mode)")]
    Unavailable,
    #[error("PubChem has no compound with CID {0}")]
    NotFound(u64),
    /// Worth retrying later: network failure or a server-side status.
    #[error("fetching CID {cid} failed: {detail}")]
    Retryable { cid: u64, detail: String },
    #[error("PubChem returned an unusable response for CID {cid}: {detail}")]
    BadResponse { cid: u64, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl FetchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, FetchError::Retryable { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOptions {
    pub base_url: String,
    pub offline: bool,
    /// Pause before each request after the first.
    pub delay: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self { base_url: PUBCHEM_BASE.into(), offline: false, delay: Duration::from_millis(250) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedCompound {
    pub drug_id: String,
    pub image_path: PathBuf,
    pub smiles: String,
}

/// Downloads the structure PNG and canonical SMILES of one compound into
/// `out_dir/images/<cid>.png`, appending `<cid>\t<smiles>` to
/// `out_dir/smiles.tsv`.
pub fn fetch_pubchem(
    cid: u64,
    out_dir: &Path,
    transport: &dyn Transport,
    options: &FetchOptions,
) -> Result<FetchedCompound, FetchError> {
    if options.offline {
        return Err(FetchError::Unavailable);
    }
    if cid == 0 {
        return Err(FetchError::NotFound(cid));
    }
    let get = |url: String| {
        transport.get(&url).map_err(|e| match e {
            TransportError::NotFound => FetchError::NotFound(cid),
            other => FetchError::Retryable { cid, detail: other.to_string() },
        })
    };
    let base = options.base_url.trim_end_matches('/');
    let png = get(format!("{base}/compound/cid/{cid}/PNG"))?;
    if !png.starts_with(b"\x89PNG") {
        return Err(FetchError::BadResponse { cid, detail: "image is not a PNG".into() });
    }
    thread::sleep(options.delay);
    let body = get(format!("{base}/compound/cid/{cid}/property/CanonicalSMILES/TXT"))?;
    let smiles = String::from_utf8(body)
        .ok()
        .and_then(|s| s.lines().next().map(|l| l.trim().to_string()))
        .unwrap_or_default();
    let drug_id = cid.to_string();
    let record = SmilesRecord::new(drug_id.clone(), smiles.clone())
        .map_err(|e| FetchError::BadResponse { cid, detail: e.to_string() })?;

    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FetchError::Io { path, source }
    };
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(io(&image_dir))?;
    let image_path = image_dir.join(format!("{cid}.png"));
    fs::write(&image_path, &png).map_err(io(&image_path))?;
    let smiles_path = out_dir.join("smiles.tsv");
    let mut f = OpenOptions::new().create(true).append(true).open(&smiles_path).map_err(io(&smiles_path))?;
    writeln!(f, "{}\t{}", record.drug_id, record.smiles).map_err(io(&smiles_path))?;
    Ok(FetchedCompound { drug_id, image_path, smiles })
}
