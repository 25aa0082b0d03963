//! On-disk content-addressed store: one JSON file per object under
//! `datasets/`, `embeddings/` and `jobs/`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Dataset,
    Embedding,
    Job,
}

impl Kind {
    fn dir(self) -> &'static str {
        match self {
            Kind::Dataset => "datasets",
            Kind::Embedding => "embeddings",
            Kind::Job => "jobs",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        for k in [Kind::Dataset, Kind::Embedding, Kind::Job] {
            fs::create_dir_all(root.join(k.dir()))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: Kind, id: &str) -> Option<PathBuf> {
        // ids are hex digests or `<hex>-<n>`; anything else never names a file
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-') {
            return None;
        }
        Some(self.root.join(kind.dir()).join(format!("{id}.json")))
    }

    pub fn contains(&self, kind: Kind, id: &str) -> bool {
        self.path(kind, id).is_some_and(|p| p.is_file())
    }

    /// Writes through a temporary file and a rename, so readers never see a
    /// partial object.
    pub fn put<T: Serialize>(&self, kind: Kind, id: &str, value: &T) -> std::io::Result<()> {
        let path = self
            .path(kind, id)
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bad object id {id:?}")))?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp)?;
        serde_json::to_writer(&mut f, value)?;
        f.flush()?;
        f.sync_all()?;
        fs::rename(tmp, path)
    }

    /// Content-addressed objects are immutable: an existing file is kept.
    pub fn put_once<T: Serialize>(&self, kind: Kind, id: &str, value: &T) -> std::io::Result<()> {
        if self.contains(kind, id) {
            return Ok(());
        }
        self.put(kind, id, value)
    }

    pub fn get<T: DeserializeOwned>(&self, kind: Kind, id: &str) -> std::io::Result<Option<T>> {
        let Some(path) = self.path(kind, id) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn get_raw(&self, kind: Kind, id: &str) -> std::io::Result<Option<Vec<u8>>> {
        let Some(path) = self.path(kind, id) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn list<T: DeserializeOwned>(&self, kind: Kind) -> std::io::Result<Vec<T>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join(kind.dir()))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                out.push(serde_json::from_slice(&fs::read(&path)?)?);
            }
        }
        Ok(out)
    }
}
