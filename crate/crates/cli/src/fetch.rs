use std::fs;
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hedgeforest::data::RegistryEntry;
use sha2::{Digest, Sha256};

/// Name of the checksum file written next to the data.
pub const CHECKSUM_FILE: &str = "SHA256SUMS";

const MAX_DOWNLOAD_BYTES: u64 = 512 << 20;

/// Makes sure every entry is present and has the expected shape, downloading
/// missing files unless `offline`. Writes `SHA256SUMS` and returns one report
/// line per dataset.
pub fn fetch_all(entries: &[&RegistryEntry], dest: &Path, offline: bool) -> Result<Vec<String>> {
    let mut report = Vec::new();
    let mut sums = Vec::new();
    for entry in entries {
        let path = entry.local_path(dest);
        let fetched = if path.exists() {
            false
        } else if offline {
            bail!("{}: {} is missing and downloads are disabled", entry.name, path.display());
        } else {
            let url = entry
                .url
                .as_deref()
                .with_context(|| format!("{}: no local file and no download URL", entry.name))?;
            download(url, &path).with_context(|| format!("{}: download from {url} failed", entry.name))?;
            true
        };
        let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        if let Some(expected) = &entry.sha256 {
            if !expected.eq_ignore_ascii_case(&digest) {
                bail!("{}: checksum mismatch, expected {expected}, found {digest}", entry.name);
            }
        }
        let ds = entry.load(dest).with_context(|| format!("{}: validation failed", entry.name))?;
        report.push(format!(
            "{}\t{} x {}\t{}\t{}",
            entry.name,
            ds.n_total(),
            ds.n_features(),
            if fetched { "downloaded" } else { "present" },
            digest
        ));
        sums.push(format!("{digest}  {}\n", entry.file));
    }
    fs::write(dest.join(CHECKSUM_FILE), sums.concat()).context("cannot write checksums")?;
    Ok(report)
}

fn download(url: &str, path: &Path) -> Result<()> {
    log::info!("downloading {url}");
    let mut response = ureq::get(url).call()?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .with_config()
        .limit(MAX_DOWNLOAD_BYTES)
        .reader()
        .read_to_end(&mut bytes)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    // write then rename, so an interrupted download leaves no partial file
    let tmp = path.with_extension("part");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
