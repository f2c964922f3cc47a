//! Signatures, normalized cross-correlation matching, galleries and CMC.
//!
//! Gallery directory layout:
//!
//! ```text
//! gallery.json        manifest: format, version, config hash, entries
//! 0000.tfsig          exact signature values and support (binary)
//! 0000.pgm            16-bit preview of the signature
//! 0000.json           per-enrollment metadata
//! ```

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{io, Mask, ThermalImage};
use crate::scalar::Real;
use crate::vesselness::VesselnessMap;

/// A canonical-frame vesselness signature with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature<T> {
    pub subject_id: String,
    pub image_id: String,
    pub map: VesselnessMap<T>,
    /// Canonical pixels the signature is defined on.
    pub support: Mask,
    pub fit_error: Option<f64>,
    pub converged: Option<bool>,
}

impl<T: Real> Signature<T> {
    pub fn new(subject_id: impl Into<String>, image_id: impl Into<String>, map: VesselnessMap<T>, support: Mask) -> Self {
        Self { subject_id: subject_id.into(), image_id: image_id.into(), map, support, fit_error: None, converged: None }
    }

    pub fn config_hash(&self) -> &str {
        &self.map.config_hash
    }

    pub fn width(&self) -> usize {
        self.map.image.width()
    }

    pub fn height(&self) -> usize {
        self.map.image.height()
    }
}

/// Correlation coefficient of two equally sized arrays over `support`,
/// computed in `f64`.
pub fn ncc_values<T: Real>(a: &[T], b: &[T], support: &[bool]) -> Result<f64> {
    if a.len() != b.len() || a.len() != support.len() {
        return Err(Error::DimensionMismatch("ncc operands".into()));
    }
    let n = support.iter().filter(|&&s| s).count();
    if n < 2 {
        return Err(Error::ZeroVariance);
    }
    let (mut sa, mut sb) = (0.0, 0.0);
    for ((x, y), _) in a.iter().zip(b).zip(support).filter(|(_, &s)| s) {
        sa += x.as_f64();
        sb += y.as_f64();
    }
    let (ma, mb) = (sa / n as f64, sb / n as f64);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for ((x, y), _) in a.iter().zip(b).zip(support).filter(|(_, &s)| s) {
        let (dx, dy) = (x.as_f64() - ma, y.as_f64() - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if !(va > 0.0) || !(vb > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Normalized cross-correlation over the intersection of both supports.
pub fn ncc<T: Real>(a: &Signature<T>, b: &Signature<T>) -> Result<f64> {
    let support = a.support.and(&b.support)?;
    a.map.image.check_same_size(b.width(), b.height())?;
    ncc_values(a.map.image.data(), b.map.image.data(), support.data())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub probe_id: String,
    /// `(subject, rho)`, best score per subject, descending.
    pub ranked: Vec<(String, f64)>,
    /// 1-based rank of the probe's own subject, when enrolled.
    pub correct_rank: Option<usize>,
}

impl MatchResult {
    /// Difference between the top two scores (0 with a single subject).
    pub fn margin(&self) -> f64 {
        match self.ranked.as_slice() {
            [a, b, ..] => a.1 - b.1,
            _ => 0.0,
        }
    }

    pub fn rank_of(&self, subject: &str) -> Option<usize> {
        self.ranked.iter().position(|(s, _)| s == subject).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gallery<T> {
    pub config_hash: String,
    /// Free-form reference to the model the signatures were computed with.
    pub model: Option<String>,
    pub entries: Vec<Signature<T>>,
}

const GALLERY_FORMAT: &str = "thermoface-gallery";
const GALLERY_VERSION: u32 = 1;
const SIG_MAGIC: &[u8; 4] = b"TFSG";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config_hash: String,
    model: Option<String>,
    entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    subject: String,
    image: String,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    subject: String,
    image: String,
    width: usize,
    height: usize,
    scales: Vec<f64>,
    config_hash: String,
    fit_error: Option<f64>,
    converged: Option<bool>,
}

impl<T: Real> Gallery<T> {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self { config_hash: config_hash.into(), model: None, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct subjects in enrollment order.
    pub fn subjects(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.subject_id.as_str()) {
                out.push(&e.subject_id);
            }
        }
        out
    }

    pub fn enroll(&mut self, sig: Signature<T>) -> Result<()> {
        if sig.config_hash() != self.config_hash {
            return Err(Error::HashMismatch { expected: self.config_hash.clone(), found: sig.config_hash().to_string() });
        }
        if self.entries.iter().any(|e| e.subject_id == sig.subject_id && e.image_id == sig.image_id) {
            return Err(Error::DuplicateEnrollment { subject: sig.subject_id, image: sig.image_id });
        }
        if let Some(first) = self.entries.first() {
            sig.map.image.check_same_size(first.width(), first.height())?;
        }
        self.entries.push(sig);
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            let stem = format!("{i:04}");
            std::fs::write(dir.join(format!("{stem}.tfsig")), encode_signature(e))?;
            io::write_pgm16(&e.map.image, dir.join(format!("{stem}.pgm")))?;
            let side = Sidecar {
                subject: e.subject_id.clone(),
                image: e.image_id.clone(),
                width: e.width(),
                height: e.height(),
                scales: e.map.scales.clone(),
                config_hash: e.map.config_hash.clone(),
                fit_error: e.fit_error,
                converged: e.converged,
            };
            std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&side)?)?;
            entries.push(ManifestEntry { subject: e.subject_id.clone(), image: e.image_id.clone(), file: stem });
        }
        let manifest = Manifest {
            format: GALLERY_FORMAT.into(),
            version: GALLERY_VERSION,
            config_hash: self.config_hash.clone(),
            model: self.model.clone(),
            entries,
        };
        std::fs::write(dir.join("gallery.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("gallery.json"))?)?;
        if manifest.format != GALLERY_FORMAT || manifest.version != GALLERY_VERSION {
            return Err(Error::Format(format!("unsupported gallery {} v{}", manifest.format, manifest.version)));
        }
        let mut g = Gallery { config_hash: manifest.config_hash, model: manifest.model, entries: Vec::new() };
        for m in manifest.entries {
            let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{}.json", m.file)))?)?;
            let bytes = std::fs::read(dir.join(format!("{}.tfsig", m.file)))?;
            let (image, support) = decode_signature::<T>(&bytes)?;
            image.check_same_size(side.width, side.height)?;
            let mut sig = Signature::new(
                m.subject,
                m.image,
                VesselnessMap { image, scales: side.scales, config_hash: side.config_hash },
                support,
            );
            sig.fit_error = side.fit_error;
            sig.converged = side.converged;
            g.enroll(sig)?;
        }
        Ok(g)
    }
}

/// `TFSG`, u32 width, u32 height, `w*h` little-endian f64 values, `w*h`
/// support bytes.
fn encode_signature<T: Real>(sig: &Signature<T>) -> Vec<u8> {
    let (w, h) = (sig.width(), sig.height());
    let mut out = Vec::with_capacity(12 + 9 * w * h);
    out.extend_from_slice(SIG_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for v in sig.map.image.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out.extend(sig.support.data().iter().map(|&b| b as u8));
    out
}

fn decode_signature<T: Real>(bytes: &[u8]) -> Result<(ThermalImage<T>, Mask)> {
    let bad = || Error::Format("truncated or corrupt signature file".into());
    if bytes.len() < 12 || &bytes[..4] != SIG_MAGIC {
        return Err(bad());
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().map_err(|_| bad())?) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().map_err(|_| bad())?) as usize;
    let n = w * h;
    if bytes.len() != 12 + 9 * n {
        return Err(bad());
    }
    let values =
        bytes[12..12 + 8 * n].chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))).collect();
    let support = bytes[12 + 8 * n..].iter().map(|&b| b != 0).collect();
    Ok((ThermalImage::new(w, h, values)?, Mask::new(w, h, support)?))
}

/// Scores `probe` against every enrollment, keeps the best score per
/// subject and ranks subjects by descending correlation (ties keep
/// enrollment order).
pub fn identify<T: Real>(gallery: &Gallery<T>, probe: &Signature<T>) -> Result<MatchResult> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    if probe.config_hash() != gallery.config_hash {
        return Err(Error::HashMismatch { expected: gallery.config_hash.clone(), found: probe.config_hash().to_string() });
    }
    let scores: Vec<f64> = gallery.entries.par_iter().map(|e| ncc(e, probe)).collect::<Result<_>>()?;
    let mut ranked: Vec<(String, f64)> = Vec::new();
    for (e, &rho) in gallery.entries.iter().zip(&scores) {
        match ranked.iter_mut().find(|(s, _)| *s == e.subject_id) {
            Some(slot) => slot.1 = slot.1.max(rho),
            None => ranked.push((e.subject_id.clone(), rho)),
        }
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = MatchResult { probe_id: probe.image_id.clone(), ranked, correct_rank: None };
    out.correct_rank = out.rank_of(&probe.subject_id);
    Ok(out)
}

/// Identification rate at ranks `1..=subjects`.
pub fn cmc_from_results(results: &[MatchResult], subjects: usize) -> Result<Vec<f64>> {
    if results.is_empty() {
        return Err(Error::InvalidParameter("CMC needs at least one probe".into()));
    }
    let mut hits = vec![0usize; subjects];
    for r in results {
        let rank = r.correct_rank.ok_or_else(|| Error::UnknownLabel(r.probe_id.clone()))?;
        for h in hits.iter_mut().skip(rank - 1) {
            *h += 1;
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / results.len() as f64).collect())
}

/// CMC of labelled probes against the gallery.
pub fn cmc<T: Real>(gallery: &Gallery<T>, probes: &[Signature<T>]) -> Result<Vec<f64>> {
    let subjects = gallery.subjects();
    for p in probes {
        if !subjects.contains(&p.subject_id.as_str()) {
            return Err(Error::UnknownLabel(p.subject_id.clone()));
        }
    }
    let results: Vec<MatchResult> = probes.iter().map(|p| identify(gallery, p)).collect::<Result<_>>()?;
    cmc_from_results(&results, subjects.len())
}

/// `rank,rate` lines with a header.
pub fn cmc_csv(curve: &[f64]) -> String {
    let mut s = String::from("rank,rate\n");
    for (i, r) in curve.iter().enumerate() {
        s.push_str(&format!("{},{:.6}\n", i + 1, r));
    }
    s
}
