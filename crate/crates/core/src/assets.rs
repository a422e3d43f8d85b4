//! On-disk assets: `GFLD` field files, `GSPC` spectrum files and the JSON
//! manifest tying precomputed parts together.
//!
//! Both binary formats are little-endian. Complex values are stored as pairs
//! of `f64` (real, imaginary).

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::descriptor::{IntegrationPolicy, KernelSpec};
use crate::energy::PartAsset;
use crate::error::{Error, FormatError, Result};
use crate::grid::{ComplexField, SampleGrid};
use crate::solids::Aabb;
use crate::spectral::{self, ModeSelection, Spectrum, TruncatedSpectrum, VectorSpectrum};

pub const FIELD_MAGIC: [u8; 4] = *b"GFLD";
pub const SPECTRUM_MAGIC: [u8; 4] = *b"GSPC";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn complex(&mut self, values: &[Complex64]) -> std::io::Result<()> {
        for v in values {
            self.f64(v.re)?;
            self.f64(v.im)?;
        }
        Ok(())
    }
    fn grid(&mut self, g: &SampleGrid, origin_first: bool) -> std::io::Result<()> {
        self.u32(g.dim() as u32)?;
        for n in g.dims() {
            self.u32(n as u32)?;
        }
        let o = g.origin();
        if origin_first {
            for a in 0..3 {
                self.f64(o[a])?;
            }
            self.f64(g.spacing())
        } else {
            self.f64(g.spacing())?;
            for a in 0..3 {
                self.f64(o[a])?;
            }
            Ok(())
        }
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> std::result::Result<[u8; N], FormatError> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => FormatError::Corrupt("truncated file".into()),
            _ => FormatError::Io(e),
        })?;
        Ok(b)
    }
    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn complex(&mut self, n: usize) -> std::result::Result<Vec<Complex64>, FormatError> {
        (0..n).map(|_| Ok(Complex64::new(self.f64()?, self.f64()?))).collect()
    }
    fn header(&mut self, magic: [u8; 4]) -> std::result::Result<(), FormatError> {
        let found = self.bytes::<4>()?;
        if found != magic {
            return Err(FormatError::BadMagic { found, expected: magic });
        }
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(FormatError::Version(v));
        }
        Ok(())
    }
    fn grid(&mut self, origin_first: bool) -> std::result::Result<SampleGrid, FormatError> {
        let dim = self.u32()? as usize;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = self.u32()? as usize;
        }
        let mut origin = [0.0; 3];
        let spacing;
        if origin_first {
            for o in &mut origin {
                *o = self.f64()?;
            }
            spacing = self.f64()?;
        } else {
            spacing = self.f64()?;
            for o in &mut origin {
                *o = self.f64()?;
            }
        }
        if dims.iter().any(|&n| n > 1 << 16) {
            return Err(FormatError::Corrupt(format!("grid dims {dims:?}")));
        }
        SampleGrid::new(dim, dims, origin, spacing).map_err(|e| FormatError::Corrupt(e.to_string()))
    }
    fn at_end(&mut self) -> std::result::Result<(), FormatError> {
        let mut rest = [0u8; 1];
        match self.0.read(&mut rest)? {
            0 => Ok(()),
            _ => Err(FormatError::Corrupt("trailing bytes".into())),
        }
    }
}

/// Writes a field with its flagged (boundary-excluded or wrapped) node indices.
pub fn write_field(path: &Path, field: &ComplexField, flags: &[usize]) -> std::result::Result<(), FormatError> {
    let mut w = Writer(BufWriter::new(fs::File::create(path)?));
    w.0.write_all(&FIELD_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.grid(&field.grid, true)?;
    w.complex(&field.values)?;
    w.u64(flags.len() as u64)?;
    for &i in flags {
        w.u64(i as u64)?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> std::result::Result<(ComplexField, Vec<usize>), FormatError> {
    let mut r = Reader(BufReader::new(fs::File::open(path)?));
    r.header(FIELD_MAGIC)?;
    let grid = r.grid(true)?;
    let values = r.complex(grid.node_count())?;
    let count = r.u64()? as usize;
    if count > grid.node_count() {
        return Err(FormatError::Corrupt(format!("{count} flags for {} nodes", grid.node_count())));
    }
    let flags = (0..count)
        .map(|_| {
            let i = r.u64()? as usize;
            if i >= grid.node_count() {
                return Err(FormatError::Corrupt(format!("flag index {i}")));
            }
            Ok(i)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    r.at_end()?;
    Ok((ComplexField::new(grid, values), flags))
}

/// Writes the window amplitudes of a (possibly truncated) spectrum. The
/// stored mode count is the window size, which equals `m` for a full spectrum.
pub fn write_spectrum(path: &Path, spectrum: &TruncatedSpectrum) -> std::result::Result<(), FormatError> {
    let mut w = Writer(BufWriter::new(fs::File::create(path)?));
    w.0.write_all(&SPECTRUM_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.grid(&spectrum.grid, false)?;
    w.u64(spectrum.amplitudes.len() as u64)?;
    w.complex(&spectrum.amplitudes)?;
    w.0.flush()?;
    Ok(())
}

pub fn read_spectrum(path: &Path) -> std::result::Result<TruncatedSpectrum, FormatError> {
    let mut r = Reader(BufReader::new(fs::File::open(path)?));
    r.header(SPECTRUM_MAGIC)?;
    let grid = r.grid(false)?;
    let modes = r.u64()? as usize;
    let window = if modes == grid.node_count() {
        grid.dims()
    } else {
        let side = spectral::window_side(modes, grid.dim()).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let mut w = [1; 3];
        for a in 0..grid.dim() {
            if side > grid.dims()[a] {
                return Err(FormatError::Corrupt(format!("window side {side} on axis {a}")));
            }
            w[a] = side;
        }
        w
    };
    let amplitudes = r.complex(modes)?;
    r.at_end()?;
    Ok(TruncatedSpectrum {
        grid,
        window,
        amplitudes,
        modes,
        selection: ModeSelection::Window,
    })
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = BufReader::new(fs::File::open(path)?);
    std::io::copy(&mut f, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

/// A file referenced by the manifest, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl FileRef {
    pub fn new(dir: &Path, name: &str) -> std::io::Result<Self> {
        Ok(Self {
            path: name.to_string(),
            sha256: sha256_file(&dir.join(name))?,
        })
    }

    pub fn resolve(&self, dir: &Path) -> PathBuf {
        dir.join(&self.path)
    }

    fn verify(&self, dir: &Path) -> Result<()> {
        let path = self.resolve(dir);
        let found = sha256_file(&path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        if found != self.sha256 {
            return Err(Error::Manifest(format!(
                "hash mismatch for {}: manifest {}, file {found}",
                self.path, self.sha256
            )));
        }
        Ok(())
    }
}

/// Model-frame bounding box as plain arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl From<Aabb> for BoxSpec {
    fn from(b: Aabb) -> Self {
        Self {
            min: b.min.coords.into(),
            max: b.max.coords.into(),
        }
    }
}

impl From<BoxSpec> for Aabb {
    fn from(b: BoxSpec) -> Self {
        Aabb {
            min: b.min.into(),
            max: b.max.into(),
        }
    }
}

/// Wall-clock time of each precompute stage, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load_ms: f64,
    pub field_ms: f64,
    pub transform_ms: f64,
    pub write_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetEntry {
    pub id: String,
    pub solid: FileRef,
    pub kernel: KernelSpec,
    pub policy: IntegrationPolicy,
    pub grid: SampleGrid,
    pub bbox: BoxSpec,
    pub field: FileRef,
    pub spectrum: FileRef,
    /// Spectra of `rho(p) p_k`, one per axis; empty for fixed parts.
    #[serde(default)]
    pub vector: Vec<FileRef>,
    pub boundary_nodes: usize,
}

impl AssetEntry {
    fn files(&self) -> impl Iterator<Item = &FileRef> {
        [&self.solid, &self.field, &self.spectrum].into_iter().chain(self.vector.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetManifest {
    pub version: u32,
    /// Built-in scene these parts were generated from, if any.
    #[serde(default)]
    pub scene: Option<String>,
    pub parts: Vec<AssetEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl AssetManifest {
    pub fn new(scene: Option<String>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            scene,
            parts: Vec::new(),
        }
    }

    /// Reads a manifest (a file, or a directory holding `manifest.json`)
    /// and checks every referenced hash.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&file).map_err(|e| Error::Manifest(format!("{}: {e}", file.display())))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!("unsupported manifest version {}", m.version)));
        }
        for p in &m.parts {
            let g = p.grid;
            let o = g.origin();
            SampleGrid::new(g.dim(), g.dims(), [o.x, o.y, o.z], g.spacing())
                .map_err(|e| Error::Manifest(format!("part {}: {e}", p.id)))?;
            for f in p.files() {
                f.verify(&dir)?;
            }
        }
        m.check_padding()?;
        Ok((m, dir))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let file = dir.join(MANIFEST_FILE);
        fs::write(&file, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(file)
    }

    pub fn part(&self, id: &str) -> Result<&AssetEntry> {
        self.parts
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::Manifest(format!("no part {id:?}")))
    }

    /// Every part's grid must hold its box padded by half the largest other
    /// box diagonal, so circular and linear correlation agree near contact.
    pub fn check_padding(&self) -> Result<()> {
        for p in &self.parts {
            let other = self
                .parts
                .iter()
                .filter(|q| q.id != p.id)
                .map(|q| Aabb::from(q.bbox).diagonal())
                .fold(0.0, f64::max);
            if !p.grid.contains_with_margin(&p.bbox.into(), 0.5 * other) {
                return Err(Error::Manifest(format!(
                    "part {} grid does not pad its box by {:.4}",
                    p.id,
                    0.5 * other
                )));
            }
        }
        Ok(())
    }

    /// Loads the spectra of one part.
    pub fn load_asset(&self, dir: &Path, id: &str) -> Result<PartAsset> {
        let e = self.part(id)?;
        let spectrum = read_full(&e.spectrum.resolve(dir), &e.grid)?;
        let vector = if e.vector.is_empty() {
            None
        } else {
            Some(VectorSpectrum {
                components: e
                    .vector
                    .iter()
                    .map(|f| read_full(&f.resolve(dir), &e.grid))
                    .collect::<Result<_>>()?,
            })
        };
        Ok(PartAsset {
            id: e.id.clone(),
            bbox: e.bbox.into(),
            spectrum,
            vector,
        })
    }

    /// Loads a fixed/moving pair, requiring identical kernel parameters.
    pub fn load_pair(&self, dir: &Path, fixed: &str, moving: &str) -> Result<(PartAsset, PartAsset)> {
        let (a, b) = (self.part(fixed)?, self.part(moving)?);
        if a.kernel != b.kernel {
            return Err(Error::Manifest(format!("parts {fixed} and {moving} use different kernels")));
        }
        Ok((self.load_asset(dir, fixed)?, self.load_asset(dir, moving)?))
    }

    pub fn load_field(&self, dir: &Path, id: &str) -> Result<ComplexField> {
        Ok(read_field(&self.part(id)?.field.resolve(dir))?.0)
    }
}

fn read_full(path: &Path, grid: &SampleGrid) -> Result<Spectrum> {
    let t = read_spectrum(path)?;
    if t.grid != *grid {
        return Err(Error::Manifest(format!("{} grid differs from its manifest entry", path.display())));
    }
    Ok(t.to_full())
}
