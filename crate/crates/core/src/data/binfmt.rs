//! On-disk formats for embeddings, images, masks, pair manifests, and
//! labels.
//!
//! Binary layouts are little-endian with a 4-byte magic:
//!
//! ```text
//! EMB1: "EMB1" u32 count, u32 dim,            f32 data row-major
//! IMG1: "IMG1" u32 count, u32 c, u32 h, u32 w, f32 data row-major
//! MSK1: "MSK1" u32 count, u32 h, u32 w,        u8 data
//! ```
//!
//! Row ids live in a sidecar text file next to each binary artifact, one
//! id per line, same order as the rows. Pair manifests are JSONL; labels
//! are two-column TSV (`id<TAB>class`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::types::{
    EmbeddingMatrix, ImageTensorSet, MaskSet, LabelTable, PairEntry, PairManifest,
};
use crate::error::{Error, Result};

fn write_ids(ids: &[String], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for id in ids {
        if id.contains('\n') || id.contains('\r') {
            return Err(Error::Validation(format!(
                "id {id:?} contains a line break"
            )));
        }
        writeln!(w, "{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_ids(path: &Path, expected: usize) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ids: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    if ids.len() != expected {
        return Err(Error::format(
            path,
            format!("has {} ids but the binary file has {} rows", ids.len(), expected),
        ));
    }
    Ok(ids)
}

struct BinReader<'a> {
    r: BufReader<File>,
    path: &'a Path,
}

impl<'a> BinReader<'a> {
    fn open(path: &'a Path, magic: &[u8; 4], kind: &str) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut br = BinReader {
            r: BufReader::new(file),
            path,
        };
        let mut got = [0u8; 4];
        br.exact(&mut got)?;
        if &got != magic {
            return Err(Error::format(path, format!("bad magic, not an {kind} file")));
        }
        Ok(br)
    }

    fn exact(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.path, "file is truncated")
            } else {
                Error::io(self.path, e)
            }
        })
    }

    fn u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; count * 4];
        self.exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn u8_vec(&mut self, count: usize) -> Result<Vec<u8>> {
        let mut bytes = vec![0u8; count];
        self.exact(&mut bytes)?;
        Ok(bytes)
    }

    fn expect_eof(&mut self) -> Result<()> {
        let mut one = [0u8; 1];
        match self.r.read(&mut one) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(self.path, "trailing bytes after payload")),
            Err(e) => Err(Error::io(self.path, e)),
        }
    }
}

pub fn write_embeddings(m: &EmbeddingMatrix, bin_path: &Path, ids_path: &Path) -> Result<()> {
    let file = File::create(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(bin_path, e);
    w.write_all(b"EMB1").map_err(io)?;
    w.write_all(&(m.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(m.dim() as u32).to_le_bytes()).map_err(io)?;
    for &v in m.data() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_ids(m.ids(), ids_path)
}

pub fn read_embeddings(bin_path: &Path, ids_path: &Path) -> Result<EmbeddingMatrix> {
    let mut r = BinReader::open(bin_path, b"EMB1", "embedding")?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let data = r.f32_vec(count * dim)?;
    r.expect_eof()?;
    let ids = read_ids(ids_path, count)?;
    EmbeddingMatrix::new(ids, dim, data)
}

pub fn write_images(set: &ImageTensorSet, bin_path: &Path, ids_path: &Path) -> Result<()> {
    set.validate()?;
    let file = File::create(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(bin_path, e);
    w.write_all(b"IMG1").map_err(io)?;
    for dim in [set.len(), set.shape.0, set.shape.1, set.shape.2] {
        w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    }
    for &v in &set.data {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_ids(&set.ids, ids_path)
}

pub fn read_images(bin_path: &Path, ids_path: &Path) -> Result<ImageTensorSet> {
    let mut r = BinReader::open(bin_path, b"IMG1", "image")?;
    let count = r.u32()? as usize;
    let c = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let data = r.f32_vec(count * c * h * w)?;
    r.expect_eof()?;
    let ids = read_ids(ids_path, count)?;
    let set = ImageTensorSet {
        ids,
        shape: (c, h, w),
        data,
    };
    set.validate()?;
    Ok(set)
}

pub fn write_masks(set: &MaskSet, bin_path: &Path, ids_path: &Path) -> Result<()> {
    set.validate()?;
    let file = File::create(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(bin_path, e);
    w.write_all(b"MSK1").map_err(io)?;
    for dim in [set.len(), set.shape.0, set.shape.1] {
        w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    }
    w.write_all(&set.data).map_err(io)?;
    w.flush().map_err(io)?;
    write_ids(&set.ids, ids_path)
}

pub fn read_masks(bin_path: &Path, ids_path: &Path) -> Result<MaskSet> {
    let mut r = BinReader::open(bin_path, b"MSK1", "mask")?;
    let count = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let data = r.u8_vec(count * h * w)?;
    r.expect_eof()?;
    let ids = read_ids(ids_path, count)?;
    let set = MaskSet {
        ids,
        shape: (h, w),
        data,
    };
    set.validate()?;
    Ok(set)
}

/// Pair manifests are JSONL, one pair per line.
pub fn write_manifest(manifest: &PairManifest, path: &Path) -> Result<()> {
    manifest.validate(None)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in &manifest.entries {
        let line = serde_json::to_string(e).map_err(|err| Error::Validation(err.to_string()))?;
        writeln!(w, "{line}").map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<PairManifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let entry: PairEntry = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        entries.push(entry);
    }
    let manifest = PairManifest { entries };
    manifest.validate(None)?;
    Ok(manifest)
}

pub fn write_labels(table: &LabelTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, class) in table.rows() {
        writeln!(w, "{id}\t{class}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.splitn(2, '\t');
        let id = parts.next().unwrap_or_default();
        let class = parts
            .next()
            .ok_or_else(|| Error::parse(path, i + 1, "expected id<TAB>class"))?;
        pairs.push((id.to_string(), class.to_string()));
    }
    LabelTable::new(pairs)
}
