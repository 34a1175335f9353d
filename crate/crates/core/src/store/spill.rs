//! File-backed spill tier.
//!
//! Records use the main-tier layout: `dim` little-endian f32 values at a
//! fixed stride. A hash directory maps each host id to its record offset.

use std::fs::{File, OpenOptions};
use std::io;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use rustc_hash::FxHashMap;

#[derive(Debug)]
pub struct SpillFile {
    file: File,
    path: PathBuf,
    dim: usize,
    directory: FxHashMap<u32, u64>,
    end: u64,
}

impl SpillFile {
    pub fn create(path: &Path, dim: usize) -> io::Result<Self> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            dim,
            directory: FxHashMap::default(),
            end: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn stride(&self) -> u64 {
        (self.dim * 4) as u64
    }

    pub fn contains(&self, h_id: u32) -> bool {
        self.directory.contains_key(&h_id)
    }

    pub fn len(&self) -> usize {
        self.directory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directory.is_empty()
    }

    pub fn write(&mut self, h_id: u32, components: &[f32]) -> io::Result<()> {
        debug_assert_eq!(components.len(), self.dim);
        let offset = match self.directory.get(&h_id) {
            Some(&offset) => offset,
            None => {
                let offset = self.end;
                self.end += self.stride();
                offset
            }
        };
        let mut buf = Vec::with_capacity(components.len() * 4);
        for v in components {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.file.write_all_at(&buf, offset)?;
        self.directory.insert(h_id, offset);
        Ok(())
    }

    pub fn read(&self, h_id: u32) -> io::Result<Option<Vec<f32>>> {
        let Some(&offset) = self.directory.get(&h_id) else {
            return Ok(None);
        };
        let mut buf = vec![0u8; self.dim * 4];
        self.file.read_exact_at(&mut buf, offset)?;
        Ok(Some(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ))
    }

    /// Drops the directory entry; the record's bytes stay in the file.
    pub fn remove(&mut self, h_id: u32) -> bool {
        self.directory.remove(&h_id).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut spill = SpillFile::create(&dir.path().join("spill.bin"), 3).unwrap();
        spill.write(7, &[1.0, -2.5, 3.25]).unwrap();
        spill.write(2, &[0.0, 0.5, 9.0]).unwrap();
        assert_eq!(spill.read(7).unwrap().unwrap(), vec![1.0, -2.5, 3.25]);
        assert_eq!(spill.read(2).unwrap().unwrap(), vec![0.0, 0.5, 9.0]);
        assert_eq!(spill.read(3).unwrap(), None);
        assert!(spill.remove(7));
        assert_eq!(spill.read(7).unwrap(), None);
        assert_eq!(spill.len(), 1);
    }
}
