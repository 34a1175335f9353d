//! Graph persistence: an 8-byte magic, then format version, D, R and N as
//! little-endian u32, then `N` records of `R` little-endian u32 slots for
//! host ids `1..=N`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{VersionedGraph, SENTINEL};

pub const MAGIC: [u8; 8] = *b"TIERANNG";
pub const FORMAT_VERSION: u32 = 1;
/// Magic plus four u32 fields: version, D, R, N.
pub const HEADER_LEN: usize = 8 + 4 * 4;

/// Contents of a graph file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphFile {
    pub dim: u32,
    pub degree: u32,
    /// Full `R`-slot lists for host ids `1..=N`.
    pub lists: Vec<Vec<u32>>,
}

impl GraphFile {
    /// Captures every id up to the highest present vertex. Absent ids are
    /// written as all-sentinel records.
    pub fn from_graph(graph: &VersionedGraph, dim: usize) -> Self {
        let snap = graph.snapshot(graph.capacity() as u32);
        let n = snap.present.iter().rposition(|&p| p).unwrap_or(0);
        let r = graph.degree();
        let lists = (1..=n)
            .map(|h| {
                let mut l = snap.lists[h].clone();
                l.resize(r, SENTINEL);
                l
            })
            .collect();
        Self {
            dim: dim as u32,
            degree: r as u32,
            lists,
        }
    }

    /// Rebuilds a graph with every stored id present.
    pub fn to_graph(&self, capacity: usize, hot_capacity: usize) -> Result<VersionedGraph> {
        let graph = VersionedGraph::new(capacity.max(self.lists.len()), self.degree as usize, hot_capacity);
        for h in 1..=self.lists.len() as u32 {
            graph.add_vertex(h)?;
        }
        for (i, l) in self.lists.iter().enumerate() {
            let n = l.iter().position(|&s| s == SENTINEL).unwrap_or(l.len());
            graph.set_neighbors(i as u32 + 1, &l[..n])?;
        }
        Ok(graph)
    }

    pub fn encode<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&MAGIC)?;
        for v in [FORMAT_VERSION, self.dim, self.degree, self.lists.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for l in &self.lists {
            if l.len() != self.degree as usize {
                return Err(Error::Format("record length differs from degree".into()));
            }
            for s in l {
                w.write_all(&s.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn decode<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("truncated graph header".into()))?;
        if header[..8] != MAGIC {
            return Err(Error::Format("bad graph magic".into()));
        }
        let field = |i: usize| {
            let o = 8 + 4 * i;
            u32::from_le_bytes([header[o], header[o + 1], header[o + 2], header[o + 3]])
        };
        if field(0) != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported graph version {}", field(0))));
        }
        let (dim, degree, n) = (field(1), field(2), field(3) as usize);
        let mut buf = vec![0u8; degree as usize * 4];
        let mut lists = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated graph record".into()))?;
            lists.push(
                buf.chunks_exact(4)
                    .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            );
        }
        Ok(Self { dim, degree, lists })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.encode(BufWriter::new(File::create(path)?))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = VersionedGraph::new(8, 3, 0);
        for h in 1..=4 {
            g.add_vertex(h).unwrap();
        }
        g.set_neighbors(1, &[2, 3]).unwrap();
        g.set_neighbors(4, &[1, 2, 3]).unwrap();
        let file = GraphFile::from_graph(&g, 16);
        assert_eq!(file.lists.len(), 4);
        let mut bytes = Vec::new();
        file.encode(&mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 3 * 4);
        let back = GraphFile::decode(&bytes[..]).unwrap();
        assert_eq!(back, file);
        let g2 = back.to_graph(8, 0).unwrap();
        assert_eq!(g2.neighbors(1).unwrap().0, vec![2, 3, 0]);
        assert_eq!(g2.in_degree(3), 2);
        g2.check_invariants().unwrap();
    }

    #[test]
    fn rejects_corruption() {
        assert!(matches!(GraphFile::decode(&b"short"[..]), Err(Error::Format(_))));
        let mut bytes = Vec::new();
        GraphFile { dim: 1, degree: 2, lists: vec![vec![2, 0], vec![1, 0]] }
            .encode(&mut bytes)
            .unwrap();
        bytes.pop();
        assert!(matches!(GraphFile::decode(&bytes[..]), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(GraphFile::decode(&bytes[..]), Err(Error::Format(_))));
    }
}
