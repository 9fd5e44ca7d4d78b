//! On-disk BM25 index format, version 1. All integers little-endian.
//!
//! ```text
//! magic      8 bytes  "MEMQBM25"
//! version    u32
//! k1, b      f64, f64
//! character  str                       (str = u32 byte length + UTF-8)
//! doc count  u32
//!   item_id str, mem_type u8 (0 semantic, 1 episodic), len u32
//! term count u32                       (terms in byte order)
//!   token str, posting count u32
//!     doc u32, tf u32                  (ascending doc)
//! ```
//!
//! The average document length and type partition are recomputed on load.
//! Identical input produces identical bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{Bm25Params, DocEntry, InvertedIndex, Posting, RetrieveError};
use crate::store::MemoryType;

pub const INDEX_MAGIC: &[u8; 8] = b"MEMQBM25";
pub const INDEX_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], RetrieveError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                RetrieveError::Corrupt("truncated file".into())
            } else {
                RetrieveError::Io(e)
            }
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, RetrieveError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, RetrieveError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn str(&mut self) -> Result<String, RetrieveError> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| RetrieveError::Corrupt("truncated string".into()))?;
        String::from_utf8(buf).map_err(|_| RetrieveError::Corrupt("invalid utf-8".into()))
    }
}

impl InvertedIndex {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), RetrieveError> {
        w.write_all(INDEX_MAGIC)?;
        put_u32(&mut w, INDEX_VERSION)?;
        w.write_all(&self.params.k1.to_le_bytes())?;
        w.write_all(&self.params.b.to_le_bytes())?;
        put_str(&mut w, &self.character_id)?;
        put_u32(&mut w, self.docs.len() as u32)?;
        for d in &self.docs {
            put_str(&mut w, &d.item_id)?;
            w.write_all(&[d.mem_type.index() as u8])?;
            put_u32(&mut w, d.len)?;
        }
        put_u32(&mut w, self.postings.len() as u32)?;
        for (tok, list) in &self.postings {
            put_str(&mut w, tok)?;
            put_u32(&mut w, list.len() as u32)?;
            for p in list {
                put_u32(&mut w, p.doc)?;
                put_u32(&mut w, p.tf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, RetrieveError> {
        let mut r = Reader { inner: r };
        if &r.bytes::<8>()? != INDEX_MAGIC {
            return Err(RetrieveError::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(RetrieveError::Corrupt(format!("unsupported version {version}")));
        }
        let params = Bm25Params {
            k1: r.f64()?,
            b: r.f64()?,
        };
        let character_id = r.str()?;
        let n = r.u32()? as usize;
        let mut docs = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let item_id = r.str()?;
            let mem_type = match r.bytes::<1>()?[0] {
                0 => MemoryType::Semantic,
                1 => MemoryType::Episodic,
                other => return Err(RetrieveError::Corrupt(format!("bad memory type {other}"))),
            };
            let len = r.u32()?;
            docs.push(DocEntry {
                item_id,
                mem_type,
                len,
            });
        }
        let terms = r.u32()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..terms {
            let tok = r.str()?;
            let count = r.u32()? as usize;
            let mut list = Vec::with_capacity(count.min(n));
            for _ in 0..count {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= n {
                    return Err(RetrieveError::Corrupt(format!("posting for missing doc {doc}")));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(tok, list);
        }
        Ok(InvertedIndex::from_parts(character_id, params, docs, postings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::tests::item;
    use crate::store::Subtype;

    #[test]
    fn roundtrip_and_byte_stability() {
        let items = vec![
            item("a", Subtype::Profile, "wang wei的职业: 摄影师"),
            item("b", Subtype::Event, "2015年 去了 杭州"),
        ];
        let idx = InvertedIndex::build(&items).unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(bytes, InvertedIndex::build(&items).unwrap().to_bytes());
        let back = InvertedIndex::read_from(&bytes[..]).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn corrupt_inputs() {
        let idx = InvertedIndex::build(&[item("a", Subtype::Event, "x y")]).unwrap();
        let bytes = idx.to_bytes();
        assert!(matches!(
            InvertedIndex::read_from(&bytes[..bytes.len() - 3]),
            Err(RetrieveError::Corrupt(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(InvertedIndex::read_from(&bad[..]), Err(RetrieveError::Corrupt(_))));
        let mut bad = bytes;
        bad[8] = 9;
        assert!(matches!(InvertedIndex::read_from(&bad[..]), Err(RetrieveError::Corrupt(_))));
    }
}
