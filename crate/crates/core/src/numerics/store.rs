//! Named parameter store with a compact binary serialization format.
//!
//! Binary layout, all integers little-endian:
//! magic `DLNP`, format version `u32`, entry count `u32`, then per entry:
//! name length `u32`, UTF-8 name bytes, rows `u32`, cols `u32`, and
//! `rows * cols` `f64` values in row-major order. Entry order is preserved,
//! so the same store always serializes to the same bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

const MAGIC: &[u8; 4] = b"DLNP";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamStore {
    entries: IndexMap<String, Tensor2D>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            entries: IndexMap::new(),
        }
    }

    /// Inserts a tensor under a new name. Duplicate names are an error so a
    /// model cannot silently overwrite part of itself.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor2D) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "parameter {name:?} already exists"
            )));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2D> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor2D> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no parameter named {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2D)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor2D)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of scalar parameters across all entries.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor2D::len).sum()
    }

    /// A store with the same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ParamStore {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), Tensor2D::zeros(v.rows(), v.cols())))
            .collect();
        ParamStore { entries }
    }

    fn check_same_layout(&self, other: &ParamStore, op: &'static str) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::shape(
                op,
                format!("{} entries", self.entries.len()),
                format!("{} entries", other.entries.len()),
            ));
        }
        for ((an, at), (bn, bt)) in self.entries.iter().zip(other.entries.iter()) {
            if an != bn || at.shape() != bt.shape() {
                return Err(Error::shape(
                    op,
                    format!("{an} {}x{}", at.rows(), at.cols()),
                    format!("{bn} {}x{}", bt.rows(), bt.cols()),
                ));
            }
        }
        Ok(())
    }

    /// `self += s * other`. Layouts (names, order, shapes) must match.
    pub fn add_scaled(&mut self, other: &ParamStore, s: f64) -> Result<()> {
        self.check_same_layout(other, "ParamStore::add_scaled")?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            a.add_scaled(b, s)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.entries.values_mut() {
            t.scale(s);
        }
    }

    /// Euclidean norm over every scalar in the store.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .values()
            .map(Tensor2D::sq_sum)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn assert_finite(&self, context: &str) -> Result<()> {
        for (name, t) in self.iter() {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("{context}: parameter {name:?}")));
            }
        }
        Ok(())
    }

    /// Largest absolute elementwise difference; layouts must match.
    pub fn max_abs_diff(&self, other: &ParamStore) -> Result<f64> {
        self.check_same_layout(other, "ParamStore::max_abs_diff")?;
        let mut worst: f64 = 0.0;
        for (a, b) in self.entries.values().zip(other.entries.values()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }

    /// Exact equality of names, order, shapes, and bit patterns.
    pub fn bit_eq(&self, other: &ParamStore) -> bool {
        if self.entries.len() != other.entries.len() {
            return false;
        }
        self.entries.iter().zip(other.entries.iter()).all(
            |((an, at), (bn, bt))| {
                an == bn
                    && at.shape() == bt.shape()
                    && at
                        .data()
                        .iter()
                        .zip(bt.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            },
        )
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&u32::try_from(self.entries.len()).map_err(|_| {
            Error::Format("too many entries for the binary format".into())
        })?
        .to_le_bytes())?;
        for (name, t) in &self.entries {
            let name_bytes = name.as_bytes();
            let name_len = u32::try_from(name_bytes.len())
                .map_err(|_| Error::Format(format!("name too long: {name:?}")))?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name_bytes)?;
            let rows = u32::try_from(t.rows())
                .map_err(|_| Error::Format("tensor too large".into()))?;
            let cols = u32::try_from(t.cols())
                .map_err(|_| Error::Format("tensor too large".into()))?;
            w.write_all(&rows.to_le_bytes())?;
            w.write_all(&cols.to_le_bytes())?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<ParamStore> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let count = read_u32(r)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            if name_len > 1 << 20 {
                return Err(Error::Format(format!("implausible name length {name_len}")));
            }
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Format(format!("name is not UTF-8: {e}")))?;
            let rows = read_u32(r)? as usize;
            let cols = read_u32(r)? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                let v = f64::from_le_bytes(buf);
                if !v.is_finite() {
                    return Err(Error::Format(format!(
                        "non-finite value in parameter {name:?}"
                    )));
                }
                data.push(v);
            }
            store.insert(name, Tensor2D::from_vec(rows, cols, data)?)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
        let mut r = BufReader::new(File::open(path)?);
        let store = Self::read_from(&mut r)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after parameter data".into()));
        }
        Ok(store)
    }

    /// Human-inspectable JSON dump: entry names, shapes, and values. Not an
    /// interchange format; loading always goes through the binary form.
    pub fn to_debug_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ParamStore always serializes")
    }
}

/// Sums stores in input order. Layouts must match the first entry.
pub fn sum_stores(stores: &[ParamStore]) -> Result<ParamStore> {
    let first = stores
        .first()
        .ok_or(Error::EmptyInput("sum_stores"))?;
    let mut acc = first.clone();
    for s in &stores[1..] {
        acc.add_scaled(s, 1.0)?;
    }
    Ok(acc)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn sample_store() -> ParamStore {
        let mut rng = SeededRng::new(99);
        let mut s = ParamStore::new();
        s.insert("w", Tensor2D::from_fn(3, 4, |_, _| rng.range(-1.0, 1.0)))
            .unwrap();
        s.insert("b", Tensor2D::from_fn(1, 3, |_, _| rng.range(-1.0, 1.0)))
            .unwrap();
        s.insert("emb", Tensor2D::from_fn(5, 2, |_, _| rng.range(-1.0, 1.0)))
            .unwrap();
        s
    }

    #[test]
    fn duplicate_insert_is_error() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor2D::zeros(1, 1)).unwrap();
        assert!(s.insert("w", Tensor2D::zeros(1, 1)).is_err());
    }

    #[test]
    fn missing_get_names_parameter() {
        let s = ParamStore::new();
        let msg = s.get("nope").unwrap_err().to_string();
        assert!(msg.contains("nope"), "{msg}");
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let s = sample_store();
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        let loaded = ParamStore::read_from(&mut bytes.as_slice()).unwrap();
        assert!(s.bit_eq(&loaded));
        // Same entry order too.
        let names: Vec<&str> = loaded.names().collect();
        assert_eq!(names, vec!["w", "b", "emb"]);
    }

    #[test]
    fn serialization_is_deterministic() {
        let s = sample_store();
        let mut a = Vec::new();
        let mut b = Vec::new();
        s.write_to(&mut a).unwrap();
        s.write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_rejected() {
        let s = sample_store();
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        bytes[0] = b'X';
        let err = ParamStore::read_from(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn bad_version_rejected() {
        let s = sample_store();
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        bytes[4] = 9;
        assert!(ParamStore::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn truncated_stream_rejected() {
        let s = sample_store();
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 5);
        assert!(ParamStore::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn non_finite_value_rejected_on_read() {
        let mut s = sample_store();
        s.get_mut("w").unwrap().set(0, 0, 1.0);
        let mut bytes = Vec::new();
        s.write_to(&mut bytes).unwrap();
        // Overwrite the first value of "w" with NaN bits. Header is
        // 4 magic + 4 version + 4 count + (4 + 1 name + 4 + 4) for "w".
        let off = 4 + 4 + 4 + 4 + 1 + 4 + 4;
        bytes[off..off + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        let err = ParamStore::read_from(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
    }

    #[test]
    fn global_norm_and_clip() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor2D::from_vec(1, 2, vec![3.0, 0.0]).unwrap())
            .unwrap();
        s.insert("b", Tensor2D::from_vec(1, 1, vec![4.0]).unwrap())
            .unwrap();
        assert!((s.global_norm() - 5.0).abs() < 1e-12);
        let pre = s.clip_global_norm(1.0);
        assert!((pre - 5.0).abs() < 1e-12);
        assert!((s.global_norm() - 1.0).abs() < 1e-12);
        // Clipping below the threshold is a no-op.
        let pre2 = s.clip_global_norm(2.0);
        assert!((pre2 - 1.0).abs() < 1e-12);
        assert!((s.global_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn add_scaled_layout_mismatch_is_error() {
        let mut a = sample_store();
        let mut b = ParamStore::new();
        b.insert("w", Tensor2D::zeros(3, 4)).unwrap();
        assert!(a.add_scaled(&b, 1.0).is_err());
    }

    #[test]
    fn sum_stores_matches_manual_fold() {
        let a = sample_store();
        let mut b = a.zeros_like();
        b.add_scaled(&a, 2.0).unwrap();
        let sum = sum_stores(&[a.clone(), b]).unwrap();
        let mut expect = a.zeros_like();
        expect.add_scaled(&a, 3.0).unwrap();
        assert!(sum.max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn debug_json_mentions_names_and_values() {
        let s = sample_store();
        let json = s.to_debug_json();
        assert!(json.contains("\"emb\""));
        assert!(json.contains("rows"));
    }
}
