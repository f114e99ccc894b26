//! Named parameter storage and its checkpoint form.
//!
//! Parameters keep their insertion order so optimizer updates, clipping,
//! and checkpoint payloads are deterministic. Serialization stores each
//! tensor as a base64 little-endian f64 payload next to a shape manifest,
//! which round-trips values exactly.

use std::collections::HashMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::numkit::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(into = "Vec<ParamRecord>", try_from = "Vec<ParamRecord>")]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data_b64: String,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter `{name}`"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let idx = self.index[name];
        &self.entries[idx].1
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn set(&mut self, name: &str, value: Tensor) {
        let idx = self.index[name];
        assert!(
            self.entries[idx].1.shape() == value.shape(),
            "parameter `{name}` shape change: {:?} -> {:?}",
            self.entries[idx].1.shape(),
            value.shape()
        );
        self.entries[idx].1 = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

impl From<ParamStore> for Vec<ParamRecord> {
    fn from(store: ParamStore) -> Self {
        store
            .entries
            .into_iter()
            .map(|(name, tensor)| {
                let mut bytes = Vec::with_capacity(tensor.len() * 8);
                for v in tensor.data() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                ParamRecord {
                    name,
                    shape: tensor.shape().to_vec(),
                    data_b64: B64.encode(bytes),
                }
            })
            .collect()
    }
}

impl TryFrom<Vec<ParamRecord>> for ParamStore {
    type Error = Error;

    fn try_from(records: Vec<ParamRecord>) -> Result<Self> {
        let mut store = ParamStore::new();
        for rec in records {
            let bytes = B64
                .decode(&rec.data_b64)
                .map_err(|e| Error::Contract(format!("parameter `{}`: bad payload: {e}", rec.name)))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Contract(format!(
                    "parameter `{}`: payload length {} is not a multiple of 8",
                    rec.name,
                    bytes.len()
                )));
            }
            let data: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let expect: usize = rec.shape.iter().product();
            if expect != data.len() {
                return Err(Error::Contract(format!(
                    "parameter `{}`: shape {:?} vs {} values",
                    rec.name,
                    rec.shape,
                    data.len()
                )));
            }
            if store.index.contains_key(&rec.name) {
                return Err(Error::Contract(format!("duplicate parameter `{}`", rec.name)));
            }
            store.insert(rec.name, Tensor::new(rec.shape, data));
        }
        Ok(store)
    }
}

/// Every parameter registered as a leaf on one tape, looked up by name
/// during the forward pass.
pub struct TapedParams<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl<'a> TapedParams<'a> {
    pub fn bind(tape: &mut Tape, store: &'a ParamStore) -> Self {
        let vars = store.entries.iter().map(|(_, t)| tape.leaf(t)).collect();
        TapedParams { store, vars }
    }

    pub fn var(&self, name: &str) -> Var {
        match self.store.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("unknown parameter `{name}`"),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// (name, var) pairs in parameter order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> + '_ {
        self.store
            .entries
            .iter()
            .map(|(n, _)| n.as_str())
            .zip(self.vars.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn insertion_order_is_preserved() {
        let mut store = ParamStore::new();
        store.insert("b", Tensor::zeros(vec![2]));
        store.insert("a", Tensor::zeros(vec![3]));
        let names: Vec<&str> = store.names().collect();
        assert_eq!(names, vec!["b", "a"]);
        assert_eq!(store.scalar_count(), 5);
    }

    #[test]
    fn json_round_trip_is_value_exact() {
        let mut rng = Rng::new(1);
        let mut store = ParamStore::new();
        store.insert("w", rng.normal_tensor(&[4, 3]));
        store.insert("b", rng.normal_tensor(&[3]));
        // Awkward values survive too.
        store.insert(
            "edge",
            Tensor::new(vec![4], vec![f64::MIN_POSITIVE, -0.0, 1e300, 5e-324]),
        );
        let json = serde_json::to_string(&store).unwrap();
        let back: ParamStore = serde_json::from_str(&json).unwrap();
        for (name, tensor) in store.iter() {
            let restored = back.get(name);
            assert_eq!(restored.shape(), tensor.shape());
            for (a, b) in restored.data().iter().zip(tensor.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "param {name}");
            }
        }
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(vec![1]));
        store.insert("w", Tensor::zeros(vec![1]));
    }

    #[test]
    fn corrupt_payload_is_rejected() {
        let json = r#"[{"name":"w","shape":[2],"data_b64":"AAA"}]"#;
        let res: std::result::Result<ParamStore, _> = serde_json::from_str(json);
        assert!(res.is_err());
    }
}
