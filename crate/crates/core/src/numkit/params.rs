use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{NumError, Tensor};

const MAGIC: &[u8; 4] = b"CFP1";

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    value: Tensor,
    grad: Tensor,
}

/// Named parameters with a gradient slot of the same shape each.
/// Iteration order is lexicographic by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    slots: BTreeMap<String, Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a parameter, resetting its gradient.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let grad = Tensor::zeros(value.shape());
        self.slots.insert(name.into(), Slot { value, grad });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.grad)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for s in self.slots.values_mut() {
            s.grad.data_mut().fill(0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &Tensor) -> Result<(), NumError> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| NumError::UnknownParam(name.to_string()))?;
        if slot.grad.shape() != g.shape() {
            return Err(NumError::shape(
                format!("gradient of `{name}`"),
                format!("{:?} vs {:?}", slot.grad.shape(), g.shape()),
            ));
        }
        for (a, b) in slot.grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
        Ok(())
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor, &Tensor)> {
        self.slots
            .iter_mut()
            .map(|(k, s)| (k.as_str(), &mut s.value, &s.grad))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.slots.iter().map(|(k, s)| (k.as_str(), &s.value))
    }
}

/// Writes `store` as `CFP1` followed by one record per tensor:
/// name length (u32), UTF-8 name, rank (u32), dims (u64 each),
/// values (f64 each). All integers and floats little-endian.
pub fn write_checkpoint<W: Write>(store: &ParamStore, mut w: W) -> Result<(), NumError> {
    w.write_all(MAGIC)?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ParamStore, NumError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(NumError::Checkpoint("missing CFP1 magic".into()));
    }
    let mut pos = 4;
    let mut take = |n: usize| -> Result<&[u8], NumError> {
        if pos + n > buf.len() {
            return Err(NumError::Checkpoint(format!("truncated at byte {pos}")));
        }
        let s = &buf[pos..pos + n];
        pos += n;
        Ok(s)
    };
    let mut store = ParamStore::new();
    loop {
        // A clean end of file is only allowed between records.
        let head = match take(4) {
            Ok(h) => u32::from_le_bytes(h.try_into().unwrap()) as usize,
            Err(_) => break,
        };
        let name = std::str::from_utf8(take(head)?)
            .map_err(|e| NumError::Checkpoint(format!("tensor name: {e}")))?
            .to_string();
        let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = take(n * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(name, Tensor::new(shape, data)?);
    }
    if pos != buf.len() {
        return Err(NumError::Checkpoint(format!(
            "{} trailing bytes",
            buf.len() - pos
        )));
    }
    Ok(store)
}
