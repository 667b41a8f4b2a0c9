use std::fmt;

use serde::{Deserialize, Serialize};

/// Action/observation id sequence identifying a belief node.
///
/// Observation ids are local to their action node, so the pair sequence is
/// unique within one tree.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryKey(Vec<(u32, u32)>);

impl HistoryKey {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, action: u32, observation: u32) -> Self {
        let mut steps = Vec::with_capacity(self.0.len() + 1);
        steps.extend_from_slice(&self.0);
        steps.push((action, observation));
        Self(steps)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            return None;
        }
        Some(Self(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn steps(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for HistoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for (a, o) in &self.0 {
            write!(f, "/{a}.{o}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn child_and_parent_roundtrip() {
        let k = HistoryKey::root().child(3, 0).child(1, 2);
        assert_eq!(k.depth(), 2);
        assert_eq!(k.to_string(), "/3.0/1.2");
        assert_eq!(k.parent().unwrap(), HistoryKey::root().child(3, 0));
        assert!(HistoryKey::root().parent().is_none());
    }
}
