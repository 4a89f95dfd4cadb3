//! JSON graph format: `{"n": 3, "edges": [[0, 1, "f"], [1, 2, "u"]]}` where
//! `"u"` is undirected, `"f"` is `u -> v` and `"b"` is `v -> u`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dag, Orientation, Pdag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<(usize, usize, String)>,
}

impl From<&Pdag> for GraphJson {
    fn from(g: &Pdag) -> Self {
        let edges = g
            .edges()
            .map(|(u, v, o)| {
                let tag = match o {
                    Orientation::Undirected => "u",
                    Orientation::Forward => "f",
                    Orientation::Backward => "b",
                };
                (u, v, tag.to_string())
            })
            .collect();
        Self { n: g.n(), edges }
    }
}

impl TryFrom<&GraphJson> for Pdag {
    type Error = Error;

    fn try_from(json: &GraphJson) -> Result<Self> {
        let mut g = Pdag::new(json.n);
        for (u, v, tag) in &json.edges {
            let (u, v) = (*u, *v);
            if g.adjacent(u, v) {
                return Err(Error::InvalidGraph(format!("pair {u},{v} listed twice")));
            }
            match tag.as_str() {
                "u" => g.add_undirected(u, v)?,
                "f" => g.add_directed(u, v)?,
                "b" => g.add_directed(v, u)?,
                other => {
                    return Err(Error::InvalidGraph(format!("unknown edge tag {other:?}")));
                }
            }
        }
        Ok(g)
    }
}

impl Pdag {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphJson::from(self)).expect("graph json serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: GraphJson = serde_json::from_str(text)?;
        Pdag::try_from(&json)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Dag {
    pub fn to_json(&self) -> String {
        Pdag::from(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Dag::from_pdag(&Pdag::from_json(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_map_to_orientations() {
        let g = Pdag::from_json(r#"{"n":3,"edges":[[2,0,"f"],[1,2,"u"],[0,1,"b"]]}"#).unwrap();
        assert!(g.has_arrow(2, 0));
        assert!(g.has_arrow(1, 0));
        assert!(g.is_undirected(1, 2));
        assert_eq!(Pdag::from_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn malformed_inputs() {
        assert!(Pdag::from_json(r#"{"n":2,"edges":[[0,1,"x"]]}"#).is_err());
        assert!(Pdag::from_json(r#"{"n":2,"edges":[[0,1,"u"],[1,0,"f"]]}"#).is_err());
        assert!(Pdag::from_json(r#"{"n":2,"edges":[[0,2,"u"]]}"#).is_err());
        assert!(Dag::from_json(r#"{"n":2,"edges":[[0,1,"u"]]}"#).is_err());
    }
}
