//! Region atlas: node names, hemisphere assignment, network membership.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hemisphere {
    Left,
    Right,
}

impl FromStr for Hemisphere {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" => Ok(Hemisphere::Left),
            "R" => Ok(Hemisphere::Right),
            other => Err(Error::argument(format!(
                "unknown hemisphere {other:?}, expected L or R"
            ))),
        }
    }
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hemisphere::Left => "L",
            Hemisphere::Right => "R",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub node_index: usize,
    pub node_name: String,
    pub hemisphere: Hemisphere,
    pub network: String,
}

/// Node metadata for an EC matrix; entries are kept sorted by node index
/// and must cover 0..n exactly once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atlas {
    entries: Vec<AtlasEntry>,
}

impl Atlas {
    pub fn new(mut entries: Vec<AtlasEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::argument("atlas has no entries"));
        }
        entries.sort_by_key(|e| e.node_index);
        for (i, e) in entries.iter().enumerate() {
            if e.node_index != i {
                return Err(Error::data(format!(
                    "atlas must cover node indices 0..{} exactly once; problem at index {}",
                    entries.len(),
                    e.node_index
                )));
            }
        }
        Ok(Atlas { entries })
    }

    pub fn n_nodes(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[AtlasEntry] {
        &self.entries
    }

    pub fn entry(&self, node: usize) -> Result<&AtlasEntry> {
        self.entries
            .get(node)
            .ok_or_else(|| Error::argument(format!("node {node} outside atlas")))
    }

    pub fn hemispheres(&self) -> Vec<Hemisphere> {
        self.entries.iter().map(|e| e.hemisphere).collect()
    }

    pub fn node_names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.node_name.clone()).collect()
    }
}

/// Loads an atlas CSV with header node_index,node_name,hemisphere,network_name.
pub fn load_atlas(path: &Path) -> Result<Atlas> {
    let lines = table::read_lines(path)?;
    if lines.len() < 2 {
        return Err(Error::data(format!(
            "{}: atlas needs a header and at least one row",
            path.display()
        )));
    }
    let header = table::split_fields(&lines[0]);
    let expected = ["node_index", "node_name", "hemisphere", "network_name"];
    if header != expected {
        return Err(Error::data(format!(
            "{}: expected header {}, found {}",
            path.display(),
            expected.join(","),
            header.join(",")
        )));
    }
    let mut entries = Vec::with_capacity(lines.len() - 1);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields = table::split_fields(line);
        table::expect_width(path, i + 2, &fields, 4)?;
        entries.push(AtlasEntry {
            node_index: table::parse_index(path, i + 2, 1, &fields[0])?,
            node_name: fields[1].clone(),
            hemisphere: fields[2].parse()?,
            network: fields[3].clone(),
        });
    }
    Atlas::new(entries)
}

pub fn save_atlas(atlas: &Atlas, path: &Path) -> Result<()> {
    let mut out = String::from("node_index,node_name,hemisphere,network_name\n");
    for e in atlas.entries() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.node_index, e.node_name, e.hemisphere, e.network
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Atlas {
        Atlas::new(vec![
            AtlasEntry {
                node_index: 1,
                node_name: "M1_R".into(),
                hemisphere: Hemisphere::Right,
                network: "motor".into(),
            },
            AtlasEntry {
                node_index: 0,
                node_name: "M1_L".into(),
                hemisphere: Hemisphere::Left,
                network: "motor".into(),
            },
            AtlasEntry {
                node_index: 2,
                node_name: "V1_L".into(),
                hemisphere: Hemisphere::Left,
                network: "visual".into(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn entries_sort_by_index() {
        let a = sample();
        assert_eq!(a.entry(0).unwrap().node_name, "M1_L");
        assert_eq!(a.entry(1).unwrap().node_name, "M1_R");
        assert_eq!(
            a.hemispheres(),
            vec![Hemisphere::Left, Hemisphere::Right, Hemisphere::Left]
        );
    }

    #[test]
    fn duplicate_or_missing_index_is_rejected() {
        let dup = Atlas::new(vec![
            AtlasEntry {
                node_index: 0,
                node_name: "a".into(),
                hemisphere: Hemisphere::Left,
                network: "n".into(),
            },
            AtlasEntry {
                node_index: 0,
                node_name: "b".into(),
                hemisphere: Hemisphere::Right,
                network: "n".into(),
            },
        ]);
        assert!(dup.is_err());
        let gap = Atlas::new(vec![AtlasEntry {
            node_index: 1,
            node_name: "a".into(),
            hemisphere: Hemisphere::Left,
            network: "n".into(),
        }]);
        assert!(gap.is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atlas.csv");
        let a = sample();
        save_atlas(&a, &path).unwrap();
        let b = load_atlas(&path).unwrap();
        assert_eq!(b.n_nodes(), 3);
        assert_eq!(b.entry(2).unwrap().network, "visual");
        assert_eq!(b.entry(1).unwrap().hemisphere, Hemisphere::Right);
    }

    #[test]
    fn bad_hemisphere_letter_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atlas.csv");
        std::fs::write(
            &path,
            "node_index,node_name,hemisphere,network_name\n0,A,X,net\n",
        )
        .unwrap();
        assert!(load_atlas(&path).is_err());
    }
}
