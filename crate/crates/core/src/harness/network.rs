//! Network sources: edge-list CSV files and synthetic generators.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{Line, NetworkGraph};
use crate::{Error, Result};

/// Closed range of per-line values; `lo == hi` gives constant lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// Where a scenario's network comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    File(PathBuf),
    /// `0-1-...-nodes`.
    Chain {
        nodes: usize,
        r: Range,
        x: Range,
        seed: u64,
    },
    /// `arms` equal-length chains hanging off the reference.
    Star {
        nodes: usize,
        arms: usize,
        r: Range,
        x: Range,
        seed: u64,
    },
    /// Random recursive tree: bus `i` attaches to a uniform earlier bus.
    RandomTree {
        nodes: usize,
        r: Range,
        x: Range,
        seed: u64,
    },
}

impl NetworkSource {
    pub fn build(&self) -> Result<NetworkGraph> {
        match self {
            NetworkSource::File(path) => load_network(path),
            NetworkSource::Chain { nodes, r, x, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let lines = (0..*nodes)
                    .map(|i| Line::new(i, i + 1, r.draw(&mut rng), x.draw(&mut rng)))
                    .collect();
                NetworkGraph::new(nodes + 1, lines)
            }
            NetworkSource::Star {
                nodes,
                arms,
                r,
                x,
                seed,
            } => {
                if *arms == 0 {
                    return Err(Error::Domain(
                        "a star network needs at least one arm".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let lines = (1..=*nodes)
                    .map(|i| {
                        let parent = if i <= *arms { 0 } else { i - arms };
                        Line::new(parent, i, r.draw(&mut rng), x.draw(&mut rng))
                    })
                    .collect();
                NetworkGraph::new(nodes + 1, lines)
            }
            NetworkSource::RandomTree { nodes, r, x, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(random_tree(*nodes, *r, *x, &mut rng))
            }
        }
    }

    /// Short name used as the network key in reports and sweep tables.
    pub fn label(&self) -> String {
        match self {
            NetworkSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            NetworkSource::Chain { nodes, .. } => format!("chain-{nodes}"),
            NetworkSource::Star { nodes, arms, .. } => format!("star-{arms}x{nodes}"),
            NetworkSource::RandomTree { nodes, seed, .. } => format!("tree-{nodes}-s{seed}"),
        }
    }
}

pub fn random_tree<R: Rng>(nodes: usize, r: Range, x: Range, rng: &mut R) -> NetworkGraph {
    let lines = (1..=nodes)
        .map(|i| {
            let parent = rng.random_range(0..i);
            Line::new(parent, i, r.draw(rng), x.draw(rng))
        })
        .collect();
    NetworkGraph::new(nodes + 1, lines).expect("recursive trees are radial and connected")
}

/// Reads an edge-list CSV: `from,to,r,x` per line, `#` comments, optional
/// header. Bus labels are relabeled densely with `0` as the reference.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_network(&text, path)
}

pub fn parse_network(text: &str, path: &Path) -> Result<NetworkGraph> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut lines: Vec<(String, String, f64, f64)> = Vec::new();
    let mut file_lines = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line_no = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 fields (from,to,r,x), found {}", rec.len()),
            ));
        }
        let r = rec[2].parse::<f64>();
        let x = rec[3].parse::<f64>();
        let (r, x) = match (r, x) {
            (Ok(r), Ok(x)) => (r, x),
            _ if i == 0 => continue,
            _ => return Err(Error::parse(path, line_no, "r and x must be numbers")),
        };
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::parse(path, line_no, "empty bus label"));
        }
        lines.push((rec[0].to_string(), rec[1].to_string(), r, x));
        file_lines.push(line_no);
    }
    NetworkGraph::from_labeled_inner(&lines).map_err(|d| {
        let line = d.line.map(|i| file_lines[i]).unwrap_or(0);
        Error::parse(path, line, d.msg)
    })
}
