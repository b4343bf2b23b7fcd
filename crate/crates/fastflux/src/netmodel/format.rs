//! Line-oriented `.net` text format and its JSON mirror.
//!
//! ```text
//! # comment
//! nodes: a b c
//! a -> b  rate=1.5  speed=fast
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, Network, NodeId, Speed};
use crate::error::{Error, Result};

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with their 1-based starting columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &line[s..]));
    }
    out.into_iter()
        .map(|(b, t)| (line[..b].chars().count() + 1, t))
        .collect()
}

pub fn parse_network(text: &str) -> Result<Network> {
    let mut nodes: Option<Vec<NodeId>> = None;
    let mut edges = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("");
        let toks = tokens(line);
        if toks.is_empty() {
            continue;
        }
        let Some(ids) = &nodes else {
            let (col, head) = toks[0];
            let rest: Vec<(usize, &str)> = if head == "nodes:" {
                toks[1..].to_vec()
            } else if let Some(first) = head.strip_prefix("nodes:") {
                std::iter::once((col + 6, first)).chain(toks[1..].iter().copied()).collect()
            } else {
                return Err(syntax(ln, col, "expected header `nodes: id1 id2 ...`"));
            };
            let mut list = Vec::with_capacity(rest.len());
            for (c, t) in rest {
                list.push(NodeId::new(t).map_err(|e| syntax(ln, c, e.to_string()))?);
            }
            if list.is_empty() {
                return Err(Error::Empty);
            }
            nodes = Some(list);
            continue;
        };
        let lookup = |col: usize, t: &str| -> Result<usize> {
            ids.iter()
                .position(|id| id.as_str() == t)
                .ok_or_else(|| syntax(ln, col, format!("unknown node `{t}`")))
        };
        if toks.len() < 3 || toks[1].1 != "->" {
            let col = toks.get(1).map_or(toks[0].0, |t| t.0);
            return Err(syntax(ln, col, "expected `src -> dst rate=<float> speed=<slow|fast>`"));
        }
        let src = lookup(toks[0].0, toks[0].1)?;
        let dst = lookup(toks[2].0, toks[2].1)?;
        let mut rate = None;
        let mut speed = None;
        for &(col, t) in &toks[3..] {
            match t.split_once('=') {
                Some(("rate", v)) => {
                    let r: f64 = v
                        .parse()
                        .map_err(|_| syntax(ln, col + 5, format!("invalid rate `{v}`")))?;
                    rate = Some(r);
                }
                Some(("speed", "slow")) => speed = Some(Speed::Slow),
                Some(("speed", "fast")) => speed = Some(Speed::Fast),
                Some(("speed", v)) => {
                    return Err(syntax(ln, col + 6, format!("speed must be slow or fast, got `{v}`")))
                }
                _ => return Err(syntax(ln, col, format!("unexpected token `{t}`"))),
            }
        }
        let end = line.trim_end().chars().count() + 1;
        let rate = rate.ok_or_else(|| syntax(ln, end, "missing rate=<float>"))?;
        let speed = speed.ok_or_else(|| syntax(ln, end, "missing speed=<slow|fast>"))?;
        edges.push(Edge {
            src,
            dst,
            rate,
            speed,
        });
    }
    let nodes = nodes.ok_or(Error::Empty)?;
    Network::new(nodes, edges)
}

#[derive(Serialize, Deserialize)]
struct JsonEdge {
    src: NodeId,
    dst: NodeId,
    rate: f64,
    speed: Speed,
}

#[derive(Serialize, Deserialize)]
struct JsonNetwork {
    nodes: Vec<NodeId>,
    edges: Vec<JsonEdge>,
}

pub fn network_from_json(text: &str) -> Result<Network> {
    let raw: JsonNetwork = serde_json::from_str(text)?;
    for id in &raw.nodes {
        NodeId::new(id.as_str())?;
    }
    let find = |id: &NodeId| {
        raw.nodes
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    };
    let edges = raw
        .edges
        .iter()
        .map(|e| {
            Ok(Edge {
                src: find(&e.src)?,
                dst: find(&e.dst)?,
                rate: e.rate,
                speed: e.speed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(raw.nodes, edges)
}

pub fn network_to_json(net: &Network) -> String {
    let raw = JsonNetwork {
        nodes: net.nodes().to_vec(),
        edges: net
            .edges()
            .iter()
            .map(|e| JsonEdge {
                src: net.nodes()[e.src].clone(),
                dst: net.nodes()[e.dst].clone(),
                rate: e.rate,
                speed: e.speed,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("network serialises")
}

impl std::fmt::Display for Network {
    /// Writes the `.net` text format; rates use shortest round-trip notation.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "nodes:")?;
        for id in self.nodes() {
            write!(f, " {id}")?;
        }
        writeln!(f)?;
        for e in self.edges() {
            writeln!(
                f,
                "{} -> {}  rate={:?}  speed={}",
                self.nodes()[e.src],
                self.nodes()[e.dst],
                e.rate,
                e.speed
            )?;
        }
        Ok(())
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads `.json` files as JSON and everything else as `.net` text.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    if is_json(path) {
        network_from_json(&text)
    } else {
        parse_network(&text)
    }
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = if is_json(path) {
        network_to_json(net)
    } else {
        net.to_string()
    };
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "\
# fast triangle
nodes: a b c
a -> b  rate=1 speed=fast
b -> c  rate=1 speed=fast   # trailing
c -> a  rate=2.5 speed=slow
";

    #[test]
    fn parses_comments_and_spacing() {
        let net = parse_network(TRIANGLE).unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edges()[2].rate, 2.5);
        assert_eq!(net.edges()[2].speed, Speed::Slow);
    }

    #[test]
    fn text_and_json_round_trip() {
        let net = parse_network(TRIANGLE).unwrap();
        assert_eq!(parse_network(&net.to_string()).unwrap(), net);
        assert_eq!(network_from_json(&network_to_json(&net)).unwrap(), net);
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse_network("nodes: a b\na -> b rate=x speed=slow\n").unwrap_err();
        match err {
            Error::Syntax { line, column, .. } => assert_eq!((line, column), (2, 13)),
            e => panic!("unexpected {e}"),
        }
        let err = parse_network("nodes: a b\na -> q rate=1 speed=slow\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, column: 6, .. }));
        let err = parse_network("a -> b\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, column: 1, .. }));
    }

    #[test]
    fn rejects_invalid_networks() {
        assert!(matches!(
            parse_network("nodes: a b\na -> b rate=1 speed=slow\n"),
            Err(Error::NotDiconnected { components: 2 })
        ));
        assert!(matches!(
            parse_network("nodes: a b\na -> b rate=0 speed=slow\nb -> a rate=1 speed=slow\n"),
            Err(Error::NonPositiveRate { .. })
        ));
        assert!(matches!(
            parse_network("nodes: a\na -> a rate=1 speed=slow\n"),
            Err(Error::SelfLoop(_))
        ));
        assert!(matches!(parse_network("nodes: a a\n"), Err(Error::DuplicateNode(_))));
    }
}
