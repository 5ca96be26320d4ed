//! Plain-text template format: a `nodes r` header, then one `u v` line per
//! edge with 1-based node ids (`v1 = 1`, `v2 = 2`). Blank lines and `#`
//! comments are ignored.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::Template;
use crate::error::{bail, Result};

impl Template {
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes {}\n", self.num_nodes());
        for &(u, v) in self.edges() {
            let _ = writeln!(out, "{} {}", u + 1, v + 1);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Template> {
        let mut nodes: Option<usize> = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some(r) = nodes else {
                match fields.as_slice() {
                    ["nodes", r] => {
                        nodes = Some(r.parse().map_err(|_| {
                            crate::Error::Parse(format!("line {}: bad node count", lineno + 1))
                        })?);
                        continue;
                    }
                    _ => bail!(Parse, "line {}: expected `nodes r` header", lineno + 1),
                }
            };
            let ids: Vec<usize> = match fields.as_slice() {
                [a, b] => match (a.parse::<usize>(), b.parse::<usize>()) {
                    (Ok(a), Ok(b)) => alloc::vec![a, b],
                    _ => bail!(Parse, "line {}: edge endpoints must be integers", lineno + 1),
                },
                _ => bail!(Parse, "line {}: expected `u v`", lineno + 1),
            };
            if ids.iter().any(|&x| x == 0 || x > r) {
                bail!(Parse, "line {}: node id outside 1..={}", lineno + 1, r);
            }
            edges.push((ids[0] - 1, ids[1] - 1));
        }
        match nodes {
            Some(r) => Template::new(r, edges),
            None => bail!(Parse, "missing `nodes r` header"),
        }
    }
}
