//! Plain-text archive of solved profiles: a JSON header followed by CSV
//! blocks.
//!
//! ```text
//! #nabfront-archive 1
//! { ...header json... }
//! #end header
//! #block eta.nodes rows=1501
//! z[1],eta[1],eta_z[1]
//! 0.0,0.859...,-0.564...
//! ...
//! #end block
//! #end archive
//! ```
//!
//! Numbers are written as the shortest decimal that reads back to the same
//! binary64, so a round trip is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::asymptotics::AsymptoticBundle;
use crate::error::{Error, Result};
use crate::eta::EtaSolution;
use crate::mu2::Mu2Solution;
use crate::ode::{Node, PowerTerm, Profile, RightTail};
use crate::params::ModelParams;
use crate::phi2::Phi2Solution;

pub const SCHEMA: u32 = 1;
const MAGIC: &str = "#nabfront-archive";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: u32,
    code_version: String,
    n: u32,
    params: ModelParams,
    config: BTreeMap<String, Value>,
    /// Solver output with the node and tail data moved to blocks.
    profiles: BTreeMap<String, Value>,
    stages: BTreeMap<String, Value>,
}

/// Everything a pipeline run keeps: parameters, whichever profiles have been
/// solved, and the JSON results of later stages.
#[derive(Debug, Clone)]
pub struct ProfileArchive {
    pub params: ModelParams,
    pub config: BTreeMap<String, Value>,
    pub eta: Option<EtaSolution>,
    pub mu2: Option<Mu2Solution>,
    pub phi2: Option<Phi2Solution>,
    pub stages: BTreeMap<String, Value>,
}

/// A numeric CSV block.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn fmt_num(x: f64) -> String {
    format!("{x:?}")
}

impl ProfileArchive {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            config: BTreeMap::new(),
            eta: None,
            mu2: None,
            phi2: None,
            stages: BTreeMap::new(),
        }
    }

    pub fn from_bundle(b: &AsymptoticBundle) -> Self {
        Self {
            params: b.params.clone(),
            config: BTreeMap::new(),
            eta: Some(b.eta.clone()),
            mu2: Some(b.mu2.clone()),
            phi2: Some(b.phi2.clone()),
            stages: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> u32 {
        self.params.n
    }

    /// Assemble the bundle; all three profiles must be present.
    pub fn bundle(&self) -> Result<AsymptoticBundle> {
        let missing = |what: &str| Error::Archive(format!("archive has no {what} profile"));
        AsymptoticBundle::new(
            self.params.clone(),
            self.eta.clone().ok_or_else(|| missing("eta"))?,
            self.mu2.clone().ok_or_else(|| missing("mu2"))?,
            self.phi2.clone().ok_or_else(|| missing("phi2"))?,
        )
    }

    pub fn to_text(&self) -> Result<String> {
        let mut profiles = BTreeMap::new();
        let mut blocks: Vec<(String, Block)> = Vec::new();
        if let Some(s) = &self.eta {
            profiles.insert(
                "eta".into(),
                split_profile(s, "eta", &s.profile, "z", &mut blocks)?,
            );
        }
        if let Some(s) = &self.mu2 {
            profiles.insert(
                "mu2".into(),
                split_profile(s, "mu2", &s.profile, "y", &mut blocks)?,
            );
        }
        if let Some(s) = &self.phi2 {
            profiles.insert(
                "phi2".into(),
                split_profile(s, "phi2", &s.profile, "z", &mut blocks)?,
            );
        }
        let header = Header {
            schema: SCHEMA,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            n: self.params.n,
            params: self.params.clone(),
            config: self.config.clone(),
            profiles,
            stages: self.stages.clone(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {SCHEMA}");
        out.push_str(&serde_json::to_string_pretty(&header)?);
        out.push_str("\n#end header\n");
        for (name, b) in &blocks {
            let _ = writeln!(out, "#block {name} rows={}", b.rows.len());
            out.push_str(&b.columns.join(","));
            out.push('\n');
            for r in &b.rows {
                let cells: Vec<String> = r.iter().map(|&v| fmt_num(v)).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out.push_str("#end block\n");
        }
        out.push_str("#end archive\n");
        Ok(out)
    }

    /// Parse an archive; with `expected_n` set, an archive for another `n`
    /// is an error.
    pub fn parse(text: &str, expected_n: Option<u32>) -> Result<Self> {
        let mut lines = LineReader::new(text);
        let (off, first) = lines.next_line()?;
        let version = first
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| at(off, "not an archive: missing magic line"))?;
        let schema: u32 = version
            .parse()
            .map_err(|_| at(off, &format!("bad schema number '{version}'")))?;
        if schema != SCHEMA {
            return Err(Error::Archive(format!(
                "archive schema {schema}, this build reads {SCHEMA}"
            )));
        }
        let mut json = String::new();
        let header_off = lines.offset();
        loop {
            let (_, l) = lines.next_line()?;
            if l == "#end header" {
                break;
            }
            json.push_str(l);
            json.push('\n');
        }
        let header: Header =
            serde_json::from_str(&json).map_err(|e| at(header_off, &format!("header: {e}")))?;
        if header.schema != SCHEMA {
            return Err(Error::Archive(format!(
                "header schema {}, this build reads {SCHEMA}",
                header.schema
            )));
        }
        if header.n != header.params.n {
            return Err(Error::Archive(format!(
                "header n = {} disagrees with params n = {}",
                header.n, header.params.n
            )));
        }
        if let Some(n) = expected_n {
            if header.n != n {
                return Err(Error::Archive(format!(
                    "archive holds n = {}, requested n = {n}",
                    header.n
                )));
            }
        }
        let mut blocks: BTreeMap<String, Block> = BTreeMap::new();
        loop {
            let (off, l) = lines.next_line()?;
            if l == "#end archive" {
                break;
            }
            let head = l
                .strip_prefix("#block ")
                .ok_or_else(|| at(off, &format!("expected a block, found '{l}'")))?;
            let (name, rows) = head
                .split_once(" rows=")
                .ok_or_else(|| at(off, "block line lacks rows="))?;
            let count: usize = rows.parse().map_err(|_| at(off, "bad row count"))?;
            let (_, cols) = lines.next_line()?;
            let columns: Vec<String> = cols.split(',').map(str::to_string).collect();
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let (roff, l) = lines.next_line()?;
                let row: Vec<f64> = l
                    .split(',')
                    .map(|c| c.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| at(roff, &format!("bad number in block {name}")))?;
                if row.len() != columns.len() {
                    return Err(at(roff, &format!("row width mismatch in block {name}")));
                }
                data.push(row);
            }
            let (eoff, end) = lines.next_line()?;
            if end != "#end block" {
                return Err(at(eoff, &format!("block {name} longer than its row count")));
            }
            blocks.insert(
                name.to_string(),
                Block {
                    columns,
                    rows: data,
                },
            );
        }
        let mut a = ProfileArchive {
            params: header.params.clone(),
            config: header.config,
            eta: None,
            mu2: None,
            phi2: None,
            stages: header.stages,
        };
        for (name, meta) in header.profiles {
            match name.as_str() {
                "eta" => {
                    a.eta = Some(join_profile(
                        meta,
                        "eta",
                        &blocks,
                        |s: &mut EtaSolution| &mut s.profile,
                    )?)
                }
                "mu2" => {
                    a.mu2 = Some(join_profile(
                        meta,
                        "mu2",
                        &blocks,
                        |s: &mut Mu2Solution| &mut s.profile,
                    )?)
                }
                "phi2" => {
                    a.phi2 = Some(join_profile(
                        meta,
                        "phi2",
                        &blocks,
                        |s: &mut Phi2Solution| &mut s.profile,
                    )?)
                }
                other => return Err(Error::Archive(format!("unknown profile '{other}'"))),
            }
        }
        for (sol, n) in [
            (a.eta.as_ref().map(|s| s.n), "eta"),
            (a.mu2.as_ref().map(|s| s.n), "mu2"),
            (a.phi2.as_ref().map(|s| s.n), "phi2"),
        ] {
            if let Some(m) = sol {
                if m != a.params.n {
                    return Err(Error::Archive(format!(
                        "{n} profile solved for n = {m}, header n = {}",
                        a.params.n
                    )));
                }
            }
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_text()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, expected_n: Option<u32>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, expected_n)
    }
}

/// Write the bundle to `path`.
pub fn save_archive(bundle: &AsymptoticBundle, path: &Path) -> Result<()> {
    ProfileArchive::from_bundle(bundle).save(path)
}

/// Read a bundle for `n` from `path`; the bundle invariants are re-checked.
pub fn load_archive(path: &Path, n: u32) -> Result<AsymptoticBundle> {
    ProfileArchive::load(path, Some(n))?.bundle()
}

fn at(offset: usize, msg: &str) -> Error {
    Error::Archive(format!("byte {offset}: {msg}"))
}

struct LineReader<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    fn offset(&self) -> usize {
        self.pos
    }

    /// Next line without its terminator, and the byte offset where it
    /// starts. Running out of input is an error: a complete archive ends
    /// with an explicit marker.
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        let start = self.pos;
        if start >= self.text.len() {
            return Err(at(start, "unexpected end of file (truncated archive)"));
        }
        let rest = &self.text[start..];
        match rest.find('\n') {
            Some(i) => {
                self.pos = start + i + 1;
                Ok((start, rest[..i].trim_end_matches('\r')))
            }
            None => Err(at(
                self.text.len(),
                "unexpected end of file (truncated archive)",
            )),
        }
    }
}

fn tail_block(right: &RightTail) -> (&'static str, Block) {
    match right {
        RightTail::None => (
            "none",
            Block {
                columns: vec!["coeff[1]".into(), "exponent[1]".into()],
                rows: vec![],
            },
        ),
        RightTail::PowerLaws { terms } => (
            "power_laws",
            Block {
                columns: vec!["coeff[1]".into(), "exponent[1]".into()],
                rows: terms.iter().map(|t| vec![t.coeff, t.exponent]).collect(),
            },
        ),
        RightTail::Gaussian {
            amplitude,
            exponent,
        } => (
            "gaussian",
            Block {
                columns: vec!["amplitude[1]".into(), "exponent[1]".into()],
                rows: vec![vec![*amplitude, *exponent]],
            },
        ),
    }
}

fn split_profile<S: Serialize>(
    sol: &S,
    key: &str,
    profile: &Profile,
    var: &str,
    blocks: &mut Vec<(String, Block)>,
) -> Result<Value> {
    let mut v = serde_json::to_value(sol)?;
    let prof = v
        .get_mut("profile")
        .and_then(Value::as_object_mut)
        .ok_or_else(|| Error::Archive(format!("{key}: solution has no profile")))?;
    let (kind, tail) = tail_block(&profile.right);
    prof.insert("nodes".into(), Value::String(format!("{key}.nodes")));
    prof.insert(
        "right".into(),
        serde_json::json!({ "kind": kind, "block": format!("{key}.tail") }),
    );
    let nodes = Block {
        columns: vec![
            format!("{var}[1]"),
            format!("{key}[1]"),
            format!("d{key}/d{var}[1]"),
        ],
        rows: profile
            .nodes()
            .iter()
            .map(|n| vec![n.x, n.f, n.df])
            .collect(),
    };
    blocks.push((format!("{key}.nodes"), nodes));
    blocks.push((format!("{key}.tail"), tail));
    Ok(v)
}

fn join_profile<S, F>(
    mut meta: Value,
    key: &str,
    blocks: &BTreeMap<String, Block>,
    profile: F,
) -> Result<S>
where
    S: DeserializeOwned,
    F: Fn(&mut S) -> &mut Profile,
{
    let get = |name: &str| {
        blocks
            .get(name)
            .ok_or_else(|| Error::Archive(format!("missing block '{name}'")))
    };
    let nodes_block = get(&format!("{key}.nodes"))?;
    let tail = get(&format!("{key}.tail"))?;
    if nodes_block.columns.len() != 3 {
        return Err(Error::Archive(format!(
            "block '{key}.nodes' needs 3 columns"
        )));
    }
    let nodes: Vec<Node> = nodes_block
        .rows
        .iter()
        .map(|r| Node {
            x: r[0],
            f: r[1],
            df: r[2],
        })
        .collect();
    let prof = meta
        .get_mut("profile")
        .and_then(Value::as_object_mut)
        .ok_or_else(|| Error::Archive(format!("{key}: header lacks profile")))?;
    let kind = prof
        .get("right")
        .and_then(|r| r.get("kind"))
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Archive(format!("{key}: header lacks tail kind")))?
        .to_string();
    let right = match kind.as_str() {
        "none" => RightTail::None,
        "power_laws" => RightTail::PowerLaws {
            terms: tail
                .rows
                .iter()
                .map(|r| PowerTerm {
                    coeff: r[0],
                    exponent: r[1],
                })
                .collect(),
        },
        "gaussian" => {
            let r = tail
                .rows
                .first()
                .ok_or_else(|| Error::Archive(format!("block '{key}.tail' is empty")))?;
            RightTail::Gaussian {
                amplitude: r[0],
                exponent: r[1],
            }
        }
        other => {
            return Err(Error::Archive(format!(
                "{key}: unknown tail kind '{other}'"
            )))
        }
    };
    prof.insert("nodes".into(), Value::Array(vec![]));
    prof.insert("right".into(), serde_json::to_value(&right)?);
    let mut sol: S =
        serde_json::from_value(meta).map_err(|e| Error::Archive(format!("{key}: {e}")))?;
    let p = profile(&mut sol);
    *p = Profile::new(p.name.clone(), nodes, p.left.clone(), right)?;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            1e-300,
            -2.5e17,
            f64::MIN_POSITIVE,
            0.859_447_210_654_210_6,
        ] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn params_only_round_trip() {
        let p = ModelParams::derive(4).unwrap();
        let mut a = ProfileArchive::new(p.clone());
        a.stages
            .insert("params".into(), serde_json::json!({ "ok": true }));
        let text = a.to_text().unwrap();
        let b = ProfileArchive::parse(&text, Some(4)).unwrap();
        assert_eq!(b.params, p);
        assert_eq!(b.stages, a.stages);
        assert_eq!(b.to_text().unwrap(), text);
        let err = ProfileArchive::parse(&text, Some(5)).unwrap_err();
        assert!(err.to_string().contains("requested n = 5"), "{err}");
        let cut = &text[..text.len() - 5];
        let err = ProfileArchive::parse(cut, Some(4)).unwrap_err();
        assert!(err.to_string().contains("byte"), "{err}");
    }
}
