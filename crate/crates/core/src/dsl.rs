//! The `.dflow` text form of a mapping.
//!
//! ```text
//! # CONV layer, weights pinned in the RF
//! for m in 0..2 @DRAM
//!   refresh W @GB
//!   for c in 0..2 @GB
//!     parallel-for e in 0..4 @NoC
//!       for m in 0..2 @RF
//! ```
//!
//! One statement per line. Indentation is ignored when parsing; a refresh
//! line sits at the position between the loops written above and below it.

use std::fmt::Write as _;

use crate::error::{DslError, Result};
use crate::loopnest::{Buffer, LoopLevel, LoopNest, Mapping, PartialRefresh, RefreshLocations};
use crate::model::{DataKind, Dim, LayerShape, MemLevel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statement {
    Loop(LoopLevel),
    Refresh { kind: DataKind, buffer: Buffer },
}

/// A parsed statement with its 1-based source line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Located {
    pub line: usize,
    pub statement: Statement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DslDocument {
    pub source: String,
    pub statements: Vec<Located>,
}

impl DslDocument {
    pub fn loops(&self) -> Vec<LoopLevel> {
        self.statements
            .iter()
            .filter_map(|s| match s.statement {
                Statement::Loop(l) => Some(l),
                Statement::Refresh { .. } => None,
            })
            .collect()
    }

    /// Refresh positions as written; absent pairs stay unset.
    pub fn refresh(&self) -> PartialRefresh {
        let mut out = PartialRefresh::default();
        let mut position = 0;
        for s in &self.statements {
            match s.statement {
                Statement::Loop(_) => position += 1,
                Statement::Refresh { kind, buffer } => out.set(kind, buffer, position),
            }
        }
        out
    }

    /// The statements in their written order, canonically formatted.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut depth = 0;
        for s in &self.statements {
            match s.statement {
                Statement::Loop(l) => {
                    write_loop(&mut out, depth, &l);
                    depth += 1;
                }
                Statement::Refresh { kind, buffer } => write_refresh(&mut out, depth, kind, buffer),
            }
        }
        out
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_loop(out: &mut String, depth: usize, l: &LoopLevel) {
    indent(out, depth);
    let kw = if l.spatial { "parallel-for" } else { "for" };
    let _ = writeln!(out, "{kw} {} in 0..{} @{}", l.dim, l.bound, l.mem);
}

fn write_refresh(out: &mut String, depth: usize, kind: DataKind, buffer: Buffer) {
    indent(out, depth);
    let _ = writeln!(out, "refresh {} @{}", kind.letter(), buffer);
}

/// Canonical text of a nest. With refresh locations every pair is written
/// explicitly: GB before RF at a shared position, kinds in I, O, W order.
pub fn print(nest: &LoopNest, refresh: Option<&RefreshLocations>) -> String {
    let mut out = String::new();
    let levels = nest.levels();
    for p in 0..=levels.len() {
        if let Some(r) = refresh {
            for buffer in Buffer::ALL {
                for kind in DataKind::ALL {
                    if r.get(kind, buffer) == p {
                        write_refresh(&mut out, p, kind, buffer);
                    }
                }
            }
        }
        if let Some(l) = levels.get(p) {
            write_loop(&mut out, p, l);
        }
    }
    out
}

pub fn print_mapping(mapping: &Mapping) -> String {
    print(&mapping.nest, Some(&mapping.refresh))
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(String),
    Int(String),
    DotDot,
    At,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::DotDot => "`..`".into(),
            Tok::At => "`@`".into(),
        }
    }
}

fn err(line: usize, column: usize, message: impl Into<String>) -> DslError {
    DslError {
        line,
        column,
        message: message.into(),
    }
}

/// Splits one line into (column, token) pairs; stops at `#`.
fn lex(line_no: usize, line: &str) -> Result<Vec<(usize, Tok)>, DslError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let col = i + 1;
        if ch == '#' {
            break;
        } else if ch.is_whitespace() {
            i += 1;
        } else if ch == '@' {
            out.push((col, Tok::At));
            i += 1;
        } else if ch == '.' {
            if chars.get(i + 1) == Some(&'.') {
                out.push((col, Tok::DotDot));
                i += 2;
            } else {
                return Err(err(line_no, col, "expected `..`"));
            }
        } else if ch.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            out.push((col, Tok::Int(chars[start..i].iter().collect())));
        } else if ch.is_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '-') {
                i += 1;
            }
            out.push((col, Tok::Word(chars[start..i].iter().collect())));
        } else {
            return Err(err(line_no, col, format!("unexpected character `{ch}`")));
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    line: usize,
    toks: &'a [(usize, Tok)],
    pos: usize,
    eol: usize,
}

impl Cursor<'_> {
    fn next(&mut self, what: &str) -> Result<(usize, &Tok), DslError> {
        match self.toks.get(self.pos) {
            Some((col, t)) => {
                self.pos += 1;
                Ok((*col, t))
            }
            None => Err(err(self.line, self.eol, format!("expected {what}, found end of line"))),
        }
    }

    fn word(&mut self, what: &str) -> Result<(usize, String), DslError> {
        let line = self.line;
        match self.next(what)? {
            (col, Tok::Word(w)) => Ok((col, w.clone())),
            (col, t) => Err(err(line, col, format!("expected {what}, found {}", t.describe()))),
        }
    }

    fn int(&mut self, what: &str) -> Result<(usize, u64), DslError> {
        let line = self.line;
        match self.next(what)? {
            (col, Tok::Int(s)) => s
                .parse()
                .map(|v| (col, v))
                .map_err(|_| err(line, col, format!("integer `{s}` is out of range"))),
            (col, t) => Err(err(line, col, format!("expected {what}, found {}", t.describe()))),
        }
    }

    fn punct(&mut self, want: Tok) -> Result<(), DslError> {
        let line = self.line;
        let what = want.describe();
        match self.next(&what)? {
            (_, t) if *t == want => Ok(()),
            (col, t) => Err(err(line, col, format!("expected {what}, found {}", t.describe()))),
        }
    }

    fn level(&mut self) -> Result<(usize, MemLevel), DslError> {
        self.punct(Tok::At)?;
        let (col, w) = self.word("a memory level")?;
        MemLevel::parse(&w)
            .map(|l| (col, l))
            .ok_or_else(|| err(self.line, col, format!("unknown memory level `{w}` (expected DRAM, GB, NoC or RF)")))
    }

    fn finish(&self) -> Result<(), DslError> {
        match self.toks.get(self.pos) {
            Some((col, t)) => Err(err(self.line, *col, format!("unexpected {} after statement", t.describe()))),
            None => Ok(()),
        }
    }
}

struct Context {
    last_mem: Option<(MemLevel, usize)>,
    spatial_closed: bool,
    in_spatial: bool,
}

fn parse_loop(c: &mut Cursor, kw_col: usize, spatial: bool, ctx: &mut Context) -> Result<LoopLevel, DslError> {
    let line = c.line;
    let (dcol, d) = c.word("a dimension")?;
    let dim: Dim = d.parse().map_err(|m: String| err(line, dcol, m))?;
    let (icol, kw) = c.word("`in`")?;
    if !kw.eq_ignore_ascii_case("in") {
        return Err(err(line, icol, format!("expected `in`, found `{kw}`")));
    }
    let (zcol, zero) = c.int("`0`")?;
    if zero != 0 {
        return Err(err(line, zcol, "ranges must start at 0"));
    }
    c.punct(Tok::DotDot)?;
    let (bcol, bound) = c.int("a loop bound")?;
    if bound == 0 {
        return Err(err(line, bcol, "loop bound must be ≥ 1"));
    }
    let (lcol, mem) = c.level()?;
    c.finish()?;
    if spatial && mem != MemLevel::Noc {
        return Err(err(line, kw_col, format!("parallel-for is only allowed at NoC, found @{mem}")));
    }
    if let Some((prev, prev_line)) = ctx.last_mem {
        if mem > prev {
            return Err(err(
                line,
                lcol,
                format!("{mem} loop inside a {prev} loop (line {prev_line}); levels must nest DRAM, GB, NoC, RF"),
            ));
        }
    }
    if spatial {
        if ctx.spatial_closed {
            return Err(err(line, kw_col, "parallel-for loops must be contiguous"));
        }
        ctx.in_spatial = true;
    } else if ctx.in_spatial {
        ctx.in_spatial = false;
        ctx.spatial_closed = true;
    }
    ctx.last_mem = Some((mem, line));
    Ok(LoopLevel {
        dim,
        bound,
        mem,
        spatial,
    })
}

fn parse_refresh(c: &mut Cursor) -> Result<(DataKind, Buffer), DslError> {
    let line = c.line;
    let (kcol, k) = c.word("a data kind")?;
    let kind = DataKind::from_letter(&k.to_ascii_uppercase())
        .ok_or_else(|| err(line, kcol, format!("unknown data kind `{k}` (expected I, O or W)")))?;
    let (lcol, mem) = c.level()?;
    c.finish()?;
    let buffer = Buffer::from_mem(mem)
        .ok_or_else(|| err(line, lcol, format!("buffers are refreshed only at GB or RF, found @{mem}")))?;
    Ok((kind, buffer))
}

pub fn parse(text: &str) -> Result<DslDocument, DslError> {
    let mut statements = Vec::new();
    let mut ctx = Context {
        last_mem: None,
        spatial_closed: false,
        in_spatial: false,
    };
    let mut seen: Vec<(DataKind, Buffer, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks = lex(line, raw)?;
        if toks.is_empty() {
            continue;
        }
        let eol = raw.split('#').next().unwrap_or("").trim_end().chars().count() + 1;
        let mut c = Cursor {
            line,
            toks: &toks,
            pos: 0,
            eol,
        };
        let (col, kw) = c.word("`for`, `parallel-for` or `refresh`")?;
        let statement = match kw.to_ascii_lowercase().as_str() {
            "for" => Statement::Loop(parse_loop(&mut c, col, false, &mut ctx)?),
            "parallel-for" => Statement::Loop(parse_loop(&mut c, col, true, &mut ctx)?),
            "refresh" => {
                let (kind, buffer) = parse_refresh(&mut c)?;
                if let Some((_, _, first)) = seen.iter().find(|(k, b, _)| *k == kind && *b == buffer) {
                    return Err(err(
                        line,
                        col,
                        format!("duplicate refresh for {} @{buffer} (first on line {first})", kind.letter()),
                    ));
                }
                seen.push((kind, buffer, line));
                Statement::Refresh { kind, buffer }
            }
            _ => {
                return Err(err(
                    line,
                    col,
                    format!("expected `for`, `parallel-for` or `refresh`, found `{kw}`"),
                ))
            }
        };
        statements.push(Located { line, statement });
    }
    Ok(DslDocument {
        source: text.to_string(),
        statements,
    })
}

/// Binds a document to a layer. Refresh pairs not written default to the
/// top of their level's loop group.
pub fn lower(doc: &DslDocument, layer: &LayerShape) -> Result<Mapping> {
    let nest = LoopNest::new(layer.clone(), doc.loops())?;
    let refresh = doc.refresh().resolve(&nest);
    Mapping::new(nest, refresh)
}

/// Reads either the JSON mapping schema or `.dflow` text.
pub fn load_mapping(text: &str, layer: &LayerShape) -> Result<Mapping> {
    if text.trim_start().starts_with('{') {
        Mapping::from_json(text, layer)
    } else {
        lower(&parse(text)?, layer)
    }
}
