//! Line-oriented problem-description format.
//!
//! ```text
//! # comment
//! name <token>
//! var <id> dim=<k> lo=<v,...> hi=<v,...>
//! con <id> kind=<eq|ineq> scope=<id,...> [codim=<k>] residual=<tag>(<param>=<value>, ...)
//! witness <id> <v,...>
//! ```
//!
//! Parameter values are numbers, bracketed number lists (`[1, 0.5, 0]`) or
//! bare words (`rows=xy`). Whitespace is free inside parentheses and
//! brackets. See `docs/problem-format.md` for the per-tag parameters.

use std::collections::BTreeMap;

use super::residual::{Clearance, PoseRows, Residual, RESIDUAL_TAGS};
use super::{ConstraintDraft, ConstraintGraph, ConstraintKind, GraphError, VariableSpec};
use crate::pose::{PlanarArm, Pose2};

struct Field<'a> {
    text: &'a str,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> GraphError {
    GraphError::Syntax { line, column, message: message.into() }
}

/// Splits a line into whitespace-separated fields, keeping bracketed and
/// parenthesized groups together and stopping at a top-level `#`.
fn fields(line: &str, lineno: usize) -> Result<Vec<Field<'_>>, GraphError> {
    let mut out = Vec::new();
    let mut depth: i32 = 0;
    let mut start: Option<usize> = None;
    for (pos, ch) in line.char_indices() {
        match ch {
            '#' if depth == 0 => {
                break;
            }
            '(' | '[' => depth += 1,
            ')' | ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(syntax(lineno, pos + 1, format!("unbalanced `{ch}`")));
                }
            }
            _ => {}
        }
        let end_here = ch.is_whitespace() && depth == 0;
        match (start, end_here) {
            (None, false) if ch != '#' => start = Some(pos),
            (Some(s), true) => {
                out.push(Field { text: &line[s..pos], column: s + 1 });
                start = None;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(syntax(lineno, line.len() + 1, "unclosed bracket"));
    }
    if let Some(s) = start {
        let end = line[s..].find('#').map(|e| s + e).unwrap_or(line.len());
        let text = line[s..end].trim_end();
        if !text.is_empty() {
            out.push(Field { text, column: s + 1 });
        }
    }
    Ok(out)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | ':'))
}

fn parse_numbers(s: &str, lineno: usize, column: usize) -> Result<Vec<f64>, GraphError> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    if inner.trim().is_empty() {
        return Ok(vec![]);
    }
    inner
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| syntax(lineno, column, format!("invalid number `{}`", t.trim())))
        })
        .collect()
}

fn key_value<'a>(f: &Field<'a>, lineno: usize) -> Result<(&'a str, &'a str), GraphError> {
    f.text
        .split_once('=')
        .ok_or_else(|| syntax(lineno, f.column, format!("expected key=value, found `{}`", f.text)))
}

/// Parses a problem-description document into a validated graph.
pub fn parse_graph(text: &str) -> Result<ConstraintGraph, GraphError> {
    let mut name = String::from("unnamed");
    let mut variables = Vec::new();
    let mut drafts = Vec::new();
    let mut witness: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let fs = fields(raw, lineno)?;
        let Some(head) = fs.first() else { continue };
        let id = fs.get(1).ok_or_else(|| syntax(lineno, head.column + head.text.len(), "missing identifier"))?;
        if !is_ident(id.text) {
            return Err(syntax(lineno, id.column, format!("invalid identifier `{}`", id.text)));
        }
        match head.text {
            "name" => {
                if fs.len() != 2 {
                    return Err(syntax(lineno, fs[2].column, "unexpected field after name"));
                }
                name = id.text.to_string();
            }
            "var" => variables.push(parse_var(id.text, &fs[2..], lineno)?),
            "con" => drafts.push(parse_con(id.text, &fs[2..], lineno)?),
            "witness" => {
                let vals = fs.get(2).ok_or_else(|| syntax(lineno, id.column, "missing witness values"))?;
                if fs.len() > 3 {
                    return Err(syntax(lineno, fs[3].column, "unexpected field after witness values"));
                }
                let v = parse_numbers(vals.text, lineno, vals.column)?;
                if witness.insert(id.text.to_string(), (lineno, v)).is_some() {
                    return Err(GraphError::Duplicate(format!("witness {}", id.text)));
                }
            }
            other => return Err(syntax(lineno, head.column, format!("unknown directive `{other}`"))),
        }
    }

    let graph = ConstraintGraph::build(name, variables, drafts)?;
    if witness.is_empty() {
        return Ok(graph);
    }
    let mut parts = Vec::with_capacity(graph.n_vars());
    for v in graph.variables() {
        let (_, w) = witness.remove(&v.id).ok_or_else(|| GraphError::Invalid {
            entity: v.id.clone(),
            message: "witness given for some variables but not this one".into(),
        })?;
        parts.push(w);
    }
    if let Some((id, _)) = witness.into_iter().next() {
        return Err(GraphError::Invalid { entity: id, message: "witness for undeclared variable".into() });
    }
    graph.with_witness(parts)
}

fn parse_var(id: &str, attrs: &[Field<'_>], lineno: usize) -> Result<VariableSpec, GraphError> {
    let (mut dim, mut lo, mut hi) = (None, None, None);
    for f in attrs {
        let (k, v) = key_value(f, lineno)?;
        match k {
            "dim" => {
                dim = Some(
                    v.parse::<usize>()
                        .map_err(|_| syntax(lineno, f.column, format!("invalid dim `{v}`")))?,
                )
            }
            "lo" => lo = Some(parse_numbers(v, lineno, f.column)?),
            "hi" => hi = Some(parse_numbers(v, lineno, f.column)?),
            _ => return Err(syntax(lineno, f.column, format!("unknown variable attribute `{k}`"))),
        }
    }
    let missing = |what: &str| syntax(lineno, 1, format!("variable `{id}` is missing `{what}`"));
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let spec = VariableSpec {
        id: id.to_string(),
        dim,
        lower: lo.ok_or_else(|| missing("lo"))?,
        upper: hi.ok_or_else(|| missing("hi"))?,
    };
    Ok(spec)
}

fn parse_con(id: &str, attrs: &[Field<'_>], lineno: usize) -> Result<ConstraintDraft, GraphError> {
    let (mut kind, mut scope, mut codim, mut residual) = (None, None, None, None);
    for f in attrs {
        let (k, v) = key_value(f, lineno)?;
        match k {
            "kind" => {
                kind = Some(match v {
                    "eq" => ConstraintKind::Eq,
                    "ineq" => ConstraintKind::Ineq,
                    _ => return Err(syntax(lineno, f.column, format!("kind must be eq or ineq, got `{v}`"))),
                })
            }
            "scope" => {
                let ids: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                if ids.iter().any(|s| !is_ident(s)) {
                    return Err(syntax(lineno, f.column, format!("invalid scope `{v}`")));
                }
                scope = Some(ids);
            }
            "codim" => {
                codim = Some(
                    v.parse::<usize>()
                        .map_err(|_| syntax(lineno, f.column, format!("invalid codim `{v}`")))?,
                )
            }
            "residual" => residual = Some(parse_residual(id, v, lineno, f.column + k.len() + 1)?),
            _ => return Err(syntax(lineno, f.column, format!("unknown constraint attribute `{k}`"))),
        }
    }
    let missing = |what: &str| syntax(lineno, 1, format!("constraint `{id}` is missing `{what}`"));
    Ok(ConstraintDraft {
        id: id.to_string(),
        kind: kind.ok_or_else(|| missing("kind"))?,
        scope: scope.ok_or_else(|| missing("scope"))?,
        residual: residual.ok_or_else(|| missing("residual"))?,
        codim,
    })
}

enum Value {
    Num(f64),
    List(Vec<f64>),
    Word(String),
}

struct Params<'a> {
    constraint: &'a str,
    map: BTreeMap<String, Value>,
}

impl Params<'_> {
    fn err(&self, param: &str, message: impl Into<String>) -> GraphError {
        GraphError::InvalidParam {
            constraint: self.constraint.to_string(),
            param: param.to_string(),
            message: message.into(),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, GraphError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::List(v)) => Ok(Some(v)),
            Some(Value::Num(x)) => Ok(Some(vec![x])),
            Some(Value::Word(_)) => Err(self.err(key, "expected a number list")),
        }
    }

    fn req_list(&mut self, key: &str) -> Result<Vec<f64>, GraphError> {
        self.list(key)?.ok_or_else(|| self.err(key, "required"))
    }

    fn num(&mut self, key: &str) -> Result<Option<f64>, GraphError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(Value::Num(x)) => Ok(Some(x)),
            Some(_) => Err(self.err(key, "expected a number")),
        }
    }

    fn req_num(&mut self, key: &str) -> Result<f64, GraphError> {
        self.num(key)?.ok_or_else(|| self.err(key, "required"))
    }

    fn pose(&mut self, key: &str) -> Result<Option<Pose2>, GraphError> {
        match self.list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 3 => Ok(Some(Pose2::new(v[0], v[1], v[2]))),
            Some(v) => Err(self.err(key, format!("pose needs 3 values, got {}", v.len()))),
        }
    }

    fn point(&mut self, key: &str) -> Result<[f64; 2], GraphError> {
        let v = self.req_list(key)?;
        if v.len() != 2 {
            return Err(self.err(key, format!("point needs 2 values, got {}", v.len())));
        }
        Ok([v[0], v[1]])
    }

    fn rows(&mut self) -> Result<PoseRows, GraphError> {
        match self.map.remove("rows") {
            None => Ok(PoseRows::ALL),
            Some(Value::Word(w)) => PoseRows::parse(&w).ok_or_else(|| self.err("rows", format!("invalid mask `{w}`"))),
            Some(_) => Err(self.err("rows", "expected a mask such as xy")),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, GraphError> {
        match self.num(key)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 => Ok(Some(x as usize)),
            Some(_) => Err(self.err(key, "expected a non-negative integer")),
        }
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64, GraphError> {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.err(key, "must be positive"))
        }
    }

    fn links(&mut self, key: &str) -> Result<Vec<f64>, GraphError> {
        let l = self.req_list(key)?;
        if l.is_empty() || l.iter().any(|&x| x <= 0.0) {
            return Err(self.err(key, "link lengths must be a non-empty list of positive values"));
        }
        Ok(l)
    }

    fn finish(self) -> Result<(), GraphError> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(self.err(k, "unknown parameter")),
        }
    }
}

fn parse_residual(constraint: &str, text: &str, lineno: usize, column: usize) -> Result<Residual, GraphError> {
    let open = text
        .find('(')
        .ok_or_else(|| syntax(lineno, column, format!("expected tag(params), found `{text}`")))?;
    if !text.ends_with(')') {
        return Err(syntax(lineno, column + text.len(), "residual must end with `)`"));
    }
    let tag = &text[..open];
    if !RESIDUAL_TAGS.contains(&tag) {
        return Err(GraphError::UnknownResidual { constraint: constraint.to_string(), tag: tag.to_string() });
    }
    let body = &text[open + 1..text.len() - 1];
    let mut map = BTreeMap::new();
    let mut depth = 0;
    let mut start = 0;
    let mut pieces = Vec::new();
    for (i, ch) in body.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                pieces.push((start, &body[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    pieces.push((start, &body[start..]));
    for (off, piece) in pieces {
        let col = column + open + 1 + off;
        if piece.trim().is_empty() {
            if body.trim().is_empty() {
                continue;
            }
            return Err(syntax(lineno, col, "empty parameter"));
        }
        let (k, v) = piece
            .split_once('=')
            .ok_or_else(|| syntax(lineno, col, format!("expected param=value, found `{}`", piece.trim())))?;
        let (k, v) = (k.trim(), v.trim());
        let value = if v.starts_with('[') {
            Value::List(parse_numbers(v, lineno, col)?)
        } else if let Ok(x) = v.parse::<f64>() {
            if !x.is_finite() {
                return Err(syntax(lineno, col, format!("non-finite value `{v}`")));
            }
            Value::Num(x)
        } else if is_ident(v) {
            Value::Word(v.to_string())
        } else {
            return Err(syntax(lineno, col, format!("invalid value `{v}`")));
        };
        if map.insert(k.to_string(), value).is_some() {
            return Err(syntax(lineno, col, format!("parameter `{k}` given twice")));
        }
    }
    let mut p = Params { constraint, map };
    let r = match tag {
        "planar_fk" => Residual::PlanarFk {
            links: p.links("links")?,
            base: p.pose("base")?.unwrap_or(Pose2::IDENTITY),
            target: p.pose("target")?.unwrap_or(Pose2::IDENTITY),
            nbase: p.count("nbase")?.unwrap_or(0),
            rows: p.rows()?,
        },
        "relative_pose" => Residual::RelativePose {
            offset: p.pose("offset")?.unwrap_or(Pose2::IDENTITY),
            rows: p.rows()?,
        },
        "fixed_pose" => Residual::FixedPose {
            target: p.pose("target")?.ok_or_else(|| p.err("target", "required"))?,
            offset: p.pose("offset")?.unwrap_or(Pose2::IDENTITY),
            rows: p.rows()?,
        },
        "position_region" => {
            let center = p.point("center")?;
            let radius = p.req_num("radius")?;
            Residual::PositionRegion { center, radius: p.positive("radius", radius)? }
        }
        "circle_clearance" => {
            if p.map.contains_key("links2") {
                let first = PlanarArm::new(p.pose("base")?.unwrap_or(Pose2::IDENTITY), p.links("links")?);
                let second = PlanarArm::new(p.pose("base2")?.unwrap_or(Pose2::IDENTITY), p.links("links2")?);
                let radius = p.req_num("radius")?;
                let radius = p.positive("radius", radius)?;
                Residual::CircleClearance(Clearance::ArmPair { first, second, radius })
            } else if p.map.contains_key("links") {
                let arm = PlanarArm::new(p.pose("base")?.unwrap_or(Pose2::IDENTITY), p.links("links")?);
                let flat = p.req_list("circles")?;
                if flat.is_empty() || flat.len() % 3 != 0 {
                    return Err(p.err("circles", "expected a non-empty list of cx,cy,r triples"));
                }
                let circles = flat.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
                Residual::CircleClearance(Clearance::Arm { arm, circles })
            } else {
                let center = p.point("center")?;
                let radius = p.req_num("radius")?;
                Residual::CircleClearance(Clearance::Point { center, radius: p.positive("radius", radius)? })
            }
        }
        "box_membership" => Residual::BoxMembership { lo: p.req_list("lo")?, hi: p.req_list("hi")? },
        "custom_affine" => Residual::CustomAffine { a: p.req_list("a")?, b: p.req_list("b")? },
        _ => unreachable!("tag list checked above"),
    };
    p.finish()?;
    Ok(r)
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn pose(p: &Pose2) -> String {
    list(&p.to_array())
}

fn residual_text(r: &Residual) -> String {
    let mut params: Vec<String> = Vec::new();
    let opt_pose = |params: &mut Vec<String>, key: &str, p: &Pose2| {
        if *p != Pose2::IDENTITY {
            params.push(format!("{key}={}", pose(p)));
        }
    };
    let rows = |params: &mut Vec<String>, r: &PoseRows| {
        if *r != PoseRows::ALL {
            params.push(format!("rows={r}"));
        }
    };
    match r {
        Residual::PlanarFk { links, base, target, nbase, rows: rw } => {
            params.push(format!("links={}", list(links)));
            opt_pose(&mut params, "base", base);
            opt_pose(&mut params, "target", target);
            if *nbase > 0 {
                params.push(format!("nbase={nbase}"));
            }
            rows(&mut params, rw);
        }
        Residual::RelativePose { offset, rows: rw } => {
            opt_pose(&mut params, "offset", offset);
            rows(&mut params, rw);
        }
        Residual::FixedPose { target, offset, rows: rw } => {
            params.push(format!("target={}", pose(target)));
            opt_pose(&mut params, "offset", offset);
            rows(&mut params, rw);
        }
        Residual::PositionRegion { center, radius } => {
            params.push(format!("center={}", list(center)));
            params.push(format!("radius={radius}"));
        }
        Residual::CircleClearance(c) => match c {
            Clearance::Point { center, radius } => {
                params.push(format!("center={}", list(center)));
                params.push(format!("radius={radius}"));
            }
            Clearance::Arm { arm, circles } => {
                params.push(format!("links={}", list(&arm.links)));
                opt_pose(&mut params, "base", &arm.base);
                let flat: Vec<f64> = circles.iter().flatten().copied().collect();
                params.push(format!("circles={}", list(&flat)));
            }
            Clearance::ArmPair { first, second, radius } => {
                params.push(format!("links={}", list(&first.links)));
                opt_pose(&mut params, "base", &first.base);
                params.push(format!("links2={}", list(&second.links)));
                opt_pose(&mut params, "base2", &second.base);
                params.push(format!("radius={radius}"));
            }
        },
        Residual::BoxMembership { lo, hi } => {
            params.push(format!("lo={}", list(lo)));
            params.push(format!("hi={}", list(hi)));
        }
        Residual::CustomAffine { a, b } => {
            params.push(format!("a={}", list(a)));
            params.push(format!("b={}", list(b)));
        }
    }
    format!("{}({})", r.tag(), params.join(", "))
}

fn csv(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes a graph in canonical form; `parse_graph` reads it back unchanged.
pub fn serialize_graph(g: &ConstraintGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("name {}\n", g.name));
    for v in g.variables() {
        out.push_str(&format!("var {} dim={} lo={} hi={}\n", v.id, v.dim, csv(&v.lower), csv(&v.upper)));
    }
    for c in g.constraints() {
        let scope: Vec<&str> = c.scope.iter().map(|&i| g.variables()[i].id.as_str()).collect();
        out.push_str(&format!(
            "con {} kind={} scope={} codim={} residual={}\n",
            c.id,
            c.kind,
            scope.join(","),
            c.codim,
            residual_text(&c.residual)
        ));
    }
    if let Some(w) = &g.witness {
        for (v, vals) in g.variables().iter().zip(w) {
            out.push_str(&format!("witness {} {}\n", v.id, csv(vals)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PICK_PLACE: &str = "\
# pick and place
name pick_place
var t  dim=3 lo=-0.2,-0.2,-3.14 hi=0.2,0.2,3.14
var q1 dim=3 lo=-3.14,-3.14,-3.14 hi=3.14,3.14,3.14
var q2 dim=3 lo=-3.14,-3.14,-3.14 hi=3.14,3.14,3.14
con grasp kind=eq scope=t residual=fixed_pose(target=[0,0,0], offset=[0.1, 0, 0], rows=xy)
con kin1 kind=eq scope=q1,t residual=planar_fk(links=[0.5,0.4,0.3], target=[0.8, 0.3, 0])
con kin2 kind=eq scope=q2,t codim=3 residual=planar_fk(links=[0.5,0.4,0.3], target=[-0.2, 0.8, 1.5])
con coll1 kind=ineq scope=q1 residual=circle_clearance(links=[0.5,0.4,0.3], circles=[0.5,0.5,0.1])  # trailing
con coll2 kind=ineq scope=q2 residual=circle_clearance(links=[0.5,0.4,0.3], circles=[0.5,0.5,0.1, 0,1,0.2])
";

    #[test]
    fn parses_pick_place_document() {
        let g = parse_graph(PICK_PLACE).unwrap();
        assert_eq!(g.name, "pick_place");
        assert_eq!(g.n_vars(), 3);
        assert_eq!(g.constraints().len(), 5);
        assert_eq!(g.constraints()[0].codim, 2);
        assert_eq!(g.constraints()[1].scope, vec![1, 0]);
        assert_eq!(g.constraints()[4].codim, 12);
    }

    #[test]
    fn serialize_round_trips() {
        let g = parse_graph(PICK_PLACE).unwrap();
        let text = serialize_graph(&g);
        let back = parse_graph(&text).unwrap();
        assert_eq!(g, back);
        assert_eq!(serialize_graph(&back), text);
    }

    #[test]
    fn single_unconstrained_variable() {
        let g = parse_graph("var x dim=1 lo=0 hi=1\n").unwrap();
        assert_eq!(g.n_vars(), 1);
        assert!(g.constraints().is_empty());
    }

    #[test]
    fn reports_errors_with_entity() {
        let err = parse_graph("var x dim=1 lo=0 hi=1\ncon c kind=eq scope=y residual=custom_affine(a=[1], b=[0])\n")
            .unwrap_err();
        assert_eq!(err, GraphError::UnresolvedScope { constraint: "c".into(), variable: "y".into() });

        let err = parse_graph("var x dim=1 lo=0 hi=1\ncon c kind=eq scope=x residual=warp(a=1)\n").unwrap_err();
        assert_eq!(err, GraphError::UnknownResidual { constraint: "c".into(), tag: "warp".into() });

        let err = parse_graph("var x dim=2 lo=0 hi=1\n").unwrap_err();
        assert!(matches!(err, GraphError::DimensionMismatch { ref entity, .. } if entity == "x"));

        let err = parse_graph("var x dim=1 lo=0 hi=1\ncon c kind=eq scope=x codim=2 residual=custom_affine(a=[1], b=[0])\n")
            .unwrap_err();
        assert!(matches!(err, GraphError::DimensionMismatch { ref entity, .. } if entity == "c"));

        let err = parse_graph("var x dim=1 lo=0 hi=1\nvra y\n").unwrap_err();
        assert_eq!(err, GraphError::Syntax { line: 2, column: 1, message: "unknown directive `vra`".into() });

        let err = parse_graph("var x dim=1 lo=0 hi=[1\n").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 1, .. }));

        let err = parse_graph("var x dim=1 lo=0 hi=1\ncon c kind=eq scope=x residual=custom_affine(a=[1], b=[0], zz=3)\n")
            .unwrap_err();
        assert!(matches!(err, GraphError::InvalidParam { ref param, .. } if param == "zz"));
    }

    #[test]
    fn witness_lines() {
        let g = parse_graph("var x dim=2 lo=0,0 hi=1,1\nwitness x 0.5,0.25\n").unwrap();
        assert_eq!(g.witness, Some(vec![vec![0.5, 0.25]]));
        assert!(parse_graph("var x dim=2 lo=0,0 hi=1,1\nwitness x 0.5\n").is_err());
        assert!(parse_graph("var x dim=1 lo=0 hi=1\nvar y dim=1 lo=0 hi=1\nwitness x 0.5\n").is_err());
    }
}
