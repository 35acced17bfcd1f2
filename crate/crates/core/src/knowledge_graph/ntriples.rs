//! N-Triples serialisation of the graph.
//!
//! Entities become `<{BASE}entity/{id}>` (ids percent-encoded), relations and
//! kinds live under `<{BASE}ontology#…>` and attributes under
//! `<{BASE}attribute#{key}>`. Each entity contributes an `rdf:type` line plus
//! one literal line per attribute. Lines are sorted by
//! (subject, predicate, object) so exports are byte-stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Entity, EntityKind, GraphError, KnowledgeGraph, Relation, Result, Triple, Value};

pub const BASE_IRI: &str = "https://example.org/assistant/";
const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

fn entity_iri(id: &str) -> String {
    format!("{BASE_IRI}entity/{}", percent_encode(id))
}

fn ontology_iri(name: &str) -> String {
    format!("{BASE_IRI}ontology#{name}")
}

fn attribute_iri(key: &str) -> String {
    format!("{BASE_IRI}attribute#{}", percent_encode(key))
}

fn percent_encode(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for b in raw.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~') {
            out.push(b as char);
        } else {
            write!(out, "%{b:02X}").unwrap();
        }
    }
    out
}

fn percent_decode(raw: &str) -> Option<String> {
    let bytes = raw.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = raw.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn literal(value: &Value) -> String {
    match value {
        Value::Text(s) => {
            let mut out = String::from("\"");
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
            out
        }
        Value::Number(v) => format!("\"{v:?}\"^^<{XSD}double>"),
        Value::Integer(v) => format!("\"{v}\"^^<{XSD}integer>"),
        Value::Bool(v) => format!("\"{v}\"^^<{XSD}boolean>"),
    }
}

/// Serialises the whole graph; an empty graph yields an empty string.
pub fn to_ntriples(graph: &KnowledgeGraph) -> String {
    let mut lines: Vec<(String, String, String)> = Vec::new();
    for e in graph.entities() {
        let s = format!("<{}>", entity_iri(&e.entity_id));
        lines.push((
            s.clone(),
            format!("<{RDF_TYPE}>"),
            format!("<{}>", ontology_iri(e.kind.name())),
        ));
        for (k, v) in &e.attributes {
            lines.push((s.clone(), format!("<{}>", attribute_iri(k)), literal(v)));
        }
    }
    for t in graph.triples() {
        lines.push((
            format!("<{}>", entity_iri(&t.subject)),
            format!("<{}>", ontology_iri(t.predicate.name())),
            format!("<{}>", entity_iri(&t.object)),
        ));
    }
    lines.sort();
    let mut out = String::new();
    for (s, p, o) in lines {
        writeln!(out, "{s} {p} {o} .").unwrap();
    }
    out
}

enum Term {
    Iri(String),
    Literal { lexical: String, datatype: Option<String> },
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with([' ', '\t']) {
            self.pos += 1;
        }
    }

    fn iri(&mut self) -> std::result::Result<String, String> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        if !rest.starts_with('<') {
            return Err(format!("expected IRI at column {}", self.pos + 1));
        }
        let end = rest.find('>').ok_or("unterminated IRI")?;
        self.pos += end + 1;
        Ok(rest[1..end].to_string())
    }

    fn term(&mut self) -> std::result::Result<Term, String> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        if rest.starts_with('<') {
            return self.iri().map(Term::Iri);
        }
        if !rest.starts_with('"') {
            return Err(format!("expected IRI or literal at column {}", self.pos + 1));
        }
        let mut lexical = String::new();
        let mut chars = rest.char_indices().skip(1);
        let close = loop {
            match chars.next() {
                None => return Err("unterminated literal".into()),
                Some((i, '"')) => break i,
                Some((_, '\\')) => match chars.next().map(|c| c.1) {
                    Some('"') => lexical.push('"'),
                    Some('\\') => lexical.push('\\'),
                    Some('n') => lexical.push('\n'),
                    Some('r') => lexical.push('\r'),
                    Some('t') => lexical.push('\t'),
                    other => return Err(format!("unsupported escape {other:?}")),
                },
                Some((_, c)) => lexical.push(c),
            }
        };
        self.pos += close + 1;
        let datatype = if self.text[self.pos..].starts_with("^^") {
            self.pos += 2;
            Some(self.iri()?)
        } else {
            None
        };
        Ok(Term::Literal { lexical, datatype })
    }

    fn end(&mut self) -> std::result::Result<(), String> {
        self.skip_ws();
        if !self.text[self.pos..].starts_with('.') {
            return Err("expected terminating `.`".into());
        }
        self.pos += 1;
        self.skip_ws();
        if self.pos != self.text.len() {
            return Err("trailing characters after `.`".into());
        }
        Ok(())
    }
}

fn parse_value(lexical: String, datatype: Option<String>) -> std::result::Result<Value, String> {
    let Some(dt) = datatype else {
        return Ok(Value::Text(lexical));
    };
    match dt.strip_prefix(XSD) {
        Some("string") => Ok(Value::Text(lexical)),
        Some("double") => lexical.parse().map(Value::Number).map_err(|e| format!("{e}")),
        Some("integer") => lexical.parse().map(Value::Integer).map_err(|e| format!("{e}")),
        Some("boolean") => lexical.parse().map(Value::Bool).map_err(|e| format!("{e}")),
        _ => Err(format!("unsupported datatype <{dt}>")),
    }
}

fn strip<'a>(iri: &'a str, prefix: &str) -> Option<&'a str> {
    iri.strip_prefix(BASE_IRI)?.strip_prefix(prefix)
}

/// Rebuilds a graph from text produced by [`to_ntriples`]. Every insert is
/// schema-checked as usual.
pub fn from_ntriples(text: &str) -> Result<KnowledgeGraph> {
    let mut kinds: BTreeMap<String, EntityKind> = BTreeMap::new();
    let mut attributes: Vec<(usize, String, String, Value)> = Vec::new();
    let mut relations: Vec<(usize, Triple)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| GraphError::NTriples { line: line_no, message };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cur = Cursor { text: line, pos: 0 };
        let subject = cur.iri().map_err(err)?;
        let predicate = cur.iri().map_err(err)?;
        let object = cur.term().map_err(err)?;
        cur.end().map_err(err)?;

        let subject_id = strip(&subject, "entity/")
            .and_then(percent_decode)
            .ok_or_else(|| err(format!("subject <{subject}> is not an entity IRI")))?;
        if predicate == RDF_TYPE {
            let Term::Iri(kind_iri) = object else {
                return Err(err("rdf:type object must be an IRI".into()));
            };
            let kind = strip(&kind_iri, "ontology#")
                .ok_or_else(|| err(format!("unknown kind <{kind_iri}>")))?
                .parse::<EntityKind>()
                .map_err(err)?;
            if kinds.insert(subject_id.clone(), kind).is_some() {
                return Err(err(format!("`{subject_id}` typed twice")));
            }
        } else if let Some(key) = strip(&predicate, "attribute#") {
            let key = percent_decode(key).ok_or_else(|| err("bad attribute key".into()))?;
            let Term::Literal { lexical, datatype } = object else {
                return Err(err("attribute object must be a literal".into()));
            };
            attributes.push((line_no, subject_id, key, parse_value(lexical, datatype).map_err(err)?));
        } else if let Some(name) = strip(&predicate, "ontology#") {
            let relation = name.parse::<Relation>().map_err(err)?;
            let Term::Iri(object_iri) = object else {
                return Err(err("relation object must be an IRI".into()));
            };
            let object_id = strip(&object_iri, "entity/")
                .and_then(percent_decode)
                .ok_or_else(|| err(format!("object <{object_iri}> is not an entity IRI")))?;
            relations.push((line_no, Triple::new(subject_id, relation, object_id)));
        } else {
            return Err(err(format!("unknown predicate <{predicate}>")));
        }
    }

    let mut entities: BTreeMap<String, Entity> = kinds
        .into_iter()
        .map(|(id, kind)| (id.clone(), Entity::new(id, kind)))
        .collect();
    for (line, id, key, value) in attributes {
        let e = entities.get_mut(&id).ok_or_else(|| GraphError::NTriples {
            line,
            message: format!("attribute on untyped entity `{id}`"),
        })?;
        e.attributes.insert(key, value);
    }
    let mut graph = KnowledgeGraph::new();
    for e in entities.into_values() {
        graph.assert_entity(e)?;
    }
    // selections are checked against hasOption, so they go last
    relations.sort_by_key(|(_, t)| t.predicate == Relation::SelectedOption);
    for (_, t) in relations {
        graph.assert_triple(t)?;
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_exports_nothing() {
        assert_eq!(to_ntriples(&KnowledgeGraph::new()), "");
    }

    #[test]
    fn one_entity_one_attribute_two_lines() {
        let mut g = KnowledgeGraph::new();
        g.assert_entity(Entity::new("F1", EntityKind::Forecast).with("quantity", 12.0))
            .unwrap();
        let text = to_ntriples(&g);
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"12.0\"^^<http://www.w3.org/2001/XMLSchema#double>"));
    }

    #[test]
    fn awkward_ids_and_strings_survive() {
        let mut g = KnowledgeGraph::new();
        g.assert_entity(
            Entity::new("café id/ü 1", EntityKind::Feedback)
                .with("reason_text", "say \"hi\"\n\\ tab\t")
                .with("count", 3i64)
                .with("flag", true),
        )
        .unwrap();
        g.assert_entity(Entity::new("F>1", EntityKind::Forecast)).unwrap();
        g.assert_triple(Triple::new("café id/ü 1", Relation::FeedbackOnForecast, "F>1"))
            .unwrap();
        let text = to_ntriples(&g);
        assert_eq!(from_ntriples(&text).unwrap(), g);
    }

    #[test]
    fn malformed_lines_are_reported() {
        assert!(matches!(
            from_ntriples("<a> <b>\n"),
            Err(GraphError::NTriples { line: 1, .. })
        ));
        let untyped = format!("<{BASE_IRI}entity/x> <{BASE_IRI}attribute#k> \"v\" .\n");
        assert!(matches!(from_ntriples(&untyped), Err(GraphError::NTriples { .. })));
    }
}
