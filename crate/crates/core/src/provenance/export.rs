//! PROV-JSON and Graphviz serialization of provenance graphs.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde_json::{json, Map, Value};

use super::{ActivityNode, ProvError, ProvGraph};

const PREFIX: &str = "cf";
const NAMESPACE: &str = "urn:cliniflow:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    ProvJson,
    Dot,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prov-json" => Ok(Self::ProvJson),
            "dot" => Ok(Self::Dot),
            other => Err(format!("unknown provenance format {other:?}")),
        }
    }
}

pub fn export_prov(graph: &ProvGraph, format: ExportFormat) -> String {
    match format {
        ExportFormat::ProvJson => {
            let mut doc = to_prov_json(graph);
            if let Value::Object(m) = &mut doc {
                m.shift_insert(0, "prefix".into(), json!({ PREFIX: NAMESPACE }));
            }
            let mut out = serde_json::to_string_pretty(&doc).expect("json values serialize");
            out.push('\n');
            out
        }
        ExportFormat::Dot => to_dot(graph),
    }
}

fn q(id: &str) -> String {
    format!("{PREFIX}:{id}")
}

fn unq(id: &str) -> Result<String, ProvError> {
    id.strip_prefix("cf:")
        .map(str::to_owned)
        .ok_or_else(|| ProvError::MalformedJson(format!("unqualified identifier {id:?}")))
}

fn to_prov_json(g: &ProvGraph) -> Value {
    let entity: Map<String, Value> = g.entities.iter().map(|e| (q(e), json!({}))).collect();

    let mut activity = Map::new();
    for (id, a) in &g.activities {
        let mut rec = Map::new();
        rec.insert("prov:label".into(), json!(a.name));
        rec.insert("cf:operation".into(), json!(q(&a.op_id)));
        rec.insert("cf:config".into(), serde_json::to_value(&a.config).expect("scalars"));
        if a.composite {
            rec.insert("cf:composite".into(), json!(true));
            if let Some(sub) = g.sub_graphs.get(id) {
                rec.insert("members".into(), to_prov_json(sub));
            }
        }
        activity.insert(q(id), Value::Object(rec));
    }

    let relation = |tag: &str, keys: (&str, &str), edges: &[(String, String)]| -> Value {
        let m: Map<String, Value> = edges
            .iter()
            .enumerate()
            .map(|(i, (a, b))| (format!("_:{tag}{i}"), json!({ keys.0: q(a), keys.1: q(b) })))
            .collect();
        Value::Object(m)
    };

    json!({
        "entity": entity,
        "activity": activity,
        "used": relation("u", ("prov:activity", "prov:entity"), &g.used),
        "wasGeneratedBy": relation("g", ("prov:entity", "prov:activity"), &g.generated),
        "wasDerivedFrom": relation("d", ("prov:generatedEntity", "prov:usedEntity"), &g.derived),
        "wasInformedBy": relation("i", ("prov:informed", "prov:informant"), &g.informed),
    })
}

/// Read back a graph written by [`export_prov`] in PROV-JSON form.
pub fn parse_prov_json(text: &str) -> Result<ProvGraph, ProvError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ProvError::MalformedJson(e.to_string()))?;
    from_prov_json(&v)
}

fn section<'a>(v: &'a Value, key: &str) -> Result<&'a Map<String, Value>, ProvError> {
    v.get(key)
        .and_then(Value::as_object)
        .ok_or_else(|| ProvError::MalformedJson(format!("missing object {key:?}")))
}

fn edges(v: &Value, key: &str, fields: (&str, &str)) -> Result<Vec<(String, String)>, ProvError> {
    section(v, key)?
        .values()
        .map(|rec| {
            let get = |f: &str| {
                rec.get(f)
                    .and_then(Value::as_str)
                    .ok_or_else(|| ProvError::MalformedJson(format!("{key} record lacks {f}")))
                    .and_then(unq)
            };
            Ok((get(fields.0)?, get(fields.1)?))
        })
        .collect()
}

fn from_prov_json(v: &Value) -> Result<ProvGraph, ProvError> {
    let mut g = ProvGraph::default();
    for id in section(v, "entity")?.keys() {
        g.entities.insert(unq(id)?);
    }
    for (qid, rec) in section(v, "activity")? {
        let id = unq(qid)?;
        let name = rec
            .get("prov:label")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned();
        let op_id = match rec.get("cf:operation").and_then(Value::as_str) {
            Some(s) => unq(s)?,
            None => String::new(),
        };
        let config = match rec.get("cf:config") {
            Some(c) => serde_json::from_value(c.clone())
                .map_err(|e| ProvError::MalformedJson(e.to_string()))?,
            None => Default::default(),
        };
        let composite = rec.get("cf:composite").and_then(Value::as_bool).unwrap_or(false);
        if let Some(members) = rec.get("members") {
            g.sub_graphs.insert(id.clone(), from_prov_json(members)?);
        }
        g.activities.insert(
            id.clone(),
            ActivityNode {
                id,
                op_id,
                name,
                config,
                composite,
            },
        );
    }
    g.used = edges(v, "used", ("prov:activity", "prov:entity"))?;
    g.generated = edges(v, "wasGeneratedBy", ("prov:entity", "prov:activity"))?;
    g.derived = edges(v, "wasDerivedFrom", ("prov:generatedEntity", "prov:usedEntity"))?;
    g.informed = edges(v, "wasInformedBy", ("prov:informed", "prov:informant"))?;
    Ok(g)
}

fn to_dot(g: &ProvGraph) -> String {
    let mut out = String::from("digraph provenance {\n  rankdir=BT;\n");
    dot_nodes(g, 1, &mut out);
    let flat = g.flatten();
    let groups: [(&str, &[(String, String)]); 4] = [
        ("used", &flat.used),
        ("wasGeneratedBy", &flat.generated),
        ("wasDerivedFrom", &flat.derived),
        ("wasInformedBy", &flat.informed),
    ];
    for (label, edges) in groups {
        for (a, b) in edges {
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\" [label=\"{label}\"];");
        }
    }
    out.push_str("}\n");
    out
}

fn dot_nodes(g: &ProvGraph, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for e in &g.entities {
        let short: String = e.chars().take(8).collect();
        let _ = writeln!(out, "{pad}\"{e}\" [shape=ellipse, label=\"{short}\"];");
    }
    let nested: IndexMap<&String, &ProvGraph> = g.sub_graphs.iter().collect();
    for (id, a) in &g.activities {
        let _ = writeln!(
            out,
            "{pad}\"{id}\" [shape=box, label=\"{}\"];",
            a.name.replace('"', "\\\"")
        );
        if let Some(sub) = nested.get(id) {
            let _ = writeln!(out, "{pad}subgraph \"cluster_{id}\" {{");
            let _ = writeln!(out, "{pad}  label=\"{}\";", a.name.replace('"', "\\\""));
            dot_nodes(sub, depth + 1, out);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}
