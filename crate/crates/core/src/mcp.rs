//! MCP server: newline-delimited JSON-RPC 2.0 over stdio, tools only.
//!
//! Requests are handled one at a time in arrival order. Nothing but protocol
//! frames is written to the output stream.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::pipeline::{self, ErrorPayload, RunOptions, VERSION};
use crate::policy::PolicyPreset;
use crate::rewrite::{RenderFormat, RewriteMode, WriteMode};
use crate::sources::{parse_source_list, TransportMode};

pub const PROTOCOL_VERSION: &str = "2024-11-05";

pub const TOOL_NAMES: [&str; 6] = [
    "scan_workspace",
    "analyze_references",
    "plan_reference_rewrite",
    "apply_reference_rewrite",
    "repair_paper",
    "citecheck_version",
];

const PARSE_ERROR: i64 = -32700;
const INVALID_REQUEST: i64 = -32600;
const METHOD_NOT_FOUND: i64 = -32601;
const INVALID_PARAMS: i64 = -32602;

fn prop(kind: &str, description: &str) -> Value {
    json!({"type": kind, "description": description})
}

fn enum_prop(values: &[&str], description: &str) -> Value {
    json!({"type": "string", "enum": values, "description": description})
}

fn run_props(with_mode: bool, with_write: bool) -> Map<String, Value> {
    let mut p = Map::new();
    p.insert("path".into(), prop("string", "Workspace directory or single artifact file"));
    p.insert("preset".into(), enum_prop(&["default", "strict", "lenient"], "Policy preset"));
    p.insert("preset_file".into(), prop("string", "JSON file overriding preset thresholds"));
    p.insert("sources".into(), prop("string", "Comma-separated sources: crossref,pubmed,arxiv,semantic_scholar"));
    p.insert("transport".into(), enum_prop(&["live", "replay", "record"], "HTTP transport"));
    p.insert("fixtures_dir".into(), prop("string", "Fixture directory for replay or record"));
    p.insert("max_depth".into(), prop("integer", "Scan depth limit"));
    if with_mode {
        p.insert("mode".into(), enum_prop(&["review", "replacement"], "Rewrite mode"));
        p.insert("format".into(), enum_prop(&["json", "bibtex", "text", "markdown", "endnote"], "Output format"));
        p.insert("rename_keys".into(), prop("boolean", "Regenerate citation keys"));
    }
    if with_write {
        p.insert("write".into(), enum_prop(&["preview", "sidecar", "replace"], "Write mode"));
    }
    p
}

fn schema(props: Map<String, Value>, required: &[&str]) -> Value {
    json!({"type": "object", "properties": props, "required": required, "additionalProperties": false})
}

pub fn tool_descriptors() -> Vec<Value> {
    let mut scan = Map::new();
    scan.insert("path".into(), prop("string", "Workspace directory or single file"));
    scan.insert("max_depth".into(), prop("integer", "Scan depth limit"));
    let mut apply = Map::new();
    apply.insert("path".into(), prop("string", "Workspace root the plan was made against"));
    apply.insert("plan".into(), prop("object", "Plan object, or a report containing one"));
    apply.insert("write".into(), enum_prop(&["preview", "sidecar", "replace"], "Write mode"));
    vec![
        json!({"name": "scan_workspace", "description": "Rank candidate paper artifacts under a path and select the primary one.", "inputSchema": schema(scan, &["path"])}),
        json!({"name": "analyze_references", "description": "Extract and verify references; report statuses, evidence, lint, health and the policy decision.", "inputSchema": schema(run_props(false, false), &["path"])}),
        json!({"name": "plan_reference_rewrite", "description": "Analyze and produce a rewrite plan with patches, renderings and safety counts. Writes nothing.", "inputSchema": schema(run_props(true, false), &["path"])}),
        json!({"name": "apply_reference_rewrite", "description": "Apply a previously produced plan in preview, sidecar or replace mode.", "inputSchema": schema(apply, &["path", "plan"])}),
        json!({"name": "repair_paper", "description": "Full pipeline: scan, extract, verify, decide, plan and optionally write.", "inputSchema": schema(run_props(true, true), &["path"])}),
        json!({"name": "citecheck_version", "description": "Report the tool version.", "inputSchema": schema(Map::new(), &[])}),
    ]
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> Result<Option<&'a str>> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(Error::InvalidArgument(format!("`{key}` must be a string"))),
    }
}

fn bad(key: &str, v: &str) -> Error {
    Error::InvalidArgument(format!("invalid `{key}`: {v}"))
}

/// Build run options from tool arguments. Mirrors the CLI flags.
pub fn options_from_args(args: &Map<String, Value>) -> Result<RunOptions> {
    let path = str_arg(args, "path")?.ok_or_else(|| Error::InvalidArgument("`path` is required".into()))?;
    let mut o = RunOptions::new(path);
    if let Some(m) = str_arg(args, "mode")? {
        o.mode = RewriteMode::parse(m).ok_or_else(|| bad("mode", m))?;
    }
    if let Some(w) = str_arg(args, "write")? {
        o.write = WriteMode::parse(w).ok_or_else(|| bad("write", w))?;
    }
    if let Some(f) = str_arg(args, "format")? {
        o.format = RenderFormat::parse(f)?;
    }
    if let Some(p) = str_arg(args, "preset")? {
        o.preset = PolicyPreset::by_name(p)?;
    }
    if let Some(f) = str_arg(args, "preset_file")? {
        o.preset = load_preset_file(o.preset, Path::new(f))?;
    }
    if let Some(s) = str_arg(args, "sources")? {
        o.sources = Some(parse_source_list(s)?);
    }
    if let Some(t) = str_arg(args, "transport")? {
        o.transport = Some(TransportMode::parse(t).ok_or_else(|| bad("transport", t))?);
    }
    if let Some(d) = str_arg(args, "fixtures_dir")? {
        o.fixtures_dir = Some(PathBuf::from(d));
    }
    match args.get("rename_keys") {
        None | Some(Value::Null) => {}
        Some(Value::Bool(b)) => o.rename_keys = *b,
        Some(_) => return Err(Error::InvalidArgument("`rename_keys` must be a boolean".into())),
    }
    match args.get("max_depth") {
        None | Some(Value::Null) => {}
        Some(v) => match v.as_u64() {
            Some(d) if d > 0 => o.max_depth = d as usize,
            _ => return Err(Error::InvalidArgument("`max_depth` must be a positive integer".into())),
        },
    }
    Ok(o)
}

pub fn load_preset_file(base: PolicyPreset, path: &Path) -> Result<PolicyPreset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    base.with_overrides(&serde_json::from_str(&text)?)
}

/// Text payload and error flag of one tool call.
pub fn call_tool(name: &str, args: &Map<String, Value>) -> Option<(String, bool)> {
    let result: Result<(String, bool)> = match name {
        "citecheck_version" => Ok((format!("{}\n", serde_json::to_string(&json!({"name": pipeline::TOOL_NAME, "version": VERSION})).unwrap()), false)),
        "scan_workspace" => (|| {
            let o = options_from_args(args)?;
            let r = pipeline::scan(&o)?;
            Ok((pretty(&r), false))
        })(),
        "analyze_references" | "plan_reference_rewrite" | "repair_paper" => (|| {
            let o = options_from_args(args)?;
            let c = o.connectors()?;
            let r = match name {
                "analyze_references" => pipeline::analyze(&o, &c)?,
                "plan_reference_rewrite" => pipeline::plan(&o, &c)?,
                _ => pipeline::repair(&o, &c)?,
            };
            Ok((r.output(), r.error.is_some()))
        })(),
        "apply_reference_rewrite" => (|| {
            let path = str_arg(args, "path")?.ok_or_else(|| Error::InvalidArgument("`path` is required".into()))?;
            let plan_value = args.get("plan").ok_or_else(|| Error::InvalidArgument("`plan` is required".into()))?;
            let plan = pipeline::parse_plan(&plan_value.to_string())?;
            let write = match str_arg(args, "write")? {
                Some(w) => WriteMode::parse(w).ok_or_else(|| bad("write", w))?,
                None => WriteMode::Preview,
            };
            let r = pipeline::apply_plan(Path::new(path), &plan, write)?;
            Ok((pretty(&r), false))
        })(),
        _ => return None,
    };
    Some(result.unwrap_or_else(|e| (error_text(&e), true)))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn error_text(e: &Error) -> String {
    pretty(&json!({"error": ErrorPayload::from(e)}))
}

fn response(id: Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

fn error_response(id: Value, code: i64, message: &str) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message}})
}

/// Handle one frame. `None` means no reply is due (notifications).
pub fn handle_message(line: &str) -> Option<Value> {
    let msg: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return Some(error_response(Value::Null, PARSE_ERROR, &format!("parse error: {e}"))),
    };
    let Some(obj) = msg.as_object() else {
        return Some(error_response(Value::Null, INVALID_REQUEST, "request must be an object"));
    };
    let id = obj.get("id").cloned();
    let Some(method) = obj.get("method").and_then(Value::as_str) else {
        return id.map(|id| error_response(id, INVALID_REQUEST, "missing method"));
    };
    // notifications get no reply
    let id = id?;
    let params = obj.get("params").cloned().unwrap_or(Value::Null);
    Some(match method {
        "initialize" => {
            let version = params
                .get("protocolVersion")
                .and_then(Value::as_str)
                .unwrap_or(PROTOCOL_VERSION)
                .to_string();
            response(
                id,
                json!({
                    "protocolVersion": version,
                    "capabilities": {"tools": {"listChanged": false}},
                    "serverInfo": {"name": pipeline::TOOL_NAME, "version": VERSION},
                }),
            )
        }
        "ping" => response(id, json!({})),
        "tools/list" => response(id, json!({"tools": tool_descriptors()})),
        "tools/call" => {
            let Some(name) = params.get("name").and_then(Value::as_str) else {
                return Some(error_response(id, INVALID_PARAMS, "tools/call needs a tool name"));
            };
            let args = match params.get("arguments") {
                None | Some(Value::Null) => Map::new(),
                Some(Value::Object(m)) => m.clone(),
                Some(_) => return Some(error_response(id, INVALID_PARAMS, "arguments must be an object")),
            };
            match call_tool(name, &args) {
                Some((text, is_error)) => response(
                    id,
                    json!({"content": [{"type": "text", "text": text}], "isError": is_error}),
                ),
                None => error_response(id, METHOD_NOT_FOUND, &format!("unknown tool: {name}")),
            }
        }
        other => error_response(id, METHOD_NOT_FOUND, &format!("method not found: {other}")),
    })
}

/// Serve until the input closes.
pub fn serve<R: BufRead, W: Write>(input: R, mut output: W) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = handle_message(&line) {
            writeln!(output, "{reply}")?;
            output.flush()?;
        }
    }
    Ok(())
}
