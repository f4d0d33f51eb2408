//! Sample renderings and the parsers that read actions back out of them.
//!
//! XML pseudo-scaffold grammar:
//!
//! ```text
//! <conversation>
//! <system>TEXT</system>
//! <user>TEXT</user>
//! <assistant>
//! <thought>TEXT</thought>                  only when the turn has text
//! <TOOL><ARG>VALUE</ARG>...</TOOL>         one element per tool call
//! </assistant>
//! <observation>TEXT</observation>          one per tool result
//! </conversation>
//! ```
//!
//! String argument values are escaped text. Other JSON values carry
//! `type="json"` and hold their JSON text. Arguments that are not a JSON
//! object are kept verbatim as `<TOOL raw="true">TEXT</TOOL>`. Tool or
//! argument names that are not valid XML names use `<tool_call name="..">`
//! and `<arg name="..">`.

use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::agent::tool_specs;
use crate::llm::{wire, ChatMessage, Role};

/// Tool arguments compared by meaning: valid JSON objects by value,
/// anything else by exact text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arguments {
    Json(Map<String, Value>),
    Raw(String),
}

impl Arguments {
    pub fn parse(raw: &str) -> Self {
        match serde_json::from_str::<Value>(raw) {
            Ok(Value::Object(map)) => Arguments::Json(map),
            _ => Arguments::Raw(raw.to_string()),
        }
    }
}

pub type ActionSeq = Vec<(String, Arguments)>;

/// Normalizes (tool, raw arguments) pairs for comparison.
pub fn normalize_actions(actions: &[(String, String)]) -> ActionSeq {
    actions
        .iter()
        .map(|(tool, args)| (tool.clone(), Arguments::parse(args)))
        .collect()
}

pub fn render_function_calling(messages: &[ChatMessage]) -> Value {
    json!({
        "messages": messages.iter().map(wire::message_json).collect::<Vec<_>>(),
        "tools": tool_specs().iter().map(wire::tool_json).collect::<Vec<_>>(),
    })
}

pub fn parse_function_calling(rendered: &Value) -> Result<ActionSeq, String> {
    let messages = rendered["messages"]
        .as_array()
        .ok_or("rendered conversation has no messages array")?;
    let mut out = Vec::new();
    for m in messages {
        if m["role"] != "assistant" {
            continue;
        }
        let Some(calls) = m.get("tool_calls") else {
            continue;
        };
        for call in calls.as_array().ok_or("tool_calls is not an array")? {
            let name = call["function"]["name"]
                .as_str()
                .ok_or("tool call without a name")?;
            let args = call["function"]["arguments"]
                .as_str()
                .ok_or("tool call without string arguments")?;
            out.push((name.to_string(), Arguments::parse(args)));
        }
    }
    Ok(out)
}

fn escape(s: &str, attribute: bool) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            '\n' | '\t' if !attribute => out.push(c),
            c if (c as u32) < 0x20 || c == '\u{7f}' => out.push_str(&format!("&#{};", c as u32)),
            c => out.push(c),
        }
    }
    out
}

fn is_xml_name(s: &str) -> bool {
    let mut chars = s.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
        && !s.to_ascii_lowercase().starts_with("xml")
}

fn open_tag(fallback: &str, name: &str, extra: &str) -> (String, String) {
    if is_xml_name(name) && name != fallback {
        (format!("<{name}{extra}>"), format!("</{name}>"))
    } else {
        (
            format!("<{fallback} name=\"{}\"{extra}>", escape(name, true)),
            format!("</{fallback}>"),
        )
    }
}

fn render_call(out: &mut String, name: &str, raw_args: &str) {
    match Arguments::parse(raw_args) {
        Arguments::Json(map) => {
            let (open, close) = open_tag("tool_call", name, "");
            out.push_str(&open);
            for (key, value) in &map {
                let (kind, text) = match value {
                    Value::String(s) => ("", s.clone()),
                    other => (" type=\"json\"", other.to_string()),
                };
                let (o, c) = open_tag("arg", key, kind);
                out.push_str(&o);
                out.push_str(&escape(&text, false));
                out.push_str(&c);
            }
            out.push_str(&close);
        }
        Arguments::Raw(raw) => {
            let (open, close) = open_tag("tool_call", name, " raw=\"true\"");
            out.push_str(&open);
            out.push_str(&escape(&raw, false));
            out.push_str(&close);
        }
    }
    out.push('\n');
}

pub fn render_xml(messages: &[ChatMessage]) -> String {
    let mut out = String::from("<conversation>\n");
    for m in messages {
        match m.role {
            Role::System | Role::User => {
                let tag = m.role.as_str();
                out.push_str(&format!("<{tag}>{}</{tag}>\n", escape(&m.content, false)));
            }
            Role::Tool => {
                out.push_str(&format!(
                    "<observation>{}</observation>\n",
                    escape(&m.content, false)
                ));
            }
            Role::Assistant => {
                out.push_str("<assistant>\n");
                if !m.content.is_empty() {
                    out.push_str(&format!(
                        "<thought>{}</thought>\n",
                        escape(&m.content, false)
                    ));
                }
                for call in &m.tool_calls {
                    render_call(&mut out, &call.name, &call.arguments);
                }
                out.push_str("</assistant>\n");
            }
        }
    }
    out.push_str("</conversation>\n");
    out
}

fn attr(e: &BytesStart<'_>, key: &str) -> Result<Option<String>, String> {
    match e.try_get_attribute(key).map_err(|e| e.to_string())? {
        Some(a) => unescape(&a.value).map(Some),
        None => Ok(None),
    }
}

fn element_name(e: &BytesStart<'_>, fallback: &str) -> Result<String, String> {
    let tag = e.name().as_ref().to_string();
    if tag == fallback {
        attr(e, "name")?.ok_or_else(|| format!("<{fallback}> without a name attribute"))
    } else {
        Ok(tag)
    }
}

/// Predefined entities and numeric character references. Control
/// characters are accepted as references, which strict XML 1.0 forbids,
/// so that any string survives the round trip.
fn resolve_reference(name: &str) -> Result<char, String> {
    let code = if let Some(hex) = name.strip_prefix("#x") {
        u32::from_str_radix(hex, 16).ok()
    } else if let Some(dec) = name.strip_prefix('#') {
        dec.parse().ok()
    } else {
        return match name {
            "amp" => Ok('&'),
            "lt" => Ok('<'),
            "gt" => Ok('>'),
            "quot" => Ok('"'),
            "apos" => Ok('\''),
            other => Err(format!("unknown entity &{other};")),
        };
    };
    code.and_then(char::from_u32)
        .ok_or_else(|| format!("invalid character reference &{name};"))
}

fn unescape(raw: &str) -> Result<String, String> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(at) = rest.find('&') {
        out.push_str(&rest[..at]);
        let end = rest[at..]
            .find(';')
            .ok_or_else(|| format!("unterminated reference in {raw:?}"))?;
        out.push(resolve_reference(&rest[at + 1..at + end])?);
        rest = &rest[at + end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Reads text up to the closing tag of the current element, resolving
/// entity and character references.
fn read_text(reader: &mut Reader<&[u8]>) -> Result<String, String> {
    let mut text = String::new();
    loop {
        match reader.read_event().map_err(|e| e.to_string())? {
            XmlEvent::Text(t) => text.push_str(&t),
            XmlEvent::GeneralRef(r) => text.push(resolve_reference(&r)?),
            XmlEvent::End(_) => return Ok(text),
            XmlEvent::Eof => return Err("unexpected end of document".into()),
            other => return Err(format!("unexpected markup in text: {other:?}")),
        }
    }
}

fn read_call(
    reader: &mut Reader<&[u8]>,
    start: &BytesStart<'_>,
) -> Result<(String, Arguments), String> {
    let name = element_name(start, "tool_call")?;
    if attr(start, "raw")?.as_deref() == Some("true") {
        return Ok((name, Arguments::Raw(read_text(reader)?)));
    }
    let mut map = Map::new();
    loop {
        match reader.read_event().map_err(|e| e.to_string())? {
            XmlEvent::Start(e) => {
                let key = element_name(&e, "arg")?;
                let is_json = attr(&e, "type")?.as_deref() == Some("json");
                let text = read_text(reader)?;
                let value = if is_json {
                    serde_json::from_str(&text).map_err(|e| format!("argument {key}: {e}"))?
                } else {
                    Value::String(text)
                };
                map.insert(key, value);
            }
            XmlEvent::Empty(e) => {
                map.insert(element_name(&e, "arg")?, Value::String(String::new()));
            }
            XmlEvent::Text(t) if t.trim().is_empty() => {}
            XmlEvent::End(_) => return Ok((name, Arguments::Json(map))),
            XmlEvent::Eof => return Err("unexpected end of document".into()),
            other => return Err(format!("unexpected content in tool call: {other:?}")),
        }
    }
}

pub fn parse_xml(rendered: &str) -> Result<ActionSeq, String> {
    let mut reader = Reader::from_str(rendered);
    let mut out = Vec::new();
    let mut in_assistant = false;
    loop {
        match reader.read_event().map_err(|e| e.to_string())? {
            XmlEvent::Start(e) => {
                let tag = e.name().as_ref().to_string();
                match (in_assistant, tag.as_str()) {
                    (false, "conversation") => {}
                    (false, "assistant") => in_assistant = true,
                    (false, _) | (true, "thought") => {
                        read_text(&mut reader)?;
                    }
                    (true, _) => out.push(read_call(&mut reader, &e)?),
                }
            }
            XmlEvent::Empty(e) if in_assistant => {
                out.push((element_name(&e, "tool_call")?, Arguments::Json(Map::new())));
            }
            XmlEvent::End(e) if e.name().as_ref() == "assistant" => in_assistant = false,
            XmlEvent::Eof => return Ok(out),
            _ => {}
        }
    }
}
