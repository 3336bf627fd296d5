//! The browser action space and its two textual forms: the canonical
//! signature used for deduplication, and the `{"type", "args"}` wire document.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Separator between signature fields. Forbidden in element refs and key names.
pub const SIGNATURE_DELIMITER: char = '|';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("parse error at {at}: {message}")]
    Parse { at: String, message: String },
    #[error("unknown action variant `{0}`")]
    UnknownVariant(String),
}

/// Opaque identifier of an interactable element on a page.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElementRef(String);

impl ElementRef {
    pub fn new(raw: impl Into<String>) -> Result<Self, String> {
        let raw = raw.into();
        if raw.is_empty() {
            return Err("element ref must not be empty".into());
        }
        if raw.contains(SIGNATURE_DELIMITER) {
            return Err(format!("element ref `{raw}` contains reserved `{SIGNATURE_DELIMITER}`"));
        }
        Ok(Self(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for ElementRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ElementRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        ElementRef::new(raw).map_err(D::Error::custom)
    }
}

/// One atomic browser operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Navigate {
        url: String,
    },
    NavigateBack,
    NavigateForward,
    Click {
        element: ElementRef,
    },
    Type {
        element: ElementRef,
        text: String,
    },
    Select {
        element: ElementRef,
        option: String,
    },
    Hover {
        element: ElementRef,
    },
    Drag {
        source: ElementRef,
        target: ElementRef,
    },
    PressKey {
        key: String,
    },
    TabNew,
    TabSelect {
        id: usize,
    },
    TabClose {
        id: usize,
    },
    /// Terminates the run with a textual answer.
    Stop {
        answer: String,
    },
}

impl Action {
    pub fn click(element: &str) -> Self {
        Action::Click { element: ElementRef::new(element).expect("valid element ref") }
    }

    pub fn type_text(element: &str, text: impl Into<String>) -> Self {
        Action::Type { element: ElementRef::new(element).expect("valid element ref"), text: text.into() }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Action::Navigate { .. } => "NAVIGATE",
            Action::NavigateBack => "NAVIGATE_BACK",
            Action::NavigateForward => "NAVIGATE_FORWARD",
            Action::Click { .. } => "CLICK",
            Action::Type { .. } => "TYPE",
            Action::Select { .. } => "SELECT",
            Action::Hover { .. } => "HOVER",
            Action::Drag { .. } => "DRAG",
            Action::PressKey { .. } => "PRESS_KEY",
            Action::TabNew => "TAB_NEW",
            Action::TabSelect { .. } => "TAB_SELECT",
            Action::TabClose { .. } => "TAB_CLOSE",
            Action::Stop { .. } => "STOP",
        }
    }

    /// Element refs the action touches, in declaration order.
    pub fn elements(&self) -> Vec<&ElementRef> {
        match self {
            Action::Click { element }
            | Action::Type { element, .. }
            | Action::Select { element, .. }
            | Action::Hover { element } => vec![element],
            Action::Drag { source, target } => vec![source, target],
            _ => Vec::new(),
        }
    }

    /// The primary element ref, or `None` for element-free variants.
    pub fn element(&self) -> Option<&ElementRef> {
        self.elements().into_iter().next()
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, Action::Stop { .. })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&action_signature(self))
    }
}

/// Canonical, injective textual form of an action.
///
/// Fields follow the variant name in declaration order, separated by
/// [`SIGNATURE_DELIMITER`]. TYPE text is written as `<byte-len>:<text>` so a
/// delimiter inside the typed text cannot collide with another signature.
/// Every other free-text field is the last field of its variant.
pub fn action_signature(a: &Action) -> String {
    let d = SIGNATURE_DELIMITER;
    let name = a.variant_name();
    match a {
        Action::Navigate { url } => format!("{name}{d}{url}"),
        Action::NavigateBack | Action::NavigateForward | Action::TabNew => name.to_string(),
        Action::Click { element } | Action::Hover { element } => format!("{name}{d}{element}"),
        Action::Type { element, text } => format!("{name}{d}{element}{d}{}:{text}", text.len()),
        Action::Select { element, option } => format!("{name}{d}{element}{d}{option}"),
        Action::Drag { source, target } => format!("{name}{d}{source}{d}{target}"),
        Action::PressKey { key } => format!("{name}{d}{key}"),
        Action::TabSelect { id } | Action::TabClose { id } => format!("{name}{d}{id}"),
        Action::Stop { answer } => format!("{name}{d}{answer}"),
    }
}

/// Wire document for an action: `{"type": <VARIANT>, "args": {...}}`.
pub fn render_action(a: &Action) -> Value {
    let args = match a {
        Action::Navigate { url } => json!({ "url": url }),
        Action::NavigateBack | Action::NavigateForward | Action::TabNew => json!({}),
        Action::Click { element } | Action::Hover { element } => json!({ "element": element }),
        Action::Type { element, text } => json!({ "element": element, "text": text }),
        Action::Select { element, option } => json!({ "element": element, "option": option }),
        Action::Drag { source, target } => json!({ "source": source, "target": target }),
        Action::PressKey { key } => json!({ "key": key }),
        Action::TabSelect { id } | Action::TabClose { id } => json!({ "id": id }),
        Action::Stop { answer } => json!({ "answer": answer }),
    };
    json!({ "type": a.variant_name(), "args": args })
}

pub fn render_action_string(a: &Action) -> String {
    render_action(a).to_string()
}

/// Parses a wire document from text. Syntax errors carry line and column.
pub fn parse_action(doc: &str) -> Result<Action, ActionError> {
    let value: Value = serde_json::from_str(doc).map_err(|e| ActionError::Parse {
        at: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    parse_action_value(&value)
}

/// Parses an already-decoded wire document. Schema errors carry a JSON path.
pub fn parse_action_value(value: &Value) -> Result<Action, ActionError> {
    let obj = value.as_object().ok_or_else(|| schema_err("$", "expected an object"))?;
    let kind = obj
        .get("type")
        .ok_or_else(|| schema_err("$.type", "missing required field"))?
        .as_str()
        .ok_or_else(|| schema_err("$.type", "expected a string"))?;
    let empty = Map::new();
    let args = match obj.get("args") {
        None => &empty,
        Some(v) => v.as_object().ok_or_else(|| schema_err("$.args", "expected an object"))?,
    };
    let args = Args(args);
    let action = match kind {
        "NAVIGATE" => {
            let url = args.string("url")?;
            match url::Url::parse(&url) {
                Ok(parsed) if !parsed.cannot_be_a_base() => {}
                _ => return Err(schema_err("$.args.url", "expected an absolute URL")),
            }
            Action::Navigate { url }
        }
        "NAVIGATE_BACK" => Action::NavigateBack,
        "NAVIGATE_FORWARD" => Action::NavigateForward,
        "CLICK" => Action::Click { element: args.element("element")? },
        "TYPE" => Action::Type { element: args.element("element")?, text: args.string("text")? },
        "SELECT" => Action::Select { element: args.element("element")?, option: args.string("option")? },
        "HOVER" => Action::Hover { element: args.element("element")? },
        "DRAG" => Action::Drag { source: args.element("source")?, target: args.element("target")? },
        "PRESS_KEY" => {
            let key = args.string("key")?;
            if key.is_empty() || key.contains(SIGNATURE_DELIMITER) {
                return Err(schema_err("$.args.key", "key name must be non-empty and delimiter-free"));
            }
            Action::PressKey { key }
        }
        "TAB_NEW" => Action::TabNew,
        "TAB_SELECT" => Action::TabSelect { id: args.index("id")? },
        "TAB_CLOSE" => Action::TabClose { id: args.index("id")? },
        "STOP" => Action::Stop { answer: args.string("answer")? },
        other => return Err(ActionError::UnknownVariant(other.to_string())),
    };
    Ok(action)
}

fn schema_err(at: &str, message: &str) -> ActionError {
    ActionError::Parse { at: at.to_string(), message: message.to_string() }
}

struct Args<'a>(&'a Map<String, Value>);

impl Args<'_> {
    fn field(&self, name: &str) -> Result<&Value, ActionError> {
        self.0.get(name).ok_or_else(|| schema_err(&format!("$.args.{name}"), "missing required field"))
    }

    fn string(&self, name: &str) -> Result<String, ActionError> {
        self.field(name)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| schema_err(&format!("$.args.{name}"), "expected a string"))
    }

    fn element(&self, name: &str) -> Result<ElementRef, ActionError> {
        let raw = self.string(name)?;
        ElementRef::new(raw).map_err(|m| schema_err(&format!("$.args.{name}"), &m))
    }

    fn index(&self, name: &str) -> Result<usize, ActionError> {
        self.field(name)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| schema_err(&format!("$.args.{name}"), "expected a non-negative integer"))
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        render_action(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(d)?;
        parse_action_value(&value).map_err(D::Error::custom)
    }
}
