//! App configuration: device and value bindings, and the URI wire format
//! `http://host/appname:<name>/<key>:<value>/.../`.

use std::collections::BTreeMap;
use std::fmt;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

/// 128-bit device identifier, stored as 32 lowercase hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DeviceId(String);

impl DeviceId {
    /// Accepts 32 hex digits, optionally with dashes (UUID style).
    pub fn parse(text: &str) -> Option<DeviceId> {
        let hex: String = text.chars().filter(|c| *c != '-').collect();
        if hex.len() == 32
            && hex.chars().all(|c| c.is_ascii_hexdigit())
            && !text.starts_with('-')
            && !text.ends_with('-')
        {
            Some(DeviceId(hex.to_ascii_lowercase()))
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Fixed id of a built-in receiver. Shared by every app in a home.
    pub fn builtin(receiver: &str) -> DeviceId {
        let n: u8 = match receiver {
            "location" => 1,
            "clock" => 2,
            _ => 0xff,
        };
        DeviceId(format!("{:032x}", n))
    }
}

impl TryFrom<String> for DeviceId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        DeviceId::parse(&s).ok_or_else(|| format!("`{s}` is not a 128-bit hex device id"))
    }
}

impl From<DeviceId> for String {
    fn from(d: DeviceId) -> String {
        d.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Configuration {
    pub app_name: String,
    #[serde(default)]
    pub device_bindings: BTreeMap<String, DeviceId>,
    #[serde(default)]
    pub value_bindings: BTreeMap<String, Value>,
}

impl Configuration {
    /// Renders the URI form; `parse_config_uri` reads it back unchanged.
    pub fn to_uri(&self, base: &str) -> String {
        use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
        const SEG: &AsciiSet = &CONTROLS.add(b' ').add(b'/').add(b':').add(b'%').add(b'?').add(b'#').add(b'"');
        let mut out = format!("{}/appname:{}/", base.trim_end_matches('/'), utf8_percent_encode(&self.app_name, SEG));
        let mut pairs: BTreeMap<&str, String> = BTreeMap::new();
        for (k, v) in &self.device_bindings {
            pairs.insert(k, v.to_string());
        }
        for (k, v) in &self.value_bindings {
            pairs.insert(k, v.to_string());
        }
        for (k, v) in pairs {
            out.push_str(&format!("{k}:{}/", utf8_percent_encode(&v, SEG)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("malformed configuration uri: {0}")]
    MalformedUri(String),
    #[error("configuration uri has no `appname:` segment")]
    MissingAppName,
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::MalformedUri(_) => "MalformedUri",
            ConfigError::MissingAppName => "MissingAppName",
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn valid_escapes(raw: &str) -> bool {
    let b = raw.as_bytes();
    b.iter()
        .enumerate()
        .all(|(i, c)| *c != b'%' || (i + 2 < b.len() && b[i + 1].is_ascii_hexdigit() && b[i + 2].is_ascii_hexdigit()))
}

pub fn parse_config_uri(uri: &str) -> Result<Configuration, ConfigError> {
    let bad = |m: &str| ConfigError::MalformedUri(m.to_string());
    let parsed = url::Url::parse(uri).map_err(|e| ConfigError::MalformedUri(e.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(bad("scheme must be http or https"));
    }
    if parsed.host_str().is_none_or(str::is_empty) {
        return Err(bad("missing host"));
    }
    // Work on the raw path: the parsed form would silently resolve `.`/`..`.
    let after_scheme = &uri[uri.find("://").map(|i| i + 3).ok_or_else(|| bad("missing authority"))?..];
    let path = match after_scheme.find('/') {
        Some(i) => &after_scheme[i..],
        None => return Err(ConfigError::MissingAppName),
    };
    if path.contains(['?', '#']) {
        return Err(bad("query strings and fragments are not part of the format"));
    }
    if path == "/" {
        return Err(ConfigError::MissingAppName);
    }
    let Some(body) = path[1..].strip_suffix('/') else {
        return Err(bad("every segment must end with `/`"));
    };
    let mut app_name = None;
    let mut config = Configuration::default();
    let mut seen = std::collections::BTreeSet::new();
    for (i, seg) in body.split('/').enumerate() {
        if seg.is_empty() {
            return Err(bad("empty path segment"));
        }
        let mut parts = seg.split(':');
        let (Some(key), Some(raw), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ConfigError::MalformedUri(format!("segment `{seg}` is not `key:value`")));
        };
        if !valid_escapes(raw) {
            return Err(ConfigError::MalformedUri(format!("segment `{seg}` has a broken percent escape")));
        }
        let value = percent_decode_str(raw)
            .decode_utf8()
            .map_err(|_| ConfigError::MalformedUri(format!("segment `{seg}` is not valid UTF-8")))?
            .into_owned();
        if value.is_empty() {
            return Err(ConfigError::MalformedUri(format!("segment `{seg}` has an empty value")));
        }
        if key == "appname" {
            if i != 0 {
                return Err(bad("`appname:` must be the first segment"));
            }
            app_name = Some(value);
            continue;
        }
        if i == 0 {
            // Keep looking so a later appname segment is reported as misplaced.
            if body.split('/').any(|s| s.starts_with("appname:")) {
                return Err(bad("`appname:` must be the first segment"));
            }
            return Err(ConfigError::MissingAppName);
        }
        if !is_identifier(key) {
            return Err(ConfigError::MalformedUri(format!("key `{key}` is not an identifier")));
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::MalformedUri(format!("key `{key}` appears twice")));
        }
        match DeviceId::parse(&value) {
            Some(id) => {
                config.device_bindings.insert(key.to_string(), id);
            }
            None => {
                config.value_bindings.insert(key.to_string(), Value::parse_literal(&value));
            }
        }
    }
    config.app_name = app_name.ok_or(ConfigError::MissingAppName)?;
    Ok(config)
}
