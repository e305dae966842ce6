use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde_json::Value;

use crate::{CliError, Format};

/// A finished report: echoed inputs plus a JSON body and a CSV table.
pub struct Report {
    pub command: &'static str,
    pub seed: u64,
    /// Echoed inputs, in display order.
    pub inputs: Vec<(String, String)>,
    pub body: Value,
    pub csv_header: Vec<&'static str>,
    pub csv_rows: Vec<Vec<String>>,
}

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

impl Report {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => {
                let mut obj = serde_json::Map::new();
                obj.insert("command".into(), Value::from(self.command));
                obj.insert("seed".into(), Value::from(self.seed));
                let inputs = self.inputs.iter().map(|(k, v)| (k.clone(), Value::from(v.as_str()))).collect();
                obj.insert("inputs".into(), Value::Object(inputs));
                if let Value::Object(body) = &self.body {
                    obj.extend(body.clone());
                }
                let mut s = serde_json::to_string_pretty(&Value::Object(obj)).map_err(|e| CliError::Input(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
            Format::Csv => {
                let mut out = Vec::new();
                writeln!(out, "# command={}", self.command).expect("vec write");
                writeln!(out, "# seed={}", self.seed).expect("vec write");
                for (k, v) in &self.inputs {
                    writeln!(out, "# {k}={v}").expect("vec write");
                }
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record(&self.csv_header).map_err(|e| CliError::Input(e.to_string()))?;
                for row in &self.csv_rows {
                    w.write_record(row).map_err(|e| CliError::Input(e.to_string()))?;
                }
                w.flush().map_err(|e| CliError::Input(e.to_string()))?;
                drop(w);
                String::from_utf8(out).map_err(|e| CliError::Input(e.to_string()))
            }
        }
    }

    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<(), CliError> {
        let text = self.render(format)?;
        write_text(out, &text)
    }
}

pub fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut f = File::create(path).map_err(|e| io_err(path, e))?;
            f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
        }
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Input(e.to_string())),
    }
}

/// Shortest round-trip text for a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}
