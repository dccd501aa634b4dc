use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use vecurve_core::Result;

/// Embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command_line: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(argv: &[String], seed: Option<u64>, config: impl Serialize) -> Self {
        Self {
            tool: "vecurve",
            version: env!("CARGO_PKG_VERSION"),
            command_line: argv
                .iter()
                .enumerate()
                .map(|(i, a)| if i == 0 { program_name(a) } else { quote(a) })
                .collect::<Vec<_>>()
                .join(" "),
            seed,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
        }
    }

    /// `#`-prefixed header lines for CSV artifacts (without the `#`).
    pub fn comment_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command_line),
        ];
        if let Some(seed) = self.seed {
            lines.push(format!("seed: {seed}"));
        }
        lines.push(format!("config: {}", self.config));
        lines
    }
}

fn program_name(arg0: &str) -> String {
    Path::new(arg0).file_name().map_or_else(|| arg0.to_string(), |n| n.to_string_lossy().into_owned())
}

fn quote(arg: &str) -> String {
    if !arg.is_empty() && arg.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=:,".contains(c)) {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

/// Result object with its provenance alongside.
#[derive(Serialize)]
pub struct WithProvenance<'a, T: Serialize> {
    #[serde(flatten)]
    pub result: T,
    pub provenance: &'a Provenance,
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, result: T, provenance: &Provenance) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, &WithProvenance { result, provenance })?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn print_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{body}");
}
