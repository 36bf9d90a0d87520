//! JSON with 17 significant digits and the two-artifact output convention.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::config::Format;
use crate::Failure;

/// Compact JSON, but every float written as `{:.16e}`.
struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

/// Non-finite floats come out as `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Failure::Io(format!("cannot serialize report: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Failure::Io(e.to_string()))
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(ext);
    PathBuf::from(s)
}

/// Write `<out>.csv` and `<out>.json` when a prefix is given, and print the
/// artifact selected by `format` on standard output.
pub fn emit(out: Option<&Path>, format: Format, csv: &[u8], json: &str) -> Result<(), Failure> {
    if let Some(prefix) = out {
        for (path, bytes) in [
            (with_suffix(prefix, ".csv"), csv),
            (with_suffix(prefix, ".json"), json.as_bytes()),
        ] {
            std::fs::write(&path, bytes)
                .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    let mut stdout = io::stdout().lock();
    let body = match format {
        Format::Csv => csv,
        Format::Json => json.as_bytes(),
    };
    stdout
        .write_all(body)
        .and_then(|_| stdout.flush())
        .map_err(|e| Failure::Io(format!("cannot write to stdout: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_17_digits() {
        let s = to_json(&serde_json::json!({"x": 0.1, "k": 3, "nan": f64::NAN})).unwrap();
        assert_eq!(s, "{\"k\":3,\"nan\":null,\"x\":1.0000000000000001e-1}\n");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }
}
