use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Step-norm file text: `# fingerprint=` and `# n_steps=` headers, then one
/// value per line in `{:.15e}` form.
pub fn format_step_norms(fingerprint: &str, n_steps: u64, norms: &[f64]) -> String {
    let mut s = String::with_capacity(24 * norms.len() + 64);
    let _ = writeln!(s, "# fingerprint={fingerprint}");
    let _ = writeln!(s, "# n_steps={n_steps}");
    for v in norms {
        let _ = writeln!(s, "{v:.15e}");
    }
    s
}

/// Samples and header fields of a step-norm file.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNormFile {
    pub fingerprint: Option<String>,
    pub n_steps: Option<u64>,
    pub values: Vec<f64>,
}

pub fn parse_step_norms(path: &Path, text: &str) -> Result<StepNormFile> {
    let mut out = StepNormFile {
        fingerprint: None,
        n_steps: None,
        values: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            if let Some((k, v)) = header.trim().split_once('=') {
                match k.trim() {
                    "fingerprint" => out.fingerprint = Some(v.trim().to_string()),
                    "n_steps" => out.n_steps = v.trim().parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        let v = line.parse::<f64>().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: 1,
            message: format!("`{line}`: {e}"),
        })?;
        out.values.push(v);
    }
    if out.values.is_empty() {
        return Err(Error::Empty(path.to_path_buf()));
    }
    Ok(out)
}

pub fn read_step_norms(path: impl AsRef<Path>) -> Result<StepNormFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_step_norms(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let xs = [0.0, 1.0 / 3.0, 2.5e-300, 7.0e12, std::f64::consts::PI];
        let text = format_step_norms("abc", 42, &xs);
        let f = parse_step_norms(Path::new("x"), &text).unwrap();
        assert_eq!(f.fingerprint.as_deref(), Some("abc"));
        assert_eq!(f.n_steps, Some(42));
        // 16 significant digits may round the last bit; 1e-15 relative is the bar
        for (a, b) in xs.iter().zip(&f.values) {
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn diagnostics() {
        let err = parse_step_norms(Path::new("f.txt"), "# n_steps=2\n1.0\nabc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
        assert!(matches!(parse_step_norms(Path::new("f"), "# only\n"), Err(Error::Empty(_))));
    }
}
