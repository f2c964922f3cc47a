//! Whitespace-separated list files. Blank lines and `#` comments are skipped;
//! relative paths resolve against the list file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// One line: a path followed by free-form fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub path: PathBuf,
    pub fields: Vec<String>,
}

pub fn read(path: &Path, min_fields: usize, what: &str) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse(&text, base, min_fields, what).with_context(|| format!("in {}", path.display()))
}

pub fn parse(text: &str, base: &Path, min_fields: usize, what: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let first = parts.next().expect("non-empty line");
        let fields: Vec<String> = parts.map(str::to_string).collect();
        if fields.len() < min_fields {
            bail!("line {}: expected {what}", n + 1);
        }
        out.push(Entry { path: base.join(first), fields });
    }
    if out.is_empty() {
        bail!("no entries");
    }
    Ok(out)
}

/// Image id from a path: the file stem.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let e = parse("# header\na.pgm s1\n\n/abs/b.pgm s2 extra # note\n", Path::new("/data"), 1, "path subject").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].path, PathBuf::from("/data/a.pgm"));
        assert_eq!(e[1].path, PathBuf::from("/abs/b.pgm"));
        assert_eq!(e[1].fields, vec!["s2", "extra"]);
        assert!(parse("a.pgm\n", Path::new("."), 1, "path subject").is_err());
        assert!(parse("# nothing\n", Path::new("."), 0, "path").is_err());
    }
}
