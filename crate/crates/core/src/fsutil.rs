//! Atomic file writes and path arithmetic. Outputs land under a temp name in
//! the target directory and are renamed into place, so readers never observe
//! a half-written artifact.

use std::io;
use std::path::{Component, Path, PathBuf};

/// Writes `bytes` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = match dir {
        Some(d) => d.to_path_buf(),
        None => std::env::current_dir()?,
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// [`atomic_write`] for text content.
pub fn atomic_write_str(path: &Path, text: &str) -> io::Result<()> {
    atomic_write(path, text.as_bytes())
}

/// Expresses `target` relative to the directory `base` by component
/// comparison (no filesystem access, so the paths need not exist). Both
/// should be absolute or share the same anchoring; if they share no prefix
/// at all, `target` is returned unchanged.
pub fn relative_path(base: &Path, target: &Path) -> PathBuf {
    let bc: Vec<Component> = base.components().collect();
    let tc: Vec<Component> = target.components().collect();
    let common = bc
        .iter()
        .zip(&tc)
        .take_while(|(a, b)| a == b)
        .count();
    if common == 0 && bc.first().map_or(false, |c| matches!(c, Component::RootDir)) {
        return target.to_path_buf();
    }
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &tc[common..] {
        out.push(c);
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_and_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.txt");
        atomic_write_str(&p, "one").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "one");
        atomic_write_str(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        // No stray temp files left behind.
        let entries: Vec<_> = std::fs::read_dir(p.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn relative_path_walks_up_and_down() {
        let rel = |b: &str, t: &str| relative_path(Path::new(b), Path::new(t));
        assert_eq!(rel("/a/b", "/a/b/c.txt"), PathBuf::from("c.txt"));
        assert_eq!(rel("/a/b", "/a/d/e.txt"), PathBuf::from("../d/e.txt"));
        assert_eq!(rel("/a/b/c", "/a"), PathBuf::from("../.."));
        assert_eq!(rel("/a/b", "/a/b"), PathBuf::from("."));
        assert_eq!(rel("x/y", "x/z/f.bin"), PathBuf::from("../z/f.bin"));
    }
}
