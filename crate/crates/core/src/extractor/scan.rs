use std::io::Read;
use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use walkdir::WalkDir;

use super::SourceFile;
use crate::corpus::Language;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    /// When non-empty, a file must match at least one of these.
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

fn build(globs: &[String]) -> Result<Option<GlobSet>> {
    if globs.is_empty() {
        return Ok(None);
    }
    let mut b = GlobSetBuilder::new();
    for g in globs {
        b.add(Glob::new(g)?);
    }
    Ok(Some(b.build()?))
}

fn looks_binary(path: &Path) -> Result<bool> {
    let mut head = Vec::with_capacity(8192);
    std::fs::File::open(path)
        .and_then(|f| f.take(8192).read_to_end(&mut head))
        .map_err(|e| Error::io(path, e))?;
    Ok(head.contains(&0))
}

/// Collects `.java` and `.py` files under `root` in lexicographic path order.
/// Globs match paths relative to `root`.
pub fn scan_tree(root: &Path, opts: &ScanOptions) -> Result<Vec<SourceFile>> {
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::Invalid(format!("{} is not a directory", root.display())));
    }
    let include = build(&opts.include)?;
    let exclude = build(&opts.exclude)?;
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let Some(language) = Language::from_extension(path) else {
            continue;
        };
        let rel = path.strip_prefix(root).unwrap_or(path);
        if include.as_ref().is_some_and(|set| !set.is_match(rel)) {
            continue;
        }
        if exclude.as_ref().is_some_and(|set| set.is_match(rel)) {
            continue;
        }
        if looks_binary(path)? {
            log::warn!("skipping binary file {}", path.display());
            continue;
        }
        let display = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push(SourceFile::read(path, display, Some(language))?);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(root: &Path, rel: &str, body: &[u8]) {
        let p = root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, body).unwrap();
    }

    #[test]
    fn filters_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "b/B.java", b"class B {}");
        touch(dir.path(), "a/A.java", b"class A {}");
        touch(dir.path(), "c.py", b"x = 1");
        touch(dir.path(), "README.md", b"# hi");
        let files = scan_tree(dir.path(), &ScanOptions::default()).unwrap();
        let paths: Vec<_> = files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["a/A.java", "b/B.java", "c.py"]);
    }

    #[test]
    fn exclude_glob_and_binary_skip() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "src/test/T.java", b"class T {}");
        touch(dir.path(), "src/main/M.java", b"class M {}");
        touch(dir.path(), "src/main/bin.py", b"x\0y");
        let opts = ScanOptions {
            include: vec![],
            exclude: vec!["**/test/**".into()],
        };
        let files = scan_tree(dir.path(), &opts).unwrap();
        let paths: Vec<_> = files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["src/main/M.java"]);
    }

    #[test]
    fn empty_and_missing_roots() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_tree(dir.path(), &ScanOptions::default()).unwrap().is_empty());
        assert!(scan_tree(&dir.path().join("nope"), &ScanOptions::default()).is_err());
    }
}
