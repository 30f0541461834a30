//! File helpers shared by the readers and writers of every module.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Opens `path` for buffered reading, transparently decompressing gzip input.
///
/// Compression is detected from the magic bytes, not the file extension.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = read_prefix(&mut file, &mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == GZIP_MAGIC {
        Ok(Box::new(BufReader::with_capacity(
            1 << 20,
            MultiGzDecoder::new(file),
        )))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 20, file)))
    }
}

fn read_prefix(file: &mut File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

pub fn create_output(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

/// Runs `body` against a fresh buffered writer for `path` and flushes it.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let mut out = create_output(path)?;
    body(&mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Iterates the lines of a text file, stripping the trailing `\n` / `\r\n`.
/// Each item carries its 1-based line number.
pub fn numbered_lines<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a Path,
) -> impl Iterator<Item = Result<(u64, String)>> + 'a {
    reader.lines().enumerate().map(move |(i, line)| {
        line.map(|mut l| {
            if l.ends_with('\r') {
                l.pop();
            }
            (i as u64 + 1, l)
        })
        .map_err(|e| Error::io(path, e))
    })
}

/// Reads a tab-separated file with a named header row into a column index
/// plus raw records. Lines starting with `#` are treated as comments.
pub fn read_named_tsv(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let input = open_input(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .quoting(false)
        .flexible(false)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(|e| csv_error(path, e))?);
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::data(format!("{}: line {line}: {err}", path.display()))
}

/// Locates `name` in a header row.
pub fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| {
        Error::data(format!(
            "{}: missing column {name:?} (have {})",
            path.display(),
            header.join(", ")
        ))
    })
}

pub(crate) fn parse_field<T: std::str::FromStr>(raw: &str, what: &str, ctx: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::data(format!("{ctx}: cannot parse {what} from {raw:?}")))
}

/// Parses an optional numeric cell; empty cells are absent.
pub(crate) fn parse_opt<T: std::str::FromStr>(
    raw: &str,
    what: &str,
    ctx: &str,
) -> Result<Option<T>> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(raw, what, ctx).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;

    #[test]
    fn reads_plain_and_gzip_alike() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("a.tsv");
        let gz = dir.path().join("a.tsv.gz");
        std::fs::write(&plain, "x\ty\n1\t2\n").unwrap();
        let mut enc = GzEncoder::new(File::create(&gz).unwrap(), Compression::default());
        enc.write_all(b"x\ty\n1\t2\n").unwrap();
        enc.finish().unwrap();

        let read = |p: &Path| {
            let mut s = String::new();
            open_input(p).unwrap().read_to_string(&mut s).unwrap();
            s
        };
        assert_eq!(read(&plain), read(&gz));
    }

    #[test]
    fn missing_file_names_path() {
        let err = open_input(Path::new("/nonexistent/zzz.tsv")).err().unwrap();
        assert!(err.to_string().contains("/nonexistent/zzz.tsv"));
    }

    #[test]
    fn named_tsv_skips_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        std::fs::write(&p, "# meta\na\tb\n1\t2\n").unwrap();
        let (h, rows) = read_named_tsv(&p).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows.len(), 1);
        assert_eq!(column(&h, "b", &p).unwrap(), 1);
        assert!(column(&h, "c", &p).is_err());
    }
}
