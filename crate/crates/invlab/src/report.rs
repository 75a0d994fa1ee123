//! Report tables (CSV) and content hashes.

use sha2::{Digest, Sha256};

use crate::error::{InvlabError, Result};

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Git-style object hash: SHA-256 of `"{kind} {len}\0"` followed by the
/// content.
pub fn object_hash(kind: &str, bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{kind} {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Blob hash of one file's content.
pub fn blob_hash(bytes: &[u8]) -> String {
    object_hash("blob", bytes)
}

/// Tree hash over named blob hashes, one `"{blob} {name}\n"` line per entry
/// in the given order.
pub fn tree_hash<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut listing = String::new();
    for (name, blob) in entries {
        listing.push_str(blob);
        listing.push(' ');
        listing.push_str(name);
        listing.push('\n');
    }
    object_hash("tree", listing.as_bytes())
}

/// Shortest decimal that round-trips, so tables are deterministic.
pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

/// One CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File name inside the bundle, e.g. `weak.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "table {}", self.name);
        self.rows.push(row);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// RFC 4180 CSV with a header row.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let fail = |e: csv::Error| InvlabError::Report {
            table: self.name.clone(),
            message: e.to_string(),
        };
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            if r.len() != self.header.len() {
                return Err(InvlabError::Report {
                    table: self.name.clone(),
                    message: format!("row has {} cells, header {}", r.len(), self.header.len()),
                });
            }
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner().map_err(|e| InvlabError::Report {
            table: self.name.clone(),
            message: e.to_string(),
        })
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_construction() {
        // sha256 of "blob 0\0"
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        assert_ne!(blob_hash(b"a"), object_hash("tree", b"a"));
    }

    #[test]
    fn tree_hash_depends_on_order_and_names() {
        let a = tree_hash([("x", "1"), ("y", "2")]);
        assert_ne!(a, tree_hash([("y", "2"), ("x", "1")]));
        assert_ne!(a, tree_hash([("x", "1"), ("z", "2")]));
        assert_eq!(a, tree_hash([("x", "1"), ("y", "2")]));
    }

    #[test]
    fn csv_quotes_per_rfc4180() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec!["1,5".into(), "say \"hi\"".into()]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "a,b\r\n\"1,5\",\"say \"\"hi\"\"\"\r\n");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1e-300, -2.5e17, 1.0 / 3.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
