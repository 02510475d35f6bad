//! Standards lookup tables: PDSCH MCS tables and the FR1 PRB table.
//!
//! The tables live as plain-text files under `data/`, are compiled into the
//! binary, and are checked against SHA-256 digests when first parsed. A
//! directory holding the same four files can be loaded instead with
//! [`TableSet::load_dir`]; the digests must still match.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::decimal::parse_decimal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum McsTableId {
    /// TS 38.214 Table 5.1.3.1-1, indices 0..=28.
    #[serde(rename = "QAM64")]
    Qam64,
    /// TS 38.214 Table 5.1.3.1-2, indices 0..=27.
    #[serde(rename = "QAM256")]
    Qam256,
    /// TS 38.214 Table 5.1.3.1-3, indices 0..=28.
    #[serde(rename = "QAM64_LOW_SE")]
    Qam64LowSe,
}

impl McsTableId {
    pub const ALL: [McsTableId; 3] = [McsTableId::Qam64, McsTableId::Qam256, McsTableId::Qam64LowSe];

    pub fn name(self) -> &'static str {
        match self {
            McsTableId::Qam64 => "QAM64",
            McsTableId::Qam256 => "QAM256",
            McsTableId::Qam64LowSe => "QAM64_LOW_SE",
        }
    }

    /// Highest defined (non-reserved) index.
    pub fn max_index(self) -> u32 {
        match self {
            McsTableId::Qam64 | McsTableId::Qam64LowSe => 28,
            McsTableId::Qam256 => 27,
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            McsTableId::Qam64 => "mcs_qam64.csv",
            McsTableId::Qam256 => "mcs_qam256.csv",
            McsTableId::Qam64LowSe => "mcs_qam64_lowse.csv",
        }
    }
}

impl fmt::Display for McsTableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for McsTableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        McsTableId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown MCS table {s:?} (expected QAM64, QAM256 or QAM64_LOW_SE)")))
    }
}

/// One row of an MCS table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McsEntry {
    pub index: u32,
    /// Modulation order, bits per symbol.
    pub q_m: u32,
    /// Target code rate R, exact (x/1024 with x possibly a half-integer).
    pub code_rate: BigRational,
}

impl McsEntry {
    pub fn spectral_efficiency(&self) -> BigRational {
        &self.code_rate * BigInt::from(self.q_m)
    }

    /// Code rate times 1024, as written in the standard.
    pub fn code_rate_x1024(&self) -> BigRational {
        &self.code_rate * BigInt::from(1024)
    }
}

const PRB_FILE: &str = "prb_fr1.csv";

const EMBEDDED: [(&str, &str, &str); 4] = [
    (
        "mcs_qam64.csv",
        include_str!("../../data/mcs_qam64.csv"),
        "d8dcd5397f6c0f567c75eb194fd5794f2d62eb485593b1b3011248eb38c61711",
    ),
    (
        "mcs_qam256.csv",
        include_str!("../../data/mcs_qam256.csv"),
        "6e05d744bfb49ac311ff056763a22c7fc985ac9056e58368335e5833963c00cd",
    ),
    (
        "mcs_qam64_lowse.csv",
        include_str!("../../data/mcs_qam64_lowse.csv"),
        "491432b9bba67ab706c70c9367fe3a023ec61b82d1c03bb79684dfcbb29b4123",
    ),
    (
        PRB_FILE,
        include_str!("../../data/prb_fr1.csv"),
        "5a4499d555104e519cec42714142212b232f0df656caefebac30cf7d0940cb64",
    ),
];

fn expected_digest(name: &str) -> &'static str {
    EMBEDDED
        .iter()
        .find(|(file, _, _)| *file == name)
        .map(|(_, _, digest)| *digest)
        .expect("table file names are fixed")
}

fn verify_digest(name: &str, text: &str) -> Result<()> {
    let actual = Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect::<String>();
    if actual != expected_digest(name) {
        return Err(Error::TableData {
            name: name.to_string(),
            reason: format!("checksum mismatch (got {actual})"),
        });
    }
    Ok(())
}

fn data_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split(',').map(str::trim).collect()))
        }
    })
}

#[derive(Debug, Clone)]
pub struct TableSet {
    mcs: BTreeMap<McsTableId, Vec<McsEntry>>,
    prb: BTreeMap<(u32, u32), Option<u32>>,
}

impl TableSet {
    /// The tables compiled into this build.
    pub fn embedded() -> &'static TableSet {
        static TABLES: OnceLock<TableSet> = OnceLock::new();
        TABLES.get_or_init(|| {
            let files: Vec<(&str, String)> =
                EMBEDDED.iter().map(|(n, t, _)| (*n, t.to_string())).collect();
            TableSet::from_files(&files).expect("embedded standards tables are valid")
        })
    }

    /// Load the four table files from `dir`, verifying each against its digest.
    pub fn load_dir(dir: &Path) -> Result<TableSet> {
        let mut files = Vec::new();
        for (name, _, _) in EMBEDDED {
            let path = dir.join(name);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            files.push((name, text));
        }
        TableSet::from_files(&files)
    }

    fn from_files(files: &[(&str, String)]) -> Result<TableSet> {
        let mut mcs = BTreeMap::new();
        let mut prb = BTreeMap::new();
        for (name, text) in files {
            verify_digest(name, text)?;
            if *name == PRB_FILE {
                prb = parse_prb(name, text)?;
            } else {
                let id = McsTableId::ALL
                    .into_iter()
                    .find(|id| id.file_name() == *name)
                    .expect("table file names are fixed");
                mcs.insert(id, parse_mcs(id, text)?);
            }
        }
        Ok(TableSet { mcs, prb })
    }

    pub fn mcs_table(&self, table: McsTableId) -> &[McsEntry] {
        &self.mcs[&table]
    }

    pub fn mcs(&self, table: McsTableId, index: u32) -> Result<&McsEntry> {
        self.mcs_table(table)
            .get(index as usize)
            .ok_or_else(|| Error::ReservedIndex {
                table: table.name().to_string(),
                index,
            })
    }

    pub fn prb(&self, bandwidth_mhz: u32, scs_khz: u32) -> Result<u32> {
        self.prb
            .get(&(scs_khz, bandwidth_mhz))
            .copied()
            .flatten()
            .ok_or(Error::UnsupportedConfiguration {
                bandwidth_mhz,
                scs_khz,
            })
    }

    /// Every defined (bandwidth MHz, SCS kHz, N_RB) triple.
    pub fn prb_entries(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.prb
            .iter()
            .filter_map(|(&(scs, bw), n)| n.map(|n| (bw, scs, n)))
    }
}

fn parse_mcs(id: McsTableId, text: &str) -> Result<Vec<McsEntry>> {
    let fail = |reason: String| Error::TableData {
        name: id.file_name().to_string(),
        reason,
    };
    let mut entries = Vec::new();
    for (line, cols) in data_rows(text) {
        let [index, q_m, rate] = cols[..] else {
            return Err(fail(format!("line {line}: expected 3 columns")));
        };
        let index: u32 = index
            .parse()
            .map_err(|_| fail(format!("line {line}: bad index {index:?}")))?;
        let q_m: u32 = q_m
            .parse()
            .map_err(|_| fail(format!("line {line}: bad q_m {q_m:?}")))?;
        let x1024 = parse_decimal(rate).map_err(|e| fail(format!("line {line}: {e}")))?;
        if index as usize != entries.len() {
            return Err(fail(format!("line {line}: index {index} out of sequence")));
        }
        if ![2, 4, 6, 8].contains(&q_m) {
            return Err(fail(format!("line {line}: q_m {q_m} not in {{2,4,6,8}}")));
        }
        let code_rate = x1024 / BigInt::from(1024);
        if code_rate <= BigRational::from_integer(0.into()) || code_rate >= BigRational::from_integer(1.into()) {
            return Err(fail(format!("line {line}: code rate outside (0, 1)")));
        }
        entries.push(McsEntry {
            index,
            q_m,
            code_rate,
        });
    }
    if entries.len() != id.max_index() as usize + 1 {
        return Err(fail(format!(
            "expected {} rows, found {}",
            id.max_index() + 1,
            entries.len()
        )));
    }
    Ok(entries)
}

fn parse_prb(name: &str, text: &str) -> Result<BTreeMap<(u32, u32), Option<u32>>> {
    let fail = |reason: String| Error::TableData {
        name: name.to_string(),
        reason,
    };
    let mut map = BTreeMap::new();
    for (line, cols) in data_rows(text) {
        let [scs, bw, n] = cols[..] else {
            return Err(fail(format!("line {line}: expected 3 columns")));
        };
        let scs: u32 = scs.parse().map_err(|_| fail(format!("line {line}: bad scs")))?;
        let bw: u32 = bw.parse().map_err(|_| fail(format!("line {line}: bad bandwidth")))?;
        let n = match n {
            "NA" => None,
            n => Some(n.parse().map_err(|_| fail(format!("line {line}: bad n_rb")))?),
        };
        if map.insert((scs, bw), n).is_some() {
            return Err(fail(format!("line {line}: duplicate row")));
        }
    }
    Ok(map)
}

/// Look up an MCS entry in the embedded tables.
pub fn mcs_lookup(table: McsTableId, index: u32) -> Result<McsEntry> {
    TableSet::embedded().mcs(table, index).cloned()
}

/// Transmission bandwidth configuration N_RB for an FR1 channel.
pub fn prb_lookup(bandwidth_mhz: u32, scs_khz: u32) -> Result<u32> {
    TableSet::embedded().prb(bandwidth_mhz, scs_khz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn mcs_examples() {
        let top = mcs_lookup(McsTableId::Qam256, 27).unwrap();
        assert_eq!((top.q_m, top.code_rate.clone()), (8, ratio(948, 1024)));
        let low = mcs_lookup(McsTableId::Qam64, 0).unwrap();
        assert_eq!((low.q_m, low.code_rate), (2, ratio(120, 1024)));
        let half = mcs_lookup(McsTableId::Qam256, 20).unwrap();
        assert_eq!(half.code_rate_x1024(), ratio(1365, 2));
    }

    #[test]
    fn reserved_indices_are_rejected() {
        for index in 28..32 {
            assert!(matches!(
                mcs_lookup(McsTableId::Qam256, index),
                Err(Error::ReservedIndex { .. })
            ));
        }
        for table in [McsTableId::Qam64, McsTableId::Qam64LowSe] {
            assert!(mcs_lookup(table, 28).is_ok());
            assert!(mcs_lookup(table, 29).is_err());
        }
    }

    #[test]
    fn table_sizes() {
        let tables = TableSet::embedded();
        assert_eq!(tables.mcs_table(McsTableId::Qam64).len(), 29);
        assert_eq!(tables.mcs_table(McsTableId::Qam256).len(), 28);
        assert_eq!(tables.mcs_table(McsTableId::Qam64LowSe).len(), 29);
    }

    #[test]
    fn spectral_efficiency_order() {
        // The 64QAM table has one inversion in the standard itself:
        // index 16 is 4 x 658 and index 17 is 6 x 438.
        for table in McsTableId::ALL {
            let entries = TableSet::embedded().mcs_table(table);
            for pair in entries.windows(2) {
                let (a, b) = (pair[0].spectral_efficiency(), pair[1].spectral_efficiency());
                if table == McsTableId::Qam64 && pair[0].index == 16 {
                    assert!(b < a);
                } else {
                    assert!(b > a, "{table} {} -> {}", pair[0].index, pair[1].index);
                }
            }
        }
    }

    #[test]
    fn prb_examples() {
        assert_eq!(prb_lookup(40, 30).unwrap(), 106);
        assert_eq!(prb_lookup(100, 30).unwrap(), 273);
        assert_eq!(prb_lookup(20, 15).unwrap(), 106);
        let err = prb_lookup(5, 60).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("5 MHz") && msg.contains("60 kHz"), "{msg}");
        assert!(prb_lookup(40, 120).is_err());
    }

    #[test]
    fn table_names_parse() {
        assert_eq!("qam256".parse::<McsTableId>().unwrap(), McsTableId::Qam256);
        assert_eq!("QAM64_LOW_SE".parse::<McsTableId>().unwrap(), McsTableId::Qam64LowSe);
        assert!("QAM1024".parse::<McsTableId>().is_err());
    }

    #[test]
    fn load_dir_checks_digests() {
        let dir = tempfile::tempdir().unwrap();
        for (name, text, _) in EMBEDDED {
            std::fs::write(dir.path().join(name), text).unwrap();
        }
        let loaded = TableSet::load_dir(dir.path()).unwrap();
        assert_eq!(loaded.prb(40, 30).unwrap(), 106);

        let tampered = EMBEDDED[1].1.replace("8,948", "8,950");
        std::fs::write(dir.path().join(EMBEDDED[1].0), tampered).unwrap();
        let err = TableSet::load_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }
}
