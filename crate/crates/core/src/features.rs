//! Socio-demographic schema, multi-hot encoding, embedding tables and input fusion.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Category standing in for a missing or declined answer.
pub const MISSING: &str = "⟂missing⟂";

const PEMB_MAGIC: &[u8; 4] = b"PEMB";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    /// attribute name -> category; absent attributes are missing.
    pub assignments: IndexMap<String, String>,
}

impl AnnotatorProfile {
    pub fn new<I, K, V>(annotator_id: impl Into<String>, assignments: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            annotator_id: annotator_id.into(),
            assignments: assignments.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// The category for `attribute`, or [`MISSING`].
    pub fn category(&self, attribute: &str) -> &str {
        self.assignments.get(attribute).map(String::as_str).unwrap_or(MISSING)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct SocioSchema {
    attributes: Vec<Attribute>,
    offsets: Vec<usize>,
    total_width: usize,
}

impl TryFrom<Vec<Attribute>> for SocioSchema {
    type Error = Error;

    fn try_from(attributes: Vec<Attribute>) -> Result<Self> {
        SocioSchema::new(attributes)
    }
}

impl From<SocioSchema> for Vec<Attribute> {
    fn from(s: SocioSchema) -> Self {
        s.attributes
    }
}

impl SocioSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(attributes.len());
        let mut width = 0;
        let mut names = std::collections::BTreeSet::new();
        for a in &attributes {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name)));
            }
            let cats: std::collections::BTreeSet<&String> = a.categories.iter().collect();
            if cats.len() != a.categories.len() {
                return Err(Error::Schema(format!("duplicate category in attribute `{}`", a.name)));
            }
            if a.categories.is_empty() {
                return Err(Error::Schema(format!("attribute `{}` has no categories", a.name)));
            }
            offsets.push(width);
            width += a.categories.len();
        }
        Ok(Self {
            attributes,
            offsets,
            total_width: width,
        })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn total_width(&self) -> usize {
        self.total_width
    }

    /// Multi-hot vector with exactly one active slot per attribute.
    ///
    /// Unknown categories map to [`MISSING`] unless `strict` is set.
    pub fn encode(&self, profile: &AnnotatorProfile, strict: bool) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.total_width];
        for (attr, &offset) in self.attributes.iter().zip(&self.offsets) {
            let value = profile.category(&attr.name);
            let slot = match attr.categories.iter().position(|c| c == value) {
                Some(s) => s,
                None if strict => {
                    return Err(Error::UnknownCategory {
                        attribute: attr.name.clone(),
                        value: value.to_string(),
                    })
                }
                None => attr
                    .categories
                    .iter()
                    .position(|c| c == MISSING)
                    .ok_or_else(|| Error::UnknownCategory {
                        attribute: attr.name.clone(),
                        value: value.to_string(),
                    })?,
            };
            v[offset + slot] = 1.0;
        }
        Ok(v)
    }

    /// Inverse of [`encode`](Self::encode): one category per attribute.
    pub fn decode(&self, vector: &[f64]) -> Result<Vec<(String, String)>> {
        if vector.len() != self.total_width {
            return Err(Error::Contract(format!(
                "vector width {} does not match schema width {}",
                vector.len(),
                self.total_width
            )));
        }
        self.attributes
            .iter()
            .zip(&self.offsets)
            .map(|(attr, &offset)| {
                let slice = &vector[offset..offset + attr.categories.len()];
                let hot: Vec<usize> = (0..slice.len()).filter(|&i| slice[i] != 0.0).collect();
                match hot.as_slice() {
                    [i] => Ok((attr.name.clone(), attr.categories[*i].clone())),
                    _ => Err(Error::Contract(format!(
                        "attribute `{}` has {} active slots",
                        attr.name,
                        hot.len()
                    ))),
                }
            })
            .collect()
    }
}

/// Schema from observed profiles: attributes by first appearance, categories
/// sorted, plus a trailing [`MISSING`] category per attribute.
pub fn build_schema<'a, I>(profiles: I) -> Result<SocioSchema>
where
    I: IntoIterator<Item = &'a AnnotatorProfile>,
{
    let mut observed: IndexMap<&str, std::collections::BTreeSet<&str>> = IndexMap::new();
    let mut any = false;
    for p in profiles {
        any = true;
        for (attr, cat) in &p.assignments {
            let cats = observed.entry(attr.as_str()).or_default();
            if cat != MISSING {
                cats.insert(cat.as_str());
            }
        }
    }
    if !any {
        return Err(Error::Schema("cannot build a schema from zero profiles".into()));
    }
    let attributes = observed
        .into_iter()
        .map(|(name, cats)| Attribute {
            name: name.to_string(),
            categories: cats
                .into_iter()
                .map(str::to_string)
                .chain(std::iter::once(MISSING.to_string()))
                .collect(),
        })
        .collect();
    SocioSchema::new(attributes)
}

pub fn encode_multihot(profile: &AnnotatorProfile, schema: &SocioSchema) -> Result<Vec<f64>> {
    schema.encode(profile, false)
}

/// Reads `annotator_id` plus one column per attribute; empty cells are missing.
pub fn read_profiles<R: Read>(reader: R) -> Result<BTreeMap<String, AnnotatorProfile>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv("<profiles>", e))?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "annotator_id")
        .ok_or_else(|| Error::Schema("profile table lacks an `annotator_id` column".into()))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::csv("<profiles>", e))?;
        let id = row.get(id_col).unwrap_or_default().to_string();
        let assignments = headers
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != id_col)
            .filter_map(|(c, name)| {
                let v = row.get(c).unwrap_or_default().trim();
                (!v.is_empty()).then(|| (name.to_string(), v.to_string()))
            })
            .collect();
        let profile = AnnotatorProfile {
            annotator_id: id.clone(),
            assignments,
        };
        if out.insert(id.clone(), profile).is_some() {
            return Err(Error::Parse {
                row: i + 1,
                column: "annotator_id".into(),
                message: format!("duplicate annotator `{id}`"),
            });
        }
    }
    Ok(out)
}

pub fn load_profiles(path: &Path) -> Result<BTreeMap<String, AnnotatorProfile>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles(file)
}

pub fn write_profiles<W: Write>(
    writer: W,
    profiles: &BTreeMap<String, AnnotatorProfile>,
    attributes: &[String],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::csv("<profiles>", e);
    let header: Vec<&str> = std::iter::once("annotator_id").chain(attributes.iter().map(String::as_str)).collect();
    wtr.write_record(&header).map_err(io)?;
    for p in profiles.values() {
        let row: Vec<&str> = std::iter::once(p.annotator_id.as_str())
            .chain(attributes.iter().map(|a| p.assignments.get(a).map(String::as_str).unwrap_or("")))
            .collect();
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::io("<profiles>", e))?;
    Ok(())
}

/// Fixed-dimension vectors keyed by text id (or annotator id), in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Format {
                row: 0,
                message: "dimension must be at least 1".into(),
            });
        }
        Ok(Self {
            dimension,
            vectors: IndexMap::new(),
        })
    }

    /// Inserts a vector; `row` is reported in errors.
    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>, row: usize) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Format {
                row,
                message: format!("expected {} components, found {}", self.dimension, vector.len()),
            });
        }
        if let Some(i) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("row {row}: component {i} is not finite")));
        }
        let key = key.into();
        if self.vectors.contains_key(&key) {
            return Err(Error::Format {
                row,
                message: format!("duplicate key `{key}`"),
            });
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.vectors.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// CSV with a `key` column then `d0..d{n-1}`; values use shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::csv("<embeddings>", e);
        let header: Vec<String> = std::iter::once("key".to_string())
            .chain((0..self.dimension).map(|i| format!("d{i}")))
            .collect();
        wtr.write_record(&header).map_err(io)?;
        for (k, v) in &self.vectors {
            let row: Vec<String> = std::iter::once(k.clone()).chain(v.iter().map(|x| x.to_string())).collect();
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::io("<embeddings>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::csv("<embeddings>", e))?.clone();
        if headers.get(0) != Some("key") || headers.len() < 2 {
            return Err(Error::Format {
                row: 0,
                message: "header must be `key,d0,...`".into(),
            });
        }
        let mut table = Self::new(headers.len() - 1)?;
        for (i, row) in rdr.records().enumerate() {
            let row_no = i + 1;
            let row = row.map_err(|e| Error::csv("<embeddings>", e))?;
            let key = row.get(0).unwrap_or_default().to_string();
            let values = row
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| Error::Format {
                        row: row_no,
                        message: format!("`{s}` is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            table.insert(key, values, row_no)?;
        }
        Ok(table)
    }

    /// Binary layout: `PEMB`, u32 dim, u32 count, then per row a u32 key
    /// length, the UTF-8 key and `dim` f32 values. All integers little-endian.
    pub fn write_pemb<W: Write>(&self, mut writer: W) -> Result<()> {
        let io = |e| Error::io("<pemb>", e);
        writer.write_all(PEMB_MAGIC).map_err(io)?;
        writer.write_all(&(self.dimension as u32).to_le_bytes()).map_err(io)?;
        writer.write_all(&(self.vectors.len() as u32).to_le_bytes()).map_err(io)?;
        for (k, v) in &self.vectors {
            writer.write_all(&(k.len() as u32).to_le_bytes()).map_err(io)?;
            writer.write_all(k.as_bytes()).map_err(io)?;
            for &x in v {
                writer.write_all(&(x as f32).to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_pemb<R: Read>(mut reader: R) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes).map_err(|e| Error::io("<pemb>", e))?;
        let mut cur = ByteCursor { bytes: &bytes, pos: 0 };
        if cur.take(4, 0)? != PEMB_MAGIC {
            return Err(Error::Format {
                row: 0,
                message: "missing PEMB magic".into(),
            });
        }
        let dim = cur.u32(0)? as usize;
        let count = cur.u32(0)? as usize;
        let mut table = Self::new(dim)?;
        for row in 1..=count {
            let len = cur.u32(row)? as usize;
            let key = std::str::from_utf8(cur.take(len, row)?)
                .map_err(|_| Error::Format {
                    row,
                    message: "key is not UTF-8".into(),
                })?
                .to_string();
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                let b = cur.take(4, row)?;
                v.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
            }
            table.insert(key, v, row)?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format {
                row: count,
                message: "trailing bytes after last row".into(),
            });
        }
        Ok(table)
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize, row: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            row,
            message: "truncated file".into(),
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, row: usize) -> Result<u32> {
        let b = self.take(4, row)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Loads a CSV or PEMB table, sniffing the magic bytes.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(PEMB_MAGIC) {
        EmbeddingTable::read_pemb(bytes.as_slice())
    } else {
        EmbeddingTable::read_csv(bytes.as_slice())
    }
}

/// Writes PEMB when the path ends in `.pemb`, CSV otherwise.
pub fn save_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let w = std::io::BufWriter::new(file);
    if path.extension().is_some_and(|e| e == "pemb") {
        table.write_pemb(w)
    } else {
        table.write_csv(w)
    }
}

pub fn fuse(text_vec: &[f64], socio_vec: Option<&[f64]>) -> Vec<f64> {
    let mut out = text_vec.to_vec();
    if let Some(s) = socio_vec {
        out.extend_from_slice(s);
    }
    out
}
