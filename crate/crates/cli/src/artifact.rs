//! Model files.
//!
//! Binary container, all integers and floats little-endian:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 8     | magic `BSVDMODL`                          |
//! | 4     | format version (u32, currently 1)         |
//! | 8 x 3 | `m`, `n`, `k` (u64)                       |
//! | ...   | `U` (m x k), `V` (n x k), `bu` (m), `bi` (n) as f64, row-major |
//!
//! The sidecar `<model>.meta` is UTF-8 text:
//!
//! ```text
//! blocksvd-model-meta 1
//! variant biased-svd
//! global_mean 3.5298
//! users 943
//! <raw id>\t<training count>     (one line per user, dense index order)
//! items 1682
//! <raw id>\t<training count>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use blocksvd_core::{FactorModel, IdMap, KernelVariant, TrainingStats};

pub const MAGIC: &[u8; 8] = b"BSVDMODL";
pub const VERSION: u32 = 1;
const META_HEADER: &str = "blocksvd-model-meta 1";

/// A trained model with everything `evaluate` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: FactorModel,
    pub variant: KernelVariant,
    pub stats: TrainingStats,
    pub users: IdMap,
    pub items: IdMap,
}

pub fn meta_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_model<W: Write>(out: &mut W, model: &FactorModel) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for d in [model.n_users, model.n_items, model.k] {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    let values = model
        .user_factors
        .iter()
        .chain(&model.item_factors)
        .chain(&model.user_bias)
        .chain(&model.item_bias);
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_model<R: Read>(input: &mut R) -> Result<FactorModel> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).context("reading model header")?;
    ensure!(&magic == MAGIC, "not a blocksvd model file");
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    ensure!(version == VERSION, "unsupported model format version {version}");
    let mut b8 = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        input.read_exact(&mut b8)?;
        *d = usize::try_from(u64::from_le_bytes(b8))?;
    }
    let [m, n, k] = dims;
    let mut model = FactorModel::zeros(m, n, k);
    let slots = model
        .user_factors
        .iter_mut()
        .chain(model.item_factors.iter_mut())
        .chain(model.user_bias.iter_mut())
        .chain(model.item_bias.iter_mut());
    for v in slots {
        input.read_exact(&mut b8).context("model file is truncated")?;
        *v = f64::from_le_bytes(b8);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    ensure!(rest.is_empty(), "{} trailing bytes after model data", rest.len());
    Ok(model)
}

fn write_meta<W: Write>(out: &mut W, saved: &SavedModel) -> Result<()> {
    writeln!(out, "{META_HEADER}")?;
    writeln!(out, "variant {}", saved.variant)?;
    writeln!(out, "global_mean {}", saved.stats.global_mean)?;
    for (label, ids, counts) in [
        ("users", &saved.users, &saved.stats.user_counts),
        ("items", &saved.items, &saved.stats.item_counts),
    ] {
        writeln!(out, "{label} {}", ids.len())?;
        for (id, count) in ids.ids().iter().zip(counts) {
            ensure!(
                !id.contains(['\t', '\n', '\r']),
                "id {id:?} cannot be stored in the model sidecar"
            );
            writeln!(out, "{id}\t{count}")?;
        }
    }
    Ok(())
}

struct Meta {
    variant: KernelVariant,
    global_mean: f64,
    users: IdMap,
    user_counts: Vec<u32>,
    items: IdMap,
    item_counts: Vec<u32>,
}

fn read_meta<R: BufRead>(input: R) -> Result<Meta> {
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .with_context(|| format!("model sidecar ends before {what}"))
    };
    ensure!(next("header")? == META_HEADER, "unrecognized model sidecar header");
    let field = |line: String, key: &str| -> Result<String> {
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => bail!("expected `{key} ...` in model sidecar, got {line:?}"),
        }
    };
    let variant: KernelVariant = field(next("variant")?, "variant")?.parse()?;
    let global_mean: f64 = field(next("global_mean")?, "global_mean")?.parse()?;
    let mut table = |key: &str| -> Result<(IdMap, Vec<u32>)> {
        let n: usize = field(next(key)?, key)?.parse()?;
        let mut ids = Vec::with_capacity(n);
        let mut counts = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next(key)?;
            let (id, c) = line
                .split_once('\t')
                .with_context(|| format!("bad {key} row {line:?} in model sidecar"))?;
            ids.push(id.to_string());
            counts.push(c.parse()?);
        }
        Ok((IdMap::from_ids(ids)?, counts))
    };
    let (users, user_counts) = table("users")?;
    let (items, item_counts) = table("items")?;
    Ok(Meta {
        variant,
        global_mean,
        users,
        user_counts,
        items,
        item_counts,
    })
}

pub fn save(path: &Path, saved: &SavedModel) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_model(&mut out, &saved.model)?;
    out.flush()?;
    let meta = meta_path(path);
    let file = fs::File::create(&meta).with_context(|| format!("creating {}", meta.display()))?;
    let mut out = BufWriter::new(file);
    write_meta(&mut out, saved)?;
    out.flush()?;
    Ok(())
}

/// Loads the binary and its sidecar and checks that they describe the same
/// dimensions.
pub fn load(path: &Path) -> Result<SavedModel> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let model = read_model(&mut BufReader::new(file)).with_context(|| path.display().to_string())?;
    let meta_file = meta_path(path);
    let file = fs::File::open(&meta_file).with_context(|| format!("opening {}", meta_file.display()))?;
    let meta = read_meta(BufReader::new(file)).with_context(|| meta_file.display().to_string())?;
    if meta.users.len() != model.n_users || meta.items.len() != model.n_items {
        return Err(blocksvd_core::Error::DimensionMismatch(format!(
            "model is {}x{} but its id tables list {} users and {} items",
            model.n_users,
            model.n_items,
            meta.users.len(),
            meta.items.len()
        ))
        .into());
    }
    Ok(SavedModel {
        model,
        variant: meta.variant,
        stats: TrainingStats {
            global_mean: meta.global_mean,
            user_counts: meta.user_counts,
            item_counts: meta.item_counts,
        },
        users: meta.users,
        items: meta.items,
    })
}
