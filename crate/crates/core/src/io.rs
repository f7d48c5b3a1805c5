//! File formats: PPM images, PFM depth maps, loss traces, and the versioned
//! checkpoint container.
//!
//! None of the writers emit timestamps or other environment-dependent bytes;
//! identical runs produce identical files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{init_model, DaCCNModel, ModelConfig};
use crate::tensor::{Element, Tensor};

// ── PPM (binary P6, 8-bit) ───────────────────────────────────────────

/// Writes a `[3,H,W]` or `[1,3,H,W]` image in [0,1] as binary PPM.
pub fn write_ppm<E: Element>(path: &Path, image: &Tensor<E>) -> Result<()> {
    let (c, h, w) = match image.shape() {
        [c, h, w] => (*c, *h, *w),
        [1, c, h, w] => (*c, *h, *w),
        s => return Err(Error::dim(format!("write_ppm wants [3,H,W], got {s:?}"))),
    };
    if c != 3 {
        return Err(Error::dim("write_ppm wants 3 channels"));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P6\n{w} {h}\n255\n")?;
    let v = image.values();
    let plane = h * w;
    let mut row = Vec::with_capacity(3 * w);
    for i in 0..h {
        row.clear();
        for j in 0..w {
            for ch in 0..3 {
                let x = v[ch * plane + i * w + j].to_f64().clamp(0.0, 1.0);
                row.push((x * 255.0).round() as u8);
            }
        }
        out.write_all(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a binary P6 PPM back into a `[3,H,W]` tensor in [0,1].
pub fn read_ppm<E: Element>(path: &Path) -> Result<Tensor<E>> {
    let data = fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while fields.len() < 4 && pos < data.len() {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| Error::Parse("ppm header".into()))?.to_string());
    }
    if fields.len() != 4 || fields[0] != "P6" {
        return Err(Error::Parse("not a binary PPM (P6)".into()));
    }
    let w: usize = fields[1].parse().map_err(|_| Error::Parse("ppm width".into()))?;
    let h: usize = fields[2].parse().map_err(|_| Error::Parse("ppm height".into()))?;
    let maxval: usize = fields[3].parse().map_err(|_| Error::Parse("ppm maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Parse("only 8-bit PPM supported".into()));
    }
    pos += 1; // single whitespace after maxval
    let need = 3 * h * w;
    if data.len() < pos + need {
        return Err(Error::Parse("truncated PPM payload".into()));
    }
    let mut values = vec![E::ZERO; need];
    let plane = h * w;
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                let byte = data[pos + (i * w + j) * 3 + c];
                values[c * plane + i * w + j] = E::from_f64(byte as f64 / 255.0);
            }
        }
    }
    Tensor::from_vec(&[3, h, w], values)
}

// ── PFM (grayscale, little-endian, scale -1.0) ───────────────────────

/// Writes a `[H,W]`-shaped (or `[1,1,H,W]`) depth map as grayscale PFM.
/// PFM stores 32-bit floats bottom row first; the negative scale marks
/// little-endian payloads.
pub fn write_pfm<E: Element>(path: &Path, depth: &Tensor<E>) -> Result<()> {
    let (h, w) = match depth.shape() {
        [h, w] => (*h, *w),
        [1, 1, h, w] => (*h, *w),
        s => return Err(Error::dim(format!("write_pfm wants [H,W], got {s:?}"))),
    };
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    let v = depth.values();
    for i in (0..h).rev() {
        for j in 0..w {
            let bits = (v[i * w + j].to_f64() as f32).to_le_bytes();
            out.write_all(&bits)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a grayscale little-endian PFM into a `[H,W]` tensor.
pub fn read_pfm<E: Element>(path: &Path) -> Result<Tensor<E>> {
    let data = fs::read(path)?;
    let header_end = {
        let mut newlines = 0;
        let mut idx = 0;
        for (i, &b) in data.iter().enumerate() {
            if b == b'\n' {
                newlines += 1;
                if newlines == 3 {
                    idx = i + 1;
                    break;
                }
            }
        }
        idx
    };
    if header_end == 0 {
        return Err(Error::Parse("truncated PFM header".into()));
    }
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| Error::Parse("pfm header".into()))?;
    let mut lines = header.lines();
    let magic = lines.next().unwrap_or("");
    if magic != "Pf" {
        return Err(Error::Parse("only grayscale PFM (Pf) supported".into()));
    }
    let dims: Vec<usize> = lines
        .next()
        .unwrap_or("")
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    if dims.len() != 2 {
        return Err(Error::Parse("pfm dimensions".into()));
    }
    let (w, h) = (dims[0], dims[1]);
    let scale: f64 = lines
        .next()
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| Error::Parse("pfm scale".into()))?;
    if scale >= 0.0 {
        return Err(Error::Parse("big-endian PFM not supported".into()));
    }
    let need = 4 * h * w;
    if data.len() < header_end + need {
        return Err(Error::Parse("truncated PFM payload".into()));
    }
    let mut values = vec![E::ZERO; h * w];
    for i in 0..h {
        let src_row = h - 1 - i;
        for j in 0..w {
            let off = header_end + (src_row * w + j) * 4;
            let bits: [u8; 4] = data[off..off + 4].try_into().expect("length checked");
            values[i * w + j] = E::from_f64(f32::from_le_bytes(bits) as f64);
        }
    }
    Tensor::from_vec(&[h, w], values)
}

// ── Loss trace ───────────────────────────────────────────────────────

/// Appends rows "iteration,L,L_p,L_s" under a fixed header.
pub struct TraceWriter {
    out: BufWriter<fs::File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        writeln!(out, "iteration,loss,photometric,smoothness")?;
        Ok(TraceWriter { out })
    }

    pub fn record(&mut self, iteration: usize, loss: f64, lp: f64, ls: f64) -> Result<()> {
        writeln!(self.out, "{iteration},{loss},{lp},{ls}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

// ── Checkpoint container ─────────────────────────────────────────────

const CHECKPOINT_MAGIC: &str = "DACCN-CKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the model as a versioned text container. Values are serialized as
/// raw IEEE-754 bits in hex, so a load/save cycle is bit-exact.
pub fn save_checkpoint<E: Element>(path: &Path, model: &DaCCNModel<E>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}")?;
    writeln!(out, "precision {}", E::NAME)?;
    let cfg_toml = toml::to_string(&model.cfg)
        .map_err(|e| Error::Parse(format!("config serialization: {e}")))?;
    writeln!(out, "config-lines {}", cfg_toml.lines().count())?;
    for line in cfg_toml.lines() {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "params {}", model.params.entries().len())?;
    for p in model.params.entries() {
        write!(out, "tensor {} {}", p.name, p.shape.len())?;
        for d in &p.shape {
            write!(out, " {d}")?;
        }
        writeln!(out)?;
        let mut first = true;
        for v in &p.values {
            if first {
                write!(out, "{:x}", v.to_bits_u64())?;
                first = false;
            } else {
                write!(out, " {:x}", v.to_bits_u64())?;
            }
        }
        writeln!(out)?;
    }
    writeln!(out, "end")?;
    out.flush()?;
    Ok(())
}

/// Loads a checkpoint saved by [`save_checkpoint`] with the same element
/// type. Version, precision, and parameter layout are all validated.
pub fn load_checkpoint<E: Element>(path: &Path) -> Result<DaCCNModel<E>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: &str| Error::Checkpoint(format!("{msg} ({})", path.display()));

    let magic = lines.next().ok_or_else(|| bad("empty file"))?;
    if magic != format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}") {
        return Err(bad(&format!(
            "unsupported container header '{magic}', expected '{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}'"
        )));
    }
    let precision = lines
        .next()
        .and_then(|l| l.strip_prefix("precision "))
        .ok_or_else(|| bad("missing precision"))?;
    if precision != E::NAME {
        return Err(bad(&format!(
            "precision mismatch: file has {precision}, loader wants {}",
            E::NAME
        )));
    }
    let n_cfg: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("config-lines "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing config section"))?;
    let cfg_text: String = (0..n_cfg)
        .map(|_| lines.next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let cfg: ModelConfig =
        toml::from_str(&cfg_text).map_err(|e| bad(&format!("config parse: {e}")))?;

    // Skeleton provides the expected layout; stored tensors must match.
    let mut model: DaCCNModel<E> = init_model(&cfg)?;
    let n_params: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("params "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing params count"))?;
    if n_params != model.params.entries().len() {
        return Err(bad(&format!(
            "parameter count mismatch: file has {n_params}, config wants {}",
            model.params.entries().len()
        )));
    }
    for idx in 0..n_params {
        let head = lines.next().ok_or_else(|| bad("truncated tensor header"))?;
        let mut tok = head.split_whitespace();
        if tok.next() != Some("tensor") {
            return Err(bad("malformed tensor header"));
        }
        let name = tok.next().ok_or_else(|| bad("missing tensor name"))?;
        let rank: usize = tok
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing tensor rank"))?;
        let shape: Vec<usize> = (0..rank)
            .map(|_| tok.next().and_then(|v| v.parse().ok()))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("malformed tensor shape"))?;
        let expect = &model.params.entries()[idx];
        if expect.name != name || expect.shape != shape {
            return Err(bad(&format!(
                "layout mismatch at #{idx}: file has {name} {shape:?}, config wants {} {:?}",
                expect.name, expect.shape
            )));
        }
        let payload = lines.next().ok_or_else(|| bad("truncated tensor payload"))?;
        let values: Vec<E> = payload
            .split_whitespace()
            .map(|h| u64::from_str_radix(h, 16).ok().map(E::from_bits_u64))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("malformed tensor payload"))?;
        if values.len() != expect.values.len() {
            return Err(bad(&format!("value count mismatch in {name}")));
        }
        model.params.entries_mut()[idx].values = values;
    }
    if lines.next() != Some("end") {
        return Err(bad("missing end marker"));
    }
    Ok(model)
}
