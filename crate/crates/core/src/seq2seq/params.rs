//! Parameter layout for the attention encoder-decoder.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{init_gru_params, xavier, ParamStore, SeededRng, Tensor2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seq2SeqDims {
    pub v_src: usize,
    pub v_tgt: usize,
    pub d_emb: usize,
    pub d_hid: usize,
}

impl Seq2SeqDims {
    pub fn validate(&self) -> Result<()> {
        if self.v_src < 4 || self.v_tgt < 4 {
            return Err(Error::InvalidArgument(format!(
                "vocab sizes must include the 4 reserved ids, got src {} / tgt {}",
                self.v_src, self.v_tgt
            )));
        }
        if self.d_emb == 0 || self.d_hid == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dims must be positive, got d_emb {} / d_hid {}",
                self.d_emb, self.d_hid
            )));
        }
        Ok(())
    }
}

/// Weights of one translation direction. The store holds, in fixed order:
/// source embeddings, encoder GRU, decoder-init projection, target
/// embeddings, decoder GRU (input is embedding concatenated with the
/// attention context), additive-attention weights, and the output layer.
#[derive(Clone, Debug)]
pub struct Seq2SeqParams {
    dims: Seq2SeqDims,
    store: ParamStore,
}

pub(crate) const SRC_EMB: &str = "src_emb";
pub(crate) const TGT_EMB: &str = "tgt_emb";
pub(crate) const ENC: &str = "enc";
pub(crate) const DEC: &str = "dec";
pub(crate) const INIT_W: &str = "init.w";
pub(crate) const ATTN_W: &str = "attn.w";
pub(crate) const ATTN_U: &str = "attn.u";
pub(crate) const ATTN_V: &str = "attn.v";
pub(crate) const OUT_W: &str = "out.w";
pub(crate) const OUT_B: &str = "out.b";

impl Seq2SeqParams {
    pub fn new(dims: Seq2SeqDims, rng: &mut SeededRng) -> Result<Self> {
        dims.validate()?;
        let mut store = ParamStore::new();
        store.insert(SRC_EMB, xavier(dims.v_src, dims.d_emb, rng))?;
        init_gru_params(&mut store, ENC, dims.d_emb, dims.d_hid, rng)?;
        store.insert(INIT_W, xavier(dims.d_hid, dims.d_hid, rng))?;
        store.insert(TGT_EMB, xavier(dims.v_tgt, dims.d_emb, rng))?;
        init_gru_params(&mut store, DEC, dims.d_emb + dims.d_hid, dims.d_hid, rng)?;
        store.insert(ATTN_W, xavier(dims.d_hid, dims.d_hid, rng))?;
        store.insert(ATTN_U, xavier(dims.d_hid, dims.d_hid, rng))?;
        store.insert(ATTN_V, xavier(1, dims.d_hid, rng))?;
        store.insert(OUT_W, xavier(dims.v_tgt, dims.d_hid, rng))?;
        store.insert(OUT_B, Tensor2D::zeros(1, dims.v_tgt))?;
        Ok(Seq2SeqParams { dims, store })
    }

    /// Wraps an existing store, validating every entry's presence and shape.
    pub fn from_store(dims: Seq2SeqDims, store: ParamStore) -> Result<Self> {
        dims.validate()?;
        let expected = [
            (SRC_EMB.to_string(), (dims.v_src, dims.d_emb)),
            (INIT_W.to_string(), (dims.d_hid, dims.d_hid)),
            (TGT_EMB.to_string(), (dims.v_tgt, dims.d_emb)),
            (ATTN_W.to_string(), (dims.d_hid, dims.d_hid)),
            (ATTN_U.to_string(), (dims.d_hid, dims.d_hid)),
            (ATTN_V.to_string(), (1, dims.d_hid)),
            (OUT_W.to_string(), (dims.v_tgt, dims.d_hid)),
            (OUT_B.to_string(), (1, dims.v_tgt)),
        ];
        for (name, shape) in &expected {
            let t = store.get(name)?;
            if t.shape() != *shape {
                return Err(Error::shape(
                    "Seq2SeqParams::from_store",
                    format!("{name} {}x{}", t.rows(), t.cols()),
                    format!("expected {}x{}", shape.0, shape.1),
                ));
            }
        }
        let params = Seq2SeqParams { dims, store };
        // GRU shape validation happens in from_store of the weight views.
        crate::numerics::GruWeights::from_store(&params.store, ENC)?;
        crate::numerics::GruWeights::from_store(&params.store, DEC)?;
        let enc = crate::numerics::GruWeights::from_store(&params.store, ENC)?;
        if enc.input_dim() != dims.d_emb || enc.hidden_dim() != dims.d_hid {
            return Err(Error::shape(
                "Seq2SeqParams::from_store",
                format!("enc dims {}x{}", enc.hidden_dim(), enc.input_dim()),
                format!("expected {}x{}", dims.d_hid, dims.d_emb),
            ));
        }
        let dec = crate::numerics::GruWeights::from_store(&params.store, DEC)?;
        if dec.input_dim() != dims.d_emb + dims.d_hid || dec.hidden_dim() != dims.d_hid {
            return Err(Error::shape(
                "Seq2SeqParams::from_store",
                format!("dec dims {}x{}", dec.hidden_dim(), dec.input_dim()),
                format!("expected {}x{}", dims.d_hid, dims.d_emb + dims.d_hid),
            ));
        }
        Ok(params)
    }

    pub fn dims(&self) -> Seq2SeqDims {
        self.dims
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Mutable access for optimizers. Updates go through layout-checked
    /// store operations, so shapes cannot drift.
    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore {
        self.store
    }

    /// Writes `<stem>.bin` (binary weights) and `<stem>.meta` (dims).
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        self.store.save(path_with_suffix(stem, "bin"))?;
        let meta = format!(
            "kind=seq2seq\nv_src={}\nv_tgt={}\nd_emb={}\nd_hid={}\n",
            self.dims.v_src, self.dims.v_tgt, self.dims.d_emb, self.dims.d_hid
        );
        fs::write(path_with_suffix(stem, "meta"), meta)?;
        Ok(())
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let meta = fs::read_to_string(path_with_suffix(stem, "meta"))?;
        let dims = parse_meta(&meta, "seq2seq", stem)?;
        let store = ParamStore::load(path_with_suffix(stem, "bin"))?;
        Self::from_store(
            Seq2SeqDims {
                v_src: dims[0],
                v_tgt: dims[1],
                d_emb: dims[2],
                d_hid: dims[3],
            },
            store,
        )
    }
}

pub(crate) fn path_with_suffix(stem: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = stem.as_os_str().to_os_string();
    s.push(".");
    s.push(suffix);
    std::path::PathBuf::from(s)
}

pub(crate) fn parse_meta(text: &str, expect_kind: &str, stem: &Path) -> Result<Vec<usize>> {
    let mut kind = None;
    let mut fields = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("{}: bad meta line {line:?}", stem.display()))
        })?;
        if key == "kind" {
            kind = Some(value.to_string());
        } else {
            fields.push(value.parse::<usize>().map_err(|_| {
                Error::Format(format!("{}: bad meta value {line:?}", stem.display()))
            })?);
        }
    }
    match kind {
        Some(k) if k == expect_kind => Ok(fields),
        Some(k) => Err(Error::Format(format!(
            "{}: model kind is {k:?}, expected {expect_kind:?}",
            stem.display()
        ))),
        None => Err(Error::Format(format!(
            "{}: meta file missing kind",
            stem.display()
        ))),
    }
}
