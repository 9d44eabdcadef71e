//! Learnable parameters: per-type entity tables, per-relation projection
//! parameters and per-type intersection weights, plus checkpoints.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{read_file, write_file, EntityId, RelationId, SymbolData, SymbolTable, TypeId};
use crate::numeric::{l2_normalize_values, NumericError, ParamSlice, ParamStore, ParamTensor, Tape, TensorId, Var};

pub const CHECKPOINT_FORMAT: &str = "cga-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Symmetric set reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Psi {
    Mean,
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Bilinear,
    Translation,
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intersection {
    /// Ψ over the inputs with no learned weights.
    Simple,
    Gqe,
    Cga,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($name:literal => $variant:expr),+) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", $what, " {}"), s))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $(v if *v == $variant => $name,)+ _ => unreachable!() };
                f.write_str(name)
            }
        }
    };
}

keyword_enum!(Psi, "set reduction", "mean" => Psi::Mean, "min" => Psi::Min);
keyword_enum!(Projection, "projection", "bilinear" => Projection::Bilinear,
    "translation" => Projection::Translation, "diagonal" => Projection::Diagonal);
keyword_enum!(Intersection, "intersection", "simple" => Intersection::Simple,
    "gqe" => Intersection::Gqe, "cga" => Intersection::Cga);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub psi: Psi,
    pub projection: Projection,
    pub intersection: Intersection,
    pub margin: f64,
    pub leaky_slope: f64,
    /// Apply the sigmoid to each head's weighted sum before averaging.
    pub sigmoid_per_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            heads: 1,
            psi: Psi::Min,
            projection: Projection::Bilinear,
            intersection: Intersection::Cga,
            margin: 1.0,
            leaky_slope: 0.2,
            sigmoid_per_head: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("dimension must be at least 2, got {}", self.dim)));
        }
        if self.heads < 1 {
            return Err(Error::Config("at least one attention head is required".into()));
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky slope must be finite".into()));
        }
        Ok(())
    }

    /// Short tag such as `CGA+4[min]`, `GQE[mean]` or `TransE[min]`.
    pub fn tag(&self) -> String {
        let proj = match self.projection {
            Projection::Bilinear => "Bilinear",
            Projection::Translation => "TransE",
            Projection::Diagonal => "Diagonal",
        };
        match (self.intersection, self.projection) {
            (Intersection::Simple, _) => format!("{proj}[{}_simple]", self.psi),
            (Intersection::Gqe, Projection::Bilinear) => format!("GQE[{}]", self.psi),
            (Intersection::Gqe, _) => format!("{proj}[{}]", self.psi),
            (Intersection::Cga, Projection::Bilinear) => format!("CGA+{}[{}]", self.heads, self.psi),
            (Intersection::Cga, _) => format!("{proj}-CGA+{}[{}]", self.heads, self.psi),
        }
    }
}

/// Tensor handles of one type's intersection operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntersectionParams {
    Simple,
    Gqe {
        w1: TensorId,
        w2: TensorId,
    },
    Cga {
        /// `K × 2d`; row k is the attention vector of head k.
        attention: TensorId,
        w: TensorId,
        b: TensorId,
        ln1_gain: TensorId,
        ln1_bias: TensorId,
        ln2_gain: TensorId,
        ln2_bias: TensorId,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fill {
    Random,
    Zero,
    One,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    config: ModelConfig,
    symbols: Arc<SymbolTable>,
    store: ParamStore,
    entity_tables: Vec<TensorId>,
    relations: Vec<TensorId>,
    intersections: Vec<IntersectionParams>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    symbols: SymbolData,
    tensors: Vec<ParamTensor>,
}

impl ModelParameters {
    /// Allocates every tensor. Weights are drawn i.i.d. from
    /// `Uniform(−√(3/d), √(3/d))`, which has standard deviation `1/√d`;
    /// biases start at 0 and layer-norm gains at 1.
    pub fn init<R: Rng + ?Sized>(symbols: Arc<SymbolTable>, config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let bound = (3.0 / config.dim as f64).sqrt();
        Ok(Self::allocate(symbols, config, |fill, n| match fill {
            Fill::Random => (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
            Fill::Zero => vec![0.0; n],
            Fill::One => vec![1.0; n],
        }))
    }

    fn allocate(
        symbols: Arc<SymbolTable>,
        config: ModelConfig,
        mut fill: impl FnMut(Fill, usize) -> Vec<f64>,
    ) -> Self {
        let d = config.dim;
        let mut store = ParamStore::new();
        let mut push = |store: &mut ParamStore, name: String, rows: usize, cols: usize, how: Fill| {
            store.push(name, rows, cols, fill(how, rows * cols))
        };

        let entity_tables = symbols
            .type_ids()
            .map(|t| {
                let m = symbols.roster(t).len();
                push(&mut store, format!("entity/{}", symbols.type_label(t)), m, d, Fill::Random)
            })
            .collect();

        let relations = symbols
            .relation_ids()
            .map(|r| {
                let name = format!("relation/{}", symbols.relation_name(r));
                match config.projection {
                    Projection::Bilinear => push(&mut store, name, d, d, Fill::Random),
                    Projection::Translation | Projection::Diagonal => push(&mut store, name, 1, d, Fill::Random),
                }
            })
            .collect();

        let intersections = symbols
            .type_ids()
            .map(|t| {
                let p = format!("intersect/{}", symbols.type_label(t));
                match config.intersection {
                    Intersection::Simple => IntersectionParams::Simple,
                    Intersection::Gqe => IntersectionParams::Gqe {
                        w1: push(&mut store, format!("{p}/w1"), d, d, Fill::Random),
                        w2: push(&mut store, format!("{p}/w2"), d, d, Fill::Random),
                    },
                    Intersection::Cga => IntersectionParams::Cga {
                        attention: push(&mut store, format!("{p}/attention"), config.heads, 2 * d, Fill::Random),
                        w: push(&mut store, format!("{p}/w"), d, d, Fill::Random),
                        b: push(&mut store, format!("{p}/b"), 1, d, Fill::Zero),
                        ln1_gain: push(&mut store, format!("{p}/ln1_gain"), 1, d, Fill::One),
                        ln1_bias: push(&mut store, format!("{p}/ln1_bias"), 1, d, Fill::Zero),
                        ln2_gain: push(&mut store, format!("{p}/ln2_gain"), 1, d, Fill::One),
                        ln2_bias: push(&mut store, format!("{p}/ln2_bias"), 1, d, Fill::Zero),
                    },
                }
            })
            .collect();

        ModelParameters { config, symbols, store, entity_tables, relations, intersections }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn symbols(&self) -> &Arc<SymbolTable> {
        &self.symbols
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn entity_table(&self, t: TypeId) -> TensorId {
        self.entity_tables[t.index()]
    }

    pub fn relation_tensor(&self, r: RelationId) -> Result<TensorId> {
        self.relations
            .get(r.index())
            .copied()
            .ok_or_else(|| Error::UnknownRelation(format!("#{}", r.0)))
    }

    pub fn intersection(&self, t: TypeId) -> IntersectionParams {
        self.intersections[t.index()]
    }

    fn entity_slice(&self, e: EntityId) -> Result<ParamSlice> {
        if !self.symbols.contains_entity(e) {
            return Err(Error::UnknownEntity(format!("#{}", e.0)));
        }
        let info = self.symbols.entity_info(e);
        Ok(self.store.row_slice(self.entity_tables[info.ty.index()], info.row))
    }

    /// The raw, unnormalized row of `e`.
    pub fn entity_row(&self, e: EntityId) -> Result<&[f64]> {
        Ok(self.store.slice_values(self.entity_slice(e)?))
    }

    /// The L2-normalized embedding of `e` as a tape node.
    pub fn lookup(&self, tape: &mut Tape, e: EntityId) -> Result<Var> {
        let slice = self.entity_slice(e)?;
        let raw = tape.param(&self.store, slice);
        tape.l2_normalize(raw).map_err(|err| self.degenerate(e, err))
    }

    /// The L2-normalized embedding of `e`, computed without a tape.
    pub fn entity_embedding(&self, e: EntityId) -> Result<Vec<f64>> {
        l2_normalize_values(self.entity_row(e)?).map_err(|err| self.degenerate(e, err))
    }

    fn degenerate(&self, e: EntityId, err: NumericError) -> Error {
        match err {
            NumericError::ZeroNorm { .. } => Error::DegenerateEmbedding(self.symbols.entity_label(e).to_string()),
            other => other.into(),
        }
    }

    /// Every allocated scalar.
    pub fn total_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Scalars in the intersection operators, layer-norm affines included.
    pub fn intersection_count(&self) -> usize {
        self.intersection_tensors(true).map(|id| self.store.get(id).len()).sum()
    }

    /// Scalars in the intersection operators without the layer-norm
    /// affines: `2Ld²` for GQE and `Ld(d + 2K + 1)` for CGA.
    pub fn intersection_core_count(&self) -> usize {
        self.intersection_tensors(false).map(|id| self.store.get(id).len()).sum()
    }

    fn intersection_tensors(&self, with_norms: bool) -> impl Iterator<Item = TensorId> + '_ {
        self.intersections.iter().flat_map(move |p| match *p {
            IntersectionParams::Simple => vec![],
            IntersectionParams::Gqe { w1, w2 } => vec![w1, w2],
            IntersectionParams::Cga { attention, w, b, ln1_gain, ln1_bias, ln2_gain, ln2_bias } => {
                let mut v = vec![attention, w, b];
                if with_norms {
                    v.extend([ln1_gain, ln1_bias, ln2_gain, ln2_bias]);
                }
                v
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            symbols: self.symbols.to_data(),
            tensors: self.store.tensors().to_vec(),
        };
        let mut text = serde_json::to_string(&ck)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!("format version {v}, expected {CHECKPOINT_VERSION}")));
            }
            None => return Err(Error::Checkpoint("missing format version".into())),
        }
        let ck: Checkpoint =
            serde_json::from_value(probe).map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
        ck.config.validate()?;
        let symbols = Arc::new(SymbolTable::from_data(&ck.symbols)?);
        let mut params = Self::allocate(symbols, ck.config, |_, n| vec![0.0; n]);
        let expected = params.store.tensors();
        if expected.len() != ck.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, layout needs {}",
                ck.tensors.len(),
                expected.len()
            )));
        }
        for (want, got) in expected.iter().zip(&ck.tensors) {
            if want.name != got.name || want.rows != got.rows || want.cols != got.cols || got.data.len() != want.len()
            {
                return Err(Error::Checkpoint(format!(
                    "tensor {} ({}x{}, {} values) does not match layout {} ({}x{})",
                    got.name,
                    got.rows,
                    got.cols,
                    got.data.len(),
                    want.name,
                    want.rows,
                    want.cols
                )));
            }
        }
        params.store = ParamStore::from_tensors(ck.tensors);
        if let Some(name) = params.store.first_non_finite() {
            return Err(Error::Checkpoint(format!("tensor {name} holds a non-finite value")));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }
}
