//! File formats: run tables (CSV), coefficient files (JSON), frontier tables
//! (CSV), and synthetic run generation.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::compute_optimal::FrontierPoint;
use crate::error::{ensure_nonnegative, Error, Result};
use crate::fitting::TrainingRun;
use crate::laws::{ClarkCoefficients, DenseCoefficients, LossLaw, MoeCoefficients};
use crate::shapes::{active_params, total_params, ModelShape};

pub const RUN_COLUMNS: [&str; 6] = ["d_model", "n_blocks", "expansion", "granularity", "tokens", "loss"];
pub const FRONTIER_COLUMNS: [&str; 10] = [
    "flops",
    "moe_loss",
    "dense_loss",
    "G",
    "n_active",
    "n_total",
    "d_model",
    "n_blocks",
    "tokens",
    "savings_ratio",
];

const PROVENANCE_PREFIX: &str = "# provenance:";

/// Scientific notation with seven significant digits.
pub fn sci(value: f64) -> String {
    format!("{value:.6e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub rows: Vec<TrainingRun>,
    pub provenance: String,
}

/// Parses a count such as `25M`, `16B`, `2.96T` or `1.5e9`.
pub fn parse_quantity(text: &str) -> Result<f64> {
    let t = text.trim();
    let (number, scale) = match t.chars().last() {
        Some('K' | 'k') => (&t[..t.len() - 1], 1e3),
        Some('M' | 'm') => (&t[..t.len() - 1], 1e6),
        Some('B' | 'b' | 'G') => (&t[..t.len() - 1], 1e9),
        Some('T' | 't') => (&t[..t.len() - 1], 1e12),
        _ => (t, 1.0),
    };
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::domain(format!("not a number: {text:?}")))?;
    if !value.is_finite() {
        return Err(Error::domain(format!("not a finite number: {text:?}")));
    }
    Ok(value * scale)
}

/// Parses the `E x N_act` notation, e.g. `64x25M` -> `(64, 25e6)`.
pub fn parse_model_notation(text: &str) -> Result<(f64, f64)> {
    let lower = text.to_ascii_lowercase();
    let (e, n) = lower
        .split_once('x')
        .ok_or_else(|| Error::domain(format!("expected <E>x<N_act>, got {text:?}")))?;
    let expansion: f64 = e
        .trim()
        .parse()
        .map_err(|_| Error::domain(format!("bad expansion in {text:?}")))?;
    // Re-slice the original text so the unit suffix keeps its case.
    let n_text = &text[text.len() - n.len()..];
    Ok((expansion, parse_quantity(n_text)?))
}

/// `E x N_act` label for a shape, e.g. `64x1.02B`.
pub fn model_notation(shape: &ModelShape) -> String {
    let n = active_params(shape);
    let (value, unit) = if n >= 1e12 {
        (n / 1e12, "T")
    } else if n >= 1e9 {
        (n / 1e9, "B")
    } else if n >= 1e6 {
        (n / 1e6, "M")
    } else {
        (n / 1e3, "K")
    };
    format!("{}x{:.3}{}", shape.expansion(), value, unit)
}

fn parse_field(path: &str, line: usize, column: &str, raw: &str) -> Result<f64> {
    let value = parse_quantity(raw).map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        message: format!("column {column}: not a number: {raw:?}"),
    })?;
    Ok(value)
}

pub fn parse_runs(text: &str, source: &str) -> Result<RunTable> {
    let provenance = text
        .lines()
        .find_map(|l| l.strip_prefix(PROVENANCE_PREFIX))
        .map(|p| p.trim().to_string())
        .unwrap_or_else(|| source.to_string());

    if text.lines().all(|l| l.trim().is_empty() || l.trim_start().starts_with('#')) {
        return Err(Error::Parse {
            path: source.into(),
            line: 1,
            message: "empty file".into(),
        });
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let mut indices = [0usize; 6];
    for (slot, name) in indices.iter_mut().zip(RUN_COLUMNS) {
        *slot = column(name).ok_or_else(|| Error::Parse {
            path: source.into(),
            line: 1,
            message: format!("missing required column {name}"),
        })?;
    }
    let n_total_col = column("n_total");
    let n_active_col = column("n_active");

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).ok_or_else(|| Error::Parse {
                path: source.into(),
                line,
                message: format!("missing field {name}"),
            })?;
            parse_field(source, line, name, raw)
        };
        let [d_model, n_blocks, expansion, granularity, tokens, loss] = {
            let mut v = [0.0; 6];
            for (k, (&i, name)) in indices.iter().zip(RUN_COLUMNS).enumerate() {
                v[k] = field(i, name)?;
            }
            v
        };
        let located = |e: Error| Error::Parse {
            path: source.into(),
            line,
            message: e.to_string(),
        };
        let shape = ModelShape::new(d_model, n_blocks, expansion, granularity).map_err(located)?;
        let mut run = TrainingRun::from_shape(shape, tokens, loss).map_err(located)?;
        if let Some(i) = n_total_col {
            run.n_total = field(i, "n_total")?;
        }
        if let Some(i) = n_active_col {
            run.n_active = field(i, "n_active")?;
        }
        run.validate().map_err(located)?;
        rows.push(run);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: source.into(),
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(RunTable { rows, provenance })
}

pub fn load_runs(path: impl AsRef<Path>) -> Result<RunTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_runs(&text, &path.display().to_string())
}

pub fn write_runs<W: Write>(table: &RunTable, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "{PROVENANCE_PREFIX} {}", table.provenance.replace('\n', " "))?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(RUN_COLUMNS)?;
    for run in &table.rows {
        let shape = run
            .shape
            .ok_or_else(|| Error::Schema("run without a shape cannot be written as CSV".into()))?;
        writer.write_record([
            shape.d_model().to_string(),
            shape.n_blocks().to_string(),
            shape.expansion().to_string(),
            shape.granularity().to_string(),
            run.tokens.to_string(),
            run.loss.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_runs(table: &RunTable, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_runs(table, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Moe,
    Dense,
    Clark,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientValues {
    Moe(MoeCoefficients),
    Dense(DenseCoefficients),
    Clark(ClarkCoefficients),
}

impl CoefficientValues {
    pub fn kind(&self) -> ModelKind {
        match self {
            CoefficientValues::Moe(_) => ModelKind::Moe,
            CoefficientValues::Dense(_) => ModelKind::Dense,
            CoefficientValues::Clark(_) => ModelKind::Clark,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CoefficientValues::Moe(k) => k.validate(),
            CoefficientValues::Dense(k) => k.validate(),
            CoefficientValues::Clark(k) => k.validate(),
        }
    }
}

/// Provenance of fitted coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    pub rmse: f64,
    pub n_runs: usize,
    pub objective: f64,
    pub converged: bool,
    pub huber_delta: f64,
    pub weight_decay: f64,
    pub log_space: bool,
    pub max_iterations: usize,
    pub starts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientsFile {
    /// Expansion rate the coefficients were fitted for.
    pub expansion: f64,
    pub values: CoefficientValues,
    pub fit_meta: Option<FitMeta>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficientsFile {
    model_kind: ModelKind,
    expansion: f64,
    values: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit_meta: Option<FitMeta>,
}

impl CoefficientsFile {
    pub fn moe(expansion: f64, coeffs: MoeCoefficients) -> Self {
        Self {
            expansion,
            values: CoefficientValues::Moe(coeffs),
            fit_meta: None,
        }
    }

    pub fn dense(coeffs: DenseCoefficients) -> Self {
        Self {
            expansion: 1.0,
            values: CoefficientValues::Dense(coeffs),
            fit_meta: None,
        }
    }

    pub fn model_kind(&self) -> ModelKind {
        self.values.kind()
    }

    pub fn moe_coefficients(&self) -> Result<MoeCoefficients> {
        match self.values {
            CoefficientValues::Moe(k) => Ok(k),
            _ => Err(Error::Schema(format!("expected moe coefficients, found {:?}", self.model_kind()))),
        }
    }

    pub fn dense_coefficients(&self) -> Result<DenseCoefficients> {
        match self.values {
            CoefficientValues::Dense(k) => Ok(k),
            _ => Err(Error::Schema(format!("expected dense coefficients, found {:?}", self.model_kind()))),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.expansion.is_finite() || self.expansion < 1.0 {
            return Err(Error::Schema(format!("expansion must be finite and >= 1, got {}", self.expansion)));
        }
        let finite = match &self.values {
            CoefficientValues::Moe(k) => [k.a, k.alpha, k.b, k.beta, k.g, k.gamma, k.c].iter().all(|v| v.is_finite()),
            CoefficientValues::Dense(k) => [k.a, k.alpha, k.b, k.beta, k.c].iter().all(|v| v.is_finite()),
            CoefficientValues::Clark(k) => [k.a, k.b, k.c, k.d].iter().all(|v| v.is_finite()),
        };
        if !finite {
            return Err(Error::Schema("coefficient values must be finite".into()));
        }
        if let Some(meta) = &self.fit_meta {
            if ![meta.rmse, meta.objective, meta.huber_delta, meta.weight_decay]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::Schema("fit_meta values must be finite".into()));
            }
        }
        self.values.validate().map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let values = match &self.values {
            CoefficientValues::Moe(k) => serde_json::to_value(k)?,
            CoefficientValues::Dense(k) => serde_json::to_value(k)?,
            CoefficientValues::Clark(k) => serde_json::to_value(k)?,
        };
        let raw = RawCoefficientsFile {
            model_kind: self.model_kind(),
            expansion: self.expansion,
            values,
            fit_meta: self.fit_meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawCoefficientsFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let schema = |e: serde_json::Error| Error::Schema(format!("values: {e}"));
        let values = match raw.model_kind {
            ModelKind::Moe => CoefficientValues::Moe(serde_json::from_value(raw.values).map_err(schema)?),
            ModelKind::Dense => CoefficientValues::Dense(serde_json::from_value(raw.values).map_err(schema)?),
            ModelKind::Clark => CoefficientValues::Clark(serde_json::from_value(raw.values).map_err(schema)?),
        };
        let file = Self {
            expansion: raw.expansion,
            values,
            fit_meta: raw.fit_meta,
        };
        file.validate()?;
        Ok(file)
    }
}

pub fn save_coefficients(file: &CoefficientsFile, path: impl AsRef<Path>) -> Result<()> {
    let mut text = file.to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_coefficients(path: impl AsRef<Path>) -> Result<CoefficientsFile> {
    CoefficientsFile::from_json(&fs::read_to_string(path)?)
}

/// One architecture of a synthetic grid, trained at each listed token count
/// and granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRow {
    pub d_model: f64,
    pub n_blocks: f64,
    pub tokens: Vec<f64>,
    pub granularities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticGrid {
    pub expansion: f64,
    pub rows: Vec<GridRow>,
}

impl SyntheticGrid {
    fn from_table(expansion: f64, table: &[(f64, f64, &[f64], &[f64])]) -> Self {
        Self {
            expansion,
            rows: table
                .iter()
                .map(|&(d_model, n_blocks, tokens, granularities)| GridRow {
                    d_model,
                    n_blocks,
                    tokens: tokens.to_vec(),
                    granularities: granularities.to_vec(),
                })
                .collect(),
        }
    }

    /// The E=64 MoE training grid (78 runs).
    pub fn reference_e64() -> Self {
        const G5: &[f64] = &[1.0, 2.0, 4.0, 8.0, 16.0];
        const G4: &[f64] = &[1.0, 2.0, 4.0, 8.0];
        const G3: &[f64] = &[1.0, 2.0, 4.0];
        const D3: &[f64] = &[16e9, 33e9, 66e9];
        Self::from_table(
            64.0,
            &[
                (256.0, 4.0, D3, G5),
                (384.0, 4.0, D3, G5),
                (512.0, 4.0, D3, G5),
                (512.0, 4.0, &[130e9], G3),
                (512.0, 8.0, &[16e9, 33e9], G5),
                (512.0, 8.0, &[66e9], G4),
                (640.0, 10.0, &[16e9, 33e9], G5),
                (640.0, 10.0, &[66e9], G3),
                (768.0, 12.0, &[33e9], G3),
            ],
        )
    }

    /// The E=16 MoE training grid.
    pub fn reference_e16() -> Self {
        const G5: &[f64] = &[1.0, 2.0, 4.0, 8.0, 16.0];
        const D3: &[f64] = &[8e9, 16e9, 33e9];
        Self::from_table(
            16.0,
            &[
                (256.0, 4.0, D3, G5),
                (256.0, 8.0, D3, G5),
                (512.0, 4.0, D3, G5),
                (512.0, 4.0, &[66e9], &[1.0, 2.0, 4.0]),
                (512.0, 8.0, D3, G5),
                (640.0, 10.0, &[8e9], G5),
            ],
        )
    }

    /// The dense baseline grid.
    pub fn reference_dense() -> Self {
        const D4: &[f64] = &[16e9, 24e9, 33e9, 66e9];
        const G1: &[f64] = &[1.0];
        Self::from_table(
            1.0,
            &[
                (256.0, 4.0, D4, G1),
                (256.0, 8.0, D4, G1),
                (512.0, 4.0, D4, G1),
                (512.0, 8.0, D4, G1),
                (640.0, 10.0, D4, G1),
                (768.0, 12.0, &[16e9, 33e9], G1),
            ],
        )
    }

    pub fn shapes(&self) -> Result<Vec<(ModelShape, f64)>> {
        let mut out = Vec::new();
        for row in &self.rows {
            for &tokens in &row.tokens {
                for &g in &row.granularities {
                    out.push((ModelShape::new(row.d_model, row.n_blocks, self.expansion, g)?, tokens));
                }
            }
        }
        Ok(out)
    }
}

/// Evaluates `law` at every grid point and applies multiplicative
/// log-normal noise `exp(sigma · z)`, `z ~ N(0, 1)` from a ChaCha8 stream.
pub fn generate_synthetic<L: LossLaw>(law: &L, grid: &SyntheticGrid, noise_sigma: f64, seed: u64) -> Result<RunTable> {
    ensure_nonnegative("noise_sigma", noise_sigma)?;
    let points = grid.shapes()?;
    if points.is_empty() {
        return Err(Error::domain("synthetic grid is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = points
        .into_iter()
        .map(|(shape, tokens)| {
            let clean = law.loss(total_params(&shape), tokens, shape.granularity())?;
            let z: f64 = StandardNormal.sample(&mut rng);
            TrainingRun::from_shape(shape, tokens, clean * (noise_sigma * z).exp())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunTable {
        rows,
        provenance: format!("synthetic seed={seed} sigma={noise_sigma}"),
    })
}

pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(FRONTIER_COLUMNS)?;
    for p in points {
        writer.write_record([
            sci(p.flops),
            sci(p.moe.predicted_loss),
            sci(p.dense.predicted_loss),
            sci(p.moe.granularity),
            sci(p.moe.n_active),
            sci(p.moe.n_total),
            sci(p.moe.shape.d_model()),
            sci(p.moe.shape.n_blocks()),
            sci(p.moe.tokens),
            sci(p.savings_ratio),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Tab-separated plot data: budget, both optimal losses, and the dense
/// budget that matches the MoE loss.
pub fn frontier_plot_data(points: &[FrontierPoint]) -> String {
    let mut out = String::from("flops\tmoe_loss\tdense_loss\tdense_flops_at_moe_loss\tsavings_ratio\n");
    for p in points {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            sci(p.flops),
            sci(p.moe.predicted_loss),
            sci(p.dense.predicted_loss),
            sci(p.flops * p.savings_ratio),
            sci(p.savings_ratio)
        );
    }
    out
}
