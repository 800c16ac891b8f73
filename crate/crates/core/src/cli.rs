//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decompose::{
    decompose_regular, decompose_rep, irrep_matrices, DecompositionResult, SmilyConfig, SmilyError,
};
use crate::groups::{parse_cayley_table, parse_rep_json, FiniteRep, GroupError, DEFAULT_ASSOCIATIVITY_CAP};
use crate::linalg::{CMatrix, C64};
use crate::su2::{
    compare_with_oracle, decompose_spins, ladder_oracle, parse_spins, CGTable, Su2Error, DEFAULT_DIMENSION_CAP,
};
use crate::verify::{
    char_error_finite, extract_characters, irreducibility_score, CharacterSet, Quadrature, VerificationReport,
    VerifyError, DEFAULT_QUADRATURE_POINTS, DEFAULT_QUADRATURE_SEED,
};

/// Character errors and oracle defects above this fail verification.
pub const VERIFY_TOL: f64 = 1e-8;
/// Tolerance for unitarity and homomorphism checks of supplied matrices.
pub const INPUT_TOL: f64 = 1e-10;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "smily", version, about = "Decompose unitary representations into irreducible blocks")]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Left regular representation of a group given by its Cayley table.
    Regular { table: PathBuf },
    /// A representation given as JSON: Cayley table plus one matrix per element.
    Rep { rep: PathBuf },
    /// Tensor product of SU(2) spins, e.g. "3/2,1".
    Su2 { spins: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol_zero: f64,
    #[arg(long, global = true, default_value_t = 1e-7)]
    pub tol_gap: f64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol_residual: f64,
    /// Total number of attempts with fresh random states.
    #[arg(long, global = true, default_value_t = 5)]
    pub retries: usize,
    /// Sample points for the SU(2) character error.
    #[arg(long, global = true, default_value_t = DEFAULT_QUADRATURE_POINTS)]
    pub quadrature_n: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Exact character table (JSON) used to report the character error.
    #[arg(long, global = true)]
    pub exact_chars: Option<PathBuf>,
    /// Largest group order checked exhaustively for associativity.
    #[arg(long, global = true, default_value_t = DEFAULT_ASSOCIATIVITY_CAP)]
    pub associativity_cap: usize,
    /// Largest accepted representation dimension.
    #[arg(long, global = true, default_value_t = DEFAULT_DIMENSION_CAP)]
    pub max_dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            tol_zero: 1e-8,
            tol_gap: 1e-7,
            tol_residual: 1e-9,
            retries: 5,
            quadrature_n: DEFAULT_QUADRATURE_POINTS,
            format: Format::Json,
            output: None,
            exact_chars: None,
            associativity_cap: DEFAULT_ASSOCIATIVITY_CAP,
            max_dim: DEFAULT_DIMENSION_CAP,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let tols = [("tol-zero", self.tol_zero), ("tol-gap", self.tol_gap), ("tol-residual", self.tol_residual)];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::input("InvalidConfig", format!("--{name} must be positive, got {v}")));
            }
        }
        if self.retries == 0 {
            return Err(CliError::input("InvalidConfig", "--retries must be at least 1".into()));
        }
        Ok(())
    }

    pub fn smily(&self) -> SmilyConfig {
        SmilyConfig {
            seed: self.seed,
            tol_zero: self.tol_zero,
            tol_gap: self.tol_gap,
            tol_residual: self.tol_residual,
            retries: self.retries,
            ..SmilyConfig::default()
        }
    }
}

/// An error with its exit code and a JSON payload.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
    pub details: Value,
}

impl CliError {
    fn input(kind: &str, message: String) -> Self {
        CliError { code: EXIT_INPUT, kind: kind.into(), message, details: Value::Null }
    }

    pub fn to_json(&self) -> String {
        let mut obj = json!({ "error": { "kind": self.kind, "message": self.message, "exit_code": self.code } });
        if !self.details.is_null() {
            obj["error"]["details"] = self.details.clone();
        }
        obj.to_string()
    }
}

impl From<GroupError> for CliError {
    fn from(e: GroupError) -> Self {
        let (kind, details) = match &e {
            GroupError::Parse { line, .. } => ("Parse", json!({ "line": line })),
            GroupError::NotAGroup { axiom, i, j, k } => {
                ("NotAGroup", json!({ "axiom": format!("{axiom:?}"), "i": i, "j": j, "k": k }))
            }
            GroupError::NotUnitary { element, defect } => {
                ("NotUnitary", json!({ "element": element, "defect": defect }))
            }
            GroupError::NotHomomorphism { i, j, defect } => {
                ("NotHomomorphism", json!({ "i": i, "j": j, "defect": defect }))
            }
            GroupError::IdentityMismatch { .. } => ("NotHomomorphism", Value::Null),
            GroupError::MatrixCount { .. } | GroupError::MatrixShape { .. } => ("MatrixShape", Value::Null),
            GroupError::Json(_) => ("Parse", Value::Null),
        };
        CliError { code: EXIT_INPUT, kind: kind.into(), message: e.to_string(), details }
    }
}

impl From<SmilyError> for CliError {
    fn from(e: SmilyError) -> Self {
        match &e {
            SmilyError::RetriesExhausted(reasons) => CliError {
                code: EXIT_NUMERICAL,
                kind: "RetriesExhausted".into(),
                message: e.to_string(),
                details: json!({ "attempts": reasons }),
            },
            _ => CliError {
                code: EXIT_NUMERICAL,
                kind: "Numerical".into(),
                message: e.to_string(),
                details: Value::Null,
            },
        }
    }
}

impl From<Su2Error> for CliError {
    fn from(e: Su2Error) -> Self {
        match e {
            Su2Error::Smily(inner) => inner.into(),
            Su2Error::SpinParse(_) | Su2Error::Empty => CliError::input("SpinParse", e.to_string()),
            Su2Error::DimensionCap { dim, cap } => CliError {
                code: EXIT_INPUT,
                kind: "DimensionCap".into(),
                message: e.to_string(),
                details: json!({ "dim": dim, "cap": cap }),
            },
            Su2Error::ComplexCoefficient(_) => CliError {
                code: EXIT_NUMERICAL,
                kind: "ComplexCoefficient".into(),
                message: e.to_string(),
                details: Value::Null,
            },
            _ => CliError {
                code: EXIT_NUMERICAL,
                kind: "Numerical".into(),
                message: e.to_string(),
                details: Value::Null,
            },
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input("Io", format!("{}: {e}", path.display())))
}

/// Output of a successful run: the rendered document and its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOut {
    pub dim: usize,
    pub multiplicity: usize,
}

/// Finite-group result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteOutput {
    pub kind: String,
    pub order: usize,
    pub dim: usize,
    pub blocks: Vec<BlockOut>,
    /// `characters[α][g]`.
    pub characters: Vec<Vec<C64>>,
    /// `irreps[α][g]`, row-major.
    pub irreps: Vec<Vec<Vec<Vec<C64>>>>,
    pub report: VerificationReport,
}

impl FiniteOutput {
    pub fn build(
        rep: &FiniteRep,
        result: &DecompositionResult,
        exact: Option<&CharacterSet>,
    ) -> Result<Self, CliError> {
        let chars = extract_characters(rep, result);
        let order = rep.matrices.len();
        let mut report = VerificationReport::from_result(result);
        report.irreducibility_scores = Some(chars.characters.iter().map(|c| irreducibility_score(c, order)).collect());
        if let Some(exact) = exact {
            report.chi_error = Some(char_error_finite(exact, &chars).map_err(|e| match e {
                VerifyError::BlockCountMismatch { .. } => CliError {
                    code: EXIT_VERIFICATION,
                    kind: "BlockCountMismatch".into(),
                    message: e.to_string(),
                    details: Value::Null,
                },
                other => CliError::input("ExactCharacters", other.to_string()),
            })?);
        }
        let irreps = irrep_matrices(rep, result)
            .into_iter()
            .map(|per_element| per_element.iter().map(rows_of).collect())
            .collect();
        Ok(FiniteOutput {
            kind: "finite".into(),
            order,
            dim: rep.dim,
            blocks: result.blocks.iter().map(|b| BlockOut { dim: b.dim, multiplicity: b.multiplicity }).collect(),
            characters: chars.characters,
            irreps,
            report,
        })
    }

    pub fn verified(&self, tol_residual: f64) -> bool {
        self.report.residual <= tol_residual && self.report.chi_error.is_none_or(|e| e <= VERIFY_TOL)
    }

    /// Long-form CSV: one row per scalar.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut record =
            |q: &str, block: Option<usize>, element: Option<usize>, rc: Option<(usize, usize)>, re: String, im: f64| {
                let opt = |x: Option<usize>| x.map_or(String::new(), |v| v.to_string());
                w.write_record([
                    q.to_string(),
                    opt(block),
                    opt(element),
                    opt(rc.map(|p| p.0)),
                    opt(rc.map(|p| p.1)),
                    re,
                    format!("{im:e}"),
                ])
                .expect("writing to memory");
            };
        // integers are written verbatim; seeds exceed f64 precision
        record("order", None, None, None, self.order.to_string(), 0.0);
        record("dim", None, None, None, self.dim.to_string(), 0.0);
        record("seed", None, None, None, self.report.seed.to_string(), 0.0);
        record("retries_used", None, None, None, self.report.retries_used.to_string(), 0.0);
        let mut row =
            |q: &str, block: Option<usize>, element: Option<usize>, rc: Option<(usize, usize)>, re: f64, im: f64| {
                record(q, block, element, rc, format!("{re:e}"), im)
            };
        row("residual", None, None, None, self.report.residual, 0.0);
        if let Some(e) = self.report.chi_error {
            row("chi_error", None, None, None, e, 0.0);
        }
        for (a, b) in self.blocks.iter().enumerate() {
            row("block_dim", Some(a), None, None, b.dim as f64, 0.0);
            row("multiplicity", Some(a), None, None, b.multiplicity as f64, 0.0);
            if let Some(s) = &self.report.irreducibility_scores {
                row("irreducibility_score", Some(a), None, None, s[a], 0.0);
            }
            for (g, z) in self.characters[a].iter().enumerate() {
                row("character", Some(a), Some(g), None, z.re, z.im);
            }
            for (g, m) in self.irreps[a].iter().enumerate() {
                for (i, r) in m.iter().enumerate() {
                    for (j, z) in r.iter().enumerate() {
                        row("irrep", Some(a), Some(g), Some((i, j)), z.re, z.im);
                    }
                }
            }
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
    }

    /// Inverse of [`FiniteOutput::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut out = FiniteOutput {
            kind: "finite".into(),
            order: 0,
            dim: 0,
            blocks: vec![],
            characters: vec![],
            irreps: vec![],
            report: VerificationReport {
                residual: 0.0,
                chi_error: None,
                block_dims: vec![],
                multiplicities: vec![],
                irreducibility_scores: None,
                seed: 0,
                retries_used: 0,
            },
        };
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| format!("line {}: {e}", line + 1))?;
            if rec.len() != 7 {
                return Err(format!("line {}: expected 7 fields", line + 1));
            }
            let idx = |k: usize| -> Result<usize, String> {
                rec[k].parse().map_err(|_| format!("line {}: bad index {:?}", line + 1, &rec[k]))
            };
            let num = |k: usize| -> Result<f64, String> {
                rec[k].parse().map_err(|_| format!("line {}: bad number {:?}", line + 1, &rec[k]))
            };
            let integer = || -> Result<u64, String> {
                rec[5].parse().map_err(|_| format!("line {}: bad integer {:?}", line + 1, &rec[5]))
            };
            match &rec[0] {
                "order" => out.order = integer()? as usize,
                "dim" => out.dim = integer()? as usize,
                "seed" => out.report.seed = integer()?,
                "retries_used" => out.report.retries_used = integer()? as usize,
                _ => {}
            }
            let (re, im) = (num(5)?, num(6)?);
            match &rec[0] {
                "order" | "dim" | "seed" | "retries_used" => {}
                "residual" => out.report.residual = re,
                "chi_error" => out.report.chi_error = Some(re),
                "block_dim" => {
                    let a = idx(1)?;
                    if a != out.blocks.len() {
                        return Err(format!("line {}: blocks out of order", line + 1));
                    }
                    out.blocks.push(BlockOut { dim: re as usize, multiplicity: 0 });
                    out.characters.push(vec![]);
                    out.irreps.push(vec![]);
                }
                "multiplicity" => out.blocks[idx(1)?].multiplicity = re as usize,
                "irreducibility_score" => out.report.irreducibility_scores.get_or_insert_with(Vec::new).push(re),
                "character" => out.characters[idx(1)?].push(C64::new(re, im)),
                "irrep" => {
                    let (a, g, i) = (idx(1)?, idx(2)?, idx(3)?);
                    let mats = &mut out.irreps[a];
                    if g == mats.len() {
                        mats.push(vec![]);
                    }
                    if i == mats[g].len() {
                        mats[g].push(vec![]);
                    }
                    mats[g][i].push(C64::new(re, im));
                }
                other => return Err(format!("line {}: unknown quantity {other:?}", line + 1)),
            }
        }
        out.report.block_dims = out.blocks.iter().map(|b| b.dim).collect();
        out.report.multiplicities = out.blocks.iter().map(|b| b.multiplicity).collect();
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "group order {}, representation dimension {}", self.order, self.dim);
        let _ = writeln!(s, "{:>5} {:>5} {:>12} {:>20}", "block", "dim", "multiplicity", "irreducibility");
        for (a, b) in self.blocks.iter().enumerate() {
            let score = self.report.irreducibility_scores.as_ref().map_or(f64::NAN, |v| v[a]);
            let _ = writeln!(s, "{a:>5} {:>5} {:>12} {score:>20.12}", b.dim, b.multiplicity);
        }
        let _ = writeln!(s, "\ncharacters (rows: blocks, columns: elements 1..{})", self.order);
        for chi in &self.characters {
            let cells: Vec<String> = chi.iter().map(|z| format!("{:+.4}{:+.4}i", z.re, z.im)).collect();
            let _ = writeln!(s, "  {}", cells.join("  "));
        }
        let _ = writeln!(s, "\nresidual        {:e}", self.report.residual);
        if let Some(e) = self.report.chi_error {
            let _ = writeln!(s, "character error {e:e}");
        }
        let _ = writeln!(s, "seed            {} (retries used: {})", self.report.seed, self.report.retries_used);
        s
    }
}

fn rows_of(m: &CMatrix) -> Vec<Vec<C64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinBlockOut {
    #[serde(rename = "two_J")]
    pub two_j: usize,
    pub dim: usize,
    pub multiplicity: usize,
}

/// SU(2) result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Su2Output {
    pub kind: String,
    pub spins: Vec<String>,
    pub dim: usize,
    pub blocks: Vec<SpinBlockOut>,
    pub table: CGTable,
    pub oracle_defect: f64,
    pub quadrature_points: usize,
    pub report: VerificationReport,
}

impl Su2Output {
    pub fn verified(&self, tol_residual: f64) -> bool {
        self.report.residual <= tol_residual
            && self.report.chi_error.is_none_or(|e| e <= VERIFY_TOL)
            && self.oracle_defect <= VERIFY_TOL
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "spins {} (dimension {})", self.spins.join(" x "), self.dim);
        for b in &self.blocks {
            let _ = writeln!(s, "  J = {:<5} multiplicity {}", half(b.two_j as i32), b.multiplicity);
        }
        let _ = writeln!(s, "\nClebsch-Gordan coefficients");
        let labels: Vec<String> = (1..=self.spins.len()).map(|i| format!("m{i}")).collect();
        let _ = writeln!(s, "  {:>6}  {:>5} {:>5} {:>2}  coefficient", labels.join(" "), "J", "M", "c");
        for e in &self.table.entries {
            let ms: Vec<String> = e.two_m.iter().map(|&m| format!("{:>5}", half(m))).collect();
            let _ = writeln!(
                s,
                "  {}  {:>5} {:>5} {:>2}  {:+.10}",
                ms.join(" "),
                half(e.two_j),
                half(e.two_m_total),
                e.copy,
                e.coefficient
            );
        }
        let _ = writeln!(s, "\nresidual        {:e}", self.report.residual);
        if let Some(e) = self.report.chi_error {
            let _ = writeln!(s, "character error {e:e} ({} samples)", self.quadrature_points);
        }
        let _ = writeln!(s, "oracle defect   {:e}", self.oracle_defect);
        let _ = writeln!(s, "seed            {} (retries used: {})", self.report.seed, self.report.retries_used);
        s
    }
}

fn half(two: i32) -> String {
    if two % 2 == 0 {
        (two / 2).to_string()
    } else {
        format!("{two}/2")
    }
}

fn check_dim(dim: usize, cap: usize) -> Result<(), CliError> {
    if dim > cap {
        return Err(CliError {
            code: EXIT_INPUT,
            kind: "DimensionCap".into(),
            message: format!("dimension {dim} exceeds the cap {cap}"),
            details: json!({ "dim": dim, "cap": cap }),
        });
    }
    Ok(())
}

fn load_exact(cfg: &RunConfig) -> Result<Option<CharacterSet>, CliError> {
    cfg.exact_chars
        .as_deref()
        .map(|p| {
            serde_json::from_str(&read(p)?)
                .map_err(|e| CliError::input("ExactCharacters", format!("{}: {e}", p.display())))
        })
        .transpose()
}

pub fn run_finite(rep: &FiniteRep, result: &DecompositionResult, cfg: &RunConfig) -> Result<Rendered, CliError> {
    let exact = load_exact(cfg)?;
    let out = FiniteOutput::build(rep, result, exact.as_ref())?;
    let text = match cfg.format {
        Format::Json => to_json(&out),
        Format::Csv => out.to_csv(),
        Format::Text => out.to_text(),
    };
    let code = if out.verified(cfg.tol_residual) { EXIT_OK } else { EXIT_VERIFICATION };
    Ok(Rendered { text, code })
}

pub fn run_su2(spins: &str, cfg: &RunConfig) -> Result<Rendered, CliError> {
    let spins = parse_spins(spins)?;
    let dec = decompose_spins(&spins, &cfg.smily(), cfg.max_dim)?;
    let quadrature = Quadrature { points: cfg.quadrature_n, seed: DEFAULT_QUADRATURE_SEED };
    let chi_error = dec.chi_error(&quadrature).map_err(Su2Error::from)?;
    let oracle_defect = compare_with_oracle(&dec.table, &ladder_oracle(&spins)?)?;
    let mut report = VerificationReport::from_result(&dec.result);
    report.chi_error = Some(chi_error);

    let mut blocks: Vec<SpinBlockOut> = dec
        .result
        .blocks
        .iter()
        .map(|b| SpinBlockOut { two_j: b.dim - 1, dim: b.dim, multiplicity: b.multiplicity })
        .collect();
    blocks.sort_by_key(|b| std::cmp::Reverse(b.two_j));
    let out = Su2Output {
        kind: "su2".into(),
        spins: spins.iter().map(ToString::to_string).collect(),
        dim: dec.system.dim(),
        blocks,
        table: dec.table,
        oracle_defect,
        quadrature_points: cfg.quadrature_n,
        report,
    };
    let text = match cfg.format {
        Format::Json => to_json(&out),
        Format::Csv => out.table.to_csv(),
        Format::Text => out.to_text(),
    };
    let code = if out.verified(cfg.tol_residual) { EXIT_OK } else { EXIT_VERIFICATION };
    Ok(Rendered { text, code })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

/// Runs one command and renders its output.
pub fn execute(cli: &Cli) -> Result<Rendered, CliError> {
    let cfg = &cli.config;
    cfg.validate()?;
    match &cli.command {
        Command::Regular { table } => {
            let table = parse_cayley_table(&read(table)?, cfg.associativity_cap)?;
            check_dim(table.order(), cfg.max_dim)?;
            let (rep, result) = decompose_regular(&table, &cfg.smily())?;
            run_finite(&rep, &result, cfg)
        }
        Command::Rep { rep } => {
            let rep = parse_rep_json(&read(rep)?, cfg.associativity_cap, INPUT_TOL)?;
            check_dim(rep.dim, cfg.max_dim)?;
            let result = decompose_rep(&rep, &cfg.smily())?;
            run_finite(&rep, &result, cfg)
        }
        Command::Su2 { spins } => run_su2(spins, cfg),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(out) => {
            let written = match &cli.config.output {
                Some(path) => std::fs::write(path, &out.text).map_err(|e| format!("{}: {e}", path.display())),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            match written {
                Ok(()) => out.code,
                Err(message) => {
                    eprintln!("{}", CliError::input("Io", message).to_json());
                    EXIT_INPUT
                }
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}
