use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use sturmspec::bands::{Coupling, FrequencySpec};
use sturmspec::numkernel::PrecisionContext;

use crate::error::AppError;

pub const DEFAULT_SEED: u64 = 0x5eed_2024;
pub const MAX_DEPTH: usize = 40;

#[derive(Debug, Parser)]
#[command(name = "sturmspec", version, about = "Band hierarchy, density of states and dimension estimates for Sturm Hamiltonians")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Band tree with gap ratios
    Bands,
    /// Spectral, DOS and Hölder exponents
    Dims,
    /// Density-of-states weights and transition matrix
    Dos,
    /// τ(q) and its Legendre transform
    Multifractal,
    /// Large-coupling constants and their ordering
    Asymptotics,
    /// Invariant suite; exit code 3 on any failure
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Dims => "dims",
            Command::Dos => "dos",
            Command::Multifractal => "multifractal",
            Command::Asymptotics => "asymptotics",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Tail digit of the continued fraction
    #[arg(long, global = true, default_value_t = 1)]
    pub kappa: u32,
    /// Leading digits "a0,a1,..." before the constant tail
    #[arg(long, global = true)]
    pub prefix: Option<String>,
    /// Coupling constant
    #[arg(long = "V", global = true, default_value_t = 24.0)]
    pub coupling: f64,
    /// Band order (bands, dos, verify) or word length above the prefix vector (dims, multifractal)
    #[arg(long, global = true, default_value_t = 8)]
    pub depth: usize,
    /// Mantissa bits; raised automatically when the depth needs more
    #[arg(long, global = true)]
    pub bits: Option<u32>,
    /// Relative endpoint tolerance
    #[arg(long, global = true, default_value_t = 1e-15)]
    pub tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Directory for cached band trees
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Seed for sampled checks
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Recompute the exponents under a second prefix vector
    #[arg(long, global = true)]
    pub compare_prefix_vectors: bool,
    /// Largest tail digit in the inequality table
    #[arg(long, global = true, default_value_t = 8)]
    pub kappa_max: u32,
    /// Also write every table and the JSON document into this directory
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

/// Validated configuration; nothing is computed before this exists.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub spec: FrequencySpec,
    pub coupling: Coupling,
    pub depth: usize,
    pub ctx: PrecisionContext,
    pub format: Format,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub compare_prefix_vectors: bool,
    pub kappa_max: u32,
    pub out_dir: Option<PathBuf>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    command: &'static str,
    prefix: &'a [u32],
    kappa: u32,
    coupling_bits: u64,
    depth: usize,
    mantissa_bits: u32,
    rel_tol_bits: u64,
    seed: u64,
    compare_prefix_vectors: bool,
    kappa_max: u32,
}

impl RunConfig {
    pub fn from_options(command: Command, o: &Options) -> Result<Self, AppError> {
        let invalid = |m: String| AppError::Validation(m);
        if o.kappa == 0 {
            return Err(invalid("--kappa must be at least 1".into()));
        }
        let spec = match &o.prefix {
            Some(text) => FrequencySpec::parse_prefix(text, o.kappa),
            None => FrequencySpec::constant_type(o.kappa),
        }
        .map_err(|e| invalid(format!("--prefix: {e}")))?;
        if !o.coupling.is_finite() || o.coupling <= 4.0 {
            return Err(invalid(format!("--V must exceed 4, got {}", o.coupling)));
        }
        let coupling = Coupling::new(o.coupling).map_err(|e| invalid(format!("--V: {e}")))?;
        let mut warnings = Vec::new();
        if !coupling.in_estimator_range() {
            warnings.push(format!("V = {} is outside the V > 20 range the estimates assume", o.coupling));
        }
        if o.depth == 0 || o.depth > MAX_DEPTH {
            return Err(invalid(format!("--depth must be in 1..={MAX_DEPTH}, got {}", o.depth)));
        }
        if !(o.tol > 0.0 && o.tol <= 1e-3) {
            return Err(invalid(format!("--tol must be in (0, 1e-3], got {}", o.tol)));
        }
        // enough bits for the requested tolerance, at least double precision
        let needed = (53.0f64).max((-o.tol.log2()).ceil() + 8.0) as u32;
        let bits = o.bits.unwrap_or(needed);
        let ctx = PrecisionContext::new(bits, 1e-12, o.tol).map_err(|e| invalid(format!("--bits/--tol: {e}")))?;
        if command == Command::Asymptotics && o.kappa_max < 2 {
            return Err(invalid(format!("--kappa-max must be at least 2, got {}", o.kappa_max)));
        }
        Ok(Self {
            command,
            spec,
            coupling,
            depth: o.depth,
            ctx,
            format: o.format,
            cache_dir: o.cache_dir.clone(),
            seed: o.seed,
            compare_prefix_vectors: o.compare_prefix_vectors,
            kappa_max: o.kappa_max,
            out_dir: o.out_dir.clone(),
            warnings,
        })
    }

    pub fn kappa(&self) -> u32 {
        self.spec.kappa()
    }

    /// Short hash of every input that affects the output.
    pub fn hash(&self) -> String {
        let fields = HashedFields {
            command: self.command.name(),
            prefix: self.spec.prefix(),
            kappa: self.kappa(),
            coupling_bits: self.coupling.value().to_bits(),
            depth: self.depth,
            mantissa_bits: self.ctx.mantissa_bits,
            rel_tol_bits: self.ctx.rel_tol.to_bits(),
            seed: self.seed,
            compare_prefix_vectors: self.compare_prefix_vectors,
            kappa_max: self.kappa_max,
        };
        let text = serde_json::to_string(&fields).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "command": self.command.name(),
            "prefix": self.spec.prefix(),
            "kappa": self.kappa(),
            "V": self.coupling.value(),
            "depth": self.depth,
            "mantissa_bits": self.ctx.mantissa_bits,
            "rel_tol": self.ctx.rel_tol,
            "seed": self.seed,
            "hash": self.hash(),
        })
    }
}
