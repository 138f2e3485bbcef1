use std::str::FromStr;

use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use qtoolkit::decoherence::{self, Estimator, FamilyKind, LambdaDistribution, PerturbationEnsemble};
use qtoolkit::evolution::{self, HamiltonianSpec};
use qtoolkit::fock::{self, DensityMatrix, FockSpec, Statistics};
use qtoolkit::geometry_gns::{self, AlgebraState};
use qtoolkit::grassmann::{self, GrassmannJson, Style};
use qtoolkit::lfunctional;
use qtoolkit::linalg::{self, real, CMatrix, CVector, MatrixJson};
use qtoolkit::weyl_clifford::{self, SigmaForm};
use qtoolkit::{statmech, Error, Result, WeylPoly, C64};

use crate::emit::{Cell, Output};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Truncated Fock spaces: spectra, commutation defects, Poisson vectors.
    #[command(subcommand)]
    Fock(FockCmd),
    /// Normal-ordered products and the exponential Weyl relation.
    #[command(subcommand)]
    Weyl(WeylCmd),
    /// Grassmann expressions and Pfaffians.
    #[command(subcommand)]
    Grassmann(GrassmannCmd),
    /// Propagators and Trotter convergence tables.
    #[command(subcommand)]
    Evolve(EvolveCmd),
    /// Off-diagonal decay of a state averaged over random adiabatic phases.
    Decohere(DecohereArgs),
    /// Two-point functions, pole fits and the quantum-classical gap sweep.
    #[command(subcommand)]
    Lfunc(LfuncCmd),
    /// Free gases and Gibbs states.
    #[command(subcommand)]
    Statmech(StatmechCmd),
    /// GNS construction, induced generators and Bloch vectors.
    #[command(subcommand)]
    Gns(GnsCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stat {
    Bose,
    Fermi,
}

impl From<Stat> for Statistics {
    fn from(s: Stat) -> Self {
        match s {
            Stat::Bose => Statistics::Bose,
            Stat::Fermi => Statistics::Fermi,
        }
    }
}

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Reals(pub Vec<f64>);

impl FromStr for Reals {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Reals)
    }
}

/// Comma-separated list, or `lo:hi:step` with `hi` included when it lies on
/// the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if !s.contains(':') {
            return Reals::from_str(s).map(|r| Grid(r.0));
        }
        let parts = Reals::from_str(&s.replace(':', ","))?.0;
        let [lo, hi, step] = parts[..] else {
            return Err(format!("`{s}`: expected lo:hi:step"));
        };
        if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(format!("`{s}`: need lo <= hi and step > 0"));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(format!("`{s}`: more than 10^6 points"));
        }
        Ok(Grid((0..count).map(|i| lo + i as f64 * step).collect()))
    }
}

/// Comma-separated complex numbers such as `0.5`, `1-2i`, `0.3i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Complexes(pub Vec<C64>);

impl FromStr for Complexes {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|x| C64::from_str(x.trim()).map_err(|_| format!("`{x}` is not a complex number")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Complexes)
    }
}

/// Inline JSON, or `@path` to read it from a file.
fn json_arg<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let body = match text.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{path}: {e}")))?,
        None => text.to_string(),
    };
    serde_json::from_str(&body).map_err(|e| Error::Parse(e.to_string()))
}

fn matrix_arg(text: &str) -> Result<CMatrix> {
    let m: MatrixJson = json_arg(text)?;
    CMatrix::try_from(&m)
}

fn hamiltonian_arg(text: &str) -> Result<CMatrix> {
    json_arg::<HamiltonianSpec>(text)?.build()
}

fn density_arg(text: &str) -> Result<DensityMatrix> {
    DensityMatrix::new(matrix_arg(text)?)
}

pub struct Context {
    pub seed: u64,
    pub tol: Option<f64>,
}

impl Context {
    fn tol(&self, default: f64) -> Result<f64> {
        let t = self.tol.unwrap_or(default);
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Invalid("--tol must be positive".into()));
        }
        Ok(t)
    }
}

pub fn dispatch(cmd: &Command, ctx: &Context) -> Result<Output> {
    match cmd {
        Command::Fock(c) => fock_cmd(c),
        Command::Weyl(c) => weyl_cmd(c, ctx),
        Command::Grassmann(c) => grassmann_cmd(c),
        Command::Evolve(c) => evolve_cmd(c),
        Command::Decohere(a) => decohere_cmd(a, ctx),
        Command::Lfunc(c) => lfunc_cmd(c, ctx),
        Command::Statmech(c) => statmech_cmd(c),
        Command::Gns(c) => gns_cmd(c),
    }
}

// fock

#[derive(Debug, Args)]
pub struct SpaceArgs {
    #[arg(long, value_enum, default_value = "bose")]
    stat: Stat,
    /// Per-mode cutoffs for bosons; a single value applies to every mode.
    #[arg(long)]
    cutoffs: Option<Reals>,
    /// Mode count (defaults to the length of the per-mode lists).
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    hbar: f64,
}

impl SpaceArgs {
    fn build(&self, modes_hint: Option<usize>) -> Result<FockSpec> {
        let given = self.cutoffs.as_ref().map(|c| c.0.len());
        let modes = self
            .modes
            .or(modes_hint)
            .or(given)
            .ok_or_else(|| Error::Invalid("give --modes or per-mode values".into()))?;
        match self.stat {
            Stat::Fermi => FockSpec::fermi(modes)?.with_hbar(self.hbar),
            Stat::Bose => {
                let raw = self
                    .cutoffs
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("bosonic spaces need --cutoffs".into()))?;
                let mut cut = Vec::new();
                for &x in &raw.0 {
                    if !(x >= 0.0 && x.fract() == 0.0) {
                        return Err(Error::InvalidSpec(format!("cutoff {x} is not a non-negative integer")));
                    }
                    cut.push(x as usize);
                }
                let cut = match cut.len() {
                    1 => vec![cut[0]; modes],
                    n if n == modes => cut,
                    n => return Err(Error::InvalidSpec(format!("{n} cutoffs for {modes} modes"))),
                };
                FockSpec::bose_with_hbar(&cut, self.hbar)
            }
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum FockCmd {
    /// Spectrum of `Σ ε_k a†_k a_k`, one row per basis state.
    Spectrum {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, allow_hyphen_values = true)]
        eps: Reals,
    },
    /// Commutation-relation defects on the safe subspace and on the whole space.
    Ccr {
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Eigen-defects of the truncated Poisson vector with amplitudes `f`.
    Poisson {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, allow_hyphen_values = true)]
        f: Complexes,
    },
}

fn fock_cmd(cmd: &FockCmd) -> Result<Output> {
    match cmd {
        FockCmd::Spectrum { space, eps } => {
            let spec = space.build(Some(eps.0.len()))?;
            let h = fock::quadratic_hamiltonian(&spec, &eps.0)?;
            let mut rows: Vec<(f64, usize)> = (0..spec.dim()).map(|i| (h[(i, i)].re, i)).collect();
            rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let eig = linalg::eigvalsh(&h);
            let deviation = rows.iter().zip(&eig).map(|(r, e)| (r.0 - e).abs()).fold(0.0, f64::max);
            let mut header = vec!["index".to_string()];
            header.extend((1..=spec.modes()).map(|k| format!("n{k}")));
            header.push("energy".into());
            let table = rows
                .iter()
                .map(|&(e, i)| {
                    let mut row = vec![Cell::from(i)];
                    row.extend(spec.occupations(i).into_iter().map(Cell::from));
                    row.push(Cell::Num(e));
                    row
                })
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            Output::table(&header, table)
                .with_meta("dim", spec.dim())?
                .with_meta("eigensolver_deviation", deviation)
        }
        FockCmd::Ccr { space } => {
            let spec = space.build(None)?;
            let r = fock::ccr_defect(&spec);
            Output::record(json!({"statistics": format!("{:?}", spec.statistics()).to_lowercase(),
                "dim": spec.dim(), "safe": r.safe, "unrestricted": r.unrestricted}))
        }
        FockCmd::Poisson { space, f } => {
            let spec = space.build(Some(f.0.len()))?;
            let mut rows = Vec::new();
            for k in 0..spec.modes() {
                let d = fock::poisson_eigen_defect(&spec, &f.0, k)?;
                rows.push(vec![Cell::from(k + 1), Cell::Num(d.defect), Cell::Num(d.bound)]);
            }
            Ok(Output::table(&["mode", "defect", "bound"], rows))
        }
    }
}

// weyl

#[derive(Debug, Subcommand)]
pub enum WeylCmd {
    /// Normal-ordered product of two polynomials, e.g. `"a[1]" "a*[1]"`.
    Product {
        #[arg(long, value_enum, default_value = "bose")]
        stat: Stat,
        #[arg(long, default_value_t = 1)]
        modes: usize,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        lhs: String,
        rhs: String,
    },
    /// `V_α V_β = exp(−iħ ασβ/2) V_{α+β}` on a truncated oscillator.
    Check {
        #[arg(long, default_value_t = 1)]
        modes: usize,
        #[arg(long, default_value_t = 30)]
        cutoff: usize,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        /// Per-mode scales of the block form (default all ones).
        #[arg(long)]
        scales: Option<Reals>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Reals,
        #[arg(long, allow_hyphen_values = true)]
        beta: Reals,
    },
}

fn weyl_cmd(cmd: &WeylCmd, ctx: &Context) -> Result<Output> {
    match cmd {
        WeylCmd::Product { stat, modes, hbar, lhs, rhs } => {
            let parse = |t: &str| WeylPoly::parse((*stat).into(), *modes, real(*hbar), t);
            let p = parse(lhs)?.product(&parse(rhs)?)?;
            let text = p.to_text();
            Ok(Output::Record {
                value: json!({"product": text, "terms": p.len()}),
                text: Some(text),
            })
        }
        WeylCmd::Check { modes, cutoff, hbar, scales, alpha, beta } => {
            let tol = ctx.tol(1e-8)?;
            let sigma = match scales {
                Some(s) => SigmaForm::scaled(&s.0)?,
                None => SigmaForm::canonical(*modes),
            };
            let spec = FockSpec::bose_with_hbar(&vec![*cutoff; *modes], *hbar)?;
            let r = weyl_clifford::weyl_exponential_check(&sigma, &alpha.0, &beta.0, &spec, tol)?;
            Output::record(r)?.with_meta("tol", tol)
        }
    }
}

// grassmann

#[derive(Debug, Subcommand)]
pub enum GrassmannCmd {
    /// Evaluates an expression in generators `e1, e2, …`, e.g. `"cos(e1 e2 + e3 e4)"`.
    Eval { expression: String },
    /// Pfaffian and determinant of an antisymmetric matrix given as nested JSON arrays.
    Pfaffian {
        #[arg(long)]
        matrix: String,
    },
}

fn grassmann_cmd(cmd: &GrassmannCmd) -> Result<Output> {
    match cmd {
        GrassmannCmd::Eval { expression } => {
            let x = grassmann::parse_expression(expression)?;
            let text = x.format(Style::Plain);
            Ok(Output::Record {
                value: json!({"expression": expression, "result": text, "element": GrassmannJson::from(&x)}),
                text: Some(text),
            })
        }
        GrassmannCmd::Pfaffian { matrix } => {
            let rows: Vec<Vec<f64>> = json_arg(matrix)?;
            let a: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&x| real(x)).collect()).collect();
            let pf = grassmann::pfaffian(&a)?;
            let det = grassmann::det(&a);
            Output::record(json!({"pfaffian": pf.re, "det": det.re, "defect": (pf * pf - det).norm()}))
        }
    }
}

// evolve

#[derive(Debug, Subcommand)]
pub enum EvolveCmd {
    /// Trotter error table. Without `--hamiltonian` this splits the truncated
    /// oscillator into kinetic and potential parts; with one it splits the
    /// given matrix into diagonal and off-diagonal parts.
    Trotter {
        #[arg(long)]
        hamiltonian: Option<String>,
        #[arg(long, default_value_t = 30)]
        cutoff: usize,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value = "16,32,64,128,256")]
        n: Reals,
    },
    /// Propagator `exp(−iHt/ħ)`.
    Propagate {
        #[arg(long)]
        hamiltonian: String,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
    },
}

fn counts(r: &Reals) -> Result<Vec<usize>> {
    r.0.iter()
        .map(|&x| {
            if x >= 1.0 && x.fract() == 0.0 && x <= 1e7 {
                Ok(x as usize)
            } else {
                Err(Error::Invalid(format!("slice count {x} must be a positive integer")))
            }
        })
        .collect()
}

fn evolve_cmd(cmd: &EvolveCmd) -> Result<Output> {
    match cmd {
        EvolveCmd::Trotter { hamiltonian, cutoff, hbar, t, n } => {
            let factors: Vec<CMatrix> = match hamiltonian {
                None => evolution::oscillator_split(*cutoff, *hbar)?.to_vec(),
                Some(text) => {
                    let h = hamiltonian_arg(text)?;
                    let diag = CMatrix::from_diagonal(&h.diagonal());
                    let off = &h - &diag;
                    let g = -linalg::c(0.0, 1.0 / hbar);
                    vec![diag * g, off * g]
                }
            };
            let r = evolution::trotter_convergence(&factors, *t, &counts(n)?)?;
            let rows = r
                .rows
                .iter()
                .map(|x| vec![Cell::from(x.n), Cell::Num(x.error), Cell::Num(x.norm)])
                .collect();
            Output::table(&["n", "error", "norm"], rows).with_meta("order", r.order)
        }
        EvolveCmd::Propagate { hamiltonian, t, hbar } => {
            let h = hamiltonian_arg(hamiltonian)?;
            let u = linalg::propagator(&h, *t, *hbar)?;
            Output::record(json!({"propagator": MatrixJson::from(&u), "unitarity_defect": linalg::unitarity_defect(&u)}))
        }
    }
}

// decohere

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Mc,
    Quad,
}

#[derive(Debug, Args)]
pub struct DecohereArgs {
    /// Named family: gap, qubit or ladder.
    #[arg(long, default_value = "gap")]
    family: String,
    /// `uniform:lo:hi`, `bump:center:half_width`, `degenerate:at` or `samples:x1,x2,…`.
    #[arg(long, default_value = "uniform:-1:1", allow_hyphen_values = true)]
    dist: String,
    /// Adiabatic rates `α = 1/T`.
    #[arg(long, alias = "alphas", default_value = "0.1")]
    alpha: Reals,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, value_enum, default_value = "mc")]
    estimator: EstimatorArg,
    /// Initial density matrix; the uniform superposition by default.
    #[arg(long)]
    state: Option<String>,
}

fn parse_distribution(text: &str) -> Result<LambdaDistribution> {
    let (name, rest) = text.split_once(':').unwrap_or((text, ""));
    let nums = || -> Result<Vec<f64>> {
        if rest.is_empty() {
            return Ok(vec![]);
        }
        Reals::from_str(&rest.replace(':', ","))
            .map(|r| r.0)
            .map_err(Error::Parse)
    };
    let want = |k: usize| -> Result<Vec<f64>> {
        let v = nums()?;
        if v.len() == k {
            Ok(v)
        } else {
            Err(Error::Invalid(format!("distribution `{name}` takes {k} parameters")))
        }
    };
    Ok(match name {
        "uniform" => {
            let v = want(2)?;
            LambdaDistribution::Uniform { lo: v[0], hi: v[1] }
        }
        "bump" => {
            let v = want(2)?;
            LambdaDistribution::Bump {
                center: v[0],
                half_width: v[1],
            }
        }
        "degenerate" => LambdaDistribution::Degenerate { at: want(1)?[0] },
        "samples" => LambdaDistribution::Samples { points: nums()? },
        other => return Err(Error::Invalid(format!("unknown distribution `{other}`"))),
    })
}

fn decohere_cmd(a: &DecohereArgs, ctx: &Context) -> Result<Output> {
    let kind = FamilyKind::parse(&a.family)?;
    let dist = parse_distribution(&a.dist)?;
    let estimator = match a.estimator {
        EstimatorArg::Mc => Estimator::MonteCarlo,
        EstimatorArg::Quad => Estimator::Quadrature,
    };
    let first = *a.alpha.0.first().ok_or_else(|| Error::Invalid("no alpha given".into()))?;
    let mut ens = PerturbationEnsemble::new(kind.build(), decoherence::parabolic_path, dist, first, a.trials, ctx.seed)?;
    let d = ens.dim();
    let k0 = match &a.state {
        Some(s) => density_arg(s)?,
        None => DensityMatrix::pure(&CVector::from_element(d, real(1.0 / (d as f64).sqrt())))?,
    };
    let mut rows = Vec::new();
    for &alpha in &a.alpha.0 {
        ens = ens.with_alpha(alpha)?;
        let r = ens.average_density(&k0, estimator)?;
        rows.push(vec![Cell::Num(alpha), Cell::Num(r.offdiag), Cell::Num(r.stderr)]);
    }
    Output::table(&["alpha", "offdiag", "stderr"], rows)
        .with_meta("family", kind)?
        .with_meta("distribution", ens.distribution())?
        .with_meta("trials", a.trials)?
        .with_meta("seed", ctx.seed)
}

// lfunc

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Greater,
    Lesser,
}

#[derive(Debug, Args)]
pub struct GreenArgs {
    /// Thermal occupation of the mode.
    #[arg(long, default_value_t = 0.0)]
    n: f64,
    #[arg(long, allow_hyphen_values = true)]
    eps: f64,
    /// Sampled window length `T`.
    #[arg(long, default_value_t = 50.0)]
    window: f64,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    hbar: f64,
}

impl GreenArgs {
    fn samples(&self) -> Result<(Vec<lfunctional::GreenSample>, usize)> {
        if !(self.dt > 0.0 && self.window > 0.0 && self.dt.is_finite() && self.window.is_finite()) {
            return Err(Error::Invalid("--window and --dt must be positive".into()));
        }
        let count = (self.window / self.dt).round();
        if !(1.0..=1e6).contains(&count) {
            return Err(Error::Invalid(format!("{count} samples requested (1..=10^6)")));
        }
        let taus: Vec<f64> = (0..count as usize).map(|j| j as f64 * self.dt).collect();
        let s = lfunctional::two_point_green(&[self.n], &[self.eps], 0, self.hbar, &taus)?;
        Ok((s, lfunctional::green_cutoff(self.n)?))
    }
}

#[derive(Debug, Subcommand)]
pub enum LfuncCmd {
    /// `G^>(τ) = ⟨a(τ)a†⟩` or `G^<(τ) = ⟨a†(τ)a⟩` of a free thermal mode.
    Green {
        #[command(flatten)]
        g: GreenArgs,
        #[arg(long, value_enum, default_value = "greater")]
        which: Which,
    },
    /// Pole location of `G^>` from its sampled transform.
    Pole {
        #[command(flatten)]
        g: GreenArgs,
        /// Finest acceptable frequency resolution `2π/T`.
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Gap between quantum and classical Harper flows as `ħ` shrinks.
    Sweep {
        #[arg(long, default_value = "0.1,0.03,0.01,0.003,0.001")]
        hbar: Reals,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
}

fn lfunc_cmd(cmd: &LfuncCmd, _ctx: &Context) -> Result<Output> {
    match cmd {
        LfuncCmd::Green { g, which } => {
            let (s, cutoff) = g.samples()?;
            let rows = s
                .iter()
                .map(|x| {
                    let z = match which {
                        Which::Greater => x.greater,
                        Which::Lesser => x.lesser,
                    };
                    vec![Cell::Num(x.tau), Cell::Num(z.re), Cell::Num(z.im)]
                })
                .collect();
            Output::table(&["tau", "re", "im"], rows)
                .with_meta("cutoff", cutoff)?
                .with_meta("tail_bound", 1e-15)
        }
        LfuncCmd::Pole { g, resolution } => {
            let (s, cutoff) = g.samples()?;
            let signal: Vec<C64> = s.iter().map(|x| x.greater).collect();
            let fit = lfunctional::pole_fit(&signal, g.dt, *resolution)?;
            Output::record(json!({
                "eps_hat": fit.eps_hat,
                "eps": g.eps,
                "error": (fit.eps_hat - g.eps).abs(),
                "resolution": fit.resolution,
                "window": fit.window,
                "cutoff": cutoff,
            }))
        }
        LfuncCmd::Sweep { hbar, t } => {
            let r = lfunctional::hbar_sweep(&hbar.0, *t)?;
            let rows = r.rows.iter().map(|x| vec![Cell::Num(x.hbar), Cell::Num(x.gap)]).collect();
            Output::table(&["hbar", "gap"], rows).with_meta("order", r.order)
        }
    }
}

// statmech

#[derive(Debug, Subcommand)]
pub enum StatmechCmd {
    /// Free-gas thermodynamics `(β, Z, E, S, F, n̄_k)` over inverse temperatures.
    Sweep {
        #[arg(long, allow_hyphen_values = true)]
        eps: Reals,
        #[arg(long, value_enum, default_value = "bose")]
        stat: Stat,
        /// List or `lo:hi:step`.
        #[arg(long, allow_hyphen_values = true)]
        beta: Grid,
    },
    /// Gibbs state of a Hamiltonian at inverse temperature `β`.
    Gibbs {
        #[arg(long)]
        hamiltonian: String,
        #[arg(long)]
        beta: f64,
    },
    /// Bosonic truncated trace against the closed form.
    Truncation {
        #[arg(long)]
        eps: Reals,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 20)]
        cutoff: usize,
    },
}

fn statmech_cmd(cmd: &StatmechCmd) -> Result<Output> {
    match cmd {
        StatmechCmd::Sweep { eps, stat, beta } => {
            let rows = statmech::sweep(&eps.0, (*stat).into(), &beta.0)?;
            let mut header: Vec<String> = ["beta", "Z", "E", "S", "F"].iter().map(|s| s.to_string()).collect();
            header.extend((1..=eps.0.len()).map(|k| format!("n{k}")));
            let table = rows
                .into_iter()
                .map(|r| {
                    let mut row: Vec<Cell> = [r.beta, r.z, r.energy, r.entropy, r.free_energy]
                        .into_iter()
                        .map(Cell::Num)
                        .collect();
                    row.extend(r.occupations.into_iter().map(Cell::Num));
                    row
                })
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            Ok(Output::table(&header, table))
        }
        StatmechCmd::Gibbs { hamiltonian, beta } => {
            let h = hamiltonian_arg(hamiltonian)?;
            let th = statmech::thermodynamics(&h, *beta)?;
            let g = statmech::gibbs_state(&h, *beta)?;
            Output::record(json!({
                "thermo": th,
                "energies": g.energies,
                "populations": g.populations(),
                "stationarity_defect": statmech::stationarity_defect(&h, *beta)?,
            }))
        }
        StatmechCmd::Truncation { eps, beta, cutoff } => {
            Output::record(statmech::bose_truncation_check(&eps.0, *beta, *cutoff)?)
        }
    }
}

// gns

#[derive(Debug, Subcommand)]
pub enum GnsCmd {
    /// Carrier of the GNS representation of a density matrix on the full matrix algebra.
    Construct {
        #[arg(long)]
        state: String,
    },
    /// Generator induced by a Hamiltonian on the carrier of a stationary state.
    Induced {
        #[arg(long)]
        state: String,
        #[arg(long)]
        hamiltonian: String,
    },
    /// Bloch vector of a qubit state.
    Bloch {
        #[arg(long)]
        state: String,
    },
}

fn gns_cmd(cmd: &GnsCmd) -> Result<Output> {
    match cmd {
        GnsCmd::Construct { state } => {
            let st = AlgebraState::new(density_arg(state)?)?;
            let g = geometry_gns::gns_construct(&st)?;
            Output::record(g.summary())?
                .with_meta("cyclic_rank", g.cyclic_rank())?
                .with_meta("threshold", geometry_gns::GRAM_THRESHOLD)
        }
        GnsCmd::Induced { state, hamiltonian } => {
            let st = AlgebraState::new(density_arg(state)?)?;
            let h = hamiltonian_arg(hamiltonian)?;
            Output::record(geometry_gns::induced_hamiltonian(&st, &h)?)
        }
        GnsCmd::Bloch { state } => {
            let v = geometry_gns::bloch_vector(&density_arg(state)?)?;
            Output::record(json!({"bloch": v, "radius": v.iter().map(|x| x * x).sum::<f64>().sqrt()}))
        }
    }
}
