//! Command-line interface to the conservation-law toolkit.
//!
//! Most subcommands act on a system file (see the repository README for
//! the format). Commands that only need a symbol table fall back to a
//! default session with independent variables `t, x` and one dependent
//! variable `u` when no file is given. `--json` switches every command
//! to machine-readable output.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use conslaw_kit::conslaw::{
    cosymmetry_test, extract_characteristic, solve_null_divergence_2d, verify_characteristic,
    verify_conserved_vector, Characteristic,
};
use conslaw_kit::corpus::run_corpus;
use conslaw_kit::diffsys::DiffSystem;
use conslaw_kit::error::{Error, Result};
use conslaw_kit::expr::Expr;
use conslaw_kit::parse::{parse_expr, parse_system_file, print_expr, SystemFile};
use conslaw_kit::potential::{
    linear_cv_to_extended_char, purity_test, CoveringKind, PotentialStructure, PurityVerdict,
};
use conslaw_kit::session::Session;
use conslaw_kit::variational::{euler, euler_all, homotopy_divergence, is_total_divergence};

#[derive(Parser)]
#[command(
    name = "conslaw",
    version,
    about = "Exact conservation-law calculus for differential systems"
)]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Apply the Euler operator to an expression.
    Euler {
        /// System file providing the symbol table.
        #[arg(short, long, value_name = "FILE")]
        sys: Option<PathBuf>,
        /// Restrict to one dependent variable.
        #[arg(long, value_name = "NAME")]
        dep: Option<String>,
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Test whether an expression is a total divergence.
    DivTest {
        #[arg(short, long, value_name = "FILE")]
        sys: Option<PathBuf>,
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Invert a total divergence into a current with that divergence.
    Homotopy {
        #[arg(short, long, value_name = "FILE")]
        sys: Option<PathBuf>,
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Reduce an expression to normal form modulo a system.
    Reduce {
        #[arg(short, long, value_name = "FILE")]
        sys: PathBuf,
        #[arg(allow_hyphen_values = true)]
        expr: String,
    },
    /// Resolve a two-dimensional null divergence by a potential function:
    /// given (alpha, beta) with D_t(alpha) + D_x(beta) = 0 on solutions,
    /// find phi with D_x(phi) = alpha and D_t(phi) = -beta.
    Phi {
        #[arg(short, long, value_name = "FILE")]
        sys: Option<PathBuf>,
        #[arg(allow_hyphen_values = true)]
        alpha: String,
        #[arg(allow_hyphen_values = true)]
        beta: String,
    },
    /// Verify that currents of a system file are conserved.
    CheckCv {
        #[arg(short, long, value_name = "FILE")]
        sys: PathBuf,
        /// Current name; all named currents when omitted.
        name: Option<String>,
    },
    /// Extract the characteristic of a conserved current.
    Char {
        #[arg(short, long, value_name = "FILE")]
        sys: PathBuf,
        /// Current name from the file, or comma-separated components.
        #[arg(allow_hyphen_values = true)]
        current: String,
    },
    /// Verify a characteristic against a conserved current.
    VerifyChar {
        #[arg(short, long, value_name = "FILE")]
        sys: PathBuf,
        /// Check the extended-characteristic identity over the covering
        /// instead of taking explicit multipliers.
        #[arg(long)]
        extended: bool,
        #[arg(allow_hyphen_values = true)]
        current: String,
        /// Comma-separated multipliers, one per minimal equation
        /// (omitted with --extended).
        #[arg(allow_hyphen_values = true)]
        chi: Option<String>,
    },
    /// Check that the characteristic of a conserved current is a
    /// cosymmetry.
    Cosym {
        #[arg(short, long, value_name = "FILE")]
        sys: PathBuf,
        #[arg(allow_hyphen_values = true)]
        current: String,
    },
    /// Report the potential structure a system file builds.
    Potentialize {
        #[arg(short, long, value_name = "FILE")]
        sys: PathBuf,
    },
    /// Decide whether a conservation law of the combined system is
    /// trivial, strictly potential, or induced by a local law of the
    /// base system (with a potential-free witness current).
    Purity {
        #[arg(short, long, value_name = "FILE")]
        sys: PathBuf,
        #[arg(allow_hyphen_values = true)]
        current: String,
    },
    /// Run the bundled example corpus.
    Corpus {
        /// Only run entries whose id contains this substring.
        #[arg(long, value_name = "PAT")]
        filter: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if json {
                println!(
                    "{}",
                    json!({ "error": e.to_string(), "exit_code": e.exit_code() })
                );
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_file(path: &PathBuf) -> Result<SystemFile> {
    let src = fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_system_file(&src)
}

fn default_session() -> Session {
    let mut s = Session::new();
    s.add_indep("t").unwrap();
    s.add_indep("x").unwrap();
    s.add_dep("u").unwrap();
    s
}

/// Symbol context for commands that accept an optional system file.
enum Ctx {
    File(Box<SystemFile>),
    Plain(DiffSystem),
}

impl Ctx {
    fn open(sys: Option<&PathBuf>) -> Result<Ctx> {
        match sys {
            Some(p) => Ok(Ctx::File(Box::new(load_file(p)?))),
            None => Ok(Ctx::Plain(DiffSystem::new(default_session(), Vec::new())?)),
        }
    }

    fn system(&self) -> &DiffSystem {
        match self {
            Ctx::File(f) => f.working(),
            Ctx::Plain(s) => s,
        }
    }

    fn sess(&self) -> &Session {
        self.system().sess()
    }
}

/// Splits on commas that are not nested inside parentheses.
fn split_components(s: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                cur.push(ch);
            }
            ',' if depth == 0 => {
                parts.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    parts.push(cur.trim().to_string());
    parts
}

/// A current given either by name (looked up in the file) or as
/// comma-separated components.
fn resolve_current(file: &SystemFile, spec: &str) -> Result<Vec<Expr>> {
    if let Some(f) = file.cv(spec) {
        return Ok(f.clone());
    }
    let sess = file.working().sess();
    split_components(spec)
        .iter()
        .map(|c| parse_expr(sess, c))
        .collect()
}

fn parse_components(sess: &Session, spec: &str) -> Result<Vec<Expr>> {
    split_components(spec)
        .iter()
        .map(|c| parse_expr(sess, c))
        .collect()
}

fn structure_of(file: &SystemFile) -> Result<&PotentialStructure> {
    file.structure
        .as_ref()
        .ok_or_else(|| Error::Invalid("the system file declares no potentials".into()))
}

fn kind_str(k: CoveringKind) -> &'static str {
    match k {
        CoveringKind::TwoDim => "two-dimensional potential system",
        CoveringKind::Abelian => "Abelian covering",
        CoveringKind::Standard => "standard potential system",
        CoveringKind::General => "general covering",
    }
}

fn emit(json_mode: bool, v: Value, text: String) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&v).unwrap());
    } else {
        println!("{text}");
    }
}

fn current_lines(sess: &Session, label: &str, f: &[Expr]) -> String {
    f.iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "  {label}[{}] = {}",
                sess.indep_name(i),
                print_expr(sess, c)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn current_json(sess: &Session, f: &[Expr]) -> Value {
    Value::Array(
        f.iter()
            .map(|c| Value::String(print_expr(sess, c)))
            .collect(),
    )
}

fn char_pairs(sys: &DiffSystem, chi: &Characteristic) -> Vec<(String, String)> {
    sys.minimal_indices()
        .iter()
        .zip(&chi.components)
        .map(|(&k, c)| {
            let lead = print_expr(sys.sess(), &sys.equations()[k].lead_expr());
            (lead, print_expr(sys.sess(), c))
        })
        .collect()
}

fn run(cli: Cli) -> Result<u8> {
    let json = cli.json;
    match cli.cmd {
        Cmd::Euler { sys, dep, expr } => {
            let ctx = Ctx::open(sys.as_ref())?;
            let sess = ctx.sess();
            let e = parse_expr(sess, &expr)?;
            let (names, comps): (Vec<String>, Vec<Expr>) = match dep {
                Some(name) => {
                    let a = sess
                        .dep_index(&name)
                        .ok_or_else(|| Error::UnknownSymbol(name.clone()))?;
                    (vec![name], vec![euler(sess, &e, a)?])
                }
                None => (
                    (0..sess.num_deps())
                        .map(|a| sess.dep_name(a).to_string())
                        .collect(),
                    euler_all(sess, &e)?,
                ),
            };
            let text = names
                .iter()
                .zip(&comps)
                .map(|(n, c)| format!("E_{n} = {}", print_expr(sess, c)))
                .collect::<Vec<_>>()
                .join("\n");
            let v = json!({
                "euler": names
                    .iter()
                    .zip(&comps)
                    .map(|(n, c)| (n.clone(), Value::String(print_expr(sess, c))))
                    .collect::<serde_json::Map<_, _>>()
            });
            emit(json, v, text);
            Ok(0)
        }
        Cmd::DivTest { sys, expr } => {
            let ctx = Ctx::open(sys.as_ref())?;
            let sess = ctx.sess();
            let e = parse_expr(sess, &expr)?;
            let yes = is_total_divergence(sess, &e)?;
            emit(
                json,
                json!({ "total_divergence": yes }),
                format!("total divergence: {}", if yes { "yes" } else { "no" }),
            );
            Ok(0)
        }
        Cmd::Homotopy { sys, expr } => {
            let ctx = Ctx::open(sys.as_ref())?;
            let sess = ctx.sess();
            let e = parse_expr(sess, &expr)?;
            let f = homotopy_divergence(sess, &e)?;
            emit(
                json,
                json!({ "current": current_json(sess, &f) }),
                current_lines(sess, "F", &f),
            );
            Ok(0)
        }
        Cmd::Reduce { sys, expr } => {
            let file = load_file(&sys)?;
            let s = file.working();
            let e = parse_expr(s.sess(), &expr)?;
            let r = s.reduce(&e)?;
            emit(
                json,
                json!({ "reduced": print_expr(s.sess(), &r) }),
                print_expr(s.sess(), &r),
            );
            Ok(0)
        }
        Cmd::Phi { sys, alpha, beta } => {
            let ctx = Ctx::open(sys.as_ref())?;
            let s = ctx.system();
            let a = parse_expr(s.sess(), &alpha)?;
            let b = parse_expr(s.sess(), &beta)?;
            let phi = solve_null_divergence_2d(s, &a, &b)?;
            emit(
                json,
                json!({ "phi": print_expr(s.sess(), &phi) }),
                format!("phi = {}", print_expr(s.sess(), &phi)),
            );
            Ok(0)
        }
        Cmd::CheckCv { sys, name } => {
            let file = load_file(&sys)?;
            let s = file.working();
            let targets: Vec<(String, Vec<Expr>)> = match name {
                Some(n) => {
                    let f = file
                        .cv(&n)
                        .ok_or_else(|| Error::Invalid(format!("no current named `{n}`")))?;
                    vec![(n, f.clone())]
                }
                None => file.cvs.clone(),
            };
            if targets.is_empty() {
                return Err(Error::Invalid(
                    "the system file declares no currents".into(),
                ));
            }
            let mut lines = Vec::new();
            for (n, f) in &targets {
                verify_conserved_vector(s, f)
                    .map_err(|e| Error::Invalid(format!("current `{n}`: {e}")))?;
                lines.push(format!("{n}: conserved"));
            }
            emit(
                json,
                json!({
                    "verified": targets.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>()
                }),
                lines.join("\n"),
            );
            Ok(0)
        }
        Cmd::Char { sys, current } => {
            let file = load_file(&sys)?;
            let s = file.working();
            let f = resolve_current(&file, &current)?;
            let (chi, adjusted) = extract_characteristic(s, &f)?;
            let pairs = char_pairs(s, &chi);
            let mut text = String::from("characteristic:\n");
            for (lead, c) in &pairs {
                text.push_str(&format!("  [{lead}] {c}\n"));
            }
            text.push_str("adjusted current:\n");
            text.push_str(&current_lines(s.sess(), "F", &adjusted));
            let v = json!({
                "characteristic": pairs
                    .iter()
                    .map(|(lead, c)| json!({ "equation": lead, "multiplier": c }))
                    .collect::<Vec<_>>(),
                "adjusted": current_json(s.sess(), &adjusted),
            });
            emit(json, v, text);
            Ok(0)
        }
        Cmd::VerifyChar {
            sys,
            extended,
            current,
            chi,
        } => {
            let file = load_file(&sys)?;
            let s = file.working();
            let f = resolve_current(&file, &current)?;
            if extended {
                let st = structure_of(&file)?;
                let ext = linear_cv_to_extended_char(st, &f)?;
                let sess = st.combined.sess();
                let mut text = String::from("extended characteristic identity verified\n");
                text.push_str("covering multipliers:\n");
                let mut cov = Vec::new();
                for (si, comps) in ext.covering.iter().enumerate() {
                    for (di, c) in comps.iter().enumerate() {
                        let lead = print_expr(
                            sess,
                            &st.combined.equations()[st.block_eqs[si][di]].lead_expr(),
                        );
                        text.push_str(&format!("  [{lead}] {}\n", print_expr(sess, c)));
                        cov.push(json!({
                            "equation": lead,
                            "multiplier": print_expr(sess, c)
                        }));
                    }
                }
                text.push_str("base multipliers:\n");
                let mut base = Vec::new();
                for (k, c) in ext.base.iter().enumerate() {
                    let lead = print_expr(sess, &st.base.equations()[k].lead_expr());
                    text.push_str(&format!("  [{lead}] {}\n", print_expr(sess, c)));
                    base.push(json!({
                        "equation": lead,
                        "multiplier": print_expr(sess, c)
                    }));
                }
                text.push_str("adjusted current:\n");
                text.push_str(&current_lines(sess, "F", &ext.adjusted));
                let v = json!({
                    "verified": true,
                    "covering": cov,
                    "base": base,
                    "adjusted": current_json(sess, &ext.adjusted),
                });
                emit(json, v, text);
                return Ok(0);
            }
            let spec = chi.ok_or_else(|| {
                Error::Invalid("multipliers are required unless --extended is given".into())
            })?;
            let comps = parse_components(s.sess(), &spec)?;
            let cand = Characteristic { components: comps };
            let exact = verify_characteristic(s, &f, &cand).is_ok();
            if !exact {
                let (chi0, _) = extract_characteristic(s, &f)?;
                if cand.components.len() != chi0.components.len() {
                    return Err(Error::ComponentCount {
                        expected: chi0.components.len(),
                        got: cand.components.len(),
                    });
                }
                for (a, b) in cand.components.iter().zip(&chi0.components) {
                    if !s.reduce(&a.sub(b))?.is_zero() {
                        return Err(Error::Invalid(
                            "the multipliers do not match the characteristic of the current".into(),
                        ));
                    }
                }
            }
            let how = if exact {
                "the identity holds exactly"
            } else {
                "the multipliers match the extracted characteristic on solutions"
            };
            emit(
                json,
                json!({ "verified": true, "exact": exact }),
                format!("characteristic verified: {how}"),
            );
            Ok(0)
        }
        Cmd::Cosym { sys, current } => {
            let file = load_file(&sys)?;
            let s = file.working();
            let f = resolve_current(&file, &current)?;
            let (chi, _) = extract_characteristic(s, &f)?;
            let yes = cosymmetry_test(s, &chi)?;
            emit(
                json,
                json!({ "cosymmetry": yes }),
                format!("cosymmetry: {}", if yes { "yes" } else { "no" }),
            );
            Ok(0)
        }
        Cmd::Potentialize { sys } => {
            let file = load_file(&sys)?;
            let st = structure_of(&file)?;
            let sess = st.combined.sess();
            let mut text = format!("kind: {}\n", kind_str(st.kind));
            text.push_str(&format!(
                "potentials: {}\n",
                st.pot_deps
                    .iter()
                    .map(|&d| sess.dep_name(d))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
            text.push_str("defining equations:\n");
            let mut defs = Vec::new();
            for eqs in &st.block_eqs {
                for &k in eqs {
                    let eq = &st.combined.equations()[k];
                    let line = format!(
                        "{} = {}",
                        print_expr(sess, &eq.lead_expr()),
                        print_expr(sess, &eq.rhs)
                    );
                    text.push_str(&format!("  {line}\n"));
                    defs.push(Value::String(line));
                }
            }
            let mut excluded = Vec::new();
            for eq in st.combined.equations() {
                if eq.excluded.is_some() {
                    let line = format!(
                        "{} = {}",
                        print_expr(sess, &eq.lead_expr()),
                        print_expr(sess, &eq.rhs)
                    );
                    excluded.push(line);
                }
            }
            if !excluded.is_empty() {
                text.push_str("excluded (redundant modulo the covering):\n");
                for l in &excluded {
                    text.push_str(&format!("  {l}\n"));
                }
            }
            text.push_str(&format!(
                "weights: {}",
                file.weighting
                    .rho
                    .iter()
                    .enumerate()
                    .map(|(a, r)| format!("{}: {r}", sess.dep_name(a)))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
            let v = json!({
                "kind": kind_str(st.kind),
                "potentials": st.pot_deps.iter().map(|&d| sess.dep_name(d)).collect::<Vec<_>>(),
                "defining": defs,
                "excluded": excluded,
                "weights": file.weighting.rho,
            });
            emit(json, v, text);
            Ok(0)
        }
        Cmd::Purity { sys, current } => {
            let file = load_file(&sys)?;
            let st = structure_of(&file)?;
            let f = resolve_current(&file, &current)?;
            let (chi, _) = extract_characteristic(&st.combined, &f)?;
            let verdict = purity_test(st, &chi, Some(&f))?;
            let sess = st.combined.sess();
            match verdict {
                PurityVerdict::Trivial => {
                    emit(
                        json,
                        json!({ "verdict": "trivial" }),
                        "trivial: the characteristic vanishes on solutions".into(),
                    );
                }
                PurityVerdict::PurelyPotential { atoms } => {
                    let shown: Vec<String> = atoms
                        .iter()
                        .map(|a| print_expr(sess, &Expr::atom(a.clone())))
                        .collect();
                    emit(
                        json,
                        json!({ "verdict": "purely-potential", "atoms": shown }),
                        format!(
                            "purely potential: the reduced characteristic involves {}",
                            shown.join(", ")
                        ),
                    );
                }
                PurityVerdict::Induced { witness } => {
                    let w = witness.expect("a current was supplied");
                    let text = format!(
                        "induced by a local conservation law of the base system\nwitness current:\n{}",
                        current_lines(sess, "F", &w)
                    );
                    emit(
                        json,
                        json!({ "verdict": "induced", "witness": current_json(sess, &w) }),
                        text,
                    );
                }
            }
            Ok(0)
        }
        Cmd::Corpus { filter } => {
            let report = run_corpus(filter.as_deref());
            if report.cases.is_empty() {
                return Err(Error::Invalid("no corpus entry matches the filter".into()));
            }
            let mut text = String::new();
            for c in &report.cases {
                text.push_str(&format!(
                    "[{}] {}: {}\n",
                    if c.passed { "ok" } else { "FAIL" },
                    c.id,
                    c.detail
                ));
            }
            let failed = report.cases.iter().filter(|c| !c.passed).count();
            text.push_str(&format!("{} cases, {} failed", report.cases.len(), failed));
            let v = json!({
                "cases": report.cases.iter().map(|c| json!({
                    "id": c.id,
                    "passed": c.passed,
                    "detail": c.detail,
                })).collect::<Vec<_>>(),
                "passed": report.all_passed(),
            });
            emit(json, v, text);
            Ok(if report.all_passed() { 0 } else { 1 })
        }
    }
}
