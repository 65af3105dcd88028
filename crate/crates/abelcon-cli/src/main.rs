use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use abelcon::algebra::Algebra;
use abelcon::centrality::{centralizer, is_abelian, two_term_condition, LawParams};
use abelcon::congruence::{congruence_lattice, structure_report};
use abelcon::diffalg::{arrow_graph, difference_algebra, range_of_class, verify_diffalg_theorems, DiffAlgebra};
use abelcon::doc::{self, format_partition, parse_partition, Labeled};
use abelcon::genlab::{generate_example, verify_claims};
use abelcon::partition::Partition;
use abelcon::random::{law_sweep, RandomShape};
use abelcon::report::{serialize_report, Report};
use abelcon::simdiv::{self, BridgeMode};
use abelcon::wdt::{search_wdt, verify_wdt, Scope, WdtCertificate, WdtOrigin, DEFAULT_WDT_SEARCH_CAP};
use abelcon::{Error, Result};

#[derive(Parser)]
#[command(name = "abelcon", version, about = "Abelian congruences, difference algebras and similarity of finite algebras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Algebra document
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    /// Where to write the report (or, for generate, diffalg and bridge, the artifact)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Search cap
    #[arg(long)]
    cap: Option<usize>,
    /// Where the weak difference term is checked: A or A,A2,A3
    #[arg(long, default_value = "A")]
    scope: String,
}

#[derive(Args, Clone)]
struct Theta {
    /// Congruence: a label, zero, full, cg:a,b, blocks like 0,2|1,3, or [[0,2],[1,3]]
    #[arg(long)]
    theta: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Congruence lattice, covers and monolith
    Con {
        #[command(flatten)]
        common: Common,
    },
    /// The centralizer (delta:theta)
    Centralizer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: Theta,
        #[arg(long, default_value = "zero")]
        delta: String,
    },
    /// Whether theta is abelian (modulo delta), with the two-term condition
    Abelian {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: Theta,
        #[arg(long)]
        delta: Option<String>,
    },
    /// Check a ternary operation as a weak difference term
    WdtVerify {
        #[command(flatten)]
        common: Common,
        /// Name of the ternary operation to check
        #[arg(long, default_value = "d")]
        op: String,
    },
    /// Search the ternary clone for a weak difference term
    WdtSearch {
        #[command(flatten)]
        common: Common,
    },
    /// The difference algebra D(A, theta) and the checks on it
    Diffalg {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: Theta,
    },
    /// Ranges of the theta-classes
    Ranges {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: Theta,
    },
    /// The arrow graph on the alpha-class of e
    Arrow {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: Theta,
        #[arg(long, default_value_t = 0)]
        e: usize,
    },
    /// The division ring of a minimal abelian congruence and its action on classes
    Field {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: Theta,
        /// Use F_{D,phi,T} on the input itself: phi and a transversal T
        #[arg(long)]
        phi: Option<String>,
        /// Comma-separated elements, one per phi-class (default: least element of each class)
        #[arg(long)]
        transversal: Option<String>,
    },
    /// The ring of tuples commuting with polynomial hom-sets, compared with the division ring
    Freese {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: Theta,
        /// Transversal of theta (default: least element of each class)
        #[arg(long)]
        transversal: Option<String>,
    },
    /// Whether D(A) and D(B) are isomorphic
    Similar {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        in2: PathBuf,
    },
    /// Build and verify a similarity bridge (to D(A), or to a second algebra)
    Bridge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        in2: Option<PathBuf>,
    },
    /// Build an algebra from a generator config
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Check a generated algebra against its construction
    VerifyClaims {
        #[command(flatten)]
        common: Common,
        /// Generator config (default: the one embedded in the document)
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Centralizer laws on one algebra, or a sweep over random algebras
    Laws {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random algebras when no input is given
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
}

/// What a command produced: a report, and an artifact for `--out` if it has one.
struct Outcome {
    report: Report,
    artifact: Option<String>,
    /// A verified negative answer even when every item passed.
    negative: bool,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Self {
        Outcome {
            report,
            artifact: None,
            negative: false,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load(common: &Common) -> Result<Labeled> {
    let path = common
        .input
        .as_ref()
        .ok_or_else(|| Error::Parse("--in is required".into()))?;
    doc::parse_algebra(&read(path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_path(path: &Path) -> Result<Labeled> {
    doc::parse_algebra(&read(path)?)
}

/// The named or given congruence; without one, the `mu` label or the monolith.
fn theta_of(l: &Labeled, theta: &Theta) -> Result<Partition> {
    match &theta.theta {
        Some(s) => parse_partition(s, &l.algebra, &l.labels),
        None => match l.labels.get("mu") {
            Some(p) => Ok(p.clone()),
            None => simdiv::monolith(&l.algebra),
        },
    }
}

fn cap_or(common: &Common, default: usize) -> usize {
    common.cap.unwrap_or(default)
}

/// The operation named `d` if it is a weak difference term, else a search.
fn certificate(a: &Algebra, common: &Common, r: &mut Report) -> Result<WdtCertificate> {
    let scope = Scope::parse(&common.scope)?;
    if let Ok(op) = a.op("d") {
        if op.arity == 3 {
            let c = verify_wdt(a, &op.table, scope)?;
            if c.verdict {
                r.push("wdt", "the operation d is a weak difference term", "weak-difference-term", true, None);
                return Ok(c);
            }
        }
    }
    let c = search_wdt(a, cap_or(common, DEFAULT_WDT_SEARCH_CAP))?;
    let note = match &c.origin {
        WdtOrigin::TermDerived(t) => t.clone(),
        WdtOrigin::TableAttested => "table".into(),
    };
    r.push(
        "wdt",
        "a weak difference term was found in the ternary clone",
        "weak-difference-term",
        c.verdict,
        Some(note),
    );
    Ok(c)
}

fn diff(l: &Labeled, theta: &Theta, common: &Common, r: &mut Report) -> Result<DiffAlgebra> {
    let t = theta_of(l, theta)?;
    let c = certificate(&l.algebra, common, r)?;
    difference_algebra(&l.algebra, &t, &c)
}

fn parse_set(s: &str, n: usize) -> Result<BTreeSet<usize>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let x: usize = t.parse().map_err(|_| Error::Parse(format!("`{t}` is not an element")))?;
            if x >= n {
                return Err(Error::OutOfRange { element: x, size: n });
            }
            Ok(x)
        })
        .collect()
}

fn least_elements(p: &Partition) -> BTreeSet<usize> {
    p.blocks().iter().map(|b| b[0]).collect()
}

fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::Con { common } => {
            let l = load(common)?;
            let lat = congruence_lattice(&l.algebra)?;
            let s = structure_report(&lat);
            let mut r = Report::new("con");
            for (i, p) in lat.elements().iter().enumerate() {
                r.push(&format!("congruence-{i}"), "a congruence", "congruence-lattice", true, Some(format_partition(p)));
            }
            for (lo, hi) in &s.covers {
                r.push("cover", "a covering pair", "congruence-lattice", true, Some(format!("{} < {}", format_partition(lo), format_partition(hi))));
            }
            r.push(
                "subdirectly-irreducible",
                "the lattice has a unique atom",
                "congruence-lattice",
                true,
                Some(match &s.monolith {
                    Some(m) => format!("monolith {}", format_partition(m)),
                    None => "not subdirectly irreducible".into(),
                }),
            );
            Ok(r.into())
        }
        Command::Centralizer { common, theta, delta } => {
            let l = load(common)?;
            let t = theta_of(&l, theta)?;
            let d = parse_partition(delta, &l.algebra, &l.labels)?;
            let c = centralizer(&l.algebra, &d, &t)?;
            let mut r = Report::new("centralizer");
            r.push("centralizer", "(delta:theta)", "centralizer", true, Some(format_partition(&c)));
            Ok(r.into())
        }
        Command::Abelian { common, theta, delta } => {
            let l = load(common)?;
            let t = theta_of(&l, theta)?;
            let d = delta
                .as_ref()
                .map(|s| parse_partition(s, &l.algebra, &l.labels))
                .transpose()?;
            let v = is_abelian(&l.algebra, &t, d.as_ref())?;
            let mut r = Report::new("abelian");
            r.push(
                "abelian",
                "theta centralizes itself modulo delta",
                "centrality",
                v.holds,
                v.witness.map(|m| format!("matrix {m:?}")),
            );
            if d.is_none() {
                let tt = two_term_condition(&l.algebra, &t)?;
                r.push(
                    "two-term",
                    "theta satisfies the two-term condition",
                    "centrality",
                    tt.holds,
                    tt.witness.map(|(a, b)| format!("matrices {a:?} and {b:?}")),
                );
            }
            Ok(r.into())
        }
        Command::WdtVerify { common, op } => {
            let l = load(common)?;
            let o = l.algebra.op(op)?;
            if o.arity != 3 {
                return Err(Error::ArityMismatch {
                    name: op.clone(),
                    expected: 3,
                    got: o.arity,
                });
            }
            let c = verify_wdt(&l.algebra, &o.table, Scope::parse(&common.scope)?)?;
            let mut r = Report::new("wdt-verify");
            r.push(
                "wdt",
                "the operation is idempotent and Maltsev modulo delta on every abelian quotient theta/delta",
                "weak-difference-term",
                c.verdict,
                c.witness.clone().or_else(|| Some(format!("{} quotient pairs examined", c.checked.len()))),
            );
            Ok(r.into())
        }
        Command::WdtSearch { common } => {
            let l = load(common)?;
            let mut r = Report::new("wdt-search");
            match search_wdt(&l.algebra, cap_or(common, DEFAULT_WDT_SEARCH_CAP)) {
                Ok(c) => {
                    let term = match &c.origin {
                        WdtOrigin::TermDerived(t) => t.clone(),
                        WdtOrigin::TableAttested => "table".into(),
                    };
                    r.push("wdt", "the ternary clone contains a weak difference term", "weak-difference-term", c.verdict, Some(term));
                    r.push("wdt-table", "its table", "weak-difference-term", true, Some(format!("{:?}", c.table())));
                    Ok(r.into())
                }
                Err(Error::NotFound(m)) => {
                    r.push("wdt", "the ternary clone contains a weak difference term", "weak-difference-term", false, Some(m));
                    Ok(r.into())
                }
                Err(e) => Err(e),
            }
        }
        Command::Diffalg { common, theta } => {
            let l = load(common)?;
            let mut r = Report::new("diffalg");
            let da = diff(&l, theta, common, &mut r)?;
            r.extend(da.checks.clone());
            r.extend(verify_diffalg_theorems(&da)?);
            r.push("size", "the difference algebra", "difference-algebra", true, Some(format!("{} elements", da.size())));
            let labels: BTreeMap<String, Partition> = [("phi".to_string(), da.phi.clone())].into();
            Ok(Outcome {
                report: r,
                artifact: Some(doc::serialize_algebra(&da.algebra, &labels)),
                negative: false,
            })
        }
        Command::Ranges { common, theta } => {
            let l = load(common)?;
            let mut r = Report::new("ranges");
            let da = diff(&l, theta, common, &mut r)?;
            for (i, block) in da.theta.blocks().iter().enumerate() {
                let ran = range_of_class(&da, block)?;
                r.push(
                    &format!("range-{i}"),
                    "the range of the class is a subgroup matching every lambda_e",
                    "range",
                    ran.is_subgroup && ran.matches_lambda,
                    Some(format!("class {block:?}: range {:?}", ran.elements)),
                );
            }
            Ok(r.into())
        }
        Command::Arrow { common, theta, e } => {
            let l = load(common)?;
            let mut r = Report::new("arrow");
            let da = diff(&l, theta, common, &mut r)?;
            let g = arrow_graph(&da, *e, &da.cert)?;
            for ((i, j), chain) in &g.edges {
                r.push("edge", "a translation chain between theta-classes", "arrow-graph", true, Some(format!("{:?} -> {:?}: {}", g.nodes[*i], g.nodes[*j], abelcon::diffalg::chain_to_string(chain))));
            }
            r.extend(g.checks);
            Ok(r.into())
        }
        Command::Field { common, theta, phi, transversal } => {
            let l = load(common)?;
            let mut r = Report::new("field");
            if let Some(phi) = phi {
                let p = parse_partition(phi, &l.algebra, &l.labels)?;
                let t = match transversal {
                    Some(s) => parse_set(s, l.algebra.size())?,
                    None => least_elements(&p),
                };
                let c = certificate(&l.algebra, common, &mut r)?;
                let f = simdiv::division_ring(&l.algebra, &p, &t, &c, cap_or(common, simdiv::DEFAULT_SEARCH_CAP))?;
                r.extend(f.checks.clone());
                r.push("ring-size", "the division ring", "division-ring", true, Some(format!("{} elements", f.size())));
                return Ok(r.into());
            }
            let da = diff(&l, theta, common, &mut r)?;
            let f = simdiv::field_of(&da, cap_or(common, simdiv::DEFAULT_SEARCH_CAP))?;
            r.extend(f.checks.clone());
            r.push("ring-size", "the division ring", "division-ring", true, Some(format!("{} elements", f.size())));
            if abelcon::wdt::is_minimal(&da.base, &da.theta)? {
                for block in da.theta.blocks() {
                    let act = simdiv::canonical_action(&da, &f, block[0])?;
                    let mut checks = act.checks.clone();
                    for it in &mut checks.items {
                        it.id = format!("{}-{}", it.id, block[0]);
                    }
                    r.extend(checks);
                    r.push(
                        &format!("dimension-{}", block[0]),
                        "dimension of the class over the ring",
                        "vector-action",
                        true,
                        Some(act.dimension.to_string()),
                    );
                }
            } else {
                r.skip("vector-action", "the ring acts on each class", "vector-action", "theta is not minimal");
            }
            Ok(r.into())
        }
        Command::Freese { common, theta, transversal } => {
            let l = load(common)?;
            let t = theta_of(&l, theta)?;
            let tr = match transversal {
                Some(s) => parse_set(s, l.algebra.size())?,
                None => least_elements(&t),
            };
            let mut r = Report::new("freese");
            let c = certificate(&l.algebra, common, &mut r)?;
            let fd = simdiv::freese_ring(&l.algebra, &t, &tr, &c, cap_or(common, simdiv::DEFAULT_SEARCH_CAP))?;
            r.extend(fd.checks);
            r.push("ring-size", "the ring", "freese-ring", true, Some(format!("{} elements", fd.elements.len())));
            Ok(r.into())
        }
        Command::Similar { common, in2 } => {
            let a = load(common)?;
            let b = load_path(in2)?;
            let mut r = Report::new("similar");
            let ca = certificate(&a.algebra, common, &mut r)?;
            let cb = certificate(&b.algebra, common, &mut r)?;
            let s = simdiv::is_similar(&a.algebra, &ca, &b.algebra, &cb)?;
            r.push(
                "similar",
                "D(A) and D(B) are isomorphic",
                "similarity",
                s.similar,
                Some(match &s.iso {
                    Some(h) => format!("isomorphism {:?}", h.images()),
                    None => format!("no isomorphism between algebras of sizes {} and {}", s.left.algebra.size(), s.right.algebra.size()),
                }),
            );
            Ok(r.into())
        }
        Command::Bridge { common, in2 } => {
            let a = load(common)?;
            let mut r = Report::new("bridge");
            let ca = certificate(&a.algebra, common, &mut r)?;
            let built = match in2 {
                None => simdiv::bridge_construct(&a.algebra, &ca, BridgeMode::CanonicalToD)?,
                Some(p) => {
                    let b = load_path(p)?;
                    let cb = certificate(&b.algebra, common, &mut r)?;
                    match simdiv::bridge_construct(
                        &a.algebra,
                        &ca,
                        BridgeMode::FromIso {
                            target: &b.algebra,
                            target_cert: &cb,
                            iso: None,
                        },
                    ) {
                        Ok(b) => b,
                        Err(Error::NotFound(m)) => {
                            r.push("similar", "the algebras are similar", "similarity", false, Some(m));
                            return Ok(Outcome {
                                report: r,
                                artifact: None,
                                negative: true,
                            });
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            r.extend(built.verification);
            r.push("bridge-size", "the bridge", "similarity-bridge", true, Some(format!("{} tuples", built.bridge.len())));
            let tuples: Vec<[usize; 4]> = built.bridge.tuples.iter().copied().collect();
            Ok(Outcome {
                report: r,
                artifact: Some(format!("{}\n", serde_json::to_string(&tuples).unwrap())),
                negative: false,
            })
        }
        Command::Generate { common, config } => {
            let cfg = doc::parse_config(&read(config)?)?;
            let g = generate_example(&cfg)?;
            let mut r = Report::new("generate");
            r.push(
                "generated",
                "the algebra was built",
                "generated-example",
                true,
                Some(format!("{} elements, {} operations", g.algebra.size(), g.op_count)),
            );
            let _ = common;
            let labels: BTreeMap<String, Partition> = [("mu".to_string(), g.mu.clone()), ("alpha".to_string(), g.alpha.clone())].into();
            Ok(Outcome {
                report: r,
                artifact: Some(doc::serialize_document(&Labeled {
                    algebra: g.algebra,
                    labels,
                    config: Some(cfg),
                })),
                negative: false,
            })
        }
        Command::VerifyClaims { common, config } => {
            let l = load(common)?;
            let cfg = match config {
                Some(p) => doc::parse_config(&read(p)?)?,
                None => l
                    .config
                    .clone()
                    .ok_or_else(|| Error::Parse("the document has no generator config; pass --config".into()))?,
            };
            let g = generate_example(&cfg)?;
            let mut r = Report::new("verify-claims");
            let same = g.algebra == l.algebra;
            r.push("regenerated", "the config rebuilds exactly the input algebra", "generated-example", same, None);
            if same {
                r.extend(verify_claims(&g, cap_or(common, simdiv::DEFAULT_SEARCH_CAP))?);
            }
            Ok(r.into())
        }
        Command::Laws { common, seed, count } => {
            if common.input.is_none() {
                return Ok(law_sweep(*seed, *count, &RandomShape::default())?.into());
            }
            let l = load(common)?;
            let mut r = Report::new("laws");
            let cert = match certificate(&l.algebra, common, &mut r) {
                Ok(c) => Some(c),
                Err(Error::NotFound(m)) => {
                    r.skip("wdt", "a weak difference term exists", "weak-difference-term", m);
                    None
                }
                Err(e) => return Err(e),
            };
            let params = LawParams {
                seed: *seed,
                ..LawParams::default()
            };
            r.extend(abelcon::centrality::check_centrality_laws(&l.algebra, cert.as_ref(), &params)?);
            Ok(r.into())
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Con { .. } => "con",
        Command::Centralizer { .. } => "centralizer",
        Command::Abelian { .. } => "abelian",
        Command::WdtVerify { .. } => "wdt-verify",
        Command::WdtSearch { .. } => "wdt-search",
        Command::Diffalg { .. } => "diffalg",
        Command::Ranges { .. } => "ranges",
        Command::Arrow { .. } => "arrow",
        Command::Field { .. } => "field",
        Command::Freese { .. } => "freese",
        Command::Similar { .. } => "similar",
        Command::Bridge { .. } => "bridge",
        Command::Generate { .. } => "generate",
        Command::VerifyClaims { .. } => "verify-claims",
        Command::Laws { .. } => "laws",
    }
}

fn common_of(c: &Command) -> &Common {
    match c {
        Command::Con { common }
        | Command::Centralizer { common, .. }
        | Command::Abelian { common, .. }
        | Command::WdtVerify { common, .. }
        | Command::WdtSearch { common }
        | Command::Diffalg { common, .. }
        | Command::Ranges { common, .. }
        | Command::Arrow { common, .. }
        | Command::Field { common, .. }
        | Command::Freese { common, .. }
        | Command::Similar { common, .. }
        | Command::Bridge { common, .. }
        | Command::Generate { common, .. }
        | Command::VerifyClaims { common, .. }
        | Command::Laws { common, .. } => common,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let name = command_name(&cli.command);
    let out = common_of(&cli.command).out.clone();
    let (mut report, artifact, code) = match run(&cli.command) {
        Ok(o) => {
            let code = if o.negative || !o.report.passed() { 1 } else { 0 };
            (o.report, o.artifact, code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut r = Report::new(name);
            r.push("error", "the command could not run", "input", false, Some(e.to_string()));
            (r, None, 2)
        }
    };
    report.elapsed_ms = Some(start.elapsed().as_millis());
    let text = serialize_report(&report);
    print!("{text}");
    if let Some(path) = out {
        let body = artifact.as_deref().unwrap_or(&text);
        if let Err(e) = std::fs::write(&path, body) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    eprintln!("{name}: {} ms", start.elapsed().as_millis());
    ExitCode::from(code)
}
