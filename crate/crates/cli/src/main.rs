use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ore_core::attacks::{sparse_attack_batch, AttackConfig};
use ore_core::constraints::positions_of_words;
use ore_core::msa::enumerate_all_minimal;
use ore_core::text::{knn, word_box};
use ore_core::verifier::DIFF_TOLERANCE;
use ore_core::{
    detect_bias, encode, ore_hs, ore_msa, repair_explanation, ConstraintSpec, CostFunction,
    Embeddings, Error, Explanation, HsConfig, Metric, MsaConfig, Network, NetworkOracle,
    OracleConfig, PerturbationSpace, PerturbationSpec, SolverKind, TextInput, Verdict,
    VerifierConfig, WordSet,
};
use serde_json::{json, Value};

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_EXHAUSTED: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_MISMATCH: u8 = 5;

#[derive(Parser)]
#[command(
    name = "ore",
    version,
    about = "Optimal robust explanations for text classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a minimum-cost robust explanation.
    Explain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Solver::Hs)]
        solver: Solver,
        /// Words (or positions) every explanation must contain.
        #[arg(long, value_delimiter = ',')]
        include: Vec<String>,
        /// Words (or positions) no explanation may contain.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
    },
    /// List every explanation of optimal cost.
    Enumerate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check whether fixing the given words is robust.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Words (or positions) kept fixed; everything else is perturbed.
        #[arg(long, value_delimiter = ',')]
        fix: Vec<String>,
    },
    /// Decide whether the prediction hinges on protected words.
    Bias {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        protected: Vec<String>,
        #[arg(long, value_enum, default_value_t = Solver::Hs)]
        solver: Solver,
    },
    /// Minimally extend an explanation until it is robust.
    Repair {
        #[command(flatten)]
        run: RunArgs,
        /// Explanation to repair: a JSON list of words or positions, inline
        /// or as a file path.
        #[arg(long)]
        from: String,
        #[arg(long, value_enum, default_value_t = Solver::Hs)]
        solver: Solver,
    },
    /// Search for sparse label-flipping perturbations.
    Attack {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        fix: Vec<String>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Show nearest neighbours and perturbation boxes of words.
    Knn {
        #[arg(long)]
        emb: PathBuf,
        #[arg(long = "word", required = true)]
        words: Vec<String>,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
        metric: MetricArg,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    #[command(flatten)]
    text: TextArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    metric: MetricArg,
    /// JSON object mapping words to positive costs (default 1).
    #[arg(long)]
    cost: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Single-threaded, reproducible execution.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 100_000)]
    split_budget: usize,
    /// Do not use sparse attacks in the hitting-set solver.
    #[arg(long)]
    no_attacks: bool,
    /// Add query statistics to the output.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TextArgs {
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    text_file: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SpecArgs {
    /// Radius of the per-word infinity-norm box.
    #[arg(long)]
    eps: Option<f64>,
    /// Box each word by its K nearest neighbours.
    #[arg(long, value_name = "K")]
    knn: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Hs,
    Msa,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::Cosine,
        }
    }
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::ResourceExhausted { .. } | Error::IterationLimit { .. } => EXIT_EXHAUSTED,
            Error::Io(_) | Error::ModelFormat { .. } => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

struct Session {
    net: Network,
    text: TextInput,
    oracle: NetworkOracle,
    cost: CostFunction,
    spec: PerturbationSpec,
    attack: AttackConfig,
    stats: bool,
}

impl Session {
    fn open(args: &RunArgs) -> Result<Self, Failure> {
        let net =
            Network::from_json(&read(&args.model)?).map_err(|e| io_failure(&args.model, e))?;
        let emb = Embeddings::from_json(&read(&args.emb)?).map_err(|e| io_failure(&args.emb, e))?;
        let raw = match (&args.text.text, &args.text.text_file) {
            (Some(t), _) => t.clone(),
            (None, Some(path)) => read(path)?,
            (None, None) => unreachable!("clap enforces one text source"),
        };
        let words: Vec<&str> = raw.split_whitespace().collect();
        let text = encode(&words, net.input_words(), &emb)?;
        if emb.dim() != net.embedding_dim() {
            return Err(usage(format!(
                "embeddings have dimension {}, the model expects {}",
                emb.dim(),
                net.embedding_dim()
            )));
        }
        let spec = match (args.spec.eps, args.spec.knn) {
            (Some(eps), None) => PerturbationSpec::eps(eps),
            (None, Some(k)) => PerturbationSpec::knn(k, args.metric.into()),
            _ => unreachable!("clap enforces one perturbation"),
        };
        let space = PerturbationSpace::new(&text, &spec, &emb)?;
        let cost = match &args.cost {
            None => CostFunction::uniform(text.len()),
            Some(path) => {
                let map: BTreeMap<String, f64> =
                    serde_json::from_str(&read(path)?).map_err(|e| io_failure(path, e))?;
                CostFunction::new(
                    text.tokens()
                        .iter()
                        .map(|w| map.get(w).copied().unwrap_or(1.0))
                        .collect(),
                )?
            }
        };
        let attack = AttackConfig {
            seed: args.seed,
            parallel: !args.deterministic,
            ..AttackConfig::default()
        };
        let config = OracleConfig {
            verifier: VerifierConfig {
                split_budget: args.split_budget,
                ..VerifierConfig::default()
            },
            attack,
            sparse_attacks: !args.no_attacks,
        };
        let oracle = NetworkOracle::new(&net, space, config)?;
        Ok(Self {
            net,
            text,
            oracle,
            cost,
            spec,
            attack,
            stats: args.stats,
        })
    }

    /// Positions named by words or numeric indices.
    fn positions(&self, items: &[String]) -> Result<WordSet, Failure> {
        let mut out = WordSet::new();
        for item in items.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
            if self.text.tokens().iter().any(|t| t == item) {
                out.extend(self.text.positions_of(item));
            } else if let Ok(i) = item.parse::<usize>() {
                if i >= self.text.len() {
                    return Err(Error::InvalidIndex {
                        index: i,
                        len: self.text.len(),
                    }
                    .into());
                }
                out.insert(i);
            } else {
                positions_of_words(&self.text, &[item])?;
            }
        }
        Ok(out)
    }

    fn label(&self, label: usize) -> Value {
        json!({ "index": label, "name": self.net.labels()[label] })
    }

    fn render(&self, words: &WordSet) -> String {
        self.text
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if words.contains(&i) {
                    format!("[{t}]")
                } else {
                    t.clone()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn explanation(&self, e: &Explanation) -> Value {
        json!({
            "indices": e.words,
            "words": e.words.iter().map(|&i| &self.text.tokens()[i]).collect::<Vec<_>>(),
            "cost": e.cost,
            "rendered": self.render(&e.words),
            "trace": e.trace,
        })
    }

    fn header(&self) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("text".into(), json!(self.text.tokens()));
        m.insert("prediction".into(), self.label(self.oracle.target()));
        m.insert("perturbation".into(), json!(self.spec));
        m
    }

    fn finish(&self, mut m: serde_json::Map<String, Value>) -> Value {
        if self.stats {
            m.insert("stats".into(), json!(self.oracle.stats()));
        }
        Value::Object(m)
    }
}

fn solve(
    s: &Session,
    constraints: &ConstraintSpec,
    solver: SolverKind,
) -> Result<Explanation, Failure> {
    Ok(match solver {
        SolverKind::Msa => ore_msa(&s.oracle, &s.cost, constraints, &MsaConfig::default())?,
        _ => ore_hs(&s.oracle, &s.cost, constraints, &HsConfig::default())?,
    })
}

fn single(solver: Solver) -> SolverKind {
    match solver {
        Solver::Msa => SolverKind::Msa,
        Solver::Hs | Solver::Both => SolverKind::Hs,
    }
}

fn run(cli: Cli) -> Result<(Value, u8), Failure> {
    match cli.command {
        Command::Explain {
            run,
            solver,
            include,
            exclude,
        } => {
            let s = Session::open(&run)?;
            let constraints = ConstraintSpec::new(s.positions(&include)?, s.positions(&exclude)?)?;
            let mut m = s.header();
            m.insert(
                "solver".into(),
                json!(solver.to_possible_value().unwrap().get_name()),
            );
            let mut code = 0;
            let main = if solver == Solver::Both {
                let hs = solve(&s, &constraints, SolverKind::Hs)?;
                let msa = solve(&s, &constraints, SolverKind::Msa)?;
                let agree = (hs.cost - msa.cost).abs() <= 1e-9;
                if !agree {
                    code = EXIT_MISMATCH;
                }
                m.insert("agreement".into(), json!(agree));
                m.insert("hs".into(), s.explanation(&hs));
                m.insert("msa".into(), s.explanation(&msa));
                hs
            } else {
                solve(&s, &constraints, single(solver))?
            };
            m.insert("explanation".into(), s.explanation(&main));
            m.insert("rendered".into(), json!(s.render(&main.words)));
            Ok((s.finish(m), code))
        }
        Command::Enumerate { run } => {
            let s = Session::open(&run)?;
            let best = solve(&s, &ConstraintSpec::default(), SolverKind::Hs)?;
            let all = enumerate_all_minimal(&s.oracle, &s.cost, best.cost)?;
            let mut m = s.header();
            m.insert("cost".into(), json!(best.cost));
            m.insert(
                "explanations".into(),
                Value::Array(all.iter().map(|e| s.explanation(e)).collect()),
            );
            m.insert(
                "rendered".into(),
                json!(all.iter().map(|e| s.render(&e.words)).collect::<Vec<_>>()),
            );
            Ok((s.finish(m), 0))
        }
        Command::Verify { run, fix } => {
            let s = Session::open(&run)?;
            let fixed = s.positions(&fix)?;
            let bx = s.oracle.space().fixing(&fixed)?;
            let verifier = ore_core::Verifier::new(
                &s.net,
                VerifierConfig {
                    split_budget: run.split_budget,
                    ..VerifierConfig::default()
                },
            )?;
            let r = verifier.check(&bx, s.oracle.target(), s.oracle.space().point())?;
            let mut m = s.header();
            m.insert("fixed".into(), json!(fixed));
            m.insert("rendered".into(), json!(s.render(&fixed)));
            m.insert("splits".into(), json!(r.splits));
            let code = match r.verdict {
                Verdict::Robust => {
                    m.insert("verdict".into(), json!("robust"));
                    0
                }
                Verdict::CounterExample { point, predicted } => {
                    m.insert("verdict".into(), json!("counterexample"));
                    m.insert("predicted".into(), s.label(predicted));
                    m.insert(
                        "moved".into(),
                        json!(s.oracle.space().differing_words(&point, DIFF_TOLERANCE)),
                    );
                    m.insert("point".into(), json!(point));
                    0
                }
                Verdict::ResourceExhausted { splits_used } => {
                    m.insert("verdict".into(), json!("resource_exhausted"));
                    m.insert("splits".into(), json!(splits_used));
                    EXIT_EXHAUSTED
                }
            };
            Ok((s.finish(m), code))
        }
        Command::Bias {
            run,
            protected,
            solver,
        } => {
            let s = Session::open(&run)?;
            let protected = s.positions(&protected)?;
            let v = detect_bias(&s.oracle, &protected, &s.cost, single(solver))?;
            let mut m = s.header();
            m.insert("protected".into(), json!(protected));
            m.insert("biased".into(), json!(v.biased));
            match &v.witness {
                Some(w) => {
                    m.insert("witness".into(), s.explanation(w));
                    m.insert("rendered".into(), json!(s.render(&w.words)));
                }
                None => {
                    m.insert("moved".into(), json!(v.moved));
                    m.insert("counterexample".into(), json!(v.counterexample));
                    m.insert("rendered".into(), json!(s.render(&protected)));
                }
            }
            Ok((s.finish(m), if v.biased { EXIT_INFEASIBLE } else { 0 }))
        }
        Command::Repair { run, from, solver } => {
            let s = Session::open(&run)?;
            let source = if Path::new(&from).is_file() {
                read(Path::new(&from))?
            } else {
                from.clone()
            };
            let items: Vec<Value> = serde_json::from_str(&source)
                .map_err(|e| usage(format!("seed explanation: {e}")))?;
            let items: Vec<String> = items
                .into_iter()
                .map(|v| match v {
                    Value::String(w) => Ok(w),
                    Value::Number(n) if n.is_u64() => Ok(n.to_string()),
                    other => Err(usage(format!(
                        "seed explanation entry {other} is not a word or index"
                    ))),
                })
                .collect::<Result<_, _>>()?;
            let seed = s.positions(&items)?;
            let r = repair_explanation(&s.oracle, &seed, &s.cost, single(solver))?;
            let added: WordSet = r.words.difference(&seed).copied().collect();
            let mut m = s.header();
            m.insert("seed".into(), json!(seed));
            m.insert("extension".into(), json!(added));
            m.insert("explanation".into(), s.explanation(&r));
            m.insert("rendered".into(), json!(s.render(&r.words)));
            Ok((s.finish(m), 0))
        }
        Command::Attack { run, fix, count } => {
            let s = Session::open(&run)?;
            let fixed = s.positions(&fix)?;
            let found = sparse_attack_batch(
                s.oracle.network(),
                s.oracle.space(),
                &fixed,
                s.oracle.target(),
                &s.attack,
                count,
            )?;
            let mut m = s.header();
            m.insert("fixed".into(), json!(fixed));
            if found.is_empty() {
                m.insert("result".into(), json!("none found"));
            }
            m.insert(
                "attacks".into(),
                Value::Array(
                    found
                        .iter()
                        .map(|a| {
                            json!({
                                "support": a.support,
                                "rendered": s.render(&a.support),
                                "predicted": s.label(s.net.forward(&a.point).map(|p| p.label).unwrap_or(0)),
                                "gap": a.gap,
                                "point": a.point,
                            })
                        })
                        .collect(),
                ),
            );
            Ok((s.finish(m), 0))
        }
        Command::Knn {
            emb,
            words,
            k,
            metric,
        } => {
            let table = Embeddings::from_json(&read(&emb)?).map_err(|e| io_failure(&emb, e))?;
            let spec = PerturbationSpec::knn(k, metric.into());
            let mut out = Vec::new();
            for w in &words {
                let id = table.id(w)?;
                let neighbours = knn(&table, id, k, metric.into())?;
                let bx = word_box(&table, id, &spec)?;
                out.push(json!({
                    "word": w,
                    "neighbours": neighbours.iter().map(|&n| &table.vocab().words()[n]).collect::<Vec<_>>(),
                    "box": { "lo": bx.lo(), "hi": bx.hi() },
                }));
            }
            Ok((
                json!({ "k": k, "metric": Metric::from(metric), "words": out }),
                0,
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok((value, code)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&value).expect("serializable output")
            );
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
