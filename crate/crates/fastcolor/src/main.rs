use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use fastcolor::checkpoint::Checkpoint;
use fastcolor::config::{Dataset, SourceSpec, TrainConfig};
use fastcolor::Error;
use fastcolor::io::{load_graph, save_graph, write_coloring};
use fastcolor::pipeline::{
    count_colors, evaluate, mcts_coloring, model_coloring, EvalReport, Method, Model, Trainer,
};
use fastcolor::plot::{line_chart, Series};
use fastcolor::report::{write_eval_csv, write_trace_csv, JsonLines, Table};
use fastcolor::run::{output_dir, policy_iteration};
use fastcolor::Result;
use fastcolor_core::coloring::{estimate_mdp_size, greedy_color, verify_coloring, HeuristicKind};
use fastcolor_core::graph::Graph;
use fastcolor_core::selfplay::GameRef;

#[derive(Parser)]
#[command(name = "fastcolor", version, about = "Graph coloring with search-guided learned policies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write generated graphs as edge lists.
    Gen {
        /// er:N:P, ws:N:K:BETA, file:PATH or dir:PATH
        #[arg(long)]
        source: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Color one graph and verify the result.
    Color {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, conflicts_with = "model")]
        heuristic: Option<String>,
        #[command(flatten)]
        model: ModelArgs,
        /// Write `vertex color` lines here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root statistics per move (with --mcts).
        #[arg(long, requires = "mcts")]
        trace: Option<PathBuf>,
    },
    /// log10 of the number of trajectories the heuristic's path branches over.
    EstimateMdp {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "dynamic")]
        heuristic: String,
    },
    /// One self-play generation against the current best policy.
    Selfplay {
        #[command(flatten)]
        config: ConfigArgs,
        /// Episode log, one JSON object per segment.
        #[arg(long)]
        out: PathBuf,
    },
    /// Policy iteration.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from a checkpoint stem.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Color a test set with heuristics and optionally a model.
    Eval {
        /// Graph files, or one directory of them.
        #[arg(long, num_args = 1.., conflicts_with = "source")]
        graphs: Vec<PathBuf>,
        /// Generated test set instead of files.
        #[arg(long)]
        source: Option<String>,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        model: ModelArgs,
        /// Per-graph colors.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// SVG line chart from CSV columns.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "iteration")]
        x: String,
        #[arg(long, value_delimiter = ',', default_value = "eval_avg_colors")]
        y: Vec<String>,
        #[arg(long)]
        title: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint stem (path without .manifest/.bin).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Decode with search instead of greedily.
    #[arg(long, requires = "model")]
    mcts: bool,
    #[arg(long, requires = "mcts")]
    simulations: Option<usize>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key-value config file; defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides, `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {s:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.output = output_dir(&cfg.output);
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Loaded {
    ck: Checkpoint,
    net: fastcolor_core::fcn::FastColorNet,
}

impl ModelArgs {
    fn load(&self) -> Result<Option<Loaded>> {
        self.model
            .as_ref()
            .map(|p| Checkpoint::load(p).map(|(ck, net)| Loaded { ck, net }))
            .transpose()
    }

    fn model<'a>(&self, l: &'a Loaded) -> Model<'a> {
        let mut mcts = l.ck.config.mcts();
        if let Some(s) = self.simulations {
            mcts.simulations = s;
        }
        Model {
            net: &l.net,
            params: &l.ck.params,
            mcts,
        }
    }
}

fn graph_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if let [dir] = paths {
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            return Ok(files);
        }
    }
    Ok(paths.to_vec())
}

fn print_report(r: &EvalReport) {
    println!("graphs: {}", r.colors.len());
    let avgs = r.averages();
    for (k, name) in r.methods.iter().enumerate() {
        let tally = r.tally_vs_heuristics(k);
        println!(
            "{name:>12}  avg {:.3}  w/t/l vs best heuristic {}/{}/{}  {:.3}s",
            avgs[k], tally.wins, tally.ties, tally.losses, r.seconds[k]
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { source, count, seed, out } => {
            let ds = Dataset {
                source: SourceSpec::parse(&source)?,
                count,
                seed,
            };
            let out = out.unwrap_or_else(|| output_dir(Path::new("graphs")));
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            for (i, g) in ds.load()?.iter().enumerate() {
                let p = out.join(format!("graph_{i:04}.el"));
                save_graph(g, &p)?;
                println!("{} ({} vertices, {} edges)", p.display(), g.vertex_count(), g.edge_count());
            }
        }
        Cmd::Color {
            graph,
            heuristic,
            model,
            out,
            trace,
        } => {
            let g = Arc::new(load_graph(&graph)?);
            let colors = match model.load()? {
                Some(l) => {
                    let m = model.model(&l);
                    let game = GameRef::new(0, g.clone());
                    let table = m.net.embed_graph(m.params, &g)?;
                    if model.mcts {
                        let mut rows = Vec::new();
                        let c = mcts_coloring(m.net, m.params, &game, &table, m.mcts, Some(&mut rows))?;
                        if let Some(p) = trace {
                            write_trace_csv(&rows, &p)?;
                        }
                        c
                    } else {
                        model_coloring(m.net, m.params, &game, &table)?
                    }
                }
                None => {
                    let name = heuristic.as_deref().unwrap_or("dynamic");
                    let kind = HeuristicKind::parse(name)
                        .ok_or_else(|| Error::Config(format!("unknown heuristic {name:?}")))?;
                    let (state, _) = greedy_color(g.clone(), kind);
                    state.colors().into_iter().map(|c| c.expect("complete")).collect()
                }
            };
            verify_coloring(&g, &colors)?;
            println!("colors: {}", count_colors(&colors));
            if let Some(p) = out {
                let f = fs::File::create(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                write_coloring(&colors, std::io::BufWriter::new(f)).map_err(|e| Error::Io { path: p, source: e })?;
            }
        }
        Cmd::EstimateMdp { graph, heuristic } => {
            let g = Arc::new(load_graph(&graph)?);
            let kind = HeuristicKind::parse(&heuristic)
                .ok_or_else(|| Error::Config(format!("unknown heuristic {heuristic:?}")))?;
            println!("log10 states: {:.3}", estimate_mdp_size(g, kind));
        }
        Cmd::Selfplay { config, out } => {
            let mut t = Trainer::new(config.load()?)?;
            let mut log = Vec::new();
            let m = t.selfplay_only(&mut log)?;
            JsonLines::create(&out)?.write(&log)?;
            println!(
                "segments {} records {} win/tie/lose {}/{}/{} aborted {}",
                m.segments, m.records, m.wins, m.ties, m.losses, m.aborted
            );
        }
        Cmd::Train { config, resume } => {
            let trainer = match resume {
                Some(p) => {
                    let (mut ck, net) = Checkpoint::load(&p)?;
                    let over = config.load()?;
                    ck.config.iterations = over.iterations;
                    ck.config.output = over.output;
                    Trainer::resume(ck, net)?
                }
                None => Trainer::new(config.load()?)?,
            };
            let out = trainer.cfg.output.clone();
            let summary = policy_iteration(trainer, &out)?;
            for m in &summary.metrics {
                println!(
                    "iter {:>4}  loss {:.4}  candidate {:.3}  best {:.3}  win {:.2}{}",
                    m.iteration,
                    m.loss,
                    m.candidate_avg_colors,
                    m.eval_avg_colors,
                    m.win_rate(),
                    if m.accepted { "  accepted" } else { "" }
                );
            }
            println!("best avg colors: {:.3}  ({})", summary.best_avg, summary.out.display());
        }
        Cmd::Eval {
            graphs,
            source,
            count,
            seed,
            model,
            csv,
        } => {
            let gs: Vec<Graph> = match source {
                Some(s) => Dataset {
                    source: SourceSpec::parse(&s)?,
                    count,
                    seed,
                }
                .load()?,
                None => graph_files(&graphs)?
                    .iter()
                    .map(|p| load_graph(p))
                    .collect::<Result<_>>()?,
            };
            let gs: Vec<Arc<Graph>> = gs.into_iter().map(Arc::new).collect();
            let loaded = model.load()?;
            let mut methods: Vec<Method> = HeuristicKind::ALL.iter().map(|&k| Method::Heuristic(k)).collect();
            if loaded.is_some() {
                methods.push(if model.mcts { Method::Mcts } else { Method::Greedy });
            }
            let m = loaded.as_ref().map(|l| model.model(l));
            let report = evaluate(&gs, &methods, m.as_ref())?;
            print_report(&report);
            if let Some(p) = csv {
                let refs: Vec<&Graph> = gs.iter().map(|g| &**g).collect();
                write_eval_csv(&report, &refs, &p)?;
            }
        }
        Cmd::Plot { csv, x, y, title, out } => {
            let t = Table::read(&csv)?;
            let xs = t
                .column(&x)
                .ok_or_else(|| Error::Config(format!("no column {x:?} in {}", csv.display())))?;
            let series = y
                .iter()
                .map(|name| {
                    let ys = t
                        .column(name)
                        .ok_or_else(|| Error::Config(format!("no column {name:?} in {}", csv.display())))?;
                    Ok(Series {
                        name: name.clone(),
                        points: xs.iter().copied().zip(ys).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let title = title.unwrap_or_else(|| y.join(", "));
            fs::write(&out, line_chart(&title, &x, &series)).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
