use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use leoisl::ifc::{sweep_max_isls, Scheme};
use leoisl::orbital::{propagate, GroundNode};
use leoisl::routing::{ground_pair_hop_stats, path_by_metric, sdp_mhp_fraction, GroundPair, Metric};
use leoisl::topology::{attach_ground_links, LinkContext, TopologyMode};
use leoisl::{load_scenario, Scenario};

#[derive(Parser)]
#[command(name = "leoisl", version, about = "LEO constellation ISL simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArg {
    /// Scenario TOML file; the built-in reference setup when omitted.
    #[arg(long, short = 's')]
    scenario: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Grid,
    Dynamic,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Distance,
    Hops,
}

#[derive(Subcommand)]
enum Command {
    /// Satellite positions and velocities at one epoch.
    Propagate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 0.0)]
        epoch: f64,
    },
    /// Edge list of one snapshot.
    Topology {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 0.0)]
        epoch: f64,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        max_isls: Option<usize>,
        /// Also list ground-station and aircraft links.
        #[arg(long)]
        with_ground: bool,
    },
    /// Best path between two nodes (satellite `S<plane>-<slot>` or ground id).
    Route {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: String,
        #[arg(long, value_enum, default_value = "distance")]
        metric: MetricArg,
        #[arg(long, default_value_t = 0.0)]
        epoch: f64,
    },
    /// Hop-count spread between ground terminal pairs.
    Hops {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// CSV with header pair_id,lat_a,lon_a,lat_b,lon_b.
        #[arg(long)]
        pairs: PathBuf,
        /// Epochs spread evenly over one orbital period.
        #[arg(long, default_value_t = 10)]
        epochs: usize,
    },
    /// Fraction of shortest-distance paths that are also minimum-hop.
    SdpMhp {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Random satellite pairs per epoch.
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Epochs spread evenly over one orbital period.
        #[arg(long, default_value_t = 10)]
        epochs: usize,
    },
    /// Average delivery delay against the per-satellite ISL budget.
    IfcSweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Inclusive range `a..b` or comma list.
        #[arg(long, default_value = "1..8")]
        isls: String,
        #[arg(long, value_delimiter = ',', default_value = "optimized,greedy,equal,full")]
        modes: Vec<Scheme>,
        /// Use seeds 0..N instead of the scenario's seed list.
        #[arg(long)]
        seeds: Option<u64>,
    },
}

fn parse_isls(s: &str) -> Result<Vec<usize>, String> {
    let bad = |_| format!("invalid ISL count list `{s}`");
    let v: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>()?
    };
    if v.is_empty() {
        return Err(format!("empty ISL range `{s}`"));
    }
    Ok(v)
}

enum Failure {
    Input(String),
    Runtime(String),
    /// The reader went away (`| head`); not an error.
    ClosedOutput,
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            Failure::ClosedOutput
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe => Failure::ClosedOutput,
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn scenario(arg: &ScenarioArg) -> Result<Scenario, Failure> {
    match &arg.scenario {
        Some(path) => load_scenario(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => Ok(Scenario::default()),
    }
}

fn spread_over_period(scenario: &Scenario, n: usize) -> Result<Vec<f64>, Failure> {
    if n == 0 {
        return Err(Failure::Input("--epochs must be at least 1".into()));
    }
    let period = scenario.constellation.period_s();
    Ok((0..n).map(|i| period * i as f64 / n as f64).collect())
}

fn read_pairs(path: &PathBuf) -> Result<Vec<GroundPair>, Failure> {
    #[derive(serde::Deserialize)]
    struct Row {
        pair_id: String,
        lat_a: f64,
        lon_a: f64,
        lat_b: f64,
        lon_b: f64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for row in reader.deserialize::<Row>() {
        let r = row.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let a = GroundNode::ground_station(format!("{}-a", r.pair_id), r.lat_a, r.lon_a);
        let b = GroundNode::ground_station(format!("{}-b", r.pair_id), r.lat_b, r.lon_b);
        for (node, which) in [(&a, "a"), (&b, "b")] {
            node.validate(&format!("pair `{}` endpoint {which}", r.pair_id))
                .map_err(|e| Failure::Input(e.to_string()))?;
        }
        pairs.push(GroundPair { pair_id: r.pair_id, a, b });
    }
    if pairs.is_empty() {
        return Err(Failure::Input(format!("{}: no pairs", path.display())));
    }
    Ok(pairs)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Propagate { scenario: s, epoch } => {
            let sc = scenario(&s)?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["sat_id", "plane", "slot", "x_km", "y_km", "z_km", "vx_km_s", "vy_km_s", "vz_km_s"])?;
            for st in propagate(&sc.constellation, epoch) {
                let (p, v) = (st.position_km, st.velocity_km_s);
                w.write_record([
                    st.id.to_string(),
                    st.id.plane.to_string(),
                    st.id.slot.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    p.z.to_string(),
                    v.x.to_string(),
                    v.y.to_string(),
                    v.z.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Command::Topology { scenario: s, epoch, mode, max_isls, with_ground } => {
            let mut sc = scenario(&s)?;
            if let Some(m) = mode {
                sc.topology.mode = match m {
                    ModeArg::Grid => TopologyMode::Grid,
                    ModeArg::Dynamic => TopologyMode::Dynamic,
                };
            }
            if let Some(k) = max_isls {
                sc.topology.max_isls = k;
            }
            let states = propagate(&sc.constellation, epoch);
            let mut snap = sc.topology.build(epoch, &states, &sc.constellation, &sc.link_params);
            if with_ground {
                let ctx = LinkContext { visibility: sc.topology.visibility(), params: &sc.link_params };
                let ground: Vec<GroundNode> = sc.ground_stations.iter().chain(&sc.aircraft).cloned().collect();
                snap = attach_ground_links(snap, &ground, &ctx);
            }
            snap.write_csv(&mut out)?;
        }
        Command::Route { scenario: s, src, dst, metric, epoch } => {
            let sc = scenario(&s)?;
            let states = propagate(&sc.constellation, epoch);
            let ctx = LinkContext { visibility: sc.topology.visibility(), params: &sc.link_params };
            let ground: Vec<GroundNode> = sc.ground_stations.iter().chain(&sc.aircraft).cloned().collect();
            let snap = attach_ground_links(
                sc.topology.build(epoch, &states, &sc.constellation, &sc.link_params),
                &ground,
                &ctx,
            );
            let resolve =
                |label: &str| snap.resolve(label).ok_or_else(|| Failure::Input(format!("unknown node `{label}`")));
            let (a, b) = (resolve(&src)?, resolve(&dst)?);
            let metric = match metric {
                MetricArg::Distance => Metric::Distance,
                MetricArg::Hops => Metric::Hops,
            };
            let path = path_by_metric(&snap, a, b, metric)
                .map_err(|e| Failure::Input(e.to_string()))?
                .ok_or_else(|| Failure::Runtime(format!("no path from {src} to {dst} at epoch {epoch}")))?;
            let labels: Vec<String> = path.nodes.iter().map(|&n| snap.label(n)).collect();
            writeln!(out, "path: {}", labels.join(" -> "))?;
            writeln!(out, "hops: {}", path.hop_count)?;
            writeln!(out, "distance_km: {}", path.total_distance_km)?;
            writeln!(out, "delay_s: {}", path.total_propagation_delay_s)?;
            writeln!(out, "bottleneck_bps: {}", path.bottleneck_capacity_bps)?;
        }
        Command::Hops { scenario: s, pairs, epochs } => {
            let sc = scenario(&s)?;
            let pairs = read_pairs(&pairs)?;
            let epochs = spread_over_period(&sc, epochs)?;
            let stats = ground_pair_hop_stats(&sc.constellation, &pairs, &epochs, &sc.topology, &sc.link_params)
                .map_err(|e| Failure::Input(e.to_string()))?;
            stats.write_csv(&mut out)?;
            if stats.skipped > 0 {
                eprintln!("{} pair-epochs had no connected satellites and were skipped", stats.skipped);
            }
        }
        Command::SdpMhp { scenario: s, pairs, seed, epochs } => {
            let sc = scenario(&s)?;
            let epochs = spread_over_period(&sc, epochs)?;
            let r = sdp_mhp_fraction(&sc.constellation, &sc.topology, &sc.link_params, pairs, &epochs, seed)
                .map_err(|e| Failure::Input(e.to_string()))?;
            writeln!(out, "fraction: {}", r.fraction)?;
            writeln!(out, "matching: {}", r.matching)?;
            writeln!(out, "compared: {}", r.compared)?;
            writeln!(out, "disconnected: {}", r.disconnected)?;
            for (epoch, f) in &r.per_epoch {
                writeln!(out, "epoch {epoch}: {f}")?;
            }
        }
        Command::IfcSweep { scenario: s, isls, modes, seeds } => {
            let sc = scenario(&s)?;
            let isls = parse_isls(&isls).map_err(Failure::Input)?;
            if modes.is_empty() {
                return Err(Failure::Input("--modes must not be empty".into()));
            }
            let seeds: Vec<u64> = match seeds {
                Some(0) => return Err(Failure::Input("--seeds must be at least 1".into())),
                Some(n) => (0..n).collect(),
                None => sc.seeds.clone(),
            };
            if seeds.is_empty() {
                return Err(Failure::Input("scenario has no seeds".into()));
            }
            let mut modes = modes;
            modes.sort();
            modes.dedup();
            let result = sweep_max_isls(&sc, &isls, &modes, &sc.ifc.epochs_s, &seeds);
            result.write_csv(&mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) | Err(Failure::ClosedOutput) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
