//! `safewalk`: batch ingestion, community analysis, routing, simulation,
//! sweeps and the HTTP service.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use safewalk_core::geo::GeoPoint;
use safewalk_core::router::RouteRequest;
use safewalk_core::sim::{MapInput, Scenario, ScenarioConfig, ScenarioInputs, Snapshot, DEFAULT_SEED};
use safewalk_service::{AppState, Store};

#[derive(Parser)]
#[command(name = "safewalk", version, about = "Risk-aware pedestrian routing over IoT device communities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a road map and device table and bundle them into one file.
    Ingest(IngestArgs),
    /// Detect CLOR and SFOR communities and write their footprints.
    Communities(CommunitiesArgs),
    /// Compute one route.
    Route(RouteArgs),
    /// Walk a pedestrian through successive slots, re-routing each slot.
    Simulate(SimulateArgs),
    /// Tabulate travel distance and safety score over alpha and rho.
    Sweep(SweepArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// OSM XML or GeoJSON road map.
    #[arg(long)]
    map: PathBuf,
    /// Device table (CSV).
    #[arg(long)]
    devices: PathBuf,
    /// Owner friendship edge list; a small-world network is generated when absent.
    #[arg(long)]
    owner_edges: Option<PathBuf>,
    /// Scenario configuration (JSON); unspecified fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Bundle file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BundleArgs {
    /// Bundle written by `ingest`.
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Slot to evaluate; the world is stepped forward from slot 0.
    #[arg(long, default_value_t = 0)]
    slot: usize,
}

#[derive(Args)]
struct CommunitiesArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Footprint radius in meters (default from the bundle).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TripArgs {
    /// Origin as lat,lon.
    #[arg(long, value_parser = parse_point)]
    from: GeoPoint,
    /// Destination as lat,lon.
    #[arg(long, value_parser = parse_point)]
    to: GeoPoint,
    /// Device whose SFOR community defines the trusted contacts.
    #[arg(long)]
    ego: String,
}

#[derive(Args)]
struct RouteArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    #[command(flatten)]
    trip: TripArgs,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    d_th: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    trip: TripArgs,
    #[arg(long)]
    alpha: f64,
    /// Maximum number of slots to simulate.
    #[arg(long, default_value_t = 30)]
    slots: usize,
    /// Log file, one JSON object per slot.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    #[command(flatten)]
    trip: TripArgs,
    /// Comma-separated alphas, ascending.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    alphas: Vec<f64>,
    /// Comma-separated footprint radii in meters (default from the bundle).
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    /// CSV file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Load this bundle at startup unless the data directory already holds it.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, env = "SAFEWALK_LISTEN", default_value = "127.0.0.1:8080")]
    listen: String,
    /// Directory for persisted scenarios; in-memory when absent.
    #[arg(long, env = "SAFEWALK_DATA")]
    data_dir: Option<PathBuf>,
    /// Built UI bundle served at `/`.
    #[arg(long, env = "SAFEWALK_STATIC")]
    static_dir: Option<PathBuf>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    /// Bad input: exit code 2.
    fn invalid(message: impl Display) -> Failure {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    fn io(message: impl Display) -> Failure {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }
}

impl From<safewalk_core::Error> for Failure {
    fn from(e: safewalk_core::Error) -> Self {
        Failure::invalid(e)
    }
}

type CliResult = Result<(), Failure>;

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| format!("{p:?} is not a number")))
        .collect()
}

fn parse_point(s: &str) -> Result<GeoPoint, String> {
    match parse_list(s)?[..] {
        [lat, lon] => Ok(GeoPoint { lat, lon }),
        _ => Err(format!("{s:?} is not lat,lon")),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> CliResult {
    fs::write(path, content).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &Value) -> CliResult {
    let mut s = serde_json::to_string_pretty(v).map_err(Failure::io)?;
    s.push('\n');
    write(path, &s)
}

fn load_bundle(path: &Path) -> Result<ScenarioInputs, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::invalid(format!("{}: not a scenario bundle: {e}", path.display())))
}

/// Builds the scenario and steps it to `slot`.
fn open_scenario(args: &BundleArgs) -> Result<(Scenario, Snapshot), Failure> {
    let inputs = load_bundle(&args.bundle)?;
    let (scenario, _) = Scenario::from_inputs(&inputs, args.seed)?;
    let mut snap = scenario.initial_snapshot()?;
    for _ in 0..args.slot {
        snap = scenario.step(&snap)?;
    }
    Ok((scenario, snap))
}

fn request(trip: &TripArgs, alpha: f64) -> RouteRequest {
    RouteRequest {
        origin: trip.from,
        destination: trip.to,
        alpha,
        ego_device: trip.ego.clone(),
    }
}

fn cmd_ingest(a: IngestArgs) -> CliResult {
    let config: ScenarioConfig = match &a.config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?,
        None => ScenarioConfig::default(),
    };
    let inputs = ScenarioInputs {
        map: MapInput {
            format: None,
            content: read(&a.map)?,
        },
        devices_csv: read(&a.devices)?,
        owner_edges: a.owner_edges.as_deref().map(read).transpose()?,
        config,
    };
    let (_, report) = Scenario::from_inputs(&inputs, a.seed)?;
    let bundle = serde_json::to_value(&inputs).map_err(Failure::io)?;
    write_json(&a.out, &bundle)?;
    println!("seed: {}", a.seed);
    println!("road nodes: {}", report.road_nodes);
    println!("road edges: {}", report.road_edges);
    println!("road components: {} (main: {} nodes)", report.road_components, report.main_component_nodes);
    println!("devices read: {}", report.devices_total);
    println!("devices kept: {}", report.devices_kept);
    println!("devices filtered: {}", report.devices_filtered);
    println!("rows rejected: {}", report.rows_rejected.len());
    for r in &report.rows_rejected {
        eprintln!("line {}: {}", r.line, r.message);
    }
    println!("owners: {}", report.owners);
    println!("owner edges: {}", report.owner_edges);
    Ok(())
}

fn tag_features(collection: &Value, kind: &str) -> Vec<Value> {
    collection["features"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|f| {
            let mut f = f.clone();
            f["properties"]["kind"] = json!(kind);
            f
        })
        .collect()
}

fn cmd_communities(a: CommunitiesArgs) -> CliResult {
    let (scenario, snap) = open_scenario(&a.bundle)?;
    let rho = a.rho.unwrap_or(scenario.config.rho);
    let footprints = scenario.footprints(&snap, rho)?;
    let view = scenario.state_view(&snap);
    let mut features = tag_features(&safewalk_core::riskmap::footprints_geojson(&footprints, scenario.graph.origin()), "footprint");
    features.extend(tag_features(&view["devices"], "device"));
    let out = json!({
        "type": "FeatureCollection",
        "seed": a.bundle.seed,
        "snapshot_id": snap.id(),
        "rho": rho,
        "clor_community_count": snap.clor_partition.count(),
        "sfor_community_count": scenario.sfor_partition.count(),
        "features": features,
    });
    write_json(&a.out, &out)?;
    println!("seed: {}", a.bundle.seed);
    println!("snapshot: {}", snap.id());
    println!("clor communities: {}", snap.clor_partition.count());
    println!("sfor communities: {}", scenario.sfor_partition.count());
    println!("footprints: {}", footprints.len());
    Ok(())
}

fn cmd_route(a: RouteArgs) -> CliResult {
    let (scenario, snap) = open_scenario(&a.bundle)?;
    let rho = a.rho.unwrap_or(scenario.config.rho);
    let d_th = a.d_th.unwrap_or(scenario.config.d_th);
    let outcome = scenario.route_with(&snap, &request(&a.trip, a.alpha), rho, d_th)?;
    let mut feature = outcome.route.to_geojson(&scenario.graph, a.alpha, &outcome.snapshot_id);
    feature["properties"]["seed"] = json!(a.bundle.seed);
    feature["properties"]["rho"] = json!(rho);
    feature["properties"]["d_th"] = json!(d_th);
    write_json(&a.out, &feature)?;
    let r = &outcome.route;
    println!("seed: {}", a.bundle.seed);
    println!("snapshot: {}", outcome.snapshot_id);
    println!("travel distance m: {:.6}", r.travel_distance);
    println!("safety score: {:.6}", r.safety_score);
    println!("total cost: {:.6}", r.total_cost);
    println!("edges: {}", r.edge_path.len());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let inputs = load_bundle(&a.bundle)?;
    let (scenario, _) = Scenario::from_inputs(&inputs, a.seed)?;
    let log = scenario.run_dynamic_route(&request(&a.trip, a.alpha), a.slots)?;
    write(&a.out, &log.to_ndjson(&scenario.graph, a.alpha))?;
    let reroutes = log
        .records
        .windows(2)
        .filter(|w| match (&w[0].route, &w[1].route) {
            (Some(x), Some(y)) => !x.node_path.ends_with(&y.node_path),
            _ => false,
        })
        .count();
    println!("seed: {}", a.seed);
    println!("slots simulated: {}", log.records.len());
    println!("reroutes: {reroutes}");
    match log.arrival_slot {
        Some(s) => println!("arrived at slot: {s}"),
        None => println!("arrived at slot: none"),
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let (scenario, snap) = open_scenario(&a.bundle)?;
    let rhos = a.rhos.clone().unwrap_or_else(|| vec![scenario.config.rho]);
    let table = scenario.alpha_sweep(&snap, &request(&a.trip, a.alphas[0]), &a.alphas, &rhos)?;
    write(&a.out, &table.to_csv())?;
    println!("seed: {}", a.bundle.seed);
    println!("snapshot: {}", snap.id());
    println!("rows: {}", table.rows.len());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let store = match &a.data_dir {
        Some(dir) => Store::open(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?,
        None => Store::in_memory(),
    };
    if let Some(path) = &a.bundle {
        let inputs = load_bundle(path)?;
        let entry = match store.find(&inputs, a.seed) {
            Some(e) => e,
            None => store.create(inputs, a.seed).map_err(|e| Failure::invalid(e.message))?,
        };
        println!("scenario: {} (seed {})", entry.id, a.seed);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.listen)
            .await
            .map_err(|e| Failure::io(format!("{}: {e}", a.listen)))?;
        let addr = listener.local_addr().map_err(Failure::io)?;
        println!("listening on http://{addr}");
        safewalk_service::serve(listener, AppState::new(store), a.static_dir.clone())
            .await
            .map_err(Failure::io)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Communities(a) => cmd_communities(a),
        Command::Route(a) => cmd_route(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
