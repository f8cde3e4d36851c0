use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use dhp::crypto::member_id_for;
use dhp::ledger::LedgerConfig;
use dhp::netsim::{Simulation, SimConfig, GENESIS_TIME};
use dhp::protocol::{
    audit_manifest, bm_verify, parse_manifest, parse_policy, thf_issue, OutcomeStatus, PendingDhp,
};
use dhp::registry::Member;
use dhp::service::{
    audit_block_log, read_block_log, read_receipts, run_node, Client, Node, NodeConfig, NodeRole,
    ReceiptLog, Server,
};
use dhp::{keygen, DhpToken, KeyPair, MemberId, PublicKey, Registry, Role, TestMethod, Timestamp, TravelDocument};

#[derive(Parser)]
#[command(name = "dhp", version, about = "Digital health passport consortium tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a member key file.
    Keygen {
        #[arg(long)]
        role: Role,
        #[arg(long)]
        out: PathBuf,
        /// 32-byte hex seed for a reproducible key.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Manage the consortium registry file.
    #[command(subcommand)]
    Registry(RegistryCmd),
    /// Testing facility actions.
    #[command(subcommand)]
    Thf(ThfCmd),
    /// Run an authority node.
    #[command(subcommand)]
    Hsa(DaemonCmd),
    /// Blockchain member actions.
    #[command(subcommand)]
    Bm(BmCmd),
    /// Network simulation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Block log maintenance.
    #[command(subcommand)]
    Chain(ChainCmd),
    /// Verification receipt audits.
    #[command(subcommand)]
    Audit(AuditCmd),
}

#[derive(Subcommand)]
enum RegistryCmd {
    /// Add a member, from a key file or explicit fields.
    Add {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long, conflicts_with_all = ["role", "pubkey"])]
        key: Option<PathBuf>,
        #[arg(long, requires = "pubkey")]
        role: Option<Role>,
        #[arg(long, requires = "role")]
        pubkey: Option<String>,
        /// Home authority id, for testing facilities.
        #[arg(long)]
        home: Option<String>,
    },
    /// Print every member.
    List {
        #[arg(long)]
        registry: PathBuf,
    },
}

#[derive(Subcommand)]
enum ThfCmd {
    /// Sign a result and print the submission frame as hex.
    Issue {
        #[arg(long)]
        key: PathBuf,
        /// `NUMBER:CTY:YYYY-MM-DD`
        #[arg(long)]
        doc: String,
        #[arg(long, default_value = "RT-qPCR")]
        method: String,
        /// `negative` (risk-free) or `positive`.
        #[arg(long)]
        result: String,
        /// Unix seconds; defaults to now.
        #[arg(long)]
        tested_at: Option<u64>,
    },
    /// Submit a frame to an authority node and wait for its token.
    Submit {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        node: String,
        #[arg(long)]
        frame: String,
        /// Seconds to wait for inclusion; 0 returns right after the ack.
        #[arg(long, default_value_t = 30)]
        wait: u64,
    },
}

#[derive(Subcommand)]
enum DaemonCmd {
    /// Serve requests and take part in block production.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct LocalChain {
    /// Directory holding `blocks.log`.
    #[arg(long)]
    data_dir: PathBuf,
    /// Defaults to `<data-dir>/registry.txt`.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long, default_value_t = GENESIS_TIME.0)]
    genesis_time: u64,
}

impl LocalChain {
    fn registry(&self) -> Result<Registry, String> {
        let path = self
            .registry
            .clone()
            .unwrap_or_else(|| self.data_dir.join("registry.txt"));
        Registry::parse(&read(&path)?).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Subcommand)]
enum BmCmd {
    /// Run a member node that replicates the chain and serves verifications.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Verify a token against the local chain and record a receipt.
    Verify {
        #[arg(long)]
        token: String,
        /// `NUMBER:CTY:YYYY-MM-DD`
        #[arg(long)]
        doc: String,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[command(flatten)]
        chain: LocalChain,
        /// Travel time in unix seconds; defaults to now.
        #[arg(long)]
        at: Option<u64>,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run a simulation and print its summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also write the per-passport delay table here.
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ChainCmd {
    /// Revalidate the whole block log from genesis.
    Audit {
        #[command(flatten)]
        chain: LocalChain,
    },
}

#[derive(Subcommand)]
enum AuditCmd {
    /// Check that every manifest entry has a signed receipt.
    Manifest {
        #[arg(long)]
        receipts: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        registry: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_key(path: &Path) -> Result<KeyPair, String> {
    KeyPair::from_key_file(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_doc(s: &str) -> Result<TravelDocument, String> {
    TravelDocument::parse(s).map_err(|e| format!("document {s:?}: {e}"))
}

fn keygen_cmd(role: Role, out: &Path, seed: Option<String>) -> Result<(), String> {
    let seed = seed
        .map(|s| {
            hex::decode(s.trim())
                .ok()
                .and_then(|b| <[u8; 32]>::try_from(b).ok())
                .ok_or("seed must be 32 bytes of hex")
        })
        .transpose()?;
    if out.exists() {
        return Err(format!("{} already exists", out.display()));
    }
    let key = keygen(role, seed);
    fs::write(out, key.to_key_file()).map_err(|e| format!("{}: {e}", out.display()))?;
    println!("{} {} {}", role, key.id(), key.public());
    Ok(())
}

fn registry_cmd(cmd: RegistryCmd) -> Result<(), String> {
    match cmd {
        RegistryCmd::Add {
            registry,
            key,
            role,
            pubkey,
            home,
        } => {
            let mut reg = if registry.exists() {
                Registry::parse(&read(&registry)?).map_err(|e| e.to_string())?
            } else {
                Registry::new()
            };
            let actor = match (key, role, pubkey) {
                (Some(path), _, _) => load_key(&path)?.owner().clone(),
                (None, Some(role), Some(pk)) => {
                    let public_key = PublicKey::from_hex(&pk).map_err(|e| e.to_string())?;
                    dhp::ActorId {
                        role,
                        id: member_id_for(&public_key),
                        public_key,
                    }
                }
                _ => return Err("pass --key, or --role and --pubkey".into()),
            };
            let home = home
                .map(|h| MemberId::from_hex(&h).map_err(|e| e.to_string()))
                .transpose()?;
            let id = actor.id;
            reg.add_member(Member { actor, home }).map_err(|e| e.to_string())?;
            fs::write(&registry, reg.to_text()).map_err(|e| e.to_string())?;
            println!("added {id}");
        }
        RegistryCmd::List { registry } => {
            let reg = Registry::parse(&read(&registry)?).map_err(|e| e.to_string())?;
            for m in reg.members() {
                match m.home {
                    Some(h) => println!("{} {} home={h}", m.actor.role, m.actor.id),
                    None => println!("{} {}", m.actor.role, m.actor.id),
                }
            }
        }
    }
    Ok(())
}

fn thf_cmd(cmd: ThfCmd) -> Result<(), String> {
    match cmd {
        ThfCmd::Issue {
            key,
            doc,
            method,
            result,
            tested_at,
        } => {
            let key = load_key(&key)?;
            let doc = parse_doc(&doc)?;
            let method = TestMethod::new(method).map_err(|e| e.to_string())?;
            let risk_free = match result.as_str() {
                "negative" | "risk-free" => true,
                "positive" => false,
                other => return Err(format!("result must be negative or positive, not {other:?}")),
            };
            let now = Timestamp::now();
            let tested_at = tested_at.map_or(now, Timestamp);
            let pending =
                thf_issue(&key, &doc, risk_free, method, tested_at, now).map_err(|e| e.to_string())?;
            println!("{}", hex::encode(pending.to_frame()));
        }
        ThfCmd::Submit {
            key,
            node,
            frame,
            wait,
        } => {
            let key = load_key(&key)?;
            let bytes = hex::decode(frame.trim()).map_err(|_| "frame is not hex")?;
            let pending = PendingDhp::from_frame(&bytes).map_err(|e| e.to_string())?;
            let mut client = Client::connect(node.as_str(), &key).map_err(|e| e.to_string())?;
            let (ack, duplicate) = client.submit_dhp(&pending).map_err(|e| e.to_string())?;
            println!("ack {ack}{}", if duplicate { " (duplicate)" } else { "" });
            for _ in 0..wait * 4 {
                if let Some(token) = client.query_token(ack).map_err(|e| e.to_string())? {
                    println!("token {}", token.to_hex());
                    return Ok(());
                }
                std::thread::sleep(Duration::from_millis(250));
            }
            if wait > 0 {
                return Err(format!("not included within {wait} s; query ack {ack} later"));
            }
        }
    }
    Ok(())
}

fn run_daemon(config: &Path, expected: NodeRole) -> Result<(), String> {
    let cfg = NodeConfig::load(config).map_err(|e| e.to_string())?;
    if cfg.role != expected {
        return Err(format!("{} is not a {:?} node config", config.display(), expected));
    }
    let node = Arc::new(Node::open(&cfg, Timestamp::now()).map_err(|e| e.to_string())?);
    let server = Server::start(node.clone(), cfg.listen_address.as_str()).map_err(|e| e.to_string())?;
    log::info!(
        "{} node {} listening on {} at height {}",
        cfg.role.role(),
        node.identity().id(),
        server.local_addr(),
        node.height()
    );
    run_node(node, &cfg, Arc::new(AtomicBool::new(false)));
    Ok(())
}

fn bm_verify_cmd(
    token: &str,
    doc: &str,
    policy: &Path,
    key: &Path,
    local: &LocalChain,
    at: Option<u64>,
) -> Result<bool, String> {
    let token = DhpToken::from_hex(token).map_err(|e| format!("token: {e}"))?;
    let doc = parse_doc(doc)?;
    let policy = parse_policy(&read(policy)?).map_err(|e| format!("{}: {e}", policy.display()))?;
    let key = load_key(key)?;
    let registry = local.registry()?;
    let now = Timestamp::now();
    let chain = read_block_log(
        &local.data_dir.join("blocks.log"),
        &registry,
        Timestamp(local.genesis_time),
        LedgerConfig::default(),
        now,
    )
    .map_err(|e| e.to_string())?;
    let (outcome, receipt) = bm_verify(&key, &chain, &token, &doc, &policy, at.map_or(now, Timestamp))
        .map_err(|e| e.to_string())?;
    let mut log = ReceiptLog::open(&local.data_dir.join("receipts.log")).map_err(|e| e.to_string())?;
    log.append(&receipt).map_err(|e| e.to_string())?;
    println!("{outcome}");
    println!("receipt {}", receipt.receipt_id());
    Ok(outcome.status == OutcomeStatus::Valid)
}

fn sim_cmd(config: &Path, export: Option<PathBuf>) -> Result<(), String> {
    let cfg = SimConfig::from_toml(&read(config)?).map_err(|e| e.to_string())?;
    let run = Simulation::new(cfg).and_then(Simulation::run).map_err(|e| e.to_string())?;
    print!("{}", run.report.summary());
    if let Some(path) = export {
        fs::write(&path, run.report.export()).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn chain_audit_cmd(local: &LocalChain) -> Result<(), String> {
    let registry = local.registry()?;
    let path = local.data_dir.join("blocks.log");
    let chain = audit_block_log(
        &path,
        &registry,
        Timestamp(local.genesis_time),
        LedgerConfig::default(),
        Timestamp::now(),
    )
    .map_err(|e| format!("{}: {e}", path.display()))?;
    println!(
        "ok: {} blocks after genesis, {} records, tip {}",
        chain.height(),
        chain.record_count(),
        chain.tip_hash()
    );
    Ok(())
}

fn audit_manifest_cmd(receipts: &[PathBuf], manifest: &Path, registry: &Path) -> Result<bool, String> {
    let registry = Registry::parse(&read(registry)?).map_err(|e| e.to_string())?;
    let manifest = parse_manifest(&read(manifest)?).map_err(|e| format!("{}: {e}", manifest.display()))?;
    let mut all = Vec::new();
    for path in receipts {
        all.extend(read_receipts(path).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    let report = audit_manifest(&all, &manifest, &registry).map_err(|e| e.to_string())?;
    for m in &report.missing {
        println!("missing {}", m.to_line());
    }
    println!(
        "{} of {} manifest entries covered by {} receipts",
        manifest.len() - report.missing.len(),
        manifest.len(),
        all.len()
    );
    Ok(report.is_complete())
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let ok = |b: bool| if b { ExitCode::SUCCESS } else { ExitCode::from(3) };
    match cli.command {
        Command::Keygen { role, out, seed } => keygen_cmd(role, &out, seed)?,
        Command::Registry(cmd) => registry_cmd(cmd)?,
        Command::Thf(cmd) => thf_cmd(cmd)?,
        Command::Hsa(DaemonCmd::Run { config }) => run_daemon(&config, NodeRole::Hsa)?,
        Command::Bm(BmCmd::Run { config }) => run_daemon(&config, NodeRole::Bm)?,
        Command::Bm(BmCmd::Verify {
            token,
            doc,
            policy,
            key,
            chain,
            at,
        }) => return bm_verify_cmd(&token, &doc, &policy, &key, &chain, at).map(ok),
        Command::Sim(SimCmd::Run { config, export }) => sim_cmd(&config, export)?,
        Command::Chain(ChainCmd::Audit { chain }) => chain_audit_cmd(&chain)?,
        Command::Audit(AuditCmd::Manifest {
            receipts,
            manifest,
            registry,
        }) => return audit_manifest_cmd(&receipts, &manifest, &registry).map(ok),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
