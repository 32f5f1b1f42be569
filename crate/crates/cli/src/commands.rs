use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use bkd_core::beacon::{read_jsonl, serve, spawn_appender};
use bkd_core::{
    accept_session, load_ledger, peek_auth_block, propose_session, save_ledger, verify_chain,
    BeaconClient, BlockState, Ledger, MasterSecret, PulseStore, RotationVerdict, SessionKey,
    SessionProposal,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::args::{AcceptArgs, ExportArgs, GlobalOpts, InitArgs, ProposeArgs, ServeArgs};
use crate::error::CliError;

/// Fixed start timestamp for locally generated chains under `--rng-seed`, so
/// seeded runs are byte-for-byte reproducible.
const TEST_EPOCH: u64 = 1_700_000_000;

type Result<T> = std::result::Result<T, CliError>;

pub fn make_rng(opts: &GlobalOpts) -> Result<ChaCha20Rng> {
    match opts.rng_seed {
        Some(seed) if opts.insecure_test => {
            log::warn!("seeded randomness in use; output is predictable");
            Ok(ChaCha20Rng::seed_from_u64(seed))
        }
        Some(_) => Err(CliError::InsecureFlagRefused),
        None => Ok(ChaCha20Rng::from_entropy()),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn start_timestamp(opts: &GlobalOpts) -> u64 {
    if opts.rng_seed.is_some() {
        TEST_EPOCH
    } else {
        unix_now()
    }
}

fn read_ledger(path: &Path) -> Result<Ledger> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::LedgerMissing(path.to_owned()))
        }
        Err(e) => return Err(CliError::io(format!("reading {}", path.display()), e)),
    };
    let auth = peek_auth_block(&bytes)?;
    Ok(load_ledger(&bytes, &auth)?)
}

/// Writes through a temporary sibling and renames, so a crash never leaves a
/// half-written ledger behind.
fn write_ledger(path: &Path, ledger: &Ledger) -> Result<()> {
    let bytes = save_ledger(ledger, ledger.auth_block())?;
    write_private(path, &bytes)
}

fn write_private(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.as_os_str().to_owned();
    tmp_name.push(".tmp");
    let tmp = Path::new(&tmp_name);
    let ctx = |what: &str, p: &Path| format!("{what} {}", p.display());

    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options
        .open(tmp)
        .map_err(|e| CliError::io(ctx("creating", tmp), e))?;
    file.write_all(bytes)
        .and_then(|()| file.sync_all())
        .map_err(|e| CliError::io(ctx("writing", tmp), e))?;
    fs::rename(tmp, path).map_err(|e| CliError::io(ctx("replacing", path), e))
}

fn open_beacon(opts: &GlobalOpts) -> Result<PulseStore> {
    let source = opts.beacon.as_deref().ok_or(CliError::NoBeacon)?;
    if is_endpoint(source) {
        return Ok(BeaconClient::new(source).fetch_store()?);
    }
    let file = File::open(source).map_err(|e| CliError::io(format!("opening {source}"), e))?;
    Ok(PulseStore::import_jsonl(BufReader::new(file))?)
}

fn is_endpoint(source: &str) -> bool {
    source.starts_with("http://") || source.starts_with("https://")
}

fn print_key(key: &SessionKey, reveal: bool) {
    println!("session key fingerprint: {}", key.fingerprint());
    if reveal {
        println!("session key: {}", hex::encode(key.bytes));
    }
}

pub fn init(opts: &GlobalOpts, args: &InitArgs) -> Result<i32> {
    if !args.force && opts.ledger.exists() {
        return Err(CliError::LedgerExists(opts.ledger.clone()));
    }
    let secret = match (&args.secret_hex, args.generate) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            let bytes: String = text.split_whitespace().collect();
            let bytes = hex::decode(bytes).map_err(|e| CliError::BadSecretInput(e.to_string()))?;
            MasterSecret::new(bytes)?
        }
        (None, Some(n)) => {
            let mut rng = make_rng(opts)?;
            let mut bytes = vec![0u8; n];
            rng.fill_bytes(&mut bytes);
            let secret = MasterSecret::new(bytes)?;
            if let Some(out) = &args.secret_out {
                let mut text = hex::encode(secret.as_bytes());
                text.push('\n');
                write_private(out, text.as_bytes())?;
            }
            secret
        }
        (None, None) => unreachable!("clap requires a secret source"),
    };

    let ledger = Ledger::init(&secret, &args.group)?;
    write_ledger(&opts.ledger, &ledger)?;
    println!(
        "initialized {} for group {:?}: {} derivation blocks, 1 authentication block",
        opts.ledger.display(),
        ledger.group_id(),
        ledger.blocks().derivation_blocks().len()
    );
    Ok(0)
}

pub fn status(opts: &GlobalOpts) -> Result<i32> {
    let ledger = read_ledger(&opts.ledger)?;
    let blocks = ledger.blocks();
    let status = ledger.rotation_status(opts.rekey_threshold as usize)?;
    println!("group: {}", ledger.group_id());
    println!(
        "fresh: {}  used: {}  retired: {}",
        blocks.count_in(BlockState::Fresh),
        blocks.count_in(BlockState::Used),
        blocks.count_in(BlockState::Retired)
    );
    println!(
        "status: {:?} (rekey threshold {})",
        status.verdict, status.threshold
    );
    Ok(match status.verdict {
        RotationVerdict::Healthy => 0,
        RotationVerdict::RekeySoon => 3,
        RotationVerdict::Exhausted => 4,
    })
}

pub fn propose(opts: &GlobalOpts, args: &ProposeArgs) -> Result<i32> {
    let mut rng = make_rng(opts)?;
    let mut ledger = read_ledger(&opts.ledger)?;
    let store = open_beacon(opts)?;
    let outcome = propose_session(&mut ledger, &store, &mut rng, opts.suite, opts.min_age)?;

    // Record the block as spent before the proposal can leave this machine.
    write_ledger(&opts.ledger, &ledger)?;
    let mut json = serde_json::to_string_pretty(&outcome.proposal).expect("proposal serializes");
    json.push('\n');
    fs::write(&args.out, json)
        .map_err(|e| CliError::io(format!("writing {}", args.out.display()), e))?;

    let p = &outcome.proposal;
    println!("proposal written to {}", args.out.display());
    println!(
        "block {}, pulse {}, suite {}",
        p.block_index, p.pulse_index, p.suite_id
    );
    print_key(&outcome.session_key, opts.reveal);
    Ok(0)
}

pub fn accept(opts: &GlobalOpts, args: &AcceptArgs) -> Result<i32> {
    let raw = fs::read(&args.proposal)
        .map_err(|e| CliError::io(format!("reading {}", args.proposal.display()), e))?;
    let proposal: SessionProposal =
        serde_json::from_slice(&raw).map_err(|e| CliError::UnparseableProposal(e.to_string()))?;
    let mut ledger = read_ledger(&opts.ledger)?;
    let store = open_beacon(opts)?;
    let outcome = accept_session(&mut ledger, &store, &proposal)?;
    let key = &outcome.session_key;
    write_ledger(&opts.ledger, &ledger)?;

    println!("accepted proposal for group {:?}", proposal.group_id);
    println!(
        "block {}, pulse {}, suite {}",
        key.block_index, key.pulse_index, key.suite_id
    );
    print_key(key, opts.reveal);
    Ok(0)
}

pub fn verify(opts: &GlobalOpts) -> Result<i32> {
    let source = opts.beacon.as_deref().ok_or(CliError::NoBeacon)?;
    let pulses = if is_endpoint(source) {
        // The client verifies while fetching and reports the first bad index.
        BeaconClient::new(source).fetch_store()?.snapshot()
    } else {
        let file = File::open(source).map_err(|e| CliError::io(format!("opening {source}"), e))?;
        read_jsonl(BufReader::new(file))?
    };
    let verdict = verify_chain(&pulses)?;
    if !verdict.ok() {
        return Err(CliError::ChainInvalid(verdict));
    }
    let last = pulses.last().expect("verified chain is non-empty");
    println!(
        "chain ok: {} pulses, indices {}..={}",
        pulses.len(),
        pulses[0].index,
        last.index
    );
    Ok(0)
}

pub fn export(opts: &GlobalOpts, args: &ExportArgs) -> Result<i32> {
    let store = match args.generate {
        Some(n) => {
            let mut rng = make_rng(opts)?;
            PulseStore::generate(&mut rng, n as usize, start_timestamp(opts))?
        }
        None => open_beacon(opts)?,
    };
    persist_chain(&store, &args.out)?;
    println!("wrote {} pulses to {}", store.len(), args.out.display());
    Ok(0)
}

fn persist_chain(store: &PulseStore, path: &Path) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = File::create(path).map_err(|e| CliError::io(ctx(), e))?;
    let mut out = BufWriter::new(file);
    store.export_jsonl(&mut out)?;
    out.flush().map_err(|e| CliError::io(ctx(), e))
}

pub fn beacon_serve(opts: &GlobalOpts, args: &ServeArgs) -> Result<i32> {
    let mut rng = make_rng(opts)?;
    let store = match &args.chain_file {
        Some(path) if path.exists() => {
            let file = File::open(path)
                .map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
            PulseStore::import_jsonl(BufReader::new(file))?
        }
        _ => PulseStore::new(),
    };
    let store = Arc::new(store);
    let base = start_timestamp(opts);
    let next_ts = |store: &PulseStore| store.latest().map_or(base, |p| p.timestamp.max(base));
    for _ in 0..args.pregenerate {
        store.append_next(&mut rng, next_ts(&store))?;
    }
    if store.is_empty() {
        store.append_next(&mut rng, next_ts(&store))?;
    }

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("starting runtime", e))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .map_err(|source| CliError::Bind {
                addr: args.listen,
                source,
            })?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::io("reading bound address", e))?;
        println!("listening on http://{addr}");
        std::io::stdout().flush().ok();

        let appender = (args.interval_ms > 0)
            .then(|| spawn_appender(store.clone(), Duration::from_millis(args.interval_ms), rng));
        serve(listener, store.clone(), shutdown_signal())
            .await
            .map_err(|e| CliError::io("serving", e))?;
        if let Some(task) = appender {
            task.abort();
        }
        Ok::<_, CliError>(())
    })?;

    if let Some(path) = &args.chain_file {
        persist_chain(&store, path)?;
        println!("saved {} pulses to {}", store.len(), path.display());
    }
    Ok(0)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        if let Err(e) = tokio::signal::ctrl_c().await {
            log::error!("cannot listen for ctrl-c: {e}");
            std::future::pending::<()>().await;
        }
    };
    #[cfg(unix)]
    let term = async {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(e) => {
                log::error!("cannot listen for SIGTERM: {e}");
                std::future::pending::<()>().await;
            }
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        () = ctrl_c => {}
        () = term => {}
    }
    log::info!("shutting down");
}
