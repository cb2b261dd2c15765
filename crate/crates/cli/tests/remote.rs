use std::net::SocketAddr;
use std::path::Path;

use votelab_cli::main_with;
use votelab_server::{AppState, HttpConfig, ServerConfig};

const ADMIN: &str = "remote-test-token";
const CLOSE: &str = "2021-05-17T08:00:00Z";

fn ok(args: &[&str]) -> String {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with(std::iter::once("votelab").chain(args.iter().copied()), &mut out, &mut err);
    assert_eq!(code, 0, "votelab {args:?}: {}", String::from_utf8_lossy(&err));
    String::from_utf8(out).unwrap()
}

/// Starts a server over an in-memory store on a free port.
fn spawn_server() -> String {
    let config = ServerConfig {
        store: "memory:".into(),
        server: HttpConfig {
            admin_token: Some(ADMIN.into()),
            scheduler: false,
            rate_limit_per_minute: 0,
            ..HttpConfig::default()
        },
        ..ServerConfig::default()
    };
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let state = AppState::from_config(config).unwrap();
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            votelab_server::serve(state, listener, std::future::pending()).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn read_dir(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read_to_string(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn remote_backend_matches_embedded() {
    let url = spawn_server();
    let store_dir = tempfile::tempdir().unwrap();
    let store = store_dir.path().to_str().unwrap();
    let remote = ["--api-url", url.as_str(), "--api-token", ADMIN];
    let embedded = ["--store", store];

    for backend in [&remote[..], &embedded[..]] {
        let run = |rest: &[&str]| ok(&[backend, rest].concat());
        run(&["seed", "covid-fixture", "--voters", "24"]);
        run(&["--at", CLOSE, "tally", "--now"]);
    }
    let both = |rest: &[&str]| (ok(&[&remote[..], rest].concat()), ok(&[&embedded[..], rest].concat()));

    let (r, e) = both(&["--format", "json", "campaigns"]);
    assert_eq!(r, e);
    let (r, e) = both(&["--format", "json", "results", "cmp-0001"]);
    let strip = |s: &str| {
        let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
        v.as_object_mut().unwrap().remove("computed_at");
        v
    };
    assert_eq!(strip(&r), strip(&e));
    let (r, e) = both(&["--format", "json", "report", "consistency", "cmp-0001"]);
    assert_eq!(r, e);

    let (rd, ed) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&[&remote[..], &["export", "cmp-0001", "all", "-o", rd.path().to_str().unwrap()]].concat());
    ok(&[&embedded[..], &["export", "cmp-0001", "all", "-o", ed.path().to_str().unwrap()]].concat());
    let (rf, ef) = (read_dir(rd.path()), read_dir(ed.path()));
    assert!(!rf.is_empty());
    assert_eq!(rf, ef);

    let (r, e) = both(&["--format", "json", "state-hash"]);
    let hash = |s: &str| serde_json::from_str::<serde_json::Value>(s).unwrap()["state_hash"].clone();
    assert_eq!(hash(&r), hash(&e));
}
