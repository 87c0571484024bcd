use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedpop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedpop")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn setup(dir: &Path, n: u32, ndrop: u32, seed: u64, round: u64) {
    let out = fedpop(&[
        "setup",
        "--n",
        &n.to_string(),
        "--ndrop",
        &ndrop.to_string(),
        "--dim",
        "4",
        "--seed",
        &seed.to_string(),
        "--round",
        &round.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn generate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["generate", "--store", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    fedpop(&args)
}

fn prove(bundle: &Path, token: &Path) -> Output {
    fedpop(&["prove", "--bundle", bundle.to_str().unwrap(), "--token", token.to_str().unwrap()])
}

#[test]
fn setup_writes_one_file_per_party_and_records_t() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("s");
    setup(&store, 10, 1, 3, 1);
    let clients = (1..=10).filter(|i| store.join(format!("client-{i}.json")).exists()).count();
    assert_eq!(clients, 10);
    assert!(store.join("server.json").exists());
    let config: serde_json::Value = serde_json::from_str(&fs::read_to_string(store.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["t"], 9);
}

#[test]
fn setup_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    setup(&a, 4, 1, 7, 1);
    setup(&b, 4, 1, 7, 1);
    for name in ["server.json", "client-1.json", "client-4.json", "config.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn setup_rejects_ndrop_equal_to_n() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fedpop(&["setup", "--n", "4", "--ndrop", "4", "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn round_then_prove_accepts_and_reports_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("s");
    setup(&store, 10, 1, 1, 1);
    let out = generate(&store, &["--dropout-rate", "0.1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let round = store.join("round-1");
    let bundles = fs::read_dir(round.join("bundles")).unwrap().count();
    assert_eq!(bundles, 9);
    assert!(round.join("transcript.jsonl").exists());

    let bundle = fs::read_dir(round.join("bundles")).unwrap().next().unwrap().unwrap().path();
    let out = prove(&bundle, &round.join("token.json"));
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("decision: accept"));
    assert!(stdout.contains("bytes sp->client:") && stdout.contains("bytes client->sp:"));
}

#[test]
fn store_is_single_use() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("s");
    setup(&store, 4, 1, 1, 1);
    assert_eq!(code(&generate(&store, &[])), 0);
    assert_eq!(code(&generate(&store, &[])), 2);
    assert_eq!(code(&generate(&tmp.path().join("missing"), &[])), 2);
}

#[test]
fn round_flag_must_match_the_store() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("s");
    setup(&store, 4, 1, 1, 3);
    assert_eq!(code(&generate(&store, &["--round", "4"])), 2);
    assert_eq!(code(&generate(&store, &["--round", "3"])), 0);
    assert!(store.join("round-3/token.json").exists());
}

#[test]
fn heavy_dropout_exits_with_round_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("s");
    setup(&store, 10, 1, 1, 1);
    let out = generate(&store, &["--dropout-rate", "0.7"]);
    assert_eq!(code(&out), 3);
    assert!(store.join("round-1/transcript.jsonl").exists());
    assert!(!store.join("round-1/token.json").exists());
}

#[test]
fn token_from_another_round_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (s1, s2) = (tmp.path().join("s1"), tmp.path().join("s2"));
    setup(&s1, 4, 1, 1, 1);
    setup(&s2, 4, 1, 2, 2);
    assert_eq!(code(&generate(&s1, &[])), 0);
    assert_eq!(code(&generate(&s2, &[])), 0);
    let out = prove(&s1.join("round-1/bundles/client-1.json"), &s2.join("round-2/token.json"));
    assert_eq!(code(&out), 10);
    assert!(String::from_utf8(out.stdout).unwrap().contains("decision: reject"));
}

#[test]
fn alt_witness_round_proves() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("s");
    setup(&store, 5, 1, 4, 1);
    assert_eq!(code(&generate(&store, &["--alt-witness", "--trainer", "linear"])), 0);
    let round = store.join("round-1");
    assert_eq!(code(&prove(&round.join("bundles/client-2.json"), &round.join("token.json"))), 0);
}

#[test]
fn truncated_bundle_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("s");
    setup(&store, 4, 1, 1, 1);
    assert_eq!(code(&generate(&store, &[])), 0);
    let round = store.join("round-1");
    let text = fs::read_to_string(round.join("bundles/client-1.json")).unwrap();
    let cut = tmp.path().join("cut.json");
    fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert_eq!(code(&prove(&cut, &round.join("token.json"))), 2);
}

#[test]
fn bench_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid.json");
    fs::write(&grid, r#"{"n":[4],"dropout":[0.25],"dimension":4,"reps":1,"seed":1}"#).unwrap();
    let csv = tmp.path().join("out.csv");
    let out = fedpop(&["bench", "--grid-file", grid.to_str().unwrap(), "--reps", "2", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "n,ndrop,t,sa_train_s,ts_sign_s,sa_agg_s,ts_agg_s,prove_client_s,prove_sp_s,bytes_sp_to_client,bytes_client_to_sp"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("4,1,3,"));
}
