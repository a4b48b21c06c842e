use std::process::Command;

fn dualmpc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualmpc"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let ok = dualmpc().args(["run", "--policy", "orc", "--steps", "3", "--out", out]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("episode_oracle_2026.csv").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"mpc": {"horizon": 0}}"#).unwrap();
    let res = dualmpc().args(["run", "--config", bad.to_str().unwrap(), "--out", out]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("mpc"));

    let res = dualmpc().args(["run", "--alpha", "-1", "--out", out]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));

    let res = dualmpc().args(["post-learn", "--ce-belief", "nowhere.json", "--dual-belief", "nowhere.json"]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
}
