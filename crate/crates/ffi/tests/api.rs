use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use onuw_core::game::{GameConfig, GameState, PlayerId};
use onuw_core::tom::checkpoint::save_checkpoint;
use onuw_core::tom::{ModelConfig, ModelParams};
use onuw_ffi::*;

fn last_error() -> String {
    let p = onuw_last_error();
    assert!(!p.is_null(), "no error recorded");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn new_game(seed: u64) -> *mut OnuwGame {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { onuw_game_new(seed, &mut g) }, OnuwStatus::Ok);
    g
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { onuw_string_free(p) };
    s
}

#[test]
fn game_runs_through_the_c_surface() {
    let g = new_game(5);
    unsafe {
        let mut phase = OnuwPhase::Finished;
        assert_eq!(onuw_game_phase(g, &mut phase), OnuwStatus::Ok);
        assert_eq!(phase, OnuwPhase::Night);
        let mut speaker = 0usize;
        assert_eq!(onuw_game_current_speaker(g, &mut speaker), OnuwStatus::GameRule);
        assert_eq!(onuw_game_resolve_random_night(g), OnuwStatus::Ok);
        assert!(onuw_last_error().is_null());

        let text = CString::new("I am the Seer. I think Player 3 is the Werewolf.").unwrap();
        let mut spoken = 0;
        loop {
            onuw_game_phase(g, &mut phase);
            if phase != OnuwPhase::Discussion {
                break;
            }
            assert_eq!(onuw_game_current_speaker(g, &mut speaker), OnuwStatus::Ok);
            assert_eq!(speaker, spoken % 5);
            assert_eq!(onuw_game_say(g, speaker, text.as_ptr(), 2, 6), OnuwStatus::Ok);
            spoken += 1;
        }
        assert_eq!(spoken, 15);
        assert_eq!(phase, OnuwPhase::Voting);

        let mut team = OnuwTeam::Village;
        assert_eq!(onuw_game_winner(g, &mut team), OnuwStatus::GameRule);
        assert_eq!(onuw_game_vote(g, 1, 1), OnuwStatus::GameRule);
        assert!(last_error().contains("vote"));
        for v in 0..5 {
            assert_eq!(onuw_game_vote(g, v, if v == 3 { 0 } else { 3 }), OnuwStatus::Ok);
        }
        assert_eq!(onuw_game_winner(g, &mut team), OnuwStatus::Ok);

        let mut log = ptr::null_mut();
        assert_eq!(onuw_game_log_json(g, &mut log), OnuwStatus::Ok);
        let log: serde_json::Value = serde_json::from_str(&take_string(log)).unwrap();
        assert_eq!(log["statements"].as_array().unwrap().len(), 15);
        assert_eq!(log["statements"][0]["triplets"].as_array().unwrap().len(), 2);

        // the same game through the Rust API agrees
        let mut direct = GameState::new(GameConfig::with_seed(5)).unwrap();
        onuw_core::driver::resolve_random_night(&mut direct).unwrap();
        assert_eq!(log["final_cards"], serde_json::to_value(&direct.current_cards).unwrap());
        let village = direct.current_cards[3].team() == onuw_core::game::Team::Werewolf;
        assert_eq!(team == OnuwTeam::Village, village);
        onuw_game_free(g);
    }
}

#[test]
fn bad_arguments_report_errors() {
    unsafe {
        let mut n = 0usize;
        assert_eq!(onuw_game_num_players(ptr::null(), &mut n), OnuwStatus::NullPointer);
        assert!(last_error().contains("game"));
        assert_eq!(onuw_game_new(1, ptr::null_mut()), OnuwStatus::NullPointer);

        let g = new_game(1);
        assert_eq!(onuw_game_num_players(g, &mut n), OnuwStatus::Ok);
        assert_eq!(n, 5);
        onuw_game_resolve_random_night(g);
        let text = CString::new("Hi.").unwrap();
        assert_eq!(onuw_game_say(g, 0, text.as_ptr(), 8, 0), OnuwStatus::InvalidArgument);
        assert!(last_error().contains("emotion"));
        assert_eq!(onuw_game_say(g, 9, text.as_ptr(), 0, 0), OnuwStatus::InvalidArgument);
        assert_eq!(onuw_game_say(g, 1, text.as_ptr(), 0, 0), OnuwStatus::GameRule);
        assert_eq!(onuw_game_say(g, 0, ptr::null(), 0, 0), OnuwStatus::NullPointer);
        let bad = [0xffu8, 0];
        assert_eq!(onuw_game_say(g, 0, bad.as_ptr().cast(), 0, 0), OnuwStatus::InvalidArgument);
        // a success clears the message
        assert_eq!(onuw_game_say(g, 0, text.as_ptr(), 0, 0), OnuwStatus::Ok);
        assert!(onuw_last_error().is_null());

        let missing = CString::new("/nonexistent/checkpoint").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(onuw_model_load(missing.as_ptr(), &mut m), OnuwStatus::Io);
        assert!(m.is_null());
        assert_eq!(onuw_model_init(10, 1, 3, 0, &mut m), OnuwStatus::Model);

        let kind = CString::new("wizard").unwrap();
        let ok = CString::new("scripted").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(onuw_simulate_json(3, 0, kind.as_ptr(), ok.as_ptr(), &mut out), OnuwStatus::InvalidArgument);
        assert_eq!(onuw_simulate_json(0, 0, ok.as_ptr(), ok.as_ptr(), &mut out), OnuwStatus::InvalidArgument);
        onuw_game_free(g);
        onuw_game_free(ptr::null_mut());
        onuw_model_free(ptr::null_mut());
        onuw_string_free(ptr::null_mut());
    }
}

#[test]
fn model_belief_and_planning() {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams::init(ModelConfig { hidden: 16, heads: 2, layers: 1, ..ModelConfig::default() }, 4, 0.1).unwrap();
    save_checkpoint(&params, dir.path()).unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(onuw_model_load(path.as_ptr(), &mut m), OnuwStatus::Ok);
        let mut n = 0;
        onuw_model_num_players(m, &mut n);
        assert_eq!(n, 5);

        let g = new_game(2);
        let mut belief = [0.0f64; 25];
        assert_eq!(onuw_model_belief(m, g, belief.as_mut_ptr(), 25), OnuwStatus::Ok);
        assert!(belief.iter().all(|&b| (b - 0.2).abs() < 1e-12));
        assert_eq!(onuw_model_belief(m, g, belief.as_mut_ptr(), 24), OnuwStatus::InvalidArgument);

        onuw_game_resolve_random_night(g);
        let text = CString::new("I suspect Player 2.").unwrap();
        onuw_game_say(g, 0, text.as_ptr(), 3, 3);
        assert_eq!(onuw_model_belief(m, g, belief.as_mut_ptr(), 25), OnuwStatus::Ok);
        let log_tokens = onuw_core::tom::statement_tokens(
            &[onuw_core::action::ActionTriplet::new(PlayerId(0), onuw_core::action::Predicate::Suspect, PlayerId(2))],
            onuw_core::action::EmotionLabel::Angry,
            onuw_core::action::EmotionLabel::Angry,
        );
        let expected = params.forward(&log_tokens).unwrap().pop().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((belief[i * 5 + j] - expected.get(i, j)).abs() < 1e-12);
            }
        }

        let mut plan = ptr::null_mut();
        assert_eq!(onuw_plan_json(m, g, 1, 50, 9, &mut plan), OnuwStatus::Ok);
        let plan: serde_json::Value = serde_json::from_str(&take_string(plan)).unwrap();
        assert!(plan["text"].is_string());
        assert!(plan["reward"].as_f64().unwrap() <= 0.0);
        assert_eq!(onuw_plan_json(m, g, 1, 0, 9, &mut ptr::null_mut()), OnuwStatus::Planner);

        onuw_model_free(m);
        onuw_game_free(g);
    }
}

#[test]
fn simulate_returns_a_report() {
    let kind = CString::new("scripted").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { onuw_simulate_json(4, 11, kind.as_ptr(), kind.as_ptr(), &mut out) }, OnuwStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 4);
    let v = unsafe { CStr::from_ptr(onuw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn static_lib() -> PathBuf {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    [deps.join("libonuw_ffi.a"), deps.parent().unwrap().join("libonuw_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .expect("static library was not built")
}

#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(crate_dir.join("include/onuw.h")).unwrap();
    for name in ["onuw_game_new", "onuw_model_belief", "onuw_plan_json", "ONUW_STATUS_PANIC", "typedef struct OnuwGame OnuwGame"] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(static_lib())
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is required");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("log=1"));
}
