use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use paint_core::harness::Profile;
use paint_core::sim::PatientId;
use paintctl::commands::{self, Ctx};
use paintctl::service::{self, ServiceConfig};
use paintctl::store::Store;
use serde_json::{json, Value};
use tower::ServiceExt;

fn setup(root: &std::path::Path) -> Ctx {
    let ctx = Ctx::new(Store::new(root), Profile::smoke());
    commands::gen_data(&ctx, PatientId::Adult, 2, 2, 5, false, "adult").unwrap();
    commands::train_priori(&ctx, "adult", 1, "adult").unwrap();
    ctx
}

fn config() -> ServiceConfig {
    ServiceConfig {
        dataset: "adult".into(),
        bundle: "adult".into(),
        session: "session".into(),
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

async fn wait_for(app: &Router, id: u64) -> Value {
    for _ in 0..600 {
        let (s, job) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        match job["status"].as_str().unwrap() {
            "done" | "failed" => return job,
            _ => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn episodes_and_downsampling() {
    let tmp = tempfile::tempdir().unwrap();
    let ctx = setup(tmp.path());
    let (app, _) = service::build(ctx, config()).unwrap();

    let (s, list) = call(&app, "GET", "/episodes", None).await;
    assert_eq!(s, StatusCode::OK);
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 2);
    let n = list[0]["samples"].as_u64().unwrap() as usize;
    assert_eq!(n, 960);

    let (_, full) = call(&app, "GET", "/episodes/0", None).await;
    assert_eq!(full["glucose"].as_array().unwrap().len(), n);
    let (_, every) = call(&app, "GET", "/episodes/0?every=10", None).await;
    assert_eq!(every["glucose"].as_array().unwrap().len(), n.div_ceil(10));
    let (_, pts) = call(&app, "GET", "/episodes/1?points=100", None).await;
    assert!(pts["t"].as_array().unwrap().len() <= 100);

    // summing keeps every carb gram visible
    let total = |v: &Value| v["carbs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum::<f64>();
    assert!((total(&full) - total(&every)).abs() < 1e-9);

    let (s, _) = call(&app, "GET", "/episodes/99", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/episodes/0?every=0", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn labels_validate_and_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ctx = setup(tmp.path());
    let store = ctx.store.clone();
    let (app, _) = service::build(ctx, config()).unwrap();

    let (s, e) = call(&app, "POST", "/labels", Some(json!({ "labels": [{ "episode_id": 0, "t": 3, "reward": 1.5 }] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "label_out_of_range");

    let (s, _) = call(&app, "POST", "/labels", Some(json!({ "labels": [{ "episode_id": 7, "t": 3, "reward": 0.5 }] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    // a 2-hour piecewise-linear sketch from -1 up to 1
    let sketch: Vec<Value> = (0..40)
        .map(|i| json!({ "episode_id": 1, "t": 100 + i, "reward": -1.0 + 2.0 * i as f64 / 39.0 }))
        .collect();
    let (s, r) = call(&app, "POST", "/labels", Some(json!({ "labels": sketch }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["added"], 40);

    let (s, got) = call(&app, "GET", "/labels?episode_id=1", None).await;
    assert_eq!(s, StatusCode::OK);
    let got = got["labels"].as_array().unwrap();
    assert_eq!(got.len(), 40);
    for (a, b) in got.iter().zip(&sketch) {
        assert_eq!(a["t"], b["t"]);
        assert!((a["reward"].as_f64().unwrap() - b["reward"].as_f64().unwrap()).abs() < 1e-6);
    }

    // identical resubmission is a no-op, a different value conflicts
    let (s, r) = call(&app, "POST", "/labels", Some(json!({ "labels": [sketch[0].clone()] }))).await;
    assert_eq!((s, r["added"].as_u64()), (StatusCode::OK, Some(0)));
    let (s, e) = call(&app, "POST", "/labels", Some(json!({ "labels": [{ "episode_id": 1, "t": 100, "reward": 0.0 }] }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"], "conflicting_label");

    // a rejected batch leaves nothing behind
    let (s, _) = call(
        &app,
        "POST",
        "/labels",
        Some(json!({ "labels": [{ "episode_id": 0, "t": 1, "reward": 0.2 }, { "episode_id": 0, "t": 2, "reward": -3.0 }] })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, all) = call(&app, "GET", "/labels", None).await;
    assert_eq!(all["count"], 40);
    assert_eq!(store.load_labels("session").unwrap().len(), 40);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn jobs_match_the_cli_path() {
    let tmp = tempfile::tempdir().unwrap();
    let ctx = setup(tmp.path());
    let store = ctx.store.clone();
    let (app, _) = service::build(ctx.clone(), config()).unwrap();

    let (s, _) = call(&app, "POST", "/jobs/tune", Some(json!({ "lambda": -1.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/jobs/42", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let labels: Vec<Value> = (0..300)
        .map(|t| json!({ "episode_id": 0, "t": t, "reward": ((t as f64) / 50.0).sin() }))
        .collect();
    call(&app, "POST", "/labels", Some(json!({ "labels": labels }))).await;

    // tune before any reward model exists fails cleanly
    let (s, j) = call(&app, "POST", "/jobs/tune", Some(json!({ "lambda": 2.5 }))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let early = wait_for(&app, j["id"].as_u64().unwrap()).await;
    assert_eq!(early["status"], "failed");
    assert_eq!(early["error"]["error"], "missing_artifact");

    let (_, j) = call(&app, "POST", "/jobs/train-reward", Some(json!({ "seed": 4 }))).await;
    let (_, j2) = call(&app, "POST", "/jobs/tune", Some(json!({ "lambda": 2.5, "seed": 6 }))).await;
    let trained = wait_for(&app, j["id"].as_u64().unwrap()).await;
    assert_eq!(trained["status"], "done", "{trained}");
    let tuned = wait_for(&app, j2["id"].as_u64().unwrap()).await;
    assert_eq!(tuned["status"], "done", "{tuned}");

    // same inputs through the CLI functions give byte-identical artifacts
    let set = store.load_labels("session").unwrap();
    commands::train_reward(&ctx, "adult", &set, 4, "cli").unwrap();
    let read = |p: std::path::PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(store.reward_path("cli")), read(store.reward_path("session")));
    commands::tune(&ctx, "adult", "adult", "cli", Some("sketch".into()), 2.5, 6, "cli-tuned").unwrap();
    let name = tuned["result"]["name"].as_str().unwrap().to_string();
    assert_eq!(
        read(store.bundle_dir("cli-tuned").join("tuned.ckpt")),
        read(store.bundle_dir(&name).join("tuned.ckpt"))
    );

    let (s, report) = call(&app, "GET", &format!("/reports/{name}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(report, tuned["result"]["report"]);
    assert_eq!(report["lambda"], 2.5);
    for k in ["magni_total", "tir_pct", "tbr_pct", "cov_pct"] {
        let d = report["delta"][k].as_f64().unwrap();
        let direct = report["tuned"][k].as_f64().unwrap() - report["priori"][k].as_f64().unwrap();
        assert!((d - direct).abs() < 1e-9);
    }
    let cli_report = commands::report(
        &ctx,
        "cli-tuned",
        &store.load_bundle("cli-tuned").unwrap(),
        &paint_core::harness::EvalConfig::new(ctx.profile.eval_days, ctx.profile.eval_repeats, 0),
    )
    .unwrap();
    assert_eq!(serde_json::to_value(cli_report.tuned).unwrap(), report["tuned"]);

    let (s, _) = call(&app, "GET", "/reports/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
