//! End-to-end demo on loopback: a mock model server, the gateway in front
//! of it, and a short agent session with one piece of feedback.

use std::sync::Arc;
use std::time::Duration;

use avr_core::embedding::StubEmbedder;
use avr_core::pool::{ModelPool, ModelProfile};
use avr_gateway::backend::HttpBackend;
use avr_gateway::config::GatewayConfig;
use avr_gateway::mock::{serve_mock, MockBackend, MockReply};
use avr_gateway::wire::png_data_url;
use avr_gateway::{server, Gateway};
use image::{Rgb, RgbImage};
use serde_json::{json, Value};

const SMALL: &str = "qwen2.5-vl-7b";
const LARGE: &str = "qwen2.5-vl-72b";

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let mock = Arc::new(MockBackend::new().with_usage(1200, 40));
    mock.script(SMALL, "select the keyframe in the clip list", MockReply::answer("{\"x\": 412, \"y\": 300}", vec![-0.7; 5]));
    let (mock_addr, _mock) = serve_mock(mock.clone()).await?;
    let endpoint = format!("http://{mock_addr}");

    let kb = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/kb");
    let pool = ModelPool::new(vec![
        ModelProfile::new(SMALL, 1, 0.45, 0.045).with_endpoint(&endpoint),
        ModelProfile::new(LARGE, 2, 0.75, 0.30).with_endpoint(&endpoint),
    ])?;
    let cfg = GatewayConfig::new(pool, kb.join("difficulty.json"), kb.join("safety.json"));
    let backend = Arc::new(HttpBackend::new(Duration::from_secs(5))?);
    let gateway = Arc::new(Gateway::from_config(&cfg, Arc::new(StubEmbedder::new()), backend)?);
    let (addr, _gw) = server::spawn(gateway, 8).await?;
    let base = format!("http://{addr}");
    let client = reqwest::Client::new();

    let screen = png_data_url(&RgbImage::from_fn(640, 400, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 90])));
    let steps = [
        "type into the search box",
        "select the keyframe in the clip list",
        "click the small gear icon in the dense toolbar",
        "delete all files permanently",
    ];
    let mut first_escalation = None;
    for description in steps {
        let body = json!({
            "model": "auto",
            "messages": [{"role": "user", "content": [
                {"type": "image_url", "image_url": {"url": screen}},
                {"type": "text", "text": description}
            ]}]
        });
        let resp: Value = client
            .post(format!("{base}/v1/chat/completions"))
            .header("x-avr-session", "demo")
            .header("x-avr-app", "video-editor")
            .header("x-avr-target-xy", "320,200")
            .json(&body)
            .send()
            .await?
            .json()
            .await?;
        let avr = &resp["avr"];
        println!("{description:<48} -> {} ({})", avr["model"], avr["reason"]);
        if avr["reason"] == "low_confidence_escalation" && first_escalation.is_none() {
            first_escalation = avr["outcome_id"].as_str().map(str::to_owned);
        }
    }

    if let Some(id) = first_escalation {
        let ack: Value = client
            .post(format!("{base}/v1/feedback"))
            .json(&json!({"outcome_id": id, "success": true}))
            .send()
            .await?
            .json()
            .await?;
        println!("\nfeedback: {ack}");
    }
    let metrics: Value = client.get(format!("{base}/metrics")).send().await?.json().await?;
    println!("metrics: {}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}
