#![allow(dead_code)]

use std::sync::Arc;

use avr_core::embedding::StubEmbedder;
use avr_core::kb::{Label, Modality, Prototype, PrototypeKb};
use avr_core::memory::MemoryStore;
use avr_core::pool::{ModelPool, ModelProfile};
use avr_core::routing::RoutingPolicy;
use avr_core::difficulty::DifficultyKb;
use avr_core::safety::SafetyKb;
use avr_gateway::config::MemoryConfig;
use avr_gateway::mock::MockBackend;
use avr_gateway::wire::{png_data_url, RoutingHeaders};
use avr_gateway::{Gateway, GatewayParts};
use image::{Rgb, RgbImage};
use serde_json::{json, Value};

pub const SMALL: &str = "small-vl";
pub const LARGE: &str = "large-vl";
pub const APP: &str = "editor";

pub const HARD_TEXTS: [&str; 2] = ["set a breakpoint in the editor gutter", "select the keyframe on the timeline track"];
pub const DANGEROUS_TEXTS: [&str; 2] = ["delete all files permanently", "confirm the payment transfer"];

pub const EASY: &str = "open preferences window";
pub const HARD: &str = HARD_TEXTS[0];
pub const DANGEROUS: &str = DANGEROUS_TEXTS[0];
pub const MEDIUM_CONFIDENT: &str = "select the keyframe in color panel";
pub const MEDIUM_ESCALATE: &str = "set a breakpoint in the output pane";
pub const MEDIUM_MALFORMED: &str = "select the keyframe near the export strip";
pub const MEDIUM_ERROR: &str = "set a breakpoint beside the status bar";
pub const MEDIUM_AFTER_FEEDBACK: &str = "set a breakpoint in the output console";

pub fn pool() -> ModelPool {
    ModelPool::new(vec![
        ModelProfile::new(SMALL, 1, 0.45, 0.045).with_endpoint("mock://small"),
        ModelProfile::new(LARGE, 2, 0.75, 0.30).with_endpoint("mock://large"),
    ])
    .unwrap()
}

pub fn screenshot() -> RgbImage {
    RgbImage::from_fn(320, 240, |x, y| Rgb([(x % 251) as u8, (y % 241) as u8, ((x * 7 + y * 3) % 256) as u8]))
}

fn text_proto(stub: &StubEmbedder, label: Label, text: &str) -> Prototype {
    Prototype {
        label,
        modality: Modality::Textual,
        note: text.into(),
        embedding: stub.embed_text_now(text).unwrap(),
    }
}

/// KBs built from the fixture texts, with visual prototypes taken from
/// rasters unrelated to the test screenshot.
pub fn kbs() -> (DifficultyKb, SafetyKb) {
    let stub = StubEmbedder::new();
    let hard_visual = RgbImage::from_fn(100, 100, |x, y| Rgb([((x * y) % 256) as u8, 17, 200]));
    let mut difficulty: Vec<Prototype> = HARD_TEXTS.iter().map(|t| text_proto(&stub, Label::Hard, t)).collect();
    difficulty.push(text_proto(&stub, Label::Easy, "click the large Submit button"));
    difficulty.push(Prototype {
        label: Label::Hard,
        modality: Modality::Visual,
        note: "synthetic".into(),
        embedding: stub.embed_raster(&hard_visual),
    });
    let mut safety: Vec<Prototype> = DANGEROUS_TEXTS.iter().map(|t| text_proto(&stub, Label::Dangerous, t)).collect();
    safety.push(text_proto(&stub, Label::Safe, "open the settings menu"));
    (
        DifficultyKb::new(PrototypeKb::new("difficulty", difficulty)).unwrap(),
        SafetyKb::new(PrototypeKb::new("safety", safety)).unwrap(),
    )
}

pub struct Fixture {
    pub gateway: Arc<Gateway>,
    pub embedder: Arc<StubEmbedder>,
    pub backend: Arc<MockBackend>,
}

pub fn fixture_with(backend: MockBackend, memory: MemoryStore) -> Fixture {
    let (difficulty, safety) = kbs();
    let embedder = Arc::new(StubEmbedder::new());
    let backend = Arc::new(backend);
    let gateway = Gateway::new(GatewayParts {
        pool: pool(),
        policy: RoutingPolicy::default(),
        confidence_floor: -3.0,
        tau_risk: 0.8,
        difficulty,
        safety,
        embedder: embedder.clone(),
        backend: backend.clone(),
        memory,
        memory_cfg: MemoryConfig::default(),
        max_probe_tokens: 128,
    });
    Fixture {
        gateway: Arc::new(gateway),
        embedder,
        backend,
    }
}

pub fn fixture() -> Fixture {
    fixture_with(MockBackend::new(), MemoryStore::in_memory())
}

pub fn request(description: &str) -> Value {
    json!({
        "model": "auto",
        "messages": [
            {"role": "system", "content": "You are a GUI agent."},
            {"role": "user", "content": [
                {"type": "image_url", "image_url": {"url": png_data_url(&screenshot())}},
                {"type": "text", "text": description}
            ]}
        ]
    })
}

pub fn headers() -> RoutingHeaders {
    RoutingHeaders {
        session: Some("s-1".into()),
        app: Some(APP.into()),
        target: Some("160,120".into()),
        action: Some("click".into()),
    }
}

pub mod golden {
    use super::*;
    use avr_core::costmodel::{savings_with_direct, CostParams};
    use avr_core::outcome::RouteReason;
    use avr_gateway::mock::MockReply;
    use avr_gateway::server;

    pub const CONFIDENT_LOGPROB: f64 = -0.12;
    pub const DOUBTFUL_LOGPROB: f64 = -0.6;

    /// The scripted session: (description, expected tier, expected reason).
    pub const SESSION: [(&str, u32, RouteReason); 11] = [
        (EASY, 1, RouteReason::EasyPreroute),
        (MEDIUM_CONFIDENT, 1, RouteReason::ConfidentProbe),
        (MEDIUM_ESCALATE, 2, RouteReason::LowConfidenceEscalation),
        (HARD, 2, RouteReason::HardPreroute),
        (DANGEROUS, 2, RouteReason::SafetyOverride),
        (MEDIUM_MALFORMED, 2, RouteReason::LowConfidenceEscalation),
        (MEDIUM_ERROR, 2, RouteReason::LowConfidenceEscalation),
        (EASY, 1, RouteReason::EasyPreroute),
        (MEDIUM_CONFIDENT, 1, RouteReason::ConfidentProbe),
        (HARD, 2, RouteReason::HardPreroute),
        (DANGEROUS, 2, RouteReason::SafetyOverride),
    ];

    /// Final call, made after negative feedback on the first escalation.
    pub const AFTER_FEEDBACK: (&str, u32, RouteReason) = (MEDIUM_AFTER_FEEDBACK, 1, RouteReason::ConfidentProbe);

    pub fn scripted_backend() -> MockBackend {
        let mock = MockBackend::new().with_usage(1000, 0);
        mock.script(SMALL, MEDIUM_CONFIDENT, MockReply::answer("{\"x\": 301, \"y\": 88}", vec![CONFIDENT_LOGPROB; 6]));
        mock.script(SMALL, MEDIUM_ESCALATE, MockReply::answer("{\"x\": 12, \"y\": 40}", vec![DOUBTFUL_LOGPROB; 6]));
        mock.script(SMALL, MEDIUM_MALFORMED, MockReply::NoLogprobs { content: "{\"x\": 1}".into() });
        mock.script(SMALL, MEDIUM_ERROR, MockReply::Error { status: 500 });
        mock.script(SMALL, MEDIUM_AFTER_FEEDBACK, MockReply::answer("{\"x\": 200, \"y\": 61}", vec![CONFIDENT_LOGPROB; 6]));
        mock
    }

    #[derive(Debug)]
    pub struct CallRecord {
        pub description: String,
        pub tier: u32,
        pub reason: RouteReason,
        pub outcome_id: String,
        pub image_embeds: usize,
        pub text_embeds: usize,
    }

    #[derive(Debug)]
    pub struct GoldenRun {
        pub calls: Vec<CallRecord>,
        pub metrics: Value,
        pub after_feedback_probe: Option<Value>,
        pub feedback_status: String,
        pub ledger_savings: f64,
        pub analytical_savings: f64,
    }

    async fn post(client: &reqwest::Client, base: &str, description: &str) -> Value {
        let h = headers();
        let resp = client
            .post(format!("{base}/v1/chat/completions"))
            .header("x-avr-session", h.session.unwrap())
            .header("x-avr-app", h.app.unwrap())
            .header("x-avr-target-xy", h.target.unwrap())
            .header("x-avr-action", h.action.unwrap())
            .json(&request(description))
            .send()
            .await
            .expect("gateway reachable");
        assert!(resp.status().is_success(), "{description}: status {}", resp.status());
        resp.json().await.expect("json body")
    }

    fn reason_of(v: &Value) -> RouteReason {
        serde_json::from_value(v["avr"]["reason"].clone()).expect("reason field")
    }

    /// Runs the whole session over loopback HTTP against scripted mocks.
    pub async fn run() -> GoldenRun {
        let fx = fixture_with(scripted_backend(), MemoryStore::in_memory());
        let (addr, server) = server::spawn(fx.gateway.clone(), 16).await.expect("bind loopback");
        let base = format!("http://{addr}");
        let client = reqwest::Client::new();

        let mut calls = Vec::new();
        let record = |description: &str, body: &Value| CallRecord {
            description: description.to_string(),
            tier: body["avr"]["tier"].as_u64().unwrap() as u32,
            reason: reason_of(body),
            outcome_id: body["avr"]["outcome_id"].as_str().unwrap().to_string(),
            image_embeds: fx.embedder.image_calls(),
            text_embeds: fx.embedder.text_calls(),
        };
        for (description, _, _) in SESSION {
            let body = post(&client, &base, description).await;
            calls.push(record(description, &body));
        }

        let escalated = calls[2].outcome_id.clone();
        let ack: Value = client
            .post(format!("{base}/v1/feedback"))
            .json(&json!({"outcome_id": escalated, "success": false, "corrected_coords": "410,96"}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();

        fx.backend.clear_received();
        let body = post(&client, &base, AFTER_FEEDBACK.0).await;
        calls.push(record(AFTER_FEEDBACK.0, &body));
        let after_feedback_probe = fx
            .backend
            .received()
            .into_iter()
            .find(|b| b["logprobs"] == json!(true));

        let metrics: Value = client.get(format!("{base}/metrics")).send().await.unwrap().json().await.unwrap();
        server.abort();

        // probes that never returned are not billed, so they count as direct
        let ledger = fx.gateway.ledger();
        let n = ledger.calls_total as f64;
        let unbilled = calls.iter().filter(|c| c.description == MEDIUM_ERROR).count() as f64;
        let probed = (ledger.probed_escalations as f64 - unbilled) / n;
        let direct = (ledger.escalations as f64 - ledger.probed_escalations as f64 + unbilled) / n;
        let p = pool();
        let c_s = p.smallest().charge(1000, 0).dollars();
        let c_l = p.largest().charge(1000, 0).dollars();
        let params = CostParams::new(c_s, c_l, c_s).unwrap();
        GoldenRun {
            calls,
            metrics,
            after_feedback_probe,
            feedback_status: ack["status"].as_str().unwrap_or_default().to_string(),
            ledger_savings: ledger.report().unwrap().savings_fraction.unwrap(),
            analytical_savings: savings_with_direct(probed, direct, &params).unwrap(),
        }
    }

    /// Every check the session must pass, as readable failures.
    pub fn verify(run: &GoldenRun) -> Result<(), String> {
        let expected: Vec<(u32, RouteReason)> = SESSION
            .iter()
            .chain([&AFTER_FEEDBACK])
            .map(|(_, t, r)| (*t, *r))
            .collect();
        let got: Vec<(u32, RouteReason)> = run.calls.iter().map(|c| (c.tier, c.reason)).collect();
        if got != expected {
            return Err(format!("tier/reason sequence {got:?}, expected {expected:?}"));
        }
        for (i, c) in run.calls.iter().enumerate() {
            if c.image_embeds != i + 1 || c.text_embeds != i + 1 {
                return Err(format!(
                    "call {} made {} image and {} text embeddings cumulatively",
                    i + 1,
                    c.image_embeds,
                    c.text_embeds
                ));
            }
        }
        if run.feedback_status != "recorded" {
            return Err(format!("feedback status {:?}", run.feedback_status));
        }
        let probe = run.after_feedback_probe.as_ref().ok_or("no probe after feedback")?;
        let memory = probe["messages"]
            .as_array()
            .and_then(|m| m.iter().find(|m| m["role"] == "system" && m["content"].as_str().is_some_and(|c| c.contains("<memory"))))
            .ok_or("probe after feedback carried no memory section")?;
        let memory = memory["content"].as_str().unwrap();
        if !(memory.contains("hit the wrong target") && memory.contains("(410, 96)")) {
            return Err(format!("unexpected memory section {memory:?}"));
        }
        let rel = ((run.ledger_savings - run.analytical_savings) / run.analytical_savings).abs();
        if rel > 1e-9 {
            return Err(format!(
                "ledger savings {} vs analytical {} (relative {rel:e})",
                run.ledger_savings, run.analytical_savings
            ));
        }
        if run.metrics["calls_total"] != json!(12) {
            return Err(format!("metrics report {} calls", run.metrics["calls_total"]));
        }
        Ok(())
    }
}
