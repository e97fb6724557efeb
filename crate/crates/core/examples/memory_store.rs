//! Grows an application memory from feedback and shows how the probe
//! prompt changes as it does.

use std::sync::Arc;

use avr_core::call::{ActionType, Point, ToolCall};
use avr_core::embedding::StubEmbedder;
use avr_core::memory::{inject, record_outcome, CallContext, Feedback, MemoryStore};
use avr_core::money::Money;
use avr_core::outcome::{RouteReason, RoutingOutcome};
use image::RgbImage;

fn call(description: &str, coords: Point) -> ToolCall {
    ToolCall {
        screenshot: Arc::new(RgbImage::new(800, 600)),
        history: vec![],
        action_type: ActionType::Click,
        coords,
        description: description.into(),
        app_id: "gimp".into(),
        session_id: "demo".into(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("avr-memory-demo-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let store = MemoryStore::open(dir.join("memory.jsonl"))?;
    let stub = StubEmbedder::new();

    let history = [
        ("open the Filters menu", Point::new(212, 14), true, None),
        ("pick the Gaussian blur filter", Point::new(260, 120), false, Some(Point::new(260, 162))),
        ("toggle the layer visibility eye icon", Point::new(618, 402), true, None),
    ];
    for (i, (description, coords, success, corrected)) in history.into_iter().enumerate() {
        let c = call(description, coords);
        let outcome = RoutingOutcome {
            call_ref: format!("call-{i}"),
            difficulty: 0.5,
            confidence: Some(0.8),
            risk: 0.0,
            threshold_used: 0.86,
            tier_chosen: 2,
            model_id: "large".into(),
            reason: RouteReason::LowConfidenceEscalation,
            probe_charged: true,
            guardrail_verification: false,
            cost: Money::ZERO,
            response: String::new(),
        };
        let ctx = CallContext::from_call(&c, stub.embed_text_now(description)?);
        let feedback = Feedback {
            success: Some(success),
            corrected_coords: corrected,
        };
        record_outcome(&store, &outcome, &ctx, &feedback, i as u64)?;
    }

    let next = call("apply the Gaussian blur filter", Point::new(260, 162));
    let memories = store.retrieve("gimp", &stub.embed_text_now(&next.description)?, 2);
    let prompt = inject(&next, &memories, 512);
    println!("{} memories on disk, {} injected\n", store.len(), prompt.injected.len());
    println!("{}", prompt.text);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
