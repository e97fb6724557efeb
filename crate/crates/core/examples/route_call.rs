//! Routes a handful of synthetic tool calls through difficulty, safety and
//! a simulated probe using the bundled knowledge bases.

use std::path::Path;
use std::sync::Arc;

use avr_core::call::{ActionType, Point, ToolCall};
use avr_core::difficulty::{estimate, DifficultyKb};
use avr_core::embedding::{extract_crop, StubEmbedder};
use avr_core::kb::PrototypeKb;
use avr_core::routing::{route, RoutingPolicy};
use avr_core::safety::{assess_risk, SafetyKb, DEFAULT_TAU_RISK};
use image::{Rgb, RgbImage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kb_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("kb");
    let difficulty = DifficultyKb::new(PrototypeKb::load(&kb_dir.join("difficulty.json"))?)?;
    let safety = SafetyKb::new(PrototypeKb::load(&kb_dir.join("safety.json"))?)?;
    let policy = RoutingPolicy::default();
    let stub = StubEmbedder::new();
    let screen = Arc::new(RgbImage::from_fn(640, 400, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 128])));

    let calls = [
        ("type into the search box", 0.97),
        ("click the small gear icon in the dense toolbar", 0.90),
        ("select the keyframe in the clip list", 0.91),
        ("select the keyframe in the clip list", 0.70),
        ("delete all files permanently", 0.99),
    ];
    println!("{:<48} {:>6} {:>6} {:>6}  decision", "description", "d", "risk", "conf");
    for (description, probe_confidence) in calls {
        let call = ToolCall {
            screenshot: screen.clone(),
            history: vec![],
            action_type: ActionType::Click,
            coords: Point::new(320, 200),
            description: description.into(),
            app_id: "demo".into(),
            session_id: "s".into(),
        };
        let crop = stub.embed_image_now(&extract_crop(&call.screenshot, call.coords)?);
        let text = stub.embed_text_now(&call.description)?;
        let risk = assess_risk(&crop, &text, &safety, DEFAULT_TAU_RISK)?;
        let est = estimate(&crop, &text, &difficulty, &policy.cutoffs)?;
        let decision = route(&policy, &risk, &est, || Some(probe_confidence));
        println!(
            "{:<48} {:>6.3} {:>6.3} {:>6}  {:?} via {}",
            description,
            est.d,
            risk.risk,
            decision.confidence.map_or("-".into(), |c| format!("{c:.2}")),
            decision.target,
            decision.reason
        );
    }
    Ok(())
}
