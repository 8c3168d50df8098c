//! Start the websocket server on a free port, connect as a console, hold a
//! joint key for half a second and print what comes back.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use motion_stack::ops::{live, Scenario};
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/minimal_teleop.json");
    let scenario = Scenario::load(&path)?;
    let handle = live::spawn(&scenario, SocketAddr::from(([127, 0, 0, 1], 0))).await?;
    let url = format!("ws://{}/ws?operator=operator-A", handle.addr);
    println!("connecting to {url}");
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await?;

    let press = r#"{"type":"input","op":"down","target":"limb1/j1","speed":0.4}"#;
    ws.send(Message::Text(press.into())).await?;
    let deadline = tokio::time::Instant::now() + Duration::from_millis(500);
    let mut last_joint = None;
    while let Ok(Some(msg)) = tokio::time::timeout_at(deadline, ws.next()).await {
        let text = msg?.into_text()?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value["type"].as_str() {
            Some("hello") => println!("hello: {text}"),
            Some("joint") if value["name"] == "limb1/j1" => last_joint = Some(text.to_string()),
            _ => {}
        }
    }
    let release = r#"{"type":"input","op":"up","target":"limb1/j1"}"#;
    ws.send(Message::Text(release.into())).await?;
    println!("last limb1/j1 state: {}", last_joint.unwrap_or_default());
    ws.close(None).await?;
    handle.abort();
    Ok(())
}
