//! Build the preset assemblies, show their chains and motor counts, and
//! optionally write them as description files.
//!
//! cargo run --example describe_robot -- [out_dir]

use std::path::PathBuf;

use motion_stack::model::{motor_count, parse_description, presets};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    for desc in [presets::minimal(), presets::vehicle(), presets::dragon(), presets::tricycle()] {
        println!("{} ({} motors)", desc.name, motor_count(&desc));
        for chain in &desc.chains {
            println!(
                "  {}: {} -> {}, {} joints, reach {:.2} m",
                chain.module,
                chain.root_frame,
                chain.tip_frame,
                chain.len(),
                chain.reach()
            );
        }
        let text = desc.to_json();
        assert_eq!(parse_description(&text)?, desc);
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{}.json", desc.name)), text + "\n")?;
        }
    }
    let broken = r#"{"name": "bad", "modules": [{"id": "limb1", "kind": "Limb"}], "attachments": []}"#;
    println!("invalid description: {}", parse_description(broken).unwrap_err());
    Ok(())
}
