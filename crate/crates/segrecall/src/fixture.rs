//! Small class-imbalanced dataset for end-to-end checks.
//!
//! Eight 24x32 street-like scenes with classes `sky`, `road` and a rare
//! `sign` (a 4x4 patch, about 2% of pixels). The synthetic network is
//! confident on sky and road but underconfident on signs: at sign pixels it
//! gives `sign` 0.30-0.40 and `sky` the majority, so the Bayes rule never
//! predicts a sign while dividing by the (small) sign prior recovers it.
//! A few pixels in the bottom row are void.

use std::fs;
use std::path::Path;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use segrecall_core::LabelMap;

use crate::{pgm, sft};

pub const SEED: u64 = 0x5e6_4eca11;
pub const IMAGES: usize = 8;
pub const HEIGHT: usize = 24;
pub const WIDTH: usize = 32;
pub const CLASSES: [&str; 3] = ["sky", "road", "sign"];
const HORIZON: usize = 10;
const SIGN: usize = 4;
const VOID: u8 = 255;

fn json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("static JSON");
    s.push('\n');
    s.into_bytes()
}

fn scene(rng: &mut ChaCha8Rng) -> (LabelMap, Vec<f32>) {
    let (sy, sx) = (rng.random_range(5..10usize), rng.random_range(20..27usize));
    let mut labels = vec![0u8; HEIGHT * WIDTH];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let class = if (sy..sy + SIGN).contains(&y) && (sx..sx + SIGN).contains(&x) {
                2
            } else if y < HORIZON {
                0
            } else {
                1
            };
            labels[y * WIDTH + x] = class;
        }
    }
    for x in 0..4 {
        labels[(HEIGHT - 1) * WIDTH + x] = VOID;
    }

    let mut probs = Vec::with_capacity(HEIGHT * WIDTH * 3);
    for &y in &labels {
        let p: [f64; 3] = match y {
            2 => {
                let sign = rng.random_range(0.30..0.40);
                let road = rng.random_range(0.01..0.05);
                [1.0 - sign - road, road, sign]
            }
            VOID => {
                let a = rng.random_range(0.2..0.6);
                [a, 1.0 - a - 0.1, 0.1]
            }
            k => {
                let own = rng.random_range(0.70..0.95);
                let sign = rng.random_range(0.002..0.015);
                let mut p = [0.0; 3];
                p[k as usize] = own;
                p[1 - k as usize] = 1.0 - own - sign;
                p[2] = sign;
                p
            }
        };
        probs.extend(p.iter().map(|&v| v as f32));
    }
    (LabelMap::new(HEIGHT, WIDTH, labels).expect("fixture dims"), probs)
}

/// Every file of the fixture as `(relative path, contents)`, in a fixed order.
pub fn files() -> Vec<(String, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut out = vec![
        ("classes.json".to_string(), json_bytes(&json!({ "names": CLASSES, "ignore_id": VOID }))),
        (
            "groups.json".to_string(),
            json_bytes(&json!({ "groups": [
                { "name": "G1", "classes": ["sky"] },
                { "name": "G2", "classes": ["road"] },
                { "name": "G3", "classes": ["sign"] },
            ]})),
        ),
    ];
    let mut entries = Vec::new();
    for i in 0..IMAGES {
        let (labels, probs) = scene(&mut rng);
        let (p, l) = (format!("probs/scene{i}.sft"), format!("labels/scene{i}.pgm"));
        let mut pb = Vec::new();
        sft::write_tensor(&mut pb, &sft::Tensor::f32(&[HEIGHT, WIDTH, 3], probs).expect("fixture dims"))
            .expect("in-memory write");
        let mut lb = Vec::new();
        pgm::write_pgm(&mut lb, &labels).expect("in-memory write");
        out.push((p.clone(), pb));
        out.push((l.clone(), lb));
        entries.push(json!({ "probs": p, "labels": l }));
    }
    out.push(("manifest.json".to_string(), json_bytes(&json!({ "classes": "classes.json", "entries": entries }))));
    out
}

pub fn write(dir: &Path) -> Result<()> {
    for (rel, bytes) in files() {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes)?;
    }
    Ok(())
}
