#![allow(dead_code)]

pub mod gradcheck;
pub mod metrics_oracle;
pub mod oracles;

use std::path::Path;

use vggfire::data::RawImage;
use vggfire::train::RunConfig;
use vggfire::{Architecture, ModelConfig, WidthMultiplier};

/// Deterministic per-index colour in the warm (fire) or cool (no fire) range,
/// with a mild diagonal gradient so no two images are identical.
pub fn fixture_image(fire: bool, i: usize, w: usize, h: usize) -> RawImage {
    let t = (i * 37 % 16) as f64 / 15.0;
    let base: [f64; 3] = if fire {
        [200.0 + 50.0 * t, 60.0 + 80.0 * t, 20.0 + 30.0 * (1.0 - t)]
    } else {
        [20.0 + 30.0 * t, 90.0 + 80.0 * (1.0 - t), 180.0 + 60.0 * t]
    };
    let mut data = Vec::with_capacity(3 * w * h);
    for b in base {
        for y in 0..h {
            for x in 0..w {
                let ramp = ((x + y) as f64 / (w + h) as f64 - 0.5) * 20.0;
                data.push((b + ramp).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawImage::new(w, h, data).unwrap()
}

/// `per_class` PNGs in each of `root/fire` and `root/no_fire`.
pub fn write_binary_fixture(root: &Path, per_class: usize, w: usize, h: usize) {
    for (dir, fire) in [("fire", true), ("no_fire", false)] {
        let d = root.join(dir);
        std::fs::create_dir_all(&d).unwrap();
        for i in 0..per_class {
            let png = fixture_image(fire, i, w, h).to_png().unwrap();
            std::fs::write(d.join(format!("{dir}_{i:02}.png")), png).unwrap();
        }
    }
}

/// vgg-mini at width 1/8 on 32×32 inputs, trained on every sample.
pub fn mini_run_config(root: &Path, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig {
        model: ModelConfig::vgg_mini(WidthMultiplier::new(1, 8).unwrap(), (32, 32), 2),
        ..Default::default()
    };
    assert_eq!(cfg.model.architecture, Architecture::VggMini);
    cfg.data.root = Some(root.to_path_buf());
    cfg.data.test_fraction = 0.0;
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 32;
    cfg.train.lr = 1e-4 * 10.0;
    cfg.train.seed = 7;
    cfg
}
