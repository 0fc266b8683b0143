"""Smoke test for the vggfire_py extension module.

Build and run from the repository root:

    cargo build -p vggfire-python --release --features extension-module
    cp target/release/libvggfire_py.so python/vggfire_py.so
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import vggfire_py as vf


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        sys.exit(1)


def write_fixture(root, per_class=4, side=32):
    from PIL import Image

    for name, base in (("fire", (230, 90, 30)), ("no_fire", (30, 140, 220))):
        os.makedirs(os.path.join(root, name))
        for i in range(per_class):
            shade = tuple(min(255, c + 6 * i) for c in base)
            Image.new("RGB", (side, side), shade).save(os.path.join(root, name, f"{name}_{i}.png"))


def main():
    r = vf.report(2269, 73, 32, 1932)
    check(abs(r["accuracy"] - 0.975615) < 5e-7, "report accuracy")
    check(abs(r["f1"] - 0.977385) < 1e-5, "report f1")
    check(vf.epoch_line(1, 10, 0.3250, 85.17) == "Epoch 1/10, Loss: 0.3250, Accuracy: 85.17%", "epoch line")
    check(vf.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75, "roc auc")
    px = vf.normalize(1, 1, [0, 128, 255])
    check(px[0] == 0.0 and abs(px[1] - 128 / 255) < 1e-7 and px[2] == 1.0, "normalize")
    try:
        vf.roc_auc([0.2, 0.3], [1, 1])
        check(False, "single-class auc rejected")
    except ValueError:
        check(True, "single-class auc rejected")

    big = vf.Model()
    check(big.param_count == 134_268_738, "vgg16 parameter count")
    counts = dict(big.layer_counts())
    check((counts["conv"], counts["maxpool"], counts["linear"], counts["dropout"]) == (13, 5, 3, 2), "vgg16 layers")
    del big

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "data")
        write_fixture(data)
        out = os.path.join(tmp, "run")
        config = f"""
[data]
root = "{data}"
test_fraction = 0.0

[model]
architecture = "vgg-mini"
input_size = [32, 32]
width_multiplier = "1/8"

[train]
epochs = 3
batch_size = 4
lr = 0.001
seed = 1

[output]
dir = "{out}"
"""
        history = vf.train(config)
        check([h["epoch"] for h in history] == [1, 2, 3], "train history")
        m = vf.Model.load(os.path.join(out, "final.vggw"), "vgg-mini", "1/8", 32)
        label, prob = m.predict(os.path.join(data, "fire", "fire_0.png"))
        check(label in ("fire", "no_fire") and 0.0 <= prob <= 1.0, f"predict -> {label} {prob:.4f}")
        logits = m.logits([0.5] * (3 * 32 * 32), 1)
        check(len(logits) == 1 and len(logits[0]) == 2, "logits shape")
    print("smoke test passed")


if __name__ == "__main__":
    main()
