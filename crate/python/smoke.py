"""Smoke test for the teleop_twin_py extension.

Build the module first, either with maturin:

    maturin develop -m crates/py/Cargo.toml

or by hand (Linux):

    cargo build --release -p teleop-twin-py --features extension-module
    cp target/release/libteleop_twin_py.so python/teleop_twin_py.so

then run ``python python/smoke.py``.
"""

import json
import math
import re

import teleop_twin_py as tt


def main():
    cfg = tt.default_config(seed=5)
    cfg = re.sub(r"(?m)^duration_ms = .*$", "duration_ms = 2000.0", cfg, count=1)
    summary = json.loads(tt.run(cfg))
    score = summary["score"]
    print(f"run: {summary['task']} / {summary['policy']}, combined RMSE {score['combined'] * 1e3:.3f} mm,"
          f" T_v {score['t_v_ms']:.1f} ms, T_r {score['t_r_ms']:.1f} ms")
    assert summary["seed"] == 5
    assert 0.0 < score["combined"] < 0.05

    period = 1000.0 / 120.0
    times = [i * period for i in range(480)]
    circle = [[0.05 * math.cos(t / 1000.0), 0.05 * math.sin(t / 1000.0), 0.0] for t in times]
    x = tt.predict(times, circle, 200.0)
    t_end = times[-1] + 200.0
    err = math.dist(x, [0.05 * math.cos(t_end / 1000.0), 0.05 * math.sin(t_end / 1000.0), 0.0])
    print(f"predict: 200 ms ahead on a circle, error {err * 1e3:.4f} mm")
    assert err < 1e-3

    visual, control = tt.latency_budgets(50.0, 10.0)
    print(f"budgets at N(50, 10): visual {visual:.1f} ms, control {control:.1f} ms")
    assert visual > 100.0 and control > visual

    try:
        tt.latency_budgets(-5.0, 0.0)
    except ValueError as e:
        print(f"rejected negative delay: {e}")
    else:
        raise AssertionError("negative delay accepted")

    print("ok")


if __name__ == "__main__":
    main()
