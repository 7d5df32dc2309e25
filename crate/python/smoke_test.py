#!/usr/bin/env python3
"""Smoke test for the clca_py extension module.

Expects the extension to be built already:

    cargo build -p clca-py --release
    python3 python/smoke_test.py

The script stages target/<profile>/libclca_py.so as clca_py.so next to the
build artifacts and imports it from there, so no install step is needed.
"""

import math
import pathlib
import shutil
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]


def stage_module():
    candidates = [
        ROOT / "target" / "release" / "libclca_py.so",
        ROOT / "target" / "debug" / "libclca_py.so",
    ]
    src = next((p for p in candidates if p.exists()), None)
    if src is None:
        sys.exit("libclca_py.so not found; run `cargo build -p clca-py --release` first")
    dest = src.parent / "clca_py.so"
    if not dest.exists() or dest.stat().st_mtime < src.stat().st_mtime:
        shutil.copy2(src, dest)
    sys.path.insert(0, str(dest.parent))


stage_module()
import clca_py  # noqa: E402


def expect_value_error(fn, label):
    try:
        fn()
    except ValueError:
        return
    raise AssertionError(f"{label}: expected ValueError")


def main():
    assert clca_py.CSV_HEADER.startswith("V,seed,algo"), clca_py.CSV_HEADER

    model = clca_py.Model.default()
    assert model.n_nodes == 13 and model.n_links == 32 and model.n_sessions == 8, repr(model)
    assert model.warnings == [], model.warnings
    assert len(model.node_ids) == 13 and model.node_ids[0] == "A"

    from_file = clca_py.Model.from_file(str(ROOT / "configs" / "default.json"))
    assert from_file.n_nodes == model.n_nodes

    # Queue bounds are affine in V: z_max = V*w1*beta + R_max and
    # qtilde_max = V*w1*beta + epsilon, exactly representable here.
    b = model.bounds(v=750.0)
    assert b.z_max == 378.0, b.z_max
    assert b.qtilde_max == 381.0, b.qtilde_max
    assert b.q_max > b.z_max and b.w_max > 0.0 and b.delay_slots == math.ceil(b.w_max)
    assert len(b.theta_e) == model.n_nodes and min(b.theta_e) > 0.0
    b2 = model.bounds(v=1500.0)
    assert b2.z_max - b.z_max == 375.0, (b.z_max, b2.z_max)

    report = model.simulate(v=750.0, seed=1, slots=3000)
    assert report.algo == "clca" and report.slots == 3000
    assert report.violations == 0, report.violation_counts
    assert report.max_delay_ratio <= 1.0, report.max_delay_ratio
    assert report.delivered > 0.0 and report.avg_q > 0.0
    assert all(n >= 0 for n in report.violation_counts.values())

    again = model.simulate(v=750.0, seed=1, slots=3000)
    assert again.phi_bar == report.phi_bar and again.csv_row() == report.csv_row()

    serial = model.sweep([150.0, 750.0], [1, 2], algos=["clca", "neely"], slots=1500)
    threaded = model.sweep([150.0, 750.0], [1, 2], algos=["clca", "neely"], slots=1500, parallel=4)
    assert len(serial) == 8
    assert [r.csv_row() for r in serial] == [r.csv_row() for r in threaded]
    assert [r.v for r in serial[:4]] == [150.0] * 4 and serial[0].algo == "clca"

    wcd = clca_py.worst_case_delay_bound(384.0, 381.0, 3.0, 6.0, 4.5, 9.0)
    by_hand = max((4.0 * 384.0 + 3.0 * 381.0) / 18.0, 2.0 * 381.0 / 7.5)
    assert abs(wcd - by_hand) < 1e-12, (wcd, by_hand)
    assert clca_py.optimal_rho(384.0, 381.0, 4.5, 9.0, 6.0) is None
    expect_value_error(lambda: clca_py.worst_case_delay_bound(1.0, 1.0, 0.0, 6.0, 4.5, 9.0), "rho=0")
    expect_value_error(lambda: clca_py.Model.from_json("{}"), "empty config")
    expect_value_error(lambda: model.simulate(slots=100, algo="bogus"), "bad algo")

    print(f"model: {model!r}")
    print(f"bounds@750: {b!r}")
    print(f"run: {report!r}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
