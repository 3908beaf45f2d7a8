"""Smoke test for the gesfem Python module.

Build and install first:  pip install ./crates/py
"""

import json
import math
import tempfile
from pathlib import Path

import gesfem


def main():
    r, u, v, h = gesfem.radial_eval(2.0, 1.0)
    assert abs(r - 13 ** -0.5) < 1e-12 and abs(u - 13.0) < 1e-9

    delta, gamma = gesfem.bdf_coefficients(2)
    assert delta == [1.5, -2.0, 0.5] and gamma == [2.0, -1.0]
    assert gesfem.eoc([4.0, 1.0], [2.0, 1.0]) == [2.0]

    cfg = gesfem.Config.radial(2.0, 2, 0.01, 0.1)
    assert gesfem.Config.from_json(cfg.to_json()).to_json() == cfg.to_json()

    sim = gesfem.Simulation(cfg)
    assert sim.advance(3) == 3
    row = sim.monitor()
    assert set(row) == set(gesfem.MONITOR_HEADER.split(","))
    assert row["u_min"] > 0
    sim.run_to_end()
    assert sim.finished and math.isclose(sim.t, 0.1)
    assert len(sim.x) == len(sim.u) == 642  # 162 vertices + 480 edge nodes
    assert max(sim.errors().values()) < 0.1

    summary = gesfem.run(cfg)
    assert abs(summary["mean_radius"] - sim.mean_radius()) < 1e-14
    assert len(summary["rows"]) == 11

    with tempfile.TemporaryDirectory() as d:
        nodes, tris = gesfem.meshgen(json.dumps({"kind": "sphere", "radius": 1.0}), Path(d) / "s.off", level=2)
        assert (nodes, tris) == (162, 320)

    try:
        gesfem.Config.from_json('{"tau": 1}')
    except ValueError:
        pass
    else:
        raise AssertionError("bad config accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
