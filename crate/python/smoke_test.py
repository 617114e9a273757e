"""Smoke test for the Python bindings.

Build and install first:

    pip install --no-build-isolation ./crates/py
"""

import json
import tempfile
from pathlib import Path

import hzd3d_py as hz


def main():
    gait = hz.Gait.bundled("torque-optimal")
    assert len(gait.qf) == 8
    assert abs(gait.params["m3"] - 5.5) < 1e-12

    same = hz.Gait.from_json(gait.to_json())
    assert json.loads(same.to_json()) == json.loads(gait.to_json())

    checks = hz.check(gait)
    assert all(c["pass"] for c in checks), checks

    report = hz.analyze(gait)
    assert not report["stable"] and report["spectral_radius"] > 1.0
    print(f"open loop spectral radius {report['spectral_radius']:.4f}")

    stabilized, report = hz.dlqr(gait, r=2.0)
    assert stabilized.has_event_gain and report["stable"]
    print(f"closed loop spectral radius {report['closed_loop_spectral_radius']:.4f}")

    with tempfile.TemporaryDirectory() as tmp:
        walk = hz.simulate(stabilized, controller="hzd+dlqr", steps=10,
                           perturb_pos=-1.0, perturb_vel=-5.0, out=tmp)
        assert "failure" not in walk and len(walk["steps"]) == 10
        assert (Path(tmp) / "positions.csv").exists()

    walk = hz.simulate(gait, controller="hzd", steps=10, perturb_pos=-1.0, perturb_vel=-5.0)
    assert "failure" in walk

    try:
        hz.simulate(gait, controller="nonsense")
    except ValueError:
        pass
    else:
        raise AssertionError("bad controller accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
