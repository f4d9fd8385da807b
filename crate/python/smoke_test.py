"""Smoke test for the ahtorsion_py extension.

Build and install first:
    pip install --no-build-isolation ./crates/ahtorsion-py
"""

import json
import math

import ahtorsion_py as at


def main():
    assert at.SCHEMA == 1
    assert at.sign_audit() == "paper-convention"

    pts = at.halton(4, 8, 11)
    assert len(pts) == 8 and all(0.0 <= u < 1.0 for p in pts for u in p)
    assert pts == at.halton(4, 8, 11)

    assert math.isclose(at.eval_expr("sin(x1)*cos(x2)", [0.3, 0.2]), math.sin(0.3) * math.cos(0.2), rel_tol=1e-15)

    cfg = {
        "schema": 1,
        "command": "inspect",
        "geometry": {"type": "conformal", "n": 2, "f": "sin(x1)", "periodic": True, "jet_degree": 4},
        "points": {"count": 5, "seed": 11},
        "tol": 1e-6,
    }
    code, text = at.run("inspect", json.dumps(cfg))
    report = json.loads(text)
    assert code == 0, report
    assert report["schema"] == 1
    assert report["class"] == "W4"
    assert report["harmonic"] is True and report["harmonic_map"] is False
    assert at.run("inspect", json.dumps(cfg)) == (code, text)

    code, text = at.run("classify", json.dumps({"schema": 1, "geometry": {"type": "s6"}, "points": {"count": 4, "seed": 2}}))
    assert code == 0 and json.loads(text)["class"] == "W1"

    bad = dict(cfg, tolerance=1e-6)
    try:
        at.run("inspect", json.dumps(bad))
    except at.ConfigError:
        pass
    else:
        raise AssertionError("unknown field accepted")

    outside = dict(cfg, geometry={"type": "s6"}, points={"list": [[0.9, 0.5, 0, 0, 0, 0]]})
    try:
        at.run("inspect", json.dumps(outside))
    except at.GeometryError:
        pass
    else:
        raise AssertionError("point outside the chart accepted")

    energy, grad = at.grid_energy(7, 2, 8, 0.3)
    assert energy > 0 and grad > 0
    assert at.grid_energy(7, 2, 8, 0.0) == (0.0, 0.0)

    code, text = at.run("flow", json.dumps({"schema": 1, "geometry": {"type": "flat", "n": 2}, "flow": {"m": 4}}))
    assert code == 0 and json.loads(text)["iterations"] == 0

    print("smoke test passed")


if __name__ == "__main__":
    main()
