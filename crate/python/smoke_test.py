"""Smoke test for the weakkam_py extension.

Build and install with
    pip install --no-build-isolation -e crates/py
then run
    python3 python/smoke_test.py
"""

import json
import math
import tempfile

import weakkam_py as wk


def main():
    names = [name for name, _ in wk.list_scenarios()]
    assert len(names) == 8 and "pendulum" in names, names

    free = wk.Model('{"kind": "mechanical", "dim": 1, "potential": {"kind": "zero"}}')
    sol = wk.solve_cell(free, [1.0], 0.1, [256])
    assert abs(sol.hbar - 0.5) < 1e-8, sol
    assert max(abs(v) for v in sol.u) < 1e-8
    assert sol.trace_mass < 1e-12

    pend = wk.Model.pendulum(1.0)
    h, hp, hx = pend.eval([0.0], [2.0])
    assert abs(h - 3.0) < 1e-14 and abs(hp[0] - 2.0) < 1e-14 and abs(hx[0]) < 1e-12
    sol = wk.solve_cell(pend, [0.0], 0.1, [512])
    n = len(sol.theta)
    assert abs(sum(sol.theta) / n - 1.0) < 1e-12
    assert 0.9 < sol.hbar < 1.0, sol
    res = sol.mather_residuals()
    assert res["res_c_po"] < 1e-8, res
    assert abs(sol.trace_mass - 0.5 * 0.1**2 * 4 * math.pi**2) < 0.05

    try:
        wk.solve_cell(pend, [0.0], 0.0, [64])
    except ValueError:
        pass
    else:
        raise AssertionError("eps = 0 accepted")

    with tempfile.TemporaryDirectory() as out:
        code, manifest = wk.run_scenario('scenario = "free"\n', out)
        manifest = json.loads(manifest)
        assert code == 0 and manifest["summary"]["failed_checks"] == 0, manifest["summary"]
        consistent, recheck = wk.check_manifest(out + "/manifest.json")
        assert consistent and recheck == 0

    print("weakkam_py smoke test passed:", sol)


if __name__ == "__main__":
    main()
