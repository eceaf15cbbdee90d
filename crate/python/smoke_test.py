#!/usr/bin/env python3
"""Smoke test for the linearize4_py extension module.

Builds the cdylib if needed, copies it next to this script under the
importable name, then exercises the bound operations end to end.
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def ensure_module():
    so = HERE / "linearize4_py.so"
    candidates = [
        ROOT / "target" / "release" / "liblinearize4_py.so",
        ROOT / "target" / "debug" / "liblinearize4_py.so",
    ]
    built = [c for c in candidates if c.exists()]
    if not built:
        print("building linearize4-py ...")
        subprocess.run(
            ["cargo", "build", "-p", "linearize4-py"], cwd=ROOT, check=True
        )
        built = [c for c in candidates if c.exists()]
    src = max(built, key=lambda p: p.stat().st_mtime)
    if not so.exists() or so.stat().st_mtime < src.stat().st_mtime:
        shutil.copy2(src, so)
    sys.path.insert(0, str(HERE))


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol * (1 + abs(b)), f"{a} != {b} (tol {tol})"


def main():
    ensure_module()
    import linearize4_py as l4

    # expression layer
    assert l4.parse("x^2*y^2") == "x^2 * y^2"
    assert l4.diff("4/y", "y") == "-4 / y^2"
    approx(l4.eval_expr("4/y + x^2", 3.0, 2.0), 11.0)
    table = l4.jet("x^2*y", 1.0, 2.0, order=2)
    approx(table[1][0], 4.0)  # d/dx x^2 y at (1,2)

    # fixtures through the pipeline
    rep = json.loads(l4.test(l4.fixture("example1")))
    assert rep["verdict"] == "linearizable"
    assert len(rep["conditions"]) == 10

    rep = json.loads(l4.test(l4.fixture("example3")))
    assert rep["verdict"] == "not_linearizable"
    failing = [c["id"] for c in rep["conditions"] if not c["pass"]]
    assert failing == ["T1.C5", "T1.C8", "T1.C10"], failing

    # forward oracle feeding the tester
    req = l4.oracle("x", "x^2*y^2", beta="1")
    rep = json.loads(l4.test(req))
    assert rep["verdict"] == "linearizable"

    # construction of example 1
    rep = json.loads(l4.construct(l4.fixture("example1")))
    assert rep["transform"]["phi"] == "x"
    approx(rep["alphaBeta"]["alphaMid"], 0.0, 1e-8)
    approx(rep["alphaBeta"]["betaMid"], 1.0, 1e-8)
    assert rep["roundtripResidual"] < 1e-6

    # round-trip verification of a hand-supplied map
    rep = json.loads(
        l4.verify(l4.fixture("example1"), "x", "x^2*y^2", alpha="0", beta="1")
    )
    assert rep["roundtripResidual"] < 1e-6

    # candidate II fixture end to end
    rep = json.loads(l4.construct(l4.fixture("example4")))
    approx(rep["alphaBeta"]["alphaMid"], 1.0, 1e-8)
    approx(rep["alphaBeta"]["betaMid"], 1.0, 1e-8)
    assert rep["roundtripResidual"] < 1e-5

    print("smoke test passed")


if __name__ == "__main__":
    main()
