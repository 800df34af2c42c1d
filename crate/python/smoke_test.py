"""Smoke test for the mblab_py extension.

Build first with `cargo build -p mblab-python --release` (or without
--release); the script picks up the shared library from target/ when the
module is not installed.
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys


def load():
    try:
        import mblab_py

        return mblab_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parents[1]
    for profile in ("release", "debug"):
        for name in ("libmblab_py.so", "libmblab_py.dylib", "mblab_py.dll"):
            lib = root / "target" / profile / name
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("mblab_py", str(lib))
                spec = importlib.util.spec_from_loader("mblab_py", loader)
                mod = importlib.util.module_from_spec(spec)
                loader.exec_module(mod)
                return mod
    sys.exit("mblab_py not built; run cargo build -p mblab-python")


def main():
    mb = load()

    pend = mb.Potential("pendulum")
    assert pend.epsilon == 0.0
    assert abs(pend.f(0.5, 0.0) - 1.0) < 1e-15

    p = mb.Problem(pend, points_per_unit=32)
    assert abs(p.c0) < 1e-10
    het = p.heteroclinic()
    exact = 2 * math.sqrt(2) / math.pi
    assert abs(het["c1"] - exact) < 2e-3, het["c1"]
    assert abs(het["c1"] - het["c1_prime"]) < 1e-6
    vals = het["vw"]["values"]
    assert len(vals) == len(het["vw"]["x1"])
    assert abs(p.energy(vals, het["vw"]["a"], het["vw"]["b"]) - het["c1"]) < 1e-12

    q = mb.Problem(mb.Potential("pendulum_modulated", 0.3), points_per_unit=16)
    multi = q.multi()
    assert multi["converged"] and multi["strictly_inactive"]
    assert min(multi["margins"]) > 1e-4 * q.rho_bar
    passed, text = q.verify()
    checks = {c["id"]: c for c in json.loads(text)}
    assert passed, [k for k, c in checks.items() if c["status"] == "fail"]
    assert checks["lemma_6_11"]["status"] == "pass"

    try:
        mb.Potential("quartic")
    except ValueError as e:
        assert "quartic" in str(e)
    else:
        raise AssertionError("unknown family accepted")

    try:
        q.multi(m=[0, 1, 2, 3])
    except ValueError:
        pass
    else:
        raise AssertionError("bad spec accepted")

    print(f"ok: c1={het['c1']:.6f} b={multi['objective']:.6f} checks={len(checks)}")


if __name__ == "__main__":
    main()
