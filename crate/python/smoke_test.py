"""Exercise the extension module end to end; exits nonzero on failure.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml`.
"""

import math
import sys

import mfgz


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b}"


def main():
    a = mfgz.Measure([[0.0], [2.0]])
    b = mfgz.Measure([[1.0], [3.0]], [0.5, 0.5])
    close(mfgz.wasserstein(a, b), 1.0, 1e-12)
    close(mfgz.wasserstein(a, b, p=1, exact=True), 1.0, 1e-12)
    assert len(a) == 2 and a.dim == 1 and a.weights == [0.5, 0.5]

    g = mfgz.Measure.gaussian(0.0, 1.0, 4)
    close(sum(g.weights), 1.0, 1e-12)
    close(g.mean()[0], 0.0, 1e-12)

    try:
        mfgz.Measure([[0.0]], [2.0])
    except mfgz.MfgzError:
        pass
    else:
        raise AssertionError("unnormalized weights accepted")

    assert "example2_dirac" in mfgz.shipped_configs()
    game = mfgz.Game.load("example2_dirac")
    assert game.dim == 1 and game.horizon == 1.0

    nu = game.initial_law()
    lo, _, _ = game.hamiltonian("lower", 0.0, nu, [[1.0]])
    hi, _, _ = game.hamiltonian("upper", 0.0, nu, [[1.0]])
    assert lo <= hi + 1e-12

    lower = game.dpp_value("lower", steps=3, resolution=3, mode="exact")
    upper = game.dpp_value("upper", steps=3, resolution=3, mode="exact")
    assert lower <= upper + 1e-9

    surface = game.solve_hji("lower", points=101)
    assert len(surface["values"]) == 101
    assert math.isfinite(surface["value_at_initial"])

    print(f"lower={lower:.6f} upper={upper:.6f} hji={surface['value_at_initial']:.6f}")
    print("smoke test ok")


if __name__ == "__main__":
    sys.exit(main())
