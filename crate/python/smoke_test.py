"""Smoke test for the pykmfg extension module."""

import json
import math
import tempfile

import pykmfg


def main():
    grid = pykmfg.Grid(0.5, 10, 2.0, 32, 5.0, 32)
    assert len(grid) == 32 * 32
    assert abs(grid.h_x - 0.125) < 1e-15

    density = pykmfg.kolmogorov_density(grid, 0.5, sigma_x=0.2, sigma_v=0.2)
    mass = sum(density) * grid.cell_volume
    assert abs(mass - 1.0) < 1e-3, mass

    h = pykmfg.Hamiltonian("quadratic", epsilon=0.5)
    assert h.eval([0.0]) == 0.0
    assert h.eval([2.0]) < 4.0
    assert pykmfg.Hamiltonian("quadratic").structure_violations() == []
    print("regularized |p|^2 violations:", h.structure_violations())

    assert pykmfg.level_sequence(3) == [3.0, 2.5, 2.25]
    q, p = pykmfg.gain_exponents(1)
    assert q > 1.0 and p > 1.0

    with tempfile.TemporaryDirectory() as out:
        manifest = {"grid": {"n_x": 16, "n_v": 16, "n_t": 20}}
        outcome = json.loads(pykmfg.solve_manifest(json.dumps(manifest), out))
        assert outcome["exit_code"] == 0, outcome
        levels, values = pykmfg.read_checkpoint(f"{out}/m_final.kmfg", 20)
        assert levels == 21 and len(values) == 16 * 16
        assert min(values) >= 0.0
        alpha, u = pykmfg.de_giorgi_levels(f"{out}/m_final.kmfg", 1.0, 4, 1.0)
        assert alpha[0] == 4.0 and all(math.isfinite(x) for x in u)

    try:
        pykmfg.solve_manifest('{"grid": {"n_x": 3}}')
    except ValueError as e:
        assert "/grid/n_x" in str(e)
    else:
        raise AssertionError("bad manifest accepted")

    print("pykmfg smoke test passed")


if __name__ == "__main__":
    main()
