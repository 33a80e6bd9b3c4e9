"""Smoke test for the pyionsplit extension.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
then run `python python/smoke_test.py`.
"""

import json
import math
import sys
import tempfile

import pyionsplit as ps


def main():
    trap = ps.Trap("Be9+", 2.0e6)
    d0_um = trap.d0_m * 1e6
    print(f"trap: d0 = {d0_um:.4f} um, C = {trap.coulomb_internal:.4e}")
    assert abs(d0_um - 5.80) < 0.01
    assert math.isclose(trap.from_si(trap.to_si(3.0, "time"), "time"), 3.0)

    design = ps.shoot(5.2e-6)
    print(f"shoot: {design!r} converged={design.converged} excess={design.excess_energy:.3e}")
    assert design.converged
    assert design.order == 11 and len(design.free_params) == 2

    wf = design.waveform(1001)
    assert len(wf["t"]) == 1001
    diag = design.diagnostics()
    print(f"beta_max = {diag['beta_max_si']:.4e} N/m^3")

    replay = ps.Design.from_json(design.to_json())
    assert replay.free_params == design.free_params

    ex = design.excitation(engine="classical", overrides={"simulation.classical_steps": 50000})
    print(f"classical excitation: {ex['classical']['excitation_quanta']:.4e} quanta")
    assert ex["classical"]["excitation_quanta"] < 0.1

    try:
        ps.Trap("Xx+", 1e6)
    except ValueError as e:
        print(f"rejected bad species: {e}")
    else:
        raise AssertionError("bad species accepted")

    with tempfile.TemporaryDirectory() as out:
        r = ps.run_experiment("design", overrides={"output.dir": out, "protocol.t_f_s": 6e-6})
        print("run_experiment:", json.dumps(r["lines"]))
        assert r["converged"] and len(r["outputs"]) == 2

    cfg = ps.resolve_config("tcrit-table", overrides={"trap.omega0_hz": 3e6})
    assert cfg["trap"]["omega0_hz"] == 3e6
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
