"""Smoke test for the mesochain extension module.

Build and install first:  pip install --no-build-isolation ./crates/py
"""
import json

import mesochain


def main():
    chain = mesochain.Chain(400)
    rest = chain.rest()
    assert len(rest) == 400
    assert max(abs(f) for f in chain.forces(rest)) < 1e-9

    s0 = chain.ramp(0.3)
    e0 = chain.energy(s0)
    s1 = chain.advance(s0, 0.01)
    assert abs(s1.t - 0.01) < 1e-12
    assert abs(chain.energy(s1) - e0) <= 1e-6 * abs(e0)

    w = mesochain.Window(0.1)
    rho = mesochain.average_density(chain, s1, w)
    assert w.b == len(rho) == 10
    mass = sum(rho) * 0.1
    assert abs(mass - 1.0) < 1e-12, mass
    mom = mesochain.average_momentum(chain, s0, w)
    assert abs(mom[0] - 0.3) < 1e-12

    vals = [1.1] * 33
    rec = mesochain.landweber(vals, w, 3)
    assert abs(rec[16] - 1.1) < 1e-12

    t = mesochain.stress_int_zero([1.1] * 10, w, mesochain.Chain(4000), grid=1024)
    assert abs(t[5] + 21.0) < 1e-9, t[5]
    assert abs(mesochain.local_eos(1.1, chain) + 21.0) < 1e-9

    report = json.loads(mesochain.run("run-meso", 'n = 2000\nb = 10\nsnapshots = [0.0, 0.005]\nout = "/tmp/mesochain_smoke"\n'))
    assert report, report
    try:
        mesochain.Window(0.1, kind="triangle")
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")
    print("mesochain smoke test ok:", chain, f"rho[0]={rho[0]:.4f}", f"T_int0={t[5]:.3f}")


if __name__ == "__main__":
    main()
