"""Smoke test for the rwre_py extension module."""

import json
import math

import rwre_py


def main():
    m = rwre_py.Model.two_point(2 / 3, 1 / 3, 0.4, seed=1)
    kappa, boundary = m.kappa_root()
    assert abs(kappa - math.log2(1.5)) < 1e-10 and not boundary
    assert abs(m.kappa_via_rate() - kappa) < 1e-4
    assert m.lambda_(0.0) == 0.0
    assert m.lambda_(0.3) < 0 < m.lambda_(0.9)
    assert math.isinf(m.rate_function(5.0))

    env = m.realize(7)
    t, left = env.hitting_time(20, seed=3)
    assert t == 20 + 2 * sum(left.values())
    z, overflowed = env.simulate_z(50, seed=3)
    assert z[0] == 0 and len(z) == 51 and not overflowed

    rhos = env.rho(0, 30)
    rec, summed = rwre_py.b_direct(rhos, 30, 0.7)
    assert abs(rec - summed) <= 1e-11 * summed
    assert abs(rwre_py.phi_product(rhos, 0.7) * rec - 1) < 1e-10
    assert abs(math.exp(-rwre_py.log_b(rhos, 0.7)) * rec - 1) < 1e-10

    again = rwre_py.Model.from_json(m.to_json())
    assert again.kappa_root() == m.kappa_root()

    config = {
        "experiment": "zsum_exponent",
        "model": json.loads(m.to_json()),
        "sizes": [64, 128, 256],
        "replicas": 20,
        "seed": 5,
    }
    first = rwre_py.run_experiment(json.dumps(config))
    assert first == rwre_py.run_experiment(json.dumps(config))
    result = json.loads(first)
    assert len(result["rows"]) == 60 and result["fit_status"] == "ok"

    try:
        rwre_py.Model.two_point(2 / 3, 1 / 3, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("ballistic model should be rejected")
    print("rwre_py smoke test passed")


if __name__ == "__main__":
    main()
