"""Smoke test for the eigopt extension module."""
import json
import math
import tempfile

import eigopt


def main():
    assert eigopt.legendre_value(2, 0.5) == -0.125
    assert eigopt.legendre_derivative(1, -1.0) == 1.0

    obs = eigopt.diffusion_observe((0.2, 0.3), (0.25, 0.3))
    assert len(obs) == 5 and all(v > 0 for v in obs)

    est = eigopt.Estimator.linear_gaussian(0.5, 0.0, 1.0, 200, 200)
    v = est.value([1.0], 7)
    assert abs(v - 0.5 * math.log(5.0)) < 0.2, v
    value, grad, evals = est.value_and_gradient([0.5], 7)
    assert grad[0] > 0 and evals > 0

    s = eigopt.Surrogate.build(degree=2, level=1)
    assert s.n_terms == 15 and s.n_outputs == 5
    again = eigopt.Surrogate.from_json(s.to_json())
    assert again.evaluate([0.3, 0.4], [0.1, 0.9]) == s.evaluate([0.3, 0.4], [0.1, 0.9])
    assert len(s.gradient_wrt_design([0.3, 0.4], [0.1, 0.9])) == 10

    bench = eigopt.Estimator(s, 20, 10)
    runs = eigopt.optimize_rm(bench, runs=3, seed=1, max_iters=10)
    assert len(runs) == 3 and all(isinstance(r, dict) for r in runs)
    saa = eigopt.optimize_saa(bench, runs=3, seed=1)
    assert len(saa["replicates"]) == 3 and len(saa["gaps"]) == 3

    config = {
        "algorithm": "saa",
        "N_list": [5],
        "M_list": [3],
        "T": 2,
        "seed": 0,
        "requality_N": 50,
        "requality_M": 20,
        "model": {"kind": "linear_gaussian", "alpha": 0.5, "lower": -1.0, "upper": 1.0},
    }
    with tempfile.TemporaryDirectory() as out:
        files = eigopt.run_experiment(json.dumps(config), out)
        assert len(files) == 6
    print("ok")


if __name__ == "__main__":
    main()
