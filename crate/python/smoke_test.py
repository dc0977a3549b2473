"""Smoke test for the fedmoo Python module.

Build and run:
    cargo build -p fedmoo-py --release --features extension-module
    cp target/release/libfedmoo_py.so python/fedmoo_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fedmoo_py as fm


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def test_mgda():
    # Two orthogonal unit gradients: the min-norm point is the midpoint.
    w, norm = fm.mgda([[1.0, 0.0], [0.0, 1.0]])
    assert close(w[0], 0.5) and close(w[1], 0.5), w
    assert close(norm, math.sqrt(0.5)), norm
    w, _ = fm.mgda_from_gram([[1.0, 0.0], [0.0, 4.0]])
    assert close(w[0], 0.8) and close(w[1], 0.2), w


def test_weights():
    p = fm.project_simplex([0.7, 0.7, -1.0])
    assert close(sum(p), 1.0) and close(p[0], 0.5), p
    w = fm.get_weights([0.5, 0.5], [[1.0, 0.0], [0.0, 4.0]], 0.1, 200)
    assert close(w[0], 0.8, 1e-6), w
    sol = fm.preference_weights([2.0, 1.0], [1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
    assert close(sum(sol["weights"]), 1.0)
    assert sol["mu"] > 0.0 and sol["balancing"]


def test_compress():
    h = [[float(i + j) for j in range(2)] for i in range(8)]
    rec, cost = fm.compress(h, "identity", 16)
    assert rec == h and cost == 16
    rec, cost = fm.compress(h, "top-k", 4)
    assert cost == 4 and sum(1 for row in rec for v in row if v != 0.0) == 2
    assert fm.nrmse(h, h) == 0.0
    assert close(fm.delta_m([2.0, 2.0], [1.0, 1.0], [False, False]), 1.0)


def test_problem_and_experiment():
    spec = {"family": "quadratic", "dim": 16, "tasks": 2, "clients": 8,
            "center_scale": 0.5, "sigma_g": 0.2}
    p = fm.Problem(spec, seed=1, noise_std=0.1)
    assert (p.dim, p.num_tasks, p.num_clients) == (16, 2, 8)
    x = p.initial_point()
    assert len(p.global_losses(x)) == 2
    j = p.global_jacobian(x)
    assert len(j) == 16 and len(j[0]) == 2
    assert p.stationarity(x) <= p.stationarity(x, [1.0, 0.0]) + 1e-12

    exp = fm.Experiment({
        "seed": 2,
        "repeats": 2,
        "problem": spec,
        "oracle": {"noise_std": 0.1},
        "run": {"engine": "fedcmoo", "rounds": 30, "clients_per_round": 4,
                "local_steps": 3, "lr_local": 0.05},
    })
    exp.validate()
    runs = exp.run()
    first = p.stationarity(p.initial_point())
    assert [r["seed"] for r in runs] == [2, 3]
    recs = runs[0]["records"]
    assert len(recs) == 30
    assert recs[-1]["stationarity"] < first
    assert runs[0]["upload_floats"] == 30 * 4 * 2 * 16
    again = fm.Experiment(exp.to_json()).run()
    assert again[0]["records"][-1]["losses"] == recs[-1]["losses"]


def test_errors():
    try:
        fm.mgda([[1.0, float("nan")]])
    except ValueError:
        pass
    else:
        raise AssertionError("nan jacobian accepted")
    try:
        fm.compress([[1.0]], "bogus", 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown compressor accepted")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
    print("all python smoke tests passed")
