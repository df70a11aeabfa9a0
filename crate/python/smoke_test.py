"""Smoke test for the pmobo_py extension module.

Build and install with `maturin develop -m crates/python/Cargo.toml`, or copy
the compiled library next to this script as `pmobo_py.so` (pass its directory
as the first argument).
"""

import json
import sys
import tempfile

if len(sys.argv) > 1:
    sys.path.insert(0, sys.argv[1])

import pmobo_py as pm


def main():
    b = pm.Benchmark("dtlz2")
    f = b.evaluate([0.5] * b.d, [1.0])
    assert abs(f[0] - 0.5 ** 0.5) < 1e-12, f
    assert abs(pm.hypervolume([[0.2, 0.8], [0.5, 0.5], [0.8, 0.2]], [1.0, 1.0]) - 0.37) < 1e-12

    xs = [[i / 7.0] for i in range(8)]
    gp = pm.GaussianProcess(xs, [x[0] ** 2 for x in xs], lengthscale=0.3, noise=1e-6)
    mean, var = gp.predict([0.5])
    assert abs(mean - 0.25) < 0.01 and var >= 0.0

    cfg = json.dumps({
        "num_tasks": 2,
        "n_init": 5,
        "rounds": 4,
        "acquisition": {"pool_size": 64, "local_refinement_steps": 3},
        "generator": {"vae": {"epochs": 30}},
    })
    run = pm.run("dtlz2", seed=1, method="pmt-mobo-vae", config=cfg)
    hv = run.final_hypervolumes()
    assert run.evaluations == 2 * (5 + 4)
    assert all(a <= b for h in run.hv_history for a, b in zip(h, h[1:]))
    inv_mean, inv_std, _ = run.evaluate_inverse(w=4, s=10)

    with tempfile.TemporaryDirectory() as d:
        run.write(d)
        code, out, err = pm.cli(["eval-inverse", d, "--w", "2", "--s", "5"])
        assert code == 0, err

    report = pm.verify_gain_bound(trials=5)
    assert report["passed"], report

    print(f"final hypervolumes {hv}")
    print(f"inverse model {inv_mean:.4f} ({inv_std:.4f})")
    print(f"{report['comparisons']} information-gain comparisons, {report['violations']} violations")
    print("ok")


if __name__ == "__main__":
    main()
