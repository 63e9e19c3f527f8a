"""Smoke test for the gauss_lasso extension module.

Build first:
    cargo build --release -p gauss-lasso-py --features extension-module
then run:
    python3 python/smoke_test.py [path/to/libgauss_lasso.so]
"""

import importlib.util
import math
import os
import random
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module(path=None):
    if path is None:
        path = os.path.join(ROOT, "target", "release", "libgauss_lasso.so")
    if not os.path.exists(path):
        sys.exit(f"extension not found at {path}; build it first")
    # the interpreter wants the file named after the module
    tmp = tempfile.mkdtemp()
    dest = os.path.join(tmp, "gauss_lasso.so")
    shutil.copy(path, dest)
    spec = importlib.util.spec_from_file_location("gauss_lasso", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def close(a, b, tol=1e-8):
    return abs(a - b) <= tol


def main():
    gl = load_module(sys.argv[1] if len(sys.argv) > 1 else None)
    print("gauss_lasso", gl.__version__)

    # confounder design at a = 0.6 pulls the confounder into the extended support
    cov = gl.Covariance.confounder(4, 2, 0.6)
    theta0 = [1.0, 1.0, 0.0, 0.0]
    assert close(cov.gic_margin(theta0), 1.0)
    assert close(cov.irrepresentability_margin(theta0), -0.2)
    ext = cov.extended_support(theta0)
    assert ext["T_star"] == [1, 2, 4], ext
    assert close(ext["xi0"], 0.7)
    oracle = gl.confounder_oracle(4, 2, 0.6, theta0)
    assert oracle["t_star"] == [0, 1, 3]

    # identity covariance: zero-noise solution is soft thresholding
    ident = gl.Covariance.identity(3)
    z = ident.fit_zero_noise([2.0, -0.5, 1.0], 0.75)
    assert all(close(a, b) for a, b in zip(z, [1.25, 0.0, 0.25]))

    report = cov.theorem_report(theta0, sigma=0.1, n=10_000)
    assert report["passes"]["all"] is True

    rng = random.Random(0)
    n, p = 80, 10
    x = [[rng.gauss(0, 1) for _ in range(p)] for _ in range(n)]
    beta = [2.0, -1.5] + [0.0] * (p - 2)
    y = [sum(r[j] * beta[j] for j in range(p)) + 0.1 * rng.gauss(0, 1) for r in x]
    theta = gl.fit_lasso(x, y, 0.1)
    assert gl.kkt_violation(x, y, 0.1, theta) <= 1e-8
    sel = gl.select(x, y, 0.1, 2)
    assert sel["selected"] == [0, 1], sel
    assert close(sel["theta_gl"][0], 2.0, 0.1)
    path = gl.lasso_path(x, y, [1.0, 0.5, 0.1])
    assert len(path) == 3 and all(len(c) == p for c in path)
    assert math.isclose(gl.theorem_lambda(1.0, 0.5, 100, 200), 2 * math.sqrt(4 * math.log(100) / 200))

    try:
        gl.fit_lasso(x, y, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative lambda accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
