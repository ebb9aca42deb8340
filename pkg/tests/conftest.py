import numpy as np
import pytest

from gradtree import Dataset, Task


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.passed:
        status = "PASS"
    elif report.skipped:
        status = "SKIP"
    else:
        status = "FAIL"
    print(f"\n[acceptance] {name}: {status}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_regression_dataset(seed, n=120, m=4, noise=0.1, name="synth-reg"):
    """Random linear-ish regression table with a mild nonlinearity."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m)) * rng.uniform(0.5, 3.0, size=m) + rng.uniform(-2, 2, size=m)
    w = rng.normal(size=m)
    y = X @ w + 0.5 * np.abs(X[:, 0]) + noise * rng.normal(size=n)
    names = tuple(f"f{j}" for j in range(m))
    return Dataset(X, y, names, Task.REGRESSION, name=name)


def make_classification_dataset(seed, n=120, m=4, name="synth-clf"):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m)) * rng.uniform(0.5, 3.0, size=m)
    w = rng.normal(size=m)
    logits = X @ w + 0.8 * np.sign(X[:, 0])
    y = (logits + rng.logistic(size=n) > 0).astype(float)
    if y.min() == y.max():  # ensure both classes
        y[0] = 1.0 - y[0]
    names = tuple(f"f{j}" for j in range(m))
    return Dataset(X, y, names, Task.CLASSIFICATION, name=name)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")
    return path
