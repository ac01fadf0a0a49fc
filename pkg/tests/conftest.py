from pathlib import Path

import numpy as np
import pytest

from bayeskan.data import Dataset

DATA_DIR = Path(__file__).resolve().parents[1] / "data"
PIMA_PATH = DATA_DIR / "pima-indians-diabetes.csv"
HEART_PATH = DATA_DIR / "processed.cleveland.data"


def _require(path: Path) -> Path:
    if not path.is_file():
        pytest.fail(f"{path} is missing; run scripts/fetch_datasets.py first")
    return path


@pytest.fixture(scope="session")
def pima_path() -> Path:
    return _require(PIMA_PATH)


@pytest.fixture(scope="session")
def heart_path() -> Path:
    return _require(HEART_PATH)


def separable_2d(n=400, margin=1.0, seed=0) -> Dataset:
    """Two Gaussian-ish blobs split by the line x0 + x1 = 0 with a gap of ``margin``."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2.0, 2.0, size=(4 * n, 2))
    d = (X[:, 0] + X[:, 1]) / np.sqrt(2.0)
    keep = np.abs(d) >= margin / 2.0
    X, d = X[keep][:n], d[keep][:n]
    return Dataset(X, (d > 0).astype(int), ("x0", "x1"))


# acceptance results, filled in by test_acceptance.py and echoed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}: {detail}")
