from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


def data_file(name: str) -> Path:
    path = DATA_DIR / name
    if not path.exists():
        pytest.skip(f"{name} missing; run scripts/fetch_data.py")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def gapped_matrix(rng, n, d, k, gap=1.0):
    """Random n x d matrix whose covariance spectrum has a clear gap after k."""
    U, _ = np.linalg.qr(rng.standard_normal((n, d)))
    W, _ = np.linalg.qr(rng.standard_normal((d, d)))
    s = np.concatenate((np.linspace(4.0, 3.0, k) + gap, np.linspace(2.0, 0.5, d - k)))
    X = U * s @ W.T
    return X - X.mean(axis=0)


CRITERIA = {}


class criterion:
    """Record one acceptance criterion as PASS or FAIL without changing the assertion."""

    def __init__(self, number, title):
        self.key, self.title, self.details = number, title, []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc_type is not None and exc_type is not AssertionError:
            detail += f"; error: {exc_type.__name__}: {exc}"
        CRITERIA[self.key] = f"criterion {self.key}: {status}  {self.title}  [{detail}]"
        return False


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(CRITERIA, key=str):
            terminalreporter.write_line(CRITERIA[key])
