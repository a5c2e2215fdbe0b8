import numpy as np
import pytest

from anchorfp import Dataset, RunMeta


def make_runs(n_models=4, runs_per_model=2, n_steps=6, p=3, q=1, seed=0, kinds=("forced", "control")):
    """Small raw dataset: every model gets ``runs_per_model`` runs cycling through ``kinds``."""
    rng = np.random.default_rng(seed)
    parts = []
    for m in range(n_models):
        for r in range(runs_per_model):
            kind = kinds[r % len(kinds)]
            parts.append((RunMeta(f"m{m}", f"r{r}", kind, n_steps), rng.normal(size=(n_steps, p)),
                          rng.normal(size=n_steps), rng.normal(size=(n_steps, q))))
    return Dataset.from_runs(parts, "y", [f"a{j}" for j in range(q)])


def centered_problem(rng, n=40, p=10, q=2):
    X = rng.normal(size=(n, p))
    A = rng.normal(size=(n, q))
    Y = X @ rng.normal(size=p) + A @ rng.normal(size=q) + rng.normal(size=n)
    return X - X.mean(0), Y - Y.mean(), A - A.mean(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report ------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Store (and print) one pass/fail line; the terminal summary repeats them all."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
