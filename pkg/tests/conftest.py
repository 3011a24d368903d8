import pytest

from miwaf.synthgen import SynthSpec, generate, split_by_label


@pytest.fixture(scope="session")
def small_corpora():
    """(normals, attacks, held-out test attacks) from the synthetic generator."""
    normals, attacks = split_by_label(generate(SynthSpec(400, 60, seed=11)))
    _, test_attacks = split_by_label(generate(SynthSpec(0, 40, seed=12)))
    return normals, attacks, test_attacks


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""

    def _report(number, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
