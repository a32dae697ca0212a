import pytest

from wozloc import synthetic

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").split(".")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ontology():
    return synthetic.source_ontology()


@pytest.fixture(scope="session")
def corpus():
    return synthetic.generate_corpus()
