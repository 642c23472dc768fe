from pathlib import Path

import pytest

from termweave.ir import parse_program

CORPUS = Path(__file__).resolve().parents[1] / "src" / "termweave" / "corpus"
CORPUS_NAMES = sorted(p.stem for p in CORPUS.glob("*.tw"))


def load(name: str):
    return parse_program((CORPUS / f"{name}.tw").read_text())


@pytest.fixture(params=CORPUS_NAMES)
def corpus_program(request):
    return request.param, load(request.param)


ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
