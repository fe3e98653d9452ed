import pytest

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


class Recorder:
    """Collects one verdict per acceptance criterion for the end-of-run summary."""

    def __call__(self, name: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[name] = ("PASS" if ok else "FAIL", detail)
        return ok

    def skip(self, name: str, detail: str) -> None:
        _ACCEPTANCE[name] = ("SKIP", detail)


@pytest.fixture(scope="session")
def record():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (verdict, detail) in _ACCEPTANCE.items():
        terminalreporter.write_line(f"ACCEPTANCE {verdict} {name}: {detail}")
