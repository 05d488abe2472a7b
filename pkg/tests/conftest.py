import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion name -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in sorted(ACCEPTANCE_RESULTS.items()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
