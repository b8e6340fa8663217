"""Shared test plumbing: the acceptance suite registers one line per
criterion here and the terminal summary prints them after the run."""

ACCEPTANCE_LINES = []


def record(num, ok, detail):
    line = f"ACCEPTANCE {num:02d}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append((num, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
