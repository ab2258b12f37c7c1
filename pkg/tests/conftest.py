import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, entries = results[n]
        ok = all(e[0] for e in entries)
        detail = "; ".join(e[1] for e in entries)
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} | {detail}")
