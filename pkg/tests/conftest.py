"""Prints one PASS/FAIL/SKIP line per acceptance criterion at the end of the run."""


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", "") or rep.when not in ("setup", "call"):
                continue
            props = dict(getattr(rep, "user_properties", []))
            name = props.get("criterion", rep.nodeid.split("::")[-1])
            detail = props.get("detail", "")
            if outcome == "skipped" and isinstance(rep.longrepr, tuple):
                detail = rep.longrepr[2]
            elif outcome == "failed":
                detail = (detail + " | " if detail else "") + str(rep.longrepr).strip().splitlines()[-1]
            lines.append((rep.nodeid, f"{outcome.upper()[:4]:4} {name}: {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
