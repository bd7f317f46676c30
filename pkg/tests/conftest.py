from __future__ import annotations


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, collected from ``record_property``."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            for key, value in getattr(rep, "user_properties", ()):
                if key == "criterion":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(s.split(":")[0].split()[-1].rstrip("abc")), s)):
            terminalreporter.write_line(line)
