import verdicts


def pytest_terminal_summary(terminalreporter):
    if verdicts.RESULTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in verdicts.RESULTS:
            terminalreporter.write_line(line)
