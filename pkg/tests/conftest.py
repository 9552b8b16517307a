import sys
import string

from hypothesis import strategies as st


def small_text(max_words=5, max_len=5, alphabet="abc"):
    word = st.text(alphabet=alphabet, min_size=1, max_size=max_len)
    return st.lists(word, min_size=1, max_size=max_words).map(" ".join)


LETTERS = string.ascii_lowercase


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
