"""Side-by-side values of the three relaxations for the bundled games.

Run with ``python3 demos/hierarchy_comparison.py [max_level]``.
"""
import sys

from seqnpa.report import build_report
from seqnpa.scenario import builtin_game


def main(max_level: int = 2):
    for name in ("chsh", "i3322"):
        rep = build_report(builtin_game(name), max_level)
        print(rep.to_text())
        bad = rep.sandwich_violations()
        print("order relations:", "all hold" if not bad else ", ".join(bad))
        print()


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2)
