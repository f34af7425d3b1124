"""Plain-text table rendering and number formatting for reports.

Reports always carry recomputable numbers: percentages are emitted alongside
their raw counts, full precision lives in the CSV twins of each table.
"""

from __future__ import annotations


def fmt_count(n: int) -> str:
    return f"{n:,}"


def fmt_pct(fraction: float) -> str:
    return f"{fraction * 100:.2f}%"


def render_table(headers: list[str], rows: list[list[str]],
                 footnotes: list[str] | None = None) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i])
                               for i, cell in enumerate(row)).rstrip())
    for note in footnotes or []:
        lines.append(note)
    return "\n".join(lines) + "\n"


def to_csv_rows(headers: list[str], rows: list[list[str]]) -> str:
    import csv
    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()
